//! Flow records and the native wide-CSV flow format.
//!
//! One row per bidirectional flow. After the fixed base columns come
//! `ps_1..ps_K`, `iat_1..iat_K` and `dir_1..dir_K` (K = 30 when written by this
//! crate); cells past a flow's packet count are left empty.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::{MAX_PACKETS, NUM_CLASSES};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum ServiceLabel {
    Discord = 0,
    FacebookGraph = 1,
    GoogleWWW = 2,
    Instagram = 3,
    Snapchat = 4,
    Spotify = 5,
    YouTube = 6,
}

impl ServiceLabel {
    pub const ALL: [ServiceLabel; NUM_CLASSES] = [
        ServiceLabel::Discord,
        ServiceLabel::FacebookGraph,
        ServiceLabel::GoogleWWW,
        ServiceLabel::Instagram,
        ServiceLabel::Snapchat,
        ServiceLabel::Spotify,
        ServiceLabel::YouTube,
    ];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Option<Self> {
        Self::ALL.get(code).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ServiceLabel::Discord => "Discord",
            ServiceLabel::FacebookGraph => "FacebookGraph",
            ServiceLabel::GoogleWWW => "GoogleWWW",
            ServiceLabel::Instagram => "Instagram",
            ServiceLabel::Snapchat => "Snapchat",
            ServiceLabel::Spotify => "Spotify",
            ServiceLabel::YouTube => "YouTube",
        }
    }

    fn valid_names() -> String {
        Self::ALL
            .iter()
            .map(|l| l.name())
            .collect::<Vec<_>>()
            .join(", ")
    }
}

impl fmt::Display for ServiceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ServiceLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|l| l.name() == s)
            .ok_or_else(|| Error::UnknownLabel {
                label: s.to_string(),
                valid: Self::valid_names(),
            })
    }
}

/// Packet direction; `F` is client to server, `B` server to client.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    ClientToServer,
    ServerToClient,
}

impl Direction {
    pub fn symbol(self) -> &'static str {
        match self {
            Direction::ClientToServer => "F",
            Direction::ServerToClient => "B",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PacketMeta {
    /// Bytes, at least 1.
    pub size: u32,
    /// Milliseconds since the previous packet of the flow (either direction).
    pub inter_arrival: f64,
    pub direction: Direction,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowRecord {
    pub flow_id: u64,
    pub client_id: u16,
    /// Seconds since the experiment epoch.
    pub start_time: f64,
    /// Seconds.
    pub duration: f64,
    pub total_packets_fwd: u64,
    pub total_packets_bwd: u64,
    pub total_bytes_fwd: u64,
    pub total_bytes_bwd: u64,
    pub label: ServiceLabel,
    /// First packets in arrival order, at most [`MAX_PACKETS`].
    pub packets: Vec<PacketMeta>,
}

impl FlowRecord {
    /// Checks the record invariants; `row` is only used for error messages.
    pub fn validate(&self, row: usize) -> Result<()> {
        let bad = |field: &str, message: String| Error::MalformedRow {
            row,
            field: field.to_string(),
            message,
        };
        if self.packets.len() > MAX_PACKETS {
            return Err(Error::TooManyPackets { row });
        }
        if self.packets.is_empty() {
            return Err(bad("ps_1", "flow has no packets".into()));
        }
        if !(self.start_time.is_finite() && self.start_time >= 0.0) {
            return Err(bad("start_time", format!("must be >= 0, got {}", self.start_time)));
        }
        if !(self.duration.is_finite() && self.duration >= 0.0) {
            return Err(bad("duration", format!("must be >= 0, got {}", self.duration)));
        }
        for (i, p) in self.packets.iter().enumerate() {
            if p.size == 0 {
                return Err(bad(&format!("ps_{}", i + 1), "packet size must be >= 1".into()));
            }
            if !(p.inter_arrival.is_finite() && p.inter_arrival >= 0.0) {
                return Err(bad(
                    &format!("iat_{}", i + 1),
                    format!("inter-arrival must be >= 0, got {}", p.inter_arrival),
                ));
            }
        }
        if self.packets[0].inter_arrival != 0.0 {
            return Err(bad("iat_1", "first packet must have inter-arrival 0".into()));
        }
        let fwd = self
            .packets
            .iter()
            .filter(|p| p.direction == Direction::ClientToServer)
            .count() as u64;
        let bwd = self.packets.len() as u64 - fwd;
        if self.total_packets_fwd < fwd {
            return Err(bad(
                "total_packets_fwd",
                format!("{} is below the {fwd} forward packets listed", self.total_packets_fwd),
            ));
        }
        if self.total_packets_bwd < bwd {
            return Err(bad(
                "total_packets_bwd",
                format!("{} is below the {bwd} backward packets listed", self.total_packets_bwd),
            ));
        }
        Ok(())
    }
}

/// Index of a 3-hour round.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RoundIndex(pub u32);

impl RoundIndex {
    /// Half-open bucketing: `[r * len, (r + 1) * len)` belongs to round `r`.
    pub fn of(start_time: f64, round_seconds: f64) -> RoundIndex {
        RoundIndex((start_time / round_seconds).floor() as u32)
    }
}

const BASE_COLUMNS: [&str; 9] = [
    "flow_id",
    "client_id",
    "start_time",
    "duration",
    "total_packets_fwd",
    "total_packets_bwd",
    "total_bytes_fwd",
    "total_bytes_bwd",
    "label",
];

/// Header of the native CSV as written by [`write_flows`].
pub fn native_header() -> Vec<String> {
    let mut cols: Vec<String> = BASE_COLUMNS.iter().map(|s| s.to_string()).collect();
    for prefix in ["ps", "iat", "dir"] {
        cols.extend((1..=MAX_PACKETS).map(|k| format!("{prefix}_{k}")));
    }
    cols
}

/// Number of packet slots K announced by a header, validating column order.
fn packet_slots(header: &csv::StringRecord) -> Result<usize> {
    let n = header.len();
    if n < BASE_COLUMNS.len() + 3 || (n - BASE_COLUMNS.len()) % 3 != 0 {
        return Err(Error::MalformedHeader(format!(
            "expected {} base columns followed by ps/iat/dir triples, found {n} columns",
            BASE_COLUMNS.len()
        )));
    }
    for (i, want) in BASE_COLUMNS.iter().enumerate() {
        if header.get(i) != Some(want) {
            return Err(Error::MalformedHeader(format!(
                "column {} should be `{want}`, found `{}`",
                i + 1,
                header.get(i).unwrap_or("")
            )));
        }
    }
    let k = (n - BASE_COLUMNS.len()) / 3;
    for (block, prefix) in ["ps", "iat", "dir"].iter().enumerate() {
        for j in 0..k {
            let idx = BASE_COLUMNS.len() + block * k + j;
            let want = format!("{prefix}_{}", j + 1);
            if header.get(idx) != Some(want.as_str()) {
                return Err(Error::MalformedHeader(format!(
                    "column {} should be `{want}`, found `{}`",
                    idx + 1,
                    header.get(idx).unwrap_or("")
                )));
            }
        }
    }
    Ok(k)
}

fn parse_field<T: FromStr>(rec: &csv::StringRecord, idx: usize, name: &str, row: usize) -> Result<T> {
    let raw = rec.get(idx).unwrap_or("");
    raw.parse::<T>().map_err(|_| Error::MalformedRow {
        row,
        field: name.to_string(),
        message: format!("cannot parse `{raw}`"),
    })
}

fn parse_record(rec: &csv::StringRecord, k: usize, row: usize) -> Result<FlowRecord> {
    let expected = BASE_COLUMNS.len() + 3 * k;
    if rec.len() != expected {
        return Err(Error::MalformedRow {
            row,
            field: "<row>".into(),
            message: format!("expected {expected} fields, found {}", rec.len()),
        });
    }
    let label: ServiceLabel = rec.get(8).unwrap_or("").parse()?;
    let ps_at = |j: usize| BASE_COLUMNS.len() + j;
    let iat_at = |j: usize| BASE_COLUMNS.len() + k + j;
    let dir_at = |j: usize| BASE_COLUMNS.len() + 2 * k + j;

    let count = (0..k)
        .take_while(|&j| !rec.get(ps_at(j)).unwrap_or("").is_empty())
        .count();
    if count > MAX_PACKETS {
        return Err(Error::TooManyPackets { row });
    }
    for j in count..k {
        for (idx, prefix) in [(ps_at(j), "ps"), (iat_at(j), "iat"), (dir_at(j), "dir")] {
            if !rec.get(idx).unwrap_or("").is_empty() {
                return Err(Error::MalformedRow {
                    row,
                    field: format!("{prefix}_{}", j + 1),
                    message: format!("value present after packet list ended at {count}"),
                });
            }
        }
    }
    let mut packets = Vec::with_capacity(count);
    for j in 0..count {
        let size: u32 = parse_field(rec, ps_at(j), &format!("ps_{}", j + 1), row)?;
        let inter_arrival: f64 = parse_field(rec, iat_at(j), &format!("iat_{}", j + 1), row)?;
        let direction = match rec.get(dir_at(j)).unwrap_or("") {
            "F" => Direction::ClientToServer,
            "B" => Direction::ServerToClient,
            other => {
                return Err(Error::MalformedRow {
                    row,
                    field: format!("dir_{}", j + 1),
                    message: format!("expected F or B, found `{other}`"),
                })
            }
        };
        packets.push(PacketMeta {
            size,
            inter_arrival,
            direction,
        });
    }
    let flow = FlowRecord {
        flow_id: parse_field(rec, 0, "flow_id", row)?,
        client_id: parse_field(rec, 1, "client_id", row)?,
        start_time: parse_field(rec, 2, "start_time", row)?,
        duration: parse_field(rec, 3, "duration", row)?,
        total_packets_fwd: parse_field(rec, 4, "total_packets_fwd", row)?,
        total_packets_bwd: parse_field(rec, 5, "total_packets_bwd", row)?,
        total_bytes_fwd: parse_field(rec, 6, "total_bytes_fwd", row)?,
        total_bytes_bwd: parse_field(rec, 7, "total_bytes_bwd", row)?,
        label,
        packets,
    };
    flow.validate(row)?;
    Ok(flow)
}

/// Reads native CSV from any reader. Row numbers in errors count data rows from 1.
pub fn read_flows<R: Read>(reader: R) -> Result<Vec<FlowRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::MalformedHeader(e.to_string()))?
        .clone();
    let k = packet_slots(&header)?;
    let mut flows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::MalformedRow {
            row,
            field: "<row>".into(),
            message: e.to_string(),
        })?;
        flows.push(parse_record(&rec, k, row)?);
    }
    Ok(flows)
}

pub fn load_flows(path: &Path) -> Result<Vec<FlowRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_flows(std::io::BufReader::new(file))
}

pub fn write_flows_to<W: Write>(writer: W, flows: &[FlowRecord]) -> Result<()> {
    let to_io = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(io) => io,
        other => std::io::Error::other(format!("{other:?}")),
    };
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    w.write_record(native_header())
        .map_err(|e| Error::io("<csv>", to_io(e)))?;
    let mut row: Vec<String> = Vec::with_capacity(BASE_COLUMNS.len() + 3 * MAX_PACKETS);
    for f in flows {
        if f.packets.len() > MAX_PACKETS {
            return Err(Error::TooManyPackets { row: f.flow_id as usize });
        }
        row.clear();
        row.push(f.flow_id.to_string());
        row.push(f.client_id.to_string());
        row.push(f.start_time.to_string());
        row.push(f.duration.to_string());
        row.push(f.total_packets_fwd.to_string());
        row.push(f.total_packets_bwd.to_string());
        row.push(f.total_bytes_fwd.to_string());
        row.push(f.total_bytes_bwd.to_string());
        row.push(f.label.name().to_string());
        let pad = |row: &mut Vec<String>| {
            row.extend(std::iter::repeat_n(String::new(), MAX_PACKETS - f.packets.len()))
        };
        row.extend(f.packets.iter().map(|p| p.size.to_string()));
        pad(&mut row);
        row.extend(f.packets.iter().map(|p| p.inter_arrival.to_string()));
        pad(&mut row);
        row.extend(f.packets.iter().map(|p| p.direction.symbol().to_string()));
        pad(&mut row);
        w.write_record(&row).map_err(|e| Error::io("<csv>", to_io(e)))?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn write_flows(path: &Path, flows: &[FlowRecord]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_flows_to(std::io::BufWriter::new(file), flows).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

/// Flows bucketed by round, then by client, both in ascending order.
pub type RoundPartition<'a> = BTreeMap<RoundIndex, BTreeMap<u16, Vec<&'a FlowRecord>>>;

/// Buckets flows into `(round, client)` cells. Flows past any horizon keep their
/// computed round; callers decide the bound. Input order is kept within a cell.
pub fn partition_by_round(flows: &[FlowRecord], round_seconds: f64) -> RoundPartition<'_> {
    assert!(round_seconds > 0.0, "round length must be positive");
    let mut out: RoundPartition<'_> = BTreeMap::new();
    for f in flows {
        out.entry(RoundIndex::of(f.start_time, round_seconds))
            .or_default()
            .entry(f.client_id)
            .or_default()
            .push(f);
    }
    out
}
