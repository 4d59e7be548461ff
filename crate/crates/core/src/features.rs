//! Flow feature extraction and min-max scaling.
//!
//! The full schema (243 columns for a 30-packet window) lists, in order: the
//! bidirectional packet sizes and inter-arrival times, direction flags, the
//! per-direction size and inter-arrival sequences, per-direction statistics,
//! whole-flow statistics, and base flow fields. `SRC` is the client side and
//! `DST` the server side. Directional inter-arrival entries carry the packet's
//! own inter-arrival time (gap to the previous packet in either direction).

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::flowdata::{Direction, FlowRecord, RoundIndex, ServiceLabel};
use crate::scalar::Scalar;
use crate::MAX_PACKETS;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Quantity {
    Size,
    Iat,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stat {
    Mean,
    Std,
    Min,
    Max,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BaseField {
    Duration,
    TotalPacketsFwd,
    TotalPacketsBwd,
    TotalBytesFwd,
    TotalBytesBwd,
    PpiPacketCount,
    SrcPacketCount,
    DstPacketCount,
    BytesRatio,
}

/// Where a column's value comes from. Packet indices are 0-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureSource {
    Packet(Quantity, usize),
    DirectionFlag(usize),
    DirPacket(Direction, Quantity, usize),
    DirStat(Direction, Quantity, Stat),
    FlowStat(Quantity, Stat),
    Base(BaseField),
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureDef {
    pub name: String,
    pub source: FeatureSource,
}

/// Named preset schemas.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureProfile {
    /// Every column, 243 features.
    Full,
    /// 64 features: first 10 per-direction sizes and gaps plus all statistics.
    Reduced,
}

impl FromStr for FeatureProfile {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(FeatureProfile::Full),
            "reduced" => Ok(FeatureProfile::Reduced),
            other => Err(Error::Config(format!(
                "unknown feature profile `{other}`; valid: full, reduced"
            ))),
        }
    }
}

impl fmt::Display for FeatureProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureProfile::Full => "full",
            FeatureProfile::Reduced => "reduced",
        })
    }
}

const STATS: [(Stat, &str); 4] = [
    (Stat::Mean, "MEAN"),
    (Stat::Std, "STD"),
    (Stat::Min, "MIN"),
    (Stat::Max, "MAX"),
];
const QUANTITIES: [(Quantity, &str); 2] = [(Quantity::Size, "PS"), (Quantity::Iat, "IAT")];
const DIRECTIONS: [(Direction, &str); 2] = [
    (Direction::ClientToServer, "SRC"),
    (Direction::ServerToClient, "DST"),
];
const BASE_FIELDS: [(BaseField, &str); 9] = [
    (BaseField::Duration, "DURATION"),
    (BaseField::TotalPacketsFwd, "TOTAL_PACKETS_FWD"),
    (BaseField::TotalPacketsBwd, "TOTAL_PACKETS_BWD"),
    (BaseField::TotalBytesFwd, "TOTAL_BYTES_FWD"),
    (BaseField::TotalBytesBwd, "TOTAL_BYTES_BWD"),
    (BaseField::PpiPacketCount, "PACKET_COUNT_IN_PPI"),
    (BaseField::SrcPacketCount, "SRC_PACKET_COUNT"),
    (BaseField::DstPacketCount, "DST_PACKET_COUNT"),
    (BaseField::BytesRatio, "BYTES_RATIO"),
];

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSchema {
    defs: Vec<FeatureDef>,
}

impl FeatureSchema {
    pub fn new(defs: Vec<FeatureDef>) -> Result<Self> {
        let mut names: Vec<&str> = defs.iter().map(|d| d.name.as_str()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Config(format!("duplicate feature name `{}`", w[0])));
        }
        if defs.is_empty() {
            return Err(Error::Config("feature schema is empty".into()));
        }
        Ok(FeatureSchema { defs })
    }

    /// Complete schema over a `max_packets` window (243 columns at 30).
    pub fn build(max_packets: usize) -> Self {
        assert!((1..=MAX_PACKETS).contains(&max_packets));
        let mut defs = Vec::new();
        let mut push = |name: String, source| defs.push(FeatureDef { name, source });
        for (q, qn) in QUANTITIES {
            for k in 0..max_packets {
                push(format!("{qn}_{}", k + 1), FeatureSource::Packet(q, k));
            }
        }
        for k in 0..max_packets {
            push(format!("DIR_{}", k + 1), FeatureSource::DirectionFlag(k));
        }
        for (q, qn) in QUANTITIES {
            for (d, dn) in DIRECTIONS {
                for k in 0..max_packets {
                    push(format!("{dn}_{qn}_{}", k + 1), FeatureSource::DirPacket(d, q, k));
                }
            }
        }
        Self::push_stats(&mut push);
        for (b, bn) in BASE_FIELDS {
            push(bn.to_string(), FeatureSource::Base(b));
        }
        FeatureSchema { defs }
    }

    /// 64-column subset: per-direction sizes and gaps for the first 10 packets
    /// of each direction, then per-direction and whole-flow statistics.
    pub fn reduced() -> Self {
        let mut defs = Vec::new();
        let mut push = |name: String, source| defs.push(FeatureDef { name, source });
        for (q, qn) in QUANTITIES {
            for (d, dn) in DIRECTIONS {
                for k in 0..10 {
                    push(format!("{dn}_{qn}_{}", k + 1), FeatureSource::DirPacket(d, q, k));
                }
            }
        }
        Self::push_stats(&mut push);
        FeatureSchema { defs }
    }

    fn push_stats(push: &mut impl FnMut(String, FeatureSource)) {
        for (d, dn) in DIRECTIONS {
            for (q, qn) in QUANTITIES {
                for (s, sn) in STATS {
                    push(format!("{dn}_{qn}_{sn}"), FeatureSource::DirStat(d, q, s));
                }
            }
        }
        for (q, qn) in QUANTITIES {
            for (s, sn) in STATS {
                push(format!("{qn}_{sn}"), FeatureSource::FlowStat(q, s));
            }
        }
    }

    pub fn for_profile(profile: FeatureProfile) -> Self {
        match profile {
            FeatureProfile::Full => Self::build(MAX_PACKETS),
            FeatureProfile::Reduced => Self::reduced(),
        }
    }

    pub fn len(&self) -> usize {
        self.defs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.defs.is_empty()
    }

    pub fn defs(&self) -> &[FeatureDef] {
        &self.defs
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.defs.iter().map(|d| d.name.as_str())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.defs.iter().position(|d| d.name == name)
    }

    /// Unscaled feature values of one flow.
    pub fn extract(&self, flow: &FlowRecord) -> RawVector {
        let summary = FlowSummary::new(flow);
        FeatureVector {
            values: self.defs.iter().map(|d| summary.value(d.source)).collect(),
            label: flow.label,
            client_id: flow.client_id,
            round: RoundIndex(0),
        }
    }
}

/// Feature values plus provenance. Raw vectors use `f64`; scaled ones take the
/// model's scalar type.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector<S> {
    pub values: Vec<S>,
    pub label: ServiceLabel,
    pub client_id: u16,
    pub round: RoundIndex,
}

pub type RawVector = FeatureVector<f64>;

/// Extracts a flow and records its round.
pub fn extract(schema: &FeatureSchema, flow: &FlowRecord, round_seconds: f64) -> RawVector {
    let mut v = schema.extract(flow);
    v.round = RoundIndex::of(flow.start_time, round_seconds);
    v
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct Summary {
    mean: f64,
    std: f64,
    min: f64,
    max: f64,
}

impl Summary {
    /// Population statistics; all zero for an empty slice.
    fn of(xs: &[f64]) -> Self {
        if xs.is_empty() {
            return Summary::default();
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        Summary {
            mean,
            std: var.sqrt(),
            min: xs.iter().copied().fold(f64::INFINITY, f64::min),
            max: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }

    fn get(&self, s: Stat) -> f64 {
        match s {
            Stat::Mean => self.mean,
            Stat::Std => self.std,
            Stat::Min => self.min,
            Stat::Max => self.max,
        }
    }
}

struct FlowSummary<'a> {
    flow: &'a FlowRecord,
    sizes: [Vec<f64>; 2],
    iats: [Vec<f64>; 2],
    all_sizes: Vec<f64>,
    all_iats: Vec<f64>,
}

fn dir_slot(d: Direction) -> usize {
    match d {
        Direction::ClientToServer => 0,
        Direction::ServerToClient => 1,
    }
}

impl<'a> FlowSummary<'a> {
    fn new(flow: &'a FlowRecord) -> Self {
        let mut sizes = [Vec::new(), Vec::new()];
        let mut iats = [Vec::new(), Vec::new()];
        for p in &flow.packets {
            let slot = dir_slot(p.direction);
            sizes[slot].push(p.size as f64);
            iats[slot].push(p.inter_arrival);
        }
        FlowSummary {
            flow,
            sizes,
            iats,
            all_sizes: flow.packets.iter().map(|p| p.size as f64).collect(),
            all_iats: flow.packets.iter().map(|p| p.inter_arrival).collect(),
        }
    }

    fn seq(&self, d: Direction, q: Quantity) -> &[f64] {
        match q {
            Quantity::Size => &self.sizes[dir_slot(d)],
            Quantity::Iat => &self.iats[dir_slot(d)],
        }
    }

    fn value(&self, source: FeatureSource) -> f64 {
        let f = self.flow;
        match source {
            FeatureSource::Packet(q, k) => f
                .packets
                .get(k)
                .map_or(0.0, |p| match q {
                    Quantity::Size => p.size as f64,
                    Quantity::Iat => p.inter_arrival,
                }),
            FeatureSource::DirectionFlag(k) => f.packets.get(k).map_or(0.0, |p| match p.direction {
                Direction::ClientToServer => 0.0,
                Direction::ServerToClient => 1.0,
            }),
            FeatureSource::DirPacket(d, q, k) => self.seq(d, q).get(k).copied().unwrap_or(0.0),
            FeatureSource::DirStat(d, q, s) => Summary::of(self.seq(d, q)).get(s),
            FeatureSource::FlowStat(q, s) => match q {
                Quantity::Size => Summary::of(&self.all_sizes).get(s),
                Quantity::Iat => Summary::of(&self.all_iats).get(s),
            },
            FeatureSource::Base(b) => match b {
                BaseField::Duration => f.duration,
                BaseField::TotalPacketsFwd => f.total_packets_fwd as f64,
                BaseField::TotalPacketsBwd => f.total_packets_bwd as f64,
                BaseField::TotalBytesFwd => f.total_bytes_fwd as f64,
                BaseField::TotalBytesBwd => f.total_bytes_bwd as f64,
                BaseField::PpiPacketCount => f.packets.len() as f64,
                BaseField::SrcPacketCount => self.sizes[0].len() as f64,
                BaseField::DstPacketCount => self.sizes[1].len() as f64,
                BaseField::BytesRatio => {
                    let total = f.total_bytes_fwd + f.total_bytes_bwd;
                    if total == 0 {
                        0.0
                    } else {
                        f.total_bytes_bwd as f64 / total as f64
                    }
                }
            },
        }
    }
}

/// Per-feature min/max bounds. Degenerate features (min == max) scale to 0.
#[derive(Clone, Debug, PartialEq)]
pub struct Scaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Scaler {
    pub fn fit<'a, I>(vectors: I) -> Result<Scaler>
    where
        I: IntoIterator<Item = &'a RawVector>,
    {
        Self::fit_rows(vectors.into_iter().map(|v| v.values.as_slice()))
    }

    /// Fits on raw rows; lets callers stream values without materializing vectors.
    pub fn fit_rows<I, V>(rows: I) -> Result<Scaler>
    where
        I: IntoIterator<Item = V>,
        V: AsRef<[f64]>,
    {
        let mut iter = rows.into_iter();
        let first = iter.next().ok_or(Error::Empty("cannot fit a scaler on no vectors"))?;
        let mut min = first.as_ref().to_vec();
        let mut max = min.clone();
        for v in iter {
            let v = v.as_ref();
            if v.len() != min.len() {
                return Err(Error::Shape(format!(
                    "scaler fit on vectors of lengths {} and {}",
                    min.len(),
                    v.len()
                )));
            }
            for (j, &x) in v.iter().enumerate() {
                min[j] = min[j].min(x);
                max[j] = max[j].max(x);
            }
        }
        Ok(Scaler { min, max })
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    #[inline]
    pub fn scale_value(&self, j: usize, x: f64) -> f64 {
        let (lo, hi) = (self.min[j], self.max[j]);
        if hi <= lo {
            return 0.0;
        }
        let y = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
        // NaN inputs map to 0 as well
        if y.is_nan() {
            0.0
        } else {
            y
        }
    }

    pub fn apply<S: Scalar>(&self, v: &RawVector) -> Result<FeatureVector<S>> {
        if v.values.len() != self.dim() {
            return Err(Error::Shape(format!(
                "vector has {} features, scaler expects {}",
                v.values.len(),
                self.dim()
            )));
        }
        Ok(FeatureVector {
            values: v
                .values
                .iter()
                .enumerate()
                .map(|(j, &x)| S::lit(self.scale_value(j, x)))
                .collect(),
            label: v.label,
            client_id: v.client_id,
            round: v.round,
        })
    }
}

/// Writes a feature matrix CSV: schema names, then `label`.
pub fn write_feature_matrix<S: Scalar>(
    path: &Path,
    schema: &FeatureSchema,
    vectors: &[FeatureVector<S>],
) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    let header: Vec<&str> = schema.names().chain(std::iter::once("label")).collect();
    writeln!(w, "{}", header.join(",")).map_err(io)?;
    for v in vectors {
        let cells: Vec<String> = v.values.iter().map(|x| x.to_string()).collect();
        writeln!(w, "{},{}", cells.join(","), v.label).map_err(io)?;
    }
    w.flush().map_err(io)
}
