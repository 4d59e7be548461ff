//! Synthetic multi-client flow corpus with diurnal volume cycles and non-IID
//! service mixes.
//!
//! Every service gets a distinctive size for the second server-to-client packet
//! (the certificate-bearing packet in a real QUIC handshake), so the `DST_PS_2`
//! feature carries most of the class signal while the remaining packet
//! statistics are only weakly informative.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_distr::{Gamma, LogNormal, Normal, Poisson};

use crate::error::{Error, Result};
use crate::flowdata::{Direction, FlowRecord, PacketMeta, ServiceLabel};
use crate::rng::{substream, SimRng, Stream};
use crate::{MAX_PACKETS, NUM_CLASSES, ROUND_SECONDS};

const MIN_PACKET_BYTES: f64 = 64.0;
const MAX_PACKET_BYTES: f64 = 1500.0;
const ROUNDS_PER_DAY: u32 = 8;

/// (mean, standard deviation) pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

const fn ms(mean: f64, std: f64) -> MeanStd {
    MeanStd { mean, std }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ServiceProfile {
    pub label: ServiceLabel,
    /// Client-to-server packet size in bytes.
    pub pkt_size_fwd: MeanStd,
    /// Server-to-client packet size in bytes.
    pub pkt_size_bwd: MeanStd,
    /// Inter-arrival time: mean and std of ln(milliseconds).
    pub iat: MeanStd,
    /// Packets in the PPI window, clamped to 2..=30.
    pub pkt_count: MeanStd,
    /// Probability that a packet after the handshake travels server to client.
    pub bwd_share: f64,
    /// Centre of the second server-to-client packet size.
    pub dst_ps2_mode: f64,
    /// Mean number of packets beyond the PPI window for flows that fill it.
    pub tail_packets: f64,
}

impl ServiceProfile {
    fn validate(&self) -> Result<()> {
        let all = [
            self.pkt_size_fwd,
            self.pkt_size_bwd,
            self.pkt_count,
        ];
        if all.iter().any(|p| !(p.mean > 0.0 && p.std >= 0.0)) || self.iat.std < 0.0 {
            return Err(Error::Config(format!(
                "profile {}: means must be > 0 and stddevs >= 0",
                self.label
            )));
        }
        if !(0.0..=1.0).contains(&self.bwd_share) || self.dst_ps2_mode <= 0.0 || self.tail_packets < 0.0 {
            return Err(Error::Config(format!("profile {}: parameter out of range", self.label)));
        }
        Ok(())
    }
}

/// Built-in service profiles; second server packet modes are spread across the
/// MTU range so each service has its own signature.
pub fn default_profiles() -> Vec<ServiceProfile> {
    use ServiceLabel::*;
    let p = |label, fwd, bwd, iat, count, bwd_share, mode, tail| ServiceProfile {
        label,
        pkt_size_fwd: fwd,
        pkt_size_bwd: bwd,
        iat,
        pkt_count: count,
        bwd_share,
        dst_ps2_mode: mode,
        tail_packets: tail,
    };
    vec![
        p(Discord, ms(180.0, 90.0), ms(420.0, 300.0), ms(3.2, 1.2), ms(20.0, 6.0), 0.55, 310.0, 40.0),
        p(FacebookGraph, ms(260.0, 120.0), ms(650.0, 380.0), ms(2.6, 1.1), ms(14.0, 5.0), 0.60, 1180.0, 10.0),
        p(GoogleWWW, ms(320.0, 150.0), ms(900.0, 450.0), ms(2.3, 1.3), ms(16.0, 6.0), 0.62, 540.0, 25.0),
        p(Instagram, ms(260.0, 130.0), ms(780.0, 420.0), ms(2.5, 1.2), ms(18.0, 6.0), 0.65, 1020.0, 60.0),
        p(Snapchat, ms(220.0, 110.0), ms(600.0, 350.0), ms(2.9, 1.1), ms(15.0, 5.0), 0.58, 760.0, 30.0),
        p(Spotify, ms(200.0, 100.0), ms(1050.0, 400.0), ms(3.4, 1.0), ms(22.0, 5.0), 0.70, 1400.0, 80.0),
        p(YouTube, ms(300.0, 140.0), ms(1200.0, 350.0), ms(2.0, 1.4), ms(25.0, 4.0), 0.75, 880.0, 200.0),
    ]
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClientProfile {
    pub client_id: u16,
    /// Probability of each service, indexed by label code.
    pub service_mix: [f64; NUM_CLASSES],
    /// Expected flows per round at the diurnal peak.
    pub base_rate: f64,
    /// Shift of the daily peak in hours.
    pub diurnal_phase: f64,
    /// Volume floor at the daily trough, as a fraction of the peak.
    pub night_floor: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenConfig {
    pub seed: u64,
    pub n_clients: u16,
    pub n_rounds: u32,
    pub round_seconds: f64,
    /// Dirichlet concentration of per-client service mixes; small is more skewed.
    pub dirichlet_alpha: f64,
    pub profiles: Vec<ServiceProfile>,
    pub rate_min: f64,
    pub rate_max: f64,
    pub night_floor_min: f64,
    pub night_floor_max: f64,
    /// Phases are drawn uniformly from `[-phase_spread, phase_spread]` hours.
    pub phase_spread: f64,
    /// Standard deviation of the second server packet around its mode.
    pub ps2_jitter: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            seed: 42,
            n_clients: 14,
            n_rounds: 112,
            round_seconds: ROUND_SECONDS,
            dirichlet_alpha: 0.5,
            profiles: default_profiles(),
            rate_min: 60.0,
            rate_max: 300.0,
            night_floor_min: 0.05,
            night_floor_max: 0.15,
            phase_spread: 2.0,
            ps2_jitter: 30.0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_clients < 1 {
            return fail("generator.n_clients must be >= 1");
        }
        if self.n_rounds < 1 {
            return fail("generator.n_rounds must be >= 1");
        }
        if !(self.round_seconds > 0.0) {
            return fail("generator.round_seconds must be > 0");
        }
        if !(self.dirichlet_alpha > 0.0 && self.dirichlet_alpha.is_finite()) {
            return fail("generator.dirichlet_alpha must be > 0");
        }
        if !(self.rate_min >= 0.0 && self.rate_max >= self.rate_min) {
            return fail("generator.rate_min/rate_max must satisfy 0 <= min <= max");
        }
        if !(self.night_floor_min > 0.0
            && self.night_floor_max >= self.night_floor_min
            && self.night_floor_max <= 1.0)
        {
            return fail("generator.night_floor_min/max must satisfy 0 < min <= max <= 1");
        }
        if !(self.phase_spread >= 0.0 && self.ps2_jitter >= 0.0) {
            return fail("generator.phase_spread and ps2_jitter must be >= 0");
        }
        if self.profiles.len() != NUM_CLASSES {
            return fail("generator needs exactly one profile per service");
        }
        for (i, p) in self.profiles.iter().enumerate() {
            if p.label.code() != i {
                return fail("generator profiles must be ordered by label code");
            }
            p.validate()?;
        }
        Ok(())
    }
}

/// Local hour (0..24) at the middle of a round.
pub fn round_mid_hour(round: u32) -> f64 {
    (round % ROUNDS_PER_DAY) as f64 * 3.0 + 1.5
}

/// Volume multiplier at a local hour; peaks at 14:00 + `phase`, bottoms out at
/// `night_floor` twelve hours later.
pub fn diurnal_multiplier_at(hour: f64, phase: f64, night_floor: f64) -> f64 {
    let angle = 2.0 * std::f64::consts::PI * (hour - 14.0 - phase) / 24.0;
    night_floor + (1.0 - night_floor) * (1.0 + angle.cos()) / 2.0
}

/// Multiplier for a round, evaluated at the round's mid hour; period 8 rounds.
pub fn diurnal_multiplier(round: u32, phase: f64, night_floor: f64) -> f64 {
    diurnal_multiplier_at(round_mid_hour(round), phase, night_floor)
}

fn sample_mix(rng: &mut SimRng, alpha: f64) -> [f64; NUM_CLASSES] {
    let gamma = Gamma::new(alpha, 1.0).expect("alpha validated > 0");
    loop {
        let draws: [f64; NUM_CLASSES] = std::array::from_fn(|_| gamma.sample(rng));
        let total: f64 = draws.iter().sum();
        if total > 0.0 && total.is_finite() {
            return draws.map(|d| d / total);
        }
    }
}

pub fn sample_client_profiles(cfg: &GenConfig) -> Vec<ClientProfile> {
    let mut rng = substream(cfg.seed, Stream::ClientProfiles, 0, 0);
    (0..cfg.n_clients)
        .map(|client_id| {
            let service_mix = sample_mix(&mut rng, cfg.dirichlet_alpha);
            let base_rate = rng.gen_range(cfg.rate_min..=cfg.rate_max);
            let diurnal_phase = rng.gen_range(-cfg.phase_spread..=cfg.phase_spread);
            let night_floor = rng.gen_range(cfg.night_floor_min..=cfg.night_floor_max);
            ClientProfile {
                client_id,
                service_mix,
                base_rate,
                diurnal_phase,
                night_floor,
            }
        })
        .collect()
}

fn truncated_normal(rng: &mut SimRng, dist: MeanStd, lo: f64, hi: f64) -> f64 {
    if dist.std == 0.0 {
        return dist.mean.clamp(lo, hi);
    }
    let normal = Normal::new(dist.mean, dist.std).expect("std validated >= 0");
    for _ in 0..16 {
        let x = normal.sample(rng);
        if (lo..=hi).contains(&x) {
            return x;
        }
    }
    dist.mean.clamp(lo, hi)
}

fn round_to(x: f64, decimals: i32) -> f64 {
    let scale = 10f64.powi(decimals);
    (x * scale).round() / scale
}

fn sample_count(rng: &mut SimRng, lambda: f64) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    Poisson::new(lambda).expect("lambda > 0").sample(rng) as u64
}

/// One flow of `profile`; `flow_id` is assigned later.
fn sample_flow(
    rng: &mut SimRng,
    profile: &ServiceProfile,
    ps2_jitter: f64,
    client_id: u16,
    start_time: f64,
) -> FlowRecord {
    let count = Normal::new(profile.pkt_count.mean, profile.pkt_count.std.max(0.0))
        .expect("validated")
        .sample(rng)
        .round()
        .clamp(2.0, MAX_PACKETS as f64) as usize;
    let iat_dist = LogNormal::new(profile.iat.mean, profile.iat.std).expect("validated");

    let mut packets = Vec::with_capacity(count);
    let mut server_seen = 0usize;
    for i in 0..count {
        // handshake shape: client hello, then two server packets
        let direction = match i {
            0 => Direction::ClientToServer,
            1 | 2 => Direction::ServerToClient,
            _ if rng.gen_bool(profile.bwd_share) => Direction::ServerToClient,
            _ => Direction::ClientToServer,
        };
        let size = match direction {
            Direction::ClientToServer => {
                truncated_normal(rng, profile.pkt_size_fwd, MIN_PACKET_BYTES, MAX_PACKET_BYTES)
            }
            Direction::ServerToClient => {
                server_seen += 1;
                let dist = if server_seen == 2 {
                    ms(profile.dst_ps2_mode, ps2_jitter)
                } else {
                    profile.pkt_size_bwd
                };
                truncated_normal(rng, dist, MIN_PACKET_BYTES, MAX_PACKET_BYTES)
            }
        };
        let inter_arrival = if i == 0 {
            0.0
        } else {
            round_to(iat_dist.sample(rng), 3)
        };
        packets.push(PacketMeta {
            size: size.round() as u32,
            inter_arrival,
            direction,
        });
    }

    let mut pk_fwd = 0u64;
    let mut pk_bwd = 0u64;
    let mut by_fwd = 0u64;
    let mut by_bwd = 0u64;
    for p in &packets {
        match p.direction {
            Direction::ClientToServer => {
                pk_fwd += 1;
                by_fwd += p.size as u64;
            }
            Direction::ServerToClient => {
                pk_bwd += 1;
                by_bwd += p.size as u64;
            }
        }
    }
    let mut duration_ms: f64 = packets.iter().map(|p| p.inter_arrival).sum();
    if count == MAX_PACKETS {
        let tail = sample_count(rng, profile.tail_packets);
        let tail_bwd = (0..tail).filter(|_| rng.gen_bool(profile.bwd_share)).count() as u64;
        let tail_fwd = tail - tail_bwd;
        pk_fwd += tail_fwd;
        pk_bwd += tail_bwd;
        by_fwd += (tail_fwd as f64 * profile.pkt_size_fwd.mean).round() as u64;
        by_bwd += (tail_bwd as f64 * profile.pkt_size_bwd.mean).round() as u64;
        duration_ms += tail as f64 * profile.iat.mean.exp();
    }

    FlowRecord {
        flow_id: 0,
        client_id,
        start_time,
        duration: round_to(duration_ms / 1000.0, 6),
        total_packets_fwd: pk_fwd,
        total_packets_bwd: pk_bwd,
        total_bytes_fwd: by_fwd,
        total_bytes_bwd: by_bwd,
        label: profile.label,
        packets,
    }
}

/// Flows of one `(round, client)` cell from that cell's own random stream.
pub fn generate_cell(cfg: &GenConfig, client: &ClientProfile, round: u32) -> Vec<FlowRecord> {
    let mut rng = substream(cfg.seed, Stream::GeneratorCell, round as u64, client.client_id as u64);
    let lambda = client.base_rate * diurnal_multiplier(round, client.diurnal_phase, client.night_floor);
    let n = sample_count(&mut rng, lambda);
    if n == 0 {
        return Vec::new();
    }
    let labels = WeightedIndex::new(client.service_mix).expect("mix is a probability vector");
    let round_start = round as f64 * cfg.round_seconds;
    (0..n)
        .map(|_| {
            let offset = rng.gen_range(0.0..cfg.round_seconds);
            // keep the rounded time inside the round
            let start = round_to(round_start + offset, 3).min(round_start + cfg.round_seconds - 0.001);
            let profile = &cfg.profiles[labels.sample(&mut rng)];
            sample_flow(&mut rng, profile, cfg.ps2_jitter, client.client_id, start.max(round_start))
        })
        .collect()
}

/// Whole corpus, sorted by start time with `flow_id` equal to the sorted position.
pub fn generate(cfg: &GenConfig) -> Result<Vec<FlowRecord>> {
    cfg.validate()?;
    let clients = sample_client_profiles(cfg);
    Ok(generate_with_profiles(cfg, &clients))
}

pub fn generate_with_profiles(cfg: &GenConfig, clients: &[ClientProfile]) -> Vec<FlowRecord> {
    let mut flows: Vec<FlowRecord> = Vec::new();
    for round in 0..cfg.n_rounds {
        for client in clients {
            flows.extend(generate_cell(cfg, client, round));
        }
    }
    // stable: ties keep (round, client, draw) order
    flows.sort_by(|a, b| a.start_time.total_cmp(&b.start_time));
    for (i, f) in flows.iter_mut().enumerate() {
        f.flow_id = i as u64;
    }
    flows
}
