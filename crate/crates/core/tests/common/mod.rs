#![allow(dead_code)]

use proptest::prelude::*;
use quicfed_core::{Direction, FlowRecord, PacketMeta, ServiceLabel};

pub fn packet(first: bool) -> impl Strategy<Value = PacketMeta> {
    (1u32..=1500, 0.0f64..2000.0, any::<bool>()).prop_map(move |(size, iat, fwd)| PacketMeta {
        size,
        inter_arrival: if first { 0.0 } else { iat },
        direction: if fwd {
            Direction::ClientToServer
        } else {
            Direction::ServerToClient
        },
    })
}

/// Arbitrary valid flow; `flow_id` is left at 0 for the caller to assign.
pub fn flow() -> impl Strategy<Value = FlowRecord> {
    (
        packet(true),
        proptest::collection::vec(packet(false), 0..30),
        0u16..14,
        0.0f64..1_209_600.0,
        0.0f64..600.0,
        0usize..7,
        (0u64..50, 0u64..50, 0u64..100_000, 0u64..100_000),
    )
        .prop_map(|(p0, rest, client_id, start_time, duration, label, extra)| {
            let mut packets = vec![p0];
            packets.extend(rest);
            let fwd = packets.iter().filter(|p| p.direction == Direction::ClientToServer);
            let (nf, bf) = fwd.fold((0, 0), |(n, b), p| (n + 1, b + p.size as u64));
            let bwd = packets.iter().filter(|p| p.direction == Direction::ServerToClient);
            let (nb, bb) = bwd.fold((0, 0), |(n, b), p| (n + 1, b + p.size as u64));
            FlowRecord {
                flow_id: 0,
                client_id,
                start_time,
                duration,
                total_packets_fwd: nf + extra.0,
                total_packets_bwd: nb + extra.1,
                total_bytes_fwd: bf + extra.2,
                total_bytes_bwd: bb + extra.3,
                label: ServiceLabel::from_code(label).unwrap(),
                packets,
            }
        })
}

pub fn flows(max: usize) -> impl Strategy<Value = Vec<FlowRecord>> {
    proptest::collection::vec(flow(), 0..max).prop_map(|mut v| {
        for (i, f) in v.iter_mut().enumerate() {
            f.flow_id = i as u64 + 1;
        }
        v
    })
}
