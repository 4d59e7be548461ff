mod common;

use std::collections::HashSet;

use proptest::prelude::*;
use quicfed_core::flowdata::{partition_by_round, read_flows, write_flows_to};
use quicfed_core::RoundIndex;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn csv_round_trip_is_exact(flows in common::flows(20)) {
        let mut bytes = Vec::new();
        write_flows_to(&mut bytes, &flows).unwrap();
        let back = read_flows(bytes.as_slice()).unwrap();
        prop_assert_eq!(&back, &flows);
        let mut again = Vec::new();
        write_flows_to(&mut again, &back).unwrap();
        prop_assert_eq!(again, bytes);
    }

    #[test]
    fn partition_is_exhaustive_and_disjoint(flows in common::flows(60)) {
        let parts = partition_by_round(&flows, 10_800.0);
        let mut seen = HashSet::new();
        let mut total = 0;
        for (round, clients) in &parts {
            for (client, cell) in clients {
                for f in cell {
                    prop_assert_eq!(RoundIndex::of(f.start_time, 10_800.0), *round);
                    prop_assert_eq!(f.client_id, *client);
                    prop_assert!(seen.insert(f.flow_id));
                    total += 1;
                }
            }
        }
        prop_assert_eq!(total, flows.len());
    }

    #[test]
    fn round_assignment_is_monotone(a in 0.0f64..2e6, b in 0.0f64..2e6) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(RoundIndex::of(lo, 10_800.0) <= RoundIndex::of(hi, 10_800.0));
    }
}
