use std::collections::{HashMap, HashSet};

use origintrace::netsim::*;
use origintrace::seed;
use origintrace::wiremsg::{Direction, MessageKind};
use proptest::prelude::*;

fn small(seed: u64, n: usize, capacity: usize, fraction: f64) -> NetworkConfig {
    NetworkConfig {
        n_nodes: n,
        target_outbound: 4,
        target_inbound_capacity: capacity,
        probe_fraction: fraction,
        background_out_degree: 3,
        probe_out_degree: 2,
        horizon: 300.0,
        drain: 120.0,
        seed,
        ..NetworkConfig::default()
    }
}

fn light_workload() -> Workload {
    Workload { background_tx_rate: 0.5, target_origin_count: 5, ..Workload::default() }
}

#[test]
fn delay_means_match_configuration() {
    let model = DelayModel::new(2.5, 5.0);
    let mut rng = seed::rng(2024);
    let mean = |kind, rng: &mut _| (0..10_000).map(|_| sample_announce_delay(kind, &model, rng)).sum::<f64>() / 10_000.0;
    let out = mean(LinkKind::Outbound, &mut rng);
    let inb = mean(LinkKind::Inbound, &mut rng);
    assert!((out - 2.5).abs() <= 0.125, "outbound mean {out}");
    assert!((inb - 5.0).abs() <= 0.25, "inbound mean {inb}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn topology_invariants(seed in any::<u64>(), n in 20usize..80, capacity in 1usize..12, fraction in 0.0f64..=1.0) {
        let cfg = small(seed, n, capacity, fraction);
        let net = build_network(&cfg).unwrap();
        prop_assert!(net.is_connected());
        prop_assert_eq!(net.outbound_degree(TARGET), cfg.target_outbound);
        prop_assert_eq!(net.n_probes(), round_half_up(fraction * capacity as f64));
        for v in net.background_nodes() {
            prop_assert!(!net.are_linked(v, v));
        }
        prop_assert_eq!(build_network(&cfg).unwrap(), net);
    }

    #[test]
    fn trace_invariants(seed in any::<u64>()) {
        let net = build_network(&small(seed, 40, 6, 1.0)).unwrap();
        let out = run(&net, &light_workload()).unwrap();
        let records = &out.traces.records;
        prop_assert!(records.windows(2).all(|w| w[0].ts <= w[1].ts));
        prop_assert_eq!(out.truth.target_count(), 5);
        let links: HashMap<u32, LinkInfo> = out.traces.links.iter().map(|l| (l.conn, *l)).collect();
        // first inv the target received per tx
        let mut first_inv: HashMap<_, _> = HashMap::new();
        for r in records.iter().filter(|r| r.msg == MessageKind::Inv && r.dir == Direction::ReceivedByTarget) {
            first_inv.entry(r.tx).or_insert(*r);
        }
        let mut getdata_sent: HashSet<_> = HashSet::new();
        for r in records {
            prop_assert!(links.contains_key(&r.conn));
            prop_assert!(out.truth.contains(&r.tx));
            if r.msg == MessageKind::Getdata && r.dir == Direction::SentByTarget {
                prop_assert!(getdata_sent.insert(r.tx), "second getdata for one tx");
                let inv = first_inv[&r.tx];
                prop_assert_eq!(inv.conn, r.conn);
                let wait = if links[&r.conn].inbound { 2_000_000 } else { 0 };
                prop_assert_eq!(r.ts.as_micros() - inv.ts.as_micros(), wait);
            }
            // the target never asks for what it created
            if out.truth.is_target_origin(&r.tx) {
                prop_assert!(!(r.dir == Direction::SentByTarget && r.msg == MessageKind::Getdata));
            }
        }
        let again = run(&net, &light_workload()).unwrap();
        prop_assert_eq!(&again.traces, &out.traces);
    }

    #[test]
    fn subsampling_keeps_requested_inbound_links(seed in any::<u64>(), fraction in 0.0f64..=1.0) {
        let net = build_network(&small(seed, 40, 8, 1.0)).unwrap();
        let out = run(&net, &light_workload()).unwrap();
        let n_in = out.traces.inbound_links().count();
        let want = round_half_up(fraction * n_in as f64);
        match subsample_links(&out.traces, fraction, seed, false) {
            Ok(sub) => {
                prop_assert_eq!(sub.links.len(), want);
                prop_assert!(sub.links.iter().all(|l| l.inbound));
                let kept: HashSet<u32> = sub.links.iter().map(|l| l.conn).collect();
                prop_assert!(sub.records.iter().all(|r| kept.contains(&r.conn)));
                prop_assert_eq!(sub.records.len(), out.traces.records.iter().filter(|r| kept.contains(&r.conn)).count());
            }
            Err(_) => prop_assert_eq!(want, 0),
        }
    }
}
