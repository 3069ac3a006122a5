//! Randomized invariant checks over the model's building blocks.

use nestsim_core::abr::{nestvr_step, BitrateLadder, NestVrConfig, StepInputs};
use nestsim_core::averaging::{Averager, AveragerConfig};
use nestsim_core::link::{Link, LinkScenario, PacketOutcome, PhaseSpec};
use nestsim_core::packet::fragment_payload;
use nestsim_core::time::ServerTime;
use proptest::prelude::*;

proptest! {
    /// Fragmentation never loses or invents payload, never exceeds the
    /// packet size, and uses the minimal number of packets.
    #[test]
    fn fragmentation_conserves_payload(
        payload_bits in 1u64..5_000_000,
        max_payload_bytes in 100u32..20_000,
    ) {
        let cap = u64::from(max_payload_bytes) * 8;
        let parts = fragment_payload(payload_bits, cap);
        prop_assert_eq!(parts.iter().sum::<u64>(), payload_bits);
        prop_assert!(parts.iter().all(|&p| p > 0 && p <= cap));
        prop_assert_eq!(parts.len() as u64, payload_bits.div_ceil(cap));
        // Only the last packet may be short.
        for p in &parts[..parts.len() - 1] {
            prop_assert_eq!(*p, cap);
        }
    }

    /// Every ladder level floors to itself, and flooring any target yields
    /// the greatest level not above it (or the bottom level).
    #[test]
    fn ladder_floor_is_exact_on_members_and_tight_elsewhere(
        min_mbps in 1.0f64..50.0,
        span_mbps in 1.0f64..200.0,
        n_steps in 1u32..24,
        target_mbps in 0.0f64..400.0,
    ) {
        let ladder =
            BitrateLadder::new(min_mbps * 1e6, (min_mbps + span_mbps) * 1e6, n_steps).unwrap();
        prop_assert_eq!(ladder.levels().len(), n_steps as usize + 1);
        for (i, &level) in ladder.levels().iter().enumerate() {
            prop_assert_eq!(ladder.floor_index(level), i);
        }
        let idx = ladder.floor_index(target_mbps * 1e6);
        let level = ladder.level(idx);
        if target_mbps * 1e6 >= ladder.min_bps() {
            prop_assert!(level <= target_mbps * 1e6);
            if idx < ladder.top_index() {
                prop_assert!(ladder.level(idx + 1) > target_mbps * 1e6);
            }
        } else {
            prop_assert_eq!(idx, 0);
        }
    }

    /// The count-window mean equals the arithmetic mean of the last n
    /// samples, recomputed independently.
    #[test]
    fn count_window_matches_reference_mean(
        samples in prop::collection::vec(0.0f64..1e6, 1..60),
        n in 1usize..20,
    ) {
        let mut avg = Averager::new(AveragerConfig::CountWindow { n }).unwrap();
        for (i, &v) in samples.iter().enumerate() {
            avg.push(ServerTime(i as i64), v);
        }
        let tail: Vec<f64> = samples.iter().rev().take(n).copied().collect();
        let expected = tail.iter().sum::<f64>() / tail.len() as f64;
        let got = avg.value().unwrap();
        prop_assert!((got - expected).abs() <= 1e-9 * expected.abs().max(1.0));
    }

    /// The time-window mean equals the mean over samples strictly younger
    /// than the window, relative to the newest push.
    #[test]
    fn time_window_matches_reference_mean(
        pairs in prop::collection::vec((0i64..2_000_000_000, 0.0f64..1e6), 1..60),
        window_ms in 1i64..1500,
    ) {
        let mut pairs = pairs;
        pairs.sort_by_key(|&(t, _)| t);
        let window_ns = window_ms * 1_000_000;
        let mut avg = Averager::new(AveragerConfig::TimeWindow {
            window_s: window_ms as f64 / 1e3,
        })
        .unwrap();
        for &(t, v) in &pairs {
            avg.push(ServerTime(t), v);
        }
        let newest = pairs.last().unwrap().0;
        let live: Vec<f64> = pairs
            .iter()
            .filter(|&&(t, _)| newest - t < window_ns)
            .map(|&(_, v)| v)
            .collect();
        let expected = live.iter().sum::<f64>() / live.len() as f64;
        let got = avg.value().unwrap();
        prop_assert!((got - expected).abs() <= 1e-9 * expected.abs().max(1.0));
    }

    /// EWMA matches its closed-form expansion.
    #[test]
    fn ewma_matches_closed_form(
        samples in prop::collection::vec(0.0f64..1e6, 1..40),
        weight in 0.01f64..1.0,
    ) {
        let mut avg = Averager::new(AveragerConfig::Ewma { weight }).unwrap();
        let mut expected: Option<f64> = None;
        for (i, &v) in samples.iter().enumerate() {
            avg.push(ServerTime(i as i64), v);
            expected = Some(match expected {
                None => v,
                Some(e) => weight * v + (1.0 - weight) * e,
            });
        }
        let got = avg.value().unwrap();
        let expected = expected.unwrap();
        prop_assert!((got - expected).abs() <= 1e-9 * expected.abs().max(1.0));
    }

    /// Every offered packet gets exactly one outcome, ledger entries match
    /// outcome counts, and without jitter the delivery order is the offer
    /// order.
    #[test]
    fn link_outcomes_and_ledger_reconcile(
        seed in 0u64..1000,
        loss in 0.0f64..0.3,
        dup in 0.0f64..0.2,
        jitter_on in proptest::bool::ANY,
        capacity_mbps in 1.0f64..80.0,
        n_packets in 1usize..300,
    ) {
        let scenario = LinkScenario {
            phases: vec![PhaseSpec {
                start_s: 0.0,
                duration_s: 10.0,
                capacity_bps: Some(capacity_mbps * 1e6),
                loss_prob: loss,
                jitter_max_s: if jitter_on { 0.004 } else { 0.0 },
                dup_prob: dup,
                queue_limit_bytes: 20_000,
                ..PhaseSpec::default()
            }],
            base_propagation_s: 0.002,
            uplink_delay_s: 0.001,
            rng_seed: seed,
            flush_queue_on_phase_change: false,
        };
        let mut link = Link::new(&scenario).unwrap();
        let mut delivered = 0u64;
        let mut dropped_random = 0u64;
        let mut dropped_overflow = 0u64;
        let mut dup_outcomes = 0u64;
        let mut arrivals: Vec<ServerTime> = Vec::new();
        for k in 0..n_packets {
            let now = ServerTime(k as i64 * 400_000);
            let out = link.transmit(0, k as u64 + 1, 9_000, now);
            for outcome in core::iter::once(&out.packet).chain(out.duplicate.iter()) {
                match outcome {
                    PacketOutcome::Delivered { arrival } => {
                        delivered += 1;
                        arrivals.push(*arrival);
                    }
                    PacketOutcome::Dropped { reason } => match reason {
                        nestsim_core::link::DropReason::Random => dropped_random += 1,
                        nestsim_core::link::DropReason::Overflow => dropped_overflow += 1,
                    },
                }
            }
            if out.duplicate.is_some() {
                dup_outcomes += 1;
            }
        }
        let ledger = link.ledger();
        prop_assert_eq!(ledger.random_loss.len() as u64, dropped_random);
        prop_assert_eq!(ledger.queue_overflow.len() as u64, dropped_overflow);
        prop_assert_eq!(ledger.duplicated.len() as u64, dup_outcomes);
        prop_assert_eq!(
            n_packets as u64 + dup_outcomes,
            delivered + dropped_random + dropped_overflow
        );
        if !jitter_on {
            // FIFO serialization plus constant propagation cannot reorder.
            prop_assert!(arrivals.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(ledger.reordered.is_empty());
        }
    }

    /// One adjustment moves the ladder index by at most the configured step
    /// (capacity ceiling aside) and never leaves the ladder.
    #[test]
    fn one_adjustment_stays_on_the_ladder_and_within_step_bounds(
        index in 0usize..10,
        nfr in 0.0f64..1.2,
        vf_rtt_ms in 0.0f64..80.0,
        draw1 in 0.0f64..1.0,
        draw2 in 0.0f64..1.0,
        n_up in 1u32..10,
        n_dw in 1u32..10,
    ) {
        let cfg = NestVrConfig {
            n_up,
            n_dw,
            ..NestVrConfig::default()
        };
        cfg.validate().unwrap();
        let ladder = cfg.ladder().unwrap();
        let draws = [draw1, draw2];
        let mut i = 0;
        let mut draw = || {
            let v = draws[i.min(1)];
            i += 1;
            v
        };
        let out = nestvr_step(
            &cfg,
            &ladder,
            StepInputs {
                index,
                nfr: Some(nfr),
                vf_rtt_s: Some(vf_rtt_ms / 1e3),
                capacity_bps: None,
            },
            &mut draw,
        );
        prop_assert!(out.index <= ladder.top_index());
        let moved = out.index.abs_diff(index);
        prop_assert!(moved <= n_up.max(n_dw) as usize);
        prop_assert!(!out.inputs_missing);
    }
}
