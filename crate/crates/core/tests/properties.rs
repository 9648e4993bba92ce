use std::sync::OnceLock;

use forgetful_core::crossbar::{weight, READ_WINDOW_V};
use forgetful_core::device::{self, DeviceParams, DeviceState};
use forgetful_core::reminder::{apply_reminder, synapse_for_weight};
use forgetful_core::{CrossbarLayer, DifferentialSynapse, Network, ReadErrorModel, ReminderMap};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn shared_map() -> &'static ReminderMap {
    static MAP: OnceLock<ReminderMap> = OnceLock::new();
    MAP.get_or_init(|| ReminderMap::build(&DeviceParams::default(), 1.0, 1e-3).unwrap())
}

fn layer(seed: u64, n_in: usize, n_out: usize, beta: f64) -> CrossbarLayer {
    let mut l = CrossbarLayer::new(n_in, n_out, beta, DeviceParams::default()).unwrap();
    l.init_random(&mut ChaCha8Rng::seed_from_u64(seed), 0.3).unwrap();
    l
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn forward_read_is_linear(
        seed in 0u64..1000,
        a in prop::collection::vec(-0.05f64..0.05, 3),
        b in prop::collection::vec(-0.05f64..0.05, 3),
        s in -1.0f64..1.0,
    ) {
        let l = layer(seed, 3, 2, 2.0);
        let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + s * y).collect();
        let ya = l.forward_read(&a).unwrap().outputs;
        let yb = l.forward_read(&b).unwrap().outputs;
        let ym = l.forward_read(&mix).unwrap().outputs;
        for k in 0..2 {
            prop_assert!((ym[k] - ya[k] - s * yb[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn weights_stay_within_full_scale(seed in 0u64..1000, dw in -5.0f64..5.0, beta in 1.0f64..8.0) {
        let mut l = layer(seed, 2, 2, beta);
        l.shift_weight(1, 0, dw);
        let full = l.max_weight();
        prop_assert!(l.ideal_weights().iter().all(|w| w.abs() <= full + 1e-12));
    }

    #[test]
    fn network_outputs_are_bounded(seed in 0u64..1000, x in prop::collection::vec(-1.0f64..1.0, 2)) {
        let mut net = Network::new(&[2, 4, 1], &[4.0, 4.0], READ_WINDOW_V, true, &DeviceParams::default()).unwrap();
        net.init_random(&mut ChaCha8Rng::seed_from_u64(seed), 2.0).unwrap();
        let y = net.predict(&x).unwrap();
        prop_assert!(y[0].abs() < 1.0);
    }

    #[test]
    fn oxygen_rescales_time(v0 in 0.05f64..0.5, t in 10.0f64..2000.0, o2 in 0.1f64..1.0) {
        let ambient = DeviceParams::default();
        let reduced = ambient.clone().with_oxygen(o2);
        let slow = device::step_discharge(DeviceState::new(v0), &reduced, t).unwrap().v;
        let fast = device::step_discharge(DeviceState::new(v0), &ambient, o2 * t).unwrap().v;
        prop_assert!((slow - fast).abs() < 1e-6);
    }

    #[test]
    fn discharge_is_odd_and_monotone(v0 in -0.5f64..0.5, t1 in 0.0f64..3000.0, t2 in 0.0f64..3000.0) {
        let p = DeviceParams::default();
        let at = |v: f64, t: f64| device::step_discharge(DeviceState::new(v), &p, t).unwrap().v;
        prop_assert_eq!(at(-v0, t1), -at(v0, t1));
        let (early, late) = (at(v0, t1.min(t2)), at(v0, t1.max(t2)));
        prop_assert!(late.abs() <= early.abs() + 1e-15);
        prop_assert!(late * v0 >= 0.0);
    }

    #[test]
    fn antisymmetric_pairs_give_odd_weights(v in -0.5f64..0.5, beta in 1.0f64..8.0) {
        let p = DeviceParams::default();
        let w = |v: f64| weight(&DifferentialSynapse::antisymmetric(v), &p, beta, p.g0);
        prop_assert!((w(-v) + w(v)).abs() < 1e-12);
    }

    #[test]
    fn lookup_is_odd_and_capped(w in -1.0f64..1.0, t in 0.0f64..25_000.0) {
        let m = shared_map();
        let d = m.lookup(w, t).unwrap();
        prop_assert_eq!(m.lookup(-w, t).unwrap(), -d);
        prop_assert!(d * w >= 0.0);
        prop_assert!((w + d).abs() <= 1.0 + 1e-12);
    }

    #[test]
    fn one_reminder_restores_programmed_weight(w0 in -1.0f64..1.0, t in 10.0f64..5000.0) {
        let p = DeviceParams::default();
        let mut l = CrossbarLayer::new(1, 1, 1.0, p.clone()).unwrap();
        l.set_synapse(0, 0, synapse_for_weight(w0, &p));
        let mut net = Network::from_layers(vec![l], READ_WINDOW_V, false).unwrap();
        net.discharge(t).unwrap();
        apply_reminder(&mut net, shared_map(), t, &ReadErrorModel::off(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let l = &net.layers()[0];
        prop_assert!((l.weight_at(0, 0) / l.max_weight() - w0).abs() <= 0.02);
    }
}

#[test]
fn reminder_without_elapsed_time_is_noop() {
    let mut net = Network::from_layers(vec![layer(5, 3, 2, 2.0)], READ_WINDOW_V, false).unwrap();
    net.discharge(500.0).unwrap();
    let before = net.layers()[0].ideal_weights();
    apply_reminder(&mut net, shared_map(), 0.0, &ReadErrorModel::off(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let after = net.layers()[0].ideal_weights();
    assert!(after.iter().zip(&before).all(|(a, b)| (a - b).abs() < 1e-12));
}
