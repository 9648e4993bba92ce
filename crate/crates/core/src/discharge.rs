//! Open-circuit transient of a whole network with periodic loss probes.

use rand::Rng;

use crate::data::Dataset;
use crate::error::{Result, SimError};
use crate::network::Network;
use crate::reminder::{apply_reminder, ReminderPolicy};
use crate::trace::{ExperimentTrace, TraceKind, TraceSample};
use crate::training::evaluate;

pub const DEFAULT_EVAL_INTERVAL_S: f64 = 20.0;

#[derive(Debug, Clone, PartialEq)]
pub struct DischargeOptions {
    pub duration_s: f64,
    pub eval_interval_s: f64,
    /// Store a weight snapshot every this many evaluations (0 = never).
    pub snapshot_every: usize,
}

impl DischargeOptions {
    pub fn new(duration_s: f64) -> Self {
        Self {
            duration_s,
            eval_interval_s: DEFAULT_EVAL_INTERVAL_S,
            snapshot_every: 0,
        }
    }
}

fn sample(network: &Network, dataset: &Dataset, t: f64, snapshot: bool) -> Result<TraceSample> {
    let (loss, accuracy) = evaluate(network, dataset)?;
    let mut s = TraceSample::new(t, loss, accuracy);
    if snapshot {
        s.weights = Some(network.layers().iter().map(|l| l.ideal_weights()).collect());
    }
    Ok(s)
}

/// Advances every device through `opts.duration_s` of self-discharge and
/// records the noise-free loss every `opts.eval_interval_s`.
///
/// With a reminder policy, a reminder fires at t = 0 (if the policy reports
/// prior discharge) and then every `period_s`; samples taken at a reminder
/// are recorded after it, with the pre-reminder loss kept alongside.
pub fn simulate<R: Rng + ?Sized>(
    network: &mut Network,
    dataset: &Dataset,
    opts: &DischargeOptions,
    mut reminder: Option<&ReminderPolicy>,
    rng: &mut R,
) -> Result<ExperimentTrace> {
    if !(opts.duration_s.is_finite() && opts.duration_s > 0.0) {
        return Err(SimError::InvalidParameter("discharge duration must be > 0".into()));
    }
    if !(opts.eval_interval_s.is_finite() && opts.eval_interval_s > 0.0) {
        return Err(SimError::InvalidParameter("evaluation interval must be > 0".into()));
    }
    if let Some(p) = reminder.as_ref() {
        if !(p.period_s.is_finite() && p.period_s > 0.0) {
            return Err(SimError::InvalidParameter("reminder period must be > 0".into()));
        }
    }

    let mut trace = ExperimentTrace::new(TraceKind::Discharge);
    let snap = |k: usize| opts.snapshot_every > 0 && k.is_multiple_of(opts.snapshot_every);

    let mut last_reminder = 0.0;
    let mut first = sample(network, dataset, 0.0, false)?;
    if let Some(p) = reminder.as_mut() {
        if p.initial_elapsed_s > 0.0 {
            apply_reminder(network, &p.map, p.initial_elapsed_s, &p.measurement, rng)?;
            let after = sample(network, dataset, 0.0, snap(0))?;
            first = TraceSample {
                loss_before_reminder: Some(first.loss),
                ..after
            };
        }
    }
    if snap(0) && first.weights.is_none() {
        first = sample(network, dataset, 0.0, true)?;
    }
    trace.push(first)?;

    let steps = (opts.duration_s / opts.eval_interval_s - 1e-9).ceil() as usize;
    let mut t = 0.0;
    for k in 1..=steps {
        let t_next = (k as f64 * opts.eval_interval_s).min(opts.duration_s);
        network.discharge(t_next - t)?;
        t = t_next;
        let due = reminder
            .as_ref()
            .filter(|p| t - last_reminder >= p.period_s - 1e-9);
        let s = match due {
            Some(p) => {
                let before = evaluate(network, dataset)?.0;
                apply_reminder(network, &p.map, t - last_reminder, &p.measurement, rng)?;
                last_reminder = t;
                TraceSample {
                    loss_before_reminder: Some(before),
                    ..sample(network, dataset, t, snap(k))?
                }
            }
            None => sample(network, dataset, t, snap(k))?,
        };
        trace.push(s)?;
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crossbar::{DifferentialSynapse, ReadErrorModel};
    use crate::data::Readout;
    use crate::device::DeviceParams;
    use crate::reminder::ReminderMap;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net(params: &DeviceParams) -> Network {
        let mut n = Network::new(&[2, 1], &[1.0], 0.1, false, params).unwrap();
        n.layers_mut()[0].set_synapse(0, 0, DifferentialSynapse::antisymmetric(-0.3));
        n.layers_mut()[0].set_synapse(1, 0, DifferentialSynapse::antisymmetric(0.05));
        n
    }

    fn data() -> Dataset {
        Dataset::new(vec![vec![1.0, 0.0], vec![-1.0, 0.5]], vec![vec![1.0], vec![-1.0]], Readout::Sign).unwrap()
    }

    #[test]
    fn ideal_devices_hold_their_loss() {
        let mut n = net(&DeviceParams::ideal());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let tr = simulate(&mut n, &data(), &DischargeOptions::new(600.0), None, &mut rng).unwrap();
        assert_eq!(tr.len(), 31);
        let l = tr.losses();
        assert!(l.iter().all(|x| *x == l[0]));
    }

    #[test]
    fn weights_shrink_and_keep_order() {
        let mut n = net(&DeviceParams::default());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let opts = DischargeOptions {
            snapshot_every: 1,
            ..DischargeOptions::new(3600.0)
        };
        let tr = simulate(&mut n, &data(), &opts, None, &mut rng).unwrap();
        let snaps: Vec<_> = tr.samples().iter().map(|s| s.weights.clone().unwrap()[0].clone()).collect();
        for pair in snaps.windows(2) {
            for (a, b) in pair[0].iter().zip(pair[1].iter()) {
                assert!(b.abs() <= a.abs());
            }
            assert!(pair[1][[0, 0]] > pair[1][[0, 1]]);
        }
        let last = tr.last().unwrap();
        assert_eq!(last.time, 3600.0);
        assert!(last.loss > tr.first().unwrap().loss);
    }

    #[test]
    fn partial_final_interval() {
        let mut n = net(&DeviceParams::default());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let tr = simulate(&mut n, &data(), &DischargeOptions::new(50.0), None, &mut rng).unwrap();
        assert_eq!(tr.times(), vec![0.0, 20.0, 40.0, 50.0]);
        assert!(simulate(&mut n, &data(), &DischargeOptions::new(0.0), None, &mut rng).is_err());
    }

    #[test]
    fn reminders_fire_on_schedule() {
        let p = DeviceParams::default();
        let mut n = net(&p);
        n.discharge(1200.0).unwrap();
        let policy = ReminderPolicy {
            map: ReminderMap::build(&p, 1.0, p.g0).unwrap(),
            period_s: 100.0,
            initial_elapsed_s: 1200.0,
            measurement: ReadErrorModel::off(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let tr = simulate(&mut n, &data(), &DischargeOptions::new(300.0), Some(&policy), &mut rng).unwrap();
        let fired: Vec<f64> = tr
            .samples()
            .iter()
            .filter(|s| s.loss_before_reminder.is_some())
            .map(|s| s.time)
            .collect();
        assert_eq!(fired, vec![0.0, 100.0, 200.0, 300.0]);
        let w = n.layers()[0].weight_at(0, 0);
        assert!((w - 0.6).abs() < 0.02, "restored weight {w}");
    }
}
