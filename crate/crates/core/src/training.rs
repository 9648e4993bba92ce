//! On-device Manhattan-Rule training.
//!
//! Each epoch runs every data point through the crossbars, backpropagates the
//! output error through reversed crossbar reads, sums the per-point weight
//! increments and finally applies one fixed-height pulse pair per synapse in
//! the direction of the summed increment.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::crossbar::{CrossbarLayer, ReadErrorModel};
use crate::data::Dataset;
use crate::error::{Result, SimError};
use crate::network::{mse_loss, tanh_prime, ForwardTrace, LayerTrace, Network};
use crate::trace::{ExperimentTrace, TraceKind, TraceSample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub eta0: f64,
    pub decay: f64,
    pub step_epochs: usize,
    /// Let devices self-discharge for `update_pulse_s` per update cycle.
    pub discharge_between_updates: bool,
    pub update_pulse_s: f64,
    pub noise: ReadErrorModel,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            eta0: 0.03,
            decay: 0.7,
            step_epochs: 20,
            discharge_between_updates: false,
            update_pulse_s: 0.1,
            noise: ReadErrorModel::off(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SimError::InvalidParameter(m.to_string()));
        if !(self.eta0.is_finite() && self.eta0 > 0.0) {
            return bad("eta0 must be > 0");
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return bad("decay must lie in (0, 1]");
        }
        if self.step_epochs == 0 {
            return bad("step_epochs must be ≥ 1");
        }
        if !(self.update_pulse_s.is_finite() && self.update_pulse_s >= 0.0) {
            return bad("update_pulse_s must be ≥ 0");
        }
        if !(self.noise.std.is_finite() && self.noise.std >= 0.0) {
            return bad("read-error std must be ≥ 0");
        }
        Ok(())
    }
}

/// Step-decay schedule `eta0 · decay^⌊(1 + epoch) / step_epochs⌋ / β`.
pub fn lr_schedule(epoch: usize, beta: f64, cfg: &TrainConfig) -> f64 {
    let steps = (1 + epoch) / cfg.step_epochs;
    cfg.eta0 * cfg.decay.powi(steps as i32) / beta
}

/// Per-point error terms and weight increments for one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerDeltas {
    pub delta: Vec<f64>,
    /// `n_out × n_in` increments `δ_i · x_j`.
    pub increments: Array2<f64>,
}

fn increments(delta: &[f64], layer: &LayerTrace, gamma: f64) -> Array2<f64> {
    Array2::from_shape_fn((delta.len(), layer.inputs.len()), |(i, j)| delta[i] * layer.inputs[j] / gamma)
}

/// Output-layer deltas `δ_i = (t_i − y_i) · tanh'(a_i)` with `y` rescaled by
/// `1/γ` and `tanh'` evaluated on `a/γ`.
pub fn output_deltas(targets: &[f64], trace: &ForwardTrace, gamma: f64) -> Result<LayerDeltas> {
    let last = trace
        .layers
        .last()
        .ok_or_else(|| SimError::InvalidParameter("empty forward trace".into()))?;
    if targets.len() != last.post.len() {
        return Err(SimError::DimensionMismatch {
            expected: last.post.len(),
            actual: targets.len(),
        });
    }
    let delta: Vec<f64> = targets
        .iter()
        .zip(&last.post)
        .zip(&last.pre)
        .map(|((t, y), &a)| (t - y / gamma) * tanh_prime(a, gamma))
        .collect();
    let increments = increments(&delta, last, gamma);
    Ok(LayerDeltas { delta, increments })
}

/// Deltas of hidden layer `layer_index`, backpropagated through a reversed
/// read of the downstream layer `layer_next`.
pub fn hidden_deltas<R: Rng + ?Sized>(
    delta_next: &[f64],
    layer_next: &CrossbarLayer,
    trace: &ForwardTrace,
    layer_index: usize,
    gamma: f64,
    noise: &ReadErrorModel,
    rng: &mut R,
) -> Result<LayerDeltas> {
    let here = trace
        .layers
        .get(layer_index)
        .ok_or_else(|| SimError::InvalidParameter(format!("trace has no layer {layer_index}")))?;
    let back = layer_next.transpose_read(delta_next, noise, rng)?;
    // Rows past this layer's outputs belong to the bias input.
    if back.len() < here.pre.len() {
        return Err(SimError::DimensionMismatch {
            expected: here.pre.len(),
            actual: back.len(),
        });
    }
    let delta: Vec<f64> = here
        .pre
        .iter()
        .zip(&back)
        .map(|(&a, b)| b * tanh_prime(a, gamma))
        .collect();
    let increments = increments(&delta, here, gamma);
    Ok(LayerDeltas { delta, increments })
}

/// Backpropagates one point; returns increments for every layer, input side
/// first.
pub fn point_increments<R: Rng + ?Sized>(
    network: &Network,
    targets: &[f64],
    trace: &ForwardTrace,
    noise: &ReadErrorModel,
    rng: &mut R,
) -> Result<Vec<Array2<f64>>> {
    let gamma = network.gamma();
    let layers = network.layers();
    let mut out = vec![Array2::zeros((0, 0)); layers.len()];
    let mut current = output_deltas(targets, trace, gamma)?;
    for l in (0..layers.len()).rev() {
        let next = if l > 0 {
            Some(hidden_deltas(&current.delta, &layers[l], trace, l - 1, gamma, noise, rng)?)
        } else {
            None
        };
        out[l] = std::mem::replace(&mut current.increments, Array2::zeros((0, 0)));
        if let Some(n) = next {
            current = n;
        }
    }
    Ok(out)
}

/// Sign with `sgn(0) = 0`.
pub fn sign_matrix(sums: &Array2<f64>) -> Array2<i8> {
    sums.mapv(|x| {
        if x > 0.0 {
            1
        } else if x < 0.0 {
            -1
        } else {
            0
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochSummary {
    /// Loss over the dataset before the update.
    pub loss: f64,
    pub accuracy: f64,
    pub signs: Vec<Array2<i8>>,
}

/// One full-batch Manhattan epoch. `etas` holds one learning rate per layer;
/// `discharge_s`, when given, is the self-discharge time that elapses during
/// the update cycle.
pub fn manhattan_step<R: Rng + ?Sized>(
    network: &mut Network,
    dataset: &Dataset,
    etas: &[f64],
    noise: &ReadErrorModel,
    discharge_s: Option<f64>,
    rng: &mut R,
) -> Result<EpochSummary> {
    if etas.len() != network.layers().len() {
        return Err(SimError::DimensionMismatch {
            expected: network.layers().len(),
            actual: etas.len(),
        });
    }
    let mut sums: Vec<Array2<f64>> = network
        .layers()
        .iter()
        .map(|l| Array2::zeros((l.n_out(), l.n_in())))
        .collect();
    let mut outputs = Vec::with_capacity(dataset.len());
    for (x, t) in dataset.iter() {
        let (y, trace) = network.infer(x, noise, rng)?;
        for (sum, inc) in sums.iter_mut().zip(point_increments(network, t, &trace, noise, rng)?) {
            *sum += &inc;
        }
        outputs.push(y);
    }
    let loss = mse_loss(&outputs, &dataset.targets)?;
    let accuracy = dataset.accuracy(&outputs);

    let signs: Vec<Array2<i8>> = sums.iter().map(sign_matrix).collect();
    for ((layer, s), &eta) in network.layers_mut().iter_mut().zip(&signs).zip(etas) {
        layer.apply_update(s, eta)?;
    }
    if let Some(dt) = discharge_s {
        network.discharge(dt)?;
    }
    Ok(EpochSummary { loss, accuracy, signs })
}

/// Noise-free loss and accuracy of the network on a dataset.
pub fn evaluate(network: &Network, dataset: &Dataset) -> Result<(f64, f64)> {
    let outputs = dataset
        .inputs
        .iter()
        .map(|x| network.predict(x))
        .collect::<Result<Vec<_>>>()?;
    Ok((mse_loss(&outputs, &dataset.targets)?, dataset.accuracy(&outputs)))
}

/// Trains for `cfg.epochs` epochs and records the pre-update loss and
/// accuracy of each epoch.
pub fn train<R: Rng + ?Sized>(
    network: &mut Network,
    dataset: &Dataset,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<ExperimentTrace> {
    cfg.validate()?;
    let mut trace = ExperimentTrace::new(TraceKind::Training);
    let discharge = cfg.discharge_between_updates.then_some(cfg.update_pulse_s);
    for epoch in 0..cfg.epochs {
        let etas: Vec<f64> = network
            .layers()
            .iter()
            .map(|l| lr_schedule(epoch, l.beta(), cfg))
            .collect();
        let summary = manhattan_step(network, dataset, &etas, &cfg.noise, discharge, rng)?;
        let mut sample = TraceSample::new(epoch as f64, summary.loss, summary.accuracy);
        sample.eta = Some(lr_schedule(epoch, 1.0, cfg));
        sample.model_time_s = Some((epoch + 1) as f64 * cfg.update_pulse_s);
        trace.push(sample)?;
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crossbar::DifferentialSynapse;
    use crate::data::Readout;
    use crate::device::DeviceParams;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn schedule_examples() {
        let cfg = TrainConfig::default();
        assert!((lr_schedule(0, 1.0, &cfg) - 0.03).abs() < 1e-15);
        assert!((lr_schedule(18, 1.0, &cfg) - 0.03).abs() < 1e-15);
        assert!((lr_schedule(19, 1.0, &cfg) - 0.021).abs() < 1e-15);
        assert!((lr_schedule(0, 2.0, &cfg) - 0.015).abs() < 1e-15);
        let etas: Vec<f64> = (0..200).map(|e| lr_schedule(e, 1.0, &cfg)).collect();
        assert!(etas.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn config_validation() {
        let ok = TrainConfig::default();
        assert!(ok.validate().is_ok());
        assert!(TrainConfig { eta0: 0.0, ..ok.clone() }.validate().is_err());
        assert!(TrainConfig { decay: 1.5, ..ok.clone() }.validate().is_err());
        assert!(TrainConfig { step_epochs: 0, ..ok }.validate().is_err());
    }

    fn trace_for(pre: Vec<f64>, post: Vec<f64>, inputs: Vec<f64>) -> ForwardTrace {
        ForwardTrace {
            layers: vec![LayerTrace { inputs, pre, post, saturated: false }],
        }
    }

    #[test]
    fn output_delta_examples() {
        let g = 0.1;
        let t = trace_for(vec![0.03], vec![activation_of(0.03)], vec![0.1]);
        let y = t.layers[0].post[0] / g;
        let d = output_deltas(&[y], &t, g).unwrap();
        assert_eq!(d.delta, vec![0.0]);
        assert_eq!(d.increments[[0, 0]], 0.0);

        let t = trace_for(vec![0.0], vec![0.0], vec![0.1, -0.05]);
        let d = output_deltas(&[0.5], &t, g).unwrap();
        assert_eq!(d.delta, vec![0.5]);
        assert_eq!(d.increments.row(0).to_vec(), vec![0.5, -0.25]);

        let t = trace_for(vec![5.0], vec![0.1], vec![0.1]);
        let d = output_deltas(&[-1.0], &t, g).unwrap();
        assert!(d.delta[0].abs() < 1e-15);

        assert!(output_deltas(&[0.0, 1.0], &t, g).is_err());
    }

    fn activation_of(a: f64) -> f64 {
        crate::network::activation(a, 0.1)
    }

    fn chain() -> Network {
        // 1 -> 1 -> 1 with weights 0.5 and -0.8, no bias.
        let p = DeviceParams::ideal();
        let mut net = Network::new(&[1, 1, 1], &[1.0, 1.0], 0.1, false, &p).unwrap();
        net.layers_mut()[0].set_synapse(0, 0, DifferentialSynapse::antisymmetric(-0.25));
        net.layers_mut()[1].set_synapse(0, 0, DifferentialSynapse::antisymmetric(0.4));
        net
    }

    #[test]
    fn hidden_delta_matches_hand_chain() {
        let net = chain();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let off = ReadErrorModel::off();
        let x = 0.6;
        let t = 0.2;
        let (_, trace) = net.infer(&[x], &off, &mut rng).unwrap();

        let (w1, w2) = (0.5f64, -0.8f64);
        let h = (w1 * x).tanh();
        let o = (w2 * h).tanh();
        let d2 = (t - o) * (1.0 - o * o);
        let d1 = d2 * w2 * (1.0 - h * h);

        let out = output_deltas(&[t], &trace, 0.1).unwrap();
        assert!((out.delta[0] - d2).abs() < 1e-12);
        assert!((out.increments[[0, 0]] - d2 * h).abs() < 1e-12);
        let hid = hidden_deltas(&out.delta, &net.layers()[1], &trace, 0, 0.1, &off, &mut rng).unwrap();
        assert!((hid.delta[0] - d1).abs() < 1e-12);
        assert!((hid.increments[[0, 0]] - d1 * x).abs() < 1e-12);

        let zero = hidden_deltas(&[0.0], &net.layers()[1], &trace, 0, 0.1, &off, &mut rng).unwrap();
        assert_eq!(zero.delta, vec![0.0]);
    }

    #[test]
    fn noisy_backprop_differs_between_calls() {
        let net = chain();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let noise = ReadErrorModel::on(0.0025);
        let (_, trace) = net.infer(&[0.6], &ReadErrorModel::off(), &mut rng).unwrap();
        let a = hidden_deltas(&[0.3], &net.layers()[1], &trace, 0, 0.1, &noise, &mut rng).unwrap();
        let b = hidden_deltas(&[0.3], &net.layers()[1], &trace, 0, 0.1, &noise, &mut rng).unwrap();
        assert_ne!(a.delta, b.delta);
    }

    fn tiny_dataset() -> Dataset {
        Dataset::new(vec![vec![0.5], vec![0.9]], vec![vec![1.0], vec![1.0]], Readout::Sign).unwrap()
    }

    #[test]
    fn uniform_increments_raise_weight_by_eta() {
        let mut net = Network::new(&[1, 1], &[1.0], 0.1, false, &DeviceParams::ideal()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let before = net.layers()[0].weight_at(0, 0);
        let s = manhattan_step(&mut net, &tiny_dataset(), &[0.03], &ReadErrorModel::off(), None, &mut rng).unwrap();
        assert_eq!(s.signs[0][[0, 0]], 1);
        assert!((net.layers()[0].weight_at(0, 0) - before - 0.03).abs() < 1e-12);
    }

    #[test]
    fn zero_eta_changes_nothing() {
        let mut net = Network::new(&[1, 1], &[1.0], 0.1, false, &DeviceParams::ideal()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        net.init_random(&mut rng, 0.2).unwrap();
        let snapshot = net.clone();
        let d = tiny_dataset();
        let a = manhattan_step(&mut net, &d, &[0.0], &ReadErrorModel::off(), None, &mut rng).unwrap();
        assert_eq!(net, snapshot);
        let b = manhattan_step(&mut net, &d, &[0.0], &ReadErrorModel::off(), None, &mut rng).unwrap();
        assert_eq!(a.loss, b.loss);
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let d = tiny_dataset();
        let run = |seed| {
            let mut net = Network::new(&[1, 2, 1], &[1.0, 1.0], 0.1, true, &DeviceParams::default()).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            net.init_random(&mut rng, 0.2).unwrap();
            let cfg = TrainConfig {
                epochs: 5,
                discharge_between_updates: true,
                ..TrainConfig::default()
            };
            train(&mut net, &d, &cfg, &mut rng).unwrap()
        };
        assert_eq!(run(4), run(4));
        assert_eq!(run(4).len(), 5);
    }
}
