//! Layered analog inference with γ-scaled voltages and scaled-tanh neurons.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::crossbar::{CrossbarLayer, ReadErrorModel, READ_WINDOW_V};
use crate::device::DeviceParams;
use crate::error::{Result, SimError};

/// Value of the constant bias input in dimensionless units.
pub const BIAS_INPUT: f64 = -1.0;
const RAW_INPUT_SLACK: f64 = 1e-12;

/// `γ · tanh(x / γ)`.
pub fn activation(x: f64, gamma: f64) -> f64 {
    gamma * (x / gamma).tanh()
}

/// Derivative of tanh evaluated on a γ-normalized pre-activation.
pub fn tanh_prime(a: f64, gamma: f64) -> f64 {
    let t = (a / gamma).tanh();
    1.0 - t * t
}

/// Voltages recorded at one layer during a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    /// Row voltages including the bias row, if any.
    pub inputs: Vec<f64>,
    /// Column voltages before the activation.
    pub pre: Vec<f64>,
    /// Column voltages after the activation.
    pub post: Vec<f64>,
    pub saturated: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ForwardTrace {
    pub layers: Vec<LayerTrace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    layers: Vec<CrossbarLayer>,
    gamma: f64,
    /// Each layer receives one extra constant input of `BIAS_INPUT`.
    bias: bool,
}

impl Network {
    pub fn from_layers(layers: Vec<CrossbarLayer>, gamma: f64, bias: bool) -> Result<Self> {
        if layers.is_empty() {
            return Err(SimError::InvalidParameter("a network needs at least one layer".into()));
        }
        if !(gamma > 0.0 && gamma <= READ_WINDOW_V + 1e-15) {
            return Err(SimError::InvalidParameter(format!(
                "gamma must lie in (0, {READ_WINDOW_V}] V, got {gamma}"
            )));
        }
        let extra = usize::from(bias);
        for pair in layers.windows(2) {
            let expected = pair[0].n_out() + extra;
            if pair[1].n_in() != expected {
                return Err(SimError::DimensionMismatch {
                    expected,
                    actual: pair[1].n_in(),
                });
            }
        }
        Ok(Self { layers, gamma, bias })
    }

    /// Fully connected network with neuron counts `sizes` (inputs first) and
    /// one β per layer.
    pub fn new(sizes: &[usize], betas: &[f64], gamma: f64, bias: bool, params: &DeviceParams) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(SimError::InvalidParameter("need at least input and output sizes".into()));
        }
        if betas.len() != sizes.len() - 1 {
            return Err(SimError::DimensionMismatch {
                expected: sizes.len() - 1,
                actual: betas.len(),
            });
        }
        let layers = sizes
            .windows(2)
            .zip(betas)
            .map(|(w, &beta)| CrossbarLayer::new(w[0] + usize::from(bias), w[1], beta, params.clone()))
            .collect::<Result<Vec<_>>>()?;
        Self::from_layers(layers, gamma, bias)
    }

    pub fn layers(&self) -> &[CrossbarLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [CrossbarLayer] {
        &mut self.layers
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn has_bias(&self) -> bool {
        self.bias
    }

    pub fn n_inputs(&self) -> usize {
        self.layers[0].n_in() - usize::from(self.bias)
    }

    pub fn n_outputs(&self) -> usize {
        self.layers[self.layers.len() - 1].n_out()
    }

    pub fn synapse_count(&self) -> usize {
        self.layers.iter().map(|l| l.n_in() * l.n_out()).sum()
    }

    pub fn init_random<R: Rng + ?Sized>(&mut self, rng: &mut R, init_std_v: f64) -> Result<()> {
        self.layers.iter_mut().try_for_each(|l| l.init_random(rng, init_std_v))
    }

    /// Applies the same device parameters to every layer.
    pub fn set_device_params(&mut self, params: &DeviceParams) -> Result<()> {
        self.layers.iter_mut().try_for_each(|l| l.set_params(params.clone()))
    }

    pub fn discharge(&mut self, dt: f64) -> Result<()> {
        self.layers.iter_mut().try_for_each(|l| l.discharge(dt))
    }

    fn row_voltages(&self, activations: &[f64]) -> Vec<f64> {
        let mut v = activations.to_vec();
        if self.bias {
            v.push(BIAS_INPUT * self.gamma);
        }
        v
    }

    /// Forward pass. Raw inputs must lie in `[-1, 1]`; outputs lie in
    /// `(-1, 1)`.
    pub fn infer<R: Rng + ?Sized>(
        &self,
        raw_inputs: &[f64],
        noise: &ReadErrorModel,
        rng: &mut R,
    ) -> Result<(Vec<f64>, ForwardTrace)> {
        if raw_inputs.len() != self.n_inputs() {
            return Err(SimError::DimensionMismatch {
                expected: self.n_inputs(),
                actual: raw_inputs.len(),
            });
        }
        if let Some(&bad) = raw_inputs.iter().find(|x| !(x.abs() <= 1.0 + RAW_INPUT_SLACK)) {
            return Err(SimError::InvalidParameter(format!("raw input {bad} outside [-1, 1]")));
        }
        let g = self.gamma;
        let mut act: Vec<f64> = raw_inputs.iter().map(|x| x * g).collect();
        let mut trace = ForwardTrace::default();
        for layer in &self.layers {
            let inputs = self.row_voltages(&act);
            let read = layer.forward_read_noisy(&inputs, noise, rng)?;
            let post: Vec<f64> = read.outputs.iter().map(|&a| activation(a, g)).collect();
            trace.layers.push(LayerTrace {
                inputs,
                pre: read.outputs,
                post: post.clone(),
                saturated: read.saturated,
            });
            act = post;
        }
        Ok((act.iter().map(|y| y / g).collect(), trace))
    }

    /// Noise-free forward pass returning only the outputs.
    pub fn predict(&self, raw_inputs: &[f64]) -> Result<Vec<f64>> {
        let mut no_rng = rand::rngs::mock::StepRng::new(0, 0);
        Ok(self.infer(raw_inputs, &ReadErrorModel::off(), &mut no_rng)?.0)
    }
}

/// Mean squared error over every output of every data point.
pub fn mse_loss(outputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<f64> {
    if outputs.len() != targets.len() {
        return Err(SimError::DimensionMismatch {
            expected: targets.len(),
            actual: outputs.len(),
        });
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (y, t) in outputs.iter().zip(targets) {
        if y.len() != t.len() {
            return Err(SimError::DimensionMismatch {
                expected: t.len(),
                actual: y.len(),
            });
        }
        sum += y.iter().zip(t).map(|(y, t)| (t - y) * (t - y)).sum::<f64>();
        count += y.len();
    }
    if count == 0 {
        return Err(SimError::InvalidParameter("empty loss evaluation".into()));
    }
    Ok(sum / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crossbar::DifferentialSynapse;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single(w_pos_v: f64) -> Network {
        let mut net = Network::new(&[1, 1], &[1.0], 0.1, false, &DeviceParams::ideal()).unwrap();
        net.layers_mut()[0].set_synapse(0, 0, DifferentialSynapse::antisymmetric(w_pos_v));
        net
    }

    #[test]
    fn activation_values() {
        assert_eq!(activation(0.0, 0.1), 0.0);
        assert!((activation(1e6, 0.1) - 0.1).abs() < 1e-15);
        assert!((activation(0.1, 0.1) - 0.0761594155955765).abs() < 1e-15);
        assert_eq!(activation(-0.05, 0.1), -activation(0.05, 0.1));
    }

    #[test]
    fn zero_weights_give_zero_outputs() {
        let net = Network::new(&[3, 2], &[1.0], 0.1, false, &DeviceParams::ideal()).unwrap();
        assert_eq!(net.predict(&[1.0, -1.0, 0.5]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn unit_weight_passes_through_tanh() {
        let net = single(-0.5);
        let out = net.predict(&[1.0]).unwrap();
        assert!((out[0] - 1f64.tanh()).abs() < 1e-12);
    }

    #[test]
    fn trace_records_every_layer() {
        let mut net = Network::new(&[2, 3, 1], &[1.0, 1.0], 0.1, true, &DeviceParams::ideal()).unwrap();
        let mut rng = rand::rngs::mock::StepRng::new(1, 1);
        net.init_random(&mut ChaCha8Rng::seed_from_u64(1), 0.2).unwrap();
        let (out, trace) = net.infer(&[0.3, -0.4], &ReadErrorModel::off(), &mut rng).unwrap();
        assert_eq!(trace.layers.len(), 2);
        for (a, b) in trace.layers[0].inputs.iter().zip([0.03, -0.04, -0.1]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(trace.layers[1].inputs.len(), 4);
        assert_eq!(trace.layers[1].inputs[..3], trace.layers[0].post[..]);
        assert!((out[0] - trace.layers[1].post[0] / 0.1).abs() < 1e-15);
    }

    #[test]
    fn rejects_mismatched_shapes() {
        let p = DeviceParams::ideal();
        assert!(Network::new(&[2, 3, 1], &[1.0], 0.1, false, &p).is_err());
        assert!(Network::new(&[2, 1], &[1.0], 0.2, false, &p).is_err());
        let a = CrossbarLayer::new(2, 3, 1.0, p.clone()).unwrap();
        let b = CrossbarLayer::new(3, 1, 1.0, p).unwrap();
        assert!(Network::from_layers(vec![a.clone(), b.clone()], 0.1, true).is_err());
        let net = Network::from_layers(vec![a, b], 0.1, false).unwrap();
        assert!(net.predict(&[0.1]).is_err());
        assert!(net.predict(&[0.1, 1.5]).is_err());
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse_loss(&[vec![0.3, 0.2]], &[vec![0.3, 0.2]]).unwrap(), 0.0);
        assert_eq!(mse_loss(&[vec![0.0]], &[vec![1.0]]).unwrap(), 1.0);
        assert_eq!(mse_loss(&[vec![0.0, 0.0]], &[vec![1.0, -1.0]]).unwrap(), 1.0);
        assert!(mse_loss(&[vec![0.0]], &[vec![1.0, 2.0]]).is_err());
        assert!(mse_loss(&[vec![0.0]], &[]).is_err());
    }
}
