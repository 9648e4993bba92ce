//! Differential-synapse crossbar layers.
//!
//! Physically, inputs drive the rows and each output column collects the
//! currents of a positive and a negative device. Algebraically the layer acts
//! as an `n_out × n_in` weight matrix `W = β (G⁺ − G⁻) / G0_ref`.

use std::io::{Read, Write};

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::device::{self, conductance, DeviceParams, DeviceState};
use crate::error::{Result, SimError};

/// Largest input voltage a crossbar row accepts.
pub const READ_WINDOW_V: f64 = 0.1;
const READ_WINDOW_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DifferentialSynapse {
    pub pos: DeviceState,
    pub neg: DeviceState,
}

impl DifferentialSynapse {
    pub fn new(pos: f64, neg: f64) -> Self {
        Self {
            pos: DeviceState::new(pos),
            neg: DeviceState::new(neg),
        }
    }

    /// Anti-symmetric pair with the positive device at `v`.
    pub fn antisymmetric(v: f64) -> Self {
        Self::new(v, -v)
    }
}

pub fn weight(syn: &DifferentialSynapse, params: &DeviceParams, beta: f64, g0_ref: f64) -> f64 {
    beta * (conductance(syn.pos, params) - conductance(syn.neg, params)) / g0_ref
}

/// Gaussian read error on every weight read.
///
/// `std` is expressed in units of the normalized conductance difference
/// `(G⁺ − G⁻)/G0_ref`, i.e. what one transimpedance channel measures; the
/// resulting weight error is `β · std`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReadErrorModel {
    pub std: f64,
    pub enabled: bool,
}

impl Default for ReadErrorModel {
    fn default() -> Self {
        Self {
            std: 0.0025,
            enabled: false,
        }
    }
}

impl ReadErrorModel {
    pub fn off() -> Self {
        Self::default()
    }

    pub fn on(std: f64) -> Self {
        Self { std, enabled: true }
    }

    pub fn is_active(&self) -> bool {
        self.enabled && self.std > 0.0
    }
}

/// Output of a forward read.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnRead {
    /// Output voltages after transimpedance conversion and subtraction.
    pub outputs: Vec<f64>,
    /// Whether any branch current exceeded the amplifier range.
    pub saturated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossbarLayer {
    n_in: usize,
    n_out: usize,
    /// Indexed `[input row, output column]`.
    synapses: Array2<DifferentialSynapse>,
    beta: f64,
    g0_ref: f64,
    params: DeviceParams,
}

impl CrossbarLayer {
    /// A layer with every device at its initial state and `G0_ref = g0`.
    pub fn new(n_in: usize, n_out: usize, beta: f64, params: DeviceParams) -> Result<Self> {
        let g0_ref = params.g0;
        Self::with_reference(n_in, n_out, beta, g0_ref, params)
    }

    pub fn with_reference(
        n_in: usize,
        n_out: usize,
        beta: f64,
        g0_ref: f64,
        params: DeviceParams,
    ) -> Result<Self> {
        if n_in == 0 || n_out == 0 {
            return Err(SimError::InvalidParameter("layer dimensions must be non-zero".into()));
        }
        if !(beta.is_finite() && beta >= 1.0) {
            return Err(SimError::InvalidParameter(format!("beta must be ≥ 1, got {beta}")));
        }
        if !(g0_ref.is_finite() && g0_ref > 0.0) {
            return Err(SimError::InvalidParameter("g0_ref must be > 0".into()));
        }
        params.validate()?;
        Ok(Self {
            n_in,
            n_out,
            synapses: Array2::default((n_in, n_out)),
            beta,
            g0_ref,
            params,
        })
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn g0_ref(&self) -> f64 {
        self.g0_ref
    }

    pub fn params(&self) -> &DeviceParams {
        &self.params
    }

    pub fn set_params(&mut self, params: DeviceParams) -> Result<()> {
        params.validate()?;
        self.params = params;
        Ok(())
    }

    /// Synapse connecting input `input` to output `output`.
    pub fn synapse(&self, input: usize, output: usize) -> &DifferentialSynapse {
        &self.synapses[[input, output]]
    }

    pub fn set_synapse(&mut self, input: usize, output: usize, syn: DifferentialSynapse) {
        let p = &self.params;
        self.synapses[[input, output]] = DifferentialSynapse {
            pos: device::program_to(syn.pos.v, p),
            neg: device::program_to(syn.neg.v, p),
        };
    }

    pub fn synapses(&self) -> impl Iterator<Item = ((usize, usize), &DifferentialSynapse)> {
        self.synapses.indexed_iter()
    }

    /// `W[output][input]` for one synapse.
    pub fn weight_at(&self, output: usize, input: usize) -> f64 {
        weight(&self.synapses[[input, output]], &self.params, self.beta, self.g0_ref)
    }

    /// Weight of a synapse whose devices sit at opposite bounds.
    pub fn max_weight(&self) -> f64 {
        let full = DifferentialSynapse::new(-self.params.v_max, self.params.v_max);
        weight(&full, &self.params, self.beta, self.g0_ref)
    }

    /// Noise-free `n_out × n_in` weight matrix.
    pub fn ideal_weights(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.n_out, self.n_in), |(o, i)| self.weight_at(o, i))
    }

    /// Weight matrix as seen by one read operation, with fresh read errors.
    pub fn read_weights<R: Rng + ?Sized>(&self, noise: &ReadErrorModel, rng: &mut R) -> Array2<f64> {
        let mut w = self.ideal_weights();
        if noise.is_active() {
            let dist = Normal::new(0.0, self.beta * noise.std).expect("finite read-error std");
            w.mapv_inplace(|x| x + dist.sample(rng));
        }
        w
    }

    /// Amplifier range needed for the worst-case column current.
    pub fn current_limit(&self) -> f64 {
        let most_conductive = DeviceState::new(-self.params.v_max);
        self.n_in as f64 * READ_WINDOW_V * conductance(most_conductive, &self.params)
    }

    fn check_inputs(&self, inputs: &[f64]) -> Result<()> {
        if inputs.len() != self.n_in {
            return Err(SimError::DimensionMismatch {
                expected: self.n_in,
                actual: inputs.len(),
            });
        }
        if let Some(&value) = inputs
            .iter()
            .find(|v| !(v.abs() <= READ_WINDOW_V + READ_WINDOW_SLACK))
        {
            return Err(SimError::InputOutOfRange {
                value,
                limit: READ_WINDOW_V,
            });
        }
        Ok(())
    }

    /// Noise-free analog read: Kirchhoff column currents `I± = Σ V_j G±`,
    /// converted with gain `β / G0_ref` and subtracted.
    pub fn forward_read(&self, inputs: &[f64]) -> Result<ColumnRead> {
        self.check_inputs(inputs)?;
        let limit = self.current_limit();
        let gain = self.beta / self.g0_ref;
        let mut saturated = false;
        let outputs = (0..self.n_out)
            .map(|o| {
                let (mut i_pos, mut i_neg) = (0.0, 0.0);
                for (j, &v) in inputs.iter().enumerate() {
                    let syn = &self.synapses[[j, o]];
                    i_pos += v * conductance(syn.pos, &self.params);
                    i_neg += v * conductance(syn.neg, &self.params);
                }
                saturated |= i_pos.abs() > limit || i_neg.abs() > limit;
                gain * (i_pos - i_neg)
            })
            .collect();
        Ok(ColumnRead { outputs, saturated })
    }

    /// Forward read through the read-error model. Falls back to the exact
    /// current summation when noise is off.
    pub fn forward_read_noisy<R: Rng + ?Sized>(
        &self,
        inputs: &[f64],
        noise: &ReadErrorModel,
        rng: &mut R,
    ) -> Result<ColumnRead> {
        if !noise.is_active() {
            return self.forward_read(inputs);
        }
        self.check_inputs(inputs)?;
        let w = self.read_weights(noise, rng);
        let outputs = w.dot(&Array1::from(inputs.to_vec())).to_vec();
        let saturated = self.forward_read(inputs)?.saturated;
        Ok(ColumnRead { outputs, saturated })
    }

    /// Reversed read used in backpropagation: `δ · W` where `W` is the
    /// effective (β-scaled) weight matrix.
    pub fn transpose_read<R: Rng + ?Sized>(
        &self,
        deltas: &[f64],
        noise: &ReadErrorModel,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        if deltas.len() != self.n_out {
            return Err(SimError::DimensionMismatch {
                expected: self.n_out,
                actual: deltas.len(),
            });
        }
        let w = self.read_weights(noise, rng);
        Ok(Array1::from(deltas.to_vec()).dot(&w).to_vec())
    }

    /// Random anti-symmetric initialization with normally distributed
    /// programming pulses, scaled by `1/β` before clamping.
    pub fn init_random<R: Rng + ?Sized>(&mut self, rng: &mut R, init_std_v: f64) -> Result<()> {
        let dist = Normal::new(0.0, init_std_v)
            .ok()
            .filter(|_| init_std_v > 0.0)
            .ok_or_else(|| SimError::InvalidParameter(format!("init std must be > 0, got {init_std_v}")))?;
        for syn in self.synapses.iter_mut() {
            let draw: f64 = dist.sample(rng);
            let v = device::program_to(draw / self.beta, &self.params).v;
            *syn = DifferentialSynapse::antisymmetric(v);
        }
        Ok(())
    }

    /// Gate shift per device that moves the weight by `eta` away from bounds.
    pub fn pulse_height(&self, eta: f64) -> f64 {
        eta * self.g0_ref / (2.0 * self.beta * self.params.slope * self.params.g0)
    }

    /// Manhattan update: every synapse with sign `s ≠ 0` receives a pulse
    /// pair moving its weight by `s · eta`. `signs` is `n_out × n_in`.
    pub fn apply_update(&mut self, signs: &Array2<i8>, eta: f64) -> Result<()> {
        if signs.dim() != (self.n_out, self.n_in) {
            return Err(SimError::DimensionMismatch {
                expected: self.n_out * self.n_in,
                actual: signs.len(),
            });
        }
        if !(eta.is_finite() && eta >= 0.0) {
            return Err(SimError::InvalidParameter(format!("eta must be ≥ 0, got {eta}")));
        }
        let dv = self.pulse_height(eta);
        for ((o, i), &s) in signs.indexed_iter() {
            if s != 0 {
                self.shift_weight_by_gate(i, o, f64::from(s.signum()) * dv);
            }
        }
        Ok(())
    }

    /// Moves a synapse's weight by `delta_w` (clamped at the bounds).
    pub fn shift_weight(&mut self, output: usize, input: usize, delta_w: f64) {
        let dv = self.pulse_height(delta_w);
        self.shift_weight_by_gate(input, output, dv);
    }

    fn shift_weight_by_gate(&mut self, input: usize, output: usize, dv: f64) {
        let p = &self.params;
        let syn = &mut self.synapses[[input, output]];
        syn.pos = device::apply_pulse(syn.pos, -dv, p);
        syn.neg = device::apply_pulse(syn.neg, dv, p);
    }

    /// Open-circuit self-discharge of every device.
    pub fn discharge(&mut self, dt: f64) -> Result<()> {
        for syn in self.synapses.iter_mut() {
            syn.pos = device::step_discharge(syn.pos, &self.params, dt)?;
            syn.neg = device::step_discharge(syn.neg, &self.params, dt)?;
        }
        Ok(())
    }

    /// Writes `row,col,pos_v,neg_v` with full round-trip precision.
    pub fn write_states_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["row", "col", "pos_v", "neg_v"])?;
        for ((r, c), syn) in self.synapses.indexed_iter() {
            w.write_record([
                r.to_string(),
                c.to_string(),
                format!("{:.17e}", syn.pos.v),
                format!("{:.17e}", syn.neg.v),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Loads device states written by [`Self::write_states_csv`]. Every
    /// synapse must appear exactly once.
    pub fn read_states_csv<R: Read>(&mut self, input: R) -> Result<()> {
        #[derive(Deserialize)]
        struct Row {
            row: usize,
            col: usize,
            pos_v: f64,
            neg_v: f64,
        }
        let mut seen = Array2::from_elem((self.n_in, self.n_out), false);
        let mut next = self.synapses.clone();
        for rec in csv::Reader::from_reader(input).deserialize() {
            let r: Row = rec?;
            if r.row >= self.n_in || r.col >= self.n_out {
                return Err(SimError::InvalidParameter(format!(
                    "snapshot entry ({}, {}) outside a {}×{} layer",
                    r.row, r.col, self.n_in, self.n_out
                )));
            }
            if std::mem::replace(&mut seen[[r.row, r.col]], true) {
                return Err(SimError::InvalidParameter(format!("duplicate snapshot entry ({}, {})", r.row, r.col)));
            }
            let bound = self.params.v_max;
            if r.pos_v.abs() > bound || r.neg_v.abs() > bound {
                return Err(SimError::InvalidParameter(format!(
                    "snapshot state at ({}, {}) exceeds ±{bound} V",
                    r.row, r.col
                )));
            }
            next[[r.row, r.col]] = DifferentialSynapse::new(r.pos_v, r.neg_v);
        }
        if seen.iter().any(|s| !s) {
            return Err(SimError::InvalidParameter("snapshot does not cover every synapse".into()));
        }
        self.synapses = next;
        Ok(())
    }
}
