//! Reduced single-device model.
//!
//! A device is described by one scalar, the effective gate potential `v`
//! relative to its initial open-circuit potential. Channel conductance is an
//! affine, decreasing function of `v` (optionally shaped by a tabulated
//! mobility correction). In open circuit the state relaxes towards zero under
//! a symmetric Butler-Volmer shuttle reaction,
//!
//! ```text
//! dv/dt = -oxygen_frac * k_shuttle * sinh(v / v_tafel)
//! ```
//!
//! integrated with fixed-step RK4.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// Upper bound on the internal RK4 step used by [`step_discharge`].
pub const MAX_SUBSTEP_S: f64 = 1.0;

/// Calibrated shuttle rate prefactor (1/s) at full ambient oxygen.
pub const CALIBRATED_K_SHUTTLE: f64 = 2.024172e-7;
/// Calibrated exponential sensitivity (V) of the shuttle reaction.
pub const CALIBRATED_V_TAFEL: f64 = 0.056634;

/// Piecewise-linear correction factor over gate state, multiplied onto the
/// ideal affine conductance. Values outside the table are held constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobilityCorrection {
    /// `(v, factor)` nodes, ascending in `v`.
    pub points: Vec<(f64, f64)>,
}

impl MobilityCorrection {
    pub fn new(mut points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(SimError::InvalidParameter(
                "mobility correction needs at least one node".into(),
            ));
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        if points.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(SimError::InvalidParameter(
                "duplicate gate-state node in mobility correction".into(),
            ));
        }
        if points.iter().any(|&(v, m)| !v.is_finite() || !(m.is_finite() && m > 0.0)) {
            return Err(SimError::InvalidParameter(
                "mobility correction factors must be finite and positive".into(),
            ));
        }
        Ok(Self { points })
    }

    pub fn factor(&self, v: f64) -> f64 {
        let pts = &self.points;
        let (first, last) = (pts[0], pts[pts.len() - 1]);
        if v <= first.0 {
            return first.1;
        }
        if v >= last.0 {
            return last.1;
        }
        let idx = pts.partition_point(|p| p.0 <= v);
        let (v0, m0) = pts[idx - 1];
        let (v1, m1) = pts[idx];
        m0 + (m1 - m0) * (v - v0) / (v1 - v0)
    }
}

/// Physical parameters shared by every device of a layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeviceParams {
    /// Reference channel conductance at the initial state (S).
    pub g0: f64,
    /// Gate-state bound (V).
    pub v_max: f64,
    /// Linear conductance sensitivity (1/V).
    pub slope: f64,
    /// Shuttle-reaction rate prefactor at full ambient oxygen (1/s).
    pub k_shuttle: f64,
    /// Exponential sensitivity of the shuttle reaction (V).
    pub v_tafel: f64,
    /// Fraction of ambient oxygen, scales `k_shuttle`.
    pub oxygen_frac: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mobility_correction: Option<MobilityCorrection>,
}

impl Default for DeviceParams {
    fn default() -> Self {
        Self {
            g0: 1.0e-3,
            v_max: 0.5,
            slope: 1.0,
            k_shuttle: CALIBRATED_K_SHUTTLE,
            v_tafel: CALIBRATED_V_TAFEL,
            oxygen_frac: 1.0,
            mobility_correction: None,
        }
    }
}

impl DeviceParams {
    /// Ideal devices: no self-discharge.
    pub fn ideal() -> Self {
        Self {
            k_shuttle: 0.0,
            ..Self::default()
        }
    }

    pub fn with_oxygen(mut self, oxygen_frac: f64) -> Self {
        self.oxygen_frac = oxygen_frac;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(SimError::InvalidParameter(what.to_string()));
        if !(self.g0.is_finite() && self.g0 > 0.0) {
            return bad("g0 must be > 0");
        }
        if !(self.v_max.is_finite() && self.v_max > 0.0) {
            return bad("v_max must be > 0");
        }
        if !self.slope.is_finite() {
            return bad("slope must be finite");
        }
        // Conductance has to stay positive across the whole state range.
        if self.slope * self.v_max >= 1.0 || self.slope <= 0.0 {
            return bad("slope must satisfy 0 < slope·v_max < 1");
        }
        if !(self.k_shuttle.is_finite() && self.k_shuttle >= 0.0) {
            return bad("k_shuttle must be ≥ 0");
        }
        if !(self.v_tafel.is_finite() && self.v_tafel > 0.0) {
            return bad("v_tafel must be > 0");
        }
        if !(0.0..=1.0).contains(&self.oxygen_frac) {
            return bad("oxygen_frac must lie in [0, 1]");
        }
        Ok(())
    }

    /// Effective decay prefactor `oxygen_frac · k_shuttle`.
    pub fn decay_rate(&self) -> f64 {
        self.oxygen_frac * self.k_shuttle
    }

    /// Instantaneous `dv/dt` at gate state `v`.
    pub fn discharge_rate(&self, v: f64) -> f64 {
        -self.decay_rate() * (v / self.v_tafel).sinh()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("device params serialize")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let params: Self = toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        params.validate()?;
        Ok(params)
    }
}

/// Effective gate state of one device (V vs. initial OCP).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DeviceState {
    pub v: f64,
}

impl DeviceState {
    pub const OCP: DeviceState = DeviceState { v: 0.0 };

    pub fn new(v: f64) -> Self {
        Self { v }
    }
}

pub fn conductance(state: DeviceState, params: &DeviceParams) -> f64 {
    let ideal = params.g0 * (1.0 - params.slope * state.v);
    match &params.mobility_correction {
        Some(m) => ideal * m.factor(state.v),
        None => ideal,
    }
}

/// Long initialization pulse: the device settles at the (clamped) target.
pub fn program_to(target_v: f64, params: &DeviceParams) -> DeviceState {
    DeviceState::new(target_v.clamp(-params.v_max, params.v_max))
}

/// Fixed-height update pulse shifting the state by `delta_v`.
pub fn apply_pulse(state: DeviceState, delta_v: f64, params: &DeviceParams) -> DeviceState {
    DeviceState::new((state.v + delta_v).clamp(-params.v_max, params.v_max))
}

/// Advances a device through `dt` seconds of open-circuit self-discharge.
pub fn step_discharge(state: DeviceState, params: &DeviceParams, dt: f64) -> Result<DeviceState> {
    if !dt.is_finite() || dt < 0.0 {
        return Err(SimError::InvalidParameter(format!(
            "discharge interval must be finite and non-negative, got {dt}"
        )));
    }
    Ok(DeviceState::new(integrate_discharge(
        state.v,
        params.decay_rate(),
        params.v_tafel,
        dt,
        MAX_SUBSTEP_S,
    )))
}

/// Fixed-step RK4 for `dv/dt = -rate·sinh(v/v_tafel)` with substeps no longer
/// than `max_substep`.
pub fn integrate_discharge(v0: f64, rate: f64, v_tafel: f64, dt: f64, max_substep: f64) -> f64 {
    if v0 == 0.0 || rate == 0.0 || dt == 0.0 {
        return v0;
    }
    let steps = (dt / max_substep).ceil().max(1.0) as usize;
    let h = dt / steps as f64;
    let f = |v: f64| -rate * (v / v_tafel).sinh();
    let mut v = v0;
    for _ in 0..steps {
        let k1 = f(v);
        let k2 = f(v + 0.5 * h * k1);
        let k3 = f(v + 0.5 * h * k2);
        let k4 = f(v + h * k3);
        let next = v + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        // The exact flow never crosses zero; neither may the integrator.
        v = if next.signum() != v0.signum() { 0.0 } else { next };
    }
    v
}

/// One observed decay used for calibration: a device programmed to `v0` loses
/// `decay_v ± tolerance_v` of gate state within `duration_s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayTarget {
    pub v0: f64,
    pub duration_s: f64,
    pub decay_v: f64,
    pub tolerance_v: f64,
}

impl DecayTarget {
    pub const fn new(v0: f64, duration_s: f64, decay_v: f64, tolerance_v: f64) -> Self {
        Self {
            v0,
            duration_s,
            decay_v,
            tolerance_v,
        }
    }
}

/// Decay observations the default parameters are fitted to: a fully
/// programmed device loses about 12 % of the ±0.5 V range in ten minutes, a
/// half-programmed one barely moves, and a fully programmed synapse loses
/// about 0.63 of its weight over 20 000 s (0.315 V per device).
pub fn reference_targets() -> Vec<DecayTarget> {
    vec![
        DecayTarget::new(0.5, 600.0, 0.12, 0.02),
        DecayTarget::new(0.25, 600.0, 0.0, 0.02),
        DecayTarget::new(0.5, 20_000.0, 0.315, 0.06),
    ]
}

pub fn simulated_decay(target: &DecayTarget, params: &DeviceParams) -> f64 {
    let end = integrate_discharge(
        target.v0,
        params.decay_rate(),
        params.v_tafel,
        target.duration_s,
        MAX_SUBSTEP_S,
    );
    (target.v0 - end).abs()
}

/// Exact solution of the discharge ODE: `tanh(v/2a)` decays as
/// `exp(-k·t/a)`.
pub fn closed_form_decay(target: &DecayTarget, k: f64, v_tafel: f64) -> f64 {
    let a = v_tafel;
    let x = (target.v0.abs() / (2.0 * a)).tanh() * (-k * target.duration_s / a).exp();
    target.v0.abs() - 2.0 * a * x.atanh()
}

fn calibration_cost(targets: &[DecayTarget], k: f64, v_tafel: f64) -> f64 {
    targets
        .iter()
        .map(|t| {
            let r = (closed_form_decay(t, k, v_tafel) - t.decay_v) / t.tolerance_v;
            r * r
        })
        .sum()
}

/// Fits `(k_shuttle, v_tafel)` to decay targets measured at full oxygen.
///
/// A log-spaced grid search is followed by a shrinking pattern search around
/// the best node, both on the closed-form trajectory. The winner is then
/// re-simulated with the RK4 integrator and must reproduce every target
/// within its tolerance.
pub fn calibrate_discharge(targets: &[DecayTarget], base: &DeviceParams) -> Result<DeviceParams> {
    if targets.is_empty() {
        return Err(SimError::Calibration("no decay targets given".into()));
    }
    for t in targets {
        if !(t.v0.is_finite() && t.v0.abs() <= base.v_max && t.v0 != 0.0) {
            return Err(SimError::Calibration(format!("target v0 {} out of range", t.v0)));
        }
        if !(t.duration_s > 0.0 && t.tolerance_v > 0.0 && t.decay_v >= 0.0) {
            return Err(SimError::Calibration("target durations, tolerances and decays must be positive".into()));
        }
    }
    // The model family decays faster from larger states: reject targets that
    // demand the opposite.
    for a in targets {
        for b in targets {
            if a.v0.abs() > b.v0.abs()
                && a.duration_s >= b.duration_s
                && b.decay_v - b.tolerance_v > a.decay_v + a.tolerance_v
            {
                return Err(SimError::Calibration(format!(
                    "targets contradict monotone decay: {:.3} V decays more than {:.3} V",
                    b.v0, a.v0
                )));
            }
        }
    }

    let mut params = DeviceParams {
        oxygen_frac: 1.0,
        ..base.clone()
    };

    if targets.iter().all(|t| t.decay_v <= t.tolerance_v) {
        params.k_shuttle = 0.0;
        return check_fit(targets, params);
    }

    let eval = |log_k: f64, v_tafel: f64| calibration_cost(targets, 10f64.powf(log_k), v_tafel);

    let (log_k_lo, log_k_hi) = (-12.0, -1.0);
    let (vt_lo, vt_hi) = (0.01f64, 0.5f64);
    let n = 48;
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for i in 0..n {
        let log_k = log_k_lo + (log_k_hi - log_k_lo) * i as f64 / (n - 1) as f64;
        for j in 0..n {
            let v_tafel = vt_lo * (vt_hi / vt_lo).powf(j as f64 / (n - 1) as f64);
            let c = eval(log_k, v_tafel);
            if c < best.0 {
                best = (c, log_k, v_tafel);
            }
        }
    }

    let (mut cost, mut log_k, mut v_tafel) = best;
    let mut step_k = (log_k_hi - log_k_lo) / (n - 1) as f64;
    let mut step_vt = ((vt_hi / vt_lo).ln() / (n - 1) as f64).exp_m1() * v_tafel;
    while step_k > 1e-9 {
        let mut improved = false;
        for (dk, dv) in [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0), (1.0, 1.0), (-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0)] {
            let k = log_k + dk * step_k;
            let vt = v_tafel + dv * step_vt;
            if vt <= 0.0 {
                continue;
            }
            let c = eval(k, vt);
            if c < cost {
                (cost, log_k, v_tafel) = (c, k, vt);
                improved = true;
            }
        }
        if !improved {
            step_k *= 0.5;
            step_vt *= 0.5;
        }
    }

    params.k_shuttle = 10f64.powf(log_k);
    params.v_tafel = v_tafel;
    check_fit(targets, params)
}

fn check_fit(targets: &[DecayTarget], params: DeviceParams) -> Result<DeviceParams> {
    for t in targets {
        let got = simulated_decay(t, &params);
        if (got - t.decay_v).abs() > t.tolerance_v {
            return Err(SimError::Calibration(format!(
                "best fit decays {got:.4} V from {} V in {} s, target {} ± {} V",
                t.v0, t.duration_s, t.decay_v, t.tolerance_v
            )));
        }
    }
    Ok(DeviceParams {
        oxygen_frac: 1.0,
        ..params
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> DeviceParams {
        DeviceParams::default()
    }

    #[test]
    fn conductance_follows_affine_map() {
        let p = params();
        assert_eq!(conductance(DeviceState::OCP, &p), p.g0);
        assert!((conductance(DeviceState::new(0.5), &p) - 0.5 * p.g0).abs() < 1e-15);
        assert!((conductance(DeviceState::new(-0.5), &p) - 1.5 * p.g0).abs() < 1e-15);
    }

    #[test]
    fn mobility_correction_scales_conductance() {
        let mut p = params();
        p.mobility_correction = Some(MobilityCorrection::new(vec![(-0.5, 0.8), (0.5, 1.2)]).unwrap());
        let g = conductance(DeviceState::new(0.25), &p);
        assert!((g - p.g0 * 0.75 * 1.1).abs() < 1e-15);
        // held constant past the table ends
        let m = p.mobility_correction.as_ref().unwrap();
        assert_eq!(m.factor(2.0), 1.2);
        assert!(MobilityCorrection::new(vec![(0.0, 1.0), (0.0, 2.0)]).is_err());
        assert!(MobilityCorrection::new(vec![]).is_err());
    }

    #[test]
    fn programming_clamps_to_range() {
        let p = params();
        assert_eq!(program_to(0.3, &p).v, 0.3);
        assert_eq!(program_to(0.9, &p).v, 0.5);
        assert_eq!(program_to(-0.9, &p).v, -0.5);
        let s = program_to(0.3, &p);
        assert_eq!(program_to(s.v, &p), s);
    }

    #[test]
    fn pulses_shift_and_clamp() {
        let p = params();
        assert!((apply_pulse(DeviceState::new(0.1), -0.05, &p).v - 0.05).abs() < 1e-15);
        assert_eq!(apply_pulse(DeviceState::new(0.48), 0.05, &p).v, 0.5);
        let there = apply_pulse(DeviceState::new(0.2), 0.03, &p);
        let back = apply_pulse(there, -0.03, &p);
        assert!((back.v - 0.2).abs() < 1e-15);
    }

    #[test]
    fn ocp_is_a_fixed_point() {
        let p = params();
        for dt in [0.0, 0.1, 1.0, 600.0, 36_000.0] {
            assert_eq!(step_discharge(DeviceState::OCP, &p, dt).unwrap().v, 0.0);
        }
    }

    #[test]
    fn rejects_bad_intervals() {
        let p = params();
        assert!(step_discharge(DeviceState::new(0.1), &p, f64::NAN).is_err());
        assert!(step_discharge(DeviceState::new(0.1), &p, f64::INFINITY).is_err());
        assert!(step_discharge(DeviceState::new(0.1), &p, -1.0).is_err());
    }

    #[test]
    fn default_params_hit_reference_decays() {
        let p = params();
        let big = step_discharge(DeviceState::new(0.5), &p, 600.0).unwrap();
        assert!((0.5 - big.v - 0.12).abs() <= 0.02, "decay {}", 0.5 - big.v);
        let small = step_discharge(DeviceState::new(0.25), &p, 600.0).unwrap();
        assert!(0.25 - small.v <= 0.02);
    }

    #[test]
    fn integrator_matches_closed_form() {
        // tanh(v/2a) decays as exp(-k t / a) for dv/dt = -k sinh(v/a).
        let (k, a, v0, t): (f64, f64, f64, f64) = (3.0e-7, 0.06, 0.5, 600.0);
        let exact = 2.0 * a * ((v0 / (2.0 * a)).tanh() * (-k * t / a).exp()).atanh();
        let num = integrate_discharge(v0, k, a, t, MAX_SUBSTEP_S);
        assert!((num - exact).abs() < 1e-9, "{num} vs {exact}");
    }

    #[test]
    fn halving_substep_converges() {
        let p = params();
        let coarse = integrate_discharge(0.5, p.decay_rate(), p.v_tafel, 600.0, 1.0);
        let fine = integrate_discharge(0.5, p.decay_rate(), p.v_tafel, 600.0, 0.5);
        assert!((coarse - fine).abs() < 1e-6);
    }

    #[test]
    fn calibration_reproduces_targets() {
        let fitted = calibrate_discharge(&reference_targets(), &DeviceParams::default()).unwrap();
        for t in reference_targets() {
            let d = simulated_decay(&t, &fitted);
            assert!((d - t.decay_v).abs() <= t.tolerance_v, "{t:?} -> {d}");
        }
    }

    #[test]
    fn calibration_accepts_zero_decay() {
        let targets = [DecayTarget::new(0.5, 600.0, 0.0, 0.02), DecayTarget::new(0.25, 600.0, 0.0, 0.02)];
        let fitted = calibrate_discharge(&targets, &DeviceParams::default()).unwrap();
        assert_eq!(fitted.k_shuttle, 0.0);
    }

    #[test]
    fn calibration_rejects_contradictory_targets() {
        let targets = [DecayTarget::new(0.5, 600.0, 0.01, 0.005), DecayTarget::new(0.25, 600.0, 0.12, 0.02)];
        assert!(calibrate_discharge(&targets, &DeviceParams::default()).is_err());
    }

    #[test]
    fn params_round_trip_through_toml() {
        let p = params();
        let text = p.to_toml();
        for key in ["g0", "v_max", "slope", "k_shuttle", "v_tafel", "oxygen_frac"] {
            assert!(text.contains(&format!("{key} = ")), "missing {key}");
        }
        assert_eq!(DeviceParams::from_toml(&text).unwrap(), p);
        assert!(DeviceParams::from_toml("oxygen_frac = 1.5").is_err());
    }
}
