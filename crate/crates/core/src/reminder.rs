//! Reminder pulses derived from the device model.
//!
//! Synapses are simulated from a grid of starting weights through 20 000 s of
//! self-discharge. Each trajectory sample gives one `(current weight, elapsed
//! time) → delta` node; a reminder reads a synapse's current weight, looks up
//! the delta for the time since the last reminder and writes it back.
//!
//! Weights on the map are normalized to the layer's full-scale weight, so one
//! map serves every β.

use std::io::{BufRead, BufReader, Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::crossbar::{weight, DifferentialSynapse, ReadErrorModel};
use crate::device::{self, DeviceParams, DeviceState};
use crate::error::{Result, SimError};
use crate::network::Network;

pub const MAP_HORIZON_S: f64 = 20_000.0;
/// Starting weights simulated for the map.
pub const START_WEIGHTS: [f64; 11] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];
const LOG_SAMPLES: usize = 240;
const FIRST_SAMPLE_S: f64 = 0.01;
const WEIGHT_SLACK: f64 = 1e-9;

/// Delta values at one elapsed time, indexed by starting weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapRow {
    pub t_s: f64,
    /// Current (normalized) weights, strictly ascending.
    pub w_current: Vec<f64>,
    pub delta: Vec<f64>,
}

impl MapRow {
    /// Row reached by following every trajectory a fraction `f` of the way
    /// from `self` to `next`.
    fn blend(&self, next: &MapRow, f: f64) -> MapRow {
        let mix = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (1.0 - f) * x + f * y).collect();
        MapRow {
            t_s: (1.0 - f) * self.t_s + f * next.t_s,
            w_current: mix(&self.w_current, &next.w_current),
            delta: mix(&self.delta, &next.delta),
        }
    }

    /// Monotone cubic (Fritsch–Carlson) interpolation of the starting weight
    /// against the current weight, extended linearly past the end nodes.
    fn interpolate(&self, w: f64) -> f64 {
        let xs = &self.w_current;
        let ys: Vec<f64> = xs.iter().zip(&self.delta).map(|(x, d)| x + d).collect();
        let n = xs.len();
        let h: Vec<f64> = xs.windows(2).map(|p| p[1] - p[0]).collect();
        let m: Vec<f64> = (0..n - 1).map(|k| (ys[k + 1] - ys[k]) / h[k]).collect();
        let slope = |k: usize| -> f64 {
            if n == 2 {
                return m[0];
            }
            if k == 0 || k == n - 1 {
                let (h0, h1, m0, m1) = if k == 0 {
                    (h[0], h[1], m[0], m[1])
                } else {
                    (h[n - 2], h[n - 3], m[n - 2], m[n - 3])
                };
                let d = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
                return if d.signum() != m0.signum() {
                    0.0
                } else if m0.signum() != m1.signum() && d.abs() > 3.0 * m0.abs() {
                    3.0 * m0
                } else {
                    d
                };
            }
            let (ma, mb) = (m[k - 1], m[k]);
            if ma * mb <= 0.0 {
                return 0.0;
            }
            let (wa, wb) = (2.0 * h[k] + h[k - 1], h[k] + 2.0 * h[k - 1]);
            (wa + wb) / (wa / ma + wb / mb)
        };
        let start = if w <= xs[0] {
            ys[0] + slope(0) * (w - xs[0])
        } else if w >= xs[n - 1] {
            ys[n - 1] + slope(n - 1) * (w - xs[n - 1])
        } else {
            let k = xs.partition_point(|&x| x <= w).clamp(1, n - 1) - 1;
            let s = (w - xs[k]) / h[k];
            let (d0, d1) = (slope(k) * h[k], slope(k + 1) * h[k]);
            let (s2, s3) = (s * s, s * s * s);
            (2.0 * s3 - 3.0 * s2 + 1.0) * ys[k]
                + (s3 - 2.0 * s2 + s) * d0
                + (-2.0 * s3 + 3.0 * s2) * ys[k + 1]
                + (s3 - s2) * d1
        };
        start - w
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReminderMap {
    /// Ascending elapsed times, first row at t = 0.
    rows: Vec<MapRow>,
    params_hash: u64,
}

/// Stable digest of the device parameters a map was built for.
pub fn params_hash(params: &DeviceParams) -> u64 {
    let digest = Sha256::digest(params.to_toml().as_bytes());
    u64::from_be_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Normalized weight of an anti-symmetric pair with the negative device at
/// `v` (positive device at `-v`).
fn normalized_weight(v: f64, params: &DeviceParams) -> f64 {
    let full = weight(&DifferentialSynapse::new(-params.v_max, params.v_max), params, 1.0, params.g0);
    weight(&DifferentialSynapse::new(-v, v), params, 1.0, params.g0) / full
}

/// Gate state giving normalized weight `w` in `[0, 1]`.
fn state_for_weight(w: f64, params: &DeviceParams) -> f64 {
    let (mut lo, mut hi) = (0.0, params.v_max);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if normalized_weight(mid, params) < w {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

impl ReminderMap {
    pub fn time_grid(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t_s).collect()
    }

    pub fn rows(&self) -> &[MapRow] {
        &self.rows
    }

    pub fn params_hash(&self) -> u64 {
        self.params_hash
    }

    pub fn horizon(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.t_s)
    }

    /// Simulates the calibration trajectories. The weight scale cancels in the
    /// normalized map; `beta` and `g0_ref` are validated only.
    pub fn build(params: &DeviceParams, beta: f64, g0_ref: f64) -> Result<Self> {
        params.validate()?;
        if !(beta >= 1.0 && g0_ref > 0.0) {
            return Err(SimError::InvalidParameter("beta must be ≥ 1 and g0_ref > 0".into()));
        }
        let mut times = vec![0.0];
        let ratio = (MAP_HORIZON_S / FIRST_SAMPLE_S).ln() / (LOG_SAMPLES - 1) as f64;
        times.extend((0..LOG_SAMPLES).map(|k| FIRST_SAMPLE_S * (ratio * k as f64).exp()));
        *times.last_mut().unwrap() = MAP_HORIZON_S;

        // trajectories[s][k] = weight of start s at times[k]
        let mut trajectories = Vec::with_capacity(START_WEIGHTS.len());
        for &w_start in &START_WEIGHTS {
            let v = state_for_weight(w_start, params);
            let mut syn = DifferentialSynapse::new(-v, v);
            let mut traj = Vec::with_capacity(times.len());
            let mut t_prev = 0.0;
            for &t in &times {
                syn.pos = device::step_discharge(syn.pos, params, t - t_prev)?;
                syn.neg = device::step_discharge(syn.neg, params, t - t_prev)?;
                t_prev = t;
                let w = if w_start == 0.0 { 0.0 } else { normalized_weight_of(&syn, params) };
                traj.push(w);
            }
            if traj.windows(2).any(|p| p[1] > p[0] + 1e-15) {
                return Err(SimError::Map(format!(
                    "trajectory from w_start = {w_start} is not monotone in time"
                )));
            }
            trajectories.push(traj);
        }

        let rows = times
            .iter()
            .enumerate()
            .map(|(k, &t_s)| {
                let w_current: Vec<f64> = trajectories.iter().map(|tr| tr[k]).collect();
                if w_current.windows(2).any(|p| !(p[1] > p[0])) {
                    return Err(SimError::Map(format!(
                        "current weights at t = {t_s} s are not strictly ordered by starting weight"
                    )));
                }
                let delta = trajectories.iter().map(|tr| tr[0] - tr[k]).collect();
                Ok(MapRow { t_s, w_current, delta })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            rows,
            params_hash: params_hash(params),
        })
    }

    /// Weight delta needed to restore a synapse that currently reads
    /// `w_current` (normalized) after `t_since_s` seconds of discharge.
    /// Between time rows each trajectory is interpolated linearly, so a
    /// synapse is compared against the simulated weights at exactly
    /// `t_since_s`. Negative weights use the odd extension; times are clamped
    /// to the map. Outside the simulated weights the row is extrapolated
    /// linearly, capped so the restored weight stays within full scale.
    pub fn lookup(&self, w_current: f64, t_since_s: f64) -> Result<f64> {
        if !(w_current.abs() <= 1.0 + WEIGHT_SLACK) {
            return Err(SimError::Map(format!("weight {w_current} outside [-1, 1]")));
        }
        if t_since_s.is_nan() {
            return Err(SimError::Map("elapsed time is NaN".into()));
        }
        let w = w_current.abs();
        if w == 0.0 {
            return Ok(0.0);
        }
        let t = t_since_s.clamp(0.0, self.horizon());
        let k = self.rows.partition_point(|r| r.t_s <= t).clamp(1, self.rows.len() - 1);
        let (r0, r1) = (&self.rows[k - 1], &self.rows[k]);
        let f = (t - r0.t_s) / (r1.t_s - r0.t_s);
        let d = r0.blend(r1, f).interpolate(w);
        Ok(d.clamp(0.0, (1.0 - w).max(0.0)).copysign(w_current))
    }

    /// `t_s,w_current,delta` table preceded by `# key = value` header lines.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# params_hash = {:016x}", self.params_hash)?;
        writeln!(out, "# start_weights = {}", START_WEIGHTS.len())?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t_s", "w_current", "delta"])?;
        for row in &self.rows {
            for (wc, d) in row.w_current.iter().zip(&row.delta) {
                w.write_record([format!("{:.17e}", row.t_s), format!("{wc:.17e}"), format!("{d:.17e}")])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = BufReader::new(input);
        let mut params_hash = None;
        let mut per_row = None;
        let mut body = String::new();
        let mut line = String::new();
        while reader.read_line(&mut line)? > 0 {
            if let Some(kv) = line.trim().strip_prefix('#') {
                if let Some((k, v)) = kv.split_once('=') {
                    match k.trim() {
                        "params_hash" => params_hash = u64::from_str_radix(v.trim(), 16).ok(),
                        "start_weights" => per_row = v.trim().parse::<usize>().ok(),
                        _ => {}
                    }
                }
            } else {
                body.push_str(&line);
            }
            line.clear();
        }
        let params_hash = params_hash.ok_or_else(|| SimError::Map("missing params_hash header".into()))?;
        let per_row = per_row.filter(|&n| n >= 2).ok_or_else(|| SimError::Map("missing start_weights header".into()))?;

        #[derive(Deserialize)]
        struct Node {
            t_s: f64,
            w_current: f64,
            delta: f64,
        }
        let nodes = csv::Reader::from_reader(body.as_bytes())
            .deserialize()
            .collect::<std::result::Result<Vec<Node>, _>>()?;
        if nodes.is_empty() || nodes.len() % per_row != 0 {
            return Err(SimError::Map("node count is not a multiple of the start-weight count".into()));
        }
        let rows: Vec<MapRow> = nodes
            .chunks(per_row)
            .map(|chunk| MapRow {
                t_s: chunk[0].t_s,
                w_current: chunk.iter().map(|n| n.w_current).collect(),
                delta: chunk.iter().map(|n| n.delta).collect(),
            })
            .collect();
        if rows.windows(2).any(|r| !(r[1].t_s > r[0].t_s)) {
            return Err(SimError::Map("time grid is not ascending".into()));
        }
        if rows.iter().any(|r| r.w_current.windows(2).any(|p| !(p[1] > p[0]))) {
            return Err(SimError::Map("weight grid is not ascending".into()));
        }
        Ok(Self { rows, params_hash })
    }
}

fn normalized_weight_of(syn: &DifferentialSynapse, params: &DeviceParams) -> f64 {
    let full = weight(&DifferentialSynapse::new(-params.v_max, params.v_max), params, 1.0, params.g0);
    weight(syn, params, 1.0, params.g0) / full
}

/// Convenience wrapper matching the map-building operation.
pub fn build_map(params: &DeviceParams, beta: f64, g0_ref: f64) -> Result<ReminderMap> {
    ReminderMap::build(params, beta, g0_ref)
}

/// Periodic reminder schedule applied during a discharge simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct ReminderPolicy {
    pub map: ReminderMap,
    pub period_s: f64,
    /// Discharge time already elapsed when the simulation starts; a first
    /// reminder fires at t = 0 when positive.
    pub initial_elapsed_s: f64,
    /// Read error applied to the reminder's weight measurement.
    pub measurement: ReadErrorModel,
}

/// Reads every synapse, looks up its delta for `t_since_last` and applies the
/// corresponding pulse pair.
pub fn apply_reminder<R: Rng + ?Sized>(
    network: &mut Network,
    map: &ReminderMap,
    t_since_last: f64,
    measurement: &ReadErrorModel,
    rng: &mut R,
) -> Result<()> {
    for layer in network.layers_mut() {
        let full = layer.max_weight();
        let measured = layer.read_weights(measurement, rng);
        for ((o, i), &w) in measured.indexed_iter() {
            let wn = (w / full).clamp(-1.0, 1.0);
            let delta = map.lookup(wn, t_since_last)? * full;
            if delta != 0.0 {
                layer.shift_weight(o, i, delta);
            }
        }
    }
    Ok(())
}

/// Programs an anti-symmetric synapse to normalized weight `w` in `[-1, 1]`.
pub fn synapse_for_weight(w: f64, params: &DeviceParams) -> DifferentialSynapse {
    let v = state_for_weight(w.abs().min(1.0), params).copysign(w);
    DifferentialSynapse {
        pos: DeviceState::new(-v),
        neg: DeviceState::new(v),
    }
}
