//! Experiment pipelines and their on-disk artifacts.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::crossbar::ReadErrorModel;
use crate::data::Dataset;
use crate::device::{self, DecayTarget, DeviceParams};
use crate::discharge::{simulate, DischargeOptions};
use crate::error::{Result, SimError};
use crate::experiments::config::ExperimentConfig;
use crate::experiments::datasets::{make_circle, make_zvn};
use crate::experiments::plot::{self, Band, Series};
use crate::network::Network;
use crate::reminder::{ReminderMap, ReminderPolicy, START_WEIGHTS};
use crate::trace::ExperimentTrace;
use crate::training::{evaluate, train, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Zvn,
    Circle,
}

pub fn dataset(cfg: &ExperimentConfig, task: Task, seed: u64) -> Result<Dataset> {
    match task {
        Task::Zvn => make_zvn(&cfg.data.letters),
        Task::Circle => make_circle(cfg.data.circle_points, cfg.circle_seed(seed)),
    }
}

/// A trained network together with its data and training trace.
#[derive(Debug, Clone)]
pub struct TrainedRun {
    pub seed: u64,
    pub network: Network,
    pub data: Dataset,
    pub trace: ExperimentTrace,
}

impl TrainedRun {
    /// Number of completed updates before the trace first satisfies `pred`.
    pub fn epochs_until(&self, pred: impl Fn(f64, f64) -> bool) -> Option<usize> {
        self.trace.samples().iter().position(|s| pred(s.loss, s.accuracy))
    }
}

/// Initializes and trains one network. The seed drives initialization and
/// every read-noise draw during training.
pub fn train_run(cfg: &ExperimentConfig, task: Task, seed: u64) -> Result<TrainedRun> {
    train_with(cfg, task, seed, &cfg.train, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn train_with(
    cfg: &ExperimentConfig,
    task: Task,
    seed: u64,
    schedule: &TrainConfig,
    noise_rng: &mut ChaCha8Rng,
) -> Result<TrainedRun> {
    let data = dataset(cfg, task, seed)?;
    let mut network = cfg.network.build(&cfg.device)?;
    network.init_random(&mut ChaCha8Rng::seed_from_u64(seed), cfg.network.init_std_v)?;
    let trace = train(&mut network, &data, schedule, noise_rng)?;
    Ok(TrainedRun { seed, network, data, trace })
}

pub fn run_seeds(cfg: &ExperimentConfig) -> impl Iterator<Item = u64> {
    cfg.seed..cfg.seed + cfg.seeds as u64
}

/// Open-circuit discharge of a copy of `network` at the given oxygen level.
pub fn discharge_run(
    cfg: &ExperimentConfig,
    network: &Network,
    data: &Dataset,
    oxygen_frac: f64,
) -> Result<(ExperimentTrace, Network)> {
    let mut net = network.clone();
    net.set_device_params(&cfg.device.clone().with_oxygen(oxygen_frac))?;
    let opts = DischargeOptions {
        duration_s: cfg.discharge.duration_s,
        eval_interval_s: cfg.discharge.eval_interval_s,
        snapshot_every: cfg.discharge.snapshot_every,
    };
    let trace = simulate(&mut net, data, &opts, None, &mut ChaCha8Rng::seed_from_u64(cfg.seed))?;
    Ok((trace, net))
}

/// Leaves the network unattended for `initial_elapsed_s`, then runs the
/// reminder schedule for `reminder.duration_s`.
pub fn remind_run(
    cfg: &ExperimentConfig,
    network: &Network,
    data: &Dataset,
    map: &ReminderMap,
) -> Result<(ExperimentTrace, Network)> {
    let mut net = network.clone();
    net.set_device_params(&cfg.device)?;
    if cfg.reminder.initial_elapsed_s > 0.0 {
        net.discharge(cfg.reminder.initial_elapsed_s)?;
    }
    let policy = ReminderPolicy {
        map: map.clone(),
        period_s: cfg.reminder.period_s,
        initial_elapsed_s: cfg.reminder.initial_elapsed_s,
        measurement: cfg.reminder.measurement,
    };
    let opts = DischargeOptions {
        duration_s: cfg.reminder.duration_s,
        eval_interval_s: cfg.discharge.eval_interval_s,
        snapshot_every: 0,
    };
    let trace = simulate(&mut net, data, &opts, Some(&policy), &mut ChaCha8Rng::seed_from_u64(cfg.seed))?;
    Ok((trace, net))
}

pub fn build_map(cfg: &ExperimentConfig) -> Result<ReminderMap> {
    ReminderMap::build(&cfg.device, cfg.network.betas[0], cfg.device.g0)
}

/// Per-epoch statistics over repeated training runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandStats {
    pub beta: f64,
    pub mean: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    /// Mean of `max − min` over the configured epoch window.
    pub band_width: f64,
}

pub fn band_stats(beta: f64, traces: &[ExperimentTrace], window: (usize, usize)) -> Result<BandStats> {
    let epochs = traces.iter().map(|t| t.len()).min().unwrap_or(0);
    if traces.is_empty() || window.1 > epochs || window.0 >= window.1 {
        return Err(SimError::InvalidParameter(format!(
            "band window {window:?} does not fit {epochs} epochs"
        )));
    }
    let column = |e: usize| traces.iter().map(move |t| t.samples()[e].loss);
    let mean: Vec<f64> = (0..epochs).map(|e| column(e).sum::<f64>() / traces.len() as f64).collect();
    let min: Vec<f64> = (0..epochs).map(|e| column(e).fold(f64::INFINITY, f64::min)).collect();
    let max: Vec<f64> = (0..epochs).map(|e| column(e).fold(f64::NEG_INFINITY, f64::max)).collect();
    let band_width = (window.0..window.1).map(|e| max[e] - min[e]).sum::<f64>() / (window.1 - window.0) as f64;
    Ok(BandStats { beta, mean, min, max, band_width })
}

/// Noisy training runs per β. All runs start from the same initial weights
/// (drawn from `cfg.seed`) and differ only in their read-noise draws.
pub fn read_error_study(cfg: &ExperimentConfig) -> Result<Vec<(BandStats, Vec<ExperimentTrace>)>> {
    let schedule = TrainConfig {
        noise: ReadErrorModel::on(cfg.study.read_std),
        ..cfg.train.clone()
    };
    cfg.study
        .betas
        .iter()
        .map(|&beta| {
            let c = ExperimentConfig {
                network: cfg.network.with_beta(beta),
                ..cfg.clone()
            };
            let traces = (0..cfg.study.runs as u64)
                .map(|r| {
                    let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1000 + r));
                    Ok(train_with(&c, Task::Circle, cfg.seed, &schedule, &mut noise_rng)?.trace)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((band_stats(beta, &traces, cfg.study.band_epochs)?, traces))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetaRow {
    pub beta: f64,
    pub ideal_loss: f64,
    pub discharge_loss: f64,
    /// Final loss with self-discharge minus the ideal final loss.
    pub discharge_penalty: f64,
    pub noise_band_width: f64,
}

/// Same initial weights trained ideally, with self-discharge, and with
/// self-discharge plus read noise, for every β in the study.
pub fn beta_study(cfg: &ExperimentConfig) -> Result<(Vec<BetaRow>, Vec<Series>)> {
    let mut rows = Vec::new();
    let mut curves = Vec::new();
    let bands = read_error_study(cfg)?;
    for (stats, _) in &bands {
        let c = ExperimentConfig {
            network: cfg.network.with_beta(stats.beta),
            ..cfg.clone()
        };
        let run = |discharge: bool| {
            let schedule = TrainConfig {
                discharge_between_updates: discharge,
                noise: ReadErrorModel::off(),
                ..cfg.train.clone()
            };
            train_with(&c, Task::Circle, cfg.seed, &schedule, &mut ChaCha8Rng::seed_from_u64(cfg.seed))
        };
        let ideal = run(false)?;
        let drift = run(true)?;
        let ideal_loss = evaluate(&ideal.network, &ideal.data)?.0;
        let discharge_loss = evaluate(&drift.network, &drift.data)?.0;
        rows.push(BetaRow {
            beta: stats.beta,
            ideal_loss,
            discharge_loss,
            discharge_penalty: discharge_loss - ideal_loss,
            noise_band_width: stats.band_width,
        });
        curves.push(Series::new(format!("β = {} ideal", stats.beta), epoch_points(&ideal.trace)));
        curves.push(Series::new(format!("β = {} discharge", stats.beta), epoch_points(&drift.trace)));
    }
    Ok((rows, curves))
}

fn epoch_points(trace: &ExperimentTrace) -> Vec<(f64, f64)> {
    trace.samples().iter().map(|s| (s.time, s.loss)).collect()
}

/// Artifacts written by [`run_experiment`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub files: Vec<String>,
    pub summary: serde_json::Value,
}

struct Out {
    dir: PathBuf,
    files: Vec<String>,
}

impl Out {
    fn path(&mut self, name: &str) -> Result<PathBuf> {
        let p = self.dir.join(name);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent)?;
        }
        self.files.push(name.to_string());
        Ok(p)
    }

    fn writer(&mut self, name: &str) -> Result<BufWriter<File>> {
        Ok(BufWriter::new(File::create(self.path(name)?)?))
    }

    fn trace(&mut self, name: &str, trace: &ExperimentTrace) -> Result<()> {
        trace.write_csv(self.writer(name)?)
    }

    fn layers(&mut self, prefix: &str, network: &Network) -> Result<()> {
        for (l, layer) in network.layers().iter().enumerate() {
            layer.write_states_csv(self.writer(&format!("{prefix}layer_{l}.csv"))?)?;
        }
        Ok(())
    }

    fn table<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        let mut w = csv::Writer::from_writer(self.writer(name)?);
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    fn text(&mut self, name: &str, text: &str) -> Result<()> {
        std::fs::write(self.path(name)?, text)?;
        Ok(())
    }

    fn raster(&mut self, name: &str, title: &str, network: &Network, data: &Dataset) -> Result<()> {
        let grid = plot::decision_grid(network)?;
        plot::decision_raster(&self.path(name)?, title, &grid, data)
    }
}

#[derive(Serialize)]
struct SeedSummary {
    seed: u64,
    epochs_to_target: Option<usize>,
    final_loss: f64,
    final_accuracy: f64,
}

#[derive(Serialize)]
struct DischargeSummary {
    seed: u64,
    oxygen_frac: f64,
    loss_start: f64,
    loss_end: f64,
    min_accuracy: f64,
}

fn discharge_summary(seed: u64, oxygen_frac: f64, trace: &ExperimentTrace) -> DischargeSummary {
    DischargeSummary {
        seed,
        oxygen_frac,
        loss_start: trace.first().map_or(f64::NAN, |s| s.loss),
        loss_end: trace.last().map_or(f64::NAN, |s| s.loss),
        min_accuracy: trace.samples().iter().map(|s| s.accuracy).fold(1.0, f64::min),
    }
}

fn time_points(trace: &ExperimentTrace) -> Vec<(f64, f64)> {
    trace.samples().iter().map(|s| (s.time / 60.0, s.loss)).collect()
}

fn train_many(cfg: &ExperimentConfig, task: Task, out: &mut Out) -> Result<(Vec<TrainedRun>, Vec<SeedSummary>)> {
    let target = |loss: f64, acc: f64| match task {
        Task::Zvn => acc >= 1.0,
        Task::Circle => loss <= 0.05,
    };
    let mut runs = Vec::new();
    let mut rows = Vec::new();
    for seed in run_seeds(cfg) {
        let run = train_run(cfg, task, seed)?;
        let (final_loss, final_accuracy) = evaluate(&run.network, &run.data)?;
        rows.push(SeedSummary {
            seed,
            epochs_to_target: run.epochs_until(target),
            final_loss,
            final_accuracy,
        });
        out.trace(&format!("traces/seed_{seed}.csv"), &run.trace)?;
        out.layers(&format!("layers/seed_{seed}_"), &run.network)?;
        if seed == cfg.seed {
            out.trace("trace.csv", &run.trace)?;
            out.layers("", &run.network)?;
        }
        runs.push(run);
    }
    let series: Vec<Series> = runs
        .iter()
        .map(|r| Series::new(format!("seed {}", r.seed), epoch_points(&r.trace)))
        .collect();
    plot::line_plot(&out.path("loss.svg")?, "training loss", "epoch", "MSE loss", &series)?;
    out.table("summary.csv", &rows)?;
    Ok((runs, rows))
}

/// Runs a named experiment and writes its artifacts into `out_dir`.
pub fn run_experiment(name: &str, cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunOutput> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let mut out = Out {
        dir: out_dir.to_path_buf(),
        files: Vec::new(),
    };
    out.text("device.toml", &cfg.device.to_toml())?;

    let summary = match name {
        "zvn-train" | "circle-train" => {
            let task = if name == "zvn-train" { Task::Zvn } else { Task::Circle };
            let (runs, rows) = train_many(cfg, task, &mut out)?;
            if task == Task::Circle {
                for r in &runs {
                    out.raster(&format!("raster_seed_{}.svg", r.seed), &format!("seed {}", r.seed), &r.network, &r.data)?;
                }
            }
            json!({ "seeds": rows })
        }
        "zvn-discharge" => {
            let (runs, _) = train_many(cfg, Task::Zvn, &mut out)?;
            let mut rows = Vec::new();
            let mut series = Vec::new();
            for run in &runs {
                for &o2 in &cfg.discharge.oxygen_fracs {
                    let (trace, _) = discharge_run(cfg, &run.network, &run.data, o2)?;
                    out.trace(&format!("discharge/seed_{}_o2_{o2}.csv", run.seed), &trace)?;
                    if run.seed == cfg.seed && o2 == cfg.discharge.oxygen_fracs[0] {
                        out.trace("discharge.csv", &trace)?;
                        trace.write_weights_csv(out.writer("weights.csv")?)?;
                    }
                    series.push(Series::new(format!("seed {} O₂ {o2}", run.seed), time_points(&trace)));
                    rows.push(discharge_summary(run.seed, o2, &trace));
                }
            }
            plot::line_plot(&out.path("discharge.svg")?, "loss during self-discharge", "time (min)", "MSE loss", &series)?;
            out.table("discharge_summary.csv", &rows)?;
            json!({ "discharge": rows })
        }
        "circle-discharge" => {
            let run = train_run(cfg, Task::Circle, cfg.seed)?;
            out.layers("", &run.network)?;
            out.trace("training.csv", &run.trace)?;
            let mut rows = Vec::new();
            let mut series = Vec::new();
            for (k, &o2) in cfg.discharge.oxygen_fracs.iter().enumerate() {
                let (trace, _) = discharge_run(cfg, &run.network, &run.data, o2)?;
                out.trace(&format!("discharge/o2_{o2}.csv"), &trace)?;
                if k == 0 {
                    out.trace("trace.csv", &trace)?;
                    let mut times = cfg.discharge.raster_times_s.clone();
                    times.sort_by(f64::total_cmp);
                    let mut net = run.network.clone();
                    net.set_device_params(&cfg.device.clone().with_oxygen(o2))?;
                    let mut t = 0.0;
                    for target in times {
                        if target > t {
                            net.discharge(target - t)?;
                            t = target;
                        }
                        out.raster(&format!("raster_t{}s.svg", target), &format!("t = {} min", target / 60.0), &net, &run.data)?;
                    }
                }
                series.push(Series::new(format!("O₂ fraction {o2}"), time_points(&trace)));
                rows.push(discharge_summary(cfg.seed, o2, &trace));
            }
            plot::line_plot(&out.path("loss.svg")?, "loss during self-discharge", "time (min)", "MSE loss", &series)?;
            out.table("summary.csv", &rows)?;
            json!({ "discharge": rows })
        }
        "circle-remind" => {
            let run = train_run(cfg, Task::Circle, cfg.seed)?;
            out.layers("", &run.network)?;
            let map = build_map(cfg)?;
            map.write_csv(out.writer("reminder_map.csv")?)?;
            let (trace, net) = remind_run(cfg, &run.network, &run.data, &map)?;
            out.trace("trace.csv", &trace)?;
            out.raster("raster_end.svg", "after reminders", &net, &run.data)?;
            let first = trace.first().expect("non-empty trace");
            plot::line_plot(
                &out.path("loss.svg")?,
                "loss with periodic reminders",
                "time (min)",
                "MSE loss",
                &[Series::new("after reminder", time_points(&trace))],
            )?;
            json!({
                "loss_before_first_reminder": first.loss_before_reminder,
                "loss_after_first_reminder": first.loss,
                "max_loss": trace.losses().iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            })
        }
        "read-error-study" => {
            let bands = read_error_study(cfg)?;
            #[derive(Serialize)]
            struct Row {
                beta: f64,
                epoch: usize,
                mean: f64,
                min: f64,
                max: f64,
            }
            let mut rows = Vec::new();
            for (b, traces) in &bands {
                for (r, t) in traces.iter().enumerate() {
                    out.trace(&format!("traces/beta_{}_run_{r}.csv", b.beta), t)?;
                }
                for e in 0..b.mean.len() {
                    rows.push(Row {
                        beta: b.beta,
                        epoch: e,
                        mean: b.mean[e],
                        min: b.min[e],
                        max: b.max[e],
                    });
                }
            }
            out.table("bands.csv", &rows)?;
            let plot_bands: Vec<Band> = bands
                .iter()
                .map(|(b, _)| Band {
                    label: format!("β = {}", b.beta),
                    x: (0..b.mean.len()).map(|e| e as f64).collect(),
                    mean: b.mean.clone(),
                    min: b.min.clone(),
                    max: b.max.clone(),
                })
                .collect();
            plot::band_plot(&out.path("bands.svg")?, "training with read error", "epoch", "MSE loss", &plot_bands)?;
            json!({ "band_widths": bands.iter().map(|(b, _)| json!({"beta": b.beta, "band_width": b.band_width})).collect::<Vec<_>>() })
        }
        "beta-study" => {
            let (rows, curves) = beta_study(cfg)?;
            out.table("summary.csv", &rows)?;
            plot::line_plot(&out.path("loss.svg")?, "β-scaling under self-discharge", "epoch", "MSE loss", &curves)?;
            json!({ "betas": rows })
        }
        "calibrate-device" => {
            let targets = device::reference_targets();
            let fitted = device::calibrate_discharge(&targets, &cfg.device)?;
            out.text("calibrated_device.toml", &fitted.to_toml())?;
            #[derive(Serialize)]
            struct Row {
                v0: f64,
                duration_s: f64,
                target_decay_v: f64,
                tolerance_v: f64,
                simulated_decay_v: f64,
            }
            let rows: Vec<Row> = targets
                .iter()
                .map(|t: &DecayTarget| Row {
                    v0: t.v0,
                    duration_s: t.duration_s,
                    target_decay_v: t.decay_v,
                    tolerance_v: t.tolerance_v,
                    simulated_decay_v: device::simulated_decay(t, &fitted),
                })
                .collect();
            out.table("calibration.csv", &rows)?;
            let series = decay_curves(&fitted, cfg.discharge.duration_s, cfg.discharge.eval_interval_s)?;
            #[derive(Serialize)]
            struct Sample {
                t_s: f64,
                v0: f64,
                v: f64,
            }
            let samples: Vec<Sample> = series
                .iter()
                .zip([0.5, 0.25])
                .flat_map(|(s, v0)| s.points.iter().map(move |&(t, v)| Sample { t_s: t * 60.0, v0, v }))
                .collect();
            out.table("trace.csv", &samples)?;
            plot::line_plot(&out.path("decay.svg")?, "open-circuit decay", "time (min)", "gate state (V)", &series)?;
            json!({ "k_shuttle": fitted.k_shuttle, "v_tafel": fitted.v_tafel, "targets": rows.len() })
        }
        "build-map" => {
            let map = build_map(cfg)?;
            map.write_csv(out.writer("reminder_map.csv")?)?;
            let series: Vec<Series> = [10.0, 100.0, 1000.0, 20_000.0]
                .iter()
                .map(|&t| {
                    let pts = (0..=50)
                        .map(|k| {
                            let w = k as f64 / 50.0;
                            map.lookup(w, t).map(|d| (w, d))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    Ok(Series::new(format!("t = {t} s"), pts))
                })
                .collect::<Result<_>>()?;
            plot::line_plot(&out.path("map.svg")?, "reminder map", "current weight", "delta", &series)?;
            json!({
                "rows": map.rows().len(),
                "start_weights": START_WEIGHTS.len(),
                "delta_w1_horizon": map.lookup(map.rows().last().expect("rows").w_current[START_WEIGHTS.len() - 1], map.horizon())?,
                "params_hash": format!("{:016x}", map.params_hash()),
            })
        }
        other => return Err(SimError::UnknownExperiment(other.to_string())),
    };

    let manifest = json!({
        "experiment": name,
        "seed": cfg.seed,
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
        "summary": summary,
        "outputs": out.files,
    });
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| SimError::Config(e.to_string()))?;
    out.text("manifest.json", &text)?;
    Ok(RunOutput {
        dir: out.dir,
        files: out.files,
        summary,
    })
}

/// Gate state of single devices starting at 0.5 V and 0.25 V.
fn decay_curves(params: &DeviceParams, duration_s: f64, step_s: f64) -> Result<Vec<Series>> {
    [0.5, 0.25]
        .iter()
        .map(|&v0| {
            let mut state = device::DeviceState::new(v0);
            let mut pts = vec![(0.0, v0)];
            let mut t = 0.0;
            while t < duration_s - 1e-9 {
                let dt = step_s.min(duration_s - t);
                state = device::step_discharge(state, params, dt)?;
                t += dt;
                pts.push((t / 60.0, state.v));
            }
            Ok(Series::new(format!("v0 = {v0} V"), pts))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_stats_window() {
        let mut a = ExperimentTrace::new(crate::trace::TraceKind::Training);
        let mut b = a.clone();
        for e in 0..4 {
            a.push(crate::trace::TraceSample::new(e as f64, 1.0, 0.0)).unwrap();
            b.push(crate::trace::TraceSample::new(e as f64, 1.0 + e as f64, 0.0)).unwrap();
        }
        let s = band_stats(2.0, &[a.clone(), b.clone()], (2, 4)).unwrap();
        assert_eq!(s.band_width, 2.5);
        assert_eq!(s.mean[1], 1.5);
        assert!(band_stats(2.0, &[a, b], (2, 5)).is_err());
    }

    #[test]
    fn unknown_experiment_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::default();
        assert!(matches!(
            run_experiment("nope", &cfg, dir.path()),
            Err(SimError::UnknownExperiment(_))
        ));
    }
}
