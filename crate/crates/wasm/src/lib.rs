use forgetful_core::crossbar::ReadErrorModel;
use forgetful_core::device::{step_discharge, DeviceParams, DeviceState};
use forgetful_core::experiments::plot::decision_grid;
use forgetful_core::experiments::runner::{train_run, Task};
use forgetful_core::experiments::ExperimentConfig;
use forgetful_core::reminder::{apply_reminder, ReminderMap};
use forgetful_core::training::evaluate;
use forgetful_core::{Dataset, Network};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// Gate state every 10 s for devices starting at 0.5 V and 0.25 V,
/// interleaved as `[v_a(0), v_b(0), v_a(10), v_b(10), ...]`.
#[wasm_bindgen(js_name = decayCurves)]
pub fn decay_curves(oxygen_frac: f64, duration_s: f64) -> Result<Vec<f64>, JsError> {
    let params = DeviceParams::default().with_oxygen(oxygen_frac);
    params.validate().map_err(js_err)?;
    let mut a = DeviceState::new(0.5);
    let mut b = DeviceState::new(0.25);
    let mut out = vec![a.v, b.v];
    let steps = (duration_s / 10.0).ceil().max(0.0) as usize;
    for _ in 0..steps {
        a = step_discharge(a, &params, 10.0).map_err(js_err)?;
        b = step_discharge(b, &params, 10.0).map_err(js_err)?;
        out.extend([a.v, b.v]);
    }
    Ok(out)
}

/// A trained 2-4-2-1 circle classifier left in open circuit.
#[wasm_bindgen]
pub struct CircleDemo {
    network: Network,
    data: Dataset,
    map: ReminderMap,
    params: DeviceParams,
    elapsed_s: f64,
    since_reminder_s: f64,
}

#[wasm_bindgen]
impl CircleDemo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u64) -> Result<CircleDemo, JsError> {
        let cfg = ExperimentConfig::defaults_for("circle-train").map_err(js_err)?;
        let run = train_run(&cfg, Task::Circle, seed).map_err(js_err)?;
        let map = ReminderMap::build(&cfg.device, cfg.network.betas[0], cfg.device.g0).map_err(js_err)?;
        Ok(Self {
            network: run.network,
            data: run.data,
            map,
            params: cfg.device,
            elapsed_s: 0.0,
            since_reminder_s: 0.0,
        })
    }

    #[wasm_bindgen(js_name = setOxygen)]
    pub fn set_oxygen(&mut self, oxygen_frac: f64) -> Result<(), JsError> {
        let p = self.params.clone().with_oxygen(oxygen_frac);
        self.network.set_device_params(&p).map_err(js_err)?;
        self.params = p;
        Ok(())
    }

    pub fn discharge(&mut self, seconds: f64) -> Result<(), JsError> {
        self.network.discharge(seconds).map_err(js_err)?;
        self.elapsed_s += seconds;
        self.since_reminder_s += seconds;
        Ok(())
    }

    /// Applies one reminder for the time since the previous one.
    pub fn remind(&mut self) -> Result<(), JsError> {
        let t = self.since_reminder_s.min(self.map.horizon());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        apply_reminder(&mut self.network, &self.map, t, &ReadErrorModel::off(), &mut rng).map_err(js_err)?;
        self.since_reminder_s = 0.0;
        Ok(())
    }

    pub fn loss(&self) -> Result<f64, JsError> {
        Ok(evaluate(&self.network, &self.data).map_err(js_err)?.0)
    }

    pub fn accuracy(&self) -> Result<f64, JsError> {
        Ok(evaluate(&self.network, &self.data).map_err(js_err)?.1)
    }

    #[wasm_bindgen(getter)]
    pub fn elapsed(&self) -> f64 {
        self.elapsed_s
    }

    /// Row-major 100×100 network outputs over `[-1, 1]²`, top row first.
    pub fn raster(&self) -> Result<Vec<f64>, JsError> {
        Ok(decision_grid(&self.network).map_err(js_err)?.concat())
    }

    /// Data points as `[x1, x2, label, ...]`.
    pub fn points(&self) -> Vec<f64> {
        self.data.iter().flat_map(|(x, t)| [x[0], x[1], t[0]]).collect()
    }

    /// Reminder delta for a normalized weight after `t_s` seconds.
    #[wasm_bindgen(js_name = reminderDelta)]
    pub fn reminder_delta(&self, w: f64, t_s: f64) -> Result<f64, JsError> {
        self.map.lookup(w, t_s).map_err(js_err)
    }
}
