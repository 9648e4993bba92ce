//! Time series recorded during training and discharge runs.

use std::io::Write;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    /// Epoch index for training traces, seconds for discharge traces.
    pub time: f64,
    pub loss: f64,
    pub accuracy: f64,
    /// Learning rate used for the update following this sample.
    pub eta: Option<f64>,
    /// Cumulative device time spent programming, training traces only.
    pub model_time_s: Option<f64>,
    /// Loss measured just before a reminder fired at this sample.
    pub loss_before_reminder: Option<f64>,
    /// Per-layer `n_out × n_in` weights.
    #[serde(skip)]
    pub weights: Option<Vec<Array2<f64>>>,
}

impl TraceSample {
    pub fn new(time: f64, loss: f64, accuracy: f64) -> Self {
        Self {
            time,
            loss,
            accuracy,
            eta: None,
            model_time_s: None,
            loss_before_reminder: None,
            weights: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceKind {
    Training,
    Discharge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentTrace {
    pub kind: TraceKind,
    samples: Vec<TraceSample>,
}

impl ExperimentTrace {
    pub fn new(kind: TraceKind) -> Self {
        Self { kind, samples: Vec::new() }
    }

    /// Appends a sample; the time axis must increase strictly.
    pub fn push(&mut self, sample: TraceSample) -> Result<()> {
        if let Some(last) = self.samples.last() {
            if !(sample.time > last.time) {
                return Err(SimError::InvalidParameter(format!(
                    "trace time {} does not follow {}",
                    sample.time, last.time
                )));
            }
        }
        self.samples.push(sample);
        Ok(())
    }

    pub fn samples(&self) -> &[TraceSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn first(&self) -> Option<&TraceSample> {
        self.samples.first()
    }

    pub fn last(&self) -> Option<&TraceSample> {
        self.samples.last()
    }

    pub fn losses(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.loss).collect()
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.time).collect()
    }

    /// Training traces: `epoch,eta,loss,accuracy,wall_time_model_s`.
    /// Discharge traces: `t_s,loss,accuracy` plus `loss_before_reminder`
    /// when any reminder fired.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        match self.kind {
            TraceKind::Training => {
                w.write_record(["epoch", "eta", "loss", "accuracy", "wall_time_model_s"])?;
                for s in &self.samples {
                    w.write_record([
                        format!("{}", s.time as u64),
                        opt(s.eta),
                        s.loss.to_string(),
                        s.accuracy.to_string(),
                        opt(s.model_time_s),
                    ])?;
                }
            }
            TraceKind::Discharge => {
                let reminders = self.samples.iter().any(|s| s.loss_before_reminder.is_some());
                let mut header = vec!["t_s", "loss", "accuracy"];
                if reminders {
                    header.push("loss_before_reminder");
                }
                w.write_record(&header)?;
                for s in &self.samples {
                    let mut row = vec![s.time.to_string(), s.loss.to_string(), s.accuracy.to_string()];
                    if reminders {
                        row.push(opt(s.loss_before_reminder));
                    }
                    w.write_record(&row)?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Long-format weight snapshots: `time,layer,output,input,weight`.
    pub fn write_weights_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time", "layer", "output", "input", "weight"])?;
        for s in &self.samples {
            let Some(layers) = &s.weights else { continue };
            for (l, m) in layers.iter().enumerate() {
                for ((o, i), x) in m.indexed_iter() {
                    w.write_record([s.time.to_string(), l.to_string(), o.to_string(), i.to_string(), x.to_string()])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_axis_must_increase() {
        let mut t = ExperimentTrace::new(TraceKind::Discharge);
        t.push(TraceSample::new(0.0, 0.1, 1.0)).unwrap();
        t.push(TraceSample::new(20.0, 0.2, 1.0)).unwrap();
        assert!(t.push(TraceSample::new(20.0, 0.3, 1.0)).is_err());
        assert_eq!(t.losses(), vec![0.1, 0.2]);
    }

    #[test]
    fn csv_headers() {
        let mut t = ExperimentTrace::new(TraceKind::Training);
        let mut s = TraceSample::new(0.0, 0.5, 0.25);
        s.eta = Some(0.03);
        s.model_time_s = Some(0.1);
        t.push(s).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "epoch,eta,loss,accuracy,wall_time_model_s\n0,0.03,0.5,0.25,0.1\n"
        );

        let mut d = ExperimentTrace::new(TraceKind::Discharge);
        d.push(TraceSample::new(0.0, 0.5, 1.0)).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t_s,loss,accuracy\n0,0.5,1\n");
    }
}
