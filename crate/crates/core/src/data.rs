use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// How network outputs are turned into class decisions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Readout {
    /// Index of the largest output against the largest target.
    Argmax,
    /// Sign of the single output against the sign of the target.
    Sign,
}

impl Readout {
    pub fn is_correct(self, output: &[f64], target: &[f64]) -> bool {
        match self {
            Readout::Argmax => argmax(output) == argmax(target),
            Readout::Sign => (output[0] >= 0.0) == (target[0] >= 0.0),
        }
    }
}

fn argmax(xs: &[f64]) -> usize {
    xs.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best })
        .0
}

/// Labelled input vectors, raw (dimensionless, within `[-1, 1]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
    pub readout: Readout,
}

impl Dataset {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<Vec<f64>>, readout: Readout) -> Result<Self> {
        if inputs.is_empty() {
            return Err(SimError::InvalidParameter("dataset is empty".into()));
        }
        if inputs.len() != targets.len() {
            return Err(SimError::DimensionMismatch {
                expected: inputs.len(),
                actual: targets.len(),
            });
        }
        let (n_in, n_out) = (inputs[0].len(), targets[0].len());
        for (x, t) in inputs.iter().zip(&targets) {
            if x.len() != n_in {
                return Err(SimError::DimensionMismatch { expected: n_in, actual: x.len() });
            }
            if t.len() != n_out {
                return Err(SimError::DimensionMismatch { expected: n_out, actual: t.len() });
            }
        }
        if readout == Readout::Sign && n_out != 1 {
            return Err(SimError::InvalidParameter("sign readout needs a single output".into()));
        }
        Ok(Self { inputs, targets, readout })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs[0].len()
    }

    pub fn output_dim(&self) -> usize {
        self.targets[0].len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], &[f64])> {
        self.inputs.iter().map(Vec::as_slice).zip(self.targets.iter().map(Vec::as_slice))
    }

    /// Fraction of points whose outputs classify correctly.
    pub fn accuracy(&self, outputs: &[Vec<f64>]) -> f64 {
        let hits = outputs
            .iter()
            .zip(&self.targets)
            .filter(|(y, t)| self.readout.is_correct(y, t))
            .count();
        hits as f64 / self.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn readouts() {
        assert!(Readout::Argmax.is_correct(&[0.1, 0.7, -0.2], &[-1.0, 1.0, -1.0]));
        assert!(!Readout::Argmax.is_correct(&[0.8, 0.7, -0.2], &[-1.0, 1.0, -1.0]));
        assert!(Readout::Sign.is_correct(&[-0.3], &[-1.0]));
        assert!(!Readout::Sign.is_correct(&[0.3], &[-1.0]));
    }

    #[test]
    fn validates_shapes() {
        assert!(Dataset::new(vec![], vec![], Readout::Sign).is_err());
        assert!(Dataset::new(vec![vec![0.0]], vec![vec![1.0, 1.0]], Readout::Sign).is_err());
        assert!(Dataset::new(vec![vec![0.0], vec![0.0, 1.0]], vec![vec![1.0], vec![1.0]], Readout::Sign).is_err());
        let d = Dataset::new(vec![vec![0.0], vec![0.5]], vec![vec![1.0], vec![-1.0]], Readout::Sign).unwrap();
        assert_eq!(d.accuracy(&[vec![0.2], vec![0.1]]), 0.5);
    }
}
