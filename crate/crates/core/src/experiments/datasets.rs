use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Readout};
use crate::error::{Result, SimError};
use crate::network::BIAS_INPUT;

/// 3×3 letter grids, 1 = white, 0 = black, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LetterGrids {
    pub z: [[u8; 3]; 3],
    pub v: [[u8; 3]; 3],
    pub n: [[u8; 3]; 3],
}

impl Default for LetterGrids {
    fn default() -> Self {
        Self {
            z: [[1, 1, 1], [0, 1, 0], [1, 1, 1]],
            v: [[1, 0, 1], [1, 0, 1], [0, 1, 0]],
            n: [[1, 0, 1], [1, 1, 1], [1, 0, 1]],
        }
    }
}

impl LetterGrids {
    fn letters(&self) -> [[u8; 9]; 3] {
        let flat = |g: &[[u8; 3]; 3]| {
            let mut out = [0u8; 9];
            for (k, px) in g.iter().flatten().enumerate() {
                out[k] = *px;
            }
            out
        };
        [flat(&self.z), flat(&self.v), flat(&self.n)]
    }

    pub fn validate(&self) -> Result<()> {
        let letters = self.letters();
        if letters.iter().flatten().any(|&p| p > 1) {
            return Err(SimError::Config("letter pixels must be 0 or 1".into()));
        }
        for a in 0..3 {
            for b in a + 1..3 {
                let d = letters[a].iter().zip(&letters[b]).filter(|(x, y)| x != y).count();
                if d < 2 {
                    return Err(SimError::Config("letter grids must differ in at least two pixels".into()));
                }
            }
        }
        Ok(())
    }
}

fn encode(pixels: &[u8; 9]) -> Vec<f64> {
    let mut x: Vec<f64> = pixels.iter().map(|&p| if p == 1 { 1.0 } else { -1.0 }).collect();
    x.push(BIAS_INPUT);
    x
}

/// The three ideal letters followed by every single-pixel flip of each
/// (30 images). Inputs carry the constant bias as their 10th entry.
pub fn make_zvn(grids: &LetterGrids) -> Result<Dataset> {
    grids.validate()?;
    let mut inputs = Vec::with_capacity(30);
    let mut targets = Vec::with_capacity(30);
    let one_hot = |k: usize| (0..3).map(|i| if i == k { 1.0 } else { -1.0 }).collect::<Vec<_>>();
    let letters = grids.letters();
    for (k, letter) in letters.iter().enumerate() {
        inputs.push(encode(letter));
        targets.push(one_hot(k));
    }
    for (k, letter) in letters.iter().enumerate() {
        for px in 0..9 {
            let mut noisy = *letter;
            noisy[px] ^= 1;
            inputs.push(encode(&noisy));
            targets.push(one_hot(k));
        }
    }
    Dataset::new(inputs, targets, Readout::Argmax)
}

pub const CIRCLE_INNER_RADIUS: f64 = 0.5;
pub const CIRCLE_OUTER_RADIUS: f64 = 0.7;

/// Uniform points in `[-1, 1]²` labelled +1 inside radius 0.5 and −1
/// outside radius 0.7; the annulus in between is left empty.
pub fn make_circle(n_points: usize, seed: u64) -> Result<Dataset> {
    if n_points == 0 {
        return Err(SimError::InvalidParameter("circle dataset needs at least one point".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inputs = Vec::with_capacity(n_points);
    let mut targets = Vec::with_capacity(n_points);
    while inputs.len() < n_points {
        let x1: f64 = rng.gen_range(-1.0..=1.0);
        let x2: f64 = rng.gen_range(-1.0..=1.0);
        let r = x1.hypot(x2);
        let label = if r <= CIRCLE_INNER_RADIUS {
            1.0
        } else if r >= CIRCLE_OUTER_RADIUS {
            -1.0
        } else {
            continue;
        };
        inputs.push(vec![x1, x2]);
        targets.push(vec![label]);
    }
    Dataset::new(inputs, targets, Readout::Sign)
}
