//! Synthetic observational data with known ground truth.
//!
//! For unit `i` the generator draws, in this order, from a `ChaCha8Rng`
//! seeded with `seed_from_u64(cfg.seed)`:
//!
//! * `X_i`: `p` independent standard normals,
//! * `D_i ~ Bernoulli(e(X_i))` with `e(x) = ε + (1 − 2ε)·σ(x₀)`,
//! * one noise draw `ν_i ~ N(0, noise_sd²)` shared by both potential outcomes.
//!
//! The treatment effect is `τ(x) = x₀ + x₁·𝟙[x₁ > 0]`, the baseline is
//! `b(x) = 0.5·x₂` (zero when `p = 2`), `Y0 = b(X) + ν` and `Y1 = Y0 + τ(X)`.
//! Treatment assignment is confounded through `x₀` only.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{self, DataError, Dataset};

/// Extra columns written after `x*,d,y` by [`SyntheticDataset::write_csv`].
pub const GROUND_TRUTH_COLUMNS: [&str; 4] = ["tau0", "e", "y0", "y1"];

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DgpConfig {
    pub n: usize,
    pub p: usize,
    /// Overlap floor: propensities lie in `[epsilon, 1 - epsilon]`.
    pub epsilon: f64,
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for DgpConfig {
    fn default() -> Self {
        Self {
            n: 10_000,
            p: 10,
            epsilon: 0.1,
            noise_sd: 1.0,
            seed: 20_240_501,
        }
    }
}

impl DgpConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n == 0 {
            return Err(SynthError::Config("n must be at least 1".into()));
        }
        if self.p < 2 {
            return Err(SynthError::Config(
                "p must be at least 2 (the effect depends on two coordinates)".into(),
            ));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return Err(SynthError::Config(format!(
                "epsilon must lie in (0, 0.5), got {}",
                self.epsilon
            )));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(SynthError::Config(format!(
                "noise_sd must be finite and non-negative, got {}",
                self.noise_sd
            )));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    pub fn with_n(&self, n: usize) -> Self {
        Self { n, ..self.clone() }
    }
}

fn logistic(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// True conditional average treatment effect.
pub fn cate(x: &[f64]) -> f64 {
    x[0] + if x[1] > 0.0 { x[1] } else { 0.0 }
}

pub fn propensity(x: &[f64], epsilon: f64) -> f64 {
    epsilon + (1.0 - 2.0 * epsilon) * logistic(x[0])
}

pub fn baseline(x: &[f64]) -> f64 {
    x.get(2).map_or(0.0, |v| 0.5 * v)
}

/// A dataset together with the quantities that generated it.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub base: Dataset,
    pub tau0: Vec<f64>,
    pub propensity: Vec<f64>,
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
}

pub fn generate(cfg: &DgpConfig) -> Result<SyntheticDataset, SynthError> {
    cfg.validate()?;
    let (n, p) = (cfg.n, cfg.p);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.noise_sd).map_err(|e| SynthError::Config(e.to_string()))?;

    let mut xs = Vec::with_capacity(n * p);
    let mut treatments = Vec::with_capacity(n);
    let mut outcomes = Vec::with_capacity(n);
    let mut tau0 = Vec::with_capacity(n);
    let mut props = Vec::with_capacity(n);
    let mut y0s = Vec::with_capacity(n);
    let mut y1s = Vec::with_capacity(n);

    let mut x = vec![0.0; p];
    for _ in 0..n {
        for v in x.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        let e = propensity(&x, cfg.epsilon);
        let d = u8::from(rng.random::<f64>() < e);
        let nu = noise.sample(&mut rng);
        let tau = cate(&x);
        let y0 = baseline(&x) + nu;
        let y1 = y0 + tau;

        xs.extend_from_slice(&x);
        treatments.push(d);
        outcomes.push(if d == 1 { y1 } else { y0 });
        tau0.push(tau);
        props.push(e);
        y0s.push(y0);
        y1s.push(y1);
    }

    let covariates = Array2::from_shape_vec((n, p), xs).expect("n * p draws");
    Ok(SyntheticDataset {
        base: Dataset::new(covariates, treatments, outcomes)?,
        tau0,
        propensity: props,
        y0: y0s,
        y1: y1s,
    })
}

/// Treat iff the true effect is non-negative.
pub fn true_first_best(tau0: &[f64]) -> Vec<u8> {
    tau0.iter().map(|&t| u8::from(t >= 0.0)).collect()
}

impl SyntheticDataset {
    pub fn n(&self) -> usize {
        self.base.n()
    }

    pub fn first_best(&self) -> Vec<u8> {
        true_first_best(&self.tau0)
    }

    /// Writes `x*,d,y,tau0,e,y0,y1`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        let path = path.as_ref();
        let mut out = std::io::BufWriter::new(File::create(path).map_err(data::io_err(path))?);
        data::write_rows(&mut out, &self.base, &GROUND_TRUTH_COLUMNS, |i| {
            vec![self.tau0[i], self.propensity[i], self.y0[i], self.y1[i]]
        })
        .map_err(data::io_err(path))?;
        out.flush().map_err(data::io_err(path))
    }

    /// Reads a file written by [`SyntheticDataset::write_csv`]. Fails with
    /// [`DataError::MissingColumn`] when a ground-truth column is absent.
    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let path = path.as_ref();
        let base = data::load_csv(path, &data::CsvSchema::default())?;

        let mut reader = data::open_csv(path)?;
        let header = reader.headers().map_err(data::csv_err(path))?.clone();
        let cols = GROUND_TRUTH_COLUMNS
            .iter()
            .map(|c| data::column_index(&header, c))
            .collect::<Result<Vec<_>, _>>()?;
        let mut truth: [Vec<f64>; 4] = Default::default();
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(data::csv_err(path))?;
            for (k, &col) in cols.iter().enumerate() {
                truth[k].push(data::parse_f64(&record, col, &header, i + 1)?);
            }
        }
        let [tau0, propensity, y0, y1] = truth;
        Ok(Self {
            base,
            tau0,
            propensity,
            y0,
            y1,
        })
    }
}
