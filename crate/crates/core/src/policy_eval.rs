//! Policy value, regret and inverse-propensity welfare.

use std::fmt;
use std::fmt::Write as _;

use thiserror::Error;

use crate::data::Dataset;
use crate::synth::SyntheticDataset;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("assignment has {found} entries, expected {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("unit {unit}: propensity {value} outside (0, 1)")]
    PropensityBounds { unit: usize, value: f64 },
    #[error("unit {unit}: assignment must be 0 or 1, got {value}")]
    InvalidAction { unit: usize, value: u8 },
}

fn check_assignment(assign: &[u8], n: usize) -> Result<(), EvalError> {
    if assign.len() != n {
        return Err(EvalError::LengthMismatch {
            expected: n,
            found: assign.len(),
        });
    }
    if let Some(unit) = assign.iter().position(|&a| a > 1) {
        return Err(EvalError::InvalidAction {
            unit,
            value: assign[unit],
        });
    }
    Ok(())
}

/// `(1/n) Σ τ0_i · π_i`: welfare gain over treating nobody.
pub fn policy_value(assign: &[u8], tau0: &[f64]) -> Result<f64, EvalError> {
    check_assignment(assign, tau0.len())?;
    let total: f64 = assign
        .iter()
        .zip(tau0)
        .filter(|(&a, _)| a == 1)
        .map(|(_, &t)| t)
        .sum();
    Ok(total / tau0.len() as f64)
}

pub fn oracle_policy_value(assign: &[u8], sd: &SyntheticDataset) -> Result<f64, EvalError> {
    policy_value(assign, &sd.tau0)
}

/// Mean true effect among treated units, `None` if nobody is treated.
pub fn mean_effect_among_treated(assign: &[u8], tau0: &[f64]) -> Result<Option<f64>, EvalError> {
    check_assignment(assign, tau0.len())?;
    let (sum, count) = assign
        .iter()
        .zip(tau0)
        .filter(|(&a, _)| a == 1)
        .fold((0.0, 0usize), |(s, c), (_, &t)| (s + t, c + 1));
    Ok((count > 0).then(|| sum / count as f64))
}

pub fn treated_fraction(assign: &[u8]) -> f64 {
    assign.iter().filter(|&&a| a == 1).count() as f64 / assign.len().max(1) as f64
}

pub fn regret(value: f64, oracle_value: f64) -> f64 {
    oracle_value - value
}

fn check_propensity(propensity: &[f64], n: usize) -> Result<(), EvalError> {
    if propensity.len() != n {
        return Err(EvalError::LengthMismatch {
            expected: n,
            found: propensity.len(),
        });
    }
    if let Some(unit) = propensity.iter().position(|&e| !(e > 0.0 && e < 1.0)) {
        return Err(EvalError::PropensityBounds {
            unit,
            value: propensity[unit],
        });
    }
    Ok(())
}

/// `(1/n) Σ [π D Y / e + (1−π)(1−D) Y / (1−e)]` with known propensities.
pub fn ipw_welfare(assign: &[u8], ds: &Dataset, propensity: &[f64]) -> Result<f64, EvalError> {
    check_assignment(assign, ds.n())?;
    check_propensity(propensity, ds.n())?;
    let total: f64 = (0..ds.n())
        .map(|i| {
            let (y, e) = (ds.y(i), propensity[i]);
            match (assign[i] == 1, ds.treated(i)) {
                (true, true) => y / e,
                (false, false) => y / (1.0 - e),
                _ => 0.0,
            }
        })
        .sum();
    Ok(total / ds.n() as f64)
}

/// A sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

fn mean_and_se(values: &[f64]) -> Estimate {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    Estimate {
        value: mean,
        std_error: (var / n).sqrt(),
    }
}

/// IPW welfare of `assign` minus IPW welfare of treating nobody, with the
/// per-unit standard error. Equals `ipw_welfare(π) − ipw_welfare(0)` up to rounding.
pub fn ipw_welfare_gain(
    assign: &[u8],
    ds: &Dataset,
    propensity: &[f64],
) -> Result<Estimate, EvalError> {
    check_assignment(assign, ds.n())?;
    check_propensity(propensity, ds.n())?;
    let terms: Vec<f64> = (0..ds.n())
        .map(|i| ipw_gain_term(assign[i], ds, propensity, i))
        .collect();
    Ok(mean_and_se(&terms))
}

fn ipw_gain_term(a: u8, ds: &Dataset, propensity: &[f64], i: usize) -> f64 {
    if a == 0 {
        return 0.0;
    }
    let (y, e) = (ds.y(i), propensity[i]);
    if ds.treated(i) {
        y / e
    } else {
        -y / (1.0 - e)
    }
}

/// IPW gain minus the true gain, per unit; its mean is zero in expectation.
/// Returns the mean discrepancy and its standard error.
pub fn ipw_gain_discrepancy(assign: &[u8], sd: &SyntheticDataset) -> Result<Estimate, EvalError> {
    check_assignment(assign, sd.n())?;
    check_propensity(&sd.propensity, sd.n())?;
    let terms: Vec<f64> = (0..sd.n())
        .map(|i| {
            ipw_gain_term(assign[i], &sd.base, &sd.propensity, i)
                - f64::from(assign[i]) * sd.tau0[i]
        })
        .collect();
    Ok(mean_and_se(&terms))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub method: String,
    pub value: f64,
    pub regret: f64,
    pub treated_fraction: f64,
    pub mean_tau_treated: Option<f64>,
    /// IPW welfare gain using the known propensities.
    pub ipw_gain: f64,
}

/// One row per method, the oracle policy first.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

pub const ORACLE_LABEL: &str = "Oracle policy";

impl EvalReport {
    /// Evaluates each named assignment against the ground truth in `sd`.
    pub fn build(sd: &SyntheticDataset, methods: &[(&str, &[u8])]) -> Result<Self, EvalError> {
        let oracle = sd.first_best();
        let oracle_value = policy_value(&oracle, &sd.tau0)?;
        let mut rows = Vec::with_capacity(methods.len() + 1);
        let named =
            std::iter::once((ORACLE_LABEL, oracle.as_slice())).chain(methods.iter().copied());
        for (name, assign) in named {
            let value = policy_value(assign, &sd.tau0)?;
            rows.push(EvalRow {
                method: name.to_string(),
                value,
                regret: regret(value, oracle_value),
                treated_fraction: treated_fraction(assign),
                mean_tau_treated: mean_effect_among_treated(assign, &sd.tau0)?,
                ipw_gain: ipw_welfare_gain(assign, &sd.base, &sd.propensity)?.value,
            });
        }
        Ok(Self { rows })
    }

    pub fn oracle(&self) -> &EvalRow {
        &self.rows[0]
    }

    pub fn row(&self, method: &str) -> Option<&EvalRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    /// Machine-readable form, full precision.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("method,policy_value,regret,treated_fraction,mean_tau_treated,ipw_gain\n");
        for r in &self.rows {
            let mtt = r
                .mean_tau_treated
                .map(|v| v.to_string())
                .unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.method, r.value, r.regret, r.treated_fraction, mtt, r.ipw_gain
            )
            .unwrap();
        }
        out
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self
            .rows
            .iter()
            .map(|r| r.method.len())
            .max()
            .unwrap_or(6)
            .max(6);
        writeln!(
            f,
            "{:<width$}  {:>12}  {:>8}  {:>8}  {:>13}  {:>8}",
            "Method", "Policy value", "Regret", "Treated", "CATE|treated", "IPW gain"
        )?;
        for r in &self.rows {
            let mtt = r
                .mean_tau_treated
                .map(|v| format!("{v:.4}"))
                .unwrap_or_else(|| "-".into());
            writeln!(
                f,
                "{:<width$}  {:>12.4}  {:>8.4}  {:>8.4}  {:>13}  {:>8.4}",
                r.method, r.value, r.regret, r.treated_fraction, mtt, r.ipw_gain
            )?;
        }
        Ok(())
    }
}
