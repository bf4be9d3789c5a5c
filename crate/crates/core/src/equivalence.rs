//! Exhaustive check that welfare maximization over a finite policy class and
//! least squares over the matching `{-1, 1}`-valued predictors pick the same
//! policies.
//!
//! A policy class is given by a partition of the sample into `M` cells; each
//! policy picks one action per cell, so it is encoded as an `M`-bit mask
//! (bit `c` set means cell `c` is treated). Both sides are solved by scanning
//! all `2^M` candidates and summing over every unit, without using the
//! cellwise structure.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Largest number of cells accepted for enumeration.
pub const MAX_CELLS: usize = 12;

/// Objective values within this distance of the optimum count as ties.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum EquivalenceError {
    #[error("policy class has {0} cells; enumeration is capped at {MAX_CELLS}")]
    TooLarge(usize),
    #[error("policy class needs at least one cell")]
    NoCells,
    #[error("cell {0} is empty")]
    EmptyCell(usize),
    #[error("unit {unit} assigned to cell {cell}, but there are only {cells} cells")]
    CellOutOfRange {
        unit: usize,
        cell: usize,
        cells: usize,
    },
    #[error("expected {expected} values, got {found}")]
    LengthMismatch { expected: usize, found: usize },
}

/// A partition of `n` units into `M ≤ 12` nonempty cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FinitePolicyClass {
    cell_of: Vec<usize>,
    cells: usize,
}

/// `{-1, 1}` value per cell.
pub type SignVector = Vec<i8>;

impl FinitePolicyClass {
    /// `cell_of[i]` is the cell of unit `i`.
    pub fn new(cell_of: Vec<usize>, cells: usize) -> Result<Self, EquivalenceError> {
        if cells == 0 {
            return Err(EquivalenceError::NoCells);
        }
        if cells > MAX_CELLS {
            return Err(EquivalenceError::TooLarge(cells));
        }
        let mut seen = vec![false; cells];
        for (unit, &cell) in cell_of.iter().enumerate() {
            if cell >= cells {
                return Err(EquivalenceError::CellOutOfRange { unit, cell, cells });
            }
            seen[cell] = true;
        }
        if let Some(c) = seen.iter().position(|s| !s) {
            return Err(EquivalenceError::EmptyCell(c));
        }
        Ok(Self { cell_of, cells })
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn n(&self) -> usize {
        self.cell_of.len()
    }

    pub fn cell_of(&self, unit: usize) -> usize {
        self.cell_of[unit]
    }

    /// Number of policies in the class, `2^M`.
    pub fn size(&self) -> usize {
        1 << self.cells
    }

    /// Action (0 or 1) that policy `mask` assigns to `unit`.
    fn action(&self, mask: usize, unit: usize) -> bool {
        mask >> self.cell_of[unit] & 1 == 1
    }

    fn check_len(&self, v: &[f64]) -> Result<(), EquivalenceError> {
        if v.len() != self.n() {
            return Err(EquivalenceError::LengthMismatch {
                expected: self.n(),
                found: v.len(),
            });
        }
        Ok(())
    }

    /// Converts a policy mask to its per-cell `g = 2π − 1` representation.
    pub fn mask_to_signs(&self, mask: usize) -> SignVector {
        (0..self.cells)
            .map(|c| if mask >> c & 1 == 1 { 1 } else { -1 })
            .collect()
    }
}

fn near_optimal(values: &[f64], best: f64) -> BTreeSet<usize> {
    values
        .iter()
        .enumerate()
        .filter(|(_, &v)| (v - best).abs() <= TIE_TOLERANCE)
        .map(|(k, _)| k)
        .collect()
}

/// Sample welfare `(1/n) Σ y1·π + y0·(1−π)` of policy `mask`.
pub fn sample_welfare(pc: &FinitePolicyClass, mask: usize, y1: &[f64], y0: &[f64]) -> f64 {
    let total: f64 = (0..pc.n())
        .map(|i| if pc.action(mask, i) { y1[i] } else { y0[i] })
        .sum();
    total / pc.n() as f64
}

/// Sample squared error `(1/n) Σ (τ_i − g(cell(i)))²`.
pub fn restricted_mse(pc: &FinitePolicyClass, signs: &[i8], tau: &[f64]) -> f64 {
    let total: f64 = (0..pc.n())
        .map(|i| (tau[i] - f64::from(signs[pc.cell_of(i)])).powi(2))
        .sum();
    total / pc.n() as f64
}

/// All welfare-maximizing policies, as masks.
pub fn brute_force_welfare_argmax(
    pc: &FinitePolicyClass,
    y1: &[f64],
    y0: &[f64],
) -> Result<BTreeSet<usize>, EquivalenceError> {
    pc.check_len(y1)?;
    pc.check_len(y0)?;
    let values: Vec<f64> = (0..pc.size())
        .map(|mask| sample_welfare(pc, mask, y1, y0))
        .collect();
    let best = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(near_optimal(&values, best))
}

/// All `{-1, 1}` cell predictors minimizing the sample squared error to `tau`.
pub fn brute_force_restricted_lsq_argmin(
    pc: &FinitePolicyClass,
    tau: &[f64],
) -> Result<BTreeSet<SignVector>, EquivalenceError> {
    pc.check_len(tau)?;
    let candidates: Vec<SignVector> = (0..pc.size()).map(|m| pc.mask_to_signs(m)).collect();
    let values: Vec<f64> = candidates
        .iter()
        .map(|g| restricted_mse(pc, g, tau))
        .collect();
    let best = values.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(near_optimal(&values, best)
        .into_iter()
        .map(|k| candidates[k].clone())
        .collect())
}

/// Deliberate faults for exercising the checker itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Maps policies to predictors with `g = 1 − 2π` instead of `2π − 1`.
    SignFlip,
}

/// Whether `{2π − 1 : π welfare-optimal}` equals the least-squares argmin set
/// computed with `tau = y1 − y0`.
pub fn check_theorem1(
    pc: &FinitePolicyClass,
    y1: &[f64],
    y0: &[f64],
) -> Result<bool, EquivalenceError> {
    check_with_fault(pc, y1, y0, None)
}

pub fn check_with_fault(
    pc: &FinitePolicyClass,
    y1: &[f64],
    y0: &[f64],
    fault: Option<Fault>,
) -> Result<bool, EquivalenceError> {
    let welfare = brute_force_welfare_argmax(pc, y1, y0)?;
    let tau: Vec<f64> = y1.iter().zip(y0).map(|(a, b)| a - b).collect();
    let lsq = brute_force_restricted_lsq_argmin(pc, &tau)?;
    let mapped: BTreeSet<SignVector> = welfare
        .into_iter()
        .map(|mask| {
            let g = pc.mask_to_signs(mask);
            match fault {
                Some(Fault::SignFlip) => g.into_iter().map(|v| -v).collect(),
                None => g,
            }
        })
        .collect();
    Ok(mapped == lsq)
}

/// Optimal actions from the cellwise sign rule: a cell may be treated iff its
/// summed effect is ≥ 0 and may be left untreated iff it is ≤ 0.
pub fn cellwise_optimum(pc: &FinitePolicyClass, tau: &[f64]) -> BTreeSet<usize> {
    let mut sums = vec![0.0; pc.cells()];
    for (i, t) in tau.iter().enumerate() {
        sums[pc.cell_of(i)] += t;
    }
    (0..pc.size())
        .filter(|&mask| {
            sums.iter().enumerate().all(|(c, &s)| {
                let treat = mask >> c & 1 == 1;
                if treat {
                    s >= 0.0
                } else {
                    s <= 0.0
                }
            })
        })
        .collect()
}

/// One randomly drawn instance of the equivalence check.
#[derive(Debug, Clone)]
pub struct Instance {
    pub class: FinitePolicyClass,
    pub y1: Vec<f64>,
    pub y0: Vec<f64>,
}

/// Draws an instance with `M ∈ 1..=max_cells`, `n ∈ 4..=64` (at least `M`).
/// Every fourth instance uses small integer outcomes so that exact ties occur.
pub fn random_instance(rng: &mut impl Rng, trial: usize, max_cells: usize) -> Instance {
    let cells = rng.random_range(1..=max_cells.min(MAX_CELLS));
    let n = rng.random_range(4.max(cells)..=64);
    let mut cell_of: Vec<usize> = (0..n)
        .map(|i| {
            if i < cells {
                i
            } else {
                rng.random_range(0..cells)
            }
        })
        .collect();
    cell_of.shuffle(rng);
    let integer = trial % 4 == 3;
    let draw = |rng: &mut dyn rand::RngCore| -> f64 {
        if integer {
            f64::from(rng.random_range(-2i32..=2))
        } else {
            rng.random_range(-3.0..3.0)
        }
    };
    let y0: Vec<f64> = (0..n).map(|_| draw(rng)).collect();
    let y1: Vec<f64> = (0..n).map(|_| draw(rng)).collect();
    Instance {
        class: FinitePolicyClass::new(cell_of, cells).expect("every cell seeded with a unit"),
        y1,
        y0,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuiteSummary {
    pub trials: usize,
    pub passed: usize,
    pub failed: usize,
    /// Instances where the welfare argmax had more than one element.
    pub with_ties: usize,
}

impl SuiteSummary {
    pub fn all_passed(&self) -> bool {
        self.failed == 0
    }
}

/// Runs `trials` random instances (`M ∈ 1..=8`) from a seeded stream.
pub fn run_suite(trials: usize, seed: u64, fault: Option<Fault>) -> SuiteSummary {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut summary = SuiteSummary {
        trials,
        passed: 0,
        failed: 0,
        with_ties: 0,
    };
    for trial in 0..trials {
        let inst = random_instance(&mut rng, trial, 8);
        let ok = check_with_fault(&inst.class, &inst.y1, &inst.y0, fault)
            .expect("generated instances are well-formed");
        if brute_force_welfare_argmax(&inst.class, &inst.y1, &inst.y0)
            .map(|s| s.len() > 1)
            .unwrap_or(false)
        {
            summary.with_ties += 1;
        }
        if ok {
            summary.passed += 1;
        } else {
            summary.failed += 1;
        }
    }
    summary
}
