//! Importance-based variable selection.
//!
//! For every pair of classes `(i, j)` of a trained [`MlrModel`] the
//! discriminant `f_ij(x) = ((w_i − w_j)·x + b_i − b_j) / ‖w_i − w_j‖₂` has unit
//! normal `v_ij`, and `|∂f_ij/∂x_d| = |v_ij[d]|`. Dividing by the largest
//! component gives the pair importance `s_ij[d]`; the task importance `c[d]` is
//! its maximum over pairs. Variables with `c[d] < c_th` are dropped, and the
//! train / score / drop loop repeats until the mask settles.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, VariableMask};
use crate::error::{Error, Result};
use crate::mlr::{train_mlr_with_history, MlrModel, TrainConfig};
use crate::numerics::{norm2, Rng, Scalar};
use crate::pgm::GrayImage;

/// Unit normal of the discriminant hyperplane between 1-based classes `i` and `j`.
pub fn normal_vector<T: Scalar>(m: &MlrModel<T>, i: usize, j: usize) -> Result<Vec<T>> {
    let k = m.num_classes();
    if i == j || i == 0 || j == 0 || i > k || j > k {
        return Err(Error::InvalidParameter(format!(
            "class pair ({i}, {j}) invalid for {k} classes"
        )));
    }
    let diff: Vec<T> = m
        .class_weights(i)
        .iter()
        .zip(m.class_weights(j))
        .map(|(&a, &b)| a - b)
        .collect();
    let norm = norm2(&diff);
    if norm == T::zero() {
        return Err(Error::DegeneratePair(i, j));
    }
    Ok(diff.into_iter().map(|v| v / norm).collect())
}

/// `|v_d| / ‖v‖_∞`; the largest component is exactly 1.
pub fn pair_importance<T: Scalar>(v: &[T]) -> Result<Vec<T>> {
    let max = v.iter().fold(T::zero(), |acc, x| acc.max(x.abs()));
    if max == T::zero() {
        return Err(Error::CannotScore);
    }
    Ok(v.iter().map(|x| x.abs() / max).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct PairImportance<T: Scalar> {
    pub i: usize,
    pub j: usize,
    pub importance: Vec<T>,
}

/// Per-variable importances `c_d ∈ [0, 1]` of one pre-classifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ImportanceReport<T: Scalar> {
    pub importance: Vec<T>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub pairs: Option<Vec<PairImportance<T>>>,
    pub iteration: usize,
}

impl<T: Scalar> ImportanceReport<T> {
    /// `variable,importance` rows, variables numbered from 1.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("variable,importance\n");
        for (d, c) in self.importance.iter().enumerate() {
            writeln!(s, "{},{}", d + 1, c).unwrap();
        }
        s
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// Importance map: 1 is white, 0 is black.
    pub fn to_image(&self, shape: (usize, usize)) -> Result<GrayImage> {
        let (h, w) = shape;
        GrayImage::new(
            w,
            h,
            self.importance.iter().map(|c| c.to_f64_lossy()).collect(),
        )
    }
}

/// Importances over unordered class pairs `i < j`, skipping degenerate pairs.
pub fn task_importance<T: Scalar>(m: &MlrModel<T>) -> Result<ImportanceReport<T>> {
    score(m, false)
}

/// As [`task_importance`], also keeping each pair's `s_ij`.
pub fn task_importance_with_pairs<T: Scalar>(m: &MlrModel<T>) -> Result<ImportanceReport<T>> {
    score(m, true)
}

fn score<T: Scalar>(m: &MlrModel<T>, keep_pairs: bool) -> Result<ImportanceReport<T>> {
    let k = m.num_classes();
    let mut c = vec![T::zero(); m.num_inputs()];
    let mut pairs = Vec::new();
    let mut scored = false;
    for i in 1..=k {
        for j in i + 1..=k {
            let v = match normal_vector(m, i, j) {
                Ok(v) => v,
                Err(Error::DegeneratePair(..)) => continue,
                Err(e) => return Err(e),
            };
            let s = pair_importance(&v)?;
            c.iter_mut().zip(&s).for_each(|(c, &s)| *c = c.max(s));
            scored = true;
            if keep_pairs {
                pairs.push(PairImportance { i, j, importance: s });
            }
        }
    }
    if !scored {
        return Err(Error::CannotScore);
    }
    Ok(ImportanceReport {
        importance: c,
        pairs: keep_pairs.then_some(pairs),
        iteration: 0,
    })
}

/// Keeps bit `d` iff it was kept in `prev` and `c_d ≥ threshold`.
pub fn update_mask<T: Scalar>(c: &[T], threshold: T, prev: &VariableMask) -> Result<VariableMask> {
    if c.len() != prev.len() {
        return Err(Error::Dimension {
            context: "importance vector",
            expected: prev.len(),
            found: c.len(),
        });
    }
    let bits: Vec<bool> = c
        .iter()
        .zip(prev.bits())
        .map(|(&c, &keep)| keep && c >= threshold)
        .collect();
    let mask = VariableMask::from_bits(bits);
    if mask.popcount() == 0 {
        return Err(Error::EmptyMask {
            threshold: threshold.to_f64_lossy(),
        });
    }
    Ok(mask)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct IvsConfig<T: Scalar> {
    pub threshold: T,
    pub max_iterations: usize,
    pub mlr: TrainConfig<T>,
}

impl<T: Scalar> IvsConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold >= T::zero() && self.threshold <= T::one()) {
            return Err(Error::InvalidParameter(format!(
                "importance threshold must lie in [0, 1], got {}",
                self.threshold
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter("max_iterations must be at least 1".into()));
        }
        self.mlr.validate()
    }
}

/// One pre-classifier of the selection loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct IvsStep<T: Scalar> {
    pub iteration: usize,
    /// Variables the pre-classifier was trained on.
    pub popcount: usize,
    pub valid_error: f64,
    pub importance: ImportanceReport<T>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    MaskUnchanged,
    ValidationWorse,
    MaxIterations,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct IvsResult<T: Scalar> {
    pub mask: VariableMask,
    pub history: Vec<IvsStep<T>>,
    pub stop: StopReason,
}

/// The selection loop.
///
/// Starts from the all-ones mask. Each iteration trains a fresh pre-classifier
/// on the masked data (its seed drawn from `rng`), scores it on `valid`, and:
///
/// * stops with the best-validation mask if its error exceeds the best so far;
/// * stops if its mask equals the previous iteration's;
/// * otherwise shrinks the mask by the importance threshold.
///
/// When `max_iterations` runs out the last updated mask is returned.
pub fn run_ivs<T: Scalar>(
    train: &Dataset<T>,
    valid: &Dataset<T>,
    cfg: &IvsConfig<T>,
    rng: &mut Rng,
) -> Result<IvsResult<T>> {
    cfg.validate()?;
    let mut mask = VariableMask::all_ones(train.num_vars());
    let mut prev: Option<VariableMask> = None;
    let mut best: Option<(f64, VariableMask)> = None;
    let mut history = Vec::new();

    for iteration in 1..=cfg.max_iterations {
        let mlr_cfg = TrainConfig {
            seed: rng.next_u64(),
            ..cfg.mlr.clone()
        };
        let fit = train_mlr_with_history(train, valid, &mask, &mlr_cfg)?;
        let valid_error = fit.valid_errors[fit.best_epoch];
        let mut importance = task_importance(&fit.model)?;
        importance.iteration = iteration;
        let c = importance.importance.clone();
        history.push(IvsStep {
            iteration,
            popcount: mask.popcount(),
            valid_error,
            importance,
        });

        if let Some((best_error, best_mask)) = &best {
            if valid_error > *best_error {
                return Ok(IvsResult {
                    mask: best_mask.clone(),
                    history,
                    stop: StopReason::ValidationWorse,
                });
            }
        }
        // ties go to the later, smaller mask
        best = Some((valid_error, mask.clone()));

        if prev.as_ref() == Some(&mask) {
            return Ok(IvsResult {
                mask,
                history,
                stop: StopReason::MaskUnchanged,
            });
        }
        let next = update_mask(&c, cfg.threshold, &mask)?;
        prev = Some(std::mem::replace(&mut mask, next));
    }
    Ok(IvsResult {
        mask,
        history,
        stop: StopReason::MaxIterations,
    })
}
