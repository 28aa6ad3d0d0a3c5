//! Multinomial logistic regression: the IVS pre-classifier and the stack's top layer.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, VariableMask};
use crate::error::{Error, Result};
use crate::numerics::{argmax, log_sum_exp, softmax, Matrix, Rng, Scalar};

/// Per-class weight rows (`K × M`) and biases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MlrRecord<T>", into = "MlrRecord<T>", bound = "T: Scalar")]
pub struct MlrModel<T: Scalar> {
    weights: Matrix<T>,
    biases: Vec<T>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct MlrRecord<T: Scalar> {
    num_classes: usize,
    num_inputs: usize,
    weights: Matrix<T>,
    biases: Vec<T>,
}

impl<T: Scalar> From<MlrModel<T>> for MlrRecord<T> {
    fn from(m: MlrModel<T>) -> Self {
        MlrRecord {
            num_classes: m.num_classes(),
            num_inputs: m.num_inputs(),
            weights: m.weights,
            biases: m.biases,
        }
    }
}

impl<T: Scalar> TryFrom<MlrRecord<T>> for MlrModel<T> {
    type Error = Error;

    fn try_from(r: MlrRecord<T>) -> Result<Self> {
        if r.weights.rows() != r.num_classes || r.weights.cols() != r.num_inputs {
            return Err(Error::Dimension {
                context: "serialized mlr weights",
                expected: r.num_classes * r.num_inputs,
                found: r.weights.rows() * r.weights.cols(),
            });
        }
        MlrModel::from_parts(r.weights, r.biases)
    }
}

impl<T: Scalar> MlrModel<T> {
    pub fn zeros(num_classes: usize, num_inputs: usize) -> Self {
        MlrModel {
            weights: Matrix::zeros(num_classes, num_inputs),
            biases: vec![T::zero(); num_classes],
        }
    }

    pub fn from_parts(weights: Matrix<T>, biases: Vec<T>) -> Result<Self> {
        if weights.rows() < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 classes, got {}",
                weights.rows()
            )));
        }
        if biases.len() != weights.rows() {
            return Err(Error::Dimension {
                context: "mlr biases",
                expected: weights.rows(),
                found: biases.len(),
            });
        }
        if !weights.is_finite() || biases.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidParameter("mlr parameters must be finite".into()));
        }
        Ok(MlrModel { weights, biases })
    }

    pub fn num_classes(&self) -> usize {
        self.weights.rows()
    }

    pub fn num_inputs(&self) -> usize {
        self.weights.cols()
    }

    pub fn weights(&self) -> &Matrix<T> {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut Matrix<T> {
        &mut self.weights
    }

    pub fn biases(&self) -> &[T] {
        &self.biases
    }

    pub fn biases_mut(&mut self) -> &mut [T] {
        &mut self.biases
    }

    /// Weight row of the 1-based class `class`.
    pub fn class_weights(&self, class: usize) -> &[T] {
        self.weights.row(class - 1)
    }

    fn check_input(&self, x: &[T]) -> Result<()> {
        if x.len() != self.num_inputs() {
            return Err(Error::Dimension {
                context: "mlr input",
                expected: self.num_inputs(),
                found: x.len(),
            });
        }
        Ok(())
    }

    pub fn logits(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_input(x)?;
        let mut z = self.weights.mul_vec(x);
        z.iter_mut().zip(&self.biases).for_each(|(z, &b)| *z += b);
        Ok(z)
    }

    /// Softmax posteriors `σ_i(x)`.
    pub fn predict_proba(&self, x: &[T]) -> Result<Vec<T>> {
        Ok(softmax(&self.logits(x)?))
    }

    /// 1-based predicted class; ties go to the lowest class.
    pub fn predict(&self, x: &[T]) -> Result<usize> {
        Ok(argmax(&self.logits(x)?) + 1)
    }
}

/// Stochastic gradient descent settings with early stopping on validation error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TrainConfig<T: Scalar> {
    pub learning_rate: T,
    pub max_epochs: usize,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub minibatch_size: usize,
    /// L2 penalty `l2/2 · ‖W‖²` on the weights (not the biases).
    #[serde(default)]
    pub l2: T,
}

impl<T: Scalar> TrainConfig<T> {
    pub fn new(learning_rate: f64, max_epochs: usize, patience: usize, seed: u64) -> Self {
        TrainConfig {
            learning_rate: T::of(learning_rate),
            max_epochs,
            patience,
            seed,
            minibatch_size: 1,
            l2: T::zero(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > T::zero()) {
            return Err(Error::InvalidParameter(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.minibatch_size == 0 || self.patience == 0 {
            return Err(Error::InvalidParameter(
                "minibatch size and patience must be at least 1".into(),
            ));
        }
        if !(self.l2 >= T::zero()) {
            return Err(Error::InvalidParameter("l2 must be non-negative".into()));
        }
        Ok(())
    }
}

/// Gradient of the mean cross-entropy with respect to every parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct MlrGrad<T: Scalar> {
    pub weights: Matrix<T>,
    pub biases: Vec<T>,
}

/// Mean cross-entropy `−log σ_r(x)` over `batch` plus the L2 term, and its gradient.
pub fn loss_and_grad<T: Scalar>(
    model: &MlrModel<T>,
    batch: &[(&[T], usize)],
    l2: T,
) -> Result<(T, MlrGrad<T>)> {
    let mut grad = MlrGrad {
        weights: Matrix::zeros(model.num_classes(), model.num_inputs()),
        biases: vec![T::zero(); model.num_classes()],
    };
    let mut loss = T::zero();
    let inv = T::one() / T::of(batch.len() as f64);
    for &(x, label) in batch {
        let z = model.logits(x)?;
        loss += log_sum_exp(&z) - z[label - 1];
        let p = softmax(&z);
        for (k, &pk) in p.iter().enumerate() {
            let delta = (pk - if k + 1 == label { T::one() } else { T::zero() }) * inv;
            grad.biases[k] += delta;
            for (g, &xd) in grad.weights.row_mut(k).iter_mut().zip(x) {
                *g += delta * xd;
            }
        }
    }
    loss *= inv;
    if l2 > T::zero() {
        let w = model.weights.as_slice();
        loss += l2 * T::of(0.5) * w.iter().map(|&v| v * v).sum::<T>();
        for (g, &v) in grad.weights.as_mut_slice().iter_mut().zip(w) {
            *g += l2 * v;
        }
    }
    Ok((loss, grad))
}

/// Outcome of [`train_mlr_with_history`].
#[derive(Clone, Debug)]
pub struct MlrFit<T: Scalar> {
    pub model: MlrModel<T>,
    /// Validation error rate after each epoch; entry 0 is the untrained model.
    pub valid_errors: Vec<f64>,
    pub best_epoch: usize,
}

fn check_pair<T: Scalar>(train: &Dataset<T>, valid: &Dataset<T>, mask: &VariableMask) -> Result<()> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if train.num_classes() != valid.num_classes() {
        return Err(Error::ClassMismatch(train.num_classes(), valid.num_classes()));
    }
    if train.num_vars() != valid.num_vars() {
        return Err(Error::Dimension {
            context: "validation width",
            expected: train.num_vars(),
            found: valid.num_vars(),
        });
    }
    if mask.len() != train.num_vars() {
        return Err(Error::Dimension {
            context: "variable mask",
            expected: train.num_vars(),
            found: mask.len(),
        });
    }
    Ok(())
}

pub(crate) fn error_rate<T: Scalar>(model: &MlrModel<T>, d: &Dataset<T>) -> f64 {
    if d.is_empty() {
        return 0.0;
    }
    let wrong = d
        .iter()
        .filter(|&(x, r)| model.predict(x).map_or(true, |y| y != r))
        .count();
    wrong as f64 / d.len() as f64
}

/// Trains on `α ⊙ x` from zero weights and returns the best-validation snapshot.
pub fn train_mlr<T: Scalar>(
    train: &Dataset<T>,
    valid: &Dataset<T>,
    mask: &VariableMask,
    cfg: &TrainConfig<T>,
) -> Result<MlrModel<T>> {
    train_mlr_with_history(train, valid, mask, cfg).map(|f| f.model)
}

pub fn train_mlr_with_history<T: Scalar>(
    train: &Dataset<T>,
    valid: &Dataset<T>,
    mask: &VariableMask,
    cfg: &TrainConfig<T>,
) -> Result<MlrFit<T>> {
    cfg.validate()?;
    check_pair(train, valid, mask)?;
    let train = train.masked(mask)?;
    let valid = valid.masked(mask)?;
    let active = mask.kept();
    let k = train.num_classes();

    let mut model = MlrModel::zeros(k, train.num_vars());
    let mut valid_errors = vec![error_rate(&model, &valid)];
    let mut best = model.clone();
    let mut best_epoch = 0;
    let mut since_best = 0;

    let mut rng = Rng::new(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut gw = Matrix::<T>::zeros(k, train.num_vars());
    let mut gb = vec![T::zero(); k];

    for epoch in 1..=cfg.max_epochs {
        rng.shuffle(&mut order);
        for batch in order.chunks(cfg.minibatch_size) {
            gb.iter_mut().for_each(|g| *g = T::zero());
            for c in 0..k {
                let row = gw.row_mut(c);
                active.iter().for_each(|&d| row[d] = T::zero());
            }
            let inv = T::one() / T::of(batch.len() as f64);
            for &i in batch {
                let x = train.example(i);
                let p = model.predict_proba(x)?;
                for (c, &pc) in p.iter().enumerate() {
                    let delta = (pc - if c + 1 == train.label(i) { T::one() } else { T::zero() }) * inv;
                    gb[c] += delta;
                    let row = gw.row_mut(c);
                    for &d in &active {
                        row[d] += delta * x[d];
                    }
                }
            }
            let lr = cfg.learning_rate;
            for c in 0..k {
                let g = gw.row(c);
                let w = model.weights.row_mut(c);
                // dropped columns are never touched and keep their zero init
                for &d in &active {
                    w[d] -= lr * (g[d] + cfg.l2 * w[d]);
                }
                model.biases[c] -= lr * gb[c];
            }
        }
        if !model.weights.is_finite() {
            return Err(Error::InvalidParameter(
                "mlr training diverged; lower the learning rate".into(),
            ));
        }
        let err = error_rate(&model, &valid);
        valid_errors.push(err);
        if err < valid_errors[best_epoch] {
            best = model.clone();
            best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    Ok(MlrFit {
        model: best,
        valid_errors,
        best_epoch,
    })
}

/// Misclassification rate with a Wald 95% interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub error_rate: f64,
    pub n: usize,
    pub ci95_halfwidth: f64,
}

/// `1.96 · sqrt(p(1 − p)/n)`.
pub fn wald_halfwidth(p: f64, n: usize) -> f64 {
    1.96 * (p * (1.0 - p) / n as f64).sqrt()
}

impl ErrorReport {
    pub fn from_counts(errors: usize, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        let p = errors as f64 / n as f64;
        Ok(ErrorReport {
            error_rate: p,
            n,
            ci95_halfwidth: wald_halfwidth(p, n),
        })
    }

    /// `"11.85±0.28"`: percentages with two decimals.
    pub fn to_percent_string(&self) -> String {
        format!("{:.2}±{:.2}", 100.0 * self.error_rate, 100.0 * self.ci95_halfwidth)
    }
}

/// Error rate of `classify` (returning 1-based labels) on `d`.
pub fn evaluate<T, F>(mut classify: F, d: &Dataset<T>) -> Result<ErrorReport>
where
    T: Scalar,
    F: FnMut(&[T]) -> Result<usize>,
{
    let mut errors = 0;
    for (x, r) in d.iter() {
        if classify(x)? != r {
            errors += 1;
        }
    }
    ErrorReport::from_counts(errors, d.len())
}
