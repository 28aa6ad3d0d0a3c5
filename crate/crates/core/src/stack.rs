//! Stacked denoising auto-encoders with per-layer variable selection.
//!
//! Layer `ℓ` sees the previous layer's hidden code (the raw input for
//! `ℓ = 1`), keeps the variables selected by its mask, and encodes them. A
//! multinomial logistic regression on the last code classifies. With IVS
//! disabled every mask is all ones and the pipeline is a plain SDAE.

use serde::{Deserialize, Serialize};

use crate::dae::{encode_dataset, train_dae, DaeTrainConfig, MaskedDae};
use crate::data::{apply_mask, compact, expand, Dataset, VariableMask};
use crate::error::{Error, Result};
use crate::ivs::{run_ivs, IvsConfig, IvsResult};
use crate::mlr::{train_mlr, MlrModel, TrainConfig};
use crate::numerics::{log_sum_exp, softmax, Matrix, Rng, Scalar};

/// Fork labels for the master seed; each layer and phase has its own stream,
/// so adding layers leaves the lower layers' randomness untouched.
pub mod streams {
    pub fn layer_ivs(layer: usize) -> u64 {
        10 * layer as u64 + 1
    }

    pub fn layer_dae(layer: usize) -> u64 {
        10 * layer as u64 + 2
    }

    pub fn top_ivs(depth: usize) -> u64 {
        2000 + depth as u64
    }

    pub fn top_mlr(depth: usize) -> u64 {
        1000 + depth as u64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LayerConfig<T: Scalar> {
    pub dae: DaeTrainConfig<T>,
    pub ivs: IvsConfig<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct StackConfig<T: Scalar> {
    /// One entry per layer, bottom first; depth is `layers.len()`.
    pub layers: Vec<LayerConfig<T>>,
    /// Top classifier trained after pre-training. Its seed is replaced by one
    /// derived from the master stream.
    pub top: TrainConfig<T>,
    pub fine_tune: TrainConfig<T>,
    pub ivs_enabled: bool,
    /// Optional selection pass on the last hidden layer before the top classifier.
    #[serde(default)]
    pub top_ivs: Option<IvsConfig<T>>,
}

impl<T: Scalar> StackConfig<T> {
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.depth()) {
            return Err(Error::InvalidParameter(format!(
                "stack depth must be 1, 2 or 3, got {}",
                self.depth()
            )));
        }
        for l in &self.layers {
            l.dae.validate()?;
            if self.ivs_enabled {
                l.ivs.validate()?;
            }
        }
        self.top.validate()?;
        self.fine_tune.validate()?;
        if let (true, Some(t)) = (self.ivs_enabled, &self.top_ivs) {
            t.validate()?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StackRecord<T>", bound = "T: Scalar")]
pub struct StackModel<T: Scalar> {
    pub(crate) layers: Vec<MaskedDae<T>>,
    /// Applied as `α ⊙ h` to the last code before the top classifier.
    pub(crate) top_mask: VariableMask,
    pub(crate) top: MlrModel<T>,
    pub(crate) fine_tuned: bool,
}

#[derive(Deserialize)]
#[serde(bound = "T: Scalar")]
struct StackRecord<T: Scalar> {
    layers: Vec<MaskedDae<T>>,
    top_mask: VariableMask,
    top: MlrModel<T>,
    fine_tuned: bool,
}

impl<T: Scalar> TryFrom<StackRecord<T>> for StackModel<T> {
    type Error = Error;

    fn try_from(r: StackRecord<T>) -> Result<Self> {
        let mut m = StackModel::new(r.layers, r.top_mask, r.top)?;
        m.fine_tuned = r.fine_tuned;
        Ok(m)
    }
}

impl<T: Scalar> StackModel<T> {
    /// Checks that widths chain: each mask spans the layer below's code, each
    /// auto-encoder reads its mask's popcount, and the top reads the last code.
    pub fn new(layers: Vec<MaskedDae<T>>, top_mask: VariableMask, top: MlrModel<T>) -> Result<Self> {
        for pair in layers.windows(2) {
            if pair[1].mask.len() != pair[0].model.hidden_units() {
                return Err(Error::Dimension {
                    context: "stacked layer mask",
                    expected: pair[0].model.hidden_units(),
                    found: pair[1].mask.len(),
                });
            }
        }
        for l in &layers {
            if l.mask.popcount() != l.model.input_width() {
                return Err(Error::Dimension {
                    context: "layer input width",
                    expected: l.mask.popcount(),
                    found: l.model.input_width(),
                });
            }
        }
        let width = match layers.last() {
            Some(l) => l.model.hidden_units(),
            None => top.num_inputs(),
        };
        if top_mask.len() != width || top.num_inputs() != width {
            return Err(Error::Dimension {
                context: "top classifier input",
                expected: width,
                found: top.num_inputs(),
            });
        }
        Ok(StackModel {
            layers,
            top_mask,
            top,
            fine_tuned: false,
        })
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[MaskedDae<T>] {
        &self.layers
    }

    pub fn top(&self) -> &MlrModel<T> {
        &self.top
    }

    /// Parameters of layer `layer` (1-based); masks stay fixed.
    pub fn dae_mut(&mut self, layer: usize) -> Result<&mut crate::dae::DaeModel<T>> {
        self.layer(layer)?;
        Ok(&mut self.layers[layer - 1].model)
    }

    pub fn top_mut(&mut self) -> &mut MlrModel<T> {
        &mut self.top
    }

    pub fn top_mask(&self) -> &VariableMask {
        &self.top_mask
    }

    pub fn is_fine_tuned(&self) -> bool {
        self.fine_tuned
    }

    /// Raw input width.
    pub fn input_width(&self) -> usize {
        match self.layers.first() {
            Some(l) => l.mask.len(),
            None => self.top.num_inputs(),
        }
    }

    /// Hidden code after the first `k` layers (the raw input for `k = 0`).
    pub fn encode_to(&self, x: &[T], k: usize) -> Result<Vec<T>> {
        if x.len() != self.input_width() {
            return Err(Error::Dimension {
                context: "stack input",
                expected: self.input_width(),
                found: x.len(),
            });
        }
        let mut h = x.to_vec();
        for l in &self.layers[..k] {
            h = l.model.encode(&compact(&h, &l.mask)?)?;
        }
        Ok(h)
    }

    /// Top-classifier posteriors.
    pub fn predict_proba(&self, x: &[T]) -> Result<Vec<T>> {
        let h = self.encode_to(x, self.depth())?;
        self.top.predict_proba(&apply_mask(&h, &self.top_mask)?)
    }

    /// 1-based class; ties go to the lowest class.
    pub fn predict(&self, x: &[T]) -> Result<usize> {
        let h = self.encode_to(x, self.depth())?;
        self.top.predict(&apply_mask(&h, &self.top_mask)?)
    }

    /// Encodes through `k` layers, then decodes back down to raw width,
    /// writing zeros wherever a mask dropped a variable.
    pub fn reconstruct_through(&self, x: &[T], k: usize) -> Result<Vec<T>> {
        if k == 0 || k > self.depth() {
            return Err(Error::InvalidParameter(format!(
                "reconstruction depth must be in 1..={}, got {k}",
                self.depth()
            )));
        }
        let mut y = self.encode_to(x, k)?;
        for l in self.layers[..k].iter().rev() {
            y = expand(&l.model.decode(&y)?, &l.mask)?;
        }
        Ok(y)
    }

    /// Dataset of the codes after `k` layers.
    pub fn encode_dataset_to(&self, d: &Dataset<T>, k: usize) -> Result<Dataset<T>> {
        let width = if k == 0 {
            self.input_width()
        } else {
            self.layers[k - 1].model.hidden_units()
        };
        d.map_examples(width, |x| self.encode_to(x, k))
    }

    /// Rows of layer `layer`'s (1-based) weight matrix, expanded to the
    /// layer's full input width with zeros at dropped positions.
    pub fn layer_patterns(&self, layer: usize) -> Result<Vec<Vec<T>>> {
        let l = self.layer(layer)?;
        l.model
            .weights()
            .row_iter()
            .map(|row| expand(row, &l.mask))
            .collect()
    }

    fn layer(&self, layer: usize) -> Result<&MaskedDae<T>> {
        if layer == 0 || layer > self.depth() {
            return Err(Error::InvalidParameter(format!(
                "layer must be in 1..={}, got {layer}",
                self.depth()
            )));
        }
        Ok(&self.layers[layer - 1])
    }
}

/// A pre-trained stack with the selection histories that shaped it.
#[derive(Clone, Debug)]
pub struct Pretrained<T: Scalar> {
    pub model: StackModel<T>,
    /// One entry per layer; `None` when IVS is disabled.
    pub layer_ivs: Vec<Option<IvsResult<T>>>,
    pub top_ivs: Option<IvsResult<T>>,
}

/// Greedy layer-wise pre-training followed by the top classifier.
pub fn pretrain<T: Scalar>(
    train: &Dataset<T>,
    valid: &Dataset<T>,
    cfg: &StackConfig<T>,
    rng: &Rng,
) -> Result<StackModel<T>> {
    Ok(pretrain_all_depths(train, valid, cfg, rng)?.pop().unwrap().model)
}

/// Pre-trains the full stack once and returns, for every depth `1..=L`, the
/// stack truncated to that depth with its own top classifier. Entry `d − 1`
/// equals what [`pretrain`] returns for the first `d` layers of `cfg`.
pub fn pretrain_all_depths<T: Scalar>(
    train: &Dataset<T>,
    valid: &Dataset<T>,
    cfg: &StackConfig<T>,
    rng: &Rng,
) -> Result<Vec<Pretrained<T>>> {
    cfg.validate()?;
    if train.num_vars() != valid.num_vars() {
        return Err(Error::Dimension {
            context: "validation width",
            expected: train.num_vars(),
            found: valid.num_vars(),
        });
    }
    let mut tr = train.clone();
    let mut va = valid.clone();
    let mut layers = Vec::new();
    let mut layer_ivs = Vec::new();
    let mut out = Vec::new();

    for (l, lc) in cfg.layers.iter().enumerate() {
        let (mask, hist) = if cfg.ivs_enabled {
            let r = run_ivs(&tr, &va, &lc.ivs, &mut rng.fork(streams::layer_ivs(l)))?;
            (r.mask.clone(), Some(r))
        } else {
            (VariableMask::all_ones(tr.num_vars()), None)
        };
        let trc = tr.compacted(&mask)?;
        let vac = va.compacted(&mask)?;
        let dae = train_dae(&trc, &lc.dae, &mut rng.fork(streams::layer_dae(l)))?;
        tr = encode_dataset(&dae, &trc)?;
        va = encode_dataset(&dae, &vac)?;
        layers.push(MaskedDae::new(mask, dae)?);
        layer_ivs.push(hist);

        let depth = l + 1;
        let (top_mask, top_ivs) = match (&cfg.top_ivs, cfg.ivs_enabled) {
            (Some(tc), true) => {
                let r = run_ivs(&tr, &va, tc, &mut rng.fork(streams::top_ivs(depth)))?;
                (r.mask.clone(), Some(r))
            }
            _ => (VariableMask::all_ones(tr.num_vars()), None),
        };
        let top_cfg = TrainConfig {
            seed: rng.fork(streams::top_mlr(depth)).next_u64(),
            ..cfg.top.clone()
        };
        let top = train_mlr(&tr, &va, &top_mask, &top_cfg)?;
        out.push(Pretrained {
            model: StackModel::new(layers.clone(), top_mask, top)?,
            layer_ivs: layer_ivs.clone(),
            top_ivs,
        });
    }
    Ok(out)
}

/// Gradient of the classification loss with respect to the encoder and top parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct StackGrad<T: Scalar> {
    /// Per layer: encoder weights and encoder bias.
    pub layers: Vec<(Matrix<T>, Vec<T>)>,
    pub top_weights: Matrix<T>,
    pub top_biases: Vec<T>,
}

impl<T: Scalar> StackGrad<T> {
    fn zeros_like(m: &StackModel<T>) -> Self {
        StackGrad {
            layers: m
                .layers
                .iter()
                .map(|l| {
                    (
                        Matrix::zeros(l.model.hidden_units(), l.model.input_width()),
                        vec![T::zero(); l.model.hidden_units()],
                    )
                })
                .collect(),
            top_weights: Matrix::zeros(m.top.num_classes(), m.top.num_inputs()),
            top_biases: vec![T::zero(); m.top.num_classes()],
        }
    }

    fn clear(&mut self) {
        for (w, b) in &mut self.layers {
            w.as_mut_slice().iter_mut().for_each(|v| *v = T::zero());
            b.iter_mut().for_each(|v| *v = T::zero());
        }
        self.top_weights.as_mut_slice().iter_mut().for_each(|v| *v = T::zero());
        self.top_biases.iter_mut().for_each(|v| *v = T::zero());
    }
}

/// Adds `scale · ∇(−log p_label)` for one example into `g`; returns the unscaled loss.
fn accumulate<T: Scalar>(m: &StackModel<T>, x: &[T], label: usize, scale: T, g: &mut StackGrad<T>) -> Result<T> {
    // inputs[l] is what layer l's encoder reads; codes[l] what it emits
    let mut inputs = Vec::with_capacity(m.depth());
    let mut codes: Vec<Vec<T>> = Vec::with_capacity(m.depth());
    let mut h = x.to_vec();
    for l in &m.layers {
        let input = compact(&h, &l.mask)?;
        h = l.model.encode(&input)?;
        inputs.push(input);
        codes.push(h.clone());
    }
    let top_in = apply_mask(&h, &m.top_mask)?;
    let z = m.top.logits(&top_in)?;
    let loss = log_sum_exp(&z) - z[label - 1];
    let p = softmax(&z);

    let mut dz = p;
    dz[label - 1] -= T::one();
    dz.iter_mut().for_each(|v| *v *= scale);
    for (c, &d) in dz.iter().enumerate() {
        g.top_biases[c] += d;
        for (gw, &xi) in g.top_weights.row_mut(c).iter_mut().zip(&top_in) {
            *gw += d * xi;
        }
    }
    let mut dh = apply_mask(&m.top.weights().mul_vec_transposed(&dz), &m.top_mask)?;
    for l in (0..m.depth()).rev() {
        let da: Vec<T> = dh
            .iter()
            .zip(&codes[l])
            .map(|(&g, &h)| g * h * (T::one() - h))
            .collect();
        let (gw, gb) = &mut g.layers[l];
        for (q, &d) in da.iter().enumerate() {
            gb[q] += d;
            if d != T::zero() {
                for (w, &xi) in gw.row_mut(q).iter_mut().zip(&inputs[l]) {
                    *w += d * xi;
                }
            }
        }
        if l > 0 {
            let layer = &m.layers[l];
            dh = expand(&layer.model.weights().mul_vec_transposed(&da), &layer.mask)?;
        }
    }
    Ok(loss)
}

/// Mean cross-entropy of the top classifier over `batch`, and its gradient.
pub fn loss_and_grad<T: Scalar>(m: &StackModel<T>, batch: &[(&[T], usize)]) -> Result<(T, StackGrad<T>)> {
    let mut g = StackGrad::zeros_like(m);
    let inv = T::one() / T::of(batch.len() as f64);
    let mut loss = T::zero();
    for &(x, label) in batch {
        loss += accumulate(m, x, label, inv, &mut g)?;
    }
    Ok((loss * inv, g))
}

fn stack_error<T: Scalar>(m: &StackModel<T>, d: &Dataset<T>) -> f64 {
    if d.is_empty() {
        return 0.0;
    }
    let wrong = d
        .iter()
        .filter(|&(x, r)| m.predict(x).map_or(true, |y| y != r))
        .count();
    wrong as f64 / d.len() as f64
}

pub struct FineTuneFit<T: Scalar> {
    pub model: StackModel<T>,
    /// Validation error after each epoch; entry 0 is the pre-trained stack.
    pub valid_errors: Vec<f64>,
    pub best_epoch: usize,
}

/// Supervised back-propagation through the encoders and the top classifier.
pub fn fine_tune<T: Scalar>(
    m: &StackModel<T>,
    train: &Dataset<T>,
    valid: &Dataset<T>,
    cfg: &TrainConfig<T>,
) -> Result<StackModel<T>> {
    fine_tune_with_history(m, train, valid, cfg).map(|f| f.model)
}

/// Minibatch SGD with early stopping on validation error; returns the best
/// snapshot (the input stack if no epoch improves on it). Masks stay fixed and
/// decoder biases are untouched.
pub fn fine_tune_with_history<T: Scalar>(
    m: &StackModel<T>,
    train: &Dataset<T>,
    valid: &Dataset<T>,
    cfg: &TrainConfig<T>,
) -> Result<FineTuneFit<T>> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for d in [train, valid] {
        if d.num_vars() != m.input_width() {
            return Err(Error::Dimension {
                context: "fine-tuning data",
                expected: m.input_width(),
                found: d.num_vars(),
            });
        }
        if d.num_classes() != m.top.num_classes() {
            return Err(Error::ClassMismatch(m.top.num_classes(), d.num_classes()));
        }
    }
    let mut model = m.clone();
    let mut valid_errors = vec![stack_error(&model, valid)];
    if cfg.max_epochs == 0 {
        return Ok(FineTuneFit {
            model,
            valid_errors,
            best_epoch: 0,
        });
    }
    model.fine_tuned = true;
    let mut best = model.clone();
    let mut best_epoch = 0;
    let mut since_best = 0;
    let mut rng = Rng::new(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut g = StackGrad::zeros_like(&model);
    let lr = cfg.learning_rate;
    let top_kept = model.top_mask.kept();

    for epoch in 1..=cfg.max_epochs {
        rng.shuffle(&mut order);
        for batch in order.chunks(cfg.minibatch_size) {
            g.clear();
            let inv = T::one() / T::of(batch.len() as f64);
            for &i in batch {
                accumulate(&model, train.example(i), train.label(i), inv, &mut g)?;
            }
            for (l, (gw, gb)) in model.layers.iter_mut().zip(&g.layers) {
                let w = l.model.weights_mut().as_mut_slice();
                w.iter_mut().zip(gw.as_slice()).for_each(|(w, &g)| *w -= lr * g);
                l.model
                    .encoder_bias_mut()
                    .iter_mut()
                    .zip(gb)
                    .for_each(|(b, &g)| *b -= lr * g);
            }
            for c in 0..model.top.num_classes() {
                let gr = g.top_weights.row(c);
                let wr = model.top.weights_mut().row_mut(c);
                for &d in &top_kept {
                    wr[d] -= lr * (gr[d] + cfg.l2 * wr[d]);
                }
                model.top.biases_mut()[c] -= lr * g.top_biases[c];
            }
        }
        if !model.top.weights().is_finite() || model.layers.iter().any(|l| !l.model.weights().is_finite()) {
            return Err(Error::InvalidParameter(
                "fine-tuning diverged; lower the learning rate".into(),
            ));
        }
        let err = stack_error(&model, valid);
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
    Ok(FineTuneFit {
        model: best,
        valid_errors,
        best_epoch,
    })
}

/// Hidden units of one layer that survive IVS on that layer's code.
#[derive(Clone, Debug)]
pub struct ExtractorCount<T: Scalar> {
    pub count: usize,
    /// 0-based hidden units kept / dropped by the selection.
    pub relevant: Vec<usize>,
    pub irrelevant: Vec<usize>,
    pub ivs: IvsResult<T>,
}

/// Runs IVS on the codes of `layer` (1-based) and counts the task-relevant
/// feature extractors, i.e. the hidden units whose mask bit survives.
pub fn count_task_relevant_extractors<T: Scalar>(
    m: &StackModel<T>,
    layer: usize,
    train: &Dataset<T>,
    valid: &Dataset<T>,
    cfg: &IvsConfig<T>,
    rng: &mut Rng,
) -> Result<ExtractorCount<T>> {
    m.layer(layer)?;
    let tr = m.encode_dataset_to(train, layer)?;
    let va = m.encode_dataset_to(valid, layer)?;
    let ivs = run_ivs(&tr, &va, cfg, rng)?;
    let (relevant, irrelevant): (Vec<usize>, Vec<usize>) =
        (0..ivs.mask.len()).partition(|&q| ivs.mask.get(q));
    Ok(ExtractorCount {
        count: relevant.len(),
        relevant,
        irrelevant,
        ivs,
    })
}
