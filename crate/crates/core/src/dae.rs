//! Tied-weight denoising auto-encoder.
//!
//! `h = sigmoid(W x̃ + b)`, `y = s_g(Wᵀ h + c)` where `x̃` is the input plus
//! Gaussian noise. The loss is measured against the clean input.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, VariableMask};
use crate::error::{Error, Result};
use crate::numerics::{gaussian, sigmoid, softplus, Matrix, Rng, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Sigmoid => sigmoid(z),
            Activation::Identity => z,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    CrossEntropy,
    Squared,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DaeRecord<T>", into = "DaeRecord<T>", bound = "T: Scalar")]
pub struct DaeModel<T: Scalar> {
    /// `H × M′`; the decoder reads the same matrix transposed.
    weights: Matrix<T>,
    encoder_bias: Vec<T>,
    decoder_bias: Vec<T>,
    decoder_activation: Activation,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct DaeRecord<T: Scalar> {
    input_width: usize,
    hidden_units: usize,
    encoder_activation: Activation,
    decoder_activation: Activation,
    weights: Matrix<T>,
    encoder_bias: Vec<T>,
    decoder_bias: Vec<T>,
}

impl<T: Scalar> From<DaeModel<T>> for DaeRecord<T> {
    fn from(m: DaeModel<T>) -> Self {
        DaeRecord {
            input_width: m.input_width(),
            hidden_units: m.hidden_units(),
            encoder_activation: Activation::Sigmoid,
            decoder_activation: m.decoder_activation,
            weights: m.weights,
            encoder_bias: m.encoder_bias,
            decoder_bias: m.decoder_bias,
        }
    }
}

impl<T: Scalar> TryFrom<DaeRecord<T>> for DaeModel<T> {
    type Error = Error;

    fn try_from(r: DaeRecord<T>) -> Result<Self> {
        if r.encoder_activation != Activation::Sigmoid {
            return Err(Error::Config("encoder activation must be sigmoid".into()));
        }
        if r.weights.rows() != r.hidden_units || r.weights.cols() != r.input_width {
            return Err(Error::Dimension {
                context: "serialized dae weights",
                expected: r.hidden_units * r.input_width,
                found: r.weights.rows() * r.weights.cols(),
            });
        }
        DaeModel::from_parts(r.weights, r.encoder_bias, r.decoder_bias, r.decoder_activation)
    }
}

impl<T: Scalar> DaeModel<T> {
    pub fn from_parts(
        weights: Matrix<T>,
        encoder_bias: Vec<T>,
        decoder_bias: Vec<T>,
        decoder_activation: Activation,
    ) -> Result<Self> {
        if weights.rows() == 0 || weights.cols() == 0 {
            return Err(Error::InvalidParameter(
                "auto-encoder needs at least one input and one hidden unit".into(),
            ));
        }
        if encoder_bias.len() != weights.rows() {
            return Err(Error::Dimension {
                context: "encoder bias",
                expected: weights.rows(),
                found: encoder_bias.len(),
            });
        }
        if decoder_bias.len() != weights.cols() {
            return Err(Error::Dimension {
                context: "decoder bias",
                expected: weights.cols(),
                found: decoder_bias.len(),
            });
        }
        if !weights.is_finite() || encoder_bias.iter().chain(&decoder_bias).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("auto-encoder parameters must be finite".into()));
        }
        Ok(DaeModel {
            weights,
            encoder_bias,
            decoder_bias,
            decoder_activation,
        })
    }

    pub fn zeros(input_width: usize, hidden_units: usize, decoder_activation: Activation) -> Result<Self> {
        DaeModel::from_parts(
            Matrix::zeros(hidden_units, input_width),
            vec![T::zero(); hidden_units],
            vec![T::zero(); input_width],
            decoder_activation,
        )
    }

    /// Weights uniform on `±1/√M′`, biases zero.
    pub fn random(
        input_width: usize,
        hidden_units: usize,
        decoder_activation: Activation,
        rng: &mut Rng,
    ) -> Result<Self> {
        let mut m = DaeModel::zeros(input_width, hidden_units, decoder_activation)?;
        let r = 1.0 / (input_width as f64).sqrt();
        m.weights
            .as_mut_slice()
            .iter_mut()
            .for_each(|w| *w = T::of(rng.uniform_range(-r, r)));
        Ok(m)
    }

    pub fn input_width(&self) -> usize {
        self.weights.cols()
    }

    pub fn hidden_units(&self) -> usize {
        self.weights.rows()
    }

    pub fn weights(&self) -> &Matrix<T> {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut Matrix<T> {
        &mut self.weights
    }

    pub fn encoder_bias(&self) -> &[T] {
        &self.encoder_bias
    }

    pub fn encoder_bias_mut(&mut self) -> &mut [T] {
        &mut self.encoder_bias
    }

    pub fn decoder_bias(&self) -> &[T] {
        &self.decoder_bias
    }

    pub fn decoder_bias_mut(&mut self) -> &mut [T] {
        &mut self.decoder_bias
    }

    pub fn decoder_activation(&self) -> Activation {
        self.decoder_activation
    }

    pub(crate) fn encoder_preactivation(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.input_width() {
            return Err(Error::Dimension {
                context: "encoder input",
                expected: self.input_width(),
                found: x.len(),
            });
        }
        let mut a = self.weights.mul_vec(x);
        a.iter_mut().zip(&self.encoder_bias).for_each(|(a, &b)| *a += b);
        Ok(a)
    }

    fn decoder_preactivation(&self, h: &[T]) -> Result<Vec<T>> {
        if h.len() != self.hidden_units() {
            return Err(Error::Dimension {
                context: "decoder input",
                expected: self.hidden_units(),
                found: h.len(),
            });
        }
        let mut z = self.weights.mul_vec_transposed(h);
        z.iter_mut().zip(&self.decoder_bias).for_each(|(z, &c)| *z += c);
        Ok(z)
    }

    pub fn encode(&self, x: &[T]) -> Result<Vec<T>> {
        Ok(self.encoder_preactivation(x)?.into_iter().map(sigmoid).collect())
    }

    pub fn decode(&self, h: &[T]) -> Result<Vec<T>> {
        let act = self.decoder_activation;
        Ok(self.decoder_preactivation(h)?.into_iter().map(|z| act.apply(z)).collect())
    }

    pub fn reconstruct(&self, x: &[T]) -> Result<Vec<T>> {
        self.decode(&self.encode(x)?)
    }
}

/// An auto-encoder together with the mask that selected its inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct MaskedDae<T: Scalar> {
    pub mask: VariableMask,
    pub model: DaeModel<T>,
}

impl<T: Scalar> MaskedDae<T> {
    pub fn new(mask: VariableMask, model: DaeModel<T>) -> Result<Self> {
        if mask.popcount() != model.input_width() {
            return Err(Error::Dimension {
                context: "mask popcount vs auto-encoder input",
                expected: model.input_width(),
                found: mask.popcount(),
            });
        }
        Ok(MaskedDae { mask, model })
    }
}

/// `x + ε`, `ε ~ N(0, noise_sd²·I)`, unclipped.
pub fn corrupt<T: Scalar>(x: &[T], noise_sd: T, rng: &mut Rng) -> Result<Vec<T>> {
    x.iter().map(|&v| gaussian(rng, v, noise_sd)).collect()
}

/// Reconstruction error of `y` against the target `x`.
pub fn loss<T: Scalar>(x: &[T], y: &[T], kind: LossKind) -> Result<T> {
    if x.len() != y.len() {
        return Err(Error::Dimension {
            context: "reconstruction",
            expected: x.len(),
            found: y.len(),
        });
    }
    match kind {
        LossKind::Squared => Ok(x.iter().zip(y).map(|(&a, &b)| (a - b) * (a - b)).sum()),
        LossKind::CrossEntropy => {
            if y.iter().any(|&v| !(v > T::zero() && v < T::one())) {
                return Err(Error::InvalidParameter(
                    "cross-entropy needs reconstructions strictly inside (0, 1)".into(),
                ));
            }
            Ok(x.iter()
                .zip(y)
                .map(|(&a, &b)| -(a * b.ln() + (T::one() - a) * (T::one() - b).ln()))
                .sum())
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct DaeTrainConfig<T: Scalar> {
    pub hidden_units: usize,
    pub noise_sd: T,
    pub learning_rate: T,
    pub epochs: usize,
    pub loss: LossKind,
    pub decoder: Activation,
}

impl<T: Scalar> DaeTrainConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_units == 0 {
            return Err(Error::InvalidParameter("hidden_units must be at least 1".into()));
        }
        if !(self.noise_sd >= T::zero()) {
            return Err(Error::InvalidParameter("noise_sd must be non-negative".into()));
        }
        if !(self.learning_rate > T::zero()) {
            return Err(Error::InvalidParameter("learning_rate must be positive".into()));
        }
        if self.loss == LossKind::CrossEntropy && self.decoder == Activation::Identity {
            return Err(Error::Config(
                "cross-entropy loss needs a sigmoid decoder".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DaeGrad<T: Scalar> {
    pub weights: Matrix<T>,
    pub encoder_bias: Vec<T>,
    pub decoder_bias: Vec<T>,
}

struct Backprop<T> {
    loss: T,
    /// hidden code
    h: Vec<T>,
    /// dL/d(decoder pre-activation)
    dz: Vec<T>,
    /// dL/d(encoder pre-activation)
    da: Vec<T>,
}

fn backprop<T: Scalar>(m: &DaeModel<T>, clean: &[T], noisy: &[T], kind: LossKind) -> Result<Backprop<T>> {
    if clean.len() != m.input_width() {
        return Err(Error::Dimension {
            context: "reconstruction target",
            expected: m.input_width(),
            found: clean.len(),
        });
    }
    let h = m.encode(noisy)?;
    let z = m.decoder_preactivation(&h)?;
    let two = T::of(2.0);
    let mut loss = T::zero();
    let dz: Vec<T> = match (kind, m.decoder_activation) {
        (LossKind::CrossEntropy, Activation::Sigmoid) => z
            .iter()
            .zip(clean)
            .map(|(&z, &x)| {
                // -[x ln σ(z) + (1-x) ln(1-σ(z))] = softplus(z) - x z
                loss += softplus(z) - x * z;
                sigmoid(z) - x
            })
            .collect(),
        (LossKind::CrossEntropy, Activation::Identity) => {
            return Err(Error::Config("cross-entropy loss needs a sigmoid decoder".into()))
        }
        (LossKind::Squared, Activation::Identity) => z
            .iter()
            .zip(clean)
            .map(|(&y, &x)| {
                loss += (y - x) * (y - x);
                two * (y - x)
            })
            .collect(),
        (LossKind::Squared, Activation::Sigmoid) => z
            .iter()
            .zip(clean)
            .map(|(&z, &x)| {
                let y = sigmoid(z);
                loss += (y - x) * (y - x);
                two * (y - x) * y * (T::one() - y)
            })
            .collect(),
    };
    let dh = m.weights.mul_vec(&dz);
    let da = dh
        .iter()
        .zip(&h)
        .map(|(&g, &hq)| g * hq * (T::one() - hq))
        .collect();
    Ok(Backprop { loss, h, dz, da })
}

/// Loss of reconstructing `clean` from `noisy`, and its gradient.
///
/// The weight gradient sums the encoder path (`da ⊗ x̃`) and the decoder
/// path (`h ⊗ dz`), since both read the same tied matrix.
pub fn loss_and_grad<T: Scalar>(
    m: &DaeModel<T>,
    clean: &[T],
    noisy: &[T],
    kind: LossKind,
) -> Result<(T, DaeGrad<T>)> {
    let bp = backprop(m, clean, noisy, kind)?;
    let mut weights = Matrix::zeros(m.hidden_units(), m.input_width());
    for q in 0..m.hidden_units() {
        let row = weights.row_mut(q);
        for d in 0..row.len() {
            row[d] = bp.h[q] * bp.dz[d] + bp.da[q] * noisy[d];
        }
    }
    Ok((
        bp.loss,
        DaeGrad {
            weights,
            encoder_bias: bp.da,
            decoder_bias: bp.dz,
        },
    ))
}

/// Trains a fresh auto-encoder; see [`train_dae_with_history`].
pub fn train_dae<T: Scalar>(train: &Dataset<T>, cfg: &DaeTrainConfig<T>, rng: &mut Rng) -> Result<DaeModel<T>> {
    train_dae_with_history(train, cfg, rng).map(|(m, _)| m)
}

/// Per-example SGD for exactly `cfg.epochs` epochs.
///
/// `rng` drives, in order, the weight initialisation and then, per epoch, the
/// example order and a fresh corruption of every example. Returns the model
/// and the mean training loss of each epoch (measured before each update).
pub fn train_dae_with_history<T: Scalar>(
    train: &Dataset<T>,
    cfg: &DaeTrainConfig<T>,
    rng: &mut Rng,
) -> Result<(DaeModel<T>, Vec<f64>)> {
    cfg.validate()?;
    if train.num_vars() == 0 {
        return Err(Error::InvalidParameter("auto-encoder input width is zero".into()));
    }
    let mut m = DaeModel::random(train.num_vars(), cfg.hidden_units, cfg.decoder, rng)?;
    let lr = cfg.learning_rate;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut total = 0.0;
        for &i in &order {
            let clean = train.example(i);
            let noisy = corrupt(clean, cfg.noise_sd, rng)?;
            let bp = backprop(&m, clean, &noisy, cfg.loss)?;
            total += bp.loss.to_f64_lossy();
            for q in 0..m.hidden_units() {
                let (hq, daq) = (bp.h[q], bp.da[q]);
                let row = m.weights.row_mut(q);
                for d in 0..row.len() {
                    row[d] -= lr * (hq * bp.dz[d] + daq * noisy[d]);
                }
                m.encoder_bias[q] -= lr * daq;
            }
            m.decoder_bias
                .iter_mut()
                .zip(&bp.dz)
                .for_each(|(c, &g)| *c -= lr * g);
        }
        if !m.weights.is_finite() {
            return Err(Error::InvalidParameter(
                "auto-encoder training diverged; lower the learning rate".into(),
            ));
        }
        losses.push(total / train.len().max(1) as f64);
    }
    Ok((m, losses))
}

/// Clean (uncorrupted) hidden codes of every example; labels carried through.
pub fn encode_dataset<T: Scalar>(m: &DaeModel<T>, d: &Dataset<T>) -> Result<Dataset<T>> {
    if d.num_vars() != m.input_width() {
        return Err(Error::Dimension {
            context: "encoded dataset",
            expected: m.input_width(),
            found: d.num_vars(),
        });
    }
    d.map_examples(m.hidden_units(), |x| m.encode(x))
}
