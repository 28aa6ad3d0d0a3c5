//! Datasets, variable masks, the `.amat` loader and the planted synthetic generator.

use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng, Scalar};

/// Labelled examples with features in `[0, 1]`.
///
/// Labels are stored 1-based, in `1..=num_classes`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    examples: Matrix<T>,
    labels: Vec<usize>,
    num_classes: usize,
    variable_shape: Option<(usize, usize)>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(examples: Matrix<T>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if labels.len() != examples.rows() {
            return Err(Error::Dimension {
                context: "dataset labels",
                expected: examples.rows(),
                found: labels.len(),
            });
        }
        if num_classes < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 classes, got {num_classes}"
            )));
        }
        if let Some(row) = labels.iter().position(|&l| l == 0 || l > num_classes) {
            return Err(Error::Parse {
                row: row + 1,
                message: format!("label {} outside 1..={num_classes}", labels[row]),
            });
        }
        for (r, row) in examples.row_iter().enumerate() {
            if let Some(c) = row.iter().position(|&v| v < T::zero() || v > T::one()) {
                return Err(Error::Domain {
                    row: r + 1,
                    col: c + 1,
                    value: row[c].to_f64_lossy(),
                });
            }
        }
        Ok(Dataset {
            examples,
            labels,
            num_classes,
            variable_shape: None,
        })
    }

    /// Attaches an image shape `(height, width)` used by the PGM exports.
    pub fn with_variable_shape(mut self, shape: (usize, usize)) -> Result<Self> {
        if shape.0 * shape.1 != self.num_vars() {
            return Err(Error::Dimension {
                context: "variable shape",
                expected: self.num_vars(),
                found: shape.0 * shape.1,
            });
        }
        self.variable_shape = Some(shape);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_vars(&self) -> usize {
        self.examples.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn variable_shape(&self) -> Option<(usize, usize)> {
        self.variable_shape
    }

    pub fn examples(&self) -> &Matrix<T> {
        &self.examples
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn example(&self, i: usize) -> &[T] {
        self.examples.row(i)
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[T], usize)> + '_ {
        self.examples.row_iter().zip(self.labels.iter().copied())
    }

    /// Rows `start..end`, keeping class count and shape.
    pub fn slice(&self, start: usize, end: usize) -> Dataset<T> {
        let m = self.num_vars();
        let data = self.examples.as_slice()[start * m..end * m].to_vec();
        Dataset {
            examples: Matrix::from_vec(end - start, m, data).expect("slice of valid matrix"),
            labels: self.labels[start..end].to_vec(),
            num_classes: self.num_classes,
            variable_shape: self.variable_shape,
        }
    }

    /// Replaces every example by `f(example)`, which must return `width` values.
    ///
    /// Labels are carried through; the shape is dropped unless the width is unchanged.
    pub fn map_examples<F>(&self, width: usize, mut f: F) -> Result<Dataset<T>>
    where
        F: FnMut(&[T]) -> Result<Vec<T>>,
    {
        let mut data = Vec::with_capacity(self.len() * width);
        for row in self.examples.row_iter() {
            let out = f(row)?;
            if out.len() != width {
                return Err(Error::Dimension {
                    context: "mapped example",
                    expected: width,
                    found: out.len(),
                });
            }
            data.extend(out);
        }
        let mut d = Dataset::new(
            Matrix::from_vec(self.len(), width, data)?,
            self.labels.clone(),
            self.num_classes,
        )?;
        if width == self.num_vars() {
            d.variable_shape = self.variable_shape;
        }
        Ok(d)
    }

    /// `α ⊙ x` for every example; width unchanged.
    pub fn masked(&self, mask: &VariableMask) -> Result<Dataset<T>> {
        self.check_mask(mask)?;
        self.map_examples(self.num_vars(), |x| apply_mask(x, mask))
    }

    /// Keeps only the variables selected by `mask`.
    pub fn compacted(&self, mask: &VariableMask) -> Result<Dataset<T>> {
        self.check_mask(mask)?;
        if mask.is_full() {
            return Ok(self.clone());
        }
        self.map_examples(mask.popcount(), |x| compact(x, mask))
    }

    fn check_mask(&self, mask: &VariableMask) -> Result<()> {
        if mask.len() != self.num_vars() {
            return Err(Error::Dimension {
                context: "variable mask",
                expected: self.num_vars(),
                found: mask.len(),
            });
        }
        Ok(())
    }

    /// Appends `other`'s rows.
    pub fn concat(&self, other: &Dataset<T>) -> Result<Dataset<T>> {
        if other.num_vars() != self.num_vars() {
            return Err(Error::Dimension {
                context: "concatenated dataset",
                expected: self.num_vars(),
                found: other.num_vars(),
            });
        }
        if other.num_classes != self.num_classes {
            return Err(Error::ClassMismatch(self.num_classes, other.num_classes));
        }
        let mut data = self.examples.as_slice().to_vec();
        data.extend_from_slice(other.examples.as_slice());
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Ok(Dataset {
            examples: Matrix::from_vec(labels.len(), self.num_vars(), data)?,
            labels,
            num_classes: self.num_classes,
            variable_shape: self.variable_shape,
        })
    }

    /// Raises the class count, e.g. when a split happens to miss the top class.
    pub fn with_num_classes(mut self, k: usize) -> Result<Self> {
        if k < self.num_classes {
            return Err(Error::ClassMismatch(self.num_classes, k));
        }
        self.num_classes = k;
        Ok(self)
    }
}

/// Binary keep/drop vector over variables; `true` keeps the variable.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VariableMask(Vec<bool>);

impl VariableMask {
    pub fn all_ones(m: usize) -> Self {
        VariableMask(vec![true; m])
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        VariableMask(bits)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn popcount(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn is_full(&self) -> bool {
        self.0.iter().all(|&b| b)
    }

    pub fn get(&self, d: usize) -> bool {
        self.0[d]
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    /// Positions of the kept variables, ascending.
    pub fn kept(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter_map(|(d, &b)| b.then_some(d))
            .collect()
    }
}

fn check_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::Dimension {
            context,
            expected,
            found,
        });
    }
    Ok(())
}

/// Component-wise product `α ⊙ x`.
pub fn apply_mask<T: Scalar>(x: &[T], mask: &VariableMask) -> Result<Vec<T>> {
    check_len("apply_mask", mask.len(), x.len())?;
    Ok(x.iter()
        .zip(mask.bits())
        .map(|(&v, &b)| if b { v } else { T::zero() })
        .collect())
}

/// Keeps the components where the mask is set, in order.
pub fn compact<T: Scalar>(x: &[T], mask: &VariableMask) -> Result<Vec<T>> {
    check_len("compact", mask.len(), x.len())?;
    Ok(x.iter()
        .zip(mask.bits())
        .filter_map(|(&v, &b)| b.then_some(v))
        .collect())
}

/// Inverse of [`compact`]: writes zeros at dropped positions.
pub fn expand<T: Scalar>(reduced: &[T], mask: &VariableMask) -> Result<Vec<T>> {
    check_len("expand", mask.popcount(), reduced.len())?;
    let mut it = reduced.iter();
    Ok(mask
        .bits()
        .iter()
        .map(|&b| if b { *it.next().unwrap() } else { T::zero() })
        .collect())
}

/// How class labels are written in the last column of an `.amat` file.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LabelBase {
    #[default]
    Zero,
    One,
}

/// Loads an `.amat` file: whitespace-separated floats, label last.
pub fn load_amat<T: Scalar>(path: impl AsRef<Path>, base: LabelBase) -> Result<Dataset<T>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_amat(BufReader::new(file), base).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

/// Parses `.amat` text from any reader. The class count is the largest label seen.
pub fn read_amat<T: Scalar, R: Read>(reader: R, base: LabelBase) -> Result<Dataset<T>> {
    let reader = BufReader::new(reader);
    let mut data: Vec<T> = Vec::new();
    let mut labels = Vec::new();
    let mut width: Option<usize> = None;
    let mut row = 0;
    for line in reader.lines() {
        let line = line.map_err(|e| Error::io("<amat>", e))?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        row += 1;
        match width {
            None if fields.len() < 2 => {
                return Err(Error::Parse {
                    row,
                    message: "need at least one feature and a label".into(),
                })
            }
            None => width = Some(fields.len()),
            Some(w) if w != fields.len() => {
                return Err(Error::RaggedRow {
                    row,
                    expected: w,
                    found: fields.len(),
                })
            }
            Some(_) => {}
        }
        let (label_field, features) = fields.split_last().unwrap();
        for (c, f) in features.iter().enumerate() {
            let v: f64 = f.parse().map_err(|_| Error::Parse {
                row,
                message: format!("column {}: '{f}' is not a number", c + 1),
            })?;
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Domain {
                    row,
                    col: c + 1,
                    value: v,
                });
            }
            data.push(T::of(v));
        }
        labels.push(parse_label(label_field, base, row)?);
    }
    let width = width.ok_or(Error::EmptyDataset)?;
    let k = labels.iter().copied().max().unwrap_or(0).max(2);
    Dataset::new(Matrix::from_vec(labels.len(), width - 1, data)?, labels, k)
}

fn parse_label(field: &str, base: LabelBase, row: usize) -> Result<usize> {
    let err = || Error::Parse {
        row,
        message: format!("label '{field}' is not a valid class index"),
    };
    let v: f64 = field.parse().map_err(|_| err())?;
    if v.fract() != 0.0 || v < 0.0 || v > u32::MAX as f64 {
        return Err(err());
    }
    let v = v as usize;
    match base {
        LabelBase::Zero => Ok(v + 1),
        LabelBase::One if v >= 1 => Ok(v),
        LabelBase::One => Err(err()),
    }
}

/// Order-preserving split: the first `train` rows, the next `valid`, the rest.
pub fn split<T: Scalar>(
    d: &Dataset<T>,
    train: usize,
    valid: usize,
) -> Result<(Dataset<T>, Dataset<T>, Dataset<T>)> {
    if train + valid > d.len() {
        return Err(Error::InvalidSplit {
            train,
            valid,
            available: d.len(),
        });
    }
    Ok((
        d.slice(0, train),
        d.slice(train, train + valid),
        d.slice(train + valid, d.len()),
    ))
}

/// Planted problem: class-dependent relevant variables plus uniform noise variables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub num_relevant: usize,
    pub num_irrelevant: usize,
    pub num_classes: usize,
    pub class_separation: f64,
    pub noise_sd: f64,
    /// `(train, valid, test)` example counts.
    pub examples_per_split: (usize, usize, usize),
}

impl SyntheticSpec {
    pub fn num_vars(&self) -> usize {
        self.num_relevant + self.num_irrelevant
    }

    pub fn total_examples(&self) -> usize {
        let (a, b, c) = self.examples_per_split;
        a + b + c
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(format!("synthetic spec: {m}")));
        if self.num_relevant == 0 {
            return bad("num_relevant must be at least 1");
        }
        if self.num_classes < 2 {
            return bad("num_classes must be at least 2");
        }
        if !(self.class_separation > 0.0) || !self.class_separation.is_finite() {
            return bad("class_separation must be positive");
        }
        if !(self.noise_sd >= 0.0) || !self.noise_sd.is_finite() {
            return bad("noise_sd must be non-negative");
        }
        Ok(())
    }
}

/// Generates the concatenated train/valid/test rows and the ground-truth mask.
///
/// Relevant variable `d` of a class-`c` example is
/// `clamp(clamp(0.5 + separation·u_c[d]) + noise_sd·N(0,1))`, where `u_c` is a
/// seeded unit direction per class. Irrelevant variables are uniform on `[0, 1]`.
/// Relevant positions are scattered among the `M` columns.
pub fn gen_synthetic<T: Scalar>(
    spec: &SyntheticSpec,
    rng: &mut Rng,
) -> Result<(Dataset<T>, VariableMask)> {
    spec.validate()?;
    let m = spec.num_vars();
    let r = spec.num_relevant;

    let mut positions: Vec<usize> = (0..m).collect();
    rng.shuffle(&mut positions);
    let mut relevant = positions[..r].to_vec();
    relevant.sort_unstable();
    let mut truth = vec![false; m];
    for &d in &relevant {
        truth[d] = true;
    }

    let means: Vec<Vec<f64>> = (0..spec.num_classes)
        .map(|_| {
            let u: Vec<f64> = (0..r).map(|_| rng.standard_normal()).collect();
            let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            u.iter()
                .map(|v| (0.5 + spec.class_separation * v / norm).clamp(0.0, 1.0))
                .collect()
        })
        .collect();

    let n = spec.total_examples();
    let mut data = Vec::with_capacity(n * m);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let class = rng.below(spec.num_classes);
        let mut row = vec![0.0f64; m];
        let mut k = 0;
        for (d, slot) in row.iter_mut().enumerate() {
            *slot = if truth[d] {
                let v = means[class][k] + spec.noise_sd * rng.standard_normal();
                k += 1;
                v.clamp(0.0, 1.0)
            } else {
                rng.uniform()
            };
        }
        data.extend(row.into_iter().map(T::of));
        labels.push(class + 1);
    }
    let d = Dataset::new(Matrix::from_vec(n, m, data)?, labels, spec.num_classes)?;
    Ok((d, VariableMask::from_bits(truth)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use crate::numerics::Rng;

    fn toy(n: usize) -> Dataset<f64> {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64 / n as f64, 0.5]).collect();
        let labels = (0..n).map(|i| i % 2 + 1).collect();
        Dataset::new(Matrix::from_rows(&rows).unwrap(), labels, 2).unwrap()
    }

    #[test]
    fn amat_minimal() {
        let d: Dataset<f64> = read_amat("0.0 1.0 0\n0.5 0.5 1\n".as_bytes(), LabelBase::Zero).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.num_vars(), 2);
        assert_eq!(d.labels(), &[1, 2]);
        assert_eq!(d.example(1), &[0.5, 0.5]);
    }

    #[test]
    fn amat_one_based() {
        let d: Dataset<f64> = read_amat("0.1 1\n0.2 3\n".as_bytes(), LabelBase::One).unwrap();
        assert_eq!(d.labels(), &[1, 3]);
        assert_eq!(d.num_classes(), 3);
        let e = read_amat::<f64, _>("0.1 0\n".as_bytes(), LabelBase::One).unwrap_err();
        assert!(matches!(e, Error::Parse { row: 1, .. }));
    }

    #[test]
    fn amat_errors() {
        let e = read_amat::<f64, _>("0.1 0.2 0\n0.1 0.2 0.3 1\n".as_bytes(), LabelBase::Zero)
            .unwrap_err();
        assert!(matches!(e, Error::RaggedRow { row: 2, .. }), "{e}");
        let e = read_amat::<f64, _>("0.1 1.5 0\n".as_bytes(), LabelBase::Zero).unwrap_err();
        assert!(matches!(e, Error::Domain { row: 1, col: 2, .. }), "{e}");
        let e = read_amat::<f64, _>("0.1 0.2 1.5\n".as_bytes(), LabelBase::Zero).unwrap_err();
        assert!(matches!(e, Error::Parse { row: 1, .. }), "{e}");
        let e = read_amat::<f64, _>("0.1 abc 1\n".as_bytes(), LabelBase::Zero).unwrap_err();
        assert!(matches!(e, Error::Parse { .. }));
        let e = load_amat::<f64>("/definitely/not/here.amat", LabelBase::Zero).unwrap_err();
        assert!(e.to_string().contains("/definitely/not/here.amat"));
    }

    #[test]
    fn amat_accepts_exponent_labels() {
        // some published files write labels as floats
        let d: Dataset<f64> = read_amat("0.1 2.0000000e+00\n".as_bytes(), LabelBase::Zero).unwrap();
        assert_eq!(d.labels(), &[3]);
    }

    #[test]
    fn split_sizes() {
        let d = toy(12000);
        let (a, b, c) = split(&d, 10000, 2000).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (10000, 2000, 0));
        assert!(matches!(split(&toy(10), 10, 1), Err(Error::InvalidSplit { .. })));
        let d = toy(5);
        let (a, b, c) = split(&d, 3, 1).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (3, 1, 1));
        assert_eq!(a.concat(&b).unwrap().concat(&c).unwrap(), d);
    }

    #[test]
    fn mask_ops() {
        let x = [0.2, 0.9, 0.4];
        let m = VariableMask::from_bits(vec![true, false, true]);
        assert_eq!(apply_mask(&x, &m).unwrap(), vec![0.2, 0.0, 0.4]);
        assert_eq!(apply_mask(&x, &VariableMask::all_ones(3)).unwrap(), x.to_vec());
        assert_eq!(
            apply_mask(&x, &VariableMask::from_bits(vec![false; 3])).unwrap(),
            vec![0.0; 3]
        );
        assert!(matches!(
            apply_mask(&x, &VariableMask::all_ones(2)),
            Err(Error::Dimension { .. })
        ));

        let x = [0.1, 0.2, 0.3];
        let m = VariableMask::from_bits(vec![false, true, true]);
        let c = compact(&x, &m).unwrap();
        assert_eq!(c, vec![0.2, 0.3]);
        assert_eq!(expand(&c, &m).unwrap(), vec![0.0, 0.2, 0.3]);
        assert_eq!(compact(&x, &VariableMask::all_ones(3)).unwrap(), x.to_vec());
        assert!(expand(&[1.0], &m).is_err());
    }

    #[test]
    fn dataset_rejects_bad_labels() {
        let m = Matrix::from_rows(&[vec![0.5]]).unwrap();
        assert!(Dataset::new(m.clone(), vec![3], 2).is_err());
        assert!(Dataset::new(m.clone(), vec![0], 2).is_err());
        assert!(Dataset::new(m, vec![1, 2], 2).is_err());
    }

    fn spec(irrelevant: usize) -> SyntheticSpec {
        SyntheticSpec {
            num_relevant: 20,
            num_irrelevant: irrelevant,
            num_classes: 5,
            class_separation: 3.0,
            noise_sd: 0.5,
            examples_per_split: (50, 20, 30),
        }
    }

    #[test]
    fn synthetic_truth_and_determinism() {
        let (d, truth) = gen_synthetic::<f64>(&spec(0), &mut Rng::new(1)).unwrap();
        assert!(truth.is_full());
        assert_eq!(d.len(), 100);

        let (a, ta) = gen_synthetic::<f64>(&spec(80), &mut Rng::new(5)).unwrap();
        let (b, tb) = gen_synthetic::<f64>(&spec(80), &mut Rng::new(5)).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        assert_eq!(ta.popcount(), 20);
        assert_eq!(a.num_vars(), 100);

        let mut bad = spec(1);
        bad.num_relevant = 0;
        assert!(gen_synthetic::<f64>(&bad, &mut Rng::new(5)).is_err());
    }

    proptest! {
        #[test]
        fn compact_expand_round_trip(
            pairs in proptest::collection::vec((0.0f64..=1.0, any::<bool>()), 1..40)
        ) {
            let x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let m = VariableMask::from_bits(pairs.iter().map(|p| p.1).collect());
            let c = compact(&x, &m).unwrap();
            prop_assert_eq!(c.len(), m.popcount());
            prop_assert_eq!(expand(&c, &m).unwrap(), apply_mask(&x, &m).unwrap());
        }

        #[test]
        fn split_partitions(n in 0usize..60, a in 0usize..60, b in 0usize..60) {
            let d = toy(n);
            match split(&d, a, b) {
                Ok((x, y, z)) => {
                    prop_assert_eq!(x.len() + y.len() + z.len(), n);
                    prop_assert_eq!(x.concat(&y).unwrap().concat(&z).unwrap(), d);
                }
                Err(_) => prop_assert!(a + b > n),
            }
        }
    }
}
