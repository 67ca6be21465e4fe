use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::numerics::{init_uniform, Activation, Matrix, Rng, Scalar, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

/// Labelled samples, one row per sample, features in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Matrix<f32>,
    labels: Vec<usize>,
    classes: usize,
    split: Split,
}

impl Dataset {
    pub fn new(features: Matrix<f32>, labels: Vec<usize>, classes: usize, split: Split) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::Input(alloc::format!(
                "{} samples but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Input(alloc::format!("label {bad} out of range for {classes} classes")));
        }
        Ok(Dataset { features, labels, classes, split })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn features(&self) -> &Matrix<f32> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        self.features.row(i)
    }

    /// The first `n` samples (or all of them).
    pub fn take(&self, n: usize) -> Dataset {
        self.range(0, n)
    }

    /// Samples `start..end`, clamped to the dataset.
    pub fn range(&self, start: usize, end: usize) -> Dataset {
        let end = end.min(self.len());
        let start = start.min(end);
        let d = self.dim();
        let data = self.features.as_slice()[start * d..end * d].to_vec();
        Dataset {
            features: Matrix::new(end - start, d, data).expect("slice of a valid matrix"),
            labels: self.labels[start..end].to_vec(),
            classes: self.classes,
            split: self.split,
        }
    }

    pub fn with_split(mut self, split: Split) -> Dataset {
        self.split = split;
        self
    }

    /// Feature-major batch: column `b` holds sample `indices[b]`.
    pub fn gather<T: Scalar>(&self, indices: &[usize]) -> Matrix<T> {
        let d = self.dim();
        let b = indices.len();
        let mut out = Matrix::zeros(d, b);
        let dst = out.as_mut_slice();
        for (col, &i) in indices.iter().enumerate() {
            for (f, &v) in self.sample(i).iter().enumerate() {
                dst[f * b + col] = T::of(v as f64);
            }
        }
        out
    }

    pub fn class_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.classes];
        self.labels.iter().for_each(|&l| h[l] += 1);
        h
    }
}

/// Samples labelled by a fixed random tanh teacher network.
///
/// Inputs are uniform in `[0, 1]`; the label is the argmax of the teacher's
/// output. The teacher's logits are centred on a pilot draw so every class is
/// reachable, and samples are accepted only while their class is below its
/// quota of `n / classes` (the first `n % classes` classes take one extra),
/// so class counts differ by at most one.
pub fn synthetic_teacher(
    n_samples: usize,
    input_dim: usize,
    classes: usize,
    teacher_hidden: &[usize],
    seed: u64,
) -> Result<Dataset> {
    if classes < 2 {
        return Err(Error::Input("synthetic data needs at least two classes".into()));
    }
    if input_dim == 0 {
        return Err(Error::Input("synthetic data needs at least one feature".into()));
    }
    let mut rng = Rng::stream(seed, Stream::Data);
    let mut dims = vec![input_dim];
    dims.extend_from_slice(teacher_hidden);
    dims.push(classes);
    let weights: Vec<Matrix<f64>> = dims
        .windows(2)
        .map(|w| init_uniform(w[1], w[0], num_traits::Float::sqrt(3.0 / w[0] as f64), &mut rng))
        .collect();

    let logits = |x: &[f64]| -> Vec<f64> {
        let mut a: Vec<f64> = x.iter().map(|v| 2.0 * v - 1.0).collect();
        for (l, w) in weights.iter().enumerate() {
            let y = w.matmul(&Matrix::column(&a)).expect("teacher dims").into_vec();
            a = if l + 1 < weights.len() { Activation::Tanh.forward(&y) } else { y };
        }
        a
    };

    let pilot = 64 * classes;
    let mut centre = vec![0.0; classes];
    for _ in 0..pilot {
        let x: Vec<f64> = (0..input_dim).map(|_| rng.uniform(0.0, 1.0)).collect();
        for (c, v) in centre.iter_mut().zip(logits(&x)) {
            *c += v / pilot as f64;
        }
    }

    let quota: Vec<usize> = (0..classes).map(|c| n_samples / classes + usize::from(c < n_samples % classes)).collect();
    let mut counts = vec![0; classes];
    let mut features = Vec::with_capacity(n_samples * input_dim);
    let mut labels = Vec::with_capacity(n_samples);
    let max_draws = 1000 * n_samples.max(1) * classes;
    let mut draws = 0;
    while labels.len() < n_samples {
        draws += 1;
        if draws > max_draws {
            return Err(Error::Input(alloc::format!(
                "teacher could not fill class quotas after {max_draws} draws"
            )));
        }
        let x: Vec<f64> = (0..input_dim).map(|_| rng.uniform(0.0, 1.0)).collect();
        let out = logits(&x);
        let label = argmax(out.iter().zip(&centre).map(|(v, c)| v - c));
        if counts[label] < quota[label] {
            counts[label] += 1;
            labels.push(label);
            features.extend(x.iter().map(|&v| v as f32));
        }
    }
    Dataset::new(Matrix::new(n_samples, input_dim, features)?, labels, classes, Split::Train)
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax<T: PartialOrd>(values: impl IntoIterator<Item = T>) -> usize {
    let mut best: Option<(usize, T)> = None;
    for (i, v) in values.into_iter().enumerate() {
        match &best {
            Some((_, b)) if !(v > *b) => {}
            _ => best = Some((i, v)),
        }
    }
    best.map_or(0, |(i, _)| i)
}
