//! Small softmax classifiers over a flat parameter vector.
//!
//! Two architectures are supported, both trained with mean cross-entropy:
//! multinomial logistic regression and a one-hidden-layer ReLU MLP. The
//! parameter layout is row-major per layer, weights before biases:
//!
//! - logistic: `W (input_dim x C)`, `b (C)`
//! - mlp: `W1 (input_dim x H)`, `b1 (H)`, `W2 (H x C)`, `b2 (C)`

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{Purpose, RngStream};

/// Flat parameter vector. Also used for updates, corrections and gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    fn check_dim(&self, other: &Self) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        Ok(())
    }

    /// `self + other`, elementwise.
    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        Ok(Self(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect()))
    }

    /// `self - other`, elementwise.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        Ok(Self(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect()))
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self(self.0.iter().map(|v| v * factor).collect())
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &Self) -> Result<()> {
        self.check_dim(other)?;
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn dot(&self, other: &Self) -> Result<f64> {
        self.check_dim(other)?;
        Ok(self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum())
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn norm_inf(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(values: Vec<f64>) -> Self {
        Self(values)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Logistic,
    Mlp { hidden_dim: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub input_dim: usize,
    pub num_classes: usize,
}

impl ModelSpec {
    pub fn logistic(input_dim: usize, num_classes: usize) -> Self {
        Self {
            kind: ModelKind::Logistic,
            input_dim,
            num_classes,
        }
    }

    pub fn mlp(input_dim: usize, hidden_dim: usize, num_classes: usize) -> Self {
        Self {
            kind: ModelKind::Mlp { hidden_dim },
            input_dim,
            num_classes,
        }
    }

    pub fn param_count(&self) -> usize {
        let (d, c) = (self.input_dim, self.num_classes);
        match self.kind {
            ModelKind::Logistic => d * c + c,
            ModelKind::Mlp { hidden_dim: h } => d * h + h + h * c + c,
        }
    }

    fn check_params(&self, params: &ParamVector) -> Result<()> {
        if params.dim() != self.param_count() {
            return Err(Error::DimMismatch {
                expected: self.param_count(),
                got: params.dim(),
            });
        }
        Ok(())
    }

    fn check_batch(&self, batch: &Batch) -> Result<()> {
        if batch.input_dim != self.input_dim {
            return Err(Error::DimMismatch {
                expected: self.input_dim,
                got: batch.input_dim,
            });
        }
        if let Some(&label) = batch.labels.iter().find(|&&l| l >= self.num_classes) {
            return Err(Error::LabelOutOfRange {
                label,
                num_classes: self.num_classes,
            });
        }
        Ok(())
    }
}

/// Row-major feature matrix with one class label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    features: Vec<f64>,
    labels: Vec<usize>,
    input_dim: usize,
}

impl Batch {
    pub fn new(features: Vec<f64>, labels: Vec<usize>, input_dim: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if input_dim == 0 || features.len() != labels.len() * input_dim {
            return Err(Error::DimMismatch {
                expected: labels.len() * input_dim,
                got: features.len(),
            });
        }
        Ok(Self {
            features,
            labels,
            input_dim,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    /// Gathers the given rows into a new batch, in the given order.
    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        let mut features = Vec::with_capacity(rows.len() * self.input_dim);
        let mut labels = Vec::with_capacity(rows.len());
        for &r in rows {
            features.extend_from_slice(self.row(r));
            labels.push(self.labels[r]);
        }
        Self::new(features, labels, self.input_dim)
    }

    /// Concatenates batches with equal input dimension.
    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a Batch>) -> Result<Self> {
        let mut features = Vec::new();
        let mut labels = Vec::new();
        let mut input_dim = None;
        for part in parts {
            match input_dim {
                None => input_dim = Some(part.input_dim),
                Some(d) if d != part.input_dim => {
                    return Err(Error::DimMismatch {
                        expected: d,
                        got: part.input_dim,
                    })
                }
                _ => {}
            }
            features.extend_from_slice(&part.features);
            labels.extend_from_slice(&part.labels);
        }
        Self::new(features, labels, input_dim.ok_or(Error::EmptyDataset)?)
    }
}

/// Glorot-uniform weights, zero biases.
pub fn init_params(spec: &ModelSpec, seed: u64) -> ParamVector {
    let mut rng = RngStream::new(seed, 0, 0, Purpose::Init).rng();
    let mut values = Vec::with_capacity(spec.param_count());
    let mut layer = |fan_in: usize, fan_out: usize, values: &mut Vec<f64>| {
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        values.extend((0..fan_in * fan_out).map(|_| rng.random_range(-a..=a)));
        values.extend(std::iter::repeat_n(0.0, fan_out));
    };
    match spec.kind {
        ModelKind::Logistic => layer(spec.input_dim, spec.num_classes, &mut values),
        ModelKind::Mlp { hidden_dim } => {
            layer(spec.input_dim, hidden_dim, &mut values);
            layer(hidden_dim, spec.num_classes, &mut values);
        }
    }
    ParamVector(values)
}

/// `out = b + x W` for a dense layer stored as `W (rows(x) x cols)` then `b`.
fn dense(x: &[f64], w: &[f64], b: &[f64], out: &mut [f64]) {
    let cols = b.len();
    out.copy_from_slice(b);
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        let row = &w[i * cols..(i + 1) * cols];
        for (o, &wij) in out.iter_mut().zip(row) {
            *o += xi * wij;
        }
    }
}

/// Numerically stable softmax, in place. Returns log-sum-exp of the input.
pub fn softmax_in_place(z: &mut [f64]) -> f64 {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
    max + sum.ln()
}

/// Per-layer slices of a parameter vector.
struct Layers<'a> {
    w1: &'a [f64],
    b1: &'a [f64],
    second: Option<(&'a [f64], &'a [f64])>,
}

fn split<'a>(spec: &ModelSpec, p: &'a [f64]) -> Layers<'a> {
    let (d, c) = (spec.input_dim, spec.num_classes);
    match spec.kind {
        ModelKind::Logistic => Layers {
            w1: &p[..d * c],
            b1: &p[d * c..],
            second: None,
        },
        ModelKind::Mlp { hidden_dim: h } => {
            let (w1, rest) = p.split_at(d * h);
            let (b1, rest) = rest.split_at(h);
            let (w2, b2) = rest.split_at(h * c);
            Layers {
                w1,
                b1,
                second: Some((w2, b2)),
            }
        }
    }
}

/// Logits for one sample; `hidden` receives post-ReLU activations (mlp only).
fn logits_into(layers: &Layers<'_>, x: &[f64], hidden: &mut [f64], logits: &mut [f64]) {
    match layers.second {
        None => dense(x, layers.w1, layers.b1, logits),
        Some((w2, b2)) => {
            dense(x, layers.w1, layers.b1, hidden);
            for v in hidden.iter_mut() {
                *v = v.max(0.0);
            }
            dense(hidden, w2, b2, logits);
        }
    }
}

fn hidden_len(spec: &ModelSpec) -> usize {
    match spec.kind {
        ModelKind::Logistic => 0,
        ModelKind::Mlp { hidden_dim } => hidden_dim,
    }
}

/// Mean softmax cross-entropy over the batch.
pub fn forward_loss(spec: &ModelSpec, params: &ParamVector, batch: &Batch) -> Result<f64> {
    spec.check_params(params)?;
    spec.check_batch(batch)?;
    let layers = split(spec, params.as_slice());
    let mut hidden = vec![0.0; hidden_len(spec)];
    let mut z = vec![0.0; spec.num_classes];
    let mut total = 0.0;
    for (i, &y) in batch.labels.iter().enumerate() {
        logits_into(&layers, batch.row(i), &mut hidden, &mut z);
        let zy = z[y];
        let lse = softmax_in_place(&mut z);
        total += (lse - zy).max(0.0);
    }
    Ok(total / batch.len() as f64)
}

/// Analytic gradient of [`forward_loss`] by backpropagation.
pub fn gradient(spec: &ModelSpec, params: &ParamVector, batch: &Batch) -> Result<ParamVector> {
    spec.check_params(params)?;
    spec.check_batch(batch)?;
    let (d, c) = (spec.input_dim, spec.num_classes);
    let h = hidden_len(spec);
    let layers = split(spec, params.as_slice());
    let mut grad = vec![0.0; params.dim()];
    let mut hidden = vec![0.0; h];
    let mut dhidden = vec![0.0; h];
    let mut z = vec![0.0; c];
    let inv_n = 1.0 / batch.len() as f64;

    for (i, &y) in batch.labels.iter().enumerate() {
        let x = batch.row(i);
        logits_into(&layers, x, &mut hidden, &mut z);
        softmax_in_place(&mut z);
        z[y] -= 1.0;
        for v in z.iter_mut() {
            *v *= inv_n;
        }
        match layers.second {
            None => {
                accumulate_dense(&mut grad[..d * c + c], x, &z);
            }
            Some((w2, _)) => {
                let first = d * h + h;
                accumulate_dense(&mut grad[first..], &hidden, &z);
                for (j, dh) in dhidden.iter_mut().enumerate() {
                    *dh = if hidden[j] > 0.0 {
                        w2[j * c..(j + 1) * c]
                            .iter()
                            .zip(&z)
                            .map(|(w, g)| w * g)
                            .sum()
                    } else {
                        0.0
                    };
                }
                accumulate_dense(&mut grad[..first], x, &dhidden);
            }
        }
    }
    Ok(ParamVector(grad))
}

/// Adds `x^T dout` into the weight block and `dout` into the bias block.
fn accumulate_dense(grad: &mut [f64], x: &[f64], dout: &[f64]) {
    let cols = dout.len();
    let (gw, gb) = grad.split_at_mut(x.len() * cols);
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        for (g, &dz) in gw[i * cols..(i + 1) * cols].iter_mut().zip(dout) {
            *g += xi * dz;
        }
    }
    for (g, &dz) in gb[..cols].iter_mut().zip(dout) {
        *g += dz;
    }
}

/// Central-difference estimate of the gradient, one coordinate at a time.
pub fn finite_diff_gradient(
    spec: &ModelSpec,
    params: &ParamVector,
    batch: &Batch,
    h: f64,
) -> Result<ParamVector> {
    spec.check_params(params)?;
    let mut probe = params.clone();
    let mut grad = Vec::with_capacity(params.dim());
    for j in 0..params.dim() {
        let orig = probe.0[j];
        probe.0[j] = orig + h;
        let up = forward_loss(spec, &probe, batch)?;
        probe.0[j] = orig - h;
        let down = forward_loss(spec, &probe, batch)?;
        probe.0[j] = orig;
        grad.push((up - down) / (2.0 * h));
    }
    Ok(ParamVector(grad))
}

/// Class scores for every row of the batch, row-major `(n x C)`.
pub fn predict_logits(spec: &ModelSpec, params: &ParamVector, batch: &Batch) -> Result<Vec<f64>> {
    spec.check_params(params)?;
    if batch.input_dim != spec.input_dim {
        return Err(Error::DimMismatch {
            expected: spec.input_dim,
            got: batch.input_dim,
        });
    }
    let layers = split(spec, params.as_slice());
    let mut hidden = vec![0.0; hidden_len(spec)];
    let mut out = vec![0.0; batch.len() * spec.num_classes];
    for (i, z) in out.chunks_mut(spec.num_classes).enumerate() {
        logits_into(&layers, batch.row(i), &mut hidden, z);
    }
    Ok(out)
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (k, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = k;
        }
    }
    best
}

/// Fraction of samples whose argmax prediction equals the label.
pub fn accuracy(spec: &ModelSpec, params: &ParamVector, batch: &Batch) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let logits = predict_logits(spec, params, batch)?;
    let correct = logits
        .chunks(spec.num_classes)
        .zip(batch.labels())
        .filter(|(z, &y)| argmax(z) == y)
        .count();
    Ok(correct as f64 / batch.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    fn tiny_batch() -> Batch {
        Batch::new(vec![0.5, -1.0, 2.0, 0.25, -0.75, 1.5], vec![0, 1, 1], 2).unwrap()
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let spec = ModelSpec::logistic(2, 2);
        let a = init_params(&spec, 7);
        assert_eq!(a.dim(), 6);
        assert_eq!(&a.as_slice()[4..], &[0.0, 0.0]);
        assert_eq!(a, init_params(&spec, 7));
        assert_ne!(a, init_params(&spec, 8));
    }

    #[test]
    fn init_respects_glorot_bound() {
        let spec = ModelSpec::mlp(4, 3, 2);
        let p = init_params(&spec, 1);
        assert_eq!(p.dim(), 23);
        let a1 = (6.0f64 / 7.0).sqrt();
        let a2 = (6.0f64 / 5.0).sqrt();
        let s = p.as_slice();
        assert!(s[..12].iter().all(|v| v.abs() <= a1));
        assert_eq!(&s[12..15], &[0.0; 3]);
        assert!(s[15..21].iter().all(|v| v.abs() <= a2));
        assert_eq!(&s[21..], &[0.0; 2]);
    }

    #[test]
    fn zero_params_give_log_c() {
        let spec = ModelSpec::logistic(2, 2);
        let loss = forward_loss(&spec, &ParamVector::zeros(6), &tiny_batch()).unwrap();
        assert!((loss - LN_2).abs() < 1e-15);

        let spec10 = ModelSpec::logistic(2, 10);
        let loss = forward_loss(&spec10, &ParamVector::zeros(30), &tiny_batch()).unwrap();
        assert!((loss - 10f64.ln()).abs() < 1e-15);
    }

    /// Independent forward pass written directly from the definition.
    fn naive_logistic_loss(d: usize, c: usize, p: &[f64], xs: &[Vec<f64>], ys: &[usize]) -> f64 {
        let mut total = 0.0;
        for (x, &y) in xs.iter().zip(ys) {
            let z: Vec<f64> = (0..c)
                .map(|k| p[d * c + k] + (0..d).map(|j| x[j] * p[j * c + k]).sum::<f64>())
                .collect();
            let denom: f64 = z.iter().map(|v| v.exp()).sum();
            total += -(z[y].exp() / denom).ln();
        }
        total / xs.len() as f64
    }

    #[test]
    fn forward_matches_naive_oracle() {
        let spec = ModelSpec::logistic(2, 3);
        let p = init_params(&spec, 11);
        let p = ParamVector::from_vec(
            p.as_slice()
                .iter()
                .enumerate()
                .map(|(i, v)| v + 0.1 * i as f64)
                .collect(),
        );
        let batch = Batch::new(vec![0.5, -1.0, 2.0, 0.25, -0.75, 1.5], vec![0, 2, 1], 2).unwrap();
        let xs: Vec<Vec<f64>> = (0..3).map(|i| batch.row(i).to_vec()).collect();
        let expect = naive_logistic_loss(2, 3, p.as_slice(), &xs, batch.labels());
        let got = forward_loss(&spec, &p, &batch).unwrap();
        assert!((got - expect).abs() < 1e-13, "{got} vs {expect}");
    }

    #[test]
    fn mlp_forward_matches_naive_oracle() {
        let spec = ModelSpec::mlp(2, 3, 2);
        let p = init_params(&spec, 5);
        let s = p.as_slice();
        let batch = tiny_batch();
        let mut expect = 0.0;
        for i in 0..batch.len() {
            let x = batch.row(i);
            let h: Vec<f64> = (0..3)
                .map(|k| (s[6 + k] + x[0] * s[k] + x[1] * s[3 + k]).max(0.0))
                .collect();
            let z: Vec<f64> = (0..2)
                .map(|c| s[15 + c] + (0..3).map(|k| h[k] * s[9 + k * 2 + c]).sum::<f64>())
                .collect();
            let y = batch.labels()[i];
            expect += -(z[y].exp() / (z[0].exp() + z[1].exp())).ln();
        }
        expect /= 3.0;
        let got = forward_loss(&spec, &p, &batch).unwrap();
        assert!((got - expect).abs() < 1e-13);
    }

    #[test]
    fn gradient_near_zero_when_confident() {
        // w pushes class 0 for x > 0 and class 1 for x < 0 with a huge margin
        let spec = ModelSpec::logistic(1, 2);
        let p = ParamVector::from_vec(vec![100.0, -100.0, 0.0, 0.0]);
        let batch = Batch::new(vec![1.0, -1.0, 2.0], vec![0, 1, 0], 1).unwrap();
        let g = gradient(&spec, &p, &batch).unwrap();
        assert!(g.norm_inf() < 1e-8);
    }

    #[test]
    fn gradient_is_linear_in_batch_union() {
        let spec = ModelSpec::mlp(2, 4, 3);
        let p = init_params(&spec, 3);
        let a = Batch::new(vec![0.1, 0.2, -0.3, 0.4], vec![0, 2], 2).unwrap();
        let b = Batch::new(vec![1.0, -0.5, 0.7, 0.9], vec![1, 1], 2).unwrap();
        let ab = Batch::concat([&a, &b]).unwrap();
        let gab = gradient(&spec, &p, &ab).unwrap();
        let half = gradient(&spec, &p, &a)
            .unwrap()
            .add(&gradient(&spec, &p, &b).unwrap())
            .unwrap()
            .scale(0.5);
        for (x, y) in gab.as_slice().iter().zip(half.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn finite_difference_agrees_on_logistic() {
        let spec = ModelSpec::logistic(3, 4);
        let p = init_params(&spec, 9);
        let batch = Batch::new(
            vec![0.3, -1.2, 0.8, 1.1, 0.0, -0.4, -0.6, 0.7, 0.2],
            vec![3, 0, 1],
            3,
        )
        .unwrap();
        let g = gradient(&spec, &p, &batch).unwrap();
        let fd = finite_diff_gradient(&spec, &p, &batch, 1e-5).unwrap();
        let rel = g.sub(&fd).unwrap().norm() / g.norm();
        assert!(rel < 1e-5, "rel = {rel}");
    }

    #[test]
    fn finite_difference_error_is_second_order() {
        // Single coordinate probe on a fixed instance; error vs analytic at h and h/2.
        let spec = ModelSpec::logistic(2, 3);
        let p = ParamVector::from_vec(vec![0.9, -0.4, 0.3, 1.2, -0.8, 0.5, 0.1, -0.2, 0.05]);
        let batch = Batch::new(vec![1.5, -0.7, -2.0, 0.6], vec![2, 0], 2).unwrap();
        let g = gradient(&spec, &p, &batch).unwrap();
        let err = |h: f64| {
            finite_diff_gradient(&spec, &p, &batch, h)
                .unwrap()
                .sub(&g)
                .unwrap()
                .norm()
        };
        let (e1, e2) = (err(2e-4), err(1e-4));
        let slope = (e1 / e2).log2();
        assert!((1.6..=2.4).contains(&slope), "slope = {slope}");
    }

    #[test]
    fn finite_difference_near_zero_at_optimum() {
        let spec = ModelSpec::logistic(1, 2);
        let p = ParamVector::from_vec(vec![100.0, -100.0, 0.0, 0.0]);
        let batch = Batch::new(vec![1.0, -1.0], vec![0, 1], 1).unwrap();
        assert!(finite_diff_gradient(&spec, &p, &batch, 1e-5).unwrap().norm_inf() < 1e-8);
    }

    #[test]
    fn softmax_sums_to_one() {
        let mut z = vec![1000.0, -3.0, 2.5, 999.0];
        softmax_in_place(&mut z);
        assert!((z.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn accuracy_of_constant_predictor() {
        let spec = ModelSpec::logistic(2, 3);
        // bias favours class 2 everywhere
        let p = ParamVector::from_vec(vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let batch = Batch::new(vec![0.1, 0.2, 0.3, 0.4], vec![2, 2], 2).unwrap();
        assert_eq!(accuracy(&spec, &p, &batch).unwrap(), 1.0);
    }

    #[test]
    fn ties_break_to_lowest_class() {
        assert_eq!(argmax(&[0.5, 0.5, 0.2]), 0);
        assert_eq!(argmax(&[0.1, 0.7, 0.7]), 1);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let spec = ModelSpec::logistic(2, 2);
        let err = forward_loss(&spec, &ParamVector::zeros(5), &tiny_batch()).unwrap_err();
        assert!(matches!(err, Error::DimMismatch { expected: 6, got: 5 }));
        assert!(gradient(&spec, &ParamVector::zeros(7), &tiny_batch()).is_err());
    }

    #[test]
    fn param_count_formula_over_grid() {
        for d in 1..6 {
            for c in 2..6 {
                let spec = ModelSpec::logistic(d, c);
                assert_eq!(init_params(&spec, 0).dim(), d * c + c);
                for h in 1..5 {
                    let spec = ModelSpec::mlp(d, h, c);
                    assert_eq!(spec.param_count(), d * h + h + h * c + c);
                    assert_eq!(init_params(&spec, 0).dim(), spec.param_count());
                }
            }
        }
    }
}
