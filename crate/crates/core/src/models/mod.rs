//! Differentiable models over a flat parameter vector.
//!
//! Three fixed architectures with closed-form backpropagation:
//! multinomial logistic regression, a one-hidden-layer ReLU MLP (both with
//! softmax cross-entropy) and least squares `½(xᵀθ − y)²`. Batch means are
//! reduced row by row in index order, so results do not depend on how a
//! caller partitions work.

mod logistic;
mod mlp;
mod quadratic;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::rng::Rng;

/// Base step of the finite-difference Hessian-vector product.
pub const HVP_STEP: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Arch {
    Logistic {
        d_in: usize,
        classes: usize,
    },
    Mlp {
        d_in: usize,
        hidden: usize,
        classes: usize,
    },
    Quadratic {
        d_in: usize,
    },
}

impl Arch {
    pub fn param_count(&self) -> usize {
        match *self {
            Arch::Logistic { d_in, classes } => (d_in + 1) * classes,
            Arch::Mlp {
                d_in,
                hidden,
                classes,
            } => (d_in + 1) * hidden + (hidden + 1) * classes,
            Arch::Quadratic { d_in } => d_in,
        }
    }

    pub fn d_in(&self) -> usize {
        match *self {
            Arch::Logistic { d_in, .. } | Arch::Mlp { d_in, .. } | Arch::Quadratic { d_in } => {
                d_in
            }
        }
    }

    /// Class count for classifiers, `None` for regression.
    pub fn classes(&self) -> Option<usize> {
        match *self {
            Arch::Logistic { classes, .. } | Arch::Mlp { classes, .. } => Some(classes),
            Arch::Quadratic { .. } => None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.d_in() == 0 {
            return Err(domain("d_in", "must be positive"));
        }
        match *self {
            Arch::Mlp { hidden: 0, .. } => Err(domain("hidden", "must be positive")),
            Arch::Logistic { classes, .. } | Arch::Mlp { classes, .. } if classes < 2 => {
                Err(domain("classes", format!("{classes} < 2")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Targets {
    Classes(Vec<usize>),
    Real(Vec<f64>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes(c) => c.len(),
            Targets::Real(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize) -> Target {
        match self {
            Targets::Classes(c) => Target::Class(c[i]),
            Targets::Real(r) => Target::Real(r[i]),
        }
    }

    pub fn gather(&self, rows: &[usize]) -> Targets {
        match self {
            Targets::Classes(c) => Targets::Classes(rows.iter().map(|&i| c[i]).collect()),
            Targets::Real(r) => Targets::Real(rows.iter().map(|&i| r[i]).collect()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Target {
    Class(usize),
    Real(f64),
}

/// Rows of inputs with their targets and originating dataset indices.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    /// Row-major, `len() × d_in`.
    pub inputs: Vec<f64>,
    pub d_in: usize,
    pub targets: Targets,
    pub indices: Vec<usize>,
}

impl Batch {
    pub fn new(inputs: Vec<f64>, d_in: usize, targets: Targets) -> Result<Self> {
        let indices = (0..targets.len()).collect();
        let batch = Self {
            inputs,
            d_in,
            targets,
            indices,
        };
        batch.check_rows()?;
        Ok(batch)
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.d_in..(i + 1) * self.d_in]
    }

    /// Sub-batch of the given rows (positions within this batch).
    pub fn select(&self, rows: &[usize]) -> Batch {
        let mut inputs = Vec::with_capacity(rows.len() * self.d_in);
        for &r in rows {
            inputs.extend_from_slice(self.row(r));
        }
        Batch {
            inputs,
            d_in: self.d_in,
            targets: self.targets.gather(rows),
            indices: rows.iter().map(|&r| self.indices[r]).collect(),
        }
    }

    fn check_rows(&self) -> Result<()> {
        if self.d_in == 0 || self.inputs.len() != self.len() * self.d_in {
            return Err(Error::Shape(format!(
                "{} input values for {} rows of width {}",
                self.inputs.len(),
                self.len(),
                self.d_in
            )));
        }
        if self.indices.len() != self.len() {
            return Err(Error::Shape(format!(
                "{} indices for {} rows",
                self.indices.len(),
                self.len()
            )));
        }
        Ok(())
    }

    fn check_against(&self, arch: &Arch) -> Result<()> {
        if self.is_empty() {
            return Err(Error::EmptyDataset);
        }
        self.check_rows()?;
        if self.d_in != arch.d_in() {
            return Err(Error::Shape(format!(
                "batch width {} but model expects {}",
                self.d_in,
                arch.d_in()
            )));
        }
        match (&self.targets, arch.classes()) {
            (Targets::Classes(labels), Some(c)) => {
                if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
                    return Err(Error::Shape(format!("label {bad} outside 0..{c}")));
                }
            }
            (Targets::Real(ys), None) => {
                if ys.iter().any(|y| !y.is_finite()) {
                    return Err(Error::Numeric("non-finite regression target".into()));
                }
            }
            _ => {
                return Err(Error::Shape(
                    "target kind does not match model (class labels vs real targets)".into(),
                ))
            }
        }
        if self.inputs.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric("non-finite input".into()));
        }
        Ok(())
    }
}

/// Architecture plus its flat parameter vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub arch: Arch,
    pub theta: Vec<f64>,
}

impl ModelState {
    pub fn new(arch: Arch, theta: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        if theta.len() != arch.param_count() {
            return Err(Error::Shape(format!(
                "{} parameters but architecture needs {}",
                theta.len(),
                arch.param_count()
            )));
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::Numeric("non-finite parameter".into()));
        }
        Ok(Self { arch, theta })
    }

    pub fn zeros(arch: Arch) -> Result<Self> {
        Self::new(arch, vec![0.0; arch.param_count()])
    }

    /// Logistic and least-squares models start at zero; the MLP draws every
    /// weight and bias from `U(−1/√fan_in, 1/√fan_in)`.
    pub fn init(arch: Arch, rng: &mut Rng) -> Result<Self> {
        match arch {
            Arch::Mlp { .. } => Self::new(arch, mlp::init(&arch, rng)),
            _ => Self::zeros(arch),
        }
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    fn sample(&self, x: &[f64], target: Target, grad: Option<&mut [f64]>) -> f64 {
        match self.arch {
            Arch::Logistic { .. } => logistic::sample(&self.arch, &self.theta, x, target, grad),
            Arch::Mlp { .. } => mlp::sample(&self.arch, &self.theta, x, target, grad),
            Arch::Quadratic { .. } => quadratic::sample(&self.theta, x, target, grad),
        }
    }

    /// Class scores for one input row; `None` for regression.
    pub fn logits(&self, x: &[f64]) -> Option<Vec<f64>> {
        match self.arch {
            Arch::Logistic { .. } => Some(logistic::logits(&self.arch, &self.theta, x)),
            Arch::Mlp { .. } => Some(mlp::logits(&self.arch, &self.theta, x)),
            Arch::Quadratic { .. } => None,
        }
    }

    fn with_theta(&self, theta: Vec<f64>) -> ModelState {
        ModelState {
            arch: self.arch,
            theta,
        }
    }
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric(format!("non-finite {what}")))
    }
}

pub fn loss_per_sample(state: &ModelState, batch: &Batch) -> Result<Vec<f64>> {
    batch.check_against(&state.arch)?;
    let losses: Vec<f64> = (0..batch.len())
        .map(|i| state.sample(batch.row(i), batch.targets.get(i), None))
        .collect();
    check_finite(&losses, "loss")?;
    Ok(losses)
}

pub fn mean_loss(state: &ModelState, batch: &Batch) -> Result<f64> {
    let losses = loss_per_sample(state, batch)?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Per-sample losses and the gradient of their mean, from one pass.
pub fn loss_and_gradient(state: &ModelState, batch: &Batch) -> Result<(Vec<f64>, Vec<f64>)> {
    batch.check_against(&state.arch)?;
    let d = state.dim();
    let mut sum = vec![0.0; d];
    let mut row = vec![0.0; d];
    let mut losses = Vec::with_capacity(batch.len());
    for i in 0..batch.len() {
        losses.push(state.sample(batch.row(i), batch.targets.get(i), Some(&mut row)));
        for (s, g) in sum.iter_mut().zip(&row) {
            *s += g;
        }
    }
    let m = batch.len() as f64;
    sum.iter_mut().for_each(|s| *s /= m);
    check_finite(&losses, "loss")?;
    check_finite(&sum, "gradient")?;
    Ok((losses, sum))
}

pub fn mean_gradient(state: &ModelState, batch: &Batch) -> Result<Vec<f64>> {
    loss_and_gradient(state, batch).map(|(_, g)| g)
}

/// One gradient row per sample.
pub fn per_sample_gradients(state: &ModelState, batch: &Batch) -> Result<Vec<Vec<f64>>> {
    batch.check_against(&state.arch)?;
    let rows: Vec<Vec<f64>> = (0..batch.len())
        .map(|i| {
            let mut row = vec![0.0; state.dim()];
            state.sample(batch.row(i), batch.targets.get(i), Some(&mut row));
            row
        })
        .collect();
    for row in &rows {
        check_finite(row, "gradient")?;
    }
    Ok(rows)
}

/// Arg-max class per row, ties to the smaller class index. Errors for
/// regression models.
pub fn predict(state: &ModelState, batch: &Batch) -> Result<Vec<usize>> {
    batch.check_against(&state.arch)?;
    (0..batch.len())
        .map(|i| {
            let logits = state
                .logits(batch.row(i))
                .ok_or_else(|| Error::Shape("regression model has no class prediction".into()))?;
            Ok(argmax(&logits))
        })
        .collect()
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = j;
        }
    }
    best
}

/// `H·v` of the batch-mean loss by symmetric differences of the gradient,
/// `(g(θ + r v) − g(θ − r v)) / 2r` with `r = HVP_STEP / max(‖v‖, 1)`.
pub fn hessian_vector_product(state: &ModelState, batch: &Batch, v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() || v.len() != state.dim() {
        return Err(Error::Shape(format!(
            "direction of length {} for {} parameters",
            v.len(),
            state.dim()
        )));
    }
    check_finite(v, "direction")?;
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let r = HVP_STEP / norm.max(1.0);
    let shifted = |sign: f64| {
        let theta = state
            .theta
            .iter()
            .zip(v)
            .map(|(t, vi)| t + sign * r * vi)
            .collect();
        mean_gradient(&state.with_theta(theta), batch)
    };
    let plus = shifted(1.0)?;
    let minus = shifted(-1.0)?;
    Ok(plus
        .iter()
        .zip(&minus)
        .map(|(a, b)| (a - b) / (2.0 * r))
        .collect())
}

/// `θ − η·g`.
pub fn sgd_step(state: &ModelState, grad: &[f64], lr: f64) -> Result<ModelState> {
    if grad.len() != state.dim() {
        return Err(Error::Shape(format!(
            "gradient of length {} for {} parameters",
            grad.len(),
            state.dim()
        )));
    }
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(domain("learning_rate", format!("{lr} must be positive")));
    }
    let theta: Vec<f64> = state
        .theta
        .iter()
        .zip(grad)
        .map(|(t, g)| t - lr * g)
        .collect();
    check_finite(&theta, "parameter after step")?;
    Ok(state.with_theta(theta))
}

/// Stabilized softmax cross-entropy on `logits`; writes `softmax − onehot`
/// into `dlogits` when given.
fn cross_entropy(logits: &[f64], label: usize, dlogits: Option<&mut [f64]>) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|z| (z - max).exp()).sum();
    let lse = max + sum.ln();
    if let Some(d) = dlogits {
        for (j, (dj, z)) in d.iter_mut().zip(logits).enumerate() {
            *dj = (z - lse).exp() - if j == label { 1.0 } else { 0.0 };
        }
    }
    lse - logits[label]
}

fn class_of(target: Target) -> usize {
    match target {
        Target::Class(c) => c,
        Target::Real(_) => unreachable!("classifier given a real target"),
    }
}
