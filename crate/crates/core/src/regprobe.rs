//! Subsampling-induced curvature term.
//!
//! For one SGD step on a uniform subset of `m = pN` samples drawn without
//! replacement, the expected full-data loss after the step is, to second
//! order,
//!
//! ```text
//! L(θ) − η‖∇L‖² + (η²/2)·∇Lᵀ H ∇L + R,   R = η²/(2N) · (1 − p)/p · Tr(H C)
//! ```
//!
//! with `C` the per-sample gradient covariance normalized by `1/(N − 1)`.
//! Under that normalization the subset-mean gradient has covariance
//! `(1/m − 1/N)·C`, so the expansion is exact for least squares. This module
//! computes `Tr(H C)`, assembles `R`, and checks the expansion against
//! Monte-Carlo subset sampling.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::models::{hessian_vector_product, mean_gradient, mean_loss, per_sample_gradients, Batch, ModelState};
use crate::rng::{labels, Rng};
use crate::trainer::Snapshot;

/// How `Tr(H C)` is evaluated. Both routes compute the same quantity
/// exactly up to finite-difference error in the Hessian products.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceMethod {
    /// `Σ_i δ_iᵀ H δ_i / (N − 1)` with `δ_i = g_i − ḡ`: one HVP per sample.
    PerSample,
    /// Dense `H` from one HVP per coordinate, contracted with the dense
    /// covariance: one HVP per parameter.
    DenseHessian,
    /// `PerSample` when `N ≤ d`, otherwise `DenseHessian`.
    #[default]
    Auto,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceHc {
    pub value: f64,
    /// Hessian-vector products evaluated.
    pub probes: usize,
}

/// `λ(p) = (1 − p)/p`.
pub fn lambda(p: f64) -> Result<f64> {
    if p > 0.0 && p <= 1.0 {
        Ok((1.0 - p) / p)
    } else {
        Err(domain("p", format!("{p} not in (0, 1]")))
    }
}

fn centered_gradients(state: &ModelState, data: &Batch) -> Result<Vec<Vec<f64>>> {
    if data.len() < 2 {
        return Err(Error::DegenerateCovariance(data.len()));
    }
    let mut rows = per_sample_gradients(state, data)?;
    let n = rows.len() as f64;
    let d = state.dim();
    let mut mean = vec![0.0; d];
    for row in &rows {
        for (m, g) in mean.iter_mut().zip(row) {
            *m += g;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    for row in &mut rows {
        for (g, m) in row.iter_mut().zip(&mean) {
            *g -= m;
        }
    }
    Ok(rows)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `Tr(H C)` over the full dataset via one HVP per sample.
pub fn gradient_covariance_trace_hc(state: &ModelState, data: &Batch) -> Result<f64> {
    trace_hc_with(state, data, TraceMethod::PerSample).map(|t| t.value)
}

pub fn trace_hc_with(state: &ModelState, data: &Batch, method: TraceMethod) -> Result<TraceHc> {
    let centered = centered_gradients(state, data)?;
    let n = centered.len();
    let d = state.dim();
    let method = match method {
        TraceMethod::Auto if n <= d => TraceMethod::PerSample,
        TraceMethod::Auto => TraceMethod::DenseHessian,
        m => m,
    };
    let denom = (n - 1) as f64;

    match method {
        TraceMethod::PerSample => {
            let mut total = 0.0;
            let mut probes = 0;
            for delta in &centered {
                if delta.iter().all(|&x| x == 0.0) {
                    continue;
                }
                let hd = hessian_vector_product(state, data, delta)?;
                total += dot(delta, &hd);
                probes += 1;
            }
            Ok(TraceHc {
                value: total / denom,
                probes,
            })
        }
        TraceMethod::DenseHessian => {
            // column j of H
            let mut hessian = Vec::with_capacity(d);
            let mut unit = vec![0.0; d];
            for j in 0..d {
                unit[j] = 1.0;
                hessian.push(hessian_vector_product(state, data, &unit)?);
                unit[j] = 0.0;
            }
            let mut cov = vec![0.0; d * d];
            for delta in &centered {
                for a in 0..d {
                    let da = delta[a];
                    if da == 0.0 {
                        continue;
                    }
                    for (c, db) in cov[a * d..(a + 1) * d].iter_mut().zip(delta) {
                        *c += da * db;
                    }
                }
            }
            // Tr(H C) = Σ_ab H_ab C_ba, C symmetric
            let mut total = 0.0;
            for (b, column) in hessian.iter().enumerate() {
                for (a, h_ab) in column.iter().enumerate() {
                    total += h_ab * cov[a * d + b];
                }
            }
            Ok(TraceHc {
                value: total / denom,
                probes: d,
            })
        }
        TraceMethod::Auto => unreachable!(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegEstimate {
    pub epoch: Option<usize>,
    pub p: f64,
    pub eta: f64,
    pub n: usize,
    pub trace_hc: f64,
    pub lambda: f64,
    pub r: f64,
    pub probes: usize,
    pub seed: Option<u64>,
}

impl RegEstimate {
    /// Assembles `R = η²/(2N)·λ(p)·Tr(H C)` from a precomputed trace.
    pub fn from_trace(p: f64, eta: f64, n: usize, trace: TraceHc) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(domain("p", format!("{p} not in (0, 1)")));
        }
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(domain("eta", format!("{eta} must be positive")));
        }
        let lambda = lambda(p)?;
        Ok(Self {
            epoch: None,
            p,
            eta,
            n,
            trace_hc: trace.value,
            lambda,
            r: eta * eta / (2.0 * n as f64) * lambda * trace.value,
            probes: trace.probes,
            seed: None,
        })
    }
}

pub fn estimate_r(state: &ModelState, data: &Batch, p: f64, eta: f64) -> Result<RegEstimate> {
    estimate_r_with(state, data, p, eta, TraceMethod::PerSample)
}

pub fn estimate_r_with(
    state: &ModelState,
    data: &Batch,
    p: f64,
    eta: f64,
    method: TraceMethod,
) -> Result<RegEstimate> {
    if !(p > 0.0 && p < 1.0) {
        return Err(domain("p", format!("{p} not in (0, 1)")));
    }
    let trace = trace_hc_with(state, data, method)?;
    RegEstimate::from_trace(p, eta, data.len(), trace)
}

/// Monte-Carlo check of the one-step expansion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpansionReport {
    pub p: f64,
    /// Subset size `⌊pN⌋`.
    pub m: usize,
    pub n: usize,
    pub eta: f64,
    pub trials: usize,
    pub seed: u64,
    pub loss_before: f64,
    pub grad_norm_sq: f64,
    /// `∇Lᵀ H ∇L`.
    pub curvature: f64,
    pub trace_hc: f64,
    /// `λ` at the realized fraction `m/N`.
    pub lambda: f64,
    pub r: f64,
    pub prediction: f64,
    pub mc_mean: f64,
    pub mc_std_error: f64,
    /// `(mc_mean − prediction) / mc_std_error`; 0 when both the error and the
    /// gap vanish.
    pub gap_se: f64,
}

/// Draws `trials` uniform subsets of size `⌊pN⌋` without replacement, takes
/// one SGD step on each subset's mean gradient and averages the resulting
/// full-data loss. Trial `i` uses its own stream derived from `(seed, i)`.
pub fn verify_one_step_expansion(
    state: &ModelState,
    data: &Batch,
    p: f64,
    eta: f64,
    trials: usize,
    seed: u64,
) -> Result<ExpansionReport> {
    let n = data.len();
    if n < 2 {
        return Err(Error::DegenerateCovariance(n));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(domain("p", format!("{p} not in (0, 1]")));
    }
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(domain("eta", format!("{eta} must be positive")));
    }
    if trials == 0 {
        return Err(domain("trials", "must be at least 1"));
    }
    let m = (p * n as f64 + 1e-9).floor() as usize;
    if m < 1 || m > n {
        return Err(domain("p", format!("subset size {m} outside 1..={n}")));
    }

    let loss_before = mean_loss(state, data)?;
    let grad = mean_gradient(state, data)?;
    let grad_norm_sq = dot(&grad, &grad);
    let curvature = if grad_norm_sq > 0.0 {
        dot(&grad, &hessian_vector_product(state, data, &grad)?)
    } else {
        0.0
    };
    let realized = m as f64 / n as f64;
    let lambda = lambda(realized)?;
    let trace_hc = if m < n {
        trace_hc_with(state, data, TraceMethod::Auto)?.value
    } else {
        0.0
    };
    let r = eta * eta / (2.0 * n as f64) * lambda * trace_hc;
    let prediction = loss_before - eta * grad_norm_sq + 0.5 * eta * eta * curvature + r;

    let mut after = Vec::with_capacity(trials);
    let mut stepped = state.clone();
    for trial in 0..trials {
        let mut rng = Rng::indexed(seed, labels::MONTE_CARLO, trial as u64);
        let rows = rng.sample_without_replacement(n, m);
        let g = mean_gradient(state, &data.select(&rows))?;
        for ((s, t), gi) in stepped.theta.iter_mut().zip(&state.theta).zip(&g) {
            *s = t - eta * gi;
        }
        after.push(mean_loss(&stepped, data)?);
    }
    let mc_mean = after.iter().sum::<f64>() / trials as f64;
    let mc_std_error = if trials > 1 {
        let var = after.iter().map(|x| (x - mc_mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
        (var / trials as f64).sqrt()
    } else {
        0.0
    };
    let gap = mc_mean - prediction;
    let gap_se = if mc_std_error > 0.0 {
        gap / mc_std_error
    } else if gap.abs() <= 1e-12 * prediction.abs().max(1.0) {
        0.0
    } else {
        gap.signum() * f64::INFINITY
    };

    Ok(ExpansionReport {
        p,
        m,
        n,
        eta,
        trials,
        seed,
        loss_before,
        grad_norm_sq,
        curvature,
        trace_hc,
        lambda,
        r,
        prediction,
        mc_mean,
        mc_std_error,
        gap_se,
    })
}

/// `R(p_t, θ_t)` at each requested epoch from the trainer's snapshots.
pub fn trace_r_over_training(
    snapshots: &[Snapshot],
    data: &Batch,
    probe_epochs: &[usize],
    method: TraceMethod,
) -> Result<Vec<RegEstimate>> {
    probe_epochs
        .iter()
        .map(|&epoch| {
            let snap = snapshots
                .iter()
                .find(|s| s.epoch == epoch)
                .ok_or_else(|| Error::Unavailable(format!("no snapshot for epoch {epoch}")))?;
            let mut est = estimate_r_with(&snap.state, data, snap.p_t, snap.learning_rate, method)?;
            est.epoch = Some(epoch);
            Ok(est)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_linear_regression;
    use crate::models::{Arch, Targets};

    fn quadratic_setup(n: usize, d: usize, seed: u64) -> (ModelState, Batch) {
        let ds = gen_linear_regression(n, d, 0.5, seed).unwrap();
        let mut rng = Rng::new(seed);
        let theta = (0..d).map(|_| rng.normal()).collect();
        (
            ModelState::new(Arch::Quadratic { d_in: d }, theta).unwrap(),
            ds.full_batch(),
        )
    }

    /// Dense Tr(H C) for least squares: H = XᵀX/N, C from centered residual
    /// gradients, both built explicitly.
    fn dense_quadratic_trace(state: &ModelState, data: &Batch) -> f64 {
        let (n, d) = (data.len(), state.dim());
        let Targets::Real(ys) = &data.targets else { unreachable!() };
        let mut h = vec![vec![0.0; d]; d];
        let mut grads = vec![vec![0.0; d]; n];
        for i in 0..n {
            let x = data.row(i);
            let r = dot(x, &state.theta) - ys[i];
            for a in 0..d {
                grads[i][a] = r * x[a];
                for b in 0..d {
                    h[a][b] += x[a] * x[b] / n as f64;
                }
            }
        }
        let mean: Vec<f64> = (0..d).map(|a| grads.iter().map(|g| g[a]).sum::<f64>() / n as f64).collect();
        let mut c = vec![vec![0.0; d]; d];
        for g in &grads {
            for a in 0..d {
                for b in 0..d {
                    c[a][b] += (g[a] - mean[a]) * (g[b] - mean[b]) / (n - 1) as f64;
                }
            }
        }
        (0..d).map(|a| (0..d).map(|b| h[a][b] * c[b][a]).sum::<f64>()).sum()
    }

    #[test]
    fn per_sample_trace_matches_dense_oracle() {
        let (state, data) = quadratic_setup(150, 12, 1);
        let fast = gradient_covariance_trace_hc(&state, &data).unwrap();
        let dense = dense_quadratic_trace(&state, &data);
        assert!((fast - dense).abs() <= 1e-6 * dense.abs(), "{fast} vs {dense}");
        let other = trace_hc_with(&state, &data, TraceMethod::DenseHessian).unwrap();
        assert!((other.value - dense).abs() <= 1e-6 * dense.abs());
        assert_eq!(other.probes, 12);
    }

    #[test]
    fn identical_gradients_give_zero_trace() {
        let arch = Arch::Quadratic { d_in: 2 };
        let state = ModelState::new(arch, vec![0.0, 0.0]).unwrap();
        let data = Batch::new(vec![1.0, 2.0, 1.0, 2.0, 1.0, 2.0], 2, Targets::Real(vec![1.0; 3])).unwrap();
        assert_eq!(gradient_covariance_trace_hc(&state, &data).unwrap(), 0.0);
        let single = data.select(&[0]);
        assert!(matches!(
            gradient_covariance_trace_hc(&state, &single),
            Err(Error::DegenerateCovariance(1))
        ));
    }

    #[test]
    fn lambda_values_and_monotonicity() {
        assert_eq!(lambda(0.5).unwrap(), 1.0);
        assert!((lambda(0.05).unwrap() - 19.0).abs() < 1e-12);
        assert_eq!(lambda(1.0).unwrap(), 0.0);
        assert!(lambda(0.0).is_err());
        let grid: Vec<f64> = (1..100).map(|i| i as f64 / 100.0).collect();
        for w in grid.windows(2) {
            assert!(lambda(w[0]).unwrap() > lambda(w[1]).unwrap());
        }
    }

    #[test]
    fn estimate_scaling_and_domain() {
        let (state, data) = quadratic_setup(40, 5, 2);
        let half = estimate_r(&state, &data, 0.5, 0.1).unwrap();
        assert_eq!(half.lambda, 1.0);
        let low = estimate_r(&state, &data, 0.05, 0.1).unwrap();
        assert!((low.r / half.r - 19.0).abs() < 1e-9);
        let double_eta = estimate_r(&state, &data, 0.5, 0.2).unwrap();
        assert!((double_eta.r / half.r - 4.0).abs() < 1e-12);
        let nearly_full = estimate_r(&state, &data, 1.0 - 1e-9, 0.1).unwrap();
        assert!(nearly_full.r.abs() < 1e-9 * half.r.abs());
        assert!(half.trace_hc > 0.0 && half.r > 0.0);
        assert!(estimate_r(&state, &data, 1.0, 0.1).is_err());
        assert!(estimate_r(&state, &data, 0.0, 0.1).is_err());
    }

    #[test]
    fn full_batch_step_is_deterministic() {
        let (state, data) = quadratic_setup(50, 4, 3);
        let rep = verify_one_step_expansion(&state, &data, 1.0, 0.05, 20, 1).unwrap();
        assert_eq!(rep.m, 50);
        assert!(rep.mc_std_error <= 1e-12, "{}", rep.mc_std_error);
        assert_eq!(rep.r, 0.0);
        assert!((rep.mc_mean - rep.prediction).abs() <= 1e-10 * rep.prediction.abs());
    }

    #[test]
    fn verify_domain_errors() {
        let (state, data) = quadratic_setup(10, 3, 4);
        assert!(verify_one_step_expansion(&state, &data, 0.01, 0.1, 10, 1).is_err());
        assert!(verify_one_step_expansion(&state, &data, 0.5, 0.1, 0, 1).is_err());
        assert!(verify_one_step_expansion(&state, &data, 1.5, 0.1, 10, 1).is_err());
    }

    #[test]
    fn missing_snapshot_is_reported() {
        let (state, data) = quadratic_setup(10, 3, 5);
        let snaps = vec![Snapshot {
            epoch: 0,
            p_t: 0.05,
            learning_rate: 0.1,
            state,
        }];
        let series = trace_r_over_training(&snaps, &data, &[0], TraceMethod::Auto).unwrap();
        assert_eq!(series[0].epoch, Some(0));
        assert!(matches!(
            trace_r_over_training(&snaps, &data, &[1], TraceMethod::Auto),
            Err(Error::Unavailable(_))
        ));
    }
}
