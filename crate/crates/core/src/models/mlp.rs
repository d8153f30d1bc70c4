//! One hidden ReLU layer. Layout: `W1` (hidden × d_in), `b1` (hidden),
//! `W2` (classes × hidden), `b2` (classes), all row-major.

use super::{class_of, cross_entropy, Arch, Target};
use crate::rng::Rng;

fn dims(arch: &Arch) -> (usize, usize, usize) {
    let &Arch::Mlp {
        d_in,
        hidden,
        classes,
    } = arch
    else {
        unreachable!()
    };
    (d_in, hidden, classes)
}

pub(super) fn init(arch: &Arch, rng: &mut Rng) -> Vec<f64> {
    let (d_in, hidden, classes) = dims(arch);
    let first = 1.0 / (d_in as f64).sqrt();
    let second = 1.0 / (hidden as f64).sqrt();
    let mut theta = Vec::with_capacity(arch.param_count());
    theta.extend((0..(d_in + 1) * hidden).map(|_| rng.uniform(-first, first)));
    theta.extend((0..(hidden + 1) * classes).map(|_| rng.uniform(-second, second)));
    theta
}

struct Forward {
    pre: Vec<f64>,
    act: Vec<f64>,
    logits: Vec<f64>,
}

fn forward(arch: &Arch, theta: &[f64], x: &[f64]) -> Forward {
    let (d_in, hidden, classes) = dims(arch);
    let (w1, rest) = theta.split_at(hidden * d_in);
    let (b1, rest) = rest.split_at(hidden);
    let (w2, b2) = rest.split_at(classes * hidden);

    let pre: Vec<f64> = (0..hidden)
        .map(|u| {
            b1[u]
                + w1[u * d_in..(u + 1) * d_in]
                    .iter()
                    .zip(x)
                    .map(|(w, xi)| w * xi)
                    .sum::<f64>()
        })
        .collect();
    let act: Vec<f64> = pre.iter().map(|&z| z.max(0.0)).collect();
    let logits: Vec<f64> = (0..classes)
        .map(|j| {
            b2[j]
                + w2[j * hidden..(j + 1) * hidden]
                    .iter()
                    .zip(&act)
                    .map(|(w, a)| w * a)
                    .sum::<f64>()
        })
        .collect();
    Forward { pre, act, logits }
}

pub(super) fn logits(arch: &Arch, theta: &[f64], x: &[f64]) -> Vec<f64> {
    forward(arch, theta, x).logits
}

pub(super) fn sample(
    arch: &Arch,
    theta: &[f64],
    x: &[f64],
    target: Target,
    grad: Option<&mut [f64]>,
) -> f64 {
    let (d_in, hidden, classes) = dims(arch);
    let label = class_of(target);
    let Forward { pre, act, logits } = forward(arch, theta, x);
    let w2 = &theta[hidden * d_in + hidden..hidden * d_in + hidden + classes * hidden];

    let Some(g) = grad else {
        return cross_entropy(&logits, label, None);
    };
    let mut dlogits = vec![0.0; classes];
    let loss = cross_entropy(&logits, label, Some(&mut dlogits));

    let (gw1, rest) = g.split_at_mut(hidden * d_in);
    let (gb1, rest) = rest.split_at_mut(hidden);
    let (gw2, gb2) = rest.split_at_mut(classes * hidden);

    let mut dact = vec![0.0; hidden];
    for j in 0..classes {
        let row = j * hidden..(j + 1) * hidden;
        for ((gw, a), (w, da)) in gw2[row.clone()]
            .iter_mut()
            .zip(&act)
            .zip(w2[row].iter().zip(dact.iter_mut()))
        {
            *gw = dlogits[j] * a;
            *da += w * dlogits[j];
        }
        gb2[j] = dlogits[j];
    }
    for u in 0..hidden {
        let dpre = if pre[u] > 0.0 { dact[u] } else { 0.0 };
        for (gw, xk) in gw1[u * d_in..(u + 1) * d_in].iter_mut().zip(x) {
            *gw = dpre * xk;
        }
        gb1[u] = dpre;
    }
    loss
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{loss_per_sample, Batch, ModelState, Targets};

    /// Forward pass written with explicit index arithmetic.
    fn reference_loss(theta: &[f64], d_in: usize, h: usize, c: usize, x: &[f64], y: usize) -> f64 {
        let mut hidden = vec![0.0; h];
        for u in 0..h {
            let mut z = theta[h * d_in + u];
            for k in 0..d_in {
                z += theta[u * d_in + k] * x[k];
            }
            hidden[u] = if z > 0.0 { z } else { 0.0 };
        }
        let off = h * d_in + h;
        let mut logits = vec![0.0; c];
        for j in 0..c {
            let mut z = theta[off + c * h + j];
            for u in 0..h {
                z += theta[off + j * h + u] * hidden[u];
            }
            logits[j] = z;
        }
        let m = logits.iter().cloned().fold(f64::MIN, f64::max);
        let s: f64 = logits.iter().map(|z| (z - m).exp()).sum();
        m + s.ln() - logits[y]
    }

    #[test]
    fn forward_matches_reference() {
        let mut rng = Rng::new(8);
        let (d_in, h, c) = (3, 7, 4);
        let arch = Arch::Mlp {
            d_in,
            hidden: h,
            classes: c,
        };
        let state = ModelState::init(arch, &mut rng).unwrap();
        let m = 12;
        let inputs: Vec<f64> = (0..m * d_in).map(|_| rng.normal()).collect();
        let labels: Vec<usize> = (0..m).map(|_| rng.below(c)).collect();
        let batch = Batch::new(inputs.clone(), d_in, Targets::Classes(labels.clone())).unwrap();
        let losses = loss_per_sample(&state, &batch).unwrap();
        for i in 0..m {
            let r = reference_loss(&state.theta, d_in, h, c, &inputs[i * d_in..(i + 1) * d_in], labels[i]);
            assert!((losses[i] - r).abs() <= 1e-12);
        }
    }

    #[test]
    fn init_scale() {
        let arch = Arch::Mlp {
            d_in: 4,
            hidden: 16,
            classes: 2,
        };
        let state = ModelState::init(arch, &mut Rng::new(1)).unwrap();
        let (first, second) = state.theta.split_at(5 * 16);
        assert!(first.iter().all(|w| w.abs() <= 0.5));
        assert!(second.iter().all(|w| w.abs() <= 0.25));
        assert_eq!(state, ModelState::init(arch, &mut Rng::new(1)).unwrap());
    }
}
