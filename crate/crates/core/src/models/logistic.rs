//! Multinomial logistic regression. Layout: `W` (classes × d_in, row-major)
//! followed by the bias vector.

use super::{class_of, cross_entropy, Arch, Target};

fn dims(arch: &Arch) -> (usize, usize) {
    let &Arch::Logistic { d_in, classes } = arch else {
        unreachable!()
    };
    (d_in, classes)
}

pub(super) fn logits(arch: &Arch, theta: &[f64], x: &[f64]) -> Vec<f64> {
    let (d_in, classes) = dims(arch);
    let (weights, bias) = theta.split_at(classes * d_in);
    (0..classes)
        .map(|j| {
            bias[j]
                + weights[j * d_in..(j + 1) * d_in]
                    .iter()
                    .zip(x)
                    .map(|(w, xi)| w * xi)
                    .sum::<f64>()
        })
        .collect()
}

pub(super) fn sample(
    arch: &Arch,
    theta: &[f64],
    x: &[f64],
    target: Target,
    grad: Option<&mut [f64]>,
) -> f64 {
    let (d_in, classes) = dims(arch);
    let label = class_of(target);
    let logits = logits(arch, theta, x);
    let Some(g) = grad else {
        return cross_entropy(&logits, label, None);
    };
    let mut dlogits = vec![0.0; classes];
    let loss = cross_entropy(&logits, label, Some(&mut dlogits));
    let (gw, gb) = g.split_at_mut(classes * d_in);
    for j in 0..classes {
        for (gjk, xk) in gw[j * d_in..(j + 1) * d_in].iter_mut().zip(x) {
            *gjk = dlogits[j] * xk;
        }
        gb[j] = dlogits[j];
    }
    loss
}
