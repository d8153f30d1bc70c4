use std::f64::consts::{PI, TAU};

use super::{Dataset, Provenance, Split};
use crate::error::{domain, Result};
use crate::models::Targets;
use crate::rng::{labels, Rng};

fn provenance(generator: &str, seed: u64) -> Provenance {
    Provenance {
        generator: generator.into(),
        seed: Some(seed),
        label_noise_rate: 0.0,
    }
}

fn check_scale(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(domain(name, format!("{value} must be finite and non-negative")))
    }
}

/// Isotropic Gaussian blobs around class means spaced evenly on the unit
/// circle in the first two coordinates. Rows are emitted in shuffled order.
pub fn gen_blobs(
    classes: usize,
    per_class: usize,
    d_in: usize,
    spread: f64,
    seed: u64,
) -> Result<Dataset> {
    if classes < 2 {
        return Err(domain("classes", format!("{classes} < 2")));
    }
    if per_class == 0 {
        return Err(domain("per_class", "must be positive"));
    }
    if d_in < 2 {
        return Err(domain("d_in", format!("{d_in} < 2")));
    }
    check_scale("spread", spread)?;

    let mut rng = Rng::derived(seed, labels::DATA);
    let n = classes * per_class;
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);

    let mut inputs = Vec::with_capacity(n * d_in);
    let mut ys = Vec::with_capacity(n);
    for slot in order {
        let class = slot / per_class;
        let angle = TAU * class as f64 / classes as f64;
        for k in 0..d_in {
            let mean = match k {
                0 => angle.cos(),
                1 => angle.sin(),
                _ => 0.0,
            };
            inputs.push(mean + spread * rng.normal());
        }
        ys.push(class);
    }
    Dataset::from_parts(
        inputs,
        d_in,
        Targets::Classes(ys),
        classes,
        provenance("blobs", seed),
    )
}

/// Two interleaving half circles: class 0 on the upper unit arc centred at
/// the origin (`⌈n/2⌉` points), class 1 on the lower unit arc centred at
/// `(1, 0.5)` (`⌊n/2⌋` points). Arc positions are evenly spaced; rows are
/// shuffled, then each coordinate gets `N(0, noise²)` added.
pub fn gen_two_moons(n: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(domain("n", format!("{n} < 2")));
    }
    check_scale("noise", noise)?;

    let outer = n.div_ceil(2);
    let inner = n / 2;
    let angle = |i: usize, count: usize| {
        if count > 1 {
            PI * i as f64 / (count - 1) as f64
        } else {
            0.0
        }
    };
    let mut points: Vec<([f64; 2], usize)> = Vec::with_capacity(n);
    for i in 0..outer {
        let t = angle(i, outer);
        points.push(([t.cos(), t.sin()], 0));
    }
    for i in 0..inner {
        let t = angle(i, inner);
        points.push(([1.0 - t.cos(), 0.5 - t.sin()], 1));
    }

    let mut rng = Rng::derived(seed, labels::DATA);
    rng.shuffle(&mut points);
    let mut inputs = Vec::with_capacity(2 * n);
    let mut ys = Vec::with_capacity(n);
    for ([x, y], label) in points {
        inputs.push(x + noise * rng.normal());
        inputs.push(y + noise * rng.normal());
        ys.push(label);
    }
    Dataset::from_parts(inputs, 2, Targets::Classes(ys), 2, provenance("two_moons", seed))
}

/// Linear-Gaussian regression: `x ~ N(0, I)`, `w ~ N(0, I/d)`,
/// `y = xᵀw + noise·N(0, 1)`.
pub fn gen_linear_regression(n: usize, d_in: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(domain("n", "must be positive"));
    }
    if d_in == 0 {
        return Err(domain("d_in", "must be positive"));
    }
    check_scale("noise", noise)?;
    let mut rng = Rng::derived(seed, labels::DATA);
    let scale = 1.0 / (d_in as f64).sqrt();
    let w: Vec<f64> = (0..d_in).map(|_| scale * rng.normal()).collect();
    let mut inputs = Vec::with_capacity(n * d_in);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..d_in).map(|_| rng.normal()).collect();
        let clean: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum();
        ys.push(clean + noise * rng.normal());
        inputs.extend(x);
    }
    Dataset::from_parts(inputs, d_in, Targets::Real(ys), 0, provenance("linear", seed))
}

/// Resamples the labels of `⌊rate·N⌋` uniformly chosen training rows to a
/// different class, uniformly among the other classes.
pub fn inject_label_noise(ds: &Dataset, rate: f64, seed: u64) -> Result<Dataset> {
    if !(0.0..1.0).contains(&rate) {
        return Err(domain("rate", format!("{rate} not in [0, 1)")));
    }
    if ds.split != Split::Train {
        return Err(domain("split", "label noise applies to training data only"));
    }
    let Targets::Classes(labels_in) = &ds.targets else {
        return Err(domain("targets", "label noise needs class labels"));
    };
    let mut out = ds.clone();
    out.provenance.label_noise_rate = rate;
    let flips = (rate * ds.len() as f64 + 1e-9).floor() as usize;
    if flips == 0 {
        return Ok(out);
    }
    let mut rng = Rng::derived(seed, labels::LABEL_NOISE);
    let mut new_labels = labels_in.clone();
    for row in rng.sample_without_replacement(ds.len(), flips) {
        let shift = 1 + rng.below(ds.classes - 1);
        new_labels[row] = (new_labels[row] + shift) % ds.classes;
    }
    out.targets = Targets::Classes(new_labels);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blobs_counts_and_determinism() {
        let ds = gen_blobs(2, 100, 3, 0.5, 7).unwrap();
        assert_eq!(ds.len(), 200);
        let ones = ds.labels().unwrap().iter().filter(|&&l| l == 1).count();
        assert_eq!(ones, 100);
        assert_eq!(ds, gen_blobs(2, 100, 3, 0.5, 7).unwrap());
        assert_ne!(ds.inputs, gen_blobs(2, 100, 3, 0.5, 8).unwrap().inputs);
        assert!(gen_blobs(1, 10, 2, 0.1, 0).is_err());
        assert!(gen_blobs(2, 0, 2, 0.1, 0).is_err());
        assert!(gen_blobs(2, 10, 2, -1.0, 0).is_err());
    }

    #[test]
    fn blobs_zero_spread_sit_on_means() {
        let ds = gen_blobs(4, 5, 3, 0.0, 1).unwrap();
        for i in 0..ds.len() {
            let angle = TAU * ds.labels().unwrap()[i] as f64 / 4.0;
            let r = ds.row(i);
            assert!((r[0] - angle.cos()).abs() < 1e-15);
            assert!((r[1] - angle.sin()).abs() < 1e-15);
            assert_eq!(r[2], 0.0);
        }
    }

    #[test]
    fn moons_without_noise_lie_on_arcs() {
        let ds = gen_two_moons(400, 0.0, 3).unwrap();
        for i in 0..ds.len() {
            let [x, y] = [ds.row(i)[0], ds.row(i)[1]];
            if ds.labels().unwrap()[i] == 0 {
                assert!((x.hypot(y) - 1.0).abs() < 1e-12 && y >= -1e-12);
            } else {
                assert!(((x - 1.0).hypot(y - 0.5) - 1.0).abs() < 1e-12 && y <= 0.5 + 1e-12);
            }
        }
    }

    #[test]
    fn moons_class_sizes() {
        for n in [2, 7, 400, 401] {
            let ds = gen_two_moons(n, 0.2, 1).unwrap();
            let zeros = ds.labels().unwrap().iter().filter(|&&l| l == 0).count();
            assert_eq!((zeros, n - zeros), (n.div_ceil(2), n / 2));
        }
        assert!(gen_two_moons(1, 0.1, 1).is_err());
        assert_eq!(gen_two_moons(50, 0.2, 9).unwrap(), gen_two_moons(50, 0.2, 9).unwrap());
    }

    #[test]
    fn label_noise_flips_exact_count() {
        let ds = gen_blobs(4, 250, 2, 0.3, 2).unwrap();
        assert_eq!(inject_label_noise(&ds, 0.0, 1).unwrap().targets, ds.targets);

        let noisy = inject_label_noise(&ds, 0.1, 5).unwrap();
        let before = ds.labels().unwrap();
        let after = noisy.labels().unwrap();
        let flipped: Vec<usize> = (0..ds.len()).filter(|&i| before[i] != after[i]).collect();
        assert_eq!(flipped.len(), 100);
        assert!(after.iter().all(|&l| l < 4));
        assert_eq!(noisy.provenance.label_noise_rate, 0.1);
        assert_eq!(noisy, inject_label_noise(&ds, 0.1, 5).unwrap());
        assert_eq!(noisy.inputs, ds.inputs);

        assert!(inject_label_noise(&ds, 1.0, 1).is_err());
        assert!(inject_label_noise(&ds, -0.1, 1).is_err());
        let mut test_split = ds.clone();
        test_split.split = Split::Test;
        assert!(inject_label_noise(&test_split, 0.1, 1).is_err());
    }

    #[test]
    fn regression_targets_are_real() {
        let ds = gen_linear_regression(30, 4, 0.1, 1).unwrap();
        assert!(matches!(ds.targets, Targets::Real(_)));
        assert_eq!(ds.classes, 0);
        assert_eq!(ds.inputs.len(), 120);
    }
}
