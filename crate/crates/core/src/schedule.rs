//! Oscillatory selection-ratio schedule.
//!
//! A target ratio `p` and a margin `ε` fix a period of `k` low-ratio epochs
//! followed by one high-ratio recovery epoch:
//!
//! * `p_high = 1 − ε`
//! * `p < 0.5`: `p_low = ε`, `k = ⌈(p_high − p)/(p − p_low)⌉`
//! * `p ≥ 0.5`: `k = 1`, `p_low = 2p − p_high`
//!
//! Low epochs come first within every period, so every prefix of the
//! trajectory averages at most `p`.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Absolute tolerance for ratio comparisons.
pub const RATIO_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub target_ratio: f64,
    pub epsilon: f64,
    pub p_low: f64,
    pub p_high: f64,
    /// Number of low-ratio epochs per period.
    pub k: usize,
    pub period: usize,
}

impl ScheduleParams {
    /// Parameters with `p_low = p_high = p`: the trajectory is constant.
    pub fn disabled(p: f64) -> Self {
        Self {
            target_ratio: p,
            epsilon: 1.0 - p,
            p_low: p,
            p_high: p,
            k: 1,
            period: 2,
        }
    }

    pub fn period_average(&self) -> f64 {
        period_average(self.p_low, self.p_high, self.k)
    }
}

fn period_average(p_low: f64, p_high: f64, k: usize) -> f64 {
    (k as f64 * p_low + p_high) / (k as f64 + 1.0)
}

pub fn derive_params(p: f64, epsilon: f64) -> Result<ScheduleParams> {
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(domain("epsilon", format!("{epsilon} not in (0, 0.5)")));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(domain("target_ratio", format!("{p} not in (0, 1)")));
    }
    if p <= epsilon {
        return Err(Error::InfeasibleSchedule {
            target: p,
            margin: epsilon,
        });
    }
    let p_high = 1.0 - epsilon;
    if p >= p_high {
        return Err(domain(
            "target_ratio",
            format!("{p} must be below p_high = 1 - epsilon = {p_high}"),
        ));
    }

    let (p_low, k) = if p < 0.5 {
        let p_low = epsilon;
        let raw = (p_high - p) / (p - p_low);
        let mut k = (raw.ceil() as usize).max(1);
        // `raw` may land a few ulps off an exact integer; settle on the
        // smallest k whose period average meets the bound.
        while k > 1 && period_average(p_low, p_high, k - 1) <= p + RATIO_TOL {
            k -= 1;
        }
        while period_average(p_low, p_high, k) > p + RATIO_TOL {
            k += 1;
        }
        (p_low, k)
    } else {
        (2.0 * p - p_high, 1)
    };

    Ok(ScheduleParams {
        target_ratio: p,
        epsilon,
        p_low,
        p_high,
        k,
        period: k + 1,
    })
}

/// How the per-epoch ratio is produced.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RatioPlan {
    Oscillatory(ScheduleParams),
    /// Fixed ratio every epoch; `1.0` is full-data training.
    Constant(f64),
}

impl RatioPlan {
    pub fn target_ratio(&self) -> f64 {
        match self {
            RatioPlan::Oscillatory(params) => params.target_ratio,
            RatioPlan::Constant(p) => *p,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RatioTrajectory {
    pub plan: RatioPlan,
    pub total_epochs: usize,
}

impl RatioTrajectory {
    pub fn oscillatory(params: ScheduleParams, total_epochs: usize) -> Result<Self> {
        Self::new(RatioPlan::Oscillatory(params), total_epochs)
    }

    pub fn constant(p: f64, total_epochs: usize) -> Result<Self> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(domain("target_ratio", format!("{p} not in (0, 1]")));
        }
        Self::new(RatioPlan::Constant(p), total_epochs)
    }

    fn new(plan: RatioPlan, total_epochs: usize) -> Result<Self> {
        if total_epochs == 0 {
            return Err(domain("epochs", "must be at least 1"));
        }
        Ok(Self { plan, total_epochs })
    }

    pub fn ratio_at(&self, epoch: usize) -> Result<f64> {
        if epoch >= self.total_epochs {
            return Err(Error::Index {
                index: epoch,
                len: self.total_epochs,
            });
        }
        Ok(self.ratio_unchecked(epoch))
    }

    fn ratio_unchecked(&self, epoch: usize) -> f64 {
        match self.plan {
            RatioPlan::Oscillatory(params) => {
                if epoch % params.period < params.k {
                    params.p_low
                } else {
                    params.p_high
                }
            }
            RatioPlan::Constant(p) => p,
        }
    }

    /// Mean ratio over epochs `0..upto_epoch`.
    pub fn prefix_average(&self, upto_epoch: usize) -> Result<f64> {
        if upto_epoch == 0 || upto_epoch > self.total_epochs {
            return Err(domain(
                "upto_epoch",
                format!("{upto_epoch} not in 1..={}", self.total_epochs),
            ));
        }
        let sum: f64 = (0..upto_epoch).map(|t| self.ratio_unchecked(t)).sum();
        Ok(sum / upto_epoch as f64)
    }

    pub fn ratios(&self) -> Vec<f64> {
        (0..self.total_epochs)
            .map(|t| self.ratio_unchecked(t))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const TOL: f64 = 1e-12;

    /// Smallest k ≥ 1 meeting the period-average bound, found by scanning.
    fn scan_min_k(p: f64, p_low: f64, p_high: f64) -> usize {
        (1..)
            .find(|&k| (k as f64 * p_low + p_high) / (k as f64 + 1.0) <= p + TOL)
            .unwrap()
    }

    fn params(p: f64) -> ScheduleParams {
        derive_params(p, 0.05).unwrap()
    }

    #[test]
    fn derive_low_target() {
        let s = params(0.3);
        assert!((s.p_high - 0.95).abs() < TOL);
        assert!((s.p_low - 0.05).abs() < TOL);
        assert_eq!((s.k, s.period), (3, 4));
        assert!((s.period_average() - 0.275).abs() < TOL);
    }

    #[test]
    fn derive_half_target() {
        let s = params(0.5);
        assert!((s.p_low - 0.05).abs() < TOL);
        assert_eq!(s.k, 1);
        assert!((s.period_average() - 0.5).abs() < TOL);
    }

    #[test]
    fn derive_high_target() {
        let s = params(0.7);
        assert!((s.p_low - 0.45).abs() < TOL);
        assert!((s.p_high - 0.95).abs() < TOL);
        assert_eq!(s.k, 1);
        assert!((s.period_average() - 0.7).abs() < TOL);
    }

    #[test]
    fn derive_rejects_bad_domain() {
        assert!(matches!(
            derive_params(0.3, 0.0),
            Err(Error::Domain { param: "epsilon", .. })
        ));
        assert!(matches!(
            derive_params(0.3, 0.5),
            Err(Error::Domain { param: "epsilon", .. })
        ));
        assert!(matches!(
            derive_params(1.2, 0.05),
            Err(Error::Domain { param: "target_ratio", .. })
        ));
        assert!(matches!(
            derive_params(0.96, 0.05),
            Err(Error::Domain { param: "target_ratio", .. })
        ));
        assert!(matches!(
            derive_params(0.05, 0.05),
            Err(Error::InfeasibleSchedule { .. })
        ));
        assert!(matches!(
            derive_params(0.02, 0.05),
            Err(Error::InfeasibleSchedule { .. })
        ));
    }

    #[test]
    fn exact_integer_ratio_is_not_rounded_up() {
        // (0.95 - 0.35) / (0.35 - 0.05) = 2 in exact arithmetic.
        assert_eq!(params(0.35).k, 2);
    }

    #[test]
    fn ratio_at_low_first() {
        let half = RatioTrajectory::oscillatory(params(0.5), 10).unwrap();
        assert!((half.ratio_at(0).unwrap() - 0.05).abs() < TOL);
        assert!((half.ratio_at(1).unwrap() - 0.95).abs() < TOL);
        let low = RatioTrajectory::oscillatory(params(0.3), 10).unwrap();
        assert!((low.ratio_at(2).unwrap() - 0.05).abs() < TOL);
        assert!((low.ratio_at(3).unwrap() - 0.95).abs() < TOL);
        assert!(matches!(
            low.ratio_at(10),
            Err(Error::Index { index: 10, len: 10 })
        ));
    }

    #[test]
    fn prefix_average_examples() {
        let low = RatioTrajectory::oscillatory(params(0.3), 8).unwrap();
        assert!((low.prefix_average(4).unwrap() - 0.275).abs() < TOL);
        let half = RatioTrajectory::oscillatory(params(0.5), 8).unwrap();
        assert!((half.prefix_average(1).unwrap() - 0.05).abs() < TOL);
        let high = RatioTrajectory::oscillatory(params(0.7), 8).unwrap();
        assert!((high.prefix_average(2).unwrap() - 0.70).abs() < TOL);
        assert!(high.prefix_average(0).is_err());
        assert!(high.prefix_average(9).is_err());
    }

    #[test]
    fn k_longer_than_run_stays_low() {
        let s = derive_params(0.051, 0.05).unwrap();
        assert!(s.k > 100);
        let traj = RatioTrajectory::oscillatory(s, 50).unwrap();
        assert!(traj.ratios().iter().all(|&r| (r - s.p_low).abs() < TOL));
    }

    #[test]
    fn constant_plan() {
        let full = RatioTrajectory::constant(1.0, 3).unwrap();
        assert_eq!(full.ratios(), vec![1.0; 3]);
        assert!(RatioTrajectory::constant(0.0, 3).is_err());
        assert!(RatioTrajectory::constant(0.5, 0).is_err());
    }

    #[test]
    fn grid_matches_formulas_and_scan() {
        for eps in [0.01, 0.05, 0.1, 0.2] {
            for i in 2..=18 {
                let p = i as f64 * 0.05;
                let Ok(s) = derive_params(p, eps) else {
                    assert!(p <= eps || p >= 1.0 - eps);
                    continue;
                };
                assert_eq!(s.p_high, 1.0 - eps);
                if p < 0.5 {
                    assert_eq!(s.p_low, eps);
                } else {
                    assert_eq!(s.k, 1);
                    assert_eq!(s.p_low, 2.0 * p - s.p_high);
                }
                assert_eq!(s.k, scan_min_k(p, s.p_low, s.p_high), "p={p} eps={eps}");
                assert!(s.period_average() <= p + TOL);
                assert!(0.0 < s.p_low && s.p_low < p && p < s.p_high && s.p_high < 1.0);
            }
        }
    }

    proptest! {
        #[test]
        fn prefix_never_exceeds_target(
            eps in 0.01f64..0.45,
            frac in 0.001f64..0.999,
            epochs in 1usize..300,
        ) {
            let p = eps + frac * (1.0 - 2.0 * eps);
            let s = derive_params(p, eps).unwrap();
            let traj = RatioTrajectory::oscillatory(s, epochs).unwrap();
            let mut sum = 0.0;
            for (t, r) in traj.ratios().into_iter().enumerate() {
                sum += r;
                prop_assert!(sum / (t + 1) as f64 <= p + TOL);
            }
        }

        #[test]
        fn ratio_is_periodic(eps in 0.01f64..0.45, frac in 0.001f64..0.999, t in 0usize..500) {
            let p = eps + frac * (1.0 - 2.0 * eps);
            let s = derive_params(p, eps).unwrap();
            let traj = RatioTrajectory::oscillatory(s, t + s.period + 1).unwrap();
            prop_assert_eq!(traj.ratio_at(t).unwrap(), traj.ratio_at(t + s.period).unwrap());
        }
    }
}
