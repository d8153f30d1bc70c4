//! Epoch loop: ratio from the schedule, subset from the policy, mini-batch
//! SGD over the subset, loss memory and ledger updates, evaluation.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, ScheduleKind};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::ledger::{BudgetLedger, LedgerSummary};
use crate::models::{loss_and_gradient, loss_per_sample, predict, ModelState};
use crate::regprobe::{estimate_r_with, TraceMethod};
use crate::rng::{labels, Rng};
use crate::schedule::{derive_params, RatioTrajectory};
use crate::selection::{policy_from_name, select_random, LossMemory, SelectionPolicy};

/// One line of `metrics.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub p_t: f64,
    pub n_selected: usize,
    pub cumulative_ratio: f64,
    /// Mean pre-update loss over the selected samples.
    pub train_loss: f64,
    pub test_loss: Option<f64>,
    pub test_accuracy: Option<f64>,
    pub r_estimate: Option<f64>,
}

/// Parameters at the start of an epoch, with the ratio and step size that
/// epoch trains with.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub epoch: usize,
    pub p_t: f64,
    pub learning_rate: f64,
    pub state: ModelState,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub metrics: Vec<EpochMetrics>,
    pub final_state: ModelState,
    pub ledger: LedgerSummary,
    pub snapshots: Vec<Snapshot>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub loss: f64,
    /// Top-1 accuracy in `[0, 1]`; `None` for regression.
    pub accuracy: Option<f64>,
}

pub fn evaluate(state: &ModelState, test: &Dataset) -> Result<Evaluation> {
    if test.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let batch = test.full_batch();
    let losses = loss_per_sample(state, &batch)?;
    let loss = losses.iter().sum::<f64>() / losses.len() as f64;
    let accuracy = match test.labels() {
        Some(labels) => {
            let predicted = predict(state, &batch)?;
            let correct = predicted.iter().zip(labels).filter(|(p, l)| p == l).count();
            Some(correct as f64 / labels.len() as f64)
        }
        None => None,
    };
    Ok(Evaluation { loss, accuracy })
}

/// Per-epoch ratio plan of a config. A target of 1 is full-data training.
pub fn trajectory_for(config: &RunConfig) -> Result<RatioTrajectory> {
    let p = config.target_ratio;
    if p >= 1.0 || config.schedule == ScheduleKind::Fixed {
        RatioTrajectory::constant(p, config.epochs)
    } else {
        RatioTrajectory::oscillatory(derive_params(p, config.epsilon)?, config.epochs)
    }
}

/// Loads the configured dataset and runs with the configured policy.
pub fn run_training(config: &RunConfig) -> Result<RunOutput> {
    config.validate()?;
    let (train, test) = config.dataset.load(config.seed)?;
    let trajectory = trajectory_for(config)?;
    let policy = policy_from_name(&config.policy)?;
    Trainer::new(config, trajectory, policy).run(&train, &test)
}

pub struct Trainer<'a> {
    config: &'a RunConfig,
    trajectory: RatioTrajectory,
    policy: Box<dyn SelectionPolicy>,
}

impl<'a> Trainer<'a> {
    pub fn new(
        config: &'a RunConfig,
        trajectory: RatioTrajectory,
        policy: Box<dyn SelectionPolicy>,
    ) -> Self {
        Self {
            config,
            trajectory,
            policy,
        }
    }

    fn learning_rate(&self, epoch: usize) -> f64 {
        let lr = self.config.learning_rate;
        if self.config.cosine_decay {
            0.5 * lr * (1.0 + (PI * epoch as f64 / self.config.epochs as f64).cos())
        } else {
            lr
        }
    }

    pub fn run(mut self, train: &Dataset, test: &Dataset) -> Result<RunOutput> {
        let config = self.config;
        config.validate()?;
        if train.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if self.trajectory.total_epochs != config.epochs {
            return Err(Error::Config(format!(
                "trajectory covers {} epochs, config asks for {}",
                self.trajectory.total_epochs, config.epochs
            )));
        }
        let n = train.len();
        let arch = config.model.resolve(train)?;
        let mut state = ModelState::init(arch, &mut Rng::derived(config.seed, labels::INIT))?;
        let mut select_rng = Rng::derived(config.seed, labels::SELECT);
        let mut shuffle_rng = Rng::derived(config.seed, labels::SHUFFLE);
        let mut memory = LossMemory::new(n);
        let mut ledger = BudgetLedger::new(n, self.trajectory.plan.target_ratio())?;
        let mut velocity = vec![0.0; state.dim()];
        let full = train.full_batch();

        let mut metrics = Vec::with_capacity(config.epochs);
        let mut snapshots = Vec::new();
        for epoch in 0..config.epochs {
            let step = |e: Error| Error::Training {
                epoch,
                source: Box::new(e),
            };
            let p_t = self.trajectory.ratio_at(epoch).map_err(step)?;
            let lr = self.learning_rate(epoch);

            if config.rescore_every > 0 && epoch > 0 && epoch % config.rescore_every == 0 {
                let losses = loss_per_sample(&state, &full).map_err(step)?;
                memory.update(&full.indices, &losses, epoch).map_err(step)?;
                ledger.add_scoring_overhead(n);
            }

            let mut r_estimate = None;
            if let Some(probe) = &config.probe {
                if epoch % probe.every == 0 {
                    // Full-data epochs carry no subsampling term.
                    r_estimate = Some(if p_t < 1.0 {
                        estimate_r_with(&state, &full, p_t, lr, TraceMethod::Auto)
                            .map_err(step)?
                            .r
                    } else {
                        0.0
                    });
                    if probe.snapshots {
                        snapshots.push(Snapshot {
                            epoch,
                            p_t,
                            learning_rate: lr,
                            state: state.clone(),
                        });
                    }
                }
            }

            // No losses exist before the first epoch: cold-start uniformly.
            let subset = if epoch == 0 {
                select_random(n, p_t, epoch, &mut select_rng)
            } else {
                self.policy.select(&memory, p_t, epoch, &mut select_rng)
            }
            .map_err(step)?;

            let mut order = subset.indices.clone();
            shuffle_rng.shuffle(&mut order);
            let mut loss_sum = 0.0;
            for chunk in order.chunks(config.batch_size) {
                let batch = train.batch(chunk).map_err(step)?;
                let (losses, grad) = loss_and_gradient(&state, &batch).map_err(step)?;
                memory.update(chunk, &losses, epoch).map_err(step)?;
                self.policy.observe(chunk, &losses, epoch);
                loss_sum += losses.iter().sum::<f64>();

                let direction = if config.momentum > 0.0 {
                    for (v, g) in velocity.iter_mut().zip(&grad) {
                        *v = config.momentum * *v + g;
                    }
                    &velocity
                } else {
                    &grad
                };
                for (t, d) in state.theta.iter_mut().zip(direction) {
                    *t -= lr * d;
                }
                if state.theta.iter().any(|t| !t.is_finite()) {
                    return Err(step(Error::Numeric("parameters diverged".into())));
                }
            }

            ledger.record_epoch(epoch, subset.len()).map_err(step)?;

            let last = epoch + 1 == config.epochs;
            let (test_loss, test_accuracy) =
                if !test.is_empty() && ((epoch + 1) % config.eval_every == 0 || last) {
                    let eval = evaluate(&state, test).map_err(step)?;
                    (Some(eval.loss), eval.accuracy)
                } else {
                    (None, None)
                };

            metrics.push(EpochMetrics {
                epoch,
                p_t,
                n_selected: subset.len(),
                cumulative_ratio: ledger.cumulative_passes() as f64 / ((epoch + 1) * n) as f64,
                train_loss: loss_sum / subset.len() as f64,
                test_loss,
                test_accuracy,
                r_estimate,
            });
        }

        Ok(RunOutput {
            metrics,
            final_state: state,
            ledger: ledger.summary()?,
            snapshots,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{DataSpec, ModelSpec, ProbeSettings};
    use crate::data::{gen_blobs, train_test_split};
    use crate::models::{mean_gradient, sgd_step, Arch};
    use crate::schedule::ScheduleParams;

    fn config(p: f64, policy: &str, epochs: usize) -> RunConfig {
        RunConfig {
            dataset: DataSpec::Blobs {
                classes: 3,
                per_class: 40,
                d_in: 2,
                spread: 0.3,
                n_test: 30,
                label_noise: 0.0,
            },
            model: ModelSpec::Logistic,
            epochs,
            batch_size: 8,
            learning_rate: 0.2,
            momentum: 0.0,
            target_ratio: p,
            epsilon: 0.05,
            schedule: ScheduleKind::Oscillatory,
            policy: policy.into(),
            seed: 17,
            eval_every: 1,
            cosine_decay: false,
            rescore_every: 0,
            probe: None,
        }
    }

    #[test]
    fn full_data_matches_plain_sgd() {
        let cfg = config(1.0, "hard_mining", 5);
        let out = run_training(&cfg).unwrap();
        let (train, _) = cfg.dataset.load(cfg.seed).unwrap();

        let arch = cfg.model.resolve(&train).unwrap();
        let mut state = ModelState::init(arch, &mut Rng::derived(cfg.seed, labels::INIT)).unwrap();
        let mut shuffle = Rng::derived(cfg.seed, labels::SHUFFLE);
        for _ in 0..cfg.epochs {
            let mut order: Vec<usize> = (0..train.len()).collect();
            shuffle.shuffle(&mut order);
            for chunk in order.chunks(cfg.batch_size) {
                let g = mean_gradient(&state, &train.batch(chunk).unwrap()).unwrap();
                state = sgd_step(&state, &g, cfg.learning_rate).unwrap();
            }
        }
        assert_eq!(out.final_state, state);
        assert!(out.metrics.iter().all(|m| m.n_selected == train.len()));
        assert_eq!(out.ledger.realized_ratio, 1.0);
    }

    #[test]
    fn half_budget_alternates_and_balances() {
        // 90 training rows; 0.05·90 = 4.5 floors to 4, 0.95·90 = 85.5 to 85.
        let out = run_training(&config(0.5, "hard_mining", 10)).unwrap();
        let counts: Vec<usize> = out.metrics.iter().map(|m| m.n_selected).collect();
        assert_eq!(counts, vec![4, 85, 4, 85, 4, 85, 4, 85, 4, 85]);
        assert!(out.ledger.realized_ratio <= 0.5);
        for m in &out.metrics {
            assert!(m.cumulative_ratio <= 0.5 + 1.0 / 90.0);
        }
    }

    #[test]
    fn half_budget_is_exact_when_sizes_are_integral() {
        let mut cfg = config(0.5, "random", 10);
        cfg.dataset = DataSpec::Blobs {
            classes: 2,
            per_class: 120,
            d_in: 2,
            spread: 0.3,
            n_test: 40,
            label_noise: 0.0,
        };
        let out = run_training(&cfg).unwrap();
        assert_eq!(out.metrics[0].n_selected, 10);
        assert_eq!(out.metrics[1].n_selected, 190);
        assert_eq!(out.ledger.realized_ratio, 0.5);
    }

    #[test]
    fn same_seed_same_stream() {
        let cfg = config(0.3, "hard_mining", 8);
        let a = run_training(&cfg).unwrap();
        let b = run_training(&cfg).unwrap();
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.final_state, b.final_state);
    }

    #[test]
    fn disabled_oscillation_equals_fixed_ratio() {
        let cfg = config(0.4, "hard_mining", 6);
        let (train, test) = cfg.dataset.load(cfg.seed).unwrap();
        let fixed = RatioTrajectory::constant(0.4, 6).unwrap();
        let flat = RatioTrajectory::oscillatory(ScheduleParams::disabled(0.4), 6).unwrap();
        let policy = || policy_from_name("hard_mining").unwrap();
        let a = Trainer::new(&cfg, fixed, policy()).run(&train, &test).unwrap();
        let b = Trainer::new(&cfg, flat, policy()).run(&train, &test).unwrap();
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.final_state, b.final_state);
    }

    #[test]
    fn evaluate_at_zero_and_after_training() {
        let ds = gen_blobs(4, 25, 2, 0.0, 1).unwrap();
        let (train, test) = train_test_split(&ds, 40, 1).unwrap();
        let zero = ModelState::zeros(Arch::Logistic { d_in: 2, classes: 4 }).unwrap();
        let eval = evaluate(&zero, &test).unwrap();
        assert!((eval.loss - 4f64.ln()).abs() < 1e-12);
        let zeros = test.labels().unwrap().iter().filter(|&&l| l == 0).count();
        assert_eq!(eval.accuracy, Some(zeros as f64 / 40.0));

        let mut cfg = config(1.0, "random", 60);
        cfg.dataset = DataSpec::Blobs {
            classes: 4,
            per_class: 25,
            d_in: 2,
            spread: 0.0,
            n_test: 40,
            label_noise: 0.0,
        };
        let out = Trainer::new(
            &cfg,
            trajectory_for(&cfg).unwrap(),
            policy_from_name("random").unwrap(),
        )
        .run(&train, &test)
        .unwrap();
        assert_eq!(evaluate(&out.final_state, &train).unwrap().accuracy, Some(1.0));
        assert_eq!(out.metrics.last().unwrap().test_accuracy, Some(1.0));

        let empty = test.truncate(0);
        assert!(matches!(evaluate(&zero, &empty), Err(Error::EmptyDataset)));
    }

    #[test]
    fn eval_every_and_probing() {
        let mut cfg = config(0.5, "random", 6);
        cfg.eval_every = 4;
        cfg.probe = Some(ProbeSettings {
            every: 2,
            snapshots: true,
        });
        let out = run_training(&cfg).unwrap();
        let evaluated: Vec<usize> = out
            .metrics
            .iter()
            .filter(|m| m.test_accuracy.is_some())
            .map(|m| m.epoch)
            .collect();
        assert_eq!(evaluated, vec![3, 5]);
        let probed: Vec<usize> = out.snapshots.iter().map(|s| s.epoch).collect();
        assert_eq!(probed, vec![0, 2, 4]);
        assert!(out.metrics[0].r_estimate.is_some() && out.metrics[1].r_estimate.is_none());
    }

    #[test]
    fn momentum_cosine_and_rescoring_run() {
        let mut cfg = config(0.3, "hard_mining", 8);
        cfg.momentum = 0.9;
        cfg.cosine_decay = true;
        cfg.rescore_every = 3;
        let out = run_training(&cfg).unwrap();
        assert_eq!(out.ledger.scoring_overhead_passes, 2 * 90);
        assert!(out.metrics.iter().all(|m| m.train_loss.is_finite()));
    }

    #[test]
    fn bad_policy_is_rejected() {
        assert!(matches!(
            run_training(&config(0.5, "ucb", 2)),
            Err(Error::Config(_))
        ));
    }
}
