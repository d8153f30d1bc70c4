//! Forward-pass accounting.
//!
//! Every training epoch appends its selected count; after each append the
//! cumulative usage must satisfy `Σ n_t ≤ p·t·N + t`. The `+ t` term only
//! admits the one-sample floor of the subset sizing rule.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

const BOUND_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub epoch: usize,
    pub n_selected: usize,
}

#[derive(Clone, Debug)]
pub struct BudgetLedger {
    n: usize,
    target_ratio: f64,
    entries: Vec<LedgerEntry>,
    cumulative: usize,
    scoring_overhead_passes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerSummary {
    pub dataset_size: usize,
    pub epochs: usize,
    pub total_passes: usize,
    pub realized_ratio: f64,
    pub target_ratio: f64,
    /// `target_ratio − realized_ratio`.
    pub headroom: f64,
    pub scoring_overhead_passes: usize,
    /// Usage exceeded `p·t·N`, i.e. the one-sample floor was needed.
    pub floor_slack_used: bool,
}

impl BudgetLedger {
    pub fn new(n: usize, target_ratio: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        if !(target_ratio > 0.0 && target_ratio <= 1.0) {
            return Err(domain("target_ratio", format!("{target_ratio} not in (0, 1]")));
        }
        Ok(Self {
            n,
            target_ratio,
            entries: Vec::new(),
            cumulative: 0,
            scoring_overhead_passes: 0,
        })
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn cumulative_passes(&self) -> usize {
        self.cumulative
    }

    /// Upper bound on cumulative passes after `epochs` epochs.
    pub fn bound(&self, epochs: usize) -> f64 {
        self.target_ratio * epochs as f64 * self.n as f64 + epochs as f64
    }

    pub fn record_epoch(&mut self, epoch: usize, n_selected: usize) -> Result<()> {
        let expected = self.entries.len();
        if epoch != expected {
            return Err(Error::Sequencing {
                expected,
                got: epoch,
            });
        }
        if n_selected == 0 || n_selected > self.n {
            return Err(domain(
                "n_selected",
                format!("{n_selected} not in 1..={}", self.n),
            ));
        }
        let prefix_sum = self.cumulative + n_selected;
        let bound = self.bound(epoch + 1);
        if prefix_sum as f64 > bound + BOUND_TOL {
            return Err(Error::BudgetViolation {
                epoch,
                prefix_sum,
                bound,
            });
        }
        self.cumulative = prefix_sum;
        self.entries.push(LedgerEntry { epoch, n_selected });
        Ok(())
    }

    /// Passes spent on explicit full-data rescoring; not part of the budget.
    pub fn add_scoring_overhead(&mut self, passes: usize) {
        self.scoring_overhead_passes += passes;
    }

    pub fn summary(&self) -> Result<LedgerSummary> {
        if self.entries.is_empty() {
            return Err(Error::EmptyLedger);
        }
        let epochs = self.entries.len();
        let realized_ratio = self.cumulative as f64 / (epochs * self.n) as f64;
        let nominal = self.target_ratio * epochs as f64 * self.n as f64;
        Ok(LedgerSummary {
            dataset_size: self.n,
            epochs,
            total_passes: self.cumulative,
            realized_ratio,
            target_ratio: self.target_ratio,
            headroom: self.target_ratio - realized_ratio,
            scoring_overhead_passes: self.scoring_overhead_passes,
            floor_slack_used: self.cumulative as f64 > nominal + BOUND_TOL,
        })
    }
}
