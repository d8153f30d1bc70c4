//! Per-epoch sample selection.
//!
//! A [`SelectionPolicy`] turns the loss memory and the epoch's ratio into a
//! [`SelectedSubset`] of size `max(1, ⌊p_t·N⌋)`. Two policies ship: loss-based
//! hard mining and uniform random selection. Other policies plug in by
//! implementing the trait and handing a boxed instance to the trainer.

use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::rng::Rng;

/// Slack added before flooring `p_t·N` so products such as `0.29 * 100`
/// (which evaluates to `28.999…`) floor to the intended integer.
const SIZE_SLACK: f64 = 1e-9;

/// `max(1, ⌊p_t·N⌋)`.
pub fn subset_size(p_t: f64, n: usize) -> usize {
    ((p_t * n as f64 + SIZE_SLACK).floor() as usize).clamp(1, n.max(1))
}

fn check_ratio(p_t: f64) -> Result<()> {
    if p_t > 0.0 && p_t <= 1.0 {
        Ok(())
    } else {
        Err(domain("p_t", format!("{p_t} not in (0, 1]")))
    }
}

/// Last known training loss of every sample.
#[derive(Clone, Debug, PartialEq)]
pub struct LossMemory {
    values: Vec<f64>,
    last_updated: Vec<Option<usize>>,
}

impl LossMemory {
    pub fn new(n: usize) -> Self {
        Self {
            values: vec![0.0; n],
            last_updated: vec![None; n],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Epoch of the last update of sample `i`; `None` if never scored.
    pub fn last_updated(&self, i: usize) -> Option<usize> {
        self.last_updated[i]
    }

    pub fn scored_count(&self) -> usize {
        self.last_updated.iter().filter(|u| u.is_some()).count()
    }

    /// Overwrites the given entries and stamps them with `epoch`. The update
    /// is validated in full before anything is written.
    pub fn update(&mut self, indices: &[usize], losses: &[f64], epoch: usize) -> Result<()> {
        if indices.len() != losses.len() {
            return Err(Error::Shape(format!(
                "{} indices but {} losses",
                indices.len(),
                losses.len()
            )));
        }
        let n = self.len();
        for (&i, &loss) in indices.iter().zip(losses) {
            if i >= n {
                return Err(Error::Index { index: i, len: n });
            }
            if !loss.is_finite() || loss < 0.0 {
                return Err(Error::Numeric(format!("loss {loss} for sample {i}")));
            }
        }
        for (&i, &loss) in indices.iter().zip(losses) {
            self.values[i] = loss;
            self.last_updated[i] = Some(epoch);
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SelectedSubset {
    pub epoch: usize,
    /// Sorted, distinct.
    pub indices: Vec<usize>,
    pub nominal_ratio: f64,
}

impl SelectedSubset {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// The `m = max(1, ⌊p_t·N⌋)` samples with the largest stored loss.
///
/// Ties go to the smaller index. Never-scored samples are not ranked; if
/// fewer than `m` samples have been scored the remainder is filled with
/// unscored samples in ascending index order.
pub fn select_hard_mining(memory: &LossMemory, p_t: f64, epoch: usize) -> Result<SelectedSubset> {
    if memory.is_empty() {
        return Err(Error::EmptyDataset);
    }
    check_ratio(p_t)?;
    let m = subset_size(p_t, memory.len());

    let mut scored: Vec<usize> = (0..memory.len())
        .filter(|&i| memory.last_updated[i].is_some())
        .collect();
    scored.sort_by(|&a, &b| {
        memory.values[b]
            .total_cmp(&memory.values[a])
            .then(a.cmp(&b))
    });
    let mut indices: Vec<usize> = scored.into_iter().take(m).collect();
    if indices.len() < m {
        let missing = m - indices.len();
        indices.extend(
            (0..memory.len())
                .filter(|&i| memory.last_updated[i].is_none())
                .take(missing),
        );
    }
    indices.sort_unstable();
    Ok(SelectedSubset {
        epoch,
        indices,
        nominal_ratio: p_t,
    })
}

/// `m` distinct indices drawn uniformly without replacement.
pub fn select_random(n: usize, p_t: f64, epoch: usize, rng: &mut Rng) -> Result<SelectedSubset> {
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    check_ratio(p_t)?;
    let mut indices = rng.sample_without_replacement(n, subset_size(p_t, n));
    indices.sort_unstable();
    Ok(SelectedSubset {
        epoch,
        indices,
        nominal_ratio: p_t,
    })
}

/// Decides which samples an epoch trains on.
///
/// The trainer calls [`observe`](SelectionPolicy::observe) with every batch's
/// pre-update losses (the same values written into the loss memory) and
/// [`select`](SelectionPolicy::select) once at the start of each epoch after
/// the cold-start epoch.
pub trait SelectionPolicy {
    fn name(&self) -> &str;

    fn observe(&mut self, _indices: &[usize], _losses: &[f64], _epoch: usize) {}

    fn select(
        &mut self,
        memory: &LossMemory,
        p_t: f64,
        epoch: usize,
        rng: &mut Rng,
    ) -> Result<SelectedSubset>;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct HardMining;

impl SelectionPolicy for HardMining {
    fn name(&self) -> &str {
        "hard_mining"
    }

    fn select(
        &mut self,
        memory: &LossMemory,
        p_t: f64,
        epoch: usize,
        _rng: &mut Rng,
    ) -> Result<SelectedSubset> {
        select_hard_mining(memory, p_t, epoch)
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct RandomSelection;

impl SelectionPolicy for RandomSelection {
    fn name(&self) -> &str {
        "random"
    }

    fn select(
        &mut self,
        memory: &LossMemory,
        p_t: f64,
        epoch: usize,
        rng: &mut Rng,
    ) -> Result<SelectedSubset> {
        select_random(memory.len(), p_t, epoch, rng)
    }
}

/// Built-in policy for a config string: `"hard_mining"` or `"random"`.
pub fn policy_from_name(name: &str) -> Result<Box<dyn SelectionPolicy>> {
    match name {
        "hard_mining" => Ok(Box::new(HardMining)),
        "random" => Ok(Box::new(RandomSelection)),
        other => Err(Error::Config(format!(
            "unknown policy {other:?}; expected \"hard_mining\" or \"random\""
        ))),
    }
}
