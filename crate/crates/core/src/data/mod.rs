//! Datasets: synthetic generators, an IDX loader and a small binary
//! container.
//!
//! Everything random here draws from [`crate::rng::Rng`], so a dataset is a
//! pure function of its parameters and seed.

mod container;
mod idx;
mod synth;

pub use container::{read_container, write_container, CONTAINER_MAGIC, CONTAINER_VERSION};
pub use idx::{load_idx, write_idx, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};
pub use synth::{gen_blobs, gen_linear_regression, gen_two_moons, inject_label_noise};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::models::{Batch, Targets};
use crate::rng::{labels, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub generator: String,
    pub seed: Option<u64>,
    pub label_noise_rate: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    /// Row-major, `len() × d_in`.
    pub inputs: Vec<f64>,
    pub d_in: usize,
    pub targets: Targets,
    /// Number of classes; 0 for real-valued targets.
    pub classes: usize,
    pub split: Split,
    pub provenance: Provenance,
    /// Row index in the generator's (or file's) output, before splitting.
    pub origin: Vec<usize>,
}

impl Dataset {
    pub(crate) fn from_parts(
        inputs: Vec<f64>,
        d_in: usize,
        targets: Targets,
        classes: usize,
        provenance: Provenance,
    ) -> Result<Self> {
        let n = targets.len();
        if d_in == 0 || inputs.len() != n * d_in {
            return Err(Error::Shape(format!(
                "{} input values for {n} rows of width {d_in}",
                inputs.len()
            )));
        }
        if let Targets::Classes(ls) = &targets {
            if let Some(&bad) = ls.iter().find(|&&l| l >= classes) {
                return Err(Error::Shape(format!("label {bad} outside 0..{classes}")));
            }
        }
        Ok(Self {
            inputs,
            d_in,
            targets,
            classes,
            split: Split::Train,
            provenance,
            origin: (0..n).collect(),
        })
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

    pub fn labels(&self) -> Option<&[usize]> {
        match &self.targets {
            Targets::Classes(ls) => Some(ls),
            Targets::Real(_) => None,
        }
    }

    /// Batch of the given dataset rows; the batch's `indices` are those rows.
    pub fn batch(&self, rows: &[usize]) -> Result<Batch> {
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.len()) {
            return Err(Error::Index {
                index: bad,
                len: self.len(),
            });
        }
        let mut inputs = Vec::with_capacity(rows.len() * self.d_in);
        for &r in rows {
            inputs.extend_from_slice(self.row(r));
        }
        Ok(Batch {
            inputs,
            d_in: self.d_in,
            targets: self.targets.gather(rows),
            indices: rows.to_vec(),
        })
    }

    pub fn full_batch(&self) -> Batch {
        Batch {
            inputs: self.inputs.clone(),
            d_in: self.d_in,
            targets: self.targets.clone(),
            indices: (0..self.len()).collect(),
        }
    }

    fn subset(&self, rows: &[usize], split: Split) -> Dataset {
        let mut inputs = Vec::with_capacity(rows.len() * self.d_in);
        for &r in rows {
            inputs.extend_from_slice(self.row(r));
        }
        Dataset {
            inputs,
            d_in: self.d_in,
            targets: self.targets.gather(rows),
            classes: self.classes,
            split,
            provenance: self.provenance.clone(),
            origin: rows.iter().map(|&r| self.origin[r]).collect(),
        }
    }

    /// First `n` rows.
    pub fn truncate(&self, n: usize) -> Dataset {
        let rows: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&rows, self.split)
    }
}

/// Random disjoint train/test split with `n_test` test rows. Each part
/// keeps the rows in their original relative order.
pub fn train_test_split(ds: &Dataset, n_test: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    if n_test == 0 || n_test >= ds.len() {
        return Err(domain(
            "n_test",
            format!("{n_test} must be in 1..{}", ds.len()),
        ));
    }
    let mut rng = Rng::derived(seed, labels::SPLIT);
    let mut test_rows = rng.sample_without_replacement(ds.len(), n_test);
    test_rows.sort_unstable();
    let mut is_test = vec![false; ds.len()];
    for &r in &test_rows {
        is_test[r] = true;
    }
    let train_rows: Vec<usize> = (0..ds.len()).filter(|&r| !is_test[r]).collect();
    Ok((
        ds.subset(&train_rows, Split::Train),
        ds.subset(&test_rows, Split::Test),
    ))
}
