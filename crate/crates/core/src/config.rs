//! Run configuration and its JSON file form.
//!
//! A config file is one JSON object: the [`RunConfig`] keys plus `version`
//! (must be `"v1"`), an optional `name` and an optional `out` directory.
//! Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{
    gen_blobs, gen_linear_regression, gen_two_moons, inject_label_noise, load_idx,
    read_container, train_test_split, Dataset, Split,
};
use crate::error::{domain, Error, Result};
use crate::models::Arch;

pub const SCHEMA_VERSION: &str = "v1";

fn default_epsilon() -> f64 {
    0.05
}

fn default_eval_every() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSpec {
    TwoMoons {
        n_train: usize,
        n_test: usize,
        noise: f64,
        #[serde(default)]
        label_noise: f64,
    },
    Blobs {
        classes: usize,
        per_class: usize,
        d_in: usize,
        spread: f64,
        n_test: usize,
        #[serde(default)]
        label_noise: f64,
    },
    Linear {
        n_train: usize,
        n_test: usize,
        d_in: usize,
        noise: f64,
    },
    Idx {
        train_images: String,
        train_labels: String,
        test_images: String,
        test_labels: String,
        #[serde(default)]
        limit: Option<usize>,
        #[serde(default)]
        label_noise: f64,
    },
    Container {
        train: String,
        test: String,
    },
}

impl DataSpec {
    /// Train and test splits. Synthetic sets are generated once and split
    /// at random; label noise touches the training split only.
    pub fn load(&self, seed: u64) -> Result<(Dataset, Dataset)> {
        let with_noise = |(train, test): (Dataset, Dataset), rate: f64| -> Result<_> {
            let train = if rate > 0.0 {
                inject_label_noise(&train, rate, seed)?
            } else {
                train
            };
            Ok((train, test))
        };
        match self {
            DataSpec::TwoMoons {
                n_train,
                n_test,
                noise,
                label_noise,
            } => {
                let all = gen_two_moons(n_train + n_test, *noise, seed)?;
                with_noise(train_test_split(&all, *n_test, seed)?, *label_noise)
            }
            DataSpec::Blobs {
                classes,
                per_class,
                d_in,
                spread,
                n_test,
                label_noise,
            } => {
                let all = gen_blobs(*classes, *per_class, *d_in, *spread, seed)?;
                with_noise(train_test_split(&all, *n_test, seed)?, *label_noise)
            }
            DataSpec::Linear {
                n_train,
                n_test,
                d_in,
                noise,
            } => {
                let all = gen_linear_regression(n_train + n_test, *d_in, *noise, seed)?;
                train_test_split(&all, *n_test, seed)
            }
            DataSpec::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
                limit,
                label_noise,
            } => {
                let train = load_idx(train_images, train_labels, *limit)?;
                let mut test = load_idx(test_images, test_labels, None)?;
                test.split = Split::Test;
                with_noise((train, test), *label_noise)
            }
            DataSpec::Container { train, test } => Ok((
                read_container(train, Split::Train)?,
                read_container(test, Split::Test)?,
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Logistic,
    Mlp { hidden: usize },
    Quadratic,
}

impl ModelSpec {
    pub fn resolve(&self, data: &Dataset) -> Result<Arch> {
        let d_in = data.d_in;
        match (*self, data.classes) {
            (ModelSpec::Quadratic, 0) => Ok(Arch::Quadratic { d_in }),
            (ModelSpec::Quadratic, _) => Err(Error::Config(
                "quadratic model needs real-valued targets".into(),
            )),
            (_, 0) => Err(Error::Config("classifier needs class labels".into())),
            (ModelSpec::Logistic, classes) => Ok(Arch::Logistic { d_in, classes }),
            (ModelSpec::Mlp { hidden }, classes) => Ok(Arch::Mlp {
                d_in,
                hidden,
                classes,
            }),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    #[default]
    Oscillatory,
    Fixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSettings {
    /// Probe at epochs where `epoch % every == 0`.
    pub every: usize,
    /// Keep parameter snapshots of probed epochs.
    #[serde(default)]
    pub snapshots: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DataSpec,
    pub model: ModelSpec,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub momentum: f64,
    pub target_ratio: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub schedule: ScheduleKind,
    pub policy: String,
    pub seed: u64,
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    #[serde(default)]
    pub cosine_decay: bool,
    /// Full-data loss refresh every this many epochs (0 = never). These
    /// passes are booked as scoring overhead, not budget.
    #[serde(default)]
    pub rescore_every: usize,
    #[serde(default)]
    pub probe: Option<ProbeSettings>,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(domain("epochs", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(domain("batch_size", "must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(domain("learning_rate", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(domain("momentum", "must be in [0, 1)"));
        }
        if !(self.target_ratio > 0.0 && self.target_ratio <= 1.0) {
            return Err(domain("target_ratio", "must be in (0, 1]"));
        }
        if self.eval_every == 0 {
            return Err(domain("eval_every", "must be at least 1"));
        }
        if let Some(probe) = &self.probe {
            if probe.every == 0 {
                return Err(domain("probe.every", "must be at least 1"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConfigFile {
    pub version: String,
    pub name: Option<String>,
    pub out: Option<String>,
    pub run: RunConfig,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let serde_json::Value::Object(mut map) = value else {
            return Err(Error::Config("config must be a JSON object".into()));
        };
        let version = match map.remove("version") {
            Some(serde_json::Value::String(v)) => v,
            Some(other) => return Err(Error::Config(format!("version must be a string, got {other}"))),
            None => return Err(Error::Config("missing key `version`".into())),
        };
        if version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported config version {version:?}, expected {SCHEMA_VERSION:?}"
            )));
        }
        let string_key = |map: &mut serde_json::Map<String, serde_json::Value>, key: &str| {
            match map.remove(key) {
                None | Some(serde_json::Value::Null) => Ok(None),
                Some(serde_json::Value::String(s)) => Ok(Some(s)),
                Some(other) => Err(Error::Config(format!("`{key}` must be a string, got {other}"))),
            }
        };
        let name = string_key(&mut map, "name")?;
        let out = string_key(&mut map, "out")?;
        let run: RunConfig = serde_json::from_value(serde_json::Value::Object(map))
            .map_err(|e| Error::Config(e.to_string()))?;
        run.validate()?;
        Ok(Self {
            version,
            name,
            out,
            run,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut value = serde_json::to_value(&self.run)?;
        let map = value.as_object_mut().expect("RunConfig serializes to an object");
        map.insert("version".into(), self.version.clone().into());
        if let Some(name) = &self.name {
            map.insert("name".into(), name.clone().into());
        }
        if let Some(out) = &self.out {
            map.insert("out".into(), out.clone().into());
        }
        Ok(serde_json::to_string_pretty(&value)?)
    }
}
