//! Subcommand bodies.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use oscisel::config::{ConfigFile, DataSpec, ProbeSettings, SCHEMA_VERSION};
use oscisel::models::ModelState;
use oscisel::regprobe::{estimate_r_with, verify_one_step_expansion, ExpansionReport, RegEstimate, TraceMethod};
use oscisel::rng::{labels, Rng};
use oscisel::schedule::{derive_params, RatioTrajectory};
use oscisel::trainer::run_training;
use oscisel::data::write_container;
use serde::Serialize;

use crate::{GenArgs, GenKind, UsageError};

pub const OUT_ENV: &str = "OSCISEL_OUT";

pub fn derive(target_ratio: f64, epsilon: f64, epochs: Option<usize>) -> Result<()> {
    let params = derive_params(target_ratio, epsilon).map_err(|e| UsageError(e.to_string()))?;
    println!("{}", serde_json::to_string(&params)?);
    if let Some(t) = epochs {
        let traj = RatioTrajectory::oscillatory(params, t).map_err(|e| UsageError(e.to_string()))?;
        let ratios: Vec<String> = traj.ratios().iter().map(f64::to_string).collect();
        println!("{}", ratios.join(","));
    }
    Ok(())
}

fn load_config(path: &Path) -> Result<ConfigFile> {
    let text = fs::read_to_string(path)
        .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
    ConfigFile::parse(&text).map_err(|e| UsageError(format!("invalid config {}: {e}", path.display())).into())
}

fn output_dir(cli_out: Option<&Path>, cfg: &ConfigFile, config_path: &Path) -> PathBuf {
    if let Some(out) = cli_out {
        return out.to_path_buf();
    }
    if let Some(out) = &cfg.out {
        return PathBuf::from(out);
    }
    let root = std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| "out".into());
    let name = cfg.name.clone().unwrap_or_else(|| {
        config_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".into())
    });
    root.join(name)
}

fn write_lines<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Summary<'a> {
    schema: &'a str,
    name: Option<&'a str>,
    config: serde_json::Value,
    ledger: &'a oscisel::ledger::LedgerSummary,
    final_test_loss: Option<f64>,
    final_test_accuracy: Option<f64>,
}

#[derive(Serialize)]
struct Timing {
    schema: &'static str,
    wall_seconds: f64,
}

pub fn run(config_path: &Path, cli_out: Option<&Path>) -> Result<()> {
    let cfg = load_config(config_path)?;
    let out = output_dir(cli_out, &cfg, config_path);
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;

    let started = Instant::now();
    let result = run_training(&cfg.run)?;
    let wall_seconds = started.elapsed().as_secs_f64();

    write_lines(&out.join("metrics.jsonl"), &result.metrics)?;
    let last_eval = result.metrics.iter().rev().find(|m| m.test_loss.is_some());
    let summary = Summary {
        schema: SCHEMA_VERSION,
        name: cfg.name.as_deref(),
        config: serde_json::from_str(&cfg.to_json()?)?,
        ledger: &result.ledger,
        final_test_loss: last_eval.and_then(|m| m.test_loss),
        final_test_accuracy: last_eval.and_then(|m| m.test_accuracy),
    };
    fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    fs::write(
        out.join("timing.json"),
        serde_json::to_string(&Timing {
            schema: SCHEMA_VERSION,
            wall_seconds,
        })? + "\n",
    )?;
    if !result.snapshots.is_empty() {
        write_lines(&out.join("snapshots.jsonl"), &result.snapshots)?;
    }
    eprintln!("wrote {}", out.display());
    Ok(())
}

#[derive(Serialize)]
struct ProbeRecord {
    kind: &'static str,
    #[serde(flatten)]
    estimate: RegEstimate,
}

#[derive(Serialize)]
struct VerifyRecord {
    kind: &'static str,
    epoch: usize,
    #[serde(flatten)]
    report: ExpansionReport,
}

fn check_ratios(ps: &[f64], upper_inclusive: bool) -> Result<()> {
    for &p in ps {
        let ok = p > 0.0 && if upper_inclusive { p <= 1.0 } else { p < 1.0 };
        if !ok {
            return Err(UsageError(format!("--p value {p} out of range")).into());
        }
    }
    Ok(())
}

pub fn probe(config_path: &Path, cli_out: Option<&Path>, ps: &[f64], at: &[usize]) -> Result<()> {
    check_ratios(ps, false)?;
    let mut cfg = load_config(config_path)?;
    let out = output_dir(cli_out, &cfg, config_path);
    fs::create_dir_all(&out)?;
    cfg.run.probe = Some(ProbeSettings {
        every: 1,
        snapshots: true,
    });
    let result = run_training(&cfg.run)?;
    let (train, _) = cfg.run.dataset.load(cfg.run.seed)?;
    let full = train.full_batch();

    let mut records = Vec::new();
    for snap in &result.snapshots {
        if !at.is_empty() && !at.contains(&snap.epoch) {
            continue;
        }
        let ratios: Vec<f64> = if ps.is_empty() {
            if snap.p_t >= 1.0 {
                continue;
            }
            vec![snap.p_t]
        } else {
            ps.to_vec()
        };
        for p in ratios {
            let mut estimate = estimate_r_with(&snap.state, &full, p, snap.learning_rate, TraceMethod::Auto)?;
            estimate.epoch = Some(snap.epoch);
            estimate.seed = Some(cfg.run.seed);
            records.push(ProbeRecord {
                kind: "probe",
                estimate,
            });
        }
    }
    if let Some(&missing) = at.iter().find(|e| !result.snapshots.iter().any(|s| s.epoch == **e)) {
        anyhow::bail!("no snapshot for epoch {missing}");
    }
    write_lines(&out.join("regprobe.jsonl"), &records)?;
    eprintln!("wrote {} records to {}", records.len(), out.display());
    Ok(())
}

pub fn verify(config_path: &Path, cli_out: Option<&Path>, ps: &[f64], trials: usize) -> Result<()> {
    check_ratios(ps, true)?;
    if trials == 0 {
        return Err(UsageError("--trials must be at least 1".into()).into());
    }
    let cfg = load_config(config_path)?;
    let out = output_dir(cli_out, &cfg, config_path);
    fs::create_dir_all(&out)?;
    let (train, _) = cfg.run.dataset.load(cfg.run.seed)?;
    let arch = cfg.run.model.resolve(&train)?;
    let state = ModelState::init(arch, &mut Rng::derived(cfg.run.seed, labels::INIT))?;
    let full = train.full_batch();

    let mut records = Vec::with_capacity(ps.len());
    for &p in ps {
        let report = verify_one_step_expansion(&state, &full, p, cfg.run.learning_rate, trials, cfg.run.seed)?;
        eprintln!(
            "p={p}: mc={:.9e} predicted={:.9e} gap={:.2} se",
            report.mc_mean, report.prediction, report.gap_se
        );
        records.push(VerifyRecord {
            kind: "verify",
            epoch: 0,
            report,
        });
    }
    write_lines(&out.join("regprobe.jsonl"), &records)?;
    Ok(())
}

pub fn gen_data(args: &GenArgs) -> Result<()> {
    let spec = match args.kind {
        GenKind::TwoMoons => DataSpec::TwoMoons {
            n_train: args.n_train,
            n_test: args.n_test,
            noise: args.noise,
            label_noise: args.label_noise,
        },
        GenKind::Blobs => {
            let total = args.n_train + args.n_test;
            if !total.is_multiple_of(args.classes.max(1)) {
                return Err(UsageError(format!(
                    "n_train + n_test = {total} is not a multiple of {} classes",
                    args.classes
                ))
                .into());
            }
            DataSpec::Blobs {
                classes: args.classes,
                per_class: total / args.classes,
                d_in: args.d_in,
                spread: args.noise,
                n_test: args.n_test,
                label_noise: args.label_noise,
            }
        }
        GenKind::Linear => DataSpec::Linear {
            n_train: args.n_train,
            n_test: args.n_test,
            d_in: args.d_in,
            noise: args.noise,
        },
    };
    let (train, test) = spec.load(args.seed).map_err(|e| UsageError(e.to_string()))?;
    fs::create_dir_all(&args.out)?;
    write_container(args.out.join("train.osds"), &train)?;
    write_container(args.out.join("test.osds"), &test)?;
    eprintln!(
        "wrote {} train and {} test samples to {}",
        train.len(),
        test.len(),
        args.out.display()
    );
    Ok(())
}
