//! Aggregates run directories into one CSV row per run name.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use oscisel::config::SCHEMA_VERSION;
use oscisel::trainer::EpochMetrics;
use serde::Deserialize;

use crate::UsageError;

#[derive(Deserialize)]
struct SummaryHead {
    schema: String,
    name: Option<String>,
    ledger: LedgerHead,
}

#[derive(Deserialize)]
struct LedgerHead {
    realized_ratio: f64,
}

#[derive(Deserialize)]
struct TimingHead {
    wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub name: String,
    pub schema: String,
    pub final_accuracy: Option<f64>,
    pub realized_ratio: f64,
    pub wall_seconds: Option<f64>,
}

/// Mean and sample standard deviation (`n − 1`); the deviation of a single
/// value is 0.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn run_dirs(root: &Path, found: &mut Vec<PathBuf>) -> Result<()> {
    if root.join("summary.json").is_file() {
        found.push(root.to_path_buf());
        return Ok(());
    }
    let mut children: Vec<PathBuf> = fs::read_dir(root)
        .with_context(|| format!("reading {}", root.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    children.sort();
    for child in children {
        run_dirs(&child, found)?;
    }
    Ok(())
}

/// Final test accuracy of a metrics stream: the last evaluated epoch.
pub fn final_accuracy(path: &Path) -> Result<Option<f64>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut last = None;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let m: EpochMetrics = serde_json::from_str(line)
            .with_context(|| format!("{}: corrupt record at line {}", path.display(), i + 1))?;
        if m.test_accuracy.is_some() {
            last = m.test_accuracy;
        }
    }
    Ok(last)
}

pub fn read_run(dir: &Path) -> Result<RunRow> {
    let summary_path = dir.join("summary.json");
    let summary: SummaryHead = serde_json::from_str(&fs::read_to_string(&summary_path)?)
        .with_context(|| format!("parsing {}", summary_path.display()))?;
    let final_accuracy = final_accuracy(&dir.join("metrics.jsonl"))?;
    let wall_seconds = match fs::read_to_string(dir.join("timing.json")) {
        Ok(text) => Some(serde_json::from_str::<TimingHead>(&text)?.wall_seconds),
        Err(_) => None,
    };
    let name = summary.name.unwrap_or_else(|| {
        dir.file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    Ok(RunRow {
        name,
        schema: summary.schema,
        final_accuracy,
        realized_ratio: summary.ledger.realized_ratio,
        wall_seconds,
    })
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.6}")).unwrap_or_default()
}

/// CSV with one row per run name; seeds sharing a name are pooled.
pub fn render(rows: &[RunRow]) -> Result<String> {
    for row in rows {
        if row.schema != SCHEMA_VERSION {
            bail!(
                "mixed schema versions: run {:?} has {:?}, expected {:?}",
                row.name,
                row.schema,
                SCHEMA_VERSION
            );
        }
    }
    let mut groups: BTreeMap<&str, Vec<&RunRow>> = BTreeMap::new();
    for row in rows {
        groups.entry(&row.name).or_default().push(row);
    }
    let mut out = String::from(
        "name,runs,test_accuracy_mean,test_accuracy_std,realized_ratio_mean,wall_seconds_mean\n",
    );
    for (name, group) in groups {
        let acc: Vec<f64> = group.iter().filter_map(|r| r.final_accuracy).collect();
        let (acc_mean, acc_std) = if acc.is_empty() {
            (None, None)
        } else {
            let (m, s) = mean_std(&acc);
            (Some(m), Some(s))
        };
        let ratios: Vec<f64> = group.iter().map(|r| r.realized_ratio).collect();
        let walls: Vec<f64> = group.iter().filter_map(|r| r.wall_seconds).collect();
        let wall = (!walls.is_empty()).then(|| mean_std(&walls).0);
        out.push_str(&format!(
            "{name},{},{},{},{},{}\n",
            group.len(),
            fmt_opt(acc_mean),
            fmt_opt(acc_std),
            fmt_opt(Some(mean_std(&ratios).0)),
            fmt_opt(wall),
        ));
    }
    Ok(out)
}

pub fn report(inputs: &[PathBuf]) -> Result<()> {
    let mut dirs = Vec::new();
    for input in inputs {
        if !input.is_dir() {
            return Err(UsageError(format!("{} is not a directory", input.display())).into());
        }
        run_dirs(input, &mut dirs)?;
    }
    if dirs.is_empty() {
        bail!("no run directories with summary.json found");
    }
    let rows = dirs.iter().map(|d| read_run(d)).collect::<Result<Vec<_>>>()?;
    print!("{}", render(&rows)?);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(name: &str, acc: f64) -> RunRow {
        RunRow {
            name: name.into(),
            schema: SCHEMA_VERSION.into(),
            final_accuracy: Some(acc),
            realized_ratio: 0.5,
            wall_seconds: Some(1.0),
        }
    }

    #[test]
    fn five_seed_mean_and_std() {
        // 0.80, 0.82, 0.84, 0.86, 0.88: mean 0.84, squared deviations sum to
        // 0.004, sample variance 0.001.
        let (m, s) = mean_std(&[0.80, 0.82, 0.84, 0.86, 0.88]);
        assert!((m - 0.84).abs() < 1e-15);
        assert!((s - 0.001f64.sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(&[0.7]), (0.7, 0.0));
    }

    #[test]
    fn groups_by_name() {
        let rows: Vec<RunRow> = [0.80, 0.82, 0.84, 0.86, 0.88]
            .iter()
            .map(|&a| row("pods", a))
            .chain([row("full", 0.9)])
            .collect();
        let csv = render(&rows).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1], "full,1,0.900000,0.000000,0.500000,1.000000");
        assert_eq!(lines[2], "pods,5,0.840000,0.031623,0.500000,1.000000");
    }

    #[test]
    fn mixed_schema_is_an_error() {
        let mut other = row("b", 0.5);
        other.schema = "v0".into();
        assert!(render(&[row("a", 0.5), other]).is_err());
    }
}
