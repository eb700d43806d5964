//! Run manifests, per-strategy summaries, and cross-run comparison.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::metrics::{read_metrics, MetricsRow};
use crate::error::{Error, Result};
use crate::geometry::mean_std;
use crate::orchestrator::{DatasetSpec, ExperimentConfig};

/// Fraction of the best final accuracy that counts as reaching the target.
pub const TARGET_FRACTION: f64 = 0.95;

/// Written to `manifest.json` before the first round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub build_id: String,
    /// Canonical configuration text of the first seed.
    pub config_text: String,
    pub experiment: ExperimentConfig,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub transport: String,
}

pub fn build_id() -> String {
    option_env!("GAPSL_BUILD_ID").map_or_else(|| format!("v{}", env!("CARGO_PKG_VERSION")), str::to_owned)
}

impl RunManifest {
    pub fn dataset(&self) -> &DatasetSpec {
        &self.experiment.dataset
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::file(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Data(e.to_string()))?;
        fs::write(&path, text + "\n").map_err(|e| Error::file(&path, e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub seeds: Vec<u64>,
    /// Accuracy of the last evaluated round, per seed.
    pub final_accuracy: Vec<f64>,
    pub final_accuracy_mean: f64,
    /// Population standard deviation across seeds.
    pub final_accuracy_std: f64,
    /// Shared accuracy target of every group in the summary.
    pub target_accuracy: f64,
    /// First evaluated round at or above the target, per seed.
    pub rounds_to_target: Vec<Option<u32>>,
    /// Mean over seeds; `None` unless every seed reached the target.
    pub rounds_to_target_mean: Option<f64>,
    pub mean_pairwise_dev: Option<f64>,
}

pub type Summary = BTreeMap<String, StrategySummary>;

fn by_seed(rows: &[MetricsRow]) -> BTreeMap<u64, Vec<&MetricsRow>> {
    let mut m: BTreeMap<u64, Vec<&MetricsRow>> = BTreeMap::new();
    for r in rows {
        m.entry(r.seed).or_default().push(r);
    }
    m
}

/// Summaries of labelled groups of rows. The target is
/// [`TARGET_FRACTION`] of the best group's mean final accuracy.
pub fn summarize_groups(groups: &[(String, Vec<MetricsRow>)]) -> Result<Summary> {
    let mut finals = Vec::with_capacity(groups.len());
    for (label, rows) in groups {
        let mut per_seed = Vec::new();
        for (seed, rs) in by_seed(rows) {
            let last = rs
                .iter()
                .rev()
                .find_map(|r| r.accuracy)
                .ok_or_else(|| Error::Data(format!("{label}: seed {seed} has no evaluated round")))?;
            per_seed.push((seed, last));
        }
        if per_seed.is_empty() {
            return Err(Error::Data(format!("{label}: no rows")));
        }
        finals.push(per_seed);
    }
    let means: Vec<f64> =
        finals.iter().map(|f| f.iter().map(|&(_, a)| a).sum::<f64>() / f.len() as f64).collect();
    let target = TARGET_FRACTION * means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = Summary::new();
    for (((label, rows), per_seed), mean) in groups.iter().zip(&finals).zip(&means) {
        let accs: Vec<f64> = per_seed.iter().map(|&(_, a)| a).collect();
        let rounds: Vec<Option<u32>> = by_seed(rows)
            .values()
            .map(|rs| rs.iter().find(|r| r.accuracy.is_some_and(|a| a >= target)).map(|r| r.round))
            .collect();
        let reached: Option<Vec<u32>> = rounds.iter().copied().collect();
        let devs: Vec<f64> = rows.iter().filter_map(|r| r.pairwise_dev).collect();
        out.insert(
            label.clone(),
            StrategySummary {
                seeds: per_seed.iter().map(|&(s, _)| s).collect(),
                final_accuracy_mean: *mean,
                final_accuracy_std: mean_std(&accs).map_or(0.0, |(_, sd)| sd),
                final_accuracy: accs,
                target_accuracy: target,
                rounds_to_target_mean: reached.map(|r| r.iter().map(|&x| x as f64).sum::<f64>() / r.len() as f64),
                rounds_to_target: rounds,
                mean_pairwise_dev: (!devs.is_empty()).then(|| devs.iter().sum::<f64>() / devs.len() as f64),
            },
        );
    }
    Ok(out)
}

/// Groups rows by strategy name and summarises them.
pub fn summarize(rows: &[MetricsRow]) -> Result<Summary> {
    let mut groups: BTreeMap<String, Vec<MetricsRow>> = BTreeMap::new();
    for r in rows {
        groups.entry(r.strategy.clone()).or_default().push(r.clone());
    }
    summarize_groups(&groups.into_iter().collect::<Vec<_>>())
}

pub fn write_summary(dir: &Path, summary: &Summary) -> Result<()> {
    let path = dir.join("summary.json");
    let text = serde_json::to_string_pretty(summary).map_err(|e| Error::Data(e.to_string()))?;
    fs::write(&path, text + "\n").map_err(|e| Error::file(&path, e))
}

/// One row of a comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub label: String,
    pub strategy: String,
    pub summary: StrategySummary,
    /// Mean final accuracy minus the first run's, in percentage points.
    pub delta_pp: f64,
}

/// Loads run directories that share dataset and seeds and lines them up
/// against a common rounds-to-target threshold. The first run is the baseline.
pub fn compare(dirs: &[PathBuf]) -> Result<Vec<ComparisonRow>> {
    let first = dirs.first().ok_or_else(|| Error::Config("compare needs at least one run directory".into()))?;
    let base = RunManifest::load(first)?;
    let mut groups = Vec::with_capacity(dirs.len());
    let mut strategies = Vec::with_capacity(dirs.len());
    for (i, dir) in dirs.iter().enumerate() {
        let m = RunManifest::load(dir)?;
        if m.seeds != base.seeds {
            return Err(Error::Config(format!(
                "cannot compare {} (seeds {:?}) with {} (seeds {:?})",
                dir.display(),
                m.seeds,
                first.display(),
                base.seeds
            )));
        }
        if m.dataset() != base.dataset() {
            return Err(Error::Config(format!("{} uses a different dataset from {}", dir.display(), first.display())));
        }
        let rows = read_metrics(&dir.join("metrics.csv"))?;
        strategies.push(m.experiment.strategy.name());
        groups.push((format!("{i}:{}", dir.display()), rows));
    }
    let summary = summarize_groups(&groups)?;
    let base_acc = summary[&groups[0].0].final_accuracy_mean;
    Ok(groups
        .iter()
        .zip(strategies)
        .map(|((key, _), strategy)| {
            let s = summary[key].clone();
            ComparisonRow {
                label: key.split_once(':').map_or(key.as_str(), |(_, d)| d).to_owned(),
                strategy,
                delta_pp: 100.0 * (s.final_accuracy_mean - base_acc),
                summary: s,
            }
        })
        .collect())
}

/// Plain-text table of a comparison.
pub fn render_comparison(rows: &[ComparisonRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<32} {:<24} {:>16} {:>10} {:>16} {:>13}",
        "run", "strategy", "final acc (%)", "delta pp", "rounds-to-target", "pairwise dev"
    );
    for r in rows {
        let s = &r.summary;
        let acc = format!("{:.2} ± {:.2}", 100.0 * s.final_accuracy_mean, 100.0 * s.final_accuracy_std);
        let rtt = s.rounds_to_target_mean.map_or_else(
            || format!("- ({}/{})", s.rounds_to_target.iter().flatten().count(), s.rounds_to_target.len()),
            |m| format!("{m:.1}"),
        );
        let dev = s.mean_pairwise_dev.map_or_else(|| "-".to_owned(), |d| format!("{d:.4}"));
        let _ = writeln!(out, "{:<32} {:<24} {:>16} {:>+10.2} {:>16} {:>13}", r.label, r.strategy, acc, r.delta_pp, rtt, dev);
    }
    if let Some(r) = rows.first() {
        let _ = writeln!(out, "target accuracy: {:.2}%", 100.0 * r.summary.target_accuracy);
    }
    out
}
