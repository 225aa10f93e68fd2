use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use iqn::diagnostics::{bootstrap_ci, iqm};

use crate::config::ExperimentKind;
use crate::error::{CliError, CliResult, Context};
use crate::experiments::{read_json, write_json, FinalRecord, Manifest, FINAL, MANIFEST};

pub const BOOTSTRAP_RESAMPLES: usize = 2_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedValue {
    pub seed: u64,
    pub value: f64,
}

/// One final metric over seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub per_seed: Vec<SeedValue>,
    pub mean: f64,
    pub iqm: f64,
    /// Percentile bootstrap interval of the IQM; needs two seeds.
    pub ci95: Option<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub k: Option<usize>,
    pub metrics: BTreeMap<String, MetricSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitTiming {
    pub k: Option<usize>,
    pub seed: u64,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub total_seconds: f64,
    pub runs: Vec<UnitTiming>,
}

/// What `summary.json` holds. Wall-clock lives in `timing.json` so that the
/// summary is a pure function of config and seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub kind: ExperimentKind,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub groups: Vec<GroupSummary>,
    #[serde(skip)]
    pub wall_clock: Option<Timing>,
}

impl RunSummary {
    pub fn group(&self, k: Option<usize>) -> Option<&GroupSummary> {
        self.groups.iter().find(|g| g.k == k)
    }

    pub fn metric(&self, k: Option<usize>, name: &str) -> Option<&MetricSummary> {
        self.group(k).and_then(|g| g.metrics.get(name))
    }
}

pub fn summarize(values: Vec<SeedValue>) -> CliResult<MetricSummary> {
    let xs: Vec<f64> = values.iter().map(|v| v.value).collect();
    let iqm = iqm(&xs).context(|| "IQM".into())?;
    let ci95 = if xs.len() >= 2 {
        let (lo, hi) = bootstrap_ci(&xs, BOOTSTRAP_RESAMPLES, 0.95, 0).context(|| "bootstrap".into())?;
        Some([lo, hi])
    } else {
        None
    };
    Ok(MetricSummary { mean: xs.iter().sum::<f64>() / xs.len() as f64, iqm, ci95, per_seed: values })
}

/// Reads every run's `final.json` and writes `summary.json`. Lists the
/// missing files when some run has not finished.
pub fn aggregate(root: &Path) -> CliResult<RunSummary> {
    let manifest_path = root.join(MANIFEST);
    if !manifest_path.is_file() {
        return Err(CliError::MissingInputs(vec![manifest_path.display().to_string()]));
    }
    let manifest: Manifest = read_json(&manifest_path)?;
    let missing: Vec<String> = manifest
        .runs
        .iter()
        .map(|u| root.join(u.relative_dir()).join(FINAL))
        .filter(|p| !p.is_file())
        .map(|p| p.display().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(CliError::MissingInputs(missing));
    }
    let mut by_k: BTreeMap<Option<usize>, BTreeMap<String, Vec<SeedValue>>> = BTreeMap::new();
    let mut seeds = Vec::new();
    for unit in &manifest.runs {
        let record: FinalRecord = read_json(&root.join(unit.relative_dir()).join(FINAL))?;
        if !seeds.contains(&record.seed) {
            seeds.push(record.seed);
        }
        let group = by_k.entry(unit.k).or_default();
        for (name, value) in record.metrics {
            if let Some(value) = value {
                group.entry(name).or_default().push(SeedValue { seed: record.seed, value });
            }
        }
    }
    let groups = by_k
        .into_iter()
        .map(|(k, metrics)| {
            let metrics = metrics
                .into_iter()
                .map(|(name, mut values)| {
                    values.sort_by_key(|v| v.seed);
                    Ok((name, summarize(values)?))
                })
                .collect::<CliResult<_>>()?;
            Ok(GroupSummary { k, metrics })
        })
        .collect::<CliResult<_>>()?;
    seeds.sort_unstable();
    let summary = RunSummary { kind: manifest.kind, config_hash: manifest.config_hash, seeds, groups, wall_clock: None };
    write_json(&root.join("summary.json"), &summary)?;
    Ok(summary)
}
