//! Long-format plot data: `series,x,y,seed`.

use std::path::{Path, PathBuf};

use crate::config::ExperimentKind;
use crate::error::{CliError, CliResult};
use crate::experiments::{read_json, write_file, Manifest, MANIFEST};

pub const PLOT_FILE: &str = "plot.csv";

struct Row {
    series: String,
    x: String,
    y: String,
    seed: u64,
}

fn inputs(kind: ExperimentKind) -> &'static [&'static str] {
    match kind {
        ExperimentKind::IfqiCarOnHill | ExperimentKind::PropChecks => &["iterates.csv"],
        ExperimentKind::Table1 => &["iterates.csv", "diagnostics.csv"],
        ExperimentKind::IdqnTabular => &["returns.csv"],
        ExperimentKind::LqrGeometry => &["path.csv"],
    }
}

fn read_rows(path: &Path) -> CliResult<Vec<csv::StringRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Format(format!("{}: {e}", path.display())))?;
    r.records().collect::<Result<_, _>>().map_err(|e| CliError::Format(format!("{}: {e}", path.display())))
}

fn cell<'a>(row: &'a csv::StringRecord, i: usize, path: &Path) -> CliResult<&'a str> {
    row.get(i).ok_or_else(|| CliError::Format(format!("{}: short row", path.display())))
}

/// Writes `<run dir>/plot.csv` from the per-run CSVs and returns its path.
///
/// Series: `perf_loss_K<k>` and cumulative `error_sum_K<k>` against the
/// Bellman iteration for the car-on-hill kinds, plus `csae_K<k>` against the
/// snapshot for `table1`; `return_K<k>` against the episode for i-DQN;
/// `distance_K<k>` of the last network against the step for LQR.
pub fn emit_plot_data(run_dir: &Path) -> CliResult<PathBuf> {
    let manifest_path = run_dir.join(MANIFEST);
    if !manifest_path.is_file() {
        return Err(CliError::MissingInputs(vec![manifest_path.display().to_string()]));
    }
    let manifest: Manifest = read_json(&manifest_path)?;
    let names = inputs(manifest.kind);
    let missing: Vec<String> = manifest
        .runs
        .iter()
        .flat_map(|u| names.iter().map(move |n| run_dir.join(u.relative_dir()).join(n)))
        .filter(|p| !p.is_file())
        .map(|p| p.display().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(CliError::MissingInputs(missing));
    }

    let mut rows = Vec::new();
    for unit in &manifest.runs {
        let dir = run_dir.join(unit.relative_dir());
        let seed = unit.seed;
        let k = unit.k.map_or_else(String::new, |k| k.to_string());
        match manifest.kind {
            ExperimentKind::IfqiCarOnHill | ExperimentKind::PropChecks | ExperimentKind::Table1 => {
                let path = dir.join("iterates.csv");
                let records = read_rows(&path)?;
                for row in &records {
                    let perf = cell(row, 3, &path)?;
                    if !perf.is_empty() {
                        rows.push(Row { series: format!("perf_loss_K{k}"), x: cell(row, 0, &path)?.into(), y: perf.into(), seed });
                    }
                }
                for row in &records {
                    let (x, y) = (cell(row, 0, &path)?, cell(row, 2, &path)?);
                    rows.push(Row { series: format!("error_sum_K{k}"), x: x.into(), y: y.into(), seed });
                }
                if manifest.kind == ExperimentKind::Table1 {
                    let path = dir.join("diagnostics.csv");
                    for row in read_rows(&path)? {
                        if cell(&row, 1, &path)? == "-1" {
                            let (x, y) = (cell(&row, 0, &path)?, cell(&row, 3, &path)?);
                            rows.push(Row { series: format!("csae_K{k}"), x: x.into(), y: y.into(), seed });
                        }
                    }
                }
            }
            ExperimentKind::IdqnTabular => {
                let path = dir.join("returns.csv");
                for row in read_rows(&path)? {
                    let (x, y) = (cell(&row, 0, &path)?, cell(&row, 1, &path)?);
                    rows.push(Row { series: format!("return_K{k}"), x: x.into(), y: y.into(), seed });
                }
            }
            ExperimentKind::LqrGeometry => {
                let path = dir.join("path.csv");
                for row in read_rows(&path)? {
                    // Only the last network of each chain.
                    if cell(&row, 0, &path)? == cell(&row, 2, &path)? {
                        let (x, y) = (cell(&row, 1, &path)?, cell(&row, 5, &path)?);
                        rows.push(Row { series: format!("distance_K{}", cell(&row, 0, &path)?), x: x.into(), y: y.into(), seed });
                    }
                }
            }
        }
    }

    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Format(e.to_string());
    w.write_record(["series", "x", "y", "seed"]).map_err(err)?;
    for r in rows {
        w.write_record([r.series, r.x, r.y, r.seed.to_string()]).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Format(e.to_string()))?;
    let out = run_dir.join(PLOT_FILE);
    write_file(&out, &bytes)?;
    Ok(out)
}
