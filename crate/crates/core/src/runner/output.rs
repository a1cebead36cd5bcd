//! Report files.

use std::fs;
use std::path::{Path, PathBuf};

use super::config::ScenarioConfig;
use super::experiment::ExperimentResult;
use crate::metrics::CSV_COLUMNS;
use crate::{Error, Result};

/// Flat CSV: one row per replication.
pub fn report_csv(res: &ExperimentResult) -> String {
    let mut s = String::from("scenario,seed");
    for c in CSV_COLUMNS {
        s.push(',');
        s.push_str(c);
    }
    s.push('\n');
    for (seed, r) in res.seeds.iter().zip(&res.reports) {
        s += &format!("{},{seed},{}\n", res.scenario, r.csv_values().join(","));
    }
    s
}

/// Write `<stem>.json` (effective config plus results) and `<stem>.csv` into `dir`.
pub fn write_experiment(
    dir: &Path,
    stem: &str,
    cfg: &ScenarioConfig,
    res: &ExperimentResult,
) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let json = dir.join(format!("{stem}.json"));
    let csv = dir.join(format!("{stem}.csv"));
    let doc = serde_json::json!({ "config": cfg, "result": res });
    fs::write(&json, serde_json::to_string_pretty(&doc)?).map_err(|e| Error::io(&json, e))?;
    fs::write(&csv, report_csv(res)).map_err(|e| Error::io(&csv, e))?;
    Ok((json, csv))
}
