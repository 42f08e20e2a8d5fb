//! `toolstream report` — AA/AF per strategy, side by side.
//!
//! Reads nothing but the `matrix.csv` files under a run directory — no
//! checkpoints, no logs — recomputes average accuracy and forgetting from
//! each, and prints one column per strategy in alphabetical order. The same
//! numbers go to `report.csv`. A strategy directory without a readable
//! matrix makes the report partial: it still prints what it can, warns, and
//! exits 1.

use std::collections::BTreeMap;
use std::path::Path;

use toolstream_core::metrics::{average_accuracy, average_forgetting, matrix_from_csv};

use crate::errors::{CliError, EXIT_DOMAIN, EXIT_OK};
use crate::job::{guard_clobber, read_text, write_text};

struct StrategyReport {
    aa: f64,
    af: Option<f64>,
}

fn read_strategy(dir: &Path) -> Result<StrategyReport, CliError> {
    let matrix = matrix_from_csv(&read_text(&dir.join("matrix.csv"))?)?;
    let k = matrix.seen();
    let aa = average_accuracy(&matrix, k)?;
    let af = if k >= 2 {
        Some(average_forgetting(&matrix, k)?)
    } else {
        None
    };
    Ok(StrategyReport { aa, af })
}

fn af_text(af: Option<f64>) -> String {
    match af {
        Some(v) => format!("{v:.6}"),
        None => "undefined".to_string(),
    }
}

pub fn run(run_dir: &Path, force: bool) -> Result<i32, CliError> {
    let entries = std::fs::read_dir(run_dir)
        .map_err(|e| CliError::Environment(format!("{}: {e}", run_dir.display())))?;
    let mut dirs: Vec<String> = Vec::new();
    for entry in entries {
        let entry =
            entry.map_err(|e| CliError::Environment(format!("{}: {e}", run_dir.display())))?;
        if entry.path().is_dir() {
            dirs.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    dirs.sort();

    let mut reports: BTreeMap<String, StrategyReport> = BTreeMap::new();
    let mut partial = false;
    for name in dirs {
        match read_strategy(&run_dir.join(&name)) {
            Ok(r) => {
                reports.insert(name, r);
            }
            Err(e) => {
                eprintln!("warning: {name}: {e} (incomplete run)");
                partial = true;
            }
        }
    }
    if reports.is_empty() {
        eprintln!("warning: no strategy results under {}", run_dir.display());
        return Ok(EXIT_DOMAIN);
    }

    // One column per strategy, alphabetical; metric names down the side.
    let width = reports
        .keys()
        .map(|k| k.len())
        .chain(std::iter::once(10))
        .max()
        .unwrap();
    let mut header = format!("{:<12}", "metric");
    let mut aa_row = format!("{:<12}", "AA_final ↑");
    let mut af_row = format!("{:<12}", "AF_final ↓");
    for (name, r) in &reports {
        header.push_str(&format!("  {name:>width$}"));
        aa_row.push_str(&format!("  {:>width$}", format!("{:.6}", r.aa)));
        af_row.push_str(&format!("  {:>width$}", af_text(r.af)));
    }
    println!("{header}");
    println!("{aa_row}");
    println!("{af_row}");

    let csv_path = run_dir.join("report.csv");
    guard_clobber(&csv_path, force)?;
    let mut csv = String::from("strategy,aa_final,af_final\n");
    for (name, r) in &reports {
        csv.push_str(&format!("{name},{},{}\n", r.aa, af_text(r.af)));
    }
    write_text(&csv_path, &csv)?;

    Ok(if partial { EXIT_DOMAIN } else { EXIT_OK })
}
