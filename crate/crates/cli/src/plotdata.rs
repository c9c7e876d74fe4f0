use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};

use crate::run::CSV_HEADER;
use crate::stats::mean_std;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurveRow {
    pub episode: usize,
    pub steps: usize,
    pub cumulative_steps: usize,
}

/// Parses one run CSV, checking episode numbering and that cumulative
/// steps are the prefix sum of steps.
pub fn parse_curve(text: &str) -> Result<Vec<CurveRow>> {
    let mut lines = text.lines();
    ensure!(lines.next() == Some(CSV_HEADER), "missing or wrong header");
    let mut rows = Vec::new();
    let mut total = 0usize;
    for (i, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        ensure!(f.len() == 6, "row {}: expected 6 fields, found {}", i + 1, f.len());
        let num = |k: usize| -> Result<usize> {
            f[k].parse().with_context(|| format!("row {}: bad integer {:?}", i + 1, f[k]))
        };
        let row = CurveRow {
            episode: num(0)?,
            steps: num(1)?,
            cumulative_steps: num(2)?,
        };
        for v in &f[3..5] {
            v.parse::<f64>().with_context(|| format!("row {}: bad number {v:?}", i + 1))?;
        }
        ensure!(
            f[5].is_empty() || f[5].parse::<f64>().is_ok(),
            "row {}: bad cnn_loss {:?}",
            i + 1,
            f[5]
        );
        ensure!(row.episode == i + 1, "row {}: episode {} out of sequence", i + 1, row.episode);
        total += row.steps;
        ensure!(
            row.cumulative_steps == total,
            "row {}: cumulative_steps {} is not the running sum {total}",
            i + 1,
            row.cumulative_steps
        );
        rows.push(row);
    }
    Ok(rows)
}

/// Splits `mode_seed.csv` into its mode and seed.
fn split_name(name: &str) -> Option<(String, u64)> {
    let stem = name.strip_suffix(".csv")?;
    let (mode, seed) = stem.rsplit_once('_')?;
    Some((mode.to_string(), seed.parse().ok()?))
}

/// Per-mode curves keyed by seed, from every `mode_seed.csv` in `dir`.
pub fn load_dir(dir: &Path) -> Result<BTreeMap<String, BTreeMap<u64, Vec<CurveRow>>>> {
    let mut out: BTreeMap<String, BTreeMap<u64, Vec<CurveRow>>> = BTreeMap::new();
    let entries = std::fs::read_dir(dir).with_context(|| format!("cannot read {}", dir.display()))?;
    for entry in entries {
        let path = entry?.path();
        let Some((mode, seed)) = path.file_name().and_then(|n| n.to_str()).and_then(split_name) else {
            continue;
        };
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let rows = parse_curve(&text).with_context(|| format!("invalid run file {}", path.display()))?;
        out.entry(mode).or_default().insert(seed, rows);
    }
    if out.is_empty() {
        bail!("no mode_seed.csv files in {}", dir.display());
    }
    for (mode, runs) in &out {
        let mut lens = runs.values().map(Vec::len);
        let first = lens.next().unwrap_or(0);
        ensure!(first > 0, "{mode}: empty run");
        ensure!(lens.all(|n| n == first), "{mode}: runs have different episode counts");
    }
    Ok(out)
}

/// `episode mean lo hi` over seeds of cumulative steps, `lo`/`hi` one
/// population standard deviation either side.
pub fn aggregate(runs: &BTreeMap<u64, Vec<CurveRow>>) -> Vec<[f64; 4]> {
    let n = runs.values().next().map_or(0, Vec::len);
    (0..n)
        .map(|i| {
            let vals: Vec<f64> = runs.values().map(|r| r[i].cumulative_steps as f64).collect();
            let (mean, std) = mean_std(&vals);
            [(i + 1) as f64, mean, mean - std, mean + std]
        })
        .collect()
}

pub fn format_dat(rows: &[[f64; 4]]) -> String {
    let mut out = String::from("# episode mean lo hi\n");
    for r in rows {
        let _ = writeln!(out, "{} {} {} {}", r[0], r[1], r[2], r[3]);
    }
    out
}

/// Writes `<mode>.dat` next to the CSVs; returns the files written.
pub fn plotdata(dir: &Path) -> Result<Vec<PathBuf>> {
    let modes = load_dir(dir)?;
    let mut files = Vec::new();
    for (mode, runs) in &modes {
        let path = dir.join(format!("{mode}.dat"));
        std::fs::write(&path, format_dat(&aggregate(runs))).with_context(|| format!("writing {}", path.display()))?;
        files.push(path);
    }
    Ok(files)
}
