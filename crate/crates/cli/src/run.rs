use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{Context, Result};
use vinrs_core::rl::{train, EpisodeMetrics, ShapingMode};

use crate::config::{ConfigError, ExperimentConfig};
use crate::stats::mean_std;

pub const CSV_HEADER: &str = "episode,steps,cumulative_steps,return,shaped_return,cnn_loss";
pub const SUMMARY_HEADER: &str = "mode,episode,mean_cumulative_steps,std_cumulative_steps,seeds";
pub const CHECKPOINTS: [usize; 3] = [100, 300, 500];

/// Metrics of one (mode, seed) training run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunCurve {
    pub mode: ShapingMode,
    pub seed: u64,
    pub metrics: Vec<EpisodeMetrics>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub mode: ShapingMode,
    pub episode: usize,
    pub mean: f64,
    pub std: f64,
    pub seeds: usize,
}

pub fn csv_name(mode: ShapingMode, seed: u64) -> String {
    format!("{}_{seed}.csv", mode.name())
}

pub fn curve_csv(metrics: &[EpisodeMetrics]) -> String {
    let mut out = String::with_capacity(48 * (metrics.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for m in metrics {
        let loss = m.cnn_loss.map(|l| l.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            m.episode, m.steps, m.cumulative_steps, m.return_, m.shaped_return, loss
        );
    }
    out
}

/// Trains every (mode, seed) pair, fanning out over `config.threads`
/// workers. Results come back in (mode, seed) configuration order.
pub fn execute(config: &ExperimentConfig, on_done: impl Fn(&RunCurve) + Sync) -> Result<Vec<RunCurve>> {
    let world = config.env.build()?;
    let jobs: Vec<(ShapingMode, u64)> = config
        .modes
        .iter()
        .flat_map(|&m| config.seeds.iter().map(move |&s| (m, s)))
        .collect();
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<RunCurve>>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..config.threads.min(jobs.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(mode, seed)) = jobs.get(i) else { break };
                let mut tc = config.train.clone();
                tc.shaping_mode = mode;
                let res = train(&world, &tc, seed)
                    .map(|metrics| RunCurve { mode, seed, metrics })
                    .with_context(|| format!("{} seed {seed}", mode.name()));
                if let Ok(c) = &res {
                    on_done(c);
                }
                slots.lock().expect("no worker panicked")[i] = Some(res);
            });
        }
    });
    slots
        .into_inner()
        .expect("no worker panicked")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect()
}

/// Mean and population standard deviation of cumulative steps per mode at
/// each checkpoint the runs reach.
pub fn summarize(curves: &[RunCurve], modes: &[ShapingMode]) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for &mode in modes {
        let runs: Vec<&RunCurve> = curves.iter().filter(|c| c.mode == mode).collect();
        for ep in CHECKPOINTS {
            let vals: Vec<f64> = runs
                .iter()
                .filter_map(|c| c.metrics.get(ep - 1))
                .map(|m| m.cumulative_steps as f64)
                .collect();
            if vals.is_empty() || vals.len() != runs.len() {
                continue;
            }
            let (mean, std) = mean_std(&vals);
            rows.push(SummaryRow {
                mode,
                episode: ep,
                mean,
                std,
                seeds: vals.len(),
            });
        }
    }
    rows
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{}", r.mode.name(), r.episode, r.mean, r.std, r.seeds);
    }
    out
}

fn prepare_dir(dir: &Path) -> Result<(), ConfigError> {
    let unusable = |e: std::io::Error| ConfigError::new(format!("output directory {}: {e}", dir.display()));
    std::fs::create_dir_all(dir).map_err(unusable)?;
    let probe = dir.join(".vinrs-write-test");
    std::fs::write(&probe, b"").map_err(unusable)?;
    std::fs::remove_file(&probe).map_err(unusable)
}

pub struct RunOutput {
    pub curves: Vec<RunCurve>,
    pub summary: Vec<SummaryRow>,
    pub files: Vec<PathBuf>,
}

/// Runs the experiment and writes one CSV per run plus `summary.csv`.
pub fn run(config: &ExperimentConfig, on_done: impl Fn(&RunCurve) + Sync) -> Result<RunOutput> {
    prepare_dir(&config.output_dir)?;
    let curves = execute(config, on_done)?;
    let mut files = Vec::with_capacity(curves.len() + 1);
    for c in &curves {
        let path = config.output_dir.join(csv_name(c.mode, c.seed));
        std::fs::write(&path, curve_csv(&c.metrics)).with_context(|| format!("writing {}", path.display()))?;
        files.push(path);
    }
    let summary = summarize(&curves, &config.modes);
    let path = config.output_dir.join("summary.csv");
    std::fs::write(&path, summary_csv(&summary)).with_context(|| format!("writing {}", path.display()))?;
    files.push(path);
    Ok(RunOutput { curves, summary, files })
}
