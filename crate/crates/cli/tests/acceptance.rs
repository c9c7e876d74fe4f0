use std::process::ExitCode;
use std::time::{Duration, Instant};

use vinrs_cli::checks::{
    argmax_invariance, degenerate_mix, determinism, gradient_check, message_enumeration, ordering, planning,
    planning_maps, telescoping,
};
use vinrs_cli::run::{execute, summarize};
use vinrs_cli::{CheckOutcome, EnvKind, EnvSpec, ExperimentConfig, Status};
use vinrs_core::env::four_rooms;
use vinrs_core::rl::{ShapingMode, TrainConfig};

struct Verdict {
    id: usize,
    outcome: CheckOutcome,
    elapsed: Duration,
    limit: Duration,
}

impl Verdict {
    fn passed(&self) -> bool {
        self.outcome.status == Status::Pass && self.elapsed <= self.limit
    }

    fn line(&self) -> String {
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        let time = if self.elapsed <= self.limit {
            format!("{:.1}s", self.elapsed.as_secs_f64())
        } else {
            format!("{:.1}s over the {}s limit", self.elapsed.as_secs_f64(), self.limit.as_secs())
        };
        format!("{verdict} [{}] {}: {} ({time})", self.id, self.outcome.name, self.outcome.detail)
    }
}

fn timed(id: usize, limit_s: u64, f: impl FnOnce() -> CheckOutcome) -> Verdict {
    let start = Instant::now();
    let outcome = f();
    let v = Verdict {
        id,
        outcome,
        elapsed: start.elapsed(),
        limit: Duration::from_secs(limit_s),
    };
    println!("{}", v.line());
    v
}

/// Ten seeds, 500 episodes, every mode on both four-rooms worlds. The
/// time limit applies to each mode's total across the two worlds.
fn learning_speed() -> Verdict {
    const LIMIT: u64 = 15 * 60;
    let mut per_mode = [Duration::ZERO; 3];
    let mut parts = Vec::new();
    let mut status = Status::Pass;
    for kind in [EnvKind::FourRooms, EnvKind::FourRoomsTraps] {
        let mut curves = Vec::new();
        for (i, mode) in ShapingMode::ALL.into_iter().enumerate() {
            let cfg = ExperimentConfig {
                env: EnvSpec::named(kind),
                train: TrainConfig::default(),
                modes: vec![mode],
                seeds: (1..=10).collect(),
                ..ExperimentConfig::default()
            };
            let start = Instant::now();
            match execute(&cfg, |_| {}) {
                Ok(c) => curves.extend(c),
                Err(e) => {
                    return Verdict {
                        id: 6,
                        outcome: CheckOutcome {
                            name: "learning-speed ordering".into(),
                            status: Status::Fail,
                            detail: format!("{} {}: {e:#}", kind.name(), mode.name()),
                        },
                        elapsed: Duration::ZERO,
                        limit: Duration::from_secs(LIMIT),
                    }
                }
            }
            per_mode[i] += start.elapsed();
        }
        let o = ordering(kind.name(), &summarize(&curves, &ShapingMode::ALL), 300);
        if o.failed() {
            status = Status::Fail;
        }
        parts.push(format!("{} {}", o.status.label(), o.detail.replace("mean cumulative steps at 300: ", &format!("{}: ", kind.name()))));
    }
    let slowest = per_mode.iter().copied().max().unwrap_or_default();
    let times: Vec<String> = ShapingMode::ALL
        .iter()
        .zip(per_mode)
        .map(|(m, t)| format!("{} {:.0}s", m.name(), t.as_secs_f64()))
        .collect();
    parts.push(format!("time per mode: {}", times.join(", ")));
    let v = Verdict {
        id: 6,
        outcome: CheckOutcome {
            name: "learning-speed ordering at episode 300".into(),
            status,
            detail: parts.join("; "),
        },
        elapsed: slowest,
        limit: Duration::from_secs(LIMIT),
    };
    println!("{}", v.line());
    v
}

fn main() -> ExitCode {
    let tmp = tempfile::tempdir().expect("temporary directory");
    let mut verdicts = vec![
        timed(1, 10, || planning(&planning_maps(), None)),
        timed(2, 5, || message_enumeration(50, 2024)),
        timed(3, 30, || gradient_check(None)),
        timed(4, 10, || argmax_invariance(&four_rooms(), 20, 11)),
        timed(5, 5, || telescoping(100, 5)),
        timed(7, 60, || {
            let cfg = ExperimentConfig {
                train: TrainConfig {
                    episodes: 20,
                    ..TrainConfig::default()
                },
                seeds: vec![1],
                ..ExperimentConfig::default()
            };
            determinism(&cfg, tmp.path())
        }),
        timed(8, 120, || degenerate_mix(&four_rooms(), 500, 1)),
    ];
    verdicts.push(learning_speed());
    verdicts.sort_by_key(|v| v.id);
    println!("\nacceptance summary");
    for v in &verdicts {
        println!("{}", v.line());
    }
    let failed = verdicts.iter().filter(|v| !v.passed()).count();
    println!("{} of {} criteria passed", verdicts.len() - failed, verdicts.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
