//! Plain-text map format.
//!
//! ```text
//! gamma=0.99 step_reward=-0.01 goal_reward=1 trap_penalty=-1 max_steps=500
//! #####
//! #S.G#
//! #####
//! ```
//!
//! `gamma` and `step_reward` are required; the other header keys are
//! optional. Cells: `#` wall, `.` free, `G` goal, `T` trap, `S` start.

use std::collections::BTreeMap;
use std::fmt::Write;

use super::grid::{Gridworld, WorldParams};
use crate::error::{Error, Result};

pub fn write_map(world: &Gridworld) -> Result<String> {
    let mut penalties = world.traps().values().copied();
    let trap_penalty = penalties.next();
    if let Some(p) = trap_penalty {
        if penalties.any(|q| q != p) {
            return Err(Error::Config("map format needs a single trap penalty".into()));
        }
    }
    let p = world.params();
    let mut out = format!(
        "gamma={} step_reward={} goal_reward={} max_steps={}",
        p.gamma, p.step_reward, p.goal_reward, p.max_episode_steps
    );
    if let Some(tp) = trap_penalty {
        write!(out, " trap_penalty={tp}").unwrap();
    }
    out.push('\n');
    for r in 0..world.height() {
        for c in 0..world.width() {
            let cell = (r, c);
            let ch = if world.is_wall(cell) {
                '#'
            } else if cell == world.goal() {
                'G'
            } else if cell == world.start() {
                'S'
            } else if world.traps().contains_key(&cell) {
                'T'
            } else {
                '.'
            };
            out.push(ch);
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_map(text: &str) -> Result<Gridworld> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end()))
        .filter(|(_, l)| !l.is_empty());
    let (hline, header) = lines.next().ok_or(Error::Map {
        line: 1,
        msg: "empty map".into(),
    })?;

    let mut params = WorldParams::default();
    let mut trap_penalty = -1.0;
    let (mut have_gamma, mut have_step) = (false, false);
    for tok in header.split_whitespace() {
        let (k, v) = tok.split_once('=').ok_or_else(|| Error::Map {
            line: hline,
            msg: format!("expected key=value, got {tok:?}"),
        })?;
        let num = |v: &str| {
            v.parse::<f64>().map_err(|_| Error::Map {
                line: hline,
                msg: format!("bad number for {k}: {v:?}"),
            })
        };
        match k {
            "gamma" => {
                params.gamma = num(v)?;
                have_gamma = true;
            }
            "step_reward" => {
                params.step_reward = num(v)?;
                have_step = true;
            }
            "goal_reward" => params.goal_reward = num(v)?,
            "trap_penalty" => trap_penalty = num(v)?,
            "max_steps" => {
                params.max_episode_steps = v.parse().map_err(|_| Error::Map {
                    line: hline,
                    msg: format!("bad integer for max_steps: {v:?}"),
                })?
            }
            other => {
                return Err(Error::Map {
                    line: hline,
                    msg: format!("unknown header key {other:?}"),
                })
            }
        }
    }
    if !have_gamma || !have_step {
        return Err(Error::Map {
            line: hline,
            msg: "header must set gamma and step_reward".into(),
        });
    }

    let mut width = None;
    let mut walls = Vec::new();
    let (mut start, mut goal) = (None, None);
    let mut traps = BTreeMap::new();
    let mut height = 0;
    for (lineno, row) in lines {
        let w = row.chars().count();
        if *width.get_or_insert(w) != w {
            return Err(Error::Map {
                line: lineno,
                msg: format!("row has {w} cells, expected {}", width.unwrap()),
            });
        }
        for (c, ch) in row.chars().enumerate() {
            let cell = (height, c);
            let dup = |what: &str| Error::Map {
                line: lineno,
                msg: format!("more than one {what}"),
            };
            match ch {
                '#' => {}
                '.' => {}
                'G' => {
                    if goal.replace(cell).is_some() {
                        return Err(dup("goal"));
                    }
                }
                'S' => {
                    if start.replace(cell).is_some() {
                        return Err(dup("start"));
                    }
                }
                'T' => {
                    traps.insert(cell, trap_penalty);
                }
                other => {
                    return Err(Error::Map {
                        line: lineno,
                        msg: format!("unknown cell character {other:?}"),
                    })
                }
            }
            walls.push(ch == '#');
        }
        height += 1;
    }
    let width = width.ok_or(Error::Map {
        line: hline,
        msg: "map has no rows".into(),
    })?;
    let missing = |what: &str| Error::Map {
        line: hline,
        msg: format!("map has no {what}"),
    };
    let start = start.ok_or_else(|| missing("start"))?;
    let goal = goal.ok_or_else(|| missing("goal"))?;
    Gridworld::new(width, height, walls, start, goal, traps, params).map_err(|e| Error::Map {
        line: hline,
        msg: e.to_string(),
    })
}
