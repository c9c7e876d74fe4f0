use std::fmt;
use std::path::{Path, PathBuf};

use vinrs_core::env::{four_rooms_traps_with, four_rooms_with, Gridworld, WorldParams};
use vinrs_core::rl::{GraphReset, ShapingMode, TrainConfig};

/// Malformed or inconsistent experiment configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub msg: String,
}

impl ConfigError {
    fn at(line: usize, msg: impl Into<String>) -> Self {
        Self {
            line: Some(line),
            msg: msg.into(),
        }
    }

    pub fn new(msg: impl Into<String>) -> Self {
        Self {
            line: None,
            msg: msg.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "config line {l}: {}", self.msg),
            None => write!(f, "config: {}", self.msg),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnvKind {
    FourRooms,
    FourRoomsTraps,
}

impl EnvKind {
    pub fn name(self) -> &'static str {
        match self {
            EnvKind::FourRooms => "four_rooms",
            EnvKind::FourRoomsTraps => "four_rooms_traps",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "four_rooms" => Some(EnvKind::FourRooms),
            "four_rooms_traps" => Some(EnvKind::FourRoomsTraps),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvSpec {
    pub kind: EnvKind,
    pub n_traps: usize,
    pub trap_penalty: f64,
    pub trap_seed: u64,
    pub params: WorldParams,
}

impl Default for EnvSpec {
    fn default() -> Self {
        Self {
            kind: EnvKind::FourRooms,
            n_traps: 8,
            trap_penalty: -1.0,
            trap_seed: 7,
            params: WorldParams::default(),
        }
    }
}

impl EnvSpec {
    pub fn named(kind: EnvKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn build(&self) -> Result<Gridworld, ConfigError> {
        match self.kind {
            EnvKind::FourRooms => Ok(four_rooms_with(self.params)),
            EnvKind::FourRoomsTraps => {
                four_rooms_traps_with(self.n_traps, self.trap_penalty, self.trap_seed, self.params)
                    .map_err(|e| ConfigError::new(e.to_string()))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub env: EnvSpec,
    /// Shared by every mode; `shaping_mode` is overridden per run.
    pub train: TrainConfig,
    pub modes: Vec<ShapingMode>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Worker threads for the (mode, seed) runs.
    pub threads: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            env: EnvSpec::default(),
            train: TrainConfig::default(),
            modes: ShapingMode::ALL.to_vec(),
            seeds: (1..=10).collect(),
            output_dir: PathBuf::from("results"),
            threads: 1,
        }
    }
}

fn parse_num<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse()
        .map_err(|_| ConfigError::at(line, format!("{key}: cannot parse {v:?}")))
}

fn parse_seeds(line: usize, v: &str) -> Result<Vec<u64>, ConfigError> {
    let mut out = Vec::new();
    for part in v.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..=") {
            let (a, b): (u64, u64) = (parse_num(line, "seeds", a.trim())?, parse_num(line, "seeds", b.trim())?);
            if a > b {
                return Err(ConfigError::at(line, format!("seeds: empty range {part}")));
            }
            out.extend(a..=b);
        } else {
            out.push(parse_num(line, "seeds", part)?);
        }
    }
    if out.is_empty() {
        return Err(ConfigError::at(line, "seeds: no seeds given"));
    }
    Ok(out)
}

fn parse_modes(line: usize, v: &str) -> Result<Vec<ShapingMode>, ConfigError> {
    let modes: Vec<ShapingMode> = v
        .split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| ShapingMode::parse(p).ok_or_else(|| ConfigError::at(line, format!("modes: unknown mode {p:?}"))))
        .collect::<Result<_, _>>()?;
    if modes.is_empty() {
        return Err(ConfigError::at(line, "modes: no modes given"));
    }
    Ok(modes)
}

fn parse_reset(line: usize, v: &str) -> Result<GraphReset, ConfigError> {
    match v {
        "every_round" => Ok(GraphReset::EveryRound),
        "every_episode" => Ok(GraphReset::EveryEpisode),
        "never" => Ok(GraphReset::Never),
        _ => Err(ConfigError::at(line, format!("graph_reset: unknown policy {v:?}"))),
    }
}

impl ExperimentConfig {
    /// Parses `key = value` lines; `#` starts a comment. Relative output
    /// directories are kept as written.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut c = Self::default();
        let mut seen = std::collections::BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, v) = body
                .split_once('=')
                .ok_or_else(|| ConfigError::at(line, format!("expected key = value, found {body:?}")))?;
            let (key, v) = (key.trim(), v.trim());
            if !seen.insert(key.to_string()) {
                return Err(ConfigError::at(line, format!("duplicate key {key}")));
            }
            let t = &mut c.train;
            match key {
                "env" => {
                    c.env.kind = EnvKind::parse(v).ok_or_else(|| ConfigError::at(line, format!("env: unknown world {v:?}")))?
                }
                "n_traps" => c.env.n_traps = parse_num(line, key, v)?,
                "trap_penalty" => c.env.trap_penalty = parse_num(line, key, v)?,
                "trap_seed" => c.env.trap_seed = parse_num(line, key, v)?,
                "step_reward" => c.env.params.step_reward = parse_num(line, key, v)?,
                "goal_reward" => c.env.params.goal_reward = parse_num(line, key, v)?,
                "max_steps" => c.env.params.max_episode_steps = parse_num(line, key, v)?,
                "modes" => c.modes = parse_modes(line, v)?,
                "seeds" => c.seeds = parse_seeds(line, v)?,
                "output_dir" => c.output_dir = PathBuf::from(v),
                "threads" => c.threads = parse_num(line, key, v)?,
                "episodes" => t.episodes = parse_num(line, key, v)?,
                "alpha_mix" => t.alpha_mix = parse_num(line, key, v)?,
                "gamma" => {
                    t.gamma = parse_num(line, key, v)?;
                    c.env.params.gamma = t.gamma;
                }
                "lambda" => t.lambda = parse_num(line, key, v)?,
                "actor_lr" => t.actor_lr = parse_num(line, key, v)?,
                "critic_lr" => t.critic_lr = parse_num(line, key, v)?,
                "epsilon" => t.epsilon = parse_num(line, key, v)?,
                "k_train" => t.k_train = parse_num(line, key, v)?,
                "temperature" => t.temperature = parse_num(line, key, v)?,
                "graph_reset" => t.graph_reset = parse_reset(line, v)?,
                "k_iterations" => t.vin.k_iterations = parse_num(line, key, v)?,
                "h_channels" => t.vin.h_channels = parse_num(line, key, v)?,
                "kernel_size" => t.vin.kernel_size = parse_num(line, key, v)?,
                "hidden_units" => t.vin.hidden_units = parse_num(line, key, v)?,
                "eta" => t.vin.eta = parse_num(line, key, v)?,
                "train_period" => t.vin.train_period = parse_num(line, key, v)?,
                "learning_rate" => t.vin.learning_rate = parse_num(line, key, v)?,
                _ => return Err(ConfigError::at(line, format!("unknown key {key:?}"))),
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.train.validate().map_err(|e| ConfigError::new(e.to_string()))?;
        if self.train.episodes == 0 {
            return Err(ConfigError::new("episodes must be positive"));
        }
        if self.threads == 0 {
            return Err(ConfigError::new("threads must be positive"));
        }
        if self.env.params.gamma != self.train.gamma {
            return Err(ConfigError::new("world and training discount differ"));
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return Err(ConfigError::new("seeds must be distinct"));
        }
        let mut modes: Vec<&str> = self.modes.iter().map(|m| m.name()).collect();
        modes.sort_unstable();
        modes.dedup();
        if modes.len() != self.modes.len() {
            return Err(ConfigError::new("modes must be distinct"));
        }
        self.env.build().map(|_| ())
    }

    /// Adds `offset` to every seed.
    pub fn offset_seeds(&mut self, offset: i64) -> Result<(), ConfigError> {
        for s in &mut self.seeds {
            *s = s
                .checked_add_signed(offset)
                .ok_or_else(|| ConfigError::new(format!("seed {s} with offset {offset} is out of range")))?;
        }
        Ok(())
    }
}

/// Reads the CI sharding offset; unset means 0.
pub fn seed_offset_from_env() -> Result<i64, ConfigError> {
    match std::env::var("VINRS_SEED_OFFSET") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| ConfigError::new(format!("VINRS_SEED_OFFSET must be an integer, got {v:?}"))),
        Err(std::env::VarError::NotPresent) => Ok(0),
        Err(e) => Err(ConfigError::new(format!("VINRS_SEED_OFFSET: {e}"))),
    }
}
