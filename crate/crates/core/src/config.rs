//! Machine description: how many units of each kind, decoder width, queue
//! depth, memory latencies, and which feed model to run.
//!
//! Config files are `key = value` lines with `#` comments. Any key left
//! out keeps its default, but an `fpus` line replaces the whole default
//! farm, not just the kinds it mentions.

use std::fmt;
use std::path::Path;
use thiserror::Error;

use crate::farm::Interconnect;
use crate::program::FunctionKind;

/// How work reaches the units: decoded-and-pushed, the sequential
/// fetch-style reference machine, or both side by side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    Push,
    Fetch,
    Compare,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Push => "push",
            Mode::Fetch => "fetch",
            Mode::Compare => "compare",
        }
    }

    pub fn parse(s: &str) -> Option<Mode> {
        match s {
            "push" => Some(Mode::Push),
            "fetch" => Some(Mode::Fetch),
            "compare" => Some(Mode::Compare),
            _ => None,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error("cannot open {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimulationConfig {
    /// Farm composition as (kind, unit count), in declaration order; unit
    /// ids number through this list.
    pub fpus: Vec<(FunctionKind, u32)>,
    /// Functions decoded per cycle.
    pub decode_width: u64,
    pub priority_levels: u32,
    /// Local store hit latency in cycles.
    pub hit_latency: u64,
    /// Per-word bus charge on a local store miss.
    pub miss_per_word: u64,
    /// Fixed bus overhead on a local store miss.
    pub bus_overhead: u64,
    /// Per-function fetch/decode latency of the sequential reference
    /// machine.
    pub fetch_latency: u64,
    /// Local store capacity in functions.
    pub local_store_capacity: usize,
    pub mode: Mode,
    /// Refuse programs using a kind with no unit; when off, such programs
    /// stall instead.
    pub strict_kinds: bool,
    /// Reserved for stochastic workload generation; the simulator itself
    /// never draws randomness.
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> SimulationConfig {
        SimulationConfig {
            fpus: vec![
                (FunctionKind::Arithmetic, 2),
                (FunctionKind::Dsp, 2),
                (FunctionKind::Graphics, 1),
                (FunctionKind::StringOps, 1),
                (FunctionKind::Io, 1),
                (FunctionKind::System, 1),
            ],
            decode_width: 8,
            priority_levels: 8,
            hit_latency: 1,
            miss_per_word: 1,
            bus_overhead: 2,
            fetch_latency: 2,
            local_store_capacity: 16,
            mode: Mode::Push,
            strict_kinds: true,
            seed: 0,
        }
    }
}

impl SimulationConfig {
    pub fn total_fpus(&self) -> u32 {
        self.fpus.iter().map(|&(_, n)| n).sum()
    }

    pub fn fpu_count(&self, kind: FunctionKind) -> u32 {
        self.fpus
            .iter()
            .filter(|&&(k, _)| k == kind)
            .map(|&(_, n)| n)
            .sum()
    }

    pub fn interconnect(&self) -> Interconnect {
        Interconnect {
            fixed_overhead: self.bus_overhead,
            per_word_latency: self.miss_per_word,
        }
    }

    pub fn load(path: &Path) -> Result<SimulationConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        SimulationConfig::parse_str(&text)
    }

    pub fn parse_str(text: &str) -> Result<SimulationConfig, ConfigError> {
        let mut config = SimulationConfig::default();
        let mut seen: Vec<String> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let err = |message: String| ConfigError::Line { line, message };
            let (key, value) = content
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| err("expected `key = value`".into()))?;
            if seen.iter().any(|s| s == key) {
                return Err(err(format!("duplicate key `{key}`")));
            }
            seen.push(key.to_string());
            match key {
                "fpus" => config.fpus = parse_fpus(value, line)?,
                "decode_width" => {
                    config.decode_width = parse_number(value, key, line)?;
                    if config.decode_width == 0 {
                        return Err(err("decode_width must be at least 1".into()));
                    }
                }
                "priority_levels" => {
                    config.priority_levels = parse_number::<u32>(value, key, line)?;
                    if config.priority_levels < 2 {
                        return Err(err("priority_levels must be at least 2".into()));
                    }
                }
                "hit_latency" => config.hit_latency = parse_number(value, key, line)?,
                "miss_per_word" => config.miss_per_word = parse_number(value, key, line)?,
                "bus_overhead" => config.bus_overhead = parse_number(value, key, line)?,
                "fetch_latency" => config.fetch_latency = parse_number(value, key, line)?,
                "local_store_capacity" => {
                    config.local_store_capacity = parse_number(value, key, line)?
                }
                "mode" => {
                    config.mode =
                        Mode::parse(value).ok_or_else(|| err(format!("unknown mode `{value}`")))?
                }
                "strict_kinds" => {
                    config.strict_kinds = match value {
                        "true" => true,
                        "false" => false,
                        _ => {
                            return Err(err(format!(
                                "strict_kinds wants true or false, got `{value}`"
                            )))
                        }
                    }
                }
                "seed" => config.seed = parse_number(value, key, line)?,
                _ => return Err(err(format!("unknown key `{key}`"))),
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.total_fpus() == 0 {
            return Err(ConfigError::Invalid(
                "machine needs at least one execution unit".into(),
            ));
        }
        if self.decode_width == 0 {
            return Err(ConfigError::Invalid(
                "decode_width must be at least 1".into(),
            ));
        }
        if self.priority_levels < 2 {
            return Err(ConfigError::Invalid(
                "priority_levels must be at least 2".into(),
            ));
        }
        Ok(())
    }
}

fn parse_number<T: std::str::FromStr>(
    value: &str,
    key: &str,
    line: usize,
) -> Result<T, ConfigError> {
    value.parse::<T>().map_err(|_| ConfigError::Line {
        line,
        message: format!("`{key}` wants an unsigned integer, got `{value}`"),
    })
}

fn parse_fpus(value: &str, line: usize) -> Result<Vec<(FunctionKind, u32)>, ConfigError> {
    let err = |message: String| ConfigError::Line { line, message };
    let mut fpus = Vec::new();
    for part in value.split(',') {
        let part = part.trim();
        let (kind_token, count) = part
            .split_once(':')
            .ok_or_else(|| err(format!("expected `kind:count`, got `{part}`")))?;
        let kind = FunctionKind::from_token(kind_token.trim())
            .ok_or_else(|| err(format!("unknown function kind `{}`", kind_token.trim())))?;
        if fpus.iter().any(|&(k, _)| k == kind) {
            return Err(err(format!("kind `{kind}` listed twice")));
        }
        let count: u32 = count.trim().parse().map_err(|_| {
            err(format!(
                "unit count wants an unsigned integer, got `{}`",
                count.trim()
            ))
        })?;
        fpus.push((kind, count));
    }
    Ok(fpus)
}
