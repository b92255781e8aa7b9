//! Flat `key=value` experiment configuration.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use qvlab::algorithms::{CostModel, PartitionScheme};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected key=value, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("bad value for {key}: {value:?}")]
    BadValue { key: String, value: String },
    #[error("{0} must be positive")]
    NotPositive(&'static str),
    #[error("grid points must lie in [0,1] and increase strictly")]
    BadGrid,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum CostSpec {
    Unit,
    Bit { eps: f64 },
}

impl CostSpec {
    pub fn model(self) -> CostModel {
        match self {
            CostSpec::Unit => CostModel::unit(),
            CostSpec::Bit { eps } => CostModel::bit_comparisons_with_eps(eps),
        }
    }
}

impl std::fmt::Display for CostSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CostSpec::Unit => f.write_str("unit"),
            CostSpec::Bit { eps } => write!(f, "bit:{eps}"),
        }
    }
}

impl FromStr for CostSpec {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ConfigError::BadValue { key: "cost".into(), value: s.into() };
        match s.split_once(':') {
            None if s == "unit" => Ok(CostSpec::Unit),
            None if s == "bit" => Ok(CostSpec::Bit { eps: 0.2 }),
            Some(("bit", e)) => {
                let eps: f64 = e.parse().map_err(|_| bad())?;
                if eps > 0.0 && eps < 1.0 {
                    Ok(CostSpec::Bit { eps })
                } else {
                    Err(bad())
                }
            }
            _ => Err(bad()),
        }
    }
}

fn scheme_name(s: PartitionScheme) -> &'static str {
    match s {
        PartitionScheme::Hoare => "hoare",
        PartitionScheme::Lomuto => "lomuto",
        PartitionScheme::NoPartition => "none",
    }
}

pub fn parse_scheme(s: &str) -> Result<PartitionScheme, ConfigError> {
    match s {
        "hoare" => Ok(PartitionScheme::Hoare),
        "lomuto" => Ok(PartitionScheme::Lomuto),
        "none" => Ok(PartitionScheme::NoPartition),
        _ => Err(ConfigError::BadValue { key: "scheme".into(), value: s.into() }),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub n: Vec<usize>,
    #[serde(rename = "K")]
    pub depth: usize,
    pub reps: usize,
    pub grid: Vec<f64>,
    pub cost: CostSpec,
    pub scheme: PartitionScheme,
    pub out: PathBuf,
    pub suites: Vec<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 1,
            n: vec![10_000],
            depth: 4,
            reps: 1_000,
            grid: vec![0.1, 0.3, 0.5, 0.7, 0.9],
            cost: CostSpec::Unit,
            scheme: PartitionScheme::Hoare,
            out: PathBuf::from("out"),
            suites: vec!["all".into()],
        }
    }
}

fn list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, ConfigError> {
    value
        .split(',')
        .map(|x| x.trim().parse().map_err(|_| ConfigError::BadValue { key: key.into(), value: value.into() }))
        .collect()
}

fn one<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::BadValue { key: key.into(), value: value.into() })
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let value = value.trim();
        match key.trim() {
            "seed" => self.seed = one(key, value)?,
            "n" => self.n = list(key, value)?,
            "K" => self.depth = one(key, value)?,
            "reps" => self.reps = one(key, value)?,
            "grid" => self.grid = list(key, value)?,
            "cost" => self.cost = value.parse()?,
            "scheme" => self.scheme = parse_scheme(value)?,
            "out" => self.out = PathBuf::from(value),
            "suite" => self.suites = value.split(',').map(|s| s.trim().to_string()).collect(),
            other => return Err(ConfigError::UnknownKey(other.into())),
        }
        Ok(())
    }

    /// Reads a config file body on top of the defaults. Blank lines and
    /// lines starting with `#` are skipped.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = ExperimentConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax { line: i + 1, text: line.into() })?;
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n.is_empty() || self.n.contains(&0) {
            return Err(ConfigError::NotPositive("n"));
        }
        if self.reps == 0 {
            return Err(ConfigError::NotPositive("reps"));
        }
        let grid_ok = !self.grid.is_empty()
            && self.grid.iter().all(|a| (0.0..=1.0).contains(a))
            && self.grid.windows(2).all(|w| w[0] < w[1]);
        if !grid_ok {
            return Err(ConfigError::BadGrid);
        }
        Ok(())
    }

    /// Canonical file body; `parse(to_text())` returns an equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "n={}", join(&self.n));
        let _ = writeln!(s, "K={}", self.depth);
        let _ = writeln!(s, "reps={}", self.reps);
        let _ = writeln!(s, "grid={}", join(&self.grid));
        let _ = writeln!(s, "cost={}", self.cost);
        let _ = writeln!(s, "scheme={}", scheme_name(self.scheme));
        let _ = writeln!(s, "out={}", self.out.display());
        let _ = writeln!(s, "suite={}", self.suites.join(","));
        s
    }

    /// SHA-256 of the canonical text, hex encoded.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_text().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_lossless() {
        let cfg = ExperimentConfig {
            seed: 7,
            n: vec![10, 1000],
            depth: 6,
            reps: 3,
            grid: vec![0.1, 1.0 / 3.0, 0.9],
            cost: CostSpec::Bit { eps: 0.2 },
            scheme: PartitionScheme::Lomuto,
            out: "runs/a".into(),
            suites: vec!["sandwich".into(), "lomuto".into()],
        };
        let back = ExperimentConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn rejects_invalid_input() {
        assert_eq!(ExperimentConfig::parse("reps=0"), Err(ConfigError::NotPositive("reps")));
        assert_eq!(ExperimentConfig::parse("grid=0.5,1.5"), Err(ConfigError::BadGrid));
        assert!(matches!(ExperimentConfig::parse("color=red"), Err(ConfigError::UnknownKey(_))));
        assert!(matches!(ExperimentConfig::parse("seed"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(ExperimentConfig::parse("cost=bit:2"), Err(ConfigError::BadValue { .. })));
    }

    #[test]
    fn comments_and_overrides() {
        let mut cfg = ExperimentConfig::parse("# campaign\nseed=3\n\nK=5\n").unwrap();
        assert_eq!((cfg.seed, cfg.depth), (3, 5));
        cfg.set("seed", "4").unwrap();
        assert_ne!(cfg.hash(), ExperimentConfig::parse("seed=3\nK=5").unwrap().hash());
    }
}
