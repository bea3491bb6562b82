use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use super::HarnessError;
use crate::agent::ddqn::DdqnConfig;
use crate::agent::ddsac::DdsacConfig;
use crate::agent::ppo::PpoConfig;
use crate::agent::Algorithm;
use crate::env::EnvConfig;

/// Independent randomness streams derived from one run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedStream {
    Environment = 1,
    Agent = 2,
    Evaluation = 3,
}

/// SplitMix64 of `seed + stream · 0x9E3779B97F4A7C15`.
pub fn split_seed(seed: u64, stream: SeedStream) -> u64 {
    let mut z = seed.wrapping_add((stream as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Everything a training invocation needs. Defaults reproduce the
/// published setup; a config file and then command-line flags override
/// individual keys.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub case_path: PathBuf,
    pub algorithm: Algorithm,
    pub episodes: usize,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    /// Worker threads for multi-seed runs; `None` uses the available cores.
    pub threads: Option<usize>,
    pub env: EnvConfig,
    pub ddsac: DdsacConfig,
    pub ddqn: DdqnConfig,
    pub ppo: PpoConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            case_path: PathBuf::new(),
            algorithm: Algorithm::Ddsac,
            episodes: 200,
            seeds: vec![1],
            out_dir: PathBuf::from("runs"),
            threads: None,
            env: EnvConfig::default(),
            ddsac: DdsacConfig::default(),
            ddqn: DdqnConfig::default(),
            ppo: PpoConfig::default(),
        }
    }
}

fn config_err(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

fn set_field<T: Serialize + DeserializeOwned>(
    target: &mut T,
    section: &str,
    field: &str,
    value: Value,
) -> Result<(), HarnessError> {
    let mut obj = match serde_json::to_value(&*target) {
        Ok(Value::Object(m)) => m,
        _ => return Err(config_err(format!("section `{section}` is not a map"))),
    };
    if !obj.contains_key(field) {
        return Err(config_err(format!("unknown key `{section}.{field}`")));
    }
    obj.insert(field.to_string(), value);
    *target = serde_json::from_value(Value::Object(obj))
        .map_err(|e| config_err(format!("bad value for `{section}.{field}`: {e}")))?;
    Ok(())
}

fn parse_seeds(value: &Value) -> Result<Vec<u64>, HarnessError> {
    let bad = || config_err("`seeds` must be a list of non-negative integers");
    match value {
        Value::Array(items) => items.iter().map(|v| v.as_u64().ok_or_else(bad)).collect(),
        Value::Number(n) => Ok(vec![n.as_u64().ok_or_else(bad)?]),
        Value::String(s) => s
            .split(',')
            .map(|p| p.trim().parse::<u64>().map_err(|_| bad()))
            .collect(),
        _ => Err(bad()),
    }
}

impl RunConfig {
    /// Defaults overlaid with a JSON document of keys such as
    /// `"episodes"`, `"env.horizon"` or `"ddsac.lr"`. A section may also
    /// be given as a nested object.
    pub fn from_json_str(text: &str) -> Result<Self, HarnessError> {
        let doc: Map<String, Value> = serde_json::from_str(text)
            .map_err(|e| config_err(format!("config is not a JSON object: {e}")))?;
        let mut config = RunConfig::default();
        for (key, value) in doc {
            config.set(&key, value)?;
        }
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    /// Sets one key; `raw` is read as JSON and falls back to a plain string.
    pub fn set_str(&mut self, key: &str, raw: &str) -> Result<(), HarnessError> {
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        self.set(key, value)
    }

    pub fn set(&mut self, key: &str, value: Value) -> Result<(), HarnessError> {
        if let Some((section, field)) = key.split_once('.') {
            return match section {
                "env" => set_field(&mut self.env, section, field, value),
                "ddsac" => set_field(&mut self.ddsac, section, field, value),
                "ddqn" => set_field(&mut self.ddqn, section, field, value),
                "ppo" => set_field(&mut self.ppo, section, field, value),
                _ => Err(config_err(format!("unknown section `{section}`"))),
            };
        }
        match (key, value) {
            ("env" | "ddsac" | "ddqn" | "ppo", Value::Object(fields)) => {
                for (field, v) in fields {
                    self.set(&format!("{key}.{field}"), v)?;
                }
                Ok(())
            }
            ("case", Value::String(s)) => {
                self.case_path = PathBuf::from(s);
                Ok(())
            }
            ("out", Value::String(s)) => {
                self.out_dir = PathBuf::from(s);
                Ok(())
            }
            ("algo" | "algorithm", Value::String(s)) => {
                self.algorithm = s.parse().map_err(config_err)?;
                Ok(())
            }
            ("episodes", v) => {
                self.episodes = v
                    .as_u64()
                    .ok_or_else(|| config_err("`episodes` must be a positive integer"))?
                    as usize;
                Ok(())
            }
            ("threads", v) => {
                self.threads = Some(
                    v.as_u64()
                        .ok_or_else(|| config_err("`threads` must be a positive integer"))?
                        as usize,
                );
                Ok(())
            }
            ("seeds", v) => {
                self.seeds = parse_seeds(&v)?;
                Ok(())
            }
            (k, _) if ["case", "out", "algo", "algorithm"].contains(&k) => {
                Err(config_err(format!("`{k}` must be a string")))
            }
            (k, _) => Err(config_err(format!("unknown key `{k}`"))),
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.episodes == 0 {
            return Err(config_err("episodes must be at least 1"));
        }
        if self.seeds.is_empty() {
            return Err(config_err("at least one seed is required"));
        }
        let mut seen = HashSet::new();
        for s in &self.seeds {
            if !seen.insert(s) {
                return Err(config_err(format!("seed {s} is listed more than once")));
            }
        }
        if self.threads == Some(0) {
            return Err(config_err("threads must be positive"));
        }
        self.env.validate().map_err(|e| config_err(e.to_string()))?;
        let agent = match self.algorithm {
            Algorithm::Ddsac => self.ddsac.validate(),
            Algorithm::Ddqn => self.ddqn.validate(),
            Algorithm::Ppo => self.ppo.validate(),
        };
        agent.map_err(|e| config_err(e.to_string()))
    }

    /// Environment settings for one run.
    pub fn env_for_seed(&self, seed: u64) -> EnvConfig {
        EnvConfig {
            seed: split_seed(seed, SeedStream::Environment),
            ..self.env.clone()
        }
    }
}
