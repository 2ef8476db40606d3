//! Plain-text `key=value` configuration for scenario and matrix runs.
//!
//! ```text
//! # one scenario
//! strategy_a = A_NO_EM3
//! strategy_b = HONEST
//! seed = 1
//! key_bits = 512
//! timeout_ticks = 10
//! ttp_option = ii
//! ```
//!
//! A matrix file replaces the two strategy keys with comma-separated
//! lists `a_strategies` and `b_strategies`.

use thiserror::Error;

use crate::roles::TtpVerifyOption;
use crate::sim::{ScenarioConfig, Strategy};
use crate::PartyId;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("line {0}: expected key=value")]
    BadLine(usize),
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("duplicate key {0:?}")]
    DuplicateKey(String),
    #[error("bad value for {key}: {reason}")]
    BadValue { key: String, reason: String },
    #[error("missing required key {0:?}")]
    MissingKey(&'static str),
    #[error("strategy {0} does not apply to party {1}")]
    StrategyMismatch(String, PartyId),
    #[error("matrix config selects no scenarios")]
    EmptyMatrix,
}

fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut pairs = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or(ConfigError::BadLine(idx + 1))?;
        let key = key.trim().to_string();
        if pairs.iter().any(|(k, _)| *k == key) {
            return Err(ConfigError::DuplicateKey(key));
        }
        pairs.push((key, value.trim().to_string()));
    }
    Ok(pairs)
}

fn parse_u64(key: &str, value: &str) -> Result<u64, ConfigError> {
    value.parse().map_err(|_| ConfigError::BadValue {
        key: key.to_string(),
        reason: format!("{value:?} is not a non-negative integer"),
    })
}

fn parse_strategy(key: &str, value: &str, party: PartyId) -> Result<Strategy, ConfigError> {
    let strategy: Strategy = value.parse().map_err(|reason| ConfigError::BadValue {
        key: key.to_string(),
        reason,
    })?;
    if !strategy.applies_to(party) {
        return Err(ConfigError::StrategyMismatch(value.to_string(), party));
    }
    Ok(strategy)
}

fn parse_ttp_option(value: &str) -> Result<TtpVerifyOption, ConfigError> {
    match value {
        "i" => Ok(TtpVerifyOption::HashCompare),
        "ii" => Ok(TtpVerifyOption::DecryptAndVerify),
        other => Err(ConfigError::BadValue {
            key: "ttp_option".to_string(),
            reason: format!("{other:?} is not 'i' or 'ii'"),
        }),
    }
}

/// Parses a single-scenario config. `strategy_a` and `strategy_b` are
/// required; everything else falls back to the defaults in `base`.
pub fn parse_scenario_config(
    text: &str,
    base: &ScenarioConfig,
) -> Result<ScenarioConfig, ConfigError> {
    let mut config = base.clone();
    let mut saw_a = false;
    let mut saw_b = false;
    for (key, value) in parse_pairs(text)? {
        match key.as_str() {
            "strategy_a" => {
                config.strategy_a = parse_strategy(&key, &value, PartyId::A)?;
                saw_a = true;
            }
            "strategy_b" => {
                config.strategy_b = parse_strategy(&key, &value, PartyId::B)?;
                saw_b = true;
            }
            "seed" => config.seed = parse_u64(&key, &value)?,
            "key_bits" => config.key_bits = parse_u64(&key, &value)?,
            "timeout_ticks" => config.timeout_ticks = parse_u64(&key, &value)?,
            "ttp_option" => config.ttp_option = parse_ttp_option(&value)?,
            _ => return Err(ConfigError::UnknownKey(key)),
        }
    }
    if !saw_a {
        return Err(ConfigError::MissingKey("strategy_a"));
    }
    if !saw_b {
        return Err(ConfigError::MissingKey("strategy_b"));
    }
    Ok(config)
}

/// Strategy lists for a restricted matrix run.
#[derive(Debug, Clone)]
pub struct MatrixSpec {
    pub a_strategies: Vec<Strategy>,
    pub b_strategies: Vec<Strategy>,
    pub base: ScenarioConfig,
}

/// Parses a matrix config. Omitted strategy lists default to the full
/// catalog for the side; an explicitly empty list is rejected.
pub fn parse_matrix_config(text: &str, base: &ScenarioConfig) -> Result<MatrixSpec, ConfigError> {
    let mut spec = MatrixSpec {
        a_strategies: Strategy::FOR_A.to_vec(),
        b_strategies: Strategy::FOR_B.to_vec(),
        base: base.clone(),
    };
    for (key, value) in parse_pairs(text)? {
        match key.as_str() {
            "a_strategies" => {
                spec.a_strategies = parse_strategy_list(&key, &value, PartyId::A)?;
            }
            "b_strategies" => {
                spec.b_strategies = parse_strategy_list(&key, &value, PartyId::B)?;
            }
            "seed" => spec.base.seed = parse_u64(&key, &value)?,
            "key_bits" => spec.base.key_bits = parse_u64(&key, &value)?,
            "timeout_ticks" => spec.base.timeout_ticks = parse_u64(&key, &value)?,
            "ttp_option" => spec.base.ttp_option = parse_ttp_option(&value)?,
            _ => return Err(ConfigError::UnknownKey(key)),
        }
    }
    if spec.a_strategies.is_empty() || spec.b_strategies.is_empty() {
        return Err(ConfigError::EmptyMatrix);
    }
    Ok(spec)
}

fn parse_strategy_list(
    key: &str,
    value: &str,
    party: PartyId,
) -> Result<Vec<Strategy>, ConfigError> {
    let mut out = Vec::new();
    for item in value.split(',') {
        let item = item.trim();
        if item.is_empty() {
            continue;
        }
        out.push(parse_strategy(key, item, party)?);
    }
    Ok(out)
}
