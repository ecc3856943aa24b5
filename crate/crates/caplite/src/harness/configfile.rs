//! Flat key = value configuration files mapping the model and training
//! field names one to one. File values override the desk defaults; CLI
//! flags override file values.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{AttentionMode, BottleneckMode, ModelConfig};
use crate::training::{RewardMetric, TrainConfig};

/// Everything the CLI needs: structural and loop settings together.
#[derive(Clone, Debug)]
pub struct AppConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

/// Small dimensions that keep end-to-end runs interactive. `vocab_size`
/// starts at 0 and is set from the subword vocabulary where one is loaded.
pub fn desk_defaults() -> AppConfig {
    AppConfig {
        model: ModelConfig {
            d: 32,
            h: 64,
            v_dim: 64,
            vocab_size: 0,
            max_len: 20,
            ..ModelConfig::default()
        },
        train: TrainConfig {
            learning_rate: 3e-3,
            batch_size: 32,
            ..TrainConfig::default()
        },
    }
}

/// The full-scale operating point: wide dims, deep bottleneck, tied output.
pub fn full_scale_defaults() -> AppConfig {
    AppConfig {
        model: ModelConfig {
            vocab_size: 5066,
            ..ModelConfig::default()
        },
        train: TrainConfig::default(),
    }
}

/// Number of merge rounds the desk-scale subword learner uses.
pub const DESK_BPE_MERGES: usize = 200;

fn parse<V: std::str::FromStr>(key: &str, value: &str, line: usize) -> Result<V> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("line {line}: cannot parse {key} value {value:?}")))
}

fn apply_key(config: &mut AppConfig, key: &str, value: &str, line: usize) -> Result<()> {
    match key {
        "d" => config.model.d = parse(key, value, line)?,
        "h" => config.model.h = parse(key, value, line)?,
        "v_dim" => config.model.v_dim = parse(key, value, line)?,
        "vocab_size" => config.model.vocab_size = parse(key, value, line)?,
        "attention_mode" => {
            config.model.attention_mode = match value {
                "pooled" => AttentionMode::Pooled,
                "mha" => AttentionMode::Mha,
                other => {
                    return Err(Error::Config(format!(
                        "line {line}: attention_mode must be pooled or mha, got {other:?}"
                    )))
                }
            }
        }
        "mha_heads" => config.model.mha_heads = parse(key, value, line)?,
        "mha_dq" => {
            config.model.mha_dq = if value == "none" {
                None
            } else {
                Some(parse(key, value, line)?)
            }
        }
        "mha_kv_rows" => config.model.mha_kv_rows = parse(key, value, line)?,
        "mha_kv_dim" => config.model.mha_kv_dim = parse(key, value, line)?,
        "bottleneck_mode" => {
            config.model.bottleneck_mode = match value {
                "linear" => BottleneckMode::Linear,
                "deep_gru" => BottleneckMode::DeepGru,
                other => {
                    return Err(Error::Config(format!(
                        "line {line}: bottleneck_mode must be linear or deep_gru, got {other:?}"
                    )))
                }
            }
        }
        "tie_weights" => config.model.tie_weights = parse(key, value, line)?,
        "max_len" => config.model.max_len = parse(key, value, line)?,
        "dropout_p" => config.model.dropout_p = parse(key, value, line)?,
        "width_multiplier" => config.model.width_multiplier = parse(key, value, line)?,
        "learning_rate" => config.train.learning_rate = parse(key, value, line)?,
        "batch_size" => config.train.batch_size = parse(key, value, line)?,
        "max_epochs" => config.train.max_epochs = parse(key, value, line)?,
        "patience_epochs" => config.train.patience_epochs = parse(key, value, line)?,
        "rl_samples" => config.train.rl_samples = parse(key, value, line)?,
        "rl_reward_metric" => {
            config.train.rl_reward_metric = match value {
                "cider_d" => RewardMetric::CiderD,
                "bleu4" => RewardMetric::Bleu4,
                other => {
                    return Err(Error::Config(format!(
                        "line {line}: rl_reward_metric must be cider_d or bleu4, got {other:?}"
                    )))
                }
            }
        }
        "seed" => config.train.seed = parse(key, value, line)?,
        other => {
            return Err(Error::Config(format!(
                "line {line}: unknown configuration key {other:?}"
            )))
        }
    }
    Ok(())
}

/// Apply `key = value` lines on top of `config`. Blank lines and lines
/// starting with `#` are skipped.
pub fn apply_config_text(config: &mut AppConfig, text: &str) -> Result<()> {
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!(
                "line {}: expected key = value, got {line:?}",
                i + 1
            ))
        })?;
        apply_key(config, key.trim(), value.trim(), i + 1)?;
    }
    Ok(())
}

/// Desk defaults overridden by the given file.
pub fn load_config_file(path: &Path) -> Result<AppConfig> {
    let text = fs::read_to_string(path)?;
    let mut config = desk_defaults();
    apply_config_text(&mut config, &text)?;
    Ok(config)
}
