//! Flat key=value experiment configuration (diff-friendly, `#` comments),
//! preset resolution, and the run manifest every command writes next to
//! its outputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use glimpse_core::model::ModelConfig;
use glimpse_core::numerics::AdamConfig;
use glimpse_core::worldgen::TrainConstraint;

use crate::AppError;

/// Fully resolved run settings: config file values overridden by CLI
/// flags, echoed verbatim into the manifest.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub preset: String,
    pub model: ModelConfig,
    pub constraint: bool,
    pub lr: f64,
    pub clip_norm: f64,
    pub threads: usize,
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn preset_model(preset: &str) -> Result<ModelConfig, AppError> {
        match preset {
            "desk" => Ok(ModelConfig::desk()),
            "paper" => Ok(ModelConfig::paper()),
            "tiny" => Ok(ModelConfig::tiny()),
            other => Err(AppError::usage(format!(
                "unknown preset '{other}' (expected desk, paper, or tiny)"
            ))),
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            ..AdamConfig::default()
        }
    }

    pub fn train_constraint(&self) -> Option<TrainConstraint> {
        self.constraint.then(TrainConstraint::default)
    }

    /// Serializes every resolved setting for the manifest.
    pub fn to_key_values(&self) -> Vec<(String, String)> {
        vec![
            ("preset".into(), self.preset.clone()),
            ("seed".into(), self.model.seed.to_string()),
            ("hidden_size".into(), self.model.hidden_size.to_string()),
            ("num_gru_layers".into(), self.model.num_gru_layers.to_string()),
            ("input_dim".into(), self.model.input_dim.to_string()),
            ("output_dim".into(), self.model.output_dim.to_string()),
            ("seq_len".into(), self.model.seq_len.to_string()),
            ("batch_scenes".into(), self.model.batch_scenes.to_string()),
            ("total_batches".into(), self.model.total_batches.to_string()),
            ("constraint".into(), self.constraint.to_string()),
            ("lr".into(), self.lr.to_string()),
            ("clip_norm".into(), self.clip_norm.to_string()),
            ("threads".into(), self.threads.to_string()),
            ("out_dir".into(), self.out_dir.display().to_string()),
        ]
    }
}

/// Parses `key = value` lines; `#` starts a comment, blank lines ignored.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>, AppError> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(AppError::usage(format!(
                "config line {}: expected key=value, got '{}'",
                lineno + 1,
                line
            )));
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

pub fn load_config_file(path: &Path) -> Result<BTreeMap<String, String>, AppError> {
    let text = fs::read_to_string(path).map_err(|e| {
        AppError::usage(format!("cannot read config file {}: {e}", path.display()))
    })?;
    parse_key_values(&text)
}

pub fn parse_field<T: std::str::FromStr>(
    map: &BTreeMap<String, String>,
    key: &str,
) -> Result<Option<T>, AppError> {
    match map.get(key) {
        None => Ok(None),
        Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
            AppError::usage(format!("config key '{key}' has invalid value '{raw}'"))
        }),
    }
}

/// Output root: the `GLIMPSE_OUT` environment variable when set, else the
/// current directory. Explicit absolute paths bypass it.
pub fn resolve_out_dir(flag: Option<&Path>, default_name: &str) -> PathBuf {
    let root = std::env::var_os("GLIMPSE_OUT")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."));
    match flag {
        Some(p) if p.is_absolute() => p.to_path_buf(),
        Some(p) => root.join(p),
        None => root.join(default_name),
    }
}

/// Writes `manifest.txt`: the resolved configuration plus free-form extras
/// (command name, checkpoint paths), one key=value per line.
pub fn write_manifest(
    dir: &Path,
    command: &str,
    entries: &[(String, String)],
) -> Result<(), AppError> {
    fs::create_dir_all(dir)
        .map_err(|e| AppError::runtime(format!("cannot create {}: {e}", dir.display())))?;
    let mut text = String::new();
    let _ = writeln!(text, "command = {command}");
    for (k, v) in entries {
        let _ = writeln!(text, "{k} = {v}");
    }
    fs::write(dir.join("manifest.txt"), text)
        .map_err(|e| AppError::runtime(format!("cannot write manifest: {e}")))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_whitespace() {
        let map = parse_key_values("# header\nseed = 7 # trailing\n\n hidden_size=128\n").unwrap();
        assert_eq!(map.get("seed").unwrap(), "7");
        assert_eq!(map.get("hidden_size").unwrap(), "128");
    }

    #[test]
    fn rejects_lines_without_equals() {
        assert!(parse_key_values("seed 7").is_err());
    }

    #[test]
    fn typed_field_errors_name_the_key() {
        let map = parse_key_values("seed = banana").unwrap();
        let err = parse_field::<u64>(&map, "seed").unwrap_err();
        assert!(err.to_string().contains("seed"));
    }
}
