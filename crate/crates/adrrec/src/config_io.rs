//! JSON configuration: fail-closed parsing with key paths, and the echoed
//! effective configuration.

use std::fs;
use std::path::Path;

use adrrec_core::TrainConfig;

use crate::error::{AppError, AppResult};

pub fn parse_config(text: &str) -> AppResult<TrainConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: TrainConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        AppError::Config(format!("{path}: {}", e.into_inner()))
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> AppResult<TrainConfig> {
    let text = fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    parse_config(&text)
}

/// Pretty JSON with every field materialized.
pub fn effective_config(cfg: &TrainConfig) -> String {
    let mut s = serde_json::to_string_pretty(cfg).expect("config serializes");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_default() {
        let cfg = parse_config("{}").unwrap();
        assert_eq!(cfg, TrainConfig::default());
        assert_eq!(parse_config(&effective_config(&cfg)).unwrap(), cfg);
        assert!(effective_config(&cfg).contains("\"sigma_init\""));
    }

    #[test]
    fn rejects_bad_input_with_key_path() {
        let err = parse_config(r#"{"lambda": 1.5}"#).unwrap_err().to_string();
        assert!(err.contains("lambda"), "{err}");
        let err = parse_config(r#"{"mode": "x-y"}"#).unwrap_err().to_string();
        assert!(err.contains("mode"), "{err}");
        let err = parse_config(r#"{"lnsr": {"sigma": 1}}"#).unwrap_err().to_string();
        assert!(err.contains("lnsr"), "{err}");
        let err = parse_config(r#"{"eval": {"negatives": "many"}}"#).unwrap_err().to_string();
        assert!(err.contains("eval.negatives"), "{err}");
        assert!(matches!(parse_config(r#"{"d_model": 64, "bogus": 1}"#), Err(AppError::Config(_))));
    }
}
