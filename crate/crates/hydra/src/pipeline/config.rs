//! Flat `key = value` run configuration files.
//!
//! Lines are `key = value` pairs; `#` starts a comment. Values from the
//! file override whatever the flags set. Unknown keys are errors so typos
//! do not silently fall back to defaults.

use std::path::{Path, PathBuf};

use crate::datamodel::TaskId;
use crate::error::{HydraError, Result};
use crate::llm::HttpConfig;
use crate::pipeline::{AdapterScoring, BackendConfig, Mode, RunConfig, SimulatorKind};

fn parse_value<T: std::str::FromStr>(key: &str, value: &str, line: usize) -> Result<T> {
    value.parse().map_err(|_| HydraError::Parse {
        line,
        msg: format!("invalid value {value:?} for key {key}"),
    })
}

fn parse_bool(key: &str, value: &str, line: usize) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(HydraError::Parse {
            line,
            msg: format!("invalid boolean {value:?} for key {key}"),
        }),
    }
}

fn http_config(cfg: &mut RunConfig) -> &mut HttpConfig {
    if !matches!(cfg.backend, BackendConfig::Http(_)) {
        cfg.backend = BackendConfig::Http(HttpConfig::default());
    }
    match &mut cfg.backend {
        BackendConfig::Http(http) => http,
        _ => unreachable!(),
    }
}

fn simulator_config(cfg: &mut RunConfig) -> (&mut SimulatorKind, &mut f64) {
    if !matches!(cfg.backend, BackendConfig::Simulator { .. }) {
        cfg.backend = BackendConfig::default();
    }
    match &mut cfg.backend {
        BackendConfig::Simulator { kind, icl_weight } => (kind, icl_weight),
        _ => unreachable!(),
    }
}

/// Apply one parsed `key = value` pair onto the config.
fn apply_pair(cfg: &mut RunConfig, key: &str, value: &str, line: usize) -> Result<()> {
    match key {
        "task" => cfg.task = TaskId::parse(value)?,
        "mode" => cfg.mode = Mode::parse(value)?,
        "data" => cfg.data_path = Some(PathBuf::from(value)),
        "out" => cfg.out_dir = PathBuf::from(value),
        "seed" => cfg.seed = parse_value(key, value, line)?,
        "n-train" => cfg.n_train = Some(parse_value(key, value, line)?),
        "n-test" => cfg.n_test = Some(parse_value(key, value, line)?),
        "synth-users" => cfg.synth_users = parse_value(key, value, line)?,
        "synth-history" => cfg.synth_history = parse_value(key, value, line)?,
        "m" => cfg.rerank.m = parse_value(key, value, line)?,
        "n-retrieve" => cfg.rerank.n = parse_value(key, value, line)?,
        "k" => cfg.rerank.k = parse_value(key, value, line)?,
        "b" => cfg.adapter.b = parse_value(key, value, line)?,
        "adapter-temperature" => cfg.adapter.temperature = parse_value(key, value, line)?,
        "max-tokens" => cfg.adapter.max_tokens = parse_value(key, value, line)?,
        "label-temperature" => cfg.label_temperature = parse_value(key, value, line)?,
        "rouge-threshold" => cfg.rouge_threshold = parse_value(key, value, line)?,
        "reranker-lr" => cfg.reranker_train.learning_rate = parse_value(key, value, line)?,
        "reranker-epochs" => cfg.reranker_train.epochs = parse_value(key, value, line)?,
        "reranker-batch" => cfg.reranker_train.batch_size = parse_value(key, value, line)?,
        "reranker-clip" => cfg.reranker_train.clip = Some(parse_value(key, value, line)?),
        "adapter-lr" => cfg.adapter_train.learning_rate = parse_value(key, value, line)?,
        "adapter-epochs" => cfg.adapter_train.epochs = parse_value(key, value, line)?,
        "adapter-batch" => cfg.adapter_train.batch_size = parse_value(key, value, line)?,
        "adapter-clip" => cfg.adapter_train.clip = Some(parse_value(key, value, line)?),
        "no-personal-reranker" => cfg.ablation.no_personal_reranker = parse_bool(key, value, line)?,
        "no-personal-adapter" => cfg.ablation.no_personal_adapter = parse_bool(key, value, line)?,
        "adapter-scoring" => {
            cfg.adapter_scoring = match value {
                "learned" => AdapterScoring::Learned,
                "oracle-upper-bound" | "oracle" => AdapterScoring::OracleUpperBound,
                _ => {
                    return Err(HydraError::Parse {
                        line,
                        msg: format!("unknown adapter scoring {value:?}"),
                    })
                }
            }
        }
        "backend" => match value {
            "simulator" => {
                if !matches!(cfg.backend, BackendConfig::Simulator { .. }) {
                    cfg.backend = BackendConfig::default();
                }
            }
            "http" => {
                let _ = http_config(cfg);
            }
            _ => {
                return Err(HydraError::Parse {
                    line,
                    msg: format!("unknown backend {value:?}"),
                })
            }
        },
        "base-url" => http_config(cfg).base_url = value.to_string(),
        "model" => http_config(cfg).model = value.to_string(),
        "http-attempts" => http_config(cfg).max_attempts = parse_value(key, value, line)?,
        "http-backoff-ms" => http_config(cfg).initial_backoff_ms = parse_value(key, value, line)?,
        "http-timeout-s" => http_config(cfg).timeout_secs = parse_value(key, value, line)?,
        "simulator" => {
            let (kind, _) = simulator_config(cfg);
            *kind = match value {
                "auto" => SimulatorKind::Auto,
                "templated" => SimulatorKind::Templated,
                "label-sampler" => SimulatorKind::LabelSampler,
                _ => {
                    return Err(HydraError::Parse {
                        line,
                        msg: format!("unknown simulator kind {value:?}"),
                    })
                }
            };
        }
        "icl-weight" => {
            let parsed = parse_value(key, value, line)?;
            let (_, icl_weight) = simulator_config(cfg);
            *icl_weight = parsed;
        }
        "cache" => cfg.cache_dir = Some(PathBuf::from(value)),
        "cache-temp0-http" => cfg.cache_temp0_http = parse_bool(key, value, line)?,
        "in-flight" => cfg.in_flight = parse_value(key, value, line)?,
        "hash-dim" => cfg.encoder.hash_dim = parse_value(key, value, line)?,
        "hidden-dim" => cfg.encoder.hidden_dim = parse_value(key, value, line)?,
        "ngram-max" => cfg.encoder.ngram_max = parse_value(key, value, line)?,
        _ => {
            return Err(HydraError::Parse {
                line,
                msg: format!("unknown config key {key:?}"),
            })
        }
    }
    Ok(())
}

/// Apply one `key = value` override outside a file context (CLI `--set`).
pub fn apply_config_pair(cfg: &mut RunConfig, key: &str, value: &str) -> Result<()> {
    apply_pair(cfg, key, value, 0)
}

/// Parse a config file and apply every pair onto `cfg`, overriding values
/// set by flags.
pub fn apply_config_file(cfg: &mut RunConfig, path: &Path) -> Result<()> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        HydraError::Config(format!("cannot read config file {}: {e}", path.display()))
    })?;
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(HydraError::Parse {
                line: line_no,
                msg: format!("expected key = value, got {line:?}"),
            });
        };
        apply_pair(cfg, key.trim(), value.trim(), line_no)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn parse(content: &str) -> Result<RunConfig> {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        write!(file, "{content}").unwrap();
        let mut cfg = RunConfig::default();
        apply_config_file(&mut cfg, file.path())?;
        Ok(cfg)
    }

    #[test]
    fn parses_core_keys() {
        let cfg = parse(
            "task = lamp-4\n\
             mode = rag  # retrieval baseline\n\
             seed = 99\n\
             k = 2\n\
             b = 4\n\
             no-personal-adapter = true\n",
        )
        .unwrap();
        assert_eq!(cfg.task, TaskId::Lamp4);
        assert_eq!(cfg.mode, Mode::Rag);
        assert_eq!(cfg.seed, 99);
        assert_eq!(cfg.rerank.k, 2);
        assert_eq!(cfg.adapter.b, 4);
        assert!(cfg.ablation.no_personal_adapter);
        assert!(!cfg.ablation.no_personal_reranker);
    }

    #[test]
    fn http_keys_switch_backend() {
        let cfg = parse("backend = http\nbase-url = http://localhost:9100\nmodel = local-model\n")
            .unwrap();
        match cfg.backend {
            BackendConfig::Http(http) => {
                assert_eq!(http.base_url, "http://localhost:9100");
                assert_eq!(http.model, "local-model");
            }
            other => panic!("unexpected backend {other:?}"),
        }
    }

    #[test]
    fn simulator_keys() {
        let cfg = parse("simulator = templated\nicl-weight = 0.5\n").unwrap();
        match cfg.backend {
            BackendConfig::Simulator { kind, icl_weight } => {
                assert_eq!(kind, SimulatorKind::Templated);
                assert_eq!(icl_weight, 0.5);
            }
            other => panic!("unexpected backend {other:?}"),
        }
    }

    #[test]
    fn unknown_key_is_an_error_with_line() {
        let err = parse("task = lamp-3\nwat = 4\n").unwrap_err();
        match err {
            HydraError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn malformed_line_is_an_error() {
        assert!(parse("just words\n").is_err());
        assert!(parse("seed = not-a-number\n").is_err());
    }
}
