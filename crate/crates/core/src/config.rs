//! Flat key-value run configuration with section prefixes, environment
//! overrides (`MOLGEN_` prefix, dots become underscores, uppercase) and
//! strict unknown-key rejection.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::chem::{elements, Composition, SplitFractions};
use crate::generate::{GridSpec, SamplerConfig};
use crate::model::conditioning::{ConditionSchema, ConditionSpec, ScalarSpec};
use crate::model::heads::DistanceGrid;
use crate::model::{EncoderConfig, ModelConfig};
use crate::train::TrainConfig;

pub const ENV_PREFIX: &str = "MOLGEN_";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config `{path}`: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("duplicate key `{0}`")]
    Duplicate(String),
    #[error("unknown key `{0}`")]
    Unknown(String),
    #[error("key `{key}`: {msg}")]
    Value { key: String, msg: String },
    #[error("missing required key `{0}`")]
    Missing(String),
    #[error("{0}")]
    Invalid(String),
}

/// Raw parsed key-value view with consumption tracking.
struct KeyValues {
    entries: BTreeMap<String, String>,
    consumed: std::cell::RefCell<std::collections::BTreeSet<String>>,
}

impl KeyValues {
    fn parse(text: &str) -> Result<KeyValues, ConfigError> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: idx + 1,
                text: raw.to_string(),
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if entries.insert(key.clone(), value).is_some() {
                return Err(ConfigError::Duplicate(key));
            }
        }
        Ok(KeyValues {
            entries,
            consumed: Default::default(),
        })
    }

    fn apply_env(&mut self, env: impl Iterator<Item = (String, String)>) {
        let known: Vec<String> = self.entries.keys().cloned().collect();
        for (name, value) in env {
            let Some(stripped) = name.strip_prefix(ENV_PREFIX) else {
                continue;
            };
            // Match against declared keys first; otherwise derive the key
            // by lowercasing and mapping the first underscores to dots.
            let matched = known
                .iter()
                .find(|k| env_name(k) == name)
                .cloned()
                .or_else(|| {
                    let lower = stripped.to_ascii_lowercase();
                    lower.split_once('_').map(|(section, rest)| format!("{section}.{rest}"))
                });
            if let Some(key) = matched {
                self.entries.insert(key, value);
            }
        }
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.consumed.borrow_mut().insert(key.to_string());
        self.entries.get(key).map(|s| s.as_str())
    }

    fn require(&self, key: &str) -> Result<&str, ConfigError> {
        self.get(key).ok_or_else(|| ConfigError::Missing(key.into()))
    }

    fn typed<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError> {
        match self.get(key) {
            None => Ok(default),
            Some(raw) => raw.parse().map_err(|_| ConfigError::Value {
                key: key.into(),
                msg: format!("cannot parse `{raw}`"),
            }),
        }
    }

    fn reject_unknown(&self) -> Result<(), ConfigError> {
        let consumed = self.consumed.borrow();
        for key in self.entries.keys() {
            if !consumed.contains(key) {
                return Err(ConfigError::Unknown(key.clone()));
            }
        }
        Ok(())
    }
}

/// Environment variable name of a config key.
pub fn env_name(key: &str) -> String {
    format!("{ENV_PREFIX}{}", key.replace('.', "_").to_ascii_uppercase())
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub workers: usize,
    pub dataset_path: PathBuf,
    pub validity_filter: bool,
    pub fractions: SplitFractions,
    pub exclude_composition: Option<Composition>,
    pub derive_rel_energy_from: Option<String>,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub sampler: SamplerConfig,
    /// Verbatim config text for the checkpoint snapshot.
    pub snapshot: String,
}

fn parse_widths(raw: &str, key: &str) -> Result<Vec<usize>, ConfigError> {
    raw.split(',')
        .map(|p| {
            p.trim().parse().map_err(|_| ConfigError::Value {
                key: key.into(),
                msg: format!("bad width `{p}`"),
            })
        })
        .collect()
}

fn parse_conditions(kv: &KeyValues) -> Result<ConditionSchema, ConfigError> {
    let mut schema = Vec::new();
    for index in 1..=32 {
        let prefix = format!("condition.{index}");
        let kind_key = format!("{prefix}.kind");
        let Some(kind) = kv.get(&kind_key) else {
            break;
        };
        let kind = kind.to_string();
        let name = kv.require(&format!("{prefix}.name"))?.to_string();
        let mlp_raw = kv.get(&format!("{prefix}.mlp")).unwrap_or("64,64,64").to_string();
        let mlp = parse_widths(&mlp_raw, &format!("{prefix}.mlp"))?;
        let spec = match kind.as_str() {
            "scalar" => ConditionSpec::Scalar {
                unit: kv.get(&format!("{prefix}.unit")).map(|s| s.to_string()),
                spec: ScalarSpec {
                    min: kv.typed(&format!("{prefix}.min"), f64::NAN)?,
                    max: kv.typed(&format!("{prefix}.max"), f64::NAN)?,
                    delta: kv.typed(&format!("{prefix}.delta"), f64::NAN)?,
                    mlp,
                },
                name,
            },
            "bitvector" => ConditionSpec::BitVector {
                length: kv.typed(&format!("{prefix}.length"), 1024usize)?,
                mlp,
                name,
            },
            "composition" => ConditionSpec::Composition {
                embed_dim: kv.typed(&format!("{prefix}.embed_dim"), 16usize)?,
                mlp,
                count: ScalarSpec {
                    min: kv.typed(&format!("{prefix}.count_min"), 0.0)?,
                    max: kv.typed(&format!("{prefix}.count_max"), 35.0)?,
                    delta: kv.typed(&format!("{prefix}.count_delta"), 8.75)?,
                    mlp: parse_widths(
                        kv.get(&format!("{prefix}.count_mlp")).unwrap_or("64,64,64"),
                        &format!("{prefix}.count_mlp"),
                    )?,
                },
                name,
            },
            other => {
                return Err(ConfigError::Value {
                    key: kind_key,
                    msg: format!("unknown condition kind `{other}`"),
                })
            }
        };
        if let ConditionSpec::Scalar { spec, .. } = &spec {
            if !spec.min.is_finite() || !spec.max.is_finite() || !spec.delta.is_finite() {
                return Err(ConfigError::Value {
                    key: prefix,
                    msg: "scalar conditions need min, max and delta".into(),
                });
            }
        }
        schema.push(spec);
    }
    Ok(schema)
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        RunConfig::parse(&text, std::env::vars())
    }

    pub fn parse(
        text: &str,
        env: impl Iterator<Item = (String, String)>,
    ) -> Result<RunConfig, ConfigError> {
        let mut kv = KeyValues::parse(text)?;
        kv.apply_env(env);

        let seed = kv.typed("seed", 0u64)?;
        let out = PathBuf::from(kv.get("out").unwrap_or("out"));
        let workers = kv.typed(
            "workers",
            std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
        )?;
        let dataset_path = PathBuf::from(kv.require("dataset.path")?);
        let validity_filter = kv.typed("dataset.validity_filter", false)?;
        let fractions = SplitFractions::new(
            kv.typed("split.train", 0.8)?,
            kv.typed("split.val", 0.1)?,
            kv.typed("split.test", 0.1)?,
        )
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let exclude_composition = kv
            .get("split.exclude_composition")
            .map(Composition::parse)
            .transpose()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let derive_rel_energy_from = kv
            .get("derive.rel_energy_from")
            .map(|s| s.to_string());

        let element_list = kv.get("model.elements").unwrap_or("H,C,N,O,F").to_string();
        let elements_vec: Vec<u8> = element_list
            .split(',')
            .map(|sym| {
                elements::atomic_number(sym.trim()).ok_or_else(|| ConfigError::Value {
                    key: "model.elements".into(),
                    msg: format!("unknown element `{sym}`"),
                })
            })
            .collect::<Result<_, _>>()?;

        let encoder = EncoderConfig {
            features: kv.typed("encoder.features", 128usize)?,
            interaction_blocks: kv.typed("encoder.blocks", 9usize)?,
            cutoff: kv.typed("encoder.cutoff", 10.0)?,
            rbf_centers: kv.typed("encoder.rbf", 25usize)?,
        };
        let grid = DistanceGrid {
            bins: kv.typed("grid.bins", 300usize)?,
            spacing: kv.typed("grid.spacing", 0.05)?,
        };
        let conditions = parse_conditions(&kv)?;
        let aggregation_widths = parse_widths(
            kv.get("model.aggregation").unwrap_or("128,128,128,128,128"),
            "model.aggregation",
        )?;
        let type_head_hidden = parse_widths(
            kv.get("model.type_hidden").unwrap_or("205,155,105,55"),
            "model.type_hidden",
        )?;
        let dist_head_hidden = parse_widths(
            kv.get("model.dist_hidden").unwrap_or("264,273,282,291"),
            "model.dist_hidden",
        )?;
        let model = ModelConfig {
            elements: elements_vec,
            encoder,
            conditions,
            aggregation_widths,
            type_head_hidden,
            dist_head_hidden,
            grid,
        };
        model
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;

        let train = TrainConfig {
            batch_size: kv.typed("train.batch_size", 5usize)?,
            learning_rate: kv.typed("train.lr", 1e-4)?,
            patience: kv.typed("train.patience", 10usize)?,
            decay_factor: kv.typed("train.decay", 0.5)?,
            stop_lr: kv.typed("train.stop_lr", 1e-6)?,
            gamma_factor: kv.typed("train.gamma_factor", 10.0)?,
            seed,
            max_epochs: kv.typed("train.max_epochs", 10_000usize)?,
            deterministic_ties: kv.typed("train.deterministic_ties", false)?,
        };
        if train.batch_size == 0 {
            return Err(ConfigError::Value {
                key: "train.batch_size".into(),
                msg: "must be positive".into(),
            });
        }

        let sampler = SamplerConfig {
            temperature: kv.typed("sampler.temperature", 0.1)?,
            max_atoms: kv.typed("sampler.max_atoms", 35usize)?,
            seed,
            grid: GridSpec {
                spacing: kv.typed("sampler.spacing", 0.05)?,
                d_min: kv.typed("sampler.d_min", 0.9)?,
                d_max: kv.typed("sampler.d_max", 1.7)?,
            },
        };
        if sampler.temperature <= 0.0 {
            return Err(ConfigError::Value {
                key: "sampler.temperature".into(),
                msg: "must be positive".into(),
            });
        }

        kv.reject_unknown()?;
        Ok(RunConfig {
            seed,
            out,
            workers,
            dataset_path,
            validity_filter,
            fractions,
            exclude_composition,
            derive_rel_energy_from,
            model,
            train,
            sampler,
            snapshot: text.to_string(),
        })
    }
}
