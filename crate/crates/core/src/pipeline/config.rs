use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::dataset::{BuildSpec, GenderTagConfig};
use crate::eval::{SuiteOptions, MIN_TRIALS};
use crate::nmt::{Hyperparams, ToyLanguageSpec};

pub const CONFIG_VERSION: u32 = 1;

/// Environment variables starting with this prefix override config keys.
///
/// The rest of the name is the lowercased key path with `__` between
/// levels: `GENDERTAG_WORK_DIR=/tmp/w` sets `work_dir`,
/// `GENDERTAG_MODEL__EPOCHS=3` sets `model.epochs`. Values are read as TOML
/// literals and fall back to plain strings.
pub const ENV_PREFIX: &str = "GENDERTAG_";

/// Where the annotated corpus comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DataSource {
    /// Europarl session files under `<europarl_dir>/<lang>/` for both
    /// languages of the pair, resolved against an MEP table.
    Europarl {
        europarl_dir: PathBuf,
        speaker_table: PathBuf,
        #[serde(default)]
        fuzzy: bool,
    },
    /// The synthetic gendered language.
    Toy(ToyLanguageSpec),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BpeOptions {
    pub merges: usize,
    /// One merge list over both sides instead of one per side.
    pub joint: bool,
}

impl Default for BpeOptions {
    fn default() -> Self {
        BpeOptions { merges: crate::bpe::FULL_SCALE_MERGES, joint: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub version: u32,
    pub work_dir: PathBuf,
    pub lang_pair: String,
    pub data: DataSource,
    pub tags: GenderTagConfig,
    pub build: BuildSpec,
    pub bpe: BpeOptions,
    pub model: Hyperparams,
    pub eval: SuiteOptions,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            version: CONFIG_VERSION,
            work_dir: PathBuf::from("work"),
            lang_pair: "EN-FR".into(),
            data: DataSource::Toy(ToyLanguageSpec::default()),
            tags: GenderTagConfig::default(),
            build: BuildSpec::default(),
            bpe: BpeOptions::default(),
            model: Hyperparams::default(),
            eval: SuiteOptions::default(),
        }
    }
}

fn invalid(msg: impl Into<String>) -> PipelineError {
    PipelineError::ConfigInvalid(msg.into())
}

fn env_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn apply_override(table: &mut toml::Table, path: &[&str], value: toml::Value) -> Result<(), PipelineError> {
    let (last, parents) = path.split_last().expect("non-empty key path");
    let mut cur = table;
    for key in parents {
        let entry = cur.entry(key.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| invalid(format!("override path crosses non-table key {key:?}")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

impl PipelineConfig {
    /// Parses TOML text and applies `GENDERTAG_*` overrides from `env`.
    pub fn from_toml_str<I>(text: &str, env: I) -> Result<Self, PipelineError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
        let mut overrides: Vec<(String, String)> = env.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
        overrides.sort();
        for (key, raw) in overrides {
            let path = key[ENV_PREFIX.len()..].to_lowercase();
            let parts: Vec<&str> = path.split("__").collect();
            if parts.iter().any(|p| p.is_empty()) {
                return Err(invalid(format!("malformed override variable {key}")));
            }
            apply_override(&mut table, &parts, env_value(&raw))?;
        }
        toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| invalid(e.to_string()))
    }

    /// Reads a config file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text, std::env::vars())?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.rebase(base);
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.work_dir);
        if let DataSource::Europarl { europarl_dir, speaker_table, .. } = &mut self.data {
            fix(europarl_dir);
            fix(speaker_table);
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// `("en", "fr")` for `"EN-FR"`.
    pub fn languages(&self) -> Result<(String, String), PipelineError> {
        match self.lang_pair.split_once('-') {
            Some((s, t)) if !s.is_empty() && !t.is_empty() && !t.contains('-') => Ok((s.to_lowercase(), t.to_lowercase())),
            _ => Err(invalid(format!("lang_pair {:?} is not of the form SRC-TGT", self.lang_pair))),
        }
    }

    /// Checks values and input paths, then creates the work directory.
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.version != CONFIG_VERSION {
            return Err(invalid(format!("config version {} is not supported (expected {CONFIG_VERSION})", self.version)));
        }
        let (src, tgt) = self.languages()?;
        match &self.data {
            DataSource::Europarl { europarl_dir, speaker_table, .. } => {
                for lang in [&src, &tgt] {
                    let dir = europarl_dir.join(lang);
                    if !dir.is_dir() {
                        return Err(invalid(format!("missing Europarl directory {}", dir.display())));
                    }
                }
                if !speaker_table.is_file() {
                    return Err(invalid(format!("missing speaker table {}", speaker_table.display())));
                }
            }
            DataSource::Toy(spec) => spec.validate().map_err(invalid)?,
        }
        self.tags.validate().map_err(|e| invalid(e.to_string()))?;
        self.model.validate().map_err(invalid)?;
        if self.eval.trials < MIN_TRIALS {
            return Err(invalid(format!("eval.trials must be at least {MIN_TRIALS}")));
        }
        fs::create_dir_all(&self.work_dir).map_err(|e| invalid(format!("cannot create {}: {e}", self.work_dir.display())))?;
        Ok(())
    }
}
