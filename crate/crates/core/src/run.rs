//! Flat run configuration: a preset plus per-field overrides of the model
//! and training settings.
//!
//! ```toml
//! variant = "sp-gru"
//! paths = "latent"
//! preset = "haggling"
//! flags = ["no_pool"]
//! data = "prepared/train.jsonl"
//! learning_rate = 1e-4
//! seq_hidden = 128
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::datasets::Sample;
use crate::error::{Error, Result};
use crate::models::{AblationFlags, FeatureLayout, ModelConfig, Paths, Variant};
use crate::training::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Full-size models for the conversation data.
    Haggling,
    /// 32-wide single-person models for the glancing data.
    Glancing,
    /// Tiny models and a few batches, for pipeline checks.
    Smoke,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "haggling" => Ok(Preset::Haggling),
            "glancing" => Ok(Preset::Glancing),
            "smoke" => Ok(Preset::Smoke),
            _ => Err(Error::Config(format!(
                "unknown preset `{s}`, expected haggling, glancing or smoke"
            ))),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Haggling => "haggling",
            Preset::Glancing => "glancing",
            Preset::Smoke => "smoke",
        })
    }
}

const RUN_KEYS: [&str; 6] = ["variant", "paths", "preset", "flags", "data", "val_data"];

/// Model keys filled in from the data unless given explicitly.
const DATA_KEYS: [&str; 5] = ["layout", "data_dim", "n_participants", "obs_len", "fut_len"];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub variant: Variant,
    pub paths: Paths,
    pub preset: Preset,
    pub flags: AblationFlags,
    pub flag_names: Vec<String>,
    pub data: PathBuf,
    pub val_data: Option<PathBuf>,
    pub train: TrainConfig,
    model_overrides: toml::Table,
}

fn to_table<T: Serialize>(v: &T) -> Result<toml::Table> {
    match toml::Value::try_from(v) {
        Ok(toml::Value::Table(t)) => Ok(t),
        Ok(_) => Err(Error::Config(
            "settings did not serialize to a table".into(),
        )),
        Err(e) => Err(Error::Config(e.to_string())),
    }
}

fn from_table<T: for<'de> Deserialize<'de>>(t: toml::Table) -> Result<T> {
    toml::Value::Table(t)
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(e.to_string()))
}

fn model_preset(preset: Preset, variant: Variant, paths: Paths) -> ModelConfig {
    match preset {
        Preset::Haggling => ModelConfig::haggling(variant, paths, 20, 20),
        Preset::Glancing => ModelConfig::glancing(variant, paths),
        Preset::Smoke => {
            let mut c = ModelConfig::haggling(variant, paths, 20, 20);
            c.seq_layers = 1;
            c.seq_hidden = 16;
            c.pooler_hidden = 8;
            c.pooler_out = 8;
            c.z_hidden = 16;
            c.rep_dim = 16;
            c.attn_heads = 2;
            c.attn_qk_dim = 8;
            c
        }
    }
}

fn train_preset(preset: Preset, model: &ModelConfig) -> TrainConfig {
    match preset {
        Preset::Haggling => TrainConfig::for_model(model),
        Preset::Glancing => TrainConfig::glancing(),
        Preset::Smoke => TrainConfig::smoke(),
    }
}

impl RunConfig {
    /// Parses a run file; relative data paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let take_str = |t: &mut toml::Table, k: &str| -> Result<Option<String>> {
            match t.remove(k) {
                None => Ok(None),
                Some(toml::Value::String(s)) => Ok(Some(s)),
                Some(_) => Err(Error::Config(format!("`{k}` must be a string"))),
            }
        };
        let variant: Variant = take_str(&mut table, "variant")?
            .ok_or_else(|| Error::Config("missing `variant`".into()))?
            .parse()?;
        let paths: Paths = take_str(&mut table, "paths")?
            .as_deref()
            .unwrap_or("latent")
            .parse()?;
        let preset: Preset = take_str(&mut table, "preset")?
            .as_deref()
            .unwrap_or("haggling")
            .parse()?;
        let data = base.join(
            take_str(&mut table, "data")?.ok_or_else(|| Error::Config("missing `data`".into()))?,
        );
        let val_data = take_str(&mut table, "val_data")?.map(|p| base.join(p));
        let flag_names: Vec<String> = match table.remove("flags") {
            None => Vec::new(),
            Some(toml::Value::Array(a)) => a
                .into_iter()
                .map(|v| match v {
                    toml::Value::String(s) => Ok(s),
                    _ => Err(Error::Config("`flags` must be a list of strings".into())),
                })
                .collect::<Result<_>>()?,
            Some(_) => Err(Error::Config("`flags` must be a list of strings".into()))?,
        };
        let mut flags = AblationFlags::default();
        for f in &flag_names {
            flags.set(f)?;
        }

        let base_model = model_preset(preset, variant, paths);
        let mut train_table = to_table(&train_preset(preset, &base_model))?;
        let model_keys = to_table(&base_model)?;
        let mut model_overrides = toml::Table::new();
        for (k, v) in table {
            if train_table.contains_key(&k) {
                train_table.insert(k, v);
            } else if model_keys.contains_key(&k) {
                if ["family", "encoder_kind", "attention", "paths"].contains(&k.as_str()) {
                    return Err(Error::Config(format!(
                        "`{k}` is set through `variant`/`paths`"
                    )));
                }
                model_overrides.insert(k, v);
            } else {
                return Err(Error::Config(format!("unknown configuration key `{k}`")));
            }
        }
        let train: TrainConfig = from_table(train_table)?;
        train.validate()?;
        let cfg = Self {
            variant,
            paths,
            preset,
            flags,
            flag_names,
            data,
            val_data,
            train,
            model_overrides,
        };
        // reject bad combinations before any data is read
        cfg.model_config(None)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Model configuration; shape fields come from `data` (layout and first
    /// sample) unless overridden.
    pub fn model_config(&self, data: Option<(FeatureLayout, &Sample)>) -> Result<ModelConfig> {
        let mut table = to_table(&model_preset(self.preset, self.variant, self.paths))?;
        if let Some((layout, s)) = data {
            let derived = [
                ("layout", to_value(&layout)?),
                ("data_dim", toml::Value::Integer(s.dim as i64)),
                (
                    "n_participants",
                    toml::Value::Integer(s.n_participants as i64),
                ),
                ("obs_len", toml::Value::Integer(s.obs_len as i64)),
                ("fut_len", toml::Value::Integer(s.fut_len as i64)),
            ];
            for (k, v) in derived {
                debug_assert!(DATA_KEYS.contains(&k));
                table.insert(k.into(), v);
            }
        }
        for (k, v) in &self.model_overrides {
            table.insert(k.clone(), v.clone());
        }
        let cfg: ModelConfig = from_table(table)?;
        cfg.with_flags(self.flags)
    }

    /// Canonical flat rendering of every setting.
    pub fn to_toml(&self, model: &ModelConfig) -> Result<String> {
        let mut t = toml::Table::new();
        t.insert(
            "variant".into(),
            toml::Value::String(self.variant.to_string()),
        );
        t.insert("paths".into(), toml::Value::String(self.paths.to_string()));
        t.insert(
            "preset".into(),
            toml::Value::String(self.preset.to_string()),
        );
        t.insert(
            "flags".into(),
            toml::Value::Array(
                self.flag_names
                    .iter()
                    .cloned()
                    .map(toml::Value::String)
                    .collect(),
            ),
        );
        t.insert(
            "data".into(),
            toml::Value::String(self.data.display().to_string()),
        );
        if let Some(v) = &self.val_data {
            t.insert(
                "val_data".into(),
                toml::Value::String(v.display().to_string()),
            );
        }
        for (k, v) in to_table(&self.train)? {
            t.insert(k, v);
        }
        for (k, v) in to_table(model)? {
            if !["family", "encoder_kind", "attention", "paths"].contains(&k.as_str()) {
                t.insert(k, v);
            }
        }
        debug_assert!(RUN_KEYS
            .iter()
            .all(|k| *k == "val_data" || t.contains_key(*k)));
        toml::to_string(&t).map_err(|e| Error::Config(e.to_string()))
    }
}

fn to_value<T: Serialize>(v: &T) -> Result<toml::Value> {
    toml::Value::try_from(v).map_err(|e| Error::Config(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_and_unknown_keys() {
        let cfg = RunConfig::parse(
            "variant = \"sp-gru\"\npreset = \"smoke\"\ndata = \"d.jsonl\"\nlearning_rate = 0.01\nseq_hidden = 7\nflags = [\"no_pool\"]\n",
            Path::new("/x"),
        )
        .unwrap();
        assert_eq!(cfg.train.learning_rate, 0.01);
        assert_eq!(cfg.data, PathBuf::from("/x/d.jsonl"));
        let m = cfg.model_config(None).unwrap();
        assert_eq!(m.seq_hidden, 7);
        assert!(m.no_pool);

        let err = RunConfig::parse(
            "variant = \"np\"\ndata = \"d\"\nbogus = 1\n",
            Path::new("."),
        )
        .unwrap_err();
        assert!(err.to_string().contains("bogus"));
        let err = RunConfig::parse(
            "variant = \"np\"\ndata = \"d\"\nflags = [\"no_pool\"]\n",
            Path::new("."),
        );
        assert!(err.is_err());
    }

    #[test]
    fn rendering_round_trips() {
        let cfg = RunConfig::parse(
            "variant = \"asp-gru-dot\"\npaths = \"latent+det\"\ndata = \"d\"\n",
            Path::new("/r"),
        )
        .unwrap();
        let m = cfg.model_config(None).unwrap();
        let text = cfg.to_toml(&m).unwrap();
        let again = RunConfig::parse(&text, Path::new("/elsewhere")).unwrap();
        assert_eq!(again.model_config(None).unwrap(), m);
        assert_eq!(again.train, cfg.train);
    }
}
