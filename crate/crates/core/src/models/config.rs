//! Model variants, configuration and presets.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// Group-flattened neural process baselines (NP, ANP).
    Np,
    /// Social processes (SP, ASP).
    Sp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    Mlp,
    Gru,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttentionKind {
    None,
    Dot,
    Multihead,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Paths {
    #[serde(rename = "latent")]
    Latent,
    #[serde(rename = "latent+det")]
    LatentDet,
}

impl Paths {
    pub fn has_det(self) -> bool {
        self == Paths::LatentDet
    }
}

impl FromStr for Paths {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "latent" => Ok(Paths::Latent),
            "latent+det" => Ok(Paths::LatentDet),
            _ => Err(Error::Config(format!(
                "unknown paths `{s}`, expected `latent` or `latent+det`"
            ))),
        }
    }
}

impl fmt::Display for Paths {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Paths::Latent => "latent",
            Paths::LatentDet => "latent+det",
        })
    }
}

/// How per-step feature vectors are laid out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureLayout {
    /// Head and body pose plus speaking status, 15 dims.
    Behavior,
    /// Unstructured real features (e.g. the synthetic glancing data).
    Generic,
}

/// Architecture family plus encoder kind and attention, e.g. `asp-gru-dot`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Variant {
    pub family: Family,
    pub encoder_kind: EncoderKind,
    pub attention: AttentionKind,
}

impl Variant {
    pub const ALL: [&'static str; 9] = [
        "np",
        "anp-dot",
        "anp-multihead",
        "sp-mlp",
        "sp-gru",
        "asp-mlp-dot",
        "asp-mlp-multihead",
        "asp-gru-dot",
        "asp-gru-multihead",
    ];
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split('-').collect();
        let attention = |a: &str| match a {
            "dot" => Ok(AttentionKind::Dot),
            "multihead" => Ok(AttentionKind::Multihead),
            _ => Err(()),
        };
        let kind = |k: &str| match k {
            "mlp" => Ok(EncoderKind::Mlp),
            "gru" => Ok(EncoderKind::Gru),
            _ => Err(()),
        };
        let parsed = match parts.as_slice() {
            ["np"] => Ok((Family::Np, EncoderKind::Mlp, AttentionKind::None)),
            ["anp", a] => attention(a).map(|a| (Family::Np, EncoderKind::Mlp, a)),
            ["sp", k] => kind(k).map(|k| (Family::Sp, k, AttentionKind::None)),
            ["asp", k, a] => kind(k).and_then(|k| attention(a).map(|a| (Family::Sp, k, a))),
            _ => Err(()),
        };
        parsed
            .map(|(family, encoder_kind, attention)| Variant {
                family,
                encoder_kind,
                attention,
            })
            .map_err(|_| {
                Error::Config(format!(
                    "unknown variant `{s}`, expected one of {}",
                    Variant::ALL.join(", ")
                ))
            })
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.encoder_kind {
            EncoderKind::Mlp => "mlp",
            EncoderKind::Gru => "gru",
        };
        let att = match self.attention {
            AttentionKind::None => None,
            AttentionKind::Dot => Some("dot"),
            AttentionKind::Multihead => Some("multihead"),
        };
        match (self.family, att) {
            (Family::Np, None) => write!(f, "np"),
            (Family::Np, Some(a)) => write!(f, "anp-{a}"),
            (Family::Sp, None) => write!(f, "sp-{kind}"),
            (Family::Sp, Some(a)) => write!(f, "asp-{kind}-{a}"),
        }
    }
}

/// Ablation switches applied on top of a variant.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationFlags {
    pub no_pool: bool,
    pub pool_last_only: bool,
    pub no_det_decoding: bool,
    pub shared_social_encoders: bool,
    pub unshared_social_encoders: bool,
}

impl AblationFlags {
    pub const NAMES: [&'static str; 5] = [
        "no_pool",
        "pool_oT",
        "no_det_decoding",
        "unshared_social_encoders",
        "shared_social_encoders",
    ];

    pub fn set(&mut self, name: &str) -> Result<()> {
        match name {
            "no_pool" => self.no_pool = true,
            "pool_oT" => self.pool_last_only = true,
            "no_det_decoding" => self.no_det_decoding = true,
            "shared_social_encoders" => self.shared_social_encoders = true,
            "unshared_social_encoders" => self.unshared_social_encoders = true,
            _ => {
                return Err(Error::Config(format!(
                    "unknown ablation flag `{name}`, expected one of {}",
                    Self::NAMES.join(", ")
                )))
            }
        }
        Ok(())
    }

    pub fn any(&self) -> bool {
        self.no_pool
            || self.pool_last_only
            || self.no_det_decoding
            || self.shared_social_encoders
            || self.unshared_social_encoders
    }
}

/// Full architecture description of a process model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub family: Family,
    pub encoder_kind: EncoderKind,
    pub attention: AttentionKind,
    pub paths: Paths,
    pub layout: FeatureLayout,
    pub data_dim: usize,
    /// Participants per sample; the group-flattened baselines need it fixed.
    pub n_participants: usize,
    pub obs_len: usize,
    pub fut_len: usize,
    pub seq_layers: usize,
    pub seq_hidden: usize,
    pub pooler_layers: usize,
    pub pooler_hidden: usize,
    pub pooler_out: usize,
    pub z_layers: usize,
    pub z_hidden: usize,
    pub rep_dim: usize,
    pub attn_heads: usize,
    pub attn_qk_dim: usize,
    pub dropout: f64,
    pub no_pool: bool,
    pub pool_last_only: bool,
    pub deterministic_decoding: bool,
    pub share_social_encoders: bool,
    pub teacher_forcing: bool,
    pub std_floor: f64,
}

impl ModelConfig {
    pub fn variant(&self) -> Variant {
        Variant {
            family: self.family,
            encoder_kind: self.encoder_kind,
            attention: self.attention,
        }
    }

    /// Hyperparameters used for the conversation data.
    pub fn haggling(variant: Variant, paths: Paths, obs_len: usize, fut_len: usize) -> Self {
        let (seq_layers, seq_hidden, dropout) = match (variant.family, variant.encoder_kind) {
            (Family::Np, _) => (2, 416, 0.25),
            (Family::Sp, EncoderKind::Mlp) => (2, 64, 0.25),
            (Family::Sp, EncoderKind::Gru) => (1, 320, 0.0),
        };
        Self {
            family: variant.family,
            encoder_kind: variant.encoder_kind,
            attention: variant.attention,
            paths,
            layout: FeatureLayout::Behavior,
            data_dim: 15,
            n_participants: 3,
            obs_len,
            fut_len,
            seq_layers,
            seq_hidden,
            pooler_layers: 2,
            pooler_hidden: 64,
            pooler_out: 32,
            z_layers: 2,
            z_hidden: 64,
            rep_dim: 64,
            attn_heads: 8,
            attn_qk_dim: 32,
            dropout,
            no_pool: false,
            pool_last_only: false,
            deterministic_decoding: variant.family == Family::Sp,
            share_social_encoders: false,
            teacher_forcing: false,
            std_floor: 1e-4,
        }
    }

    /// Small models for the synthetic glancing task: one participant, no
    /// pooling, 32-wide layers.
    pub fn glancing(variant: Variant, paths: Paths) -> Self {
        let mut cfg = Self::haggling(variant, paths, 10, 10);
        cfg.layout = FeatureLayout::Generic;
        cfg.data_dim = 1;
        cfg.n_participants = 1;
        cfg.seq_hidden = 32;
        cfg.pooler_hidden = 32;
        cfg.pooler_out = 32;
        cfg.z_hidden = 32;
        cfg.rep_dim = 32;
        cfg.dropout = 0.0;
        cfg.no_pool = variant.family == Family::Sp;
        cfg
    }

    /// Tiny social model for tests.
    pub fn tiny_social(kind: EncoderKind, layout: FeatureLayout, data_dim: usize) -> Self {
        let variant = Variant {
            family: Family::Sp,
            encoder_kind: kind,
            attention: AttentionKind::None,
        };
        let mut cfg = Self::haggling(variant, Paths::Latent, 3, 2);
        cfg.layout = layout;
        cfg.data_dim = data_dim;
        cfg.seq_layers = 1;
        cfg.seq_hidden = 6;
        cfg.pooler_hidden = 5;
        cfg.pooler_out = 4;
        cfg.z_hidden = 5;
        cfg.rep_dim = 4;
        cfg.attn_heads = 2;
        cfg.attn_qk_dim = 3;
        cfg.dropout = 0.0;
        cfg
    }

    /// Applies ablation switches; rejects switches that do not apply.
    pub fn with_flags(mut self, flags: AblationFlags) -> Result<Self> {
        if self.family == Family::Np && flags.any() {
            return Err(Error::Config(format!(
                "ablation flags apply only to social process variants, not `{}`",
                self.variant()
            )));
        }
        self.no_pool |= flags.no_pool;
        self.pool_last_only |= flags.pool_last_only;
        if flags.no_det_decoding {
            self.deterministic_decoding = false;
        }
        if flags.shared_social_encoders && flags.unshared_social_encoders {
            return Err(Error::Config(
                "shared_social_encoders and unshared_social_encoders are mutually exclusive".into(),
            ));
        }
        if flags.shared_social_encoders {
            self.share_social_encoders = true;
        }
        if flags.unshared_social_encoders {
            self.share_social_encoders = false;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let v = self.variant();
        if self.family == Family::Np {
            if self.encoder_kind != EncoderKind::Mlp {
                return bad(format!(
                    "`{v}`: the group-flattened baselines use MLP encoders"
                ));
            }
            if self.no_pool
                || self.pool_last_only
                || self.deterministic_decoding
                || self.share_social_encoders
            {
                return bad(format!(
                    "`{v}`: pooling, deterministic decoding and encoder sharing exist only in social processes"
                ));
            }
        }
        if self.attention != AttentionKind::None && !self.paths.has_det() {
            return bad(format!(
                "`{v}`: attention needs the deterministic path (latent+det)"
            ));
        }
        if self.no_pool && self.pool_last_only {
            return bad("no_pool and pool_oT are mutually exclusive".into());
        }
        if self.layout == FeatureLayout::Behavior && self.data_dim != 15 {
            return bad(format!(
                "behavior layout has 15 dims, got {}",
                self.data_dim
            ));
        }
        if self.rep_dim == 0 || !self.rep_dim.is_multiple_of(2) {
            return bad(format!(
                "rep_dim must be positive and even, got {}",
                self.rep_dim
            ));
        }
        for (name, v) in [
            ("data_dim", self.data_dim),
            ("n_participants", self.n_participants),
            ("obs_len", self.obs_len),
            ("fut_len", self.fut_len),
            ("seq_layers", self.seq_layers),
            ("seq_hidden", self.seq_hidden),
            ("pooler_layers", self.pooler_layers),
            ("pooler_hidden", self.pooler_hidden),
            ("pooler_out", self.pooler_out),
            ("z_hidden", self.z_hidden),
            ("attn_heads", self.attn_heads),
            ("attn_qk_dim", self.attn_qk_dim),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        if !(self.std_floor > 0.0) {
            return bad(format!(
                "std_floor must be positive, got {}",
                self.std_floor
            ));
        }
        Ok(())
    }
}
