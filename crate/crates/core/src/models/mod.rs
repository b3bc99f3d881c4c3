//! Process models: the group-flattened baselines and the social processes.

pub mod attention;
pub mod config;
pub mod decoder;
pub mod process;

pub use config::{
    AblationFlags, AttentionKind, EncoderKind, Family, FeatureLayout, ModelConfig, Paths, Variant,
};
pub use process::{
    canonical_order, ForwardOptions, ForwardOutput, Gaussian, PathKind, ProcessModel, ZDraw,
};
