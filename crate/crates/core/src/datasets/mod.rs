//! Dataset construction: synthetic glancing data, interaction ingestion and
//! windowing, standardization, batching and context selection.

pub mod batching;
pub mod glancing;
pub mod ingest;
pub mod mock;
pub mod standardize;
pub mod store;
pub mod windowing;

use serde::{Deserialize, Serialize};

use crate::data::SampleTensor;
use crate::error::{Error, Result};

pub use batching::{make_batches, sample_context, validate_batches, ContextRegime, SplitIndices};
pub use glancing::{generate_glancing_dataset, GlanceType, GlancingSequence};
pub use standardize::Standardization;
pub use store::{Dataset, DatasetKind, StoreHeader, LAYOUT_VERSION};
pub use windowing::{
    window_indices, window_interaction, WindowIndex, WindowSteps, WindowingConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Aligned, uniformly sampled cue streams of every member of one group,
/// stored `[frame][participant][dim]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupTimeline {
    pub group_id: String,
    pub split: Split,
    pub sample_rate: f64,
    pub start_frame: i64,
    pub participants: Vec<String>,
    pub dim: usize,
    pub n_frames: usize,
    pub values: Vec<f64>,
}

impl GroupTimeline {
    pub fn frame(&self, f: usize, p: usize) -> &[f64] {
        let base = (f * self.participants.len() + p) * self.dim;
        &self.values[base..base + self.dim]
    }
}

/// One observed/future pair ready for the model, `[participant][step][dim]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: usize,
    pub group_id: String,
    /// Observed window start, in steps from the start of the interaction.
    pub obs_start: i64,
    pub offset: i64,
    pub n_participants: usize,
    pub obs_len: usize,
    pub fut_len: usize,
    pub dim: usize,
    /// Length of the whole interaction in steps.
    pub group_frames: usize,
    pub observed: Vec<f64>,
    pub future: Vec<f64>,
}

/// Packs samples into a dense block; shapes must agree.
pub fn pack<'a>(samples: impl IntoIterator<Item = &'a Sample>) -> Result<SampleTensor> {
    let mut it = samples.into_iter().peekable();
    let first = match it.peek() {
        Some(s) => *s,
        None => return Err(Error::Shape("cannot pack an empty sample list".into())),
    };
    let mut t = SampleTensor::empty(
        first.n_participants,
        first.obs_len,
        first.fut_len,
        first.dim,
    );
    for s in it {
        if (s.n_participants, s.obs_len, s.fut_len, s.dim)
            != (t.n_participants, t.obs_len, t.fut_len, t.dim)
        {
            return Err(Error::Shape(format!(
                "sample {} has shape ({}, {}, {}, {}), batch has ({}, {}, {}, {})",
                s.id,
                s.n_participants,
                s.obs_len,
                s.fut_len,
                s.dim,
                t.n_participants,
                t.obs_len,
                t.fut_len,
                t.dim
            )));
        }
        t.observed.extend_from_slice(&s.observed);
        t.future.extend_from_slice(&s.future);
        t.offsets.push(s.offset);
        t.n_samples += 1;
    }
    Ok(t)
}

/// Packs the samples at `idx`; an empty index list gives an empty block
/// shaped like `like`.
pub fn pack_indices(samples: &[Sample], idx: &[usize], like: &Sample) -> Result<SampleTensor> {
    if idx.is_empty() {
        return Ok(SampleTensor::empty(
            like.n_participants,
            like.obs_len,
            like.fut_len,
            like.dim,
        ));
    }
    pack(idx.iter().map(|&i| &samples[i]))
}
