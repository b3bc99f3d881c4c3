//! Sliding observed/future windows over a group timeline.

use serde::{Deserialize, Serialize};

use crate::data::{GroupSample, ParticipantSequence};
use crate::datasets::{GroupTimeline, Sample};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowingConfig {
    /// Seconds.
    pub obs_len: f64,
    /// Seconds.
    pub fut_len: f64,
    pub overlap_fraction: f64,
    /// Seconds.
    pub max_offset: f64,
    /// Hz.
    pub sample_rate: f64,
}

impl Default for WindowingConfig {
    fn default() -> Self {
        Self {
            obs_len: 2.0,
            fut_len: 2.0,
            overlap_fraction: 0.8,
            max_offset: 5.0,
            sample_rate: 10.0,
        }
    }
}

/// Window geometry in steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSteps {
    pub obs: usize,
    pub fut: usize,
    pub stride: usize,
    pub max_offset: usize,
}

/// Round half up.
pub fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor().max(0.0) as usize
}

impl WindowingConfig {
    pub fn steps(&self) -> Result<WindowSteps> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.sample_rate > 0.0) {
            return bad(format!(
                "sample_rate must be positive, got {}",
                self.sample_rate
            ));
        }
        if !(self.obs_len > 0.0) || !(self.fut_len > 0.0) {
            return bad("obs_len and fut_len must be positive".into());
        }
        if !(self.max_offset >= 0.0) {
            return bad(format!(
                "max_offset must be non-negative, got {}",
                self.max_offset
            ));
        }
        if !(0.0..1.0).contains(&self.overlap_fraction) {
            return bad(format!(
                "overlap_fraction must lie in [0, 1), got {}",
                self.overlap_fraction
            ));
        }
        let obs = round_half_up(self.obs_len * self.sample_rate);
        let fut = round_half_up(self.fut_len * self.sample_rate);
        if obs == 0 || fut == 0 {
            return bad("windows shorter than one step".into());
        }
        let stride = round_half_up(obs as f64 * (1.0 - self.overlap_fraction)).max(1);
        let max_offset = round_half_up(self.max_offset * self.sample_rate);
        Ok(WindowSteps {
            obs,
            fut,
            stride,
            max_offset,
        })
    }
}

/// One observed/future pair as timeline indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WindowIndex {
    pub obs_start: usize,
    pub obs_len: usize,
    pub fut_start: usize,
    pub fut_len: usize,
}

impl WindowIndex {
    /// `f1 - oT` in steps.
    pub fn offset(&self) -> i64 {
        self.fut_start as i64 - (self.obs_start + self.obs_len - 1) as i64
    }
}

/// Every observed window paired with every future window whose offset lies
/// in `[1, max_offset]`, ordered by observed start, then offset.
pub fn window_indices(n_frames: usize, steps: WindowSteps) -> Vec<WindowIndex> {
    let mut out = Vec::new();
    let mut start = 0;
    while start + steps.obs + steps.fut <= n_frames {
        let o_t = start + steps.obs - 1;
        for offset in 1..=steps.max_offset {
            let f1 = o_t + offset;
            if f1 + steps.fut > n_frames {
                break;
            }
            out.push(WindowIndex {
                obs_start: start,
                obs_len: steps.obs,
                fut_start: f1,
                fut_len: steps.fut,
            });
        }
        start += steps.stride;
    }
    out
}

impl GroupTimeline {
    /// Materializes one window as a model-ready sample.
    pub fn sample(&self, id: usize, w: &WindowIndex) -> Sample {
        let n = self.participants.len();
        let mut observed = Vec::with_capacity(n * w.obs_len * self.dim);
        let mut future = Vec::with_capacity(n * w.fut_len * self.dim);
        for p in 0..n {
            for f in w.obs_start..w.obs_start + w.obs_len {
                observed.extend_from_slice(self.frame(f, p));
            }
            for f in w.fut_start..w.fut_start + w.fut_len {
                future.extend_from_slice(self.frame(f, p));
            }
        }
        Sample {
            id,
            group_id: self.group_id.clone(),
            obs_start: w.obs_start as i64,
            offset: w.offset(),
            n_participants: n,
            obs_len: w.obs_len,
            fut_len: w.fut_len,
            dim: self.dim,
            group_frames: self.n_frames,
            observed,
            future,
        }
    }

    fn sequence(&self, p: usize, start: usize, len: usize) -> ParticipantSequence {
        let mut values = Vec::with_capacity(len * self.dim);
        for f in start..start + len {
            values.extend_from_slice(self.frame(f, p));
        }
        ParticipantSequence {
            participant_id: self.participants[p].clone(),
            timestamps: (start..start + len)
                .map(|f| self.start_frame + f as i64)
                .collect(),
            values,
            dim: self.dim,
        }
    }
}

/// Windows of a timeline as [`GroupSample`]s.
pub fn window_interaction(
    timeline: &GroupTimeline,
    cfg: &WindowingConfig,
) -> Result<Vec<GroupSample>> {
    let steps = cfg.steps()?;
    Ok(window_indices(timeline.n_frames, steps)
        .into_iter()
        .map(|w| GroupSample {
            group_id: timeline.group_id.clone(),
            observed: (0..timeline.participants.len())
                .map(|p| timeline.sequence(p, w.obs_start, w.obs_len))
                .collect(),
            future: (0..timeline.participants.len())
                .map(|p| timeline.sequence(p, w.fut_start, w.fut_len))
                .collect(),
            offset_steps: w.offset(),
        })
        .collect())
}
