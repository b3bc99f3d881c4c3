//! Synthetic head-rotation ("glancing") sequences: sweeping glances are
//! pristine sinusoid segments, fixating glances hold their value after
//! step 13.

use std::f64::consts::{PI, TAU};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datasets::Sample;
use crate::error::{Error, Result};

pub const SEQUENCE_LEN: usize = 20;
pub const OBS_LEN: usize = 10;
pub const FUT_LEN: usize = 10;
/// Last step before the fixating glance stops moving.
pub const HOLD_FROM: usize = 13;
/// Phases sampled for the fixed evaluation context.
pub const EVAL_CONTEXT_PHASES: usize = 785;
/// Degrees per unit of the normalized angle channel.
pub const DEGREES_PER_UNIT: f64 = 90.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GlanceType {
    TypeI,
    TypeIII,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlancingSequence {
    pub phase_index: usize,
    pub phase: f64,
    pub glance_type: GlanceType,
    pub values: Vec<f64>,
}

fn sweep(phase: f64) -> Vec<f64> {
    (0..SEQUENCE_LEN)
        .map(|n| (n as f64 * (3.0 * PI + phase) / 19.0).sin())
        .collect()
}

fn hold(mut v: Vec<f64>) -> Vec<f64> {
    let held = v[HOLD_FROM];
    v[HOLD_FROM + 1..].iter_mut().for_each(|x| *x = held);
    v
}

/// Number of phases `p * step` with `p = 0, 1, ...` below `2π`.
pub fn phase_count(phase_step: f64) -> Result<usize> {
    if !(phase_step > 0.0) || !phase_step.is_finite() {
        return Err(Error::Config(format!(
            "phase step must be positive, got {phase_step}"
        )));
    }
    let mut n = (TAU / phase_step).floor() as usize;
    while n as f64 * phase_step >= TAU {
        n -= 1;
    }
    while (n + 1) as f64 * phase_step < TAU {
        n += 1;
    }
    Ok(n + 1)
}

/// Both glance types for every phase, phase-major.
pub fn generate_glancing_dataset(phase_step: f64) -> Result<Vec<GlancingSequence>> {
    let n = phase_count(phase_step)?;
    let mut out = Vec::with_capacity(2 * n);
    for p in 0..n {
        let phase = p as f64 * phase_step;
        let v = sweep(phase);
        out.push(GlancingSequence {
            phase_index: p,
            phase,
            glance_type: GlanceType::TypeI,
            values: v.clone(),
        });
        out.push(GlancingSequence {
            phase_index: p,
            phase,
            glance_type: GlanceType::TypeIII,
            values: hold(v),
        });
    }
    Ok(out)
}

/// Mean of the two equally likely futures for a phase.
pub fn expected_future(phase: f64) -> Vec<f64> {
    let a = sweep(phase);
    let b = hold(a.clone());
    (OBS_LEN..SEQUENCE_LEN)
        .map(|i| 0.5 * (a[i] + b[i]))
        .collect()
}

/// Phase indices of the fixed evaluation context, sorted.
pub fn eval_context_phases(n_phases: usize, count: usize, seed: u64) -> Result<Vec<usize>> {
    if count > n_phases {
        return Err(Error::Config(format!(
            "cannot draw {count} context phases from {n_phases}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = sample(&mut rng, n_phases, count).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

impl GlancingSequence {
    pub fn to_sample(&self, id: usize) -> Sample {
        Sample {
            id,
            group_id: "glancing".into(),
            obs_start: id as i64,
            offset: 1,
            n_participants: 1,
            obs_len: OBS_LEN,
            fut_len: FUT_LEN,
            dim: 1,
            group_frames: SEQUENCE_LEN,
            observed: self.values[..OBS_LEN].to_vec(),
            future: self.values[OBS_LEN..].to_vec(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_dataset_size_and_values() {
        let data = generate_glancing_dataset(0.001).unwrap();
        assert_eq!(data.len(), 12568);
        let type1 = data
            .iter()
            .filter(|s| s.glance_type == GlanceType::TypeI)
            .count();
        assert_eq!(type1, 6284);
        assert_eq!(data[0].values[0], 0.0);
        assert!(data[0].values[19].abs() < 1e-12);
        for s in data.iter().filter(|s| s.glance_type == GlanceType::TypeIII) {
            assert!(s.values[14..].iter().all(|&v| v == s.values[13]));
        }
        for pair in data.chunks(2) {
            assert_eq!(pair[0].values[..14], pair[1].values[..14]);
        }
        assert_eq!(data, generate_glancing_dataset(0.001).unwrap());
    }

    #[test]
    fn coarse_step_counts() {
        assert_eq!(phase_count(0.01).unwrap(), 629);
        let brute = (0..).take_while(|&p| p as f64 * 0.01 < TAU).count();
        assert_eq!(brute, 629);
        assert!(phase_count(0.0).is_err());
    }

    #[test]
    fn eval_context_is_seeded() {
        let a = eval_context_phases(6284, EVAL_CONTEXT_PHASES, 7).unwrap();
        assert_eq!(a.len(), 785);
        assert_eq!(
            a,
            eval_context_phases(6284, EVAL_CONTEXT_PHASES, 7).unwrap()
        );
        assert!(a.windows(2).all(|w| w[0] < w[1]));
    }
}
