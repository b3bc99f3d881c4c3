//! Cue vectors, participant windows, group samples and context/target splits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Pose, Quaternion};

/// Number of real dimensions in a flattened [`BehaviorVector`].
pub const BEHAVIOR_DIM: usize = 15;

/// Canonical index table of the flattened behavior layout.
pub mod layout {
    use std::ops::Range;

    pub const HEAD_LOC: Range<usize> = 0..3;
    pub const HEAD_QUAT: Range<usize> = 3..7;
    pub const BODY_LOC: Range<usize> = 7..10;
    pub const BODY_QUAT: Range<usize> = 10..14;
    pub const SPEAKING: usize = 14;

    /// Dimensions that are standardized (locations).
    pub const LOCATION_DIMS: [usize; 6] = [0, 1, 2, 7, 8, 9];
}

/// One participant's cues at one timestep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BehaviorVector {
    pub head: Pose,
    pub body: Pose,
    /// 0.0 or 1.0
    pub speaking: f64,
}

impl BehaviorVector {
    pub fn flatten(&self) -> [f64; BEHAVIOR_DIM] {
        let mut out = [0.0; BEHAVIOR_DIM];
        out[layout::HEAD_LOC].copy_from_slice(&self.head.location);
        out[layout::HEAD_QUAT].copy_from_slice(&self.head.orientation.to_array());
        out[layout::BODY_LOC].copy_from_slice(&self.body.location);
        out[layout::BODY_QUAT].copy_from_slice(&self.body.orientation.to_array());
        out[layout::SPEAKING] = self.speaking;
        out
    }

    pub fn unflatten(v: &[f64]) -> Result<Self> {
        if v.len() != BEHAVIOR_DIM {
            return Err(Error::Shape(format!(
                "behavior vector needs {BEHAVIOR_DIM} entries, got {}",
                v.len()
            )));
        }
        let arr3 = |r: std::ops::Range<usize>| [v[r.start], v[r.start + 1], v[r.start + 2]];
        let quat = |r: std::ops::Range<usize>| {
            Quaternion::new(v[r.start], v[r.start + 1], v[r.start + 2], v[r.start + 3])
        };
        Ok(Self {
            head: Pose::new(arr3(layout::HEAD_LOC), quat(layout::HEAD_QUAT)),
            body: Pose::new(arr3(layout::BODY_LOC), quat(layout::BODY_QUAT)),
            speaking: v[layout::SPEAKING],
        })
    }

    pub fn is_speaking(&self) -> bool {
        self.speaking >= 0.5
    }
}

/// A contiguous window of one participant's features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantSequence {
    pub participant_id: String,
    pub timestamps: Vec<i64>,
    /// Row-major `timestamps.len() x dim` feature matrix.
    pub values: Vec<f64>,
    pub dim: usize,
}

impl ParticipantSequence {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn step(&self, t: usize) -> &[f64] {
        &self.values[t * self.dim..(t + 1) * self.dim]
    }
}

/// An observed window and a later future window for all members of a group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSample {
    pub group_id: String,
    pub observed: Vec<ParticipantSequence>,
    pub future: Vec<ParticipantSequence>,
    /// `f1 - oT` in steps.
    pub offset_steps: i64,
}

/// One invariant violation found by [`validate_group_sample`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub location: String,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

fn check_grid(
    seqs: &[ParticipantSequence],
    window: &str,
    out: &mut Vec<Violation>,
) -> Option<Vec<i64>> {
    let mut reference: Option<&Vec<i64>> = None;
    for s in seqs {
        let loc = format!("{window}/{}", s.participant_id);
        if s.timestamps.is_empty() {
            out.push(Violation {
                location: loc.clone(),
                message: "empty window".into(),
            });
            continue;
        }
        if s.values.len() != s.timestamps.len() * s.dim {
            out.push(Violation {
                location: loc.clone(),
                message: format!(
                    "{} values for {} steps of dim {}",
                    s.values.len(),
                    s.timestamps.len(),
                    s.dim
                ),
            });
        }
        let diffs: Vec<i64> = s.timestamps.windows(2).map(|w| w[1] - w[0]).collect();
        if diffs.iter().any(|&d| d <= 0) {
            out.push(Violation {
                location: loc.clone(),
                message: "timestamps not strictly increasing".into(),
            });
        } else if diffs.windows(2).any(|w| w[0] != w[1]) {
            out.push(Violation {
                location: loc.clone(),
                message: "timestamps not uniformly spaced".into(),
            });
        }
        match reference {
            None => reference = Some(&s.timestamps),
            Some(r) if r != &s.timestamps => out.push(Violation {
                location: loc,
                message: "timestamp grid differs from other participants".into(),
            }),
            Some(_) => {}
        }
    }
    reference.cloned()
}

/// Collects every invariant violation of a sample instead of stopping at the
/// first one.
pub fn validate_group_sample(s: &GroupSample) -> std::result::Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    if s.observed.is_empty() {
        out.push(Violation {
            location: "observed".into(),
            message: "no participants".into(),
        });
    }
    let obs_grid = check_grid(&s.observed, "observed", &mut out);
    let fut_grid = check_grid(&s.future, "future", &mut out);

    for o in &s.observed {
        if !s
            .future
            .iter()
            .any(|f| f.participant_id == o.participant_id)
        {
            out.push(Violation {
                location: format!("future/{}", o.participant_id),
                message: format!("participant {} missing from future", o.participant_id),
            });
        }
    }
    for f in &s.future {
        if !s
            .observed
            .iter()
            .any(|o| o.participant_id == f.participant_id)
        {
            out.push(Violation {
                location: format!("observed/{}", f.participant_id),
                message: format!("participant {} missing from observed", f.participant_id),
            });
        }
    }

    if s.offset_steps < 1 {
        out.push(Violation {
            location: "offset".into(),
            message: "offset_steps < 1".into(),
        });
    }
    if let (Some(o), Some(f)) = (obs_grid, fut_grid) {
        let (o_last, f_first) = (*o.last().unwrap(), f[0]);
        if f_first <= o_last {
            out.push(Violation {
                location: "future".into(),
                message: format!("future starts at {f_first}, not after observed end {o_last}"),
            });
        } else if o.len() >= 2 {
            let step = o[1] - o[0];
            if (f_first - o_last) != s.offset_steps * step {
                out.push(Violation {
                    location: "offset".into(),
                    message: format!(
                        "offset_steps {} disagrees with timestamps ({} -> {})",
                        s.offset_steps, o_last, f_first
                    ),
                });
            }
        }
    }

    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

/// Dense sample block used as model input: `[sample][participant][step][dim]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleTensor {
    pub n_samples: usize,
    pub n_participants: usize,
    pub obs_len: usize,
    pub fut_len: usize,
    pub dim: usize,
    pub observed: Vec<f64>,
    pub future: Vec<f64>,
    pub offsets: Vec<i64>,
}

impl SampleTensor {
    pub fn empty(n_participants: usize, obs_len: usize, fut_len: usize, dim: usize) -> Self {
        Self {
            n_samples: 0,
            n_participants,
            obs_len,
            fut_len,
            dim,
            observed: Vec::new(),
            future: Vec::new(),
            offsets: Vec::new(),
        }
    }

    /// Packs samples that share participant count and window lengths.
    pub fn from_samples(samples: &[GroupSample]) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::Shape("cannot pack an empty sample list".into()))?;
        let n = first.observed.len();
        let obs_len = first.observed[0].len();
        let fut_len = first.future[0].len();
        let dim = first.observed[0].dim;
        let mut t = Self::empty(n, obs_len, fut_len, dim);
        for s in samples {
            if s.observed.len() != n || s.future.len() != n {
                return Err(Error::Shape(
                    "participant count differs within batch".into(),
                ));
            }
            for p in &s.observed {
                if p.len() != obs_len || p.dim != dim {
                    return Err(Error::Shape(
                        "observed window shape differs within batch".into(),
                    ));
                }
                t.observed.extend_from_slice(&p.values);
            }
            for p in &s.future {
                if p.len() != fut_len || p.dim != dim {
                    return Err(Error::Shape(
                        "future window shape differs within batch".into(),
                    ));
                }
                t.future.extend_from_slice(&p.values);
            }
            t.offsets.push(s.offset_steps);
            t.n_samples += 1;
        }
        Ok(t)
    }

    pub fn is_empty(&self) -> bool {
        self.n_samples == 0
    }

    /// Rows are `(sample, participant)` pairs.
    pub fn rows(&self) -> usize {
        self.n_samples * self.n_participants
    }

    pub fn obs_at(&self, sample: usize, participant: usize, step: usize) -> &[f64] {
        let base = ((sample * self.n_participants + participant) * self.obs_len + step) * self.dim;
        &self.observed[base..base + self.dim]
    }

    pub fn fut_at(&self, sample: usize, participant: usize, step: usize) -> &[f64] {
        let base = ((sample * self.n_participants + participant) * self.fut_len + step) * self.dim;
        &self.future[base..base + self.dim]
    }

    /// Subset of samples in the given order.
    pub fn select(&self, idx: &[usize]) -> Self {
        let mut t = Self::empty(self.n_participants, self.obs_len, self.fut_len, self.dim);
        let ob = self.n_participants * self.obs_len * self.dim;
        let fb = self.n_participants * self.fut_len * self.dim;
        for &i in idx {
            t.observed
                .extend_from_slice(&self.observed[i * ob..(i + 1) * ob]);
            t.future
                .extend_from_slice(&self.future[i * fb..(i + 1) * fb]);
            t.offsets.push(self.offsets[i]);
            t.n_samples += 1;
        }
        t
    }

    /// Reorders participants within every sample.
    pub fn permute_participants(&self, perm: &[usize]) -> Self {
        let mut t = self.clone();
        let (n, d) = (self.n_participants, self.dim);
        for s in 0..self.n_samples {
            for (new_i, &old_i) in perm.iter().enumerate() {
                for step in 0..self.obs_len {
                    let dst = ((s * n + new_i) * self.obs_len + step) * d;
                    t.observed[dst..dst + d].copy_from_slice(self.obs_at(s, old_i, step));
                }
                for step in 0..self.fut_len {
                    let dst = ((s * n + new_i) * self.fut_len + step) * d;
                    t.future[dst..dst + d].copy_from_slice(self.fut_at(s, old_i, step));
                }
            }
        }
        t
    }
}

/// Context and target sets drawn from one group.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitBatch {
    pub group_id: String,
    pub context: SampleTensor,
    pub target: SampleTensor,
    /// Sample identifiers of the context entries, for logging.
    pub context_ids: Vec<String>,
    pub target_ids: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn flatten_order_matches_index_table() {
        let v = BehaviorVector {
            head: Pose::new([0.0, 1.0, 2.0], Quaternion::new(3.0, 4.0, 5.0, 6.0)),
            body: Pose::new([7.0, 8.0, 9.0], Quaternion::new(10.0, 11.0, 12.0, 13.0)),
            speaking: 14.0,
        };
        let flat = v.flatten();
        for (i, x) in flat.iter().enumerate() {
            assert_eq!(*x, i as f64);
        }
        assert_eq!(layout::LOCATION_DIMS, [0, 1, 2, 7, 8, 9]);
    }

    #[test]
    fn flatten_round_trips() {
        let zero = BehaviorVector::unflatten(&[0.0; BEHAVIOR_DIM]).unwrap();
        assert_eq!(zero.flatten(), [0.0; BEHAVIOR_DIM]);

        let ident = BehaviorVector {
            head: Pose::new([1.0, 1.0, 1.0], Quaternion::IDENTITY),
            body: Pose::new([1.0, 1.0, 1.0], Quaternion::IDENTITY),
            speaking: 1.0,
        };
        assert_eq!(BehaviorVector::unflatten(&ident.flatten()).unwrap(), ident);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let raw: Vec<f64> = (0..BEHAVIOR_DIM)
                .map(|_| rng.random_range(-1e3..1e3))
                .collect();
            let v = BehaviorVector::unflatten(&raw).unwrap();
            let back = v.flatten();
            assert!(raw
                .iter()
                .zip(back.iter())
                .all(|(a, b)| a.to_bits() == b.to_bits()));
            assert_eq!(BehaviorVector::unflatten(&back).unwrap(), v);
        }
    }

    #[test]
    fn unflatten_rejects_wrong_arity() {
        assert!(matches!(
            BehaviorVector::unflatten(&[0.0; 14]),
            Err(Error::Shape(_))
        ));
    }

    fn seq(id: &str, start: i64, len: usize) -> ParticipantSequence {
        ParticipantSequence {
            participant_id: id.into(),
            timestamps: (0..len as i64).map(|t| start + t).collect(),
            values: vec![0.5; len],
            dim: 1,
        }
    }

    fn sample(offset: i64) -> GroupSample {
        let ids = ["a", "b", "c"];
        GroupSample {
            group_id: "g".into(),
            observed: ids.iter().map(|i| seq(i, 0, 5)).collect(),
            future: ids.iter().map(|i| seq(i, 4 + offset, 5)).collect(),
            offset_steps: offset,
        }
    }

    #[test]
    fn validate_well_formed() {
        assert!(validate_group_sample(&sample(1)).is_ok());
        assert!(validate_group_sample(&sample(7)).is_ok());
    }

    #[test]
    fn validate_offset_violation() {
        let errs = validate_group_sample(&sample(0)).unwrap_err();
        assert!(errs.iter().any(|v| v.message == "offset_steps < 1"));
    }

    #[test]
    fn validate_missing_participant() {
        let mut s = sample(1);
        s.future.retain(|p| p.participant_id != "b");
        let errs = validate_group_sample(&s).unwrap_err();
        assert_eq!(errs.len(), 1);
        assert!(errs[0].message.contains("participant b"));
        assert_eq!(errs[0].location, "future/b");
    }

    #[test]
    fn validate_bad_grid() {
        let mut s = sample(2);
        s.observed[1].timestamps = vec![0, 1, 3, 4, 5];
        let errs = validate_group_sample(&s).unwrap_err();
        assert!(errs.iter().any(|v| v.location == "observed/b"));
    }

    #[test]
    fn sample_tensor_packs_and_selects() {
        let s = vec![sample(1), sample(2)];
        let t = SampleTensor::from_samples(&s).unwrap();
        assert_eq!(t.rows(), 6);
        assert_eq!(t.offsets, vec![1, 2]);
        let sub = t.select(&[1]);
        assert_eq!(sub.offsets, vec![2]);
        assert_eq!(sub.observed.len(), 15);
    }

    #[test]
    fn group_sample_serde_is_bit_exact() {
        let mut s = sample(3);
        s.observed[0].values = vec![0.1 + 0.2, 1.0 / 3.0, -2.5e-300, 7.0, f64::MIN_POSITIVE];
        let text = serde_json::to_string(&s).unwrap();
        let back: GroupSample = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
        for (a, b) in s.observed[0].values.iter().zip(&back.observed[0].values) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
