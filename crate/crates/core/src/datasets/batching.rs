//! Batch construction and context/target selection.
//!
//! A batch holds samples of one group only, never repeats an observed window
//! and has uniform window lengths. MLP variants additionally need one fixed
//! pair of lengths across all batches.

use std::collections::{BTreeMap, HashSet};

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datasets::windowing::round_half_up;
use crate::datasets::Sample;
use crate::error::{Error, Result};
use crate::models::EncoderKind;

/// Fraction of the interaction whose windows form the fixed-initial context.
pub const INITIAL_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextRegime {
    Random,
    FixedInitial,
}

impl std::str::FromStr for ContextRegime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(ContextRegime::Random),
            "fixed_initial" | "fixed-initial" => Ok(ContextRegime::FixedInitial),
            _ => Err(Error::Config(format!(
                "unknown context regime `{s}`, expected `random` or `fixed_initial`"
            ))),
        }
    }
}

type BucketKey = (String, usize, usize, usize);

fn key(s: &Sample) -> BucketKey {
    (s.group_id.clone(), s.n_participants, s.obs_len, s.fut_len)
}

/// Groups sample indices into batches of at most `batch_size`.
///
/// `mlp_lengths` gives the `(obs, fut)` lengths MLP variants are built for;
/// samples of other lengths are left out for them.
pub fn make_batches(
    samples: &[Sample],
    batch_size: usize,
    kind: EncoderKind,
    mlp_lengths: Option<(usize, usize)>,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let fixed = match (kind, mlp_lengths) {
        (EncoderKind::Mlp, None) => {
            return Err(Error::Config(
                "MLP batching needs fixed window lengths".into(),
            ))
        }
        (EncoderKind::Mlp, Some(l)) => Some(l),
        (EncoderKind::Gru, _) => None,
    };
    let mut buckets: BTreeMap<BucketKey, BTreeMap<i64, Vec<usize>>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        if let Some((o, f)) = fixed {
            if (s.obs_len, s.fut_len) != (o, f) {
                continue;
            }
        }
        buckets
            .entry(key(s))
            .or_default()
            .entry(s.obs_start)
            .or_default()
            .push(i);
    }

    let mut batches = Vec::new();
    for by_start in buckets.into_values() {
        // Layer r holds the r-th sample of every observed start, so no layer
        // repeats a start; batches are cut inside the concatenated layers and
        // closed early when a start would repeat.
        let mut lists: Vec<Vec<usize>> = by_start.into_values().collect();
        for l in &mut lists {
            l.shuffle(rng);
        }
        lists.shuffle(rng);
        let depth = lists.iter().map(Vec::len).max().unwrap_or(0);
        let mut current: Vec<usize> = Vec::new();
        let mut starts: HashSet<i64> = HashSet::new();
        for r in 0..depth {
            let mut layer: Vec<usize> = lists.iter().filter_map(|l| l.get(r).copied()).collect();
            layer.shuffle(rng);
            for i in layer {
                let st = samples[i].obs_start;
                if current.len() == batch_size || starts.contains(&st) {
                    batches.push(std::mem::take(&mut current));
                    starts.clear();
                }
                current.push(i);
                starts.insert(st);
            }
        }
        if !current.is_empty() {
            batches.push(current);
        }
    }
    batches.shuffle(rng);
    Ok(batches)
}

/// Checks every batch against the batching rules; returns all violations.
pub fn validate_batches(
    samples: &[Sample],
    batches: &[Vec<usize>],
    kind: EncoderKind,
) -> std::result::Result<(), Vec<String>> {
    let mut errs = Vec::new();
    let mut lengths: Option<(usize, usize)> = None;
    for (b, batch) in batches.iter().enumerate() {
        let Some(&first) = batch.first() else {
            errs.push(format!("batch {b}: empty"));
            continue;
        };
        let k = key(&samples[first]);
        let mut starts = HashSet::new();
        for &i in batch {
            let s = &samples[i];
            if s.group_id != k.0 {
                errs.push(format!(
                    "batch {b}: mixes groups {} and {}",
                    k.0, s.group_id
                ));
            }
            if (s.n_participants, s.obs_len, s.fut_len) != (k.1, k.2, k.3) {
                errs.push(format!(
                    "batch {b}: sample {} has different window lengths",
                    s.id
                ));
            }
            if !starts.insert(s.obs_start) {
                errs.push(format!("batch {b}: observed start {} repeats", s.obs_start));
            }
        }
        if kind == EncoderKind::Mlp {
            match lengths {
                None => lengths = Some((k.2, k.3)),
                Some(l) if l != (k.2, k.3) => errs.push(format!(
                    "batch {b}: MLP lengths {:?} differ from {:?}",
                    (k.2, k.3),
                    l
                )),
                Some(_) => {}
            }
        }
    }
    if errs.is_empty() {
        Ok(())
    } else {
        Err(errs)
    }
}

/// Context and target sample indices of one meta-task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub context: Vec<usize>,
    pub target: Vec<usize>,
}

/// Samples of a group whose observed window ends within the first
/// [`INITIAL_FRACTION`] of the interaction.
pub fn initial_windows(samples: &[Sample], pool: &[usize]) -> Vec<usize> {
    pool.iter()
        .copied()
        .filter(|&i| {
            let s = &samples[i];
            (s.obs_start as f64 + s.obs_len as f64) <= INITIAL_FRACTION * s.group_frames as f64
        })
        .collect()
}

/// Splits a batch into context and target sets.
///
/// Random regime: a uniformly drawn subset of `round(fraction * |batch|)`
/// samples is the context and the whole batch is the target. Fixed-initial
/// regime: the context is every sample of `group_pool` (with the batch's
/// window lengths) from the start of the interaction, and the targets are the
/// remaining batch samples.
pub fn sample_context(
    batch: &[usize],
    group_pool: &[usize],
    samples: &[Sample],
    regime: ContextRegime,
    fraction: f64,
    rng: &mut ChaCha8Rng,
) -> SplitIndices {
    match regime {
        ContextRegime::Random => {
            let n = round_half_up(fraction.clamp(0.0, 1.0) * batch.len() as f64).min(batch.len());
            let mut picked = sample(rng, batch.len(), n).into_vec();
            picked.sort_unstable();
            SplitIndices {
                context: picked.into_iter().map(|k| batch[k]).collect(),
                target: batch.to_vec(),
            }
        }
        ContextRegime::FixedInitial => {
            let Some(&first) = batch.first() else {
                return SplitIndices {
                    context: Vec::new(),
                    target: Vec::new(),
                };
            };
            let shape = key(&samples[first]);
            let context: Vec<usize> = initial_windows(samples, group_pool)
                .into_iter()
                .filter(|&i| key(&samples[i]) == shape)
                .collect();
            let ctx: HashSet<usize> = context.iter().copied().collect();
            SplitIndices {
                target: batch.iter().copied().filter(|i| !ctx.contains(i)).collect(),
                context,
            }
        }
    }
}
