//! Optimization loop, early stopping with best-checkpoint averaging, and
//! group-wise cross-validation.

pub mod loss;

use std::collections::{BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::datasets::{
    make_batches, pack_indices, sample_context, ContextRegime, Sample, Standardization,
};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, EvalConfig};
use crate::models::{EncoderKind, Family, ForwardOptions, ModelConfig, ProcessModel};
use crate::nn::{Adam, ParamArchive, Tape};

pub use loss::{total_loss, LossBreakdown};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub context_regime: ContextRegime,
    /// Bounds of the per-batch context fraction in the random regime.
    pub context_fraction_min: f64,
    pub context_fraction_max: f64,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Number of best checkpoints kept and averaged.
    pub keep_best: usize,
    pub seed: u64,
    /// Caps the batches per epoch; `None` uses all of them.
    #[serde(default)]
    pub max_batches_per_epoch: Option<usize>,
    pub eval_batch_size: usize,
}

impl TrainConfig {
    /// Optimizer settings of the full-size presets for a model family.
    pub fn for_model(model: &ModelConfig) -> Self {
        let gru = model.family == Family::Sp && model.encoder_kind == EncoderKind::Gru;
        let (batch_size, learning_rate, weight_decay) = if gru {
            (64, 1e-5, 1e-3)
        } else {
            (128, 3e-5, 5e-4)
        };
        Self {
            batch_size,
            learning_rate,
            weight_decay,
            context_regime: ContextRegime::Random,
            context_fraction_min: 0.2,
            context_fraction_max: 0.8,
            max_epochs: 500,
            patience: 10,
            keep_best: 5,
            seed: 0,
            max_batches_per_epoch: None,
            eval_batch_size: 128,
        }
    }

    /// Glancing toy runs: batches of 100 with a quarter as context.
    pub fn glancing() -> Self {
        Self {
            batch_size: 100,
            learning_rate: 1e-3,
            weight_decay: 0.0,
            context_regime: ContextRegime::Random,
            context_fraction_min: 0.25,
            context_fraction_max: 0.25,
            max_epochs: 30,
            patience: 10,
            keep_best: 5,
            seed: 0,
            max_batches_per_epoch: None,
            eval_batch_size: 128,
        }
    }

    /// Tiny budget for end-to-end checks.
    pub fn smoke() -> Self {
        Self {
            batch_size: 16,
            learning_rate: 1e-3,
            max_epochs: 1,
            max_batches_per_epoch: Some(4),
            ..Self::glancing()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.batch_size == 0 || self.eval_batch_size == 0 {
            return bad("batch sizes must be positive");
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be positive");
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight_decay must be non-negative");
        }
        let (lo, hi) = (self.context_fraction_min, self.context_fraction_max);
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
            return bad("context fractions must satisfy 0 <= min <= max <= 1");
        }
        if self.keep_best == 0 {
            return bad("keep_best must be at least 1");
        }
        Ok(())
    }
}

/// Loss terms of one optimization step, each divided by the target count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: usize,
    pub batch_id: String,
    pub context: usize,
    pub targets: usize,
    pub loss: f64,
    pub nll: f64,
    pub kl: Option<f64>,
    pub aux: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub steps: usize,
    pub train_loss: f64,
    /// Mean validation NLL; the training NLL when no validation data is given.
    pub val_nll: f64,
    pub improved: bool,
}

pub enum TrainEvent<'a> {
    Step(&'a StepRecord),
    Epoch(&'a EpochRecord),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestCheckpoint {
    pub epoch: usize,
    pub val_nll: f64,
    pub params: ParamArchive,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub best: Vec<BestCheckpoint>,
    pub averaged: ParamArchive,
    pub stopped_early: bool,
}

fn batch_id(epoch: usize, k: usize, s: &Sample) -> String {
    format!("epoch{epoch}/batch{k}:{}@{}", s.group_id, s.obs_start)
}

/// One optimizer step on a context/target split. Returns the step losses.
fn step(
    model: &mut ProcessModel,
    opt: &mut Adam,
    samples: &[Sample],
    context: &[usize],
    target: &[usize],
    rng: &mut ChaCha8Rng,
) -> Result<(f64, f64, Option<f64>, Option<f64>)> {
    let like = &samples[target[0]];
    let ctx = pack_indices(samples, context, like)?;
    let tgt = pack_indices(samples, target, like)?;
    let eps: Vec<f64> = (0..model.config.rep_dim)
        .map(|_| rng.sample(StandardNormal))
        .collect();
    let tape_rng = ChaCha8Rng::seed_from_u64(rng.random());
    let opts = ForwardOptions::training(eps, model.config.teacher_forcing);
    let (values, grads) = {
        let mut t = Tape::training(&model.params, tape_rng);
        let out = model.forward(&mut t, &ctx, &tgt, &opts)?;
        let l = total_loss(&mut t, model, &out, &tgt)?;
        // per-target objective keeps the step size independent of batch size
        let k = 1.0 / target.len() as f64;
        let scaled = t.scale(l.total, k);
        let values = (
            t.scalar(scaled),
            t.scalar(l.nll) * k,
            l.kl.map(|v| t.scalar(v) * k),
            l.aux.map(|v| t.scalar(v) * k),
        );
        if !values.0.is_finite() {
            return Ok((values.0, values.1, values.2, values.3));
        }
        (values, t.backward(scaled))
    };
    opt.update(&mut model.params, &grads);
    Ok(values)
}

/// Mean NLL used for model selection.
pub fn validation_nll(
    model: &ProcessModel,
    samples: &[Sample],
    batch_size: usize,
    seed: u64,
) -> Result<f64> {
    let cfg = EvalConfig {
        batch_size,
        seed,
        ..EvalConfig::default()
    };
    let dim = model.config.data_dim;
    let out = evaluate(model, samples, &Standardization::identity(dim), &cfg)?;
    out.metric("nll")
        .map(|r| r.mean)
        .ok_or_else(|| Error::Config("validation set produced no sequences".into()))
}

/// Trains `model` in place. On return the model holds the average of the
/// best checkpoints.
pub fn train(
    model: &mut ProcessModel,
    train_set: &[Sample],
    val_set: &[Sample],
    cfg: &TrainConfig,
    on_event: &mut dyn FnMut(TrainEvent<'_>),
) -> Result<TrainReport> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Config("no training samples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Adam::new(&model.params, cfg.learning_rate, cfg.weight_decay);
    let c = model.config.clone();
    let lengths = (c.encoder_kind == EncoderKind::Mlp).then_some((c.obs_len, c.fut_len));
    let mut pools: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, s) in train_set.iter().enumerate() {
        pools.entry(s.group_id.as_str()).or_default().push(i);
    }

    let mut epochs = Vec::new();
    let mut best: Vec<BestCheckpoint> = Vec::new();
    let mut since_best = 0;
    let mut best_score = f64::INFINITY;
    let mut stopped_early = false;
    let mut global_step = 0;
    for epoch in 1..=cfg.max_epochs {
        let mut batches =
            make_batches(train_set, cfg.batch_size, c.encoder_kind, lengths, &mut rng)?;
        if batches.is_empty() {
            return Err(Error::Config(
                "no batch fits the model's window lengths".into(),
            ));
        }
        if let Some(m) = cfg.max_batches_per_epoch {
            batches.truncate(m);
        }
        let mut losses = Vec::new();
        let mut nlls = Vec::new();
        for (k, batch) in batches.iter().enumerate() {
            let fraction = if cfg.context_fraction_max > cfg.context_fraction_min {
                rng.random_range(cfg.context_fraction_min..=cfg.context_fraction_max)
            } else {
                cfg.context_fraction_min
            };
            let pool = &pools[train_set[batch[0]].group_id.as_str()];
            let split = sample_context(
                batch,
                pool,
                train_set,
                cfg.context_regime,
                fraction,
                &mut rng,
            );
            if split.target.is_empty() {
                continue;
            }
            let id = batch_id(epoch, k, &train_set[batch[0]]);
            let (loss, nll, kl, aux) = step(
                model,
                &mut opt,
                train_set,
                &split.context,
                &split.target,
                &mut rng,
            )?;
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch_id: id,
                    loss,
                });
            }
            global_step += 1;
            let rec = StepRecord {
                epoch,
                step: global_step,
                batch_id: id,
                context: split.context.len(),
                targets: split.target.len(),
                loss,
                nll,
                kl,
                aux,
            };
            on_event(TrainEvent::Step(&rec));
            losses.push(loss);
            nlls.push(nll);
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
        let score = if val_set.is_empty() {
            mean(&nlls)
        } else {
            validation_nll(model, val_set, cfg.eval_batch_size, cfg.seed)?
        };
        if !score.is_finite() {
            return Err(Error::Divergence {
                epoch,
                batch_id: "validation".into(),
                loss: score,
            });
        }
        let improved = score < best_score;
        if improved {
            best_score = score;
            since_best = 0;
        } else {
            since_best += 1;
        }
        if best.len() < cfg.keep_best || score < best.last().map_or(f64::INFINITY, |b| b.val_nll) {
            best.push(BestCheckpoint {
                epoch,
                val_nll: score,
                params: model.params.to_archive(),
            });
            best.sort_by(|a, b| a.val_nll.total_cmp(&b.val_nll).then(a.epoch.cmp(&b.epoch)));
            best.truncate(cfg.keep_best);
        }
        let rec = EpochRecord {
            epoch,
            steps: losses.len(),
            train_loss: mean(&losses),
            val_nll: score,
            improved,
        };
        log::info!(
            "epoch {epoch}: train loss {:.4}, selection nll {:.4}{}",
            rec.train_loss,
            score,
            if improved { " *" } else { "" }
        );
        on_event(TrainEvent::Epoch(&rec));
        epochs.push(rec);
        if since_best >= cfg.patience {
            stopped_early = true;
            break;
        }
    }
    let archives: Vec<ParamArchive> = best.iter().map(|b| b.params.clone()).collect();
    let averaged = ParamArchive::average(&archives)?;
    model.params.load_archive(&averaged)?;
    Ok(TrainReport {
        epochs,
        best,
        averaged,
        stopped_early,
    })
}

/// Partitions the groups of `samples` into `k` folds (sorted group ids dealt
/// round-robin).
pub fn group_folds(samples: &[Sample], k: usize) -> Result<Vec<Vec<String>>> {
    let groups: BTreeSet<&str> = samples.iter().map(|s| s.group_id.as_str()).collect();
    if k < 2 || groups.len() < k {
        return Err(Error::Config(format!(
            "{} groups cannot be split into {k} folds",
            groups.len()
        )));
    }
    let mut folds = vec![Vec::new(); k];
    for (i, g) in groups.into_iter().enumerate() {
        folds[i % k].push(g.to_string());
    }
    Ok(folds)
}

#[derive(Debug, Clone)]
pub struct Candidate {
    pub name: String,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub name: String,
    pub fold_nll: Vec<f64>,
    pub mean_nll: f64,
}

/// Scores every candidate by mean validation NLL over group folds and
/// returns the index of the best one with all scores.
pub fn cross_validate(
    candidates: &[Candidate],
    samples: &[Sample],
    folds: usize,
    model_seed: u64,
) -> Result<(usize, Vec<CandidateScore>)> {
    if candidates.is_empty() {
        return Err(Error::Config("no candidate configurations".into()));
    }
    let partition = group_folds(samples, folds)?;
    let mut scores = Vec::with_capacity(candidates.len());
    for cand in candidates {
        let mut fold_nll = Vec::with_capacity(folds);
        for held in &partition {
            let (val, tr): (Vec<Sample>, Vec<Sample>) = samples
                .iter()
                .cloned()
                .partition(|s| held.contains(&s.group_id));
            let mut model = ProcessModel::new(cand.model.clone(), model_seed)?;
            train(&mut model, &tr, &val, &cand.train, &mut |_| {})?;
            fold_nll.push(validation_nll(
                &model,
                &val,
                cand.train.eval_batch_size,
                cand.train.seed,
            )?);
        }
        let mean_nll = fold_nll.iter().sum::<f64>() / fold_nll.len() as f64;
        scores.push(CandidateScore {
            name: cand.name.clone(),
            fold_nll,
            mean_nll,
        });
    }
    let best = scores
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.mean_nll.total_cmp(&b.1.mean_nll))
        .map(|(i, _)| i)
        .expect("non-empty");
    Ok((best, scores))
}
