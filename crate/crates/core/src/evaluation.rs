//! Forecast metrics: sequence NLL, location MSE, orientation MAE, speaking
//! accuracy, per-timestep curves and mean (std) summaries.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::layout;
use crate::datasets::glancing::{expected_future, GlancingSequence, DEGREES_PER_UNIT};
use crate::datasets::{
    make_batches, pack_indices, sample_context, ContextRegime, Sample, SplitIndices,
    Standardization,
};
use crate::encoders::{window_matrix, Window};
use crate::error::{Error, Result};
use crate::geometry::{geodesic_angle_deg, Quaternion, MIN_NORM};
use crate::models::{EncoderKind, FeatureLayout, ForwardOptions, ProcessModel, ZDraw};
use crate::nn::{tape::exact_sum, Tape};

pub type Metrics = BTreeMap<String, f64>;

const HALF_LN_TAU: f64 = 0.918_938_533_204_672_7;

/// Negative Gaussian log-density of one value.
pub fn gaussian_nll_value(mean: f64, std: f64, y: f64) -> Result<f64> {
    if !(std > 0.0) {
        return Err(Error::InvalidDistribution(format!(
            "std {std} is not positive"
        )));
    }
    let z = (y - mean) / std;
    Ok(HALF_LN_TAU + std.ln() + 0.5 * z * z)
}

/// Predicted distribution and ground truth of one sample, all laid out
/// `[participant][step][dim]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub sample: usize,
    pub n_participants: usize,
    pub fut_len: usize,
    pub dim: usize,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub truth: Vec<f64>,
    /// Per-step NLL estimated from several latent draws, when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampled_step_nll: Option<Vec<f64>>,
}

impl Prediction {
    fn at(&self, p: usize, t: usize) -> std::ops::Range<usize> {
        let base = (p * self.fut_len + t) * self.dim;
        base..base + self.dim
    }

    /// Maps means and stds back to raw units.
    pub fn destandardize(&mut self, stats: &Standardization) -> Result<()> {
        if stats.dim != self.dim {
            return Err(Error::Shape(format!(
                "statistics cover {} dims, predictions have {}",
                stats.dim, self.dim
            )));
        }
        stats.invert(&mut self.mean)?;
        stats.invert_std(&mut self.std)?;
        stats.invert(&mut self.truth)
    }
}

/// NLL of every future step: summed over participants and dims.
pub fn step_nll(p: &Prediction) -> Result<Vec<f64>> {
    (0..p.fut_len)
        .map(|t| {
            let mut terms = Vec::with_capacity(p.n_participants * p.dim);
            for q in 0..p.n_participants {
                for i in p.at(q, t) {
                    terms.push(gaussian_nll_value(p.mean[i], p.std[i], p.truth[i])?);
                }
            }
            Ok(exact_sum(terms))
        })
        .collect()
}

fn quat(v: &[f64], r: std::ops::Range<usize>) -> Quaternion {
    Quaternion::from_array([v[r.start], v[r.start + 1], v[r.start + 2], v[r.start + 3]])
}

/// Orientation error in degrees; a degenerate prediction counts as 180°.
pub fn orientation_error(pred: Quaternion, truth: Quaternion) -> f64 {
    if pred.norm() < MIN_NORM {
        return 180.0;
    }
    geodesic_angle_deg(truth, pred).unwrap_or(180.0)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Point-forecast errors of every future step, averaged over participants.
pub fn step_errors(p: &Prediction, layout: FeatureLayout) -> Vec<Metrics> {
    let n = p.n_participants as f64;
    (0..p.fut_len)
        .map(|t| {
            let mut m = Metrics::new();
            let mut add = |k: &str, v: f64| *m.entry(k.to_string()).or_insert(0.0) += v / n;
            for q in 0..p.n_participants {
                let r = p.at(q, t);
                let (mu, y, sd) = (&p.mean[r.clone()], &p.truth[r.clone()], &p.std[r.clone()]);
                add("mean_std", sd.iter().sum::<f64>() / p.dim as f64);
                match layout {
                    FeatureLayout::Generic => add("mse", sq_dist(mu, y)),
                    FeatureLayout::Behavior => {
                        add(
                            "head_loc_mse",
                            sq_dist(&mu[layout::HEAD_LOC], &y[layout::HEAD_LOC]),
                        );
                        add(
                            "body_loc_mse",
                            sq_dist(&mu[layout::BODY_LOC], &y[layout::BODY_LOC]),
                        );
                        add(
                            "head_ori_mae",
                            orientation_error(
                                quat(mu, layout::HEAD_QUAT),
                                quat(y, layout::HEAD_QUAT),
                            ),
                        );
                        add(
                            "body_ori_mae",
                            orientation_error(
                                quat(mu, layout::BODY_QUAT),
                                quat(y, layout::BODY_QUAT),
                            ),
                        );
                        let hit = (mu[layout::SPEAKING] >= 0.5) == (y[layout::SPEAKING] >= 0.5);
                        add("speaking_acc", if hit { 1.0 } else { 0.0 });
                    }
                }
            }
            m
        })
        .collect()
}

/// Metrics of one evaluated sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceRecord {
    pub sample: usize,
    pub group_id: String,
    pub obs_start: i64,
    pub offset: i64,
    pub context_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<f64>,
    /// Step metrics averaged over the future window, plus RMSE columns.
    pub metrics: Metrics,
    pub steps: Vec<Metrics>,
}

fn mean_over_steps(steps: &[Metrics]) -> Metrics {
    let mut out = Metrics::new();
    if let Some(first) = steps.first() {
        for k in first.keys() {
            let v = exact_sum(steps.iter().map(|s| s[k])) / steps.len() as f64;
            out.insert(k.clone(), v);
        }
    }
    out
}

/// Builds the record of one prediction (already in raw units).
pub fn sequence_record(
    p: &Prediction,
    sample: &Sample,
    layout: FeatureLayout,
    context_size: usize,
) -> Result<SequenceRecord> {
    let nll = match &p.sampled_step_nll {
        Some(v) => v.clone(),
        None => step_nll(p)?,
    };
    let mut steps = step_errors(p, layout);
    for (m, v) in steps.iter_mut().zip(nll) {
        m.insert("nll".into(), v);
    }
    let mut metrics = mean_over_steps(&steps);
    for (mse, rmse) in [
        ("mse", "rmse"),
        ("head_loc_mse", "head_loc_rmse"),
        ("body_loc_mse", "body_loc_rmse"),
    ] {
        if let Some(v) = metrics.get(mse).copied() {
            metrics.insert(rmse.into(), v.sqrt());
        }
    }
    Ok(SequenceRecord {
        sample: p.sample,
        group_id: sample.group_id.clone(),
        obs_start: sample.obs_start,
        offset: sample.offset,
        context_size,
        phase: None,
        metrics,
        steps,
    })
}

/// Mean and population std of one metric over sequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl SummaryRow {
    pub fn formatted(&self) -> String {
        format!("{:.4} ({:.4})", self.mean, self.std)
    }
}

pub fn summarize(records: &[SequenceRecord]) -> Vec<SummaryRow> {
    let mut names: Vec<&String> = records.iter().flat_map(|r| r.metrics.keys()).collect();
    names.sort();
    names.dedup();
    names
        .into_iter()
        .map(|k| {
            let vals: Vec<f64> = records
                .iter()
                .filter_map(|r| r.metrics.get(k).copied())
                .collect();
            let n = vals.len() as f64;
            let mean = exact_sum(vals.iter().copied()) / n;
            let var = exact_sum(vals.iter().map(|v| (v - mean) * (v - mean))) / n;
            SummaryRow {
                metric: k.clone(),
                mean,
                std: var.sqrt(),
                count: vals.len(),
            }
        })
        .collect()
}

/// One point of a per-timestep metric curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub fut_len: usize,
    pub metric: String,
    pub step: usize,
    pub value: f64,
}

/// Step metrics averaged over sequences, separately per future length.
pub fn per_timestep_report(records: &[SequenceRecord]) -> Vec<CurvePoint> {
    let mut by_len: BTreeMap<usize, Vec<&SequenceRecord>> = BTreeMap::new();
    for r in records {
        by_len.entry(r.steps.len()).or_default().push(r);
    }
    let mut out = Vec::new();
    for (len, group) in by_len {
        let mut names: Vec<&String> = group
            .iter()
            .flat_map(|r| r.steps.iter().flat_map(|s| s.keys()))
            .collect();
        names.sort();
        names.dedup();
        for name in names {
            for step in 0..len {
                let vals = group
                    .iter()
                    .filter_map(|r| r.steps[step].get(name).copied());
                let vals: Vec<f64> = vals.collect();
                out.push(CurvePoint {
                    fut_len: len,
                    metric: name.clone(),
                    step: step + 1,
                    value: exact_sum(vals.iter().copied()) / vals.len() as f64,
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub regime: ContextRegime,
    pub batch_size: usize,
    pub seed: u64,
    /// Context share of each batch in the random regime.
    pub context_fraction: f64,
    /// Latent draws for the NLL; 1 uses the mean of `q(z | C)`.
    pub z_samples: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            regime: ContextRegime::Random,
            batch_size: 128,
            seed: 0,
            context_fraction: 0.5,
            z_samples: 1,
        }
    }
}

/// Context/target splits of an evaluation pass over `samples`.
pub fn plan_tasks(
    samples: &[Sample],
    kind: EncoderKind,
    mlp_lengths: Option<(usize, usize)>,
    cfg: &EvalConfig,
) -> Result<Vec<SplitIndices>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let batches = make_batches(samples, cfg.batch_size, kind, mlp_lengths, &mut rng)?;
    let mut pools: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, s) in samples.iter().enumerate() {
        pools.entry(s.group_id.as_str()).or_default().push(i);
    }
    Ok(batches
        .iter()
        .map(|b| {
            let pool = &pools[samples[b[0]].group_id.as_str()];
            sample_context(b, pool, samples, cfg.regime, cfg.context_fraction, &mut rng)
        })
        .filter(|t| !t.target.is_empty())
        .collect())
}

/// Every sample is a target once; all batches share one context set.
pub fn fixed_context_tasks(
    n_samples: usize,
    context: &[usize],
    batch_size: usize,
) -> Vec<SplitIndices> {
    (0..n_samples)
        .collect::<Vec<_>>()
        .chunks(batch_size.max(1))
        .map(|c| SplitIndices {
            context: context.to_vec(),
            target: c.to_vec(),
        })
        .collect()
}

fn log_mean_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + (exact_sum(v.iter().map(|x| (x - m).exp())) / v.len() as f64).ln()
}

/// Predicts the targets of every task (in standardized units).
pub fn predict(
    model: &ProcessModel,
    samples: &[Sample],
    tasks: &[SplitIndices],
    z_samples: usize,
    seed: u64,
) -> Result<Vec<Prediction>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let dz = model.config.rep_dim;
    let mut out = Vec::new();
    for task in tasks {
        let like = &samples[task.target[0]];
        let ctx = pack_indices(samples, &task.context, like)?;
        let tgt = pack_indices(samples, &task.target, like)?;
        let mut t = Tape::new(&model.params);
        let fwd = model.forward(&mut t, &ctx, &tgt, &ForwardOptions::inference())?;
        let mean = t.value(fwd.mean).clone();
        let std = t.value(fwd.std).clone();
        let truth = window_matrix(&tgt, Window::Future);
        let (n, len, d) = (tgt.n_participants, tgt.fut_len, tgt.dim);
        let per = n * len * d;
        let flat = |m: &crate::nn::Tensor| m.iter().copied().collect::<Vec<f64>>();
        let (mean, std, truth) = (flat(&mean), flat(&std), flat(&truth));

        // log-likelihood per (sample, step, draw) for the multi-draw estimate
        let mut draws: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new(); len]; task.target.len()];
        if z_samples > 1 {
            for _ in 0..z_samples {
                let eps: Vec<f64> = (0..dz).map(|_| rng.sample(StandardNormal)).collect();
                let opts = ForwardOptions {
                    z: ZDraw::Noise(eps),
                    ..ForwardOptions::inference()
                };
                let mut t = Tape::new(&model.params);
                let f = model.forward(&mut t, &ctx, &tgt, &opts)?;
                let (m, s) = (t.value(f.mean), t.value(f.std));
                let (m, s): (Vec<f64>, Vec<f64>) =
                    (m.iter().copied().collect(), s.iter().copied().collect());
                for (k, per_step) in draws.iter_mut().enumerate() {
                    let p = Prediction {
                        sample: 0,
                        n_participants: n,
                        fut_len: len,
                        dim: d,
                        mean: m[k * per..(k + 1) * per].to_vec(),
                        std: s[k * per..(k + 1) * per].to_vec(),
                        truth: truth[k * per..(k + 1) * per].to_vec(),
                        sampled_step_nll: None,
                    };
                    for (acc, v) in per_step.iter_mut().zip(step_nll(&p)?) {
                        acc.push(-v);
                    }
                }
            }
        }
        for (k, &idx) in task.target.iter().enumerate() {
            let sampled =
                (z_samples > 1).then(|| draws[k].iter().map(|ll| -log_mean_exp(ll)).collect());
            out.push(Prediction {
                sample: idx,
                n_participants: n,
                fut_len: len,
                dim: d,
                mean: mean[k * per..(k + 1) * per].to_vec(),
                std: std[k * per..(k + 1) * per].to_vec(),
                truth: truth[k * per..(k + 1) * per].to_vec(),
                sampled_step_nll: sampled,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutput {
    pub tasks: Vec<SplitIndices>,
    pub records: Vec<SequenceRecord>,
    pub summary: Vec<SummaryRow>,
    pub curves: Vec<CurvePoint>,
    #[serde(skip)]
    pub predictions: Vec<Prediction>,
}

impl EvalOutput {
    pub fn metric(&self, name: &str) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.metric == name)
    }

    fn refresh(&mut self) {
        self.summary = summarize(&self.records);
        self.curves = per_timestep_report(&self.records);
    }
}

/// Evaluates given context/target splits; predictions are destandardized
/// with `stats` before scoring.
pub fn evaluate_tasks(
    model: &ProcessModel,
    samples: &[Sample],
    tasks: Vec<SplitIndices>,
    stats: &Standardization,
    z_samples: usize,
    seed: u64,
) -> Result<EvalOutput> {
    let mut predictions = predict(model, samples, &tasks, z_samples, seed)?;
    let mut records = Vec::with_capacity(predictions.len());
    let mut ctx_size = vec![0; samples.len()];
    for t in &tasks {
        for &i in &t.target {
            ctx_size[i] = t.context.len();
        }
    }
    for p in &mut predictions {
        p.destandardize(stats)?;
        if p.sampled_step_nll.is_some() {
            // sampled likelihoods were taken in standardized units
            let jac: f64 = (0..p.n_participants * p.dim)
                .map(|k| k % p.dim)
                .filter_map(|d| stats.dims.iter().position(|&x| x == d))
                .map(|j| stats.std[j].ln())
                .sum();
            if let Some(v) = p.sampled_step_nll.as_mut() {
                v.iter_mut().for_each(|x| *x += jac);
            }
        }
        records.push(sequence_record(
            p,
            &samples[p.sample],
            model.config.layout,
            ctx_size[p.sample],
        )?);
    }
    let mut out = EvalOutput {
        tasks,
        records,
        summary: Vec::new(),
        curves: Vec::new(),
        predictions,
    };
    out.refresh();
    Ok(out)
}

/// Seeded evaluation of `samples` under a context regime.
pub fn evaluate(
    model: &ProcessModel,
    samples: &[Sample],
    stats: &Standardization,
    cfg: &EvalConfig,
) -> Result<EvalOutput> {
    let c = &model.config;
    let lengths = (c.encoder_kind == EncoderKind::Mlp).then_some((c.obs_len, c.fut_len));
    let tasks = plan_tasks(samples, c.encoder_kind, lengths, cfg)?;
    evaluate_tasks(model, samples, tasks, stats, cfg.z_samples, cfg.seed)
}

/// Adds the error against the average of the two possible futures, in
/// degrees, to records of the glancing data (sample index = sequence index).
pub fn add_glancing_metrics(out: &mut EvalOutput, sequences: &[GlancingSequence]) -> Result<()> {
    for (rec, p) in out.records.iter_mut().zip(&out.predictions) {
        let seq = sequences
            .get(p.sample)
            .ok_or_else(|| Error::Shape(format!("no glancing sequence {}", p.sample)))?;
        let expected = expected_future(seq.phase);
        if expected.len() != p.fut_len || p.dim != 1 || p.n_participants != 1 {
            return Err(Error::Shape(
                "glancing metrics need 1-d single-person forecasts".into(),
            ));
        }
        for (t, m) in rec.steps.iter_mut().enumerate() {
            m.insert(
                "ori_mae_expected".into(),
                (p.mean[t] - expected[t]).abs() * DEGREES_PER_UNIT,
            );
        }
        rec.phase = Some(seq.phase);
        rec.metrics = {
            let mut m = mean_over_steps(&rec.steps);
            if let Some(v) = m.get("mse").copied() {
                m.insert("rmse".into(), v.sqrt());
            }
            m
        };
    }
    out.refresh();
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pred(
        mean: Vec<f64>,
        std: Vec<f64>,
        truth: Vec<f64>,
        n: usize,
        len: usize,
        dim: usize,
    ) -> Prediction {
        Prediction {
            sample: 0,
            n_participants: n,
            fut_len: len,
            dim,
            mean,
            std,
            truth,
            sampled_step_nll: None,
        }
    }

    #[test]
    fn nll_values() {
        let p = pred(vec![0.2], vec![1.0], vec![0.2], 1, 1, 1);
        assert!((step_nll(&p).unwrap()[0] - 0.9189385).abs() < 1e-6);
        let v = vec![0.1; 45];
        let p = pred(v.clone(), vec![1.0; 45], v, 3, 1, 15);
        assert!((step_nll(&p).unwrap()[0] - 45.0 * HALF_LN_TAU).abs() < 1e-9);
        let p = pred(vec![0.0], vec![0.0], vec![0.0], 1, 1, 1);
        assert!(step_nll(&p).is_err());
    }

    fn behavior_step(loc_shift: f64) -> (Vec<f64>, Vec<f64>) {
        let truth = vec![
            0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 5.0, 5.0, 5.0, 1.0, 0.0, 0.0, 0.0, 1.0,
        ];
        let mut pred = truth.clone();
        pred[0] += loc_shift;
        (pred, truth)
    }

    #[test]
    fn perfect_and_offset_predictions() {
        let (p0, t0) = behavior_step(0.0);
        let p = pred(p0.repeat(4), vec![1.0; 60], t0.repeat(4), 1, 4, 15);
        let s = sample_like(1, 4, 15);
        let r = sequence_record(&p, &s, FeatureLayout::Behavior, 0).unwrap();
        for k in [
            "head_loc_mse",
            "body_loc_mse",
            "head_ori_mae",
            "body_ori_mae",
        ] {
            assert!(r.metrics[k].abs() < 1e-9, "{k}");
        }
        assert_eq!(r.metrics["speaking_acc"], 1.0);

        let (p1, t1) = behavior_step(1.0);
        let p = pred(p1.repeat(4), vec![1.0; 60], t1.repeat(4), 1, 4, 15);
        let r = sequence_record(&p, &s, FeatureLayout::Behavior, 0).unwrap();
        assert!((r.metrics["head_loc_mse"] - 1.0).abs() < 1e-12);
        assert!((r.metrics["head_loc_rmse"] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orientation_sign_and_degenerate() {
        let q = Quaternion::from_array([0.6, 0.8, 0.0, 0.0]);
        let neg = Quaternion::from_array([-0.6, -0.8, 0.0, 0.0]);
        let truth = Quaternion::from_array([1.0, 0.0, 0.0, 0.0]);
        assert!((orientation_error(q, truth) - orientation_error(neg, truth)).abs() < 1e-12);
        assert_eq!(
            orientation_error(Quaternion::from_array([0.0; 4]), truth),
            180.0
        );
    }

    #[test]
    fn majority_class_accuracy() {
        // 7 of 10 steps silent; predicting silence everywhere gives 0.7
        let mut truth = Vec::new();
        let mut mean = Vec::new();
        for t in 0..10 {
            let (mut p, mut y) = behavior_step(0.0);
            y[14] = if t < 3 { 1.0 } else { 0.0 };
            p[14] = 0.1;
            truth.extend(y);
            mean.extend(p);
        }
        let p = pred(mean, vec![1.0; 150], truth, 1, 10, 15);
        let r = sequence_record(&p, &sample_like(1, 10, 15), FeatureLayout::Behavior, 0).unwrap();
        assert!((r.metrics["speaking_acc"] - 0.7).abs() < 1e-15);
    }

    fn sample_like(n: usize, fut: usize, dim: usize) -> Sample {
        Sample {
            id: 0,
            group_id: "g".into(),
            obs_start: 0,
            offset: 1,
            n_participants: n,
            obs_len: 1,
            fut_len: fut,
            dim,
            group_frames: 10,
            observed: vec![0.0; n * dim],
            future: vec![0.0; n * fut * dim],
        }
    }

    #[test]
    fn curve_mean_matches_aggregate() {
        let mut records = Vec::new();
        for k in 0..5 {
            let len = 6;
            let mean: Vec<f64> = (0..len).map(|t| (t * k) as f64 * 0.1).collect();
            let truth: Vec<f64> = (0..len).map(|t| t as f64 * 0.05).collect();
            let std: Vec<f64> = (0..len).map(|t| 0.5 + t as f64 * 0.1).collect();
            let p = pred(mean, std, truth, 1, len, 1);
            records.push(
                sequence_record(&p, &sample_like(1, len, 1), FeatureLayout::Generic, 0).unwrap(),
            );
        }
        let curves = per_timestep_report(&records);
        let summary = summarize(&records);
        for row in summary.iter().filter(|r| r.metric != "rmse") {
            let pts: Vec<f64> = curves
                .iter()
                .filter(|c| c.metric == row.metric)
                .map(|c| c.value)
                .collect();
            assert_eq!(pts.len(), 6);
            let m = pts.iter().sum::<f64>() / 6.0;
            assert!((m - row.mean).abs() < 1e-9, "{}", row.metric);
        }
    }

    #[test]
    fn destandardize_scales_std() {
        let stats = Standardization {
            dim: 2,
            dims: vec![0],
            mean: vec![1.0],
            std: vec![2.0],
        };
        let mut p = pred(vec![0.5, 0.5], vec![1.0, 1.0], vec![0.0, 0.0], 1, 1, 2);
        p.destandardize(&stats).unwrap();
        assert_eq!(p.mean, vec![2.0, 0.5]);
        assert_eq!(p.std, vec![2.0, 1.0]);
        assert_eq!(p.truth, vec![1.0, 0.0]);
        let mut id = p.clone();
        id.destandardize(&Standardization::identity(2)).unwrap();
        assert_eq!(id, p);
    }

    #[test]
    fn lme() {
        assert!((log_mean_exp(&[0.0, 0.0]) - 0.0).abs() < 1e-15);
        assert!((log_mean_exp(&[1.0f64.ln(), 3.0f64.ln()]) - 2.0f64.ln()).abs() < 1e-12);
    }
}
