//! Loss terms: the Gaussian ELBO and the auxiliary point-forecast loss.

use std::f64::consts::PI;

use crate::data::{layout, SampleTensor};
use crate::encoders::{window_matrix, Window};
use crate::error::{Error, Result};
use crate::geometry::MIN_NORM;
use crate::models::{FeatureLayout, ForwardOutput, Gaussian, ProcessModel};
use crate::nn::{Tape, Tensor, Var};

/// Clamp bounds for the speaking probability in the BCE term.
pub const BCE_EPS: f64 = 1e-6;

fn check_std(t: &Tape, std: Var, what: &str) -> Result<()> {
    if let Some(v) = t.value(std).iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidDistribution(format!(
            "{what} std {v} is not positive"
        )));
    }
    Ok(())
}

/// Negative Gaussian log-likelihood summed over every entry.
pub fn gaussian_nll(t: &mut Tape, mean: Var, std: Var, y: Var) -> Result<Var> {
    check_std(t, std, "predicted")?;
    let n = t.value(y).len() as f64;
    let diff = t.sub(y, mean);
    let z = t.div(diff, std);
    let sq = t.square(z);
    let half = t.scale(sq, 0.5);
    let log_std = t.log(std);
    let per = t.add(half, log_std);
    let s = t.sum(per);
    Ok(t.add_scalar(s, 0.5 * (2.0 * PI).ln() * n))
}

/// Closed-form `KL(q ‖ p)` between factorized Gaussians.
pub fn kl_divergence(t: &mut Tape, q: Gaussian, p: Gaussian) -> Result<Var> {
    check_std(t, q.std, "posterior")?;
    check_std(t, p.std, "prior")?;
    let log_ratio = {
        let lp = t.log(p.std);
        let lq = t.log(q.std);
        t.sub(lp, lq)
    };
    let dm = t.sub(q.mean, p.mean);
    let dm2 = t.square(dm);
    let q2 = t.square(q.std);
    let num = t.add(q2, dm2);
    let p2 = t.square(p.std);
    let p2 = t.scale(p2, 2.0);
    let frac = t.div(num, p2);
    let per = t.add(log_ratio, frac);
    let per = t.add_scalar(per, -0.5);
    Ok(t.sum(per))
}

/// Terms of the training objective, all scalar.
pub struct LossBreakdown {
    pub total: Var,
    pub neg_elbo: Var,
    pub nll: Var,
    pub kl: Option<Var>,
    pub aux: Option<Var>,
}

/// `-[log p(Y | X, C, z) - KL(q_D ‖ q_C)]` for one forward pass.
pub fn elbo_loss(
    t: &mut Tape,
    out: &ForwardOutput,
    target: &SampleTensor,
) -> Result<(Var, Var, Option<Var>)> {
    let y = t.input(window_matrix(target, Window::Future));
    if t.shape(y) != t.shape(out.mean) {
        return Err(Error::Shape(format!(
            "prediction {:?} does not match targets {:?}",
            t.shape(out.mean),
            t.shape(y)
        )));
    }
    let nll = gaussian_nll(t, out.mean, out.std, y)?;
    match out.posterior {
        Some(q) => {
            let kl = kl_divergence(t, q, out.prior)?;
            Ok((t.add(nll, kl), nll, Some(kl)))
        }
        None => Ok((nll, nll, None)),
    }
}

/// Constant selection/grouping matrices for one future length.
struct AuxMatrices {
    /// Sums squared location residuals per (step, keypoint).
    loc_groups: Tensor,
    /// Picks quaternion columns, `(T*d) x (T*8)`.
    quat_select: Tensor,
    /// Sums over each quaternion's 4 columns, `(T*8) x (T*2)`.
    quat_groups: Tensor,
    /// Picks the speaking column, `(T*d) x T`.
    speak_select: Tensor,
}

fn behavior_matrices(steps: usize) -> AuxMatrices {
    let d = crate::data::BEHAVIOR_DIM;
    let mut loc_groups = Tensor::zeros((steps * d, steps * 2));
    let mut quat_select = Tensor::zeros((steps * d, steps * 8));
    let mut quat_groups = Tensor::zeros((steps * 8, steps * 2));
    let mut speak_select = Tensor::zeros((steps * d, steps));
    for s in 0..steps {
        for (b, (loc, quat)) in [
            (layout::HEAD_LOC, layout::HEAD_QUAT),
            (layout::BODY_LOC, layout::BODY_QUAT),
        ]
        .into_iter()
        .enumerate()
        {
            for c in loc {
                loc_groups[[s * d + c, s * 2 + b]] = 1.0;
            }
            for (k, c) in quat.enumerate() {
                quat_select[[s * d + c, s * 8 + b * 4 + k]] = 1.0;
                quat_groups[[s * 8 + b * 4 + k, s * 2 + b]] = 1.0;
            }
        }
        speak_select[[s * d + layout::SPEAKING, s]] = 1.0;
    }
    AuxMatrices {
        loc_groups,
        quat_select,
        quat_groups,
        speak_select,
    }
}

fn group_norms(t: &mut Tape, residual: Var, groups: &Tensor) -> Var {
    let sq = t.square(residual);
    let g = t.input(groups.clone());
    let sums = t.matmul(sq, g);
    t.sqrt(sums)
}

/// Sum of `‖l − l̂‖` over rows, steps and location blocks. For the generic
/// layout the whole step vector is one block.
pub fn location_loss(
    t: &mut Tape,
    pred: Var,
    truth: &Tensor,
    layout: FeatureLayout,
    dim: usize,
) -> Result<Var> {
    let (rows, cols) = t.shape(pred);
    if truth.dim() != (rows, cols) || cols % dim != 0 {
        return Err(Error::Shape(
            "auxiliary prediction does not match truth".into(),
        ));
    }
    let steps = cols / dim;
    let y = t.input(truth.clone());
    let residual = t.sub(y, pred);
    let groups = match layout {
        FeatureLayout::Behavior => behavior_matrices(steps).loc_groups,
        FeatureLayout::Generic => {
            let mut g = Tensor::zeros((cols, steps));
            for s in 0..steps {
                for c in 0..dim {
                    g[[s * dim + c, s]] = 1.0;
                }
            }
            g
        }
    };
    let norms = group_norms(t, residual, &groups);
    Ok(t.sum(norms))
}

/// Sum of `‖q − q̂/‖q̂‖‖` over rows, steps and the head and body quaternions.
pub fn quaternion_loss(t: &mut Tape, pred: Var, truth: &Tensor) -> Result<Var> {
    let (rows, cols) = t.shape(pred);
    let d = crate::data::BEHAVIOR_DIM;
    if truth.dim() != (rows, cols) || cols % d != 0 {
        return Err(Error::Shape(
            "auxiliary prediction does not match truth".into(),
        ));
    }
    let m = behavior_matrices(cols / d);
    let sel = t.input(m.quat_select.clone());
    let q_hat = t.matmul(pred, sel);
    let norms = group_norms(t, q_hat, &m.quat_groups);
    if let Some(n) = t.value(norms).iter().find(|n| !(**n >= MIN_NORM)) {
        return Err(Error::QuaternionDegenerate(format!(
            "predicted quaternion norm {n}"
        )));
    }
    let expand = t.input(m.quat_groups.t().to_owned());
    let norms_full = t.matmul(norms, expand);
    let q_unit = t.div(q_hat, norms_full);
    let q_true = t.input(truth.dot(&m.quat_select));
    let residual = t.sub(q_true, q_unit);
    let per = group_norms(t, residual, &m.quat_groups);
    Ok(t.sum(per))
}

/// Binary cross-entropy of the speaking channel, prediction clamped into
/// `[BCE_EPS, 1 − BCE_EPS]`.
pub fn speaking_bce(t: &mut Tape, pred: Var, truth: &Tensor) -> Result<Var> {
    let (rows, cols) = t.shape(pred);
    let d = crate::data::BEHAVIOR_DIM;
    if truth.dim() != (rows, cols) || cols % d != 0 {
        return Err(Error::Shape(
            "auxiliary prediction does not match truth".into(),
        ));
    }
    let sel = behavior_matrices(cols / d).speak_select;
    let y = truth.dot(&sel);
    let s = t.input(sel);
    let p = t.matmul(pred, s);
    let p = t.clamp(p, BCE_EPS, 1.0 - BCE_EPS);
    let log_p = t.log(p);
    let neg = t.scale(p, -1.0);
    let one_minus = t.add_scalar(neg, 1.0);
    let log_q = t.log(one_minus);
    let yv = t.input(y.clone());
    let ny = t.input(y.mapv(|v| 1.0 - v));
    let a = t.mul(yv, log_p);
    let b = t.mul(ny, log_q);
    let ll = t.add(a, b);
    let s = t.sum(ll);
    Ok(t.scale(s, -1.0))
}

/// `L·exp(−ŝ) + count·ŝ`: the homoscedastic weighting of a summed loss
/// over `count` (person, step) terms.
pub fn homoscedastic(t: &mut Tape, loss: Var, log_scale: Var, count: usize) -> Var {
    let neg = t.scale(log_scale, -1.0);
    let w = t.exp(neg);
    let weighted = t.mul(loss, w);
    let reg = t.scale(log_scale, count as f64);
    t.add(weighted, reg)
}

/// Auxiliary loss of one point forecast of the context futures. `scales`
/// holds `ŝ_l` and, for the behavior layout, `ŝ_q`.
pub fn aux_loss(
    t: &mut Tape,
    pred: Var,
    truth: &Tensor,
    layout: FeatureLayout,
    dim: usize,
    scales: &[Var],
) -> Result<Var> {
    let (rows, cols) = t.shape(pred);
    let count = rows * (cols / dim.max(1));
    let l_l = location_loss(t, pred, truth, layout, dim)?;
    let s_l = *scales
        .first()
        .ok_or_else(|| Error::Config("missing location log-scale".into()))?;
    let mut total = homoscedastic(t, l_l, s_l, count);
    if layout == FeatureLayout::Behavior {
        let s_q = *scales
            .get(1)
            .ok_or_else(|| Error::Config("missing orientation log-scale".into()))?;
        let l_q = quaternion_loss(t, pred, truth)?;
        let q_term = homoscedastic(t, l_q, s_q, count);
        let bce = speaking_bce(t, pred, truth)?;
        total = t.add(total, q_term);
        total = t.add(total, bce);
    }
    Ok(total)
}

/// `−ELBO + Σ L_aux` over the active auxiliary decoders.
pub fn total_loss(
    t: &mut Tape,
    model: &ProcessModel,
    out: &ForwardOutput,
    target: &SampleTensor,
) -> Result<LossBreakdown> {
    let (neg_elbo, nll, kl) = elbo_loss(t, out, target)?;
    let mut aux_sum = None;
    if !out.aux.is_empty() {
        let truth = window_matrix(&out.context, Window::Future);
        let scales: Vec<Var> = model
            .aux_log_scales()
            .iter()
            .map(|&id| t.param(id))
            .collect();
        for (_, pred) in &out.aux {
            let l = aux_loss(
                t,
                *pred,
                &truth,
                model.config.layout,
                model.config.data_dim,
                &scales,
            )?;
            aux_sum = Some(match aux_sum {
                None => l,
                Some(acc) => t.add(acc, l),
            });
        }
    }
    let total = match aux_sum {
        Some(a) => t.add(neg_elbo, a),
        None => neg_elbo,
    };
    Ok(LossBreakdown {
        total,
        neg_elbo,
        nll,
        kl,
        aux: aux_sum,
    })
}
