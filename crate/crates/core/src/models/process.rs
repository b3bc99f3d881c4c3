//! The process model: context aggregation into latent and deterministic
//! representations, target encoding and decoding.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::SampleTensor;
use crate::encoders::{
    offset_matrix, step_matrix, window_matrix, SeqEncoder, SocialEncoder, Window,
};
use crate::error::{Error, Result};
use crate::models::attention::CrossAttention;
use crate::models::config::{AttentionKind, EncoderKind, Family, FeatureLayout, ModelConfig};
use crate::models::decoder::SeqDecoder;
use crate::nn::{Mlp, ParamBuilder, ParamId, ParamStore, Tape, Tensor, Var};

/// Encodes the observed window of every row of a sample block.
#[derive(Debug, Clone)]
enum ObsEncoder {
    Social(SocialEncoder),
    /// Whole-group flattening used by the baselines: one row per sample.
    Flat {
        mlp: Mlp,
        rep_dim: usize,
    },
}

impl ObsEncoder {
    fn forward(&self, t: &mut Tape, x: &SampleTensor) -> Result<Var> {
        match self {
            ObsEncoder::Social(enc) => Ok(enc.forward(t, x)?.e),
            ObsEncoder::Flat { mlp, rep_dim } => {
                let flat = t.input(flat_window(x, Window::Observed));
                let h = mlp.forward(t, flat);
                let oe = t.input(offset_matrix(&x.offsets, 1, *rep_dim)?);
                Ok(t.add(h, oe))
            }
        }
    }
}

fn flat_window(x: &SampleTensor, w: Window) -> Tensor {
    let m = window_matrix(x, w);
    let cols = m.ncols() * x.n_participants;
    m.into_shape_with_order((x.n_samples, cols))
        .expect("flat window shape")
}

/// Diagonal Gaussian over the latent variable, both `1 x d_z`.
#[derive(Debug, Clone, Copy)]
pub struct Gaussian {
    pub mean: Var,
    pub std: Var,
}

/// How the latent sample is chosen.
#[derive(Debug, Clone)]
pub enum ZDraw {
    /// Use the distribution mean.
    Mean,
    /// Reparameterized draw `mean + std * eps` from standard normal `eps`.
    Noise(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct ForwardOptions {
    /// Draw z from `q(z | context ∪ targets)`; needs target futures.
    pub posterior: bool,
    pub z: ZDraw,
    pub teacher_forcing: bool,
    /// Run the auxiliary decoders on the context.
    pub auxiliary: bool,
}

impl ForwardOptions {
    pub fn inference() -> Self {
        Self {
            posterior: false,
            z: ZDraw::Mean,
            teacher_forcing: false,
            auxiliary: false,
        }
    }

    /// Posterior draw with auxiliary decoding, as used for the training loss.
    pub fn training(noise: Vec<f64>, teacher_forcing: bool) -> Self {
        Self {
            posterior: true,
            z: ZDraw::Noise(noise),
            teacher_forcing,
            auxiliary: true,
        }
    }
}

/// Which representation path an auxiliary prediction came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathKind {
    Latent,
    Deterministic,
}

pub struct ForwardOutput {
    /// Predicted means, `target rows x (fut_len * dim)`.
    pub mean: Var,
    pub std: Var,
    /// `q(z | C)`; the standard normal prior for an empty context.
    pub prior: Gaussian,
    pub posterior: Option<Gaussian>,
    pub z: Var,
    /// Aggregated deterministic representation (mean-pooled variants).
    pub r: Option<Var>,
    /// Context in the canonical order used for aggregation.
    pub context: SampleTensor,
    /// Auxiliary reconstructions of the context futures.
    pub aux: Vec<(PathKind, Var)>,
}

struct PairEncoding {
    e: Var,
    s: Var,
    r: Option<Var>,
}

/// A neural process or social process model together with its parameters.
#[derive(Debug, Clone)]
pub struct ProcessModel {
    pub config: ModelConfig,
    pub params: ParamStore,
    target_encoder: ObsEncoder,
    context_encoder: Option<ObsEncoder>,
    future_encoder: Option<SeqEncoder>,
    latent_encoder: Mlp,
    z_encoder: Mlp,
    det_encoder: Option<Mlp>,
    attention: Option<CrossAttention>,
    decoder: SeqDecoder,
    aux_latent: Option<SeqDecoder>,
    aux_det: Option<SeqDecoder>,
    aux_log_scales: Vec<ParamId>,
}

impl ProcessModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let c = &config;
        let mut params = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pb = ParamBuilder::new(&mut params, &mut rng);
        let de = c.rep_dim;
        let has_det = c.paths.has_det();
        let (h, l) = (c.seq_hidden, c.seq_layers);

        let (target_encoder, context_encoder, future_encoder, pair_in) = match c.family {
            Family::Np => {
                let x = c.n_participants * c.obs_len * c.data_dim;
                let y = c.n_participants * c.fut_len * c.data_dim;
                let mlp = Mlp::with_hidden(&mut pb.sub("target_encoder"), x, h, l, de, c.dropout);
                (ObsEncoder::Flat { mlp, rep_dim: de }, None, None, x + y)
            }
            Family::Sp => {
                let target =
                    ObsEncoder::Social(SocialEncoder::new(&mut pb.sub("target_encoder"), c));
                let context = if c.share_social_encoders {
                    None
                } else {
                    Some(ObsEncoder::Social(SocialEncoder::new(
                        &mut pb.sub("context_encoder"),
                        c,
                    )))
                };
                let future = SeqEncoder::new(
                    &mut pb.sub("future_encoder"),
                    c.encoder_kind,
                    c.data_dim,
                    c.fut_len,
                    h,
                    l,
                    de,
                    c.dropout,
                );
                (target, context, Some(future), 2 * de)
            }
        };
        let (pair_hidden, pair_layers) = match c.family {
            Family::Np => (h, l),
            Family::Sp => (c.z_hidden, c.z_layers),
        };
        let pair_dropout = if c.family == Family::Np {
            c.dropout
        } else {
            0.0
        };
        let latent_encoder = Mlp::with_hidden(
            &mut pb.sub("latent_encoder"),
            pair_in,
            pair_hidden,
            pair_layers,
            de,
            pair_dropout,
        );
        let z_encoder = Mlp::with_hidden(
            &mut pb.sub("z_encoder"),
            de,
            c.z_hidden,
            c.z_layers,
            2 * de,
            0.0,
        );
        let det_encoder = has_det.then(|| {
            Mlp::with_hidden(
                &mut pb.sub("det_encoder"),
                pair_in,
                pair_hidden,
                pair_layers,
                de,
                pair_dropout,
            )
        });
        let attention = if c.attention == AttentionKind::None {
            None
        } else {
            Some(CrossAttention::new(
                &mut pb.sub("attention"),
                c.attention,
                de,
                de,
                c.attn_heads,
                c.attn_qk_dim,
            )?)
        };

        let cond = de + if has_det { de } else { 0 } + de;
        let decoder = match c.family {
            Family::Np => {
                let x = c.n_participants * c.obs_len * c.data_dim;
                SeqDecoder::new(
                    &mut pb.sub("decoder"),
                    EncoderKind::Mlp,
                    x + cond,
                    c.n_participants * c.data_dim,
                    c.fut_len,
                    h,
                    l,
                    c.dropout,
                    true,
                )
            }
            Family::Sp => SeqDecoder::new(
                &mut pb.sub("decoder"),
                c.encoder_kind,
                cond,
                c.data_dim,
                c.fut_len,
                h,
                l,
                c.dropout,
                true,
            ),
        };
        let aux = |pb: &mut ParamBuilder, name: &str| {
            SeqDecoder::new(
                &mut pb.sub(name),
                c.encoder_kind,
                2 * de,
                c.data_dim,
                c.fut_len,
                h,
                l,
                c.dropout,
                false,
            )
        };
        let (aux_latent, aux_det, aux_log_scales) = if c.deterministic_decoding {
            let lat = aux(&mut pb, "aux_latent");
            let det = has_det.then(|| aux(&mut pb, "aux_det"));
            let mut scales = vec![pb.zeros("aux_log_scale_location", 1, 1)];
            if c.layout == FeatureLayout::Behavior {
                scales.push(pb.zeros("aux_log_scale_orientation", 1, 1));
            }
            (Some(lat), det, scales)
        } else {
            (None, None, Vec::new())
        };

        Ok(Self {
            config,
            params,
            target_encoder,
            context_encoder,
            future_encoder,
            latent_encoder,
            z_encoder,
            det_encoder,
            attention,
            decoder,
            aux_latent,
            aux_det,
            aux_log_scales,
        })
    }

    pub fn param_count(&self) -> usize {
        self.params.count()
    }

    /// Learned log-scales `ŝ` of the auxiliary loss: location first, then
    /// orientation for the behavior layout.
    pub fn aux_log_scales(&self) -> &[ParamId] {
        &self.aux_log_scales
    }

    /// Rejects sample blocks the model cannot consume.
    pub fn check_input(&self, x: &SampleTensor) -> Result<()> {
        let c = &self.config;
        if x.dim != c.data_dim {
            return Err(Error::Shape(format!(
                "model expects {} features per step, data has {}",
                c.data_dim, x.dim
            )));
        }
        if x.n_participants == 0 {
            return Err(Error::Shape("samples have no participants".into()));
        }
        if c.family == Family::Np && x.n_participants != c.n_participants {
            return Err(Error::Shape(format!(
                "`{}` is built for groups of {}, got {}",
                c.variant(),
                c.n_participants,
                x.n_participants
            )));
        }
        if c.encoder_kind == EncoderKind::Mlp && (x.obs_len != c.obs_len || x.fut_len != c.fut_len)
        {
            return Err(Error::Shape(format!(
                "MLP variants need windows of {}+{} steps, got {}+{}",
                c.obs_len, c.fut_len, x.obs_len, x.fut_len
            )));
        }
        if x.obs_len == 0 || x.fut_len == 0 {
            return Err(Error::Shape("empty observed or future window".into()));
        }
        if x.observed.iter().chain(&x.future).any(|v| !v.is_finite()) {
            return Err(Error::Shape("non-finite value in sample block".into()));
        }
        Ok(())
    }

    fn context_encoder(&self) -> &ObsEncoder {
        self.context_encoder
            .as_ref()
            .unwrap_or(&self.target_encoder)
    }

    /// Per-row latent (and deterministic) encodings of observed/future pairs.
    fn encode_pairs(&self, t: &mut Tape, x: &SampleTensor, with_det: bool) -> Result<PairEncoding> {
        let (e, pair_in) = match self.config.family {
            Family::Np => {
                let obs = flat_window(x, Window::Observed);
                let fut = flat_window(x, Window::Future);
                let joined = ndarray::concatenate(ndarray::Axis(1), &[obs.view(), fut.view()])
                    .expect("pair input shape");
                let e = self.target_encoder.forward(t, x)?;
                (e, t.input(joined))
            }
            Family::Sp => {
                let e = self.context_encoder().forward(t, x)?;
                let steps: Vec<Var> = (0..x.fut_len)
                    .map(|s| {
                        let m = step_matrix(x, Window::Future, s);
                        t.input(m)
                    })
                    .collect();
                let fut = self
                    .future_encoder
                    .as_ref()
                    .expect("social models have a future encoder")
                    .forward(t, &steps)?
                    .0;
                let pair = t.concat_cols(&[e, fut]);
                (e, pair)
            }
        };
        let s = self.latent_encoder.forward(t, pair_in);
        let r = match (&self.det_encoder, with_det) {
            (Some(det), true) => Some(det.forward(t, pair_in)),
            _ => None,
        };
        Ok(PairEncoding { e, s, r })
    }

    /// Mean over the participants of each sample, then over samples.
    fn aggregate(t: &mut Tape, v: Var, per_sample: usize) -> Var {
        let rows = t.shape(v).0;
        let by_sample = if per_sample > 1 {
            let seg: Vec<usize> = (0..rows).map(|r| r / per_sample).collect();
            t.segment_mean(v, &seg, rows / per_sample)
        } else {
            v
        };
        let n = t.shape(by_sample).0;
        t.segment_mean(by_sample, &vec![0; n], 1)
    }

    fn rows_per_sample(&self, x: &SampleTensor) -> usize {
        match self.config.family {
            Family::Np => 1,
            Family::Sp => x.n_participants,
        }
    }

    fn latent_distribution(&self, t: &mut Tape, s: Var, per_sample: usize) -> Gaussian {
        let agg = Self::aggregate(t, s, per_sample);
        let out = self.z_encoder.forward(t, agg);
        let dz = self.config.rep_dim;
        let mean = t.slice_cols(out, 0, dz);
        let raw = t.slice_cols(out, dz, dz);
        let sp = t.softplus(raw);
        let std = t.add_scalar(sp, self.config.std_floor);
        Gaussian { mean, std }
    }

    /// Runs the model on a context set and a target set.
    pub fn forward(
        &self,
        t: &mut Tape,
        context: &SampleTensor,
        target: &SampleTensor,
        opts: &ForwardOptions,
    ) -> Result<ForwardOutput> {
        let c = &self.config;
        self.check_input(target)?;
        if target.is_empty() {
            return Err(Error::Shape("no target samples".into()));
        }
        if !context.is_empty() {
            self.check_input(context)?;
            if context.n_participants != target.n_participants {
                return Err(Error::Shape("context and target group sizes differ".into()));
            }
        }
        let context = context.select(&canonical_order(context));
        let dz = c.rep_dim;

        let ctx = if context.is_empty() {
            None
        } else {
            Some(self.encode_pairs(t, &context, true)?)
        };
        let prior = match &ctx {
            Some(p) => self.latent_distribution(t, p.s, self.rows_per_sample(&context)),
            None => Gaussian {
                mean: t.zeros(1, dz),
                std: t.input(Tensor::ones((1, dz))),
            },
        };
        let posterior = if opts.posterior {
            let enc = self.encode_pairs(t, target, false)?;
            Some(self.latent_distribution(t, enc.s, self.rows_per_sample(target)))
        } else {
            None
        };
        let dist = posterior.unwrap_or(prior);
        let z = match &opts.z {
            ZDraw::Mean => dist.mean,
            ZDraw::Noise(eps) => {
                if eps.len() != dz {
                    return Err(Error::Shape(format!(
                        "need {dz} noise values, got {}",
                        eps.len()
                    )));
                }
                let eps =
                    t.input(Tensor::from_shape_vec((1, dz), eps.clone()).expect("noise shape"));
                let scaled = t.mul(dist.std, eps);
                t.add(dist.mean, scaled)
            }
        };

        let e_target = self.target_encoder.forward(t, target)?;
        let rows = t.shape(e_target).0;
        let broadcast = vec![0; rows];
        let mut cond = Vec::with_capacity(4);
        if c.family == Family::Np {
            cond.push(t.input(flat_window(target, Window::Observed)));
        }
        cond.push(e_target);
        let mut r_agg = None;
        if c.paths.has_det() {
            let r = match (&ctx, &self.attention) {
                (None, _) => t.zeros(rows, dz),
                (Some(p), Some(att)) => {
                    let keys = self.target_encoder.forward(t, &context)?;
                    att.forward(t, e_target, keys, p.r.expect("det path"))?
                }
                (Some(p), None) => {
                    let r = p.r.expect("det path");
                    let agg = Self::aggregate(t, r, self.rows_per_sample(&context));
                    r_agg = Some(agg);
                    t.gather_rows(agg, &broadcast)
                }
            };
            cond.push(r);
        }
        cond.push(t.gather_rows(z, &broadcast));
        let cond = t.concat_cols(&cond);

        let (mean, std) = match c.family {
            Family::Np => {
                let out = self
                    .decoder
                    .decode(t, cond, None, target.fut_len, None, c.std_floor)?;
                let n_rows = target.rows();
                let cols = target.fut_len * target.dim;
                let mean = t.reshape(out.mean, n_rows, cols);
                let std = t.reshape(out.std.expect("stochastic decoder"), n_rows, cols);
                (mean, std)
            }
            Family::Sp => {
                let first = t.input(step_matrix(target, Window::Observed, target.obs_len - 1));
                let teacher: Option<Vec<Var>> = opts.teacher_forcing.then(|| {
                    (0..target.fut_len)
                        .map(|s| {
                            let m = step_matrix(target, Window::Future, s);
                            t.input(m)
                        })
                        .collect()
                });
                let out = self.decoder.decode(
                    t,
                    cond,
                    Some(first),
                    target.fut_len,
                    teacher.as_deref(),
                    c.std_floor,
                )?;
                (out.mean, out.std.expect("stochastic decoder"))
            }
        };

        let mut aux = Vec::new();
        if let (Some(p), true) = (&ctx, opts.auxiliary) {
            let first = t.input(step_matrix(&context, Window::Observed, context.obs_len - 1));
            for (kind, dec, rep) in [
                (PathKind::Latent, &self.aux_latent, Some(p.s)),
                (PathKind::Deterministic, &self.aux_det, p.r),
            ] {
                if let (Some(dec), Some(rep)) = (dec, rep) {
                    let cond = t.concat_cols(&[p.e, rep]);
                    let out =
                        dec.decode(t, cond, Some(first), context.fut_len, None, c.std_floor)?;
                    aux.push((kind, out.mean));
                }
            }
        }

        Ok(ForwardOutput {
            mean,
            std,
            prior,
            posterior,
            z,
            r: r_agg,
            context,
            aux,
        })
    }
}

/// Sample order that depends only on sample contents, so aggregation over a
/// context set is exactly invariant to the order it was given in.
pub fn canonical_order(x: &SampleTensor) -> Vec<usize> {
    let ob = x.n_participants * x.obs_len * x.dim;
    let fb = x.n_participants * x.fut_len * x.dim;
    let key = |i: usize| {
        let mut k: Vec<u64> = Vec::with_capacity(ob + fb + 1);
        k.push(x.offsets[i] as u64);
        k.extend(x.observed[i * ob..(i + 1) * ob].iter().map(|v| v.to_bits()));
        k.extend(x.future[i * fb..(i + 1) * fb].iter().map(|v| v.to_bits()));
        k
    };
    let keys: Vec<Vec<u64>> = (0..x.n_samples).map(key).collect();
    let mut idx: Vec<usize> = (0..x.n_samples).collect();
    idx.sort_by(|&a, &b| keys[a].cmp(&keys[b]));
    idx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::config::{Paths, Variant};

    #[test]
    fn every_variant_builds_and_det_path_adds_parameters() {
        for v in Variant::ALL {
            let variant: Variant = v.parse().unwrap();
            let det = ProcessModel::new(ModelConfig::haggling(variant, Paths::LatentDet, 4, 3), 0)
                .unwrap();
            match ProcessModel::new(ModelConfig::haggling(variant, Paths::Latent, 4, 3), 0) {
                Ok(lat) => assert!(lat.param_count() < det.param_count(), "{v}"),
                Err(_) => assert!(v.contains("dot") || v.contains("multihead"), "{v}"),
            }
        }
    }
}
