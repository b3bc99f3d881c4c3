//! Sequence encoders, partner pooling, the self/partner combiner and the
//! sinusoidal offset encoding.

use ndarray::Array2;

use crate::data::{layout, SampleTensor};
use crate::error::{Error, Result};
use crate::geometry::{hamilton_product, quat_inverse, Quaternion};
use crate::models::config::{EncoderKind, FeatureLayout, ModelConfig};
use crate::nn::{Gru, Linear, Mlp, ParamBuilder, Tape, Tensor, Var};

/// Sinusoidal encoding of the gap between observed and future windows:
/// `OE[2m] = sin(dt / 10000^(2m/d))`, `OE[2m+1] = cos(dt / 10000^(2m/d))`.
pub fn encode_offset(offset: i64, dim: usize) -> Result<Vec<f64>> {
    if !dim.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "offset encoding needs an even dimension, got {dim}"
        )));
    }
    let dt = offset as f64;
    let mut out = vec![0.0; dim];
    for m in 0..dim / 2 {
        let freq = 10000f64.powf(2.0 * m as f64 / dim as f64);
        out[2 * m] = (dt / freq).sin();
        out[2 * m + 1] = (dt / freq).cos();
    }
    Ok(out)
}

/// Offset encodings for every `(sample, participant)` row.
pub fn offset_matrix(offsets: &[i64], n_participants: usize, dim: usize) -> Result<Tensor> {
    let mut m = Tensor::zeros((offsets.len() * n_participants, dim));
    for (s, &o) in offsets.iter().enumerate() {
        let oe = encode_offset(o, dim)?;
        for i in 0..n_participants {
            m.row_mut(s * n_participants + i)
                .iter_mut()
                .zip(&oe)
                .for_each(|(d, v)| *d = *v);
        }
    }
    Ok(m)
}

/// Which window of a [`SampleTensor`] to read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    Observed,
    Future,
}

impl Window {
    fn len(self, x: &SampleTensor) -> usize {
        match self {
            Window::Observed => x.obs_len,
            Window::Future => x.fut_len,
        }
    }

    fn at(self, x: &SampleTensor, s: usize, i: usize, t: usize) -> &[f64] {
        match self {
            Window::Observed => x.obs_at(s, i, t),
            Window::Future => x.fut_at(s, i, t),
        }
    }
}

/// Step `t` of a window as a `(samples * participants) x dim` matrix.
pub fn step_matrix(x: &SampleTensor, window: Window, t: usize) -> Tensor {
    let n = x.n_participants;
    let mut m = Tensor::zeros((x.rows(), x.dim));
    for s in 0..x.n_samples {
        for i in 0..n {
            m.row_mut(s * n + i)
                .iter_mut()
                .zip(window.at(x, s, i, t))
                .for_each(|(d, v)| *d = *v);
        }
    }
    m
}

/// Whole window as `(samples * participants) x (steps * dim)`.
pub fn window_matrix(x: &SampleTensor, window: Window) -> Tensor {
    let len = window.len(x);
    let data = match window {
        Window::Observed => x.observed.clone(),
        Window::Future => x.future.clone(),
    };
    Array2::from_shape_vec((x.rows(), len * x.dim), data).expect("window matrix shape")
}

/// Width of the partner-relative feature vector.
pub fn relative_dim(layout: FeatureLayout, data_dim: usize) -> usize {
    match layout {
        FeatureLayout::Behavior => 15,
        FeatureLayout::Generic => data_dim,
    }
}

/// Partner-relative features at one observed step for every ordered pair
/// `(focal i, partner j != i)` of every sample.
///
/// For the behavior layout each row is `[q_rel head (4), l_rel head (3),
/// q_rel body (4), l_rel body (3), s_rel]`; otherwise it is `x_j - x_i`.
pub struct PairFeatures {
    pub features: Tensor,
    /// Row index (`sample * n + j`) of the partner for each pair.
    pub partner_rows: Vec<usize>,
    /// Row index (`sample * n + i`) of the focal participant for each pair.
    pub focal_rows: Vec<usize>,
}

pub fn pair_features(
    x: &SampleTensor,
    t: usize,
    layout_kind: FeatureLayout,
) -> Result<PairFeatures> {
    let n = x.n_participants;
    let width = relative_dim(layout_kind, x.dim);
    let n_pairs = x.n_samples * n * n.saturating_sub(1);
    let mut features = Tensor::zeros((n_pairs, width));
    let mut partner_rows = Vec::with_capacity(n_pairs);
    let mut focal_rows = Vec::with_capacity(n_pairs);
    let mut row = 0;
    for s in 0..x.n_samples {
        for i in 0..n {
            let fi = x.obs_at(s, i, t);
            for j in (0..n).filter(|&j| j != i) {
                let fj = x.obs_at(s, j, t);
                let mut out = features.row_mut(row);
                match layout_kind {
                    FeatureLayout::Behavior => {
                        let q = |v: &[f64], r: std::ops::Range<usize>| {
                            Quaternion::new(
                                v[r.start],
                                v[r.start + 1],
                                v[r.start + 2],
                                v[r.start + 3],
                            )
                        };
                        let mut k = 0;
                        for (qr, lr) in [
                            (layout::HEAD_QUAT, layout::HEAD_LOC),
                            (layout::BODY_QUAT, layout::BODY_LOC),
                        ] {
                            let q_rel =
                                hamilton_product(q(fi, qr.clone()), quat_inverse(q(fj, qr))?);
                            for c in q_rel.to_array() {
                                out[k] = c;
                                k += 1;
                            }
                            for d in lr {
                                out[k] = fj[d] - fi[d];
                                k += 1;
                            }
                        }
                        out[k] = fj[layout::SPEAKING] - fi[layout::SPEAKING];
                    }
                    FeatureLayout::Generic => {
                        for d in 0..x.dim {
                            out[d] = fj[d] - fi[d];
                        }
                    }
                }
                partner_rows.push(s * n + j);
                focal_rows.push(s * n + i);
                row += 1;
            }
        }
    }
    Ok(PairFeatures {
        features,
        partner_rows,
        focal_rows,
    })
}

/// Encodes a window of per-step inputs into a fixed-size vector.
///
/// The GRU kind runs the steps recurrently and projects the final state; the
/// MLP kind embeds each step, collapses steps and features into one vector and
/// applies an MLP. Both expose per-step states.
#[derive(Debug, Clone)]
pub enum SeqEncoder {
    Gru { gru: Gru, proj: Linear },
    Mlp { embed: Linear, mlp: Mlp, len: usize },
}

impl SeqEncoder {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        pb: &mut ParamBuilder,
        kind: EncoderKind,
        in_dim: usize,
        len: usize,
        hidden: usize,
        layers: usize,
        out_dim: usize,
        dropout: f64,
    ) -> Self {
        match kind {
            EncoderKind::Gru => SeqEncoder::Gru {
                gru: Gru::new(&mut pb.sub("gru"), in_dim, hidden, layers),
                proj: Linear::new(&mut pb.sub("proj"), hidden, out_dim),
            },
            EncoderKind::Mlp => SeqEncoder::Mlp {
                embed: Linear::new(&mut pb.sub("embed"), in_dim, hidden),
                mlp: Mlp::with_hidden(
                    &mut pb.sub("mlp"),
                    len * hidden,
                    hidden,
                    layers,
                    out_dim,
                    dropout,
                ),
                len,
            },
        }
    }

    pub fn state_dim(&self) -> usize {
        match self {
            SeqEncoder::Gru { gru, .. } => gru.hidden(),
            SeqEncoder::Mlp { embed, .. } => embed.out_dim,
        }
    }

    /// Returns the encoding and the per-step states.
    pub fn forward(&self, t: &mut Tape, steps: &[Var]) -> Result<(Var, Vec<Var>)> {
        if steps.is_empty() {
            return Err(Error::Shape("cannot encode an empty sequence".into()));
        }
        match self {
            SeqEncoder::Gru { gru, proj } => {
                let states = gru.run(t, steps);
                let e = proj.forward(t, *states.last().unwrap());
                Ok((e, states))
            }
            SeqEncoder::Mlp { embed, mlp, len } => {
                if steps.len() != *len {
                    return Err(Error::Shape(format!(
                        "MLP encoder expects {len} steps, got {}",
                        steps.len()
                    )));
                }
                let states: Vec<Var> = steps
                    .iter()
                    .map(|&x| {
                        let h = embed.forward(t, x);
                        t.relu(h)
                    })
                    .collect();
                let flat = t.concat_cols(&states);
                Ok((mlp.forward(t, flat), states))
            }
        }
    }
}

/// Encodes each participant's observed window together with a max-pooled view
/// of their partners, then adds the offset encoding.
#[derive(Debug, Clone)]
pub struct SocialEncoder {
    pub self_encoder: SeqEncoder,
    pub embedder: Option<Mlp>,
    pub pre_pooler: Option<Mlp>,
    pub partner_encoder: Option<SeqEncoder>,
    pub combiner: Linear,
    pub layout: FeatureLayout,
    pub pool_last_only: bool,
    pub rep_dim: usize,
}

/// Intermediate encodings of a [`SocialEncoder`] pass, one row per
/// `(sample, participant)`.
pub struct SocialEncoding {
    pub e_self: Var,
    pub e_partner: Var,
    pub e_ind: Var,
    pub e: Var,
}

impl SocialEncoder {
    pub fn new(pb: &mut ParamBuilder, cfg: &ModelConfig) -> Self {
        let kind = cfg.encoder_kind;
        let self_encoder = SeqEncoder::new(
            &mut pb.sub("self_encoder"),
            kind,
            cfg.data_dim,
            cfg.obs_len,
            cfg.seq_hidden,
            cfg.seq_layers,
            cfg.rep_dim,
            cfg.dropout,
        );
        let (embedder, pre_pooler, partner_encoder) = if cfg.no_pool {
            (None, None, None)
        } else {
            let rel = relative_dim(cfg.layout, cfg.data_dim);
            let ph = cfg.pooler_hidden;
            let hidden_layers = cfg.pooler_layers.saturating_sub(1);
            let embedder =
                Mlp::with_hidden(&mut pb.sub("embedder"), rel, ph, hidden_layers, ph, 0.0);
            let pre_pooler = Mlp::with_hidden(
                &mut pb.sub("pre_pooler"),
                ph + self_encoder.state_dim(),
                ph,
                hidden_layers,
                cfg.pooler_out,
                0.0,
            );
            let pooled_len = if cfg.pool_last_only { 1 } else { cfg.obs_len };
            let partner = SeqEncoder::new(
                &mut pb.sub("partner_encoder"),
                kind,
                cfg.pooler_out,
                pooled_len,
                cfg.seq_hidden,
                cfg.seq_layers,
                cfg.rep_dim,
                cfg.dropout,
            );
            (Some(embedder), Some(pre_pooler), Some(partner))
        };
        let combiner = Linear::without_bias(&mut pb.sub("combiner"), 2 * cfg.rep_dim, cfg.rep_dim);
        Self {
            self_encoder,
            embedder,
            pre_pooler,
            partner_encoder,
            combiner,
            layout: cfg.layout,
            pool_last_only: cfg.pool_last_only,
            rep_dim: cfg.rep_dim,
        }
    }

    /// Per-step max-pooled partner features, `rows x pooler_out` each. With a
    /// single participant every step is the zero vector.
    pub fn pool_partners(
        &self,
        t: &mut Tape,
        x: &SampleTensor,
        states: &[Var],
    ) -> Result<Vec<Var>> {
        let (embedder, pre_pooler) = match (&self.embedder, &self.pre_pooler) {
            (Some(e), Some(p)) => (e, p),
            _ => return Err(Error::Config("pooling disabled for this encoder".into())),
        };
        let steps: Vec<usize> = if self.pool_last_only {
            vec![x.obs_len - 1]
        } else {
            (0..x.obs_len).collect()
        };
        let rows = x.rows();
        if x.n_participants < 2 {
            return Ok(steps
                .iter()
                .map(|_| t.zeros(rows, pre_pooler.out_dim()))
                .collect());
        }
        let mut pooled = Vec::with_capacity(steps.len());
        for &step in &steps {
            let pf = pair_features(x, step, self.layout)?;
            let feats = t.input(pf.features);
            let emb = embedder.forward(t, feats);
            let partner_state = t.gather_rows(states[step], &pf.partner_rows);
            let joined = t.concat_cols(&[emb, partner_state]);
            let pre = pre_pooler.forward(t, joined);
            pooled.push(t.segment_max(pre, &pf.focal_rows, rows));
        }
        Ok(pooled)
    }

    pub fn forward(&self, t: &mut Tape, x: &SampleTensor) -> Result<SocialEncoding> {
        let steps: Vec<Var> = (0..x.obs_len)
            .map(|s| {
                let m = step_matrix(x, Window::Observed, s);
                t.input(m)
            })
            .collect();
        let (e_self, states) = self.self_encoder.forward(t, &steps)?;
        let e_partner = match &self.partner_encoder {
            None => t.zeros(x.rows(), self.rep_dim),
            Some(enc) => {
                let pooled = self.pool_partners(t, x, &states)?;
                enc.forward(t, &pooled)?.0
            }
        };
        let e_ind = combine(t, &self.combiner, e_self, e_partner)?;
        let oe = t.input(offset_matrix(&x.offsets, x.n_participants, self.rep_dim)?);
        let e = t.add(e_ind, oe);
        Ok(SocialEncoding {
            e_self,
            e_partner,
            e_ind,
            e,
        })
    }
}

/// `W [e_self; e_partner]` with no bias.
pub fn combine(t: &mut Tape, w: &Linear, e_self: Var, e_partner: Var) -> Result<Var> {
    let (a, b) = (t.shape(e_self), t.shape(e_partner));
    if a.0 != b.0 || a.1 + b.1 != w.in_dim {
        return Err(Error::Shape(format!(
            "combiner expects {} columns, got {} + {}",
            w.in_dim, a.1, b.1
        )));
    }
    let cat = t.concat_cols(&[e_self, e_partner]);
    Ok(w.forward(t, cat))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::config::ModelConfig;
    use crate::nn::ParamStore;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn offset_encoding_values() {
        let zero = encode_offset(0, 8).unwrap();
        for m in 0..4 {
            assert_eq!(zero[2 * m], 0.0);
            assert_eq!(zero[2 * m + 1], 1.0);
        }
        let one = encode_offset(1, 8).unwrap();
        assert!((one[0] - 0.8414709848078965).abs() < 1e-12);
        assert!((one[1] - 0.5403023058681398).abs() < 1e-12);
        for dt in [1, 7, 50, 499, 10_000] {
            assert!(encode_offset(dt, 64)
                .unwrap()
                .iter()
                .all(|v| v.abs() <= 1.0));
        }
        assert!(matches!(encode_offset(3, 7), Err(Error::Config(_))));
    }

    #[test]
    fn offset_encodings_are_distinct() {
        let encs: Vec<Vec<f64>> = (1..=500).map(|dt| encode_offset(dt, 64).unwrap()).collect();
        let mut min_dist = f64::INFINITY;
        for a in 0..encs.len() {
            for b in a + 1..encs.len() {
                let d: f64 = encs[a]
                    .iter()
                    .zip(&encs[b])
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt();
                min_dist = min_dist.min(d);
            }
        }
        assert!(min_dist > 1e-6, "min pairwise distance {min_dist}");
    }

    fn zero_params(store: &mut ParamStore) {
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            store.get_mut(id).fill(0.0);
        }
    }

    fn toy_cfg(kind: EncoderKind) -> ModelConfig {
        let mut cfg = ModelConfig::tiny_social(kind, FeatureLayout::Generic, 2);
        cfg.obs_len = 3;
        cfg
    }

    fn toy_tensor(n: usize) -> SampleTensor {
        let mut x = SampleTensor::empty(n, 3, 2, 2);
        for s in 0..2 {
            for v in 0..n * 3 * 2 {
                x.observed.push(((s * 31 + v * 7) % 11) as f64 / 5.0 - 1.0);
            }
            for v in 0..n * 2 * 2 {
                x.future.push((v % 5) as f64 / 4.0);
            }
            x.offsets.push(1 + s as i64);
            x.n_samples += 1;
        }
        x
    }

    #[test]
    fn zero_parameters_give_zero_encoding() {
        for kind in [EncoderKind::Gru, EncoderKind::Mlp] {
            let cfg = toy_cfg(kind);
            let mut store = ParamStore::new();
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let enc = SocialEncoder::new(&mut ParamBuilder::new(&mut store, &mut rng), &cfg);
            zero_params(&mut store);
            let x = toy_tensor(3);
            let mut t = Tape::new(&store);
            let out = enc.forward(&mut t, &x).unwrap();
            assert!(t.value(out.e_self).iter().all(|&v| v == 0.0));
            assert!(t.value(out.e_partner).iter().all(|&v| v == 0.0));
            assert!(t.value(out.e_ind).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn mlp_encoder_rejects_wrong_length() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let enc = SeqEncoder::new(
            &mut ParamBuilder::new(&mut store, &mut rng),
            EncoderKind::Mlp,
            2,
            3,
            4,
            1,
            4,
            0.0,
        );
        let mut t = Tape::new(&store);
        let steps: Vec<Var> = (0..2).map(|_| t.zeros(1, 2)).collect();
        assert!(matches!(enc.forward(&mut t, &steps), Err(Error::Shape(_))));
    }

    #[test]
    fn combine_selects_blocks() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let w = Linear::without_bias(&mut ParamBuilder::new(&mut store, &mut rng), 4, 2);
        let a = Tensor::from_shape_vec((1, 2), vec![1.5, -2.0]).unwrap();
        let b = Tensor::from_shape_vec((1, 2), vec![0.25, 3.0]).unwrap();
        for (left, expected) in [(true, &a), (false, &b)] {
            let m = store.get_mut(w.weight);
            m.fill(0.0);
            let off = if left { 0 } else { 2 };
            m[[off, 0]] = 1.0;
            m[[off + 1, 1]] = 1.0;
            let mut t = Tape::new(&store);
            let (va, vb) = (t.input(a.clone()), t.input(b.clone()));
            let out = combine(&mut t, &w, va, vb).unwrap();
            assert_eq!(t.value(out), expected);
        }
        let mut t = Tape::new(&store);
        let (va, vb) = (t.input(a.clone()), t.input(Tensor::zeros((1, 3))));
        assert!(combine(&mut t, &w, va, vb).is_err());
    }
}
