//! Cross-attention from target encodings onto context pair representations.

use crate::error::{Error, Result};
use crate::models::config::AttentionKind;
use crate::nn::{Linear, ParamBuilder, Tape, Var};

#[derive(Debug, Clone)]
pub enum CrossAttention {
    /// `softmax(Q Kᵀ / √d) V` on the raw encodings.
    Dot,
    /// Learned per-head projections followed by an output projection.
    Multihead {
        query: Linear,
        key: Linear,
        value: Linear,
        output: Linear,
        heads: usize,
        head_dim: usize,
    },
}

impl CrossAttention {
    pub fn new(
        pb: &mut ParamBuilder,
        kind: AttentionKind,
        key_dim: usize,
        value_dim: usize,
        heads: usize,
        head_dim: usize,
    ) -> Result<Self> {
        match kind {
            AttentionKind::None => Err(Error::Config("no attention configured".into())),
            AttentionKind::Dot => Ok(CrossAttention::Dot),
            AttentionKind::Multihead => Ok(CrossAttention::Multihead {
                query: Linear::new(&mut pb.sub("query"), key_dim, heads * head_dim),
                key: Linear::new(&mut pb.sub("key"), key_dim, heads * head_dim),
                value: Linear::new(&mut pb.sub("value"), value_dim, heads * head_dim),
                output: Linear::new(&mut pb.sub("output"), heads * head_dim, value_dim),
                heads,
                head_dim,
            }),
        }
    }

    /// `queries`: targets x d_k, `keys`: items x d_k, `values`: items x d_v.
    /// Returns targets x d_v.
    pub fn forward(&self, t: &mut Tape, queries: Var, keys: Var, values: Var) -> Result<Var> {
        let dq = t.shape(queries).1;
        let (nk, dk) = t.shape(keys);
        let (nv, _) = t.shape(values);
        if dq != dk || nk != nv || nk == 0 {
            return Err(Error::Shape(format!(
                "attention over {nk} keys of width {dk} and {nv} values with queries of width {dq}"
            )));
        }
        match self {
            CrossAttention::Dot => Ok(attend(t, queries, keys, values, dk)),
            CrossAttention::Multihead {
                query,
                key,
                value,
                output,
                heads,
                head_dim,
            } => {
                let q = query.forward(t, queries);
                let k = key.forward(t, keys);
                let v = value.forward(t, values);
                let outs: Vec<Var> = (0..*heads)
                    .map(|h| {
                        let qh = t.slice_cols(q, h * head_dim, *head_dim);
                        let kh = t.slice_cols(k, h * head_dim, *head_dim);
                        let vh = t.slice_cols(v, h * head_dim, *head_dim);
                        attend(t, qh, kh, vh, *head_dim)
                    })
                    .collect();
                let cat = t.concat_cols(&outs);
                Ok(output.forward(t, cat))
            }
        }
    }
}

fn attend(t: &mut Tape, q: Var, k: Var, v: Var, dim: usize) -> Var {
    let kt = t.transpose(k);
    let scores = t.matmul(q, kt);
    let scores = t.scale(scores, 1.0 / (dim as f64).sqrt());
    let w = t.softmax_rows(scores);
    t.matmul(w, v)
}
