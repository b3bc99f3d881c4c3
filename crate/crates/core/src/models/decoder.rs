//! Sequence decoders producing one output per future step.

use crate::error::{Error, Result};
use crate::models::config::EncoderKind;
use crate::nn::{Gru, Linear, Mlp, ParamBuilder, Tape, Var};

/// Decodes a conditioning vector into a future window.
///
/// Stochastic decoders emit a mean and a standard deviation per output;
/// deterministic ones (the auxiliary decoders) emit only the mean. Output
/// matrices are `rows x (fut_len * width)` with steps major.
#[derive(Debug, Clone)]
pub enum SeqDecoder {
    Gru {
        gru: Gru,
        init: Linear,
        head: Linear,
        width: usize,
        stochastic: bool,
    },
    Mlp {
        mlp: Mlp,
        fut_len: usize,
        width: usize,
        stochastic: bool,
    },
}

pub struct Decoded {
    pub mean: Var,
    pub std: Option<Var>,
}

impl SeqDecoder {
    /// `width` is the per-step output width; `cond_dim` the conditioning
    /// width. For the GRU kind every step also sees the previous output.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        pb: &mut ParamBuilder,
        kind: EncoderKind,
        cond_dim: usize,
        width: usize,
        fut_len: usize,
        hidden: usize,
        layers: usize,
        dropout: f64,
        stochastic: bool,
    ) -> Self {
        let mult = if stochastic { 2 } else { 1 };
        match kind {
            EncoderKind::Gru => SeqDecoder::Gru {
                gru: Gru::new(&mut pb.sub("gru"), width + cond_dim, hidden, layers),
                init: Linear::new(&mut pb.sub("init"), cond_dim, hidden * layers.max(1)),
                head: Linear::new(&mut pb.sub("head"), hidden, mult * width),
                width,
                stochastic,
            },
            EncoderKind::Mlp => SeqDecoder::Mlp {
                mlp: Mlp::with_hidden(
                    &mut pb.sub("mlp"),
                    cond_dim,
                    hidden,
                    layers,
                    mult * fut_len * width,
                    dropout,
                ),
                fut_len,
                width,
                stochastic,
            },
        }
    }

    fn stochastic(&self) -> bool {
        match self {
            SeqDecoder::Gru { stochastic, .. } | SeqDecoder::Mlp { stochastic, .. } => *stochastic,
        }
    }

    /// `first` is the last observed step (GRU kind only); `teacher` supplies
    /// ground-truth steps to feed back instead of the predicted mean.
    pub fn decode(
        &self,
        t: &mut Tape,
        cond: Var,
        first: Option<Var>,
        fut_len: usize,
        teacher: Option<&[Var]>,
        std_floor: f64,
    ) -> Result<Decoded> {
        let stochastic = self.stochastic();
        let split = |t: &mut Tape, out: Var| -> (Var, Option<Var>) {
            if stochastic {
                let cols = t.shape(out).1 / 2;
                let mean = t.slice_cols(out, 0, cols);
                let raw = t.slice_cols(out, cols, cols);
                let sp = t.softplus(raw);
                (mean, Some(t.add_scalar(sp, std_floor)))
            } else {
                (out, None)
            }
        };
        match self {
            SeqDecoder::Mlp {
                mlp, fut_len: len, ..
            } => {
                if *len != fut_len {
                    return Err(Error::Shape(format!(
                        "MLP decoder produces {len} steps, {fut_len} requested"
                    )));
                }
                let out = mlp.forward(t, cond);
                let (mean, std) = split(t, out);
                Ok(Decoded { mean, std })
            }
            SeqDecoder::Gru {
                gru, init, head, ..
            } => {
                let first =
                    first.ok_or_else(|| Error::Shape("GRU decoder needs a first input".into()))?;
                if let Some(tf) = teacher {
                    if tf.len() < fut_len {
                        return Err(Error::Shape("teacher sequence shorter than horizon".into()));
                    }
                }
                let hidden = gru.hidden();
                let h0 = init.forward(t, cond);
                let mut states: Vec<Var> = (0..gru.layers())
                    .map(|l| t.slice_cols(h0, l * hidden, hidden))
                    .collect();
                let mut prev = first;
                let mut means = Vec::with_capacity(fut_len);
                let mut stds = Vec::with_capacity(fut_len);
                for step in 0..fut_len {
                    let inp = t.concat_cols(&[prev, cond]);
                    let h = gru.step(t, inp, &mut states);
                    let out = head.forward(t, h);
                    let (mean, std) = split(t, out);
                    prev = match teacher {
                        Some(tf) => tf[step],
                        None => mean,
                    };
                    means.push(mean);
                    if let Some(s) = std {
                        stds.push(s);
                    }
                }
                let mean = t.concat_cols(&means);
                let std = if stds.is_empty() {
                    None
                } else {
                    Some(t.concat_cols(&stds))
                };
                Ok(Decoded { mean, std })
            }
        }
    }
}
