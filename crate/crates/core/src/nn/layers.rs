use super::params::{ParamBuilder, ParamId};
use super::tape::{Tape, Var};

/// Affine map `x W + b`, with `W` stored `in x out`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    /// PyTorch-style uniform initialization, bound `1/sqrt(in_dim)`.
    pub fn new(pb: &mut ParamBuilder, in_dim: usize, out_dim: usize) -> Self {
        let bound = 1.0 / (in_dim.max(1) as f64).sqrt();
        Self {
            weight: pb.uniform("weight", in_dim, out_dim, bound),
            bias: Some(pb.uniform("bias", 1, out_dim, bound)),
            in_dim,
            out_dim,
        }
    }

    pub fn without_bias(pb: &mut ParamBuilder, in_dim: usize, out_dim: usize) -> Self {
        let bound = 1.0 / (in_dim.max(1) as f64).sqrt();
        Self {
            weight: pb.uniform("weight", in_dim, out_dim, bound),
            bias: None,
            in_dim,
            out_dim,
        }
    }

    pub fn forward(&self, t: &mut Tape, x: Var) -> Var {
        let w = t.param(self.weight);
        let y = t.matmul(x, w);
        match self.bias {
            Some(b) => {
                let b = t.param(b);
                t.add_row(y, b)
            }
            None => y,
        }
    }
}

/// Stack of linear layers with ReLU (and dropout) between them; the last
/// layer is linear.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub dropout: f64,
}

impl Mlp {
    /// `dims = [in, hidden.., out]`.
    pub fn new(pb: &mut ParamBuilder, dims: &[usize], dropout: f64) -> Self {
        assert!(
            dims.len() >= 2,
            "an MLP needs at least input and output dims"
        );
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(&mut pb.sub(&format!("l{i}")), w[0], w[1]))
            .collect();
        Self { layers, dropout }
    }

    /// `hidden_layers` hidden layers of width `hidden`.
    pub fn with_hidden(
        pb: &mut ParamBuilder,
        in_dim: usize,
        hidden: usize,
        hidden_layers: usize,
        out_dim: usize,
        dropout: f64,
    ) -> Self {
        let mut dims = vec![in_dim];
        dims.extend(std::iter::repeat_n(hidden, hidden_layers));
        dims.push(out_dim);
        Self::new(pb, &dims, dropout)
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim
    }

    pub fn forward(&self, t: &mut Tape, x: Var) -> Var {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(t, h);
            if i < last {
                h = t.relu(h);
                h = t.dropout(h, self.dropout);
            }
        }
        h
    }
}

/// Gated recurrent unit cell with PyTorch gate conventions:
///
/// ```text
/// r = σ(x W_ir + b_ir + h W_hr + b_hr)
/// z = σ(x W_iz + b_iz + h W_hz + b_hz)
/// n = tanh(x W_in + b_in + r ⊙ (h W_hn + b_hn))
/// h' = (1 - z) ⊙ n + z ⊙ h
/// ```
#[derive(Debug, Clone)]
pub struct GruCell {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub b_ih: ParamId,
    pub b_hh: ParamId,
    pub in_dim: usize,
    pub hidden: usize,
}

impl GruCell {
    pub fn new(pb: &mut ParamBuilder, in_dim: usize, hidden: usize) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        Self {
            w_ih: pb.uniform("w_ih", in_dim, 3 * hidden, bound),
            w_hh: pb.uniform("w_hh", hidden, 3 * hidden, bound),
            b_ih: pb.uniform("b_ih", 1, 3 * hidden, bound),
            b_hh: pb.uniform("b_hh", 1, 3 * hidden, bound),
            in_dim,
            hidden,
        }
    }

    pub fn step(&self, t: &mut Tape, x: Var, h: Var) -> Var {
        let hd = self.hidden;
        let w_ih = t.param(self.w_ih);
        let w_hh = t.param(self.w_hh);
        let b_ih = t.param(self.b_ih);
        let b_hh = t.param(self.b_hh);
        let gi = t.matmul(x, w_ih);
        let gi = t.add_row(gi, b_ih);
        let gh = t.matmul(h, w_hh);
        let gh = t.add_row(gh, b_hh);

        let gi_rz = t.slice_cols(gi, 0, 2 * hd);
        let gh_rz = t.slice_cols(gh, 0, 2 * hd);
        let rz = t.add(gi_rz, gh_rz);
        let rz = t.sigmoid(rz);
        let r = t.slice_cols(rz, 0, hd);
        let z = t.slice_cols(rz, hd, hd);

        let gi_n = t.slice_cols(gi, 2 * hd, hd);
        let gh_n = t.slice_cols(gh, 2 * hd, hd);
        let rn = t.mul(r, gh_n);
        let n = t.add(gi_n, rn);
        let n = t.tanh(n);

        // h' = n + z ⊙ (h - n)
        let diff = t.sub(h, n);
        let zd = t.mul(z, diff);
        t.add(n, zd)
    }
}

/// Multi-layer GRU unrolled over a sequence of input matrices.
#[derive(Debug, Clone)]
pub struct Gru {
    pub cells: Vec<GruCell>,
}

impl Gru {
    pub fn new(pb: &mut ParamBuilder, in_dim: usize, hidden: usize, layers: usize) -> Self {
        let cells = (0..layers.max(1))
            .map(|l| {
                let d = if l == 0 { in_dim } else { hidden };
                GruCell::new(&mut pb.sub(&format!("l{l}")), d, hidden)
            })
            .collect();
        Self { cells }
    }

    pub fn hidden(&self) -> usize {
        self.cells[0].hidden
    }

    pub fn layers(&self) -> usize {
        self.cells.len()
    }

    /// Runs the sequence from zero initial state and returns the top-layer
    /// hidden state after every step.
    pub fn run(&self, t: &mut Tape, inputs: &[Var]) -> Vec<Var> {
        let rows = t.shape(inputs[0]).0;
        let mut hs: Vec<Var> = self.cells.iter().map(|c| t.zeros(rows, c.hidden)).collect();
        let mut outputs = Vec::with_capacity(inputs.len());
        for &x in inputs {
            let mut inp = x;
            for (l, cell) in self.cells.iter().enumerate() {
                hs[l] = cell.step(t, inp, hs[l]);
                inp = hs[l];
            }
            outputs.push(inp);
        }
        outputs
    }

    /// Advances every layer one step from the given states.
    pub fn step(&self, t: &mut Tape, x: Var, states: &mut [Var]) -> Var {
        let mut inp = x;
        for (l, cell) in self.cells.iter().enumerate() {
            states[l] = cell.step(t, inp, states[l]);
            inp = states[l];
        }
        inp
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::{ParamStore, Tensor};
    use crate::nn::tape::sigmoid;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gru_matches_manual_recurrence() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let gru = Gru::new(&mut ParamBuilder::new(&mut store, &mut rng), 2, 3, 1);
        let xs = [
            Tensor::from_shape_vec((1, 2), vec![0.3, -0.7]).unwrap(),
            Tensor::from_shape_vec((1, 2), vec![1.1, 0.2]).unwrap(),
        ];
        let mut t = Tape::new(&store);
        let inputs: Vec<Var> = xs.iter().map(|x| t.input(x.clone())).collect();
        let out = gru.run(&mut t, &inputs);
        let got = t.value(out[1]).clone();

        // manual unroll, element by element
        let c = &gru.cells[0];
        let (w_ih, w_hh) = (store.get(c.w_ih), store.get(c.w_hh));
        let (b_ih, b_hh) = (store.get(c.b_ih), store.get(c.b_hh));
        let mut h = [0.0f64; 3];
        for x in &xs {
            let lin = |w: &Tensor, b: &Tensor, v: &[f64], col: usize| -> f64 {
                b[[0, col]] + (0..v.len()).map(|k| v[k] * w[[k, col]]).sum::<f64>()
            };
            let xv = [x[[0, 0]], x[[0, 1]]];
            let mut next = [0.0; 3];
            for j in 0..3 {
                let r = sigmoid(lin(w_ih, b_ih, &xv, j) + lin(w_hh, b_hh, &h, j));
                let z = sigmoid(lin(w_ih, b_ih, &xv, 3 + j) + lin(w_hh, b_hh, &h, 3 + j));
                let n = (lin(w_ih, b_ih, &xv, 6 + j) + r * lin(w_hh, b_hh, &h, 6 + j)).tanh();
                next[j] = (1.0 - z) * n + z * h[j];
            }
            h = next;
        }
        for j in 0..3 {
            assert!((got[[0, j]] - h[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn mlp_shapes_and_param_count() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mlp = Mlp::with_hidden(
            &mut ParamBuilder::new(&mut store, &mut rng),
            5,
            8,
            2,
            3,
            0.0,
        );
        assert_eq!(store.count(), 5 * 8 + 8 + 8 * 8 + 8 + 8 * 3 + 3);
        let mut t = Tape::new(&store);
        let x = t.input(Tensor::ones((4, 5)));
        let y = mlp.forward(&mut t, x);
        assert_eq!(t.shape(y), (4, 3));
    }
}
