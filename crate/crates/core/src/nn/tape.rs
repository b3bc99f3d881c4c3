//! Reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! A [`Tape`] records every operation of one forward pass. Parameters enter
//! the tape once per pass through [`Tape::param`]; [`Tape::backward`] returns
//! the gradient of a scalar output with respect to each of them.

use std::collections::HashMap;

use ndarray::{s, Array2, Axis, Zip};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::params::{ParamId, ParamStore, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op {
    Input,
    Param,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    AddRow(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Softplus(Var),
    Exp(Var),
    Log(Var),
    Sqrt(Var),
    Square(Var),
    Clamp(Var, f64, f64),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    ConcatRows(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    SegmentMean(Var, Vec<usize>, Vec<usize>),
    SegmentMax(Var, Array2<usize>),
    SumCols(Var),
    SumRows(Var),
    Sum(Var),
    SoftmaxRows(Var),
    Transpose(Var),
    Reshape(Var),
    MaskMul(Var, Tensor),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Gradients with respect to the parameters touched by a forward pass.
#[derive(Debug, Default, Clone)]
pub struct Gradients {
    pub by_param: HashMap<ParamId, Tensor>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.by_param.get(&id)
    }
}

pub struct Tape<'a> {
    store: &'a ParamStore,
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
    training: bool,
    rng: Option<ChaCha8Rng>,
}

impl<'a> Tape<'a> {
    /// Tape for inference: dropout disabled.
    pub fn new(store: &'a ParamStore) -> Self {
        Self {
            store,
            nodes: Vec::new(),
            params: HashMap::new(),
            training: false,
            rng: None,
        }
    }

    /// Tape for training; `rng` drives dropout masks.
    pub fn training(store: &'a ParamStore, rng: ChaCha8Rng) -> Self {
        Self {
            store,
            nodes: Vec::new(),
            params: HashMap::new(),
            training: true,
            rng: Some(rng),
        }
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dim()
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let t = self.value(v);
        debug_assert_eq!(t.len(), 1);
        t[[0, 0]]
    }

    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Input)
    }

    pub fn zeros(&mut self, rows: usize, cols: usize) -> Var {
        self.input(Tensor::zeros((rows, cols)))
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(self.store.get(id).clone(), Op::Param);
        self.params.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        self.push(v, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) / self.value(b);
        self.push(v, Op::Div(a, b))
    }

    /// `a + row` with `row` of shape `1 x cols` broadcast over rows.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let v = self.value(a) + self.value(row);
        self.push(v, Op::AddRow(a, row))
    }

    /// `a * col` with `col` of shape `rows x 1` broadcast over columns.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Var {
        let v = self.value(a) * self.value(col);
        self.push(v, Op::MulCol(a, col))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a) * k;
        self.push(v, Op::Scale(a, k))
    }

    pub fn add_scalar(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a) + k;
        self.push(v, Op::AddScalar(a))
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let v = self.value(a).mapv(f);
        self.push(v, op)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, f64::tanh, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.map(a, softplus, Op::Softplus(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.map(a, f64::exp, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.map(a, f64::ln, Op::Log(a))
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        self.map(a, f64::sqrt, Op::Sqrt(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.map(a, |x| x * x, Op::Square(a))
    }

    /// Clamps into `[lo, hi]`; gradient is zero where clamped.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.map(a, |x| x.clamp(lo, hi), Op::Clamp(a, lo, hi))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let v = ndarray::concatenate(Axis(1), &views).expect("concat_cols: row mismatch");
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, width: usize) -> Var {
        let v = self.value(a).slice(s![.., start..start + width]).to_owned();
        self.push(v, Op::SliceCols(a, start))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let v = ndarray::concatenate(Axis(0), &views).expect("concat_rows: col mismatch");
        self.push(v, Op::ConcatRows(parts.to_vec()))
    }

    /// Output row `k` is input row `idx[k]`; indices may repeat.
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Var {
        let v = self.value(a).select(Axis(0), idx);
        self.push(v, Op::GatherRows(a, idx.to_vec()))
    }

    /// Mean of the rows assigned to each of `n_segments` segments.
    /// Empty segments yield zero rows. Sums are correctly rounded, so the
    /// result does not depend on row order.
    pub fn segment_mean(&mut self, a: Var, segment: &[usize], n_segments: usize) -> Var {
        let x = self.value(a);
        assert_eq!(segment.len(), x.nrows());
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_segments];
        for (r, &sg) in segment.iter().enumerate() {
            members[sg].push(r);
        }
        let counts: Vec<usize> = members.iter().map(Vec::len).collect();
        let mut out = Tensor::zeros((n_segments, x.ncols()));
        for (sg, rows) in members.iter().enumerate() {
            if rows.is_empty() {
                continue;
            }
            for c in 0..x.ncols() {
                out[[sg, c]] = exact_sum(rows.iter().map(|&r| x[[r, c]])) / rows.len() as f64;
            }
        }
        self.push(out, Op::SegmentMean(a, segment.to_vec(), counts))
    }

    /// Element-wise max over the rows of each segment. Every segment must
    /// be non-empty. Ties resolve to the first row, so the value is exactly
    /// invariant to row order.
    pub fn segment_max(&mut self, a: Var, segment: &[usize], n_segments: usize) -> Var {
        let x = self.value(a);
        assert_eq!(segment.len(), x.nrows());
        let cols = x.ncols();
        let mut out = Tensor::from_elem((n_segments, cols), f64::NEG_INFINITY);
        let mut arg = Array2::from_elem((n_segments, cols), usize::MAX);
        for (r, &sg) in segment.iter().enumerate() {
            for c in 0..cols {
                let v = x[[r, c]];
                if arg[[sg, c]] == usize::MAX || v > out[[sg, c]] {
                    out[[sg, c]] = v;
                    arg[[sg, c]] = r;
                }
            }
        }
        assert!(
            arg.iter().all(|&r| r != usize::MAX),
            "segment_max: empty segment"
        );
        self.push(out, Op::SegmentMax(a, arg))
    }

    /// Row sums, shape `rows x 1`.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let v = self.value(a).sum_axis(Axis(1)).insert_axis(Axis(1));
        self.push(v, Op::SumCols(a))
    }

    /// Column sums, shape `1 x cols`.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let v = self.value(a).sum_axis(Axis(0)).insert_axis(Axis(0));
        self.push(v, Op::SumRows(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Tensor::from_elem((1, 1), self.value(a).sum());
        self.push(v, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut v = self.value(a).clone();
        for mut row in v.rows_mut() {
            let m = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            row.mapv_inplace(|x| (x - m).exp());
            let z = row.sum();
            row.mapv_inplace(|x| x / z);
        }
        self.push(v, Op::SoftmaxRows(a))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).t().to_owned();
        self.push(v, Op::Transpose(a))
    }

    /// Row-major reshape.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let flat: Vec<f64> = self.value(a).iter().copied().collect();
        let v = Tensor::from_shape_vec((rows, cols), flat).expect("reshape: size mismatch");
        self.push(v, Op::Reshape(a))
    }

    /// Inverted dropout; identity when not training or `p == 0`.
    pub fn dropout(&mut self, a: Var, p: f64) -> Var {
        if !self.training || p <= 0.0 {
            return a;
        }
        let (r, c) = self.shape(a);
        let keep = 1.0 - p;
        let rng = self.rng.as_mut().expect("training tape without rng");
        let mask = Tensor::from_shape_fn((r, c), |_| {
            if rng.random::<f64>() < keep {
                1.0 / keep
            } else {
                0.0
            }
        });
        let v = self.value(a) * &mask;
        self.push(v, Op::MaskMul(a, mask))
    }

    /// Gradients of the scalar `output` with respect to every parameter.
    pub fn backward(&self, output: Var) -> Gradients {
        assert_eq!(
            self.value(output).len(),
            1,
            "backward needs a scalar output"
        );
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Tensor::ones((1, 1)));

        for i in (0..=output.0).rev() {
            let g = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            let node = &self.nodes[i];
            match &node.op {
                Op::Input => {}
                Op::Param => {
                    grads[i] = Some(g);
                }
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.value(*b).t());
                    let gb = self.value(*a).t().dot(&g);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *b, g.clone());
                    accumulate(&mut grads, *a, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *b, -&g);
                    accumulate(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let ga = &g * self.value(*b);
                    let gb = &g * self.value(*a);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Div(a, b) => {
                    let bv = self.value(*b);
                    let ga = &g / bv;
                    let gb = -(&g * &node.value) / bv;
                    accumulate(&mut grads, *b, gb);
                    accumulate(&mut grads, *a, ga);
                }
                Op::AddRow(a, row) => {
                    let gr = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    accumulate(&mut grads, *row, gr);
                    accumulate(&mut grads, *a, g);
                }
                Op::MulCol(a, col) => {
                    let gc = (&g * self.value(*a)).sum_axis(Axis(1)).insert_axis(Axis(1));
                    let ga = &g * self.value(*col);
                    accumulate(&mut grads, *col, gc);
                    accumulate(&mut grads, *a, ga);
                }
                Op::Scale(a, k) => accumulate(&mut grads, *a, g * *k),
                Op::AddScalar(a) => accumulate(&mut grads, *a, g),
                Op::Sigmoid(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga)
                        .and(&node.value)
                        .for_each(|g, &y| *g *= y * (1.0 - y));
                    accumulate(&mut grads, *a, ga);
                }
                Op::Tanh(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga)
                        .and(&node.value)
                        .for_each(|g, &y| *g *= 1.0 - y * y);
                    accumulate(&mut grads, *a, ga);
                }
                Op::Relu(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga).and(self.value(*a)).for_each(|g, &x| {
                        if x <= 0.0 {
                            *g = 0.0
                        }
                    });
                    accumulate(&mut grads, *a, ga);
                }
                Op::Softplus(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga)
                        .and(self.value(*a))
                        .for_each(|g, &x| *g *= sigmoid(x));
                    accumulate(&mut grads, *a, ga);
                }
                Op::Exp(a) => accumulate(&mut grads, *a, g * &node.value),
                Op::Log(a) => accumulate(&mut grads, *a, g / self.value(*a)),
                Op::Sqrt(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga)
                        .and(&node.value)
                        .for_each(|g, &y| *g = if y > 0.0 { *g * 0.5 / y } else { 0.0 });
                    accumulate(&mut grads, *a, ga);
                }
                Op::Square(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga)
                        .and(self.value(*a))
                        .for_each(|g, &x| *g *= 2.0 * x);
                    accumulate(&mut grads, *a, ga);
                }
                Op::Clamp(a, lo, hi) => {
                    let mut ga = g;
                    Zip::from(&mut ga).and(self.value(*a)).for_each(|g, &x| {
                        if x < *lo || x > *hi {
                            *g = 0.0
                        }
                    });
                    accumulate(&mut grads, *a, ga);
                }
                Op::ConcatCols(parts) => {
                    let mut c0 = 0;
                    for p in parts {
                        let w = self.value(*p).ncols();
                        accumulate(&mut grads, *p, g.slice(s![.., c0..c0 + w]).to_owned());
                        c0 += w;
                    }
                }
                Op::SliceCols(a, start) => {
                    let (r, c) = self.shape(*a);
                    let mut ga = Tensor::zeros((r, c));
                    ga.slice_mut(s![.., *start..*start + g.ncols()]).assign(&g);
                    accumulate(&mut grads, *a, ga);
                }
                Op::ConcatRows(parts) => {
                    let mut r0 = 0;
                    for p in parts {
                        let h = self.value(*p).nrows();
                        accumulate(&mut grads, *p, g.slice(s![r0..r0 + h, ..]).to_owned());
                        r0 += h;
                    }
                }
                Op::GatherRows(a, idx) => {
                    let (r, c) = self.shape(*a);
                    let mut ga = Tensor::zeros((r, c));
                    for (k, &src) in idx.iter().enumerate() {
                        let mut row = ga.row_mut(src);
                        row += &g.row(k);
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::SegmentMean(a, segment, counts) => {
                    let (r, c) = self.shape(*a);
                    let mut ga = Tensor::zeros((r, c));
                    for (row, &sg) in segment.iter().enumerate() {
                        let k = 1.0 / counts[sg] as f64;
                        ga.row_mut(row).scaled_add(k, &g.row(sg));
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::SegmentMax(a, arg) => {
                    let (r, c) = self.shape(*a);
                    let mut ga = Tensor::zeros((r, c));
                    for ((sg, col), &src) in arg.indexed_iter() {
                        ga[[src, col]] += g[[sg, col]];
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::SumCols(a) => {
                    let (r, c) = self.shape(*a);
                    let ga = Tensor::from_shape_fn((r, c), |(i, _)| g[[i, 0]]);
                    accumulate(&mut grads, *a, ga);
                }
                Op::SumRows(a) => {
                    let (r, c) = self.shape(*a);
                    let ga = Tensor::from_shape_fn((r, c), |(_, j)| g[[0, j]]);
                    accumulate(&mut grads, *a, ga);
                }
                Op::Sum(a) => {
                    let (r, c) = self.shape(*a);
                    accumulate(&mut grads, *a, Tensor::from_elem((r, c), g[[0, 0]]));
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut ga = &g * y;
                    let dots = ga.sum_axis(Axis(1));
                    Zip::indexed(&mut ga).for_each(|(i, j), v| *v -= y[[i, j]] * dots[i]);
                    accumulate(&mut grads, *a, ga);
                }
                Op::Transpose(a) => accumulate(&mut grads, *a, g.t().to_owned()),
                Op::Reshape(a) => {
                    let (r, c) = self.shape(*a);
                    let flat: Vec<f64> = g.iter().copied().collect();
                    accumulate(
                        &mut grads,
                        *a,
                        Tensor::from_shape_vec((r, c), flat).unwrap(),
                    );
                }
                Op::MaskMul(a, mask) => accumulate(&mut grads, *a, g * mask),
            }
        }

        let by_param = self
            .params
            .iter()
            .map(|(&id, &v)| {
                let g = grads[v.0]
                    .take()
                    .unwrap_or_else(|| Tensor::zeros(self.store.get(id).dim()));
                (id, g)
            })
            .collect();
        Gradients { by_param }
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(acc) => *acc += &g,
        slot @ None => *slot = Some(g),
    }
}

/// Correctly rounded sum of finite values (Shewchuk's algorithm with the
/// half-even correction used by Python's `math.fsum`). Falls back to a plain
/// sum if anything is non-finite.
pub fn exact_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    let mut naive = 0.0;
    for v in values {
        naive += v;
        let mut x = v;
        let mut i = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        partials.truncate(i);
        partials.push(x);
    }
    if !naive.is_finite() {
        return naive;
    }
    let mut n = partials.len();
    if n == 0 {
        return 0.0;
    }
    n -= 1;
    let mut hi = partials[n];
    let mut lo = 0.0;
    while n > 0 {
        let x = hi;
        n -= 1;
        let y = partials[n];
        hi = x + y;
        lo = y - (hi - x);
        if lo != 0.0 {
            break;
        }
    }
    if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
        let y = lo * 2.0;
        let x = hi + y;
        if y == x - hi {
            hi = x;
        }
    }
    hi
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.max(0.0) + (-x.abs()).exp().ln_1p()
    }
}
