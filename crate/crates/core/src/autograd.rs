//! Minimal reverse-mode automatic differentiation over `f64` matrices.
//!
//! A [`Tape`] records every operation as it runs; [`Tape::backward`] walks
//! the records in reverse and accumulates gradients for every node. All
//! values are two-dimensional arrays; vectors are `1 x n` rows and scalars
//! are `1 x 1`.

use ndarray::{s, Array2, Axis};

/// Probability clamp for the cross-entropy losses. Values outside
/// `[EPS, 1 - EPS]` contribute a constant loss and zero gradient.
pub const PROB_EPS: f64 = 1e-7;

const LN_EPS: f64 = 1e-5;

/// Handle to one node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    MatMulNT(NodeId, NodeId),
    Add(NodeId, NodeId),
    AddBias(NodeId, NodeId),
    MulBias(NodeId, NodeId),
    Scale(NodeId, f64),
    MeanRows(NodeId),
    ConcatCols(Vec<NodeId>),
    GatherRows(NodeId, Vec<usize>),
    VStack(Vec<NodeId>),
    SoftmaxRows(NodeId),
    Tanh(NodeId),
    LayerNormRows(NodeId),
    Logistic(NodeId),
    BceMean(NodeId, Array2<f64>),
    CeMean(NodeId, Vec<usize>),
}

struct Node {
    value: Array2<f64>,
    op: Op,
}

/// Computation record; create one per forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Array2<f64> {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    /// Input node: a constant or a parameter value.
    pub fn leaf(&mut self, value: Array2<f64>) -> NodeId {
        self.push(value, Op::Leaf)
    }

    /// `a[m,k] @ b[k,n]`.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.value(a).dot(self.value(b));
        self.push(value, Op::MatMul(a, b))
    }

    /// `a[m,k] @ b[n,k]^T`.
    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.value(a).dot(&self.value(b).t());
        self.push(value, Op::MatMulNT(a, b))
    }

    /// Elementwise sum of same-shape nodes.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.value(a).dim(), self.value(b).dim(), "add shape mismatch");
        let value = self.value(a) + self.value(b);
        self.push(value, Op::Add(a, b))
    }

    /// `x[m,n] + bias[1,n]`, bias broadcast over rows.
    pub fn add_bias(&mut self, x: NodeId, bias: NodeId) -> NodeId {
        assert_eq!(self.value(bias).nrows(), 1, "bias must be a row");
        assert_eq!(self.value(x).ncols(), self.value(bias).ncols(), "bias width mismatch");
        let value = self.value(x) + self.value(bias);
        self.push(value, Op::AddBias(x, bias))
    }

    /// `x[m,n] * gain[1,n]`, gain broadcast over rows.
    pub fn mul_bias(&mut self, x: NodeId, gain: NodeId) -> NodeId {
        assert_eq!(self.value(gain).nrows(), 1, "gain must be a row");
        assert_eq!(self.value(x).ncols(), self.value(gain).ncols(), "gain width mismatch");
        let value = self.value(x) * self.value(gain);
        self.push(value, Op::MulBias(x, gain))
    }

    pub fn scale(&mut self, x: NodeId, factor: f64) -> NodeId {
        let value = self.value(x) * factor;
        self.push(value, Op::Scale(x, factor))
    }

    /// Column means: `[m,n] -> [1,n]`.
    pub fn mean_rows(&mut self, x: NodeId) -> NodeId {
        let m = self.value(x).nrows();
        assert!(m >= 1, "mean of zero rows");
        let value = self
            .value(x)
            .mean_axis(Axis(0))
            .expect("non-empty")
            .insert_axis(Axis(0));
        self.push(value, Op::MeanRows(x))
    }

    /// Concatenate along columns; all parts share the row count.
    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty(), "concat of nothing");
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let value = ndarray::concatenate(Axis(1), &views).expect("row counts must agree");
        self.push(value, Op::ConcatCols(parts.to_vec()))
    }

    /// Select rows by index; indices may repeat (embedding lookups).
    pub fn gather_rows(&mut self, x: NodeId, indices: Vec<usize>) -> NodeId {
        let src = self.value(x);
        assert!(!indices.is_empty(), "gather of nothing");
        let mut value = Array2::zeros((indices.len(), src.ncols()));
        for (row, &i) in indices.iter().enumerate() {
            assert!(i < src.nrows(), "gather index {i} out of {} rows", src.nrows());
            value.row_mut(row).assign(&src.row(i));
        }
        self.push(value, Op::GatherRows(x, indices))
    }

    /// Stack along rows; all parts share the column count.
    pub fn vstack(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty(), "stack of nothing");
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let value = ndarray::concatenate(Axis(0), &views).expect("column counts must agree");
        self.push(value, Op::VStack(parts.to_vec()))
    }

    /// Row-wise softmax (shift-stabilized).
    pub fn softmax_rows(&mut self, x: NodeId) -> NodeId {
        let mut value = self.value(x).clone();
        for mut row in value.rows_mut() {
            let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            row.mapv_inplace(|v| (v - max).exp());
            let sum = row.sum();
            row.mapv_inplace(|v| v / sum);
        }
        self.push(value, Op::SoftmaxRows(x))
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).mapv(f64::tanh);
        self.push(value, Op::Tanh(x))
    }

    /// Row-wise standardization: `(x - mean) / sqrt(var + 1e-5)`.
    pub fn layer_norm_rows(&mut self, x: NodeId) -> NodeId {
        let src = self.value(x);
        let mut value = src.clone();
        for mut row in value.rows_mut() {
            let mean = row.mean().expect("non-empty row");
            let var = row.mapv(|v| (v - mean).powi(2)).mean().expect("non-empty row");
            let inv = 1.0 / (var + LN_EPS).sqrt();
            row.mapv_inplace(|v| (v - mean) * inv);
        }
        self.push(value, Op::LayerNormRows(x))
    }

    /// Elementwise logistic function `1 / (1 + e^-x)`.
    pub fn logistic(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).mapv(|v| 1.0 / (1.0 + (-v).exp()));
        self.push(value, Op::Logistic(x))
    }

    /// Mean binary cross-entropy of probabilities `p[m,1]` against constant
    /// targets in `{0,1}`; probabilities are clamped to `[PROB_EPS, 1-PROB_EPS]`.
    pub fn bce_mean(&mut self, p: NodeId, targets: Array2<f64>) -> NodeId {
        assert_eq!(self.value(p).dim(), targets.dim(), "target shape mismatch");
        let clamped = self.value(p).mapv(|v| v.clamp(PROB_EPS, 1.0 - PROB_EPS));
        let m = clamped.nrows() as f64;
        let loss = ndarray::Zip::from(&clamped)
            .and(&targets)
            .fold(0.0, |acc, &p, &t| acc - t * p.ln() - (1.0 - t) * (1.0 - p).ln())
            / m;
        self.push(Array2::from_elem((1, 1), loss), Op::BceMean(p, targets))
    }

    /// Mean categorical cross-entropy of row-stochastic `p[m,c]` against
    /// constant class indices, with the same probability clamp.
    pub fn ce_mean(&mut self, p: NodeId, classes: Vec<usize>) -> NodeId {
        let probs = self.value(p);
        assert_eq!(probs.nrows(), classes.len(), "one class per row");
        let m = classes.len() as f64;
        let mut loss = 0.0;
        for (row, &c) in classes.iter().enumerate() {
            assert!(c < probs.ncols(), "class {c} out of {} columns", probs.ncols());
            loss -= probs[[row, c]].clamp(PROB_EPS, 1.0 - PROB_EPS).ln();
        }
        self.push(Array2::from_elem((1, 1), loss / m), Op::CeMean(p, classes))
    }

    /// Gradients of the scalar at `root` with respect to every node.
    pub fn backward(&self, root: NodeId) -> Gradients {
        assert_eq!(self.value(root).dim(), (1, 1), "backward needs a scalar root");
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Array2::ones((1, 1)));

        for id in (0..=root.0).rev() {
            let Some(grad) = grads[id].clone() else { continue };
            match &self.nodes[id].op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let ga = grad.dot(&self.value(*b).t());
                    let gb = self.value(*a).t().dot(&grad);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::MatMulNT(a, b) => {
                    let ga = grad.dot(self.value(*b));
                    let gb = grad.t().dot(self.value(*a));
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, grad.clone());
                    accumulate(&mut grads, *b, grad);
                }
                Op::AddBias(x, bias) => {
                    let gb = grad.sum_axis(Axis(0)).insert_axis(Axis(0));
                    accumulate(&mut grads, *x, grad);
                    accumulate(&mut grads, *bias, gb);
                }
                Op::MulBias(x, gain) => {
                    let gx = &grad * self.value(*gain);
                    let gg = (&grad * self.value(*x))
                        .sum_axis(Axis(0))
                        .insert_axis(Axis(0));
                    accumulate(&mut grads, *x, gx);
                    accumulate(&mut grads, *gain, gg);
                }
                Op::Scale(x, factor) => {
                    accumulate(&mut grads, *x, &grad * *factor);
                }
                Op::MeanRows(x) => {
                    let m = self.value(*x).nrows();
                    let spread = &grad / m as f64;
                    let gx = Array2::from_shape_fn(self.value(*x).dim(), |(_, j)| spread[[0, j]]);
                    accumulate(&mut grads, *x, gx);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.value(p).ncols();
                        let gp = grad.slice(s![.., offset..offset + w]).to_owned();
                        accumulate(&mut grads, p, gp);
                        offset += w;
                    }
                }
                Op::GatherRows(x, indices) => {
                    let mut gx = Array2::zeros(self.value(*x).dim());
                    for (row, &i) in indices.iter().enumerate() {
                        let mut target = gx.row_mut(i);
                        target += &grad.row(row);
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::VStack(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let h = self.value(p).nrows();
                        let gp = grad.slice(s![offset..offset + h, ..]).to_owned();
                        accumulate(&mut grads, p, gp);
                        offset += h;
                    }
                }
                Op::SoftmaxRows(x) => {
                    let y = &self.nodes[id].value;
                    let mut gx = Array2::zeros(y.dim());
                    for r in 0..y.nrows() {
                        let dot: f64 = (0..y.ncols()).map(|c| grad[[r, c]] * y[[r, c]]).sum();
                        for c in 0..y.ncols() {
                            gx[[r, c]] = y[[r, c]] * (grad[[r, c]] - dot);
                        }
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::Tanh(x) => {
                    let y = &self.nodes[id].value;
                    let gx = &grad * &y.mapv(|v| 1.0 - v * v);
                    accumulate(&mut grads, *x, gx);
                }
                Op::LayerNormRows(x) => {
                    let src = self.value(*x);
                    let y = &self.nodes[id].value;
                    let n = src.ncols() as f64;
                    let mut gx = Array2::zeros(src.dim());
                    for r in 0..src.nrows() {
                        let row = src.row(r);
                        let mean = row.mean().expect("non-empty row");
                        let var = row.mapv(|v| (v - mean).powi(2)).mean().expect("non-empty");
                        let inv = 1.0 / (var + LN_EPS).sqrt();
                        let g_mean: f64 = (0..src.ncols()).map(|c| grad[[r, c]]).sum::<f64>() / n;
                        let gy_dot: f64 =
                            (0..src.ncols()).map(|c| grad[[r, c]] * y[[r, c]]).sum::<f64>() / n;
                        for c in 0..src.ncols() {
                            gx[[r, c]] = inv * (grad[[r, c]] - g_mean - y[[r, c]] * gy_dot);
                        }
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::Logistic(x) => {
                    let y = &self.nodes[id].value;
                    let gx = &grad * &y.mapv(|v| v * (1.0 - v));
                    accumulate(&mut grads, *x, gx);
                }
                Op::BceMean(p, targets) => {
                    let probs = self.value(*p);
                    let m = probs.nrows() as f64;
                    let scale = grad[[0, 0]] / m;
                    let mut gp = Array2::zeros(probs.dim());
                    for (g, (&prob, &t)) in gp.iter_mut().zip(probs.iter().zip(targets.iter())) {
                        if prob > PROB_EPS && prob < 1.0 - PROB_EPS {
                            *g = scale * (prob - t) / (prob * (1.0 - prob));
                        }
                    }
                    accumulate(&mut grads, *p, gp);
                }
                Op::CeMean(p, classes) => {
                    let probs = self.value(*p);
                    let m = classes.len() as f64;
                    let scale = grad[[0, 0]] / m;
                    let mut gp = Array2::zeros(probs.dim());
                    for (row, &c) in classes.iter().enumerate() {
                        let prob = probs[[row, c]];
                        if prob > PROB_EPS && prob < 1.0 - PROB_EPS {
                            gp[[row, c]] = -scale / prob;
                        }
                    }
                    accumulate(&mut grads, *p, gp);
                }
            }
        }
        Gradients { grads }
    }
}

fn accumulate(grads: &mut [Option<Array2<f64>>], id: NodeId, grad: Array2<f64>) {
    match &mut grads[id.0] {
        Some(existing) => *existing += &grad,
        slot => *slot = Some(grad),
    }
}

/// Result of [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    /// Gradient for `id`; `None` when the node does not influence the root.
    pub fn get(&self, id: NodeId) -> Option<&Array2<f64>> {
        self.grads[id.0].as_ref()
    }

    pub fn take(&mut self, id: NodeId) -> Option<Array2<f64>> {
        self.grads[id.0].take()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn randn(rng: &mut StdRng, rows: usize, cols: usize) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-1.0..1.0))
    }

    /// Central-difference check of d(scalar)/d(input) for a graph builder.
    fn check_gradient<F>(input: Array2<f64>, build: F)
    where
        F: Fn(&mut Tape, NodeId) -> NodeId,
    {
        let mut tape = Tape::new();
        let x = tape.leaf(input.clone());
        let root = build(&mut tape, x);
        let grads = tape.backward(root);
        let analytic = grads.get(x).cloned().unwrap_or_else(|| Array2::zeros(input.dim()));

        let h = 1e-5;
        for i in 0..input.nrows() {
            for j in 0..input.ncols() {
                let eval = |v: f64| {
                    let mut probe = input.clone();
                    probe[[i, j]] = v;
                    let mut t = Tape::new();
                    let x = t.leaf(probe);
                    let r = build(&mut t, x);
                    t.value(r)[[0, 0]]
                };
                let numeric = (eval(input[[i, j]] + h) - eval(input[[i, j]] - h)) / (2.0 * h);
                let got = analytic[[i, j]];
                let tol = 1e-6 + 1e-6 * numeric.abs().max(got.abs());
                assert!(
                    (numeric - got).abs() < tol,
                    "entry ({i},{j}): numeric {numeric} vs analytic {got}"
                );
            }
        }
    }

    /// Reduce any `[m,n]` node to a scalar with fixed weights so every
    /// entry influences the root.
    fn reduce(tape: &mut Tape, x: NodeId) -> NodeId {
        let (m, n) = tape.value(x).dim();
        let left = tape.leaf(Array2::from_shape_fn((1, m), |(_, i)| 0.3 + 0.1 * i as f64));
        let right = tape.leaf(Array2::from_shape_fn((n, 1), |(i, _)| 0.7 - 0.05 * i as f64));
        let lx = tape.matmul(left, x);
        tape.matmul(lx, right)
    }

    #[test]
    fn matmul_chain_gradients() {
        let mut rng = StdRng::seed_from_u64(0);
        let w = randn(&mut rng, 3, 4);
        check_gradient(randn(&mut rng, 2, 3), move |t, x| {
            let w = t.leaf(w.clone());
            let y = t.matmul(x, w);
            reduce(t, y)
        });
    }

    #[test]
    fn matmul_nt_gradients_both_sides() {
        let mut rng = StdRng::seed_from_u64(1);
        let other = randn(&mut rng, 4, 3);
        let fixed = other.clone();
        check_gradient(randn(&mut rng, 2, 3), move |t, x| {
            let b = t.leaf(fixed.clone());
            let y = t.matmul_nt(x, b);
            reduce(t, y)
        });
        let a = randn(&mut rng, 2, 3);
        check_gradient(other, move |t, x| {
            let a = t.leaf(a.clone());
            let y = t.matmul_nt(a, x);
            reduce(t, y)
        });
    }

    #[test]
    fn bias_and_gain_gradients() {
        let mut rng = StdRng::seed_from_u64(2);
        let x_fixed = randn(&mut rng, 3, 4);
        let bias = randn(&mut rng, 1, 4);
        let x2 = x_fixed.clone();
        check_gradient(randn(&mut rng, 3, 4), {
            let bias = bias.clone();
            move |t, x| {
                let b = t.leaf(bias.clone());
                let y = t.add_bias(x, b);
                let g = t.leaf(Array2::from_elem((1, 4), 1.5));
                let y = t.mul_bias(y, g);
                reduce(t, y)
            }
        });
        // Gradient w.r.t. the bias row itself.
        check_gradient(bias, move |t, b| {
            let x = t.leaf(x_fixed.clone());
            let y = t.add_bias(x, b);
            reduce(t, y)
        });
        // Gradient w.r.t. the gain row.
        check_gradient(randn(&mut rng, 1, 4), move |t, g| {
            let x = t.leaf(x2.clone());
            let y = t.mul_bias(x, g);
            reduce(t, y)
        });
    }

    #[test]
    fn pooling_and_stacking_gradients() {
        let mut rng = StdRng::seed_from_u64(3);
        check_gradient(randn(&mut rng, 5, 3), |t, x| {
            let pooled = t.mean_rows(x);
            reduce(t, pooled)
        });
        let side = randn(&mut rng, 2, 3);
        check_gradient(randn(&mut rng, 2, 2), {
            let side = side.clone();
            move |t, x| {
                let s = t.leaf(side.clone());
                let y = t.concat_cols(&[x, s]);
                reduce(t, y)
            }
        });
        check_gradient(randn(&mut rng, 2, 3), move |t, x| {
            let s = t.leaf(side.clone());
            let y = t.vstack(&[x, s]);
            reduce(t, y)
        });
    }

    #[test]
    fn gather_handles_repeated_rows() {
        let mut rng = StdRng::seed_from_u64(4);
        check_gradient(randn(&mut rng, 4, 3), |t, x| {
            let y = t.gather_rows(x, vec![2, 0, 2, 2]);
            reduce(t, y)
        });
    }

    #[test]
    fn nonlinearity_gradients() {
        let mut rng = StdRng::seed_from_u64(5);
        check_gradient(randn(&mut rng, 3, 4), |t, x| {
            let y = t.tanh(x);
            reduce(t, y)
        });
        check_gradient(randn(&mut rng, 3, 4), |t, x| {
            let y = t.logistic(x);
            reduce(t, y)
        });
        check_gradient(randn(&mut rng, 3, 4), |t, x| {
            let y = t.layer_norm_rows(x);
            reduce(t, y)
        });
        check_gradient(randn(&mut rng, 2, 5), |t, x| {
            let y = t.softmax_rows(x);
            reduce(t, y)
        });
    }

    #[test]
    fn masked_softmax_rows_are_causal() {
        let mut rng = StdRng::seed_from_u64(6);
        let scores = randn(&mut rng, 4, 4);
        let mask = Array2::from_shape_fn((4, 4), |(i, j)| if j > i { -1e9 } else { 0.0 });
        let mut tape = Tape::new();
        let x = tape.leaf(scores.clone());
        let m = tape.leaf(mask.clone());
        let masked = tape.add(x, m);
        let probs = tape.softmax_rows(masked);
        let p = tape.value(probs);
        for i in 0..4 {
            for j in 0..4 {
                if j > i {
                    assert!(p[[i, j]] < 1e-12, "future position leaked: {}", p[[i, j]]);
                }
            }
            let row_sum: f64 = (0..4).map(|j| p[[i, j]]).sum();
            assert!((row_sum - 1.0).abs() < 1e-12);
        }
        check_gradient(scores, move |t, x| {
            let m = t.leaf(mask.clone());
            let masked = t.add(x, m);
            let y = t.softmax_rows(masked);
            reduce(t, y)
        });
    }

    #[test]
    fn loss_gradients() {
        let mut rng = StdRng::seed_from_u64(7);
        let logits = randn(&mut rng, 4, 1);
        let targets = Array2::from_shape_fn((4, 1), |(i, _)| (i % 2) as f64);
        check_gradient(logits, {
            let targets = targets.clone();
            move |t, x| {
                let p = t.logistic(x);
                t.bce_mean(p, targets.clone())
            }
        });
        check_gradient(randn(&mut rng, 3, 3), |t, x| {
            let p = t.softmax_rows(x);
            t.ce_mean(p, vec![0, 2, 1])
        });
    }

    #[test]
    fn bce_value_at_half_is_ln_two() {
        let mut tape = Tape::new();
        let p = tape.leaf(Array2::from_elem((4, 1), 0.5));
        let targets = Array2::from_shape_fn((4, 1), |(i, _)| (i % 2) as f64);
        let loss = tape.bce_mean(p, targets);
        assert!((tape.value(loss)[[0, 0]] - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn clamped_probabilities_get_zero_gradient() {
        let mut tape = Tape::new();
        let p = tape.leaf(Array2::from_elem((2, 1), 1.0));
        let loss = tape.bce_mean(p, Array2::zeros((2, 1)));
        assert!(tape.value(loss)[[0, 0]].is_finite());
        let grads = tape.backward(loss);
        let gp = grads.get(p).unwrap();
        assert_eq!(gp[[0, 0]], 0.0);
        assert_eq!(gp[[1, 0]], 0.0);
    }

    #[test]
    fn fan_out_accumulates() {
        // x feeds two branches; gradient must be the sum of both paths.
        check_gradient(Array2::from_elem((2, 2), 0.3), |t, x| {
            let a = t.tanh(x);
            let b = t.scale(x, 2.0);
            let y = t.add(a, b);
            reduce(t, y)
        });
    }

    #[test]
    fn unused_leaf_has_no_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(Array2::ones((1, 1)));
        let unused = tape.leaf(Array2::ones((2, 2)));
        let loss = tape.bce_mean_probe(x);
        let grads = tape.backward(loss);
        assert!(grads.get(unused).is_none());
        assert!(grads.get(x).is_some());
    }

    impl Tape {
        /// Tiny helper: a scalar loss touching only `x`.
        fn bce_mean_probe(&mut self, x: NodeId) -> NodeId {
            let p = self.logistic(x);
            self.bce_mean(p, Array2::zeros((1, 1)))
        }
    }
}
