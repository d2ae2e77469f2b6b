use std::sync::Arc;

use super::matrix::{gemm, Matrix};
use super::DiffError;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    MulElem(Var, Var),
    Matmul(Var, Var),
    ConcatCols(Var, Var),
    Relu(Var),
    Sum(Var),
    Mean(Var),
    Square(Var),
    ScalarMul(Var, f64),
    AddScalar(Var),
    NeighborSum(Var, Arc<Vec<Vec<usize>>>),
    SegmentMean(Var, Arc<Vec<(usize, usize)>>),
    PairDiff(Var, Arc<Vec<(usize, usize)>>),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

/// Append-only record of a forward computation.
///
/// Every operation validates shapes, stores its output, and remembers its
/// inputs so that [`Tape::backward`] can replay the chain rule in exact
/// reverse order. Right-hand operands of `add`, `sub` and `mul_elem` may be
/// broadcast along rows (`1 x c`), columns (`r x 1`) or both (`1 x 1`).
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    backpropagated: bool,
}

/// Gradients of one scalar with respect to every recorded value.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Matrix> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    /// Moves the gradient out, returning zeros of `shape` if none reached `var`.
    pub fn take_or_zeros(&mut self, var: Var, shape: (usize, usize)) -> Matrix {
        self.grads
            .get_mut(var.0)
            .and_then(Option::take)
            .unwrap_or_else(|| Matrix::zeros(shape.0, shape.1))
    }
}

fn broadcast_ok(a: (usize, usize), b: (usize, usize)) -> bool {
    (b.0 == a.0 || b.0 == 1) && (b.1 == a.1 || b.1 == 1)
}

/// Sums `g` down to `shape` along broadcast axes.
fn reduce_to(g: &Matrix, shape: (usize, usize)) -> Matrix {
    if g.shape() == shape {
        return g.clone();
    }
    let mut out = Matrix::zeros(shape.0, shape.1);
    for r in 0..g.rows() {
        let orow = if shape.0 == 1 { 0 } else { r };
        for c in 0..g.cols() {
            let ocol = if shape.1 == 1 { 0 } else { c };
            let v = out.get(orow, ocol) + g.get(r, c);
            out.set(orow, ocol, v);
        }
    }
    out
}

fn bget(m: &Matrix, r: usize, c: usize) -> f64 {
    let rr = if m.rows() == 1 { 0 } else { r };
    let cc = if m.cols() == 1 { 0 } else { c };
    m.get(rr, cc)
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Clears all recorded values so the tape can be reused.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.backpropagated = false;
    }

    pub fn value(&self, var: Var) -> &Matrix {
        &self.nodes[var.0].value
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A trainable leaf; gradients are accumulated for it.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A constant leaf; no gradient flows into it.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    fn binary_broadcast(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Matrix, DiffError> {
        let (va, vb) = (self.value(a), self.value(b));
        if !broadcast_ok(va.shape(), vb.shape()) {
            return Err(DiffError::ShapeMismatch {
                op: name,
                left: va.shape(),
                right: vb.shape(),
            });
        }
        let mut out = Matrix::zeros(va.rows(), va.cols());
        for r in 0..va.rows() {
            for c in 0..va.cols() {
                out.set(r, c, f(va.get(r, c), bget(vb, r, c)));
            }
        }
        Ok(out)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let out = self.binary_broadcast(a, b, "add", |x, y| x + y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let out = self.binary_broadcast(a, b, "sub", |x, y| x - y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    pub fn mul_elem(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let out = self.binary_broadcast(a, b, "mul_elem", |x, y| x * y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::MulElem(a, b), rg))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let out = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Matmul(a, b), rg))
    }

    /// `[a ∥ b]` along columns.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.rows() != vb.rows() {
            return Err(DiffError::ShapeMismatch {
                op: "concat_cols",
                left: va.shape(),
                right: vb.shape(),
            });
        }
        let mut out = Matrix::zeros(va.rows(), va.cols() + vb.cols());
        for r in 0..va.rows() {
            let row = out.row_mut(r);
            row[..va.cols()].copy_from_slice(va.row(r));
            row[va.cols()..].copy_from_slice(vb.row(r));
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::ConcatCols(a, b), rg))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| if v > 0.0 { v } else { 0.0 });
        let rg = self.rg(a);
        self.push(out, Op::Relu(a), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let rg = self.rg(a);
        self.push(Matrix::scalar(s), Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let n = v.data().len().max(1) as f64;
        let s = v.data().iter().sum::<f64>() / n;
        let rg = self.rg(a);
        self.push(Matrix::scalar(s), Op::Mean(a), rg)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| v * v);
        let rg = self.rg(a);
        self.push(out, Op::Square(a), rg)
    }

    pub fn scalar_mul(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|v| v * c);
        let rg = self.rg(a);
        self.push(out, Op::ScalarMul(a, c), rg)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|v| v + c);
        let rg = self.rg(a);
        self.push(out, Op::AddScalar(a), rg)
    }

    /// Row `i` of the output is the sum of rows `adjacency[i]` of `a`.
    pub fn neighbor_sum(
        &mut self,
        a: Var,
        adjacency: Arc<Vec<Vec<usize>>>,
    ) -> Result<Var, DiffError> {
        let va = self.value(a);
        if adjacency.len() != va.rows() || adjacency.iter().flatten().any(|&j| j >= va.rows()) {
            return Err(DiffError::ShapeMismatch {
                op: "neighbor_sum",
                left: va.shape(),
                right: (adjacency.len(), 0),
            });
        }
        let mut out = Matrix::zeros(va.rows(), va.cols());
        for (i, nbrs) in adjacency.iter().enumerate() {
            let row = out.row_mut(i);
            for &j in nbrs {
                for (o, x) in row.iter_mut().zip(va.row(j)) {
                    *o += x;
                }
            }
        }
        let rg = self.rg(a);
        Ok(self.push(out, Op::NeighborSum(a, adjacency), rg))
    }

    /// Row `b` of the output is the mean of rows `start..end` of segment `b`.
    pub fn segment_mean(
        &mut self,
        a: Var,
        segments: Arc<Vec<(usize, usize)>>,
    ) -> Result<Var, DiffError> {
        let va = self.value(a);
        if segments.iter().any(|&(s, e)| s >= e || e > va.rows()) {
            return Err(DiffError::ShapeMismatch {
                op: "segment_mean",
                left: va.shape(),
                right: (segments.len(), 0),
            });
        }
        let mut out = Matrix::zeros(segments.len(), va.cols());
        for (b, &(s, e)) in segments.iter().enumerate() {
            let inv = 1.0 / (e - s) as f64;
            let row = out.row_mut(b);
            for r in s..e {
                for (o, x) in row.iter_mut().zip(va.row(r)) {
                    *o += x;
                }
            }
            for o in row.iter_mut() {
                *o *= inv;
            }
        }
        let rg = self.rg(a);
        Ok(self.push(out, Op::SegmentMean(a, segments), rg))
    }

    /// For a column vector `a`, returns `a[i] - a[j]` for every listed pair.
    pub fn pair_diff(&mut self, a: Var, pairs: Arc<Vec<(usize, usize)>>) -> Result<Var, DiffError> {
        let va = self.value(a);
        if va.cols() != 1 || pairs.iter().any(|&(i, j)| i >= va.rows() || j >= va.rows()) {
            return Err(DiffError::ShapeMismatch {
                op: "pair_diff",
                left: va.shape(),
                right: (pairs.len(), 2),
            });
        }
        let data = pairs
            .iter()
            .map(|&(i, j)| va.data()[i] - va.data()[j])
            .collect();
        let rg = self.rg(a);
        Ok(self.push(Matrix::column_vector(data), Op::PairDiff(a, pairs), rg))
    }

    /// Positivity masks of every ReLU input, in recording order. Two forward
    /// passes with equal patterns lie on the same linear piece.
    pub fn relu_pattern(&self) -> Vec<bool> {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Relu(a) => Some(a),
                _ => None,
            })
            .flat_map(|a| self.nodes[a.0].value.data().iter().map(|&v| v > 0.0))
            .collect()
    }

    /// Reverse sweep from a 1x1 `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients, DiffError> {
        let shape = self.value(loss).shape();
        if shape != (1, 1) {
            return Err(DiffError::NotScalarLoss { shape });
        }
        if self.backpropagated {
            return Err(DiffError::AlreadyBackpropagated);
        }
        self.backpropagated = true;

        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                grads[idx] = Some(g);
                continue;
            }
            let mut acc = |v: Var, contrib: Matrix| {
                if !self.nodes[v.0].requires_grad {
                    return;
                }
                match &mut grads[v.0] {
                    Some(existing) => existing.axpy(1.0, &contrib),
                    slot @ None => *slot = Some(contrib),
                }
            };
            match &node.op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    let bs = self.nodes[b.0].value.shape();
                    acc(*b, reduce_to(&g, bs));
                    acc(*a, g.clone());
                }
                Op::Sub(a, b) => {
                    let bs = self.nodes[b.0].value.shape();
                    acc(*b, reduce_to(&g.map(|v| -v), bs));
                    acc(*a, g.clone());
                }
                Op::MulElem(a, b) => {
                    let va = &self.nodes[a.0].value;
                    let vb = &self.nodes[b.0].value;
                    let mut ga = Matrix::zeros(g.rows(), g.cols());
                    let mut gb_full = Matrix::zeros(g.rows(), g.cols());
                    for r in 0..g.rows() {
                        for c in 0..g.cols() {
                            ga.set(r, c, g.get(r, c) * bget(vb, r, c));
                            gb_full.set(r, c, g.get(r, c) * va.get(r, c));
                        }
                    }
                    acc(*b, reduce_to(&gb_full, vb.shape()));
                    acc(*a, ga);
                }
                Op::Matmul(a, b) => {
                    let va = &self.nodes[a.0].value;
                    let vb = &self.nodes[b.0].value;
                    if self.nodes[a.0].requires_grad {
                        let mut ga = Matrix::zeros(va.rows(), va.cols());
                        gemm(&g, false, vb, true, &mut ga, 0.0);
                        acc(*a, ga);
                    }
                    if self.nodes[b.0].requires_grad {
                        let mut gb = Matrix::zeros(vb.rows(), vb.cols());
                        gemm(va, true, &g, false, &mut gb, 0.0);
                        acc(*b, gb);
                    }
                }
                Op::ConcatCols(a, b) => {
                    let ca = self.nodes[a.0].value.cols();
                    let cb = self.nodes[b.0].value.cols();
                    let mut ga = Matrix::zeros(g.rows(), ca);
                    let mut gb = Matrix::zeros(g.rows(), cb);
                    for r in 0..g.rows() {
                        ga.row_mut(r).copy_from_slice(&g.row(r)[..ca]);
                        gb.row_mut(r).copy_from_slice(&g.row(r)[ca..]);
                    }
                    acc(*a, ga);
                    acc(*b, gb);
                }
                Op::Relu(a) => {
                    let va = &self.nodes[a.0].value;
                    let mut ga = g.clone();
                    for (gv, &x) in ga.data_mut().iter_mut().zip(va.data()) {
                        if x <= 0.0 {
                            *gv = 0.0;
                        }
                    }
                    acc(*a, ga);
                }
                Op::Sum(a) => {
                    let (r, c) = self.nodes[a.0].value.shape();
                    acc(*a, Matrix::filled(r, c, g.item()));
                }
                Op::Mean(a) => {
                    let (r, c) = self.nodes[a.0].value.shape();
                    let n = (r * c).max(1) as f64;
                    acc(*a, Matrix::filled(r, c, g.item() / n));
                }
                Op::Square(a) => {
                    let va = &self.nodes[a.0].value;
                    let mut ga = g.clone();
                    for (gv, &x) in ga.data_mut().iter_mut().zip(va.data()) {
                        *gv *= 2.0 * x;
                    }
                    acc(*a, ga);
                }
                Op::ScalarMul(a, c) => acc(*a, g.map(|v| v * c)),
                Op::AddScalar(a) => acc(*a, g.clone()),
                Op::NeighborSum(a, adjacency) => {
                    let mut ga = Matrix::zeros(g.rows(), g.cols());
                    for (i, nbrs) in adjacency.iter().enumerate() {
                        for &j in nbrs {
                            for (o, x) in ga.row_mut(j).iter_mut().zip(g.row(i)) {
                                *o += x;
                            }
                        }
                    }
                    acc(*a, ga);
                }
                Op::SegmentMean(a, segments) => {
                    let (r, c) = self.nodes[a.0].value.shape();
                    let mut ga = Matrix::zeros(r, c);
                    for (b, &(s, e)) in segments.iter().enumerate() {
                        let inv = 1.0 / (e - s) as f64;
                        for row in s..e {
                            for (o, x) in ga.row_mut(row).iter_mut().zip(g.row(b)) {
                                *o += x * inv;
                            }
                        }
                    }
                    acc(*a, ga);
                }
                Op::PairDiff(a, pairs) => {
                    let n = self.nodes[a.0].value.rows();
                    let mut ga = vec![0.0; n];
                    for (p, &(i, j)) in pairs.iter().enumerate() {
                        ga[i] += g.data()[p];
                        ga[j] -= g.data()[p];
                    }
                    acc(*a, Matrix::column_vector(ga));
                }
            }
            if matches!(node.op, Op::Leaf) {
                grads[idx] = Some(g);
            }
        }
        Ok(Gradients { grads })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        Matrix::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Central differences of `f` at `x` with step `h`.
    fn finite_diff(x: &Matrix, h: f64, f: impl Fn(&Matrix) -> f64) -> Matrix {
        let mut g = Matrix::zeros(x.rows(), x.cols());
        for i in 0..x.data().len() {
            let mut xp = x.clone();
            xp.data_mut()[i] += h;
            let mut xm = x.clone();
            xm.data_mut()[i] -= h;
            g.data_mut()[i] = (f(&xp) - f(&xm)) / (2.0 * h);
        }
        g
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
    }

    #[test]
    fn square_gradient() {
        let mut t = Tape::new();
        let x = t.param(Matrix::scalar(3.0));
        let y = t.square(x);
        assert_eq!(t.value(y).item(), 9.0);
        let g = t.backward(y).unwrap();
        assert_eq!(g.get(x).unwrap().item(), 6.0);
    }

    #[test]
    fn relu_negative_has_zero_grad() {
        let mut t = Tape::new();
        let x = t.param(Matrix::scalar(-1.0));
        let y = t.relu(x);
        assert_eq!(t.value(y).item(), 0.0);
        let g = t.backward(y).unwrap();
        assert_eq!(g.get(x).unwrap().item(), 0.0);

        let mut t = Tape::new();
        let x = t.param(Matrix::scalar(0.0));
        let y = t.relu(x);
        assert_eq!(t.backward(y).unwrap().get(x).unwrap().item(), 0.0);
    }

    #[test]
    fn matmul_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = rand_matrix(&mut rng, 3, 4);
        let b = rand_matrix(&mut rng, 4, 2);
        let w = rand_matrix(&mut rng, 3, 2);
        let loss = |a: &Matrix, b: &Matrix| -> f64 {
            let p = a.matmul(b).unwrap();
            p.data().iter().zip(w.data()).map(|(x, y)| x * y).sum()
        };
        let mut t = Tape::new();
        let va = t.param(a.clone());
        let vb = t.param(b.clone());
        let vw = t.constant(w.clone());
        let p = t.matmul(va, vb).unwrap();
        let m = t.mul_elem(p, vw).unwrap();
        let l = t.sum(m);
        let g = t.backward(l).unwrap();
        let fa = finite_diff(&a, 1e-4, |x| loss(x, &b));
        let fb = finite_diff(&b, 1e-4, |x| loss(&a, x));
        for (x, y) in g.get(va).unwrap().data().iter().zip(fa.data()) {
            assert!(rel_err(*x, *y) < 1e-5, "{x} vs {y}");
        }
        for (x, y) in g.get(vb).unwrap().data().iter().zip(fb.data()) {
            assert!(rel_err(*x, *y) < 1e-5, "{x} vs {y}");
        }
        assert!(g.get(vw).is_none());
    }

    #[test]
    fn constant_loss_gives_no_grads() {
        let mut t = Tape::new();
        let p = t.param(Matrix::filled(2, 2, 1.5));
        let c = t.constant(Matrix::scalar(4.0));
        let _unused = t.square(p);
        let g = t.backward(c).unwrap();
        assert!(g.get(p).is_none());
    }

    #[test]
    fn sum_of_params_gives_unit_grads() {
        let mut t = Tape::new();
        let p = t.param(Matrix::filled(3, 2, -0.7));
        let s = t.sum(p);
        let g = t.backward(s).unwrap();
        assert!(g.get(p).unwrap().data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn non_scalar_loss_and_double_backward_rejected() {
        let mut t = Tape::new();
        let p = t.param(Matrix::filled(2, 1, 1.0));
        assert!(matches!(t.backward(p), Err(DiffError::NotScalarLoss { shape: (2, 1) })));
        let s = t.sum(p);
        t.backward(s).unwrap();
        assert!(matches!(t.backward(s), Err(DiffError::AlreadyBackpropagated)));
        t.reset();
        assert!(t.is_empty());
    }

    #[test]
    fn shape_errors() {
        let mut t = Tape::new();
        let a = t.param(Matrix::zeros(2, 3));
        let b = t.param(Matrix::zeros(2, 2));
        assert!(t.add(a, b).is_err());
        assert!(t.matmul(a, b).is_err());
        let c = t.param(Matrix::zeros(3, 3));
        assert!(t.concat_cols(a, c).is_err());
    }

    #[test]
    fn linearity_of_backward() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x0 = rand_matrix(&mut rng, 4, 3);
        let w = rand_matrix(&mut rng, 3, 3);
        let (ca, cb) = (0.7, -1.9);
        let run = |which: u8| -> Matrix {
            let mut t = Tape::new();
            let x = t.param(x0.clone());
            let wv = t.constant(w.clone());
            let xw = t.matmul(x, wv).unwrap();
            let r = t.relu(xw);
            let f = t.sum(r);
            let sq = t.square(x);
            let gsum = t.mean(sq);
            let out = match which {
                0 => f,
                1 => gsum,
                _ => {
                    let a = t.scalar_mul(f, ca);
                    let b = t.scalar_mul(gsum, cb);
                    t.add(a, b).unwrap()
                }
            };
            let mut g = t.backward(out).unwrap();
            g.take_or_zeros(x, x0.shape())
        };
        let (gf, gg, gc) = (run(0), run(1), run(2));
        for i in 0..gc.data().len() {
            let want = ca * gf.data()[i] + cb * gg.data()[i];
            assert!((gc.data()[i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn structural_ops_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = rand_matrix(&mut rng, 5, 3);
        let bias = rand_matrix(&mut rng, 1, 3);
        let col = rand_matrix(&mut rng, 5, 1);
        let adjacency = Arc::new(vec![vec![1, 2], vec![0], vec![0, 3, 4], vec![2], vec![2]]);
        let segments = Arc::new(vec![(0, 2), (2, 5)]);
        let pairs = Arc::new(vec![(0, 1), (1, 0)]);
        let build = |t: &mut Tape, xv: Var| -> Var {
            let b = t.constant(bias.clone());
            let c = t.constant(col.clone());
            let n = t.neighbor_sum(xv, adjacency.clone()).unwrap();
            let n = t.add(n, b).unwrap();
            let n = t.mul_elem(n, c).unwrap();
            let n = t.concat_cols(n, xv).unwrap();
            let s = t.segment_mean(n, segments.clone()).unwrap();
            let s = t.square(s);
            let one = t.constant(Matrix::filled(6, 1, 1.0));
            let s = t.matmul(s, one).unwrap();
            let d = t.pair_diff(s, pairs.clone()).unwrap();
            let d = t.add_scalar(d, 0.3);
            let d = t.relu(d);
            t.sum(d)
        };
        let eval = |m: &Matrix| {
            let mut t = Tape::new();
            let xv = t.param(m.clone());
            let l = build(&mut t, xv);
            t.value(l).item()
        };
        let mut t = Tape::new();
        let xv = t.param(x.clone());
        let l = build(&mut t, xv);
        let g = t.backward(l).unwrap();
        let fd = finite_diff(&x, 1e-4, eval);
        for (a, b) in g.get(xv).unwrap().data().iter().zip(fd.data()) {
            assert!(rel_err(*a, *b) < 1e-5, "{a} vs {b}");
        }
    }
}
