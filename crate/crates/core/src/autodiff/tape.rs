use crate::error::{Error, Result};

use super::tensor::{matmul_into, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Broadcast {
    Same,
    Row,
    Col,
    Scalar,
}

impl Broadcast {
    fn of(op: &'static str, lhs: &Tensor, rhs: &Tensor) -> Result<Self> {
        let (r, c) = (lhs.rows(), lhs.cols());
        Ok(match (rhs.rows(), rhs.cols()) {
            (rr, rc) if rr == r && rc == c => Self::Same,
            (1, 1) => Self::Scalar,
            (1, rc) if rc == c => Self::Row,
            (rr, 1) if rr == r => Self::Col,
            (rr, rc) => {
                return Err(Error::Shape {
                    op,
                    detail: format!("{r}x{c} with {rr}x{rc}"),
                })
            }
        })
    }

    #[inline]
    fn index(self, r: usize, c: usize, cols: usize) -> usize {
        match self {
            Self::Same => r * cols + c,
            Self::Row => c,
            Self::Col => r,
            Self::Scalar => 0,
        }
    }

    /// Sums a full-shape gradient down to the broadcast operand's shape.
    fn reduce(self, g: &Tensor, rhs_shape: [usize; 2]) -> Tensor {
        if self == Self::Same {
            return g.clone();
        }
        let mut out = Tensor::zeros(rhs_shape[0], rhs_shape[1]);
        let cols = g.cols();
        for r in 0..g.rows() {
            for c in 0..cols {
                out.data_mut()[self.index(r, c, cols)] += g.get(r, c);
            }
        }
        out
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var, Broadcast),
    Mul(Var, Var, Broadcast),
    Scale(Var, f64),
    DivScalar(Var, Var),
    ConcatCols(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    SegmentSum(Var, Vec<usize>),
    SumRows(Var),
    MeanRows(Var),
    MaxRows(Var, Vec<usize>),
    SumAll(Var),
    Norm(Var),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    LeakyRelu(Var, f64),
    SegmentSoftmax(Var, Vec<usize>),
    LogSoftmaxRows(Var),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Ordered record of differentiable operations.
///
/// Records are appended as operations execute, so operands always precede
/// their dependents and [`Tape::backward`] is a single reverse sweep.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    track_branches: bool,
    branch_hash: u64,
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// A tape that fingerprints every discrete choice made while recording
    /// (relu signs, max positions, noted selections). Finite-difference
    /// checks compare fingerprints to detect evaluations straddling a kink.
    pub fn with_branch_tracking() -> Self {
        Self {
            track_branches: true,
            branch_hash: FNV_OFFSET,
            ..Self::default()
        }
    }

    pub fn branch_signature(&self) -> u64 {
        self.branch_hash
    }

    pub fn note_branch(&mut self, choices: &[usize]) {
        if self.track_branches {
            self.mix(choices.len() as u64);
            for &c in choices {
                self.mix(c as u64);
            }
        }
    }

    #[inline]
    fn mix(&mut self, x: u64) {
        self.branch_hash = (self.branch_hash ^ x).wrapping_mul(FNV_PRIME);
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Trainable leaf.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let out = av.matmul(bv)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    /// Elementwise sum; `b` may be a row, column or scalar broadcast.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary("add", a, b, |x, y| x + y)?;
        Ok(out)
    }

    /// Elementwise product; `b` may be a row, column or scalar broadcast.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y)
    }

    fn binary(
        &mut self,
        op: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let bc = Broadcast::of(op, av, bv)?;
        let cols = av.cols();
        let mut out = av.clone();
        for r in 0..av.rows() {
            for c in 0..cols {
                let i = r * cols + c;
                out.data_mut()[i] = f(av.data()[i], bv.data()[bc.index(r, c, cols)]);
            }
        }
        let rg = self.any_grad(&[a, b]);
        let rec = if op == "add" {
            Op::Add(a, b, bc)
        } else {
            Op::Mul(a, b, bc)
        };
        Ok(self.push(out, rec, rg))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let mut out = self.value(a).clone();
        out.data_mut().iter_mut().for_each(|x| *x *= k);
        let rg = self.any_grad(&[a]);
        self.push(out, Op::Scale(a, k), rg)
    }

    /// `a / s` for a `1 x 1` tensor `s`.
    pub fn div_scalar(&mut self, a: Var, s: Var) -> Result<Var> {
        let sv = self.value(s);
        if sv.shape() != [1, 1] {
            return Err(Error::Shape {
                op: "div_scalar",
                detail: format!("divisor is {}x{}", sv.rows(), sv.cols()),
            });
        }
        let d = sv.item();
        let mut out = self.value(a).clone();
        out.data_mut().iter_mut().for_each(|x| *x /= d);
        let rg = self.any_grad(&[a, s]);
        Ok(self.push(out, Op::DivScalar(a, s), rg))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = parts.first().map_or(0, |&p| self.value(p).rows());
        if parts.iter().any(|&p| self.value(p).rows() != rows) {
            let shapes: Vec<_> = parts.iter().map(|&p| self.value(p).shape()).collect();
            return Err(Error::Shape {
                op: "concat_cols",
                detail: format!("row counts differ: {shapes:?}"),
            });
        }
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row_slice(r));
            }
        }
        let out = Tensor::new(rows, cols, data)?;
        let rg = self.any_grad(parts);
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Rows `idx` of `a`, in order; indices may repeat.
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let av = self.value(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= av.rows()) {
            return Err(Error::Shape {
                op: "gather_rows",
                detail: format!("row {bad} of {}", av.rows()),
            });
        }
        let out = av.gather_rows(idx);
        let rg = self.any_grad(&[a]);
        Ok(self.push(out, Op::GatherRows(a, idx.to_vec()), rg))
    }

    /// Sums row `e` of `a` into output row `segments[e]`.
    pub fn segment_sum(&mut self, a: Var, segments: &[usize], num_segments: usize) -> Result<Var> {
        let av = self.value(a);
        if segments.len() != av.rows() {
            return Err(Error::Shape {
                op: "segment_sum",
                detail: format!("{} segment ids for {} rows", segments.len(), av.rows()),
            });
        }
        if let Some(&bad) = segments.iter().find(|&&s| s >= num_segments) {
            return Err(Error::Shape {
                op: "segment_sum",
                detail: format!("segment {bad} of {num_segments}"),
            });
        }
        let cols = av.cols();
        let mut out = Tensor::zeros(num_segments, cols);
        for (e, &s) in segments.iter().enumerate() {
            let src = av.row_slice(e);
            let dst = &mut out.data_mut()[s * cols..(s + 1) * cols];
            for (d, x) in dst.iter_mut().zip(src) {
                *d += x;
            }
        }
        let rg = self.any_grad(&[a]);
        Ok(self.push(out, Op::SegmentSum(a, segments.to_vec()), rg))
    }

    /// Column sums: `r x c -> 1 x c`.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let out = column_reduce(self.value(a), |acc, x| acc + x, 0.0);
        let rg = self.any_grad(&[a]);
        self.push(out, Op::SumRows(a), rg)
    }

    /// Column means: `r x c -> 1 x c`.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        if av.rows() == 0 {
            return Err(Error::Shape {
                op: "mean_rows",
                detail: "no rows".into(),
            });
        }
        let n = av.rows() as f64;
        let mut out = column_reduce(av, |acc, x| acc + x, 0.0);
        out.data_mut().iter_mut().for_each(|x| *x /= n);
        let rg = self.any_grad(&[a]);
        Ok(self.push(out, Op::MeanRows(a), rg))
    }

    /// Column maxima: `r x c -> 1 x c`. The first maximal row wins ties.
    pub fn max_rows(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        if av.rows() == 0 {
            return Err(Error::Shape {
                op: "max_rows",
                detail: "no rows".into(),
            });
        }
        let cols = av.cols();
        let mut arg = vec![0usize; cols];
        let mut out = Tensor::row(av.row_slice(0).to_vec());
        for r in 1..av.rows() {
            for (c, best) in arg.iter_mut().enumerate() {
                let x = av.get(r, c);
                if x > out.get(0, c) {
                    out.set(0, c, x);
                    *best = r;
                }
            }
        }
        if self.track_branches {
            self.note_branch(&arg);
        }
        let rg = self.any_grad(&[a]);
        Ok(self.push(out, Op::MaxRows(a, arg), rg))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let rg = self.any_grad(&[a]);
        self.push(Tensor::scalar(s), Op::SumAll(a), rg)
    }

    /// Frobenius norm as a `1 x 1` tensor.
    pub fn norm(&mut self, a: Var) -> Var {
        let s = self
            .value(a)
            .data()
            .iter()
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt();
        let rg = self.any_grad(&[a]);
        self.push(Tensor::scalar(s), Op::Norm(a), rg)
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let mut out = self.value(a).clone();
        out.data_mut().iter_mut().for_each(|x| *x = f(*x));
        let rg = self.any_grad(&[a]);
        self.push(out, op, rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.note_signs(a);
        self.unary(a, |x| if x > 0.0 { x } else { 0.0 }, Op::Relu(a))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        self.note_signs(a);
        self.unary(
            a,
            |x| if x > 0.0 { x } else { slope * x },
            Op::LeakyRelu(a, slope),
        )
    }

    fn note_signs(&mut self, a: Var) {
        if self.track_branches {
            let bits: Vec<usize> = self
                .value(a)
                .data()
                .iter()
                .map(|&x| (x > 0.0) as usize)
                .collect();
            self.note_branch(&bits);
        }
    }

    /// Softmax of each column within groups of rows sharing a segment id.
    pub fn segment_softmax(&mut self, a: Var, segments: &[usize]) -> Result<Var> {
        let av = self.value(a);
        if segments.len() != av.rows() {
            return Err(Error::Shape {
                op: "segment_softmax",
                detail: format!("{} segment ids for {} rows", segments.len(), av.rows()),
            });
        }
        let num_segments = segments.iter().max().map_or(0, |m| m + 1);
        let cols = av.cols();
        let mut max = vec![f64::NEG_INFINITY; num_segments * cols];
        for (e, &s) in segments.iter().enumerate() {
            for c in 0..cols {
                let m = &mut max[s * cols + c];
                *m = m.max(av.get(e, c));
            }
        }
        let mut out = av.clone();
        let mut denom = vec![0.0; num_segments * cols];
        for (e, &s) in segments.iter().enumerate() {
            for c in 0..cols {
                let v = (av.get(e, c) - max[s * cols + c]).exp();
                out.set(e, c, v);
                denom[s * cols + c] += v;
            }
        }
        for (e, &s) in segments.iter().enumerate() {
            for c in 0..cols {
                let v = out.get(e, c) / denom[s * cols + c];
                out.set(e, c, v);
            }
        }
        let rg = self.any_grad(&[a]);
        Ok(self.push(out, Op::SegmentSoftmax(a, segments.to_vec()), rg))
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let mut out = av.clone();
        let cols = av.cols();
        for r in 0..av.rows() {
            let row = &mut out.data_mut()[r * cols..(r + 1) * cols];
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
            row.iter_mut().for_each(|x| *x -= lse);
        }
        let rg = self.any_grad(&[a]);
        self.push(out, Op::LogSoftmaxRows(a), rg)
    }

    /// Reverse sweep from a `1 x 1` loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.shape() != [1, 1] {
            return Err(Error::NonScalarLoss {
                rows: lv.rows(),
                cols: lv.cols(),
            });
        }
        let mut grads: Vec<Option<Tensor>> = Vec::new();
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let mut acc = |v: Var, t: Tensor| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&t),
                slot @ None => *slot = Some(t),
            }
        };
        match &node.op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                let (av, bv) = (self.value(a), self.value(b));
                if self.requires_grad(a) {
                    // dA = G * B^T
                    let mut da = Tensor::zeros(av.rows(), av.cols());
                    let (m, inner) = (bv.cols(), bv.rows());
                    for r in 0..g.rows() {
                        let gr = g.row_slice(r);
                        for k in 0..inner {
                            let br = bv.row_slice(k);
                            da.data_mut()[r * inner + k] =
                                gr.iter().zip(br).map(|(x, y)| x * y).sum();
                        }
                        debug_assert_eq!(gr.len(), m);
                    }
                    acc(a, da);
                }
                if self.requires_grad(b) {
                    // dB = A^T * G
                    let mut db = Tensor::zeros(bv.rows(), bv.cols());
                    matmul_into(&av.transpose(), g, &mut db);
                    acc(b, db);
                }
            }
            &Op::Add(a, b, bc) => {
                acc(a, g.clone());
                if self.requires_grad(b) {
                    acc(b, bc.reduce(g, self.value(b).shape()));
                }
            }
            &Op::Mul(a, b, bc) => {
                let (av, bv) = (self.value(a), self.value(b));
                let cols = g.cols();
                if self.requires_grad(a) {
                    let mut da = g.clone();
                    for r in 0..g.rows() {
                        for c in 0..cols {
                            da.data_mut()[r * cols + c] *= bv.data()[bc.index(r, c, cols)];
                        }
                    }
                    acc(a, da);
                }
                if self.requires_grad(b) {
                    let mut full = g.clone();
                    for (x, y) in full.data_mut().iter_mut().zip(av.data()) {
                        *x *= y;
                    }
                    acc(b, bc.reduce(&full, bv.shape()));
                }
            }
            &Op::Scale(a, k) => {
                let mut da = g.clone();
                da.data_mut().iter_mut().for_each(|x| *x *= k);
                acc(a, da);
            }
            &Op::DivScalar(a, s) => {
                let d = self.value(s).item();
                if self.requires_grad(a) {
                    let mut da = g.clone();
                    da.data_mut().iter_mut().for_each(|x| *x /= d);
                    acc(a, da);
                }
                if self.requires_grad(s) {
                    let dot: f64 = g
                        .data()
                        .iter()
                        .zip(self.value(a).data())
                        .map(|(x, y)| x * y)
                        .sum();
                    acc(s, Tensor::scalar(-dot / (d * d)));
                }
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let pc = self.value(p).cols();
                    if self.requires_grad(p) {
                        let mut dp = Tensor::zeros(g.rows(), pc);
                        for r in 0..g.rows() {
                            dp.data_mut()[r * pc..(r + 1) * pc]
                                .copy_from_slice(&g.row_slice(r)[offset..offset + pc]);
                        }
                        acc(p, dp);
                    }
                    offset += pc;
                }
            }
            Op::GatherRows(a, idx) => {
                let av = self.value(*a);
                let cols = av.cols();
                let mut da = Tensor::zeros(av.rows(), cols);
                for (r, &src) in idx.iter().enumerate() {
                    let dst = &mut da.data_mut()[src * cols..(src + 1) * cols];
                    for (d, x) in dst.iter_mut().zip(g.row_slice(r)) {
                        *d += x;
                    }
                }
                acc(*a, da);
            }
            Op::SegmentSum(a, segs) => {
                let av = self.value(*a);
                let da = g.gather_rows(segs);
                debug_assert_eq!(da.shape(), av.shape());
                acc(*a, da);
            }
            &Op::SumRows(a) => {
                let av = self.value(a);
                let mut da = Tensor::zeros(av.rows(), av.cols());
                for r in 0..av.rows() {
                    da.data_mut()[r * av.cols()..(r + 1) * av.cols()].copy_from_slice(g.data());
                }
                acc(a, da);
            }
            &Op::MeanRows(a) => {
                let av = self.value(a);
                let n = av.rows() as f64;
                let mut da = Tensor::zeros(av.rows(), av.cols());
                for r in 0..av.rows() {
                    for c in 0..av.cols() {
                        da.set(r, c, g.get(0, c) / n);
                    }
                }
                acc(a, da);
            }
            Op::MaxRows(a, arg) => {
                let av = self.value(*a);
                let mut da = Tensor::zeros(av.rows(), av.cols());
                for (c, &r) in arg.iter().enumerate() {
                    da.set(r, c, g.get(0, c));
                }
                acc(*a, da);
            }
            &Op::SumAll(a) => {
                let av = self.value(a);
                acc(a, Tensor::full(av.rows(), av.cols(), g.item()));
            }
            &Op::Norm(a) => {
                let av = self.value(a);
                let n = node.value.item();
                let mut da = av.clone();
                let k = if n > 0.0 { g.item() / n } else { 0.0 };
                da.data_mut().iter_mut().for_each(|x| *x *= k);
                acc(a, da);
            }
            &Op::Tanh(a) => {
                let mut da = g.clone();
                for (d, y) in da.data_mut().iter_mut().zip(node.value.data()) {
                    *d *= 1.0 - y * y;
                }
                acc(a, da);
            }
            &Op::Sigmoid(a) => {
                let mut da = g.clone();
                for (d, y) in da.data_mut().iter_mut().zip(node.value.data()) {
                    *d *= y * (1.0 - y);
                }
                acc(a, da);
            }
            &Op::Relu(a) => {
                let mut da = g.clone();
                for (d, x) in da.data_mut().iter_mut().zip(self.value(a).data()) {
                    if *x <= 0.0 {
                        *d = 0.0;
                    }
                }
                acc(a, da);
            }
            &Op::LeakyRelu(a, slope) => {
                let mut da = g.clone();
                for (d, x) in da.data_mut().iter_mut().zip(self.value(a).data()) {
                    if *x <= 0.0 {
                        *d *= slope;
                    }
                }
                acc(a, da);
            }
            Op::SegmentSoftmax(a, segs) => {
                let y = &node.value;
                let cols = y.cols();
                let num_segments = segs.iter().max().map_or(0, |m| m + 1);
                let mut dot = vec![0.0; num_segments * cols];
                for (e, &s) in segs.iter().enumerate() {
                    for c in 0..cols {
                        dot[s * cols + c] += g.get(e, c) * y.get(e, c);
                    }
                }
                let mut da = g.clone();
                for (e, &s) in segs.iter().enumerate() {
                    for c in 0..cols {
                        da.set(e, c, y.get(e, c) * (g.get(e, c) - dot[s * cols + c]));
                    }
                }
                acc(*a, da);
            }
            &Op::LogSoftmaxRows(a) => {
                let y = &node.value;
                let cols = y.cols();
                let mut da = g.clone();
                for r in 0..y.rows() {
                    let gsum: f64 = g.row_slice(r).iter().sum();
                    for c in 0..cols {
                        da.set(r, c, g.get(r, c) - y.get(r, c).exp() * gsum);
                    }
                }
                acc(a, da);
            }
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn column_reduce(t: &Tensor, f: impl Fn(f64, f64) -> f64, init: f64) -> Tensor {
    let mut out = Tensor::full(1, t.cols(), init);
    for r in 0..t.rows() {
        for (o, &x) in out.data_mut().iter_mut().zip(t.row_slice(r)) {
            *o = f(*o, x);
        }
    }
    out
}

/// Result of a backward sweep, indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// `None` when `v` does not influence the loss.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn segment_softmax_uniform() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::column(vec![0.0, 0.0]));
        let y = tape.segment_softmax(x, &[0, 0]).unwrap();
        assert_eq!(tape.value(y).data(), &[0.5, 0.5]);
    }

    #[test]
    fn tanh_grad_at_zero() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(0.0));
        let y = tape.tanh(x);
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(x).unwrap().item(), 1.0);
    }

    #[test]
    fn sigmoid_grad_at_zero_scaled() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(0.0));
        let s = tape.sigmoid(x);
        let y = tape.scale(s, 3.0);
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(x).unwrap().item(), 0.75);
    }

    #[test]
    fn linear_map_grad_is_input() {
        let mut tape = Tape::new();
        let w = tape.leaf(t(&[&[1.0, -2.0, 0.5]]));
        let x = tape.constant(Tensor::column(vec![3.0, 4.0, 5.0]));
        let wx = tape.matmul(w, x).unwrap();
        let loss = tape.sum_all(wx);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(w).unwrap().data(), &[3.0, 4.0, 5.0]);
        assert!(g.get(x).is_none());
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(2, 1));
        assert!(matches!(tape.backward(x), Err(Error::NonScalarLoss { .. })));
    }

    #[test]
    fn shape_errors_name_the_op() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::zeros(2, 3));
        let b = tape.leaf(Tensor::zeros(2, 3));
        let err = tape.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("matmul") && err.contains("2x3"), "{err}");
        let c = tape.leaf(Tensor::zeros(3, 2));
        assert!(tape.add(a, c).unwrap_err().to_string().contains("add"));
    }

    #[test]
    fn broadcast_add_and_mul() {
        let mut tape = Tape::new();
        let a = tape.leaf(t(&[&[1.0, 2.0], &[3.0, 4.0]]));
        let row = tape.leaf(t(&[&[10.0, 20.0]]));
        let col = tape.leaf(Tensor::column(vec![2.0, 3.0]));
        let s = tape.add(a, row).unwrap();
        let m = tape.mul(s, col).unwrap();
        assert_eq!(tape.value(m).data(), &[22.0, 44.0, 39.0, 72.0]);
        let loss = tape.sum_all(m);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(row).unwrap().data(), &[5.0, 5.0]);
        assert_eq!(g.get(col).unwrap().data(), &[33.0, 37.0]);
        assert_eq!(g.get(a).unwrap().data(), &[2.0, 2.0, 3.0, 3.0]);
    }

    #[test]
    fn gradients_accumulate_over_reuse() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(2.0));
        let y = tape.mul(x, x).unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(x).unwrap().item(), 4.0);
    }

    #[test]
    fn max_rows_routes_to_first_max() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[&[1.0, 5.0], &[1.0, 2.0]]));
        let m = tape.max_rows(x).unwrap();
        assert_eq!(tape.value(m).data(), &[1.0, 5.0]);
        let loss = tape.sum_all(m);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn log_softmax_rows_normalizes() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[&[1.0, 2.0, 3.0]]));
        let y = tape.log_softmax_rows(x);
        let s: f64 = tape.value(y).data().iter().map(|v| v.exp()).sum();
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn branch_signature_tracks_relu_signs() {
        let sig = |v: f64| {
            let mut tape = Tape::with_branch_tracking();
            let x = tape.leaf(Tensor::scalar(v));
            tape.relu(x);
            tape.branch_signature()
        };
        assert_eq!(sig(1.0), sig(2.0));
        assert_ne!(sig(1.0), sig(-1.0));
    }
}
