//! Append-only tape with reverse-mode differentiation.
//!
//! Backward rules are written in terms of tape operations, so the gradient
//! computation is itself recorded and can be differentiated again. That is
//! what the gradient penalty needs: the input gradient of the critic becomes
//! an ordinary tape value whose parameter gradients follow from a second
//! `grad` call.

use std::cell::RefCell;
use std::rc::Rc;

use super::{AutodiffError, Scalar, Tensor};

#[derive(Clone)]
enum Op<F: Scalar> {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, F),
    AddScalar(usize),
    MatMul(usize, usize),
    Transpose(usize),
    Bmm(usize, usize),
    BatchTranspose(usize),
    Tanh(usize),
    Sigmoid(usize),
    Exp(usize),
    Log(usize),
    Recip(usize),
    Sqrt(usize),
    Softmax(usize),
    SumAll(usize),
    SumTrailing(usize),
    ExpandPrefix(usize),
    SumLeading(usize),
    ExpandSuffix(usize),
    Reshape(usize),
    ConcatLast(usize, usize),
    SliceLast(usize, usize),
    PadLast(usize, usize),
    ClampMin(usize, F),
    StraightThrough(usize),
    PermuteLast(usize, Rc<[usize]>),
}

impl<F: Scalar> Op<F> {
    fn inputs(&self) -> [Option<usize>; 2] {
        use Op::*;
        match self {
            Leaf => [None, None],
            PermuteLast(a, _) => [Some(*a), None],
            Add(a, b) | Sub(a, b) | Mul(a, b) | MatMul(a, b) | Bmm(a, b) | ConcatLast(a, b) => [Some(*a), Some(*b)],
            Scale(a, _)
            | AddScalar(a)
            | Transpose(a)
            | BatchTranspose(a)
            | Tanh(a)
            | Sigmoid(a)
            | Exp(a)
            | Log(a)
            | Recip(a)
            | Sqrt(a)
            | Softmax(a)
            | SumAll(a)
            | SumTrailing(a)
            | ExpandPrefix(a)
            | SumLeading(a)
            | ExpandSuffix(a)
            | Reshape(a)
            | SliceLast(a, _)
            | PadLast(a, _)
            | ClampMin(a, _)
            | StraightThrough(a) => [Some(*a), None],
        }
    }
}

struct Node<F: Scalar> {
    op: Op<F>,
    value: Rc<Tensor<F>>,
}

/// Recording of one forward (and optionally backward) computation.
pub struct Tape<F: Scalar = f32> {
    nodes: RefCell<Vec<Node<F>>>,
}

impl<F: Scalar> Default for Tape<F> {
    fn default() -> Self {
        Self::new()
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t, F: Scalar = f32> {
    tape: &'t Tape<F>,
    id: usize,
}

impl<F: Scalar> std::fmt::Debug for Var<'_, F> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

fn mismatch(op: &'static str, lhs: &[usize], rhs: &[usize]) -> AutodiffError {
    AutodiffError::ShapeMismatch {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

impl<F: Scalar> Tape<F> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Records a leaf. Any leaf can be a differentiation target.
    pub fn leaf(&self, value: Tensor<F>) -> Var<'_, F> {
        self.push(Op::Leaf, value)
    }

    /// Alias of [`Tape::leaf`] for values that are never differentiated.
    pub fn constant(&self, value: Tensor<F>) -> Var<'_, F> {
        self.push(Op::Leaf, value)
    }

    pub fn scalar(&self, value: F) -> Var<'_, F> {
        self.constant(Tensor::scalar(value))
    }

    fn push(&self, op: Op<F>, value: Tensor<F>) -> Var<'_, F> {
        debug_assert!(value.all_finite(), "non-finite value produced on tape");
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            op,
            value: Rc::new(value),
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn value(&self, id: usize) -> Rc<Tensor<F>> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    fn var(&self, id: usize) -> Var<'_, F> {
        Var { tape: self, id }
    }

    /// Gradients of a single-element `output` with respect to `wrt`.
    ///
    /// The backward pass is recorded on this tape, so the returned gradients
    /// can themselves be differentiated. Targets that `output` does not depend
    /// on get zero gradients.
    pub fn grad<'t>(&'t self, output: Var<'t, F>, wrt: &[Var<'t, F>]) -> Result<Vec<Var<'t, F>>, AutodiffError> {
        let out_shape = output.shape();
        if out_shape.iter().product::<usize>() != 1 {
            return Err(AutodiffError::NonScalarOutput(out_shape));
        }
        let end = output.id + 1;
        let mut relevant = vec![false; end];
        {
            let nodes = self.nodes.borrow();
            for w in wrt {
                if w.id < end {
                    relevant[w.id] = true;
                }
            }
            for i in 0..end {
                if !relevant[i] {
                    relevant[i] = nodes[i].op.inputs().iter().flatten().any(|&j| relevant[j]);
                }
            }
        }

        let mut grads: Vec<Option<Var<'t, F>>> = vec![None; end];
        grads[output.id] = Some(self.constant(Tensor::ones(&out_shape)));
        for i in (0..end).rev() {
            if !relevant[i] {
                continue;
            }
            let Some(g) = grads[i] else { continue };
            let op = self.nodes.borrow()[i].op.clone();
            let contributions = self.backward_rule(&op, self.var(i), g)?;
            for (j, gj) in contributions.into_iter().flatten() {
                if !relevant[j] {
                    continue;
                }
                grads[j] = Some(match grads[j] {
                    Some(acc) => acc.add(gj)?,
                    None => gj,
                });
            }
        }
        wrt.iter()
            .map(|w| match grads.get(w.id).copied().flatten() {
                Some(g) => Ok(g),
                None => Ok(self.constant(Tensor::zeros(&w.shape()))),
            })
            .collect()
    }

    #[allow(clippy::type_complexity)]
    fn backward_rule<'t>(
        &'t self,
        op: &Op<F>,
        out: Var<'t, F>,
        g: Var<'t, F>,
    ) -> Result<[Option<(usize, Var<'t, F>)>; 2], AutodiffError> {
        use Op::*;
        let v = |id| self.var(id);
        if let PermuteLast(a, perm) = op {
            let mut inverse = vec![0; perm.len()];
            for (j, &p) in perm.iter().enumerate() {
                inverse[p] = j;
            }
            return Ok([Some((*a, g.permute_last(&inverse)?)), None]);
        }
        Ok(match *op {
            Leaf => [None, None],
            Add(a, b) => [Some((a, g)), Some((b, g))],
            Sub(a, b) => [Some((a, g)), Some((b, g.scale(-F::one())))],
            Mul(a, b) => [Some((a, g.mul(v(b))?)), Some((b, g.mul(v(a))?))],
            Scale(a, c) => [Some((a, g.scale(c))), None],
            AddScalar(a) => [Some((a, g)), None],
            MatMul(a, b) => [
                Some((a, g.matmul(v(b).transpose()?)?)),
                Some((b, v(a).transpose()?.matmul(g)?)),
            ],
            Transpose(a) => [Some((a, g.transpose()?)), None],
            Bmm(a, b) => [
                Some((a, g.bmm(v(b).batch_transpose()?)?)),
                Some((b, v(a).batch_transpose()?.bmm(g)?)),
            ],
            BatchTranspose(a) => [Some((a, g.batch_transpose()?)), None],
            Tanh(a) => {
                let d = out.mul(out)?.scale(-F::one()).add_scalar(F::one());
                [Some((a, g.mul(d)?)), None]
            }
            Sigmoid(a) => {
                let d = out.mul(out.scale(-F::one()).add_scalar(F::one()))?;
                [Some((a, g.mul(d)?)), None]
            }
            Exp(a) => [Some((a, g.mul(out)?)), None],
            Log(a) => [Some((a, g.mul(v(a).recip())?)), None],
            Recip(a) => [Some((a, g.mul(out.mul(out)?)?.scale(-F::one()))), None],
            Sqrt(a) => {
                let half = F::from_f64_lossy(0.5);
                [Some((a, g.mul(out.recip().scale(half))?)), None]
            }
            Softmax(a) => {
                let shape = out.shape();
                let keep = shape.len().saturating_sub(1);
                let s = g.mul(out)?.sum_trailing(keep)?.expand_prefix(&shape)?;
                [Some((a, out.mul(g.sub(s)?)?)), None]
            }
            SumAll(a) => [Some((a, g.reshape(&[])?.expand_prefix(&v(a).shape())?)), None],
            SumTrailing(a) => [Some((a, g.expand_prefix(&v(a).shape())?)), None],
            ExpandPrefix(a) => [Some((a, g.sum_trailing(v(a).shape().len())?)), None],
            SumLeading(a) => [Some((a, g.expand_suffix(&v(a).shape())?)), None],
            ExpandSuffix(a) => [Some((a, g.sum_leading(v(a).shape().len())?)), None],
            Reshape(a) => [Some((a, g.reshape(&v(a).shape())?)), None],
            ConcatLast(a, b) => {
                let wa = v(a).last_dim();
                let wb = v(b).last_dim();
                [Some((a, g.slice_last(0, wa)?)), Some((b, g.slice_last(wa, wa + wb)?))]
            }
            SliceLast(a, start) => {
                let width = v(a).last_dim();
                [Some((a, g.pad_last(start, width)?)), None]
            }
            PadLast(a, start) => {
                let w = v(a).last_dim();
                [Some((a, g.slice_last(start, start + w)?)), None]
            }
            ClampMin(a, c) => {
                let mask = self.value(a).map(|x| if x > c { F::one() } else { F::zero() });
                [Some((a, g.mul(self.constant(mask))?)), None]
            }
            StraightThrough(a) => [Some((a, g)), None],
            PermuteLast(..) => unreachable!("handled above"),
        })
    }
}

impl<'t, F: Scalar> Var<'t, F> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape<F> {
        self.tape
    }

    pub fn value(&self) -> Rc<Tensor<F>> {
        self.tape.value(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn last_dim(&self) -> usize {
        self.tape.nodes.borrow()[self.id].value.last_dim()
    }

    /// Single-element value.
    pub fn item(&self) -> F {
        self.value().item()
    }

    fn same_tape(&self, other: &Var<'t, F>) {
        assert!(std::ptr::eq(self.tape, other.tape), "variables from different tapes");
    }

    fn unary(&self, op: Op<F>, f: impl Fn(F) -> F) -> Var<'t, F> {
        let out = self.value().map(f);
        self.tape.push(op, out)
    }

    fn zip(
        &self,
        other: Var<'t, F>,
        name: &'static str,
        op: Op<F>,
        f: impl Fn(F, F) -> F,
    ) -> Result<Var<'t, F>, AutodiffError> {
        self.same_tape(&other);
        let a = self.value();
        let b = other.value();
        if a.shape() != b.shape() {
            return Err(mismatch(name, a.shape(), b.shape()));
        }
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        Ok(self.tape.push(op, Tensor::new(a.shape().to_vec(), data)?))
    }

    pub fn add(&self, other: Var<'t, F>) -> Result<Var<'t, F>, AutodiffError> {
        self.zip(other, "add", Op::Add(self.id, other.id), |x, y| x + y)
    }

    pub fn sub(&self, other: Var<'t, F>) -> Result<Var<'t, F>, AutodiffError> {
        self.zip(other, "sub", Op::Sub(self.id, other.id), |x, y| x - y)
    }

    /// Element-wise product.
    pub fn mul(&self, other: Var<'t, F>) -> Result<Var<'t, F>, AutodiffError> {
        self.zip(other, "mul", Op::Mul(self.id, other.id), |x, y| x * y)
    }

    pub fn scale(&self, c: F) -> Var<'t, F> {
        self.unary(Op::Scale(self.id, c), |x| x * c)
    }

    pub fn add_scalar(&self, c: F) -> Var<'t, F> {
        self.unary(Op::AddScalar(self.id), |x| x + c)
    }

    pub fn tanh(&self) -> Var<'t, F> {
        self.unary(Op::Tanh(self.id), F::tanh)
    }

    pub fn sigmoid(&self) -> Var<'t, F> {
        self.unary(Op::Sigmoid(self.id), |x| {
            if x >= F::zero() {
                F::one() / (F::one() + (-x).exp())
            } else {
                let e = x.exp();
                e / (F::one() + e)
            }
        })
    }

    pub fn exp(&self) -> Var<'t, F> {
        self.unary(Op::Exp(self.id), F::exp)
    }

    pub fn ln(&self) -> Var<'t, F> {
        self.unary(Op::Log(self.id), F::ln)
    }

    pub fn recip(&self) -> Var<'t, F> {
        self.unary(Op::Recip(self.id), F::recip)
    }

    pub fn sqrt(&self) -> Var<'t, F> {
        self.unary(Op::Sqrt(self.id), F::sqrt)
    }

    /// `max(x, c)` element-wise; the gradient is zero where clamped.
    pub fn clamp_min(&self, c: F) -> Var<'t, F> {
        self.unary(Op::ClampMin(self.id, c), |x| x.max(c))
    }

    /// Forward value of `hard` with the gradient routed to `self`.
    pub fn straight_through(&self, hard: Tensor<F>) -> Result<Var<'t, F>, AutodiffError> {
        let shape = self.shape();
        if shape != hard.shape() {
            return Err(mismatch("straight_through", &shape, hard.shape()));
        }
        Ok(self.tape.push(Op::StraightThrough(self.id), hard))
    }

    /// Constant copy of the current value, cut off from the graph.
    pub fn detach(&self) -> Var<'t, F> {
        self.tape.constant((*self.value()).clone())
    }

    /// 2-D matrix product.
    pub fn matmul(&self, other: Var<'t, F>) -> Result<Var<'t, F>, AutodiffError> {
        self.same_tape(&other);
        let a = self.value();
        let b = other.value();
        let (sa, sb) = (a.shape(), b.shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(mismatch("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let out = matmul_kernel(a.data(), b.data(), m, k, n);
        Ok(self
            .tape
            .push(Op::MatMul(self.id, other.id), Tensor::new(vec![m, n], out)?))
    }

    pub fn transpose(&self) -> Result<Var<'t, F>, AutodiffError> {
        let a = self.value();
        let s = a.shape();
        if s.len() != 2 {
            return Err(mismatch("transpose", s, &[2]));
        }
        let (m, n) = (s[0], s[1]);
        let d = a.data();
        let out = Tensor::from_fn(&[n, m], |k| d[(k % m) * n + k / m]);
        Ok(self.tape.push(Op::Transpose(self.id), out))
    }

    /// Batched matrix product of `[b, m, k]` and `[b, k, n]`.
    pub fn bmm(&self, other: Var<'t, F>) -> Result<Var<'t, F>, AutodiffError> {
        self.same_tape(&other);
        let a = self.value();
        let b = other.value();
        let (sa, sb) = (a.shape(), b.shape());
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[1] {
            return Err(mismatch("bmm", sa, sb));
        }
        let (bt, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
        let mut out = Vec::with_capacity(bt * m * n);
        for t in 0..bt {
            out.extend(matmul_kernel(
                &a.data()[t * m * k..(t + 1) * m * k],
                &b.data()[t * k * n..(t + 1) * k * n],
                m,
                k,
                n,
            ));
        }
        Ok(self
            .tape
            .push(Op::Bmm(self.id, other.id), Tensor::new(vec![bt, m, n], out)?))
    }

    /// Swaps the last two axes of a rank-3 tensor.
    pub fn batch_transpose(&self) -> Result<Var<'t, F>, AutodiffError> {
        let a = self.value();
        let s = a.shape();
        if s.len() != 3 {
            return Err(mismatch("batch_transpose", s, &[3]));
        }
        let (bt, m, n) = (s[0], s[1], s[2]);
        let d = a.data();
        let out = Tensor::from_fn(&[bt, n, m], |idx| {
            let t = idx / (m * n);
            let r = idx % (m * n);
            let (j, i) = (r / m, r % m);
            d[t * m * n + i * n + j]
        });
        Ok(self.tape.push(Op::BatchTranspose(self.id), out))
    }

    /// Softmax over the last axis.
    pub fn softmax(&self) -> Var<'t, F> {
        let a = self.value();
        let w = a.last_dim();
        let mut out = a.data().to_vec();
        for row in out.chunks_mut(w) {
            let mx = row.iter().copied().fold(F::neg_infinity(), F::max);
            let mut s = F::zero();
            for x in row.iter_mut() {
                *x = (*x - mx).exp();
                s += *x;
            }
            for x in row.iter_mut() {
                *x = *x / s;
            }
        }
        let t = Tensor::new(a.shape().to_vec(), out).expect("same shape");
        self.tape.push(Op::Softmax(self.id), t)
    }

    /// Sum of all elements, shape `[]`.
    pub fn sum(&self) -> Var<'t, F> {
        let s = self.value().data().iter().copied().sum();
        self.tape.push(Op::SumAll(self.id), Tensor::scalar(s))
    }

    pub fn mean(&self) -> Var<'t, F> {
        let n = F::from_usize(self.value().len()).expect("length fits");
        self.sum().scale(F::one() / n)
    }

    /// Sums over every axis after the first `keep`.
    pub fn sum_trailing(&self, keep: usize) -> Result<Var<'t, F>, AutodiffError> {
        let a = self.value();
        let s = a.shape();
        if keep > s.len() {
            return Err(mismatch("sum_trailing", s, &[keep]));
        }
        let inner: usize = s[keep..].iter().product();
        let out: Vec<F> = if inner == 0 {
            vec![F::zero(); s[..keep].iter().product()]
        } else {
            a.data().chunks(inner).map(|c| c.iter().copied().sum()).collect()
        };
        Ok(self
            .tape
            .push(Op::SumTrailing(self.id), Tensor::new(s[..keep].to_vec(), out)?))
    }

    /// Repeats each element over new trailing axes so the result has `shape`;
    /// the current shape must be a prefix of `shape`.
    pub fn expand_prefix(&self, shape: &[usize]) -> Result<Var<'t, F>, AutodiffError> {
        let a = self.value();
        let s = a.shape();
        if s.len() > shape.len() || s != &shape[..s.len()] {
            return Err(mismatch("expand_prefix", s, shape));
        }
        let inner: usize = shape[s.len()..].iter().product();
        let mut out = Vec::with_capacity(a.len() * inner);
        for &x in a.data() {
            out.extend(std::iter::repeat_n(x, inner));
        }
        Ok(self
            .tape
            .push(Op::ExpandPrefix(self.id), Tensor::new(shape.to_vec(), out)?))
    }

    /// Sums over leading axes, keeping the last `keep` axes.
    pub fn sum_leading(&self, keep: usize) -> Result<Var<'t, F>, AutodiffError> {
        let a = self.value();
        let s = a.shape();
        if keep > s.len() {
            return Err(mismatch("sum_leading", s, &[keep]));
        }
        let suffix = s[s.len() - keep..].to_vec();
        let inner: usize = suffix.iter().product();
        let mut out = vec![F::zero(); inner];
        if inner > 0 {
            for chunk in a.data().chunks(inner) {
                for (o, &x) in out.iter_mut().zip(chunk) {
                    *o += x;
                }
            }
        }
        Ok(self.tape.push(Op::SumLeading(self.id), Tensor::new(suffix, out)?))
    }

    /// Tiles the tensor over new leading axes; the current shape must be a
    /// suffix of `shape`.
    pub fn expand_suffix(&self, shape: &[usize]) -> Result<Var<'t, F>, AutodiffError> {
        let a = self.value();
        let s = a.shape();
        if s.len() > shape.len() || s != &shape[shape.len() - s.len()..] {
            return Err(mismatch("expand_suffix", s, shape));
        }
        let outer: usize = shape[..shape.len() - s.len()].iter().product();
        let mut out = Vec::with_capacity(a.len() * outer);
        for _ in 0..outer {
            out.extend_from_slice(a.data());
        }
        Ok(self
            .tape
            .push(Op::ExpandSuffix(self.id), Tensor::new(shape.to_vec(), out)?))
    }

    /// `self + bias`, with `bias` broadcast over the leading axes.
    pub fn add_bias(&self, bias: Var<'t, F>) -> Result<Var<'t, F>, AutodiffError> {
        self.add(bias.expand_suffix(&self.shape())?)
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Var<'t, F>, AutodiffError> {
        let t = (*self.value()).clone().reshaped(shape)?;
        Ok(self.tape.push(Op::Reshape(self.id), t))
    }

    /// Concatenation along the last axis; leading axes must agree.
    pub fn concat_last(&self, other: Var<'t, F>) -> Result<Var<'t, F>, AutodiffError> {
        self.same_tape(&other);
        let a = self.value();
        let b = other.value();
        let (sa, sb) = (a.shape(), b.shape());
        if sa.is_empty() || sa.len() != sb.len() || sa[..sa.len() - 1] != sb[..sb.len() - 1] {
            return Err(mismatch("concat_last", sa, sb));
        }
        let (wa, wb) = (a.last_dim(), b.last_dim());
        let rows = a.len() / wa.max(1);
        let mut out = Vec::with_capacity(a.len() + b.len());
        for r in 0..rows {
            out.extend_from_slice(&a.data()[r * wa..(r + 1) * wa]);
            out.extend_from_slice(&b.data()[r * wb..(r + 1) * wb]);
        }
        let mut shape = sa.to_vec();
        *shape.last_mut().expect("non-empty") = wa + wb;
        Ok(self
            .tape
            .push(Op::ConcatLast(self.id, other.id), Tensor::new(shape, out)?))
    }

    /// Columns `start..end` of the last axis.
    pub fn slice_last(&self, start: usize, end: usize) -> Result<Var<'t, F>, AutodiffError> {
        let a = self.value();
        let w = a.last_dim();
        if a.rank() == 0 || start > end || end > w {
            return Err(mismatch("slice_last", a.shape(), &[start, end]));
        }
        let rows = a.len() / w.max(1);
        let mut out = Vec::with_capacity(rows * (end - start));
        for r in 0..rows {
            out.extend_from_slice(&a.data()[r * w + start..r * w + end]);
        }
        let mut shape = a.shape().to_vec();
        *shape.last_mut().expect("non-empty") = end - start;
        Ok(self.tape.push(Op::SliceLast(self.id, start), Tensor::new(shape, out)?))
    }

    /// Zero-pads the last axis to `width`, placing the data at `start`.
    pub fn pad_last(&self, start: usize, width: usize) -> Result<Var<'t, F>, AutodiffError> {
        let a = self.value();
        let w = a.last_dim();
        if a.rank() == 0 || start + w > width {
            return Err(mismatch("pad_last", a.shape(), &[start, width]));
        }
        let rows = a.len() / w.max(1);
        let mut out = vec![F::zero(); rows * width];
        for r in 0..rows {
            out[r * width + start..r * width + start + w].copy_from_slice(&a.data()[r * w..(r + 1) * w]);
        }
        let mut shape = a.shape().to_vec();
        *shape.last_mut().expect("non-empty") = width;
        Ok(self.tape.push(Op::PadLast(self.id, start), Tensor::new(shape, out)?))
    }

    /// Reorders the last axis: `out[.., j] = in[.., perm[j]]`.
    pub fn permute_last(&self, perm: &[usize]) -> Result<Var<'t, F>, AutodiffError> {
        let a = self.value();
        let w = a.last_dim();
        let mut seen = vec![false; w];
        if a.rank() == 0 || perm.len() != w || !perm.iter().all(|&p| p < w && !std::mem::replace(&mut seen[p], true)) {
            return Err(mismatch("permute_last", a.shape(), &[perm.len()]));
        }
        let mut out = Vec::with_capacity(a.len());
        for row in a.data().chunks(w) {
            out.extend(perm.iter().map(|&p| row[p]));
        }
        let t = Tensor::new(a.shape().to_vec(), out)?;
        Ok(self.tape.push(Op::PermuteLast(self.id, perm.into()), t))
    }

    /// Euclidean norm over all elements, with `eps` added under the root.
    pub fn l2_norm(&self, eps: F) -> Var<'t, F> {
        self.mul(*self).expect("same shape").sum().add_scalar(eps).sqrt()
    }

    /// Multiplies by a constant mask (dropout and masking).
    pub fn mask(&self, mask: Tensor<F>) -> Result<Var<'t, F>, AutodiffError> {
        let m = self.tape.constant(mask);
        self.mul(m)
    }
}

fn matmul_kernel<F: Scalar>(a: &[F], b: &[F], m: usize, k: usize, n: usize) -> Vec<F> {
    let mut out = vec![F::zero(); m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let x = a[i * k + p];
            if x == F::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &y) in row.iter_mut().zip(brow) {
                *o += x * y;
            }
        }
    }
    out
}
