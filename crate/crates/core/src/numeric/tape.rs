use alloc::vec;
use alloc::vec::Vec;
use core::mem;

use super::matrix::{axpy, dot, matvec};
use super::{Gradients, Matrix, NumericError, ParamId, ParamSet, Shape};

/// Reference to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Handle(usize);

impl Handle {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Primitive operations the tape can record and differentiate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OpKind {
    /// `[matrix, vector] -> matrix · vector`
    MatVec,
    /// Element-wise sum of two equally shaped values.
    Add,
    /// Element-wise (Hadamard) product.
    Mul,
    Sigmoid,
    Tanh,
    /// Element-wise sum of one or more equally shaped values, in input order.
    Sum,
    /// Concatenation of vectors.
    Concat,
    /// Element-wise natural logarithm.
    Ln,
    /// Picks one coordinate of a vector as a scalar.
    Select(usize),
    /// Mean of one or more scalars.
    Mean,
    /// Multiplication by a constant.
    Scale(f64),
    /// Max-shifted softmax of a vector.
    Softmax,
}

impl OpKind {
    pub fn name(&self) -> &'static str {
        match self {
            OpKind::MatVec => "matvec",
            OpKind::Add => "add",
            OpKind::Mul => "mul",
            OpKind::Sigmoid => "sigmoid",
            OpKind::Tanh => "tanh",
            OpKind::Sum => "sum",
            OpKind::Concat => "concat",
            OpKind::Ln => "ln",
            OpKind::Select(_) => "select",
            OpKind::Mean => "mean",
            OpKind::Scale(_) => "scale",
            OpKind::Softmax => "softmax",
        }
    }
}

enum Source {
    Constant,
    Param(ParamId),
    Apply(OpKind, Vec<Handle>),
}

struct Record {
    source: Source,
    shape: Shape,
    // Empty for parameters, whose values live in the ParamSet.
    value: Vec<f64>,
    needs_grad: bool,
}

/// Reverse-mode tape. Built fresh for every example, so the recorded graph
/// can follow the shape of each input tree.
///
/// Parameter values are borrowed from a [`ParamSet`]; [`Tape::backward`]
/// returns their gradients without touching the set, which lets several
/// tapes read the same parameters concurrently.
pub struct Tape<'p> {
    params: &'p ParamSet,
    records: Vec<Record>,
    param_handles: Vec<Option<Handle>>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamSet) -> Self {
        Self {
            params,
            records: Vec::new(),
            param_handles: vec![None; params.len()],
        }
    }

    pub fn params(&self) -> &'p ParamSet {
        self.params
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records a constant that gradients do not flow into.
    pub fn constant(&mut self, value: Matrix) -> Handle {
        let shape = value.shape();
        self.push(Record {
            source: Source::Constant,
            shape,
            value: value.into_data(),
            needs_grad: false,
        })
    }

    /// Records a constant column vector.
    pub fn vector(&mut self, data: &[f64]) -> Result<Handle, NumericError> {
        Ok(self.constant(Matrix::column(data.to_vec())?))
    }

    pub fn zeros(&mut self, len: usize) -> Handle {
        self.constant(Matrix::zeros(len, 1))
    }

    /// Handle of a parameter; repeated calls return the same handle so all
    /// uses accumulate into one gradient.
    pub fn param(&mut self, id: ParamId) -> Handle {
        if let Some(h) = self.param_handles[id.0] {
            return h;
        }
        let shape = self.params.value(id).shape();
        let h = self.push(Record {
            source: Source::Param(id),
            shape,
            value: Vec::new(),
            needs_grad: true,
        });
        self.param_handles[id.0] = Some(h);
        h
    }

    fn push(&mut self, record: Record) -> Handle {
        self.records.push(record);
        Handle(self.records.len() - 1)
    }

    pub fn shape(&self, h: Handle) -> Shape {
        self.records[h.0].shape
    }

    pub fn value(&self, h: Handle) -> &[f64] {
        let record = &self.records[h.0];
        match record.source {
            Source::Param(id) => self.params.value(id).data(),
            _ => &record.value,
        }
    }

    pub fn scalar(&self, h: Handle) -> Result<f64, NumericError> {
        let shape = self.shape(h);
        if !shape.is_scalar() {
            return Err(NumericError::NotScalar { shape });
        }
        Ok(self.value(h)[0])
    }

    fn check_handle(&self, h: Handle) -> Result<Shape, NumericError> {
        self.records
            .get(h.0)
            .map(|r| r.shape)
            .ok_or(NumericError::UnknownHandle(h.0))
    }

    /// Applies a primitive and records it.
    pub fn apply(&mut self, kind: OpKind, inputs: &[Handle]) -> Result<Handle, NumericError> {
        let shapes = inputs
            .iter()
            .map(|&h| self.check_handle(h))
            .collect::<Result<Vec<_>, _>>()?;
        let op = kind.name();
        let arity = |expected: &'static str, ok: bool| {
            if ok {
                Ok(())
            } else {
                Err(NumericError::Arity {
                    op,
                    expected,
                    got: inputs.len(),
                })
            }
        };
        let out_shape = match kind {
            OpKind::MatVec => {
                arity("2", inputs.len() == 2)?;
                let (m, v) = (shapes[0], shapes[1]);
                if !v.is_vector() || m.cols != v.rows {
                    return Err(NumericError::ShapeMismatch { op, left: m, right: v });
                }
                Shape::vector(m.rows)
            }
            OpKind::Add | OpKind::Mul => {
                arity("2", inputs.len() == 2)?;
                same_shapes(op, &shapes)?
            }
            OpKind::Sigmoid | OpKind::Tanh | OpKind::Ln | OpKind::Scale(_) => {
                arity("1", inputs.len() == 1)?;
                shapes[0]
            }
            OpKind::Sum => {
                arity("at least 1", !inputs.is_empty())?;
                same_shapes(op, &shapes)?
            }
            OpKind::Concat => {
                arity("at least 1", !inputs.is_empty())?;
                if let Some(bad) = shapes.iter().find(|s| !s.is_vector()) {
                    return Err(NumericError::ShapeMismatch {
                        op,
                        left: *bad,
                        right: Shape::vector(bad.len()),
                    });
                }
                Shape::vector(shapes.iter().map(|s| s.rows).sum())
            }
            OpKind::Select(index) => {
                arity("1", inputs.len() == 1)?;
                let s = shapes[0];
                if !s.is_vector() {
                    return Err(NumericError::ShapeMismatch {
                        op,
                        left: s,
                        right: Shape::vector(s.len()),
                    });
                }
                if index >= s.rows {
                    return Err(NumericError::IndexOutOfRange { index, len: s.rows });
                }
                Shape::SCALAR
            }
            OpKind::Mean => {
                arity("at least 1", !inputs.is_empty())?;
                if let Some(bad) = shapes.iter().find(|s| !s.is_scalar()) {
                    return Err(NumericError::ShapeMismatch {
                        op,
                        left: *bad,
                        right: Shape::SCALAR,
                    });
                }
                Shape::SCALAR
            }
            OpKind::Softmax => {
                arity("1", inputs.len() == 1)?;
                let s = shapes[0];
                if !s.is_vector() || s.is_empty() {
                    return Err(NumericError::ShapeMismatch {
                        op,
                        left: s,
                        right: Shape::vector(s.len().max(1)),
                    });
                }
                s
            }
        };

        let value = self.forward(kind, inputs, out_shape);
        if value.iter().any(|v| !v.is_finite()) {
            return Err(NumericError::NonFinite { op });
        }
        let needs_grad = inputs.iter().any(|h| self.records[h.0].needs_grad);
        Ok(self.push(Record {
            source: Source::Apply(kind, inputs.to_vec()),
            shape: out_shape,
            value,
            needs_grad,
        }))
    }

    fn forward(&self, kind: OpKind, inputs: &[Handle], shape: Shape) -> Vec<f64> {
        let arg = |i: usize| self.value(inputs[i]);
        match kind {
            OpKind::MatVec => {
                let mut out = vec![0.0; shape.rows];
                matvec(arg(0), self.shape(inputs[0]), arg(1), &mut out);
                out
            }
            OpKind::Add => arg(0).iter().zip(arg(1)).map(|(a, b)| a + b).collect(),
            OpKind::Mul => arg(0).iter().zip(arg(1)).map(|(a, b)| a * b).collect(),
            OpKind::Sigmoid => arg(0).iter().map(|&x| sigmoid(x)).collect(),
            OpKind::Tanh => arg(0).iter().map(|&x| libm::tanh(x)).collect(),
            OpKind::Ln => arg(0).iter().map(|&x| libm::log(x)).collect(),
            OpKind::Scale(c) => arg(0).iter().map(|&x| c * x).collect(),
            OpKind::Sum => {
                let mut out = arg(0).to_vec();
                for i in 1..inputs.len() {
                    out.iter_mut().zip(arg(i)).for_each(|(o, v)| *o += v);
                }
                out
            }
            OpKind::Concat => {
                let mut out = Vec::with_capacity(shape.rows);
                for i in 0..inputs.len() {
                    out.extend_from_slice(arg(i));
                }
                out
            }
            OpKind::Select(index) => vec![arg(0)[index]],
            OpKind::Mean => {
                let total: f64 = (0..inputs.len()).map(|i| arg(i)[0]).sum();
                vec![total / inputs.len() as f64]
            }
            OpKind::Softmax => softmax(arg(0)),
        }
    }

    /// Reverse sweep from a scalar seed. Every parameter reached from the
    /// seed receives `∂seed/∂param`, summed over all of its uses.
    pub fn backward(&self, seed: Handle) -> Result<Gradients, NumericError> {
        let shape = self.check_handle(seed)?;
        if !shape.is_scalar() {
            return Err(NumericError::NotScalar { shape });
        }
        let mut grads = Gradients::with_len(self.params.len());
        let mut adjoints: Vec<Vec<f64>> = (0..=seed.0).map(|_| Vec::new()).collect();
        adjoints[seed.0] = vec![1.0];

        for i in (0..=seed.0).rev() {
            let g = mem::take(&mut adjoints[i]);
            if g.is_empty() {
                continue;
            }
            let record = &self.records[i];
            let (kind, inputs) = match &record.source {
                Source::Constant => continue,
                Source::Param(id) => {
                    let slot = grads.slot(*id, g.len());
                    slot.iter_mut().zip(&g).for_each(|(s, v)| *s += v);
                    continue;
                }
                Source::Apply(kind, inputs) => (*kind, inputs),
            };
            let y = &record.value;
            for (pos, &input) in inputs.iter().enumerate() {
                if !self.records[input.0].needs_grad {
                    continue;
                }
                let len = self.records[input.0].shape.len();
                let adj = &mut adjoints[input.0];
                if adj.is_empty() {
                    *adj = vec![0.0; len];
                }
                let x = self.value(input);
                match kind {
                    OpKind::MatVec => {
                        let m_shape = self.shape(inputs[0]);
                        if pos == 0 {
                            let v = self.value(inputs[1]);
                            for (r, &gr) in g.iter().enumerate() {
                                if gr != 0.0 {
                                    axpy(gr, v, &mut adj[r * m_shape.cols..(r + 1) * m_shape.cols]);
                                }
                            }
                        } else {
                            let m = self.value(inputs[0]);
                            for (r, &gr) in g.iter().enumerate() {
                                if gr != 0.0 {
                                    axpy(gr, &m[r * m_shape.cols..(r + 1) * m_shape.cols], adj);
                                }
                            }
                        }
                    }
                    OpKind::Add | OpKind::Sum => adj.iter_mut().zip(&g).for_each(|(a, gi)| *a += gi),
                    OpKind::Mul => {
                        let other = self.value(inputs[1 - pos]);
                        for ((a, gi), o) in adj.iter_mut().zip(&g).zip(other) {
                            *a += gi * o;
                        }
                    }
                    OpKind::Sigmoid => {
                        for ((a, gi), yi) in adj.iter_mut().zip(&g).zip(y) {
                            *a += gi * yi * (1.0 - yi);
                        }
                    }
                    OpKind::Tanh => {
                        for ((a, gi), yi) in adj.iter_mut().zip(&g).zip(y) {
                            *a += gi * (1.0 - yi * yi);
                        }
                    }
                    OpKind::Ln => {
                        for ((a, gi), xi) in adj.iter_mut().zip(&g).zip(x) {
                            *a += gi / xi;
                        }
                    }
                    OpKind::Scale(c) => adj.iter_mut().zip(&g).for_each(|(a, gi)| *a += c * gi),
                    OpKind::Concat => {
                        let offset: usize = inputs[..pos].iter().map(|h| self.shape(*h).rows).sum();
                        adj.iter_mut()
                            .zip(&g[offset..offset + len])
                            .for_each(|(a, gi)| *a += gi);
                    }
                    OpKind::Select(index) => adj[index] += g[0],
                    OpKind::Mean => adj[0] += g[0] / inputs.len() as f64,
                    OpKind::Softmax => {
                        let gy = dot(&g, y);
                        for ((a, gi), yi) in adj.iter_mut().zip(&g).zip(y) {
                            *a += yi * (gi - gy);
                        }
                    }
                }
            }
        }
        Ok(grads)
    }

    // Convenience wrappers.

    pub fn matvec(&mut self, m: Handle, v: Handle) -> Result<Handle, NumericError> {
        self.apply(OpKind::MatVec, &[m, v])
    }

    pub fn add(&mut self, a: Handle, b: Handle) -> Result<Handle, NumericError> {
        self.apply(OpKind::Add, &[a, b])
    }

    pub fn mul(&mut self, a: Handle, b: Handle) -> Result<Handle, NumericError> {
        self.apply(OpKind::Mul, &[a, b])
    }

    pub fn sigmoid(&mut self, a: Handle) -> Result<Handle, NumericError> {
        self.apply(OpKind::Sigmoid, &[a])
    }

    pub fn tanh(&mut self, a: Handle) -> Result<Handle, NumericError> {
        self.apply(OpKind::Tanh, &[a])
    }

    pub fn sum(&mut self, items: &[Handle]) -> Result<Handle, NumericError> {
        self.apply(OpKind::Sum, items)
    }

    pub fn concat(&mut self, items: &[Handle]) -> Result<Handle, NumericError> {
        self.apply(OpKind::Concat, items)
    }

    pub fn ln(&mut self, a: Handle) -> Result<Handle, NumericError> {
        self.apply(OpKind::Ln, &[a])
    }

    pub fn select(&mut self, a: Handle, index: usize) -> Result<Handle, NumericError> {
        self.apply(OpKind::Select(index), &[a])
    }

    pub fn mean(&mut self, items: &[Handle]) -> Result<Handle, NumericError> {
        self.apply(OpKind::Mean, items)
    }

    pub fn scale(&mut self, a: Handle, factor: f64) -> Result<Handle, NumericError> {
        self.apply(OpKind::Scale(factor), &[a])
    }

    pub fn softmax(&mut self, a: Handle) -> Result<Handle, NumericError> {
        self.apply(OpKind::Softmax, &[a])
    }

    /// `W·x + b` with parameter `W` and `b`.
    pub fn affine(&mut self, w: ParamId, b: ParamId, x: Handle) -> Result<Handle, NumericError> {
        let (w, b) = (self.param(w), self.param(b));
        let wx = self.matvec(w, x)?;
        self.add(wx, b)
    }
}

fn same_shapes(op: &'static str, shapes: &[Shape]) -> Result<Shape, NumericError> {
    let first = shapes[0];
    match shapes.iter().find(|s| **s != first) {
        Some(other) => Err(NumericError::ShapeMismatch {
            op,
            left: first,
            right: *other,
        }),
        None => Ok(first),
    }
}

/// Logistic function, evaluated without overflow for large `|x|`.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// Softmax of `logits - max(logits)`.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&z| libm::exp(z - max)).collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= total);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set_with(values: &[(&str, Matrix)]) -> (ParamSet, Vec<ParamId>) {
        let mut set = ParamSet::new();
        let ids = values
            .iter()
            .map(|(n, m)| set.insert(*n, m.clone()).unwrap())
            .collect();
        (set, ids)
    }

    #[test]
    fn matvec_identity_and_hand_values() {
        let params = ParamSet::new();
        let mut tape = Tape::new(&params);
        let eye = tape.constant(Matrix::identity(2));
        let v = tape.vector(&[3.0, 4.0]).unwrap();
        let y = tape.matvec(eye, v).unwrap();
        assert_eq!(tape.value(y), &[3.0, 4.0]);

        let m = tape.constant(Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let ones = tape.vector(&[1.0, 1.0]).unwrap();
        let y = tape.matvec(m, ones).unwrap();
        assert_eq!(tape.value(y), &[3.0, 7.0]);
    }

    #[test]
    fn sigmoid_of_zero_is_half() {
        let params = ParamSet::new();
        let mut tape = Tape::new(&params);
        let z = tape.zeros(2);
        let s = tape.sigmoid(z).unwrap();
        assert_eq!(tape.value(s), &[0.5, 0.5]);
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let params = ParamSet::new();
        let mut tape = Tape::new(&params);
        let a = tape.zeros(2);
        let b = tape.zeros(3);
        let err = tape.add(a, b).unwrap_err();
        let msg = alloc::format!("{err}");
        assert!(msg.contains("2x1") && msg.contains("3x1"), "{msg}");
    }

    #[test]
    fn non_finite_result_rejected() {
        let params = ParamSet::new();
        let mut tape = Tape::new(&params);
        let z = tape.zeros(1);
        assert!(matches!(tape.ln(z), Err(NumericError::NonFinite { op: "ln" })));
    }

    #[test]
    fn sum_of_param_has_unit_gradient() {
        let (params, ids) = set_with(&[("p", Matrix::column(vec![1.0, -2.0, 0.5]).unwrap())]);
        let mut tape = Tape::new(&params);
        let p = tape.param(ids[0]);
        let parts: Vec<_> = (0..3).map(|i| tape.select(p, i).unwrap()).collect();
        let s = tape.sum(&parts).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(ids[0]).unwrap(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn product_rule_symmetry() {
        let (params, ids) = set_with(&[
            ("x", Matrix::column(vec![3.0]).unwrap()),
            ("y", Matrix::column(vec![-5.0]).unwrap()),
        ]);
        let mut tape = Tape::new(&params);
        let (x, y) = (tape.param(ids[0]), tape.param(ids[1]));
        let xy = tape.mul(x, y).unwrap();
        let g = tape.backward(xy).unwrap();
        assert_eq!(g.coordinate(ids[0], 0), -5.0);
        assert_eq!(g.coordinate(ids[1], 0), 3.0);
    }

    #[test]
    fn repeated_use_accumulates() {
        let (params, ids) = set_with(&[("p", Matrix::column(vec![0.7]).unwrap())]);
        let mut tape = Tape::new(&params);
        let p = tape.param(ids[0]);
        let p2 = tape.param(ids[0]);
        assert_eq!(p, p2);
        let twice = tape.add(p, p2).unwrap();
        let g = tape.backward(twice).unwrap();
        assert_eq!(g.coordinate(ids[0], 0), 2.0);
    }

    #[test]
    fn backward_requires_scalar_seed() {
        let (params, ids) = set_with(&[("p", Matrix::column(vec![1.0, 2.0]).unwrap())]);
        let mut tape = Tape::new(&params);
        let p = tape.param(ids[0]);
        assert!(matches!(tape.backward(p), Err(NumericError::NotScalar { .. })));
    }

    #[test]
    fn softmax_is_shift_invariant() {
        let a = softmax(&[0.1, 2.0, -1.0]);
        let b = softmax(&[1000.1, 1002.0, 999.0]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
