use alloc::string::String;
use alloc::vec::Vec;

use super::{Matrix, NumericError, Shape};

/// Index of a parameter inside its [`ParamSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A trainable tensor with its gradient accumulator.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    name: String,
    value: Matrix,
    grad: Matrix,
}

impl Param {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self) -> &Matrix {
        &self.value
    }

    pub fn grad(&self) -> &Matrix {
        &self.grad
    }

    pub fn shape(&self) -> Shape {
        self.value.shape()
    }
}

/// Named, ordered collection of parameters. Names are unique.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    params: Vec<Param>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Matrix) -> Result<ParamId, NumericError> {
        let name = name.into();
        if self.params.iter().any(|p| p.name == name) {
            return Err(NumericError::DuplicateParam(name));
        }
        let shape = value.shape();
        self.params.push(Param {
            name,
            value,
            grad: Matrix::zeros(shape.rows, shape.cols),
        });
        Ok(ParamId(self.params.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar coordinates across all parameters.
    pub fn coordinate_count(&self) -> usize {
        self.params.iter().map(|p| p.value.data().len()).sum()
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn value(&self, id: ParamId) -> &Matrix {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.params[id.0].value
    }

    /// Replaces a value, keeping the shape.
    pub fn set_value(&mut self, id: ParamId, value: Matrix) -> Result<(), NumericError> {
        let param = &mut self.params[id.0];
        if param.value.shape() != value.shape() {
            return Err(NumericError::ShapeMismatch {
                op: "set_value",
                left: param.value.shape(),
                right: value.shape(),
            });
        }
        param.value = value;
        Ok(())
    }

    /// Adds `scale · grads` into the accumulators.
    pub fn accumulate(&mut self, grads: &Gradients, scale: f64) {
        for (param, g) in self.params.iter_mut().zip(&grads.grads) {
            if let Some(g) = g {
                for (acc, v) in param.grad.data_mut().iter_mut().zip(g) {
                    *acc += scale * v;
                }
            }
        }
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    /// Plain SGD: `value -= learning_rate * grad`, then zeroes the gradients.
    ///
    /// Nothing is updated if any gradient coordinate is non-finite.
    pub fn sgd_step(&mut self, learning_rate: f64) -> Result<(), NumericError> {
        if !learning_rate.is_finite() || learning_rate < 0.0 {
            return Err(NumericError::InvalidLearningRate(learning_rate));
        }
        for p in &self.params {
            if let Some(index) = p.grad.data().iter().position(|g| !g.is_finite()) {
                return Err(NumericError::NonFiniteGradient {
                    param: p.name.clone(),
                    index,
                });
            }
        }
        for p in &mut self.params {
            for (v, g) in p.value.data_mut().iter_mut().zip(p.grad.data()) {
                *v -= learning_rate * g;
            }
            p.grad.fill(0.0);
        }
        Ok(())
    }
}

/// Gradients produced by one backward pass, indexed like the [`ParamSet`]
/// the tape read from. Parameters the tape never touched stay `None`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub(crate) fn with_len(n: usize) -> Self {
        Self {
            grads: (0..n).map(|_| None).collect(),
        }
    }

    pub(crate) fn slot(&mut self, id: ParamId, len: usize) -> &mut Vec<f64> {
        self.grads[id.0].get_or_insert_with(|| alloc::vec![0.0; len])
    }

    /// Gradient of one parameter, or `None` when it did not influence the seed.
    pub fn get(&self, id: ParamId) -> Option<&[f64]> {
        self.grads.get(id.0).and_then(|g| g.as_deref())
    }

    /// Gradient coordinate, zero for untouched parameters.
    pub fn coordinate(&self, id: ParamId, index: usize) -> f64 {
        self.get(id).map_or(0.0, |g| g[index])
    }

    /// Element-wise sum, used for the fixed-order mini-batch reduction.
    pub fn add_assign(&mut self, other: &Gradients) {
        if self.grads.len() < other.grads.len() {
            self.grads.resize(other.grads.len(), None);
        }
        for (mine, theirs) in self.grads.iter_mut().zip(&other.grads) {
            if let Some(theirs) = theirs {
                match mine {
                    Some(mine) => mine.iter_mut().zip(theirs).for_each(|(a, b)| *a += b),
                    None => *mine = Some(theirs.clone()),
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn single(value: f64, grad: f64) -> (ParamSet, ParamId) {
        let mut set = ParamSet::new();
        let id = set.insert("p", Matrix::column(vec![value]).unwrap()).unwrap();
        let mut g = Gradients::with_len(1);
        g.slot(id, 1)[0] = grad;
        set.accumulate(&g, 1.0);
        (set, id)
    }

    #[test]
    fn sgd_step_uses_learning_rate() {
        let (mut set, id) = single(1.0, 2.0);
        set.sgd_step(0.0025).unwrap();
        assert!((set.value(id).data()[0] - 0.995).abs() < 1e-15);
        assert_eq!(set.get(id).grad().data()[0], 0.0);
    }

    #[test]
    fn zero_gradient_or_rate_leaves_value() {
        let (mut set, id) = single(1.0, 0.0);
        set.sgd_step(0.0025).unwrap();
        assert_eq!(set.value(id).data()[0], 1.0);
        let (mut set, id) = single(1.0, 3.0);
        set.sgd_step(0.0).unwrap();
        assert_eq!(set.value(id).data()[0], 1.0);
    }

    #[test]
    fn non_finite_gradient_refuses_step() {
        let (mut set, id) = single(1.0, f64::INFINITY);
        let err = set.sgd_step(0.1).unwrap_err();
        assert!(matches!(err, NumericError::NonFiniteGradient { ref param, .. } if param == "p"));
        assert_eq!(set.value(id).data()[0], 1.0);
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut set = ParamSet::new();
        set.insert("w", Matrix::zeros(1, 1)).unwrap();
        assert!(set.insert("w", Matrix::zeros(2, 1)).is_err());
    }
}
