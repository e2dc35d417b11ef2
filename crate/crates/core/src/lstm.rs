//! The sequential LSTM cell and the Child-Sum Tree-LSTM cell, recorded on
//! a [`Tape`] so gradients flow through them.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::numeric::{Handle, Matrix, NumericError, ParamId, ParamSet, Shape, Tape};

/// Default hidden width.
pub const DEFAULT_HIDDEN: usize = 150;
/// Initial forget-gate bias.
pub const FORGET_BIAS: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Gate {
    Input,
    Activation,
    Output,
    Forget,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::Input, Gate::Activation, Gate::Output, Gate::Forget];

    fn suffix(self) -> char {
        match self {
            Gate::Input => 'i',
            Gate::Activation => 'a',
            Gate::Output => 'o',
            Gate::Forget => 'f',
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GateParams {
    /// `hidden × input_dim`
    pub w: ParamId,
    /// `hidden × hidden`
    pub u: ParamId,
    /// `hidden`
    pub b: ParamId,
}

/// One LSTM kernel: input, activation, output and forget gates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LstmParams {
    pub input_dim: usize,
    pub hidden: usize,
    pub gates: [GateParams; 4],
}

/// Glorot-uniform bound for a `fan_out × fan_in` matrix.
pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    libm::sqrt(6.0 / (fan_in + fan_out) as f64)
}

pub(crate) fn glorot_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    let bound = glorot_bound(cols, rows);
    let mut m = Matrix::zeros(rows, cols);
    for v in m.data_mut() {
        *v = (2.0 * rng.random::<f64>() - 1.0) * bound;
    }
    m
}

impl LstmParams {
    /// Registers a freshly initialised kernel under `prefix`: Glorot-uniform
    /// `W` and `U`, zero biases except the forget gate's.
    pub fn register<R: Rng>(
        params: &mut ParamSet,
        prefix: &str,
        input_dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self, NumericError> {
        let mut gates = Vec::with_capacity(4);
        for gate in Gate::ALL {
            let s = gate.suffix();
            let w = params.insert(format!("{prefix}.W_{s}"), glorot_matrix(hidden, input_dim, rng))?;
            let u = params.insert(format!("{prefix}.U_{s}"), glorot_matrix(hidden, hidden, rng))?;
            let mut bias = Matrix::zeros(hidden, 1);
            if gate == Gate::Forget {
                bias.fill(FORGET_BIAS);
            }
            let b = params.insert(format!("{prefix}.b_{s}"), bias)?;
            gates.push(GateParams { w, u, b });
        }
        Ok(Self {
            input_dim,
            hidden,
            gates: [gates[0], gates[1], gates[2], gates[3]],
        })
    }

    /// Looks up an existing kernel by name, checking shapes.
    pub fn bind(params: &ParamSet, prefix: &str, input_dim: usize, hidden: usize) -> Result<Self, BindError> {
        let mut gates = Vec::with_capacity(4);
        for gate in Gate::ALL {
            let s = gate.suffix();
            gates.push(GateParams {
                w: lookup(params, &format!("{prefix}.W_{s}"), Shape::new(hidden, input_dim))?,
                u: lookup(params, &format!("{prefix}.U_{s}"), Shape::new(hidden, hidden))?,
                b: lookup(params, &format!("{prefix}.b_{s}"), Shape::vector(hidden))?,
            });
        }
        Ok(Self {
            input_dim,
            hidden,
            gates: [gates[0], gates[1], gates[2], gates[3]],
        })
    }

    pub fn gate(&self, gate: Gate) -> GateParams {
        self.gates[gate as usize]
    }

    pub fn zero_state(&self, tape: &mut Tape<'_>) -> CellState {
        let h = tape.zeros(self.hidden);
        let c = tape.zeros(self.hidden);
        CellState { h, c }
    }

    fn check_input(&self, tape: &Tape<'_>, x: Handle) -> Result<(), NumericError> {
        let shape = tape.shape(x);
        if shape != Shape::vector(self.input_dim) {
            return Err(NumericError::ShapeMismatch {
                op: "lstm input",
                left: shape,
                right: Shape::vector(self.input_dim),
            });
        }
        Ok(())
    }

    fn check_state(&self, tape: &Tape<'_>, state: &CellState) -> Result<(), NumericError> {
        for h in [state.h, state.c] {
            let shape = tape.shape(h);
            if shape != Shape::vector(self.hidden) {
                return Err(NumericError::ShapeMismatch {
                    op: "lstm state",
                    left: shape,
                    right: Shape::vector(self.hidden),
                });
            }
        }
        Ok(())
    }

    /// `(W·x + U·h) + b`, or `W·x + b` without a recurrent input.
    fn preactivation(
        &self,
        tape: &mut Tape<'_>,
        gate: Gate,
        x: Handle,
        h: Option<Handle>,
    ) -> Result<Handle, NumericError> {
        let g = self.gate(gate);
        let w = tape.param(g.w);
        let mut z = tape.matvec(w, x)?;
        if let Some(h) = h {
            let u = tape.param(g.u);
            let uh = tape.matvec(u, h)?;
            z = tape.add(z, uh)?;
        }
        let b = tape.param(g.b);
        tape.add(z, b)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum BindError {
    #[error("missing parameter {0:?}")]
    Missing(alloc::string::String),
    #[error("parameter {name:?} has shape {found}, expected {expected}")]
    Shape {
        name: alloc::string::String,
        found: Shape,
        expected: Shape,
    },
}

pub(crate) fn lookup(params: &ParamSet, name: &str, expected: Shape) -> Result<ParamId, BindError> {
    let id = params.find(name).ok_or_else(|| BindError::Missing(name.into()))?;
    let found = params.value(id).shape();
    if found != expected {
        return Err(BindError::Shape {
            name: name.into(),
            found,
            expected,
        });
    }
    Ok(id)
}

/// Hidden state and memory cell of one step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CellState {
    pub h: Handle,
    pub c: Handle,
}

/// One step of the sequential LSTM:
///
/// ```text
/// i = σ(W_i x + U_i h' + b_i)    a = tanh(W_a x + U_a h' + b_a)
/// o = σ(W_o x + U_o h' + b_o)    f = σ(W_f x + U_f h' + b_f)
/// c = i ⊙ a + f ⊙ c'             h = o ⊙ tanh(c)
/// ```
pub fn lstm_step(
    tape: &mut Tape<'_>,
    params: &LstmParams,
    x: Handle,
    prev: CellState,
) -> Result<CellState, NumericError> {
    params.check_input(tape, x)?;
    params.check_state(tape, &prev)?;
    let zi = params.preactivation(tape, Gate::Input, x, Some(prev.h))?;
    let za = params.preactivation(tape, Gate::Activation, x, Some(prev.h))?;
    let zo = params.preactivation(tape, Gate::Output, x, Some(prev.h))?;
    let zf = params.preactivation(tape, Gate::Forget, x, Some(prev.h))?;
    let i = tape.sigmoid(zi)?;
    let a = tape.tanh(za)?;
    let o = tape.sigmoid(zo)?;
    let f = tape.sigmoid(zf)?;
    let ia = tape.mul(i, a)?;
    let fc = tape.mul(f, prev.c)?;
    let c = tape.add(ia, fc)?;
    let tc = tape.tanh(c)?;
    let h = tape.mul(o, tc)?;
    Ok(CellState { h, c })
}

/// One step of the Child-Sum Tree-LSTM. The input, activation and output
/// gates read the sum of the children's hidden states; every child gets
/// its own forget gate over its memory cell:
///
/// ```text
/// h̃ = Σ_k h_k
/// i = σ(W_i x + U_i h̃ + b_i)   a = tanh(…)   o = σ(…)
/// f_k = σ(W_f x + U_f h_k + b_f)
/// c = i ⊙ a + Σ_k f_k ⊙ c_k    h = o ⊙ tanh(c)
/// ```
///
/// Children are summed in the given order. A leaf (no children) skips the
/// recurrent terms, which is bitwise identical to a zero previous state.
pub fn child_sum_step(
    tape: &mut Tape<'_>,
    params: &LstmParams,
    x: Handle,
    children: &[CellState],
) -> Result<CellState, NumericError> {
    params.check_input(tape, x)?;
    for child in children {
        params.check_state(tape, child)?;
    }
    let h_sum = if children.is_empty() {
        None
    } else {
        let hs: Vec<Handle> = children.iter().map(|s| s.h).collect();
        Some(tape.sum(&hs)?)
    };
    let zi = params.preactivation(tape, Gate::Input, x, h_sum)?;
    let za = params.preactivation(tape, Gate::Activation, x, h_sum)?;
    let zo = params.preactivation(tape, Gate::Output, x, h_sum)?;
    let i = tape.sigmoid(zi)?;
    let a = tape.tanh(za)?;
    let o = tape.sigmoid(zo)?;
    let ia = tape.mul(i, a)?;

    let c = if children.is_empty() {
        ia
    } else {
        let forget = params.gate(Gate::Forget);
        let w_f = tape.param(forget.w);
        let u_f = tape.param(forget.u);
        let b_f = tape.param(forget.b);
        let wx = tape.matvec(w_f, x)?;
        let mut carried = Vec::with_capacity(children.len());
        for child in children {
            let uh = tape.matvec(u_f, child.h)?;
            let z = tape.add(wx, uh)?;
            let z = tape.add(z, b_f)?;
            let f = tape.sigmoid(z)?;
            carried.push(tape.mul(f, child.c)?);
        }
        let carried = tape.sum(&carried)?;
        tape.add(ia, carried)?
    };
    let tc = tape.tanh(c)?;
    let h = tape.mul(o, tc)?;
    Ok(CellState { h, c })
}
