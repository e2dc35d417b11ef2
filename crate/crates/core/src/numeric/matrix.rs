use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use super::NumericError;

/// Row/column extent of a dense value. Vectors are `n × 1`, scalars `1 × 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Shape {
    pub rows: usize,
    pub cols: usize,
}

impl Shape {
    pub const SCALAR: Shape = Shape { rows: 1, cols: 1 };

    pub const fn new(rows: usize, cols: usize) -> Self {
        Self { rows, cols }
    }

    pub const fn vector(len: usize) -> Self {
        Self { rows: len, cols: 1 }
    }

    pub const fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub const fn is_vector(&self) -> bool {
        self.cols == 1
    }

    pub const fn is_scalar(&self) -> bool {
        self.rows == 1 && self.cols == 1
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

/// Dense row-major `f64` matrix. Vectors are single-column matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    shape: Shape,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            shape: Shape::new(rows, cols),
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NumericError> {
        if data.len() != rows * cols {
            return Err(NumericError::DataLength {
                shape: Shape::new(rows, cols),
                len: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(NumericError::NonFiniteData { index });
        }
        Ok(Self {
            shape: Shape::new(rows, cols),
            data,
        })
    }

    pub fn column(data: Vec<f64>) -> Result<Self, NumericError> {
        let n = data.len();
        Self::from_vec(n, 1, data)
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn rows(&self) -> usize {
        self.shape.rows
    }

    pub fn cols(&self) -> usize {
        self.shape.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.shape.cols + col]
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|v| *v = value);
    }
}

// Dense kernels shared by the tape's forward and reverse passes. Slices are
// row-major; callers check shapes.

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // Four partial sums let the compiler vectorise; the order is fixed so
    // results stay bitwise reproducible.
    let mut acc = [0.0f64; 4];
    let (a4, b4) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = a4.remainder().iter().zip(b4.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in a4.zip(b4) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    let n = y.len().min(x.len());
    let (x, y) = (&x[..n], &mut y[..n]);
    for i in 0..n {
        y[i] += alpha * x[i];
    }
}

pub(crate) fn matvec(m: &[f64], shape: Shape, v: &[f64], out: &mut [f64]) {
    let cols = shape.cols;
    let v = &v[..cols];
    let mut blocks = out[..shape.rows].chunks_exact_mut(4);
    let mut r = 0;
    // Four rows at a time share each load of `v`; every row keeps the
    // same accumulation order as `dot`.
    for o in &mut blocks {
        let rows = &m[r * cols..(r + 4) * cols];
        let (r0, rest) = rows.split_at(cols);
        let (r1, rest) = rest.split_at(cols);
        let (r2, r3) = rest.split_at(cols);
        let mut acc = [[0.0f64; 4]; 4];
        let main = cols - cols % 4;
        let mut j = 0;
        while j < main {
            for k in 0..4 {
                let x = v[j + k];
                acc[0][k] += r0[j + k] * x;
                acc[1][k] += r1[j + k] * x;
                acc[2][k] += r2[j + k] * x;
                acc[3][k] += r3[j + k] * x;
            }
            j += 4;
        }
        for (q, row) in [r0, r1, r2, r3].into_iter().enumerate() {
            let tail: f64 = row[main..].iter().zip(&v[main..]).map(|(a, b)| a * b).sum();
            o[q] = (acc[q][0] + acc[q][1]) + (acc[q][2] + acc[q][3]) + tail;
        }
        r += 4;
    }
    for o in blocks.into_remainder() {
        *o = dot(&m[r * cols..(r + 1) * cols], v);
        r += 1;
    }
}
