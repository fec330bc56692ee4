use serde::{Deserialize, Serialize};

use crate::error::{JumpyError, Result};

/// Dense row-major matrix of f64. Vectors are `len x 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl RealMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        RealMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(JumpyError::shape(format!(
                "matrix data length {} != {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(RealMatrix { rows, cols, data })
    }

    pub fn vector(data: Vec<f64>) -> Self {
        let rows = data.len();
        RealMatrix { rows, cols: 1, data }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Handle to one parameter array inside a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamId(pub usize);

/// Named collection of parameter arrays. All learnable state of a model
/// lives in one ParamSet; tapes and optimizers address arrays by ParamId.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    arrays: Vec<RealMatrix>,
    names: Vec<String>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, m: RealMatrix) -> ParamId {
        self.arrays.push(m);
        self.names.push(name.into());
        ParamId(self.arrays.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &RealMatrix {
        &self.arrays[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut RealMatrix {
        &mut self.arrays[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.arrays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrays.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &RealMatrix)> {
        self.arrays
            .iter()
            .zip(self.names.iter())
            .enumerate()
            .map(|(i, (m, n))| (ParamId(i), n.as_str(), m))
    }

    /// Total scalar parameter count.
    pub fn scalar_count(&self) -> usize {
        self.arrays.iter().map(|m| m.len()).sum()
    }
}

/// One gradient array per parameter array, shape-matched.
#[derive(Debug, Clone)]
pub struct Grads {
    pub by_param: Vec<Vec<f64>>,
}

impl Grads {
    pub fn zeros_like(params: &ParamSet) -> Self {
        Grads {
            by_param: params.arrays.iter().map(|m| vec![0.0; m.len()]).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Grads) {
        for (a, b) in self.by_param.iter_mut().zip(other.by_param.iter()) {
            for (x, y) in a.iter_mut().zip(b.iter()) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, c: f64) {
        for a in self.by_param.iter_mut() {
            for x in a.iter_mut() {
                *x *= c;
            }
        }
    }
}
