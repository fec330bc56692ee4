//! Reverse-mode differentiation over a small set of primitives: matvec,
//! add, elementwise mul/exp/elu/tanh/clamp, layer norm, concat/slice,
//! squared-error and KL scalars. Enough for the skill-model loss while
//! keeping the finite-difference checker meaningful.

use crate::error::{JumpyError, Result};
use crate::nn::matrix::{Grads, ParamId, ParamSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Const,
    Param(ParamId),
    /// w is a (rows x cols) matrix-valued node, x a cols-vector.
    MatVec { w: Var, x: Var },
    Add { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Exp { x: Var },
    Elu { x: Var },
    Tanh { x: Var },
    Clamp { x: Var, lo: f64, hi: f64 },
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        inv_std: f64,
        xhat: Vec<f64>,
    },
    Concat { parts: Vec<Var> },
    Slice { x: Var, start: usize },
    Scale { x: Var, c: f64 },
    /// Scalar: sum_i (x_i - target_i)^2
    SumSquaredDiff { x: Var, target: Vec<f64> },
    /// Scalar: sum_i 0.5 (mu_i^2 + sigma_i^2 - 1 - 2 log sigma_i)
    KlToStdNormal { mean: Var, log_std: Var },
    SumScalars { parts: Vec<Var> },
}

struct Node {
    value: Vec<f64>,
    rows: usize,
    cols: usize,
    op: Op,
}

/// Records primitive operations with cached activations; replaying it
/// backward yields one shape-matched gradient per parameter array.
pub struct Tape<'p> {
    params: &'p ParamSet,
    nodes: Vec<Node>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamSet) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
        }
    }

    fn push(&mut self, value: Vec<f64>, rows: usize, cols: usize, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            rows,
            cols,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn dim(&self, v: Var) -> usize {
        self.nodes[v.0].value.len()
    }

    pub fn constant(&mut self, value: Vec<f64>) -> Var {
        let rows = value.len();
        self.push(value, rows, 1, Op::Const)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        let m = self.params.get(id);
        let (rows, cols) = (m.rows, m.cols);
        self.push(m.data.clone(), rows, cols, Op::Param(id))
    }

    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var> {
        let (rows, cols) = (self.nodes[w.0].rows, self.nodes[w.0].cols);
        if self.dim(x) != cols {
            return Err(JumpyError::shape(format!(
                "matvec: {}x{} applied to vector of length {}",
                rows,
                cols,
                self.dim(x)
            )));
        }
        let mut y = vec![0.0; rows];
        {
            let wv = &self.nodes[w.0].value;
            let xv = &self.nodes[x.0].value;
            for (j, yj) in y.iter_mut().enumerate() {
                let row = &wv[j * cols..(j + 1) * cols];
                let mut s = 0.0;
                for (wi, xi) in row.iter().zip(xv.iter()) {
                    s += wi * xi;
                }
                *yj = s;
            }
        }
        Ok(self.push(y, rows, 1, Op::MatVec { w, x }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.dim(a) != self.dim(b) {
            return Err(JumpyError::shape("add: length mismatch"));
        }
        let v: Vec<f64> = self.nodes[a.0]
            .value
            .iter()
            .zip(self.nodes[b.0].value.iter())
            .map(|(x, y)| x + y)
            .collect();
        let rows = v.len();
        Ok(self.push(v, rows, 1, Op::Add { a, b }))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.dim(a) != self.dim(b) {
            return Err(JumpyError::shape("mul: length mismatch"));
        }
        let v: Vec<f64> = self.nodes[a.0]
            .value
            .iter()
            .zip(self.nodes[b.0].value.iter())
            .map(|(x, y)| x * y)
            .collect();
        let rows = v.len();
        Ok(self.push(v, rows, 1, Op::Mul { a, b }))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let v: Vec<f64> = self.nodes[x.0].value.iter().map(|a| a.exp()).collect();
        let rows = v.len();
        self.push(v, rows, 1, Op::Exp { x })
    }

    pub fn elu(&mut self, x: Var) -> Var {
        let v: Vec<f64> = self.nodes[x.0]
            .value
            .iter()
            .map(|&a| if a > 0.0 { a } else { a.exp() - 1.0 })
            .collect();
        let rows = v.len();
        self.push(v, rows, 1, Op::Elu { x })
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let v: Vec<f64> = self.nodes[x.0].value.iter().map(|a| a.tanh()).collect();
        let rows = v.len();
        self.push(v, rows, 1, Op::Tanh { x })
    }

    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let v: Vec<f64> = self.nodes[x.0]
            .value
            .iter()
            .map(|a| a.clamp(lo, hi))
            .collect();
        let rows = v.len();
        self.push(v, rows, 1, Op::Clamp { x, lo, hi })
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let n = self.dim(x);
        if self.dim(gain) != n || self.dim(bias) != n {
            return Err(JumpyError::shape("layer_norm: length mismatch"));
        }
        let xv = &self.nodes[x.0].value;
        let nf = n as f64;
        let mean = xv.iter().sum::<f64>() / nf;
        let var = xv.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / nf;
        let inv_std = 1.0 / (var + eps).sqrt();
        let xhat: Vec<f64> = xv.iter().map(|v| (v - mean) * inv_std).collect();
        let out: Vec<f64> = xhat
            .iter()
            .zip(
                self.nodes[gain.0]
                    .value
                    .iter()
                    .zip(self.nodes[bias.0].value.iter()),
            )
            .map(|(h, (g, b))| g * h + b)
            .collect();
        Ok(self.push(
            out,
            n,
            1,
            Op::LayerNorm {
                x,
                gain,
                bias,
                inv_std,
                xhat,
            },
        ))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let mut v = Vec::new();
        for p in parts {
            v.extend_from_slice(&self.nodes[p.0].value);
        }
        let rows = v.len();
        self.push(
            v,
            rows,
            1,
            Op::Concat {
                parts: parts.to_vec(),
            },
        )
    }

    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        if start + len > self.dim(x) {
            return Err(JumpyError::shape("slice out of range"));
        }
        let v = self.nodes[x.0].value[start..start + len].to_vec();
        Ok(self.push(v, len, 1, Op::Slice { x, start }))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let v: Vec<f64> = self.nodes[x.0].value.iter().map(|a| a * c).collect();
        let rows = v.len();
        self.push(v, rows, 1, Op::Scale { x, c })
    }

    /// Scalar sum of squared differences against a constant target.
    pub fn sum_squared_diff(&mut self, x: Var, target: Vec<f64>) -> Result<Var> {
        if target.len() != self.dim(x) {
            return Err(JumpyError::shape("sum_squared_diff: length mismatch"));
        }
        let s: f64 = self.nodes[x.0]
            .value
            .iter()
            .zip(target.iter())
            .map(|(a, t)| (a - t) * (a - t))
            .sum();
        Ok(self.push(vec![s], 1, 1, Op::SumSquaredDiff { x, target }))
    }

    /// Scalar KL(N(mean, diag(exp(2 log_std))) || N(0, I)).
    pub fn kl_to_std_normal(&mut self, mean: Var, log_std: Var) -> Result<Var> {
        if self.dim(mean) != self.dim(log_std) {
            return Err(JumpyError::shape("kl: length mismatch"));
        }
        let s: f64 = self.nodes[mean.0]
            .value
            .iter()
            .zip(self.nodes[log_std.0].value.iter())
            .map(|(m, ls)| 0.5 * (m * m + (2.0 * ls).exp() - 1.0 - 2.0 * ls))
            .sum();
        Ok(self.push(vec![s], 1, 1, Op::KlToStdNormal { mean, log_std }))
    }

    pub fn sum_scalars(&mut self, parts: &[Var]) -> Result<Var> {
        let mut s = 0.0;
        for p in parts {
            if self.dim(*p) != 1 {
                return Err(JumpyError::shape("sum_scalars: non-scalar part"));
            }
            s += self.nodes[p.0].value[0];
        }
        Ok(self.push(
            vec![s],
            1,
            1,
            Op::SumScalars {
                parts: parts.to_vec(),
            },
        ))
    }

    /// Reparameterized sample: mean + exp(log_std) * eps for a fixed eps.
    pub fn reparam_sample(&mut self, mean: Var, log_std: Var, eps: &[f64]) -> Result<Var> {
        if eps.len() != self.dim(mean) || eps.len() != self.dim(log_std) {
            return Err(JumpyError::shape("reparam: length mismatch"));
        }
        let std = self.exp(log_std);
        let eps_v = self.constant(eps.to_vec());
        let noise = self.mul(std, eps_v)?;
        self.add(mean, noise)
    }

    /// Accumulate gradients of a scalar loss node into one array per
    /// parameter. Parameters never touched by the tape get zeros.
    pub fn backward(self, loss: Var, seed: f64) -> Result<Grads> {
        if self.dim(loss) != 1 {
            return Err(JumpyError::domain("backward: loss node is not scalar"));
        }
        if !self.nodes[loss.0].value[0].is_finite() {
            return Err(JumpyError::numerical("backward: non-finite loss"));
        }
        let mut adj: Vec<Option<Vec<f64>>> = self.nodes.iter().map(|_| None).collect();
        adj[loss.0] = Some(vec![seed]);
        let mut grads = Grads::zeros_like(self.params);

        for i in (0..self.nodes.len()).rev() {
            let d = match adj[i].take() {
                Some(d) => d,
                None => continue,
            };
            let node = &self.nodes[i];
            match &node.op {
                Op::Const => {}
                Op::Param(id) => {
                    let g = &mut grads.by_param[id.0];
                    for (gi, di) in g.iter_mut().zip(d.iter()) {
                        *gi += di;
                    }
                }
                Op::MatVec { w, x } => {
                    let (rows, cols) = (self.nodes[w.0].rows, self.nodes[w.0].cols);
                    let wv = &self.nodes[w.0].value;
                    let xv = &self.nodes[x.0].value;
                    {
                        let dw = adj[w.0].get_or_insert_with(|| vec![0.0; rows * cols]);
                        for j in 0..rows {
                            let dj = d[j];
                            let row = &mut dw[j * cols..(j + 1) * cols];
                            for (r, xi) in row.iter_mut().zip(xv.iter()) {
                                *r += dj * xi;
                            }
                        }
                    }
                    let dx = adj[x.0].get_or_insert_with(|| vec![0.0; cols]);
                    for j in 0..rows {
                        let dj = d[j];
                        let row = &wv[j * cols..(j + 1) * cols];
                        for (r, wi) in dx.iter_mut().zip(row.iter()) {
                            *r += dj * wi;
                        }
                    }
                }
                Op::Add { a, b } => {
                    for &t in [a, b].iter() {
                        let da = adj[t.0].get_or_insert_with(|| vec![0.0; d.len()]);
                        for (r, di) in da.iter_mut().zip(d.iter()) {
                            *r += di;
                        }
                    }
                }
                Op::Mul { a, b } => {
                    let av = self.nodes[a.0].value.clone();
                    let bv = self.nodes[b.0].value.clone();
                    {
                        let da = adj[a.0].get_or_insert_with(|| vec![0.0; d.len()]);
                        for ((r, di), bi) in da.iter_mut().zip(d.iter()).zip(bv.iter()) {
                            *r += di * bi;
                        }
                    }
                    let db = adj[b.0].get_or_insert_with(|| vec![0.0; d.len()]);
                    for ((r, di), ai) in db.iter_mut().zip(d.iter()).zip(av.iter()) {
                        *r += di * ai;
                    }
                }
                Op::Exp { x } => {
                    let yv = node.value.clone();
                    let dx = adj[x.0].get_or_insert_with(|| vec![0.0; d.len()]);
                    for ((r, di), yi) in dx.iter_mut().zip(d.iter()).zip(yv.iter()) {
                        *r += di * yi;
                    }
                }
                Op::Elu { x } => {
                    let xv = self.nodes[x.0].value.clone();
                    let yv = node.value.clone();
                    let dx = adj[x.0].get_or_insert_with(|| vec![0.0; d.len()]);
                    for i2 in 0..d.len() {
                        // d/dx elu = 1 for x>0, exp(x) = elu(x)+1 otherwise
                        let slope = if xv[i2] > 0.0 { 1.0 } else { yv[i2] + 1.0 };
                        dx[i2] += d[i2] * slope;
                    }
                }
                Op::Tanh { x } => {
                    let yv = node.value.clone();
                    let dx = adj[x.0].get_or_insert_with(|| vec![0.0; d.len()]);
                    for ((r, di), yi) in dx.iter_mut().zip(d.iter()).zip(yv.iter()) {
                        *r += di * (1.0 - yi * yi);
                    }
                }
                Op::Clamp { x, lo, hi } => {
                    let xv = self.nodes[x.0].value.clone();
                    let (lo, hi) = (*lo, *hi);
                    let dx = adj[x.0].get_or_insert_with(|| vec![0.0; d.len()]);
                    for ((r, di), xi) in dx.iter_mut().zip(d.iter()).zip(xv.iter()) {
                        if *xi > lo && *xi < hi {
                            *r += di;
                        }
                    }
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    inv_std,
                    xhat,
                } => {
                    let n = d.len();
                    let nf = n as f64;
                    let gv = self.nodes[gain.0].value.clone();
                    let xhat = xhat.clone();
                    let inv_std = *inv_std;
                    {
                        let dg = adj[gain.0].get_or_insert_with(|| vec![0.0; n]);
                        for ((r, di), hi) in dg.iter_mut().zip(d.iter()).zip(xhat.iter()) {
                            *r += di * hi;
                        }
                    }
                    {
                        let db = adj[bias.0].get_or_insert_with(|| vec![0.0; n]);
                        for (r, di) in db.iter_mut().zip(d.iter()) {
                            *r += di;
                        }
                    }
                    let dxhat: Vec<f64> =
                        d.iter().zip(gv.iter()).map(|(di, gi)| di * gi).collect();
                    let mean_dxhat = dxhat.iter().sum::<f64>() / nf;
                    let mean_dxhat_xhat = dxhat
                        .iter()
                        .zip(xhat.iter())
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
                        / nf;
                    let dx = adj[x.0].get_or_insert_with(|| vec![0.0; n]);
                    for i2 in 0..n {
                        dx[i2] +=
                            inv_std * (dxhat[i2] - mean_dxhat - xhat[i2] * mean_dxhat_xhat);
                    }
                }
                Op::Concat { parts } => {
                    let parts = parts.clone();
                    let mut off = 0;
                    for p in parts {
                        let len = self.nodes[p.0].value.len();
                        let dp = adj[p.0].get_or_insert_with(|| vec![0.0; len]);
                        for (r, di) in dp.iter_mut().zip(d[off..off + len].iter()) {
                            *r += di;
                        }
                        off += len;
                    }
                }
                Op::Slice { x, start } => {
                    let start = *start;
                    let xlen = self.nodes[x.0].value.len();
                    let dx = adj[x.0].get_or_insert_with(|| vec![0.0; xlen]);
                    for (r, di) in dx[start..start + d.len()].iter_mut().zip(d.iter()) {
                        *r += di;
                    }
                }
                Op::Scale { x, c } => {
                    let c = *c;
                    let dx = adj[x.0].get_or_insert_with(|| vec![0.0; d.len()]);
                    for (r, di) in dx.iter_mut().zip(d.iter()) {
                        *r += di * c;
                    }
                }
                Op::SumSquaredDiff { x, target } => {
                    let xv = self.nodes[x.0].value.clone();
                    let target = target.clone();
                    let dx = adj[x.0].get_or_insert_with(|| vec![0.0; xv.len()]);
                    for ((r, xi), ti) in dx.iter_mut().zip(xv.iter()).zip(target.iter()) {
                        *r += d[0] * 2.0 * (xi - ti);
                    }
                }
                Op::KlToStdNormal { mean, log_std } => {
                    let mv = self.nodes[mean.0].value.clone();
                    let lv = self.nodes[log_std.0].value.clone();
                    {
                        let dm = adj[mean.0].get_or_insert_with(|| vec![0.0; mv.len()]);
                        for (r, mi) in dm.iter_mut().zip(mv.iter()) {
                            *r += d[0] * mi;
                        }
                    }
                    let dl = adj[log_std.0].get_or_insert_with(|| vec![0.0; lv.len()]);
                    for (r, li) in dl.iter_mut().zip(lv.iter()) {
                        *r += d[0] * ((2.0 * li).exp() - 1.0);
                    }
                }
                Op::SumScalars { parts } => {
                    let parts = parts.clone();
                    for p in parts {
                        let dp = adj[p.0].get_or_insert_with(|| vec![0.0; 1]);
                        dp[0] += d[0];
                    }
                }
            }
        }
        Ok(grads)
    }
}
