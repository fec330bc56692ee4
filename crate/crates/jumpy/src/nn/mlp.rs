use serde::{Deserialize, Serialize};

use crate::error::{JumpyError, Result};
use crate::nn::matrix::{ParamId, ParamSet, RealMatrix};
use crate::nn::tape::{Tape, Var};

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Linear,
    LayerNorm,
    Elu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl LayerSpec {
    pub fn linear(in_dim: usize, out_dim: usize) -> Self {
        LayerSpec {
            kind: LayerKind::Linear,
            in_dim,
            out_dim,
        }
    }
    pub fn layer_norm(dim: usize) -> Self {
        LayerSpec {
            kind: LayerKind::LayerNorm,
            in_dim: dim,
            out_dim: dim,
        }
    }
    pub fn elu(dim: usize) -> Self {
        LayerSpec {
            kind: LayerKind::Elu,
            in_dim: dim,
            out_dim: dim,
        }
    }

    fn validate(&self) -> Result<()> {
        match self.kind {
            LayerKind::Linear => {
                if self.in_dim == 0 || self.out_dim == 0 {
                    return Err(JumpyError::shape("linear layer dims must be positive"));
                }
            }
            LayerKind::LayerNorm | LayerKind::Elu => {
                if self.in_dim != self.out_dim {
                    return Err(JumpyError::shape(format!(
                        "{:?} requires in_dim == out_dim",
                        self.kind
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Per-layer parameter handles for one layer of an MLP.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum LayerParams {
    Linear { weight: ParamId, bias: ParamId },
    LayerNorm { gain: ParamId, bias: ParamId },
    Elu,
}

/// An MLP as layer specs plus handles into a shared [`ParamSet`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpParams {
    pub specs: Vec<LayerSpec>,
    pub layers: Vec<LayerParams>,
}

impl MlpParams {
    /// Allocate zero-initialized parameters for the given layer chain.
    pub fn alloc(params: &mut ParamSet, prefix: &str, specs: Vec<LayerSpec>) -> Result<Self> {
        let mut layers = Vec::with_capacity(specs.len());
        let mut prev_out: Option<usize> = None;
        for (i, spec) in specs.iter().enumerate() {
            spec.validate()?;
            if let Some(p) = prev_out {
                if p != spec.in_dim {
                    return Err(JumpyError::shape(format!(
                        "layer {} in_dim {} does not chain from previous out_dim {}",
                        i, spec.in_dim, p
                    )));
                }
            }
            prev_out = Some(spec.out_dim);
            layers.push(match spec.kind {
                LayerKind::Linear => LayerParams::Linear {
                    weight: params.push(
                        format!("{prefix}.l{i}.w"),
                        RealMatrix::zeros(spec.out_dim, spec.in_dim),
                    ),
                    bias: params.push(
                        format!("{prefix}.l{i}.b"),
                        RealMatrix::zeros(spec.out_dim, 1),
                    ),
                },
                LayerKind::LayerNorm => LayerParams::LayerNorm {
                    gain: params.push(
                        format!("{prefix}.l{i}.g"),
                        RealMatrix::vector(vec![1.0; spec.in_dim]),
                    ),
                    bias: params.push(
                        format!("{prefix}.l{i}.b"),
                        RealMatrix::zeros(spec.in_dim, 1),
                    ),
                },
                LayerKind::Elu => LayerParams::Elu,
            });
        }
        Ok(MlpParams { specs, layers })
    }

    pub fn in_dim(&self) -> usize {
        self.specs.first().map(|s| s.in_dim).unwrap_or(0)
    }

    pub fn out_dim(&self) -> usize {
        self.specs.last().map(|s| s.out_dim).unwrap_or(0)
    }
}

pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp() - 1.0
    }
}

/// Plain forward pass. Pure function of (params, input).
pub fn mlp_forward(params: &ParamSet, mlp: &MlpParams, input: &[f64]) -> Result<Vec<f64>> {
    if input.len() != mlp.in_dim() {
        return Err(JumpyError::shape(format!(
            "mlp input length {} != in_dim {}",
            input.len(),
            mlp.in_dim()
        )));
    }
    let mut x = input.to_vec();
    for (spec, layer) in mlp.specs.iter().zip(mlp.layers.iter()) {
        x = match layer {
            LayerParams::Linear { weight, bias } => {
                let w = params.get(*weight);
                let b = params.get(*bias);
                let mut y = vec![0.0; spec.out_dim];
                for (j, yj) in y.iter_mut().enumerate() {
                    let row = &w.data[j * spec.in_dim..(j + 1) * spec.in_dim];
                    let mut s = b.data[j];
                    for (wi, xi) in row.iter().zip(x.iter()) {
                        s += wi * xi;
                    }
                    *yj = s;
                }
                y
            }
            LayerParams::LayerNorm { gain, bias } => layer_norm(
                &x,
                &params.get(*gain).data,
                &params.get(*bias).data,
                LAYER_NORM_EPS,
            )?,
            LayerParams::Elu => x.iter().map(|&v| elu(v)).collect(),
        };
    }
    Ok(x)
}

/// Normalize `x` to zero mean and unit variance, then apply gain and bias.
pub fn layer_norm(x: &[f64], gain: &[f64], bias: &[f64], eps: f64) -> Result<Vec<f64>> {
    if gain.len() != x.len() || bias.len() != x.len() {
        return Err(JumpyError::shape("layer_norm length mismatch"));
    }
    if eps <= 0.0 {
        return Err(JumpyError::domain("layer_norm eps must be positive"));
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let inv_std = 1.0 / (var + eps).sqrt();
    Ok(x.iter()
        .zip(gain.iter().zip(bias.iter()))
        .map(|(v, (g, b))| g * (v - mean) * inv_std + b)
        .collect())
}

/// Batched forward over a row-major `(n, in_dim)` buffer. Used on the
/// inference path where planners evaluate many candidates in lockstep.
pub fn mlp_forward_batch(
    params: &ParamSet,
    mlp: &MlpParams,
    input: &[f64],
    n: usize,
) -> Result<Vec<f64>> {
    if input.len() != n * mlp.in_dim() {
        return Err(JumpyError::shape("batched input size mismatch"));
    }
    let mut x = input.to_vec();
    let mut dim = mlp.in_dim();
    for (spec, layer) in mlp.specs.iter().zip(mlp.layers.iter()) {
        match layer {
            LayerParams::Linear { weight, bias } => {
                let w = &params.get(*weight).data;
                let b = &params.get(*bias).data;
                let mut y = vec![0.0; n * spec.out_dim];
                for r in 0..n {
                    let xr = &x[r * dim..(r + 1) * dim];
                    let yr = &mut y[r * spec.out_dim..(r + 1) * spec.out_dim];
                    for (j, yj) in yr.iter_mut().enumerate() {
                        let row = &w[j * dim..(j + 1) * dim];
                        let mut s = b[j];
                        for (wi, xi) in row.iter().zip(xr.iter()) {
                            s += wi * xi;
                        }
                        *yj = s;
                    }
                }
                x = y;
                dim = spec.out_dim;
            }
            LayerParams::LayerNorm { gain, bias } => {
                let g = &params.get(*gain).data;
                let b = &params.get(*bias).data;
                for r in 0..n {
                    let xr = &mut x[r * dim..(r + 1) * dim];
                    let nf = dim as f64;
                    let mean = xr.iter().sum::<f64>() / nf;
                    let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / nf;
                    let inv_std = 1.0 / (var + LAYER_NORM_EPS).sqrt();
                    for (i, v) in xr.iter_mut().enumerate() {
                        *v = g[i] * (*v - mean) * inv_std + b[i];
                    }
                }
            }
            LayerParams::Elu => {
                for v in x.iter_mut() {
                    *v = elu(*v);
                }
            }
        }
    }
    Ok(x)
}

/// Tape-recorded forward pass for training.
pub fn mlp_forward_tape(tape: &mut Tape, mlp: &MlpParams, input: Var) -> Result<Var> {
    let mut x = input;
    if tape.dim(x) != mlp.in_dim() {
        return Err(JumpyError::shape(format!(
            "mlp input length {} != in_dim {}",
            tape.dim(x),
            mlp.in_dim()
        )));
    }
    for layer in mlp.layers.iter() {
        x = match layer {
            LayerParams::Linear { weight, bias } => {
                let w = tape.param(*weight);
                let b = tape.param(*bias);
                let wx = tape.matvec(w, x)?;
                tape.add(wx, b)?
            }
            LayerParams::LayerNorm { gain, bias } => {
                let g = tape.param(*gain);
                let b = tape.param(*bias);
                tape.layer_norm(x, g, b, LAYER_NORM_EPS)?
            }
            LayerParams::Elu => tape.elu(x),
        };
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_linear_layer_passes_input_through() {
        let mut ps = ParamSet::new();
        let mlp = MlpParams::alloc(&mut ps, "t", vec![LayerSpec::linear(2, 2)]).unwrap();
        if let LayerParams::Linear { weight, .. } = &mlp.layers[0] {
            *ps.get_mut(*weight) = RealMatrix::identity(2);
        }
        let out = mlp_forward(&ps, &mlp, &[1.0, 2.0]).unwrap();
        assert_eq!(out, vec![1.0, 2.0]);
    }

    #[test]
    fn elu_closed_form() {
        assert_eq!(elu(0.0), 0.0);
        let v = elu(-1.0);
        assert!((v - ((-1.0f64).exp() - 1.0)).abs() < 1e-15);
        assert!((v + 0.632121).abs() < 1e-6);
    }

    #[test]
    fn elu_smooth_at_zero() {
        let h = 1e-7;
        let left = (elu(0.0) - elu(-h)) / h;
        let right = (elu(h) - elu(0.0)) / h;
        assert!((left - 1.0).abs() < 1e-6);
        assert!((right - 1.0).abs() < 1e-9);
    }

    #[test]
    fn layer_norm_constant_input_goes_to_zero() {
        let out = layer_norm(&[1.0, 1.0, 1.0], &[1.0; 3], &[0.0; 3], 1e-5).unwrap();
        for v in out {
            assert!(v.abs() < 1e-9);
        }
    }

    #[test]
    fn layer_norm_preserves_standardized_input() {
        let out = layer_norm(&[-1.0, 1.0], &[1.0; 2], &[0.0; 2], 1e-12).unwrap();
        assert!((out[0] + 1.0).abs() < 1e-6);
        assert!((out[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn layer_norm_matches_direct_formula() {
        // x=[0,2,4]: mean 2, var 8/3; expected computed from the formula directly.
        let x = [0.0, 2.0, 4.0];
        let eps = 1e-5f64;
        let inv = 1.0 / (8.0 / 3.0 + eps).sqrt();
        let expect = [-2.0 * inv, 0.0, 2.0 * inv];
        let out = layer_norm(&x, &[1.0; 3], &[0.0; 3], eps).unwrap();
        for (o, e) in out.iter().zip(expect.iter()) {
            assert!((o - e).abs() < 1e-12, "{o} vs {e}");
        }
    }

    #[test]
    fn layer_norm_length_mismatch_is_shape_error() {
        assert!(layer_norm(&[1.0, 2.0], &[1.0], &[0.0, 0.0], 1e-5).is_err());
    }

    #[test]
    fn forward_is_pure() {
        let mut ps = ParamSet::new();
        let mlp = MlpParams::alloc(
            &mut ps,
            "t",
            vec![
                LayerSpec::linear(3, 4),
                LayerSpec::elu(4),
                LayerSpec::linear(4, 2),
            ],
        )
        .unwrap();
        // fill with deterministic junk
        for i in 0..ps.len() {
            let m = ps.get_mut(ParamId(i));
            for (k, v) in m.data.iter_mut().enumerate() {
                *v = ((k + i) as f64 * 0.37).sin();
            }
        }
        let a = mlp_forward(&ps, &mlp, &[0.1, -0.5, 2.0]).unwrap();
        let b = mlp_forward(&ps, &mlp, &[0.1, -0.5, 2.0]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn batch_forward_matches_single() {
        let mut ps = ParamSet::new();
        let mlp = MlpParams::alloc(
            &mut ps,
            "t",
            vec![
                LayerSpec::linear(3, 5),
                LayerSpec::layer_norm(5),
                LayerSpec::elu(5),
                LayerSpec::linear(5, 2),
            ],
        )
        .unwrap();
        for i in 0..ps.len() {
            let m = ps.get_mut(ParamId(i));
            for (k, v) in m.data.iter_mut().enumerate() {
                *v += ((k * 7 + i * 3) as f64 * 0.11).cos() * 0.5;
            }
        }
        let rows = [[0.3, -1.0, 0.7], [2.0, 0.0, -0.2]];
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let batch = mlp_forward_batch(&ps, &mlp, &flat, 2).unwrap();
        for (r, row) in rows.iter().enumerate() {
            let single = mlp_forward(&ps, &mlp, row).unwrap();
            for (j, v) in single.iter().enumerate() {
                assert!((batch[r * 2 + j] - v).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn mismatched_chain_rejected() {
        let mut ps = ParamSet::new();
        let r = MlpParams::alloc(
            &mut ps,
            "t",
            vec![LayerSpec::linear(3, 4), LayerSpec::linear(5, 2)],
        );
        assert!(r.is_err());
    }
}
