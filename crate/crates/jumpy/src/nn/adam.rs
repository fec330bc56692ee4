use serde::{Deserialize, Serialize};

use crate::error::{JumpyError, Result};
use crate::nn::matrix::{Grads, ParamSet};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            learning_rate: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamState {
    pub hyper: AdamHyper,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &ParamSet, hyper: AdamHyper) -> Self {
        let g = Grads::zeros_like(params);
        AdamState {
            hyper,
            step: 0,
            m: g.by_param.clone(),
            v: g.by_param,
        }
    }
}

/// Bias-corrected Adam update. Parameters whose index is not in `mask`
/// (when provided) are left untouched, moments included.
pub fn adam_step_masked(
    params: &mut ParamSet,
    grads: &Grads,
    state: &mut AdamState,
    mask: Option<&[usize]>,
) -> Result<()> {
    if grads.by_param.len() != params.len() {
        return Err(JumpyError::shape("adam: gradient count mismatch"));
    }
    state.step += 1;
    let t = state.step as f64;
    let h = state.hyper;
    let bc1 = 1.0 - h.beta1.powf(t);
    let bc2 = 1.0 - h.beta2.powf(t);
    for i in 0..params.len() {
        if let Some(mask) = mask {
            if !mask.contains(&i) {
                continue;
            }
        }
        let p = params.get_mut(crate::nn::matrix::ParamId(i));
        let g = &grads.by_param[i];
        if g.len() != p.len() {
            return Err(JumpyError::shape("adam: gradient shape mismatch"));
        }
        let m = &mut state.m[i];
        let v = &mut state.v[i];
        for k in 0..g.len() {
            m[k] = h.beta1 * m[k] + (1.0 - h.beta1) * g[k];
            v[k] = h.beta2 * v[k] + (1.0 - h.beta2) * g[k] * g[k];
            let mhat = m[k] / bc1;
            let vhat = v[k] / bc2;
            p.data[k] -= h.learning_rate * mhat / (vhat.sqrt() + h.eps);
        }
    }
    Ok(())
}

pub fn adam_step(params: &mut ParamSet, grads: &Grads, state: &mut AdamState) -> Result<()> {
    adam_step_masked(params, grads, state, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::matrix::{ParamId, RealMatrix};

    fn one_param(v: f64) -> ParamSet {
        let mut ps = ParamSet::new();
        ps.push("w", RealMatrix::from_vec(1, 1, vec![v]).unwrap());
        ps
    }

    #[test]
    fn zero_gradient_leaves_params_bitwise_unchanged() {
        let mut ps = one_param(0.123456789);
        let before = ps.get(ParamId(0)).data.clone();
        let grads = Grads::zeros_like(&ps);
        let mut st = AdamState::new(&ps, AdamHyper::default());
        adam_step(&mut ps, &grads, &mut st).unwrap();
        assert_eq!(ps.get(ParamId(0)).data, before);
    }

    #[test]
    fn first_step_matches_hand_computed_update() {
        // One Adam step from zero moments with gradient g:
        // m = (1-b1) g, v = (1-b2) g^2, mhat = g, vhat = g^2,
        // update = lr * g / (|g| + eps) ~= lr * sign(g).
        let g = 0.7;
        let mut ps = one_param(1.0);
        let mut grads = Grads::zeros_like(&ps);
        grads.by_param[0][0] = g;
        let h = AdamHyper::default();
        let mut st = AdamState::new(&ps, h);
        adam_step(&mut ps, &grads, &mut st).unwrap();
        let expected = 1.0 - h.learning_rate * g / (g.abs() + h.eps);
        assert!((ps.get(ParamId(0)).data[0] - expected).abs() < 1e-15);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn two_steps_decrease_a_convex_quadratic() {
        // loss(w) = (w - 3)^2, gradient 2(w-3)
        let mut ps = one_param(0.0);
        let loss = |w: f64| (w - 3.0) * (w - 3.0);
        let mut st = AdamState::new(&ps, AdamHyper::default());
        let l0 = loss(ps.get(ParamId(0)).data[0]);
        for _ in 0..2 {
            let w = ps.get(ParamId(0)).data[0];
            let mut grads = Grads::zeros_like(&ps);
            grads.by_param[0][0] = 2.0 * (w - 3.0);
            adam_step(&mut ps, &grads, &mut st).unwrap();
        }
        let l2 = loss(ps.get(ParamId(0)).data[0]);
        assert!(l2 < l0);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut ps = one_param(0.0);
        let grads = Grads {
            by_param: vec![vec![0.0, 0.0]],
        };
        let mut st = AdamState::new(&ps, AdamHyper::default());
        assert!(adam_step(&mut ps, &grads, &mut st).is_err());
    }
}
