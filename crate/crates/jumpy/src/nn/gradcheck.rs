use rand::Rng;

use crate::error::{JumpyError, Result};
use crate::nn::matrix::{Grads, ParamId, ParamSet};

/// Compare analytic gradients to central finite differences at randomly
/// probed coordinates. Returns the max relative error
/// |analytic - fd| / max(|analytic|, |fd|, 1e-8).
pub fn grad_check<F, R>(
    params: &mut ParamSet,
    loss_and_grad: F,
    probe_count: usize,
    fd_step: f64,
    rng: &mut R,
) -> Result<f64>
where
    F: Fn(&ParamSet) -> Result<(f64, Grads)>,
    R: Rng,
{
    if probe_count == 0 {
        return Err(JumpyError::domain("grad_check: probe_count must be >= 1"));
    }
    if fd_step <= 0.0 {
        return Err(JumpyError::domain("grad_check: fd_step must be positive"));
    }
    let total = params.scalar_count();
    if total == 0 {
        return Err(JumpyError::domain("grad_check: no parameters to probe"));
    }
    let (loss0, analytic) = loss_and_grad(params)?;
    if !loss0.is_finite() {
        return Err(JumpyError::numerical("grad_check: non-finite loss"));
    }

    let sizes: Vec<usize> = (0..params.len()).map(|i| params.get(ParamId(i)).len()).collect();
    let mut max_rel = 0.0f64;
    for _ in 0..probe_count {
        let mut flat = rng.gen_range(0..total);
        let mut array = 0;
        while flat >= sizes[array] {
            flat -= sizes[array];
            array += 1;
        }
        let orig = params.get(ParamId(array)).data[flat];
        params.get_mut(ParamId(array)).data[flat] = orig + fd_step;
        let (lp, _) = loss_and_grad(params)?;
        params.get_mut(ParamId(array)).data[flat] = orig - fd_step;
        let (lm, _) = loss_and_grad(params)?;
        params.get_mut(ParamId(array)).data[flat] = orig;
        if !lp.is_finite() || !lm.is_finite() {
            return Err(JumpyError::numerical("grad_check: non-finite probe loss"));
        }
        let fd = (lp - lm) / (2.0 * fd_step);
        let an = analytic.by_param[array][flat];
        let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-8);
        max_rel = max_rel.max(rel);
    }
    Ok(max_rel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::matrix::RealMatrix;
    use crate::nn::tape::Tape;
    use crate::rng::rng_from_seed;

    #[test]
    fn linear_model_checks_to_roundoff() {
        let mut ps = ParamSet::new();
        let w = ps.push("w", RealMatrix::from_vec(1, 3, vec![0.5, -1.0, 2.0]).unwrap());
        let input = vec![0.3, 0.4, -0.2];
        let loss = move |ps: &ParamSet| {
            let mut tape = Tape::new(ps);
            let wv = tape.param(w);
            let x = tape.constant(input.clone());
            let y = tape.matvec(wv, x)?;
            let l = tape.sum_squared_diff(y, vec![0.0])?;
            let v = tape.value(l)[0];
            Ok((v, tape.backward(l, 1.0)?))
        };
        let mut rng = rng_from_seed(5);
        let err = grad_check(&mut ps, loss, 10, 1e-6, &mut rng).unwrap();
        assert!(err <= 1e-8, "error {err}");
    }

    #[test]
    fn zero_probe_count_is_domain_error() {
        let mut ps = ParamSet::new();
        ps.push("w", RealMatrix::from_vec(1, 1, vec![1.0]).unwrap());
        let mut rng = rng_from_seed(5);
        let r = grad_check(
            &mut ps,
            |_| Ok((0.0, Grads { by_param: vec![vec![0.0]] })),
            0,
            1e-6,
            &mut rng,
        );
        assert!(matches!(r, Err(JumpyError::Domain(_))));
    }

    #[test]
    fn empty_param_set_is_domain_error() {
        let mut ps = ParamSet::new();
        let mut rng = rng_from_seed(5);
        let r = grad_check(
            &mut ps,
            |_| Ok((0.0, Grads { by_param: vec![] })),
            1,
            1e-6,
            &mut rng,
        );
        assert!(matches!(r, Err(JumpyError::Domain(_))));
    }
}
