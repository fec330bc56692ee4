use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{JumpyError, Result};

pub const LOG_2PI: f64 = 1.8378770664093453; // ln(2*pi)

/// Diagonal Gaussian parameterized by mean and log standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagGaussian {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
}

impl DiagGaussian {
    pub fn new(mean: Vec<f64>, log_std: Vec<f64>) -> Result<Self> {
        if mean.len() != log_std.len() {
            return Err(JumpyError::shape("gaussian: mean/log_std length mismatch"));
        }
        if !mean.iter().chain(log_std.iter()).all(|v| v.is_finite()) {
            return Err(JumpyError::numerical("gaussian: non-finite parameters"));
        }
        Ok(DiagGaussian { mean, log_std })
    }

    pub fn standard(dim: usize) -> Self {
        DiagGaussian {
            mean: vec![0.0; dim],
            log_std: vec![0.0; dim],
        }
    }

    pub fn isotropic(mean: Vec<f64>, std: f64) -> Self {
        let d = mean.len();
        DiagGaussian {
            mean,
            log_std: vec![std.ln(); d],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// KL(q || N(0, I)) = sum_i 0.5 (mu_i^2 + sigma_i^2 - 1 - 2 log sigma_i).
pub fn gaussian_kl_to_standard(q: &DiagGaussian) -> f64 {
    q.mean
        .iter()
        .zip(q.log_std.iter())
        .map(|(m, ls)| 0.5 * (m * m + (2.0 * ls).exp() - 1.0 - 2.0 * ls))
        .sum()
}

/// Reparameterized draw: mean + exp(log_std) * eps.
pub fn gaussian_sample<R: Rng>(q: &DiagGaussian, rng: &mut R) -> Vec<f64> {
    q.mean
        .iter()
        .zip(q.log_std.iter())
        .map(|(m, ls)| {
            let eps: f64 = rng.sample(rand_distr::StandardNormal);
            m + ls.exp() * eps
        })
        .collect()
}

pub fn gaussian_log_prob(q: &DiagGaussian, x: &[f64]) -> Result<f64> {
    if x.len() != q.dim() {
        return Err(JumpyError::shape("log_prob: length mismatch"));
    }
    Ok(q.mean
        .iter()
        .zip(q.log_std.iter())
        .zip(x.iter())
        .map(|((m, ls), xi)| {
            let z = (xi - m) / ls.exp();
            -0.5 * LOG_2PI - ls - 0.5 * z * z
        })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn kl_of_standard_is_zero() {
        let q = DiagGaussian::standard(4);
        assert!(gaussian_kl_to_standard(&q).abs() < 1e-12);
    }

    #[test]
    fn kl_shifted_mean_closed_form() {
        let q = DiagGaussian::new(vec![1.0], vec![0.0]).unwrap();
        assert!((gaussian_kl_to_standard(&q) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn kl_nonnegative_and_zero_only_at_standard() {
        let mut rng = rng_from_seed(3);
        use rand::Rng;
        for _ in 0..200 {
            let d = rng.gen_range(1..5);
            let mean: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let log_std: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.5..1.0)).collect();
            let q = DiagGaussian::new(mean.clone(), log_std.clone()).unwrap();
            let kl = gaussian_kl_to_standard(&q);
            assert!(kl >= 0.0);
            let is_standard = mean.iter().all(|m| m.abs() < 1e-13)
                && log_std.iter().all(|l| l.abs() < 1e-13);
            if !is_standard {
                assert!(kl > 0.0);
            }
        }
    }

    #[test]
    fn log_prob_at_mean_unit_std() {
        let d = 5;
        let q = DiagGaussian::standard(d);
        let lp = gaussian_log_prob(&q, &vec![0.0; d]).unwrap();
        assert!((lp + d as f64 / 2.0 * LOG_2PI).abs() < 1e-12);
    }

    #[test]
    fn degenerate_std_sample_equals_mean() {
        let q = DiagGaussian::new(vec![0.7, -0.2], vec![-745.0, -745.0]).unwrap();
        let mut rng = rng_from_seed(1);
        let s = gaussian_sample(&q, &mut rng);
        assert_eq!(s, q.mean);
    }

    #[test]
    fn empirical_mean_of_samples_matches() {
        let q = DiagGaussian::new(vec![1.5, -0.5], vec![0.0, 0.3]).unwrap();
        let n = 100_000;
        let mut rng = rng_from_seed(9);
        let mut sum = vec![0.0; 2];
        for _ in 0..n {
            let s = gaussian_sample(&q, &mut rng);
            for (a, b) in sum.iter_mut().zip(s.iter()) {
                *a += b;
            }
        }
        for i in 0..2 {
            let m = sum[i] / n as f64;
            let sigma = q.log_std[i].exp();
            let bound = 4.0 * sigma / (n as f64).sqrt();
            assert!(
                (m - q.mean[i]).abs() < bound,
                "dim {i}: {m} vs {} (bound {bound})",
                q.mean[i]
            );
        }
    }
}
