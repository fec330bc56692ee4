//! Phase-1 learner: a shared state-feature embedder, a snippet encoder
//! producing a diagonal-Gaussian latent skill, a skill-conditioned
//! action decoder (the low-level policy) and a jumpy state decoder that
//! predicts the normalized K-step state delta. Trained jointly with a
//! KL-regularized reconstruction objective; the K=1 configuration trains
//! the non-jumpy baseline through the same code path.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::dataset::{denormalize_delta, normalize_delta, Dataset, DeltaScale, Snippet};
use crate::env::{ACTION_DIM, STATE_DIM};
use crate::error::{JumpyError, Result};
use crate::nn::{
    adam_step, adam_step_masked, grad_check, mlp_forward, mlp_forward_batch, mlp_forward_tape,
    AdamHyper,
    AdamState, DiagGaussian, Grads, LayerParams, LayerSpec, MlpParams, ParamSet, Tape, Var,
};
use crate::par::{map_indexed, ExecMode};
use crate::rng::derived_rng;

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SkillModelConfig {
    pub k: usize,
    pub feature_dim: usize,
    pub latent_dim: usize,
    pub hidden_dim: usize,
    pub beta_a: f64,
    pub beta_s: f64,
    pub beta_kl: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub total_steps: usize,
}

impl Default for SkillModelConfig {
    fn default() -> Self {
        SkillModelConfig {
            k: 10,
            feature_dim: 16,
            latent_dim: 8,
            hidden_dim: 32,
            // Action reconstruction gets extra weight and the KL term a
            // mild one: with a unit KL weight at this scale the posterior
            // collapses onto the prior and planning latents carry no
            // information, while a much smaller weight spreads the
            // aggregate posterior far outside the N(0, 1) proposal that
            // the planner samples from.
            beta_a: 5.0,
            beta_s: 1.0,
            beta_kl: 0.1,
            learning_rate: 3e-4,
            batch_size: 32,
            total_steps: 60_000,
        }
    }
}

impl SkillModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 || self.latent_dim < 1 || self.feature_dim < 1 || self.hidden_dim < 1 {
            return Err(JumpyError::config("model dims must be >= 1"));
        }
        if self.beta_a < 0.0 || self.beta_s < 0.0 || self.beta_kl < 0.0 {
            return Err(JumpyError::config("loss coefficients must be >= 0"));
        }
        if self.batch_size < 1 {
            return Err(JumpyError::config("batch_size must be >= 1"));
        }
        Ok(())
    }
}

/// Loss components, each averaged over the batch. `total` is the
/// beta-weighted sum the optimizer actually descends.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub kl: f64,
    pub action_se: f64,
    pub state_se: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct SkillModel {
    pub params: ParamSet,
    pub embedder: MlpParams,
    pub time_mix: MlpParams,
    pub encoder: MlpParams,
    pub action_dec: MlpParams,
    pub jumpy_dec: MlpParams,
    pub delta_scale: DeltaScale,
    pub config: SkillModelConfig,
}

impl SkillModel {
    /// Allocate and randomly initialize all networks.
    pub fn init(config: SkillModelConfig, delta_scale: DeltaScale, seed: u64) -> Result<Self> {
        config.validate()?;
        delta_scale.validate()?;
        let f = config.feature_dim;
        let h = config.hidden_dim;
        let z = config.latent_dim;
        let mut params = ParamSet::new();
        let embedder = MlpParams::alloc(
            &mut params,
            "embedder",
            vec![
                LayerSpec::linear(STATE_DIM, h),
                LayerSpec::layer_norm(h),
                LayerSpec::elu(h),
                LayerSpec::linear(h, h),
                LayerSpec::elu(h),
                LayerSpec::linear(h, f),
                LayerSpec::elu(f),
            ],
        )?;
        // shared per-timestep linear map over features, the time-wise
        // 1x1 convolution
        let time_mix = MlpParams::alloc(
            &mut params,
            "time_mix",
            vec![LayerSpec::linear(f, f), LayerSpec::elu(f)],
        )?;
        let encoder = MlpParams::alloc(
            &mut params,
            "encoder",
            vec![
                LayerSpec::linear((config.k + 1) * f, h),
                LayerSpec::elu(h),
                LayerSpec::linear(h, 2 * z),
            ],
        )?;
        let action_dec = MlpParams::alloc(
            &mut params,
            "action_dec",
            vec![
                LayerSpec::linear(f + z, h),
                LayerSpec::elu(h),
                LayerSpec::linear(h, h),
                LayerSpec::elu(h),
                LayerSpec::linear(h, ACTION_DIM),
            ],
        )?;
        let jumpy_dec = MlpParams::alloc(
            &mut params,
            "jumpy_dec",
            vec![
                LayerSpec::linear(f + z, h),
                LayerSpec::elu(h),
                LayerSpec::linear(h, h),
                LayerSpec::elu(h),
                LayerSpec::linear(h, STATE_DIM),
            ],
        )?;
        let mut rng = derived_rng(seed, "init", 0);
        for mlp in [&embedder, &time_mix, &encoder, &action_dec, &jumpy_dec] {
            init_mlp(&mut params, mlp, &mut rng);
        }
        Ok(SkillModel {
            params,
            embedder,
            time_mix,
            encoder,
            action_dec,
            jumpy_dec,
            delta_scale,
            config,
        })
    }

    pub fn embed_state(&self, s: &[f64]) -> Result<Vec<f64>> {
        mlp_forward(&self.params, &self.embedder, s)
    }

    /// Posterior over the latent skill for a K+1-state snippet.
    pub fn encode(&self, states: &[[f64; STATE_DIM]]) -> Result<DiagGaussian> {
        if states.len() != self.config.k + 1 {
            return Err(JumpyError::shape(format!(
                "encode: expected {} states, got {}",
                self.config.k + 1,
                states.len()
            )));
        }
        let mut concat = Vec::with_capacity((self.config.k + 1) * self.config.feature_dim);
        for s in states {
            let phi = self.embed_state(s)?;
            let mixed = mlp_forward(&self.params, &self.time_mix, &phi)?;
            concat.extend_from_slice(&mixed);
        }
        let head = mlp_forward(&self.params, &self.encoder, &concat)?;
        let z = self.config.latent_dim;
        let mean = head[..z].to_vec();
        let log_std = head[z..]
            .iter()
            .map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX))
            .collect();
        DiagGaussian::new(mean, log_std)
    }

    /// Mean of the low-level policy's action distribution.
    pub fn decode_action(&self, s: &[f64], z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.config.latent_dim {
            return Err(JumpyError::shape("decode_action: bad latent length"));
        }
        let phi = self.embed_state(s)?;
        let mut input = phi;
        input.extend_from_slice(z);
        mlp_forward(&self.params, &self.action_dec, &input)
    }

    /// Predicted state K steps ahead: s + denormalized tanh-bounded delta.
    pub fn decode_jumpy(&self, s: &[f64], z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.config.latent_dim {
            return Err(JumpyError::shape("decode_jumpy: bad latent length"));
        }
        let phi = self.embed_state(s)?;
        let mut input = phi;
        input.extend_from_slice(z);
        let raw = mlp_forward(&self.params, &self.jumpy_dec, &input)?;
        let norm: Vec<f64> = raw.iter().map(|v| v.tanh()).collect();
        let delta = denormalize_delta(&norm, &self.delta_scale)?;
        Ok(s.iter().zip(delta.iter()).map(|(a, d)| a + d).collect())
    }

    /// Batched jumpy prediction for `n` (state, latent) rows in lockstep.
    pub fn decode_jumpy_batch(&self, states: &[f64], zs: &[f64], n: usize) -> Result<Vec<f64>> {
        let zdim = self.config.latent_dim;
        let f = self.config.feature_dim;
        if states.len() != n * STATE_DIM || zs.len() != n * zdim {
            return Err(JumpyError::shape("decode_jumpy_batch: size mismatch"));
        }
        let phi = mlp_forward_batch(&self.params, &self.embedder, states, n)?;
        let mut input = vec![0.0; n * (f + zdim)];
        for r in 0..n {
            input[r * (f + zdim)..r * (f + zdim) + f].copy_from_slice(&phi[r * f..(r + 1) * f]);
            input[r * (f + zdim) + f..(r + 1) * (f + zdim)]
                .copy_from_slice(&zs[r * zdim..(r + 1) * zdim]);
        }
        let raw = mlp_forward_batch(&self.params, &self.jumpy_dec, &input, n)?;
        let mut out = vec![0.0; n * STATE_DIM];
        for r in 0..n {
            for d in 0..STATE_DIM {
                let delta = raw[r * STATE_DIM + d].tanh() * self.delta_scale.scale[d];
                out[r * STATE_DIM + d] = states[r * STATE_DIM + d] + delta;
            }
        }
        Ok(out)
    }

    /// Tape-recorded loss for one snippet with a fixed reparameterization
    /// draw. Returns (kl, action_se, state_se, total_var, tape).
    fn snippet_loss_tape<'p>(
        &'p self,
        snippet: &Snippet,
        eps: &[f64],
    ) -> Result<(f64, f64, f64, Var, Tape<'p>)> {
        let cfg = &self.config;
        if snippet.k() != cfg.k {
            return Err(JumpyError::shape("loss: snippet K mismatch"));
        }
        let mut tape = Tape::new(&self.params);
        let mut phis = Vec::with_capacity(cfg.k + 1);
        let mut mixed = Vec::with_capacity(cfg.k + 1);
        for s in &snippet.states {
            let x = tape.constant(s.to_vec());
            let phi = mlp_forward_tape(&mut tape, &self.embedder, x)?;
            phis.push(phi);
            mixed.push(mlp_forward_tape(&mut tape, &self.time_mix, phi)?);
        }
        let concat = tape.concat(&mixed);
        let head = mlp_forward_tape(&mut tape, &self.encoder, concat)?;
        let zdim = cfg.latent_dim;
        let mean = tape.slice(head, 0, zdim)?;
        let log_std_raw = tape.slice(head, zdim, zdim)?;
        let log_std = tape.clamp(log_std_raw, LOG_STD_MIN, LOG_STD_MAX);
        let kl = tape.kl_to_std_normal(mean, log_std)?;
        let z = tape.reparam_sample(mean, log_std, eps)?;

        let mut action_terms = Vec::with_capacity(cfg.k);
        for t in 0..cfg.k {
            let input = tape.concat(&[phis[t], z]);
            let pred = mlp_forward_tape(&mut tape, &self.action_dec, input)?;
            action_terms.push(tape.sum_squared_diff(pred, snippet.actions[t].to_vec())?);
        }
        let action_se = tape.sum_scalars(&action_terms)?;

        let input = tape.concat(&[phis[0], z]);
        let raw = mlp_forward_tape(&mut tape, &self.jumpy_dec, input)?;
        let norm_pred = tape.tanh(raw);
        let delta: Vec<f64> = snippet.states[cfg.k]
            .iter()
            .zip(snippet.states[0].iter())
            .map(|(a, b)| a - b)
            .collect();
        let target = normalize_delta(&delta, &self.delta_scale)?;
        let state_se = tape.sum_squared_diff(norm_pred, target)?;

        let kl_w = tape.scale(kl, cfg.beta_kl);
        let act_w = tape.scale(action_se, cfg.beta_a);
        let st_w = tape.scale(state_se, cfg.beta_s);
        let total = tape.sum_scalars(&[kl_w, act_w, st_w])?;
        Ok((
            tape.value(kl)[0],
            tape.value(action_se)[0],
            tape.value(state_se)[0],
            total,
            tape,
        ))
    }

    /// Batch loss with gradients. Reparameterization draws come from the
    /// supplied rng; per-snippet work may fan out but gradients are
    /// summed in batch order.
    pub fn loss(
        &self,
        batch: &[Snippet],
        rng: &mut ChaCha8Rng,
        mode: ExecMode,
    ) -> Result<(LossBreakdown, Grads)> {
        if batch.is_empty() {
            return Err(JumpyError::domain("loss: empty batch"));
        }
        let zdim = self.config.latent_dim;
        let eps: Vec<Vec<f64>> = (0..batch.len())
            .map(|_| {
                (0..zdim)
                    .map(|_| rng.sample(rand_distr::StandardNormal))
                    .collect()
            })
            .collect();
        let inv_b = 1.0 / batch.len() as f64;
        let results = map_indexed(mode, batch.len(), |i| -> Result<(f64, f64, f64, f64, Grads)> {
            let (kl, act, st, total, tape) = self.snippet_loss_tape(&batch[i], &eps[i])?;
            let total_v = tape.value(total)[0];
            if !total_v.is_finite() {
                return Err(JumpyError::numerical(format!(
                    "non-finite loss on batch element {i}"
                )));
            }
            let grads = tape.backward(total, inv_b)?;
            Ok((kl, act, st, total_v, grads))
        });
        let mut sum = Grads::zeros_like(&self.params);
        let mut breakdown = LossBreakdown {
            kl: 0.0,
            action_se: 0.0,
            state_se: 0.0,
            total: 0.0,
        };
        for r in results {
            let (kl, act, st, total, grads) = r?;
            breakdown.kl += kl * inv_b;
            breakdown.action_se += act * inv_b;
            breakdown.state_se += st * inv_b;
            breakdown.total += total * inv_b;
            sum.add_assign(&grads);
        }
        Ok((breakdown, sum))
    }

    pub fn param_ids_of(&self, mlp: &MlpParams) -> Vec<usize> {
        mlp.layers
            .iter()
            .flat_map(|l| match l {
                LayerParams::Linear { weight, bias } => vec![weight.0, bias.0],
                LayerParams::LayerNorm { gain, bias } => vec![gain.0, bias.0],
                LayerParams::Elu => vec![],
            })
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let extra = serde_json::json!({
            "config": self.config,
            "delta_scale": self.delta_scale,
            "embedder": self.embedder,
            "time_mix": self.time_mix,
            "encoder": self.encoder,
            "action_dec": self.action_dec,
            "jumpy_dec": self.jumpy_dec,
        });
        crate::checkpoint::save(path, &self.params, extra)
    }

    pub fn load(path: &Path) -> Result<SkillModel> {
        let (params, extra) = crate::checkpoint::load(path)?;
        let get = |k: &str| -> Result<serde_json::Value> {
            extra
                .get(k)
                .cloned()
                .ok_or_else(|| JumpyError::config(format!("checkpoint missing field {k}")))
        };
        Ok(SkillModel {
            params,
            embedder: serde_json::from_value(get("embedder")?)?,
            time_mix: serde_json::from_value(get("time_mix")?)?,
            encoder: serde_json::from_value(get("encoder")?)?,
            action_dec: serde_json::from_value(get("action_dec")?)?,
            jumpy_dec: serde_json::from_value(get("jumpy_dec")?)?,
            delta_scale: serde_json::from_value(get("delta_scale")?)?,
            config: serde_json::from_value(get("config")?)?,
        })
    }
}

fn init_mlp<R: Rng>(params: &mut ParamSet, mlp: &MlpParams, rng: &mut R) {
    for (spec, layer) in mlp.specs.iter().zip(mlp.layers.iter()) {
        if let LayerParams::Linear { weight, .. } = layer {
            let bound = (6.0 / (spec.in_dim + spec.out_dim) as f64).sqrt();
            let w = params.get_mut(*weight);
            for v in w.data.iter_mut() {
                *v = rng.gen_range(-bound..bound);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub step: usize,
    pub kl: f64,
    pub action_se: f64,
    pub state_se: f64,
    pub total: f64,
}

/// Fraction of training snippets forced to contain a grasp or release.
pub const GRASP_SAMPLE_BIAS: f64 = 0.25;

/// Train a fresh model on the dataset. Fully determined by the seed.
pub fn train(
    dataset: &Dataset,
    config: SkillModelConfig,
    seed: u64,
    mode: ExecMode,
) -> Result<(SkillModel, Vec<TrainLogRow>)> {
    config.validate()?;
    let mut stats_rng = derived_rng(seed, "delta-stats", 0);
    let delta_scale = dataset.compute_delta_stats(config.k, &mut stats_rng)?;
    let mut model = SkillModel::init(config, delta_scale, seed)?;
    let mut sample_rng = derived_rng(seed, "batches", 0);
    let mut eps_rng = derived_rng(seed, "reparam", 0);
    let mut adam = AdamState::new(
        &model.params,
        AdamHyper {
            learning_rate: config.learning_rate,
            ..AdamHyper::default()
        },
    );
    let mut log = Vec::new();
    let grasp_index = dataset.grasp_windows(config.k);
    for step in 0..config.total_steps {
        let batch: Vec<Snippet> = (0..config.batch_size)
            .map(|_| {
                dataset.sample_snippet_biased(
                    &mut sample_rng,
                    config.k,
                    GRASP_SAMPLE_BIAS,
                    &grasp_index,
                )
            })
            .collect::<Result<_>>()?;
        let (breakdown, grads) = model
            .loss(&batch, &mut eps_rng, mode)
            .map_err(|e| JumpyError::numerical(format!("training step {step}: {e}")))?;
        adam_step(&mut model.params, &grads, &mut adam)?;
        if step % 100 == 0 {
            log.push(TrainLogRow {
                step,
                kl: breakdown.kl,
                action_se: breakdown.action_se,
                state_se: breakdown.state_se,
                total: breakdown.total,
            });
        }
    }
    Ok((model, log))
}

/// A (state, executed latent, observed K-step successor) triple recorded
/// while running MPC plans.
#[derive(Debug, Clone)]
pub struct FinetuneTriple {
    pub state: [f64; STATE_DIM],
    pub latent: Vec<f64>,
    pub state_k: [f64; STATE_DIM],
}

/// Update only the jumpy decoder on planner-collected triples; the
/// embedder, encoder and action decoder stay frozen.
pub fn finetune(
    model: &mut SkillModel,
    triples: &[FinetuneTriple],
    steps: usize,
    seed: u64,
    mode: ExecMode,
) -> Result<()> {
    if triples.is_empty() {
        return Err(JumpyError::domain("finetune: empty data"));
    }
    if steps == 0 {
        return Ok(());
    }
    let jumpy_ids = model.param_ids_of(&model.jumpy_dec);
    let mut adam = AdamState::new(
        &model.params,
        AdamHyper {
            learning_rate: model.config.learning_rate,
            ..AdamHyper::default()
        },
    );
    let mut rng = derived_rng(seed, "finetune", 0);
    let batch_size = model.config.batch_size.min(triples.len());
    for _ in 0..steps {
        let idx: Vec<usize> = (0..batch_size)
            .map(|_| rng.gen_range(0..triples.len()))
            .collect();
        let inv_b = 1.0 / batch_size as f64;
        let results = map_indexed(mode, idx.len(), |bi| -> Result<Grads> {
            let tr = &triples[idx[bi]];
            let mut tape = Tape::new(&model.params);
            let x = tape.constant(tr.state.to_vec());
            let phi = mlp_forward_tape(&mut tape, &model.embedder, x)?;
            let z = tape.constant(tr.latent.clone());
            let input = tape.concat(&[phi, z]);
            let raw = mlp_forward_tape(&mut tape, &model.jumpy_dec, input)?;
            let norm_pred = tape.tanh(raw);
            let delta: Vec<f64> = tr
                .state_k
                .iter()
                .zip(tr.state.iter())
                .map(|(a, b)| a - b)
                .collect();
            let target = normalize_delta(&delta, &model.delta_scale)?;
            let loss = tape.sum_squared_diff(norm_pred, target)?;
            tape.backward(loss, inv_b)
        });
        let mut sum = Grads::zeros_like(&model.params);
        for r in results {
            sum.add_assign(&r?);
        }
        adam_step_masked(&mut model.params, &sum, &mut adam, Some(&jumpy_ids))?;
    }
    Ok(())
}

/// Mean squared jumpy prediction error (normalized-delta space aside,
/// this is raw state space) of the posterior-mean latent on snippets.
pub fn jumpy_validation_error(model: &SkillModel, snippets: &[Snippet]) -> Result<f64> {
    let k = model.config.k;
    let mut total = 0.0;
    for s in snippets {
        let q = model.encode(&s.states)?;
        let pred = model.decode_jumpy(&s.states[0], &q.mean)?;
        let err: f64 = pred
            .iter()
            .zip(s.states[k].iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        total += err;
    }
    Ok(total / snippets.len() as f64)
}

/// Finite-difference verification of the training-loss gradient on a
/// small randomly initialized model. Each named term is isolated by
/// zeroing the other loss weights; returns (term, max relative error).
pub fn gradient_check_report(
    seed: u64,
    probes: usize,
    fd_step: f64,
) -> Result<Vec<(&'static str, f64)>> {
    use rand::Rng;

    let base_cfg = SkillModelConfig {
        k: 4,
        feature_dim: 5,
        latent_dim: 3,
        hidden_dim: 6,
        ..SkillModelConfig::default()
    };
    let mut scale = DeltaScale::ones(STATE_DIM);
    for s in scale.scale.iter_mut() {
        *s = 0.3;
    }
    let mut rng = derived_rng(seed, "grad-check", 0);
    let mut snippets = Vec::new();
    for _ in 0..2 {
        let states: Vec<[f64; STATE_DIM]> = (0..base_cfg.k + 1)
            .map(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0)))
            .collect();
        let actions: Vec<[f64; ACTION_DIM]> = (0..base_cfg.k)
            .map(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0)))
            .collect();
        snippets.push(Snippet { states, actions });
    }
    let eps: Vec<Vec<f64>> = (0..snippets.len())
        .map(|_| (0..base_cfg.latent_dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();

    // (name, beta_kl, beta_a, beta_s): zeroed weights isolate one term
    let terms: [(&'static str, f64, f64, f64); 4] = [
        ("kl", 1.0, 0.0, 0.0),
        ("action", 0.0, 1.0, 0.0),
        ("state", 0.0, 0.0, 1.0),
        ("total", 1.0, 1.0, 1.0),
    ];
    let mut report = Vec::with_capacity(terms.len());
    for (name, bk, ba, bs) in terms {
        let cfg = SkillModelConfig {
            beta_kl: bk,
            beta_a: ba,
            beta_s: bs,
            ..base_cfg
        };
        let mut model = SkillModel::init(cfg, scale.clone(), seed)?;
        let template = model.clone();
        let snippets = snippets.clone();
        let eps = eps.clone();
        let inv = 1.0 / snippets.len() as f64;
        let loss_fn = move |ps: &ParamSet| -> Result<(f64, Grads)> {
            let mut m = template.clone();
            m.params = ps.clone();
            let mut total_val = 0.0;
            let mut grads = Grads::zeros_like(ps);
            for (sn, e) in snippets.iter().zip(eps.iter()) {
                let (_, _, _, total, tape) = m.snippet_loss_tape(sn, e)?;
                total_val += tape.value(total)[0] * inv;
                grads.add_assign(&tape.backward(total, inv)?);
            }
            Ok((total_val, grads))
        };
        let mut probe_rng = derived_rng(seed, "grad-check-probe", 0);
        let err = grad_check(&mut model.params, loss_fn, probes, fd_step, &mut probe_rng)?;
        report.push((name, err));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::grad_check;
    use crate::par::ExecMode;
    use crate::rng::rng_from_seed;

    fn tiny_config() -> SkillModelConfig {
        SkillModelConfig {
            k: 3,
            feature_dim: 5,
            latent_dim: 2,
            hidden_dim: 6,
            batch_size: 2,
            total_steps: 5,
            ..SkillModelConfig::default()
        }
    }

    fn tiny_model(seed: u64) -> SkillModel {
        let mut scale = DeltaScale::ones(STATE_DIM);
        scale.scale.iter_mut().enumerate().for_each(|(i, s)| {
            *s = 0.3 + 0.05 * i as f64;
        });
        SkillModel::init(tiny_config(), scale, seed).unwrap()
    }

    fn tiny_snippet(rng: &mut rand_chacha::ChaCha8Rng, k: usize) -> Snippet {
        use rand::Rng;
        Snippet {
            states: (0..=k)
                .map(|_| {
                    let mut s = [0.0; STATE_DIM];
                    for v in s.iter_mut() {
                        *v = rng.gen_range(-1.0..1.0);
                    }
                    s
                })
                .collect(),
            actions: (0..k)
                .map(|_| {
                    let mut a = [0.0; ACTION_DIM];
                    for v in a.iter_mut() {
                        *v = rng.gen_range(-1.0..1.0);
                    }
                    a
                })
                .collect(),
        }
    }

    #[test]
    fn embed_is_pure_and_shared() {
        let m = tiny_model(1);
        let s = [0.1; STATE_DIM];
        let a = m.embed_state(&s).unwrap();
        let b = m.embed_state(&s).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), m.config.feature_dim);
    }

    #[test]
    fn encode_shapes_and_clamp() {
        let m = tiny_model(2);
        let mut rng = rng_from_seed(0);
        let sn = tiny_snippet(&mut rng, m.config.k);
        let q = m.encode(&sn.states).unwrap();
        assert_eq!(q.mean.len(), m.config.latent_dim);
        assert_eq!(q.log_std.len(), m.config.latent_dim);
        for ls in &q.log_std {
            assert!((LOG_STD_MIN..=LOG_STD_MAX).contains(ls));
        }
        assert!(m.encode(&sn.states[..2]).is_err());
    }

    #[test]
    fn encode_is_time_sensitive() {
        let m = tiny_model(3);
        let mut rng = rng_from_seed(1);
        let mut distinct = 0;
        for _ in 0..5 {
            let sn = tiny_snippet(&mut rng, m.config.k);
            let q = m.encode(&sn.states).unwrap();
            let mut rev = sn.states.clone();
            rev.reverse();
            let q2 = m.encode(&rev).unwrap();
            if q.mean != q2.mean {
                distinct += 1;
            }
        }
        assert!(distinct >= 4, "time order pooled away: {distinct}/5 differ");
    }

    #[test]
    fn decode_action_shape_and_purity() {
        let m = tiny_model(4);
        let s = [0.2; STATE_DIM];
        let z = vec![0.3; m.config.latent_dim];
        let a = m.decode_action(&s, &z).unwrap();
        assert_eq!(a.len(), ACTION_DIM);
        assert_eq!(a, m.decode_action(&s, &z).unwrap());
        assert!(m.decode_action(&s, &[0.0]).is_err());
    }

    #[test]
    fn decode_jumpy_zero_output_is_identity_and_bounded() {
        let mut m = tiny_model(5);
        // zero the jumpy decoder's last linear layer -> raw output 0
        let ids = m.param_ids_of(&m.jumpy_dec);
        for id in ids {
            let p = m.params.get_mut(crate::nn::ParamId(id));
            for v in p.data.iter_mut() {
                *v = 0.0;
            }
        }
        let s = [0.4; STATE_DIM];
        let z = vec![0.1; m.config.latent_dim];
        let pred = m.decode_jumpy(&s, &z).unwrap();
        assert_eq!(pred, s.to_vec());

        // fresh model: prediction - s within +-scale
        let m2 = tiny_model(6);
        let pred2 = m2.decode_jumpy(&s, &z).unwrap();
        for (d, (p, sv)) in pred2.iter().zip(s.iter()).enumerate() {
            assert!((p - sv).abs() <= m2.delta_scale.scale[d] + 1e-12);
        }
    }

    #[test]
    fn decode_jumpy_batch_matches_single() {
        let m = tiny_model(7);
        let mut rng = rng_from_seed(2);
        use rand::Rng;
        let n = 4;
        let states: Vec<f64> = (0..n * STATE_DIM).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let zs: Vec<f64> = (0..n * m.config.latent_dim)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let batch = m.decode_jumpy_batch(&states, &zs, n).unwrap();
        for r in 0..n {
            let single = m
                .decode_jumpy(
                    &states[r * STATE_DIM..(r + 1) * STATE_DIM],
                    &zs[r * m.config.latent_dim..(r + 1) * m.config.latent_dim],
                )
                .unwrap();
            for d in 0..STATE_DIM {
                assert!((batch[r * STATE_DIM + d] - single[d]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn full_loss_gradient_matches_finite_differences() {
        let mut m = tiny_model(8);
        let mut rng = rng_from_seed(3);
        let snippets: Vec<Snippet> = (0..2).map(|_| tiny_snippet(&mut rng, m.config.k)).collect();
        let eps: Vec<Vec<f64>> = (0..2)
            .map(|_| {
                use rand::Rng;
                (0..m.config.latent_dim)
                    .map(|_| rng.gen_range(-1.0..1.0))
                    .collect()
            })
            .collect();
        let model_template = m.clone();
        let snippets2 = snippets.clone();
        let eps2 = eps.clone();
        let loss_fn = move |ps: &ParamSet| -> crate::error::Result<(f64, Grads)> {
            let mut model = model_template.clone();
            model.params = ps.clone();
            let mut total_val = 0.0;
            let mut grads = Grads::zeros_like(ps);
            for (sn, e) in snippets2.iter().zip(eps2.iter()) {
                let (_, _, _, total, tape) = model.snippet_loss_tape(sn, e)?;
                total_val += tape.value(total)[0] * 0.5;
                grads.add_assign(&tape.backward(total, 0.5)?);
            }
            Ok((total_val, grads))
        };
        let mut probe_rng = rng_from_seed(4);
        let err = grad_check(&mut m.params, loss_fn, 120, 1e-6, &mut probe_rng).unwrap();
        assert!(err <= 1e-5, "max relative error {err}");
    }

    #[test]
    fn duplicate_snippet_identical_loss_terms() {
        let m = tiny_model(9);
        let mut rng = rng_from_seed(5);
        let sn = tiny_snippet(&mut rng, m.config.k);
        let eps = vec![0.3; m.config.latent_dim];
        let (kl1, a1, s1, _, _) = m.snippet_loss_tape(&sn, &eps).unwrap();
        let (kl2, a2, s2, _, _) = m.snippet_loss_tape(&sn, &eps).unwrap();
        assert_eq!((kl1, a1, s1), (kl2, a2, s2));
    }

    #[test]
    fn loss_total_is_weighted_sum() {
        let mut cfg = tiny_config();
        cfg.beta_a = 0.7;
        cfg.beta_s = 2.0;
        cfg.beta_kl = 0.5;
        let m = SkillModel::init(cfg, DeltaScale::ones(STATE_DIM), 11).unwrap();
        let mut rng = rng_from_seed(6);
        let batch: Vec<Snippet> = (0..3).map(|_| tiny_snippet(&mut rng, cfg.k)).collect();
        let mut eps_rng = rng_from_seed(7);
        let (b, _) = m.loss(&batch, &mut eps_rng, ExecMode::Sequential).unwrap();
        let assembled = cfg.beta_kl * b.kl + cfg.beta_a * b.action_se + cfg.beta_s * b.state_se;
        assert!((b.total - assembled).abs() < 1e-10);
    }

    #[test]
    fn loss_parallel_matches_sequential() {
        let m = tiny_model(10);
        let mut rng = rng_from_seed(8);
        let batch: Vec<Snippet> = (0..4).map(|_| tiny_snippet(&mut rng, m.config.k)).collect();
        let (b1, g1) = m
            .loss(&batch, &mut rng_from_seed(9), ExecMode::Sequential)
            .unwrap();
        let (b2, g2) = m
            .loss(&batch, &mut rng_from_seed(9), ExecMode::Parallel)
            .unwrap();
        assert_eq!(b1.total, b2.total);
        assert_eq!(g1.by_param, g2.by_param);
    }

    #[test]
    fn finetune_freezes_everything_but_jumpy_decoder() {
        let mut rng = rng_from_seed(12);
        let mut m = tiny_model(11);
        let triples: Vec<FinetuneTriple> = (0..8)
            .map(|_| {
                use rand::Rng;
                let mut s = [0.0; STATE_DIM];
                let mut sk = [0.0; STATE_DIM];
                for v in s.iter_mut().chain(sk.iter_mut()) {
                    *v = rng.gen_range(-0.5..0.5);
                }
                FinetuneTriple {
                    state: s,
                    latent: (0..m.config.latent_dim)
                        .map(|_| rng.gen_range(-1.0..1.0))
                        .collect(),
                    state_k: sk,
                }
            })
            .collect();
        let before = crate::checkpoint::params_hash(&m.params);
        finetune(&mut m, &triples, 0, 1, ExecMode::Sequential).unwrap();
        assert_eq!(crate::checkpoint::params_hash(&m.params), before);

        let jumpy_ids = m.param_ids_of(&m.jumpy_dec);
        let frozen_before: Vec<Vec<f64>> = (0..m.params.len())
            .filter(|i| !jumpy_ids.contains(i))
            .map(|i| m.params.get(crate::nn::ParamId(i)).data.clone())
            .collect();
        finetune(&mut m, &triples, 10, 1, ExecMode::Sequential).unwrap();
        let frozen_after: Vec<Vec<f64>> = (0..m.params.len())
            .filter(|i| !jumpy_ids.contains(i))
            .map(|i| m.params.get(crate::nn::ParamId(i)).data.clone())
            .collect();
        assert_eq!(frozen_before, frozen_after);
        assert_ne!(crate::checkpoint::params_hash(&m.params), before);
        assert!(finetune(&mut m, &[], 5, 1, ExecMode::Sequential).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let m = tiny_model(13);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        m.save(&path).unwrap();
        let m2 = SkillModel::load(&path).unwrap();
        assert_eq!(
            crate::checkpoint::params_hash(&m.params),
            crate::checkpoint::params_hash(&m2.params)
        );
        assert_eq!(m.config, m2.config);
        assert_eq!(m.delta_scale, m2.delta_scale);
        let s = [0.3; STATE_DIM];
        let z = vec![0.2; m.config.latent_dim];
        assert_eq!(
            m.decode_jumpy(&s, &z).unwrap(),
            m2.decode_jumpy(&s, &z).unwrap()
        );
    }

    #[test]
    fn kl_only_objective_pulls_posterior_to_prior() {
        // beta_a = beta_s = 0: training should shrink the KL
        let ds = crate::dataset::generate_dataset(3, 77, true, ExecMode::Sequential).unwrap();
        let cfg = SkillModelConfig {
            beta_a: 0.0,
            beta_s: 0.0,
            total_steps: 400,
            batch_size: 8,
            learning_rate: 3e-3,
            ..tiny_config()
        };
        let (model, log) = train(&ds, cfg, 5, ExecMode::Sequential).unwrap();
        let first = log.first().unwrap().kl;
        let last = log.last().unwrap().kl;
        assert!(last < 0.2 * first.max(1e-6), "kl {first} -> {last}");
        let mut rng = rng_from_seed(1);
        let sn = ds.sample_snippet(&mut rng, cfg.k).unwrap();
        let q = model.encode(&sn.states).unwrap();
        assert!(crate::nn::gaussian_kl_to_standard(&q) < 0.05);
    }

    #[test]
    fn train_is_seed_deterministic() {
        let ds = crate::dataset::generate_dataset(2, 5, true, ExecMode::Sequential).unwrap();
        let cfg = SkillModelConfig {
            total_steps: 30,
            ..tiny_config()
        };
        let (m1, _) = train(&ds, cfg, 9, ExecMode::Sequential).unwrap();
        let (m2, _) = train(&ds, cfg, 9, ExecMode::Parallel).unwrap();
        assert_eq!(
            crate::checkpoint::params_hash(&m1.params),
            crate::checkpoint::params_hash(&m2.params)
        );
    }
}
