//! CEM-MPC in latent-skill space over the jumpy model: sample latent
//! sequences from a proposal, roll them out by chaining the jumpy
//! decoder, score with discounted task reward, refit the proposal to the
//! elite fraction. A single iteration with the standard-normal proposal
//! is exactly random shooting.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{settle, EnvState, Task, STATE_DIM};
use crate::error::{JumpyError, Result};
use crate::nn::{gaussian_sample, DiagGaussian};
use crate::par::{map_indexed, ExecMode};
use crate::skill::SkillModel;

pub const PROPOSAL_STD_FLOOR: f64 = 0.05;
/// Minimum predicted held activation for a *new* imagined grasp. Whether
/// closing the gripper next to an object ends with it held is skill
/// knowledge the model must supply from data — the offline policies only
/// ever grasp the red object, and that gap is meant to show up in
/// planning. Carry persistence, by contrast, is pure physics and never
/// consults the model.
pub const ATTACH_ACTIVATION: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerConfig {
    /// CEM iterations; 1 reduces to random shooting.
    pub iterations: usize,
    /// Samples per iteration.
    pub samples: usize,
    /// Planning horizon in jumpy steps.
    pub horizon: usize,
    /// Elite fraction in (0, 1].
    pub elite_frac: f64,
    /// Discount per K-step interval.
    pub gamma_k: f64,
    /// Low-level actions executed per planned latent before replanning.
    pub hold_steps: usize,
    /// Standard deviation of the initial latent proposal.
    pub init_std: f64,
    /// Center the proposal on the previous plan when replanning.
    pub warm_start: bool,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            iterations: 1,
            samples: 1000,
            horizon: 3,
            elite_frac: 0.1,
            gamma_k: 1.0,
            hold_steps: 2,
            init_std: 1.0,
            warm_start: false,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 || self.samples < 1 || self.horizon < 1 || self.hold_steps < 1 {
            return Err(JumpyError::config("planner counts must be >= 1"));
        }
        if !(self.elite_frac > 0.0 && self.elite_frac <= 1.0) {
            return Err(JumpyError::config("elite_frac must be in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.gamma_k) {
            return Err(JumpyError::config("gamma_k must be in [0, 1]"));
        }
        if !(self.init_std > 0.0) {
            return Err(JumpyError::config("init_std must be positive"));
        }
        Ok(())
    }

    pub fn elite_count(&self) -> usize {
        ((self.elite_frac * self.samples as f64).ceil() as usize).max(1)
    }
}

/// Time-indexed proposal: one diagonal Gaussian per horizon position.
#[derive(Debug, Clone)]
pub struct Proposal {
    pub per_step: Vec<DiagGaussian>,
}

impl Proposal {
    pub fn initial(horizon: usize, latent_dim: usize, init_std: f64) -> Self {
        Proposal {
            per_step: (0..horizon)
                .map(|_| DiagGaussian::isotropic(vec![0.0; latent_dim], init_std))
                .collect(),
        }
    }

    /// Warm start: center the proposal on a previous plan (standard MPC
    /// practice), keeping the full initial standard deviation.
    pub fn warm(previous: &[Vec<f64>], horizon: usize, latent_dim: usize, init_std: f64) -> Self {
        let per_step = (0..horizon)
            .map(|h| {
                let mean = previous
                    .get(h)
                    .cloned()
                    .unwrap_or_else(|| vec![0.0; latent_dim]);
                DiagGaussian::isotropic(mean, init_std)
            })
            .collect();
        Proposal { per_step }
    }
}

#[derive(Debug, Clone)]
pub struct PlanResult {
    /// N latent sequences, each horizon x latent_dim.
    pub plans: Vec<Vec<Vec<f64>>>,
    /// N imagined state sequences, each horizon+1 states.
    pub trajectories: Vec<Vec<[f64; STATE_DIM]>>,
    pub scores: Vec<f64>,
    pub best_index: usize,
    pub chosen_z: Vec<f64>,
    /// Full latent sequence of the best sample, for warm starts.
    pub best_plan: Vec<Vec<f64>>,
}

/// Discounted score over a rollout of H+1 states, including the
/// current-state term at h = 0.
pub fn score(trajectory: &[[f64; STATE_DIM]], task: Task, gamma_k: f64) -> Result<f64> {
    let mut total = 0.0;
    let mut weight = 1.0;
    for s in trajectory {
        let state = EnvState::from_vec(s)?;
        total += weight * task.reward(&state);
        weight *= gamma_k;
    }
    Ok(total)
}

/// Project a raw jumpy prediction onto the environment's kinematic
/// manifold, mirroring the real grasp rules: an already-held object
/// rides with the gripper until the predicted aperture opens past the
/// release threshold; a new grasp requires a closed aperture with the
/// gripper within the real grasp radius of an object; non-held objects
/// cannot move on their own, so they keep their previous position (or
/// settle after a release). Without this projection score maximization
/// exploits physically impossible fantasies (objects drifting toward
/// goals unheld, or carries that the controller can never realize) and
/// planning on manipulation tasks collapses.
pub fn project_imagined(
    prev: &[f64; STATE_DIM],
    pred: &[f64; STATE_DIM],
) -> Result<[f64; STATE_DIM]> {
    let mut out = *pred;
    out[0] = pred[0].clamp(-1.0, 1.0);
    out[1] = pred[1].clamp(0.0, 1.0);
    out[2] = pred[2].clamp(0.0, 1.0);
    // held / x / y state indices for red, green, blue
    let held_idx = [3usize, 6, 9];
    let pos_idx = [(4usize, 5usize), (7, 8), (10, 11)];
    // Default: unheld objects cannot move on their own.
    for i in 0..3 {
        out[held_idx[i]] = 0.0;
        out[pos_idx[i].0] = prev[pos_idx[i].0];
        out[pos_idx[i].1] = prev[pos_idx[i].1];
    }
    let prev_held = (0..3).find(|&i| prev[held_idx[i]] > 0.5);
    if let Some(i) = prev_held {
        // Mirror the real carry rule — a held object rides with the
        // gripper until the aperture opens — without consulting the
        // network's re-predicted object *position* (its jitter would
        // spuriously break carries). The predicted held *flag* still
        // gates persistence: the model only believes in carries it has
        // seen, which is where the data's red-only grasp gap lives.
        if out[2] > crate::env::RELEASE_APERTURE || pred[held_idx[i]] <= ATTACH_ACTIVATION {
            // Released during the jump: falls from the predicted drop
            // point, then settles (possibly onto another object).
            out[pos_idx[i].0] = pred[pos_idx[i].0].clamp(-1.0, 1.0);
            out[pos_idx[i].1] = pred[pos_idx[i].1].clamp(0.0, 1.0);
        } else {
            out[held_idx[i]] = 1.0;
            out[pos_idx[i].0] = out[0];
            out[pos_idx[i].1] = out[1];
        }
    } else if out[2] < crate::env::GRASP_APERTURE {
        // A new imagined grasp needs a closed aperture with the gripper
        // ending within the real grasp radius of a (static) object (any
        // looser rule lets plans fantasize grasps the executed controller
        // can never realize), and the model itself must predict the
        // object held — grasp initiation is skill knowledge, not physics.
        let mut best: Option<(usize, f64)> = None;
        for i in 0..3 {
            let d = ((prev[pos_idx[i].0] - out[0]).powi(2)
                + (prev[pos_idx[i].1] - out[1]).powi(2))
            .sqrt();
            if d <= crate::env::GRASP_RADIUS
                && pred[held_idx[i]] > ATTACH_ACTIVATION
                && best.map_or(true, |(_, bd)| d < bd)
            {
                best = Some((i, d));
            }
        }
        if let Some((i, _)) = best {
            out[held_idx[i]] = 1.0;
            out[pos_idx[i].0] = out[0];
            out[pos_idx[i].1] = out[1];
        }
    }
    let mut state = EnvState::from_vec(&out)?;
    settle(&mut state);
    Ok(state.to_vec())
}

/// Deterministic chaining of the mean jumpy prediction.
pub fn rollout_imaginary(
    state: &[f64; STATE_DIM],
    latents: &[Vec<f64>],
    model: &SkillModel,
) -> Result<Vec<[f64; STATE_DIM]>> {
    let mut out = Vec::with_capacity(latents.len() + 1);
    out.push(*state);
    let mut cur = *state;
    for z in latents {
        let pred = model.decode_jumpy(&cur.to_vec(), z)?;
        let mut arr = [0.0; STATE_DIM];
        arr.copy_from_slice(&pred);
        cur = project_imagined(&cur, &arr)?;
        out.push(cur);
    }
    Ok(out)
}

/// Refit the proposal to the elites: per horizon position, sample mean
/// and population standard deviation floored at `PROPOSAL_STD_FLOOR`.
pub fn update_proposal(elite_plans: &[&Vec<Vec<f64>>]) -> Result<Proposal> {
    if elite_plans.is_empty() {
        return Err(JumpyError::domain("update_proposal: no elites"));
    }
    let horizon = elite_plans[0].len();
    let latent_dim = elite_plans[0][0].len();
    let n = elite_plans.len() as f64;
    let mut per_step = Vec::with_capacity(horizon);
    for h in 0..horizon {
        let mut mean = vec![0.0; latent_dim];
        for plan in elite_plans {
            for (m, v) in mean.iter_mut().zip(plan[h].iter()) {
                *m += v / n;
            }
        }
        let mut log_std = vec![0.0; latent_dim];
        for (d, ls) in log_std.iter_mut().enumerate() {
            let var: f64 = elite_plans
                .iter()
                .map(|p| (p[h][d] - mean[d]) * (p[h][d] - mean[d]))
                .sum::<f64>()
                / n;
            *ls = var.sqrt().max(PROPOSAL_STD_FLOOR).ln();
        }
        per_step.push(DiagGaussian::new(mean, log_std)?);
    }
    Ok(Proposal { per_step })
}

const ROLLOUT_CHUNK: usize = 64;

/// One full planning call: I iterations of sample / rollout / score /
/// refit; returns the sampled population of the final iteration.
pub fn plan(
    state: &[f64; STATE_DIM],
    model: &SkillModel,
    task: Task,
    config: &PlannerConfig,
    rng: &mut ChaCha8Rng,
    warm: Option<&[Vec<f64>]>,
    mode: ExecMode,
) -> Result<PlanResult> {
    config.validate()?;
    let n = config.samples;
    let horizon = config.horizon;
    let zdim = model.config.latent_dim;
    let mut proposal = match warm {
        Some(prev) => Proposal::warm(prev, horizon, zdim, config.init_std),
        None => Proposal::initial(horizon, zdim, config.init_std),
    };

    let mut last: Option<PlanResult> = None;
    for _iter in 0..config.iterations {
        // Latent draws happen in a fixed order from the caller's stream.
        let mut plans: Vec<Vec<Vec<f64>>> = Vec::with_capacity(n);
        for _ in 0..n {
            let mut seq = Vec::with_capacity(horizon);
            for h in 0..horizon {
                seq.push(gaussian_sample(&proposal.per_step[h], rng));
            }
            plans.push(seq);
        }

        // Batched rollout in lockstep over the horizon; parallelism only
        // chunks rows, so results are schedule-independent.
        let mut trajectories: Vec<Vec<[f64; STATE_DIM]>> =
            vec![Vec::with_capacity(horizon + 1); n];
        for t in trajectories.iter_mut() {
            t.push(*state);
        }
        let mut current: Vec<f64> = Vec::with_capacity(n * STATE_DIM);
        for _ in 0..n {
            current.extend_from_slice(state);
        }
        for h in 0..horizon {
            let chunks = n.div_ceil(ROLLOUT_CHUNK);
            let results = map_indexed(mode, chunks, |c| -> Result<Vec<f64>> {
                let lo = c * ROLLOUT_CHUNK;
                let hi = ((c + 1) * ROLLOUT_CHUNK).min(n);
                let rows = hi - lo;
                let states = &current[lo * STATE_DIM..hi * STATE_DIM];
                let mut zs = Vec::with_capacity(rows * zdim);
                for plan in plans.iter().take(hi).skip(lo) {
                    zs.extend_from_slice(&plan[h]);
                }
                model.decode_jumpy_batch(states, &zs, rows)
            });
            let mut next = Vec::with_capacity(n * STATE_DIM);
            for r in results {
                next.extend_from_slice(&r?);
            }
            let mut projected = Vec::with_capacity(n * STATE_DIM);
            for (i, t) in trajectories.iter_mut().enumerate() {
                let row = &next[i * STATE_DIM..(i + 1) * STATE_DIM];
                if row.iter().any(|v| !v.is_finite()) {
                    return Err(JumpyError::numerical(format!(
                        "non-finite imagined state in sample {i} at horizon step {h}"
                    )));
                }
                let mut arr = [0.0; STATE_DIM];
                arr.copy_from_slice(row);
                let prev = t.last().expect("trajectory starts non-empty");
                let proj = project_imagined(prev, &arr)?;
                t.push(proj);
                projected.extend_from_slice(&proj);
            }
            current = projected;
        }

        let scores: Vec<f64> = trajectories
            .iter()
            .map(|t| score(t, task, config.gamma_k))
            .collect::<Result<_>>()?;
        let best_index = argmax(&scores);
        let chosen_z = plans[best_index][0].clone();
        let best_plan = plans[best_index].clone();

        // Refit for the next iteration (skipped after the last one).
        if _iter + 1 < config.iterations {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
            let elites: Vec<&Vec<Vec<f64>>> = order
                .iter()
                .take(config.elite_count())
                .map(|&i| &plans[i])
                .collect();
            proposal = update_proposal(&elites)?;
        }

        last = Some(PlanResult {
            plans,
            trajectories,
            scores,
            best_index,
            chosen_z,
            best_plan,
        });
    }
    Ok(last.expect("iterations >= 1"))
}

fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    best
}

/// Consecutive zero-score (blind) replans before the controller dithers.
pub const STALL_REPLANS: usize = 3;
/// Blind plans only trigger dithering while the realized reward is below
/// this; with imagined or realized signal available, planning is
/// preferable to random exploration.
pub const STALL_REWARD_CAP: f64 = 0.45;
/// Steps of random-direction escape once blindness is detected. A long
/// ballistic move covers far more ground than the diffusive walk that
/// repeated blind replanning produces.
pub const DITHER_STEPS: usize = 30;
/// Minimum commitment length for a zero-score plan, so that blind
/// exploration stays temporally extended even for short-jump models.
pub const BLIND_COMMIT_MIN: usize = 10;

/// Replan-or-reuse state carried across environment steps.
#[derive(Debug, Clone)]
pub struct PlanCache {
    pub chosen_z: Vec<f64>,
    pub best_plan: Vec<Vec<f64>>,
    pub score: f64,
    pub served: usize,
    /// Consecutive replans whose best imagined score was zero.
    pub stalled_replans: usize,
    /// Remaining steps of a random escape direction, if dithering.
    pub escape: Option<([f64; 3], usize)>,
}

/// MPC action selection: reuse the cached latent for `hold_steps`
/// actions, then replan. A plan with zero score carries no gradient
/// signal, so its skill is committed for the full imagined plan length
/// (horizon jumps) to explore with temporally extended motion instead of
/// replanning into a diffusive walk. If several consecutive replans find
/// no imagined reward at all while the realized reward is also near zero,
/// the planner is blind (out of prediction range, or stuck against an
/// out-of-distribution region such as a workspace wall), and the
/// controller makes a long ballistic move in a random direction instead.
pub fn act(
    state: &EnvState,
    model: &SkillModel,
    task: Task,
    config: &PlannerConfig,
    rng: &mut ChaCha8Rng,
    cache: Option<PlanCache>,
    mode: ExecMode,
) -> Result<(crate::env::EnvAction, PlanCache)> {
    if let Some(mut c) = cache.clone() {
        if let Some((dir, left)) = c.escape {
            if left > 0 {
                c.escape = Some((dir, left - 1));
                return Ok((crate::env::EnvAction::new(dir[0], dir[1], dir[2])?, c));
            }
        }
    }
    let mut cache = match cache {
        Some(c)
            if c.escape.is_none()
                && c.served
                    < if c.score > 0.0 {
                        config.hold_steps
                    } else {
                        config.hold_steps.max(model.config.k).max(BLIND_COMMIT_MIN)
                    } =>
        {
            c
        }
        expired => {
            let stalled_replans = match &expired {
                Some(c) => {
                    if c.score <= 0.0 && task.reward(state) < STALL_REWARD_CAP {
                        c.stalled_replans + 1
                    } else {
                        0
                    }
                }
                None => 0,
            };
            if stalled_replans >= STALL_REPLANS {
                // Head toward a random interior waypoint rather than in a
                // raw random direction: from a wall or corner, half of all
                // directions immediately pin the gripper again.
                let wx: f64 = rng.gen_range(-1.0..1.0);
                let wy: f64 = rng.gen_range(-1.0..1.0);
                let (dx, dy) = (wx - state.gripper_x, wy - state.gripper_y);
                let norm = dx.hypot(dy).max(1e-9);
                // The escape relocates the gripper; leave the aperture
                // alone so it cannot grasp or drop anything by accident.
                let dir = [dx / norm, dy / norm, 0.0];
                let mut c = expired.expect("stall requires a previous plan");
                c.stalled_replans = 0;
                c.served = config.hold_steps; // force a replan after escaping
                c.escape = Some((dir, DITHER_STEPS - 1));
                return Ok((crate::env::EnvAction::new(dir[0], dir[1], dir[2])?, c));
            }
            let sv = state.to_vec();
            let warm = if config.warm_start {
                expired.as_ref().map(|c| c.best_plan.as_slice())
            } else {
                None
            };
            let result = plan(&sv, model, task, config, rng, warm, mode)?;
            PlanCache {
                chosen_z: result.chosen_z,
                best_plan: result.best_plan,
                score: result.scores[result.best_index],
                served: 0,
                stalled_replans,
                escape: None,
            }
        }
    };
    cache.escape = None;
    let mean = model.decode_action(&state.to_vec(), &cache.chosen_z)?;
    let action = crate::env::EnvAction::new(mean[0], mean[1], mean[2])?;
    cache.served += 1;
    Ok((action, cache))
}
