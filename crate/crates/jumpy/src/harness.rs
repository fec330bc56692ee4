//! Episode rollout and evaluation harness: runs policy variants in the
//! real environment, aggregates per-seed statistics, sweeps planner
//! hyperparameters, and writes JSONL / CSV artifacts.

use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::atomic_write;
use crate::env::{Env, EnvAction, EnvState, Task, BasePolicyId, STATE_DIM};
use crate::error::{JumpyError, Result};
use crate::par::{map_indexed, ExecMode};
use crate::planner::{act, PlanCache, PlannerConfig};
use crate::rng::{derive_seed, rng_from_seed};
use crate::skill::{FinetuneTriple, SkillModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantId {
    RandomHl,
    ZeroshotPlanJumpy,
    ZeroshotPlanK1,
    PlanFinetune,
    BasePolicyReference,
}

pub const ALL_VARIANTS: [VariantId; 5] = [
    VariantId::RandomHl,
    VariantId::ZeroshotPlanJumpy,
    VariantId::ZeroshotPlanK1,
    VariantId::PlanFinetune,
    VariantId::BasePolicyReference,
];

impl VariantId {
    pub fn name(self) -> &'static str {
        match self {
            VariantId::RandomHl => "random_hl",
            VariantId::ZeroshotPlanJumpy => "zeroshot_plan_jumpy",
            VariantId::ZeroshotPlanK1 => "zeroshot_plan_k1",
            VariantId::PlanFinetune => "plan_finetune",
            VariantId::BasePolicyReference => "base_policy_reference",
        }
    }

    pub fn parse(name: &str) -> Result<VariantId> {
        ALL_VARIANTS
            .into_iter()
            .find(|v| v.name() == name)
            .ok_or_else(|| JumpyError::config(format!("unknown variant '{name}'")))
    }

    pub fn uses_planner(self) -> bool {
        matches!(
            self,
            VariantId::ZeroshotPlanJumpy | VariantId::ZeroshotPlanK1 | VariantId::PlanFinetune
        )
    }

    pub fn needs_model(self) -> bool {
        self != VariantId::BasePolicyReference
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub planned_score: f64,
    pub reward: f64,
}

#[derive(Debug, Clone)]
pub struct EpisodeOutcome {
    pub seed: u64,
    pub total_return: f64,
    pub max_reward: f64,
    pub rewards: Vec<f64>,
    /// Visited states including the initial one.
    pub states: Vec<[f64; STATE_DIM]>,
    /// Per-step (planned score, realized reward); empty for
    /// non-planning variants.
    pub trace: Vec<TraceRow>,
    /// (s_t, z_t, s_{t+K}) triples gathered at replanning points;
    /// empty for non-planning variants.
    pub triples: Vec<FinetuneTriple>,
}

/// Serializable per-episode record for JSONL output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalRecord {
    pub task: String,
    pub variant: String,
    pub seed: u64,
    pub total_return: f64,
    pub max_reward: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<TraceRow>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub states: Option<Vec<[f64; STATE_DIM]>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalSummary {
    pub task: String,
    pub variant: String,
    pub seeds: usize,
    pub mean_return: f64,
    pub std_return: f64,
    pub mean_max_reward: f64,
    pub std_max_reward: f64,
}

fn scripted_reference(task: Task, s: &EnvState) -> Result<EnvAction> {
    const P_GAIN: f64 = 5.0;
    match task {
        Task::ReachRed => Ok(BasePolicyId::ReachRed.action(s)),
        Task::LiftRed => Ok(BasePolicyId::LiftRed.action(s)),
        Task::RedHoverBlue => Ok(BasePolicyId::RedHoverBlue.action(s)),
        Task::ReachGreen => {
            let g = s.obj(crate::env::Color::Green);
            EnvAction::new(
                (P_GAIN * (g.x - s.gripper_x)).clamp(-1.0, 1.0),
                (P_GAIN * (g.y - s.gripper_y)).clamp(-1.0, 1.0),
                1.0,
            )
        }
        other => Err(JumpyError::config(format!(
            "no scripted reference policy for task '{}'",
            other.name()
        ))),
    }
}

struct PendingTriple {
    start_step: usize,
    state: [f64; STATE_DIM],
    latent: Vec<f64>,
}

/// One full episode of `steps` low-level actions under a variant.
pub fn run_episode(
    env: &Env,
    task: Task,
    variant: VariantId,
    model: Option<&SkillModel>,
    planner_cfg: &PlannerConfig,
    seed: u64,
    steps: usize,
    mode: ExecMode,
) -> Result<EpisodeOutcome> {
    if variant.needs_model() && model.is_none() {
        return Err(JumpyError::config(format!(
            "variant '{}' requires a trained model",
            variant.name()
        )));
    }
    planner_cfg.validate()?;
    let mut env_rng = rng_from_seed(derive_seed(seed, "episode-noise", 0));
    let mut plan_rng = rng_from_seed(derive_seed(seed, "episode-plan", 0));
    let mut state = env.reset(derive_seed(seed, "episode-reset", 0));

    let mut rewards = Vec::with_capacity(steps);
    let mut states = Vec::with_capacity(steps + 1);
    states.push(state.to_vec());
    let mut trace = Vec::new();
    let mut triples = Vec::new();
    let mut pending: Vec<PendingTriple> = Vec::new();
    let mut cache: Option<PlanCache> = None;
    let mut random_z: Vec<f64> = Vec::new();

    for step in 0..steps {
        let action = match variant {
            VariantId::BasePolicyReference => scripted_reference(task, &state)?,
            VariantId::RandomHl => {
                let m = model.unwrap();
                if step % planner_cfg.hold_steps == 0 {
                    random_z = (0..m.config.latent_dim)
                        .map(|_| StandardNormal.sample(&mut plan_rng))
                        .collect();
                }
                let mean = m.decode_action(&state.to_vec(), &random_z)?;
                EnvAction::new(
                    mean[0].clamp(-1.0, 1.0),
                    mean[1].clamp(-1.0, 1.0),
                    mean[2].clamp(-1.0, 1.0),
                )?
            }
            _ => {
                let m = model.unwrap();
                let fresh = match &cache {
                    Some(c) => c.served >= planner_cfg.hold_steps,
                    None => true,
                };
                let (a, c) =
                    act(&state, m, task, planner_cfg, &mut plan_rng, cache.take(), mode)?;
                if fresh {
                    pending.push(PendingTriple {
                        start_step: step,
                        state: state.to_vec(),
                        latent: c.chosen_z.clone(),
                    });
                }
                trace.push(TraceRow {
                    step,
                    planned_score: c.score,
                    reward: 0.0,
                });
                cache = Some(c);
                a
            }
        };
        state = env.step(&state, &action, &mut env_rng)?;
        let r = task.reward(&state);
        rewards.push(r);
        states.push(state.to_vec());
        if let Some(row) = trace.last_mut() {
            if row.step == step {
                row.reward = r;
            }
        }
        if variant.uses_planner() {
            let k = model.unwrap().config.k;
            let now = step + 1;
            let mut i = 0;
            while i < pending.len() {
                if pending[i].start_step + k == now {
                    let p = pending.swap_remove(i);
                    triples.push(FinetuneTriple {
                        state: p.state,
                        latent: p.latent,
                        state_k: state.to_vec(),
                    });
                } else {
                    i += 1;
                }
            }
        }
    }

    let total_return: f64 = rewards.iter().sum();
    let max_reward = rewards.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(EpisodeOutcome {
        seed,
        total_return,
        max_reward,
        rewards,
        states,
        trace,
        triples,
    })
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Evaluate one (task, variant) cell over `seed_count` episodes with
/// per-seed seeds derived from `base_seed`. Episodes run in parallel in
/// parallel mode; the planner inside each episode stays sequential so
/// results are identical across modes.
pub fn evaluate(
    env: &Env,
    task: Task,
    variant: VariantId,
    model: Option<&SkillModel>,
    planner_cfg: &PlannerConfig,
    seed_count: usize,
    base_seed: u64,
    steps: usize,
    mode: ExecMode,
) -> Result<(Vec<EpisodeOutcome>, EvalSummary)> {
    if seed_count == 0 {
        return Err(JumpyError::config("seed_count must be >= 1"));
    }
    let outcomes: Vec<Result<EpisodeOutcome>> = map_indexed(mode, seed_count, |i| {
        let seed = derive_seed(base_seed, "eval-seed", i as u64);
        run_episode(
            env,
            task,
            variant,
            model,
            planner_cfg,
            seed,
            steps,
            ExecMode::Sequential,
        )
    });
    let outcomes: Vec<EpisodeOutcome> = outcomes.into_iter().collect::<Result<_>>()?;
    let returns: Vec<f64> = outcomes.iter().map(|o| o.total_return).collect();
    let maxes: Vec<f64> = outcomes.iter().map(|o| o.max_reward).collect();
    let (mean_return, std_return) = mean_std(&returns);
    let (mean_max_reward, std_max_reward) = mean_std(&maxes);
    Ok((
        outcomes,
        EvalSummary {
            task: task.name().to_string(),
            variant: variant.name().to_string(),
            seeds: seed_count,
            mean_return,
            std_return,
            mean_max_reward,
            std_max_reward,
        },
    ))
}

pub const JUMPY_SWEEP_HORIZONS: [usize; 4] = [1, 2, 3, 5];
pub const JUMPY_SWEEP_HOLDS: [usize; 6] = [1, 2, 10, 20, 100, 200];
/// One-step plans compound prediction error per jump, so horizons beyond
/// ten imagined steps score pure fantasy while costing proportionally
/// more compute; the sweep stops there.
pub const K1_SWEEP_HORIZONS: [usize; 5] = [1, 2, 3, 5, 10];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub task: String,
    pub horizon: usize,
    pub hold_steps: usize,
    pub seeds: usize,
    pub mean_return: f64,
    pub std_return: f64,
    pub mean_max_reward: f64,
    pub std_max_reward: f64,
}

/// Grid sweep over (horizon, hold) for the planning variant of `model`.
#[allow(clippy::too_many_arguments)]
pub fn sweep(
    env: &Env,
    task: Task,
    model: &SkillModel,
    base_cfg: &PlannerConfig,
    horizons: &[usize],
    holds: &[usize],
    seed_count: usize,
    base_seed: u64,
    steps: usize,
    mode: ExecMode,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(horizons.len() * holds.len());
    for &horizon in horizons {
        for &hold_steps in holds {
            let cfg = PlannerConfig {
                horizon,
                hold_steps,
                ..*base_cfg
            };
            let (_, summary) = evaluate(
                env,
                task,
                VariantId::ZeroshotPlanJumpy,
                Some(model),
                &cfg,
                seed_count,
                base_seed,
                steps,
                mode,
            )?;
            rows.push(SweepRow {
                task: summary.task,
                horizon,
                hold_steps,
                seeds: seed_count,
                mean_return: summary.mean_return,
                std_return: summary.std_return,
                mean_max_reward: summary.mean_max_reward,
                std_max_reward: summary.std_max_reward,
            });
        }
    }
    Ok(rows)
}

/// Run planning episodes and gather finetuning triples from them.
pub fn collect_finetune_triples(
    env: &Env,
    task: Task,
    model: &SkillModel,
    planner_cfg: &PlannerConfig,
    seed_count: usize,
    base_seed: u64,
    steps: usize,
    mode: ExecMode,
) -> Result<Vec<FinetuneTriple>> {
    let (outcomes, _) = evaluate(
        env,
        task,
        VariantId::ZeroshotPlanJumpy,
        Some(model),
        planner_cfg,
        seed_count,
        base_seed,
        steps,
        mode,
    )?;
    Ok(outcomes.into_iter().flat_map(|o| o.triples).collect())
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.6}")
}

pub fn write_summary_csv(path: &Path, summaries: &[EvalSummary]) -> Result<()> {
    let mut out = String::from(
        "task,variant,seeds,mean_return,std_return,mean_max_reward,std_max_reward\n",
    );
    for s in summaries {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            s.task,
            s.variant,
            s.seeds,
            fmt_f64(s.mean_return),
            fmt_f64(s.std_return),
            fmt_f64(s.mean_max_reward),
            fmt_f64(s.std_max_reward)
        ));
    }
    atomic_write(path, out.as_bytes())
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut out = String::from(
        "task,horizon,hold_steps,seeds,mean_return,std_return,mean_max_reward,std_max_reward\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.task,
            r.horizon,
            r.hold_steps,
            r.seeds,
            fmt_f64(r.mean_return),
            fmt_f64(r.std_return),
            fmt_f64(r.mean_max_reward),
            fmt_f64(r.std_max_reward)
        ));
    }
    atomic_write(path, out.as_bytes())
}

pub fn write_records_jsonl(path: &Path, records: &[EvalRecord]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())
}

pub fn read_records_jsonl(path: &Path) -> Result<Vec<EvalRecord>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(JumpyError::from))
        .collect()
}

pub fn write_trace_csv(path: &Path, trace: &[TraceRow]) -> Result<()> {
    let mut out = String::from("step,planned_score,reward\n");
    for t in trace {
        out.push_str(&format!(
            "{},{},{}\n",
            t.step,
            fmt_f64(t.planned_score),
            fmt_f64(t.reward)
        ));
    }
    atomic_write(path, out.as_bytes())
}

pub fn outcome_to_record(
    task: Task,
    variant: VariantId,
    o: &EpisodeOutcome,
    keep_trace: bool,
    keep_states: bool,
) -> EvalRecord {
    EvalRecord {
        task: task.name().to_string(),
        variant: variant.name().to_string(),
        seed: o.seed,
        total_return: o.total_return,
        max_reward: o.max_reward,
        trace: if keep_trace && !o.trace.is_empty() {
            Some(o.trace.clone())
        } else {
            None
        },
        states: if keep_states {
            Some(o.states.clone())
        } else {
            None
        },
    }
}
