//! Command-line entry point: dataset generation, model training,
//! evaluation, hyperparameter sweeps, SVG rendering, and gradient
//! verification. Logging level comes from the JMP_LOG environment
//! variable (error, info, debug).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;

use jumpy::config::RunConfig;
use jumpy::dataset::{atomic_write, generate_dataset, Dataset};
use jumpy::env::{Env, Task, ALL_TASKS};
use jumpy::harness::{
    collect_finetune_triples, evaluate, outcome_to_record, sweep, write_records_jsonl,
    write_summary_csv, write_sweep_csv, EvalRecord, EvalSummary, VariantId, ALL_VARIANTS,
    JUMPY_SWEEP_HOLDS, JUMPY_SWEEP_HORIZONS, K1_SWEEP_HORIZONS,
};
use jumpy::par::{configure_threads, ExecMode};
use jumpy::planner::PlannerConfig;
use jumpy::rng::derive_seed;
use jumpy::skill::{finetune, gradient_check_report, train, SkillModel};
use jumpy::viz::render_records;
use jumpy::JumpyError;

#[derive(Parser)]
#[command(name = "jumpy", about = "Latent-skill learning and planning in a planar grasp world")]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed overriding the configured one.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads; 0 picks the runtime default.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the offline trajectory dataset.
    GenData {
        /// Episode count override.
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Train a skill model on a generated dataset.
    Train {
        /// Jump length: 10 trains the jumpy model, 1 the baseline.
        #[arg(long, default_value_t = 10, value_parser = parse_k)]
        k: usize,
        /// Dataset path; defaults to <out>/dataset.jmpd.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Evaluate policy variants on tasks.
    Eval {
        /// Comma-separated task names; defaults to all nine.
        #[arg(long, value_delimiter = ',')]
        tasks: Vec<String>,
        /// Comma-separated variant names; defaults to all.
        #[arg(long, value_delimiter = ',')]
        variants: Vec<String>,
        /// Episodes per (task, variant) cell.
        #[arg(long)]
        seeds: Option<usize>,
        /// Planning horizon override.
        #[arg(long)]
        horizon: Option<usize>,
        /// Hold-steps override.
        #[arg(long)]
        hold: Option<usize>,
    },
    /// Sweep planner hyperparameters for one model.
    Sweep {
        /// 10 sweeps (horizon, hold) for the jumpy model; 1 sweeps
        /// horizons for the baseline.
        #[arg(long, default_value_t = 10, value_parser = parse_k)]
        k: usize,
        #[arg(long, value_delimiter = ',')]
        tasks: Vec<String>,
        #[arg(long)]
        seeds: Option<usize>,
        /// Hold-steps used for the K=1 sweep rows.
        #[arg(long)]
        hold: Option<usize>,
    },
    /// Render SVG plots from an evaluation JSONL file.
    Viz {
        /// Records file; defaults to <out>/records.jsonl.
        #[arg(long)]
        records: Option<PathBuf>,
    },
    /// Verify analytic gradients against finite differences.
    GradCheck,
}

fn parse_k(s: &str) -> Result<usize, String> {
    match s {
        "1" => Ok(1),
        "10" => Ok(10),
        _ => Err("k must be 1 or 10".into()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("JMP_LOG", "info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, JumpyError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::defaults(),
    };
    if let Some(s) = cli.seed {
        cfg.run.seed = s;
    }
    if let Some(t) = cli.threads {
        cfg.run.threads = t;
    }
    Ok(cfg)
}

fn parse_tasks(names: &[String]) -> Result<Vec<Task>, JumpyError> {
    if names.is_empty() {
        return Ok(ALL_TASKS.to_vec());
    }
    names.iter().map(|n| Task::parse(n)).collect()
}

fn parse_variants(names: &[String]) -> Result<Vec<VariantId>, JumpyError> {
    if names.is_empty() {
        return Ok(ALL_VARIANTS.to_vec());
    }
    names.iter().map(|n| VariantId::parse(n)).collect()
}

fn model_path(out: &Path, k: usize) -> PathBuf {
    out.join(format!("model_k{k}.json"))
}

fn load_model(out: &Path, k: usize) -> Result<SkillModel, JumpyError> {
    let path = model_path(out, k);
    if !path.exists() {
        return Err(JumpyError::config(format!(
            "model checkpoint {} not found; run `jumpy train --k {k}` first",
            path.display()
        )));
    }
    SkillModel::load(&path)
}

fn run(cli: Cli) -> Result<ExitCode, JumpyError> {
    let cfg = load_config(&cli)?;
    configure_threads(cfg.run.threads);
    let mode = ExecMode::default_mode();
    std::fs::create_dir_all(&cli.out)?;
    let out = cli.out.clone();

    match cli.command {
        Command::GenData { episodes } => {
            let count = episodes.unwrap_or(cfg.dataset.episodes);
            info!("generating {count} episodes (seed {})", cfg.run.seed);
            let dataset = generate_dataset(count, cfg.run.seed, cfg.dataset.motion_noise > 0.0, mode)?;
            let path = out.join("dataset.jmpd");
            dataset.write(&path)?;
            let meta = serde_json::json!({
                "episodes": count,
                "seed": cfg.run.seed,
                "motion_noise": cfg.dataset.motion_noise,
                "transitions": dataset.transition_count(),
                "content_sha256": dataset.content_hash(),
            });
            atomic_write(
                &out.join("dataset.meta.json"),
                serde_json::to_string_pretty(&meta)?.as_bytes(),
            )?;
            info!("wrote {}", path.display());
        }
        Command::Train { k, data } => {
            let data_path = data.unwrap_or_else(|| out.join("dataset.jmpd"));
            let dataset = Dataset::read(&data_path)?;
            let model_cfg = if k == 1 { cfg.model_k1 } else { cfg.model };
            info!(
                "training k={k} model for {} steps on {} episodes",
                model_cfg.total_steps,
                dataset.episodes.len()
            );
            let (model, log) = train(
                &dataset,
                model_cfg,
                derive_seed(cfg.run.seed, "train", k as u64),
                mode,
            )?;
            model.save(&model_path(&out, k))?;
            let mut csv = String::from("step,kl,action_term,state_term,total\n");
            for row in &log {
                csv.push_str(&format!(
                    "{},{:.6},{:.6},{:.6},{:.6}\n",
                    row.step, row.kl, row.action_se, row.state_se, row.total
                ));
            }
            atomic_write(&out.join(format!("train_log_k{k}.csv")), csv.as_bytes())?;
            info!("saved {}", model_path(&out, k).display());
        }
        Command::Eval {
            tasks,
            variants,
            seeds,
            horizon,
            hold,
        } => {
            let tasks = parse_tasks(&tasks)?;
            let variants = parse_variants(&variants)?;
            let seeds = seeds.unwrap_or(cfg.eval.seeds);
            let mut planner_cfg = cfg.planner;
            if let Some(h) = horizon {
                planner_cfg.horizon = h;
            }
            if let Some(h) = hold {
                planner_cfg.hold_steps = h;
            }
            run_eval(&cfg, &out, &tasks, &variants, seeds, &planner_cfg, mode)?;
        }
        Command::Sweep {
            k,
            tasks,
            seeds,
            hold,
        } => {
            let tasks = parse_tasks(&tasks)?;
            let seeds = seeds.unwrap_or(cfg.eval.seeds);
            let model = load_model(&out, k)?;
            let env = Env::with_noise(cfg.dataset.motion_noise);
            let mut rows = Vec::new();
            for task in tasks {
                info!("sweeping k={k} on {}", task.name());
                let (horizons, holds): (&[usize], Vec<usize>) = if k == 1 {
                    (&K1_SWEEP_HORIZONS, vec![hold.unwrap_or(cfg.planner.hold_steps)])
                } else {
                    (&JUMPY_SWEEP_HORIZONS, JUMPY_SWEEP_HOLDS.to_vec())
                };
                rows.extend(sweep(
                    &env,
                    task,
                    &model,
                    &cfg.planner,
                    horizons,
                    &holds,
                    seeds,
                    derive_seed(cfg.run.seed, "sweep", k as u64),
                    cfg.eval.episode_steps,
                    mode,
                )?);
            }
            let path = out.join(format!("sweep_k{k}.csv"));
            write_sweep_csv(&path, &rows)?;
            info!("wrote {}", path.display());
        }
        Command::Viz { records } => {
            let path = records.unwrap_or_else(|| out.join("records.jsonl"));
            let records = jumpy::harness::read_records_jsonl(&path)?;
            let n = render_records(&records, &out)?;
            info!("rendered {n} SVG files to {}", out.display());
        }
        Command::GradCheck => {
            let report = gradient_check_report(cfg.run.seed, 200, 1e-6)?;
            let mut worst = 0.0f64;
            for (term, err) in &report {
                println!("{term:>8}: max relative error {err:.3e}");
                worst = worst.max(*err);
            }
            if worst > 1e-5 {
                eprintln!("gradient check FAILED (worst {worst:.3e} > 1e-5)");
                return Ok(ExitCode::FAILURE);
            }
            println!("gradient check passed (worst {worst:.3e})");
        }
    }
    Ok(ExitCode::SUCCESS)
}

#[allow(clippy::too_many_arguments)]
fn run_eval(
    cfg: &RunConfig,
    out: &Path,
    tasks: &[Task],
    variants: &[VariantId],
    seeds: usize,
    planner_cfg: &PlannerConfig,
    mode: ExecMode,
) -> Result<(), JumpyError> {
    let env = Env::with_noise(cfg.dataset.motion_noise);
    let need_jumpy = variants.iter().any(|v| {
        matches!(
            v,
            VariantId::RandomHl | VariantId::ZeroshotPlanJumpy | VariantId::PlanFinetune
        )
    });
    let need_k1 = variants.contains(&VariantId::ZeroshotPlanK1);
    let jumpy_model = if need_jumpy { Some(load_model(out, 10)?) } else { None };
    let k1_model = if need_k1 { Some(load_model(out, 1)?) } else { None };

    let mut summaries: Vec<EvalSummary> = Vec::new();
    let mut records: Vec<EvalRecord> = Vec::new();
    for &task in tasks {
        for &variant in variants {
            info!("evaluating {} / {}", task.name(), variant.name());
            let finetuned;
            let model: Option<&SkillModel> = match variant {
                VariantId::BasePolicyReference => None,
                VariantId::ZeroshotPlanK1 => k1_model.as_ref(),
                VariantId::PlanFinetune => {
                    let base = jumpy_model.as_ref().expect("loaded above");
                    let triples = collect_finetune_triples(
                        &env,
                        task,
                        base,
                        planner_cfg,
                        cfg.eval.finetune_episodes,
                        derive_seed(cfg.run.seed, "finetune-collect", task as u64),
                        cfg.eval.episode_steps,
                        mode,
                    )?;
                    info!("finetuning on {} collected triples", triples.len());
                    let mut m = base.clone();
                    finetune(
                        &mut m,
                        &triples,
                        cfg.eval.finetune_steps,
                        derive_seed(cfg.run.seed, "finetune", task as u64),
                        mode,
                    )?;
                    finetuned = m;
                    Some(&finetuned)
                }
                _ => jumpy_model.as_ref(),
            };
            // the random baseline holds each latent for K steps
            let variant_cfg = if variant == VariantId::RandomHl {
                PlannerConfig {
                    hold_steps: cfg.model.k,
                    ..*planner_cfg
                }
            } else {
                *planner_cfg
            };
            match evaluate(
                &env,
                task,
                variant,
                model,
                &variant_cfg,
                seeds,
                derive_seed(cfg.run.seed, "eval", task as u64),
                cfg.eval.episode_steps,
                mode,
            ) {
                Ok((outcomes, summary)) => {
                    info!(
                        "{} / {}: mean return {:.3} (max reward {:.3})",
                        task.name(),
                        variant.name(),
                        summary.mean_return,
                        summary.mean_max_reward
                    );
                    for o in &outcomes {
                        records.push(outcome_to_record(task, variant, o, true, true));
                    }
                    summaries.push(summary);
                }
                Err(JumpyError::Config(msg)) => {
                    // reference policies only exist for some tasks
                    info!("skipping {} / {}: {msg}", task.name(), variant.name());
                }
                Err(e) => return Err(e),
            }
        }
    }
    write_summary_csv(&out.join("summary.csv"), &summaries)?;
    write_records_jsonl(&out.join("records.jsonl"), &records)?;
    info!("wrote {} and {}", out.join("summary.csv").display(), out.join("records.jsonl").display());
    Ok(())
}
