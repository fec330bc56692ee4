use jumpy::env::Env;
use jumpy::harness::{run_episode, VariantId};
use jumpy::par::ExecMode;
use jumpy::planner::PlannerConfig;
use jumpy::skill::SkillModel;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = SkillModel::load(std::path::Path::new("/tmp/full/model_k10.json"))?;
    let env = Env::with_noise(jumpy::env::DEFAULT_MOTION_NOISE);
    let cfg = PlannerConfig::default();
    let seed: u64 = std::env::args().nth(1).unwrap().parse()?;
    let out = run_episode(
        &env,
        jumpy::env::Task::LiftGreen,
        VariantId::ZeroshotPlanJumpy,
        Some(&model),
        &cfg,
        seed,
        400,
        ExecMode::Sequential,
    )?;
    println!("return {:.1} max {:.3}", out.total_return, out.max_reward);
    let mut prev_held = 0.0;
    for (i, s) in out.states.iter().enumerate() {
        let held = s[6];
        if held != prev_held || i % 40 == 0 {
            println!(
                "step {i:3} grip ({:+.3},{:+.3}) ap {:.2} green h{} ({:+.3},{:+.3}) red h{} score {:+.3}",
                s[0], s[1], s[2], s[6] as u8, s[7], s[8], s[3] as u8,
                out.trace.get(i).map(|t| t.planned_score).unwrap_or(-1.0),
            );
        }
        prev_held = held;
    }
    Ok(())
}
