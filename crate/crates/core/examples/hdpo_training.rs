//! Trains a tabular policy with the H-DPO loss on Bradley-Terry population
//! data and compares the result with the closed-form optimum.

use hdpo_lab::preference::{max_row_tv, optimal_policy, LossConfig};
use hdpo_lab::trainer::{mean_entropy, synthesize_dataset, train, DatasetMode, SyntheticTask, TrainConfig};

fn main() -> hdpo_lab::Result<()> {
    let task = SyntheticTask::default_task(0)?;
    let data = synthesize_dataset(&task, DatasetMode::Population, 0)?;
    let cfg = LossConfig::new(0.9, 1.0)?;
    let report = train(&task, &data, &cfg, &TrainConfig::default())?;
    let oracle = optimal_policy(task.reference(), task.reward(), &cfg)?;
    let curve = &report.loss_curve;
    println!("loss {:.6} -> {:.6} in {} steps", curve[0], curve[curve.len() - 1], report.steps_used);
    println!("final gradient norm {:.2e}, converged {}", report.final_grad_norm, report.converged);
    println!("max per-row TV to the optimum {:.2e}", max_row_tv(&report.final_policy, &oracle.policy));
    println!(
        "mean entropy: reference {:.4}, trained {:.4}",
        mean_entropy(task.reference(), task.prompt_weights()),
        mean_entropy(&report.final_policy, task.prompt_weights())
    );
    for x in 0..task.n_prompts() {
        let row: Vec<String> = report.final_policy.row_probs(x).iter().map(|p| format!("{p:.3}")).collect();
        println!("prompt {x}: {}", row.join(" "));
    }
    Ok(())
}
