//! Checks whether some plain DPO temperature reproduces the alpha-adjusted
//! optimum. It does for a uniform reference and does not in general.

use hdpo_lab::gmm_fit::Axis;
use hdpo_lab::preference::TabularPolicy;
use hdpo_lab::trainer::{beta_equivalence_scan, SyntheticTask};

fn main() -> hdpo_lab::Result<()> {
    let (alpha, beta) = (0.9, 0.01);
    let mut grid = Axis::linear(0.001, 0.1, 200).points();
    let designated = beta_equivalence_scan(&SyntheticTask::designated_nonuniform(), alpha, beta, &grid)?;
    println!(
        "non-uniform reference: min TV {:.4} at beta' {:.5}",
        designated.min_tv, designated.argmin_beta
    );
    let task = SyntheticTask::default_task(0)?;
    let uniform = task.with_reference(TabularPolicy::uniform(task.n_prompts(), task.n_completions()))?;
    grid.push(alpha * beta);
    let scan = beta_equivalence_scan(&uniform, alpha, beta, &grid)?;
    println!("uniform reference: min TV {:.1e} at beta' {:.5}", scan.min_tv, scan.argmin_beta);
    Ok(())
}
