//! Trains once per alpha and reports how the mean policy entropy moves.

use hdpo_lab::trainer::{entropy_vs_alpha, SyntheticTask, TrainConfig};

fn main() -> hdpo_lab::Result<()> {
    let task = SyntheticTask::default_task(0)?;
    let alphas = [0.8, 0.9, 0.95, 1.0, 1.1, 1.2];
    let rows = entropy_vs_alpha(&task, &alphas, 1.0, &TrainConfig::default())?;
    println!("{:>5} {:>9} {:>9} {:>9}", "alpha", "entropy", "oracle", "tv");
    for row in rows {
        match row.outcome {
            Ok(p) => println!("{:>5} {:>9.5} {:>9.5} {:>9.1e}", row.alpha, p.mean_policy_entropy, p.oracle_entropy, p.oracle_tv),
            Err(e) => println!("{:>5} failed: {e}", row.alpha),
        }
    }
    Ok(())
}
