//! Unbiased pass@k for single problems and a coverage curve over a set.

use hdpo_lab::metrics::{coverage_report, pass_at_k, PassKInput, Problem};

fn main() -> hdpo_lab::Result<()> {
    for (n, c, k) in [(5, 2, 2), (10, 1, 5), (100, 3, 10), (100, 0, 50)] {
        println!("n {n:>3}, c {c:>2}, k {k:>2}: pass@k {:.6}", pass_at_k(PassKInput::new(n, c, k)?));
    }
    let problems: Vec<Problem> = [(20, 0), (20, 1), (20, 4), (20, 15), (20, 20)]
        .into_iter()
        .map(|(n, c)| Problem { n, c })
        .collect();
    for row in coverage_report(&problems, &[1, 2, 5, 10, 20])? {
        println!("k {:>2}: mean pass@k {:.4}", row.k, row.mean_pass_at_k);
    }
    Ok(())
}
