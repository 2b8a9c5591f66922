//! Samples from a toy autoregressive model at several temperatures and
//! reports entropy, Self-BLEU and Distinct-n.

use hdpo_lab::metrics::{distinct_n, normalized_entropy, sample_toy_lm, self_bleu, GenerationSet, ToyLM};

fn main() -> hdpo_lab::Result<()> {
    let lm = ToyLM::random(8, 1.0, 0.0, 7)?;
    println!("{:>5} {:>8} {:>10} {:>10} {:>10}", "T", "entropy", "self_bleu", "distinct1", "distinct2");
    for t in [0.25, 0.5, 0.75, 1.0, 1.5] {
        // Twenty prompts of 25 responses each; every group has its own seed.
        let groups = (0..20)
            .map(|s| Ok(sample_toy_lm(&lm, t, 25, 20, s)?.prompts()[0].clone()))
            .collect::<hdpo_lab::Result<Vec<_>>>()?;
        let gs = GenerationSet::new(groups)?;
        println!(
            "{t:>5} {:>8.4} {:>10.4} {:>10.4} {:>10.4}",
            normalized_entropy(&gs)?,
            self_bleu(&gs)?,
            distinct_n(&gs, 1)?,
            distinct_n(&gs, 2)?
        );
    }
    Ok(())
}
