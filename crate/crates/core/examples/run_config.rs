//! Runs an experiment from an inline JSON config, the same path the CLI
//! takes, and prints the manifest.

use hdpo_lab::runner::{run_config, ExperimentConfig};

fn main() -> hdpo_lab::Result<()> {
    let out = std::env::temp_dir().join("hdpo-lab-run-config-example");
    let json = format!(
        r#"{{
            "experiment": "train",
            "parameters": {{ "alpha": 0.9, "beta": 1.0, "task": {{ "n_prompts": 2, "n_completions": 4 }} }},
            "output_dir": {},
            "seed": 7
        }}"#,
        serde_json::to_string(&out).expect("path serializes")
    );
    let manifest = run_config(&ExperimentConfig::from_json(&json)?)?;
    println!("{} {} in {:.3}s", manifest.tool, manifest.version, manifest.wall_clock_seconds);
    for f in &manifest.files {
        println!("{}  {:>6} bytes  {}", f.sha256, f.bytes, out.join(&f.path).display());
    }
    Ok(())
}
