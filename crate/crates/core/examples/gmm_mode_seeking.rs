//! Fits one Gaussian to a two-component mixture for a range of alphas and
//! shows the switch from covering both modes to locking onto one.

use hdpo_lab::gmm_fit::{alpha_sweep_fit, standard_config, FitConfig};

fn main() -> hdpo_lab::Result<()> {
    let spec = standard_config("2comp-gap4").expect("standard mixture");
    let alphas = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0, 1.2];
    let fits = alpha_sweep_fit(&spec, &alphas, &FitConfig::for_spec(&spec, 1.0))?;
    println!("{:>5} {:>9} {:>9} {:>10} {:>9}", "alpha", "mu", "sigma", "D_alpha", "converged");
    for (alpha, fit) in alphas.iter().zip(fits) {
        match fit {
            Ok(f) => println!(
                "{alpha:>5} {:>9.4} {:>9.4} {:>10.5} {:>9}",
                f.g_hat.mu(),
                f.g_hat.sigma(),
                f.d_alpha_value,
                f.converged
            ),
            Err(e) => println!("{alpha:>5} failed: {e}"),
        }
    }
    Ok(())
}
