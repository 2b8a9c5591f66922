//! Evaluates the D_alpha landscape around the best fit and writes it as an
//! SVG heatmap. Pass an output path to choose where the SVG goes.

use hdpo_lab::distributions::QuadratureConfig;
use hdpo_lab::gmm_fit::{dalpha_heatmap, fit_gaussian_dalpha, standard_config, FitConfig, HeatmapSpec};
use hdpo_lab::runner::emit::heatmap_svg;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "dalpha_heatmap.svg".into());
    let spec = standard_config("2comp-gap4").expect("standard mixture");
    let alpha = 0.6;
    let fit = fit_gaussian_dalpha(&spec, &FitConfig::for_spec(&spec, alpha))?;
    let map = dalpha_heatmap(&spec, alpha, &HeatmapSpec::covering(&spec), &fit, &QuadratureConfig::default())?;
    let (i, j) = map.argmin();
    println!("fit: mu {:.4}, sigma {:.4}", fit.g_hat.mu(), fit.g_hat.sigma());
    println!("lowest cell: mu {:.4}, sigma {:.4}", map.mu_axis[j], map.sigma_axis[i]);
    let svg = heatmap_svg(&map.values, &map.mu_axis, &map.sigma_axis, &map.star)?;
    std::fs::write(&out, svg)?;
    println!("wrote {out}");
    Ok(())
}
