//! Acceptance gate: runs each criterion at its stated tolerance and prints
//! one PASS or FAIL line per criterion. Exits non-zero if any fails.

// `check!` negates its condition so that a NaN measurement fails.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod common;

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use hdpo_lab::distributions::*;
use hdpo_lab::gmm_fit::*;
use hdpo_lab::matrix::Matrix;
use hdpo_lab::metrics::*;
use hdpo_lab::preference::*;
use hdpo_lab::runner::{run_config, ExperimentConfig};
use hdpo_lab::trainer::*;
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! check {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

/// Coarse 400 x 200 scan of the fit's search box, then a second 400 x 200
/// scan over two coarse cells either side of the coarse minimizer.
fn dense_grid_min(spec: &GaussianMixtureSpec, cfg: &FitConfig) -> f64 {
    let scan = |mu: Axis, sigma: Axis| {
        let (mus, sigmas) = (mu.points(), sigma.points());
        let v = dalpha_grid(spec, cfg.alpha, &mus, &sigmas, &cfg.quadrature);
        let k = (0..v.as_slice().len()).min_by(|&a, &b| v.as_slice()[a].total_cmp(&v.as_slice()[b])).unwrap();
        (v.as_slice()[k], mus, sigmas, k / mu.count, k % mu.count)
    };
    let (_, mus, sigmas, i, j) = scan(
        Axis::linear(cfg.mu_grid.min, cfg.mu_grid.max, 400),
        Axis::log(cfg.sigma_grid.min, cfg.sigma_grid.max, 200),
    );
    let (fine, ..) = scan(
        Axis::linear(mus[j.saturating_sub(2)], mus[(j + 2).min(399)], 400),
        Axis::log(sigmas[i.saturating_sub(2)], sigmas[(i + 2).min(199)], 200),
    );
    fine
}

fn mode_seeking_and_covering_fits() -> Outcome {
    let spec = GaussianMixtureSpec::equal_weights(&[(0.0, 1.0), (4.0, 0.8)]).map_err(|e| e.to_string())?;
    let mut detail = Vec::new();
    for alpha in [1.0, 0.6] {
        let cfg = FitConfig::for_spec(&spec, alpha);
        let (fit, elapsed) = timed(|| fit_gaussian_dalpha(&spec, &cfg));
        let fit = fit.map_err(|e| e.to_string())?;
        let (mu, sigma) = (fit.g_hat.mu(), fit.g_hat.sigma());
        if alpha == 1.0 {
            check!(mu > 0.0 && mu < 4.0 && sigma > 1.0, "alpha 1 fit is not mode-covering: mu {mu}, sigma {sigma}");
        } else {
            let nearest = spec.means().map(|m| (mu - m).abs()).fold(f64::INFINITY, f64::min);
            check!(nearest < 0.5 && sigma < 1.0, "alpha 0.6 fit is not mode-seeking: mu {mu}, sigma {sigma}");
        }
        let oracle = dense_grid_min(&spec, &cfg);
        let gap = (fit.d_alpha_value - oracle).abs();
        check!(gap <= 1e-6, "alpha {alpha}: |D_fit - dense grid| = {gap:e}");
        check!(elapsed < Duration::from_secs(10), "alpha {alpha}: fit took {elapsed:?}");
        detail.push(format!("alpha {alpha}: mu {mu:.4} sigma {sigma:.4} |gap| {gap:.1e} in {:.2}s", elapsed.as_secs_f64()));
    }
    Ok(detail.join("; "))
}

fn d_alpha_identities() -> Outcome {
    let mut rng = rng(11);
    let mut worst_kl: f64 = 0.0;
    for _ in 0..50 {
        let g = GaussianParams::new(rng.gen_range(-3.0..3.0), rng.gen_range(0.2..3.0)).unwrap();
        let p = GaussianParams::new(rng.gen_range(-3.0..3.0), rng.gen_range(0.2..3.0)).unwrap();
        let d = d_alpha_continuous(&g, &GaussianMixtureSpec::single(p), 1.0, QuadratureConfig::default()).map_err(|e| e.to_string())?;
        worst_kl = worst_kl.max((d - gaussian_kl(&g, &p)).abs());
    }
    check!(worst_kl <= 1e-9, "continuous alpha = 1 vs Gaussian KL: {worst_kl:e}");
    let mut worst_self: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.gen_range(2..10);
        let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let p = CategoricalDist::new(raw.iter().map(|v| v / total).collect()).unwrap();
        let alpha = rng.gen_range(0.0..2.0);
        let f = categorical_functionals(&p, &p, alpha).map_err(|e| e.to_string())?;
        worst_self = worst_self.max((f.d_alpha - (1.0 - alpha) * p.entropy()).abs());
    }
    check!(worst_self <= 1e-12, "categorical D(p, p) vs (1 - alpha) H(p): {worst_self:e}");
    Ok(format!("KL gap {worst_kl:.1e}, self gap {worst_self:.1e}"))
}

fn loss_reduces_to_dpo() -> Outcome {
    let (mut worst, mut worst_ln2): (f64, f64) = (0.0, 0.0);
    for seed in 0..100u64 {
        let mut rng = rng(5000 + seed);
        let (n_p, n_c) = (rng.gen_range(1..=4), rng.gen_range(2..=6));
        let policy = random_policy(&mut rng, n_p, n_c);
        let reference = random_policy(&mut rng, n_p, n_c);
        let beta = rng.gen_range(0.01..2.0);
        let data = if seed % 2 == 0 { random_population(&mut rng, n_p, n_c) } else { random_pairs(&mut rng, n_p, n_c, 25) };
        let cfg = LossConfig::new(1.0, beta).unwrap();
        let h = hdpo_loss(&policy, &reference, &data, &cfg).map_err(|e| e.to_string())?;
        let d = dpo_loss(&policy, &reference, &data, beta).map_err(|e| e.to_string())?;
        worst = worst.max((h - d).abs());
        let at_ref = hdpo_loss(&reference, &reference, &data, &cfg).map_err(|e| e.to_string())?;
        worst_ln2 = worst_ln2.max((at_ref - std::f64::consts::LN_2).abs());
    }
    check!(worst <= 1e-12, "H-DPO vs DPO at alpha = 1: {worst:e}");
    check!(worst_ln2 <= 1e-12, "loss at the reference vs ln 2: {worst_ln2:e}");
    Ok(format!("100 instances, max gap {worst:.1e}, ln 2 gap {worst_ln2:.1e}"))
}

fn gradient_matches_finite_differences() -> Outcome {
    let h = 1e-5;
    let (worst, elapsed) = timed(|| {
        let mut worst: f64 = 0.0;
        for seed in 0..50u64 {
            let mut rng = rng(6000 + seed);
            let (n_p, n_c) = (rng.gen_range(1..=4), rng.gen_range(2..=7));
            let policy = random_policy(&mut rng, n_p, n_c);
            let reference = random_policy(&mut rng, n_p, n_c);
            let cfg = LossConfig::new(rng.gen_range(0.5..1.5), rng.gen_range(0.1..2.0)).unwrap();
            let data = if seed % 2 == 0 { random_population(&mut rng, n_p, n_c) } else { random_pairs(&mut rng, n_p, n_c, 40) };
            let grad = hdpo_loss_grad(&policy, &reference, &data, &cfg).unwrap();
            let loss = |p: &TabularPolicy| hdpo_loss(p, &reference, &data, &cfg).unwrap();
            let mut fd = Matrix::zeros(n_p, n_c);
            for x in 0..n_p {
                for y in 0..n_c {
                    let (mut plus, mut minus) = (policy.clone(), policy.clone());
                    plus.logits_mut().add_at(x, y, h);
                    minus.logits_mut().add_at(x, y, -h);
                    fd.set(x, y, (loss(&plus) - loss(&minus)) / (2.0 * h));
                }
            }
            let diff = grad.as_slice().iter().zip(fd.as_slice()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            worst = worst.max(diff / fd.max_abs().max(1e-300));
        }
        worst
    });
    check!(worst < 1e-5, "max relative error {worst:e}");
    check!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    Ok(format!("50 instances, max relative error {worst:.1e} in {:.2}s", elapsed.as_secs_f64()))
}

fn training_recovers_the_optimum() -> Outcome {
    let task = SyntheticTask::default_task(0).map_err(|e| e.to_string())?;
    let data = synthesize_dataset(&task, DatasetMode::Population, 0).map_err(|e| e.to_string())?;
    let beta = 1.0;
    let mut detail = Vec::new();
    for alpha in [0.8, 0.9, 1.0, 1.1, 1.2] {
        let cfg = LossConfig::new(alpha, beta).unwrap();
        let (report, elapsed) = timed(|| train(&task, &data, &cfg, &TrainConfig::default()));
        let report = report.map_err(|e| e.to_string())?;
        let oracle = optimal_policy(task.reference(), task.reward(), &cfg).map_err(|e| e.to_string())?;
        let tv = max_row_tv(&report.final_policy, &oracle.policy);
        let g = hdpo_loss_grad(&oracle.policy, task.reference(), &data, &cfg).map_err(|e| e.to_string())?.norm();
        check!(tv < 1e-3, "alpha {alpha}: per-row TV {tv:e}");
        check!(g < 1e-8, "alpha {alpha}: gradient at the oracle {g:e}");
        check!(elapsed < Duration::from_secs(30), "alpha {alpha}: training took {elapsed:?}");
        detail.push(format!("{alpha}: tv {tv:.0e} grad {g:.0e} {:.2}s", elapsed.as_secs_f64()));
    }
    Ok(detail.join("; "))
}

fn entropy_rises_with_alpha() -> Outcome {
    let task = SyntheticTask::default_task(0).map_err(|e| e.to_string())?;
    let alphas = [0.8, 0.9, 0.95, 1.0, 1.1, 1.2];
    let beta = 1.0;
    let rows = entropy_vs_alpha(&task, &alphas, beta, &TrainConfig::default()).map_err(|e| e.to_string())?;
    let mut h = Vec::new();
    for row in rows {
        let p = row.outcome.map_err(|e| format!("alpha {}: {e}", row.alpha))?;
        h.push(p.mean_policy_entropy);
    }
    check!(h.windows(2).all(|w| w[1] > w[0]), "mean entropy not strictly increasing: {h:?}");
    let argmax = |alpha: f64| {
        let p = optimal_policy(task.reference(), task.reward(), &LossConfig::new(alpha, beta).unwrap()).unwrap().policy;
        (0..task.n_prompts()).map(|x| argmax(&p.row_probs(x))).collect::<Vec<_>>()
    };
    let first = argmax(alphas[0]);
    check!(alphas.iter().all(|&a| argmax(a) == first), "oracle argmax changes with alpha");
    Ok(format!("entropies {}", h.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(" < ")))
}

fn beta_tuning_is_not_equivalent() -> Outcome {
    let (alpha, beta) = (0.9, 0.01);
    let grid = Axis::linear(0.001, 0.1, 200).points();
    let base = SyntheticTask::default_task(0).map_err(|e| e.to_string())?;
    let uniform = base
        .with_reference(TabularPolicy::uniform(base.n_prompts(), base.n_completions()))
        .map_err(|e| e.to_string())?;
    let mut with_ab = grid.clone();
    with_ab.push(alpha * beta);
    let u = beta_equivalence_scan(&uniform, alpha, beta, &with_ab).map_err(|e| e.to_string())?;
    check!(u.min_tv < 1e-9, "uniform reference: min TV {:e}", u.min_tv);
    check!((u.argmin_beta - alpha * beta).abs() < 1e-15, "uniform reference: argmin at {}", u.argmin_beta);
    let d = beta_equivalence_scan(&SyntheticTask::designated_nonuniform(), alpha, beta, &grid).map_err(|e| e.to_string())?;
    check!(d.min_tv > 0.01, "designated instance: min TV {}", d.min_tv);
    Ok(format!(
        "uniform min TV {:.1e} at {}; designated min TV {:.4} at {:.5}",
        u.min_tv, u.argmin_beta, d.min_tv, d.argmin_beta
    ))
}

fn enumerated(n: usize, c: usize, k: usize) -> f64 {
    let (mut hit, mut total) = (0u64, 0u64);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize == k {
            total += 1;
            hit += u64::from(mask & ((1u32 << c) - 1) != 0);
        }
    }
    hit as f64 / total as f64
}

fn pass_at_k_is_exact() -> Outcome {
    let p = |n, c, k| pass_at_k(PassKInput::new(n, c, k).unwrap());
    let (mut cases, mut worst): (usize, f64) = (0, 0.0);
    for n in 1..=8 {
        for c in 0..=n {
            for k in 1..=n {
                worst = worst.max((p(n, c, k) - enumerated(n, c, k)).abs());
                cases += 1;
                check!(k == n || p(n, c, k + 1) >= p(n, c, k), "not monotone in k at ({n}, {c}, {k})");
                check!(c == n || p(n, c + 1, k) >= p(n, c, k), "not monotone in c at ({n}, {c}, {k})");
            }
        }
    }
    check!(worst <= 1e-15, "max deviation from enumeration {worst:e}");
    let v = p(5, 2, 2);
    check!((v - 0.7).abs() <= 1e-15, "pass@2 with n = 5, c = 2 is {v}");
    Ok(format!("{cases} cases, max deviation {worst:.1e}, (5, 2, 2) = {v}"))
}

fn diversity_metrics_behave() -> Outcome {
    let start = Instant::now();
    let r: Vec<u32> = vec![3, 1, 4, 1, 5, 9, 2, 6];
    let group: Vec<Generation> = (0..4).map(|_| Generation { tokens: r.clone(), log_prob: -2.0 }).collect();
    let gs = GenerationSet::new(vec![group.clone(), group]).map_err(|e| e.to_string())?;
    let sb = self_bleu(&gs).map_err(|e| e.to_string())?;
    check!(sb == 1.0, "Self-BLEU of identical responses is {sb}");
    // Seven distinct symbols over 8 responses of 8 tokens.
    let d1 = distinct_n(&gs, 1).map_err(|e| e.to_string())?;
    let expected = 7.0 / 64.0;
    check!((d1 - expected).abs() < 1e-15, "Distinct-1 {d1} vs {expected}");

    let lm = ToyLM::random(8, 1.0, 0.0, 7).map_err(|e| e.to_string())?;
    let mut means = Vec::new();
    for t in [0.25, 0.5, 0.75, 1.0] {
        let mut acc = 0.0;
        for seed in 0..3 {
            let gs = sample_toy_lm(&lm, t, 1000, 20, seed).map_err(|e| e.to_string())?;
            acc += normalized_entropy(&gs).map_err(|e| e.to_string())?;
        }
        means.push(acc / 3.0);
    }
    check!(means.windows(2).all(|w| w[1] >= w[0]), "normalized entropy not nondecreasing: {means:?}");
    let elapsed = start.elapsed();
    check!(elapsed < Duration::from_secs(30), "took {elapsed:?}");
    let shown: Vec<String> = means.iter().map(|v| format!("{v:.3}")).collect();
    Ok(format!(
        "Self-BLEU 1, Distinct-1 7/64, toy-LM entropy {} in {:.3}s",
        shown.join(" <= "),
        elapsed.as_secs_f64()
    ))
}

fn cli_runs_are_byte_identical() -> Outcome {
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut names: Vec<_> = std::fs::read_dir(&configs).map_err(|e| e.to_string())?.map(|e| e.unwrap().path()).collect();
    names.sort();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut files = 0;
    for path in &names {
        let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
        let stem = path.file_stem().unwrap().to_string_lossy().into_owned();
        let mut outputs = Vec::new();
        for run in ["a", "b"] {
            let mut cfg = ExperimentConfig::from_json(&text).map_err(|e| format!("{stem}: {e}"))?;
            let dir = tmp.path().join(format!("{stem}-{run}"));
            cfg.output_dir = Some(dir.clone());
            let manifest = run_config(&cfg).map_err(|e| format!("{stem}: {e}"))?;
            outputs.push((dir, manifest));
        }
        let (a, b) = (&outputs[0], &outputs[1]);
        for f in a.1.files.iter().filter(|f| f.path.ends_with(".csv")) {
            let left = std::fs::read(a.0.join(&f.path)).map_err(|e| e.to_string())?;
            let right = std::fs::read(b.0.join(&f.path)).map_err(|e| e.to_string())?;
            check!(left == right, "{stem}/{} differs between runs", f.path);
            files += 1;
        }
    }
    check!(files > 0, "no CSV outputs found");
    Ok(format!("{} configs, {files} CSV files identical across reruns", names.len()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("mode-seeking and mode-covering Gaussian fits", mode_seeking_and_covering_fits),
        ("D_alpha identities", d_alpha_identities),
        ("H-DPO loss reduces to DPO", loss_reduces_to_dpo),
        ("analytic gradient vs finite differences", gradient_matches_finite_differences),
        ("training recovers the closed-form optimum", training_recovers_the_optimum),
        ("entropy control through alpha", entropy_rises_with_alpha),
        ("beta tuning does not reproduce alpha", beta_tuning_is_not_equivalent),
        ("pass@k estimator", pass_at_k_is_exact),
        ("diversity metrics", diversity_metrics_behave),
        ("end-to-end determinism", cli_runs_are_byte_identical),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
