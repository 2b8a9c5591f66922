//! One function per experiment family. Each returns the files to write and
//! free-form metadata for the manifest; nothing touches the disk here.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::*;
use super::emit::{heatmap_svg, line_svg, Cell, Series, Table};
use super::split_seed;
use crate::distributions::{gmm_log_pdf, GaussianMixtureSpec};
use crate::error::{Error, Result};
use crate::gmm_fit::{alpha_sweep_fit, dalpha_heatmap, fit_gaussian_dalpha, FitConfig, HeatmapSpec};
use crate::metrics::{coverage_report, distinct_n, normalized_entropy, sample_toy_lm, self_bleu, GenerationSet, Problem, ToyLM, BLEU_MAX_ORDER};
use crate::preference::{max_row_tv, optimal_policy, LossConfig, TabularPolicy};
use crate::trainer::{beta_equivalence_scan, entropy_vs_alpha, mean_entropy, synthesize_dataset, train, SyntheticTask, TrainConfig};

#[derive(Debug, Default)]
pub(crate) struct Outputs {
    pub files: Vec<(String, Vec<u8>)>,
    pub metadata: BTreeMap<String, String>,
}

impl Outputs {
    fn csv(&mut self, name: &str, table: &Table) -> Result<()> {
        self.files.push((name.to_string(), table.to_csv_bytes()?));
        Ok(())
    }

    fn svg(&mut self, name: &str, svg: String) {
        self.files.push((name.to_string(), svg.into_bytes()));
    }

    fn note(&mut self, key: &str, value: impl Into<String>) {
        self.metadata.insert(key.to_string(), value.into());
    }
}

pub(crate) fn execute(experiment: &Experiment, seed: u64) -> Result<Outputs> {
    match experiment {
        Experiment::GmmFit(p) => gmm_fit(p),
        Experiment::GmmHeatmap(p) => gmm_heatmap(p),
        Experiment::Train(p) => train_run(p, seed),
        Experiment::EntropySweep(p) => entropy_sweep(p, seed),
        Experiment::BetaScan(p) => beta_scan(p, seed),
        Experiment::MetricsDemo(p) => metrics_demo(p, seed),
    }
}

fn fit_config(spec: &GaussianMixtureSpec, alpha: f64, p: &GmmFitParams) -> FitConfig {
    let mut cfg = FitConfig::for_spec(spec, alpha);
    if let Some(a) = p.mu_grid {
        cfg.mu_grid = a;
    }
    if let Some(a) = p.sigma_grid {
        cfg.sigma_grid = a;
    }
    cfg.quadrature = p.quadrature;
    cfg
}

fn gmm_fit(p: &GmmFitParams) -> Result<Outputs> {
    if p.alphas.is_empty() {
        return Err(Error::Config("gmm-fit needs at least one alpha".into()));
    }
    let spec = p.mixture.resolve()?;
    let cfg = fit_config(&spec, p.alphas[0], p);
    let fits = alpha_sweep_fit(&spec, &p.alphas, &cfg)?.into_iter().collect::<Result<Vec<_>>>()?;
    let mut table = Table::new([
        "alpha",
        "mu_hat",
        "sigma_hat",
        "d_alpha",
        "nearest_mean_distance",
        "converged",
        "iterations",
    ]);
    for f in &fits {
        let nearest = spec.means().map(|m| (m - f.g_hat.mu()).abs()).fold(f64::INFINITY, f64::min);
        table.push(vec![
            f.alpha.into(),
            f.g_hat.mu().into(),
            f.g_hat.sigma().into(),
            f.d_alpha_value.into(),
            nearest.into(),
            f.converged.into(),
            f.iterations.into(),
        ])?;
    }
    let mut out = Outputs::default();
    out.csv("fits.csv", &table)?;

    let (lo, hi) = (cfg.mu_grid.min, cfg.mu_grid.max);
    let xs: Vec<f64> = (0..=400).map(|i| lo + (hi - lo) * i as f64 / 400.0).collect();
    let mut series = vec![Series {
        label: p.mixture.label(),
        points: xs.iter().map(|&x| (x, gmm_log_pdf(&spec, x).exp())).collect(),
    }];
    for f in &fits {
        series.push(Series {
            label: format!("alpha={}", f.alpha),
            points: xs.iter().map(|&x| (x, f.g_hat.log_pdf(x).exp())).collect(),
        });
    }
    out.svg("densities.svg", line_svg(&series, "x", "density")?);
    out.note("mixture", p.mixture.label());
    Ok(out)
}

fn gmm_heatmap(p: &GmmHeatmapParams) -> Result<Outputs> {
    let spec = p.mixture.resolve()?;
    let mut cfg = FitConfig::for_spec(&spec, p.alpha);
    cfg.quadrature = p.quadrature;
    let fit = fit_gaussian_dalpha(&spec, &cfg)?;
    let mut hs = HeatmapSpec::covering(&spec);
    if let Some(a) = p.mu_range {
        hs.mu_range = a;
    }
    if let Some(a) = p.sigma_range {
        hs.sigma_range = a;
    }
    let hm = dalpha_heatmap(&spec, p.alpha, &hs, &fit, &p.quadrature)?;

    let mut out = Outputs::default();
    let mut fit_table = Table::new(["alpha", "mu_hat", "sigma_hat", "d_alpha", "converged"]);
    fit_table.push(vec![
        fit.alpha.into(),
        fit.g_hat.mu().into(),
        fit.g_hat.sigma().into(),
        fit.d_alpha_value.into(),
        fit.converged.into(),
    ])?;
    out.csv("fit.csv", &fit_table)?;
    let mut cells = Table::new(["mu", "sigma", "value"]);
    for (i, &sigma) in hm.sigma_axis.iter().enumerate() {
        for (j, &mu) in hm.mu_axis.iter().enumerate() {
            cells.push(vec![mu.into(), sigma.into(), hm.values.get(i, j).into()])?;
        }
    }
    out.csv("heatmap.csv", &cells)?;
    out.svg("heatmap.svg", heatmap_svg(&hm.values, &hm.mu_axis, &hm.sigma_axis, &hm.star)?);
    out.note("mixture", p.mixture.label());
    out.note("value", "min(3, ln D_alpha(cell) - ln D_alpha(fit))");
    Ok(out)
}

fn build_task(t: &TaskParams, seed: u64) -> Result<SyntheticTask> {
    let task = SyntheticTask::random(t.n_prompts, t.n_completions, split_seed(seed, "task"))?;
    match t.reference {
        ReferenceKind::Random => Ok(task),
        ReferenceKind::Uniform => task.with_reference(TabularPolicy::uniform(t.n_prompts, t.n_completions)),
    }
}

fn train_config(s: &TrainSettings, seed: u64) -> Result<TrainConfig> {
    let cfg = TrainConfig {
        learning_rate: s.learning_rate,
        max_steps: s.max_steps,
        grad_norm_tol: s.grad_norm_tol,
        seed: split_seed(seed, "dataset"),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn train_run(p: &TrainParams, seed: u64) -> Result<Outputs> {
    let task = build_task(&p.task, seed)?;
    let tc = train_config(&p.training, seed)?;
    let cfg = LossConfig::new(p.alpha, p.beta)?;
    let data = synthesize_dataset(&task, p.dataset, tc.seed)?;
    let report = train(&task, &data, &cfg, &tc)?;
    let oracle = optimal_policy(task.reference(), task.reward(), &cfg)?.policy;

    let mut out = Outputs::default();
    let mut curve = Table::new(["step", "loss"]);
    for (i, l) in report.loss_curve.iter().enumerate() {
        curve.push(vec![i.into(), (*l).into()])?;
    }
    out.csv("loss_curve.csv", &curve)?;

    let mut policy = Table::new(["prompt", "completion", "reward", "reference", "trained", "oracle"]);
    let (trained, optimal, reference) = (report.final_policy.probs(), oracle.probs(), task.reference().probs());
    for x in 0..task.n_prompts() {
        for y in 0..task.n_completions() {
            policy.push(vec![
                x.into(),
                y.into(),
                task.reward().get(x, y).into(),
                reference.get(x, y).into(),
                trained.get(x, y).into(),
                optimal.get(x, y).into(),
            ])?;
        }
    }
    out.csv("policy.csv", &policy)?;

    let mut summary = Table::new([
        "alpha",
        "beta",
        "steps_used",
        "converged",
        "final_grad_norm",
        "oracle_tv",
        "mean_entropy",
        "oracle_entropy",
    ]);
    summary.push(vec![
        p.alpha.into(),
        p.beta.into(),
        report.steps_used.into(),
        report.converged.into(),
        report.final_grad_norm.into(),
        max_row_tv(&report.final_policy, &oracle).into(),
        mean_entropy(&report.final_policy, task.prompt_weights()).into(),
        mean_entropy(&oracle, task.prompt_weights()).into(),
    ])?;
    out.csv("summary.csv", &summary)?;
    let stride = (report.loss_curve.len() / 2000).max(1);
    let points = report.loss_curve.iter().enumerate().step_by(stride).map(|(i, l)| (i as f64, *l)).collect();
    out.svg("loss_curve.svg", line_svg(&[Series { label: "loss".into(), points }], "step", "loss")?);
    out.note("prompt_weights", "uniform");
    Ok(out)
}

fn entropy_sweep(p: &EntropySweepParams, seed: u64) -> Result<Outputs> {
    let task = build_task(&p.task, seed)?;
    let tc = train_config(&p.training, seed)?;
    let rows = entropy_vs_alpha(&task, &p.alphas, p.beta, &tc)?;
    let mut table = Table::new([
        "alpha",
        "mean_policy_entropy",
        "oracle_entropy",
        "oracle_tv",
        "steps_used",
        "converged",
        "error",
    ]);
    let mut trained = Vec::new();
    let mut oracle = Vec::new();
    for row in &rows {
        match &row.outcome {
            Ok(pt) => {
                table.push(vec![
                    row.alpha.into(),
                    pt.mean_policy_entropy.into(),
                    pt.oracle_entropy.into(),
                    pt.oracle_tv.into(),
                    pt.steps_used.into(),
                    pt.converged.into(),
                    "".into(),
                ])?;
                trained.push((row.alpha, pt.mean_policy_entropy));
                oracle.push((row.alpha, pt.oracle_entropy));
            }
            Err(e) => table.push(vec![
                row.alpha.into(),
                f64::NAN.into(),
                f64::NAN.into(),
                f64::NAN.into(),
                Cell::Int(0),
                false.into(),
                e.to_string().into(),
            ])?,
        }
    }
    let mut out = Outputs::default();
    out.csv("entropy.csv", &table)?;
    let series = [
        Series {
            label: "trained".into(),
            points: trained,
        },
        Series {
            label: "oracle".into(),
            points: oracle,
        },
    ];
    if series[0].points.is_empty() {
        return Err(rows.into_iter().find_map(|r| r.outcome.err()).expect("at least one row"));
    }
    out.svg("entropy.svg", line_svg(&series, "alpha", "mean entropy")?);
    out.note("prompt_weights", "uniform");
    Ok(out)
}

fn beta_scan(p: &BetaScanParams, seed: u64) -> Result<Outputs> {
    let task = match p.instance {
        ScanInstance::Designated => SyntheticTask::designated_nonuniform(),
        ScanInstance::Task => build_task(&p.task, seed)?,
    };
    let mut grid = if p.beta_grid.count == 1 {
        vec![p.beta_grid.min]
    } else {
        if p.beta_grid.count == 0 || !(p.beta_grid.min < p.beta_grid.max) {
            return Err(Error::Config("beta_grid needs count >= 1 and min < max".into()));
        }
        p.beta_grid.points()
    };
    if p.include_alpha_beta {
        grid.push(p.alpha * p.beta);
        grid.sort_by(f64::total_cmp);
    }
    let scan = beta_equivalence_scan(&task, p.alpha, p.beta, &grid)?;
    let mut out = Outputs::default();
    let mut table = Table::new(["beta_prime", "tv"]);
    for &(b, tv) in &scan.per_beta {
        table.push(vec![b.into(), tv.into()])?;
    }
    out.csv("beta_scan.csv", &table)?;
    let mut summary = Table::new(["alpha", "beta", "min_tv", "argmin_beta"]);
    summary.push(vec![p.alpha.into(), p.beta.into(), scan.min_tv.into(), scan.argmin_beta.into()])?;
    out.csv("summary.csv", &summary)?;
    let series = [Series {
        label: "max row TV".into(),
        points: scan.per_beta.clone(),
    }];
    out.svg("beta_scan.svg", line_svg(&series, "beta'", "TV")?);
    Ok(out)
}

fn metrics_demo(p: &MetricsDemoParams, seed: u64) -> Result<Outputs> {
    if p.temperatures.is_empty() || p.n_prompts == 0 || p.responses_per_prompt == 0 {
        return Err(Error::Config("metrics-demo needs temperatures, prompts and responses".into()));
    }
    let lm = ToyLM::random(p.vocab_size, p.logit_scale, p.stop_bias, split_seed(seed, "toy-lm"))?;
    let mut targets = ChaCha8Rng::seed_from_u64(split_seed(seed, "targets"));
    let target: Vec<u32> = (0..p.n_prompts).map(|_| targets.gen_range(0..p.vocab_size as u32)).collect();

    let mut diversity = Table::new([
        "temperature",
        "normalized_entropy",
        "self_bleu",
        "distinct_1",
        "distinct_2",
        "mean_length",
    ]);
    let mut coverage = Table::new(["temperature", "k", "mean_pass_at_k"]);
    let mut entropy_curve = Vec::new();
    let mut bleu_curve = Vec::new();
    for (ti, &t) in p.temperatures.iter().enumerate() {
        let groups = (0..p.n_prompts)
            .map(|x| {
                let s = split_seed(seed, &format!("sample/{ti}/{x}"));
                Ok(sample_toy_lm(&lm, t, p.responses_per_prompt, p.max_len, s)?.prompts()[0].clone())
            })
            .collect::<Result<Vec<_>>>()?;
        let gs = GenerationSet::new(groups)?;
        let h = normalized_entropy(&gs)?;
        let sb = self_bleu(&gs)?;
        let total: usize = gs.responses().map(|g| g.tokens.len()).sum();
        let count = gs.responses().count();
        diversity.push(vec![
            t.into(),
            h.into(),
            sb.into(),
            distinct_n(&gs, 1)?.into(),
            distinct_n(&gs, 2)?.into(),
            (total as f64 / count as f64).into(),
        ])?;
        entropy_curve.push((t, h));
        bleu_curve.push((t, sb));

        // A response solves prompt x when it contains the prompt's target symbol.
        let problems: Vec<Problem> = gs
            .prompts()
            .iter()
            .zip(&target)
            .map(|(group, tok)| Problem {
                n: group.len(),
                c: group.iter().filter(|g| g.tokens.contains(tok)).count(),
            })
            .collect();
        for row in coverage_report(&problems, &p.ks)? {
            coverage.push(vec![t.into(), row.k.into(), row.mean_pass_at_k.into()])?;
        }
    }
    let mut out = Outputs::default();
    out.csv("diversity.csv", &diversity)?;
    out.csv("coverage.csv", &coverage)?;
    let series = [
        Series {
            label: "entropy".into(),
            points: entropy_curve,
        },
        Series {
            label: "self-bleu".into(),
            points: bleu_curve,
        },
    ];
    out.svg("diversity.svg", line_svg(&series, "temperature", "value")?);
    out.note(
        "self_bleu",
        format!("order {BLEU_MAX_ORDER}, uniform weights, clipped counts, add-one on zero higher-order matches, closest-length brevity penalty"),
    );
    out.note("normalized_entropy", "pooled mean of -log_prob / length");
    out.note("correct", "response contains the prompt's target symbol");
    Ok(out)
}
