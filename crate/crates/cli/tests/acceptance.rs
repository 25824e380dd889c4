//! Acceptance criteria 1-10. Each test prints one `acceptance` line with its
//! verdict and the measured quantities, then asserts the verdict.

use std::io::Write;
use std::time::Instant;

use elgm::error::Result as CoreResult;
use elgm::inference::{
    fit, hyper_summaries, inner_solve, joint_density, latent_summaries, mixture_moments, sample_posterior,
    FitConfig, FitResult, HyperDensity,
};
use elgm::io_sim::{
    cox_data, glmm_data, poisson_data, simulate_bernoulli_glmm, simulate_cox, simulate_gaussian_scale,
    simulate_poisson_aggregate,
};
use elgm::model::{
    bernoulli_glmm, conjugate_gaussian, cox_ph_partial, gaussian_scale, poisson_aggregate, LatentModel, Pattern,
    PriorSettings,
};
use elgm::par::with_threads;
use elgm::quadrature::gauss_hermite_rule;
use elgm::validation::{brute_force_posterior, compare_fit_to_oracle, Coord, GridSpec, OracleMarginal};
use elgm_cli::{cmd_bench, cmd_fit, ModelKind, RunConfig};
use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ChiSquared, ContinuousCDF};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Writes past the test harness's output capture so the verdicts show up in
/// a plain `cargo test` run.
fn report(criterion: &str, pass: bool, detail: String, start: Instant) {
    let line = format!(
        "acceptance criterion {criterion}: {} ({detail}; {:.2}s)\n",
        if pass { "PASS" } else { "FAIL" },
        start.elapsed().as_secs_f64()
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

fn normal_moment(p: u32) -> f64 {
    if p % 2 == 1 {
        0.0
    } else {
        (1..p).step_by(2).map(f64::from).product()
    }
}

#[test]
fn criterion_01_quadrature_exactness() {
    let start = Instant::now();
    let mut worst_abs: f64 = 0.0;
    let mut worst_rel: f64 = 0.0;
    let mut worst_at = (0, 0);
    for k in [1usize, 3, 5, 7, 11] {
        let rule = gauss_hermite_rule(k).unwrap();
        for p in 0..(2 * k as u32) {
            let q: f64 = rule
                .nodes()
                .iter()
                .zip(rule.weights())
                .map(|(z, w)| w * normal_pdf(*z, 0.0, 1.0) * z.powi(p as i32))
                .sum();
            let exact = normal_moment(p);
            let err = (q - exact).abs();
            if err > worst_abs {
                worst_abs = err;
                worst_at = (k, p);
            }
            worst_rel = worst_rel.max(err / exact.abs().max(1.0));
        }
    }
    let fast = start.elapsed().as_secs_f64() < 1.0;
    let pass = worst_abs <= 1e-8 && fast;
    report(
        "1",
        pass,
        format!(
            "max abs error {worst_abs:.3e} at k={} degree {}, max rel error {worst_rel:.3e}, tol 1e-8",
            worst_at.0, worst_at.1
        ),
        start,
    );
    assert!(pass);
}

#[test]
fn criterion_02_conjugate_exactness() {
    let start = Instant::now();
    let y = [1.0; 4];
    let model = conjugate_gaussian(&y).unwrap();
    let f = fit(&model, &FitConfig::default()).unwrap();
    // N(0.8, 0.2) from precision 1 + n and mean n*ybar / (1 + n)
    let mut density_err: f64 = 0.0;
    for i in 0..=400 {
        let w = -1.2 + 4.0 * i as f64 / 400.0;
        let got = joint_density(&f, &DVector::from_element(1, w)).unwrap();
        density_err = density_err.max((got - normal_pdf(w, 0.8, 0.2)).abs());
    }
    // y ~ N(0, I + 11'): det = 1 + n, y'(I + 11')^{-1} y = y'y - (1'y)^2 / (1 + n)
    let n = y.len() as f64;
    let (yy, sy) = (y.iter().map(|v| v * v).sum::<f64>(), y.iter().sum::<f64>());
    let analytic = -0.5 * n * LN_2PI - 0.5 * (1.0 + n).ln() - 0.5 * (yy - sy * sy / (1.0 + n));
    let evidence_err = (f.log_evidence - analytic).abs();
    let pass = density_err <= 1e-8 && evidence_err <= 1e-8 && start.elapsed().as_secs_f64() < 1.0;
    report(
        "2",
        pass,
        format!("density error {density_err:.3e}, log evidence {:.12} vs {analytic:.12}", f.log_evidence),
        start,
    );
    assert!(pass);
}

/// `log pi(w) = 5w - e^w`, one latent coordinate, no hyperparameters.
struct GammaKernel;

impl LatentModel for GammaKernel {
    fn latent_dim(&self) -> usize {
        1
    }
    fn hyper_dim(&self) -> usize {
        0
    }
    fn log_joint(&self, w: &DVector<f64>, _: &DVector<f64>) -> f64 {
        5.0 * w[0] - w[0].exp()
    }
    fn grad_w(&self, w: &DVector<f64>, _: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, 5.0 - w[0].exp())
    }
    fn hessian_w(&self, w: &DVector<f64>, _: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, w[0].exp())
    }
}

#[test]
fn criterion_03_gamma_constant() {
    let start = Instant::now();
    let sol = inner_solve(&GammaKernel, &DVector::zeros(0), None, 1e-10).unwrap();
    let stirling = ((2.0 * std::f64::consts::PI / 5.0).sqrt() * 5f64.powi(5) * (-5f64).exp()).ln();
    let gamma5 = 24f64.ln();
    let rel_to_gamma = (sol.log_laplace.exp() - 24.0).abs() / 24.0;
    let pass = (sol.log_laplace - stirling).abs() <= 1e-10
        && rel_to_gamma <= 0.017
        && start.elapsed().as_secs_f64() < 1.0;
    report(
        "3",
        pass,
        format!(
            "laplace {:.12} vs stirling {stirling:.12}, exp = {:.6} ({:.3}% below gamma(5) = 24, log 24 = {gamma5:.6})",
            sol.log_laplace,
            sol.log_laplace.exp(),
            100.0 * rel_to_gamma
        ),
        start,
    );
    assert!(pass);
}

/// Scale-model fit, oracle over the hyperparameter, and the sampled KS.
fn scale_ks(n: usize, k: usize, data_seed: u64, sample_seed: u64) -> CoreResult<(f64, FitResult, OracleMarginal)> {
    let y = simulate_gaussian_scale(data_seed, n, 1.0)?.table.real("y")?;
    let model = gaussian_scale(&y)?;
    let f = fit(&model, &FitConfig { k, ..FitConfig::default() })?;
    let grid = GridSpec::around_fit(&f, 10.0, &[8001])?;
    let oracle = brute_force_posterior(&model, &[Coord::Hyper(0)], &grid)?;
    let ks = compare_fit_to_oracle(&f, &oracle, 100_000, sample_seed)?[0].ks;
    Ok((ks, f, oracle.marginal(0)?))
}

/// Sup distance between the fitted continuous marginal and the oracle CDF,
/// with no sampling involved.
fn exact_cdf_distance(f: &FitResult, oracle: &OracleMarginal) -> f64 {
    let marginal = HyperDensity::new(f).unwrap().marginal(0).unwrap();
    marginal
        .xs
        .iter()
        .zip(&marginal.cdf)
        .map(|(&x, &c)| (c - oracle.cdf_at(x)).abs())
        .fold(0.0, f64::max)
}

#[test]
fn criterion_04a_oracle_ks_at_n200() {
    let start = Instant::now();
    let (ks, _, _) = scale_ks(200, 7, 1, 1).unwrap();
    let pass = ks <= 0.05 && start.elapsed().as_secs_f64() < 60.0;
    report("4a", pass, format!("KS {ks:.5} at n=200, k=7, B=1e5 (tol 0.05)"), start);
    assert!(pass);
}

#[test]
fn criterion_04b_ks_shrinks_with_n() {
    let start = Instant::now();
    let mut smaller = 0;
    let mut exact_smaller = 0;
    let mut lines = Vec::new();
    for seed in 1..=10u64 {
        let (ks50, f50, o50) = scale_ks(50, 7, seed, seed).unwrap();
        let (ks500, f500, o500) = scale_ks(500, 7, seed, seed).unwrap();
        let (e50, e500) = (exact_cdf_distance(&f50, &o50), exact_cdf_distance(&f500, &o500));
        smaller += usize::from(ks500 < ks50);
        exact_smaller += usize::from(e500 < e50);
        lines.push(format!("{ks50:.4}/{ks500:.4}"));
    }
    let pass = smaller >= 8 && start.elapsed().as_secs_f64() < 60.0;
    report(
        "4b",
        pass,
        format!(
            "sampled KS smaller at n=500 in {smaller}/10 seeds (need 8), n50/n500 = [{}]; \
             sampling-free CDF distance smaller at n=500 in {exact_smaller}/10",
            lines.join(" ")
        ),
        start,
    );
    assert!(pass);
}

#[test]
fn criterion_05_poisson_aggregate_oracle() {
    let start = Instant::now();
    let sim = simulate_poisson_aggregate(1, 30, 2, 3, &[], 1.0).unwrap();
    let data = poisson_data(&sim.table, false).unwrap();
    assert!(data.cells.iter().all(|c| c.len() == 2));
    let model = poisson_aggregate(&data, PriorSettings::default()).unwrap();
    assert!(model.latent_dim() + model.hyper_dim() <= 4);
    let f = fit(&model, &FitConfig { k: 7, ..FitConfig::default() }).unwrap();
    let grid = GridSpec::around_fit(&f, 9.0, &[120, 36, 36, 36]).unwrap();
    let oracle = brute_force_posterior(&model, &[Coord::Latent(0)], &grid).unwrap();
    let check = compare_fit_to_oracle(&f, &oracle, 100_000, 5).unwrap()[0];
    let pass = check.ks <= 0.05 && start.elapsed().as_secs_f64() < 120.0;
    report(
        "5",
        pass,
        format!(
            "KS {:.5} for cell 0 (tol 0.05), means {:.5} vs oracle {:.5}, log evidence {:.6} vs {:.6}",
            check.ks, check.fit_mean, check.oracle_mean, f.log_evidence, oracle.log_normalizer
        ),
        start,
    );
    assert!(pass);
}

#[test]
fn criterion_06_cox_dense_hessian() {
    let start = Instant::now();
    let beta_true = [0.5, -0.5];
    let sim = simulate_cox(1, 100, &beta_true, 0.0, 0, 0.2).unwrap();
    let model = cox_ph_partial(&cox_data(&sim.table, false).unwrap(), PriorSettings::default()).unwrap();
    let lik = model.likelihood();
    let n = lik.n_predictors();
    let eta = DVector::from_fn(n, |i, _| 0.3 * ((i * 13 % 7) as f64 - 3.0) / 3.0);
    let analytic = lik.neg_hessian(&eta, &[]).to_dense(n);
    let mut fd = DMatrix::zeros(n, n);
    for j in 0..n {
        let h = 1e-5 * eta[j].abs().max(1.0);
        let (mut up, mut down) = (eta.clone(), eta.clone());
        up[j] += h;
        down[j] -= h;
        let col = (lik.grad(&down, &[]) - lik.grad(&up, &[])) / (2.0 * h);
        fd.set_column(j, &col);
    }
    let rel = (&analytic - &fd).amax() / analytic.amax();
    let dense = Pattern::of_matrix(&analytic).nnz() == n * n;

    let mut covered = 0;
    for seed in 1..=10u64 {
        let sim = simulate_cox(seed, 100, &beta_true, 0.0, 0, 0.2).unwrap();
        let model = cox_ph_partial(&cox_data(&sim.table, false).unwrap(), PriorSettings::default()).unwrap();
        let f = fit(&model, &FitConfig::default()).unwrap();
        let s = latent_summaries(&f);
        covered += usize::from((0..2).all(|j| (s[j].mean - beta_true[j]).abs() <= 3.0 * s[j].sd.unwrap()));
    }
    let pass = rel <= 1e-5 && dense && covered >= 9 && start.elapsed().as_secs_f64() < 120.0;
    report(
        "6",
        pass,
        format!("C_eta vs differences rel {rel:.3e} (tol 1e-5), dense {dense}, beta within 3 sd in {covered}/10 (need 9)"),
        start,
    );
    assert!(pass);
}

#[test]
fn criterion_07_glmm_structure() {
    let start = Instant::now();
    let truth = [0.5, 0.8];
    let mut converged = 0;
    let mut pattern_ok = 0;
    let mut within = 0;
    for seed in 1..=10u64 {
        let sim = simulate_bernoulli_glmm(seed, 5000, 10, 30, &[0.0, 0.5], truth[0], truth[1]).unwrap();
        let model = bernoulli_glmm(&glmm_data(&sim.table).unwrap(), PriorSettings::default()).unwrap();
        let f = fit(&model, &FitConfig { k: 3, ..FitConfig::default() }).unwrap();
        converged += usize::from(f.outer.converged);
        let best = &f.nodes[f.best_node()];
        let h = model.hessian_w(&best.mode, &best.theta);
        pattern_ok += usize::from(&Pattern::of_matrix(&h) == model.predicted_pattern());
        let hs = hyper_summaries(&f).unwrap();
        within += usize::from(
            (0..2).all(|j| (hs[j].natural.mean - truth[j]).abs() <= 3.0 * hs[j].natural.sd.unwrap()),
        );
    }
    let pass = converged == 10 && pattern_ok == 10 && within >= 8 && start.elapsed().as_secs_f64() < 300.0;
    report(
        "7",
        pass,
        format!(
            "converged {converged}/10, pattern exact {pattern_ok}/10, sigmas within 3 sd {within}/10 (need 8)"
        ),
        start,
    );
    assert!(pass);
}

#[test]
fn criterion_08_scaling_smoke() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let config = RunConfig {
        model: Some(ModelKind::BernoulliGlmm),
        bench_n: vec![1_000, 10_000, 100_000],
        bench_reps: 3,
        out: dir.path().to_path_buf(),
        ..RunConfig::default()
    };
    let rows = cmd_bench(&config).unwrap();
    let ratio = rows[2].mean / rows[0].mean;
    let table: Vec<String> = rows.iter().map(|r| format!("n={} {:.3}s ({:.3})", r.n, r.mean, r.sd)).collect();
    let pass = rows.len() == 3 && ratio < 500.0 && start.elapsed().as_secs_f64() < 600.0;
    report("8", pass, format!("{}; ratio 1e5/1e3 = {ratio:.1} (tol 500)", table.join(", ")), start);
    assert!(pass);
}

#[test]
fn criterion_09_sampler_correctness() {
    let start = Instant::now();
    let sim = simulate_bernoulli_glmm(1, 400, 2, 4, &[0.0, 0.5], 0.5, 0.8).unwrap();
    let model = bernoulli_glmm(&glmm_data(&sim.table).unwrap(), PriorSettings::default()).unwrap();
    let f = fit(&model, &FitConfig::default()).unwrap();
    let b = 100_000;
    let batch = sample_posterior(&f, b, 3).unwrap();

    let lambda = f.lambda();
    let mut counts = vec![0usize; lambda.len()];
    for &c in &batch.node_choice {
        counts[c] += 1;
    }
    let chi2: f64 = counts
        .iter()
        .zip(lambda)
        .map(|(&o, &l)| (o as f64 - b as f64 * l).powi(2) / (b as f64 * l))
        .sum();
    let p_value = 1.0 - ChiSquared::new((lambda.len() - 1) as f64).unwrap().cdf(chi2);

    let (mean, cov) = mixture_moments(&f);
    let m = mean.len();
    let bf = b as f64;
    let sample_mean = batch.draws.iter().fold(DVector::zeros(m), |acc, d| acc + d) / bf;
    let mut worst: f64 = 0.0;
    for i in 0..m {
        worst = worst.max((sample_mean[i] - mean[i]).abs() / (cov[(i, i)] / bf).sqrt());
        for j in 0..=i {
            let prods: Vec<f64> = batch.draws.iter().map(|d| (d[i] - mean[i]) * (d[j] - mean[j])).collect();
            let avg = prods.iter().sum::<f64>() / bf;
            let sd = (prods.iter().map(|p| (p - avg).powi(2)).sum::<f64>() / (bf - 1.0)).sqrt();
            worst = worst.max((avg - cov[(i, j)]).abs() / (sd / bf.sqrt()));
        }
    }
    let pass = p_value > 0.001 && worst <= 3.0 && start.elapsed().as_secs_f64() < 60.0;
    report(
        "9",
        pass,
        format!(
            "node chi-square p = {p_value:.4} over {} nodes, worst moment deviation {worst:.2} MC sd (tol 3)",
            lambda.len()
        ),
        start,
    );
    assert!(pass);
}

#[test]
fn criterion_10_reproducibility() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, threads: usize| {
        let config = RunConfig {
            model: Some(ModelKind::BernoulliGlmm),
            simulate: Some("n=3000,d1=6,d2=18".into()),
            samples: 5000,
            seed: 21,
            threads,
            out: dir.path().join(name),
            ..RunConfig::default()
        };
        with_threads(threads, || cmd_fit(&config).unwrap())
    };
    let a = run("a", 1);
    let _b = run("b", 1);
    let c = run("c", 4);
    let same_files = ["manifest.toml", "summaries.csv", "samples.csv"]
        .iter()
        .all(|f| std::fs::read(dir.path().join("a").join(f)).unwrap() == std::fs::read(dir.path().join("b").join(f)).unwrap());

    let mut dev: f64 = (a.fit.log_evidence - c.fit.log_evidence).abs();
    dev = dev.max((&a.fit.theta_hat - &c.fit.theta_hat).amax());
    for (x, y) in a.fit.nodes.iter().zip(&c.fit.nodes) {
        dev = dev.max((&x.mode - &y.mode).amax()).max((x.log_laplace - y.log_laplace).abs());
    }
    for (x, y) in a.fit.lambda().iter().zip(c.fit.lambda()) {
        dev = dev.max((x - y).abs());
    }
    let (sa, sc) = (a.samples.unwrap(), c.samples.unwrap());
    for (x, y) in sa.draws.iter().zip(&sc.draws) {
        dev = dev.max((x - y).amax());
    }
    let pass = same_files && dev <= 1e-12 && sa.node_choice == sc.node_choice;
    report(
        "10",
        pass,
        format!("manifest/summaries/samples identical {same_files}, 1 vs 4 threads max deviation {dev:.1e} (tol 1e-12)"),
        start,
    );
    assert!(pass);
}
