//! Acceptance criteria, one printed PASS/FAIL line each.
//!
//! `cargo test --test acceptance` runs all eight; `cargo test --test
//! acceptance -- 3 6` runs a subset. `HEMOJOINT_ACCEPTANCE_SCALE=full`
//! runs the coverage study at 200 patients per cohort with longer chains.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Exp, Gamma, InverseGamma, StudentsT};

use hemojoint::cli::{cmd_fit, cmd_predict, predict_all, with_threads};
use hemojoint::cohort::{build_event_grid, index_conditioning, write_cohort, Cohort, HospitalizationRecord, PatientRecord};
use hemojoint::config::{Hyperparameters, ModelConfig, RunConfig};
use hemojoint::evaluate::{
    auc, auc_bootstrap_ci, calibration_bins, median, score_patient, standard_windows, PatientScores, ScoredLabel, Window,
};
use hemojoint::likelihood::GlobalParams;
use hemojoint::model::{HazardBlock, ModelContext};
use hemojoint::predictor::{default_truth, simulate_forward, synth_cohort, truncate_history, PredictionConfig, SynthConfig};
use hemojoint::sampler::conjugate::{
    draw_gamma, eta_posterior, gamma0_posterior, gamma_k_posterior, inv_gamma_posterior, rho_posterior, sigma2_gamma_posterior,
    tau2_0_posterior, tau2_posterior, vector_variance_posterior, zeta_posterior, GaussianPosterior, InvGammaPosterior,
};
use hemojoint::sampler::{fit, ChainConfig, PosteriorSample};
use hemojoint::trajectory::{true_hb_at, HospBasisConfig, PatientEffects};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn full_scale() -> bool {
    std::env::var("HEMOJOINT_ACCEPTANCE_SCALE").is_ok_and(|v| v == "full")
}

/// Kolmogorov–Smirnov statistic of `xs` against `cdf`.
fn ks(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, x)| {
            let f = cdf(*x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic KS critical value at level 0.01.
fn ks_critical(n: usize) -> f64 {
    1.6276 / (n as f64).sqrt()
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn small_ctx() -> ModelContext {
    ModelContext::new(&ModelConfig { p: 4, b: 2, grid_size: 128, ..ModelConfig::default() }).unwrap()
}

// ---------------------------------------------------------------------------
// 1. conjugate updates against brute-force grid posteriors

/// Mean and variance of a density known up to a constant, by trapezoid
/// quadrature; the second pass zooms in on where the first found the mass.
fn grid_moments_1d(logp: &dyn Fn(f64) -> f64, lo: f64, hi: f64) -> (f64, f64) {
    let pass = |lo: f64, hi: f64, n: usize| {
        let h = (hi - lo) / n as f64;
        let xs: Vec<f64> = (0..=n).map(|i| lo + h * i as f64).collect();
        let lp: Vec<f64> = xs.iter().map(|x| logp(*x)).collect();
        let top = lp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = lp.iter().enumerate().map(|(i, l)| if i == 0 || i == n { 0.5 } else { 1.0 } * (l - top).exp()).collect();
        let z: f64 = w.iter().sum();
        let m = xs.iter().zip(&w).map(|(x, w)| x * w).sum::<f64>() / z;
        let v = xs.iter().zip(&w).map(|(x, w)| (x - m).powi(2) * w).sum::<f64>() / z;
        (m, v)
    };
    let (m, v) = pass(lo, hi, 200_000);
    let sd = v.sqrt();
    pass((m - 14.0 * sd).max(lo), (m + 14.0 * sd).min(hi), 200_000)
}

/// Moments of a positive variable: quadrature in `u = ln x`.
fn grid_moments_positive(logp: &dyn Fn(f64) -> f64) -> (f64, f64) {
    let in_u = |u: f64| logp(u.exp()) + u;
    let (mu, vu) = grid_moments_1d(&in_u, -25.0, 25.0);
    let (lo, hi) = (mu - 16.0 * vu.sqrt(), mu + 16.0 * vu.sqrt());
    let n = 400_000;
    let h = (hi - lo) / n as f64;
    let us: Vec<f64> = (0..=n).map(|i| lo + h * i as f64).collect();
    let lp: Vec<f64> = us.iter().map(|u| in_u(*u)).collect();
    let top = lp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = lp.iter().map(|l| (l - top).exp()).collect();
    let z: f64 = w.iter().sum();
    let m = us.iter().zip(&w).map(|(u, w)| u.exp() * w).sum::<f64>() / z;
    let v = us.iter().zip(&w).map(|(u, w)| (u.exp() - m).powi(2) * w).sum::<f64>() / z;
    (m, v)
}

/// Marginal moments of both coordinates of a 2-D density.
fn grid_moments_2d(logp: &dyn Fn(f64, f64) -> f64, center: [f64; 2], half: [f64; 2]) -> [(f64, f64); 2] {
    let pass = |c: [f64; 2], hw: [f64; 2], n: usize| {
        let mut pts = Vec::with_capacity((n + 1) * (n + 1));
        for i in 0..=n {
            for j in 0..=n {
                let x = c[0] - hw[0] + 2.0 * hw[0] * i as f64 / n as f64;
                let y = c[1] - hw[1] + 2.0 * hw[1] * j as f64 / n as f64;
                pts.push((x, y, logp(x, y)));
            }
        }
        let top = pts.iter().map(|p| p.2).fold(f64::NEG_INFINITY, f64::max);
        let (mut z, mut mx, mut my) = (0.0, 0.0, 0.0);
        for (x, y, l) in &pts {
            let w = (l - top).exp();
            z += w;
            mx += w * x;
            my += w * y;
        }
        let (mx, my) = (mx / z, my / z);
        let (mut vx, mut vy) = (0.0, 0.0);
        for (x, y, l) in &pts {
            let w = (l - top).exp();
            vx += w * (x - mx).powi(2);
            vy += w * (y - my).powi(2);
        }
        [(mx, vx / z), (my, vy / z)]
    };
    let first = pass(center, half, 400);
    pass([first[0].0, first[1].0], [12.0 * first[0].1.sqrt(), 12.0 * first[1].1.sqrt()], 800)
}

fn sample_moments(draws: &[f64]) -> (f64, f64) {
    let n = draws.len() as f64;
    let m = draws.iter().sum::<f64>() / n;
    (m, draws.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
}

const DRAWS: usize = 200_000;

/// Relative discrepancy of sampled moments from the grid moments: the mean
/// against max(|mean|, sd), the variance against itself.
fn discrepancy(sampled: (f64, f64), grid: (f64, f64)) -> f64 {
    let mean_err = (sampled.0 - grid.0).abs() / grid.0.abs().max(grid.1.sqrt());
    let var_err = (sampled.1 - grid.1).abs() / grid.1;
    mean_err.max(var_err)
}

fn ig_draws(post: &InvGammaPosterior, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..DRAWS).map(|_| post.draw(rng).unwrap()).collect()
}

fn gaussian_draws(post: &GaussianPosterior, rng: &mut ChaCha8Rng) -> [Vec<f64>; 2] {
    let mut out = [Vec::with_capacity(DRAWS), Vec::with_capacity(DRAWS)];
    for _ in 0..DRAWS {
        let d = post.draw(rng).unwrap();
        out[0].push(d[0]);
        out[1].push(d[1]);
    }
    out
}

fn ig_logprior(x: f64, a: f64, b: f64) -> f64 {
    -(a + 1.0) * x.ln() - b / x
}

fn zero_mean_normal_ll(x: f64, values: &[f64], scale: &[f64]) -> f64 {
    values
        .iter()
        .zip(scale)
        .map(|(v, s)| -0.5 * (s * x).ln() - v * v / (2.0 * s * x))
        .sum()
}

fn criterion_conjugacy() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut results: Vec<(&str, f64)> = Vec::new();

    // residual-type fixtures
    let res = |rng: &mut ChaCha8Rng, n: usize, sd: f64| (0..n).map(|_| sd * normal(rng)).collect::<Vec<f64>>();
    let (a, b) = (1.0, 1.0);

    let r = res(&mut rng, 30, 1.1);
    let ones = vec![1.0; r.len()];
    let post = tau2_0_posterior(a, b, &r);
    let grid = grid_moments_positive(&|x| ig_logprior(x, a, b) + zero_mean_normal_ll(x, &r, &ones));
    results.push(("tau2_0", discrepancy(sample_moments(&ig_draws(&post, &mut rng)), grid)));

    let r = res(&mut rng, 40, 0.6);
    let ones = vec![1.0; r.len()];
    let post = tau2_posterior(a, b, &r);
    let grid = grid_moments_positive(&|x| ig_logprior(x, a, b) + zero_mean_normal_ll(x, &r, &ones));
    results.push(("tau2", discrepancy(sample_moments(&ig_draws(&post, &mut rng)), grid)));

    for (name, n, sd) in [("sigma2_gamma0", 26, 2.0), ("sigma2_eta", 24, 1.5), ("sigma2_zeta", 24, 0.8), ("nu2", 24, 0.5)] {
        let v = res(&mut rng, n, sd);
        let ones = vec![1.0; n];
        let post = vector_variance_posterior(a, b, &v);
        let grid = grid_moments_positive(&|x| ig_logprior(x, a, b) + zero_mean_normal_ll(x, &v, &ones));
        results.push((name, discrepancy(sample_moments(&ig_draws(&post, &mut rng)), grid)));
    }

    let pi: Vec<f64> = (1..=25).map(|k| 1.0 / (k as f64 * k as f64 * 10.0)).collect();
    let gam: Vec<f64> = pi.iter().map(|p| 0.8 * p.sqrt() * normal(&mut rng)).collect();
    let post = sigma2_gamma_posterior(a, b, &gam, &pi);
    let grid = grid_moments_positive(&|x| ig_logprior(x, a, b) + zero_mean_normal_ll(x, &gam, &pi));
    results.push(("sigma2_gamma", discrepancy(sample_moments(&ig_draws(&post, &mut rng)), grid)));

    let r = res(&mut rng, 30, 0.7);
    let ss: f64 = r.iter().map(|x| x * x).sum();
    let ones = vec![1.0; r.len()];
    let post = inv_gamma_posterior(a, b, r.len() as f64, ss);
    let grid = grid_moments_positive(&|x| ig_logprior(x, a, b) + zero_mean_normal_ll(x, &r, &ones));
    results.push(("omega2", discrepancy(sample_moments(&ig_draws(&post, &mut rng)), grid)));

    let (al, bl) = (10.0, 10.0);
    let r = res(&mut rng, 30, 0.45);
    let ss: f64 = r.iter().map(|x| x * x).sum();
    let post = inv_gamma_posterior(al, bl, r.len() as f64, ss);
    let grid = grid_moments_positive(&|x| ig_logprior(x, al, bl) + zero_mean_normal_ll(x, &r, &ones));
    results.push(("sigma2_lambda", discrepancy(sample_moments(&ig_draws(&post, &mut rng)), grid)));

    // frailty
    let (ar, br, events, exposure) = (2.0, 1.5, 7u32, 3.2);
    let (shape, rate) = rho_posterior(ar, br, events, exposure);
    let draws: Vec<f64> = (0..DRAWS).map(|_| draw_gamma(&mut rng, shape, rate).unwrap()).collect();
    let grid = grid_moments_positive(&|x| (ar - 1.0) * x.ln() - br * x + events as f64 * (x * exposure).ln() - x * exposure);
    results.push(("rho", discrepancy(sample_moments(&draws), grid)));

    // gamma_k
    let (pk, s2g, t2): (f64, f64, f64) = (0.04, 1.3, 0.5);
    let alpha_k: Vec<f64> = (0..15).map(|_| pk.sqrt() * 1.7 + t2.sqrt() * normal(&mut rng)).collect();
    let (m, v) = gamma_k_posterior(&alpha_k, pk, s2g, t2);
    let draws: Vec<f64> = (0..DRAWS).map(|_| m + v.sqrt() * normal(&mut rng)).collect();
    let lp = |g: f64| {
        -g * g / (2.0 * pk * s2g) - alpha_k.iter().map(|x| (x - pk.sqrt() * g).powi(2)).sum::<f64>() / (2.0 * t2)
    };
    let grid = grid_moments_1d(&lp, -60.0, 60.0);
    results.push(("gamma_k", discrepancy(sample_moments(&draws), grid)));

    // two-dimensional Gaussian blocks
    let rows: Vec<[f64; 2]> = (0..15).map(|_| [1.0, rng.random::<f64>()]).collect();
    let (s2g0, t20): (f64, f64) = (1.5, 0.8);
    let alpha0: Vec<f64> = rows.iter().map(|z| 2.0 * z[0] - 1.0 * z[1] + t20.sqrt() * normal(&mut rng)).collect();
    let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
    let post = gamma0_posterior(&refs, &alpha0, 2, s2g0, t20);
    let draws = gaussian_draws(&post, &mut rng);
    let lp = |x: f64, y: f64| {
        -(x * x + y * y) / (2.0 * s2g0)
            - rows.iter().zip(&alpha0).map(|(z, a)| (a - z[0] * x - z[1] * y).powi(2)).sum::<f64>() / (2.0 * t20)
    };
    let grid = grid_moments_2d(&lp, [0.0, 0.0], [10.0, 10.0]);
    let d = (0..2).map(|c| discrepancy(sample_moments(&draws[c]), grid[c])).fold(0.0, f64::max);
    results.push(("gamma0", d));

    let q: Vec<[f64; 2]> = (0..12).map(|_| [1.0, rng.random::<f64>() * 2.0 - 1.0]).collect();
    let (s2z, s2l): (f64, f64) = (2.0, 0.3);
    let loglam: Vec<f64> = q.iter().map(|r| -2.0 * r[0] + 0.7 * r[1] + s2l.sqrt() * normal(&mut rng)).collect();
    let refs: Vec<&[f64]> = q.iter().map(|r| r.as_slice()).collect();
    let post = zeta_posterior(&refs, &loglam, 2, s2z, s2l);
    let draws = gaussian_draws(&post, &mut rng);
    let lp = |x: f64, y: f64| {
        -(x * x + y * y) / (2.0 * s2z) - q.iter().zip(&loglam).map(|(r, l)| (l - r[0] * x - r[1] * y).powi(2)).sum::<f64>() / (2.0 * s2l)
    };
    let grid = grid_moments_2d(&lp, [0.0, 0.0], [10.0, 10.0]);
    let d = (0..2).map(|c| discrepancy(sample_moments(&draws[c]), grid[c])).fold(0.0, f64::max);
    results.push(("zeta", d));

    // eta with one hospital-effect column: beta ~ N(eta_0 + s * u * eta_1, omega2)
    let slope = [0.6];
    let (s2e, om): (f64, f64) = (2.0, 0.4);
    let stays: Vec<(f64, [f64; 1])> = (0..14)
        .map(|_| {
            let u: f64 = rng.random::<f64>() * 0.5 + 0.2;
            (u, [-2.5 + slope[0] * u * 1.5 + om.sqrt() * normal(&mut rng)])
        })
        .collect();
    let refs: Vec<(f64, &[f64])> = stays.iter().map(|(u, b)| (*u, b.as_slice())).collect();
    let post = eta_posterior(&refs, &slope, s2e, om);
    let draws = gaussian_draws(&post, &mut rng);
    let lp = |x: f64, y: f64| {
        -(x * x + y * y) / (2.0 * s2e) - stays.iter().map(|(u, b)| (b[0] - x - slope[0] * u * y).powi(2)).sum::<f64>() / (2.0 * om)
    };
    let grid = grid_moments_2d(&lp, [0.0, 0.0], [10.0, 10.0]);
    let d = (0..2).map(|c| discrepancy(sample_moments(&draws[c]), grid[c])).fold(0.0, f64::max);
    results.push(("eta", d));

    let worst = results.iter().cloned().fold(("", 0.0), |w, r| if r.1 > w.1 { r } else { w });
    let pass = results.iter().all(|r| r.1 < 0.02);
    outcome(pass, format!("{} updates, worst relative error {:.4} ({}) < 0.02", results.len(), worst.1, worst.0))
}

// ---------------------------------------------------------------------------
// 2. prior recovery on an empty cohort

/// Every scalar of a sample, keyed as `name`, `name[i]` or `name[a][i]`.
fn flatten(p: &GlobalParams) -> BTreeMap<String, f64> {
    let v = serde_json::to_value(p).unwrap();
    let mut out = BTreeMap::new();
    fn walk(prefix: String, v: &serde_json::Value, out: &mut BTreeMap<String, f64>) {
        match v {
            serde_json::Value::Number(n) => {
                out.insert(prefix, n.as_f64().unwrap());
            }
            serde_json::Value::Array(a) => {
                for (i, x) in a.iter().enumerate() {
                    walk(format!("{prefix}[{i}]"), x, out);
                }
            }
            _ => {}
        }
    }
    for (k, x) in v.as_object().unwrap() {
        walk(k.clone(), x, &mut out);
    }
    out
}

enum Prior {
    InvGamma(f64, f64),
    T(f64),
    Gamma(f64, f64),
}

fn prior_of(name: &str, h: &Hyperparameters, ctx: &ModelContext) -> Prior {
    let base = name.split('[').next().unwrap();
    let idx: Vec<usize> = name.split('[').skip(1).map(|s| s.trim_end_matches(']').parse().unwrap()).collect();
    // half-normal mixing over an IG(a, b) variance gives a t with 2a degrees
    // of freedom and scale sqrt(b / a)
    match base {
        "sigma2" => Prior::InvGamma(h.a_sigma, h.b_sigma),
        "tau2_0" => Prior::InvGamma(h.a_tau0, h.b_tau0),
        "tau2" => Prior::InvGamma(h.a_tau, h.b_tau),
        "sigma2_gamma0" => Prior::InvGamma(h.a_gamma0, h.b_gamma0),
        "sigma2_gamma" => Prior::InvGamma(h.a_sigma_gamma, h.b_sigma_gamma),
        "omega2" => Prior::InvGamma(h.a_omega, h.b_omega),
        "sigma2_eta" => Prior::InvGamma(h.a_eta, h.b_eta),
        "sigma2_zeta" => Prior::InvGamma(h.a_zeta, h.b_zeta),
        "sigma2_lambda" => Prior::InvGamma(h.a_lambda, h.b_lambda),
        "nu2" => Prior::InvGamma(h.a_nu, h.b_nu),
        "gamma0" => Prior::T((h.b_gamma0 / h.a_gamma0).sqrt()),
        "gamma" => Prior::T((ctx.eig.eigenvalue(idx[0] + 1) * h.b_sigma_gamma / h.a_sigma_gamma).sqrt()),
        "eta" => Prior::T((h.b_eta / h.a_eta).sqrt()),
        "zeta" => Prior::T((h.b_zeta / h.a_zeta).sqrt()),
        "psi" => Prior::T((h.b_nu / h.a_nu).sqrt()),
        "alpha_rho" => Prior::Gamma(h.a_alpha[idx[0]], h.b_alpha[idx[0]]),
        "beta_rho" => Prior::Gamma(h.a_beta[idx[0]], h.b_beta[idx[0]]),
        other => panic!("no prior for {other}"),
    }
}

fn criterion_prior_recovery() -> Outcome {
    let ctx = small_ctx();
    let h = Hyperparameters::default();
    let chain = ChainConfig { n_iter: 5_000 + 5_000 * 200, n_burnin: 5_000, thin: 200, seed: 202, ..ChainConfig::default() };
    let out = fit(&Cohort::default(), &ctx, &h, &chain).unwrap();
    assert_eq!(out.samples.len(), 5_000);
    let flat: Vec<BTreeMap<String, f64>> = out.samples.iter().map(|s| flatten(&s.params)).collect();
    let crit = ks_critical(flat.len());
    let n = flat[0].len();
    // a hundred-odd tests at 0.01 reject one or two times by chance even for
    // exact draws, so the verdict holds the whole family to level 0.01
    let bonferroni = ((0.01 / n as f64 / 2.0).ln() / -2.0).sqrt() / (flat.len() as f64).sqrt();
    let mut worst = (String::new(), 0.0);
    let mut flagged = Vec::new();
    for name in flat[0].keys() {
        let xs: Vec<f64> = flat.iter().map(|f| f[name]).collect();
        let d = match prior_of(name, &h, &ctx) {
            Prior::InvGamma(a, b) => {
                let dist = InverseGamma::new(a, b).unwrap();
                ks(xs, |x| dist.cdf(x))
            }
            Prior::T(scale) => {
                let dist = StudentsT::new(0.0, scale, 2.0 * h.a_nu).unwrap();
                ks(xs, |x| dist.cdf(x))
            }
            Prior::Gamma(a, rate) => {
                let dist = Gamma::new(a, rate).unwrap();
                ks(xs, |x| dist.cdf(x))
            }
        };
        if d > worst.1 {
            worst = (name.clone(), d);
        }
        if d >= crit {
            flagged.push(format!("{name} D={d:.4}"));
        }
    }
    outcome(
        worst.1 < bonferroni,
        format!(
            "{n} parameters, 5000 draws each, max KS D {:.4} ({}) vs family-wise critical {bonferroni:.4}; \
             {} marginals above the single-test critical {crit:.4} (about {:.1} expected by chance){}",
            worst.1,
            worst.0,
            flagged.len(),
            0.01 * n as f64,
            if flagged.is_empty() { String::new() } else { format!(": {}", flagged.join(", ")) }
        ),
    )
}

// ---------------------------------------------------------------------------
// 3. parameter recovery and interval coverage

fn interval(xs: &mut [f64], level: f64) -> (f64, f64) {
    xs.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    let q = |p: f64| {
        let h = (xs.len() - 1) as f64 * p;
        let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
        xs[lo] + (h - lo as f64) * (xs[hi] - xs[lo])
    };
    (q(tail), q(1.0 - tail))
}

fn covered_names(ctx: &ModelContext, truth: &GlobalParams) -> Vec<(String, f64)> {
    let mut v = Vec::new();
    for (i, x) in truth.gamma0.iter().enumerate() {
        v.push((format!("gamma0[{i}]"), *x));
    }
    for (i, x) in truth.eta.iter().enumerate() {
        v.push((format!("eta[{i}]"), *x));
    }
    for (i, x) in truth.zeta.iter().enumerate() {
        v.push((format!("zeta[{i}]"), *x));
    }
    for a in 0..2 {
        let d = ctx.hazard[a].block_index(HazardBlock::Hemoglobin).unwrap();
        let c = ctx.hazard[a].blocks[d].offset;
        v.push((format!("psi[{a}][{c}]"), truth.psi[a][c]));
    }
    v
}

fn criterion_coverage() -> Outcome {
    let ctx = small_ctx();
    let truth = default_truth(&ctx);
    let (n_patients, chain) = if full_scale() {
        (200, ChainConfig { n_iter: 3000, n_burnin: 1000, thin: 4, ..ChainConfig::default() })
    } else {
        (100, ChainConfig { n_iter: 1200, n_burnin: 400, thin: 2, ..ChainConfig::default() })
    };
    let names = covered_names(&ctx, &truth);
    let mut by_group: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    let (mut hit, mut total) = (0, 0);
    for rep in 0..20u64 {
        let (cohort, _) = synth_cohort(&truth, &ctx, &SynthConfig { n_patients, seed: 1000 + rep, ..SynthConfig::default() }).unwrap();
        let out = fit(&cohort, &ctx, &Hyperparameters::default(), &ChainConfig { seed: 500 + rep, ..chain.clone() }).unwrap();
        let flat: Vec<BTreeMap<String, f64>> = out.samples.iter().map(|s| flatten(&s.params)).collect();
        for (name, t) in &names {
            let mut xs: Vec<f64> = flat.iter().map(|f| f[name]).collect();
            let (lo, hi) = interval(&mut xs, 0.90);
            let ok = lo <= *t && *t <= hi;
            let group = name.split('[').next().unwrap();
            let g = by_group.entry(if group == "psi" { "psi_hb" } else { group }).or_default();
            g.0 += usize::from(ok);
            g.1 += 1;
            hit += usize::from(ok);
            total += 1;
        }
    }
    let rate = hit as f64 / total as f64;
    let groups: Vec<String> = by_group.iter().map(|(k, (h, n))| format!("{k} {:.2}", *h as f64 / *n as f64)).collect();
    outcome(
        (0.80..=0.98).contains(&rate),
        format!(
            "20 cohorts x {n_patients} patients, 90% intervals cover truth {hit}/{total} = {rate:.3} (want 0.80-0.98); {}",
            groups.join(", ")
        ),
    )
}

// ---------------------------------------------------------------------------
// 4. trajectory mechanics

fn criterion_trajectory() -> Outcome {
    let ctx = ModelContext::new(&ModelConfig::default()).unwrap();
    let hosp = HospBasisConfig::new(ctx.config.m_max, ctx.b()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let stays = vec![
        HospitalizationRecord::closed(-200.0, -190.5, false),
        HospitalizationRecord::closed(-6.0, 0.0, true),
        HospitalizationRecord::closed(40.25, 100.0, false),
        HospitalizationRecord::closed(150.0, 153.0, false),
    ];
    let mut worst_jump: f64 = 0.0;
    let mut worst_plateau: f64 = 0.0;
    let mut worst_decay: f64 = 0.0;
    for _ in 0..200 {
        let mut eff = PatientEffects::zeros(ctx.p(), ctx.b(), stays.len());
        eff.alpha.iter_mut().for_each(|a| *a = 2.0 * normal(&mut rng));
        eff.alpha[0] += 11.0;
        for b in eff.beta.iter_mut().flatten() {
            *b = 2.0 * normal(&mut rng);
        }
        for l in eff.lambda.iter_mut() {
            *l = (normal(&mut rng) - 2.0).exp();
        }
        let t = |x: f64| true_hb_at(&stays, &eff, &ctx.eig, &hosp, x).unwrap();
        for h in &stays {
            for e in [h.admit, h.discharge.unwrap()] {
                worst_jump = worst_jump.max((t(e) - t(e - 1e-12)).abs());
            }
        }
        // stay 2 lasts 59.75 days: its effect is flat from day 14 of the stay
        let only = [stays[2]];
        let one = PatientEffects { alpha: vec![0.0; eff.alpha.len()], beta: vec![eff.beta[2].clone()], lambda: vec![eff.lambda[2]], rho: [1.0, 1.0] };
        // a zero trend isolates the stay's effect
        let effect = |x: f64| true_hb_at(&only, &one, &ctx.eig, &hosp, x).unwrap();
        let plateau = effect(stays[2].admit + 14.0);
        for dt in [14.5, 20.0, 35.0, 59.7] {
            worst_plateau = worst_plateau.max((effect(stays[2].admit + dt) - plateau).abs());
        }
        let d = stays[2].discharge.unwrap();
        let at_d = effect(d);
        for dt in [0.5, 3.0, 10.0, 30.0, 90.0] {
            let expect = at_d * (-one.lambda[0] * dt).exp();
            if expect.abs() > 1e-200 {
                worst_decay = worst_decay.max(((effect(d + dt) - expect) / expect).abs());
            }
        }
    }
    outcome(
        worst_jump < 1e-9 && worst_plateau < 1e-9 && worst_decay < 1e-10,
        format!(
            "max jump {worst_jump:.2e} (< 1e-9), max drift past 14 days {worst_plateau:.2e}, max relative decay error {worst_decay:.2e} (< 1e-10)"
        ),
    )
}

// ---------------------------------------------------------------------------
// 5. event process

fn criterion_event_process() -> Outcome {
    let ctx = small_ctx();
    let h0: f64 = 0.05;
    let mut g = GlobalParams::initial(&ctx);
    g.psi.iter_mut().flatten().for_each(|v| *v = 0.0);
    g.psi[0][0] = h0.ln();
    g.psi[1][0] = 0.5f64.ln();
    let patient = PatientRecord {
        id: "gap".into(),
        observations: vec![],
        hospitalizations: vec![HospitalizationRecord::closed(-5.0, 0.0, true)],
        baseline: synth_cohort(&g, &ctx, &SynthConfig { n_patients: 1, ..SynthConfig::default() }).unwrap().0.patients[0]
            .baseline
            .clone(),
        end_of_followup: 0.0,
    };
    let mut eff = PatientEffects::zeros(ctx.p(), ctx.b(), 1);
    eff.alpha[0] = 11.0;
    let cfg = PredictionConfig::default();
    let mut gaps = Vec::new();
    let mut censored = 0;
    for i in 0..1000 {
        let mut rng = ChaCha8Rng::seed_from_u64(5000 + i);
        let t = simulate_forward(&eff, &g, &patient, &ctx, &cfg, &mut rng).unwrap();
        match t.events.first() {
            Some(e) => gaps.push(e.time - 365.0),
            None => censored += 1,
        }
    }
    let n = gaps.len();
    let dist = Exp::new(h0).unwrap();
    let d = ks(gaps, |x| dist.cdf(x));
    let gaps_ok = censored == 0 && d < ks_critical(n);

    let single = PatientRecord { end_of_followup: 365.0, ..patient };
    let raw = build_event_grid(&single, 1.0);
    let (raw_admissions, _) = raw.counts(0);
    let cond = index_conditioning(raw).unwrap();
    let (admissions, exposure) = cond.counts(0);
    let index_ok = raw_admissions == 1 && admissions == 0 && exposure > 0.0;
    outcome(
        gaps_ok && index_ok,
        format!(
            "{n} first gaps, KS D {d:.4} vs critical {:.4}; index-only patient: {admissions} admission events, exposure {exposure} days",
            ks_critical(n)
        ),
    )
}

// ---------------------------------------------------------------------------
// 6 and 7. held-out prediction on model-true data

struct HeldOut {
    pit: Vec<f64>,
    scores: Vec<PatientScores>,
    /// Hospitalization over the whole forecast year.
    year: Vec<ScoredLabel>,
}

fn held_out_predictions() -> HeldOut {
    let ctx = small_ctx();
    let truth = default_truth(&ctx);
    let (train, _) = synth_cohort(&truth, &ctx, &SynthConfig { n_patients: 150, seed: 61, ..SynthConfig::default() }).unwrap();
    let (test, _) = synth_cohort(&truth, &ctx, &SynthConfig { n_patients: 1000, seed: 62, ..SynthConfig::default() }).unwrap();
    let chain = ChainConfig { n_iter: 1500, n_burnin: 500, thin: 5, seed: 63, ..ChainConfig::default() };
    let started = Instant::now();
    let samples: Vec<PosteriorSample> = fit(&train, &ctx, &Hyperparameters::default(), &chain).unwrap().samples;
    eprintln!("held-out study: fit took {:.0}s", started.elapsed().as_secs_f64());
    let sigma2 = median(&samples.iter().map(|s| s.params.sigma2).collect::<Vec<_>>());

    let mut cfg = RunConfig { model: ctx.config.clone(), ..RunConfig::default() };
    cfg.chain.seed = 64;
    let alive: Vec<&PatientRecord> = test.patients.iter().filter(|p| p.end_of_followup > 0.0).collect();
    let hist: Vec<PatientRecord> = alive.iter().map(|p| truncate_history(p, 365.0).unwrap()).collect();
    let ensembles = predict_all(&samples, &hist, &ctx, &cfg).unwrap();

    // at most one observation from each third of the year per patient, so the
    // PIT values are close to independent
    let windows = standard_windows();
    let year = Window { closed: true, ..Window::new(365.0, 730.0).unwrap() };
    let mut pit = Vec::new();
    let mut scores = Vec::new();
    let mut year_labels = Vec::new();
    for (p, e) in alive.iter().zip(&ensembles) {
        let mut rng = ChaCha8Rng::seed_from_u64(hemojoint_seed(&p.id));
        let s = score_patient(e, p, &ctx, &windows, sigma2, &mut rng).unwrap();
        for third in 0..3 {
            let (lo, hi) = (365.0 + 122.0 * third as f64, 365.0 + 122.0 * (third + 1) as f64);
            if let Some(i) = s.mad.iter().position(|m| lo <= m.day && m.day < hi) {
                pit.push(s.pit[i]);
            }
        }
        scores.push(s);
        let y = score_patient(e, p, &ctx, &[year], sigma2, &mut rng).unwrap();
        year_labels.extend(y.hospitalization);
    }
    pit.truncate(2000);
    HeldOut { pit, scores, year: year_labels }
}

fn hemojoint_seed(id: &str) -> u64 {
    id.bytes().fold(7u64, |h, b| h.wrapping_mul(31).wrapping_add(b as u64))
}

fn criterion_pit(h: &HeldOut) -> Outcome {
    let n = h.pit.len();
    let d = ks(h.pit.clone(), |x| x.clamp(0.0, 1.0));
    outcome(
        n == 2000 && d < ks_critical(n),
        format!("{n} held-out observations, KS D {d:.4} vs critical {:.4}", ks_critical(n)),
    )
}

/// Non-empty bins within 2 se, all non-empty bins, and a compact table.
fn calibration_summary(set: &[ScoredLabel]) -> (usize, usize, String) {
    let bins = calibration_bins(set, 10).unwrap();
    let nonempty: Vec<_> = bins.iter().filter(|b| b.n > 0).collect();
    let good = nonempty
        .iter()
        .filter(|b| (b.mean_score.unwrap() - b.p_hat.unwrap()).abs() < 2.0 * b.se.unwrap())
        .count();
    let table: Vec<String> = nonempty
        .iter()
        .map(|b| format!("{:.3}/{:.3}/{}", b.mean_score.unwrap(), b.p_hat.unwrap(), b.n))
        .collect();
    (good, nonempty.len(), table.join(" "))
}

fn criterion_discrimination(h: &HeldOut) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let first = |v: &dyn Fn(&PatientScores) -> &Vec<ScoredLabel>| {
        h.scores.iter().flat_map(|s| v(s).iter().filter(|l| l.window == 0).cloned()).collect::<Vec<_>>()
    };
    let rec = first(&|s| &s.recovery);
    let hosp = first(&|s| &s.hospitalization);
    let mut parts = Vec::new();
    let mut pass = true;
    for (name, set) in [("recovery", &rec), ("hospitalization", &hosp)] {
        let a = auc(set);
        let ci = auc_bootstrap_ci(set, 2000, 0.95, &mut rng);
        let ok = matches!((a, ci), (Some(a), Some((lo, _))) if a > 0.5 && lo > 0.5);
        pass &= ok;
        parts.push(format!(
            "30-day {name} AUC {:.3} CI ({:.3}, {:.3})",
            a.unwrap_or(f64::NAN),
            ci.map_or(f64::NAN, |c| c.0),
            ci.map_or(f64::NAN, |c| c.1)
        ));
    }
    // Over 30 days the spread of true risk is comparable to the Monte Carlo
    // noise of a 100-trajectory score, so bins on that score regress toward
    // the mean. The full-year predictor is the one checked; the 30-day table
    // is printed for reference.
    let (good, total, table) = calibration_summary(&h.year);
    pass &= good as f64 >= 0.8 * total as f64;
    parts.push(format!("full-year hospitalization calibration {good}/{total} bins within 2 se (score/rate/n: {table})"));
    let (good, total, table) = calibration_summary(&hosp);
    parts.push(format!("for reference 30-day: {good}/{total} ({table})"));
    outcome(pass, parts.join("; "))
}

// ---------------------------------------------------------------------------
// 8. determinism across thread counts

fn criterion_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut cfg = RunConfig { model: small_ctx().config.clone(), ..RunConfig::default() };
    cfg.chain = ChainConfig { n_iter: 200, n_burnin: 100, thin: 5, seed: 808, adapt_window: 20, ..ChainConfig::default() };
    cfg.predict = PredictionConfig { r: 20, pilot_iter: 40, inner_iter: 5, t_star: 395.0, ..PredictionConfig::default() };
    let ctx = small_ctx();
    let (cohort, _) = synth_cohort(&default_truth(&ctx), &ctx, &SynthConfig { n_patients: 24, seed: 81, ..SynthConfig::default() }).unwrap();
    write_cohort(&cohort, &d.join("data")).unwrap();
    let files = |n: usize| -> Vec<Vec<u8>> {
        let fit_dir = d.join(format!("fit{n}"));
        let pred_dir = d.join(format!("pred{n}"));
        with_threads(n, || cmd_fit(&cfg, &d.join("data"), &fit_dir)).unwrap();
        with_threads(n, || cmd_predict(&cfg, &fit_dir.join("posterior.jsonl"), &d.join("data"), &pred_dir, None)).unwrap();
        ["trajectories.csv", "events.csv"]
            .iter()
            .map(|f| std::fs::read(pred_dir.join(f)).unwrap())
            .chain(std::iter::once(std::fs::read(fit_dir.join("posterior.jsonl")).unwrap()))
            .collect()
    };
    let base = files(1);
    let same = [4, 8].iter().all(|n| files(*n) == base);
    let lines = String::from_utf8_lossy(&base[2]).lines().count();
    outcome(same, format!("posterior ({lines} lines) and trajectory files byte-identical for 1, 4 and 8 threads: {same}"))
}

fn main() {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let run = |n: usize| wanted.is_empty() || wanted.contains(&n);
    let mut failed = 0;
    let mut report = |n: usize, name: &str, started: Instant, o: Outcome| {
        println!(
            "criterion {n} [{name}]: {} - {} ({:.1}s)",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            started.elapsed().as_secs_f64()
        );
        failed += usize::from(!o.pass);
    };
    let simple: [(usize, &str, fn() -> Outcome); 5] = [
        (1, "conjugacy oracle", criterion_conjugacy),
        (2, "prior recovery", criterion_prior_recovery),
        (3, "parameter coverage", criterion_coverage),
        (4, "trajectory mechanics", criterion_trajectory),
        (5, "event process", criterion_event_process),
    ];
    for (n, name, f) in simple {
        if run(n) {
            let t = Instant::now();
            report(n, name, t, f());
        }
    }
    if run(6) || run(7) {
        let t = Instant::now();
        let held = held_out_predictions();
        if run(6) {
            report(6, "end-to-end PIT", t, criterion_pit(&held));
        }
        if run(7) {
            report(7, "discrimination and calibration", t, criterion_discrimination(&held));
        }
    }
    if run(8) {
        let t = Instant::now();
        report(8, "determinism", t, criterion_determinism());
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
