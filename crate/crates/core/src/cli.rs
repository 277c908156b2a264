//! Command-line front end. Every failure is reported as one JSON line on
//! stderr; a missing input file exits with code 2, other errors with 1.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::basis::build_eigensystem;
use crate::cohort::{load_cohort, write_cohort, Cohort, PatientRecord};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::evaluate::{cutoff_metrics, median, score_patient, standard_cutoffs, standard_windows, MetricsReport, PatientScores};
use crate::likelihood::GlobalParams;
use crate::model::ModelContext;
use crate::predictor::{
    default_truth, generate_ensemble, study_to_internal, synth_cohort, truncate_history, SynthConfig, TrajectoryEnsemble,
};
use crate::sampler::persist::{read_manifest, read_posterior, write_effects, write_manifest, write_posterior};
use crate::sampler::{fit, id_key, map_ordered, substream, Manifest, PosteriorSample};

pub const POSTERIOR_FILE: &str = "posterior.jsonl";
pub const EFFECTS_FILE: &str = "effects.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

const TAG_FOLD: u64 = 30;
const TAG_SCORE: u64 = 31;
const TAG_REPORT: u64 = 32;
const CALIBRATION_BINS: usize = 10;
const BOOTSTRAP: usize = 1000;

#[derive(Debug, Parser)]
#[command(name = "hemojoint", version, about = "Joint model of hemoglobin and hospital admission/discharge")]
pub struct Cli {
    /// Config file of `section.key = value` lines.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (0 = available parallelism).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the model to a cohort directory.
    Fit {
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate future trajectories for each patient in a cohort.
    Predict {
        /// Posterior file written by `fit`.
        #[arg(long)]
        posterior: PathBuf,
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Prediction time in study days (365 = index discharge).
        #[arg(long)]
        t_star: Option<f64>,
        #[arg(long)]
        horizon: Option<f64>,
        /// Trajectories per patient.
        #[arg(long = "R")]
        r: Option<usize>,
        /// Restrict to one patient.
        #[arg(long)]
        patient: Option<String>,
    },
    /// K-fold cross-validation with windowed metrics.
    Validate {
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long = "R")]
        r: Option<usize>,
    },
    /// Generate a synthetic cohort with known parameters.
    Simulate {
        /// JSON file of generating global parameters; built-in values otherwise.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dump eigenvalues and tabulated eigenfunctions.
    Basis {
        #[arg(long)]
        p: Option<usize>,
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the effective configuration with every default.
    DumpConfig {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parse arguments, run, and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            if e.use_stderr() {
                report(&Error::Config(e.kind().to_string()), &first_line(&e.to_string()));
            } else {
                let _ = e.print();
            }
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            report(&e, &e.to_string());
            if e.is_not_found() {
                2
            } else {
                1
            }
        }
    }
}

fn first_line(s: &str) -> String {
    s.lines().find(|l| !l.trim().is_empty()).unwrap_or("").trim().to_string()
}

fn report(e: &Error, message: &str) {
    let line = serde_json::json!({ "error": e.kind(), "message": message.replace('\n', " ") });
    eprintln!("{line}");
}

/// Defaults, then the config file, then `HEMOJOINT_*` variables, then flags.
pub fn load_config(path: Option<&Path>, base: Option<RunConfig>) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => RunConfig::parse(&fs::read_to_string(p).map_err(|e| Error::io(p, e))?)?,
        None => base.unwrap_or_default(),
    };
    cfg.apply_env(std::env::vars())?;
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<()> {
    let manifest_base = match &cli.command {
        Command::Predict { posterior, .. } if cli.config.is_none() => manifest_config(posterior)?,
        _ => None,
    };
    let mut cfg = load_config(cli.config.as_deref(), manifest_base)?;
    if let Some(s) = cli.seed {
        cfg.chain.seed = s;
    }
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    match &cli.command {
        Command::Predict { t_star, horizon, r, .. } => {
            if let Some(t) = t_star {
                cfg.predict.t_star = *t;
            }
            if let Some(h) = horizon {
                cfg.predict.horizon = *h;
            }
            if let Some(r) = r {
                cfg.predict.r = *r;
            }
        }
        Command::Validate { folds, r, .. } => {
            if let Some(k) = folds {
                cfg.folds = *k;
            }
            if let Some(r) = r {
                cfg.predict.r = *r;
            }
        }
        _ => {}
    }
    cfg.validate()?;
    let threads = cfg.threads;
    with_threads(threads, move || match cli.command {
        Command::Fit { data_dir, out } => cmd_fit(&cfg, &data_dir, &out),
        Command::Predict { posterior, data_dir, out, patient, .. } => {
            cmd_predict(&cfg, &posterior, &data_dir, &out, patient.as_deref())
        }
        Command::Validate { data_dir, out, .. } => cmd_validate(&cfg, &data_dir, &out),
        Command::Simulate { truth, n, out } => cmd_simulate(&cfg, truth.as_deref(), n, &out),
        Command::Basis { p, grid, out } => cmd_basis(p.unwrap_or(cfg.model.p), grid.unwrap_or(cfg.model.grid_size), &out),
        Command::DumpConfig { out } => cmd_dump_config(&cfg, out.as_deref()),
    })
}

fn manifest_config(posterior: &Path) -> Result<Option<RunConfig>> {
    let path = posterior.with_file_name(MANIFEST_FILE);
    if !path.exists() {
        return Ok(None);
    }
    Ok(Some(RunConfig::parse(&read_manifest(&path)?.config)?))
}

/// Run `f` on a pool of `threads` workers (0 = available parallelism).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    #[cfg(feature = "parallel")]
    {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        f()
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(f))
}

fn csv_row<I, T>(w: &mut csv::Writer<fs::File>, path: &Path, row: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: AsRef<[u8]>,
{
    w.write_record(row).map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))
}

fn csv_finish(mut w: csv::Writer<fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

pub fn cmd_fit(cfg: &RunConfig, data_dir: &Path, out: &Path) -> Result<()> {
    let (cohort, _) = load_cohort(data_dir)?;
    let ctx = ModelContext::new(&cfg.model)?;
    let fitted = fit(&cohort, &ctx, &cfg.prior, &cfg.chain)?;
    create_dir(out)?;
    write_posterior(&out.join(POSTERIOR_FILE), &fitted.samples)?;
    if cfg.chain.save_effects {
        write_effects(&out.join(EFFECTS_FILE), &fitted.effects)?;
    }
    write_manifest(
        &out.join(MANIFEST_FILE),
        &Manifest {
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: cfg.chain.seed,
            n_records: fitted.samples.len(),
            config: cfg.dump(),
            acceptance: fitted.acceptance.clone(),
        },
    )?;
    let path = out.join("acceptance.csv");
    let mut w = csv_writer(&path)?;
    csv_row(&mut w, &path, ["block", "rate"])?;
    for (k, v) in &fitted.acceptance {
        csv_row(&mut w, &path, [k.clone(), v.to_string()])?;
    }
    csv_finish(w, &path)?;
    println!("fit: {} patients, {} samples written to {}", cohort.len(), fitted.samples.len(), out.display());
    Ok(())
}

/// Histories of the patients still followed at `t_star` (study days).
fn histories(cohort: &Cohort, t_star: f64) -> Result<Vec<(PatientRecord, PatientRecord)>> {
    let cut = study_to_internal(t_star);
    cohort
        .patients
        .iter()
        .filter(|p| p.end_of_followup > cut)
        .map(|p| Ok((p.clone(), truncate_history(p, t_star)?)))
        .collect()
}

/// One ensemble per history, in input order.
pub fn predict_all(
    posterior: &[PosteriorSample],
    histories: &[PatientRecord],
    ctx: &ModelContext,
    cfg: &RunConfig,
) -> Result<Vec<TrajectoryEnsemble>> {
    let mut idx: Vec<usize> = (0..histories.len()).collect();
    map_ordered(&mut idx, |_, i| generate_ensemble(posterior, &histories[*i], ctx, &cfg.predict, cfg.chain.seed))
        .into_iter()
        .collect()
}

pub fn write_ensembles(ensembles: &[TrajectoryEnsemble], out: &Path) -> Result<()> {
    let tp = out.join("trajectories.csv");
    let ep = out.join("events.csv");
    let sp = out.join("summary.csv");
    let (mut tw, mut ew, mut sw) = (csv_writer(&tp)?, csv_writer(&ep)?, csv_writer(&sp)?);
    csv_row(&mut tw, &tp, ["trajectory_id", "day", "true_hb", "state"])?;
    csv_row(&mut ew, &ep, ["trajectory_id", "time", "event_type"])?;
    csv_row(
        &mut sw,
        &sp,
        ["patient_id", "day", "median", "lower50", "upper50", "lower90", "upper90", "hospitalized"],
    )?;
    for e in ensembles {
        for (r, t) in e.trajectories.iter().enumerate() {
            let id = format!("{}#{r}", e.patient);
            for i in 0..t.days.len() {
                csv_row(&mut tw, &tp, [id.clone(), t.days[i].to_string(), t.true_hb[i].to_string(), t.state[i].to_string()])?;
            }
            for ev in &t.events {
                csv_row(&mut ew, &ep, [id.clone(), ev.time.to_string(), ev.kind.as_str().to_string()])?;
            }
        }
        let s = e.summary();
        for i in 0..s.days.len() {
            let row = [s.days[i], s.median[i], s.lower50[i], s.upper50[i], s.lower90[i], s.upper90[i], s.hospitalized[i]];
            let mut rec = vec![e.patient.clone()];
            rec.extend(row.iter().map(f64::to_string));
            csv_row(&mut sw, &sp, rec)?;
        }
    }
    csv_finish(tw, &tp)?;
    csv_finish(ew, &ep)?;
    csv_finish(sw, &sp)
}

pub fn cmd_predict(cfg: &RunConfig, posterior: &Path, data_dir: &Path, out: &Path, patient: Option<&str>) -> Result<()> {
    let samples = read_posterior(posterior)?;
    let (cohort, _) = load_cohort(data_dir)?;
    let ctx = ModelContext::new(&cfg.model)?;
    let mut selected = cohort.clone();
    if let Some(id) = patient {
        selected.patients.retain(|p| p.id == id);
        if selected.patients.is_empty() {
            return Err(Error::data(id, "not present in the cohort"));
        }
    }
    let hist: Vec<PatientRecord> = histories(&selected, cfg.predict.t_star)?.into_iter().map(|(_, h)| h).collect();
    let ensembles = predict_all(&samples, &hist, &ctx, cfg)?;
    create_dir(out)?;
    write_ensembles(&ensembles, out)?;
    println!(
        "predict: {} patients, {} trajectories each, written to {}",
        ensembles.len(),
        cfg.predict.r,
        out.display()
    );
    Ok(())
}

/// Fold of each patient, by position in the cohort. Patients are shuffled
/// with the seed and dealt round-robin.
pub fn assign_folds(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0; n];
    for (pos, i) in order.into_iter().enumerate() {
        fold[i] = pos % k;
    }
    fold
}

/// A cutoff day with the held-out scores made at it.
pub type CutoffScores = (f64, Vec<PatientScores>);

/// Scores for every held-out patient at every cutoff before the end of
/// followup, fitting once per fold.
pub fn cross_validate(cohort: &Cohort, cfg: &RunConfig) -> Result<(Vec<usize>, Vec<CutoffScores>)> {
    let k = cfg.folds;
    if k < 2 || k > cohort.len().max(2) {
        return Err(Error::Config(format!("cannot split {} patients into {k} folds", cohort.len())));
    }
    let folds = assign_folds(cohort.len(), k, cfg.chain.seed);
    let ctx = ModelContext::new(&cfg.model)?;
    let windows = standard_windows();
    let cutoffs: Vec<f64> = standard_cutoffs().into_iter().filter(|c| *c < 730.0).collect();
    let mut per_cutoff: Vec<CutoffScores> = cutoffs.iter().map(|c| (*c, Vec::new())).collect();
    for f in 0..k {
        let pick = |keep: bool| Cohort {
            patients: cohort
                .patients
                .iter()
                .zip(&folds)
                .filter(|(_, g)| (**g == f) == keep)
                .map(|(p, _)| p.clone())
                .collect(),
        };
        let (train, test) = (pick(false), pick(true));
        let mut chain = cfg.chain.clone();
        chain.seed = substream(cfg.chain.seed, TAG_FOLD, f as u64, 0).next_u64();
        let samples = fit(&train, &ctx, &cfg.prior, &chain)?.samples;
        let sigma2 = median(&samples.iter().map(|s| s.params.sigma2).collect::<Vec<_>>());
        for (cutoff, acc) in per_cutoff.iter_mut() {
            let mut run = cfg.clone();
            run.chain.seed = chain.seed;
            run.predict.t_star = *cutoff;
            run.predict.horizon = 730.0;
            let pairs = histories(&test, *cutoff)?;
            let hist: Vec<PatientRecord> = pairs.iter().map(|(_, h)| h.clone()).collect();
            let ensembles = predict_all(&samples, &hist, &ctx, &run)?;
            for ((full, _), e) in pairs.iter().zip(&ensembles) {
                let mut rng = substream(cfg.chain.seed, TAG_SCORE, id_key(&full.id), cutoff.to_bits());
                acc.push(score_patient(e, full, &ctx, &windows, sigma2, &mut rng)?);
            }
        }
    }
    Ok((folds, per_cutoff))
}

pub fn metrics_report(cfg: &RunConfig, per_cutoff: &[CutoffScores]) -> Result<MetricsReport> {
    let windows = standard_windows();
    let cutoffs = per_cutoff
        .iter()
        .map(|(c, s)| {
            let mut rng = substream(cfg.chain.seed, TAG_REPORT, 0, c.to_bits());
            cutoff_metrics(*c, &windows, s, CALIBRATION_BINS, BOOTSTRAP, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricsReport { folds: cfg.folds, trajectories: cfg.predict.r, cutoffs })
}

pub fn cmd_validate(cfg: &RunConfig, data_dir: &Path, out: &Path) -> Result<()> {
    let (cohort, _) = load_cohort(data_dir)?;
    let (folds, per_cutoff) = cross_validate(&cohort, cfg)?;
    let report = metrics_report(cfg, &per_cutoff)?;
    create_dir(out)?;
    let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Format(e.to_string()))?;
    write_text(&out.join("metrics.json"), &(json + "\n"))?;

    let path = out.join("folds.csv");
    let mut w = csv_writer(&path)?;
    csv_row(&mut w, &path, ["patient_id", "fold"])?;
    for (p, f) in cohort.patients.iter().zip(&folds) {
        csv_row(&mut w, &path, [p.id.clone(), f.to_string()])?;
    }
    csv_finish(w, &path)?;

    let path = out.join("windows.csv");
    let mut w = csv_writer(&path)?;
    csv_row(
        &mut w,
        &path,
        [
            "cutoff", "window_start", "window_end", "mad", "n_obs", "auc_recovery", "auc_recovery_lower", "auc_recovery_upper",
            "auc_hospitalization", "auc_hospitalization_lower", "auc_hospitalization_upper",
        ],
    )?;
    for c in &report.cutoffs {
        for m in &c.windows {
            let (r, h) = (&m.auc_recovery, &m.auc_hospitalization);
            csv_row(
                &mut w,
                &path,
                [
                    c.cutoff.to_string(),
                    m.window.start.to_string(),
                    m.window.end.to_string(),
                    opt(m.mad.value),
                    m.mad.n.to_string(),
                    opt(r.value),
                    opt(r.ci.map(|c| c.0)),
                    opt(r.ci.map(|c| c.1)),
                    opt(h.value),
                    opt(h.ci.map(|c| c.0)),
                    opt(h.ci.map(|c| c.1)),
                ],
            )?;
        }
    }
    csv_finish(w, &path)?;

    let path = out.join("calibration.csv");
    let mut w = csv_writer(&path)?;
    csv_row(&mut w, &path, ["cutoff", "outcome", "lower", "upper", "n", "mean_score", "p_hat", "se"])?;
    for c in &report.cutoffs {
        for (name, bins) in [("recovery", &c.calibration_recovery), ("hospitalization", &c.calibration_hospitalization)] {
            for b in bins {
                csv_row(
                    &mut w,
                    &path,
                    [
                        c.cutoff.to_string(),
                        name.to_string(),
                        b.lower.to_string(),
                        b.upper.to_string(),
                        b.n.to_string(),
                        opt(b.mean_score),
                        opt(b.p_hat),
                        opt(b.se),
                    ],
                )?;
            }
        }
    }
    csv_finish(w, &path)?;

    let path = out.join("qq.csv");
    let mut w = csv_writer(&path)?;
    csv_row(&mut w, &path, ["cutoff", "q", "normal_score"])?;
    for c in &report.cutoffs {
        for p in &c.qq {
            csv_row(&mut w, &path, [c.cutoff.to_string(), p.q.to_string(), p.normal_score.to_string()])?;
        }
    }
    csv_finish(w, &path)?;

    let path = out.join("scores.csv");
    let mut w = csv_writer(&path)?;
    csv_row(&mut w, &path, ["cutoff", "patient_id", "window", "outcome", "score", "label", "evaluable"])?;
    for (c, scores) in &per_cutoff {
        for s in scores {
            for (name, v) in [("recovery", &s.recovery), ("hospitalization", &s.hospitalization)] {
                for l in v {
                    csv_row(
                        &mut w,
                        &path,
                        [
                            c.to_string(),
                            l.patient.clone(),
                            l.window.to_string(),
                            name.to_string(),
                            l.score.to_string(),
                            l.label.to_string(),
                            l.evaluable.to_string(),
                        ],
                    )?;
                }
            }
        }
    }
    csv_finish(w, &path)?;
    println!("validate: {} patients, {} folds, metrics written to {}", cohort.len(), cfg.folds, out.display());
    Ok(())
}

pub fn cmd_simulate(cfg: &RunConfig, truth: Option<&Path>, n: usize, out: &Path) -> Result<()> {
    let ctx = ModelContext::new(&cfg.model)?;
    let globals: GlobalParams = match truth {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", p.display())))?
        }
        None => default_truth(&ctx),
    };
    let synth = SynthConfig { n_patients: n, seed: cfg.chain.seed, ..SynthConfig::default() };
    let (cohort, truth) = synth_cohort(&globals, &ctx, &synth)?;
    write_cohort(&cohort, out)?;
    let json = serde_json::to_string_pretty(&truth).map_err(|e| Error::Format(e.to_string()))?;
    write_text(&out.join("truth.json"), &(json + "\n"))?;
    println!("simulate: {} patients written to {}", cohort.len(), out.display());
    Ok(())
}

pub fn cmd_basis(p: usize, grid: usize, out: &Path) -> Result<()> {
    let eig = build_eigensystem(grid, p)?;
    create_dir(out)?;
    let path = out.join("eigenvalues.csv");
    let mut w = csv_writer(&path)?;
    csv_row(&mut w, &path, ["k", "eigenvalue"])?;
    for (k, v) in eig.eigenvalues().iter().enumerate() {
        csv_row(&mut w, &path, [k.to_string(), v.to_string()])?;
    }
    csv_finish(w, &path)?;

    let path = out.join("eigenfunctions.csv");
    let mut w = csv_writer(&path)?;
    let mut header = vec!["t".to_string()];
    header.extend((0..eig.len()).map(|k| format!("phi_{k}")));
    csv_row(&mut w, &path, header)?;
    let tabs: Vec<Vec<f64>> = (0..eig.len()).map(|k| eig.tabulation(k)).collect();
    for (i, t) in eig.nodes().iter().enumerate() {
        let mut row = vec![t.to_string()];
        row.extend(tabs.iter().map(|c| c[i].to_string()));
        csv_row(&mut w, &path, row)?;
    }
    csv_finish(w, &path)?;
    println!("basis: {} eigenpairs on {} nodes written to {}", eig.len(), eig.nodes().len(), out.display());
    Ok(())
}

pub fn cmd_dump_config(cfg: &RunConfig, out: Option<&Path>) -> Result<()> {
    let text = cfg.dump();
    match out {
        Some(p) => write_text(p, &text),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_are_balanced_and_reproducible() {
        let a = assign_folds(23, 5, 9);
        assert_eq!(a, assign_folds(23, 5, 9));
        assert_ne!(a, assign_folds(23, 5, 10));
        for f in 0..5 {
            let n = a.iter().filter(|x| **x == f).count();
            assert!(n == 4 || n == 5);
        }
    }

    #[test]
    fn cutoffs_follow_the_window_starts() {
        let c = standard_cutoffs();
        assert_eq!(c.len(), 13);
        assert!(c.windows(2).take(11).all(|w| w[1] - w[0] == 30.0));
    }

    #[test]
    fn flags_parse() {
        let cli = Cli::try_parse_from([
            "hemojoint", "predict", "--posterior", "p.jsonl", "--data-dir", "d", "--out", "o", "--t-star", "395", "--R", "50",
            "--seed", "4", "--threads", "2",
        ])
        .unwrap();
        assert_eq!(cli.seed, Some(4));
        assert_eq!(cli.threads, Some(2));
        match cli.command {
            Command::Predict { t_star, r, horizon, .. } => {
                assert_eq!((t_star, r, horizon), (Some(395.0), Some(50), None));
            }
            _ => panic!("wrong subcommand"),
        }
        assert!(Cli::try_parse_from(["hemojoint", "validate", "--data-dir", "d", "--out", "o", "--folds", "3"]).is_ok());
    }
}
