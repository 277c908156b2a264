//! Run configuration: flat `section.key = value` text with environment
//! overrides.

use std::fmt::Write as _;

use crate::design::{format_covariate_list, parse_covariate_list, Covariate, ModelCovariates};
use crate::error::{Error, Result};
use crate::predictor::PredictionConfig;
use crate::sampler::ChainConfig;

/// Prefix for environment overrides: `HEMOJOINT_PRIOR_A_SIGMA` overrides
/// `prior.a_sigma`.
pub const ENV_PREFIX: &str = "HEMOJOINT_";

/// Prior constants. Inverse-gamma pairs are (shape, scale); gamma pairs for
/// the frailty hyperparameters are (shape, rate). Index `[A]` is the state
/// the frailty belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparameters {
    pub a_sigma: f64,
    pub b_sigma: f64,
    pub a_tau0: f64,
    pub b_tau0: f64,
    pub a_gamma0: f64,
    pub b_gamma0: f64,
    pub a_tau: f64,
    pub b_tau: f64,
    pub a_sigma_gamma: f64,
    pub b_sigma_gamma: f64,
    pub a_omega: f64,
    pub b_omega: f64,
    pub a_eta: f64,
    pub b_eta: f64,
    pub a_lambda: f64,
    pub b_lambda: f64,
    pub a_zeta: f64,
    pub b_zeta: f64,
    pub a_nu: f64,
    pub b_nu: f64,
    pub a_alpha: [f64; 2],
    pub b_alpha: [f64; 2],
    pub a_beta: [f64; 2],
    pub b_beta: [f64; 2],
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            a_sigma: 400001.0,
            b_sigma: 100000.0,
            a_tau0: 1.0,
            b_tau0: 1.0,
            a_gamma0: 1.0,
            b_gamma0: 1.0,
            a_tau: 1.0,
            b_tau: 1.0,
            a_sigma_gamma: 1.0,
            b_sigma_gamma: 1.0,
            a_omega: 1.0,
            b_omega: 1.0,
            a_eta: 1.0,
            b_eta: 1.0,
            a_lambda: 10.0,
            b_lambda: 10.0,
            a_zeta: 1.0,
            b_zeta: 1.0,
            a_nu: 1.0,
            b_nu: 1.0,
            a_alpha: [2.0, 2.0],
            b_alpha: [0.5, 0.5],
            a_beta: [2.0, 2.0],
            b_beta: [0.5, 0.5],
        }
    }
}

/// Model dimensions and design.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Trend basis size including the intercept.
    pub p: usize,
    /// Hospital-effect columns (no intercept).
    pub b: usize,
    /// Days after admission at which the within-stay warp saturates.
    pub m_max: f64,
    /// Quadrature intervals used to build the eigensystem.
    pub grid_size: usize,
    /// Longest event-grid piece in days.
    pub max_interval: f64,
    /// Basis columns per continuous covariate in the recovery model.
    pub recovery_basis: usize,
    pub covariates: ModelCovariates,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            p: 10,
            b: 5,
            m_max: 14.0,
            grid_size: 512,
            max_interval: 1.0,
            recovery_basis: 2,
            covariates: ModelCovariates::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub prior: Hyperparameters,
    pub chain: ChainConfig,
    pub predict: PredictionConfig,
    pub folds: usize,
    /// Worker threads; 0 means the available parallelism.
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            prior: Hyperparameters::default(),
            chain: ChainConfig::default(),
            predict: PredictionConfig::default(),
            folds: 5,
            threads: 0,
        }
    }
}

trait ConfigValue: Sized {
    fn parse(s: &str) -> Option<Self>;
    fn render(&self) -> String;
}

impl ConfigValue for f64 {
    fn parse(s: &str) -> Option<Self> {
        s.parse().ok().filter(|v: &f64| v.is_finite())
    }
    fn render(&self) -> String {
        format!("{self}")
    }
}

impl ConfigValue for usize {
    fn parse(s: &str) -> Option<Self> {
        s.parse().ok()
    }
    fn render(&self) -> String {
        self.to_string()
    }
}

impl ConfigValue for u64 {
    fn parse(s: &str) -> Option<Self> {
        s.parse().ok()
    }
    fn render(&self) -> String {
        self.to_string()
    }
}

impl ConfigValue for bool {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "true" | "1" => Some(true),
            "false" | "0" => Some(false),
            _ => None,
        }
    }
    fn render(&self) -> String {
        self.to_string()
    }
}

impl ConfigValue for Vec<Covariate> {
    fn parse(s: &str) -> Option<Self> {
        parse_covariate_list(s).ok()
    }
    fn render(&self) -> String {
        format_covariate_list(self)
    }
}

macro_rules! config_keys {
    ($( $section:literal => [ $( $key:literal : ($($field:tt)+) ),* $(,)? ] )*) => {
        const SECTIONS: &[(&str, &[&str])] = &[ $( ($section, &[ $( $key ),* ]) ),* ];

        impl RunConfig {
            fn get(&self, key: &str) -> Option<String> {
                match key {
                    $( $( concat!($section, ".", $key) => Some(self.$($field)+.render()), )* )*
                    _ => None,
                }
            }

            /// Set one dotted key from its text form.
            pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
                let value = value.trim();
                let bad = || Error::Config(format!("invalid value '{value}' for {key}"));
                match key {
                    $( $( concat!($section, ".", $key) => {
                        self.$($field)+ = ConfigValue::parse(value).ok_or_else(bad)?;
                    } )* )*
                    _ => return Err(Error::Config(format!("unknown key '{key}'"))),
                }
                Ok(())
            }
        }
    };
}

config_keys! {
    "model" => [
        "p": (model.p),
        "b": (model.b),
        "m_max": (model.m_max),
        "grid_size": (model.grid_size),
        "max_interval": (model.max_interval),
        "recovery_basis": (model.recovery_basis),
        "trend_covariates": (model.covariates.trend_intercept),
        "recovery_covariates": (model.covariates.recovery),
        "hazard_covariates": (model.covariates.hazard),
    ]
    "prior" => [
        "a_sigma": (prior.a_sigma),
        "b_sigma": (prior.b_sigma),
        "a_tau0": (prior.a_tau0),
        "b_tau0": (prior.b_tau0),
        "a_gamma0": (prior.a_gamma0),
        "b_gamma0": (prior.b_gamma0),
        "a_tau": (prior.a_tau),
        "b_tau": (prior.b_tau),
        "a_sigma_gamma": (prior.a_sigma_gamma),
        "b_sigma_gamma": (prior.b_sigma_gamma),
        "a_omega": (prior.a_omega),
        "b_omega": (prior.b_omega),
        "a_eta": (prior.a_eta),
        "b_eta": (prior.b_eta),
        "a_lambda": (prior.a_lambda),
        "b_lambda": (prior.b_lambda),
        "a_zeta": (prior.a_zeta),
        "b_zeta": (prior.b_zeta),
        "a_nu": (prior.a_nu),
        "b_nu": (prior.b_nu),
        "a_alpha_0": (prior.a_alpha[0]),
        "b_alpha_0": (prior.b_alpha[0]),
        "a_beta_0": (prior.a_beta[0]),
        "b_beta_0": (prior.b_beta[0]),
        "a_alpha_1": (prior.a_alpha[1]),
        "b_alpha_1": (prior.b_alpha[1]),
        "a_beta_1": (prior.a_beta[1]),
        "b_beta_1": (prior.b_beta[1]),
    ]
    "chain" => [
        "n_iter": (chain.n_iter),
        "n_burnin": (chain.n_burnin),
        "thin": (chain.thin),
        "seed": (chain.seed),
        "target_accept": (chain.target_accept),
        "adapt_window": (chain.adapt_window),
        "save_effects": (chain.save_effects),
    ]
    "predict" => [
        "t_star": (predict.t_star),
        "horizon": (predict.horizon),
        "delta": (predict.delta),
        "r": (predict.r),
        "inner_iter": (predict.inner_iter),
        "pilot_iter": (predict.pilot_iter),
    ]
    "run" => [
        "folds": (folds),
        "threads": (threads),
    ]
}

impl RunConfig {
    /// Render every key, grouped by section. `parse(dump(c)) == c` and the
    /// dump of a parsed dump is byte-identical.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (i, (section, keys)) in SECTIONS.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            let _ = writeln!(out, "# {section}");
            for key in *keys {
                let full = format!("{section}.{key}");
                let _ = writeln!(out, "{full} = {}", self.get(&full).unwrap());
            }
        }
        out
    }

    /// Parse config text on top of the defaults. Blank lines and lines
    /// starting with `#` are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected 'key = value'", n + 1))
            })?;
            cfg.set(key.trim(), value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Apply `HEMOJOINT_*` overrides from the given variables.
    pub fn apply_env<I, K, V>(&mut self, vars: I) -> Result<()>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let mut lookup = std::collections::HashMap::new();
        for (section, keys) in SECTIONS {
            for key in *keys {
                let env = format!("{ENV_PREFIX}{}_{}", section, key).to_ascii_uppercase();
                lookup.insert(env, format!("{section}.{key}"));
            }
        }
        let mut pending: Vec<(String, String)> = vars
            .into_iter()
            .filter_map(|(k, v)| lookup.get(k.as_ref()).map(|key| (key.clone(), v.as_ref().to_string())))
            .collect();
        pending.sort();
        for (key, value) in pending {
            self.set(&key, &value)?;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        let m = &self.model;
        if m.p < 2 {
            return fail("model.p must be at least 2");
        }
        if m.b < 1 {
            return fail("model.b must be at least 1");
        }
        if m.recovery_basis < 1 {
            return fail("model.recovery_basis must be at least 1");
        }
        let need = m.p.max(m.b + 1).max(m.recovery_basis + 1);
        if m.grid_size < 4 * need {
            return fail("model.grid_size must be at least 4 times the largest basis size");
        }
        if !(m.m_max > 0.0) {
            return fail("model.m_max must be positive");
        }
        if !(m.max_interval > 0.0) {
            return fail("model.max_interval must be positive");
        }
        let p = &self.prior;
        let all = [
            p.a_sigma, p.b_sigma, p.a_tau0, p.b_tau0, p.a_gamma0, p.b_gamma0, p.a_tau, p.b_tau,
            p.a_sigma_gamma, p.b_sigma_gamma, p.a_omega, p.b_omega, p.a_eta, p.b_eta,
            p.a_lambda, p.b_lambda, p.a_zeta, p.b_zeta, p.a_nu, p.b_nu, p.a_alpha[0],
            p.a_alpha[1], p.b_alpha[0], p.b_alpha[1], p.a_beta[0], p.a_beta[1], p.b_beta[0],
            p.b_beta[1],
        ];
        if all.iter().any(|v| !(*v > 0.0)) {
            return fail("all prior hyperparameters must be positive");
        }
        self.chain.validate()?;
        self.predict.validate()?;
        if self.folds < 2 {
            return fail("run.folds must be at least 2");
        }
        Ok(())
    }
}
