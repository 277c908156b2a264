//! Shared model context: the eigensystem plus the column layouts of the
//! hazard and recovery designs.

use crate::basis::{build_eigensystem, EigenSystem};
use crate::config::ModelConfig;
use crate::design::{
    hemoglobin_unit, study_time_unit, BaselineCovariates, Covariate, CovariateKind, INPATIENT_SCALE,
};
use crate::basis::scale_covariate;
use crate::error::Result;
use crate::trajectory::HospBasisConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HazardBlock {
    Intercept,
    Hemoglobin,
    StudyTime,
    Baseline(Covariate),
    /// Days since the current admission; discharge hazard only.
    InpatientTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block<K> {
    pub kind: K,
    pub offset: usize,
    pub width: usize,
}

/// Column layout of the hazard covariate row for one state.
#[derive(Debug, Clone, PartialEq)]
pub struct HazardLayout {
    pub state: u8,
    pub blocks: Vec<Block<HazardBlock>>,
    pub width: usize,
}

impl HazardLayout {
    pub fn new(state: u8, baseline: &[Covariate]) -> Self {
        let mut kinds = vec![HazardBlock::Intercept, HazardBlock::Hemoglobin, HazardBlock::StudyTime];
        kinds.extend(baseline.iter().map(|c| HazardBlock::Baseline(*c)));
        if state == 1 {
            kinds.push(HazardBlock::InpatientTime);
        }
        let mut offset = 0;
        let blocks = kinds
            .into_iter()
            .map(|kind| {
                let width = match kind {
                    HazardBlock::Baseline(c) => c.linear_width(),
                    _ => 1,
                };
                let b = Block { kind, offset, width };
                offset += width;
                b
            })
            .collect();
        Self {
            state,
            blocks,
            width: offset,
        }
    }

    /// Column holding the scaled current hemoglobin.
    pub const HEMOGLOBIN_COLUMN: usize = 1;

    pub fn block_index(&self, kind: HazardBlock) -> Option<usize> {
        self.blocks.iter().position(|b| b.kind == kind)
    }

    /// Linear encodings of the baseline blocks, concatenated.
    pub fn baseline_part(&self, b: &BaselineCovariates) -> Vec<f64> {
        let mut out = Vec::new();
        for blk in &self.blocks {
            if let HazardBlock::Baseline(c) = blk.kind {
                c.push_linear(b, &mut out);
            }
        }
        out
    }

    /// Full covariate row at time `t` with current true hemoglobin `hb`.
    /// `admit` is the current admission time (state 1 only).
    pub fn row(&self, baseline: &BaselineCovariates, hb: f64, t: f64, admit: Option<f64>) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.width);
        for blk in &self.blocks {
            match blk.kind {
                HazardBlock::Intercept => out.push(1.0),
                HazardBlock::Hemoglobin => out.push(hemoglobin_unit(hb)),
                HazardBlock::StudyTime => out.push(study_time_unit(t)),
                HazardBlock::Baseline(c) => c.push_linear(baseline, &mut out),
                HazardBlock::InpatientTime => {
                    let a = admit.expect("inpatient time requires an admission");
                    out.push(scale_covariate(t - a, INPATIENT_SCALE));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecoveryBlock {
    Intercept,
    Baseline(Covariate),
    AdmitHemoglobin,
    DischargeHemoglobin,
    /// Product of scaled admission and discharge hemoglobin, one column.
    Interaction,
}

/// Column layout of the recovery covariate row `q`. Blocks that depend on
/// true hemoglobin come last so the fixed prefix can be cached per patient.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryLayout {
    pub blocks: Vec<Block<RecoveryBlock>>,
    pub width: usize,
    /// Width of the leading part that depends only on baseline covariates.
    pub static_width: usize,
    /// Basis columns used for each continuous covariate.
    pub basis: usize,
}

impl RecoveryLayout {
    pub fn new(baseline: &[Covariate], basis: usize) -> Self {
        let mut kinds = vec![RecoveryBlock::Intercept];
        kinds.extend(baseline.iter().map(|c| RecoveryBlock::Baseline(*c)));
        kinds.extend([
            RecoveryBlock::AdmitHemoglobin,
            RecoveryBlock::DischargeHemoglobin,
            RecoveryBlock::Interaction,
        ]);
        let mut offset = 0;
        let mut static_width = 0;
        let blocks = kinds
            .into_iter()
            .map(|kind| {
                let width = match kind {
                    RecoveryBlock::Intercept | RecoveryBlock::Interaction => 1,
                    RecoveryBlock::Baseline(c) => match c.kind() {
                        CovariateKind::Continuous(_) => basis,
                        CovariateKind::Categorical(n) => n,
                    },
                    RecoveryBlock::AdmitHemoglobin | RecoveryBlock::DischargeHemoglobin => basis,
                };
                if matches!(kind, RecoveryBlock::Intercept | RecoveryBlock::Baseline(_)) {
                    static_width += width;
                }
                let b = Block { kind, offset, width };
                offset += width;
                b
            })
            .collect();
        Self {
            blocks,
            width: offset,
            static_width,
            basis,
        }
    }

    pub fn static_part(&self, eig: &EigenSystem, b: &BaselineCovariates) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.static_width);
        for blk in &self.blocks {
            match blk.kind {
                RecoveryBlock::Intercept => out.push(1.0),
                RecoveryBlock::Baseline(c) => match (c.kind(), c.value(b)) {
                    (CovariateKind::Continuous(s), crate::design::CovariateValue::Continuous(x)) => {
                        let start = out.len();
                        out.resize(start + self.basis, 0.0);
                        eig.fill_scaled_range(scale_covariate(x, s), 1, &mut out[start..]);
                    }
                    _ => c.push_linear(b, &mut out),
                },
                _ => {}
            }
        }
        out
    }

    /// Write the hemoglobin-dependent tail (`width - static_width` entries)
    /// for raw admission and discharge hemoglobin in g/dL.
    pub fn fill_dynamic(&self, eig: &EigenSystem, hb_admit: f64, hb_discharge: f64, out: &mut [f64]) {
        let ua = hemoglobin_unit(hb_admit);
        let ud = hemoglobin_unit(hb_discharge);
        let nb = self.basis;
        eig.fill_scaled_range(ua, 1, &mut out[..nb]);
        eig.fill_scaled_range(ud, 1, &mut out[nb..2 * nb]);
        out[2 * nb] = ua * ud;
    }

    pub fn dynamic_width(&self) -> usize {
        self.width - self.static_width
    }
}

/// Everything about the model that is fixed for a run.
#[derive(Debug, Clone)]
pub struct ModelContext {
    pub eig: EigenSystem,
    pub config: ModelConfig,
    pub hazard: [HazardLayout; 2],
    pub recovery: RecoveryLayout,
}

impl ModelContext {
    pub fn new(config: &ModelConfig) -> Result<Self> {
        let n = config.p.max(config.b + 1).max(config.recovery_basis + 1);
        let eig = build_eigensystem(config.grid_size, n)?;
        let cov = &config.covariates;
        Ok(Self {
            eig,
            hazard: [HazardLayout::new(0, &cov.hazard), HazardLayout::new(1, &cov.hazard)],
            recovery: RecoveryLayout::new(&cov.recovery, config.recovery_basis),
            config: config.clone(),
        })
    }

    pub fn hosp(&self) -> HospBasisConfig {
        HospBasisConfig {
            m_max: self.config.m_max,
            b: self.config.b,
        }
    }

    pub fn p(&self) -> usize {
        self.config.p
    }

    pub fn b(&self) -> usize {
        self.config.b
    }

    /// `sqrt(pi_k)` for the hospital-effect columns `k = 1..=b`.
    pub fn beta_slopes(&self) -> Vec<f64> {
        (1..=self.config.b).map(|k| self.eig.eigenvalue(k).sqrt()).collect()
    }

    pub fn z0_width(&self) -> usize {
        self.config.covariates.trend_intercept_width()
    }
}
