//! Windowed prediction metrics.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::cohort::{HbObservation, HospitalizationRecord, PatientRecord};
use crate::design::Sex;
use crate::error::{Error, Result};
use crate::model::ModelContext;
use crate::predictor::{internal_to_study, study_to_internal, TrajectoryEnsemble};

/// `[start, end)` in study days; the last standard window also includes its
/// end point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub start: f64,
    pub end: f64,
    pub closed: bool,
}

impl Window {
    pub fn new(start: f64, end: f64) -> Result<Self> {
        if !(start < end) {
            return Err(Error::Contract(format!("window start {start} must precede end {end}")));
        }
        Ok(Self { start, end, closed: false })
    }

    pub fn contains(&self, day: f64) -> bool {
        day >= self.start && (day < self.end || (self.closed && day == self.end))
    }
}

/// Eleven 30-day windows from index discharge, then a final 35-day window
/// ending at day 730.
pub fn standard_windows() -> Vec<Window> {
    let mut w: Vec<Window> = (0..11)
        .map(|i| Window {
            start: 365.0 + 30.0 * i as f64,
            end: 365.0 + 30.0 * (i + 1) as f64,
            closed: false,
        })
        .collect();
    w.push(Window { start: 695.0, end: 730.0, closed: true });
    w
}

/// Prediction cutoffs: index discharge and each window start after it, plus
/// the end of followup.
pub fn standard_cutoffs() -> Vec<f64> {
    let mut c: Vec<f64> = standard_windows().iter().map(|w| w.start).collect();
    c.push(730.0);
    c
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(v: &[f64], p: f64) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let h = (v.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, 0.5)
}

/// Drop every part of each trajectory after `end_of_followup` (days
/// relative to index discharge).
pub fn truncate_at_death(ensemble: &TrajectoryEnsemble, end_of_followup: f64) -> TrajectoryEnsemble {
    let last = internal_to_study(end_of_followup);
    let mut out = ensemble.clone();
    for t in &mut out.trajectories {
        let keep = t.days.iter().take_while(|d| **d <= last).count();
        t.days.truncate(keep);
        t.true_hb.truncate(keep);
        t.state.truncate(keep);
        t.knots.retain(|(d, _)| *d <= last);
        t.events.retain(|e| e.time <= last);
        for h in &mut t.stays {
            if h.discharge.is_none_or(|d| d > end_of_followup) && h.admit < end_of_followup {
                h.discharge = None;
            }
        }
        t.stays.retain(|h| h.admit < end_of_followup);
    }
    out
}

/// Posterior median of true hemoglobin at study day `day`, evaluated
/// exactly from each trajectory's effects.
pub fn ensemble_median_at(ensemble: &TrajectoryEnsemble, ctx: &ModelContext, day: f64) -> Result<f64> {
    let v = ensemble
        .trajectories
        .iter()
        .map(|t| t.truth_at(ctx, day))
        .collect::<Result<Vec<_>>>()?;
    Ok(median(&v))
}

/// One observation paired with the predicted median at its time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MadPoint {
    pub day: f64,
    pub observed: f64,
    pub median: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowValue {
    pub value: Option<f64>,
    pub n: usize,
}

/// Mean absolute deviation per window; windows without observations are
/// not evaluable.
pub fn mad(points: &[MadPoint], windows: &[Window]) -> Vec<WindowValue> {
    windows
        .iter()
        .map(|w| {
            let dev: Vec<f64> = points
                .iter()
                .filter(|p| w.contains(p.day))
                .map(|p| (p.observed - p.median).abs())
                .collect();
            WindowValue {
                value: (!dev.is_empty()).then(|| dev.iter().sum::<f64>() / dev.len() as f64),
                n: dev.len(),
            }
        })
        .collect()
}

/// Whether any observed value in the window reaches the anemia threshold.
/// `None` when the window holds no observed value.
pub fn recovery_label(observations: &[HbObservation], window: &Window, sex: Sex) -> Option<bool> {
    let mut any = false;
    let mut seen = false;
    for o in observations {
        if let Some(v) = o.value {
            if window.contains(internal_to_study(o.time)) {
                seen = true;
                any |= v >= sex.anemia_threshold();
            }
        }
    }
    seen.then_some(any)
}

/// Fraction of trajectories whose daily true hemoglobin reaches the
/// threshold at least once in the window.
pub fn recovery_score(ensemble: &TrajectoryEnsemble, window: &Window, sex: Sex) -> f64 {
    let thr = sex.anemia_threshold();
    let hits = ensemble
        .trajectories
        .iter()
        .filter(|t| t.days.iter().zip(&t.true_hb).any(|(d, v)| window.contains(*d) && *v >= thr))
        .count();
    hits as f64 / ensemble.trajectories.len().max(1) as f64
}

fn overlaps(stays: &[HospitalizationRecord], window: &Window, end: f64) -> bool {
    let (ws, we) = (study_to_internal(window.start), study_to_internal(window.end).min(end));
    stays.iter().any(|h| {
        let d = h.discharge.unwrap_or(f64::INFINITY).min(end);
        h.admit < we && d > ws || (window.closed && h.admit == we && h.admit <= end)
    })
}

/// Whether any stay overlaps the window before `end_of_followup`. `None`
/// if followup ended before the window began.
pub fn hospitalization_label(stays: &[HospitalizationRecord], window: &Window, end_of_followup: f64) -> Option<bool> {
    if end_of_followup < study_to_internal(window.start) {
        return None;
    }
    Some(overlaps(stays, window, end_of_followup))
}

/// Fraction of trajectories with a stay overlapping the window.
pub fn hospitalization_score(ensemble: &TrajectoryEnsemble, window: &Window) -> f64 {
    let end = study_to_internal(ensemble.horizon);
    let hits = ensemble
        .trajectories
        .iter()
        .filter(|t| {
            let last = t.days.last().map_or(end, |d| study_to_internal(*d)).max(study_to_internal(ensemble.t_star));
            overlaps(&t.stays, window, last.min(end))
        })
        .count();
    hits as f64 / ensemble.trajectories.len().max(1) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredLabel {
    pub patient: String,
    pub window: usize,
    pub score: f64,
    pub label: bool,
    pub evaluable: bool,
}

/// Mann–Whitney AUC: P(score_pos > score_neg) + P(tie) / 2 over evaluable
/// labels. `None` without both classes.
pub fn auc(scored: &[ScoredLabel]) -> Option<f64> {
    let mut v: Vec<(f64, bool)> = scored.iter().filter(|s| s.evaluable).map(|s| (s.score, s.label)).collect();
    auc_pairs(&mut v)
}

fn auc_pairs(v: &mut [(f64, bool)]) -> Option<f64> {
    let n_pos = v.iter().filter(|x| x.1).count();
    let n_neg = v.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    // midranks
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < v.len() {
        let mut j = i;
        while j + 1 < v.len() && v[j + 1].0 == v[i].0 {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * v[i..=j].iter().filter(|x| x.1).count() as f64;
        i = j + 1;
    }
    let np = n_pos as f64;
    Some((rank_sum - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}

/// Percentile bootstrap interval for the AUC, resampling labels with
/// replacement. Resamples missing a class are skipped.
pub fn auc_bootstrap_ci(scored: &[ScoredLabel], n_boot: usize, level: f64, rng: &mut ChaCha8Rng) -> Option<(f64, f64)> {
    let base: Vec<(f64, bool)> = scored.iter().filter(|s| s.evaluable).map(|s| (s.score, s.label)).collect();
    if base.is_empty() {
        return None;
    }
    let mut stats = Vec::with_capacity(n_boot);
    let mut buf = Vec::with_capacity(base.len());
    for _ in 0..n_boot {
        buf.clear();
        buf.extend((0..base.len()).map(|_| base[rng.random_range(0..base.len())]));
        if let Some(a) = auc_pairs(&mut buf) {
            stats.push(a);
        }
    }
    if stats.is_empty() {
        return None;
    }
    stats.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Some((quantile_sorted(&stats, tail), quantile_sorted(&stats, 1.0 - tail)))
}

/// `(#{E <= H} + 1/2) / (R + 1/2)` for predictive draws `E`.
pub fn pit_quantile(draws: &[f64], observed: f64) -> f64 {
    let below = draws.iter().filter(|e| **e <= observed).count() as f64;
    (below + 0.5) / (draws.len() as f64 + 0.5)
}

/// Predictive draws at study day `day`: each trajectory's true hemoglobin
/// plus independent `N(0, sigma2)` noise.
pub fn predictive_draws(ensemble: &TrajectoryEnsemble, ctx: &ModelContext, day: f64, sigma2: f64, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let sd = sigma2.sqrt();
    ensemble
        .trajectories
        .iter()
        .map(|t| Ok(t.truth_at(ctx, day)? + sd * rng.sample::<f64, _>(StandardNormal)))
        .collect()
}

/// PIT values and their standard normal scores, for QQ plots.
pub fn normal_scores(q: &[f64]) -> Vec<f64> {
    let n = Normal::standard();
    q.iter().map(|p| n.inverse_cdf(*p)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub lower: f64,
    pub upper: f64,
    pub n: usize,
    pub mean_score: Option<f64>,
    pub p_hat: Option<f64>,
    pub se: Option<f64>,
}

/// Equal-width bins on the score; a score of exactly 1 falls in the last bin.
pub fn calibration_bins(scored: &[ScoredLabel], n_bins: usize) -> Result<Vec<CalibrationBin>> {
    if n_bins < 2 {
        return Err(Error::Contract("calibration needs at least two bins".into()));
    }
    let mut acc = vec![(0usize, 0.0, 0usize); n_bins];
    for s in scored.iter().filter(|s| s.evaluable) {
        let b = ((s.score * n_bins as f64) as usize).min(n_bins - 1);
        acc[b].0 += 1;
        acc[b].1 += s.score;
        acc[b].2 += usize::from(s.label);
    }
    Ok(acc
        .iter()
        .enumerate()
        .map(|(i, &(n, sum, pos))| {
            let p = (n > 0).then(|| pos as f64 / n as f64);
            CalibrationBin {
                lower: i as f64 / n_bins as f64,
                upper: (i + 1) as f64 / n_bins as f64,
                n,
                mean_score: (n > 0).then(|| sum / n as f64),
                p_hat: p,
                se: p.map(|p| (p * (1.0 - p) / n as f64).sqrt()),
            }
        })
        .collect())
}

/// Everything one held-out patient contributes to the metrics for a single
/// prediction cutoff.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PatientScores {
    pub mad: Vec<MadPoint>,
    pub recovery: Vec<ScoredLabel>,
    pub hospitalization: Vec<ScoredLabel>,
    pub pit: Vec<f64>,
}

/// Score an ensemble predicted from `ensemble.t_star` against the patient's
/// full record. Only windows starting at or after the cutoff are scored, and
/// only observations after the cutoff and before the end of followup count.
pub fn score_patient(
    ensemble: &TrajectoryEnsemble,
    full: &PatientRecord,
    ctx: &ModelContext,
    windows: &[Window],
    sigma2: f64,
    rng: &mut ChaCha8Rng,
) -> Result<PatientScores> {
    let cut = study_to_internal(ensemble.t_star);
    let truncated = truncate_at_death(ensemble, full.end_of_followup);
    let mut out = PatientScores::default();
    for o in &full.observations {
        let Some(h) = o.value else { continue };
        if o.time <= cut || o.time > full.end_of_followup {
            continue;
        }
        let day = internal_to_study(o.time);
        out.mad.push(MadPoint { day, observed: h, median: ensemble_median_at(ensemble, ctx, day)? });
        let draws = predictive_draws(ensemble, ctx, day, sigma2, rng)?;
        out.pit.push(pit_quantile(&draws, h));
    }
    let sex = full.baseline.sex;
    for (i, w) in windows.iter().enumerate() {
        if w.start < ensemble.t_star || w.start > ensemble.horizon {
            continue;
        }
        let rec = recovery_label(&full.observations, w, sex);
        out.recovery.push(ScoredLabel {
            patient: full.id.clone(),
            window: i,
            score: recovery_score(&truncated, w, sex),
            label: rec.unwrap_or(false),
            evaluable: rec.is_some(),
        });
        let hosp = hospitalization_label(&full.hospitalizations, w, full.end_of_followup);
        out.hospitalization.push(ScoredLabel {
            patient: full.id.clone(),
            window: i,
            score: hospitalization_score(&truncated, w),
            label: hosp.unwrap_or(false),
            evaluable: hosp.is_some(),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucSummary {
    pub value: Option<f64>,
    pub ci: Option<(f64, f64)>,
    pub n_pos: usize,
    pub n_neg: usize,
}

impl AucSummary {
    pub fn new(scored: &[ScoredLabel], n_boot: usize, rng: &mut ChaCha8Rng) -> Self {
        let n_pos = scored.iter().filter(|s| s.evaluable && s.label).count();
        let n_neg = scored.iter().filter(|s| s.evaluable && !s.label).count();
        let value = auc(scored);
        let ci = if value.is_some() { auc_bootstrap_ci(scored, n_boot, 0.95, rng) } else { None };
        Self { value, ci, n_pos, n_neg }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowMetrics {
    pub window: Window,
    pub mad: WindowValue,
    pub auc_recovery: AucSummary,
    pub auc_hospitalization: AucSummary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QqPoint {
    pub q: f64,
    pub normal_score: f64,
}

/// Metrics for all predictions made at one cutoff (study day).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffMetrics {
    pub cutoff: f64,
    pub n_patients: usize,
    pub windows: Vec<WindowMetrics>,
    /// Pooled over the scored windows.
    pub calibration_recovery: Vec<CalibrationBin>,
    pub calibration_hospitalization: Vec<CalibrationBin>,
    /// Observed-value predictor: noise-added draws, sorted by `q`.
    pub qq: Vec<QqPoint>,
}

pub fn cutoff_metrics(
    cutoff: f64,
    windows: &[Window],
    scores: &[PatientScores],
    n_bins: usize,
    n_boot: usize,
    rng: &mut ChaCha8Rng,
) -> Result<CutoffMetrics> {
    let points: Vec<MadPoint> = scores.iter().flat_map(|s| s.mad.iter().copied()).collect();
    let mads = mad(&points, windows);
    let rec: Vec<ScoredLabel> = scores.iter().flat_map(|s| s.recovery.iter().cloned()).collect();
    let hosp: Vec<ScoredLabel> = scores.iter().flat_map(|s| s.hospitalization.iter().cloned()).collect();
    let mut out = Vec::new();
    for (i, w) in windows.iter().enumerate() {
        if w.start < cutoff {
            continue;
        }
        let pick = |v: &[ScoredLabel]| v.iter().filter(|s| s.window == i).cloned().collect::<Vec<_>>();
        out.push(WindowMetrics {
            window: *w,
            mad: mads[i],
            auc_recovery: AucSummary::new(&pick(&rec), n_boot, rng),
            auc_hospitalization: AucSummary::new(&pick(&hosp), n_boot, rng),
        });
    }
    let mut q: Vec<f64> = scores.iter().flat_map(|s| s.pit.iter().copied()).collect();
    q.sort_by(f64::total_cmp);
    let qq = q.iter().zip(normal_scores(&q)).map(|(q, z)| QqPoint { q: *q, normal_score: z }).collect();
    Ok(CutoffMetrics {
        cutoff,
        n_patients: scores.len(),
        windows: out,
        calibration_recovery: calibration_bins(&rec, n_bins)?,
        calibration_hospitalization: calibration_bins(&hosp, n_bins)?,
        qq,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub folds: usize,
    pub trajectories: usize,
    pub cutoffs: Vec<CutoffMetrics>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictor::SimulatedTrajectory;
    use crate::trajectory::PatientEffects;
    use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest};
    use rand::SeedableRng;

    fn traj(values: &[f64], states: &[u8], stays: Vec<HospitalizationRecord>) -> SimulatedTrajectory {
        SimulatedTrajectory {
            days: (0..values.len()).map(|i| 365.0 + i as f64).collect(),
            true_hb: values.to_vec(),
            state: states.to_vec(),
            knots: vec![],
            events: vec![],
            stays,
            effects: PatientEffects::zeros(2, 1, 0),
            sigma2: 0.25,
        }
    }

    fn ensemble(ts: Vec<SimulatedTrajectory>) -> TrajectoryEnsemble {
        TrajectoryEnsemble { patient: "p".into(), t_star: 365.0, horizon: 730.0, trajectories: ts }
    }

    fn label(score: f64, label: bool) -> ScoredLabel {
        ScoredLabel { patient: String::new(), window: 0, score, label, evaluable: true }
    }

    #[test]
    fn windows_cover_followup() {
        let w = standard_windows();
        assert_eq!(w.len(), 12);
        assert_eq!((w[0].start, w[0].end), (365.0, 395.0));
        assert_eq!(w[11].end - w[11].start, 35.0);
        assert!(w[11].contains(730.0) && !w[10].contains(695.0));
        let c = standard_cutoffs();
        assert_eq!(c.first(), Some(&365.0));
        assert_eq!(c[1], 395.0);
        assert_eq!(c[11], 695.0);
        assert_eq!(c.last(), Some(&730.0));
    }

    #[test]
    fn mad_examples() {
        let w = standard_windows();
        let pts: Vec<MadPoint> = [370.0, 380.0, 400.0].iter().map(|d| MadPoint { day: *d, observed: 10.0, median: 10.0 }).collect();
        assert_eq!(mad(&pts, &w)[0].value, Some(0.0));
        let off: Vec<MadPoint> = pts.iter().map(|p| MadPoint { median: p.observed + 1.5, ..*p }).collect();
        let m = mad(&off, &w);
        assert_eq!(m[0].value, Some(1.5));
        assert_eq!(m[0].n, 2);
        assert_eq!(m[2].value, None);
        // hand-computed mixed case
        let mixed = [
            MadPoint { day: 366.0, observed: 9.0, median: 10.0 },
            MadPoint { day: 367.0, observed: 12.5, median: 10.0 },
            MadPoint { day: 368.0, observed: 10.2, median: 10.0 },
        ];
        assert!((mad(&mixed, &w)[0].value.unwrap() - 3.7 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn recovery_labels_and_scores() {
        let w = standard_windows()[0];
        let obs = |v: f64| vec![HbObservation { time: 5.0, value: Some(v) }];
        assert_eq!(recovery_label(&obs(13.5), &w, Sex::Male), Some(true));
        assert_eq!(recovery_label(&obs(11.9), &w, Sex::Female), Some(false));
        assert_eq!(recovery_label(&[], &w, Sex::Female), None);
        let low = traj(&[10.0; 40], &[0; 40], vec![]);
        let high = traj(&[14.0; 40], &[0; 40], vec![]);
        let mut cross = [10.0; 40];
        cross[20] = 13.1;
        let crossing = traj(&cross, &[0; 40], vec![]);
        assert_eq!(recovery_score(&ensemble(vec![high.clone(); 3]), &w, Sex::Male), 1.0);
        assert_eq!(recovery_score(&ensemble(vec![low.clone(); 3]), &w, Sex::Male), 0.0);
        let e = ensemble(vec![low.clone(), low.clone(), low, crossing]);
        assert_eq!(recovery_score(&e, &w, Sex::Male), 0.25);
        // a death before the crossing day removes it
        let t = truncate_at_death(&e, 10.0);
        assert_eq!(recovery_score(&t, &w, Sex::Male), 0.0);
    }

    #[test]
    fn hospitalization_scores() {
        let w = standard_windows()[1];
        let inside = vec![HospitalizationRecord::closed(-3.0, 0.0, true), HospitalizationRecord::closed(40.0, 44.0, false)];
        let outside = vec![HospitalizationRecord::closed(-3.0, 0.0, true)];
        let ts: Vec<_> = (0..100)
            .map(|i| traj(&[10.0; 366], &[0; 366], if i < 30 { inside.clone() } else { outside.clone() }))
            .collect();
        assert!((hospitalization_score(&ensemble(ts), &w) - 0.3).abs() < 1e-12);
        let all = vec![traj(&[10.0; 366], &[1; 366], inside.clone()); 4];
        assert_eq!(hospitalization_score(&ensemble(all), &w), 1.0);
        assert_eq!(hospitalization_label(&inside, &w, 365.0), Some(true));
        assert_eq!(hospitalization_label(&outside, &w, 365.0), Some(false));
        assert_eq!(hospitalization_label(&inside, &w, 20.0), None);
        // death before the stay
        assert_eq!(hospitalization_label(&inside, &w, 35.0), Some(false));
    }

    #[test]
    fn auc_examples() {
        let sep: Vec<_> = [(0.9, true), (0.8, true), (0.1, false), (0.2, false)].iter().map(|(s, l)| label(*s, *l)).collect();
        assert_eq!(auc(&sep), Some(1.0));
        let ties: Vec<_> = [true, false, true, false].iter().map(|l| label(0.4, *l)).collect();
        assert_eq!(auc(&ties), Some(0.5));
        assert_eq!(auc(&[label(0.3, true)]), None);
        // exhaustive over the nine pairs
        let pos = [0.3, 0.6, 0.6];
        let neg = [0.2, 0.6, 0.7];
        let mut wins = 0.0;
        for p in pos {
            for n in neg {
                wins += if p > n { 1.0 } else if p == n { 0.5 } else { 0.0 };
            }
        }
        let s: Vec<_> = pos.iter().map(|v| label(*v, true)).chain(neg.iter().map(|v| label(*v, false))).collect();
        assert!((auc(&s).unwrap() - wins / 9.0).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (lo, hi) = auc_bootstrap_ci(&sep, 200, 0.95, &mut rng).unwrap();
        assert_eq!((lo, hi), (1.0, 1.0));
    }

    #[test]
    fn pit_formula() {
        assert!((pit_quantile(&[20.0; 100], 10.0) - 0.5 / 100.5).abs() < 1e-15);
        assert_eq!(pit_quantile(&[5.0; 100], 10.0), 1.0);
        let z = normal_scores(&[0.5]);
        assert!(z[0].abs() < 1e-12);
    }

    #[test]
    fn calibration_examples() {
        let s: Vec<_> = [0.05, 0.15, 0.95, 1.0, 0.97].iter().map(|v| label(*v, true)).collect();
        let bins = calibration_bins(&s, 10).unwrap();
        assert_eq!(bins.len(), 10);
        assert_eq!(bins[9].n, 3);
        assert_eq!((bins[9].p_hat, bins[9].se), (Some(1.0), Some(0.0)));
        assert_eq!(bins[4].n, 0);
        assert_eq!(bins[4].se, None);
        assert!(calibration_bins(&s, 1).is_err());
    }

    #[test]
    fn calibrated_scores_pass_binomial_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let s: Vec<_> = (0..5000)
            .map(|_| {
                let p: f64 = rng.random();
                label(p, rng.random_bool(p))
            })
            .collect();
        let bins = calibration_bins(&s, 10).unwrap();
        let ok = bins
            .iter()
            .filter(|b| (b.mean_score.unwrap() - b.p_hat.unwrap()).abs() < 2.0 * b.se.unwrap().max(1e-12))
            .count();
        assert!(ok >= 9, "{ok} of 10 bins within 2 se");
    }

    #[test]
    fn death_truncation() {
        let e = ensemble(vec![traj(&[10.0; 366], &[0; 366], vec![])]);
        assert!(truncate_at_death(&e, 0.0).trajectories[0].days.len() == 1);
        assert_eq!(truncate_at_death(&e, 400.0), e);
    }

    proptest! {
        #[test]
        fn auc_invariant_under_monotone_transform(scores in proptest::collection::vec((0.0f64..1.0, any::<bool>()), 2..40)) {
            let s: Vec<_> = scores.iter().map(|(v, l)| label(*v, *l)).collect();
            let t: Vec<_> = scores.iter().map(|(v, l)| label((3.0 * v).exp() - 7.0, *l)).collect();
            prop_assert_eq!(auc(&s), auc(&t));
        }

        #[test]
        fn scores_grow_with_window_length(vals in proptest::collection::vec(9.0f64..14.0, 120), len in 1usize..80) {
            let e = ensemble(vec![traj(&vals, &[0; 120], vec![]); 2]);
            let short = Window::new(365.0, 365.0 + len as f64).unwrap();
            let long = Window::new(365.0, 365.0 + len as f64 + 10.0).unwrap();
            prop_assert!(recovery_score(&e, &short, Sex::Male) <= recovery_score(&e, &long, Sex::Male));
            prop_assert!(hospitalization_score(&e, &short) <= hospitalization_score(&e, &long));
        }

        #[test]
        fn mad_nonnegative(obs in proptest::collection::vec((365.0f64..730.0, 5.0f64..15.0, 5.0f64..15.0), 0..30)) {
            let pts: Vec<_> = obs.iter().map(|(d, o, m)| MadPoint { day: *d, observed: *o, median: *m }).collect();
            for v in mad(&pts, &standard_windows()) {
                prop_assert!(v.value.is_none_or(|x| x >= 0.0));
            }
        }
    }
}
