//! Karhunen–Loève basis of the BSS-ANOVA main-effect kernel.
//!
//! The kernel
//!
//! ```text
//! K(s, t) = B1(s) B1(t) + B2(s) B2(t) / 4 - B4(|s - t|) / 24
//! ```
//!
//! is built from Bernoulli polynomials and integrates to zero in each
//! argument, so the constant function is handled separately as the intercept
//! pair `(pi_0 = 1, phi_0 = 1)`. The remaining eigenpairs are computed with a
//! Nyström discretisation: composite Simpson weights on a uniform grid, a
//! symmetric eigendecomposition of the weighted Gram matrix, and the Nyström
//! extension for evaluation between grid nodes.
//!
//! The extension is evaluated in `O(log n)` per point. `B4(|t - s|)` is a
//! piecewise polynomial in `t`, so the weighted sum over nodes reduces to
//! prefix sums of the first five power moments of the tabulated function.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

pub fn bernoulli1(t: f64) -> f64 {
    t - 0.5
}

pub fn bernoulli2(t: f64) -> f64 {
    t * t - t + 1.0 / 6.0
}

pub fn bernoulli4(t: f64) -> f64 {
    let t2 = t * t;
    t2 * t2 - 2.0 * t2 * t + t2 - 1.0 / 30.0
}

/// The BSS-ANOVA main-effect covariance on `[0, 1]`.
pub fn bss_kernel(s: f64, t: f64) -> f64 {
    bernoulli1(s) * bernoulli1(t) + bernoulli2(s) * bernoulli2(t) / 4.0
        - bernoulli4((s - t).abs()) / 24.0
}

/// Composite Simpson weights on `intervals + 1` uniform nodes. An odd number
/// of intervals closes with a Simpson 3/8 panel.
fn quadrature_weights(intervals: usize) -> Vec<f64> {
    let h = 1.0 / intervals as f64;
    let mut w = vec![0.0; intervals + 1];
    let simpson_end = if intervals.is_multiple_of(2) {
        intervals
    } else {
        intervals - 3
    };
    for panel in (0..simpson_end).step_by(2) {
        w[panel] += h / 3.0;
        w[panel + 1] += 4.0 * h / 3.0;
        w[panel + 2] += h / 3.0;
    }
    if simpson_end != intervals {
        let c = 3.0 * h / 8.0;
        w[simpson_end] += c;
        w[simpson_end + 1] += 3.0 * c;
        w[simpson_end + 2] += 3.0 * c;
        w[simpson_end + 3] += c;
    }
    w
}

/// Prefix power moments of `f_j` over the nodes, enough to evaluate
/// `sum_j f_j K(t, s_j)` for any `t`.
#[derive(Debug, Clone)]
struct KernelMoments {
    // prefix[m][j] = sum_{i < j} f_i s_i^m, m = 0..4
    prefix: [Vec<f64>; 4],
    total: [f64; 5],
    b1: f64,
    b2: f64,
}

impl KernelMoments {
    fn new(nodes: &[f64], f: &[f64]) -> Self {
        let n = nodes.len();
        let mut prefix: [Vec<f64>; 4] = std::array::from_fn(|_| Vec::with_capacity(n + 1));
        let mut acc = [0.0f64; 5];
        for p in prefix.iter_mut() {
            p.push(0.0);
        }
        let mut b1 = 0.0;
        let mut b2 = 0.0;
        for (&s, &fj) in nodes.iter().zip(f) {
            let mut pow = fj;
            for (m, a) in acc.iter_mut().enumerate() {
                *a += pow;
                if m < 4 {
                    prefix[m].push(*a);
                }
                pow *= s;
            }
            b1 += fj * bernoulli1(s);
            b2 += fj * bernoulli2(s);
        }
        Self {
            prefix,
            total: acc,
            b1,
            b2,
        }
    }

    /// `sum_j f_j K(t, s_j)` where `below` is the number of nodes `< t`.
    fn apply(&self, t: f64, below: usize) -> f64 {
        let tt = &self.total;
        let lo = [
            self.prefix[0][below],
            self.prefix[1][below],
            self.prefix[2][below],
            self.prefix[3][below],
        ];
        let t2 = t * t;
        let t3 = t2 * t;
        let t4 = t2 * t2;
        let quartic = t4 * tt[0] - 4.0 * t3 * tt[1] + 6.0 * t2 * tt[2] - 4.0 * t * tt[3] + tt[4];
        let square = t2 * tt[0] - 2.0 * t * tt[1] + tt[2];
        let cube = |m: &[f64]| t3 * m[0] - 3.0 * t2 * m[1] + 3.0 * t * m[2] - m[3];
        let abs_cube = 2.0 * cube(&lo) - cube(&tt[..4]);
        let b4_sum = quartic - 2.0 * abs_cube + square - tt[0] / 30.0;
        bernoulli1(t) * self.b1 + bernoulli2(t) * self.b2 / 4.0 - b4_sum / 24.0
    }
}

/// Numerically computed eigenpairs of the BSS-ANOVA kernel.
///
/// Index 0 is the intercept; indices `1..len()` are the Nyström eigenpairs in
/// non-increasing eigenvalue order. Immutable after construction.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    grid_size: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    eigenvalues: Vec<f64>,
    // tabulated[k - 1] holds phi_k at the nodes
    tabulated: Vec<Vec<f64>>,
    moments: Vec<KernelMoments>,
    kernel_mean: KernelMoments,
    // per k >= 1: (sum_j w_j phi_k(s_j), sum_j w_j kbar(s_j) phi_k(s_j))
    centering: Vec<(f64, f64)>,
    kernel_grand_mean: f64,
}

/// Build the eigensystem with `p` entries (including the intercept) on a
/// grid of `grid_size` quadrature intervals.
pub fn build_eigensystem(grid_size: usize, p: usize) -> Result<EigenSystem> {
    if p < 2 {
        return Err(Error::Config(format!("basis size p must be >= 2, got {p}")));
    }
    if grid_size < 4 * p {
        return Err(Error::Config(format!(
            "grid size must be >= 4p = {}, got {grid_size}",
            4 * p
        )));
    }
    let n = grid_size + 1;
    let nodes: Vec<f64> = (0..n).map(|i| i as f64 / grid_size as f64).collect();
    let weights = quadrature_weights(grid_size);

    let ones_moments = KernelMoments::new(&nodes, &weights);
    let kbar: Vec<f64> = nodes
        .iter()
        .enumerate()
        .map(|(i, &s)| ones_moments.apply(s, i))
        .collect();
    let kbarbar: f64 = weights.iter().zip(&kbar).map(|(w, k)| w * k).sum();

    let sw: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
    let gram = DMatrix::from_fn(n, n, |i, j| {
        let kc = bss_kernel(nodes[i], nodes[j]) - kbar[i] - kbar[j] + kbarbar;
        sw[i] * kc * sw[j]
    });
    let eig = SymmetricEigen::new(gram);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut eigenvalues = Vec::with_capacity(p);
    eigenvalues.push(1.0);
    let mut tabulated = Vec::with_capacity(p - 1);
    let mut moments = Vec::with_capacity(p - 1);
    let mut centering = Vec::with_capacity(p - 1);
    for &col in order.iter().take(p - 1) {
        let value = eig.eigenvalues[col].max(0.0);
        let mut phi: Vec<f64> = (0..n).map(|i| eig.eigenvectors[(i, col)] / sw[i]).collect();
        let lead = phi.iter().copied().find(|v| v.abs() > 1e-12).unwrap_or(1.0);
        if lead < 0.0 {
            phi.iter_mut().for_each(|v| *v = -*v);
        }
        let f: Vec<f64> = weights.iter().zip(&phi).map(|(w, v)| w * v).collect();
        let mass: f64 = f.iter().sum();
        let tilt: f64 = f.iter().zip(&kbar).map(|(a, b)| a * b).sum();
        eigenvalues.push(value);
        moments.push(KernelMoments::new(&nodes, &f));
        tabulated.push(phi);
        centering.push((mass, tilt));
    }

    Ok(EigenSystem {
        grid_size,
        nodes,
        weights,
        eigenvalues,
        tabulated,
        moments,
        kernel_mean: ones_moments,
        centering,
        kernel_grand_mean: kbarbar,
    })
}

impl EigenSystem {
    /// Number of stored eigenpairs, intercept included.
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvalue(&self, k: usize) -> f64 {
        self.eigenvalues[k]
    }

    /// `phi_k` at the grid nodes.
    pub fn tabulation(&self, k: usize) -> Vec<f64> {
        if k == 0 {
            vec![1.0; self.nodes.len()]
        } else {
            self.tabulated[k - 1].clone()
        }
    }

    fn nodes_below(&self, t: f64) -> usize {
        self.nodes.partition_point(|&s| s < t)
    }

    fn eval_with(&self, k: usize, t: f64, below: usize, kbar_t: f64) -> f64 {
        if k == 0 {
            return 1.0;
        }
        let (mass, tilt) = self.centering[k - 1];
        let raw = self.moments[k - 1].apply(t, below);
        (raw - kbar_t * mass - tilt + self.kernel_grand_mean * mass) / self.eigenvalues[k]
    }

    /// `phi_k(t)` via the Nyström extension. `t` is clamped to `[0, 1]`.
    pub fn eval(&self, k: usize, t: f64) -> f64 {
        let t = t.clamp(0.0, 1.0);
        let below = self.nodes_below(t);
        let kbar_t = self.kernel_mean.apply(t, below);
        self.eval_with(k, t, below, kbar_t)
    }

    /// Fill `out[k] = sqrt(pi_k) phi_k(t)` for `k < out.len()`, clamping `t`.
    pub(crate) fn fill_scaled_row(&self, t: f64, out: &mut [f64]) {
        let t = t.clamp(0.0, 1.0);
        let below = self.nodes_below(t);
        let kbar_t = self.kernel_mean.apply(t, below);
        for (k, o) in out.iter_mut().enumerate() {
            *o = if k == 0 {
                1.0
            } else {
                self.eigenvalues[k].sqrt() * self.eval_with(k, t, below, kbar_t)
            };
        }
    }

    /// `sqrt(pi_k) phi_k(t)` for `k = first..first + out.len()`.
    pub(crate) fn fill_scaled_range(&self, t: f64, first: usize, out: &mut [f64]) {
        let t = t.clamp(0.0, 1.0);
        let below = self.nodes_below(t);
        let kbar_t = self.kernel_mean.apply(t, below);
        for (i, o) in out.iter_mut().enumerate() {
            let k = first + i;
            *o = if k == 0 {
                1.0
            } else {
                self.eigenvalues[k].sqrt() * self.eval_with(k, t, below, kbar_t)
            };
        }
    }
}

/// Scaled basis row `[sqrt(pi_k) phi_k(t)]_{k < p}`; element 0 is exactly 1.
pub fn basis_row(eig: &EigenSystem, t: f64, p: usize) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Contract(format!(
            "basis input must lie in [0, 1], got {t}"
        )));
    }
    if p > eig.len() {
        return Err(Error::Contract(format!(
            "requested {p} basis columns but only {} eigenpairs are stored",
            eig.len()
        )));
    }
    let mut row = vec![0.0; p];
    eig.fill_scaled_row(t, &mut row);
    Ok(row)
}

/// Clamp-and-rescale bounds for a continuous covariate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovariateScale {
    lower: f64,
    upper: f64,
}

impl CovariateScale {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(upper > lower) {
            return Err(Error::Config(format!(
                "covariate scale needs upper > lower, got [{lower}, {upper}]"
            )));
        }
        Ok(Self { lower, upper })
    }

    pub(crate) const fn fixed(lower: f64, upper: f64) -> Self {
        Self { lower, upper }
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }
}

/// `(clamp(x, m, M) - m) / (M - m)`.
pub fn scale_covariate(x_raw: f64, s: CovariateScale) -> f64 {
    (x_raw.clamp(s.lower, s.upper) - s.lower) / (s.upper - s.lower)
}

/// Centered per-level encoding of a categorical covariate.
///
/// Column `c` is `n / (n - 1) * (1{level == c} - 1/n)`: every column sums to
/// zero over the levels and the observed level's own column is exactly 1. A
/// binary covariate gets two columns, `(+1, -1)` and `(-1, +1)`.
pub fn categorical_expansion(level: usize, n_levels: usize) -> Result<Vec<f64>> {
    if n_levels < 2 {
        return Err(Error::Contract(format!(
            "categorical covariate needs >= 2 levels, got {n_levels}"
        )));
    }
    if level >= n_levels {
        return Err(Error::Contract(format!(
            "level {level} out of range for {n_levels} levels"
        )));
    }
    let n = n_levels as f64;
    let scale = n / (n - 1.0);
    Ok((0..n_levels)
        .map(|c| scale * (if c == level { 1.0 } else { 0.0 } - 1.0 / n))
        .collect())
}
