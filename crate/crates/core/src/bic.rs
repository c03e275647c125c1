//! Gaussian mixtures fitted by EM, and choice of the cluster count by the
//! Bayesian information criterion `BIC = ln(N) k - 2 ln L`.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::kmeans;
use crate::error::{Error, Result};
use crate::seed;

/// Absolute log-likelihood improvement below which EM stops.
pub const EM_TOLERANCE: f64 = 1e-6;
pub const EM_MAX_ITER: usize = 200;
/// Lloyd iterations used to initialise EM.
pub const INIT_KMEANS_ITER: usize = 10;
/// Two BIC values closer than this count as tied.
pub const BIC_TIE: f64 = 1e-9;
/// Largest candidate count considered by default.
pub const DEFAULT_CMAX_CAP: usize = 20;

// A component whose total responsibility drops to this is treated as empty.
const EMPTY_COMPONENT: f64 = 1e-8;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovarianceKind {
    #[default]
    Full,
    Diagonal,
}

impl std::str::FromStr for CovarianceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Self::Full),
            "diagonal" | "diag" => Ok(Self::Diagonal),
            _ => Err(Error::invalid(format!(
                "unknown covariance kind {s:?} (expected full or diagonal)"
            ))),
        }
    }
}

/// Mixture of `c` Gaussians in `d` dimensions. Diagonal mixtures store
/// their covariances as full matrices with zero off-diagonal entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    pub kind: CovarianceKind,
    pub weights: Vec<f64>,
    pub means: Array2<f64>,
    pub covariances: Vec<Array2<f64>>,
}

impl GaussianMixture {
    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.ncols()
    }

    fn densities(&self) -> Result<Vec<ComponentDensity>> {
        (0..self.n_components())
            .map(|k| {
                ComponentDensity::new(
                    self.weights[k],
                    self.means.row(k),
                    &self.covariances[k],
                )
            })
            .collect()
    }

    /// `ln(pi_k N(x_s; mu_k, Sigma_k))` for every sample and component.
    fn weighted_log_densities(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.dim() {
            return Err(Error::shape(format!(
                "mixture has dimension {}, data has {} columns",
                self.dim(),
                x.ncols()
            )));
        }
        let dens = self.densities()?;
        let mut out = Array2::zeros((x.nrows(), dens.len()));
        let mut buf = vec![0.0; self.dim()];
        for (s, row) in x.rows().into_iter().enumerate() {
            for (k, comp) in dens.iter().enumerate() {
                out[[s, k]] = comp.log_pdf(row, &mut buf);
            }
        }
        Ok(out)
    }

    /// Posterior component probabilities, `N x c`.
    pub fn responsibilities(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let mut lw = self.weighted_log_densities(x)?;
        for mut row in lw.rows_mut() {
            let norm = log_sum_exp(row.view());
            row.mapv_inplace(|v| (v - norm).exp());
        }
        Ok(lw)
    }

    /// Index of the most responsible component for every sample (ties go to
    /// the lower index).
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
        let lw = self.weighted_log_densities(x)?;
        Ok(lw.rows().into_iter().map(|r| argmax(r)).collect())
    }
}

struct ComponentDensity {
    mean: Vec<f64>,
    // row-major lower Cholesky factor
    chol: Vec<f64>,
    log_norm: f64,
}

impl ComponentDensity {
    fn new(weight: f64, mean: ArrayView1<'_, f64>, cov: &Array2<f64>) -> Result<Self> {
        let d = mean.len();
        let m = DMatrix::from_fn(d, d, |i, j| cov[[i, j]]);
        let l = m
            .cholesky()
            .ok_or_else(|| Error::Numerical("covariance is not positive definite".into()))?
            .unpack();
        let chol: Vec<f64> = (0..d * d).map(|idx| l[(idx / d, idx % d)]).collect();
        let log_det: f64 = (0..d).map(|i| 2.0 * l[(i, i)].ln()).sum();
        let log_norm = weight.ln() - 0.5 * (d as f64 * LN_2PI + log_det);
        if log_norm.is_nan() || log_norm == f64::INFINITY {
            return Err(Error::Numerical(format!("degenerate component normaliser {log_norm}")));
        }
        Ok(Self {
            mean: mean.to_vec(),
            chol,
            log_norm,
        })
    }

    fn log_pdf(&self, x: ArrayView1<'_, f64>, z: &mut [f64]) -> f64 {
        let d = self.mean.len();
        let mut q = 0.0;
        for i in 0..d {
            let row = &self.chol[i * d..i * d + i];
            let acc: f64 = row.iter().zip(&z[..i]).map(|(a, b)| a * b).sum();
            z[i] = (x[i] - self.mean[i] - acc) / self.chol[i * d + i];
            q += z[i] * z[i];
        }
        self.log_norm - 0.5 * q
    }
}

fn log_sum_exp(v: ArrayView1<'_, f64>) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn argmax(v: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// `sum_s ln sum_c pi_c N(x_s; mu_c, Sigma_c)`.
pub fn log_likelihood(gmm: &GaussianMixture, features: ArrayView2<'_, f64>) -> Result<f64> {
    let lw = gmm.weighted_log_densities(features)?;
    let total: f64 = lw.rows().into_iter().map(log_sum_exp).sum();
    if !total.is_finite() {
        return Err(Error::Numerical(format!("log-likelihood is {total}")));
    }
    Ok(total)
}

/// EM settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmOptions {
    /// Added to every covariance diagonal after each M-step.
    pub reg: f64,
    pub kind: CovarianceKind,
    pub max_iter: usize,
    pub tol: f64,
}

impl GmmOptions {
    pub fn new(reg: f64) -> Self {
        Self {
            reg,
            kind: CovarianceKind::Full,
            max_iter: EM_MAX_ITER,
            tol: EM_TOLERANCE,
        }
    }

    pub fn with_kind(mut self, kind: CovarianceKind) -> Self {
        self.kind = kind;
        self
    }
}

/// A fitted mixture with its EM diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmFit {
    pub mixture: GaussianMixture,
    /// Log-likelihood after each E-step; the last entry belongs to `mixture`.
    pub loglik_trace: Vec<f64>,
    /// Whether an empty component had to be re-seeded.
    pub reseeded: bool,
}

impl GmmFit {
    pub fn loglik(&self) -> f64 {
        *self.loglik_trace.last().expect("trace is never empty")
    }
}

/// Fit a full-covariance mixture with `c` components.
pub fn fit_gmm(
    features: ArrayView2<'_, f64>,
    c: usize,
    seed: u64,
    reg: f64,
) -> Result<GaussianMixture> {
    fit_gmm_with(features, c, seed, &GmmOptions::new(reg)).map(|f| f.mixture)
}

/// EM from hard k-means responsibilities.
pub fn fit_gmm_with(
    x: ArrayView2<'_, f64>,
    c: usize,
    seed: u64,
    opts: &GmmOptions,
) -> Result<GmmFit> {
    let (n, d) = x.dim();
    if c == 0 || n < c {
        return Err(Error::invalid(format!("need N >= c >= 1, got N = {n}, c = {c}")));
    }
    if d == 0 {
        return Err(Error::invalid("features have no columns"));
    }
    if !(opts.reg >= 0.0 && opts.reg.is_finite()) {
        return Err(Error::invalid(format!("reg must be >= 0, got {}", opts.reg)));
    }
    if opts.max_iter == 0 {
        return Err(Error::invalid("max_iter must be at least 1"));
    }

    let km = kmeans(x, c, seed::derive(seed, "gmm-init", 0), INIT_KMEANS_ITER)?;
    let mut resp = Array2::zeros((n, c));
    for (s, &k) in km.assignments.iter().enumerate() {
        resp[[s, k]] = 1.0;
    }

    let spread = column_variances(x);
    let mut reseeded = false;
    let mut trace = Vec::new();
    let mut mixture: Option<GaussianMixture> = None;
    loop {
        let (m, again) = m_step(x, &resp, opts, &spread, mixture.as_ref())?;
        reseeded |= again;
        let mixture = mixture.insert(m);
        let lw = mixture.weighted_log_densities(x)?;
        let mut ll = 0.0;
        for (s, row) in lw.rows().into_iter().enumerate() {
            let norm = log_sum_exp(row);
            ll += norm;
            for k in 0..c {
                resp[[s, k]] = (row[k] - norm).exp();
            }
        }
        if !ll.is_finite() {
            return Err(Error::Numerical(format!("EM log-likelihood became {ll}")));
        }
        let done = match trace.last() {
            Some(&prev) => ll - prev < opts.tol,
            None => false,
        };
        trace.push(ll);
        if done || trace.len() >= opts.max_iter {
            break;
        }
    }
    Ok(GmmFit {
        mixture: mixture.expect("at least one EM iteration"),
        loglik_trace: trace,
        reseeded,
    })
}

fn column_variances(x: ArrayView2<'_, f64>) -> Array1<f64> {
    x.var_axis(Axis(0), 0.0)
}

/// `ln|S| + tr(S^-1 A)`; smaller means a larger expected complete-data
/// log-likelihood for a component with scatter `A`.
fn covariance_cost(cov: &Array2<f64>, scatter: &Array2<f64>) -> Option<f64> {
    let d = cov.nrows();
    let chol = DMatrix::from_fn(d, d, |i, j| cov[[i, j]]).cholesky()?;
    let log_det: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
    let a = DMatrix::from_fn(d, d, |i, j| scatter[[i, j]]);
    Some(log_det + chol.solve(&a).trace())
}

/// Weighted means and covariances from responsibilities. An empty
/// component restarts at the sample farthest from every populated mean.
///
/// Adding `reg` to a covariance can lower the expected complete-data
/// likelihood; when it would, the previous covariance is kept, which makes
/// every iteration a generalised EM step and the likelihood non-decreasing.
fn m_step(
    x: ArrayView2<'_, f64>,
    resp: &Array2<f64>,
    opts: &GmmOptions,
    spread: &Array1<f64>,
    prev: Option<&GaussianMixture>,
) -> Result<(GaussianMixture, bool)> {
    let (n, d) = x.dim();
    let c = resp.ncols();
    let nk = resp.sum_axis(Axis(0));
    let mut means = resp.t().dot(&x);
    let populated: Vec<usize> = (0..c).filter(|&k| nk[k] > EMPTY_COMPONENT).collect();
    for &k in &populated {
        means.row_mut(k).mapv_inplace(|v| v / nk[k]);
    }

    let mut weights: Vec<f64> = nk.iter().map(|v| v / n as f64).collect();
    let mut covariances = Vec::with_capacity(c);
    let mut reseeded = false;
    for k in 0..c {
        if nk[k] > EMPTY_COMPONENT {
            let mut cov = Array2::zeros((d, d));
            let centred = &x - &means.row(k);
            match opts.kind {
                CovarianceKind::Full => {
                    let weighted = &centred * &resp.column(k).insert_axis(Axis(1));
                    cov = weighted.t().dot(&centred) / nk[k];
                }
                CovarianceKind::Diagonal => {
                    for j in 0..d {
                        let v: f64 = centred
                            .column(j)
                            .iter()
                            .zip(resp.column(k))
                            .map(|(a, r)| r * a * a)
                            .sum();
                        cov[[j, j]] = v / nk[k];
                    }
                }
            }
            let scatter = cov.clone();
            for j in 0..d {
                cov[[j, j]] += opts.reg;
            }
            if let Some(old) = prev.map(|p| &p.covariances[k]) {
                let keep_old = match (covariance_cost(old, &scatter), covariance_cost(&cov, &scatter)) {
                    (Some(o), Some(n)) => o < n,
                    (Some(_), None) => true,
                    _ => false,
                };
                if keep_old {
                    cov = old.clone();
                }
            }
            covariances.push(cov);
        } else {
            reseeded = true;
            let s = farthest_sample(x, &means, &populated);
            means.row_mut(k).assign(&x.row(s));
            weights[k] = 1.0 / n as f64;
            let mut cov = Array2::zeros((d, d));
            for j in 0..d {
                cov[[j, j]] = spread[j] + opts.reg;
            }
            covariances.push(cov);
        }
    }
    if reseeded {
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
    }
    Ok((
        GaussianMixture {
            kind: opts.kind,
            weights,
            means,
            covariances,
        },
        reseeded,
    ))
}

fn farthest_sample(x: ArrayView2<'_, f64>, means: &Array2<f64>, populated: &[usize]) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (s, row) in x.rows().into_iter().enumerate() {
        let nearest = populated
            .iter()
            .map(|&k| {
                row.iter()
                    .zip(means.row(k))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
            })
            .fold(f64::INFINITY, f64::min);
        if nearest > best.1 {
            best = (s, nearest);
        }
    }
    best.0
}

/// Free parameters of a full-covariance mixture:
/// `(c - 1) + c d + c d (d + 1) / 2`.
pub fn count_free_params(c: usize, d: usize) -> usize {
    count_free_params_for(CovarianceKind::Full, c, d)
}

pub fn count_free_params_for(kind: CovarianceKind, c: usize, d: usize) -> usize {
    let cov = match kind {
        CovarianceKind::Full => d * (d + 1) / 2,
        CovarianceKind::Diagonal => d,
    };
    c.saturating_sub(1) + c * d + c * cov
}

/// `ln(N) k - 2 loglik`.
pub fn bic_score(loglik: f64, k: usize, n_samples: usize) -> f64 {
    (n_samples as f64).ln() * k as f64 - 2.0 * loglik
}

/// Default search range `min(20, ceil(sqrt(N)))`.
pub fn default_cmax(n_samples: usize) -> usize {
    let root = (n_samples as f64).sqrt().ceil() as usize;
    root.clamp(1, DEFAULT_CMAX_CAP)
}

/// Cluster-count search settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BicConfig {
    /// Largest count tried; `None` means [`default_cmax`].
    pub c_max: Option<usize>,
    pub restarts: usize,
    /// Covariance regulariser as a multiple of the mean feature variance.
    pub reg_scale: f64,
    pub kind: CovarianceKind,
    pub seed: u64,
}

impl Default for BicConfig {
    fn default() -> Self {
        Self {
            c_max: None,
            restarts: 5,
            reg_scale: 0.05,
            kind: CovarianceKind::Full,
            seed: 0,
        }
    }
}

/// Regulariser `scale * mean(column variances)`, kept strictly positive.
pub fn scaled_reg(features: ArrayView2<'_, f64>, scale: f64) -> f64 {
    let v = column_variances(features).mean().unwrap_or(0.0);
    scale * v.max(1e-12)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BicCandidate {
    pub c: usize,
    pub k: usize,
    pub loglik: f64,
    pub bic: f64,
    pub reseeded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BicResult {
    pub candidates: Vec<BicCandidate>,
    pub selected: usize,
}

impl BicResult {
    pub fn candidate_counts(&self) -> Vec<usize> {
        self.candidates.iter().map(|c| c.c).collect()
    }

    pub fn bic_values(&self) -> Vec<f64> {
        self.candidates.iter().map(|c| c.bic).collect()
    }

    pub fn free_params(&self) -> Vec<usize> {
        self.candidates.iter().map(|c| c.k).collect()
    }

    pub fn loglik(&self) -> Vec<f64> {
        self.candidates.iter().map(|c| c.loglik).collect()
    }
}

/// Pick the minimum-BIC candidate; near-ties go to the smaller count.
pub fn argmin_bic(candidates: &[BicCandidate]) -> Option<usize> {
    let mut best: Option<&BicCandidate> = None;
    for cand in candidates {
        best = match best {
            Some(b) if cand.bic >= b.bic - BIC_TIE => Some(b),
            _ => Some(cand),
        };
    }
    best.map(|b| b.c)
}

/// Try every `c` in `1..=c_max` with `restarts` EM fits each.
pub fn select_clusters(
    features: ArrayView2<'_, f64>,
    c_max: usize,
    restarts: usize,
    seed: u64,
) -> Result<BicResult> {
    select_clusters_with(
        features,
        &BicConfig {
            c_max: Some(c_max),
            restarts,
            seed,
            ..BicConfig::default()
        },
    )
}

pub fn select_clusters_with(features: ArrayView2<'_, f64>, cfg: &BicConfig) -> Result<BicResult> {
    let n = features.nrows();
    let c_max = cfg.c_max.unwrap_or_else(|| default_cmax(n));
    if c_max == 0 || cfg.restarts == 0 {
        return Err(Error::invalid("c_max and restarts must be at least 1"));
    }
    if n == 0 {
        return Err(Error::invalid("no samples to cluster"));
    }
    let c_max = c_max.min(n);
    let opts = GmmOptions::new(scaled_reg(features, cfg.reg_scale)).with_kind(cfg.kind);
    let d = features.ncols();

    let candidates: Vec<BicCandidate> = (1..=c_max)
        .into_par_iter()
        .map(|c| {
            let mut best: Option<GmmFit> = None;
            for r in 0..cfg.restarts {
                let s = seed::derive(seed::derive(cfg.seed, "bic", c as u64), "restart", r as u64);
                let fit = fit_gmm_with(features, c, s, &opts)?;
                if best.as_ref().is_none_or(|b| fit.loglik() > b.loglik()) {
                    best = Some(fit);
                }
            }
            let fit = best.expect("restarts >= 1");
            let k = count_free_params_for(cfg.kind, c, d);
            Ok(BicCandidate {
                c,
                k,
                loglik: fit.loglik(),
                bic: bic_score(fit.loglik(), k, n),
                reseeded: fit.reseeded,
            })
        })
        .collect::<Result<_>>()?;

    let selected = argmin_bic(&candidates).expect("at least one candidate");
    Ok(BicResult {
        candidates,
        selected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::Rng as _;
    use rand_distr::{Distribution, StandardNormal};

    fn blobs(centres: &[[f64; 2]], per: usize, sd: f64, seed: u64) -> Array2<f64> {
        let mut rng = seed::rng(seed);
        let mut out = Array2::zeros((centres.len() * per, 2));
        for (b, c) in centres.iter().enumerate() {
            for i in 0..per {
                for j in 0..2 {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    out[[b * per + i, j]] = c[j] + sd * z;
                }
            }
        }
        out
    }

    fn naive_density(x: &[f64], mean: &[f64], cov: &Array2<f64>) -> f64 {
        // explicit inverse and determinant through nalgebra's LU
        let d = x.len();
        let m = DMatrix::from_fn(d, d, |i, j| cov[[i, j]]);
        let inv = m.clone().try_inverse().unwrap();
        let det = m.determinant();
        let diff: Vec<f64> = x.iter().zip(mean).map(|(a, b)| a - b).collect();
        let mut q = 0.0;
        for i in 0..d {
            for j in 0..d {
                q += diff[i] * inv[(i, j)] * diff[j];
            }
        }
        (-0.5 * q).exp() / ((2.0 * std::f64::consts::PI).powi(d as i32) * det).sqrt()
    }

    #[test]
    fn free_parameter_counts() {
        assert_eq!(count_free_params(1, 1), 2);
        assert_eq!(count_free_params(2, 1), 5);
        assert_eq!(count_free_params(3, 10), 2 + 30 + 3 * 55);
        assert_eq!(count_free_params_for(CovarianceKind::Diagonal, 3, 10), 2 + 30 + 30);
        for d in 1..8 {
            for c in 2..10 {
                assert_eq!(
                    count_free_params(c, d) - count_free_params(c - 1, d),
                    1 + d + d * (d + 1) / 2
                );
            }
        }
    }

    #[test]
    fn bic_arithmetic() {
        assert_eq!(bic_score(0.0, 0, 10), 0.0);
        assert_abs_diff_eq!(bic_score(-5.0, 2, 3), 3f64.ln() * 2.0 + 10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(bic_score(-5.0, 2, 3), 12.197_224_577_336_219, epsilon = 1e-9);
        assert!(bic_score(-5.0, 3, 50) > bic_score(-5.0, 2, 50));
        let slope = bic_score(1.0, 7, 20) - bic_score(1.0, 6, 20);
        assert_abs_diff_eq!(slope, 20f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(bic_score(3.5, 4, 20) - bic_score(1.0, 4, 20), -5.0, epsilon = 1e-12);
    }

    #[test]
    fn cmax_default() {
        assert_eq!(default_cmax(150), 13);
        assert_eq!(default_cmax(10_000), 20);
        assert_eq!(default_cmax(1), 1);
    }

    #[test]
    fn standard_normal_at_mean() {
        let g = GaussianMixture {
            kind: CovarianceKind::Full,
            weights: vec![1.0],
            means: array![[0.0]],
            covariances: vec![array![[1.0]]],
        };
        assert_abs_diff_eq!(
            log_likelihood(&g, array![[0.0]].view()).unwrap(),
            -0.918_938_533_204_672_7,
            epsilon = 1e-12
        );
    }

    #[test]
    fn duplicated_samples_double_loglik() {
        let x = blobs(&[[0.0, 0.0], [4.0, 1.0]], 20, 1.0, 3);
        let g = fit_gmm(x.view(), 2, 1, 1e-6).unwrap();
        let doubled = ndarray::concatenate(Axis(0), &[x.view(), x.view()]).unwrap();
        assert_abs_diff_eq!(
            log_likelihood(&g, doubled.view()).unwrap(),
            2.0 * log_likelihood(&g, x.view()).unwrap(),
            epsilon = 1e-9
        );
    }

    #[test]
    fn loglik_matches_naive_sum() {
        let x = blobs(&[[0.0, 0.0], [3.0, 3.0], [0.0, 5.0]], 15, 1.2, 8);
        for kind in [CovarianceKind::Full, CovarianceKind::Diagonal] {
            let g = fit_gmm_with(x.view(), 3, 4, &GmmOptions::new(1e-3).with_kind(kind))
                .unwrap()
                .mixture;
            let mut expect = 0.0;
            for row in x.rows() {
                let p: f64 = (0..3)
                    .map(|k| {
                        g.weights[k]
                            * naive_density(&row.to_vec(), &g.means.row(k).to_vec(), &g.covariances[k])
                    })
                    .sum();
                expect += p.ln();
            }
            assert_abs_diff_eq!(log_likelihood(&g, x.view()).unwrap(), expect, epsilon = 1e-8);
        }
    }

    #[test]
    fn single_component_is_closed_form() {
        let x = blobs(&[[1.0, -2.0]], 50, 0.7, 5);
        let reg = 1e-3;
        let g = fit_gmm(x.view(), 1, 0, reg).unwrap();
        let mean = x.mean_axis(Axis(0)).unwrap();
        let centred = &x - &mean;
        let mut cov = centred.t().dot(&centred) / 50.0;
        cov[[0, 0]] += reg;
        cov[[1, 1]] += reg;
        assert_abs_diff_eq!(g.weights[0], 1.0, epsilon = 1e-12);
        for j in 0..2 {
            assert_abs_diff_eq!(g.means[[0, j]], mean[j], epsilon = 1e-12);
            for i in 0..2 {
                assert_abs_diff_eq!(g.covariances[0][[i, j]], cov[[i, j]], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn recovers_two_gaussians() {
        let x = blobs(&[[0.0, 0.0], [10.0, 10.0]], 200, 1.0, 11);
        let g = fit_gmm(x.view(), 2, 2, 1e-6).unwrap();
        let mut found: Vec<[f64; 2]> = (0..2).map(|k| [g.means[[k, 0]], g.means[[k, 1]]]).collect();
        found.sort_by(|a, b| a[0].total_cmp(&b[0]));
        for (m, t) in found.iter().zip([[0.0, 0.0], [10.0, 10.0]]) {
            assert!((m[0] - t[0]).abs() < 0.5 && (m[1] - t[1]).abs() < 0.5, "{m:?}");
        }
        assert_abs_diff_eq!(g.weights.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
        assert_eq!(g, fit_gmm(x.view(), 2, 2, 1e-6).unwrap());
    }

    #[test]
    fn rejects_bad_input() {
        let x = blobs(&[[0.0, 0.0]], 3, 1.0, 0);
        assert!(fit_gmm(x.view(), 4, 0, 1e-6).is_err());
        assert!(fit_gmm(x.view(), 0, 0, 1e-6).is_err());
        assert!(fit_gmm(x.view(), 1, 0, -1.0).is_err());
        assert!(select_clusters(x.view(), 0, 1, 0).is_err());
    }

    #[test]
    fn empty_component_is_reseeded() {
        // four identical points and one outlier: two of three k-means
        // clusters end up fighting over the same location
        let x = array![[0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [9.0, 9.0]];
        let fit = fit_gmm_with(x.view(), 3, 0, &GmmOptions::new(1e-3)).unwrap();
        assert!(fit.loglik().is_finite());
        assert_abs_diff_eq!(fit.mixture.weights.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn tie_goes_to_smaller_count() {
        let cand = |c, bic| BicCandidate {
            c,
            k: 0,
            loglik: 0.0,
            bic,
            reseeded: false,
        };
        assert_eq!(argmin_bic(&[cand(1, 5.0), cand(2, 5.0 - 1e-10), cand(3, 6.0)]), Some(1));
        assert_eq!(argmin_bic(&[cand(1, 5.0), cand(2, 4.0), cand(3, 4.0)]), Some(2));
        assert_eq!(argmin_bic(&[cand(1, 5.0), cand(2, 4.0), cand(3, 3.0)]), Some(3));
    }

    #[test]
    fn selects_one_for_single_blob() {
        let x = blobs(&[[0.0, 0.0]], 200, 0.1, 21);
        let r = select_clusters(x.view(), 5, 2, 3).unwrap();
        assert_eq!(r.selected, 1);
        assert_eq!(r.candidate_counts(), vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn selects_three_blobs() {
        let x = blobs(&[[0.0, 0.0], [10.0, 0.0], [5.0, 8.66]], 100, 1.0, 2);
        let r = select_clusters(x.view(), 8, 3, 7).unwrap();
        assert_eq!(r.selected, 3);
        assert_eq!(r, select_clusters(x.view(), 8, 3, 7).unwrap());
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"bic\""));
    }

    #[test]
    fn em_is_monotone_on_random_instances() {
        let mut rng = seed::rng(77);
        let mut checked = 0;
        for inst in 0..50 {
            let n = rng.random_range(10..40);
            let d = rng.random_range(1..4);
            let c = rng.random_range(1..4);
            let x = Array2::from_shape_simple_fn((n, d), || rng.random_range(0.0..1.0));
            for kind in [CovarianceKind::Full, CovarianceKind::Diagonal] {
                let fit = fit_gmm_with(x.view(), c, inst, &GmmOptions::new(1e-6).with_kind(kind)).unwrap();
                if fit.reseeded {
                    continue;
                }
                checked += 1;
                for w in fit.loglik_trace.windows(2) {
                    assert!(w[1] >= w[0] - 1e-8, "instance {inst}: {} -> {}", w[0], w[1]);
                }
            }
        }
        assert!(checked >= 50);
    }
}
