//! Reference clusterers: Lloyd's k-means and hard-assignment EM.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::bic::{fit_gmm_with, scaled_reg, CovarianceKind, GmmOptions};
use crate::error::{Error, Result};
use crate::seed;

pub const KMEANS_MAX_ITER: usize = 300;

/// Mixture settings used by [`em_cluster`].
pub const EM_REG_SCALE: f64 = 1e-6;
pub const EM_COVARIANCE: CovarianceKind = CovarianceKind::Diagonal;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansResult {
    pub centroids: Array2<f64>,
    pub assignments: Vec<usize>,
    pub inertia: f64,
    pub iterations_used: usize,
    /// Inertia after every assignment pass.
    pub inertia_trace: Vec<f64>,
}

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(row: ArrayView1<'_, f64>, centroids: &Array2<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centroids.rows().into_iter().enumerate() {
        let d = sq_dist(row, c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

fn assign(data: ArrayView2<'_, f64>, centroids: &Array2<f64>) -> (Vec<usize>, Vec<f64>) {
    data.rows().into_iter().map(|r| nearest(r, centroids)).unzip()
}

/// Lloyd's algorithm from `k` distinct random rows. Stops when the
/// assignments no longer change or after `max_iter` centroid updates.
pub fn kmeans(
    data: ArrayView2<'_, f64>,
    k: usize,
    seed: u64,
    max_iter: usize,
) -> Result<KMeansResult> {
    let (n, d) = data.dim();
    if k == 0 || n < k {
        return Err(Error::invalid(format!("need N >= k >= 1, got N = {n}, k = {k}")));
    }
    if max_iter == 0 {
        return Err(Error::invalid("max_iter must be at least 1"));
    }
    let mut rng = seed::stream(seed, "kmeans", 0);
    let picks = index::sample(&mut rng, n, k).into_vec();
    let mut centroids = data.select(ndarray::Axis(0), &picks);

    let (mut labels, mut dists) = assign(data, &centroids);
    let mut trace = vec![dists.iter().sum::<f64>()];
    let mut iterations_used = 0;
    for it in 1..=max_iter {
        let mut sums = Array2::<f64>::zeros((k, d));
        let mut counts = vec![0usize; k];
        for (row, &l) in data.rows().into_iter().zip(&labels) {
            sums.row_mut(l).zip_mut_with(&row, |s, &v| *s += v);
            counts[l] += 1;
        }
        let mut taken = vec![false; n];
        for j in 0..k {
            if counts[j] > 0 {
                let m = sums.row(j).mapv(|v| v / counts[j] as f64);
                centroids.row_mut(j).assign(&m);
            } else {
                // farthest point from its own centroid, each used at most once
                let s = (0..n)
                    .filter(|&s| !taken[s])
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                    .expect("n >= k");
                taken[s] = true;
                centroids.row_mut(j).assign(&data.row(s));
            }
        }
        let (new_labels, new_dists) = assign(data, &centroids);
        trace.push(new_dists.iter().sum());
        iterations_used = it;
        let stable = new_labels == labels;
        labels = new_labels;
        dists = new_dists;
        if stable {
            break;
        }
    }
    Ok(KMeansResult {
        centroids,
        assignments: labels,
        inertia: dists.iter().sum(),
        iterations_used,
        inertia_trace: trace,
    })
}

/// Lowest-inertia result of `restarts` k-means runs with derived seeds.
pub fn kmeans_best_of(
    data: ArrayView2<'_, f64>,
    k: usize,
    seed: u64,
    max_iter: usize,
    restarts: usize,
) -> Result<KMeansResult> {
    if restarts == 0 {
        return Err(Error::invalid("restarts must be at least 1"));
    }
    let mut best: Option<KMeansResult> = None;
    for r in 0..restarts {
        let res = kmeans(data, k, seed::derive(seed, "kmeans-restart", r as u64), max_iter)?;
        if best.as_ref().is_none_or(|b| res.inertia < b.inertia) {
            best = Some(res);
        }
    }
    Ok(best.expect("restarts >= 1"))
}

/// Fit a `k`-component mixture and give each sample its most responsible
/// component. Uses diagonal covariances.
pub fn em_cluster(data: ArrayView2<'_, f64>, k: usize, seed: u64) -> Result<Vec<usize>> {
    let opts = GmmOptions::new(scaled_reg(data, EM_REG_SCALE)).with_kind(EM_COVARIANCE);
    em_cluster_with(data, k, seed, &opts)
}

pub fn em_cluster_with(
    data: ArrayView2<'_, f64>,
    k: usize,
    seed: u64,
    opts: &GmmOptions,
) -> Result<Vec<usize>> {
    let fit = fit_gmm_with(data, k, seed, opts)?;
    fit.mixture.predict(data)
}
