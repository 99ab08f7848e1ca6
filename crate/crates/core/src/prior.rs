//! Latent prior fitted to aggregated-posterior samples: a diagonal Gaussian
//! mixture trained by EM, or a Gaussian product-kernel density estimate.
//! Generation draws from the fitted prior ancestrally.

use crate::error::{Error, Result};
use crate::kmeans::kmeans;
use crate::linalg::Matrix;
use crate::model::LatentBatch;
use crate::rng::SeedStream;

/// Components below this variance are floored (a collapse warning is
/// recorded on the fit).
pub const GMM_VAR_FLOOR: f64 = 1e-6;

/// Bandwidth floor for zero-variance dimensions.
pub const KDE_BANDWIDTH_FLOOR: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct GmmModel {
    /// Mixture weights, on the simplex.
    pub weights: Vec<f64>,
    /// K x d component means.
    pub means: Matrix,
    /// K x d diagonal variances, strictly positive.
    pub vars: Matrix,
    /// Total log-likelihood after each EM iteration (not persisted).
    pub ll_trace: Vec<f64>,
    /// Components that hit the variance floor during fitting.
    pub collapsed: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct KdeModel {
    /// Stored support points, n x d.
    pub points: Matrix,
    /// Per-dimension kernel bandwidth (standard deviation), positive.
    pub bandwidth: Vec<f64>,
}

/// A fitted prior over the latent space.
#[derive(Clone, Debug)]
pub enum PriorModel {
    Gmm(GmmModel),
    Kde(KdeModel),
}

impl PriorModel {
    pub fn latent_dim(&self) -> usize {
        match self {
            PriorModel::Gmm(g) => g.means.cols(),
            PriorModel::Kde(k) => k.points.cols(),
        }
    }
}

/// KDE bandwidth choice.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KdeBandwidth {
    /// Per-dimension Silverman rule `sigma_k (4 / ((d + 2) n))^{1/(d+4)}`.
    Auto,
    Fixed(f64),
}

/// Fit a diagonal-covariance Gaussian mixture by EM.
///
/// Initialization is seeded k-means++; the per-iteration total
/// log-likelihood is nondecreasing and recorded in the returned trace.
/// Convergence when the improvement drops below `tol` or after
/// `max_iters` iterations.
pub fn fit_gmm(z: &Matrix, k: usize, seed: u64, max_iters: usize, tol: f64) -> Result<PriorModel> {
    let n = z.rows();
    let d = z.cols();
    if k == 0 || n < k {
        return Err(Error::InvalidConfig(format!(
            "fit_gmm needs 1 <= K <= n, got K={k}, n={n}"
        )));
    }
    // k-means++ seeding with a short Lloyd refinement
    let km = kmeans(z, k, 10, seed)?;
    let mut means = km.centroids;
    let mut weights = vec![1.0 / k as f64; k];
    // start every component at the pooled per-dimension variance
    let pooled = column_variances(z);
    let mut vars = Matrix::zeros(k, d);
    for c in 0..k {
        for (dst, &v) in vars.row_mut(c).iter_mut().zip(&pooled) {
            *dst = v.max(GMM_VAR_FLOOR);
        }
    }

    let mut ll_trace = Vec::new();
    let mut collapsed = Vec::new();
    let mut resp = Matrix::zeros(n, k);
    let mut prev_ll = f64::NEG_INFINITY;

    for _ in 0..max_iters {
        // E-step
        let mut ll = 0.0;
        for i in 0..n {
            let zi = z.row(i);
            let row = resp.row_mut(i);
            let mut max = f64::NEG_INFINITY;
            for c in 0..k {
                row[c] = weights[c].ln() + diag_gauss_logpdf(zi, means.row(c), vars.row(c));
                if row[c] > max {
                    max = row[c];
                }
            }
            let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
            ll += lse;
            for v in row.iter_mut() {
                *v = (*v - lse).exp();
            }
        }
        ll_trace.push(ll);

        // M-step
        for c in 0..k {
            let nk: f64 = (0..n).map(|i| resp[(i, c)]).sum();
            let nk_safe = nk.max(1e-32);
            weights[c] = nk / n as f64;
            for dim in 0..d {
                let mean: f64 = (0..n).map(|i| resp[(i, c)] * z[(i, dim)]).sum::<f64>() / nk_safe;
                means[(c, dim)] = mean;
            }
            let mut floored = false;
            for dim in 0..d {
                let var: f64 = (0..n)
                    .map(|i| {
                        let diff = z[(i, dim)] - means[(c, dim)];
                        resp[(i, c)] * diff * diff
                    })
                    .sum::<f64>()
                    / nk_safe;
                if var < GMM_VAR_FLOOR {
                    floored = true;
                }
                vars[(c, dim)] = var.max(GMM_VAR_FLOOR);
            }
            if floored && !collapsed.contains(&c) {
                collapsed.push(c);
            }
        }
        // renormalize weights against accumulated rounding
        let wsum: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= wsum;
        }

        if ll - prev_ll < tol && prev_ll.is_finite() {
            break;
        }
        prev_ll = ll;
    }

    Ok(PriorModel::Gmm(GmmModel {
        weights,
        means,
        vars,
        ll_trace,
        collapsed,
    }))
}

/// Fit a Gaussian product-kernel density estimate.
///
/// Auto bandwidth applies the per-dimension Silverman rule; dimensions
/// with zero sample variance fall back to [`KDE_BANDWIDTH_FLOOR`].
pub fn fit_kde(z: &Matrix, bandwidth: KdeBandwidth) -> Result<PriorModel> {
    let n = z.rows();
    let d = z.cols();
    if n == 0 {
        return Err(Error::data("fit_kde needs at least one point"));
    }
    let bw = match bandwidth {
        KdeBandwidth::Fixed(h) => {
            if h.is_nan() || h <= 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "bandwidth must be > 0, got {h}"
                )));
            }
            vec![h; d]
        }
        KdeBandwidth::Auto => {
            let factor = (4.0 / ((d as f64 + 2.0) * n as f64)).powf(1.0 / (d as f64 + 4.0));
            column_stds(z)
                .into_iter()
                .map(|s| {
                    let h = s * factor;
                    if h > 0.0 {
                        h
                    } else {
                        KDE_BANDWIDTH_FLOOR
                    }
                })
                .collect()
        }
    };
    Ok(PriorModel::Kde(KdeModel {
        points: z.clone(),
        bandwidth: bw,
    }))
}

/// Log-density of the fitted prior at one latent row.
pub fn prior_logpdf(model: &PriorModel, z: &[f64]) -> Result<f64> {
    if z.len() != model.latent_dim() {
        return Err(Error::ShapeMismatch(format!(
            "prior_logpdf row width {} != latent dim {}",
            z.len(),
            model.latent_dim()
        )));
    }
    Ok(match model {
        PriorModel::Gmm(g) => {
            let terms: Vec<f64> = (0..g.weights.len())
                .map(|c| g.weights[c].ln() + diag_gauss_logpdf(z, g.means.row(c), g.vars.row(c)))
                .collect();
            log_sum_exp(&terms)
        }
        PriorModel::Kde(kde) => {
            let n = kde.points.rows();
            let var: Vec<f64> = kde.bandwidth.iter().map(|&h| h * h).collect();
            let terms: Vec<f64> = (0..n)
                .map(|i| diag_gauss_logpdf(z, kde.points.row(i), &var))
                .collect();
            log_sum_exp(&terms) - (n as f64).ln()
        }
    })
}

/// Ancestral sampling from the fitted prior: component (or support point),
/// then a Gaussian draw. Deterministic per seed. The returned batch records
/// the chosen means/variances and noise.
pub fn sample_prior(model: &PriorModel, count: usize, seed: u64) -> Result<LatentBatch> {
    let d = model.latent_dim();
    let mut rng = SeedStream::new(seed);
    let mut mu = Matrix::zeros(count, d);
    let mut sigma2 = Matrix::zeros(count, d);
    match model {
        PriorModel::Gmm(g) => {
            for i in 0..count {
                let c = rng.categorical(&g.weights);
                mu.row_mut(i).copy_from_slice(g.means.row(c));
                sigma2.row_mut(i).copy_from_slice(g.vars.row(c));
            }
        }
        PriorModel::Kde(kde) => {
            let var: Vec<f64> = kde.bandwidth.iter().map(|&h| h * h).collect();
            for i in 0..count {
                let c = rng.index(kde.points.rows());
                mu.row_mut(i).copy_from_slice(kde.points.row(c));
                sigma2.row_mut(i).copy_from_slice(&var);
            }
        }
    }
    let eps = Matrix::from_vec(count, d, (0..count * d).map(|_| rng.normal()).collect());
    let mut z = mu.clone();
    for ((z, &s), &e) in z.data_mut().iter_mut().zip(sigma2.data()).zip(eps.data()) {
        *z += s.sqrt() * e;
    }
    Ok(LatentBatch { z, mu, sigma2, eps })
}

fn diag_gauss_logpdf(z: &[f64], mean: &[f64], var: &[f64]) -> f64 {
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    let mut acc = 0.0;
    for k in 0..z.len() {
        let diff = z[k] - mean[k];
        acc += ln2pi + var[k].ln() + diff * diff / var[k];
    }
    -0.5 * acc
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + v.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

fn column_variances(z: &Matrix) -> Vec<f64> {
    let means = z.col_means();
    let n = z.rows() as f64;
    let mut vars = vec![0.0; z.cols()];
    for i in 0..z.rows() {
        for (k, (&v, &m)) in z.row(i).iter().zip(&means).enumerate() {
            let d = v - m;
            vars[k] += d * d / n;
        }
    }
    vars
}

fn column_stds(z: &Matrix) -> Vec<f64> {
    // sample standard deviation (n - 1 normalization) as in the usual
    // bandwidth rule; zero when n == 1
    let n = z.rows();
    if n < 2 {
        return vec![0.0; z.cols()];
    }
    let means = z.col_means();
    let mut vars = vec![0.0; z.cols()];
    for i in 0..n {
        for (k, (&v, &m)) in z.row(i).iter().zip(&means).enumerate() {
            let d = v - m;
            vars[k] += d * d / (n as f64 - 1.0);
        }
    }
    vars.into_iter().map(f64::sqrt).collect()
}
