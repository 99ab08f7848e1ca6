//! Shared fixtures and independent oracles for the integration suites.

#![allow(dead_code)]

use std::sync::Arc;

use cwsynth::data::{CategoricalDataset, Column, DatasetSchema};
use cwsynth::rng::SeedStream;

/// Markov-chain categorical dataset: column j+1 copies column j with
/// probability `hold`, otherwise redraws uniformly. Adjacent columns carry
/// strong, known correlation; marginals are uniform.
pub fn chain_dataset(
    n: usize,
    p: usize,
    levels: usize,
    hold: f64,
    seed: u64,
) -> CategoricalDataset {
    let cols = (0..p)
        .map(|j| Column {
            name: format!("c{j}"),
            levels: (0..levels).map(|l| format!("l{l}")).collect(),
        })
        .collect();
    let schema = Arc::new(DatasetSchema::new(cols).unwrap());
    let mut rng = SeedStream::new(seed);
    let mut rows = Vec::with_capacity(n * p);
    for _ in 0..n {
        let mut prev = rng.index(levels) as u32;
        rows.push(prev);
        for _ in 1..p {
            if rng.uniform() >= hold {
                prev = rng.index(levels) as u32;
            }
            rows.push(prev);
        }
    }
    CategoricalDataset::new(schema, rows).unwrap()
}

/// The desk-scale benchmark used by the training criteria: 10 columns,
/// 3 levels each, chain structure, n = 5000.
pub fn toy_benchmark(seed: u64) -> CategoricalDataset {
    chain_dataset(5000, 10, 3, 0.7, seed)
}

/// Independent quadrature/closed-form oracle for one-dimensional mixtures
/// of Gaussian posteriors. Written against raw formulas only; shares no
/// code path with the estimator under test.
pub mod quadrature {
    pub struct Mixture1d {
        pub mu: Vec<f64>,
        pub sigma2: Vec<f64>,
    }

    fn normal_logpdf(z: f64, mu: f64, s2: f64) -> f64 {
        -0.5 * ((2.0 * std::f64::consts::PI * s2).ln() + (z - mu) * (z - mu) / s2)
    }

    impl Mixture1d {
        fn mixture_pdf(&self, z: f64) -> f64 {
            let n = self.mu.len() as f64;
            self.mu
                .iter()
                .zip(&self.sigma2)
                .map(|(&m, &s2)| normal_logpdf(z, m, s2).exp())
                .sum::<f64>()
                / n
        }

        fn grid(&self) -> (f64, f64, usize) {
            let smax = self.sigma2.iter().cloned().fold(0.0f64, f64::max).sqrt();
            let lo = self.mu.iter().cloned().fold(f64::INFINITY, f64::min) - 12.0 * smax;
            let hi = self.mu.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 12.0 * smax;
            (lo, hi, 60_000)
        }

        /// Mean KL from each component to the mixture, by trapezoid
        /// quadrature.
        pub fn mean_kl_to_mixture(&self) -> f64 {
            let (lo, hi, steps) = self.grid();
            let h = (hi - lo) / steps as f64;
            let n = self.mu.len();
            let mut total = 0.0;
            for i in 0..n {
                let mut kl = 0.0;
                for s in 0..=steps {
                    let z = lo + s as f64 * h;
                    let w = if s == 0 || s == steps { 0.5 } else { 1.0 };
                    let lq = normal_logpdf(z, self.mu[i], self.sigma2[i]);
                    let q = lq.exp();
                    if q > 1e-300 {
                        kl += w * q * (lq - self.mixture_pdf(z).ln());
                    }
                }
                total += kl * h;
            }
            total / n as f64
        }

        /// The entropy-regularization upper bound in closed form: mean
        /// negative component entropy minus the mixture-averaged component
        /// log-density (second moments give the cross term exactly).
        pub fn upper_bound(&self) -> f64 {
            let ln2pi = (2.0 * std::f64::consts::PI).ln();
            let n = self.mu.len();
            let nf = n as f64;
            let neg_entropy: f64 = self
                .sigma2
                .iter()
                .map(|&s| -0.5 * (ln2pi + 1.0 + s.ln()))
                .sum::<f64>()
                / nf;
            let mut cross = 0.0;
            for i in 0..n {
                let mut second = 0.0;
                for j in 0..n {
                    let d = self.mu[j] - self.mu[i];
                    second += self.sigma2[j] + d * d;
                }
                second /= nf;
                cross += -0.5 * (ln2pi + self.sigma2[i].ln() + second / self.sigma2[i]);
            }
            cross /= nf;
            neg_entropy - cross
        }
    }
}
