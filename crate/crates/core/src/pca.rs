//! Two-dimensional PCA projection of latent samples for plotting dumps.

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Principal components of `data` (n x d): eigen-decomposition of the
/// covariance matrix by cyclic Jacobi rotations, components ordered by
/// decreasing variance. Sign convention: in each component the loading of
/// largest magnitude is positive.
pub struct Pca {
    pub components: Matrix,
    pub eigenvalues: Vec<f64>,
    pub mean: Vec<f64>,
}

impl Pca {
    pub fn fit(data: &Matrix) -> Result<Pca> {
        let n = data.rows();
        let d = data.cols();
        if n < 2 {
            return Err(Error::data("pca needs at least 2 rows"));
        }
        let mean = data.col_means();
        // covariance with 1/(n-1)
        let mut cov = Matrix::zeros(d, d);
        for i in 0..n {
            let row = data.row(i);
            for a in 0..d {
                let da = row[a] - mean[a];
                for b in a..d {
                    let v = da * (row[b] - mean[b]);
                    cov[(a, b)] += v;
                }
            }
        }
        let inv = 1.0 / (n as f64 - 1.0);
        for a in 0..d {
            for b in a..d {
                cov[(a, b)] *= inv;
                cov[(b, a)] = cov[(a, b)];
            }
        }
        let (eigenvalues, mut components) = jacobi_eigen(&cov);
        // fix signs: largest-magnitude loading positive
        for c in 0..d {
            let row = components.row(c);
            let mut arg = 0;
            for (k, &v) in row.iter().enumerate().skip(1) {
                if v.abs() > row[arg].abs() {
                    arg = k;
                }
            }
            if components[(c, arg)] < 0.0 {
                for v in components.row_mut(c) {
                    *v = -*v;
                }
            }
        }
        Ok(Pca {
            components,
            eigenvalues,
            mean,
        })
    }

    /// Project rows onto the first `k` components (zero-padded if the data
    /// dimension is below `k`).
    pub fn project(&self, data: &Matrix, k: usize) -> Matrix {
        let n = data.rows();
        let d = data.cols();
        let avail = k.min(self.components.rows());
        let mut out = Matrix::zeros(n, k);
        for i in 0..n {
            let row = data.row(i);
            for c in 0..avail {
                let comp = self.components.row(c);
                let mut acc = 0.0;
                for j in 0..d {
                    acc += (row[j] - self.mean[j]) * comp[j];
                }
                out[(i, c)] = acc;
            }
        }
        out
    }
}

/// Eigen-decomposition of a symmetric matrix by the cyclic Jacobi method.
/// Returns (eigenvalues, eigenvectors-as-rows), sorted by decreasing
/// eigenvalue.
fn jacobi_eigen(m: &Matrix) -> (Vec<f64>, Matrix) {
    let d = m.rows();
    let mut a = m.clone();
    let mut v = Matrix::identity(d);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..d {
            for q in (p + 1)..d {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        if off < 1e-24 {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                if a[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..d {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..d {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut pairs: Vec<(f64, usize)> = (0..d).map(|i| (a[(i, i)], i)).collect();
    pairs.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap_or(std::cmp::Ordering::Equal));
    let eigenvalues: Vec<f64> = pairs.iter().map(|&(e, _)| e).collect();
    let mut vectors = Matrix::zeros(d, d);
    for (row, &(_, col)) in pairs.iter().enumerate() {
        for k in 0..d {
            vectors[(row, k)] = v[(k, col)];
        }
    }
    (eigenvalues, vectors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedStream;

    #[test]
    fn two_dim_projection_is_a_rotation() {
        // For d = 2 inputs, a 2-component projection preserves pairwise
        // distances (orthonormal basis change after centering).
        let mut rng = SeedStream::new(4);
        let data = Matrix::from_vec(40, 2, (0..80).map(|_| rng.normal() * 1.5 + 0.3).collect());
        let pca = Pca::fit(&data).unwrap();
        let proj = pca.project(&data, 2);
        for i in 0..10 {
            for j in 0..10 {
                let orig = crate::linalg::squared_distance(data.row(i), data.row(j));
                let new = crate::linalg::squared_distance(proj.row(i), proj.row(j));
                assert!((orig - new).abs() < 1e-9, "pair ({i},{j}): {orig} vs {new}");
            }
        }
    }

    #[test]
    fn rank_one_data_second_component_vanishes() {
        let mut rng = SeedStream::new(5);
        let dir = [0.6, -0.8];
        let data = Matrix::from_rows(
            &(0..30)
                .map(|_| {
                    let t: f64 = rng.normal() * 2.0;
                    vec![t * dir[0], t * dir[1]]
                })
                .collect::<Vec<_>>(),
        );
        let pca = Pca::fit(&data).unwrap();
        let proj = pca.project(&data, 2);
        for i in 0..30 {
            assert!(proj[(i, 1)].abs() < 1e-9, "{}", proj[(i, 1)]);
        }
        assert!(pca.eigenvalues[1].abs() < 1e-12);
    }

    #[test]
    fn eigenvalue_ordering_nonincreasing() {
        let mut rng = SeedStream::new(6);
        let data = Matrix::from_rows(
            &(0..100)
                .map(|_| vec![rng.normal() * 3.0, rng.normal() * 1.0, rng.normal() * 0.2])
                .collect::<Vec<_>>(),
        );
        let pca = Pca::fit(&data).unwrap();
        for w in pca.eigenvalues.windows(2) {
            assert!(w[0] >= w[1] - 1e-12, "{:?}", pca.eigenvalues);
        }
        // projection variances follow the same ordering
        let proj = pca.project(&data, 3);
        let var = |k: usize| {
            let m = (0..100).map(|i| proj[(i, k)]).sum::<f64>() / 100.0;
            (0..100).map(|i| (proj[(i, k)] - m).powi(2)).sum::<f64>() / 99.0
        };
        assert!(var(0) >= var(1) && var(1) >= var(2));
    }

    #[test]
    fn sign_convention_deterministic() {
        let mut rng = SeedStream::new(7);
        let data = Matrix::from_vec(50, 2, (0..100).map(|_| rng.normal()).collect());
        let a = Pca::fit(&data).unwrap();
        let flipped = data.scale(-1.0);
        let b = Pca::fit(&flipped).unwrap();
        // components agree (up to the shared convention) on mirrored data
        for c in 0..2 {
            let ra = a.components.row(c);
            let rb = b.components.row(c);
            for (x, y) in ra.iter().zip(rb) {
                assert!((x - y).abs() < 1e-9);
            }
        }
        // largest-magnitude loading is positive
        for c in 0..2 {
            let row = a.components.row(c);
            let mut arg = 0;
            for (k, &v) in row.iter().enumerate().skip(1) {
                if v.abs() > row[arg].abs() {
                    arg = k;
                }
            }
            assert!(row[arg] > 0.0);
        }
    }
}
