//! Seeded k-means with k-means++ initialization (Lloyd iterations).

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{squared_distance, Matrix};
use crate::rng::SeedStream;

pub struct KMeansResult {
    pub centroids: Matrix,
    pub assignments: Vec<usize>,
    /// Sum of squared distances to assigned centroids.
    pub inertia: f64,
    pub iterations: usize,
}

/// Lloyd's algorithm with k-means++ seeding. Deterministic per seed; ties
/// in assignment break to the lowest centroid index. Clusters that empty
/// out keep their previous centroid.
pub fn kmeans(data: &Matrix, k: usize, max_iters: usize, seed: u64) -> Result<KMeansResult> {
    let n = data.rows();
    if k == 0 || n < k {
        return Err(Error::InvalidConfig(format!(
            "kmeans needs 1 <= k <= n, got k={k}, n={n}"
        )));
    }
    let d = data.cols();
    let mut centroids = plus_plus_init(data, k, seed);
    let mut assignments = vec![0usize; n];

    let mut iterations = 0;
    for it in 0..max_iters {
        iterations = it + 1;
        let new_assignments = assign(data, &centroids);
        let changed = new_assignments != assignments;
        assignments = new_assignments;

        let mut sums = Matrix::zeros(k, d);
        let mut counts = vec![0usize; k];
        for (i, &c) in assignments.iter().enumerate() {
            counts[c] += 1;
            for (s, v) in sums.row_mut(c).iter_mut().zip(data.row(i)) {
                *s += v;
            }
        }
        for (c, &count) in counts.iter().enumerate() {
            if count == 0 {
                continue;
            }
            let inv = 1.0 / count as f64;
            for (dst, s) in centroids.row_mut(c).iter_mut().zip(sums.row(c)) {
                *dst = s * inv;
            }
        }
        if !changed && it > 0 {
            break;
        }
    }

    let inertia = assignments
        .iter()
        .enumerate()
        .map(|(i, &c)| squared_distance(data.row(i), centroids.row(c)))
        .sum();
    Ok(KMeansResult {
        centroids,
        assignments,
        inertia,
        iterations,
    })
}

fn assign(data: &Matrix, centroids: &Matrix) -> Vec<usize> {
    let one = |i: usize| -> usize {
        let row = data.row(i);
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for c in 0..centroids.rows() {
            let dist = squared_distance(row, centroids.row(c));
            if dist < best_d {
                best_d = dist;
                best = c;
            }
        }
        best
    };
    if data.rows() >= 512 {
        (0..data.rows()).into_par_iter().map(one).collect()
    } else {
        (0..data.rows()).map(one).collect()
    }
}

fn plus_plus_init(data: &Matrix, k: usize, seed: u64) -> Matrix {
    let n = data.rows();
    let d = data.cols();
    let mut rng = SeedStream::new(seed);
    let mut centroids = Matrix::zeros(k, d);
    let first = rng.index(n);
    centroids.row_mut(0).copy_from_slice(data.row(first));

    let mut dist2: Vec<f64> = (0..n)
        .map(|i| squared_distance(data.row(i), centroids.row(0)))
        .collect();
    for c in 1..k {
        let total: f64 = dist2.iter().sum();
        let pick = if total <= 0.0 {
            rng.index(n)
        } else {
            rng.categorical(&dist2)
        };
        centroids.row_mut(c).copy_from_slice(data.row(pick));
        for (i, d2) in dist2.iter_mut().enumerate() {
            let nd = squared_distance(data.row(i), centroids.row(c));
            if nd < *d2 {
                *d2 = nd;
            }
        }
    }
    centroids
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_blob_data(n_per: usize, seed: u64) -> Matrix {
        let mut rng = SeedStream::new(seed);
        let mut rows = Vec::new();
        for _ in 0..n_per {
            rows.push(vec![rng.normal() * 0.1 - 5.0, rng.normal() * 0.1]);
        }
        for _ in 0..n_per {
            rows.push(vec![rng.normal() * 0.1 + 5.0, rng.normal() * 0.1]);
        }
        Matrix::from_rows(&rows)
    }

    #[test]
    fn separates_two_blobs() {
        let data = two_blob_data(50, 1);
        let res = kmeans(&data, 2, 50, 7).unwrap();
        let a = res.assignments[0];
        assert!(res.assignments[..50].iter().all(|&c| c == a));
        assert!(res.assignments[50..].iter().all(|&c| c != a));
        let mut xs: Vec<f64> = (0..2).map(|c| res.centroids[(c, 0)]).collect();
        xs.sort_by(|p, q| p.partial_cmp(q).unwrap());
        assert!((xs[0] + 5.0).abs() < 0.1);
        assert!((xs[1] - 5.0).abs() < 0.1);
    }

    #[test]
    fn deterministic_per_seed() {
        let data = two_blob_data(30, 3);
        let a = kmeans(&data, 4, 50, 11).unwrap();
        let b = kmeans(&data, 4, 50, 11).unwrap();
        assert_eq!(a.assignments, b.assignments);
        assert_eq!(a.centroids.data(), b.centroids.data());
    }

    #[test]
    fn k_bounds_checked() {
        let data = two_blob_data(3, 1);
        assert!(kmeans(&data, 0, 10, 0).is_err());
        assert!(kmeans(&data, 7, 10, 0).is_err());
    }

    #[test]
    fn k_equals_n_zero_inertia() {
        let data = Matrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0], vec![2.0, 0.5]]);
        let res = kmeans(&data, 3, 20, 5).unwrap();
        assert!(res.inertia < 1e-20);
    }
}
