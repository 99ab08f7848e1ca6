//! Statistical-similarity and privacy metrics for scoring synthetic
//! categorical data against the real dataset: four marginal metrics, four
//! joint metrics, nearest-neighbor adversarial accuracy, and rank
//! aggregation across compared systems.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::ClassifierBank;
use crate::data::{marginal_pmf, to_onehot, CategoricalDataset};
use crate::error::{Error, Result};
use crate::kmeans::kmeans;
use crate::linalg::Matrix;
use crate::rng::derive_seed;
use std::sync::Arc;

/// Additive smoothing applied to synthetic PMFs inside the KL metric.
pub const KL_SMOOTHING: f64 = 1e-6;

/// Floor inside the log of the cluster metric (exact mixing hits log 0).
pub const LOG_CLUSTER_FLOOR: f64 = 1e-8;

/// A metric value, or an explicit miss with the reason (for example a
/// constant column making a correlation undefined).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum MetricOutcome {
    Value(f64),
    Missing { reason: String },
}

impl MetricOutcome {
    pub fn value(&self) -> Option<f64> {
        match self {
            MetricOutcome::Value(v) => Some(*v),
            MetricOutcome::Missing { .. } => None,
        }
    }
}

/// Mean over columns of `KL(real_pmf || smoothed synthetic_pmf)`.
///
/// The synthetic PMF gets `KL_SMOOTHING` added to every level and is
/// renormalized, so levels missing from the synthetic data stay finite.
pub fn kl_marginal(real: &CategoricalDataset, synth: &CategoricalDataset) -> Result<f64> {
    check_schemas(real, synth)?;
    let p = real.n_columns();
    let mut total = 0.0;
    for j in 0..p {
        let pr = marginal_pmf(real, j)?;
        let q = marginal_pmf(synth, j)?;
        let t = pr.len() as f64;
        let norm = 1.0 + t * KL_SMOOTHING;
        let mut kl = 0.0;
        for (&pl, &ql) in pr.iter().zip(&q) {
            if pl > 0.0 {
                let qs = (ql + KL_SMOOTHING) / norm;
                kl += pl * (pl / qs).ln();
            }
        }
        total += kl;
    }
    Ok(total / p as f64)
}

/// Mean over columns of the two-sample KS statistic
/// `max_k |CDF_real(k) - CDF_synth(k)|` under the schema's level order.
pub fn ks_marginal(real: &CategoricalDataset, synth: &CategoricalDataset) -> Result<f64> {
    check_schemas(real, synth)?;
    let p = real.n_columns();
    let mut total = 0.0;
    for j in 0..p {
        let pr = marginal_pmf(real, j)?;
        let q = marginal_pmf(synth, j)?;
        let mut cdf_r = 0.0;
        let mut cdf_s = 0.0;
        let mut worst = 0.0f64;
        for (&pl, &ql) in pr.iter().zip(&q) {
            cdf_r += pl;
            cdf_s += ql;
            worst = worst.max((cdf_r - cdf_s).abs());
        }
        total += worst;
    }
    Ok(total / p as f64)
}

/// Mean over columns of the fraction of real-observed levels that also
/// appear in the synthetic data. 1 exactly at full coverage; in (0, 1].
pub fn support_coverage(real: &CategoricalDataset, synth: &CategoricalDataset) -> Result<f64> {
    check_schemas(real, synth)?;
    let p = real.n_columns();
    let mut total = 0.0;
    for j in 0..p {
        let obs_real = real.observed_levels(j);
        let obs_synth = synth.observed_levels(j);
        let covered = obs_real.intersection(&obs_synth).count();
        total += covered as f64 / obs_real.len() as f64;
    }
    Ok(total / p as f64)
}

/// Sum over all one-hot dimensions of the squared difference between the
/// real and synthetic dimension-wise probabilities.
pub fn dim_prob_mse(real: &CategoricalDataset, synth: &CategoricalDataset) -> Result<f64> {
    check_schemas(real, synth)?;
    let mut total = 0.0;
    for j in 0..real.n_columns() {
        let pr = marginal_pmf(real, j)?;
        let q = marginal_pmf(synth, j)?;
        for (&pl, &ql) in pr.iter().zip(&q) {
            let d = pl - ql;
            total += d * d;
        }
    }
    Ok(total)
}

/// Correlation flavor for the pairwise correlation difference.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CorrKind {
    Pearson,
    /// Kendall's tau-b with tie correction.
    Kendall,
}

/// Frobenius norm of the difference between the real and synthetic
/// correlation matrices over integer level codes. Missing (with reason)
/// when any required correlation is undefined, as with constant columns.
pub fn pcd(
    real: &CategoricalDataset,
    synth: &CategoricalDataset,
    kind: CorrKind,
) -> Result<MetricOutcome> {
    check_schemas(real, synth)?;
    if real.n_columns() < 2 {
        return Err(Error::InvalidConfig("pcd needs at least 2 columns".into()));
    }
    let a = match correlation_matrix(real, kind) {
        Ok(m) => m,
        Err(reason) => return Ok(MetricOutcome::Missing { reason }),
    };
    let b = match correlation_matrix(synth, kind) {
        Ok(m) => m,
        Err(reason) => {
            return Ok(MetricOutcome::Missing {
                reason: format!("synthetic data: {reason}"),
            })
        }
    };
    let mut sq = 0.0;
    for (x, y) in a.data().iter().zip(b.data()) {
        let d = x - y;
        sq += d * d;
    }
    Ok(MetricOutcome::Value(sq.sqrt()))
}

fn correlation_matrix(
    ds: &CategoricalDataset,
    kind: CorrKind,
) -> std::result::Result<Matrix, String> {
    let p = ds.n_columns();
    let cols: Vec<Vec<u32>> = (0..p).map(|j| ds.column(j).collect()).collect();
    let mut m = Matrix::identity(p);
    for j in 0..p {
        for k in (j + 1)..p {
            let r = match kind {
                CorrKind::Pearson => pearson(&cols[j], &cols[k]),
                CorrKind::Kendall => kendall_tau_b(
                    &cols[j],
                    &cols[k],
                    ds.schema().cardinality(j),
                    ds.schema().cardinality(k),
                ),
            };
            match r {
                Some(v) => {
                    m[(j, k)] = v;
                    m[(k, j)] = v;
                }
                None => {
                    return Err(format!(
                        "correlation between columns {j} and {k} undefined (constant column)"
                    ))
                }
            }
        }
    }
    Ok(m)
}

fn pearson(x: &[u32], y: &[u32]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().map(|&v| v as f64).sum::<f64>() / n;
    let my = y.iter().map(|&v| v as f64).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        let dx = a as f64 - mx;
        let dy = b as f64 - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx.sqrt() * syy.sqrt()))
}

/// Kendall's tau-b from the contingency table: concordant/discordant pair
/// counts via 2-d suffix sums, tie corrections from the margins. Exact
/// integer pair counting; `None` when a margin makes the denominator zero.
pub fn kendall_tau_b(x: &[u32], y: &[u32], tx: usize, ty: usize) -> Option<f64> {
    let n = x.len() as u64;
    if n < 2 {
        return None;
    }
    let mut table = vec![0u64; tx * ty];
    for (&a, &b) in x.iter().zip(y) {
        table[a as usize * ty + b as usize] += 1;
    }
    // suffix[a][b] = sum of table over a' >= a, b' >= b
    let mut suffix = vec![0u64; (tx + 1) * (ty + 1)];
    for a in (0..tx).rev() {
        for b in (0..ty).rev() {
            suffix[a * (ty + 1) + b] =
                table[a * ty + b] + suffix[(a + 1) * (ty + 1) + b] + suffix[a * (ty + 1) + b + 1]
                    - suffix[(a + 1) * (ty + 1) + b + 1];
        }
    }
    let mut concordant = 0u64;
    let mut discordant = 0u64;
    for a in 0..tx {
        for b in 0..ty {
            let cell = table[a * ty + b];
            if cell == 0 {
                continue;
            }
            // strictly greater in both coordinates
            let gg = suffix[(a + 1) * (ty + 1) + b + 1];
            // strictly greater in x, strictly smaller in y
            let gl = suffix[(a + 1) * (ty + 1)] - suffix[(a + 1) * (ty + 1) + b];
            concordant += cell * gg;
            discordant += cell * gl;
        }
    }
    let n0 = n * (n - 1) / 2;
    let mut row = vec![0u64; tx];
    let mut col = vec![0u64; ty];
    for a in 0..tx {
        for b in 0..ty {
            row[a] += table[a * ty + b];
            col[b] += table[a * ty + b];
        }
    }
    let n1: u64 = row.iter().map(|&r| r * r.saturating_sub(1) / 2).sum();
    let n2: u64 = col.iter().map(|&c| c * c.saturating_sub(1) / 2).sum();
    if n0 == n1 || n0 == n2 {
        return None;
    }
    let denom = ((n0 - n1) as f64 * (n0 - n2) as f64).sqrt();
    Some((concordant as f64 - discordant as f64) / denom)
}

/// Log mean squared deviation of per-cluster real-data fractions from 1/2
/// after k-means on the pooled one-hot rows. Requires equal row counts so
/// the reference fraction is exactly 1/2; the mean is over non-empty
/// clusters and floored at [`LOG_CLUSTER_FLOOR`] before the log.
pub fn log_cluster(
    real: &CategoricalDataset,
    synth: &CategoricalDataset,
    groups: usize,
    seed: u64,
) -> Result<f64> {
    check_schemas(real, synth)?;
    if real.n_rows() != synth.n_rows() {
        return Err(Error::InvalidConfig(format!(
            "log_cluster needs equal sizes, got {} and {}",
            real.n_rows(),
            synth.n_rows()
        )));
    }
    let n = real.n_rows();
    let width = real.schema().onehot_width();
    let mut pooled = Matrix::zeros(2 * n, width);
    let r = to_onehot(real);
    let s = to_onehot(synth);
    for i in 0..n {
        pooled.row_mut(i).copy_from_slice(r.values().row(i));
        pooled.row_mut(n + i).copy_from_slice(s.values().row(i));
    }
    let km = kmeans(&pooled, groups, 50, seed)?;
    let mut real_counts = vec![0usize; groups];
    let mut totals = vec![0usize; groups];
    for (i, &c) in km.assignments.iter().enumerate() {
        totals[c] += 1;
        if i < n {
            real_counts[c] += 1;
        }
    }
    let mut msd = 0.0;
    let mut used = 0usize;
    for c in 0..groups {
        if totals[c] == 0 {
            continue;
        }
        let frac = real_counts[c] as f64 / totals[c] as f64;
        msd += (frac - 0.5) * (frac - 0.5);
        used += 1;
    }
    msd /= used as f64;
    Ok(msd.max(LOG_CLUSTER_FLOOR).ln())
}

/// Training controls for the variable-wise prediction metric.
#[derive(Clone, Copy, Debug)]
pub struct VarPredConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for VarPredConfig {
    fn default() -> Self {
        VarPredConfig {
            epochs: 60,
            learning_rate: 0.1,
            seed: 0,
        }
    }
}

/// Mean squared difference between per-column test accuracies of linear
/// one-vs-all classifiers trained on the real training data versus the
/// synthetic data (identical hyperparameters and seed).
pub fn var_pred_mse(
    real_train: &CategoricalDataset,
    synth: &CategoricalDataset,
    real_test: &CategoricalDataset,
    cfg: &VarPredConfig,
) -> Result<f64> {
    check_schemas(real_train, synth)?;
    check_schemas(real_train, real_test)?;
    let acc = |train: &CategoricalDataset| -> Result<Vec<f64>> {
        let mut bank = ClassifierBank::new(Arc::clone(train.schema()))?;
        bank.pretrain(train, cfg.epochs, cfg.learning_rate, cfg.seed)?;
        (0..train.n_columns())
            .map(|j| bank.accuracy(j, real_test))
            .collect()
    };
    let on_real = acc(real_train)?;
    let on_synth = acc(synth)?;
    let p = on_real.len() as f64;
    Ok(on_real
        .iter()
        .zip(&on_synth)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / p)
}

/// The three reported adversarial-accuracy deviations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AaScores {
    /// `|AA(train, synth) - 0.5|`
    pub train_dev: f64,
    /// `|AA(test, synth) - 0.5|`
    pub test_dev: f64,
    /// `|AA(train, synth) - AA(test, synth)|`
    pub privacy_loss: f64,
}

/// Nearest-neighbor adversarial accuracy under Hamming distance.
///
/// All three datasets are brought to a common row count n (larger sets are
/// subsampled, seeded). With `D_AB(i)` the nearest-neighbor distance from
/// row i of A into B (self excluded for `D_AA`):
///
/// ```text
///   AA(A, B) = 1/2 [ (1/n) sum_i 1(D_AB(i) > D_AA(i))
///                  + (1/n) sum_i 1(D_BA(i) > D_BB(i)) ]
/// ```
///
/// with strict inequalities. Returns the deviations reported in the result
/// tables: `|AA_TrS - 0.5|`, `|AA_TeS - 0.5|`, `|AA_TrS - AA_TeS|`.
pub fn adversarial_accuracy(
    train: &CategoricalDataset,
    test: &CategoricalDataset,
    synth: &CategoricalDataset,
    seed: u64,
) -> Result<AaScores> {
    check_schemas(train, synth)?;
    check_schemas(train, test)?;
    let n = train.n_rows().min(test.n_rows()).min(synth.n_rows());
    if n < 2 {
        return Err(Error::data(
            "adversarial accuracy needs at least 2 rows per set",
        ));
    }
    let shrink = |ds: &CategoricalDataset, label: &str| -> Result<CategoricalDataset> {
        if ds.n_rows() == n {
            Ok(ds.clone())
        } else {
            ds.subsample(n, derive_seed(seed, label))
        }
    };
    let train = shrink(train, "aa-train")?;
    let test = shrink(test, "aa-test")?;
    let synth = shrink(synth, "aa-synth")?;

    let aa_trs = aa_pair(&train, &synth);
    let aa_tes = aa_pair(&test, &synth);
    Ok(AaScores {
        train_dev: (aa_trs - 0.5).abs(),
        test_dev: (aa_tes - 0.5).abs(),
        privacy_loss: (aa_trs - aa_tes).abs(),
    })
}

fn aa_pair(a: &CategoricalDataset, b: &CategoricalDataset) -> f64 {
    let n = a.n_rows();
    let pa = PackedRows::new(a);
    let pb = PackedRows::new(b);
    let d_ab = nn_cross(&pa, &pb);
    let d_ba = nn_cross(&pb, &pa);
    let d_aa = nn_self(&pa);
    let d_bb = nn_self(&pb);
    let first = (0..n).filter(|&i| d_ab[i] > d_aa[i]).count() as f64 / n as f64;
    let second = (0..n).filter(|&i| d_ba[i] > d_bb[i]).count() as f64 / n as f64;
    0.5 * (first + second)
}

/// Rows prepared for fast Hamming scans. All-binary schemas pack each
/// column into one bit, turning a row comparison into xor + popcount.
enum PackedRows {
    Codes {
        rows: Vec<u32>,
        p: usize,
        n: usize,
    },
    Bits {
        rows: Vec<u64>,
        words: usize,
        n: usize,
    },
}

impl PackedRows {
    fn new(ds: &CategoricalDataset) -> PackedRows {
        let p = ds.n_columns();
        let n = ds.n_rows();
        let binary = (0..p).all(|j| ds.schema().cardinality(j) <= 2);
        if binary {
            let words = p.div_ceil(64);
            let mut rows = vec![0u64; n * words];
            for i in 0..n {
                for (j, &code) in ds.row(i).iter().enumerate() {
                    if code != 0 {
                        rows[i * words + j / 64] |= 1u64 << (j % 64);
                    }
                }
            }
            PackedRows::Bits { rows, words, n }
        } else {
            PackedRows::Codes {
                rows: ds.rows_flat().to_vec(),
                p,
                n,
            }
        }
    }

    fn len(&self) -> usize {
        match self {
            PackedRows::Codes { n, .. } | PackedRows::Bits { n, .. } => *n,
        }
    }

    fn hamming(&self, i: usize, other: &PackedRows, j: usize) -> u32 {
        match (self, other) {
            (PackedRows::Codes { rows: ra, p, .. }, PackedRows::Codes { rows: rb, .. }) => {
                let a = &ra[i * p..(i + 1) * p];
                let b = &rb[j * p..(j + 1) * p];
                let mut acc = 0u32;
                for (x, y) in a.iter().zip(b) {
                    acc += (x != y) as u32;
                }
                acc
            }
            (
                PackedRows::Bits {
                    rows: ra, words, ..
                },
                PackedRows::Bits { rows: rb, .. },
            ) => {
                let a = &ra[i * words..(i + 1) * words];
                let b = &rb[j * words..(j + 1) * words];
                let mut acc = 0u32;
                for (x, y) in a.iter().zip(b) {
                    acc += (x ^ y).count_ones();
                }
                acc
            }
            _ => unreachable!("packed representations always match per schema"),
        }
    }
}

fn nn_cross(a: &PackedRows, b: &PackedRows) -> Vec<u32> {
    (0..a.len())
        .into_par_iter()
        .map(|i| (0..b.len()).map(|j| a.hamming(i, b, j)).min().unwrap())
        .collect()
}

fn nn_self(a: &PackedRows) -> Vec<u32> {
    (0..a.len())
        .into_par_iter()
        .map(|i| {
            (0..a.len())
                .filter(|&j| j != i)
                .map(|j| a.hamming(i, a, j))
                .min()
                .unwrap()
        })
        .collect()
}

fn check_schemas(a: &CategoricalDataset, b: &CategoricalDataset) -> Result<()> {
    if a.schema() != b.schema() {
        return Err(Error::SchemaMismatch(
            "datasets evaluated together must share a schema".into(),
        ));
    }
    Ok(())
}

/// Every metric for one synthetic dataset (one compared system).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SystemMetrics {
    pub name: String,
    pub kl: f64,
    pub ks: f64,
    pub coverage: f64,
    pub dim_prob: f64,
    pub pcd_pearson: MetricOutcome,
    pub pcd_kendall: MetricOutcome,
    pub log_cluster: f64,
    pub var_pred: f64,
    pub aa: AaScores,
}

/// Controls for the full evaluation pass.
#[derive(Clone, Debug)]
pub struct EvaluateConfig {
    pub log_cluster_groups: usize,
    pub var_pred: VarPredConfig,
    pub seed: u64,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig {
            log_cluster_groups: 20,
            var_pred: VarPredConfig::default(),
            seed: 0,
        }
    }
}

/// Run the whole suite for one synthetic dataset.
///
/// The cluster metric requires equal sizes, so the larger of (real, synth)
/// is subsampled for that metric alone, seeded.
pub fn evaluate(
    name: &str,
    real_train: &CategoricalDataset,
    real_test: &CategoricalDataset,
    synth: &CategoricalDataset,
    cfg: &EvaluateConfig,
) -> Result<SystemMetrics> {
    let lc = {
        let n = real_train.n_rows().min(synth.n_rows());
        let r = if real_train.n_rows() == n {
            real_train.clone()
        } else {
            real_train.subsample(n, derive_seed(cfg.seed, "lc-real"))?
        };
        let s = if synth.n_rows() == n {
            synth.clone()
        } else {
            synth.subsample(n, derive_seed(cfg.seed, "lc-synth"))?
        };
        log_cluster(&r, &s, cfg.log_cluster_groups, derive_seed(cfg.seed, "lc"))?
    };
    Ok(SystemMetrics {
        name: name.to_string(),
        kl: kl_marginal(real_train, synth)?,
        ks: ks_marginal(real_train, synth)?,
        coverage: support_coverage(real_train, synth)?,
        dim_prob: dim_prob_mse(real_train, synth)?,
        pcd_pearson: pcd(real_train, synth, CorrKind::Pearson)?,
        pcd_kendall: pcd(real_train, synth, CorrKind::Kendall)?,
        log_cluster: lc,
        var_pred: var_pred_mse(real_train, synth, real_test, &cfg.var_pred)?,
        aa: adversarial_accuracy(real_train, real_test, synth, derive_seed(cfg.seed, "aa"))?,
    })
}

/// CSV rows overlaying real and synthetic marginal PMFs, for plotting:
/// `system,column,level,real_prob,synth_prob`.
pub fn marginal_pmf_table(
    system: &str,
    real: &CategoricalDataset,
    synth: &CategoricalDataset,
) -> Result<String> {
    check_schemas(real, synth)?;
    let mut out = String::new();
    for j in 0..real.n_columns() {
        let pr = marginal_pmf(real, j)?;
        let q = marginal_pmf(synth, j)?;
        let col = &real.schema().columns[j];
        for (l, (&pl, &ql)) in pr.iter().zip(&q).enumerate() {
            out.push_str(&format!(
                "{system},{},{},{pl},{ql}\n",
                col.name, col.levels[l]
            ));
        }
    }
    Ok(out)
}

/// Per-system ranks: one rank per statistical metric (1 = best under that
/// metric's direction, missing ranked last, ties share the mean rank) and
/// their average.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SystemRanks {
    pub name: String,
    pub per_metric: Vec<(String, f64)>,
    pub average: f64,
}

/// Metrics plus rank aggregation over the compared systems.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricsReport {
    pub systems: Vec<SystemMetrics>,
    pub ranks: Vec<SystemRanks>,
}

const RANKED_METRICS: [(&str, bool); 8] = [
    // (name, higher_is_better)
    ("kl", false),
    ("ks", false),
    ("coverage", true),
    ("dim_prob", false),
    ("pcd_pearson", false),
    ("pcd_kendall", false),
    ("log_cluster", false),
    ("var_pred", false),
];

fn metric_value(m: &SystemMetrics, name: &str) -> Option<f64> {
    match name {
        "kl" => Some(m.kl),
        "ks" => Some(m.ks),
        "coverage" => Some(m.coverage),
        "dim_prob" => Some(m.dim_prob),
        "pcd_pearson" => m.pcd_pearson.value(),
        "pcd_kendall" => m.pcd_kendall.value(),
        "log_cluster" => Some(m.log_cluster),
        "var_pred" => Some(m.var_pred),
        _ => unreachable!("unknown metric {name}"),
    }
}

/// Assemble the rank table from one or more systems' metrics.
pub fn build_report(systems: Vec<SystemMetrics>) -> Result<MetricsReport> {
    if systems.is_empty() {
        return Err(Error::InvalidConfig(
            "build_report needs at least one system".into(),
        ));
    }
    let k = systems.len();
    let mut per_system: Vec<Vec<(String, f64)>> = vec![Vec::new(); k];
    for (metric, higher_better) in RANKED_METRICS {
        // sortable key: missing values go last regardless of direction
        let keys: Vec<Option<f64>> = systems.iter().map(|s| metric_value(s, metric)).collect();
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| match (keys[a], keys[b]) {
            (Some(x), Some(y)) => {
                let c = x.partial_cmp(&y).unwrap_or(std::cmp::Ordering::Equal);
                if higher_better {
                    c.reverse()
                } else {
                    c
                }
            }
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => std::cmp::Ordering::Equal,
        });
        // mean rank across tie blocks
        let mut ranks = vec![0.0; k];
        let mut i = 0;
        while i < k {
            let mut j = i;
            let tied = |a: usize, b: usize| match (keys[order[a]], keys[order[b]]) {
                (Some(x), Some(y)) => x == y,
                (None, None) => true,
                _ => false,
            };
            while j + 1 < k && tied(i, j + 1) {
                j += 1;
            }
            let mean_rank = (i + 1 + j + 1) as f64 / 2.0;
            for &idx in &order[i..=j] {
                ranks[idx] = mean_rank;
            }
            i = j + 1;
        }
        for (sys, &r) in ranks.iter().enumerate() {
            per_system[sys].push((metric.to_string(), r));
        }
    }
    let ranks = systems
        .iter()
        .zip(per_system)
        .map(|(s, per_metric)| {
            let average = per_metric.iter().map(|(_, r)| r).sum::<f64>() / per_metric.len() as f64;
            SystemRanks {
                name: s.name.clone(),
                per_metric,
                average,
            }
        })
        .collect();
    Ok(MetricsReport { systems, ranks })
}

impl MetricsReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Persist(format!("report: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Persist(format!("report: {e}")))
    }

    /// One CSV row per system with every metric and the average rank.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "system,kl,ks,coverage,dim_prob,pcd_pearson,pcd_kendall,log_cluster,var_pred,aa_train,aa_test,aa_privacy,avg_rank\n",
        );
        for (s, r) in self.systems.iter().zip(&self.ranks) {
            let fmt = |o: &MetricOutcome| match o {
                MetricOutcome::Value(v) => v.to_string(),
                MetricOutcome::Missing { .. } => "missing".to_string(),
            };
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                s.name,
                s.kl,
                s.ks,
                s.coverage,
                s.dim_prob,
                fmt(&s.pcd_pearson),
                fmt(&s.pcd_kendall),
                s.log_cluster,
                s.var_pred,
                s.aa.train_dev,
                s.aa.test_dev,
                s.aa.privacy_loss,
                r.average
            ));
        }
        out
    }
}
