//! Encoder/decoder pair: Gaussian posterior over the latent space, block
//! categorical decoder, and the loss pieces built on them (reconstruction
//! cross-entropy, posterior log-density, entropy-regularization estimator).

use std::sync::Arc;

use crate::autodiff::{ParamStore, Tape, Var};
use crate::data::{DatasetSchema, OneHotMatrix};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::SeedStream;

/// Variance floor keeping posterior log-densities finite.
pub const SIGMA2_FLOOR: f64 = 1e-8;

/// MLP encoder (one-hot width -> hidden -> mu, sigma^2) and decoder
/// (latent -> hidden -> per-column block softmax).
///
/// The posterior is `N(mu(x), diag(sigma2(x)))`; `sigma2` comes through a
/// softplus head plus [`SIGMA2_FLOOR`], so it is strictly positive. The
/// decoder maps each column's logit block onto its simplex.
#[derive(Debug)]
pub struct EncoderDecoder {
    schema: Arc<DatasetSchema>,
    hidden: Vec<usize>,
    latent_dim: usize,
    store: ParamStore,
    blocks: Arc<Vec<(usize, usize)>>,
}

/// A batch of latent draws together with the pieces that produced them:
/// `z = mu + sqrt(sigma2) .* eps`.
#[derive(Clone, Debug)]
pub struct LatentBatch {
    pub z: Matrix,
    pub mu: Matrix,
    pub sigma2: Matrix,
    pub eps: Matrix,
}

impl LatentBatch {
    pub fn n_rows(&self) -> usize {
        self.z.rows()
    }

    pub fn latent_dim(&self) -> usize {
        self.z.cols()
    }
}

impl EncoderDecoder {
    pub fn new(
        schema: Arc<DatasetSchema>,
        latent_dim: usize,
        hidden: &[usize],
        seed: u64,
    ) -> Result<Self> {
        if latent_dim == 0 {
            return Err(Error::InvalidConfig("latent_dim must be >= 1".into()));
        }
        if hidden.contains(&0) {
            return Err(Error::InvalidConfig("hidden widths must be >= 1".into()));
        }
        let width = schema.onehot_width();
        let mut rng = SeedStream::new(seed);
        let mut store = ParamStore::new();

        let mut prev = width;
        for (i, &h) in hidden.iter().enumerate() {
            store.add_glorot(&format!("enc.l{i}.w"), prev, h, &mut rng)?;
            store.add_zeros(&format!("enc.l{i}.b"), 1, h)?;
            prev = h;
        }
        store.add_glorot("enc.mu.w", prev, latent_dim, &mut rng)?;
        store.add_zeros("enc.mu.b", 1, latent_dim)?;
        store.add_glorot("enc.var.w", prev, latent_dim, &mut rng)?;
        store.add_zeros("enc.var.b", 1, latent_dim)?;

        let mut prev = latent_dim;
        for (i, &h) in hidden.iter().enumerate() {
            store.add_glorot(&format!("dec.l{i}.w"), prev, h, &mut rng)?;
            store.add_zeros(&format!("dec.l{i}.b"), 1, h)?;
            prev = h;
        }
        store.add_glorot("dec.out.w", prev, width, &mut rng)?;
        store.add_zeros("dec.out.b", 1, width)?;

        let blocks = Arc::new(schema.blocks());
        Ok(EncoderDecoder {
            schema,
            hidden: hidden.to_vec(),
            latent_dim,
            store,
            blocks,
        })
    }

    pub fn schema(&self) -> &Arc<DatasetSchema> {
        &self.schema
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn hidden(&self) -> &[usize] {
        &self.hidden
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// Rebuild from persisted parts (see the persistence module).
    pub fn from_parts(
        schema: Arc<DatasetSchema>,
        latent_dim: usize,
        hidden: Vec<usize>,
        store: ParamStore,
    ) -> Result<Self> {
        let blocks = Arc::new(schema.blocks());
        let model = EncoderDecoder {
            schema,
            hidden,
            latent_dim,
            store,
            blocks,
        };
        // surface obviously corrupt stores early
        model.store.info("enc.mu.w")?;
        model.store.info("dec.out.w")?;
        Ok(model)
    }

    /// Record the encoder on `tape`: `x` (n x onehot_width) -> (mu, sigma2),
    /// both n x latent_dim, sigma2 strictly positive.
    pub fn encode_on(&self, tape: &mut Tape, x: Var) -> Result<(Var, Var)> {
        if tape.value(x).cols() != self.schema.onehot_width() {
            return Err(Error::ShapeMismatch(format!(
                "encode input width {} != one-hot width {}",
                tape.value(x).cols(),
                self.schema.onehot_width()
            )));
        }
        let mut h = x;
        for i in 0..self.hidden.len() {
            let w = tape.param(&self.store, &format!("enc.l{i}.w"))?;
            let b = tape.param(&self.store, &format!("enc.l{i}.b"))?;
            let lin = tape.dense(h, w, b)?;
            h = tape.relu(lin);
        }
        let wmu = tape.param(&self.store, "enc.mu.w")?;
        let bmu = tape.param(&self.store, "enc.mu.b")?;
        let mu = tape.dense(h, wmu, bmu)?;
        let wv = tape.param(&self.store, "enc.var.w")?;
        let bv = tape.param(&self.store, "enc.var.b")?;
        let raw = tape.dense(h, wv, bv)?;
        let sp = tape.softplus(raw);
        let sigma2 = tape.affine(sp, 1.0, SIGMA2_FLOOR);
        Ok((mu, sigma2))
    }

    /// Record the decoder on `tape`: `z` (n x latent_dim) -> block
    /// log-probabilities (n x onehot_width).
    pub fn decode_on(&self, tape: &mut Tape, z: Var) -> Result<Var> {
        if tape.value(z).cols() != self.latent_dim {
            return Err(Error::ShapeMismatch(format!(
                "decode input width {} != latent dim {}",
                tape.value(z).cols(),
                self.latent_dim
            )));
        }
        let mut h = z;
        for i in 0..self.hidden.len() {
            let w = tape.param(&self.store, &format!("dec.l{i}.w"))?;
            let b = tape.param(&self.store, &format!("dec.l{i}.b"))?;
            let lin = tape.dense(h, w, b)?;
            h = tape.relu(lin);
        }
        let w = tape.param(&self.store, "dec.out.w")?;
        let b = tape.param(&self.store, "dec.out.b")?;
        let logits = tape.dense(h, w, b)?;
        tape.block_log_softmax(logits, &self.blocks)
    }

    /// Posterior parameters for a batch.
    pub fn encode(&self, batch: &OneHotMatrix) -> Result<(Matrix, Matrix)> {
        let mut tape = Tape::new();
        let x = tape.constant(batch.values().clone());
        let (mu, sigma2) = self.encode_on(&mut tape, x)?;
        Ok((tape.value(mu).clone(), tape.value(sigma2).clone()))
    }

    /// Decoder probabilities for latent rows.
    pub fn decode(&self, z: &Matrix) -> Result<OneHotMatrix> {
        let mut tape = Tape::new();
        let zv = tape.constant(z.clone());
        let logp = self.decode_on(&mut tape, zv)?;
        let probs = tape.exp(logp);
        OneHotMatrix::from_probs(Arc::clone(&self.schema), tape.value(probs).clone())
    }

    /// Mean posterior variance per latent dimension over a dataset,
    /// the collapse diagnostic reported after training.
    pub fn avg_posterior_var(&self, batch: &OneHotMatrix) -> Result<Vec<f64>> {
        let (_, sigma2) = self.encode(batch)?;
        Ok(sigma2.col_means())
    }
}

/// Draw `z = mu + sqrt(sigma2) .* eps` with `eps ~ N(0, I)`, seeded.
pub fn reparameterize(mu: &Matrix, sigma2: &Matrix, seed: u64) -> Result<LatentBatch> {
    mu.check_same_dim(sigma2, "reparameterize")?;
    if sigma2.data().iter().any(|&v| v <= 0.0) {
        return Err(Error::Numeric("sigma2 must be strictly positive".into()));
    }
    let mut rng = SeedStream::new(seed);
    let eps = Matrix::from_vec(
        mu.rows(),
        mu.cols(),
        (0..mu.len()).map(|_| rng.normal()).collect(),
    );
    let mut z = mu.clone();
    for ((z, &s), &e) in z.data_mut().iter_mut().zip(sigma2.data()).zip(eps.data()) {
        *z += s.sqrt() * e;
    }
    Ok(LatentBatch {
        z,
        mu: mu.clone(),
        sigma2: sigma2.clone(),
        eps,
    })
}

/// Mean categorical cross-entropy between target block PMFs and decoder
/// probabilities: `-(1/n) sum_i sum_j sum_l t_ijl ln p_ijl`. Nonnegative;
/// zero exactly when the probabilities match hard targets.
pub fn recon_loss(targets: &OneHotMatrix, probs: &OneHotMatrix) -> Result<f64> {
    if targets.schema() != probs.schema() {
        return Err(Error::SchemaMismatch("recon_loss schemas differ".into()));
    }
    targets
        .values()
        .check_same_dim(probs.values(), "recon_loss")?;
    let n = targets.n_rows() as f64;
    let mut acc = 0.0;
    for (&t, &p) in targets.values().data().iter().zip(probs.values().data()) {
        if t != 0.0 {
            acc += t * p.max(crate::autodiff::LN_FLOOR).ln();
        }
    }
    Ok(-acc / n)
}

/// Tape version of [`recon_loss`] taking decoder log-probabilities.
pub fn recon_loss_on(tape: &mut Tape, log_probs: Var, targets: &Matrix) -> Var {
    let n = targets.rows() as f64;
    let dot = tape.dot_const(log_probs, targets.clone());
    tape.affine(dot, -1.0 / n, 0.0)
}

/// Diagonal Gaussian log-density of one latent row.
pub fn posterior_logpdf(z: &[f64], mu: &[f64], sigma2: &[f64]) -> f64 {
    debug_assert_eq!(z.len(), mu.len());
    debug_assert_eq!(z.len(), sigma2.len());
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    let mut acc = 0.0;
    for k in 0..z.len() {
        let diff = z[k] - mu[k];
        acc += ln2pi + sigma2[k].ln() + diff * diff / sigma2[k];
    }
    -0.5 * acc
}

/// Minibatch estimator of the entropy-regularization bound
///
/// ```text
///   (1/n) sum_i log q(z_i | x_i)  -  (1/n^2) sum_{i,j} log q(z_j | x_i)
/// ```
///
/// with full pairwise cross terms over the batch. Unbiased for the
/// batch-level aggregated posterior; requires n >= 2.
pub fn entropy_reg_estimate(mu: &Matrix, sigma2: &Matrix, z: &Matrix) -> Result<f64> {
    mu.check_same_dim(sigma2, "entropy_reg")?;
    mu.check_same_dim(z, "entropy_reg")?;
    let n = mu.rows();
    if n < 2 {
        return Err(Error::InvalidConfig(
            "entropy regularization estimator needs n >= 2".into(),
        ));
    }
    let mut diag = 0.0;
    let mut cross = 0.0;
    for i in 0..n {
        for j in 0..n {
            let lp = posterior_logpdf(z.row(j), mu.row(i), sigma2.row(i));
            cross += lp;
            if i == j {
                diag += lp;
            }
        }
    }
    let nf = n as f64;
    Ok(diag / nf - cross / (nf * nf))
}

/// Tape version of [`entropy_reg_estimate`].
pub fn entropy_reg_on(tape: &mut Tape, mu: Var, sigma2: Var, z: Var) -> Result<Var> {
    let n = tape.value(mu).rows();
    if n < 2 {
        return Err(Error::InvalidConfig(
            "entropy regularization estimator needs n >= 2".into(),
        ));
    }
    let nf = n as f64;
    let pair = tape.pair_gauss_logpdf(mu, sigma2, z);
    let diag = tape.diag_sum(pair);
    let total = tape.sum_all(pair);
    let a = tape.affine(diag, 1.0 / nf, 0.0);
    let b = tape.affine(total, -1.0 / (nf * nf), 0.0);
    Ok(tape.add(a, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{to_onehot, CategoricalDataset, Column, DatasetSchema};

    fn schema_2_3() -> Arc<DatasetSchema> {
        Arc::new(
            DatasetSchema::new(vec![
                Column {
                    name: "A".into(),
                    levels: vec!["x".into(), "y".into()],
                },
                Column {
                    name: "B".into(),
                    levels: vec!["u".into(), "v".into(), "w".into()],
                },
            ])
            .unwrap(),
        )
    }

    fn zeroed_model(schema: Arc<DatasetSchema>, d: usize, hidden: &[usize]) -> EncoderDecoder {
        let mut m = EncoderDecoder::new(schema, d, hidden, 0).unwrap();
        m.store_mut().values_mut().fill(0.0);
        m
    }

    #[test]
    fn zero_weight_encoder_outputs_bias() {
        let schema = schema_2_3();
        let model = zeroed_model(Arc::clone(&schema), 2, &[4]);
        let ds = CategoricalDataset::new(schema, vec![0, 1, 1, 2]).unwrap();
        let (mu, sigma2) = model.encode(&to_onehot(&ds)).unwrap();
        let expect_var = 2.0f64.ln() + SIGMA2_FLOOR; // softplus(0) + floor
        for i in 0..2 {
            for k in 0..2 {
                assert_eq!(mu[(i, k)], 0.0);
                assert!((sigma2[(i, k)] - expect_var).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn identical_rows_identical_posteriors() {
        let schema = schema_2_3();
        let model = EncoderDecoder::new(Arc::clone(&schema), 2, &[8, 8], 3).unwrap();
        let ds = CategoricalDataset::new(schema, vec![1, 2, 1, 2]).unwrap();
        let (mu, sigma2) = model.encode(&to_onehot(&ds)).unwrap();
        assert_eq!(mu.row(0), mu.row(1));
        assert_eq!(sigma2.row(0), sigma2.row(1));
        assert!(sigma2.data().iter().all(|&v| v > 0.0));
    }

    #[test]
    fn avg_posterior_var_is_column_mean() {
        let schema = schema_2_3();
        let model = EncoderDecoder::new(Arc::clone(&schema), 2, &[8], 5).unwrap();
        let ds = CategoricalDataset::new(schema, vec![0, 0, 1, 1, 0, 2]).unwrap();
        let onehot = to_onehot(&ds);
        let (_, sigma2) = model.encode(&onehot).unwrap();
        let avg = model.avg_posterior_var(&onehot).unwrap();
        for k in 0..2 {
            let mean = (0..3).map(|i| sigma2[(i, k)]).sum::<f64>() / 3.0;
            assert!((avg[k] - mean).abs() < 1e-15);
        }
    }

    #[test]
    fn encode_rejects_wrong_width() {
        let schema = schema_2_3();
        let model = EncoderDecoder::new(Arc::clone(&schema), 2, &[4], 1).unwrap();
        let mut tape = Tape::new();
        let x = tape.constant(Matrix::zeros(2, 4)); // width 4 != 5
        assert!(model.encode_on(&mut tape, x).is_err());
    }

    #[test]
    fn reparameterize_floor_variance_collapses_to_mean() {
        let mu = Matrix::from_vec(3, 2, vec![1.0, -2.0, 0.5, 0.0, 3.0, 1.0]);
        let sigma2 = Matrix::from_vec(3, 2, vec![SIGMA2_FLOOR; 6]);
        let batch = reparameterize(&mu, &sigma2, 9).unwrap();
        for (z, m) in batch.z.data().iter().zip(mu.data()) {
            assert!((z - m).abs() < 1e-3);
        }
    }

    #[test]
    fn reparameterize_deterministic_and_consistent() {
        let mu = Matrix::from_vec(2, 2, vec![0.0, 1.0, -1.0, 2.0]);
        let sigma2 = Matrix::from_vec(2, 2, vec![0.5, 1.5, 2.0, 0.1]);
        let a = reparameterize(&mu, &sigma2, 7).unwrap();
        let b = reparameterize(&mu, &sigma2, 7).unwrap();
        assert_eq!(a.z.data(), b.z.data());
        // z = mu + sqrt(sigma2) .* eps holds exactly as recorded
        for i in 0..a.z.len() {
            let want = mu.data()[i] + sigma2.data()[i].sqrt() * a.eps.data()[i];
            assert_eq!(a.z.data()[i], want);
        }
    }

    #[test]
    fn reparameterize_law_of_large_numbers() {
        let n = 100_000;
        let mu = Matrix::from_vec(n, 1, vec![0.7; n]);
        let sigma2 = Matrix::from_vec(n, 1, vec![2.25; n]);
        let batch = reparameterize(&mu, &sigma2, 123).unwrap();
        let mean = batch.z.data().iter().sum::<f64>() / n as f64;
        let tol = 3.0 * 1.5 / (n as f64).sqrt();
        assert!((mean - 0.7).abs() < tol, "mean {mean}");
    }

    #[test]
    fn zero_weight_decoder_uniform_blocks() {
        let schema = schema_2_3();
        let model = zeroed_model(Arc::clone(&schema), 2, &[4]);
        let z = Matrix::from_vec(2, 2, vec![0.3, -1.0, 2.0, 0.1]);
        let probs = model.decode(&z).unwrap();
        for i in 0..2 {
            let row = probs.values().row(i);
            for &v in &row[0..2] {
                assert!((v - 0.5).abs() < 1e-12);
            }
            for &v in &row[2..5] {
                assert!((v - 1.0 / 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn decoder_blocks_on_simplex_and_deterministic() {
        let schema = schema_2_3();
        let model = EncoderDecoder::new(Arc::clone(&schema), 2, &[16], 11).unwrap();
        let mut rng = SeedStream::new(2);
        let z = Matrix::from_vec(10, 2, (0..20).map(|_| rng.normal()).collect());
        let probs = model.decode(&z).unwrap();
        for i in 0..10 {
            let row = probs.values().row(i);
            let s1: f64 = row[0..2].iter().sum();
            let s2: f64 = row[2..5].iter().sum();
            assert!((s1 - 1.0).abs() < 1e-12);
            assert!((s2 - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&v| v >= 0.0));
        }
        let again = model.decode(&z).unwrap();
        assert_eq!(probs.values().data(), again.values().data());
    }

    #[test]
    fn recon_loss_examples() {
        let schema = schema_2_3();
        let ds = CategoricalDataset::new(Arc::clone(&schema), vec![1, 0, 0, 2]).unwrap();
        let hard = to_onehot(&ds);
        // perfect probabilities -> 0
        assert_eq!(recon_loss(&hard, &hard).unwrap(), 0.0);

        // uniform probabilities -> ln 2 + ln 3 regardless of targets
        let uniform = OneHotMatrix::from_probs(
            Arc::clone(&schema),
            Matrix::from_vec(
                2,
                5,
                vec![
                    0.5,
                    0.5,
                    1.0 / 3.0,
                    1.0 / 3.0,
                    1.0 / 3.0,
                    0.5,
                    0.5,
                    1.0 / 3.0,
                    1.0 / 3.0,
                    1.0 / 3.0,
                ],
            ),
        )
        .unwrap();
        let want = 2.0f64.ln() + 3.0f64.ln();
        assert!((recon_loss(&hard, &uniform).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn recon_loss_single_step_descent() {
        // one gradient step on a 1-sample problem must reduce the loss
        let schema = schema_2_3();
        let mut model = EncoderDecoder::new(Arc::clone(&schema), 2, &[8], 21).unwrap();
        let ds = CategoricalDataset::new(Arc::clone(&schema), vec![1, 2]).unwrap();
        let onehot = to_onehot(&ds);

        let loss_of = |model: &EncoderDecoder| -> (f64, Vec<f64>) {
            let mut tape = Tape::new();
            let x = tape.constant(onehot.values().clone());
            let (mu, _sigma2) = model.encode_on(&mut tape, x).unwrap();
            // deterministic path: decode the posterior mean
            let logp = model.decode_on(&mut tape, mu).unwrap();
            let loss = recon_loss_on(&mut tape, logp, onehot.values());
            let grads = tape.backward(loss, model.store().len()).unwrap();
            (tape.value(loss).item(), grads.into_store_grad())
        };

        let (before, grad) = loss_of(&model);
        let lr = 0.05;
        for (v, g) in model.store_mut().values_mut().iter_mut().zip(&grad) {
            *v -= lr * g;
        }
        let (after, _) = loss_of(&model);
        assert!(after < before, "{after} !< {before}");
    }

    #[test]
    fn posterior_logpdf_values() {
        let ln2pi = (2.0 * std::f64::consts::PI).ln();
        // z = mu, sigma2 = 1, d = 2 -> -ln 2pi
        assert!(
            (posterior_logpdf(&[0.3, -1.0], &[0.3, -1.0], &[1.0, 1.0]) - (-ln2pi)).abs() < 1e-14
        );
        // d=1, z=1, mu=0, sigma2=1 -> -(ln 2pi + 1) / 2
        assert!((posterior_logpdf(&[1.0], &[0.0], &[1.0]) - (-0.5 * (ln2pi + 1.0))).abs() < 1e-14);
    }

    #[test]
    fn posterior_logpdf_integrates_to_one() {
        // quadrature oracle on a fine 1-d grid
        let (mu, sigma2): (f64, f64) = (0.4, 0.8);
        let lo = mu - 12.0 * sigma2.sqrt();
        let hi = mu + 12.0 * sigma2.sqrt();
        let steps = 40_000;
        let h = (hi - lo) / steps as f64;
        let mut integral = 0.0;
        for i in 0..=steps {
            let zv = lo + i as f64 * h;
            let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
            integral += w * posterior_logpdf(&[zv], &[mu], &[sigma2]).exp();
        }
        integral *= h;
        assert!((integral - 1.0).abs() < 1e-6, "{integral}");
    }

    #[test]
    fn entropy_estimate_zero_for_identical_posteriors() {
        let n = 6;
        let mu = Matrix::from_vec(n, 2, vec![0.5; n * 2]);
        let sigma2 = Matrix::from_vec(n, 2, vec![1.3; n * 2]);
        let z = reparameterize(&mu, &sigma2, 3).unwrap().z;
        let est = entropy_reg_estimate(&mu, &sigma2, &z).unwrap();
        assert!(est.abs() < 1e-12, "{est}");
    }

    #[test]
    fn entropy_estimate_two_point_closed_form() {
        // mu = (+10, -10), sigma2 = 1, z_i = mu_i, d = 1.
        // diag mean: -ln(2 pi)/2. cross mean: -ln(2 pi)/2 - (1/4)(0+200+200+0).
        // estimate = 100 exactly; the log terms cancel.
        let mu = Matrix::from_vec(2, 1, vec![10.0, -10.0]);
        let sigma2 = Matrix::from_vec(2, 1, vec![1.0, 1.0]);
        let z = mu.clone();
        let est = entropy_reg_estimate(&mu, &sigma2, &z).unwrap();
        assert!((est - 100.0).abs() < 1e-10, "{est}");
    }

    #[test]
    fn entropy_estimate_needs_two_rows() {
        let mu = Matrix::from_vec(1, 1, vec![0.0]);
        let sigma2 = Matrix::from_vec(1, 1, vec![1.0]);
        assert!(entropy_reg_estimate(&mu, &sigma2, &mu).is_err());
    }

    #[test]
    fn entropy_tape_matches_plain() {
        let mut rng = SeedStream::new(8);
        let n = 5;
        let mu = Matrix::from_vec(n, 2, (0..n * 2).map(|_| rng.normal()).collect());
        let sigma2 = Matrix::from_vec(n, 2, (0..n * 2).map(|_| rng.uniform() + 0.2).collect());
        let z = reparameterize(&mu, &sigma2, 17).unwrap().z;
        let plain = entropy_reg_estimate(&mu, &sigma2, &z).unwrap();
        let mut tape = Tape::new();
        let muv = tape.constant(mu);
        let sv = tape.constant(sigma2);
        let zv = tape.constant(z);
        let est = entropy_reg_on(&mut tape, muv, sv, zv).unwrap();
        assert!((tape.value(est).item() - plain).abs() < 1e-12);
    }

    /// Exact (quadrature) pieces for the bound chain on one-dimensional
    /// mixtures of Gaussian posteriors. Test-only oracle, independent of
    /// the minibatch estimator.
    mod quadrature {
        use super::*;

        pub struct Mixture1d {
            pub mu: Vec<f64>,
            pub sigma2: Vec<f64>,
        }

        impl Mixture1d {
            fn logpdf_component(&self, i: usize, z: f64) -> f64 {
                posterior_logpdf(&[z], &[self.mu[i]], &[self.sigma2[i]])
            }

            fn pdf_mixture(&self, z: f64) -> f64 {
                let n = self.mu.len() as f64;
                self.mu
                    .iter()
                    .enumerate()
                    .map(|(i, _)| self.logpdf_component(i, z).exp())
                    .sum::<f64>()
                    / n
            }

            /// E over components of KL(component || mixture), by quadrature.
            pub fn mean_kl_to_mixture(&self) -> f64 {
                let n = self.mu.len();
                let (lo, hi) = self.grid_range();
                let steps = 60_000;
                let h = (hi - lo) / steps as f64;
                let mut total = 0.0;
                for i in 0..n {
                    let mut kl = 0.0;
                    for s in 0..=steps {
                        let z = lo + s as f64 * h;
                        let w = if s == 0 || s == steps { 0.5 } else { 1.0 };
                        let lq = self.logpdf_component(i, z);
                        let q = lq.exp();
                        if q > 1e-300 {
                            kl += w * q * (lq - self.pdf_mixture(z).ln());
                        }
                    }
                    total += kl * h;
                }
                total / n as f64
            }

            /// Exact value of the entropy-regularization upper bound:
            /// mean negative component entropy minus the mixture-averaged
            /// component log-density (closed form).
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
                // E_{z ~ mixture}[ log q(z|x_i) ] has closed form through
                // second moments: E[(z - mu_i)^2] = (1/n) sum_j sigma2_j + (mu_j - mu_i)^2
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

            fn grid_range(&self) -> (f64, f64) {
                let smax = self.sigma2.iter().cloned().fold(0.0f64, f64::max).sqrt();
                let lo = self.mu.iter().cloned().fold(f64::INFINITY, f64::min) - 12.0 * smax;
                let hi = self.mu.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 12.0 * smax;
                (lo, hi)
            }
        }
    }

    #[test]
    fn estimator_dominates_exact_kl_on_mixture() {
        // 8-component 1-d mixture: 0 <= E[KL(q(z|x) || mixture)] <= bound,
        // and the many-draw estimator approaches the bound from either side
        // within Monte-Carlo error.
        let mut rng = SeedStream::new(77);
        let n = 8;
        let mix = quadrature::Mixture1d {
            mu: (0..n).map(|_| rng.normal() * 2.0).collect(),
            sigma2: (0..n).map(|_| 0.3 + rng.uniform()).collect(),
        };
        let kl = mix.mean_kl_to_mixture();
        let ub = mix.upper_bound();
        assert!(kl >= -1e-6, "{kl}");
        assert!(kl <= ub + 1e-6, "kl {kl} vs bound {ub}");

        // estimator mean over repeated draws converges to the bound
        let mu = Matrix::from_vec(n, 1, mix.mu.clone());
        let sigma2 = Matrix::from_vec(n, 1, mix.sigma2.clone());
        let reps = 4000;
        let mut mean_est = 0.0;
        for r in 0..reps {
            let z = reparameterize(&mu, &sigma2, 500 + r).unwrap().z;
            mean_est += entropy_reg_estimate(&mu, &sigma2, &z).unwrap();
        }
        mean_est /= reps as f64;
        assert!(
            (mean_est - ub).abs() < 0.05 * ub.abs().max(1.0),
            "estimator mean {mean_est} vs exact bound {ub}"
        );
        // and it dominates the exact KL within Monte-Carlo error
        assert!(mean_est >= kl - 0.05 * ub.abs().max(1.0));
    }
}
