//! Step-1 training: minimize reconstruction cross-entropy plus the enabled
//! regularizers (entropy term, Cramer-Wold distance on data space weighted
//! by lambda, classification loss weighted by gamma) over encoder/decoder
//! parameters, with per-term loss traces and the posterior-variance
//! diagnostic.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::classifier::{classification_regularizer_on, ClassifierBank};
use crate::cramer_wold::{CwConfig, PhiKernel};
use crate::data::{to_onehot, CategoricalDataset};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{entropy_reg_on, recon_loss_on, reparameterize, EncoderDecoder, LatentBatch};
use crate::opt::Adam;
use crate::rng::{derive_seed, SeedStream};
use crate::Tape;

/// Step-1 hyperparameters.
#[derive(Clone, Debug)]
pub struct Step1Config {
    pub latent_dim: usize,
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Cramer-Wold weight.
    pub lambda: f64,
    /// Classification-loss weight.
    pub gamma: f64,
    pub use_entropy_reg: bool,
    pub cw: CwConfig,
    pub seed: u64,
}

impl Default for Step1Config {
    fn default() -> Self {
        Step1Config {
            latent_dim: 2,
            hidden: vec![64, 64],
            epochs: 200,
            batch_size: 256,
            learning_rate: 1e-3,
            lambda: 0.0,
            gamma: 0.0,
            use_entropy_reg: true,
            cw: CwConfig::default(),
            seed: 0,
        }
    }
}

impl Step1Config {
    pub fn validate(&self) -> Result<()> {
        if self.lambda < 0.0 || self.gamma < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "lambda and gamma must be >= 0, got {} and {}",
                self.lambda, self.gamma
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig(
                "epochs and batch_size must be >= 1".into(),
            ));
        }
        if self.batch_size < 2 && (self.use_entropy_reg || self.lambda > 0.0) {
            return Err(Error::InvalidConfig(
                "batch_size must be >= 2 when the entropy term or the Cramer-Wold term is enabled"
                    .into(),
            ));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::InvalidConfig(
                "learning_rate must be positive".into(),
            ));
        }
        self.cw.validate()
    }
}

/// Mean value of every enabled loss term over one epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochTerms {
    pub recon: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub entropy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cramer_wold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classification: Option<f64>,
    pub total: f64,
}

/// Training diagnostics: per-epoch term traces, the averaged posterior
/// variance per latent dimension, wall time, and the seed.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochTerms>,
    pub avg_posterior_var: Vec<f64>,
    pub wall_time_secs: f64,
    pub seed: u64,
    pub n_train: usize,
}

impl TrainReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Persist(format!("report: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Persist(format!("report: {e}")))
    }

    /// CSV trace of the per-epoch terms (header plus one row per epoch).
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("epoch,recon,entropy,cramer_wold,classification,total\n");
        for (e, t) in self.epochs.iter().enumerate() {
            let f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{e},{},{},{},{},{}\n",
                t.recon,
                f(t.entropy),
                f(t.cramer_wold),
                f(t.classification),
                t.total
            ));
        }
        out
    }
}

/// Train the encoder/decoder on `ds_train`.
///
/// `eval_ds` feeds the posterior-variance diagnostic (falls back to the
/// training set). A frozen classifier bank is required exactly when
/// `gamma > 0`. Deterministic per config and seed, to the bit.
pub fn train_step1(
    ds_train: &CategoricalDataset,
    eval_ds: Option<&CategoricalDataset>,
    bank: Option<&ClassifierBank>,
    cfg: &Step1Config,
) -> Result<(EncoderDecoder, TrainReport)> {
    cfg.validate()?;
    if cfg.gamma > 0.0 {
        match bank {
            None => {
                return Err(Error::InvalidConfig(
                    "gamma > 0 requires a pre-trained classifier bank".into(),
                ))
            }
            Some(b) => {
                if !b.is_frozen() {
                    return Err(Error::InvalidConfig(
                        "classifier bank must be frozen".into(),
                    ));
                }
                if b.schema() != ds_train.schema() {
                    return Err(Error::SchemaMismatch(
                        "classifier bank schema differs from training data".into(),
                    ));
                }
            }
        }
    }
    if ds_train.n_rows() == 0 {
        return Err(Error::data("training dataset is empty"));
    }

    let started = Instant::now();
    let schema = Arc::clone(ds_train.schema());
    let width = schema.onehot_width();
    let mut model = EncoderDecoder::new(
        Arc::clone(&schema),
        cfg.latent_dim,
        &cfg.hidden,
        derive_seed(cfg.seed, "model-init"),
    )?;
    let onehot = to_onehot(ds_train);
    let n = ds_train.n_rows();
    let kernel = PhiKernel::resolve(width, cfg.cw.kernel_mode)?;
    let mut opt = Adam::new(model.store().len(), cfg.learning_rate);

    let mut epochs_out = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        SeedStream::new(derive_seed(cfg.seed, &format!("shuffle-{epoch}"))).shuffle(&mut order);

        let mut sums = EpochTerms {
            recon: 0.0,
            entropy: cfg.use_entropy_reg.then_some(0.0),
            cramer_wold: (cfg.lambda > 0.0).then_some(0.0),
            classification: (cfg.gamma > 0.0).then_some(0.0),
            total: 0.0,
        };
        let mut steps = 0usize;

        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            // the pairwise estimator and the set distance need a set
            if chunk.len() < 2 && (cfg.use_entropy_reg || cfg.lambda > 0.0) {
                continue;
            }
            let bn = chunk.len();
            let mut batch = Matrix::zeros(bn, width);
            for (r, &i) in chunk.iter().enumerate() {
                batch.row_mut(r).copy_from_slice(onehot.values().row(i));
            }

            let mut tape = Tape::new();
            let x = tape.constant(batch.clone());
            let (mu, sigma2) = model.encode_on(&mut tape, x)?;
            let eps = {
                let mut rng =
                    SeedStream::new(derive_seed(cfg.seed, &format!("noise-{epoch}-{step}")));
                Matrix::from_vec(
                    bn,
                    cfg.latent_dim,
                    (0..bn * cfg.latent_dim).map(|_| rng.normal()).collect(),
                )
            };
            let epsv = tape.constant(eps);
            let sd = tape.sqrt(sigma2);
            let noise = tape.mul_elem(sd, epsv);
            let z = tape.add(mu, noise);
            let logp = model.decode_on(&mut tape, z)?;

            let recon = recon_loss_on(&mut tape, logp, &batch);
            let mut term_vals: Vec<(&str, f64)> = vec![("recon", tape.value(recon).item())];
            let mut total = recon;

            if cfg.use_entropy_reg {
                let ent = entropy_reg_on(&mut tape, mu, sigma2, z)?;
                term_vals.push(("entropy", tape.value(ent).item()));
                total = tape.add(total, ent);
            }
            if cfg.lambda > 0.0 {
                let kappa = cfg.cw.resolve_kappa(bn, bn)?;
                let probs = tape.exp(logp);
                let cw = tape.cw_distance(x, probs, kappa, kernel)?;
                let weighted = tape.affine(cw, cfg.lambda, 0.0);
                term_vals.push(("cramer_wold", tape.value(weighted).item()));
                total = tape.add(total, weighted);
            }
            if cfg.gamma > 0.0 {
                let probs = tape.exp(logp);
                let reg = classification_regularizer_on(bank.unwrap(), &mut tape, probs)?;
                let weighted = tape.affine(reg, cfg.gamma, 0.0);
                term_vals.push(("classification", tape.value(weighted).item()));
                total = tape.add(total, weighted);
            }

            let total_val = tape.value(total).item();
            for (name, v) in &term_vals {
                if !v.is_finite() {
                    return Err(Error::Numeric(format!(
                        "loss term '{name}' became non-finite at epoch {epoch}, step {step}"
                    )));
                }
            }
            if !total_val.is_finite() {
                return Err(Error::Numeric(format!(
                    "total loss became non-finite at epoch {epoch}, step {step}"
                )));
            }
            let term_sum: f64 = term_vals.iter().map(|(_, v)| v).sum();
            debug_assert!(
                (total_val - term_sum).abs() <= 1e-10,
                "loss accounting drift: {total_val} vs {term_sum}"
            );

            let grads = tape.backward(total, model.store().len())?;
            opt.step(model.store_mut().values_mut(), grads.store_grad());

            steps += 1;
            sums.recon += term_vals[0].1;
            sums.total += total_val;
            for (name, v) in &term_vals[1..] {
                match *name {
                    "entropy" => *sums.entropy.as_mut().unwrap() += v,
                    "cramer_wold" => *sums.cramer_wold.as_mut().unwrap() += v,
                    "classification" => *sums.classification.as_mut().unwrap() += v,
                    _ => unreachable!(),
                }
            }
        }

        if steps == 0 {
            return Err(Error::data(
                "no usable batches: dataset smaller than the minimum batch of 2",
            ));
        }
        let inv = 1.0 / steps as f64;
        sums.recon *= inv;
        sums.total *= inv;
        for slot in [
            &mut sums.entropy,
            &mut sums.cramer_wold,
            &mut sums.classification,
        ] {
            if let Some(v) = slot.as_mut() {
                *v *= inv;
            }
        }
        epochs_out.push(sums);
    }

    let eval = eval_ds.unwrap_or(ds_train);
    let avg_posterior_var = model.avg_posterior_var(&to_onehot(eval))?;
    let report = TrainReport {
        epochs: epochs_out,
        avg_posterior_var,
        wall_time_secs: started.elapsed().as_secs_f64(),
        seed: cfg.seed,
        n_train: n,
    };
    Ok((model, report))
}

/// Draws from the aggregated posterior: `draws_per_row` reparameterized
/// samples per dataset row, concatenated row-major (all draws of row 0,
/// then row 1, ...). Deterministic per seed.
pub fn aggregate_posterior_sample(
    model: &EncoderDecoder,
    ds: &CategoricalDataset,
    draws_per_row: usize,
    seed: u64,
) -> Result<LatentBatch> {
    if draws_per_row == 0 {
        return Err(Error::InvalidConfig("draws_per_row must be >= 1".into()));
    }
    let (mu, sigma2) = model.encode(&to_onehot(ds))?;
    let n = mu.rows();
    let d = mu.cols();
    let mut mu_x = Matrix::zeros(n * draws_per_row, d);
    let mut s2_x = Matrix::zeros(n * draws_per_row, d);
    for i in 0..n {
        for r in 0..draws_per_row {
            mu_x.row_mut(i * draws_per_row + r)
                .copy_from_slice(mu.row(i));
            s2_x.row_mut(i * draws_per_row + r)
                .copy_from_slice(sigma2.row(i));
        }
    }
    reparameterize(&mu_x, &s2_x, seed)
}
