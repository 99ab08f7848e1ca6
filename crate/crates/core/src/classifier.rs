//! Pre-trained one-vs-all conditional classifiers, one linear softmax model
//! per column predicting that column from the one-hot encoding of all the
//! others, and the classification loss they induce on generated samples.

use std::sync::Arc;

use crate::autodiff::{ParamStore, Tape, Var};
use crate::data::{to_onehot, CategoricalDataset, DatasetSchema, OneHotMatrix};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::opt::Adam;

/// One linear softmax model per column, trained by cross-entropy
/// maximization and then frozen. Frozen parameters never receive gradients:
/// the regularizer records them as tape constants.
pub struct ClassifierBank {
    schema: Arc<DatasetSchema>,
    store: ParamStore,
    frozen: bool,
}

impl ClassifierBank {
    /// Zero-initialized bank (every model predicts the uniform PMF).
    pub fn new(schema: Arc<DatasetSchema>) -> Result<Self> {
        let width = schema.onehot_width();
        let mut store = ParamStore::new();
        for (j, col) in schema.columns.iter().enumerate() {
            let t = col.cardinality();
            store.add_zeros(&format!("clf.{j}.w"), width - t, t)?;
            store.add_zeros(&format!("clf.{j}.b"), 1, t)?;
        }
        Ok(ClassifierBank {
            schema,
            store,
            frozen: false,
        })
    }

    pub fn from_parts(schema: Arc<DatasetSchema>, store: ParamStore, frozen: bool) -> Result<Self> {
        for j in 0..schema.n_columns() {
            store.info(&format!("clf.{j}.w"))?;
            store.info(&format!("clf.{j}.b"))?;
        }
        Ok(ClassifierBank {
            schema,
            store,
            frozen,
        })
    }

    pub fn schema(&self) -> &Arc<DatasetSchema> {
        &self.schema
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Train every per-column model by full-batch adaptive gradient steps
    /// on the cross-entropy objective, then freeze the bank.
    pub fn pretrain(
        &mut self,
        ds: &CategoricalDataset,
        epochs: usize,
        lr: f64,
        _seed: u64,
    ) -> Result<()> {
        if ds.n_rows() == 0 {
            return Err(Error::data(
                "cannot pretrain classifiers on an empty dataset",
            ));
        }
        if ds.schema() != &self.schema {
            return Err(Error::SchemaMismatch(
                "classifier bank schema differs".into(),
            ));
        }
        if self.frozen {
            return Err(Error::InvalidConfig("bank is already frozen".into()));
        }
        let onehot = to_onehot(ds);
        let blocks = self.schema.blocks();
        for (j, &(s, e)) in blocks.iter().enumerate() {
            let inputs = drop_block(onehot.values(), s, e);
            let targets = take_block(onehot.values(), s, e);
            self.train_one(j, &inputs, &targets, epochs, lr)?;
        }
        self.frozen = true;
        Ok(())
    }

    fn train_one(
        &mut self,
        j: usize,
        inputs: &Matrix,
        targets: &Matrix,
        epochs: usize,
        lr: f64,
    ) -> Result<()> {
        let wname = format!("clf.{j}.w");
        let bname = format!("clf.{j}.b");
        let winfo = self.store.info(&wname)?;
        let binfo = self.store.info(&bname)?;
        let mut params = self.store.matrix(&wname)?.data().to_vec();
        params.extend_from_slice(self.store.matrix(&bname)?.data());
        let mut opt = Adam::new(params.len(), lr);
        let t = targets.cols();
        let n = targets.rows() as f64;
        let out_blocks = Arc::new(vec![(0usize, t)]);

        for _ in 0..epochs {
            let mut tape = Tape::new();
            let x = tape.constant(inputs.clone());
            let w = tape.input(Matrix::from_vec(
                winfo.rows,
                winfo.cols,
                params[..winfo.len()].to_vec(),
            ));
            let b = tape.input(Matrix::from_vec(1, t, params[winfo.len()..].to_vec()));
            let logits = tape.dense(x, w, b)?;
            let logp = tape.block_log_softmax(logits, &out_blocks)?;
            let dot = tape.dot_const(logp, targets.clone());
            let loss = tape.affine(dot, -1.0 / n, 0.0);
            if !tape.value(loss).item().is_finite() {
                return Err(Error::Numeric(format!(
                    "classifier {j} cross-entropy became non-finite"
                )));
            }
            let grads = tape.backward(loss, 0)?;
            let mut flat = grads.wrt(w).unwrap().data().to_vec();
            flat.extend_from_slice(grads.wrt(b).unwrap().data());
            opt.step(&mut params, &flat);
        }
        self.store.values_mut()[winfo.offset..winfo.offset + winfo.len()]
            .copy_from_slice(&params[..winfo.len()]);
        self.store.values_mut()[binfo.offset..binfo.offset + binfo.len()]
            .copy_from_slice(&params[winfo.len()..]);
        Ok(())
    }

    /// Log-probabilities for column `j` given the one-hot encoding of the
    /// remaining columns (n x (width - T_j) input, n x T_j output).
    pub fn log_probs(&self, j: usize, inputs: &Matrix) -> Result<Matrix> {
        let t = self.schema.cardinality(j);
        let mut tape = Tape::new();
        let x = tape.constant(inputs.clone());
        let w = tape.constant(self.store.matrix(&format!("clf.{j}.w"))?);
        let b = tape.constant(self.store.matrix(&format!("clf.{j}.b"))?);
        let logits = tape.dense(x, w, b)?;
        let blocks = Arc::new(vec![(0usize, t)]);
        let logp = tape.block_log_softmax(logits, &blocks)?;
        Ok(tape.value(logp).clone())
    }

    /// Fraction of rows whose column `j` is predicted correctly from the
    /// remaining columns (argmax rule, ties to the lowest level).
    pub fn accuracy(&self, j: usize, ds: &CategoricalDataset) -> Result<f64> {
        if ds.schema() != &self.schema {
            return Err(Error::SchemaMismatch("accuracy schema differs".into()));
        }
        let onehot = to_onehot(ds);
        let (s, e) = self.schema.blocks()[j];
        let inputs = drop_block(onehot.values(), s, e);
        let logp = self.log_probs(j, &inputs)?;
        let mut correct = 0usize;
        for (i, actual) in ds.column(j).enumerate() {
            let row = logp.row(i);
            let mut best = 0;
            for (k, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = k;
                }
            }
            if best as u32 == actual {
                correct += 1;
            }
        }
        Ok(correct as f64 / ds.n_rows() as f64)
    }

    /// Mean training log-likelihood of column `j` under the bank.
    pub fn log_likelihood(&self, j: usize, ds: &CategoricalDataset) -> Result<f64> {
        let onehot = to_onehot(ds);
        let (s, e) = self.schema.blocks()[j];
        let inputs = drop_block(onehot.values(), s, e);
        let targets = take_block(onehot.values(), s, e);
        let logp = self.log_probs(j, &inputs)?;
        let mut acc = 0.0;
        for (&t, &lp) in targets.data().iter().zip(logp.data()) {
            acc += t * lp;
        }
        Ok(acc / ds.n_rows() as f64)
    }
}

fn drop_block(values: &Matrix, s: usize, e: usize) -> Matrix {
    let (n, m) = values.dim();
    let mut out = Matrix::zeros(n, m - (e - s));
    for i in 0..n {
        let src = values.row(i);
        let dst = out.row_mut(i);
        dst[..s].copy_from_slice(&src[..s]);
        dst[s..].copy_from_slice(&src[e..]);
    }
    out
}

fn take_block(values: &Matrix, s: usize, e: usize) -> Matrix {
    let (n, _) = values.dim();
    let mut out = Matrix::zeros(n, e - s);
    for i in 0..n {
        out.row_mut(i).copy_from_slice(&values.row(i)[s..e]);
    }
    out
}

/// Mean classification loss of generated block PMFs under a frozen bank:
///
/// ```text
///   (1/n) sum_i sum_j ( - sum_l xhat_ijl * log p_l(xhat_{i,-j}) )
/// ```
///
/// Soft targets and soft conditioning: the decoder's probability rows stand
/// in for sampled one-hot rows, keeping the term differentiable end to end.
/// Nonnegative; zero only when each model puts probability one on its
/// (soft) target. Gradients never reach the bank parameters.
pub fn classification_regularizer(bank: &ClassifierBank, xhat: &OneHotMatrix) -> Result<f64> {
    let mut tape = Tape::new();
    let x = tape.constant(xhat.values().clone());
    let v = classification_regularizer_on(bank, &mut tape, x)?;
    Ok(tape.value(v).item())
}

/// Tape version of [`classification_regularizer`]; `xhat` must be a var of
/// block PMFs with the bank's one-hot width.
pub fn classification_regularizer_on(
    bank: &ClassifierBank,
    tape: &mut Tape,
    xhat: Var,
) -> Result<Var> {
    if !bank.frozen {
        return Err(Error::InvalidConfig(
            "classification regularizer requires a frozen (pre-trained) bank".into(),
        ));
    }
    if tape.value(xhat).cols() != bank.schema.onehot_width() {
        return Err(Error::ShapeMismatch(format!(
            "regularizer input width {} != one-hot width {}",
            tape.value(xhat).cols(),
            bank.schema.onehot_width()
        )));
    }
    let n = tape.value(xhat).rows() as f64;
    let blocks = bank.schema.blocks();
    let mut total: Option<Var> = None;
    for (j, &(s, e)) in blocks.iter().enumerate() {
        let t = e - s;
        let inputs = tape.cols_except(xhat, s, e);
        let soft_targets = tape.cols_range(xhat, s, e);
        let w = tape.constant(bank.store.matrix(&format!("clf.{j}.w"))?);
        let b = tape.constant(bank.store.matrix(&format!("clf.{j}.b"))?);
        let logits = tape.dense(inputs, w, b)?;
        let out_blocks = Arc::new(vec![(0usize, t)]);
        let logp = tape.block_log_softmax(logits, &out_blocks)?;
        let prod = tape.mul_elem(soft_targets, logp);
        let sum = tape.sum_all(prod);
        let term = tape.affine(sum, -1.0 / n, 0.0);
        total = Some(match total {
            None => term,
            Some(acc) => tape.add(acc, term),
        });
    }
    Ok(total.expect("schema has at least one column"))
}
