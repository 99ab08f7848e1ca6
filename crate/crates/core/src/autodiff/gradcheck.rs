//! Central-difference verification of reverse-mode gradients.

use crate::error::Result;
use crate::linalg::Matrix;

use super::params::ParamStore;
use super::tape::{Tape, Var};

/// Outcome of one gradient check.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// Coordinates actually compared (subsampled for large stores).
    pub checked: usize,
    pub max_rel_err: f64,
    /// Store coordinate where the worst error occurred.
    pub worst_coord: usize,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err <= tol
    }
}

/// Relative error with a floor so that near-zero gradients compare on an
/// absolute scale commensurate with central-difference precision.
fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

/// Maximum number of coordinates checked before switching to an
/// evenly-strided subsample.
const FULL_CHECK_LIMIT: usize = 512;

/// Compare the reverse-mode gradient of `loss_fn` against central
/// differences with step `h`, coordinate by coordinate.
///
/// `loss_fn` must rebuild the loss deterministically from the store (any
/// randomness fixed by seeds outside). Large stores are subsampled with an
/// even stride.
pub fn grad_check(
    loss_fn: &dyn Fn(&mut Tape, &ParamStore) -> Result<Var>,
    params: &mut ParamStore,
    h: f64,
) -> Result<GradCheckReport> {
    let mut tape = Tape::new();
    let out = loss_fn(&mut tape, params)?;
    let grads = tape.backward(out, params.len())?;
    let analytic = grads.store_grad().to_vec();

    let n = params.len();
    let stride = if n <= FULL_CHECK_LIMIT {
        1
    } else {
        n.div_ceil(FULL_CHECK_LIMIT)
    };

    let mut report = GradCheckReport {
        checked: 0,
        max_rel_err: 0.0,
        worst_coord: 0,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
    };

    let eval = |params: &ParamStore| -> Result<f64> {
        let mut t = Tape::new();
        let v = loss_fn(&mut t, params)?;
        Ok(t.value(v).item())
    };

    for coord in (0..n).step_by(stride) {
        let orig = params.get(coord);
        params.set(coord, orig + h);
        let fp = eval(params)?;
        params.set(coord, orig - h);
        let fm = eval(params)?;
        params.set(coord, orig);
        let numeric = (fp - fm) / (2.0 * h);
        let err = rel_err(analytic[coord], numeric);
        report.checked += 1;
        if err > report.max_rel_err {
            report.max_rel_err = err;
            report.worst_coord = coord;
            report.worst_analytic = analytic[coord];
            report.worst_numeric = numeric;
        }
    }
    Ok(report)
}

/// Builder recording a non-parameter input with [`Tape::input`] and
/// returning `(input_var, loss_var)`.
pub type InputLossBuilder<'a> = &'a dyn Fn(&mut Tape, &Matrix) -> Result<(Var, Var)>;

/// Same comparison for the gradient with respect to a non-parameter input
/// matrix.
pub fn grad_check_input(
    build: InputLossBuilder<'_>,
    input: &Matrix,
    h: f64,
) -> Result<GradCheckReport> {
    let mut tape = Tape::new();
    let (x, out) = build(&mut tape, input)?;
    let grads = tape.backward(out, 0)?;
    let analytic = grads
        .wrt(x)
        .cloned()
        .unwrap_or_else(|| Matrix::zeros(input.rows(), input.cols()));

    let mut report = GradCheckReport {
        checked: 0,
        max_rel_err: 0.0,
        worst_coord: 0,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
    };
    let eval = |m: &Matrix| -> Result<f64> {
        let mut t = Tape::new();
        let (_, v) = build(&mut t, m)?;
        Ok(t.value(v).item())
    };
    for coord in 0..input.len() {
        let mut plus = input.clone();
        plus.data_mut()[coord] += h;
        let mut minus = input.clone();
        minus.data_mut()[coord] -= h;
        let numeric = (eval(&plus)? - eval(&minus)?) / (2.0 * h);
        let err = rel_err(analytic.data()[coord], numeric);
        report.checked += 1;
        if err > report.max_rel_err {
            report.max_rel_err = err;
            report.worst_coord = coord;
            report.worst_analytic = analytic.data()[coord];
            report.worst_numeric = numeric;
        }
    }
    Ok(report)
}
