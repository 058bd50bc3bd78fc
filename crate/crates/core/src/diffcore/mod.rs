//! Dense `f64` matrices and a reverse-mode gradient tape.
//!
//! Every loss in the crate is built on a [`Tape`]: parameters enter as
//! trainable leaves, each operation appends a node, and [`Tape::backward`]
//! sweeps the nodes once in reverse, accumulating into leaf gradients.

mod tape;
mod tensor;

pub use tape::{Elementwise, Tape, Var, LOG_FLOOR};
pub use tensor::Tensor;

use crate::error::{Error, Result};

/// Compares the tape gradient of a scalar function against central
/// differences with step `h`, returning the largest
/// `|analytic - numeric| / max(1, |analytic|)` over coordinates.
pub fn grad_check<F>(f: F, point: &Tensor, h: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    if h.is_nan() || h <= 0.0 {
        return Err(Error::InvalidArgument(format!("step h must be > 0, got {h}")));
    }
    let mut tape = Tape::new();
    let x = tape.param(point.clone());
    let y = f(&mut tape, x)?;
    tape.backward(y)?;
    let analytic = tape
        .grad(x)
        .cloned()
        .unwrap_or_else(|| Tensor::zeros(point.rows(), point.cols()));

    let eval = |p: Tensor| -> Result<f64> {
        let mut tape = Tape::new();
        let x = tape.constant(p);
        let y = f(&mut tape, x)?;
        let v = tape.value(y).item()?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite { op: "grad_check" })
        }
    };

    let mut worst: f64 = 0.0;
    for i in 0..point.len() {
        let mut plus = point.clone();
        plus.data_mut()[i] += h;
        let mut minus = point.clone();
        minus.data_mut()[i] -= h;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * h);
        let a = analytic.data()[i];
        worst = worst.max((a - numeric).abs() / a.abs().max(1.0));
    }
    Ok(worst)
}
