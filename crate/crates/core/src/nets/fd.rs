use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Central-difference Jacobian of `f` at `x`. Column `c` is
/// `(f(x + h e_c) − f(x − h e_c)) / 2h`.
pub fn finite_diff_jacobian<F>(mut f: F, x: &[f64], step: f64) -> Result<DMatrix<f64>>
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {step}")));
    }
    let m = f(x).len();
    let mut jac = DMatrix::zeros(m, x.len());
    let mut xp = x.to_vec();
    for c in 0..x.len() {
        xp[c] = x[c] + step;
        let hi = f(&xp);
        xp[c] = x[c] - step;
        let lo = f(&xp);
        xp[c] = x[c];
        if hi.len() != m || lo.len() != m {
            return Err(Error::Dimension("function output length changed".into()));
        }
        for r in 0..m {
            jac[(r, c)] = (hi[r] - lo[r]) / (2.0 * step);
        }
    }
    Ok(jac)
}
