use serde::Serialize;

use crate::error::Result;
use crate::graph::{
    lambda_max_bound, lambda_min_closed_form, matrices, symmetric_eigen, Topology, TopologyKind,
};

/// Closed-form versus eigensolved bounds on `H` for one `N`.
#[derive(Debug, Clone, Serialize)]
pub struct SpectralRow {
    pub n: usize,
    /// `2(1 + cos(2Nπ/(2N+1)))`
    pub closed_form: f64,
    /// `λ_min(L + B)` of the path pinned at one endpoint.
    pub path_lambda_min: f64,
    pub abs_error: f64,
    /// `max_kind λ_max(L + I)` over every topology defined for this `N`.
    pub max_lambda_max: f64,
    pub bound: f64,
}

impl SpectralRow {
    pub fn passed(&self, tol: f64) -> bool {
        self.abs_error <= tol && self.max_lambda_max <= self.bound + tol
    }
}

pub fn spectral_row(n: usize) -> Result<SpectralRow> {
    let path = Topology::build(TopologyKind::Path, n)?.with_pinned_nodes(&[0])?;
    let lam = symmetric_eigen(&matrices(&path, 1)?.pinned_laplacian()).0;
    let closed_form = lambda_min_closed_form(n);
    let mut max_lambda_max = f64::NEG_INFINITY;
    for kind in TopologyKind::ALL {
        let Ok(t) = Topology::build(kind, n) else { continue };
        let t = t.with_pins(vec![true; n])?;
        let ev = symmetric_eigen(&matrices(&t, 1)?.pinned_laplacian()).0;
        max_lambda_max = max_lambda_max.max(ev[n - 1]);
    }
    Ok(SpectralRow {
        n,
        closed_form,
        path_lambda_min: lam[0],
        abs_error: (lam[0] - closed_form).abs(),
        max_lambda_max,
        bound: lambda_max_bound(n),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_cases() {
        // N = 2: path 0–1 pinned at 0 gives [[2, −1], [−1, 1]], λ_min = (3 − √5)/2
        let r = spectral_row(2).unwrap();
        assert!((r.path_lambda_min - (3.0 - 5f64.sqrt()) / 2.0).abs() < 1e-14);
        assert!(r.passed(1e-10));
        // complete graph meets the bound with equality
        let r6 = spectral_row(6).unwrap();
        assert!((r6.max_lambda_max - 7.0).abs() < 1e-10);
    }
}
