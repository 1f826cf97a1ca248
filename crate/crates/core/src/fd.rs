//! Central finite differences, used only as an independent oracle against
//! the jet engine (tests and the `oracle` CLI command). Never part of the
//! main computation path.

use crate::error::{Error, Result};
use crate::jet::ScalarField;

/// First and second partials estimated by O(step²) central differences.
#[derive(Clone, Copy, Debug)]
pub struct FdPartials {
    pub grad: [f64; 3],
    /// Full symmetric 3×3 second-derivative matrix.
    pub hess: [[f64; 3]; 3],
}

/// Central-difference first and second partials of `field` at `point`.
///
/// Requires the point to sit at distance ≥ 2·step from the domain boundary
/// so every stencil point stays inside.
pub fn finite_difference_oracle(
    field: &ScalarField,
    point: [f64; 3],
    step: f64,
) -> Result<FdPartials> {
    let d = &field.domain;
    for a in 0..3 {
        if point[a] - d.lo[a] < 2.0 * step || d.hi[a] - point[a] < 2.0 * step {
            return Err(Error::StencilOutsideDomain { point, step });
        }
    }

    let value = |p: [f64; 3]| field.value(p);
    let shift = |mut p: [f64; 3], a: usize, s: f64| {
        p[a] += s;
        p
    };

    let f0 = value(point)?;
    let mut grad = [0.0; 3];
    let mut hess = [[0.0; 3]; 3];
    for a in 0..3 {
        let fp = value(shift(point, a, step))?;
        let fm = value(shift(point, a, -step))?;
        grad[a] = (fp - fm) / (2.0 * step);
        hess[a][a] = (fp - 2.0 * f0 + fm) / (step * step);
    }
    for a in 0..3 {
        for b in (a + 1)..3 {
            let pp = value(shift(shift(point, a, step), b, step))?;
            let pm = value(shift(shift(point, a, step), b, -step))?;
            let mp = value(shift(shift(point, a, -step), b, step))?;
            let mm = value(shift(shift(point, a, -step), b, -step))?;
            let v = (pp - pm - mp + mm) / (4.0 * step * step);
            hess[a][b] = v;
            hess[b][a] = v;
        }
    }
    Ok(FdPartials { grad, hess })
}
