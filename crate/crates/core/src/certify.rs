//! SSP coefficient certification and the abscissa monotonicity check.

use alloc::format;

use crate::densemat::DenseMatrix;
use crate::tableau::{canonical_matrices, to_spijker, SpijkerForm, TsrkCoefficients};
use crate::{Error, Result};

/// Entries of `R` and `P` above `-NONNEG_TOL` count as nonnegative.
pub const NONNEG_TOL: f64 = 1e-12;

/// Default bisection width on `r`.
pub const DEFAULT_TOL: f64 = 1e-8;

/// Which canonical matrix holds the most negative entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    R,
    P,
}

/// Outcome of a feasibility check at one `r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feasibility {
    pub feasible: bool,
    /// Most negative entry over `R` and `P`; `-inf` when `I + rT` is singular.
    pub min_entry: f64,
    /// Block and `(row, column)` of `min_entry`.
    pub location: Option<(Block, usize, usize)>,
}

/// Check `R = (I+rT)⁻¹S ≥ −tol` and `P = r(I+rT)⁻¹T ≥ −tol` componentwise.
pub fn feasible_at(f: &SpijkerForm, r: f64) -> Feasibility {
    let (r_mat, p_mat) = match canonical_matrices(f, r) {
        Ok(pair) => pair,
        Err(_) => {
            return Feasibility {
                feasible: false,
                min_entry: f64::NEG_INFINITY,
                location: None,
            }
        }
    };
    let pick = |m: &DenseMatrix, b: Block| m.min_entry().map(|(v, (i, j))| (v, (b, i, j)));
    let best = match (pick(&r_mat, Block::R), pick(&p_mat, Block::P)) {
        (Some(a), Some(b)) => Some(if b.0 < a.0 { b } else { a }),
        (a, b) => a.or(b),
    };
    let (min_entry, location) = match best {
        Some((v, loc)) => (v, Some(loc)),
        None => (0.0, None),
    };
    Feasibility {
        feasible: min_entry >= -NONNEG_TOL,
        min_entry,
        location,
    }
}

/// Largest `r` in `[0, r_max]` with a nonnegative canonical form, by bisection.
///
/// Returns the feasible end of a final bracket of width `≤ tol`, or `r_max`
/// itself when the method is feasible there.
pub fn ssp_coefficient(f: &SpijkerForm, r_max: f64, tol: f64) -> Result<f64> {
    if !(r_max > 0.0) || !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need r_max > 0 and tol > 0, got r_max = {r_max}, tol = {tol}"
        )));
    }
    if !feasible_at(f, 0.0).feasible {
        return Err(Error::Internal(
            "method is not a convex combination at r = 0 (negative D or theta)".into(),
        ));
    }
    if feasible_at(f, r_max).feasible {
        return Ok(r_max);
    }
    let (mut lo, mut hi) = (0.0, r_max);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if feasible_at(f, mid).feasible {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Default bracket `[0, 2(s+1)]` for an `s`-stage method.
pub fn default_r_max(stages: usize) -> f64 {
    2.0 * (stages as f64 + 1.0)
}

/// SSP coefficient with the default bracket and tolerance.
pub fn certify(m: &TsrkCoefficients) -> Result<f64> {
    ssp_coefficient(&to_spijker(m), default_r_max(m.stages()), DEFAULT_TOL)
}

/// True iff `c` starts at 0, ends at 1 and never decreases, all within `tol`.
pub fn abscissa_monotone(c: &[f64], tol: f64) -> bool {
    match (c.first(), c.last()) {
        (Some(&first), Some(&last)) => {
            first.abs() <= tol
                && (last - 1.0).abs() <= tol
                && c.windows(2).all(|w| w[1] - w[0] >= -tol)
        }
        _ => false,
    }
}
