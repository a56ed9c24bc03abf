//! Levenberg–Marquardt for small nonlinear least-squares problems with a
//! central-difference Jacobian.

use alloc::vec;
use alloc::vec::Vec;

use crate::densemat::{DenseMatrix, Lu};

#[derive(Debug, Clone, Copy)]
pub(crate) struct LmOptions {
    /// Stop once `Φ = Σ r²` falls to or below this.
    pub target: f64,
    pub max_iter: usize,
    /// Central-difference step.
    pub jac_step: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct LmOutcome {
    pub x: Vec<f64>,
    pub converged: bool,
}

const MU_MAX: f64 = 1e16;
/// Accepted steps in a row with less than 0.1% decrease before giving up.
const STALL_LIMIT: usize = 12;

/// Minimize `Σ f(x)²`. `f` writes the residuals into its buffer and returns
/// `false` when any of them is not finite.
pub(crate) fn minimize<F>(mut f: F, x0: &[f64], opts: &LmOptions) -> LmOutcome
where
    F: FnMut(&[f64], &mut Vec<f64>) -> bool,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut res = Vec::new();
    if !f(&x, &mut res) {
        return LmOutcome {
            x,
            converged: false,
        };
    }
    let m = res.len();
    let mut phi = sum_sq(&res);
    let mut mu = 0.0;
    let mut stall = 0;
    let mut jac = DenseMatrix::zeros(m, n);
    let mut xp = x.clone();
    let mut rp = Vec::with_capacity(m);
    let mut rm = Vec::with_capacity(m);
    let mut trial = vec![0.0; n];
    let mut trial_res = Vec::with_capacity(m);

    for _ in 0..opts.max_iter {
        if phi <= opts.target {
            break;
        }
        // Jacobian by central differences.
        for j in 0..n {
            xp.copy_from_slice(&x);
            xp[j] = x[j] + opts.jac_step;
            let ok_p = f(&xp, &mut rp);
            xp[j] = x[j] - opts.jac_step;
            let ok_m = f(&xp, &mut rm);
            if !(ok_p && ok_m) {
                return LmOutcome {
                    x,
                    converged: false,
                };
            }
            for i in 0..m {
                jac[(i, j)] = (rp[i] - rm[i]) / (2.0 * opts.jac_step);
            }
        }
        if mu == 0.0 {
            let scale = jac.as_slice().iter().map(|v| v * v).sum::<f64>() / n.max(1) as f64;
            mu = 1e-3 * scale.max(1e-12);
        }
        let mut accepted = false;
        while mu < MU_MAX {
            let Some(step) = damped_step(&jac, &res, mu) else {
                mu *= 4.0;
                continue;
            };
            for j in 0..n {
                trial[j] = x[j] + step[j];
            }
            if f(&trial, &mut trial_res) {
                let trial_phi = sum_sq(&trial_res);
                if trial_phi < phi {
                    stall = if trial_phi > 0.999 * phi { stall + 1 } else { 0 };
                    x.copy_from_slice(&trial);
                    core::mem::swap(&mut res, &mut trial_res);
                    phi = trial_phi;
                    mu = (mu / 3.0).max(1e-20);
                    accepted = true;
                    break;
                }
            }
            mu *= 4.0;
        }
        if !accepted || stall >= STALL_LIMIT {
            break;
        }
    }
    LmOutcome {
        converged: phi <= opts.target,
        x,
    }
}

fn sum_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Solve `(JᵀJ + μI) δ = −Jᵀr`, through the `m × m` dual system when `J` is wide.
fn damped_step(jac: &DenseMatrix, res: &[f64], mu: f64) -> Option<Vec<f64>> {
    let (m, n) = (jac.rows(), jac.cols());
    if m < n {
        let mut g = DenseMatrix::zeros(m, m);
        for i in 0..m {
            for k in 0..=i {
                let v: f64 = jac.row(i).iter().zip(jac.row(k)).map(|(a, b)| a * b).sum();
                g[(i, k)] = v;
                g[(k, i)] = v;
            }
            g[(i, i)] += mu;
        }
        let rhs: Vec<f64> = res.iter().map(|r| -r).collect();
        let y = Lu::new(&g).ok()?.solve_vec(&rhs);
        jac.vec_mul(&y).ok()
    } else {
        let jt = jac.transpose();
        let mut g = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for k in 0..=i {
                let v: f64 = jt.row(i).iter().zip(jt.row(k)).map(|(a, b)| a * b).sum();
                g[(i, k)] = v;
                g[(k, i)] = v;
            }
            g[(i, i)] += mu;
        }
        let rhs: Vec<f64> = jt.mul_vec(res).ok()?.iter().map(|r| -r).collect();
        Some(Lu::new(&g).ok()?.solve_vec(&rhs))
    }
}
