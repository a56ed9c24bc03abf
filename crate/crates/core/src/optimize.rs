//! Search for methods with a large SSP coefficient.
//!
//! The unknowns are the canonical Shu–Osher weights at a fixed `r`: every
//! stage row of `[R P]` is a point of the probability simplex, written as
//! `w = z² / Σz²`. Any such point gives a method whose canonical form at `r`
//! is nonnegative, so `C ≥ r` holds by construction and only the order
//! conditions (plus the abscissa ordering, when requested) remain as
//! residuals for Levenberg–Marquardt. Each start then walks `r` upward with a
//! step that grows on success and halves on failure.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::certify::{self, abscissa_monotone};
use crate::densemat::DenseMatrix;
use crate::lsq::{self, LmOptions};
use crate::order::{self, Extended, OrderReport};
use crate::rng::Prng;
use crate::tableau::{abscissas, canonical_matrices, to_spijker, SpijkerForm, TsrkCoefficients};
use crate::{Error, Result};

/// Tolerance used when checking the abscissa ordering of a result.
pub const MONOTONE_TOL: f64 = 1e-10;

/// Polishing stops once every residual is at most this.
pub const POLISH_TARGET: f64 = 1e-13;

const JAC_STEP: f64 = 1e-7;
const START_R: f64 = 0.2;
const FIRST_STEP: f64 = 0.1;
const MAX_STEP: f64 = 0.5;
/// Continuation resolution for the screening pass over all starts.
const SCREEN_TOL: f64 = 1e-2;
/// Starts carried from screening into the fine continuation.
const REFINE_STARTS: usize = 4;
/// Smallest simplex weight kept when moving to a new `r`.
const WARM_FLOOR: f64 = 1e-10;

/// Search problem.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationProblem {
    pub stages: usize,
    pub order: usize,
    /// 1 restricts the search to one-step Runge–Kutta methods, 2 to two-step methods.
    pub steps: usize,
    pub require_monotone_abscissas: bool,
    pub multistarts: usize,
    pub seed: u64,
    /// Feasibility threshold on the sum of squared residuals.
    pub inner_tol: f64,
    /// Resolution of the search in `r`.
    pub outer_tol: f64,
}

impl OptimizationProblem {
    /// Two-step search with default tolerances and start count.
    pub fn new(stages: usize, order: usize) -> Self {
        Self {
            stages,
            order,
            steps: 2,
            require_monotone_abscissas: false,
            multistarts: default_multistarts(stages),
            seed: 0,
            inner_tol: 1e-16,
            outer_tol: 1e-4,
        }
    }

    pub fn monotone(mut self, on: bool) -> Self {
        self.require_monotone_abscissas = on;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_starts(mut self, starts: usize) -> Self {
        self.multistarts = starts;
        self
    }

    pub fn one_step(mut self) -> Self {
        self.steps = 1;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.into()));
        if self.stages == 0 {
            return bad("stages must be at least 1");
        }
        if !(1..=order::MAX_ORDER).contains(&self.order) {
            return bad("order must be in 1..=8");
        }
        if !(1..=2).contains(&self.steps) {
            return bad("steps must be 1 or 2");
        }
        if self.multistarts == 0 {
            return bad("need at least one start");
        }
        if !(self.inner_tol > 0.0) || !(self.outer_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        Ok(())
    }
}

/// 200 starts up to four stages, 1000 beyond.
pub fn default_multistarts(stages: usize) -> usize {
    if stages <= 4 {
        200
    } else {
        1000
    }
}

/// Best method found, with its independently certified coefficient.
#[derive(Debug, Clone)]
pub struct OptimizationResult {
    pub method: TsrkCoefficients,
    pub certified_c: f64,
    pub order_report: OrderReport,
    /// Sum of squared residuals at the returned method.
    pub penalty_at_solution: f64,
    pub starts_used: usize,
    /// Index of the start that produced the method.
    pub best_start: usize,
    /// Whether polishing reached [`POLISH_TARGET`].
    pub polished: bool,
}

/// Output of [`polish`].
#[derive(Debug, Clone)]
pub struct Polished {
    pub method: TsrkCoefficients,
    /// False when the refinement diverged and `method` is the input.
    pub converged: bool,
    pub max_residual: f64,
}

/// Index bookkeeping for the free rows of `[R P]`.
#[derive(Debug, Clone)]
struct Layout {
    steps: usize,
    /// Spijker rows: `steps - 1` history slots, `s` stages, `u^{n+1}`.
    n: usize,
    /// `(row, offset into z)` for each free row; the row has `steps + row` weights.
    rows: Vec<(usize, usize)>,
    len: usize,
}

impl Layout {
    fn new(steps: usize, stages: usize) -> Self {
        let n = steps + stages;
        let mut rows = Vec::new();
        let mut off = 0;
        for i in steps..n {
            rows.push((i, off));
            off += steps + i;
        }
        Self {
            steps,
            n,
            rows,
            len: off,
        }
    }

    fn width(&self, row: usize) -> usize {
        self.steps + row
    }

    /// Spijker pair for simplex parameters `z` at `r > 0`.
    fn spijker(&self, z: &[f64], r: f64) -> SpijkerForm {
        let (k, n) = (self.steps, self.n);
        let mut s = DenseMatrix::zeros(n, k);
        let mut x = DenseMatrix::zeros(n, n);
        for h in 0..k {
            s[(h, h)] = 1.0;
        }
        let mut w = Vec::new();
        for &(i, off) in &self.rows {
            let zr = &z[off..off + self.width(i)];
            let total: f64 = zr.iter().map(|v| v * v).sum();
            w.clear();
            w.extend(zr.iter().map(|v| v * v / total));
            let (rw, pw) = w.split_at(k);
            // S_i = R_i + Σ P_ij S_j and X_i = P_i + Σ P_ij X_j with X = rT.
            for c in 0..k {
                s[(i, c)] = rw[c];
            }
            for (j, &p) in pw.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                x[(i, j)] += p;
                for c in 0..k {
                    s[(i, c)] += p * s[(j, c)];
                }
                for c in 0..j {
                    x[(i, c)] += p * x[(j, c)];
                }
            }
        }
        SpijkerForm {
            s,
            t: x.scaled(1.0 / r),
        }
    }

    /// Simplex parameters of a method's canonical form at `r`, clamping
    /// negative weights to `floor`.
    fn parameters(&self, sp: &SpijkerForm, r: f64, floor: f64) -> Result<Vec<f64>> {
        let (rm, pm) = canonical_matrices(sp, r)?;
        let mut z = vec![0.0; self.len];
        for &(i, off) in &self.rows {
            let mut w: Vec<f64> = rm.row(i).iter().chain(&pm.row(i)[..i]).map(|&v| v.max(floor)).collect();
            let total: f64 = w.iter().sum();
            for (dst, v) in z[off..].iter_mut().zip(w.iter_mut()) {
                *dst = libm::sqrt(*v / total);
            }
        }
        Ok(z)
    }
}

/// Residual evaluator shared by the search and the polish.
struct Residuals<'a> {
    layout: &'a Layout,
    order: usize,
    monotone: bool,
}

impl Residuals<'_> {
    fn eval(&self, z: &[f64], r: f64, out: &mut Vec<f64>) -> bool {
        out.clear();
        let sp = self.layout.spijker(z, r);
        let ext = Extended::from_spijker(&sp);
        ext.signed_residuals(self.order, out);
        if self.monotone {
            let c = &ext.abscissas()[self.layout.steps - 1..];
            for w in c.windows(2) {
                out.push((w[1] - w[0]).min(0.0));
            }
            let last = *c.last().expect("at least one stage");
            out.push((ext.final_abscissa() - last).min(0.0));
        }
        out.iter().all(|v| v.is_finite())
    }

    fn solve(&self, z0: &[f64], r: f64, target: f64, max_iter: usize) -> lsq::LmOutcome {
        let opts = LmOptions {
            target,
            max_iter,
            jac_step: JAC_STEP,
        };
        lsq::minimize(|z, out| self.eval(z, r, out), z0, &opts)
    }
}

#[derive(Debug, Clone)]
struct Track {
    start: usize,
    r: f64,
    z: Vec<f64>,
    step: f64,
}

fn random_start(layout: &Layout, rng: &mut Prng) -> Vec<f64> {
    let k = layout.steps;
    let mut z = vec![0.0; layout.len];
    for &(i, off) in &layout.rows {
        let mut w = vec![0.0; layout.width(i)];
        let mut p_sum = 0.0;
        for j in 0..i {
            let p = START_R * rng.uniform() * 2.0 / i as f64;
            w[k + j] = p;
            p_sum += p;
        }
        let rest = 1.0 - p_sum;
        if k == 2 {
            let hist = 0.3 * rng.uniform();
            w[0] = rest * hist;
            w[1] = rest * (1.0 - hist);
        } else {
            w[0] = rest;
        }
        for (dst, v) in z[off..].iter_mut().zip(&w) {
            *dst = libm::sqrt(*v);
        }
    }
    z
}

/// Walk `r` upward from `t` until the step falls below `stop`.
fn continue_track(res: &Residuals<'_>, t: &mut Track, stop: f64, inner_tol: f64) {
    while t.step >= stop {
        let r_try = t.r + t.step;
        let sp = res.layout.spijker(&t.z, t.r);
        let accepted = res
            .layout
            .parameters(&sp, r_try, WARM_FLOOR)
            .ok()
            .map(|z0| res.solve(&z0, r_try, inner_tol, 60))
            .filter(|out| out.converged);
        match accepted {
            Some(out) => {
                t.r = r_try;
                t.z = out.x;
                t.step = (t.step * 1.5).min(MAX_STEP);
            }
            None => t.step *= 0.5,
        }
    }
}

/// Multistart search for the method with the largest SSP coefficient.
pub fn optimize_tsrk(problem: &OptimizationProblem) -> Result<OptimizationResult> {
    problem.validate()?;
    let layout = Layout::new(problem.steps, problem.stages);
    let res = Residuals {
        layout: &layout,
        order: problem.order,
        monotone: problem.require_monotone_abscissas,
    };

    // Screening: every start runs a coarse continuation independently.
    let mut tracks: Vec<Track> = Vec::new();
    for start in 0..problem.multistarts {
        let mut rng = Prng::with_stream(problem.seed, start as u64);
        let z0 = random_start(&layout, &mut rng);
        let out = res.solve(&z0, START_R, problem.inner_tol, 300);
        if !out.converged {
            continue;
        }
        let mut t = Track {
            start,
            r: START_R,
            z: out.x,
            step: FIRST_STEP,
        };
        continue_track(&res, &mut t, SCREEN_TOL.max(problem.outer_tol), problem.inner_tol);
        tracks.push(t);
    }
    if tracks.is_empty() {
        return Err(Error::OptimizationFailed(format!(
            "no start satisfied the order-{} conditions with {} stages at r = {START_R}",
            problem.order, problem.stages
        )));
    }

    // Refinement of the leading starts; ties keep the lower start index.
    tracks.sort_by(|a, b| b.r.total_cmp(&a.r).then(a.start.cmp(&b.start)));
    tracks.truncate(REFINE_STARTS);
    for t in &mut tracks {
        t.step = t.step.max(SCREEN_TOL);
        continue_track(&res, t, problem.outer_tol, problem.inner_tol);
    }
    tracks.sort_by(|a, b| b.r.total_cmp(&a.r).then(a.start.cmp(&b.start)));
    let best = &tracks[0];

    let raw = finish_method(layout.spijker(&best.z, best.r).to_coefficients()?)?;
    let polished = polish(&raw, problem.order, problem.require_monotone_abscissas)?;
    let method = polished.method;
    let certified_c = certify::certify(&method)?;
    let order_report = order::residuals_up_to(&method, problem.order)?;
    let penalty_at_solution = penalty(&method, problem.order, problem.require_monotone_abscissas);
    Ok(OptimizationResult {
        method,
        certified_c,
        order_report,
        penalty_at_solution,
        starts_used: problem.multistarts,
        best_start: best.start,
        polished: polished.converged,
    })
}

fn finish_method(m: TsrkCoefficients) -> Result<TsrkCoefficients> {
    m.embed_two_step()
}

/// Sum of squared order residuals plus squared abscissa-ordering violations.
pub fn penalty(m: &TsrkCoefficients, p: usize, monotone: bool) -> f64 {
    let ext = Extended::new(m);
    let mut out = Vec::new();
    ext.signed_residuals(p, &mut out);
    let mut phi: f64 = out.iter().map(|v| v * v).sum();
    if monotone {
        let c = abscissas(m);
        phi += c.windows(2).map(|w| { let v = (w[1] - w[0]).min(0.0); v * v }).sum::<f64>();
    }
    phi
}

fn max_violation(m: &TsrkCoefficients, p: usize, monotone: bool) -> f64 {
    let ext = Extended::new(m);
    let mut out = Vec::new();
    ext.signed_residuals(p, &mut out);
    let mut worst = out.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if monotone {
        let c = abscissas(m);
        for w in c.windows(2) {
            worst = worst.max(-(w[1] - w[0]).min(0.0));
        }
    }
    worst
}

/// Refine a near-feasible method at fixed `r` equal to its certified
/// coefficient until every residual is at most [`POLISH_TARGET`].
pub fn polish(m: &TsrkCoefficients, p: usize, monotone: bool) -> Result<Polished> {
    if !(1..=order::MAX_ORDER).contains(&p) {
        return Err(Error::InvalidArgument(format!("order must be in 1..=8, got {p}")));
    }
    let before = max_violation(m, p, monotone);
    if before <= POLISH_TARGET {
        return Ok(Polished {
            method: m.clone(),
            converged: true,
            max_residual: before,
        });
    }
    let unchanged = Polished {
        method: m.clone(),
        converged: false,
        max_residual: before,
    };
    let c = certify::certify(m)?;
    if !(c > 0.0) {
        return Ok(unchanged);
    }
    let layout = Layout::new(m.steps(), m.stages());
    let res = Residuals {
        layout: &layout,
        order: p,
        monotone,
    };
    let Ok(z0) = layout.parameters(&to_spijker(m), c, 0.0) else {
        return Ok(unchanged);
    };
    let out = res.solve(&z0, c, POLISH_TARGET * POLISH_TARGET, 200);
    let Ok(candidate) = layout.spijker(&out.x, c).to_coefficients() else {
        return Ok(unchanged);
    };
    let after = max_violation(&candidate, p, monotone);
    if after <= POLISH_TARGET.max(before.min(1e-11)) && after <= before {
        Ok(Polished {
            method: candidate,
            converged: after <= POLISH_TARGET,
            max_residual: after,
        })
    } else {
        Ok(unchanged)
    }
}

/// True when `m` satisfies the non-decreasing abscissa constraint.
pub fn has_monotone_abscissas(m: &TsrkCoefficients) -> bool {
    abscissa_monotone(&abscissas(m), MONOTONE_TOL)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::methods;

    #[test]
    fn layout_round_trip() {
        let layout = Layout::new(2, 3);
        let m = methods::essprk33();
        let z = layout.parameters(&to_spijker(&m), 1.0, 0.0).unwrap();
        let back = layout.spijker(&z, 1.0).to_coefficients().unwrap();
        let d = back.a().sub(m.a()).unwrap().max_abs();
        assert!(d < 1e-15, "{d}");
        for (x, y) in back.b().iter().zip(m.b()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn simplex_points_certify_at_r() {
        let layout = Layout::new(2, 3);
        let mut rng = Prng::new(9);
        for _ in 0..20 {
            let z: Vec<f64> = (0..layout.len).map(|_| rng.range(-1.0, 1.0)).collect();
            let r = rng.range(0.1, 3.0);
            let sp = layout.spijker(&z, r);
            assert!(certify::feasible_at(&sp, r).feasible);
        }
    }

    #[test]
    fn one_stage_first_order_one_step_is_forward_euler() {
        let p = OptimizationProblem::new(1, 1).one_step().with_starts(3);
        let r = optimize_tsrk(&p).unwrap();
        assert!((r.certified_c - 1.0).abs() < 1e-4, "{}", r.certified_c);
        assert!((r.method.b()[0] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn two_stage_second_order() {
        let p = OptimizationProblem::new(2, 2).monotone(true).with_starts(10);
        let r = optimize_tsrk(&p).unwrap();
        assert!((r.certified_c - core::f64::consts::SQRT_2).abs() < 0.01 * 1.4142, "{}", r.certified_c);
        assert!(r.order_report.max_residual() <= 1e-10);
        assert!(has_monotone_abscissas(&r.method));
    }

    #[test]
    fn polish_fixed_point() {
        let m = methods::essprk33();
        let out = polish(&m, 3, false).unwrap();
        assert!(out.converged);
        assert_eq!(out.method, m);
    }

    #[test]
    fn polish_recovers_perturbed_shu_osher() {
        let m = methods::essprk33();
        let mut rng = Prng::new(21);
        let mut a = m.a().clone();
        for i in 0..3 {
            for j in 0..i {
                a[(i, j)] *= 1.0 + 1e-6 * rng.range(-1.0, 1.0);
            }
        }
        let b: Vec<f64> = m.b().iter().map(|v| v * (1.0 + 1e-6 * rng.range(-1.0, 1.0))).collect();
        let pm = TsrkCoefficients::new(
            m.d().clone(),
            m.a_hat().clone(),
            a,
            m.theta().to_vec(),
            m.b_hat().to_vec(),
            b,
        )
        .unwrap();
        assert!(order::residuals_up_to(&pm, 3).unwrap().max_residual() > 1e-8);
        let out = polish(&pm, 3, false).unwrap();
        assert!(out.converged);
        assert!(order::residuals_up_to(&out.method, 3).unwrap().max_residual() <= 1e-11);
        let c0 = certify::certify(&pm).unwrap();
        let c1 = certify::certify(&out.method).unwrap();
        assert!(c1 >= c0 - 1e-4, "{c0} -> {c1}");
    }

    #[test]
    fn invalid_problems_are_rejected() {
        assert!(OptimizationProblem::new(0, 2).validate().is_err());
        assert!(OptimizationProblem::new(2, 9).validate().is_err());
        assert!(OptimizationProblem::new(2, 2).with_starts(0).validate().is_err());
    }
}
