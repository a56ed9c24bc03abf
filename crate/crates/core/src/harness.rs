//! TVD time-step sweeps with observed-coefficient extraction, and the van der
//! Pol convergence study.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write as _;

use crate::densemat::DenseMatrix;
use crate::integrate::{IfProblem, IfScheme, Integrator, LinearPart, Nonlinear};
use crate::math;
use crate::semidiscrete::{initial_condition, InitialCondition, OneSidedDifference, PeriodicGrid, Weno5};
use crate::tableau::TsrkCoefficients;
use crate::{Error, Result};

/// Rise above which a step is counted as not TVD.
pub const DEFAULT_THRESHOLD: f64 = 1e-12;
/// Bisection re-runs used to refine an observed λ.
pub const MAX_BISECTIONS: usize = 20;

/// Default λ grid: `0.02, 0.04, …, 8.00`.
pub fn default_lambdas() -> Vec<f64> {
    (1..=400).map(|i| i as f64 * 0.02).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Example {
    /// `u_t + a u_x + u_x = 0`, step on `[1/4, 3/4]`, first-order upwinding for both terms.
    Linear,
    /// `u_t + a u_x + (u²/2)_x = 0`, step on `[0, 1/2]`, upwind `L` and WENO5 `N`.
    Burgers,
}

impl Example {
    pub fn name(self) -> &'static str {
        match self {
            Self::Linear => "linear",
            Self::Burgers => "burgers",
        }
    }
}

/// How the split problem is advanced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stepping {
    /// Integrating factor on `L`; decreasing abscissas are rejected unless allowed.
    IntegratingFactor { allow_nonmonotone: bool },
    /// The method applied directly to `L + N`.
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSetup {
    pub example: Example,
    /// Wavespeed of the linear part.
    pub a: f64,
    pub m: usize,
    /// Method steps per run, after the starting step of two-step methods.
    pub steps: usize,
    pub stepping: Stepping,
    /// Discretization of `(u²/2)_x` for [`Example::Burgers`].
    pub weno: Weno5,
}

impl SweepSetup {
    /// 1000 points, 10 steps, integrating factor.
    pub fn linear(a: f64) -> Self {
        Self {
            example: Example::Linear,
            a,
            m: 1000,
            steps: 10,
            stepping: Stepping::IntegratingFactor {
                allow_nonmonotone: false,
            },
            weno: Weno5::upwind(),
        }
    }

    /// 400 points, 25 steps, integrating factor.
    pub fn burgers(a: f64) -> Self {
        Self {
            example: Example::Burgers,
            a,
            m: 400,
            steps: 25,
            stepping: Stepping::IntegratingFactor {
                allow_nonmonotone: false,
            },
            weno: Weno5::upwind(),
        }
    }

    pub fn with_grid(mut self, m: usize) -> Self {
        self.m = m;
        self
    }

    pub fn with_steps(mut self, steps: usize) -> Self {
        self.steps = steps;
        self
    }

    pub fn with_weno(mut self, weno: Weno5) -> Self {
        self.weno = weno;
        self
    }

    pub fn explicit(mut self) -> Self {
        self.stepping = Stepping::Explicit;
        self
    }

    pub fn allow_nonmonotone(mut self) -> Self {
        self.stepping = Stepping::IntegratingFactor {
            allow_nonmonotone: true,
        };
        self
    }
}

/// Maximum stage-to-stage TV rise per λ.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub method: String,
    pub example: Example,
    pub a: f64,
    pub lambdas: Vec<f64>,
    /// `+∞` where the run failed.
    pub rises: Vec<f64>,
    pub steps: usize,
    pub m: usize,
}

impl SweepRecord {
    /// `lambda,max_tv_rise` rows with 17 significant digits.
    pub fn to_csv(&self) -> String {
        csv(("lambda", "max_tv_rise"), &self.lambdas, &self.rises)
    }
}

type BoxedNonlinear = Box<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// A compiled method on one example, reusable across λ.
pub struct Sweeper {
    name: String,
    setup: SweepSetup,
    dx: f64,
    scheme: IfScheme,
    problem: IfProblem<BoxedNonlinear>,
}

impl core::fmt::Debug for Sweeper {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Sweeper")
            .field("name", &self.name)
            .field("setup", &self.setup)
            .finish_non_exhaustive()
    }
}

impl Sweeper {
    /// Compile `method` at its certified SSP coefficient for `setup`.
    pub fn new(name: &str, method: &TsrkCoefficients, setup: &SweepSetup) -> Result<Self> {
        if setup.steps == 0 {
            return Err(Error::InvalidArgument("steps must be at least 1".into()));
        }
        if !setup.a.is_finite() || setup.a < 0.0 {
            return Err(Error::InvalidArgument(format!("wavespeed must be nonnegative, got {}", setup.a)));
        }
        let grid = PeriodicGrid::new(setup.m)?;
        let dx = grid.dx();
        let lin = OneSidedDifference::upwind(setup.a, grid);
        let (u0, nonlinear): (Vec<f64>, BoxedNonlinear) = match setup.example {
            Example::Linear => {
                let u0 = initial_condition(InitialCondition::AdvectionStep, grid).into_values();
                let speed = match setup.stepping {
                    Stepping::Explicit => setup.a + 1.0,
                    Stepping::IntegratingFactor { .. } => 1.0,
                };
                let n = OneSidedDifference::upwind(speed, grid);
                (u0, Box::new(move |u: &[f64], out: &mut [f64]| n.apply(u, out)))
            }
            Example::Burgers => {
                let u0 = initial_condition(InitialCondition::BurgersStep, grid).into_values();
                let weno = setup.weno;
                let n: BoxedNonlinear = match setup.stepping {
                    Stepping::Explicit => Box::new(move |u: &[f64], out: &mut [f64]| {
                        weno.apply(u, dx, out);
                        let mut lu = vec![0.0; u.len()];
                        lin.apply(u, &mut lu);
                        out.iter_mut().zip(&lu).for_each(|(o, v)| *o += v);
                    }),
                    Stepping::IntegratingFactor { .. } => {
                        Box::new(move |u: &[f64], out: &mut [f64]| weno.apply(u, dx, out))
                    }
                };
                (u0, n)
            }
        };
        let (linear, allow) = match setup.stepping {
            Stepping::Explicit => (LinearPart::Zero(setup.m), true),
            Stepping::IntegratingFactor { allow_nonmonotone } => {
                (LinearPart::from_difference(&lin, setup.m), allow_nonmonotone)
            }
        };
        Ok(Self {
            name: name.to_string(),
            setup: *setup,
            dx,
            scheme: IfScheme::with_certified(method, allow)?,
            problem: IfProblem::new(linear, nonlinear, u0)?,
        })
    }

    pub fn setup(&self) -> &SweepSetup {
        &self.setup
    }

    /// Largest stage-to-stage TV rise over one run at `Δt = λ Δx`; `+∞` on failure.
    pub fn rise_at(&self, lambda: f64) -> f64 {
        self.try_rise_at(lambda).unwrap_or(f64::INFINITY)
    }

    fn try_rise_at(&self, lambda: f64) -> Result<f64> {
        let mut it = Integrator::new(&self.scheme, &self.problem, lambda * self.dx)?;
        let mut rise = it.bootstrap_rise();
        for _ in 0..self.setup.steps {
            rise = rise.max(it.step()?.max_rise);
        }
        Ok(rise)
    }

    pub fn sweep(&self, lambdas: &[f64]) -> Result<SweepRecord> {
        check_increasing("lambdas", lambdas)?;
        Ok(SweepRecord {
            method: self.name.clone(),
            example: self.setup.example,
            a: self.setup.a,
            lambdas: lambdas.to_vec(),
            rises: lambdas.iter().map(|&l| self.rise_at(l)).collect(),
            steps: self.setup.steps,
            m: self.setup.m,
        })
    }

    /// Scan `lambdas` up to the first rise above `threshold`, then bisect.
    pub fn observed_lambda(&self, lambdas: &[f64], threshold: f64) -> Result<f64> {
        check_increasing("lambdas", lambdas)?;
        let mut lo = None;
        for &l in lambdas {
            if self.rise_at(l) > threshold {
                return match lo {
                    Some(lo) => Ok(bisect(lo, l, threshold, |x| self.rise_at(x))),
                    None => Err(no_transition(lambdas)),
                };
            }
            lo = Some(l);
        }
        Err(no_transition(lambdas))
    }
}

fn no_transition(lambdas: &[f64]) -> Error {
    Error::NoTransition {
        lo: lambdas.first().copied().unwrap_or(f64::NAN),
        hi: lambdas.last().copied().unwrap_or(f64::NAN),
    }
}

fn check_increasing(what: &str, v: &[f64]) -> Result<()> {
    if v.iter().any(|x| !x.is_finite() || *x <= 0.0) || v.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(format!(
            "{what} must be positive and strictly increasing"
        )));
    }
    Ok(())
}

/// Bisect between a passing `lo` and a failing `hi` to three significant digits.
fn bisect(mut lo: f64, mut hi: f64, threshold: f64, mut rise: impl FnMut(f64) -> f64) -> f64 {
    for _ in 0..MAX_BISECTIONS {
        if hi - lo <= 1e-4 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if rise(mid) > threshold {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    lo
}

/// Run a sweep of `method` over `lambdas`.
pub fn tvd_sweep(name: &str, method: &TsrkCoefficients, setup: &SweepSetup, lambdas: &[f64]) -> Result<SweepRecord> {
    Sweeper::new(name, method, setup)?.sweep(lambdas)
}

/// Largest λ of the record before the first rise above `threshold`. With a
/// `probe` that re-runs single λ values, the bracket is refined by bisection.
pub fn observed_lambda(
    rec: &SweepRecord,
    threshold: f64,
    probe: Option<&mut dyn FnMut(f64) -> f64>,
) -> Result<f64> {
    let cross = rec.rises.iter().position(|r| !(*r <= threshold));
    match cross {
        Some(i) if i > 0 => {
            let (lo, hi) = (rec.lambdas[i - 1], rec.lambdas[i]);
            Ok(match probe {
                Some(p) => bisect(lo, hi, threshold, p),
                None => lo,
            })
        }
        _ => Err(no_transition(&rec.lambdas)),
    }
}

/// Errors at the final time against a high-accuracy reference.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRecord {
    pub method: String,
    pub dts: Vec<f64>,
    /// Max-norm errors at `T_final`.
    pub errors: Vec<f64>,
    /// Least-squares slope of `log10(error)` against `log10(Δt)`.
    pub slope: f64,
    /// Step sizes whose runs blew up.
    pub dropped: Vec<f64>,
}

impl ConvergenceRecord {
    /// `dt,error` rows with 17 significant digits.
    pub fn to_csv(&self) -> String {
        csv(("dt", "error"), &self.dts, &self.errors)
    }
}

/// Time steps of the van der Pol study.
pub const VDP_DTS: [f64; 6] = [0.01, 0.02, 0.04, 0.05, 0.08, 0.10];
pub const VDP_T_FINAL: f64 = 2.0;
/// Tolerance of the adaptive reference integrator.
pub const REFERENCE_TOL: f64 = 1e-13;

fn vdp_nonlinear(u: &[f64], out: &mut [f64]) {
    out[0] = 0.0;
    out[1] = (1.0 - u[0] * u[0]) * u[1];
}

/// `u' = [[0, 1], [−1, 0]] u + (0, (1 − u₁²) u₂)`, `u(0) = (2, 0)`.
pub fn van_der_pol() -> IfProblem<fn(&[f64], &mut [f64])> {
    let l = DenseMatrix::from_rows(&[[0.0, 1.0], [-1.0, 0.0]]).expect("finite");
    IfProblem::new(
        LinearPart::Dense(l),
        vdp_nonlinear as fn(&[f64], &mut [f64]),
        vec![2.0, 0.0],
    )
    .expect("matching sizes")
}

fn vdp_rhs(u: &[f64], out: &mut [f64]) {
    out[0] = u[1];
    out[1] = -u[0] + (1.0 - u[0] * u[0]) * u[1];
}

/// Explicit embedded Runge–Kutta pair; steps are taken with `b`, errors
/// estimated with `b − b_err`.
#[derive(Debug, Clone, Copy)]
pub struct EmbeddedPair {
    pub a: &'static [&'static [f64]],
    pub b: &'static [f64],
    pub b_err: &'static [f64],
    /// Order of the propagated solution.
    pub order: usize,
    /// Order of the error estimate.
    pub err_order: usize,
}

/// Dormand–Prince 5(4).
pub const DOPRI5: EmbeddedPair = EmbeddedPair {
    a: &[
        &[],
        &[1.0 / 5.0],
        &[3.0 / 40.0, 9.0 / 40.0],
        &[44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0],
        &[19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0],
        &[9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0],
        &[35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ],
    b: &[35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0],
    b_err: &[
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ],
    order: 5,
    err_order: 4,
};

/// Runge–Kutta–Fehlberg 4(5), advanced with the fifth-order weights.
pub const RKF45: EmbeddedPair = EmbeddedPair {
    a: &[
        &[],
        &[1.0 / 4.0],
        &[3.0 / 32.0, 9.0 / 32.0],
        &[1932.0 / 2197.0, -7200.0 / 2197.0, 7296.0 / 2197.0],
        &[439.0 / 216.0, -8.0, 3680.0 / 513.0, -845.0 / 4104.0],
        &[-8.0 / 27.0, 2.0, -3544.0 / 2565.0, 1859.0 / 4104.0, -11.0 / 40.0],
    ],
    b: &[16.0 / 135.0, 0.0, 6656.0 / 12825.0, 28561.0 / 56430.0, -9.0 / 50.0, 2.0 / 55.0],
    b_err: &[25.0 / 216.0, 0.0, 1408.0 / 2565.0, 2197.0 / 4104.0, -1.0 / 5.0, 0.0],
    order: 5,
    err_order: 4,
};

impl EmbeddedPair {
    /// Butcher matrix, propagated weights and embedded weights as plain
    /// Runge–Kutta coefficients.
    pub fn tableaus(&self) -> Result<(TsrkCoefficients, TsrkCoefficients)> {
        let s = self.b.len();
        let mut a = DenseMatrix::zeros(s, s);
        for (i, row) in self.a.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                a[(i, j)] = *v;
            }
        }
        Ok((
            TsrkCoefficients::runge_kutta(a.clone(), self.b.to_vec())?,
            TsrkCoefficients::runge_kutta(a, self.b_err.to_vec())?,
        ))
    }

    /// Integrate `u' = f(u)` to `t_final` with mixed absolute/relative tolerance `tol`.
    /// Returns the final state and the number of accepted steps.
    pub fn integrate(
        &self,
        f: impl Fn(&[f64], &mut [f64]),
        u0: &[f64],
        t_final: f64,
        tol: f64,
    ) -> Result<(Vec<f64>, usize)> {
        if !(t_final > 0.0) || !(tol > 0.0) {
            return Err(Error::InvalidArgument("t_final and tol must be positive".into()));
        }
        let n = u0.len();
        let s = self.b.len();
        let mut u = u0.to_vec();
        let mut t = 0.0;
        let mut h = 1e-3 * t_final;
        let mut k = vec![vec![0.0; n]; s];
        let mut stage = vec![0.0; n];
        let mut next = vec![0.0; n];
        let mut accepted = 0;
        let expo = 1.0 / (self.err_order as f64 + 1.0);
        for _ in 0..10_000_000 {
            if t >= t_final {
                return Ok((u, accepted));
            }
            let last = t + h >= t_final;
            let hh = if last { t_final - t } else { h };
            for i in 0..s {
                stage.copy_from_slice(&u);
                for (j, aij) in self.a[i].iter().enumerate() {
                    if *aij != 0.0 {
                        stage.iter_mut().zip(&k[j]).for_each(|(y, kj)| *y += hh * aij * kj);
                    }
                }
                f(&stage, &mut k[i]);
            }
            let mut err: f64 = 0.0;
            for c in 0..n {
                let mut du = 0.0;
                let mut de = 0.0;
                for i in 0..s {
                    du += self.b[i] * k[i][c];
                    de += (self.b[i] - self.b_err[i]) * k[i][c];
                }
                next[c] = u[c] + hh * du;
                let scale = tol + tol * u[c].abs().max(next[c].abs());
                err = err.max((hh * de).abs() / scale);
            }
            if !err.is_finite() {
                return Err(Error::NonFinite { index: 0 });
            }
            if err <= 1.0 {
                u.copy_from_slice(&next);
                t = if last { t_final } else { t + hh };
                accepted += 1;
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * math::pow(err, -expo)).clamp(0.2, 5.0) };
            h = hh * factor;
            if h < 1e-14 * t_final {
                return Err(Error::Internal("adaptive step size underflow".into()));
            }
        }
        Err(Error::Internal("adaptive integrator exceeded its step budget".into()))
    }
}

/// Van der Pol state at `t_final` from an adaptive pair.
pub fn van_der_pol_reference(pair: &EmbeddedPair, t_final: f64, tol: f64) -> Result<Vec<f64>> {
    Ok(pair.integrate(vdp_rhs, &van_der_pol().u0, t_final, tol)?.0)
}

/// Least-squares slope of `log10(y)` against `log10(x)`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len());
    if n < 2 {
        return f64::NAN;
    }
    let lx: Vec<f64> = x[..n].iter().map(|v| math::log10(*v)).collect();
    let ly: Vec<f64> = y[..n].iter().map(|v| math::log10(*v)).collect();
    let mx = lx.iter().sum::<f64>() / n as f64;
    let my = ly.iter().sum::<f64>() / n as f64;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Advance `problem` to `t_final` with step `dt`, starting two-step methods
/// with the bootstrap step.
pub fn run_to<N: Nonlinear>(scheme: &IfScheme, problem: &IfProblem<N>, dt: f64, t_final: f64) -> Result<Vec<f64>> {
    let n = math::round(t_final / dt);
    if n < 1.0 || (n * dt - t_final).abs() > 1e-9 * t_final {
        return Err(Error::InvalidArgument(format!("{t_final} is not a multiple of dt = {dt}")));
    }
    let n = n as usize;
    let mut it = Integrator::new(scheme, problem, dt)?;
    let remaining = if scheme.steps() == 2 { n - 1 } else { n };
    for _ in 0..remaining {
        it.step()?;
    }
    Ok(it.current().to_vec())
}

/// Van der Pol errors at `T = 2` for each `dt`, against the DOPRI5 reference.
pub fn convergence_study(name: &str, method: &TsrkCoefficients, dts: &[f64]) -> Result<ConvergenceRecord> {
    check_increasing("dts", dts)?;
    let reference = van_der_pol_reference(&DOPRI5, VDP_T_FINAL, REFERENCE_TOL)?;
    let problem = van_der_pol();
    let scheme = IfScheme::with_certified(method, true)?;
    let mut rec = ConvergenceRecord {
        method: name.to_string(),
        dts: Vec::new(),
        errors: Vec::new(),
        slope: f64::NAN,
        dropped: Vec::new(),
    };
    for &dt in dts {
        match run_to(&scheme, &problem, dt, VDP_T_FINAL) {
            Ok(u) => {
                let err = u.iter().zip(&reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                if err.is_finite() && err > 0.0 {
                    rec.dts.push(dt);
                    rec.errors.push(err);
                } else {
                    rec.dropped.push(dt);
                }
            }
            Err(Error::NonFinite { .. }) => rec.dropped.push(dt),
            Err(e) => return Err(e),
        }
    }
    rec.slope = loglog_slope(&rec.dts, &rec.errors);
    Ok(rec)
}

fn csv(header: (&str, &str), x: &[f64], y: &[f64]) -> String {
    let mut out = format!("{},{}\n", header.0, header.1);
    for (a, b) in x.iter().zip(y) {
        let _ = writeln!(out, "{a:.16e},{b:.16e}");
    }
    out
}

/// Parse two-column CSV written by the `to_csv` methods.
pub fn parse_csv(text: &str) -> Result<(String, String, Vec<f64>, Vec<f64>)> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::InvalidArgument("empty CSV".into()))?;
    let (h0, h1) = header
        .split_once(',')
        .ok_or_else(|| Error::InvalidArgument(format!("bad CSV header {header:?}")))?;
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for (i, line) in lines.enumerate() {
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("CSV row {}: bad number {s:?}", i + 1)))
        };
        let (a, b) = line
            .split_once(',')
            .ok_or_else(|| Error::InvalidArgument(format!("CSV row {}: expected two columns", i + 1)))?;
        x.push(parse(a)?);
        y.push(parse(b)?);
    }
    Ok((h0.trim().to_string(), h1.trim().to_string(), x, y))
}
