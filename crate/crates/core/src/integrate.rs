//! Integrating-factor time stepping for `u' = L u + N(u)`.
//!
//! Every stage of a method is a combination of earlier states `w_j` (the
//! history `u^{n-1}`, the current `u^n`, and previous stages) and their
//! nonlinear terms. With abscissas `c`, the term coming from `w_j` into stage
//! `i` is propagated by `e^{(c_i − c_j) Δt L}`, which makes the linear part
//! exact. Non-decreasing abscissas keep every exponent nonnegative.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::certify;
use crate::densemat::{expm, DenseMatrix};
use crate::math;
use crate::methods;
use crate::semidiscrete::{total_variation, OneSidedDifference};
use crate::tableau::{spijker_abscissas, to_canonical, to_spijker, CanonicalShuOsherForm, TsrkCoefficients};
use crate::{Error, Result};

/// Exponents within this of zero are treated as zero.
const EXPONENT_SNAP: f64 = 1e-12;
/// Relative size below which shift-kernel weights are dropped.
const KERNEL_CUTOFF: f64 = 1e-20;
/// Substeps of the starting method used to produce `u^1`.
pub const BOOTSTRAP_SUBSTEPS: usize = 10;

/// The nonlinear part `N`.
pub trait Nonlinear {
    /// Write `N(u)` into `out`.
    fn eval(&self, u: &[f64], out: &mut [f64]);

    /// True when `N ≡ 0`.
    fn is_zero(&self) -> bool {
        false
    }
}

impl<F: Fn(&[f64], &mut [f64])> Nonlinear for F {
    fn eval(&self, u: &[f64], out: &mut [f64]) {
        self(u, out)
    }
}

/// `N ≡ 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroNonlinear;

impl Nonlinear for ZeroNonlinear {
    fn eval(&self, _: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }

    fn is_zero(&self) -> bool {
        true
    }
}

impl Nonlinear for OneSidedDifference {
    fn eval(&self, u: &[f64], out: &mut [f64]) {
        self.apply(u, out)
    }

    fn is_zero(&self) -> bool {
        self.speed == 0.0
    }
}

/// The linear part `L`, with a structured case for periodic shift differences.
#[derive(Debug, Clone, PartialEq)]
pub enum LinearPart {
    /// `L = 0` on a state of the given size.
    Zero(usize),
    Dense(DenseMatrix),
    /// `L = κ (S^σ − I)` on `m` periodic points, `(S u)_j = u_{j−1}`, `σ = ±1`.
    PeriodicShift { m: usize, kappa: f64, shift: isize },
}

impl LinearPart {
    pub fn dense(l: DenseMatrix) -> Result<Self> {
        if !l.is_square() {
            return Err(Error::NotSquare {
                op: "linear part",
                rows: l.rows(),
                cols: l.cols(),
            });
        }
        Ok(Self::Dense(l))
    }

    pub fn from_difference(op: &OneSidedDifference, m: usize) -> Self {
        let (kappa, shift) = op.shift_form();
        if kappa == 0.0 {
            Self::Zero(m)
        } else {
            Self::PeriodicShift { m, kappa, shift }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Zero(n) => *n,
            Self::Dense(l) => l.rows(),
            Self::PeriodicShift { m, .. } => *m,
        }
    }

    /// Dense matrix of `L`.
    pub fn to_dense(&self) -> DenseMatrix {
        match self {
            Self::Zero(n) => DenseMatrix::zeros(*n, *n),
            Self::Dense(l) => l.clone(),
            &Self::PeriodicShift { m, kappa, shift } => {
                let mut l = DenseMatrix::zeros(m, m);
                for j in 0..m {
                    l[(j, j)] -= kappa;
                    l[(j, wrap(j as isize - shift, m))] += kappa;
                }
                l
            }
        }
    }

    /// `e^{τ L}`.
    pub fn propagator(&self, tau: f64) -> Result<Propagator> {
        if tau == 0.0 {
            return Ok(Propagator::Identity);
        }
        match self {
            Self::Zero(_) => Ok(Propagator::Identity),
            Self::Dense(l) => Ok(Propagator::Dense(expm(&l.scaled(tau))?)),
            &Self::PeriodicShift { m, kappa, shift } => Ok(shift_kernel(m, tau * kappa, shift)),
        }
    }
}

fn wrap(j: isize, m: usize) -> usize {
    j.rem_euclid(m as isize) as usize
}

/// `e^{μ(S^σ − I)} = e^{−μ} Σ_k μ^k/k! S^{σk}`, folded onto `m` offsets.
fn shift_kernel(m: usize, mu: f64, shift: isize) -> Propagator {
    let a = mu.abs();
    let mode = math::floor(a) as usize;
    let log_mode = -mu + if a > 0.0 { mode as f64 * math::ln(a) } else { 0.0 } - math::lgamma(mode as f64 + 1.0);
    let sign = |k: usize| if mu < 0.0 && k % 2 == 1 { -1.0 } else { 1.0 };
    let w_mode = math::exp(log_mode);
    let mut weights = vec![(mode, sign(mode) * w_mode)];
    let mut w = w_mode;
    let mut k = mode;
    while k > 0 {
        w *= k as f64 / a;
        k -= 1;
        if w < KERNEL_CUTOFF * w_mode {
            break;
        }
        weights.push((k, sign(k) * w));
    }
    let mut w = w_mode;
    let mut k = mode;
    loop {
        k += 1;
        w *= a / k as f64;
        if w < KERNEL_CUTOFF * w_mode {
            break;
        }
        weights.push((k, sign(k) * w));
    }
    // The exact weights sum to one.
    let total: f64 = weights.iter().map(|p| p.1).sum();
    let mut folded = vec![0.0; m];
    for (k, w) in weights {
        folded[wrap(shift * k as isize, m)] += w / total;
    }
    let taps = folded
        .into_iter()
        .enumerate()
        .filter(|p| p.1 != 0.0)
        .collect();
    Propagator::Kernel { taps }
}

/// A materialized `e^{τ L}`.
#[derive(Debug, Clone, PartialEq)]
pub enum Propagator {
    Identity,
    Dense(DenseMatrix),
    /// `(E u)_j = Σ w · u_{j − d}` over `(d, w)` taps, periodic.
    Kernel { taps: Vec<(usize, f64)> },
}

impl Propagator {
    /// `out += E u`.
    pub fn apply_add(&self, u: &[f64], out: &mut [f64]) {
        match self {
            Self::Identity => out.iter_mut().zip(u).for_each(|(o, v)| *o += v),
            Self::Dense(e) => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o += e.row(i).iter().zip(u).map(|(a, b)| a * b).sum::<f64>();
                }
            }
            Self::Kernel { taps } => {
                let m = u.len();
                for &(d, w) in taps {
                    // out[j] += w u[j - d]
                    let (head, tail) = u.split_at(m - d);
                    for (o, v) in out[..d].iter_mut().zip(tail) {
                        *o += w * v;
                    }
                    for (o, v) in out[d..].iter_mut().zip(head) {
                        *o += w * v;
                    }
                }
            }
        }
    }

    /// `E u`.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        self.apply_add(u, &mut out);
        out
    }

    /// Dense matrix of the propagator on `n` points.
    pub fn to_dense(&self, n: usize) -> DenseMatrix {
        let mut e = DenseMatrix::zeros(n, n);
        let mut unit = vec![0.0; n];
        for j in 0..n {
            unit.fill(0.0);
            unit[j] = 1.0;
            let col = self.apply(&unit);
            for i in 0..n {
                e[(i, j)] = col[i];
            }
        }
        e
    }
}

/// Propagators `e^{e Δt L}` for a set of exponents `e`, built once per `Δt`.
#[derive(Debug, Clone)]
pub struct ExpCache {
    dt: f64,
    entries: Vec<(f64, Propagator)>,
}

impl ExpCache {
    pub fn new(linear: &LinearPart, dt: f64, exponents: &[f64]) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        let mut entries: Vec<(f64, Propagator)> = Vec::new();
        for &e in exponents {
            if entries.iter().any(|p| p.0 == e) {
                continue;
            }
            entries.push((e, linear.propagator(e * dt)?));
        }
        Ok(Self { dt, entries })
    }

    /// Exponents covering the differences `c_i − c_j` of non-decreasing `c`,
    /// plus `c_i + 1` for the history slot.
    pub fn for_abscissas(linear: &LinearPart, dt: f64, c: &[f64]) -> Result<Self> {
        let mut ex = Vec::new();
        for (i, ci) in c.iter().enumerate() {
            ex.push(snap(ci + 1.0));
            for cj in &c[..i] {
                ex.push(snap(ci - cj));
            }
        }
        Self::new(linear, dt, &ex)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn exponents(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|p| p.0)
    }

    pub fn get(&self, exponent: f64) -> Option<&Propagator> {
        self.entries.iter().find(|p| p.0 == exponent).map(|p| &p.1)
    }
}

/// Reuse a listed exponent within the snap tolerance, or list `e`.
fn intern(list: &mut Vec<f64>, e: f64) -> f64 {
    match list.iter().find(|x| (**x - e).abs() <= EXPONENT_SNAP) {
        Some(&x) => x,
        None => {
            list.push(e);
            e
        }
    }
}

fn snap(e: f64) -> f64 {
    if e.abs() <= EXPONENT_SNAP {
        0.0
    } else {
        e
    }
}

/// `u' = L u + N(u)` with initial data.
#[derive(Debug, Clone)]
pub struct IfProblem<N> {
    pub linear: LinearPart,
    pub nonlinear: N,
    pub u0: Vec<f64>,
    /// Exact state one step after `u0`, used instead of a starting procedure.
    pub u1: Option<Vec<f64>>,
}

impl<N: Nonlinear> IfProblem<N> {
    pub fn new(linear: LinearPart, nonlinear: N, u0: Vec<f64>) -> Result<Self> {
        if linear.dim() != u0.len() {
            return Err(Error::DimensionMismatch {
                op: "problem",
                expected: linear.dim(),
                found: u0.len(),
            });
        }
        Ok(Self {
            linear,
            nonlinear,
            u0,
            u1: None,
        })
    }

    pub fn with_exact_history(mut self, u1: Vec<f64>) -> Result<Self> {
        if u1.len() != self.u0.len() {
            return Err(Error::DimensionMismatch {
                op: "history",
                expected: self.u0.len(),
                found: u1.len(),
            });
        }
        self.u1 = Some(u1);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.u0.len()
    }
}

/// Total variation after every stage of one step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepTrace {
    /// `TV(u^n)`, then each later stage, ending with `TV(u^{n+1})`.
    pub stage_tv: Vec<f64>,
    /// Largest increase between consecutive entries of `stage_tv`, at least 0.
    pub max_rise: f64,
}

impl StepTrace {
    fn push(&mut self, tv: f64) {
        if let Some(&last) = self.stage_tv.last() {
            self.max_rise = self.max_rise.max(tv - last);
        }
        self.stage_tv.push(tv);
    }
}

#[derive(Debug, Clone)]
struct Term {
    src: usize,
    state: f64,
    /// Multiplies `Δt N(w_src)`.
    deriv: f64,
}

#[derive(Debug, Clone)]
struct Group {
    exponent: f64,
    terms: Vec<Term>,
}

/// A method compiled into per-stage propagation groups.
#[derive(Debug, Clone)]
pub struct IfScheme {
    /// Number of `x` slots: 1 for one-step, 2 for two-step use.
    steps: usize,
    /// Groups for rows `steps..`; row `steps - 1` is `u^n`.
    rows: Vec<Vec<Group>>,
    /// Row-aligned time levels, history at −1, `u^n` at 0, `u^{n+1}` at 1.
    c: Vec<f64>,
    /// Rows whose nonlinear term is used.
    needs_n: Vec<bool>,
    exponents: Vec<f64>,
}

impl IfScheme {
    /// Compile from the canonical form at `r > 0`, or from the Spijker form at `r = 0`.
    pub fn new(m: &TsrkCoefficients, r: f64, allow_nonmonotone: bool) -> Result<Self> {
        let sp = to_spijker(m);
        let (state, deriv) = if r > 0.0 {
            let f = to_canonical(m, r)?;
            let deriv = f.p_mat.scaled(1.0 / r);
            let mut state = f.p_mat.clone();
            for i in 0..state.rows() {
                for c in 0..f.r_mat.cols() {
                    state[(i, c)] += f.r_mat[(i, c)];
                }
            }
            (state, deriv)
        } else {
            let mut state = DenseMatrix::zeros(sp.t.rows(), sp.t.cols());
            for i in 0..state.rows() {
                for c in 0..sp.s.cols() {
                    state[(i, c)] = sp.s[(i, c)];
                }
            }
            (state, sp.t.clone())
        };
        let c = spijker_abscissas(m);
        Self::compile(m.steps(), &state, &deriv, c, m.is_one_step(), allow_nonmonotone)
    }

    /// Compile at `r` equal to the certified SSP coefficient (`r = 0` when it vanishes).
    pub fn with_certified(m: &TsrkCoefficients, allow_nonmonotone: bool) -> Result<Self> {
        let c = certify::certify(m)?;
        Self::new(m, c, allow_nonmonotone)
    }

    /// Compile directly from a canonical Shu–Osher form with `r > 0`.
    pub fn from_canonical(f: &CanonicalShuOsherForm, allow_nonmonotone: bool) -> Result<Self> {
        if !(f.r > 0.0) {
            return Err(Error::InvalidArgument("canonical form needs r > 0".into()));
        }
        let deriv = f.p_mat.scaled(1.0 / f.r);
        let mut state = f.p_mat.clone();
        let k = f.r_mat.cols();
        for i in 0..state.rows() {
            for col in 0..k {
                state[(i, col)] += f.r_mat[(i, col)];
            }
        }
        let one_step = k == 1
            || (0..state.rows()).all(|i| (0..k - 1).all(|h| i < k - 1 || (state[(i, h)] == 0.0 && deriv[(i, h)] == 0.0)));
        Self::compile(k, &state, &deriv, f.c.clone(), one_step, allow_nonmonotone)
    }

    fn compile(
        k: usize,
        state: &DenseMatrix,
        deriv: &DenseMatrix,
        mut c: Vec<f64>,
        one_step: bool,
        allow_nonmonotone: bool,
    ) -> Result<Self> {
        let n = state.rows();
        // Drop the history slots of one-step methods.
        let skip = if one_step { k - 1 } else { 0 };
        let steps = k - skip;
        for (h, ch) in c.iter_mut().enumerate().take(k - 1) {
            *ch = -((k - 1 - h) as f64);
        }
        c[k - 1] = 0.0;
        c[n - 1] = 1.0;
        let c: Vec<f64> = c[skip..].to_vec();
        let mut rows = Vec::new();
        let mut needs_n = vec![false; n - skip];
        let mut exponents = Vec::new();
        for i in k..n {
            let ri = i - skip;
            let mut groups: Vec<Group> = Vec::new();
            for src in skip..i {
                let (a, b) = (state[(i, src)], deriv[(i, src)]);
                if a == 0.0 && b == 0.0 {
                    continue;
                }
                let rs = src - skip;
                let e = intern(&mut exponents, snap(c[ri] - c[rs]));
                if e < 0.0 && !allow_nonmonotone {
                    return Err(Error::NegativeExponent { exponent: e });
                }
                if b != 0.0 {
                    needs_n[rs] = true;
                }
                let term = Term {
                    src: rs,
                    state: a,
                    deriv: b,
                };
                match groups.iter_mut().find(|g| g.exponent == e) {
                    Some(g) => g.terms.push(term),
                    None => {
                        groups.push(Group {
                            exponent: e,
                            terms: vec![term],
                        })
                    }
                }
            }
            rows.push(groups);
        }
        // N(u^n) becomes N(u^{n-1}) on the next step.
        if steps == 2 && needs_n[0] {
            needs_n[1] = true;
        }
        Ok(Self {
            steps,
            rows,
            c,
            needs_n,
            exponents,
        })
    }

    /// 2 when the scheme reads `u^{n-1}`, 1 otherwise.
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Number of stages `s`, including `y_1 = u^n`.
    pub fn stages(&self) -> usize {
        self.rows.len()
    }

    /// Row-aligned time levels.
    pub fn abscissas(&self) -> &[f64] {
        &self.c
    }

    pub fn exponents(&self) -> &[f64] {
        &self.exponents
    }

    pub fn exp_cache(&self, linear: &LinearPart, dt: f64) -> Result<ExpCache> {
        ExpCache::new(linear, dt, &self.exponents)
    }
}

/// Stateful march with a cached `N(u^{n-1})`.
#[derive(Debug)]
pub struct Integrator<'a, N> {
    scheme: &'a IfScheme,
    problem: &'a IfProblem<N>,
    cache: ExpCache,
    dt: f64,
    states: Vec<Vec<f64>>,
    nvals: Vec<Option<Vec<f64>>>,
    n_evals: usize,
    steps_taken: usize,
    bootstrap_rise: f64,
}

impl<'a, N: Nonlinear> Integrator<'a, N> {
    /// Set up the march; two-step schemes produce `u^1` with [`bootstrap`].
    pub fn new(scheme: &'a IfScheme, problem: &'a IfProblem<N>, dt: f64) -> Result<Self> {
        let cache = scheme.exp_cache(&problem.linear, dt)?;
        let rows = scheme.steps + scheme.rows.len();
        let mut states = vec![Vec::new(); rows];
        let mut bootstrap_rise = 0.0;
        if scheme.steps == 2 {
            let (u1, rise) = bootstrap(problem, dt)?;
            states[0] = problem.u0.clone();
            states[1] = u1;
            bootstrap_rise = rise;
        } else {
            states[0] = problem.u0.clone();
        }
        Ok(Self {
            scheme,
            problem,
            cache,
            dt,
            states,
            nvals: vec![None; rows],
            n_evals: 0,
            steps_taken: 0,
            bootstrap_rise,
        })
    }

    /// Start from explicit `u^{n-1}`, `u^n` without bootstrapping.
    pub fn from_history(
        scheme: &'a IfScheme,
        problem: &'a IfProblem<N>,
        dt: f64,
        u_prev: Vec<f64>,
        u_curr: Vec<f64>,
    ) -> Result<Self> {
        let cache = scheme.exp_cache(&problem.linear, dt)?;
        let rows = scheme.steps + scheme.rows.len();
        let mut states = vec![Vec::new(); rows];
        if scheme.steps == 2 {
            states[0] = u_prev;
            states[1] = u_curr;
        } else {
            states[0] = u_curr;
        }
        Ok(Self {
            scheme,
            problem,
            cache,
            dt,
            states,
            nvals: vec![None; rows],
            n_evals: 0,
            steps_taken: 0,
            bootstrap_rise: 0.0,
        })
    }

    /// Current solution `u^n`.
    pub fn current(&self) -> &[f64] {
        &self.states[self.scheme.steps - 1]
    }

    /// Number of `N` evaluations made by [`Integrator::step`] so far.
    pub fn n_evals(&self) -> usize {
        self.n_evals
    }

    pub fn steps_taken(&self) -> usize {
        self.steps_taken
    }

    /// Largest stage TV rise over the starting substeps.
    pub fn bootstrap_rise(&self) -> f64 {
        self.bootstrap_rise
    }

    fn ensure_n(&mut self, row: usize) {
        if self.nvals[row].is_none() {
            let mut out = vec![0.0; self.problem.dim()];
            self.problem.nonlinear.eval(&self.states[row], &mut out);
            self.n_evals += 1;
            self.nvals[row] = Some(out);
        }
    }

    /// Advance one step and return the stage TV trace.
    pub fn step(&mut self) -> Result<StepTrace> {
        let k = self.scheme.steps;
        let dim = self.problem.dim();
        let mut trace = StepTrace::default();
        trace.push(total_variation(&self.states[k - 1]));
        let mut acc = vec![0.0; dim];
        for (idx, groups) in self.scheme.rows.iter().enumerate() {
            let row = k + idx;
            for src in 0..row {
                if self.scheme.needs_n[src] {
                    self.ensure_n(src);
                }
            }
            let mut y = vec![0.0; dim];
            for g in groups {
                acc.fill(0.0);
                for t in &g.terms {
                    let x = &self.states[t.src];
                    if t.state != 0.0 {
                        acc.iter_mut().zip(x).for_each(|(a, v)| *a += t.state * v);
                    }
                    if t.deriv != 0.0 {
                        let w = t.deriv * self.dt;
                        let nv = self.nvals[t.src].as_ref().expect("evaluated above");
                        acc.iter_mut().zip(nv).for_each(|(a, v)| *a += w * v);
                    }
                }
                let e = self
                    .cache
                    .get(g.exponent)
                    .ok_or_else(|| Error::Internal(format!("missing exponent {}", g.exponent)))?;
                e.apply_add(&acc, &mut y);
            }
            if let Some(i) = y.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { index: i });
            }
            trace.push(total_variation(&y));
            self.states[row] = y;
            self.nvals[row] = None;
        }
        // Shift: u^n → u^{n-1}, u^{n+1} → u^n.
        let last = self.states.len() - 1;
        let next = core::mem::take(&mut self.states[last]);
        if k == 2 {
            self.states.swap(0, 1);
            self.nvals.swap(0, 1);
        }
        self.states[k - 1] = next;
        for v in self.nvals.iter_mut().skip(k - 1) {
            *v = None;
        }
        if k == 2 && !self.scheme.needs_n[0] {
            self.nvals[0] = None;
        }
        self.steps_taken += 1;
        Ok(trace)
    }
}

/// Produce `(u^1, max stage TV rise)`: the exact history if the problem has
/// one, `e^{Δt L} u^0` when `N ≡ 0`, otherwise ten substeps of the
/// three-stage third-order method with abscissas `(0, 2/3, 2/3)`.
pub fn bootstrap<N: Nonlinear>(problem: &IfProblem<N>, dt: f64) -> Result<(Vec<f64>, f64)> {
    if let Some(u1) = &problem.u1 {
        return Ok((u1.clone(), 0.0));
    }
    if problem.nonlinear.is_zero() {
        let e = problem.linear.propagator(dt)?;
        return Ok((e.apply(&problem.u0), 0.0));
    }
    let starter = IfScheme::new(&methods::essprk_plus33(), 0.75, false)?;
    let h = dt / BOOTSTRAP_SUBSTEPS as f64;
    let mut it = Integrator::from_history(&starter, problem, h, Vec::new(), problem.u0.clone())?;
    let mut rise: f64 = 0.0;
    for _ in 0..BOOTSTRAP_SUBSTEPS {
        rise = rise.max(it.step()?.max_rise);
    }
    Ok((it.current().to_vec(), rise))
}

/// One step from `(u^{n-1}, u^n)` with a freshly compiled scheme.
pub fn if_tsrk_step<N: Nonlinear>(
    form: &CanonicalShuOsherForm,
    problem: &IfProblem<N>,
    dt: f64,
    u_prev: &[f64],
    u_curr: &[f64],
    allow_nonmonotone: bool,
) -> Result<(Vec<f64>, StepTrace)> {
    let scheme = IfScheme::from_canonical(form, allow_nonmonotone)?;
    let mut it = Integrator::from_history(&scheme, problem, dt, u_prev.to_vec(), u_curr.to_vec())?;
    let trace = it.step()?;
    Ok((it.current().to_vec(), trace))
}

/// One step of a one-step method from `u^n`.
pub fn if_rk_step<N: Nonlinear>(
    form: &CanonicalShuOsherForm,
    problem: &IfProblem<N>,
    dt: f64,
    u_curr: &[f64],
    allow_nonmonotone: bool,
) -> Result<(Vec<f64>, StepTrace)> {
    let scheme = IfScheme::from_canonical(form, allow_nonmonotone)?;
    if scheme.steps() != 1 {
        return Err(Error::InvalidMethod("method uses u^{n-1}; use if_tsrk_step".into()));
    }
    let mut it = Integrator::from_history(&scheme, problem, dt, Vec::new(), u_curr.to_vec())?;
    let trace = it.step()?;
    Ok((it.current().to_vec(), trace))
}

/// Integrating-factor linear multistep step
/// `u^{n+1} = Σ_l e^{(k−l+1)ΔtL} (α_l u^{n−k+l} + Δt β_l N(u^{n−k+l}))`
/// with `history = (u^{n−k+1}, …, u^n)`.
pub fn if_lmm_step<N: Nonlinear>(
    alphas: &[f64],
    betas: &[f64],
    problem: &IfProblem<N>,
    dt: f64,
    history: &[Vec<f64>],
) -> Result<(Vec<f64>, StepTrace)> {
    let k = history.len();
    if k == 0 || alphas.len() != k || betas.len() != k {
        return Err(Error::InvalidMethod(format!(
            "need {k} alphas and betas, got {} and {}",
            alphas.len(),
            betas.len()
        )));
    }
    let sum: f64 = alphas.iter().sum();
    if (sum - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidMethod(format!("alphas sum to {sum}, expected 1")));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let dim = problem.dim();
    let mut out = vec![0.0; dim];
    let mut nv = vec![0.0; dim];
    let mut acc = vec![0.0; dim];
    for (l, u) in history.iter().enumerate() {
        if alphas[l] == 0.0 && betas[l] == 0.0 {
            continue;
        }
        acc.iter_mut().zip(u).for_each(|(a, v)| *a = alphas[l] * v);
        if betas[l] != 0.0 {
            problem.nonlinear.eval(u, &mut nv);
            acc.iter_mut().zip(&nv).for_each(|(a, v)| *a += dt * betas[l] * v);
        }
        let e = problem.linear.propagator((k - l) as f64 * dt)?;
        e.apply_add(&acc, &mut out);
    }
    let mut trace = StepTrace::default();
    trace.push(total_variation(&history[k - 1]));
    trace.push(total_variation(&out));
    Ok((out, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semidiscrete::{initial_condition, InitialCondition, PeriodicGrid};
    use crate::testutil::Prng;

    fn upwind_linear(a: f64, m: usize) -> (LinearPart, PeriodicGrid) {
        let g = PeriodicGrid::new(m).unwrap();
        (LinearPart::from_difference(&OneSidedDifference::upwind(a, g), m), g)
    }

    #[test]
    fn shift_kernel_matches_dense_expm() {
        for (a, tau, down) in [(1.0, 0.03, false), (3.0, 0.2, false), (2.0, 0.05, true)] {
            let g = PeriodicGrid::new(16).unwrap();
            let op = if down {
                OneSidedDifference::downwind(a, g)
            } else {
                OneSidedDifference::upwind(a, g)
            };
            let l = LinearPart::from_difference(&op, 16);
            let dense = expm(&l.to_dense().scaled(tau)).unwrap();
            let kern = l.propagator(tau).unwrap().to_dense(16);
            let d = dense.sub(&kern).unwrap().max_abs();
            assert!(d < 1e-13, "a={a} tau={tau}: {d}");
        }
    }

    #[test]
    fn shift_kernel_negative_exponent_matches_dense() {
        let (l, _) = upwind_linear(1.0, 12);
        let dense = expm(&l.to_dense().scaled(-0.02)).unwrap();
        let kern = l.propagator(-0.02).unwrap().to_dense(12);
        assert!(dense.sub(&kern).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn exponential_of_upwind_is_tv_bounded() {
        let (l, g) = upwind_linear(1.0, 200);
        let u = initial_condition(InitialCondition::AdvectionStep, g);
        let tv0 = total_variation(u.values());
        let mut rng = Prng::new(12);
        for _ in 0..50 {
            let tau = rng.range(0.0, 3.0);
            let v = l.propagator(tau).unwrap().apply(u.values());
            assert!(total_variation(&v) <= tv0 + 1e-12);
        }
    }

    #[test]
    fn cache_holds_the_expected_exponents() {
        let scheme = IfScheme::new(&methods::essprk_plus33(), 0.75, false).unwrap();
        let mut ex = scheme.exponents().to_vec();
        ex.sort_by(f64::total_cmp);
        let want = [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0];
        assert_eq!(ex.len(), 4);
        for (x, y) in ex.iter().zip(want) {
            assert!((x - y).abs() < 1e-15);
        }
        let l = LinearPart::dense(DenseMatrix::from_rows(&[[0.0, 1.0], [-1.0, 0.0]]).unwrap()).unwrap();
        let cache = scheme.exp_cache(&l, 0.3).unwrap();
        assert_eq!(cache.get(0.0), Some(&Propagator::Identity));
        let e = |x: f64| match cache.get(*ex.iter().find(|v| (**v - x).abs() < 1e-15).unwrap()).unwrap() {
            Propagator::Dense(m) => m.clone(),
            other => other.to_dense(2),
        };
        let prod = crate::densemat::mat_mul(&e(2.0 / 3.0), &e(1.0 / 3.0)).unwrap();
        assert!(prod.sub(&e(1.0)).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn abscissa_cache_includes_history_exponents() {
        let l = LinearPart::Zero(1);
        let cache = ExpCache::for_abscissas(&l, 0.1, &[0.0, 0.5, 1.0]).unwrap();
        let ex: Vec<f64> = cache.exponents().collect();
        assert!(ex.contains(&1.5) && ex.contains(&2.0) && ex.contains(&0.5));
        assert!(ExpCache::new(&l, 0.0, &[0.0]).is_err());
    }

    #[test]
    fn decreasing_abscissas_need_override() {
        let err = IfScheme::new(&methods::essprk33(), 1.0, false).unwrap_err();
        assert!(matches!(err, Error::NegativeExponent { .. }));
        assert!(IfScheme::new(&methods::essprk33(), 1.0, true).is_ok());
    }

    #[test]
    fn one_step_methods_skip_history() {
        for (_, m) in methods::builtin() {
            let s = IfScheme::new(&m, 0.5, true).unwrap();
            assert_eq!(s.steps(), 1);
            assert_eq!(s.stages(), m.stages());
        }
    }

    #[test]
    fn scalar_decay_is_exact() {
        let l = LinearPart::dense(DenseMatrix::from_rows(&[[-2.0]]).unwrap()).unwrap();
        let prob = IfProblem::new(l, ZeroNonlinear, vec![1.5]).unwrap();
        let dt = 0.1;
        for (name, m) in methods::builtin() {
            let scheme = IfScheme::new(&m, 0.5, true).unwrap();
            let mut it = Integrator::new(&scheme, &prob, dt).unwrap();
            it.step().unwrap();
            let want = 1.5 * libm::exp(-2.0 * dt);
            assert!((it.current()[0] - want).abs() < 1e-13, "{name}");
        }
    }

    fn two_step_sample() -> TsrkCoefficients {
        let mut d = DenseMatrix::zeros(2, 2);
        d[(0, 1)] = 1.0;
        d[(1, 0)] = 0.2;
        d[(1, 1)] = 0.8;
        let mut a_hat = DenseMatrix::zeros(2, 1);
        a_hat[(1, 0)] = 0.1;
        let mut a = DenseMatrix::zeros(2, 2);
        a[(1, 0)] = 0.6;
        TsrkCoefficients::new(d, a_hat, a, vec![0.1, 0.9], vec![0.05], vec![0.5, 0.55]).unwrap()
    }

    #[test]
    fn two_step_linear_problems_are_exact() {
        let l = LinearPart::dense(DenseMatrix::from_rows(&[[0.0, 1.0], [-1.0, -0.3]]).unwrap()).unwrap();
        let u0 = vec![2.0, 0.0];
        let dt = 0.07;
        let u1 = l.propagator(dt).unwrap().apply(&u0);
        let prob = IfProblem::new(l.clone(), ZeroNonlinear, u0.clone())
            .unwrap()
            .with_exact_history(u1)
            .unwrap();
        let m = two_step_sample();
        for r in [0.0, 0.3] {
            let scheme = IfScheme::new(&m, r, true).unwrap();
            let mut it = Integrator::new(&scheme, &prob, dt).unwrap();
            for _ in 0..20 {
                it.step().unwrap();
            }
            let want = l.propagator(21.0 * dt).unwrap().apply(&u0);
            for (x, y) in it.current().iter().zip(&want) {
                assert!((x - y).abs() < 1e-11, "r={r}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn monotone_base_method_telescopes_to_exact_propagation() {
        let (l, g) = upwind_linear(10.0, 400);
        let u = initial_condition(InitialCondition::BurgersStep, g).into_values();
        let prob = IfProblem::new(l.clone(), ZeroNonlinear, u.clone()).unwrap();
        let form = to_canonical(&methods::essprk_plus33(), 0.75).unwrap();
        let dt = 0.4 * g.dx();
        let (next, _) = if_rk_step(&form, &prob, dt, &u, false).unwrap();
        let want = l.propagator(dt).unwrap().apply(&u);
        let d = next.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(d < 1e-13, "{d}");
    }

    #[test]
    fn lmm_reductions() {
        let l = LinearPart::dense(DenseMatrix::from_rows(&[[0.0, 1.0], [-1.0, 0.0]]).unwrap()).unwrap();
        let n = |u: &[f64], out: &mut [f64]| {
            out[0] = 0.0;
            out[1] = (1.0 - u[0] * u[0]) * u[1];
        };
        let prob = IfProblem::new(l.clone(), n, vec![2.0, 0.0]).unwrap();
        let u = vec![0.3, -0.7];
        let dt = 0.05;
        let (got, _) = if_lmm_step(&[1.0], &[1.0], &prob, dt, &[u.clone()]).unwrap();
        let mut nu = [0.0; 2];
        n(&u, &mut nu);
        let inner = [u[0] + dt * nu[0], u[1] + dt * nu[1]];
        let want = l.propagator(dt).unwrap().apply(&inner);
        assert!((got[0] - want[0]).abs() < 1e-15 && (got[1] - want[1]).abs() < 1e-15);
        assert!(if_lmm_step(&[0.5, 0.4], &[0.0, 1.0], &prob, dt, &[u.clone(), u.clone()]).is_err());

        // N ≡ 0 with exact history.
        let prob0 = IfProblem::new(l.clone(), ZeroNonlinear, u.clone()).unwrap();
        let prev = l.propagator(-dt).unwrap().apply(&u);
        let (got, _) = if_lmm_step(&[0.25, 0.75], &[0.3, 0.2], &prob0, dt, &[prev, u.clone()]).unwrap();
        let want = l.propagator(dt).unwrap().apply(&u);
        assert!((got[0] - want[0]).abs() < 1e-12 && (got[1] - want[1]).abs() < 1e-12);
    }

    #[test]
    fn lmm_ssp_three_step_is_tvd() {
        // u^{n+1} = 3/4 u^n + 3/2 Δt F(u^n) + 1/4 u^{n-2}, C = 1/2.
        let m = 200;
        let (l, g) = upwind_linear(1.0, m);
        let nonlin = OneSidedDifference::upwind(1.0, g);
        let u0 = initial_condition(InitialCondition::AdvectionStep, g).into_values();
        let prob = IfProblem::new(l, nonlin, u0.clone()).unwrap();
        let dt = 0.5 * g.dx();
        let mut hist = vec![u0.clone(), u0.clone(), u0];
        for _ in 0..20 {
            let (next, tr) = if_lmm_step(&[0.25, 0.0, 0.75], &[0.0, 0.0, 1.5], &prob, dt, &hist).unwrap();
            assert!(tr.max_rise <= 1e-12, "{}", tr.max_rise);
            hist.remove(0);
            hist.push(next);
        }
    }

    #[test]
    fn nonlinear_evaluations_per_step() {
        use core::cell::Cell;
        let count = Cell::new(0usize);
        let n = |u: &[f64], out: &mut [f64]| {
            count.set(count.get() + 1);
            out[0] = -u[0] * u[0];
        };
        let l = LinearPart::dense(DenseMatrix::from_rows(&[[-1.0]]).unwrap()).unwrap();
        let prob = IfProblem::new(l, n, vec![1.0]).unwrap().with_exact_history(vec![0.9]).unwrap();
        let m = two_step_sample();
        let scheme = IfScheme::new(&m, 0.0, true).unwrap();
        assert_eq!(scheme.steps(), 2);
        let mut it = Integrator::new(&scheme, &prob, 0.01).unwrap();
        it.step().unwrap();
        assert_eq!(it.n_evals(), 3);
        for k in 2..6 {
            it.step().unwrap();
            assert_eq!(it.n_evals(), 2 * k + 1);
        }
        assert_eq!(count.get(), it.n_evals());
    }
}
