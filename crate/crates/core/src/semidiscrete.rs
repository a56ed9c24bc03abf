//! Periodic one-dimensional spatial discretizations on `[0, 1)`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::densemat::DenseMatrix;
use crate::{Error, Result};

/// Uniform periodic grid `x_j = j/m`, `j = 0..m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodicGrid {
    m: usize,
    dx: f64,
}

impl PeriodicGrid {
    pub const MIN_POINTS: usize = 8;

    pub fn new(m: usize) -> Result<Self> {
        if m < Self::MIN_POINTS {
            return Err(Error::InvalidArgument(format!(
                "grid needs at least {} points, got {m}",
                Self::MIN_POINTS
            )));
        }
        Ok(Self {
            m,
            dx: 1.0 / m as f64,
        })
    }

    pub fn points(&self) -> usize {
        self.m
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn x(&self, j: usize) -> f64 {
        j as f64 / self.m as f64
    }
}

/// Values on a [`PeriodicGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: PeriodicGrid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: PeriodicGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.points() {
            return Err(Error::DimensionMismatch {
                op: "grid function",
                expected: grid.points(),
                found: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> PeriodicGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Step profiles used by the TVD experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialCondition {
    /// 1 on `[1/4, 3/4]`, 0 elsewhere.
    AdvectionStep,
    /// 1 on `[0, 1/2]`, 0 elsewhere.
    BurgersStep,
}

/// Sample an initial condition at the grid points (closed intervals).
pub fn initial_condition(which: InitialCondition, grid: PeriodicGrid) -> GridFunction {
    let (lo, hi) = match which {
        InitialCondition::AdvectionStep => (0.25, 0.75),
        InitialCondition::BurgersStep => (0.0, 0.5),
    };
    let values = (0..grid.points())
        .map(|j| {
            let x = grid.x(j);
            if (lo..=hi).contains(&x) {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    GridFunction { grid, values }
}

/// `Σ_j |u_{j+1} − u_j|` with periodic closure.
pub fn total_variation(u: &[f64]) -> f64 {
    match u.len() {
        0 => 0.0,
        n => {
            let inner: f64 = u.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
            inner + (u[0] - u[n - 1]).abs()
        }
    }
}

/// First-order one-sided difference for `−a u_x` on a periodic grid.
///
/// With `downwind = false` the stencil is `−a (u_j − u_{j−1}) / Δx`, which is
/// TVD under forward Euler for `Δt ≤ Δx / a`. The downwind variant
/// `−a (u_{j+1} − u_j) / Δx` exists for sensitivity studies only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OneSidedDifference {
    pub speed: f64,
    pub dx: f64,
    pub downwind: bool,
}

impl OneSidedDifference {
    pub fn upwind(speed: f64, grid: PeriodicGrid) -> Self {
        Self {
            speed,
            dx: grid.dx(),
            downwind: false,
        }
    }

    pub fn downwind(speed: f64, grid: PeriodicGrid) -> Self {
        Self {
            speed,
            dx: grid.dx(),
            downwind: true,
        }
    }

    /// Write `L u` into `out`.
    pub fn apply(&self, u: &[f64], out: &mut [f64]) {
        let m = u.len();
        let k = self.speed / self.dx;
        for j in 0..m {
            let (left, right) = if self.downwind {
                (u[j], u[(j + 1) % m])
            } else {
                (u[(j + m - 1) % m], u[j])
            };
            out[j] = -k * (right - left);
        }
    }

    /// `L = κ (S^σ − I)` with `(S u)_j = u_{j−1}`: returns `(κ, σ)`.
    pub fn shift_form(&self) -> (f64, isize) {
        let k = self.speed / self.dx;
        if self.downwind {
            (-k, -1)
        } else {
            (k, 1)
        }
    }

    /// Dense circulant matrix of the operator.
    pub fn matrix(&self, m: usize) -> DenseMatrix {
        let mut l = DenseMatrix::zeros(m, m);
        let k = self.speed / self.dx;
        for j in 0..m {
            if self.downwind {
                l[(j, j)] += k;
                l[(j, (j + 1) % m)] -= k;
            } else {
                l[(j, j)] -= k;
                l[(j, (j + m - 1) % m)] += k;
            }
        }
        l
    }
}

/// Dense upwind matrix for `−a u_x`, `a ≥ 0`.
pub fn upwind_matrix(a: f64, grid: PeriodicGrid) -> Result<DenseMatrix> {
    if !(a >= 0.0) {
        return Err(Error::InvalidArgument(format!("wavespeed must be >= 0, got {a}")));
    }
    Ok(OneSidedDifference::upwind(a, grid).matrix(grid.points()))
}

/// Smoothness-indicator offset of [`Weno5::lax_friedrichs`].
pub const WENO_EPS: f64 = 1e-6;

/// Fifth-order reconstruction at the right face of the middle value.
#[inline]
fn weno5_face(v1: f64, v2: f64, v3: f64, v4: f64, v5: f64, eps: f64) -> f64 {
    let q0 = (2.0 * v1 - 7.0 * v2 + 11.0 * v3) / 6.0;
    let q1 = (-v2 + 5.0 * v3 + 2.0 * v4) / 6.0;
    let q2 = (2.0 * v3 + 5.0 * v4 - v5) / 6.0;
    let sq = |x: f64| x * x;
    let b0 = 13.0 / 12.0 * sq(v1 - 2.0 * v2 + v3) + 0.25 * sq(v1 - 4.0 * v2 + 3.0 * v3);
    let b1 = 13.0 / 12.0 * sq(v2 - 2.0 * v3 + v4) + 0.25 * sq(v2 - v4);
    let b2 = 13.0 / 12.0 * sq(v3 - 2.0 * v4 + v5) + 0.25 * sq(3.0 * v3 - 4.0 * v4 + v5);
    let a0 = 0.1 / sq(eps + b0);
    let a1 = 0.6 / sq(eps + b1);
    let a2 = 0.3 / sq(eps + b2);
    (a0 * q0 + a1 * q1 + a2 * q2) / (a0 + a1 + a2)
}

/// Numerical flux direction for the WENO5 reconstruction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WenoFlux {
    /// `f± = (f ± α u)/2`, each reconstructed from its upwind side; `α`
    /// defaults to `max |u|` over the grid, recomputed per call.
    LaxFriedrichs { alpha: Option<f64> },
    /// `f` reconstructed from the side given by the sign of the Roe speed
    /// `(u_j + u_{j+1})/2`. No entropy fix.
    Upwind,
}

/// Jiang–Shu WENO5 approximation of `−(u²/2)_x` on a periodic grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weno5 {
    pub epsilon: f64,
    pub flux: WenoFlux,
}

impl Weno5 {
    /// Global Lax–Friedrichs splitting with `ε = 1e-6`.
    pub const fn lax_friedrichs() -> Self {
        Self {
            epsilon: WENO_EPS,
            flux: WenoFlux::LaxFriedrichs { alpha: None },
        }
    }

    /// Roe-speed upwinding with `ε = 1e-40`, so the weights stay scale
    /// invariant down to roundoff-sized variations.
    pub const fn upwind() -> Self {
        Self {
            epsilon: 1e-40,
            flux: WenoFlux::Upwind,
        }
    }

    pub const fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    /// Write `−(u²/2)_x` into `out`.
    pub fn apply(&self, u: &[f64], dx: f64, out: &mut [f64]) {
        let m = u.len();
        let eps = self.epsilon;
        let wrap = |j: isize| j.rem_euclid(m as isize) as usize;
        // flux[j] approximates the numerical flux at x_{j+1/2}.
        let mut flux = vec![0.0; m];
        match self.flux {
            WenoFlux::LaxFriedrichs { alpha } => {
                let alpha = alpha.unwrap_or_else(|| u.iter().fold(0.0, |a, v| a.max(v.abs())));
                let fp: Vec<f64> = u.iter().map(|&v| 0.5 * (0.5 * v * v + alpha * v)).collect();
                let fm: Vec<f64> = u.iter().map(|&v| 0.5 * (0.5 * v * v - alpha * v)).collect();
                for (j, fj) in flux.iter_mut().enumerate() {
                    let j = j as isize;
                    let p = |k: isize| fp[wrap(j + k)];
                    let n = |k: isize| fm[wrap(j + k)];
                    *fj = weno5_face(p(-2), p(-1), p(0), p(1), p(2), eps)
                        + weno5_face(n(3), n(2), n(1), n(0), n(-1), eps);
                }
            }
            WenoFlux::Upwind => {
                let f: Vec<f64> = u.iter().map(|&v| 0.5 * v * v).collect();
                for (j, fj) in flux.iter_mut().enumerate() {
                    let ji = j as isize;
                    let g = |k: isize| f[wrap(ji + k)];
                    *fj = if u[j] + u[wrap(ji + 1)] >= 0.0 {
                        weno5_face(g(-2), g(-1), g(0), g(1), g(2), eps)
                    } else {
                        weno5_face(g(3), g(2), g(1), g(0), g(-1), eps)
                    };
                }
            }
        }
        for j in 0..m {
            out[j] = -(flux[j] - flux[(j + m - 1) % m]) / dx;
        }
    }
}

/// [`Weno5::lax_friedrichs`] with an optional fixed `α`.
pub fn weno5_burgers(u: &[f64], dx: f64, alpha: Option<f64>, out: &mut [f64]) {
    Weno5 {
        flux: WenoFlux::LaxFriedrichs { alpha },
        ..Weno5::lax_friedrichs()
    }
    .apply(u, dx, out)
}

/// [`weno5_burgers`] on a [`GridFunction`].
pub fn weno5_divergence(u: &GridFunction, wavespeed_bound: Option<f64>) -> GridFunction {
    let mut out = vec![0.0; u.values.len()];
    weno5_burgers(&u.values, u.grid.dx(), wavespeed_bound, &mut out);
    GridFunction {
        grid: u.grid,
        values: out,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::Prng;
    use core::f64::consts::PI;

    fn grid(m: usize) -> PeriodicGrid {
        PeriodicGrid::new(m).unwrap()
    }

    #[test]
    fn sampling_rules() {
        let u = initial_condition(InitialCondition::AdvectionStep, grid(8));
        assert_eq!(u.values(), &[0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.0]);
        assert!(PeriodicGrid::new(4).is_err());
    }

    #[test]
    fn burgers_step_sampling_on_small_grid() {
        // The grid type needs 8 points; sample the rule directly at m = 4.
        let xs = [0.0, 0.25, 0.5, 0.75];
        let v: Vec<f64> = xs.iter().map(|&x| if x <= 0.5 { 1.0 } else { 0.0 }).collect();
        assert_eq!(v, [1.0, 1.0, 1.0, 0.0]);
        let u = initial_condition(InitialCondition::BurgersStep, grid(8));
        assert_eq!(u.values(), &[1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn total_variation_of_steps() {
        assert_eq!(total_variation(&[3.0; 10]), 0.0);
        for which in [InitialCondition::AdvectionStep, InitialCondition::BurgersStep] {
            for m in [8, 400, 1000] {
                assert_eq!(total_variation(initial_condition(which, grid(m)).values()), 2.0);
            }
        }
    }

    #[test]
    fn total_variation_is_shift_invariant() {
        let mut rng = Prng::new(2);
        let u: Vec<f64> = (0..50).map(|_| rng.range(-1.0, 1.0)).collect();
        let tv = total_variation(&u);
        for s in 1..50 {
            let mut v = u.clone();
            v.rotate_left(s);
            assert!((total_variation(&v) - tv).abs() < 1e-13);
        }
    }

    #[test]
    fn upwind_matrix_properties() {
        let g = grid(16);
        assert_eq!(upwind_matrix(0.0, g).unwrap().max_abs(), 0.0);
        for a in [0.5, 1.0, 7.0] {
            let l = upwind_matrix(a, g).unwrap();
            for i in 0..16 {
                assert!(l.row(i).iter().sum::<f64>().abs() < 1e-12);
            }
        }
        assert!(upwind_matrix(-1.0, g).is_err());
    }

    #[test]
    fn matrix_and_stencil_agree() {
        let g = grid(12);
        let mut rng = Prng::new(4);
        let u: Vec<f64> = (0..12).map(|_| rng.uniform()).collect();
        for op in [OneSidedDifference::upwind(2.0, g), OneSidedDifference::downwind(2.0, g)] {
            let mut out = vec![0.0; 12];
            op.apply(&u, &mut out);
            let dense = op.matrix(12).mul_vec(&u).unwrap();
            for (x, y) in out.iter().zip(&dense) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn forward_euler_upwind_is_tvd() {
        let g = grid(1000);
        let u0 = initial_condition(InitialCondition::AdvectionStep, g);
        let op = OneSidedDifference::upwind(1.0, g);
        let mut lu = vec![0.0; 1000];
        op.apply(u0.values(), &mut lu);
        let dt = g.dx() / 1.0;
        let u1: Vec<f64> = u0.values().iter().zip(&lu).map(|(u, l)| u + dt * l).collect();
        assert!(total_variation(&u1) <= total_variation(u0.values()));
    }

    #[test]
    fn forward_euler_upwind_tvd_random() {
        let mut rng = Prng::new(8);
        let g = grid(40);
        for _ in 0..100 {
            let a = rng.range(0.0, 10.0);
            let u: Vec<f64> = (0..40).map(|_| rng.range(-1.0, 1.0)).collect();
            let op = OneSidedDifference::upwind(a, g);
            let mut lu = vec![0.0; 40];
            op.apply(&u, &mut lu);
            let dt = rng.uniform() * g.dx() / a;
            let v: Vec<f64> = u.iter().zip(&lu).map(|(u, l)| u + dt * l).collect();
            assert!(total_variation(&v) <= total_variation(&u) + 1e-13);
        }
    }

    #[test]
    fn weno_of_constant_is_zero() {
        for m in [8, 33, 400] {
            let u = vec![0.7; m];
            let mut out = vec![1.0; m];
            weno5_burgers(&u, 1.0 / m as f64, None, &mut out);
            assert!(out.iter().all(|v| v.abs() <= 1e-14), "m = {m}");
        }
    }

    fn weno_sine_error(w: Weno5, m: usize) -> f64 {
        let g = grid(m);
        let u: Vec<f64> = (0..m).map(|j| libm::sin(2.0 * PI * g.x(j))).collect();
        let mut out = vec![0.0; m];
        w.apply(&u, g.dx(), &mut out);
        (0..m)
            .map(|j| {
                let x = g.x(j);
                // −(u²/2)_x = −u u_x
                let exact = -libm::sin(2.0 * PI * x) * 2.0 * PI * libm::cos(2.0 * PI * x);
                (out[j] - exact).abs()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn weno_smooth_convergence() {
        let ms = [40, 80, 160, 320];
        for w in [Weno5::lax_friedrichs(), Weno5::upwind()] {
            let errs: Vec<f64> = ms.iter().map(|&m| weno_sine_error(w, m)).collect();
            for e in errs.windows(2) {
                let rate = libm::log2(e[0] / e[1]);
                assert!(rate >= 4.5, "{w:?}: rate {rate}, errors {errs:?}");
            }
        }
    }

    #[test]
    fn weno_forward_euler_on_burgers_step_is_controlled() {
        let g = grid(400);
        let u0 = initial_condition(InitialCondition::BurgersStep, g);
        let n = weno5_divergence(&u0, None);
        let dt = 0.1 * g.dx();
        let u1: Vec<f64> = u0.values().iter().zip(n.values()).map(|(u, f)| u + dt * f).collect();
        assert!((total_variation(&u1) - 2.0).abs() <= 1e-3);
    }

    #[test]
    fn upwind_weno_forward_euler_keeps_step_tv() {
        let g = grid(400);
        let u0 = initial_condition(InitialCondition::BurgersStep, g);
        let mut n = vec![0.0; 400];
        Weno5::upwind().apply(u0.values(), g.dx(), &mut n);
        for lam in [0.1, 0.5, 0.9] {
            let u1: Vec<f64> = u0.values().iter().zip(&n).map(|(u, f)| u + lam * g.dx() * f).collect();
            assert!(total_variation(&u1) <= 2.0 + 1e-14, "lambda {lam}");
        }
    }

    #[test]
    fn upwind_flux_follows_roe_speed() {
        // Negative states move left: mirror of the positive case.
        let g = grid(50);
        let u: Vec<f64> = (0..50).map(|j| 0.5 + 0.3 * libm::sin(2.0 * PI * g.x(j))).collect();
        let v: Vec<f64> = u.iter().rev().map(|x| -x).collect();
        let (mut a, mut b) = (vec![0.0; 50], vec![0.0; 50]);
        Weno5::upwind().apply(&u, g.dx(), &mut a);
        Weno5::upwind().apply(&v, g.dx(), &mut b);
        for j in 0..50 {
            assert!((a[j] + b[49 - j]).abs() < 1e-12);
        }
    }
}
