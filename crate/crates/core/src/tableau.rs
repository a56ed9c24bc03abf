//! Representations of explicit multistep Runge–Kutta methods.
//!
//! A method with `k` steps and `s` stages is stored in coefficient form
//!
//! ```text
//! y_1     = u^n
//! y_i     = Σ_l d_il u^{n-k+l} + Δt Σ_l â_il F(u^{n-k+l}) + Δt Σ_{j<i} a_ij F(y_j)
//! u^{n+1} = Σ_l θ_l u^{n-k+l} + Δt Σ_l b̂_l F(u^{n-k+l}) + Δt Σ_j b_j F(y_j)
//! ```
//!
//! where the sums over `l` for the `â`/`b̂` terms run over the `k - 1` previous
//! steps only. Two-step methods (`k = 2`) are the main target; one-step
//! Runge–Kutta methods are usually embedded as `k = 2` with zero weight on
//! `u^{n-1}` so a single certification and stepping path serves both.
//!
//! The Spijker form collects the method as `w = S x + Δt T f` with
//! `w = (u^{n-k+1}, …, u^{n-1}, y_1, …, y_s, u^{n+1})` and
//! `x = (u^{n-k+1}, …, u^n)`. The canonical Shu–Osher form at parameter `r`
//! rewrites it as `w = R x + P (w + Δt/r f)`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::densemat::{mat_mul, DenseMatrix, Lu, Vector};
use crate::{Error, Result};

/// Tolerance on row-sum identities (`D e = e`, `θᵀe = 1`).
pub const CONSISTENCY_TOL: f64 = 1e-12;

/// Coefficients of an explicit `k`-step, `s`-stage Runge–Kutta method.
#[derive(Debug, Clone, PartialEq)]
pub struct TsrkCoefficients {
    steps: usize,
    stages: usize,
    d: DenseMatrix,
    a_hat: DenseMatrix,
    a: DenseMatrix,
    theta: Vec<f64>,
    b_hat: Vec<f64>,
    b: Vec<f64>,
}

impl TsrkCoefficients {
    /// Assemble and validate a method.
    ///
    /// `d` is `s × k` (column `l` weights `u^{n-k+1+l}`), `a_hat` is
    /// `s × (k-1)`, `a` is `s × s` strictly lower triangular, `theta` has
    /// length `k`, `b_hat` length `k - 1` and `b` length `s`.
    pub fn new(
        d: DenseMatrix,
        a_hat: DenseMatrix,
        a: DenseMatrix,
        theta: Vec<f64>,
        b_hat: Vec<f64>,
        b: Vec<f64>,
    ) -> Result<Self> {
        let stages = a.rows();
        let steps = theta.len();
        if steps == 0 || stages == 0 {
            return Err(Error::InvalidMethod("need at least one step and one stage".into()));
        }
        let dims = [
            ("A columns", a.cols(), stages),
            ("D rows", d.rows(), stages),
            ("D columns", d.cols(), steps),
            ("Ahat rows", a_hat.rows(), stages),
            ("Ahat columns", a_hat.cols(), steps - 1),
            ("bhat length", b_hat.len(), steps - 1),
            ("b length", b.len(), stages),
        ];
        for (what, found, expected) in dims {
            if found != expected {
                return Err(Error::InvalidMethod(format!(
                    "{what} is {found}, expected {expected}"
                )));
            }
        }
        for v in theta.iter().chain(&b_hat).chain(&b) {
            if !v.is_finite() {
                return Err(Error::InvalidMethod("non-finite weight".into()));
            }
        }
        for i in 0..stages {
            for j in i..stages {
                if a[(i, j)] != 0.0 {
                    return Err(Error::InvalidMethod(format!(
                        "A is not strictly lower triangular: A[{}][{}] = {}",
                        i + 1,
                        j + 1,
                        a[(i, j)]
                    )));
                }
            }
            let row_sum: f64 = d.row(i).iter().sum();
            if (row_sum - 1.0).abs() > CONSISTENCY_TOL {
                return Err(Error::InvalidMethod(format!(
                    "row {} of D sums to {row_sum}, expected 1",
                    i + 1
                )));
            }
        }
        let theta_sum: f64 = theta.iter().sum();
        if (theta_sum - 1.0).abs() > CONSISTENCY_TOL {
            return Err(Error::InvalidMethod(format!(
                "theta sums to {theta_sum}, expected 1"
            )));
        }
        // First stage is u^n itself.
        let first_is_current = d.row(0)[..steps - 1].iter().all(|&x| x == 0.0)
            && a_hat.row(0).iter().all(|&x| x == 0.0);
        if !first_is_current {
            return Err(Error::InvalidMethod(
                "first stage must equal u^n (d_1 = 0, â_1 = 0)".into(),
            ));
        }
        Ok(Self {
            steps,
            stages,
            d,
            a_hat,
            a,
            theta,
            b_hat,
            b,
        })
    }

    /// One-step Runge–Kutta method from its Butcher coefficients (`k = 1`).
    pub fn runge_kutta(a: DenseMatrix, b: Vec<f64>) -> Result<Self> {
        let s = a.rows();
        Self::new(
            DenseMatrix::from_vec(s, 1, vec![1.0; s])?,
            DenseMatrix::zeros(s, 0),
            a,
            vec![1.0],
            Vec::new(),
            b,
        )
    }

    /// Re-express a one-step method as a two-step method with zero weight on
    /// `u^{n-1}` and `F(u^{n-1})`. Two-step methods are returned unchanged.
    pub fn embed_two_step(&self) -> Result<Self> {
        match self.steps {
            2 => Ok(self.clone()),
            1 => {
                let s = self.stages;
                let mut d = DenseMatrix::zeros(s, 2);
                for i in 0..s {
                    d[(i, 1)] = 1.0;
                }
                Self::new(
                    d,
                    DenseMatrix::zeros(s, 1),
                    self.a.clone(),
                    vec![0.0, 1.0],
                    vec![0.0],
                    self.b.clone(),
                )
            }
            k => Err(Error::InvalidMethod(format!(
                "cannot embed a {k}-step method into two steps"
            ))),
        }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn stages(&self) -> usize {
        self.stages
    }

    pub fn d(&self) -> &DenseMatrix {
        &self.d
    }

    pub fn a_hat(&self) -> &DenseMatrix {
        &self.a_hat
    }

    pub fn a(&self) -> &DenseMatrix {
        &self.a
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn b_hat(&self) -> &[f64] {
        &self.b_hat
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    /// True when the method never touches `u^{n-1}` or `F(u^{n-1})`.
    pub fn is_one_step(&self) -> bool {
        let k = self.steps;
        (0..self.stages).all(|i| self.d.row(i)[..k - 1].iter().all(|&x| x == 0.0))
            && self.a_hat.as_slice().iter().all(|&x| x == 0.0)
            && self.theta[..k - 1].iter().all(|&x| x == 0.0)
            && self.b_hat.iter().all(|&x| x == 0.0)
    }

    /// Size of the extended stage vector: history slots plus stages.
    pub(crate) fn extended_len(&self) -> usize {
        self.steps - 1 + self.stages
    }

    /// `D̃ = [I 0; D]`, `(k-1+s) × k`.
    pub(crate) fn d_tilde(&self) -> DenseMatrix {
        let k = self.steps;
        let n = self.extended_len();
        let mut dt = DenseMatrix::zeros(n, k);
        for h in 0..k - 1 {
            dt[(h, h)] = 1.0;
        }
        for i in 0..self.stages {
            dt.row_mut(k - 1 + i).copy_from_slice(self.d.row(i));
        }
        dt
    }

    /// `Ã = [0 0; Â A]`, `(k-1+s) × (k-1+s)`.
    pub(crate) fn a_tilde(&self) -> DenseMatrix {
        let k = self.steps;
        let n = self.extended_len();
        let mut at = DenseMatrix::zeros(n, n);
        for i in 0..self.stages {
            let row = at.row_mut(k - 1 + i);
            row[..k - 1].copy_from_slice(self.a_hat.row(i));
            row[k - 1..].copy_from_slice(self.a.row(i));
        }
        at
    }

    /// `b̃ = (b̂, b)`.
    pub(crate) fn b_tilde(&self) -> Vec<f64> {
        let mut bt = self.b_hat.clone();
        bt.extend_from_slice(&self.b);
        bt
    }

    /// `l = (k-1, …, 1, 0)`.
    pub(crate) fn lags(&self) -> Vec<f64> {
        (0..self.steps).rev().map(|l| l as f64).collect()
    }
}

/// The `(S, T)` matrix pair of `w = S x + Δt T f`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpijkerForm {
    pub s: DenseMatrix,
    pub t: DenseMatrix,
}

impl SpijkerForm {
    /// Number of steps `k` (columns of `S`).
    pub fn steps(&self) -> usize {
        self.s.cols()
    }

    /// Recover the coefficient form by block extraction.
    pub fn to_coefficients(&self) -> Result<TsrkCoefficients> {
        let k = self.s.cols();
        let n = self.t.rows();
        if n < k + 1 || self.s.rows() != n || self.t.cols() != n {
            return Err(Error::InvalidMethod("inconsistent Spijker dimensions".into()));
        }
        let s = n - k;
        let mut d = DenseMatrix::zeros(s, k);
        let mut a_hat = DenseMatrix::zeros(s, k - 1);
        let mut a = DenseMatrix::zeros(s, s);
        for i in 0..s {
            let row = k - 1 + i;
            d.row_mut(i).copy_from_slice(self.s.row(row));
            a_hat.row_mut(i).copy_from_slice(&self.t.row(row)[..k - 1]);
            a.row_mut(i).copy_from_slice(&self.t.row(row)[k - 1..n - 1]);
        }
        let last = n - 1;
        TsrkCoefficients::new(
            d,
            a_hat,
            a,
            self.s.row(last).to_vec(),
            self.t.row(last)[..k - 1].to_vec(),
            self.t.row(last)[k - 1..n - 1].to_vec(),
        )
    }
}

/// Assemble `S = [I 0; D; θᵀ]` and `T = [0 0 0; Â A 0; b̂ᵀ bᵀ 0]`.
pub fn to_spijker(m: &TsrkCoefficients) -> SpijkerForm {
    let k = m.steps;
    let s = m.stages;
    let n = k + s;
    let mut sm = DenseMatrix::zeros(n, k);
    let mut tm = DenseMatrix::zeros(n, n);
    for h in 0..k - 1 {
        sm[(h, h)] = 1.0;
    }
    for i in 0..s {
        let row = k - 1 + i;
        sm.row_mut(row).copy_from_slice(m.d.row(i));
        let trow = tm.row_mut(row);
        trow[..k - 1].copy_from_slice(m.a_hat.row(i));
        trow[k - 1..k - 1 + s].copy_from_slice(m.a.row(i));
    }
    sm.row_mut(n - 1).copy_from_slice(&m.theta);
    let trow = tm.row_mut(n - 1);
    trow[..k - 1].copy_from_slice(&m.b_hat);
    trow[k - 1..k - 1 + s].copy_from_slice(&m.b);
    SpijkerForm { s: sm, t: tm }
}

/// Stage abscissas followed by the abscissa of `u^{n+1}`: `(c_1, …, c_s, c_{s+1})`.
///
/// Computed as `c = Ã e − D̃ l`; the final entry is `b̃ᵀe − θᵀl`, which equals
/// one for a first-order consistent method.
pub fn abscissas(m: &TsrkCoefficients) -> Vector {
    let full = spijker_abscissas(m);
    Vector::new(full[m.steps - 1..].to_vec()).expect("finite coefficients")
}

/// Abscissas aligned with the rows of the Spijker form:
/// `(−(k−1), …, −1, c_1, …, c_s, c_{s+1})`.
pub fn spijker_abscissas(m: &TsrkCoefficients) -> Vec<f64> {
    let k = m.steps;
    let lags = m.lags();
    let mut c = Vec::with_capacity(k + m.stages);
    for h in 0..k - 1 {
        c.push(-lags[h]);
    }
    for i in 0..m.stages {
        let from_f: f64 = m.a_hat.row(i).iter().sum::<f64>() + m.a.row(i).iter().sum::<f64>();
        let from_u: f64 = m.d.row(i).iter().zip(&lags).map(|(d, l)| d * l).sum();
        c.push(from_f - from_u);
    }
    let from_f: f64 = m.b_hat.iter().sum::<f64>() + m.b.iter().sum::<f64>();
    let from_u: f64 = m.theta.iter().zip(&lags).map(|(t, l)| t * l).sum();
    c.push(from_f - from_u);
    c
}

/// Canonical Shu–Osher representation `w = R x + P (w + Δt/r f)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalShuOsherForm {
    pub r: f64,
    /// Weights on `x = (u^{n-k+1}, …, u^n)`.
    pub r_mat: DenseMatrix,
    /// Weights on the forward-Euler-like substeps `w_j + Δt/r f_j`.
    pub p_mat: DenseMatrix,
    /// Spijker-aligned abscissas, see [`spijker_abscissas`].
    pub c: Vec<f64>,
}

impl CanonicalShuOsherForm {
    pub fn steps(&self) -> usize {
        self.r_mat.cols()
    }

    pub fn stages(&self) -> usize {
        self.p_mat.rows() - self.steps()
    }

    /// Largest deviation of a row sum of `[R P]` from one.
    pub fn row_sum_defect(&self) -> f64 {
        (0..self.p_mat.rows())
            .map(|i| {
                let s: f64 =
                    self.r_mat.row(i).iter().sum::<f64>() + self.p_mat.row(i).iter().sum::<f64>();
                (s - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Most negative entry over `R` and `P`.
    pub fn min_entry(&self) -> f64 {
        let r = self.r_mat.min_entry().map_or(0.0, |e| e.0);
        let p = self.p_mat.min_entry().map_or(0.0, |e| e.0);
        r.min(p)
    }
}

/// Rewrite the method in canonical Shu–Osher form at parameter `r ≥ 0`:
/// `P = r (I + rT)⁻¹ T`, `R = (I + rT)⁻¹ S`.
pub fn to_canonical(m: &TsrkCoefficients, r: f64) -> Result<CanonicalShuOsherForm> {
    if !(r >= 0.0) || !r.is_finite() {
        return Err(Error::InvalidArgument(format!("r must be finite and >= 0, got {r}")));
    }
    let sp = to_spijker(m);
    let (r_mat, p_mat) = canonical_matrices(&sp, r)?;
    Ok(CanonicalShuOsherForm {
        r,
        r_mat,
        p_mat,
        c: spijker_abscissas(m),
    })
}

/// `(R, P)` at parameter `r` for a Spijker pair.
pub(crate) fn canonical_matrices(sp: &SpijkerForm, r: f64) -> Result<(DenseMatrix, DenseMatrix)> {
    let n = sp.t.rows();
    let mut m = sp.t.scaled(r);
    for i in 0..n {
        m[(i, i)] += 1.0;
    }
    let lu = Lu::new(&m)?;
    let r_mat = lu.solve(&sp.s)?;
    let p_mat = lu.solve(&sp.t)?.scaled(r);
    Ok((r_mat, p_mat))
}

/// `(I − P) S`, the identity linking `R`, `P` and `S`.
pub fn reconstructed_r(p: &DenseMatrix, s: &DenseMatrix) -> Result<DenseMatrix> {
    let n = p.rows();
    let mut i_minus_p = p.scaled(-1.0);
    for i in 0..n {
        i_minus_p[(i, i)] += 1.0;
    }
    mat_mul(&i_minus_p, s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::methods;
    use crate::testutil::Prng;

    fn forward_euler() -> TsrkCoefficients {
        methods::forward_euler()
    }

    #[test]
    fn forward_euler_spijker() {
        let sp = to_spijker(&forward_euler());
        let s = DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [0.0, 1.0]]).unwrap();
        assert_eq!(sp.s, s);
        let mut t = DenseMatrix::zeros(3, 3);
        t[(2, 1)] = 1.0;
        assert_eq!(sp.t, t);
    }

    #[test]
    fn spijker_consistency_and_explicitness() {
        for m in methods::builtin() {
            let sp = to_spijker(&m.1);
            for i in 0..sp.s.rows() {
                let sum: f64 = sp.s.row(i).iter().sum();
                assert!((sum - 1.0).abs() < 1e-15, "{}", m.0);
            }
            let n = sp.t.rows();
            assert!(sp.t.row(0).iter().all(|&x| x == 0.0));
            assert!((0..n).all(|i| sp.t[(i, n - 1)] == 0.0));
        }
    }

    #[test]
    fn essprk33_spijker_block_assembly() {
        // Butcher form of the Shu–Osher method, assembled by hand.
        let m = methods::essprk33();
        let sp = to_spijker(&m);
        let mut t = DenseMatrix::zeros(5, 5);
        t[(2, 1)] = 1.0;
        t[(3, 1)] = 0.25;
        t[(3, 2)] = 0.25;
        t[(4, 1)] = 1.0 / 6.0;
        t[(4, 2)] = 1.0 / 6.0;
        t[(4, 3)] = 2.0 / 3.0;
        assert_eq!(sp.t, t);
        for i in 0..5 {
            for j in i..5 {
                assert_eq!(sp.t[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn spijker_round_trip() {
        for (_, m) in methods::builtin() {
            assert_eq!(to_spijker(&m).to_coefficients().unwrap(), m);
        }
    }

    #[test]
    fn abscissas_of_small_methods() {
        assert_eq!(&*abscissas(&forward_euler()), &[0.0, 1.0]);
        let c = abscissas(&methods::essprk_plus33());
        let want = [0.0, 2.0 / 3.0, 2.0 / 3.0, 1.0];
        for (x, y) in c.iter().zip(want) {
            assert!((x - y).abs() < 1e-15);
        }
        let full = spijker_abscissas(&methods::essprk_plus33());
        assert_eq!(full[0], -1.0);
        assert_eq!(full.len(), 5);
    }

    #[test]
    fn random_consistent_tableau_ends_at_one() {
        let mut rng = Prng::new(5);
        for _ in 0..50 {
            let s = 4;
            let mut a = DenseMatrix::zeros(s, s);
            let mut a_hat = DenseMatrix::zeros(s, 1);
            let mut d = DenseMatrix::zeros(s, 2);
            d[(0, 1)] = 1.0;
            for i in 1..s {
                let di = rng.uniform();
                d[(i, 0)] = di;
                d[(i, 1)] = 1.0 - di;
                a_hat[(i, 0)] = rng.range(-1.0, 1.0);
                for j in 0..i {
                    a[(i, j)] = rng.range(-1.0, 1.0);
                }
            }
            let th = rng.uniform();
            let b: Vec<f64> = (0..s).map(|_| rng.range(0.0, 1.0)).collect();
            // Enforce b̂ + Σb = 1 + θ_1 (first-order consistency).
            let b_hat = 1.0 + th - b.iter().sum::<f64>();
            let m = TsrkCoefficients::new(d, a_hat, a, vec![th, 1.0 - th], vec![b_hat], b).unwrap();
            let c = abscissas(&m);
            assert!((c[s] - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn rejects_upper_triangular_a() {
        let mut a = DenseMatrix::zeros(2, 2);
        a[(0, 1)] = 0.5;
        let err = TsrkCoefficients::runge_kutta(a, vec![0.5, 0.5]).unwrap_err();
        assert!(matches!(err, Error::InvalidMethod(_)));
    }

    #[test]
    fn rejects_inconsistent_rows() {
        let mut d = DenseMatrix::zeros(2, 2);
        d[(0, 1)] = 1.0;
        d[(1, 1)] = 0.9;
        let mut a = DenseMatrix::zeros(2, 2);
        a[(1, 0)] = 1.0;
        let err = TsrkCoefficients::new(
            d,
            DenseMatrix::zeros(2, 1),
            a,
            vec![0.0, 1.0],
            vec![0.0],
            vec![0.5, 0.5],
        );
        assert!(err.is_err());
    }

    #[test]
    fn canonical_at_zero_is_spijker() {
        let m = methods::essprk33();
        let f = to_canonical(&m, 0.0).unwrap();
        assert_eq!(f.p_mat.max_abs(), 0.0);
        assert_eq!(f.r_mat, to_spijker(&m).s);
    }

    #[test]
    fn canonical_essprk33_matches_shu_osher_weights() {
        let f = to_canonical(&methods::essprk33(), 1.0).unwrap();
        // Rows: u^{n-1}, y1, y2, y3, u^{n+1}; column 1 of R is u^n.
        let close = |x: f64, y: f64| (x - y).abs() < 1e-15;
        assert!(close(f.p_mat[(2, 1)], 1.0));
        assert!(close(f.r_mat[(3, 1)], 0.75));
        assert!(close(f.p_mat[(3, 2)], 0.25));
        assert!(close(f.p_mat[(3, 1)], 0.0));
        assert!(close(f.r_mat[(4, 1)], 1.0 / 3.0));
        assert!(close(f.p_mat[(4, 2)], 0.0));
        assert!(close(f.p_mat[(4, 3)], 2.0 / 3.0));
        assert!(f.row_sum_defect() < 1e-15);
    }

    #[test]
    fn canonical_identity_r_equals_i_minus_p_s() {
        let m = methods::essprk_plus33();
        let f = to_canonical(&m, 0.5).unwrap();
        let r = reconstructed_r(&f.p_mat, &to_spijker(&m).s).unwrap();
        assert!(r.sub(&f.r_mat).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn canonical_rejects_negative_r() {
        assert!(to_canonical(&forward_euler(), -1.0).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn canonical_rows_sum_to_one(seed in any::<u64>(), r in 0.0f64..4.0) {
                let mut rng = Prng::new(seed);
                let s = 3;
                let mut a = DenseMatrix::zeros(s, s);
                let mut a_hat = DenseMatrix::zeros(s, 1);
                let mut d = DenseMatrix::zeros(s, 2);
                d[(0, 1)] = 1.0;
                for i in 1..s {
                    let di = rng.uniform();
                    d[(i, 0)] = di;
                    d[(i, 1)] = 1.0 - di;
                    a_hat[(i, 0)] = rng.uniform();
                    for j in 0..i {
                        a[(i, j)] = rng.uniform();
                    }
                }
                let th = rng.uniform();
                let b: Vec<f64> = (0..s).map(|_| rng.uniform()).collect();
                let m = TsrkCoefficients::new(d, a_hat, a, vec![th, 1.0 - th], vec![rng.uniform()], b).unwrap();
                let f = to_canonical(&m, r).unwrap();
                prop_assert!(f.row_sum_defect() <= 1e-12);
            }
        }
    }
}
