//! Order conditions for multistep Runge–Kutta methods through order eight.
//!
//! With `D̃ = [I 0; D]`, `Ã = [0 0; Â A]`, `b̃ = (b̂, b)`, `l = (k-1, …, 0)`
//! and `c = Ãe − D̃l`, the stage residuals are
//!
//! ```text
//! τ_ρ = (c^ρ − D̃(−l)^ρ)/ρ! − Ã c^{ρ−1}/(ρ−1)!
//! ```
//!
//! and every condition is either a quadrature condition
//! `b̃ᵀc^{ρ−1} = (1 − θᵀ(−l)^ρ)/ρ`, a scalar `b̃ᵀ M τ_q = 0` where `M` is a
//! word in `Ã` and `C = diag(c)`, or a vector stage condition `τ_q = 0`.
//! Powers are elementwise throughout.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::densemat::{DenseMatrix, Vector};
use crate::tableau::{SpijkerForm, TsrkCoefficients};
use crate::{Error, Result};

/// Highest order with a tabulated condition list.
pub const MAX_ORDER: usize = 8;

const FACTORIAL: [u32; 9] = [1, 1, 2, 6, 24, 120, 720, 5040, 40320];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Spec {
    /// `b̃ᵀc^{ρ−1} = (1 − θᵀ(−l)^ρ)/ρ` at the order it is listed under.
    Quadrature,
    /// `b̃ᵀ W τ_q = 0` with `W` a word over `A` (Ã) and `C`, applied right to left.
    Weighted(&'static str, usize),
    /// `τ_q = 0` in every stage.
    Stage(usize),
}

use Spec::{Quadrature as Q, Stage as S, Weighted as W};

const CONDITIONS: [&[Spec]; MAX_ORDER] = [
    &[Q],
    &[Q],
    &[Q, W("", 2)],
    &[Q, W("A", 2), W("C", 2), W("", 3)],
    &[Q, W("A", 3), W("C", 3), W("", 4), S(2)],
    &[
        Q,
        W("A", 4),
        W("C", 4),
        W("", 5),
        W("AA", 3),
        W("AC", 3),
        W("CA", 3),
        W("CC", 3),
    ],
    &[
        Q,
        W("A", 5),
        W("C", 5),
        W("", 6),
        W("AA", 4),
        W("AC", 4),
        W("CA", 4),
        W("CC", 4),
        S(3),
    ],
    &[
        Q,
        W("A", 6),
        W("C", 6),
        W("", 7),
        W("AAA", 4),
        W("AA", 5),
        W("AAC", 4),
        W("ACA", 4),
        W("AC", 5),
        W("ACC", 4),
        W("CAA", 4),
        W("CA", 5),
        W("CAC", 4),
        W("CCA", 4),
        W("CC", 5),
        W("CCC", 4),
    ],
];

/// Number of conditions listed at order `p`, stage conditions included.
pub fn condition_count(p: usize) -> usize {
    if p == 0 || p > MAX_ORDER {
        0
    } else {
        CONDITIONS[p - 1].len()
    }
}

/// Whether a condition is scalar or a stage (vector) condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConditionKind {
    Scalar,
    Stage,
}

/// One evaluated order condition.
#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub order: usize,
    pub name: String,
    pub kind: ConditionKind,
    /// `|lhs − rhs|` for scalar conditions, max-norm for stage conditions.
    pub residual: f64,
}

/// Residuals of every condition through some order.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderReport {
    pub max_order: usize,
    pub conditions: Vec<Condition>,
}

impl OrderReport {
    /// Conditions listed at exactly order `p`.
    pub fn at_order(&self, p: usize) -> impl Iterator<Item = &Condition> {
        self.conditions.iter().filter(move |c| c.order == p)
    }

    /// Largest residual among the conditions of order `p`.
    pub fn order_residual(&self, p: usize) -> f64 {
        self.at_order(p).map(|c| c.residual).fold(0.0, f64::max)
    }

    /// Largest residual over the whole report.
    pub fn max_residual(&self) -> f64 {
        self.conditions.iter().map(|c| c.residual).fold(0.0, f64::max)
    }

    /// Largest `p` such that every condition of order `≤ p` is within `tol`.
    pub fn attained_order(&self, tol: f64) -> usize {
        let mut p = 0;
        while p < self.max_order && self.order_residual(p + 1) <= tol {
            p += 1;
        }
        p
    }
}

/// Extended-stage data shared by all condition evaluations.
pub(crate) struct Extended {
    /// Number of history slots, `k − 1`.
    history: usize,
    a: DenseMatrix,
    d: DenseMatrix,
    b: Vec<f64>,
    theta: Vec<f64>,
    neg_lags: Vec<f64>,
    c: Vec<f64>,
}

impl Extended {
    pub(crate) fn new(m: &TsrkCoefficients) -> Self {
        let a = m.a_tilde();
        let d = m.d_tilde();
        let lags = m.lags();
        let neg_lags: Vec<f64> = lags.iter().map(|l| -l).collect();
        let c = abscissas_of(&a, &d, &lags);
        Self {
            history: m.steps() - 1,
            a,
            d,
            b: m.b_tilde(),
            theta: m.theta().to_vec(),
            neg_lags,
            c,
        }
    }

    /// Read `Ã`, `D̃`, `b̃`, `θ` directly off a Spijker pair.
    pub(crate) fn from_spijker(sp: &SpijkerForm) -> Self {
        let k = sp.s.cols();
        let n = sp.t.rows() - 1;
        let mut a = DenseMatrix::zeros(n, n);
        let mut d = DenseMatrix::zeros(n, k);
        for i in 0..n {
            a.row_mut(i).copy_from_slice(&sp.t.row(i)[..n]);
            d.row_mut(i).copy_from_slice(sp.s.row(i));
        }
        let lags: Vec<f64> = (0..k).rev().map(|l| l as f64).collect();
        let c = abscissas_of(&a, &d, &lags);
        Self {
            history: k - 1,
            a,
            d,
            b: sp.t.row(n)[..n].to_vec(),
            theta: sp.s.row(n).to_vec(),
            neg_lags: lags.iter().map(|l| -l).collect(),
            c,
        }
    }

    /// Extended abscissas `c = Ãe − D̃l`.
    pub(crate) fn abscissas(&self) -> &[f64] {
        &self.c
    }

    /// Abscissa of `u^{n+1}`, `b̃ᵀe − θᵀl`.
    pub(crate) fn final_abscissa(&self) -> f64 {
        self.b.iter().sum::<f64>()
            + self.theta.iter().zip(&self.neg_lags).map(|(t, l)| t * l).sum::<f64>()
    }

    /// Extended-length `τ_ρ`; history entries vanish identically.
    fn tau(&self, rho: usize) -> Vec<f64> {
        let n = self.c.len();
        let fr = FACTORIAL[rho] as f64;
        let fr1 = FACTORIAL[rho - 1] as f64;
        let cpow: Vec<f64> = self.c.iter().map(|&x| powu(x, rho - 1)).collect();
        let lpow: Vec<f64> = self.neg_lags.iter().map(|&x| powu(x, rho)).collect();
        let ac = self.a.mul_vec(&cpow).expect("square");
        (0..n)
            .map(|i| {
                let dl: f64 = self.d.row(i).iter().zip(&lpow).map(|(x, y)| x * y).sum();
                (powu(self.c[i], rho) - dl) / fr - ac[i] / fr1
            })
            .collect()
    }

    fn quadrature(&self, rho: usize) -> f64 {
        let lhs: f64 = self.b.iter().zip(&self.c).map(|(b, c)| b * powu(*c, rho - 1)).sum();
        let tl: f64 = self.theta.iter().zip(&self.neg_lags).map(|(t, l)| t * powu(*l, rho)).sum();
        lhs - (1.0 - tl) / rho as f64
    }

    fn weighted(&self, word: &str, tau: &[f64]) -> f64 {
        let mut v = tau.to_vec();
        for op in word.bytes().rev() {
            match op {
                b'A' => v = self.a.mul_vec(&v).expect("square"),
                b'C' => v.iter_mut().zip(&self.c).for_each(|(x, c)| *x *= c),
                _ => unreachable!("condition words use A and C only"),
            }
        }
        self.b.iter().zip(&v).map(|(b, x)| b * x).sum()
    }

    /// Visit every condition through order `p` with its signed value(s).
    /// Stage conditions yield one value per stage.
    fn visit(&self, p: usize, mut f: impl FnMut(usize, Spec, &[f64])) {
        let mut taus: Vec<Option<Vec<f64>>> = vec![None; p.max(2)];
        let tau = |q: usize, taus: &mut Vec<Option<Vec<f64>>>| -> Vec<f64> {
            taus[q - 1].get_or_insert_with(|| self.tau(q)).clone()
        };
        for order in 1..=p {
            for &spec in CONDITIONS[order - 1] {
                match spec {
                    Q => f(order, spec, &[self.quadrature(order)]),
                    W(word, q) => {
                        let t = tau(q, &mut taus);
                        f(order, spec, &[self.weighted(word, &t)]);
                    }
                    S(q) => {
                        let t = tau(q, &mut taus);
                        f(order, spec, &t[self.history..]);
                    }
                }
            }
        }
    }

    /// All signed residuals through order `p`, stage conditions expanded per stage.
    pub(crate) fn signed_residuals(&self, p: usize, out: &mut Vec<f64>) {
        self.visit(p, |_, _, vals| out.extend_from_slice(vals));
    }
}

fn abscissas_of(a: &DenseMatrix, d: &DenseMatrix, lags: &[f64]) -> Vec<f64> {
    (0..a.rows())
        .map(|i| {
            a.row(i).iter().sum::<f64>() - d.row(i).iter().zip(lags).map(|(x, l)| x * l).sum::<f64>()
        })
        .collect()
}

fn powu(x: f64, n: usize) -> f64 {
    let mut r = 1.0;
    for _ in 0..n {
        r *= x;
    }
    r
}

fn condition_name(order: usize, spec: Spec) -> String {
    match spec {
        Q if order == 1 => "b'e".into(),
        Q if order == 2 => "b'c".into(),
        Q => format!("b'c^{}", order - 1),
        W(word, q) => {
            let mut s = String::from("b'");
            for ch in word.chars() {
                s.push(ch);
            }
            format!("{s}tau{q}")
        }
        S(q) => format!("tau{q}"),
    }
}

/// Stage residual `τ_ρ` restricted to the `s` stages.
pub fn stage_residual(m: &TsrkCoefficients, rho: usize) -> Result<Vector> {
    if !(2..=MAX_ORDER).contains(&rho) {
        return Err(Error::InvalidArgument(format!(
            "rho must be in 2..={MAX_ORDER}, got {rho}"
        )));
    }
    let ext = Extended::new(m);
    let t = ext.tau(rho);
    Vector::new(t[ext.history..].to_vec())
}

/// Evaluate every condition of every order `≤ p`.
pub fn residuals_up_to(m: &TsrkCoefficients, p: usize) -> Result<OrderReport> {
    if !(1..=MAX_ORDER).contains(&p) {
        return Err(Error::InvalidArgument(format!(
            "order must be in 1..={MAX_ORDER}, got {p}"
        )));
    }
    let ext = Extended::new(m);
    let mut conditions = Vec::new();
    ext.visit(p, |order, spec, vals| {
        let (kind, residual) = match spec {
            S(_) => (
                ConditionKind::Stage,
                vals.iter().map(|v| v.abs()).fold(0.0, f64::max),
            ),
            _ => (ConditionKind::Scalar, vals[0].abs()),
        };
        conditions.push(Condition {
            order,
            name: condition_name(order, spec),
            kind,
            residual,
        });
    });
    Ok(OrderReport {
        max_order: p,
        conditions,
    })
}

/// Largest `p ≤ 8` with every residual through order `p` at most `tol`, or 0.
pub fn attained_order(m: &TsrkCoefficients, tol: f64) -> usize {
    residuals_up_to(m, MAX_ORDER)
        .expect("MAX_ORDER is in range")
        .attained_order(tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::methods;

    #[test]
    fn condition_counts() {
        let counts: Vec<usize> = (1..=8).map(condition_count).collect();
        assert_eq!(counts, [1, 1, 2, 4, 5, 8, 9, 16]);
        let report = residuals_up_to(&methods::forward_euler(), 8).unwrap();
        for p in 1..=8 {
            assert_eq!(report.at_order(p).count(), counts[p - 1]);
        }
        let stage: Vec<_> = report
            .conditions
            .iter()
            .filter(|c| c.kind == ConditionKind::Stage)
            .map(|c| (c.order, c.name.as_str()))
            .collect();
        assert_eq!(stage, [(5, "tau2"), (7, "tau3")]);
        assert!(report.conditions.iter().any(|c| c.name == "b'CCCtau4"));
    }

    #[test]
    fn forward_euler_residuals() {
        let r = residuals_up_to(&methods::forward_euler(), 2).unwrap();
        assert_eq!(r.order_residual(1), 0.0);
        assert_eq!(r.order_residual(2), 0.5);
        assert_eq!(&*stage_residual(&methods::forward_euler(), 2).unwrap(), &[0.0]);
        assert_eq!(attained_order(&methods::forward_euler(), 1e-12), 1);
    }

    #[test]
    fn shu_osher_stage_residual_by_hand() {
        let t = stage_residual(&methods::essprk33(), 2).unwrap();
        assert_eq!(&*t, &[0.0, 0.5, -0.125]);
    }

    #[test]
    fn shu_osher_is_third_order() {
        let m = methods::essprk33();
        let r = residuals_up_to(&m, 4).unwrap();
        for p in 1..=3 {
            assert!(r.order_residual(p) <= 1e-15, "order {p}");
        }
        // b̃ᵀτ₃ = 1/36 − 10/144 = −1/24.
        let t3 = r.at_order(4).find(|c| c.name == "b'tau3").unwrap();
        assert!((t3.residual - 1.0 / 24.0).abs() < 1e-15);
        assert_eq!(attained_order(&m, 1e-12), 3);
    }

    #[test]
    fn other_builtins_are_third_order() {
        assert_eq!(attained_order(&methods::essprk_plus33(), 1e-12), 3);
        assert_eq!(attained_order(&methods::essprk43(), 1e-12), 3);
    }

    #[test]
    fn perturbed_weight_drops_order() {
        let m = methods::essprk33();
        let mut b = m.b().to_vec();
        b[2] += 1e-3;
        let pm = TsrkCoefficients::new(
            m.d().clone(),
            m.a_hat().clone(),
            m.a().clone(),
            m.theta().to_vec(),
            m.b_hat().to_vec(),
            b,
        )
        .unwrap();
        assert!(attained_order(&pm, 1e-12) <= 2);
    }

    #[test]
    fn embedding_does_not_change_residuals() {
        for (name, m) in methods::builtin() {
            let a = m.a().clone();
            let one = TsrkCoefficients::runge_kutta(a, m.b().to_vec()).unwrap();
            let r1 = residuals_up_to(&one, 8).unwrap();
            let r2 = residuals_up_to(&m, 8).unwrap();
            assert_eq!(r1, r2, "{name}");
        }
    }

    #[test]
    fn classical_rk4_conditions() {
        // Classical fourth-order RK: all conditions through order 4 vanish.
        let a = DenseMatrix::from_rows(&[
            [0.0, 0.0, 0.0, 0.0],
            [0.5, 0.0, 0.0, 0.0],
            [0.0, 0.5, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
        ])
        .unwrap();
        let m = TsrkCoefficients::runge_kutta(a, vec![1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0])
            .unwrap();
        assert_eq!(attained_order(&m, 1e-15), 4);
    }

    #[test]
    fn two_step_adams_bashforth() {
        // u^{n+1} = u^n + Δt (3/2 F(u^n) − 1/2 F(u^{n-1})), order 2.
        let mut d = DenseMatrix::zeros(1, 2);
        d[(0, 1)] = 1.0;
        let m = TsrkCoefficients::new(
            d,
            DenseMatrix::zeros(1, 1),
            DenseMatrix::zeros(1, 1),
            vec![0.0, 1.0],
            vec![-0.5],
            vec![1.5],
        )
        .unwrap();
        assert_eq!(attained_order(&m, 1e-15), 2);
        let r = residuals_up_to(&m, 3).unwrap();
        // b̃ᵀc² = −1/2 against (1 + θᵀl³)/3 = 1/3.
        assert!((r.order_residual(3) - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn zero_abscissa_stage_has_zero_residual() {
        // Stage 1 is always u^n: c = 0, D̃ row e_k, Ã row zero.
        for (_, m) in methods::builtin() {
            for rho in 2..=8 {
                assert_eq!(stage_residual(&m, rho).unwrap()[0], 0.0);
            }
        }
    }

    #[test]
    fn spijker_and_coefficient_views_agree() {
        for (name, m) in methods::builtin() {
            let a = Extended::new(&m);
            let b = Extended::from_spijker(&crate::tableau::to_spijker(&m));
            let (mut ra, mut rb) = (Vec::new(), Vec::new());
            a.signed_residuals(8, &mut ra);
            b.signed_residuals(8, &mut rb);
            assert_eq!(ra, rb, "{name}");
            assert_eq!(a.abscissas(), b.abscissas());
            assert!((b.final_abscissa() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn argument_checks() {
        let m = methods::forward_euler();
        assert!(stage_residual(&m, 1).is_err());
        assert!(residuals_up_to(&m, 0).is_err());
        assert!(residuals_up_to(&m, 9).is_err());
    }
}
