//! Dense row-major real matrices: products, LU solves and the matrix
//! exponential.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Deref, Index, IndexMut};

use crate::math;
use crate::{Error, Result};

/// Dense real matrix stored in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// A vector of finite reals.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        check_finite(&entries)?;
        Ok(Self(entries))
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

impl Deref for Vector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|x| !x.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

impl DenseMatrix {
    /// Build a matrix from row-major entries, rejecting non-finite values.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                op: "DenseMatrix::from_vec",
                expected: rows * cols,
                found: data.len(),
            });
        }
        check_finite(&data)?;
        Ok(Self { rows, cols, data })
    }

    /// Build a matrix from a slice of equally sized rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            let row = row.as_ref();
            if row.len() != cols {
                return Err(Error::DimensionMismatch {
                    op: "DenseMatrix::from_rows",
                    expected: cols,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::from_vec(rows.len(), cols, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn diag(entries: &[f64]) -> Self {
        let n = entries.len();
        let mut m = Self::zeros(n, n);
        for (i, &d) in entries.iter().enumerate() {
            m.data[i * n + i] = d;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * factor).collect(),
        }
    }

    /// `self + factor * other`, dimensions assumed equal.
    fn axpy(&self, factor: f64, other: &Self) -> Self {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + factor * b)
                .collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.same_shape(other, "add")?;
        Ok(self.axpy(1.0, other))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.same_shape(other, "sub")?;
        Ok(self.axpy(-1.0, other))
    }

    fn same_shape(&self, other: &Self, op: &'static str) -> Result<()> {
        if self.rows != other.rows {
            return Err(Error::DimensionMismatch {
                op,
                expected: self.rows,
                found: other.rows,
            });
        }
        if self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                op,
                expected: self.cols,
                found: other.cols,
            });
        }
        Ok(())
    }

    /// Infinity norm (maximum absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// One norm (maximum absolute column sum).
    pub fn norm_one(&self) -> f64 {
        let mut sums = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (s, x) in sums.iter_mut().zip(self.row(i)) {
                *s += x.abs();
            }
        }
        sums.into_iter().fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Smallest entry and its `(row, col)` index, `None` for an empty matrix.
    pub fn min_entry(&self) -> Option<(f64, (usize, usize))> {
        self.data
            .iter()
            .enumerate()
            .fold(None, |best: Option<(f64, usize)>, (k, &x)| match best {
                Some((b, _)) if b <= x => best,
                _ => Some((x, k)),
            })
            .map(|(x, k)| (x, (k / self.cols, k % self.cols)))
    }

    /// Matrix-vector product.
    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::DimensionMismatch {
                op: "mul_vec",
                expected: self.cols,
                found: v.len(),
            });
        }
        let mut out = vec![0.0; self.rows];
        self.mul_vec_into(v, &mut out);
        Ok(out)
    }

    /// Matrix-vector product into a preallocated buffer; lengths must match.
    pub fn mul_vec_into(&self, v: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.row(i).iter().zip(v).map(|(a, b)| a * b).sum();
        }
    }

    /// Row-vector times matrix: `vᵀ self`.
    pub fn vec_mul(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.rows {
            return Err(Error::DimensionMismatch {
                op: "vec_mul",
                expected: self.rows,
                found: v.len(),
            });
        }
        let mut out = vec![0.0; self.cols];
        for (i, &vi) in v.iter().enumerate() {
            if vi != 0.0 {
                for (o, a) in out.iter_mut().zip(self.row(i)) {
                    *o += vi * a;
                }
            }
        }
        Ok(out)
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// Dense product `a · b`.
pub fn mat_mul(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.cols != b.rows {
        return Err(Error::DimensionMismatch {
            op: "mat_mul",
            expected: a.cols,
            found: b.rows,
        });
    }
    let mut c = DenseMatrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let out = &mut c.data[i * b.cols..(i + 1) * b.cols];
        for (k, &aik) in a.row(i).iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            for (o, bkj) in out.iter_mut().zip(b.row(k)) {
                *o += aik * bkj;
            }
        }
    }
    Ok(c)
}

/// LU factorization with partial pivoting, kept for repeated solves.
#[derive(Debug, Clone)]
pub struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

const SINGULAR_RELATIVE_PIVOT: f64 = 1e-14;

impl Lu {
    pub fn new(a: &DenseMatrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::NotSquare {
                op: "lu",
                rows: a.rows,
                cols: a.cols,
            });
        }
        let n = a.rows;
        let scale = a.max_abs();
        let mut lu = a.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for col in 0..n {
            let (piv_row, piv_abs) = (col..n)
                .map(|r| (r, lu[r * n + col].abs()))
                .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if scale == 0.0 || piv_abs < SINGULAR_RELATIVE_PIVOT * scale {
                return Err(Error::Singular {
                    column: col,
                    pivot: piv_abs,
                });
            }
            if piv_row != col {
                for j in 0..n {
                    lu.swap(col * n + j, piv_row * n + j);
                }
                perm.swap(col, piv_row);
            }
            let pivot = lu[col * n + col];
            for r in col + 1..n {
                let factor = lu[r * n + col] / pivot;
                if factor == 0.0 {
                    continue;
                }
                lu[r * n + col] = factor;
                for j in col + 1..n {
                    lu[r * n + j] -= factor * lu[col * n + j];
                }
            }
        }
        Ok(Self { n, lu, perm })
    }

    /// Solve `A x = b` in place for a single right-hand side.
    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let s: f64 = (0..i).map(|k| self.lu[i * n + k] * x[k]).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|k| self.lu[i * n + k] * x[k]).sum();
            x[i] = (x[i] - s) / self.lu[i * n + i];
        }
        x
    }

    pub fn solve(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        if b.rows != self.n {
            return Err(Error::DimensionMismatch {
                op: "solve",
                expected: self.n,
                found: b.rows,
            });
        }
        let n = self.n;
        let m = b.cols;
        let mut x = DenseMatrix::zeros(n, m);
        for (i, &p) in self.perm.iter().enumerate() {
            x.row_mut(i).copy_from_slice(b.row(p));
        }
        // Forward substitution with unit lower factor.
        for i in 0..n {
            for k in 0..i {
                let l = self.lu[i * n + k];
                if l != 0.0 {
                    let (head, tail) = x.data.split_at_mut(i * m);
                    let src = &head[k * m..(k + 1) * m];
                    for (t, s) in tail[..m].iter_mut().zip(src) {
                        *t -= l * s;
                    }
                }
            }
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                let u = self.lu[i * n + k];
                if u != 0.0 {
                    let (head, tail) = x.data.split_at_mut(k * m);
                    let dst = &mut head[i * m..(i + 1) * m];
                    for (d, s) in dst.iter_mut().zip(&tail[..m]) {
                        *d -= u * s;
                    }
                }
            }
            let d = self.lu[i * n + i];
            for v in x.row_mut(i) {
                *v /= d;
            }
        }
        Ok(x)
    }
}

/// Solve `a X = b` by LU with partial pivoting.
pub fn solve(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    Lu::new(a)?.solve(b)
}

/// Padé(13) numerator/denominator coefficients.
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// Scaled one-norm bound for the degree-13 approximant.
const THETA13: f64 = 5.371920351148152;

/// Matrix exponential by scaling and squaring with a degree-13 Padé
/// approximant.
pub fn expm(m: &DenseMatrix) -> Result<DenseMatrix> {
    if !m.is_square() {
        return Err(Error::NotSquare {
            op: "expm",
            rows: m.rows,
            cols: m.cols,
        });
    }
    let n = m.rows;
    if n == 0 {
        return Ok(DenseMatrix::zeros(0, 0));
    }
    let norm = m.norm_one();
    if norm == 0.0 {
        return Ok(DenseMatrix::identity(n));
    }
    let squarings = if norm > THETA13 {
        math::ceil(math::log2(norm / THETA13)).max(0.0) as u32
    } else {
        0
    };
    let a = m.scaled(1.0 / math::pow(2.0, squarings as f64));
    let eye = DenseMatrix::identity(n);
    let b = &PADE13;

    let a2 = mat_mul(&a, &a)?;
    let a4 = mat_mul(&a2, &a2)?;
    let a6 = mat_mul(&a2, &a4)?;

    let inner_u = a6
        .scaled(b[13])
        .axpy(b[11], &a4)
        .axpy(b[9], &a2);
    let u_poly = mat_mul(&a6, &inner_u)?
        .axpy(b[7], &a6)
        .axpy(b[5], &a4)
        .axpy(b[3], &a2)
        .axpy(b[1], &eye);
    let u = mat_mul(&a, &u_poly)?;

    let inner_v = a6
        .scaled(b[12])
        .axpy(b[10], &a4)
        .axpy(b[8], &a2);
    let v = mat_mul(&a6, &inner_v)?
        .axpy(b[6], &a6)
        .axpy(b[4], &a4)
        .axpy(b[2], &a2)
        .axpy(b[0], &eye);

    let numer = v.axpy(1.0, &u);
    let denom = v.axpy(-1.0, &u);
    let mut r = solve(&denom, &numer)?;
    for _ in 0..squarings {
        r = mat_mul(&r, &r)?;
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::Prng;

    fn triple_loop(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
        let mut c = DenseMatrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a[(i, k)] * b[(k, j)];
                }
                c[(i, j)] = s;
            }
        }
        c
    }

    fn taylor_expm(m: &DenseMatrix, terms: usize) -> DenseMatrix {
        let n = m.rows();
        let mut sum = DenseMatrix::identity(n);
        let mut term = DenseMatrix::identity(n);
        for k in 1..terms {
            term = triple_loop(&term, m).scaled(1.0 / k as f64);
            sum = sum.add(&term).unwrap();
        }
        sum
    }

    fn max_diff(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
        a.sub(b).unwrap().max_abs()
    }

    #[test]
    fn identity_and_annihilator() {
        let mut rng = Prng::new(1);
        let m = rng.matrix(3, 3, 1.0);
        assert_eq!(mat_mul(&DenseMatrix::identity(3), &m).unwrap(), m);
        let z = mat_mul(&m, &DenseMatrix::zeros(3, 3)).unwrap();
        assert_eq!(z.max_abs(), 0.0);
    }

    #[test]
    fn product_matches_triple_loop() {
        let mut rng = Prng::new(7);
        for _ in 0..20 {
            let a = rng.matrix(3, 3, 2.0);
            let b = rng.matrix(3, 3, 2.0);
            let fast = mat_mul(&a, &b).unwrap();
            let slow = triple_loop(&a, &b);
            for (x, y) in fast.as_slice().iter().zip(slow.as_slice()) {
                assert!((x - y).abs() <= 1e-13 * y.abs().max(1e-300) + 1e-15);
            }
        }
    }

    #[test]
    fn mat_mul_dimension_error() {
        let a = DenseMatrix::zeros(2, 3);
        assert!(matches!(
            mat_mul(&a, &a),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn from_vec_rejects_non_finite() {
        assert!(matches!(
            DenseMatrix::from_vec(1, 2, alloc::vec![1.0, f64::NAN]),
            Err(Error::NonFinite { index: 1 })
        ));
        assert!(Vector::new(alloc::vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn solve_trivial_cases() {
        let b = DenseMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        assert_eq!(solve(&DenseMatrix::identity(2), &b).unwrap(), b);
        let x = solve(&DenseMatrix::diag(&[2.0, 4.0]), &DenseMatrix::identity(2)).unwrap();
        assert_eq!(x, DenseMatrix::diag(&[0.5, 0.25]));
    }

    #[test]
    fn solve_residual_well_conditioned() {
        let mut rng = Prng::new(11);
        let mut a = rng.matrix(5, 5, 1.0);
        for i in 0..5 {
            a[(i, i)] += 5.0;
        }
        let b = rng.matrix(5, 3, 1.0);
        let x = solve(&a, &b).unwrap();
        let r = mat_mul(&a, &x).unwrap().sub(&b).unwrap();
        assert!(r.norm_inf() <= 1e-12);
    }

    #[test]
    fn solve_singular() {
        let a = DenseMatrix::from_rows(&[[1.0, 2.0], [2.0, 4.0]]).unwrap();
        assert!(matches!(
            solve(&a, &DenseMatrix::identity(2)),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn expm_closed_forms() {
        assert_eq!(expm(&DenseMatrix::zeros(3, 3)).unwrap(), DenseMatrix::identity(3));
        let e = expm(&DenseMatrix::diag(&[0.7, -2.5])).unwrap();
        assert!((e[(0, 0)] - math::exp(0.7)).abs() < 1e-14);
        assert!((e[(1, 1)] - math::exp(-2.5)).abs() < 1e-15);
        assert!(e[(0, 1)].abs() < 1e-16);
        let t = 0.3;
        let rot = DenseMatrix::from_rows(&[[0.0, t], [-t, 0.0]]).unwrap();
        let e = expm(&rot).unwrap();
        let (s, c) = (libm::sin(t), libm::cos(t));
        let want = DenseMatrix::from_rows(&[[c, s], [-s, c]]).unwrap();
        assert!(max_diff(&e, &want) < 1e-15);
    }

    #[test]
    fn expm_matches_taylor_series() {
        let mut rng = Prng::new(3);
        for _ in 0..10 {
            let m = rng.matrix(4, 4, 1.0);
            let m = m.scaled(1.0 / m.norm_inf());
            let got = expm(&m).unwrap();
            let want = taylor_expm(&m, 30);
            assert!(max_diff(&got, &want) <= 1e-12);
        }
    }

    #[test]
    fn expm_rejects_non_square() {
        assert!(matches!(
            expm(&DenseMatrix::zeros(2, 3)),
            Err(Error::NotSquare { .. })
        ));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn random_l(seed: u64, n: usize) -> DenseMatrix {
            let mut rng = Prng::new(seed);
            let m = rng.matrix(n, n, 1.0);
            let norm = m.norm_inf();
            m.scaled(10.0 * rng.uniform() / norm)
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn semigroup(seed in any::<u64>(), t1 in 0.0f64..1.0, t2 in 0.0f64..1.0) {
                let l = random_l(seed, 5);
                let whole = expm(&l.scaled(t1 + t2)).unwrap();
                let parts = mat_mul(&expm(&l.scaled(t1)).unwrap(), &expm(&l.scaled(t2)).unwrap()).unwrap();
                prop_assert!(max_diff(&whole, &parts) <= 1e-10 * whole.norm_inf());
            }

            #[test]
            fn inverse(seed in any::<u64>()) {
                let l = random_l(seed, 5);
                let prod = mat_mul(&expm(&l.scaled(-1.0)).unwrap(), &expm(&l).unwrap()).unwrap();
                prop_assert!(max_diff(&prod, &DenseMatrix::identity(5)) <= 1e-10);
            }

            #[test]
            fn solve_round_trip(seed in any::<u64>()) {
                let mut rng = Prng::new(seed);
                let mut a = rng.matrix(6, 6, 1.0);
                for i in 0..6 { a[(i, i)] += 3.0; }
                let b = rng.matrix(6, 2, 1.0);
                let x = solve(&a, &b).unwrap();
                let back = mat_mul(&a, &x).unwrap();
                prop_assert!(max_diff(&back, &b) <= 1e-11);
            }
        }
    }
}
