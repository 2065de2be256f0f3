//! Real symmetric matrices in packed upper-triangle storage, the trace inner
//! product, and a cyclic Jacobi eigensolver.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dense::Mat;
use crate::error::{Error, Result};

/// Default relative tolerance for [`is_psd`].
pub const PSD_TOL: f64 = 1e-9;

const JACOBI_MAX_SWEEPS: usize = 50;
const JACOBI_OFF_TOL: f64 = 1e-14;

/// Symmetric `n × n` matrix. The upper triangle is stored row by row:
/// `(0,0), (0,1), …, (0,n-1), (1,1), …`.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct SymMat {
    n: usize,
    data: Vec<f64>,
}

#[inline]
fn packed_index(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * (2 * n - i + 1) / 2 + (j - i)
}

pub fn packed_len(n: usize) -> usize {
    n * (n + 1) / 2
}

impl SymMat {
    pub fn zeros(n: usize) -> Self {
        SymMat {
            n,
            data: vec![0.0; packed_len(n)],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = SymMat::zeros(n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn diag(d: &[f64]) -> Self {
        let mut m = SymMat::zeros(d.len());
        for (i, v) in d.iter().enumerate() {
            m.set(i, i, *v);
        }
        m
    }

    /// Builds from full rows; the rows must be exactly symmetric.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut m = SymMat::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: row.len(),
                });
            }
            for j in i..n {
                if row[j] != rows[j][i] {
                    return Err(Error::InvalidArgument(format!(
                        "matrix is not symmetric at ({i},{j})"
                    )));
                }
                m.set(i, j, row[j]);
            }
        }
        Ok(m)
    }

    pub fn from_packed(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != packed_len(n) {
            return Err(Error::DimensionMismatch {
                expected: packed_len(n),
                found: data.len(),
            });
        }
        Ok(SymMat { n, data })
    }

    /// Symmetric part of a square dense matrix.
    pub fn from_dense(m: &Mat) -> Self {
        assert_eq!(m.rows(), m.cols());
        let n = m.rows();
        let mut s = SymMat::zeros(n);
        for i in 0..n {
            for j in i..n {
                s.set(i, j, 0.5 * (m[(i, j)] + m[(j, i)]));
            }
        }
        s
    }

    /// Inverse of [`SymMat::svec`].
    pub fn from_svec(n: usize, v: &[f64]) -> Result<Self> {
        if v.len() != packed_len(n) {
            return Err(Error::DimensionMismatch {
                expected: packed_len(n),
                found: v.len(),
            });
        }
        let mut m = SymMat::zeros(n);
        let r = std::f64::consts::SQRT_2;
        for i in 0..n {
            for j in i..n {
                let k = packed_index(n, i, j);
                m.data[k] = if i == j { v[k] } else { v[k] / r };
            }
        }
        Ok(m)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn packed(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[packed_index(self.n, i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = packed_index(self.n, i, j);
        self.data[k] = v;
    }

    /// Isometric vectorization: off-diagonal entries scaled by `√2` so that
    /// `svec(A)·svec(B) = ⟨A, B⟩`.
    pub fn svec(&self) -> Vec<f64> {
        let r = std::f64::consts::SQRT_2;
        let mut out = self.data.clone();
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                out[packed_index(self.n, i, j)] *= r;
            }
        }
        out
    }

    pub fn to_dense(&self) -> Mat {
        let mut m = Mat::zeros(self.n, self.n);
        for i in 0..self.n {
            for j in i..self.n {
                let v = self.get(i, j);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j)).collect())
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn frob_norm(&self) -> f64 {
        self.dot(self).max(0.0).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|v| *v == 0.0)
    }

    /// Trace inner product; panics on dimension mismatch (see [`inner`]).
    pub fn dot(&self, other: &SymMat) -> f64 {
        assert_eq!(self.n, other.n, "inner product dimension mismatch");
        let mut s = 0.0;
        let mut k = 0;
        for i in 0..self.n {
            s += self.data[k] * other.data[k];
            k += 1;
            for _ in (i + 1)..self.n {
                s += 2.0 * self.data[k] * other.data[k];
                k += 1;
            }
        }
        s
    }

    pub fn scale(&self, s: f64) -> SymMat {
        SymMat {
            n: self.n,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &SymMat) -> SymMat {
        self.axpy(1.0, other)
    }

    pub fn sub(&self, other: &SymMat) -> SymMat {
        self.axpy(-1.0, other)
    }

    /// `self + a·other`
    pub fn axpy(&self, a: f64, other: &SymMat) -> SymMat {
        assert_eq!(self.n, other.n);
        SymMat {
            n: self.n,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(x, y)| x + a * y)
                .collect(),
        }
    }

    pub fn neg(&self) -> SymMat {
        self.scale(-1.0)
    }

    /// `xᵀ A x`
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.n);
        let mut s = 0.0;
        for i in 0..self.n {
            s += self.get(i, i) * x[i] * x[i];
            for j in (i + 1)..self.n {
                s += 2.0 * self.get(i, j) * x[i] * x[j];
            }
        }
        s
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j) * x[j]).sum())
            .collect()
    }

    /// `Pᵀ A P` for an `n × k` matrix `P`.
    pub fn congruence(&self, p: &Mat) -> SymMat {
        assert_eq!(p.rows(), self.n);
        let ap = self.to_dense().matmul(p);
        SymMat::from_dense(&p.t_matmul(&ap))
    }

    /// Block-diagonal matrix `diag(self, other)`.
    pub fn block_diag(&self, other: &SymMat) -> SymMat {
        let n = self.n + other.n;
        let mut m = SymMat::zeros(n);
        for i in 0..self.n {
            for j in i..self.n {
                m.set(i, j, self.get(i, j));
            }
        }
        for i in 0..other.n {
            for j in i..other.n {
                m.set(self.n + i, self.n + j, other.get(i, j));
            }
        }
        m
    }
}

impl fmt::Debug for SymMat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SymMat{:?}", self.to_rows())
    }
}

/// Eigenvalues in descending order with matching orthonormal eigenvectors
/// stored as the columns of `vectors`.
#[derive(Clone, Debug)]
pub struct EigDecomp {
    pub values: Vec<f64>,
    pub vectors: Mat,
}

impl EigDecomp {
    pub fn vector(&self, k: usize) -> Vec<f64> {
        self.vectors.column(k)
    }

    /// `Σ f(λ_k) v_k v_kᵀ`
    pub fn apply(&self, f: impl Fn(f64) -> f64) -> SymMat {
        let n = self.values.len();
        let mut out = SymMat::zeros(n);
        for (k, lam) in self.values.iter().enumerate() {
            let w = f(*lam);
            if w == 0.0 {
                continue;
            }
            for i in 0..n {
                let vi = self.vectors[(i, k)] * w;
                for j in i..n {
                    let cur = out.get(i, j);
                    out.set(i, j, cur + vi * self.vectors[(j, k)]);
                }
            }
        }
        out
    }

    pub fn reconstruct(&self) -> SymMat {
        self.apply(|l| l)
    }
}

/// Trace inner product `⟨A, B⟩ = Σ_ij A_ij B_ij`.
pub fn inner(a: &SymMat, b: &SymMat) -> Result<f64> {
    if a.n != b.n {
        return Err(Error::DimensionMismatch {
            expected: a.n,
            found: b.n,
        });
    }
    Ok(a.dot(b))
}

/// Full symmetric eigendecomposition by cyclic Jacobi rotations.
pub fn eig_sym(x: &SymMat) -> Result<EigDecomp> {
    if !x.is_finite() {
        return Err(Error::NonFinite("matrix passed to eig_sym"));
    }
    let n = x.n;
    let mut a = x.to_dense();
    let mut v = Mat::identity(n);
    let norm = x.frob_norm();

    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += 2.0 * a[(i, j)] * a[(i, j)];
            }
        }
        if off.sqrt() <= JACOBI_OFF_TOL * norm || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]).then(i.cmp(&j)));
    let values = order.iter().map(|&k| a[(k, k)]).collect();
    let mut vectors = Mat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for i in 0..n {
            vectors[(i, dst)] = v[(i, src)];
        }
    }
    Ok(EigDecomp { values, vectors })
}

/// Smallest eigenvalue; `0` for the empty matrix.
pub fn lambda_min(x: &SymMat) -> Result<f64> {
    Ok(eig_sym(x)?.values.last().copied().unwrap_or(0.0))
}

pub fn lambda_max(x: &SymMat) -> Result<f64> {
    Ok(eig_sym(x)?.values.first().copied().unwrap_or(0.0))
}

/// `λ_min(X) ≥ −tol·max(1, ‖X‖_F)`
pub fn is_psd(x: &SymMat, tol: f64) -> Result<bool> {
    Ok(lambda_min(x)? >= -tol * x.frob_norm().max(1.0))
}

/// Rank-one matrix `x xᵀ`.
pub fn gram(x: &[f64]) -> SymMat {
    let n = x.len();
    let mut m = SymMat::zeros(n);
    for i in 0..n {
        for j in i..n {
            m.set(i, j, x[i] * x[j]);
        }
    }
    m
}

/// Symmetric square root of a PSD matrix (negative eigenvalues clipped).
pub fn sqrt_psd(x: &SymMat) -> Result<SymMat> {
    Ok(eig_sym(x)?.apply(|l| l.max(0.0).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(rows: &[&[f64]]) -> SymMat {
        SymMat::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn packed_roundtrip() {
        let a = m(&[&[1.0, 2.0, 3.0], &[2.0, 4.0, 5.0], &[3.0, 5.0, 6.0]]);
        assert_eq!(a.packed(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = SymMat::from_packed(3, a.packed().to_vec()).unwrap();
        assert_eq!(a, b);
        assert_eq!(SymMat::from_dense(&a.to_dense()), a);
        assert!(SymMat::from_packed(3, vec![0.0; 5]).is_err());
    }

    #[test]
    fn from_rows_rejects_asymmetric() {
        assert!(SymMat::from_rows(&[vec![1.0, 2.0], vec![3.0, 1.0]]).is_err());
    }

    #[test]
    fn inner_examples() {
        let i2 = SymMat::identity(2);
        assert_eq!(inner(&i2, &i2).unwrap(), 2.0);
        let b = m(&[
            &[-1.0, -2.0, 0.0, -1.0],
            &[-2.0, -1.0, 0.0, 0.0],
            &[0.0, 0.0, 1.0, -1.0],
            &[-1.0, 0.0, -1.0, -1.0],
        ]);
        let a = m(&[
            &[2.0, 1.0, 0.0, 0.0],
            &[1.0, 1.0, 0.0, 0.0],
            &[0.0, 0.0, -1.0, 0.0],
            &[0.0, 0.0, 0.0, -1.0],
        ]);
        let w = SymMat::diag(&[0.0, 0.0, 1.0, 1.0]);
        assert_eq!(inner(&b, &w).unwrap(), 0.0);
        assert_eq!(inner(&a, &w).unwrap(), -2.0);
        assert!(matches!(
            inner(&i2, &SymMat::identity(3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn svec_is_isometric() {
        let a = m(&[&[1.0, 2.0], &[2.0, -3.0]]);
        let b = m(&[&[0.5, -1.0], &[-1.0, 4.0]]);
        let d: f64 = a.svec().iter().zip(b.svec()).map(|(x, y)| x * y).sum();
        assert!((d - a.dot(&b)).abs() < 1e-14);
        assert_eq!(SymMat::from_svec(2, &a.svec()).unwrap().packed()[0], 1.0);
        assert!((SymMat::from_svec(2, &a.svec()).unwrap().get(0, 1) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn lambda_min_examples() {
        assert!((lambda_min(&SymMat::diag(&[1.0, 2.0])).unwrap() - 1.0).abs() < 1e-15);
        let b = m(&[&[-1.0, -2.0], &[-2.0, -1.0]]);
        assert!((lambda_min(&b).unwrap() + 3.0).abs() < 1e-14);
        assert_eq!(lambda_min(&SymMat::zeros(3)).unwrap(), 0.0);
    }

    #[test]
    fn is_psd_examples() {
        assert!(is_psd(&m(&[&[2.0, 1.0], &[1.0, 1.0]]), PSD_TOL).unwrap());
        assert!(!is_psd(&m(&[&[-1.0, -2.0], &[-2.0, -1.0]]), PSD_TOL).unwrap());
        assert!(is_psd(&SymMat::zeros(2), PSD_TOL).unwrap());
    }

    #[test]
    fn eig_rejects_non_finite() {
        let a = SymMat::diag(&[1.0, f64::NAN]);
        assert!(matches!(eig_sym(&a), Err(Error::NonFinite(_))));
    }

    #[test]
    fn eig_values_descending_and_sqrt() {
        let a = m(&[&[2.0, 1.0], &[1.0, 2.0]]);
        let e = eig_sym(&a).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-14);
        assert!((e.values[1] - 1.0).abs() < 1e-14);
        let r = sqrt_psd(&a).unwrap();
        let back = SymMat::from_dense(&r.to_dense().matmul(&r.to_dense()));
        assert!(back.sub(&a).frob_norm() < 1e-13);
    }

    fn sym_strategy() -> impl Strategy<Value = SymMat> {
        (1usize..=8).prop_flat_map(|n| {
            prop::collection::vec(-10.0f64..10.0, packed_len(n))
                .prop_map(move |d| SymMat::from_packed(n, d).unwrap())
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn eig_reconstructs(a in sym_strategy()) {
            let e = eig_sym(&a).unwrap();
            let scale = a.frob_norm().max(1.0);
            prop_assert!(e.reconstruct().sub(&a).frob_norm() <= 1e-10 * scale);
            let vtv = e.vectors.t_matmul(&e.vectors);
            prop_assert!(vtv.sub(&Mat::identity(a.n())).frob_norm() <= 1e-10);
            for w in e.values.windows(2) {
                prop_assert!(w[0] >= w[1]);
            }
        }

        #[test]
        fn gram_is_rank_one(x in prop::collection::vec(-5.0f64..5.0, 2..7)) {
            let nx: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assume!(nx > 1e-3);
            let g = gram(&x);
            let e = eig_sym(&g).unwrap();
            prop_assert!(e.values[1].abs() / e.values[0] <= 1e-12);
            let b = SymMat::from_packed(x.len(), (0..packed_len(x.len())).map(|k| (k as f64).sin()).collect()).unwrap();
            let lhs = inner(&g, &b).unwrap();
            let rhs = b.quad_form(&x);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(rhs.abs()).max(1.0));
        }

        #[test]
        fn psd_test_matches_definition(a in sym_strategy()) {
            let lmin = lambda_min(&a).unwrap();
            let expect = lmin >= -PSD_TOL * a.frob_norm().max(1.0);
            prop_assert_eq!(is_psd(&a, PSD_TOL).unwrap(), expect);
        }
    }
}
