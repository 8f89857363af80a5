//! Dense complex matrices and eigensolvers for hermitian and normal input.
//!
//! The normal eigenproblem is solved in two stages: cyclic Jacobi on the
//! hermitian part, then Jacobi again on the skew part restricted to each
//! eigenvalue cluster of the first stage. Both stages only apply unitary
//! plane rotations, so the accumulated transform stays unitary to machine
//! precision without any re-orthogonalization.

use num_complex::Complex64;
use serde::de::Error as SerdeError;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::common::{is_finite_c, lex_cmp};
use crate::{Error, Result};

/// Hard limit on Jacobi sweeps; quadratic convergence makes anything near
/// this bound a sign of malformed input rather than slow progress.
pub const MAX_JACOBI_SWEEPS: usize = 30;

/// Off-diagonal norm (relative to `max(1, |A|_F)`) at which the cyclic
/// Jacobi iteration stops.
pub const JACOBI_OFF_TOL: f64 = 1e-14;

/// Relative eigenvalue-cluster width in the second diagonalization stage.
pub const CLUSTER_FACTOR: f64 = 1e-7;

/// Column-orthonormality bound certified by [`SpectralDecomposition`].
pub const UNITARY_TOL: f64 = 1e-10;

/// Entrywise reconstruction bound (relative to `max(1, |T|_max)`) certified
/// by [`SpectralDecomposition`].
pub const RECONSTRUCTION_TOL: f64 = 1e-8;

/// Dense row-major complex matrix with all entries finite.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{}x{} matrix needs {} entries, got {}",
                rows,
                cols,
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|z| !is_finite_c(*z)) {
            return Err(Error::NonFinite(pos));
        }
        Ok(ComplexMatrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        ComplexMatrix {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        ComplexMatrix { rows, cols, data }
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

    pub fn at(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn adjoint(&self) -> Self {
        ComplexMatrix::from_fn(self.cols, self.rows, |i, j| self.at(j, i).conj())
    }

    pub fn mul(&self, other: &ComplexMatrix) -> Result<ComplexMatrix> {
        if self.cols != other.rows {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = ComplexMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.at(i, k);
                if a.norm_sqr() == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    let v = out.at(i, j) + a * other.at(k, j);
                    out.set(i, j, v);
                }
            }
        }
        Ok(out)
    }

    pub fn add(&self, other: &ComplexMatrix) -> Result<ComplexMatrix> {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ComplexMatrix) -> Result<ComplexMatrix> {
        self.zip(other, |a, b| a - b)
    }

    fn zip(
        &self,
        other: &ComplexMatrix,
        f: impl Fn(Complex64, Complex64) -> Complex64,
    ) -> Result<ComplexMatrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Dimension(format!(
                "shape mismatch: {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(a, b)| f(*a, *b))
                .collect(),
        })
    }

    pub fn scale(&self, s: Complex64) -> ComplexMatrix {
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn frob_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Applies the matrix to a coordinate vector.
    pub fn apply(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        if v.len() != self.cols {
            return Err(Error::Dimension(format!(
                "vector of length {} against {} columns",
                v.len(),
                self.cols
            )));
        }
        let mut out = vec![Complex64::new(0.0, 0.0); self.rows];
        for i in 0..self.rows {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 0..self.cols {
                acc += self.at(i, j) * v[j];
            }
            out[i] = acc;
        }
        Ok(out)
    }
}

#[derive(Serialize, Deserialize)]
struct MatrixRepr {
    rows: usize,
    cols: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl Serialize for ComplexMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixRepr {
            rows: self.rows,
            cols: self.cols,
            re: self.data.iter().map(|z| z.re).collect(),
            im: self.data.iter().map(|z| z.im).collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ComplexMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = MatrixRepr::deserialize(deserializer)?;
        if repr.re.len() != repr.rows * repr.cols || repr.im.len() != repr.rows * repr.cols {
            return Err(D::Error::custom(format!(
                "matrix arrays must have length rows*cols = {}, got re: {}, im: {}",
                repr.rows * repr.cols,
                repr.re.len(),
                repr.im.len()
            )));
        }
        let data: Vec<Complex64> = repr
            .re
            .iter()
            .zip(repr.im.iter())
            .map(|(r, i)| Complex64::new(*r, *i))
            .collect();
        ComplexMatrix::new(repr.rows, repr.cols, data).map_err(D::Error::custom)
    }
}

/// Eigenvalues in lexicographic (re, im) order together with the unitary of
/// eigenvectors, column `j` belonging to `eigenvalues[j]`.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<Complex64>,
    pub unitary: ComplexMatrix,
    /// Width used when grouping first-stage eigenvalues, recorded so the
    /// caller can reproduce the block structure.
    pub cluster_tolerance: f64,
}

impl SpectralDecomposition {
    /// Checks the certified bounds against the original matrix.
    pub fn verify(&self, t: &ComplexMatrix) -> Result<()> {
        let n = t.rows();
        let u = &self.unitary;
        let gram = u.adjoint().mul(u)?;
        let mut ortho_dev: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let expect = if i == j { 1.0 } else { 0.0 };
                let d = (gram.at(i, j) - Complex64::new(expect, 0.0)).norm();
                ortho_dev = ortho_dev.max(d);
            }
        }
        if ortho_dev > UNITARY_TOL {
            return Err(Error::Accuracy {
                what: "unitarity deviation",
                value: ortho_dev,
                bound: UNITARY_TOL,
            });
        }
        let recon = self.reconstruct()?;
        let dev = recon.sub(t)?.max_norm();
        let bound = RECONSTRUCTION_TOL * t.max_norm().max(1.0);
        if dev > bound {
            return Err(Error::Accuracy {
                what: "reconstruction deviation",
                value: dev,
                bound,
            });
        }
        Ok(())
    }

    /// `U diag(lambda) U*`.
    pub fn reconstruct(&self) -> Result<ComplexMatrix> {
        let n = self.eigenvalues.len();
        let u = &self.unitary;
        let scaled = ComplexMatrix::from_fn(n, n, |i, j| u.at(i, j) * self.eigenvalues[j]);
        scaled.mul(&u.adjoint())
    }
}

/// Frobenius norm of `T T* - T* T`; zero exactly when `T` is normal.
pub fn normality_residual(t: &ComplexMatrix) -> Result<f64> {
    if !t.is_square() {
        return Err(Error::Dimension(format!(
            "normality is defined for square matrices, got {}x{}",
            t.rows(),
            t.cols()
        )));
    }
    let ta = t.adjoint();
    let lhs = t.mul(&ta)?;
    let rhs = ta.mul(t)?;
    Ok(lhs.sub(&rhs)?.frob_norm())
}

/// Cyclic Jacobi for hermitian matrices. Returns ascending real eigenvalues
/// and the unitary of eigenvectors. `herm_tol` bounds the accepted
/// asymmetry `max |A[i][j] - conj(A[j][i])|`; the solve itself runs on the
/// hermitian average `(A + A*)/2`.
pub fn hermitian_eigen(a: &ComplexMatrix, herm_tol: f64) -> Result<(Vec<f64>, ComplexMatrix)> {
    if !a.is_square() {
        return Err(Error::Dimension(format!(
            "eigenproblem needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let n = a.rows();
    let mut dev: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            dev = dev.max((a.at(i, j) - a.at(j, i).conj()).norm());
        }
    }
    if dev > herm_tol {
        return Err(Error::NotHermitian {
            deviation: dev,
            tol: herm_tol,
        });
    }
    let mut work = ComplexMatrix::from_fn(n, n, |i, j| (a.at(i, j) + a.at(j, i).conj()) * 0.5);
    let mut u = ComplexMatrix::identity(n);
    jacobi_in_place(&mut work, &mut u)?;

    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| work.at(i, i).re).collect();
    order.sort_by(|&i, &j| diag[i].partial_cmp(&diag[j]).unwrap());
    let eigenvalues: Vec<f64> = order.iter().map(|&i| diag[i]).collect();
    let unitary = ComplexMatrix::from_fn(n, n, |i, j| u.at(i, order[j]));
    Ok((eigenvalues, unitary))
}

fn jacobi_in_place(a: &mut ComplexMatrix, u: &mut ComplexMatrix) -> Result<()> {
    let n = a.rows();
    if n <= 1 {
        return Ok(());
    }
    let off_tol = JACOBI_OFF_TOL * a.frob_norm().max(1.0);
    for _sweep in 0..MAX_JACOBI_SWEEPS {
        if off_norm(a) <= off_tol {
            return Ok(());
        }
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(a, u, p, q);
            }
        }
    }
    let off = off_norm(a);
    if off <= off_tol {
        Ok(())
    } else {
        Err(Error::NoConvergence {
            sweeps: MAX_JACOBI_SWEEPS,
            off,
        })
    }
}

fn off_norm(a: &ComplexMatrix) -> f64 {
    let n = a.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a.at(i, j).norm_sqr();
            }
        }
    }
    s.sqrt()
}

/// One plane rotation annihilating `a[p][q]`. Writes `a <- V* a V` and
/// `u <- u V` where `V` is the identity outside the `(p, q)` plane.
fn rotate(a: &mut ComplexMatrix, u: &mut ComplexMatrix, p: usize, q: usize) {
    let apq = a.at(p, q);
    let r = apq.norm();
    if r <= f64::MIN_POSITIVE {
        a.set(p, q, Complex64::new(0.0, 0.0));
        a.set(q, p, Complex64::new(0.0, 0.0));
        return;
    }
    let n = a.rows();
    let d = apq / r;
    let app = a.at(p, p).re;
    let aqq = a.at(q, q).re;
    let tau = (aqq - app) / (2.0 * r);
    let t = if tau >= 0.0 {
        1.0 / (tau + (1.0 + tau * tau).sqrt())
    } else {
        1.0 / (tau - (1.0 + tau * tau).sqrt())
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;
    let dc = d.conj();

    for k in 0..n {
        if k == p || k == q {
            continue;
        }
        let akp = a.at(k, p);
        let akq = a.at(k, q);
        let new_p = akp * c - akq * (dc * s);
        let new_q = akp * s + akq * (dc * c);
        a.set(k, p, new_p);
        a.set(k, q, new_q);
        a.set(p, k, new_p.conj());
        a.set(q, k, new_q.conj());
    }
    let lp = app * c * c - 2.0 * r * c * s + aqq * s * s;
    let lq = app * s * s + 2.0 * r * c * s + aqq * c * c;
    a.set(p, p, Complex64::new(lp, 0.0));
    a.set(q, q, Complex64::new(lq, 0.0));
    a.set(p, q, Complex64::new(0.0, 0.0));
    a.set(q, p, Complex64::new(0.0, 0.0));

    for k in 0..n {
        let ukp = u.at(k, p);
        let ukq = u.at(k, q);
        u.set(k, p, ukp * c - ukq * (dc * s));
        u.set(k, q, ukp * s + ukq * (dc * c));
    }
}

/// Diagonalizes a normal matrix.
///
/// The hermitian part `(T + T*)/2` and skew part `(T - T*)/(2i)` commute up
/// to the normality residual, so after diagonalizing the first, the second
/// is block-diagonal over clusters of nearby first-stage eigenvalues and is
/// diagonalized cluster by cluster. Eigenvalues are the Rayleigh quotients
/// of the final columns, sorted lexicographically by (re, im).
///
/// `tol` gates the normality precondition: the residual must stay below
/// `tol * max(1, |T|_F)`.
pub fn decompose_normal(t: &ComplexMatrix, tol: f64) -> Result<SpectralDecomposition> {
    if !t.is_square() {
        return Err(Error::Dimension(format!(
            "decomposition needs a square matrix, got {}x{}",
            t.rows(),
            t.cols()
        )));
    }
    let n = t.rows();
    let frob = t.frob_norm();
    let residual = normality_residual(t)?;
    let residual_bound = tol * frob.max(1.0);
    if residual > residual_bound {
        return Err(Error::NotNormal {
            residual,
            tol: residual_bound,
        });
    }
    if n == 0 {
        return Ok(SpectralDecomposition {
            eigenvalues: vec![],
            unitary: ComplexMatrix::zeros(0, 0),
            cluster_tolerance: CLUSTER_FACTOR * frob.max(1.0),
        });
    }

    let ta = t.adjoint();
    let herm = t.add(&ta)?.scale(Complex64::new(0.5, 0.0));
    let skew = t.sub(&ta)?.scale(Complex64::new(0.0, -0.5));
    let herm_tol = 1e-12 * frob.max(1.0);
    let (avals, ua) = hermitian_eigen(&herm, herm_tol)?;

    let cluster_tolerance = CLUSTER_FACTOR * frob.max(1.0);
    let mut unitary = ua.clone();
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && avals[end] - avals[end - 1] <= cluster_tolerance {
            end += 1;
        }
        let width = end - start;
        if width > 1 {
            // Restriction of the skew part to the cluster's eigenspace.
            let w = ComplexMatrix::from_fn(n, width, |i, j| unitary.at(i, start + j));
            let m = w.adjoint().mul(&skew.mul(&w)?)?;
            let sub_tol = 1e-9 * skew.frob_norm().max(1.0);
            let (_bvals, v) = hermitian_eigen(&m, sub_tol)?;
            let rotated = w.mul(&v)?;
            for i in 0..n {
                for j in 0..width {
                    unitary.set(i, start + j, rotated.at(i, j));
                }
            }
        }
        start = end;
    }

    let mut eigenvalues = Vec::with_capacity(n);
    for j in 0..n {
        let col: Vec<Complex64> = (0..n).map(|i| unitary.at(i, j)).collect();
        let tu = t.apply(&col)?;
        let mut lambda = Complex64::new(0.0, 0.0);
        for i in 0..n {
            lambda += col[i].conj() * tu[i];
        }
        eigenvalues.push(lambda);
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| lex_cmp(eigenvalues[i], eigenvalues[j]));
    let eigenvalues: Vec<Complex64> = order.iter().map(|&i| eigenvalues[i]).collect();
    let unitary = ComplexMatrix::from_fn(n, n, |i, j| unitary.at(i, order[j]));

    let dec = SpectralDecomposition {
        eigenvalues,
        unitary,
        cluster_tolerance,
    };
    dec.verify(t)?;
    Ok(dec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testkit;
    use rand::Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn shift_matrix_normality_residual_is_sqrt_two() {
        // T = [[0,1],[0,0]]: TT* - T*T = diag(1, -1), Frobenius norm sqrt(2).
        let t = ComplexMatrix::new(2, 2, vec![c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)])
            .unwrap();
        let r = normality_residual(&t).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn known_real_symmetric_eigenvalues() {
        let a = ComplexMatrix::new(2, 2, vec![c(2.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(2.0, 0.0)])
            .unwrap();
        let (vals, u) = hermitian_eigen(&a, 1e-12).unwrap();
        assert!((vals[0] - 1.0).abs() < 1e-12);
        assert!((vals[1] - 3.0).abs() < 1e-12);
        let gram = u.adjoint().mul(&u).unwrap();
        assert!((gram.at(0, 0).re - 1.0).abs() < 1e-12);
        assert!(gram.at(0, 1).norm() < 1e-12);
    }

    #[test]
    fn known_complex_hermitian_eigenvalues() {
        // [[0, i], [-i, 0]] has eigenvalues -1 and 1.
        let a = ComplexMatrix::new(2, 2, vec![c(0.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(0.0, 0.0)])
            .unwrap();
        let (vals, _) = hermitian_eigen(&a, 1e-12).unwrap();
        assert!((vals[0] + 1.0).abs() < 1e-12);
        assert!((vals[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn jacobi_diagonalizes_random_hermitian() {
        let mut rng = testkit::rng(7);
        for _ in 0..20 {
            let n = rng.gen_range(1..9);
            let a = testkit::random_hermitian(n, &mut rng);
            let (vals, u) = hermitian_eigen(&a, 1e-10).unwrap();
            let lam = ComplexMatrix::from_fn(n, n, |i, j| {
                if i == j {
                    c(vals[i], 0.0)
                } else {
                    c(0.0, 0.0)
                }
            });
            let recon = u.mul(&lam).unwrap().mul(&u.adjoint()).unwrap();
            assert!(recon.sub(&a).unwrap().max_norm() < 1e-10 * a.max_norm().max(1.0));
            for w in vals.windows(2) {
                assert!(w[0] <= w[1]);
            }
        }
    }

    #[test]
    fn decompose_recovers_conjugated_diagonal() {
        let mut rng = testkit::rng(11);
        for _ in 0..20 {
            let n = rng.gen_range(1..9);
            let (t, mut lambdas) = testkit::random_normal_matrix(n, &mut rng);
            let dec = decompose_normal(&t, 1e-8).unwrap();
            dec.verify(&t).unwrap();
            lambdas.sort_by(|a, b| lex_cmp(*a, *b));
            for (got, want) in dec.eigenvalues.iter().zip(lambdas.iter()) {
                assert!((got - want).norm() < 1e-7, "{got} vs {want}");
            }
        }
    }

    #[test]
    fn decompose_rejects_non_normal() {
        let t = ComplexMatrix::new(2, 2, vec![c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)])
            .unwrap();
        match decompose_normal(&t, 1e-8) {
            Err(Error::NotNormal { residual, .. }) => {
                assert!((residual - 2f64.sqrt()).abs() < 1e-12)
            }
            other => panic!("expected NotNormal, got {other:?}"),
        }
    }

    #[test]
    fn eigenvalues_sorted_lexicographically() {
        let t = ComplexMatrix::new(
            3,
            3,
            vec![
                c(0.5, 0.5),
                c(0.0, 0.0),
                c(0.0, 0.0),
                c(0.0, 0.0),
                c(-0.5, 0.0),
                c(0.0, 0.0),
                c(0.0, 0.0),
                c(0.0, 0.0),
                c(0.5, -0.5),
            ],
        )
        .unwrap();
        let dec = decompose_normal(&t, 1e-8).unwrap();
        assert!((dec.eigenvalues[0] - c(-0.5, 0.0)).norm() < 1e-12);
        assert!((dec.eigenvalues[1] - c(0.5, -0.5)).norm() < 1e-12);
        assert!((dec.eigenvalues[2] - c(0.5, 0.5)).norm() < 1e-12);
    }

    #[test]
    fn matrix_json_round_trip() {
        let t = ComplexMatrix::new(1, 2, vec![c(0.25, -1.0), c(0.0, 3.5)]).unwrap();
        let s = serde_json::to_string(&t).unwrap();
        let back: ComplexMatrix = serde_json::from_str(&s).unwrap();
        assert_eq!(t, back);
    }

    #[test]
    fn matrix_json_rejects_bad_lengths() {
        let s = r#"{"rows":2,"cols":2,"re":[1.0,2.0],"im":[0.0,0.0]}"#;
        assert!(serde_json::from_str::<ComplexMatrix>(s).is_err());
    }
}
