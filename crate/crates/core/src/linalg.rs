//! Dense complex and real linear algebra for the small operators used throughout
//! the crate (qubit and two-qubit states, SDP blocks).
//!
//! Hermitian eigenproblems are solved by cyclic Jacobi on the real-symmetric
//! embedding `[[Re A, -Im A], [Im A, Re A]]`, the same embedding the SDP solver
//! works in. Tensor order is always Alice ⊗ Bob.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;
use thiserror::Error;

pub type C64 = Complex64;

/// Largest matrix dimension accepted by [`tensor`].
pub const MAX_DIM: usize = 64;

/// Element-wise tolerance for the Hermitian flag.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Smallest eigenvalue tolerated for a density matrix.
pub const PSD_TOL: f64 = -1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("dimension {0} exceeds the supported maximum {MAX_DIM}")]
    DimensionTooLarge(usize),
    #[error("matrix is not Hermitian (max |A - A†| = {0:e})")]
    NotHermitian(f64),
    #[error("not a density matrix: {0}")]
    NotADensityMatrix(String),
    #[error("matrix is singular or not positive definite")]
    Singular,
}

pub type Result<T> = std::result::Result<T, LinalgError>;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Square complex matrix stored row-major.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    dim: usize,
    data: Vec<C64>,
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix({}x{})", self.dim, self.dim)?;
        for i in 0..self.dim {
            write!(f, "  [")?;
            for j in 0..self.dim {
                let z = self[(i, j)];
                write!(f, " {:+.6}{:+.6}i", z.re, z.im)?;
            }
            writeln!(f, " ]")?;
        }
        Ok(())
    }
}

impl ComplexMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![C64::default(); dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = c(1.0, 0.0);
        }
        m
    }

    /// Builds a matrix from row-major entries. Panics if `data.len()` is not a
    /// perfect square.
    pub fn from_vec(data: Vec<C64>) -> Self {
        let dim = (data.len() as f64).sqrt().round() as usize;
        assert_eq!(dim * dim, data.len(), "entries must form a square matrix");
        Self { dim, data }
    }

    pub fn from_real(rows: &[&[f64]]) -> Self {
        let dim = rows.len();
        let mut m = Self::zeros(dim);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), dim);
            for (j, &v) in row.iter().enumerate() {
                m[(i, j)] = c(v, 0.0);
            }
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = c(v, 0.0);
        }
        m
    }

    /// `|v⟩⟨v|`
    pub fn outer(v: &[C64]) -> Self {
        let dim = v.len();
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                m[(i, j)] = v[i] * v[j].conj();
            }
        }
        m
    }

    pub fn pauli_x() -> Self {
        Self::from_real(&[&[0.0, 1.0], &[1.0, 0.0]])
    }

    pub fn pauli_y() -> Self {
        Self::from_vec(vec![c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)])
    }

    pub fn pauli_z() -> Self {
        Self::diag(&[1.0, -1.0])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn dagger(&self) -> Self {
        let mut m = Self::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                m[(j, i)] = self[(i, j)].conj();
            }
        }
        m
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { dim: self.dim, data: self.data.iter().map(|z| z * s).collect() }
    }

    pub fn scale_c(&self, s: C64) -> Self {
        Self { dim: self.dim, data: self.data.iter().map(|z| z * s).collect() }
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    /// `Re Tr(self · other)`, the real inner product used for Hermitian data.
    pub fn trace_product(&self, other: &ComplexMatrix) -> f64 {
        debug_assert_eq!(self.dim, other.dim);
        let n = self.dim;
        let mut acc = 0.0;
        for i in 0..n {
            for k in 0..n {
                acc += (self.data[i * n + k] * other.data[k * n + i]).re;
            }
        }
        acc
    }

    pub fn max_abs_diff(&self, other: &ComplexMatrix) -> f64 {
        assert_eq!(self.dim, other.dim);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest element of `|A - A†|`.
    pub fn hermiticity_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.dim {
            for j in i..self.dim {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_error() <= tol
    }

    /// `(A + A†) / 2`
    pub fn hermitian_part(&self) -> Self {
        (self + &self.dagger()).scale(0.5)
    }

    /// Real-symmetric (for Hermitian input) embedding of dimension `2·dim`.
    pub fn real_embedding(&self) -> RealMatrix {
        let n = self.dim;
        let mut r = RealMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                let z = self[(i, j)];
                r[(i, j)] = z.re;
                r[(i + n, j + n)] = z.re;
                r[(i, j + n)] = -z.im;
                r[(i + n, j)] = z.im;
            }
        }
        r
    }

    /// Inverse of [`ComplexMatrix::real_embedding`], averaging the two copies
    /// so that an arbitrary symmetric `2n×2n` matrix maps to its nearest
    /// embedded Hermitian matrix.
    pub fn from_real_embedding(r: &RealMatrix) -> Self {
        assert!(r.rows == r.cols && r.rows % 2 == 0);
        let n = r.rows / 2;
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                let re = 0.5 * (r[(i, j)] + r[(i + n, j + n)]);
                let im = 0.5 * (r[(i + n, j)] - r[(i, j + n)]);
                m[(i, j)] = c(re, im);
            }
        }
        m
    }

    /// `U A U†`
    pub fn conjugate_by(&self, u: &ComplexMatrix) -> Self {
        &(u * self) * &u.dagger()
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.dim + j]
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim);
        ComplexMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim);
        ComplexMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim);
        let n = self.dim;
        let mut out = ComplexMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == C64::default() {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * rhs.data[k * n + j];
                }
            }
        }
        out
    }
}

/// Kronecker product `a ⊗ b`.
pub fn tensor(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    let dim = a.dim.checked_mul(b.dim).ok_or(LinalgError::DimensionTooLarge(usize::MAX))?;
    if dim > MAX_DIM {
        return Err(LinalgError::DimensionTooLarge(dim));
    }
    let mut out = ComplexMatrix::zeros(dim);
    for i in 0..a.dim {
        for j in 0..a.dim {
            let aij = a[(i, j)];
            for k in 0..b.dim {
                for l in 0..b.dim {
                    out[(i * b.dim + k, j * b.dim + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    Ok(out)
}

/// Trace over the first (Alice) factor of a `dim_a·dim_b` operator.
pub fn partial_trace_a(rho: &ComplexMatrix, dim_a: usize, dim_b: usize) -> Result<ComplexMatrix> {
    if rho.dim != dim_a * dim_b {
        return Err(LinalgError::DimensionMismatch(format!(
            "operator has dim {} but dim_a·dim_b = {}",
            rho.dim,
            dim_a * dim_b
        )));
    }
    let mut out = ComplexMatrix::zeros(dim_b);
    for k in 0..dim_b {
        for l in 0..dim_b {
            out[(k, l)] = (0..dim_a).map(|i| rho[(i * dim_b + k, i * dim_b + l)]).sum();
        }
    }
    Ok(out)
}

/// Eigen-decomposition of a Hermitian matrix: ascending eigenvalues and
/// orthonormal eigenvectors (`vectors[k]` belongs to `values[k]`).
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<C64>>,
}

impl HermitianEigen {
    /// `Σ_k f(λ_k) |v_k⟩⟨v_k|`
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> ComplexMatrix {
        let n = self.values.len();
        let mut m = ComplexMatrix::zeros(n);
        for (lam, v) in self.values.iter().zip(&self.vectors) {
            let w = f(*lam);
            if w == 0.0 {
                continue;
            }
            for i in 0..n {
                for j in 0..n {
                    m[(i, j)] += v[i] * v[j].conj() * w;
                }
            }
        }
        m
    }
}

fn check_hermitian(a: &ComplexMatrix, tol: f64) -> Result<()> {
    let err = a.hermiticity_error();
    if err > tol {
        Err(LinalgError::NotHermitian(err))
    } else {
        Ok(())
    }
}

fn eigh_2x2(a: &ComplexMatrix) -> HermitianEigen {
    let p = a[(0, 0)].re;
    let q = a[(1, 1)].re;
    let b = 0.5 * (a[(0, 1)] + a[(1, 0)].conj());
    let mean = 0.5 * (p + q);
    let half = 0.5 * (p - q);
    let r = (half * half + b.norm_sqr()).sqrt();
    let (lo, hi) = (mean - r, mean + r);
    if b.norm() <= 1e-300 {
        let e0 = vec![c(1.0, 0.0), c(0.0, 0.0)];
        let e1 = vec![c(0.0, 0.0), c(1.0, 0.0)];
        return if p <= q {
            HermitianEigen { values: vec![p, q], vectors: vec![e0, e1] }
        } else {
            HermitianEigen { values: vec![q, p], vectors: vec![e1, e0] }
        };
    }
    // Pick the better-conditioned of the two null-space representations.
    let vec_for = |lam: f64| -> Vec<C64> {
        let v1 = [b, c(lam - p, 0.0)];
        let v2 = [c(lam - q, 0.0), b.conj()];
        let n1 = v1[0].norm_sqr() + v1[1].norm_sqr();
        let n2 = v2[0].norm_sqr() + v2[1].norm_sqr();
        let (v, n) = if n1 >= n2 { (v1, n1) } else { (v2, n2) };
        let s = 1.0 / n.sqrt();
        vec![v[0] * s, v[1] * s]
    };
    let vlo = vec_for(lo);
    // Orthogonal complement of vlo, exact to rounding.
    let vhi = vec![-vlo[1].conj(), vlo[0].conj()];
    HermitianEigen { values: vec![lo, hi], vectors: vec![vlo, vhi] }
}

/// Hermitian eigen-decomposition. The input must be Hermitian within 1e-10;
/// only its Hermitian part is used.
pub fn eigh(a: &ComplexMatrix) -> Result<HermitianEigen> {
    check_hermitian(a, 1e-10)?;
    if a.dim == 1 {
        return Ok(HermitianEigen { values: vec![a[(0, 0)].re], vectors: vec![vec![c(1.0, 0.0)]] });
    }
    if a.dim == 2 {
        return Ok(eigh_2x2(a));
    }
    Ok(eigh_via_embedding(&a.hermitian_part()))
}

/// General path: Jacobi on the real embedding, then collapse the doubled
/// spectrum back to `n` complex eigenvectors by Gram-Schmidt.
pub fn eigh_via_embedding(a: &ComplexMatrix) -> HermitianEigen {
    let n = a.dim;
    let (vals, vecs) = a.real_embedding().symmetric_eigen();
    let mut values = Vec::with_capacity(n);
    let mut vectors: Vec<Vec<C64>> = Vec::with_capacity(n);
    for (k, &lam) in vals.iter().enumerate() {
        if vectors.len() == n {
            break;
        }
        let mut w: Vec<C64> = (0..n).map(|i| c(vecs[(i, k)], vecs[(i + n, k)])).collect();
        for u in &vectors {
            let proj: C64 = u.iter().zip(&w).map(|(ui, wi)| ui.conj() * wi).sum();
            for (wi, ui) in w.iter_mut().zip(u) {
                *wi -= proj * ui;
            }
        }
        let norm = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 0.5 {
            for wi in &mut w {
                *wi /= norm;
            }
            values.push(lam);
            vectors.push(w);
        }
    }
    HermitianEigen { values, vectors }
}

/// Smallest eigenvalue of a Hermitian matrix, computed on the real embedding.
pub fn min_eigenvalue(a: &ComplexMatrix) -> Result<f64> {
    check_hermitian(a, 1e-10)?;
    if a.dim == 2 {
        return Ok(eigh_2x2(a).values[0]);
    }
    let (vals, _) = a.hermitian_part().real_embedding().symmetric_eigen();
    Ok(vals[0])
}

/// Hermitian positive-semidefinite square root, negative eigenvalues clipped.
pub fn sqrt_psd(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    Ok(eigh(a)?.reconstruct_with(|l| l.max(0.0).sqrt()))
}

/// A validated quantum state: Hermitian, unit trace, positive semidefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(ComplexMatrix);

impl DensityMatrix {
    pub fn new(m: ComplexMatrix) -> Result<Self> {
        let herm = m.hermiticity_error();
        if herm > HERMITIAN_TOL {
            return Err(LinalgError::NotADensityMatrix(format!("Hermiticity error {herm:e}")));
        }
        let tr = m.trace();
        if (tr.re - 1.0).abs() > HERMITIAN_TOL || tr.im.abs() > HERMITIAN_TOL {
            return Err(LinalgError::NotADensityMatrix(format!("trace {tr}")));
        }
        let lmin = min_eigenvalue(&m)?;
        if lmin < PSD_TOL {
            return Err(LinalgError::NotADensityMatrix(format!("eigenvalue {lmin:e}")));
        }
        Ok(Self(m))
    }

    pub fn pure(psi: &[C64]) -> Result<Self> {
        let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let v: Vec<C64> = psi.iter().map(|z| z / norm).collect();
        Self::new(ComplexMatrix::outer(&v))
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self(ComplexMatrix::identity(dim).scale(1.0 / dim as f64))
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim
    }
}

/// Uhlmann fidelity `(Tr √(√ρ σ √ρ))²`.
pub fn fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(LinalgError::DimensionMismatch(format!(
            "fidelity of {}-dim and {}-dim states",
            rho.dim(),
            sigma.dim()
        )));
    }
    let s = sqrt_psd(rho.matrix())?;
    let inner = (&(&s * sigma.matrix()) * &s).hermitian_part();
    let root_trace: f64 = eigh(&inner)?.values.iter().map(|l| l.max(0.0).sqrt()).sum();
    Ok((root_trace * root_trace).clamp(0.0, 1.0))
}

/// Dense real matrix stored row-major.
#[derive(Clone, PartialEq, Debug)]
pub struct RealMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Index<(usize, usize)> for RealMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for RealMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

impl RealMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, rhs: &RealMatrix) -> RealMatrix {
        assert_eq!(self.cols, rhs.rows);
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                let dst = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (d, r) in dst.iter_mut().zip(row) {
                    *d += a * r;
                }
            }
        }
        out
    }

    pub fn add_scaled(&self, rhs: &RealMatrix, s: f64) -> RealMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        RealMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + s * b).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> RealMatrix {
        RealMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|a| a * s).collect() }
    }

    /// `(A + Aᵀ) / 2`
    pub fn symmetrize(&self) -> RealMatrix {
        let mut m = self.clone();
        for i in 0..self.rows {
            for j in 0..i {
                let v = 0.5 * (self[(i, j)] + self[(j, i)]);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// `Tr(Aᵀ B)`
    pub fn dot(&self, rhs: &RealMatrix) -> f64 {
        self.data.iter().zip(&rhs.data).map(|(a, b)| a * b).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
    pub fn cholesky(&self) -> Result<RealMatrix> {
        let n = self.rows;
        let mut l = Self::zeros(n, n);
        for j in 0..n {
            let mut d = self[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > 0.0) {
                return Err(LinalgError::Singular);
            }
            let d = d.sqrt();
            l[(j, j)] = d;
            for i in j + 1..n {
                let mut s = self[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / d;
            }
        }
        Ok(l)
    }

    /// Inverse of a lower-triangular matrix.
    pub fn lower_triangular_inverse(&self) -> RealMatrix {
        let n = self.rows;
        let mut inv = Self::zeros(n, n);
        for col in 0..n {
            for i in col..n {
                let mut s = if i == col { 1.0 } else { 0.0 };
                for k in col..i {
                    s -= self[(i, k)] * inv[(k, col)];
                }
                inv[(i, col)] = s / self[(i, i)];
            }
        }
        inv
    }

    /// Inverse of a symmetric positive-definite matrix via Cholesky.
    pub fn spd_inverse(&self) -> Result<RealMatrix> {
        let linv = self.cholesky()?.lower_triangular_inverse();
        Ok(linv.transpose().matmul(&linv))
    }

    /// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
    /// Returns ascending eigenvalues and the matrix whose columns are the
    /// corresponding orthonormal eigenvectors.
    pub fn symmetric_eigen(&self) -> (Vec<f64>, RealMatrix) {
        let n = self.rows;
        let mut a = self.symmetrize();
        let mut v = Self::identity(n);
        let scale = a.frobenius_norm().max(f64::MIN_POSITIVE);
        for _sweep in 0..100 {
            let mut off = 0.0;
            for p in 0..n {
                for q in p + 1..n {
                    off += a[(p, q)] * a[(p, q)];
                }
            }
            if off.sqrt() <= 1e-17 * scale {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = a[(p, q)];
                    if apq.abs() <= 1e-300 {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let cs = 1.0 / (t * t + 1.0).sqrt();
                    let sn = t * cs;
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = cs * akp - sn * akq;
                        a[(k, q)] = sn * akp + cs * akq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = cs * apk - sn * aqk;
                        a[(q, k)] = sn * apk + cs * aqk;
                    }
                    for k in 0..n {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = cs * vkp - sn * vkq;
                        v[(k, q)] = sn * vkp + cs * vkq;
                    }
                }
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
        let values = order.iter().map(|&i| a[(i, i)]).collect();
        let mut vectors = Self::zeros(n, n);
        for (new, &old) in order.iter().enumerate() {
            for k in 0..n {
                vectors[(k, new)] = v[(k, old)];
            }
        }
        (values, vectors)
    }

    pub fn min_symmetric_eigenvalue(&self) -> f64 {
        self.symmetric_eigen().0[0]
    }
}

/// Solves `A x = b` by LU decomposition with partial pivoting.
pub fn solve_linear(a: &RealMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.rows;
    assert_eq!(a.cols, n);
    assert_eq!(b.len(), n);
    let mut m = a.clone();
    let mut x = b.to_vec();
    let scale = m.data.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(f64::MIN_POSITIVE);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[(i, col)].abs().total_cmp(&m[(j, col)].abs()))
            .unwrap();
        if m[(pivot, col)].abs() <= 1e-15 * scale {
            return Err(LinalgError::Singular);
        }
        if pivot != col {
            for k in 0..n {
                m.data.swap(pivot * n + k, col * n + k);
            }
            x.swap(pivot, col);
        }
        let d = m[(col, col)];
        for i in col + 1..n {
            let f = m[(i, col)] / d;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                let v = m[(col, k)];
                m[(i, k)] -= f * v;
            }
            x[i] -= f * x[col];
        }
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in i + 1..n {
            s -= m[(i, k)] * x[k];
        }
        x[i] = s / m[(i, i)];
    }
    Ok(x)
}
