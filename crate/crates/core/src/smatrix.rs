//! Small dense real matrices: LU solve, SVD-based null spaces and range
//! tests, and eigenvalues with multiplicity structure.

use std::fmt;
use std::ops::{Index, IndexMut};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatrixError {
    #[error("matrix is singular to working precision (pivot {pivot:e} at column {column})")]
    Singular { pivot: f64, column: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("QR iteration did not converge after {0} iterations")]
    NoConvergence(usize),
}

/// Clustering tolerance for eigenvalues, relative to `max(1, ‖M‖)`.
pub const EIG_CLUSTER_TOL: f64 = 1e-7;
/// Half-width of the band `| |λ| - 1 | ≤ tol` treated as the unit circle.
pub const UNIT_CIRCLE_TOL: f64 = 1e-7;
/// Default relative rank tolerance.
pub const RANK_TOL: f64 = 1e-8;

#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_row_slice(rows: usize, cols: usize, data: &[f64]) -> Self {
        assert_eq!(data.len(), rows * cols, "data length does not match shape");
        DenseMatrix {
            rows,
            cols,
            data: data.to_vec(),
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        DenseMatrix {
            rows: r,
            cols: c,
            data: rows.concat(),
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m[(r, c)] = f(r, c);
            }
        }
        m
    }

    /// Builds a matrix from column vectors.
    pub fn from_columns(cols: &[Vec<f64>]) -> Self {
        let n = cols.first().map_or(0, |c| c.len());
        Self::from_fn(n, cols.len(), |r, c| cols[c][r])
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

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn mul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, other.rows, "inner dimensions differ");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "vector length differs from column count");
        (0..self.rows).map(|r| dot(self.row(r), v)).collect()
    }

    pub fn add(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> DenseMatrix {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|a| a * s).collect(),
        }
    }

    /// `M - s I`.
    pub fn shift(&self, s: f64) -> DenseMatrix {
        let mut m = self.clone();
        for i in 0..self.rows.min(self.cols) {
            m[(i, i)] -= s;
        }
        m
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|a| a * a).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, a| m.max(a.abs()))
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|a| a.is_finite())
    }

    pub fn pow(&self, m: u32) -> DenseMatrix {
        let mut out = Self::identity(self.rows);
        for _ in 0..m {
            out = out.mul(self);
        }
        out
    }

    pub fn lu(&self) -> Result<Lu, MatrixError> {
        Lu::new(self)
    }

    pub fn determinant(&self) -> f64 {
        match Lu::factor(self) {
            Ok(lu) => lu.determinant(),
            Err(_) => 0.0,
        }
    }

    pub fn inverse(&self) -> Result<DenseMatrix, MatrixError> {
        let lu = self.lu()?;
        let n = self.rows;
        let cols: Vec<Vec<f64>> = (0..n)
            .map(|j| {
                let mut e = vec![0.0; n];
                e[j] = 1.0;
                lu.solve(&e)
            })
            .collect();
        Ok(Self::from_columns(&cols))
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// LU factorization with partial pivoting.
#[derive(Debug, Clone)]
pub struct Lu {
    lu: DenseMatrix,
    perm: Vec<usize>,
    sign: f64,
}

impl Lu {
    // Factorization without the singularity check, for determinants.
    fn factor(m: &DenseMatrix) -> Result<Lu, MatrixError> {
        if !m.is_square() {
            return Err(MatrixError::Dimension(format!(
                "LU needs a square matrix, got {}x{}",
                m.rows, m.cols
            )));
        }
        let n = m.rows;
        let mut lu = m.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        for k in 0..n {
            let p = (k..n)
                .max_by(|&a, &b| lu[(a, k)].abs().total_cmp(&lu[(b, k)].abs()))
                .unwrap_or(k);
            if p != k {
                for j in 0..n {
                    lu.data.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
                sign = -sign;
            }
            let pivot = lu[(k, k)];
            if pivot == 0.0 {
                continue;
            }
            for i in k + 1..n {
                let f = lu[(i, k)] / pivot;
                lu[(i, k)] = f;
                if f != 0.0 {
                    for j in k + 1..n {
                        let v = lu[(k, j)];
                        lu[(i, j)] -= f * v;
                    }
                }
            }
        }
        Ok(Lu { lu, perm, sign })
    }

    pub fn new(m: &DenseMatrix) -> Result<Lu, MatrixError> {
        let lu = Self::factor(m)?;
        let threshold = 1e-13 * m.norm();
        for k in 0..m.rows {
            let pivot = lu.lu[(k, k)];
            if pivot.abs() <= threshold || pivot == 0.0 {
                return Err(MatrixError::Singular { pivot, column: k });
            }
        }
        Ok(lu)
    }

    pub fn determinant(&self) -> f64 {
        (0..self.lu.rows).map(|i| self.lu[(i, i)]).product::<f64>() * self.sign
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lu.rows;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let s: f64 = (0..i).map(|j| self.lu[(i, j)] * x[j]).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| self.lu[(i, j)] * x[j]).sum();
            x[i] = (x[i] - s) / self.lu[(i, i)];
        }
        x
    }
}

/// Solves `M x = b` by LU with partial pivoting.
pub fn solve(m: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>, MatrixError> {
    if b.len() != m.rows {
        return Err(MatrixError::Dimension(format!(
            "right-hand side has {} entries for {} rows",
            b.len(),
            m.rows
        )));
    }
    Ok(m.lu()?.solve(b))
}

/// Thin singular value decomposition `M = U diag(σ) Vᵀ` by one-sided Jacobi.
///
/// `sigma` and the columns of `v` have length `cols`; singular values are
/// sorted in decreasing order. Columns of `u` for zero singular values are
/// zero.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DenseMatrix,
    pub sigma: Vec<f64>,
    pub v: DenseMatrix,
}

impl Svd {
    pub fn new(m: &DenseMatrix) -> Svd {
        let (rows, cols) = (m.rows, m.cols);
        // columns of A stored contiguously
        let mut a: Vec<Vec<f64>> = (0..cols).map(|c| m.column(c)).collect();
        let mut v: Vec<Vec<f64>> = (0..cols)
            .map(|c| {
                let mut e = vec![0.0; cols];
                e[c] = 1.0;
                e
            })
            .collect();
        for _sweep in 0..80 {
            let mut rotated = false;
            for i in 0..cols {
                for j in i + 1..cols {
                    let alpha = dot(&a[i], &a[i]);
                    let beta = dot(&a[j], &a[j]);
                    let gamma = dot(&a[i], &a[j]);
                    if gamma == 0.0 || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                        continue;
                    }
                    rotated = true;
                    let zeta = (beta - alpha) / (2.0 * gamma);
                    let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = c * t;
                    for k in 0..rows {
                        let (x, y) = (a[i][k], a[j][k]);
                        a[i][k] = c * x - s * y;
                        a[j][k] = s * x + c * y;
                    }
                    for k in 0..cols {
                        let (x, y) = (v[i][k], v[j][k]);
                        v[i][k] = c * x - s * y;
                        v[j][k] = s * x + c * y;
                    }
                }
            }
            if !rotated {
                break;
            }
        }
        let mut order: Vec<usize> = (0..cols).collect();
        let norms: Vec<f64> = a.iter().map(|col| norm2(col)).collect();
        order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]));
        let sigma: Vec<f64> = order.iter().map(|&i| norms[i]).collect();
        let u_cols: Vec<Vec<f64>> = order
            .iter()
            .map(|&i| {
                let s = norms[i];
                if s > 0.0 {
                    a[i].iter().map(|x| x / s).collect()
                } else {
                    vec![0.0; rows]
                }
            })
            .collect();
        let v_cols: Vec<Vec<f64>> = order.iter().map(|&i| v[i].clone()).collect();
        Svd {
            u: DenseMatrix::from_columns(&u_cols).reshaped_rows(rows),
            sigma,
            v: DenseMatrix::from_columns(&v_cols).reshaped_rows(cols),
        }
    }

    pub fn largest(&self) -> f64 {
        self.sigma.first().copied().unwrap_or(0.0)
    }

    pub fn smallest(&self) -> f64 {
        self.sigma.last().copied().unwrap_or(0.0)
    }

    /// Right singular vectors whose singular value is `<= threshold`.
    pub fn kernel(&self, threshold: f64) -> Vec<Vec<f64>> {
        self.sigma
            .iter()
            .enumerate()
            .filter(|(_, &s)| s <= threshold)
            .map(|(i, _)| self.v.column(i))
            .collect()
    }

    pub fn rank(&self, threshold: f64) -> usize {
        self.sigma.iter().filter(|&&s| s > threshold).count()
    }

    /// Minimum-norm least-squares solution ignoring singular values
    /// `<= threshold`.
    pub fn pseudo_solve(&self, b: &[f64], threshold: f64) -> Vec<f64> {
        let n = self.v.rows;
        let mut x = vec![0.0; n];
        for (i, &s) in self.sigma.iter().enumerate() {
            if s <= threshold {
                continue;
            }
            let coef = dot(&self.u.column(i), b) / s;
            for (k, xk) in x.iter_mut().enumerate() {
                *xk += coef * self.v[(k, i)];
            }
        }
        x
    }
}

impl DenseMatrix {
    // from_columns on an empty list yields a 0x0 matrix; keep the row count.
    fn reshaped_rows(self, rows: usize) -> DenseMatrix {
        if self.rows == rows {
            self
        } else {
            DenseMatrix::zeros(rows, self.cols)
        }
    }
}

fn cutoff(svd: &Svd, tol: f64) -> f64 {
    let largest = svd.largest();
    if largest == 0.0 {
        0.0
    } else {
        tol * largest
    }
}

/// Orthonormal kernel basis: right singular vectors whose singular value is
/// below `tol` times the largest one.
pub fn null_space(m: &DenseMatrix, tol: f64) -> Vec<Vec<f64>> {
    let svd = Svd::new(m);
    svd.kernel(cutoff(&svd, tol))
}

/// Kernel basis with an absolute singular-value threshold.
pub fn null_space_below(m: &DenseMatrix, threshold: f64) -> Vec<Vec<f64>> {
    Svd::new(m).kernel(threshold)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeMembership {
    pub in_range: bool,
    pub defect: f64,
}

fn project_norm(basis: &[Vec<f64>], b: &[f64]) -> f64 {
    basis.iter().map(|v| dot(v, b).powi(2)).sum::<f64>().sqrt()
}

/// Fredholm test: `b ∈ range(M)` iff `b ⟂ null(Mᵀ)`. The defect is
/// `‖P_N b‖ / max(‖b‖, 1)`.
pub fn range_membership(m: &DenseMatrix, b: &[f64], tol: f64) -> RangeMembership {
    let basis = null_space(&m.transpose(), tol);
    let defect = project_norm(&basis, b) / norm2(b).max(1.0);
    RangeMembership {
        in_range: defect <= tol,
        defect,
    }
}

/// Range test with an absolute kernel threshold and a separate defect
/// tolerance.
pub fn range_membership_below(
    m: &DenseMatrix,
    b: &[f64],
    threshold: f64,
    tol: f64,
) -> RangeMembership {
    let basis = null_space_below(&m.transpose(), threshold);
    let defect = project_norm(&basis, b) / norm2(b).max(1.0);
    RangeMembership {
        in_range: defect <= tol,
        defect,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Complex {
    pub re: f64,
    pub im: f64,
}

impl Complex {
    pub fn new(re: f64, im: f64) -> Self {
        Complex { re, im }
    }

    pub fn abs(self) -> f64 {
        self.re.hypot(self.im)
    }

    pub fn dist(self, other: Complex) -> f64 {
        (self.re - other.re).hypot(self.im - other.im)
    }

    pub fn mul(self, o: Complex) -> Complex {
        Complex::new(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)
    }

    pub fn recip(self) -> Complex {
        let d = self.re * self.re + self.im * self.im;
        Complex::new(self.re / d, -self.im / d)
    }
}

impl fmt::Display for Complex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.im == 0.0 {
            write!(f, "{}", self.re)
        } else if self.im > 0.0 {
            write!(f, "{}+{}i", self.re, self.im)
        } else {
            write!(f, "{}-{}i", self.re, -self.im)
        }
    }
}

/// A group of numerically coincident eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenCluster {
    pub value: Complex,
    pub algebraic: usize,
    pub geometric: usize,
    pub on_unit_circle: bool,
}

impl EigenCluster {
    pub fn is_semisimple(&self) -> bool {
        self.geometric == self.algebraic
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralData {
    /// All eigenvalues with multiplicity, sorted by decreasing modulus.
    pub eigenvalues: Vec<Complex>,
    pub spectral_radius: f64,
    pub clusters: Vec<EigenCluster>,
    pub cluster_tol: f64,
}

impl SpectralData {
    pub fn unit_circle(&self) -> impl Iterator<Item = &EigenCluster> {
        self.clusters.iter().filter(|c| c.on_unit_circle)
    }

    /// The cluster containing `λ = 1`, if any.
    pub fn cluster_at_one(&self) -> Option<&EigenCluster> {
        self.clusters
            .iter()
            .find(|c| c.value.dist(Complex::new(1.0, 0.0)) <= self.cluster_tol)
    }
}

/// Eigenvalues by balancing, Hessenberg reduction and Francis double-shift
/// QR, followed by clustering and geometric multiplicities.
pub fn eigenvalues(m: &DenseMatrix) -> Result<SpectralData, MatrixError> {
    eigenvalues_with(m, RANK_TOL)
}

pub fn eigenvalues_with(m: &DenseMatrix, rank_tol: f64) -> Result<SpectralData, MatrixError> {
    if !m.is_square() {
        return Err(MatrixError::Dimension("eigenvalues need a square matrix".into()));
    }
    let n = m.rows;
    let mut values = hqr_eigenvalues(m)?;
    values.sort_by(|a, b| {
        b.abs()
            .total_cmp(&a.abs())
            .then(b.re.total_cmp(&a.re))
            .then(b.im.total_cmp(&a.im))
    });
    let spectral_radius = values.iter().fold(0.0f64, |r, z| r.max(z.abs()));
    let scale = m.norm().max(1.0);
    let cluster_tol = EIG_CLUSTER_TOL * scale;

    // single-linkage clustering
    let mut label: Vec<Option<usize>> = vec![None; n];
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in 0..n {
        if label[i].is_some() {
            continue;
        }
        let g = groups.len();
        label[i] = Some(g);
        let mut members = vec![i];
        let mut k = 0;
        while k < members.len() {
            let a = values[members[k]];
            for j in 0..n {
                if label[j].is_none() && values[j].dist(a) <= cluster_tol {
                    label[j] = Some(g);
                    members.push(j);
                }
            }
            k += 1;
        }
        groups.push(members);
    }

    let threshold = rank_tol * scale;
    let clusters = groups
        .iter()
        .map(|members| {
            let k = members.len() as f64;
            let mut value = Complex::new(
                members.iter().map(|&i| values[i].re).sum::<f64>() / k,
                members.iter().map(|&i| values[i].im).sum::<f64>() / k,
            );
            if value.im.abs() <= cluster_tol {
                value.im = 0.0;
            }
            let geometric = geometric_multiplicity(m, value, threshold).min(members.len());
            EigenCluster {
                value,
                algebraic: members.len(),
                geometric,
                on_unit_circle: (value.abs() - 1.0).abs() <= UNIT_CIRCLE_TOL,
            }
        })
        .collect();
    Ok(SpectralData {
        eigenvalues: values,
        spectral_radius,
        clusters,
        cluster_tol,
    })
}

/// Real matrix whose kernel encodes the complex kernel of `M - λI`: for
/// `λ = a + ib`, `[[M - aI, bI], [-bI, M - aI]]`.
fn complex_shift_realified(m: &DenseMatrix, lambda: Complex) -> DenseMatrix {
    let n = m.rows;
    let shifted = m.shift(lambda.re);
    DenseMatrix::from_fn(2 * n, 2 * n, |r, c| {
        let (br, bc) = (r / n, c / n);
        let (i, j) = (r % n, c % n);
        match (br, bc) {
            (0, 0) | (1, 1) => shifted[(i, j)],
            (0, 1) if i == j => lambda.im,
            (1, 0) if i == j => -lambda.im,
            _ => 0.0,
        }
    })
}

fn geometric_multiplicity(m: &DenseMatrix, lambda: Complex, threshold: f64) -> usize {
    if lambda.im == 0.0 {
        null_space_below(&m.shift(lambda.re), threshold).len()
    } else {
        null_space_below(&complex_shift_realified(m, lambda), threshold).len() / 2
    }
}

/// A real vector in the invariant subspace of `λ`: the eigenvector for real
/// `λ`, the real (or imaginary) part of a complex eigenvector otherwise.
pub fn eigenvector(m: &DenseMatrix, lambda: Complex, threshold: f64) -> Option<Vec<f64>> {
    let n = m.rows;
    if lambda.im == 0.0 {
        return null_space_below(&m.shift(lambda.re), threshold).into_iter().next();
    }
    let w = null_space_below(&complex_shift_realified(m, lambda), threshold)
        .into_iter()
        .next()?;
    let (re, im) = w.split_at(n);
    let pick = if norm2(re) >= norm2(im) { re } else { im };
    let s = norm2(pick);
    Some(pick.iter().map(|x| x / s).collect())
}

fn hqr_eigenvalues(m: &DenseMatrix) -> Result<Vec<Complex>, MatrixError> {
    let n = m.rows;
    if n == 0 {
        return Ok(Vec::new());
    }
    // 1-based working copy
    let mut a = vec![vec![0.0f64; n + 1]; n + 1];
    for i in 0..n {
        for j in 0..n {
            a[i + 1][j + 1] = m[(i, j)];
        }
    }
    balance(&mut a, n);
    hessenberg(&mut a, n);
    let (wr, wi) = hqr(&mut a, n)?;
    Ok((1..=n).map(|i| Complex::new(wr[i], wi[i])).collect())
}

fn balance(a: &mut [Vec<f64>], n: usize) {
    const RADIX: f64 = 2.0;
    let sqrdx = RADIX * RADIX;
    let mut done = false;
    while !done {
        done = true;
        for i in 1..=n {
            let mut r = 0.0;
            let mut c = 0.0;
            for j in 1..=n {
                if j != i {
                    c += a[j][i].abs();
                    r += a[i][j].abs();
                }
            }
            if c != 0.0 && r != 0.0 {
                let mut g = r / RADIX;
                let mut f = 1.0;
                let s = c + r;
                while c < g {
                    f *= RADIX;
                    c *= sqrdx;
                }
                g = r * RADIX;
                while c > g {
                    f /= RADIX;
                    c /= sqrdx;
                }
                if (c + r) / f < 0.95 * s {
                    done = false;
                    let g = 1.0 / f;
                    for j in 1..=n {
                        a[i][j] *= g;
                    }
                    for j in 1..=n {
                        a[j][i] *= f;
                    }
                }
            }
        }
    }
}

// Reduction to upper Hessenberg form by stabilized elementary similarity
// transformations.
fn hessenberg(a: &mut [Vec<f64>], n: usize) {
    for m in 2..n {
        let mut x: f64 = 0.0;
        let mut i = m;
        for j in m..=n {
            if a[j][m - 1].abs() > x.abs() {
                x = a[j][m - 1];
                i = j;
            }
        }
        if i != m {
            for j in (m - 1)..=n {
                let t = a[i][j];
                a[i][j] = a[m][j];
                a[m][j] = t;
            }
            for row in a.iter_mut().take(n + 1).skip(1) {
                row.swap(i, m);
            }
        }
        if x != 0.0 {
            for i in (m + 1)..=n {
                let mut y = a[i][m - 1];
                if y != 0.0 {
                    y /= x;
                    a[i][m - 1] = y;
                    for j in m..=n {
                        a[i][j] -= y * a[m][j];
                    }
                    for row in a.iter_mut().take(n + 1).skip(1) {
                        row[m] += y * row[i];
                    }
                }
            }
        }
    }
    for i in 3..=n {
        for j in 1..i - 1 {
            a[i][j] = 0.0;
        }
    }
}

fn sign(a: f64, b: f64) -> f64 {
    if b >= 0.0 {
        a.abs()
    } else {
        -a.abs()
    }
}

#[allow(clippy::many_single_char_names)]
fn hqr(a: &mut [Vec<f64>], n: usize) -> Result<(Vec<f64>, Vec<f64>), MatrixError> {
    let mut wr = vec![0.0; n + 1];
    let mut wi = vec![0.0; n + 1];
    let mut anorm = 0.0;
    for i in 1..=n {
        for j in i.saturating_sub(1).max(1)..=n {
            anorm += a[i][j].abs();
        }
    }
    let max_total = 30 * n * n;
    let mut total = 0usize;
    let mut nn = n;
    let mut t = 0.0;
    let (mut p, mut q, mut r, mut s, mut w, mut x, mut y, mut z);
    while nn >= 1 {
        let mut its = 0;
        loop {
            let mut l = nn;
            while l >= 2 {
                s = a[l - 1][l - 1].abs() + a[l][l].abs();
                if s == 0.0 {
                    s = anorm;
                }
                if a[l][l - 1].abs() + s == s {
                    a[l][l - 1] = 0.0;
                    break;
                }
                l -= 1;
            }
            x = a[nn][nn];
            if l == nn {
                wr[nn] = x + t;
                wi[nn] = 0.0;
                nn -= 1;
                break;
            }
            y = a[nn - 1][nn - 1];
            w = a[nn][nn - 1] * a[nn - 1][nn];
            if l == nn - 1 {
                p = 0.5 * (y - x);
                q = p * p + w;
                z = q.abs().sqrt();
                x += t;
                if q >= 0.0 {
                    z = p + sign(z, p);
                    wr[nn - 1] = x + z;
                    wr[nn] = x + z;
                    if z != 0.0 {
                        wr[nn] = x - w / z;
                    }
                    wi[nn - 1] = 0.0;
                    wi[nn] = 0.0;
                } else {
                    wr[nn - 1] = x + p;
                    wr[nn] = x + p;
                    wi[nn - 1] = -z;
                    wi[nn] = z;
                }
                nn = nn.saturating_sub(2);
                break;
            }
            if total >= max_total {
                return Err(MatrixError::NoConvergence(total));
            }
            if its > 0 && its % 10 == 0 {
                // exceptional shift
                t += x;
                for i in 1..=nn {
                    a[i][i] -= x;
                }
                s = a[nn][nn - 1].abs() + a[nn - 1][nn - 2].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            its += 1;
            total += 1;
            let mut m = nn - 2;
            loop {
                z = a[m][m];
                r = x - z;
                s = y - z;
                p = (r * s - w) / a[m + 1][m] + a[m][m + 1];
                q = a[m + 1][m + 1] - z - r - s;
                r = a[m + 2][m + 1];
                s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                let u = a[m][m - 1].abs() * (q.abs() + r.abs());
                let v = p.abs() * (a[m - 1][m - 1].abs() + z.abs() + a[m + 1][m + 1].abs());
                if u + v == v {
                    break;
                }
                m -= 1;
            }
            for i in (m + 2)..=nn {
                a[i][i - 2] = 0.0;
                if i != m + 2 {
                    a[i][i - 3] = 0.0;
                }
            }
            let mut k = m;
            while k < nn {
                if k != m {
                    p = a[k][k - 1];
                    q = a[k + 1][k - 1];
                    r = 0.0;
                    if k != nn - 1 {
                        r = a[k + 2][k - 1];
                    }
                    x = p.abs() + q.abs() + r.abs();
                    if x != 0.0 {
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                }
                s = sign((p * p + q * q + r * r).sqrt(), p);
                if s != 0.0 {
                    if k == m {
                        if l != m {
                            a[k][k - 1] = -a[k][k - 1];
                        }
                    } else {
                        a[k][k - 1] = -s * x;
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    z = r / s;
                    q /= p;
                    r /= p;
                    for j in k..=nn {
                        p = a[k][j] + q * a[k + 1][j];
                        if k != nn - 1 {
                            p += r * a[k + 2][j];
                            a[k + 2][j] -= p * z;
                        }
                        a[k + 1][j] -= p * y;
                        a[k][j] -= p * x;
                    }
                    let mmin = if nn < k + 3 { nn } else { k + 3 };
                    for row in a.iter_mut().take(mmin + 1).skip(l) {
                        p = x * row[k] + y * row[k + 1];
                        if k != nn - 1 {
                            p += z * row[k + 2];
                            row[k + 2] -= p * r;
                        }
                        row[k + 1] -= p * q;
                        row[k] -= p;
                    }
                }
                k += 1;
            }
            if l >= nn - 1 {
                break;
            }
        }
    }
    Ok((wr, wi))
}
