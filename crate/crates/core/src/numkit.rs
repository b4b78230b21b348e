//! Dense real linear algebra used by the rest of the crate.
//!
//! Thin layer over `nalgebra`: eigenpairs come back sorted, solves are
//! conditioning-checked and every matrix built from user data is checked
//! for finiteness.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Default tolerances. Callers that need different values pass them
/// explicitly through the option structs of the modules that use them.
pub mod tol {
    /// Orthonormality tolerance of eigenvectors, scaled by n.
    pub const EIG_ORTHO: f64 = 1e-10;
    /// Reconstruction residual of a symmetric eigendecomposition, relative to the input norm.
    pub const EIG_RESIDUAL: f64 = 1e-9;
    /// Condition-number ceiling for `solve_linear`.
    pub const MAX_CONDITION: f64 = 1e12;
    /// Relative residual bound for `solve_linear`.
    pub const SOLVE_RESIDUAL: f64 = 1e-9;
    /// Left null vector residual `|r^T L|`.
    pub const PERRON_RESIDUAL: f64 = 1e-9;
    /// Relative singular-value threshold used for numerical rank.
    pub const RANK: f64 = 1e-9;
    /// Relative strictness margin for LMI certificates: margin >= LMI_STRICT * (1 + |F|_F).
    pub const LMI_STRICT: f64 = 1e-6;
    /// Per-step Lyapunov increase allowance relative to V(0).
    pub const LYAPUNOV_STEP: f64 = 1e-10;
    /// State norm at which integration aborts.
    pub const BLOW_UP: f64 = 1e9;
    /// Iteration budget multiplier for the symmetric eigensolver.
    pub const EIG_MAX_ITER_PER_DIM: usize = 1000;
}

/// Builds a matrix from row vectors, rejecting ragged or non-finite input.
pub fn mat_from_rows(rows: &[Vec<f64>]) -> Result<Mat> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().position(|r| r.len() != ncols) {
        return Err(Error::Dimension(format!(
            "row {} has {} entries, expected {}",
            bad,
            rows[bad].len(),
            ncols
        )));
    }
    let m = Mat::from_fn(nrows, ncols, |i, j| rows[i][j]);
    check_finite(&m)?;
    Ok(m)
}

pub fn mat_to_rows(m: &Mat) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn check_finite(m: &Mat) -> Result<()> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if !m[(i, j)].is_finite() {
                return Err(Error::NonFinite { row: i, col: j });
            }
        }
    }
    Ok(())
}

fn ensure_square(m: &Mat) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::NonSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(m.nrows())
}

/// `(s + s^T) / 2`
pub fn symmetrize(s: &Mat) -> Mat {
    (s + s.transpose()) * 0.5
}

/// Eigendecomposition of a symmetric matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub values: Vector,
    /// Columns are the eigenvectors, in the order of `values`.
    pub vectors: Mat,
}

impl SymEig {
    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// `|S - V diag(values) V^T|_F`
    pub fn reconstruction_residual(&self, s: &Mat) -> f64 {
        let recon = &self.vectors * Mat::from_diagonal(&self.values) * self.vectors.transpose();
        (s - recon).norm()
    }
}

/// Symmetric eigendecomposition. The input is symmetrized first.
pub fn sym_eig(s: &Mat) -> Result<SymEig> {
    let n = ensure_square(s)?;
    check_finite(s)?;
    if n == 0 {
        return Ok(SymEig {
            values: Vector::zeros(0),
            vectors: Mat::zeros(0, 0),
        });
    }
    let sym = symmetrize(s);
    let eig = sym
        .clone()
        .try_symmetric_eigen(f64::EPSILON, tol::EIG_MAX_ITER_PER_DIM * n)
        .ok_or(Error::NoConvergence {
            n,
            norm: sym.norm(),
        })?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = Vector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = Mat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(SymEig { values, vectors })
}

pub fn min_eigenvalue(s: &Mat) -> Result<f64> {
    Ok(sym_eig(s)?.min())
}

pub fn max_eigenvalue(s: &Mat) -> Result<f64> {
    Ok(sym_eig(s)?.max())
}

/// True iff the smallest eigenvalue of `s` exceeds `margin`.
pub fn is_positive_definite(s: &Mat, margin: f64) -> Result<bool> {
    ensure_square(s)?;
    if s.nrows() == 0 {
        return Ok(true);
    }
    Ok(min_eigenvalue(s)? > margin)
}

/// 2-norm condition number from the singular values; infinite when singular.
pub fn condition_number(a: &Mat) -> f64 {
    if a.is_empty() {
        return 1.0;
    }
    let sv = a.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Solves `a x = b` with partial-pivoting LU after a conditioning check.
pub fn solve_linear(a: &Mat, b: &Mat) -> Result<Mat> {
    let n = ensure_square(a)?;
    if b.nrows() != n {
        return Err(Error::Dimension(format!(
            "solve_linear: a is {n}x{n} but b has {} rows",
            b.nrows()
        )));
    }
    check_finite(a)?;
    check_finite(b)?;
    let condition = condition_number(a);
    if !(condition < tol::MAX_CONDITION) {
        return Err(Error::Singular { condition });
    }
    let x = a
        .clone()
        .lu()
        .solve(b)
        .ok_or(Error::Singular { condition })?;
    let residual = (a * &x - b).norm();
    if residual > tol::SOLVE_RESIDUAL * b.norm().max(f64::MIN_POSITIVE) {
        return Err(Error::Singular { condition });
    }
    Ok(x)
}

pub fn solve_vector(a: &Mat, b: &Vector) -> Result<Vector> {
    let x = solve_linear(a, &Mat::from_column_slice(b.len(), 1, b.as_slice()))?;
    Ok(x.column(0).into_owned())
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &Mat, b: &Mat) -> Mat {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = Mat::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[(i, j)];
            if aij != 0.0 {
                out.view_mut((i * br, j * bc), (br, bc))
                    .copy_from(&(b * aij));
            }
        }
    }
    out
}

/// Numerical rank with singular values below `tol::RANK * sigma_max` treated as zero.
pub fn rank(m: &Mat) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().singular_values();
    let cutoff = tol::RANK * sv.max().max(1.0);
    sv.iter().filter(|&&s| s > cutoff).count()
}

/// Eigenvalues of a general real matrix via real Schur iteration.
///
/// Best effort: returns `None` when the iteration cap is hit. Only used
/// for diagnostics, never inside synthesis.
pub fn general_eigenvalues(m: &Mat) -> Option<Vec<Complex<f64>>> {
    if m.nrows() != m.ncols() {
        return None;
    }
    let n = m.nrows();
    let schur = m.clone().try_schur(f64::EPSILON, 1000 * n.max(1))?;
    let mut vals: Vec<Complex<f64>> = schur.complex_eigenvalues().iter().copied().collect();
    vals.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Some(vals)
}

/// Block-diagonal concatenation.
pub fn block_diag(blocks: &[&Mat]) -> Mat {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(*b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}
