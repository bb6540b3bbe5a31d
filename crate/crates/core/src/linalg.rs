//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Complex, DMatrix, DVector, Schur};

/// Eigenvalues with modulus at or above `1 - STABILITY_MARGIN` count as
/// unstable. Row-stochastic matrices have an eigenvalue at exactly one that
/// the Schur iteration returns with rounding noise on either side.
pub const STABILITY_MARGIN: f64 = 1e-9;

/// Moore–Penrose pseudo-inverse. Singular values at or below
/// `svd_tol * sigma_max` are treated as zero.
///
/// Symmetric input goes through the symmetric eigensolver: nalgebra's SVD can
/// return inaccurate singular vectors for nearly rank-deficient matrices with
/// entries at rounding level, which is exactly what Riccati iterates look like.
pub fn pseudo_inverse(m: &DMatrix<f64>, svd_tol: f64) -> DMatrix<f64> {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return DMatrix::zeros(cols, rows);
    }
    if rows == cols && is_symmetric(m) {
        return symmetric_pseudo_inverse(m, svd_tol);
    }
    let svd = m.clone().svd(true, true);
    let sigma_max = svd.singular_values.max();
    if sigma_max <= 0.0 || !sigma_max.is_finite() {
        return DMatrix::zeros(cols, rows);
    }
    let cutoff = svd_tol * sigma_max;
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let mut out = DMatrix::zeros(cols, rows);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff {
            let vk = v_t.row(k).transpose();
            let uk = u.column(k);
            out += (vk * uk.transpose()) / s;
        }
    }
    out
}

fn is_symmetric(m: &DMatrix<f64>) -> bool {
    let scale = max_abs(m);
    (0..m.nrows()).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= 1e-14 * scale))
}

fn symmetric_pseudo_inverse(m: &DMatrix<f64>, svd_tol: f64) -> DMatrix<f64> {
    let mut s = m.clone();
    symmetrize(&mut s);
    let eig = s.symmetric_eigen();
    let lmax = eig.eigenvalues.amax();
    let n = m.nrows();
    if lmax <= 0.0 || !lmax.is_finite() {
        return DMatrix::zeros(n, n);
    }
    let mut out = DMatrix::zeros(n, n);
    for (k, &l) in eig.eigenvalues.iter().enumerate() {
        if l.abs() > svd_tol * lmax {
            let q = eig.eigenvectors.column(k);
            out += (q * q.transpose()) / l;
        }
    }
    out
}

/// Numerical rank: singular values above `rel_tol * sigma_max`.
pub fn rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.singular_values();
    let smax = sv.max();
    if smax <= 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}

pub fn complex_rank(m: &DMatrix<Complex<f64>>, rel_tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().singular_values();
    let smax = sv.max();
    if smax <= 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}

/// Eigenvalues via a capped Schur iteration.
///
/// nalgebra's `complex_eigenvalues` iterates without a cap and never returns
/// on some (rare) inputs. A non-converging attempt is retried on similar
/// matrices, which change the shift sequence but not the spectrum.
pub fn eigenvalues(a: &DMatrix<f64>) -> Vec<Complex<f64>> {
    if a.is_empty() {
        return Vec::new();
    }
    let n = a.nrows();
    let max_niter = 100 * n.max(4);
    let attempts = [
        a.clone(),
        a.transpose(),
        reflected(a),
        reflected(&a.transpose()),
    ];
    for m in attempts {
        if let Some(schur) = Schur::try_new(m, f64::EPSILON, max_niter) {
            return schur.complex_eigenvalues().iter().copied().collect();
        }
    }
    panic!("Schur iteration did not converge on a {n}x{n} matrix");
}

/// `Q A Q` with the Householder reflector `Q = I - 2 v v^T / v^T v`,
/// `v = (1, 2, ..., n)`.
fn reflected(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let v = DVector::from_fn(n, |i, _| (i + 1) as f64);
    let q = DMatrix::identity(n, n) - (&v * v.transpose()) * (2.0 / v.norm_squared());
    &q * a * &q
}

/// Orthonormal basis (as columns) of the column space of `m`.
pub fn orthonormal_basis(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let n = m.nrows();
    if m.ncols() == 0 || n == 0 {
        return DMatrix::zeros(n, 0);
    }
    let svd = m.clone().svd(true, false);
    let smax = svd.singular_values.max();
    if !(smax > 0.0) {
        return DMatrix::zeros(n, 0);
    }
    let u = svd.u.expect("u requested");
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| svd.singular_values[k] > rel_tol * smax)
        .collect();
    u.select_columns(&keep)
}

/// Orthonormal basis of the smallest `f`-invariant subspace containing the
/// columns of `g`.
pub fn krylov_basis(f: &DMatrix<f64>, g: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let mut basis = orthonormal_basis(g, rel_tol);
    loop {
        if basis.ncols() == 0 || basis.ncols() == f.nrows() {
            return basis;
        }
        let image = f * &basis;
        let stacked = DMatrix::from_fn(f.nrows(), 2 * basis.ncols(), |i, j| {
            if j < basis.ncols() {
                basis[(i, j)]
            } else {
                image[(i, j - basis.ncols())]
            }
        });
        let next = orthonormal_basis(&stacked, rel_tol);
        if next.ncols() == basis.ncols() {
            return basis;
        }
        basis = next;
    }
}

pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    eigenvalues(a).iter().map(|l| l.norm()).fold(0.0, f64::max)
}

pub fn is_unstable_mode(lambda: Complex<f64>) -> bool {
    lambda.norm() >= 1.0 - STABILITY_MARGIN
}

/// Schur stability (all eigenvalues strictly inside the unit disc, with margin).
pub fn is_stable(a: &DMatrix<f64>) -> bool {
    !eigenvalues(a).into_iter().any(is_unstable_mode)
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

pub fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let mut s = m.clone();
    symmetrize(&mut s);
    s.symmetric_eigenvalues().min()
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .fold(0.0, |acc, (x, y)| acc.max((x - y).abs()))
}

/// Rows of the identity selected by `rows`.
pub fn selector(n: usize, rows: &[usize]) -> DMatrix<f64> {
    let mut c = DMatrix::zeros(rows.len(), n);
    for (r, &j) in rows.iter().enumerate() {
        c[(r, j)] = 1.0;
    }
    c
}

pub fn basis_vector(n: usize, i: usize) -> DVector<f64> {
    let mut v = DVector::zeros(n);
    v[i] = 1.0;
    v
}

pub fn submatrix(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |r, c| m[(idx[r], idx[c])])
}

pub fn columns(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), idx.len(), |r, c| m[(r, idx[c])])
}

pub fn from_rows(rows: &[Vec<f64>]) -> Option<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return None;
    }
    Some(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}
