//! Internal dense linear-algebra helpers.
//!
//! Everything here works on small dense matrices (state dimensions up to a few
//! hundred), so exact factorizations beat iterative estimates: operator norms
//! come from full SVDs, symmetric square roots from eigendecompositions, and
//! invariant subspaces from a real Schur form whose diagonal blocks are
//! reordered by direct orthogonal swaps.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Largest singular value; zero for an empty matrix.
pub(crate) fn opnorm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    let svd = nalgebra::linalg::SVD::try_new(m.clone(), false, false, f64::EPSILON, 0)
        .expect("SVD of a finite matrix did not converge");
    svd.singular_values.iter().copied().fold(0.0, f64::max)
}

/// Eigendecomposition of a symmetric matrix with small negative eigenvalues
/// clamped to zero (quadrature noise tolerance).
pub(crate) fn sym_eigen_clamped(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = nalgebra::linalg::SymmetricEigen::new(m.clone());
    let vals = eig.eigenvalues.map(|v| v.max(0.0));
    (vals, eig.eigenvectors)
}

/// Symmetric positive-semidefinite square root.
pub(crate) fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (vals, vecs) = sym_eigen_clamped(m);
    let d = DMatrix::from_diagonal(&vals.map(f64::sqrt));
    &vecs * d * vecs.transpose()
}

/// Solve the Sylvester equation `A X - X B = C` by Kronecker vectorization.
///
/// Nonsingular exactly when `A` and `B` share no eigenvalue; block dimensions
/// stay small enough here that the dense `pq x pq` solve is the right tool.
pub(crate) fn sylvester(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let p = a.nrows();
    let q = b.nrows();
    let mut big = DMatrix::<f64>::zeros(p * q, p * q);
    for j in 0..q {
        for i in 0..p {
            let row = j * p + i;
            for k in 0..p {
                big[(row, j * p + k)] += a[(i, k)];
            }
            for l in 0..q {
                big[(row, l * p + i)] -= b[(l, j)];
            }
        }
    }
    let rhs = DVector::from_fn(p * q, |idx, _| c[(idx % p, idx / p)]);
    let x = nalgebra::linalg::LU::new(big)
        .solve(&rhs)
        .ok_or_else(|| Error::SingularSolve("sylvester equation".into()))?;
    Ok(DMatrix::from_fn(p, q, |i, j| x[j * p + i]))
}

/// Extend `basis` (orthonormalized in place, assumed full column rank) to a
/// full orthonormal matrix by pivoted Gram-Schmidt over the standard basis.
pub(crate) fn orthonormal_completion(basis: &DMatrix<f64>) -> DMatrix<f64> {
    let n = basis.nrows();
    let k = basis.ncols();
    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(n);
    for j in 0..k {
        let mut v = basis.column(j).clone_owned();
        for c in &cols {
            let proj = c.dot(&v);
            v -= c * proj;
        }
        let norm = v.norm();
        assert!(norm > 1e-12, "orthonormal_completion: rank-deficient basis");
        cols.push(v / norm);
    }
    while cols.len() < n {
        // pick the standard basis vector with the largest residual
        let mut best: Option<(f64, DVector<f64>)> = None;
        for i in 0..n {
            let mut v = DVector::zeros(n);
            v[i] = 1.0;
            for c in &cols {
                let proj = c.dot(&v);
                v -= c * proj;
            }
            let norm = v.norm();
            if best.as_ref().map_or(true, |(b, _)| norm > *b) {
                best = Some((norm, v));
            }
        }
        let (norm, v) = best.unwrap();
        cols.push(v / norm);
    }
    DMatrix::from_columns(&cols)
}

/// Real Schur form `m = u t u^T` with all eigenvalues of modulus >= `boundary`
/// moved into the leading `unstable_dim x unstable_dim` block of `t`.
pub(crate) struct OrderedSchur {
    pub u: DMatrix<f64>,
    pub t: DMatrix<f64>,
    pub unstable_dim: usize,
}

pub(crate) fn ordered_schur_by_modulus(m: &DMatrix<f64>, boundary: f64) -> Result<OrderedSchur> {
    let schur = nalgebra::linalg::Schur::try_new(m.clone(), f64::EPSILON, 0)
        .ok_or(Error::SchurFailure)?;
    let (mut u, mut t) = schur.unpack();
    clean_quasi_triangular(&mut t);
    split_real_blocks(&mut u, &mut t)?;
    loop {
        let blocks = diagonal_blocks(&t)?;
        let selected: Vec<bool> = blocks
            .iter()
            .map(|&(i, s)| block_modulus(&t, i, s) >= boundary)
            .collect();
        let mut swap_at = None;
        for w in 0..blocks.len().saturating_sub(1) {
            if !selected[w] && selected[w + 1] {
                swap_at = Some(w);
                break;
            }
        }
        match swap_at {
            None => {
                let unstable_dim = blocks
                    .iter()
                    .zip(&selected)
                    .filter(|(_, &s)| s)
                    .map(|(&(_, sz), _)| sz)
                    .sum();
                return Ok(OrderedSchur { u, t, unstable_dim });
            }
            Some(w) => {
                let (i, p) = blocks[w];
                let (_, q) = blocks[w + 1];
                swap_adjacent_blocks(&mut u, &mut t, i, p, q)?;
            }
        }
    }
}

/// Spectral (Riesz) projector onto the leading invariant subspace of an
/// ordered Schur form, oblique in general.
///
/// With `t = [[T11, T12], [0, T22]]` and `Z` solving `T11 Z - Z T22 = T12`,
/// the projector in Schur coordinates is `[[I, Z], [0, 0]]`.
pub(crate) fn spectral_projector(os: &OrderedSchur) -> Result<DMatrix<f64>> {
    let n = os.t.nrows();
    let k = os.unstable_dim;
    if k == 0 {
        return Ok(DMatrix::zeros(n, n));
    }
    if k == n {
        return Ok(DMatrix::identity(n, n));
    }
    let t11 = os.t.view((0, 0), (k, k)).clone_owned();
    let t12 = os.t.view((0, k), (k, n - k)).clone_owned();
    let t22 = os.t.view((k, k), (n - k, n - k)).clone_owned();
    let z = sylvester(&t11, &t22, &t12)?;
    let mut pt = DMatrix::zeros(n, n);
    pt.view_mut((0, 0), (k, k)).fill_with_identity();
    pt.view_mut((0, k), (k, n - k)).copy_from(&z);
    Ok(&os.u * pt * os.u.transpose())
}

/// Zero out everything below the first subdiagonal and negligible subdiagonal
/// entries, leaving genuine 2x2 bumps in place.
fn clean_quasi_triangular(t: &mut DMatrix<f64>) {
    let n = t.nrows();
    for j in 0..n {
        for i in j + 2..n {
            t[(i, j)] = 0.0;
        }
    }
    for i in 0..n.saturating_sub(1) {
        let scale = t[(i, i)].abs() + t[(i + 1, i + 1)].abs();
        if t[(i + 1, i)].abs() <= 64.0 * f64::EPSILON * scale {
            t[(i + 1, i)] = 0.0;
        }
    }
}

/// Rotate 2x2 diagonal blocks with real eigenvalues into a pair of 1x1 blocks
/// so that reordering only ever moves whole eigenvalue groups.
fn split_real_blocks(u: &mut DMatrix<f64>, t: &mut DMatrix<f64>) -> Result<()> {
    let n = t.nrows();
    let mut i = 0;
    while i + 1 < n {
        if t[(i + 1, i)] == 0.0 {
            i += 1;
            continue;
        }
        let (a, b) = (t[(i, i)], t[(i, i + 1)]);
        let (c, d) = (t[(i + 1, i)], t[(i + 1, i + 1)]);
        let disc = 0.25 * (a - d) * (a - d) + b * c;
        if disc < 0.0 {
            i += 2;
            continue;
        }
        let lambda = 0.5 * (a + d) + disc.sqrt().copysign(a + d);
        let mut v = if b.abs() + (lambda - a).abs() > c.abs() + (lambda - d).abs() {
            DVector::from_column_slice(&[b, lambda - a])
        } else {
            DVector::from_column_slice(&[lambda - d, c])
        };
        let norm = v.norm();
        if norm == 0.0 {
            // defective block with equal eigenvalues; leave it alone
            i += 2;
            continue;
        }
        v /= norm;
        let g = DMatrix::from_column_slice(2, 2, &[v[0], v[1], -v[1], v[0]]);
        apply_window_similarity(u, t, i, &g);
        t[(i + 1, i)] = 0.0;
        i += 2;
    }
    Ok(())
}

/// Start offsets and sizes of the diagonal blocks of a quasi-triangular matrix.
fn diagonal_blocks(t: &DMatrix<f64>) -> Result<Vec<(usize, usize)>> {
    let n = t.nrows();
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)] != 0.0 {
            if i + 2 < n && t[(i + 2, i + 1)] != 0.0 {
                return Err(Error::SchurFailure);
            }
            blocks.push((i, 2));
            i += 2;
        } else {
            blocks.push((i, 1));
            i += 1;
        }
    }
    Ok(blocks)
}

/// Largest eigenvalue modulus of the diagonal block starting at `i`.
fn block_modulus(t: &DMatrix<f64>, i: usize, size: usize) -> f64 {
    if size == 1 {
        return t[(i, i)].abs();
    }
    let (a, b) = (t[(i, i)], t[(i, i + 1)]);
    let (c, d) = (t[(i + 1, i)], t[(i + 1, i + 1)]);
    let disc = 0.25 * (a - d) * (a - d) + b * c;
    if disc < 0.0 {
        // complex conjugate pair: |lambda|^2 = det
        (a * d - b * c).max(0.0).sqrt()
    } else {
        let mid = 0.5 * (a + d);
        (mid + disc.sqrt()).abs().max((mid - disc.sqrt()).abs())
    }
}

/// Direct swap of the adjacent diagonal blocks at `(i, p)` and `(i+p, q)`.
///
/// Solves `A11 X - X A22 = -A12`, takes an orthonormal basis of the invariant
/// subspace `[X; I]`, and applies the completed orthogonal transform to the
/// window, which moves the trailing block's eigenvalues to the front.
fn swap_adjacent_blocks(
    u: &mut DMatrix<f64>,
    t: &mut DMatrix<f64>,
    i: usize,
    p: usize,
    q: usize,
) -> Result<()> {
    let a11 = t.view((i, i), (p, p)).clone_owned();
    let a12 = t.view((i, i + p), (p, q)).clone_owned();
    let a22 = t.view((i + p, i + p), (q, q)).clone_owned();
    let x = sylvester(&a11, &a22, &(-a12))?;
    let mut g = DMatrix::zeros(p + q, q);
    g.view_mut((0, 0), (p, q)).copy_from(&x);
    g.view_mut((p, 0), (q, q)).fill_with_identity();
    let full = orthonormal_completion(&g);
    apply_window_similarity(u, t, i, &full);
    for r in i + q..i + p + q {
        for c in i..i + q {
            t[(r, c)] = 0.0;
        }
    }
    if p == 2 {
        // the trailing block may have picked up sub-subdiagonal noise
        let r = i + q + 1;
        for c in i..i + q {
            if r < t.nrows() && c < t.ncols() {
                t[(r, c)] = 0.0;
            }
        }
    }
    Ok(())
}

/// Apply `t <- diag(I, G, I)^T t diag(I, G, I)` and `u <- u diag(I, G, I)`
/// where `G` occupies the window starting at `i`.
fn apply_window_similarity(u: &mut DMatrix<f64>, t: &mut DMatrix<f64>, i: usize, g: &DMatrix<f64>) {
    let w = g.nrows();
    let n = t.nrows();
    let rows = (t.view((i, 0), (w, n)).clone_owned().transpose() * g).transpose();
    t.view_mut((i, 0), (w, n)).copy_from(&rows);
    let cols = t.view((0, i), (n, w)).clone_owned() * g;
    t.view_mut((0, i), (n, w)).copy_from(&cols);
    let ucols = u.view((0, i), (n, w)).clone_owned() * g;
    u.view_mut((0, i), (n, w)).copy_from(&ucols);
}
