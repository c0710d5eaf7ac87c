//! Dense complex linear algebra used throughout the crate.
//!
//! Everything works on `nalgebra` dynamic matrices over `Complex64`. Real
//! inputs are simply carried with zero imaginary parts; the systems handled
//! here are tiny (n <= 5), so clarity wins over specialised real kernels.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector, Schur};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Singular values below `PINV_RTOL * sigma_max` are treated as zero.
pub const PINV_RTOL: f64 = 1e-12;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Builds a complex matrix from real row-major entries.
pub fn real_matrix(rows: usize, cols: usize, entries: &[f64]) -> CMatrix {
    assert_eq!(entries.len(), rows * cols);
    CMatrix::from_fn(rows, cols, |i, j| c(entries[i * cols + j], 0.0))
}

pub fn real_vector(entries: &[f64]) -> CVector {
    CVector::from_iterator(entries.len(), entries.iter().map(|&x| c(x, 0.0)))
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn is_finite(m: &CMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

fn ensure_square(a: &CMatrix) -> Result<usize> {
    if a.nrows() != a.ncols() || a.nrows() == 0 {
        return Err(Error::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    Ok(a.nrows())
}

/// Full singular value decomposition `A = U diag(s) V^H`, singular values
/// in descending order.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: CMatrix,
    pub singular_values: Vec<f64>,
    pub v_t: CMatrix,
}

fn lapack_svd(a: &CMatrix, vectors: bool) -> Result<lax::SvdOwned<C64>> {
    if !is_finite(a) {
        return Err(Error::NonFinite("SVD input"));
    }
    // nalgebra storage is column-major, which is LAPACK's native layout
    let mut data: Vec<C64> = a.as_slice().to_vec();
    let layout = lax::layout::MatrixLayout::F {
        col: a.ncols() as i32,
        lda: a.nrows() as i32,
    };
    <C64 as lax::Lapack>::svd(layout, vectors, vectors, &mut data)
        .map_err(|_| Error::NonConvergence(a.nrows().max(a.ncols())))
}

/// SVD through LAPACK `zgesvd`.
pub fn svd(a: &CMatrix) -> Result<Svd> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Ok(Svd {
            u: identity(m),
            singular_values: Vec::new(),
            v_t: identity(n),
        });
    }
    let out = lapack_svd(a, true)?;
    match (out.u, out.vt) {
        (Some(u), Some(vt)) => Ok(Svd {
            u: CMatrix::from_vec(m, m, u),
            singular_values: out.s,
            v_t: CMatrix::from_vec(n, n, vt),
        }),
        _ => Err(Error::NonConvergence(m.max(n))),
    }
}

/// Singular values in descending order.
pub fn singular_values(a: &CMatrix) -> Result<Vec<f64>> {
    if a.is_empty() {
        return Ok(Vec::new());
    }
    Ok(lapack_svd(a, false)?.s)
}

/// Largest singular value; NaN for non-finite input.
pub fn spectral_norm(a: &CMatrix) -> f64 {
    match singular_values(a) {
        Ok(sv) => sv.first().copied().unwrap_or(0.0),
        Err(_) => f64::NAN,
    }
}

pub fn one_norm(a: &CMatrix) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// 2-norm condition number; infinite for singular input, NaN for
/// non-finite input.
pub fn condition_number(a: &CMatrix) -> f64 {
    let Ok(sv) = singular_values(a) else {
        return f64::NAN;
    };
    let max = sv.first().copied().unwrap_or(0.0);
    let min = sv.last().copied().unwrap_or(0.0);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Moore-Penrose pseudo-inverse with singular values below `rtol * sigma_max`
/// discarded. Returns the inverse and the number of singular values kept.
pub fn pseudo_inverse(a: &CMatrix, rtol: f64) -> Result<(CMatrix, usize)> {
    let Svd {
        u,
        singular_values,
        v_t,
    } = svd(a)?;
    let cutoff = singular_values.first().copied().unwrap_or(0.0) * rtol;
    let mut pinv = CMatrix::zeros(a.ncols(), a.nrows());
    let mut rank = 0;
    for (i, &s) in singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            rank += 1;
            let vi = v_t.row(i).adjoint();
            let ui = u.column(i).adjoint();
            pinv += (vi * ui).unscale(s);
        }
    }
    Ok((pinv, rank))
}

/// Numerical rank with threshold `rtol * sigma_max`; zero for non-finite input.
pub fn numerical_rank(a: &CMatrix, rtol: f64) -> usize {
    let sv = singular_values(a).unwrap_or_default();
    let smax = sv.first().copied().unwrap_or(0.0);
    sv.iter().filter(|&&s| s > 0.0 && s > smax * rtol).count()
}

pub fn inverse(a: &CMatrix) -> Result<CMatrix> {
    ensure_square(a)?;
    a.clone()
        .try_inverse()
        .ok_or_else(|| Error::Domain("matrix is singular".into()))
}

/// Principal logarithm; `ln 0` gives a real part of negative infinity.
pub fn principal_log(z: C64) -> C64 {
    c(z.norm().ln(), z.arg())
}

#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    /// Eigenvalues in canonical order.
    pub values: Vec<C64>,
    /// Right eigenvectors as columns, unit 2-norm.
    pub right: CMatrix,
    /// Left eigenvectors as columns with `left^H * right = I`.
    pub left: CMatrix,
    /// 2-norm condition number of `right`.
    pub condition: f64,
}

/// Canonical eigenvalue order: descending modulus, then descending real
/// part, then descending imaginary part. Comparisons tolerate relative
/// differences of `1e-12` so conjugate pairs land deterministically.
pub fn canonical_cmp(a: &C64, b: &C64) -> Ordering {
    let scale = a.norm().max(b.norm()).max(1e-300);
    let tol = 1e-12 * scale;
    let keys = [(a.norm(), b.norm()), (a.re, b.re), (a.im, b.im)];
    for (x, y) in keys {
        if (x - y).abs() > tol {
            return y.partial_cmp(&x).unwrap_or(Ordering::Equal);
        }
    }
    Ordering::Equal
}

fn canonical_order(values: &[C64]) -> Vec<usize> {
    // insertion sort: stable and well defined even though the tolerant
    // comparator is not transitive in degenerate cases
    let mut idx: Vec<usize> = (0..values.len()).collect();
    for i in 1..idx.len() {
        let mut j = i;
        while j > 0 && canonical_cmp(&values[idx[j - 1]], &values[idx[j]]) == Ordering::Greater {
            idx.swap(j - 1, j);
            j -= 1;
        }
    }
    idx
}

/// Scales `v` to unit norm with its first significant entry real and positive.
pub fn normalize_vector(v: &mut CVector) {
    let norm = v.norm();
    if norm == 0.0 {
        return;
    }
    v.unscale_mut(norm);
    if let Some(lead) = v.iter().copied().find(|z| z.norm() > 1e-12) {
        let phase = lead.conj() / lead.norm();
        *v *= phase;
    }
}

/// Eigen-decomposition of a square complex matrix through the complex Schur
/// form followed by triangular back-substitution.
pub fn eig(a: &CMatrix) -> Result<EigenDecomposition> {
    let n = ensure_square(a)?;
    if !is_finite(a) {
        return Err(Error::NonFinite("eigenvalue input"));
    }
    let (q, t) = Schur::try_new(a.clone(), f64::EPSILON, 1000 * n.max(10))
        .ok_or(Error::NonConvergence(n))?
        .unpack();

    let tnorm = t.norm().max(f64::MIN_POSITIVE);
    let smin = (f64::EPSILON * tnorm).max(f64::MIN_POSITIVE * 1e10);
    let mut raw_vectors = CMatrix::zeros(n, n);
    for i in 0..n {
        let lambda = t[(i, i)];
        let mut y = CVector::zeros(n);
        y[i] = c(1.0, 0.0);
        for j in (0..i).rev() {
            let mut sum = c(0.0, 0.0);
            for l in (j + 1)..=i {
                sum += t[(j, l)] * y[l];
            }
            let mut denom = t[(j, j)] - lambda;
            if denom.norm() < smin {
                denom = c(smin, 0.0);
            }
            y[j] = -sum / denom;
        }
        let mut v = &q * y;
        normalize_vector(&mut v);
        raw_vectors.set_column(i, &v);
    }
    replace_cluster_vectors(a, &t, &mut raw_vectors);

    let order = canonical_order(&t.diagonal().iter().copied().collect::<Vec<_>>());
    let values: Vec<C64> = order.iter().map(|&i| t[(i, i)]).collect();
    let mut right = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        right.set_column(dst, &raw_vectors.column(src));
    }
    if !is_finite(&right) {
        return Err(Error::NonFinite("eigenvectors"));
    }
    let condition = condition_number(&right);
    let (inv, _) = pseudo_inverse(&right, 0.0)?;
    let left = inv.adjoint();
    Ok(EigenDecomposition {
        values,
        right,
        left,
        condition,
    })
}

/// Back-substitution cannot separate eigenvectors of a repeated eigenvalue,
/// so each cluster of coincident eigenvalues takes an orthonormal basis of the
/// numerical null space of `A - mu I` instead.
fn replace_cluster_vectors(a: &CMatrix, t: &CMatrix, vectors: &mut CMatrix) {
    let n = a.nrows();
    let scale = t.norm().max(1.0);
    let tol = 1e-9 * scale;
    let mut assigned = vec![false; n];
    for i in 0..n {
        if assigned[i] {
            continue;
        }
        let cluster: Vec<usize> = (i..n)
            .filter(|&j| !assigned[j] && (t[(j, j)] - t[(i, i)]).norm() <= tol)
            .collect();
        for &j in &cluster {
            assigned[j] = true;
        }
        if cluster.len() < 2 {
            continue;
        }
        let mean = cluster.iter().map(|&j| t[(j, j)]).sum::<C64>() / cluster.len() as f64;
        let shifted = a - identity(n) * mean;
        // right singular vectors of the q smallest singular values
        let Ok(Svd {
            singular_values, v_t, ..
        }) = svd(&shifted)
        else {
            continue;
        };
        let order: Vec<usize> = (0..n).rev().collect();
        // a defective cluster has a smaller null space; keep the
        // back-substituted vectors so the ill-conditioning stays visible
        if singular_values[order[cluster.len() - 1]] > 1e-8 * scale {
            continue;
        }
        for (slot, &col) in cluster.iter().zip(order.iter()) {
            let mut v: CVector = v_t.row(col).adjoint();
            normalize_vector(&mut v);
            vectors.set_column(*slot, &v);
        }
    }
}

/// Eigenvalues only, in canonical order.
pub fn eigenvalues(a: &CMatrix) -> Result<Vec<C64>> {
    let n = ensure_square(a)?;
    if !is_finite(a) {
        return Err(Error::NonFinite("eigenvalue input"));
    }
    let t = Schur::try_new(a.clone(), f64::EPSILON, 1000 * n.max(10))
        .ok_or(Error::NonConvergence(n))?
        .unpack()
        .1;
    let diag: Vec<C64> = t.diagonal().iter().copied().collect();
    Ok(canonical_order(&diag).into_iter().map(|i| diag[i]).collect())
}

const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
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
const THETA: [(f64, usize); 4] = [
    (1.495585217958292e-2, 3),
    (2.53939833006323e-1, 5),
    (9.504178996162932e-1, 7),
    (2.097847961257068e0, 9),
];
const THETA13: f64 = 5.371920351148152;

fn pade_low(a: &CMatrix, coeffs: &[f64]) -> (CMatrix, CMatrix) {
    let n = a.nrows();
    let a2 = a * a;
    let mut power = identity(n);
    let mut u = CMatrix::zeros(n, n);
    let mut v = CMatrix::zeros(n, n);
    for pair in coeffs.chunks(2) {
        v += &power * c(pair[0], 0.0);
        u += &power * c(pair[1], 0.0);
        power = &power * &a2;
    }
    (a * u, v)
}

fn pade13(a: &CMatrix) -> (CMatrix, CMatrix) {
    let n = a.nrows();
    let b = |i: usize| c(PADE13[i], 0.0);
    let id = identity(n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * b(13) + &a4 * b(11) + &a2 * b(9);
    let u = a * (&a6 * inner_u + &a6 * b(7) + &a4 * b(5) + &a2 * b(3) + &id * b(1));
    let inner_v = &a6 * b(12) + &a4 * b(10) + &a2 * b(8);
    let v = &a6 * inner_v + &a6 * b(6) + &a4 * b(4) + &a2 * b(2) + &id * b(0);
    (u, v)
}

/// Matrix exponential by Padé scaling and squaring (degree 3..13).
pub fn expm(a: &CMatrix) -> Result<CMatrix> {
    let n = ensure_square(a)?;
    if !is_finite(a) {
        return Err(Error::NonFinite("matrix exponential input"));
    }
    let norm = one_norm(a);
    if norm == 0.0 {
        return Ok(identity(n));
    }
    for &(theta, degree) in &THETA {
        if norm <= theta {
            let coeffs: &[f64] = match degree {
                3 => &PADE3,
                5 => &PADE5,
                7 => &PADE7,
                _ => &PADE9,
            };
            let (u, v) = pade_low(a, coeffs);
            return solve_pade(u, v, norm);
        }
    }
    let squarings = (norm / THETA13).log2().ceil().max(0.0) as i32;
    if squarings > 1000 {
        return Err(Error::Overflow(norm));
    }
    let scaled = a * c(2f64.powi(-squarings), 0.0);
    let (u, v) = pade13(&scaled);
    let mut r = solve_pade(u, v, norm)?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    if !is_finite(&r) {
        return Err(Error::Overflow(norm));
    }
    Ok(r)
}

fn solve_pade(u: CMatrix, v: CMatrix, norm: f64) -> Result<CMatrix> {
    let p = &v + &u;
    let q = &v - &u;
    let r = q.lu().solve(&p).ok_or(Error::Overflow(norm))?;
    if !is_finite(&r) {
        return Err(Error::Overflow(norm));
    }
    Ok(r)
}

#[derive(Debug, Clone)]
pub struct Projection {
    pub coefficients: CVector,
    pub residual: CVector,
    pub rank: usize,
}

/// Least-squares projection of `target` onto the span of `basis`, with the
/// residual orthogonal to every basis vector.
pub fn project_onto_span(basis: &[CVector], target: &CVector) -> Result<Projection> {
    let m = target.len();
    if let Some(bad) = basis.iter().find(|b| b.len() != m) {
        return Err(Error::DimensionMismatch(format!(
            "basis vector of length {} vs target of length {m}",
            bad.len()
        )));
    }
    if basis.is_empty() {
        return Ok(Projection {
            coefficients: CVector::zeros(0),
            residual: target.clone(),
            rank: 0,
        });
    }
    let b = CMatrix::from_columns(basis);
    let Svd {
        u,
        singular_values,
        v_t,
    } = svd(&b)?;
    let cutoff = singular_values.first().copied().unwrap_or(0.0) * PINV_RTOL;
    let mut coefficients = CVector::zeros(b.ncols());
    let mut residual = target.clone();
    let mut rank = 0;
    for (i, &s) in singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            rank += 1;
            let ui = u.column(i);
            let w = ui.dotc(target);
            coefficients += v_t.row(i).adjoint() * (w / s);
            residual -= ui * w;
        }
    }
    Ok(Projection {
        coefficients,
        residual,
        rank,
    })
}

/// Minimal-total-distance assignment of `next` onto the branches in `prev`.
///
/// Returns `perm` with `next[perm[b]]` continuing branch `b`, plus a flag
/// raised when two entries of `next` collide within `1e-12` (relative), in
/// which case the canonical order of `next` breaks the tie.
pub fn match_branches(prev: &[C64], next: &[C64]) -> (Vec<usize>, bool) {
    let n = next.len();
    assert_eq!(prev.len(), n, "branch count changed");
    let scale = next.iter().map(|z| z.norm()).fold(1e-300, f64::max);
    let mut collided = false;
    for i in 0..n {
        for j in (i + 1)..n {
            if (next[i] - next[j]).norm() <= 1e-12 * scale {
                collided = true;
            }
        }
    }
    if n > 7 {
        return (greedy_assignment(prev, next), collided);
    }
    let mut best = (f64::INFINITY, (0..n).collect::<Vec<_>>());
    let mut perm: Vec<usize> = (0..n).collect();
    permute(&mut perm, 0, &mut |p| {
        let cost: f64 = p.iter().enumerate().map(|(b, &i)| (next[i] - prev[b]).norm()).sum();
        if cost < best.0 {
            best = (cost, p.to_vec());
        }
    });
    (best.1, collided)
}

// Heap-free lexicographic permutation walk; the first minimum wins ties.
fn permute(p: &mut Vec<usize>, start: usize, visit: &mut dyn FnMut(&[usize])) {
    if start == p.len() {
        visit(p);
        return;
    }
    for i in start..p.len() {
        p[start..=i].rotate_right(1);
        permute(p, start + 1, visit);
        p[start..=i].rotate_left(1);
    }
}

fn greedy_assignment(prev: &[C64], next: &[C64]) -> Vec<usize> {
    let mut taken = vec![false; next.len()];
    prev.iter()
        .map(|p| {
            let (i, _) = next
                .iter()
                .enumerate()
                .filter(|(i, _)| !taken[*i])
                .min_by(|a, b| (a.1 - p).norm().total_cmp(&(b.1 - p).norm()))
                .expect("branch available");
            taken[i] = true;
            i
        })
        .collect()
}
