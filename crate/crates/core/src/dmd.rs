//! Local stencils: Krylov companion projection, the SVD least-squares local
//! operator and the naive moving-stencil spectrum.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, identity, principal_log, project_onto_span, CMatrix, CVector, C64};
use crate::snapshots::SnapshotMatrix;

/// Singular values below `DEFAULT_RANK_TOL * sigma_max` are discarded in the
/// local operator fit.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Snapshots `x_{k-1}, ..., x_{k+s-1}`: `s` consecutive pairs starting at
/// `(x_{k-1}, x_k)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StencilWindow {
    pub k: usize,
    pub s: usize,
}

impl StencilWindow {
    pub fn new(k: usize, s: usize) -> Self {
        Self { k, s }
    }

    /// Snapshot column indices covered by the window.
    pub fn columns(&self) -> Range<usize> {
        self.k - 1..self.k + self.s
    }

    pub fn last_column(&self) -> usize {
        self.k + self.s - 1
    }

    pub fn fits(&self, columns: usize) -> bool {
        self.k >= 1 && self.s >= 1 && self.last_column() < columns
    }

    pub fn validate(&self, columns: usize) -> Result<()> {
        if self.fits(columns) {
            Ok(())
        } else {
            Err(Error::InvalidWindow {
                k: self.k,
                s: self.s,
                columns,
            })
        }
    }
}

/// Krylov projection of the newest stencil snapshot onto the span of the
/// older ones.
#[derive(Debug, Clone, PartialEq)]
pub struct Companion {
    /// `c_0, ..., c_{s-1}` with `x_{k+s-1} ~ sum_j c_j x_{k-1+j}`.
    pub coefficients: CVector,
    pub residual_norm: f64,
    pub residual_rel: f64,
    pub rank: usize,
}

pub fn companion_coefficients(snaps: &SnapshotMatrix, window: StencilWindow) -> Result<Companion> {
    window.validate(snaps.columns())?;
    let cols = window.columns();
    if cols
        .clone()
        .all(|j| snaps.values.column(j).iter().all(|z| *z == c(0.0, 0.0)))
    {
        return Err(Error::DegenerateStencil(window.k));
    }
    let basis: Vec<CVector> = (cols.start..cols.end - 1).map(|j| snaps.column(j)).collect();
    let target = snaps.column(window.last_column());
    let projection = project_onto_span(&basis, &target)?;
    let residual_norm = projection.residual.norm();
    Ok(Companion {
        coefficients: projection.coefficients,
        residual_norm,
        residual_rel: relative(residual_norm, target.norm()),
        rank: projection.rank,
    })
}

/// Companion matrix with ones on the subdiagonal and the coefficients in
/// the last column.
pub fn companion_matrix(coefficients: &CVector) -> CMatrix {
    let s = coefficients.len();
    let mut m = CMatrix::zeros(s, s);
    for i in 1..s {
        m[(i, i - 1)] = c(1.0, 0.0);
    }
    m.set_column(s - 1, coefficients);
    m
}

fn relative(abs: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        abs / scale
    } else if abs == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Least-squares one-step operator on a stencil.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalOperator {
    pub matrix: CMatrix,
    /// Fit residual `||Y - M X||_F` over the stencil pairs.
    pub residual_norm: f64,
    /// `residual_norm / ||x_{k+s-1}||`.
    pub residual_rel: f64,
    pub window: StencilWindow,
    pub rank_used: usize,
}

/// Fits `M` minimising `sum_j ||x_{k+j} - M x_{k+j-1}||^2` over the window,
/// through a truncated SVD of `X = [x_{k-1} ... x_{k+s-2}]`.
///
/// With more pairs than the rank of `X` the fit is overdetermined, and its
/// residual vanishes exactly when one linear map explains every pair; a
/// window that straddles a switch therefore leaves a residual.
pub fn local_operator(snaps: &SnapshotMatrix, window: StencilWindow, rank_tol: f64) -> Result<LocalOperator> {
    window.validate(snaps.columns())?;
    let cols = window.columns();
    let x = snaps.values.columns(cols.start, window.s).into_owned();
    let y = snaps.values.columns(cols.start + 1, window.s).into_owned();
    fit_operator(&x, &y, window, rank_tol)
}

pub(crate) fn fit_operator(x: &CMatrix, y: &CMatrix, window: StencilWindow, rank_tol: f64) -> Result<LocalOperator> {
    let m = x.nrows();
    if x.iter().all(|z| *z == c(0.0, 0.0)) {
        return Err(Error::DegenerateStencil(window.k));
    }
    let linalg::Svd {
        u,
        singular_values: sigma,
        v_t,
    } = linalg::svd(x)?;
    let smax = sigma.first().copied().unwrap_or(0.0);
    let keep: Vec<usize> = (0..sigma.len()).filter(|&i| sigma[i] > rank_tol * smax).collect();
    if keep.is_empty() {
        return Err(Error::ZeroRank(window.k));
    }
    // M = Y V_r S_r^-1 U_r^H
    let mut pinv = CMatrix::zeros(x.ncols(), m);
    for &i in &keep {
        let vi = v_t.row(i).adjoint();
        let ui = u.column(i).adjoint();
        pinv += vi * ui * c(1.0 / sigma[i], 0.0);
    }
    let matrix = y * pinv;
    if !linalg::is_finite(&matrix) {
        return Err(Error::NonFinite("local operator"));
    }
    // Y (I - V_r V_r^H) stays accurate when X is badly conditioned.
    let y_fit = keep.iter().fold(CMatrix::zeros(y.nrows(), y.ncols()), |acc, &i| {
        let v = v_t.row(i);
        acc + (y * v.adjoint()) * v
    });
    let residual_norm = (y - y_fit).norm();
    let newest = y.column(y.ncols() - 1).norm();
    Ok(LocalOperator {
        matrix,
        residual_norm,
        residual_rel: relative(residual_norm, newest),
        window,
        rank_used: keep.len(),
    })
}

/// Fits every window `k = 1..=last` in parallel; `None` marks windows that
/// run past the final snapshot.
pub(crate) fn fit_all<F>(columns: usize, s: usize, fit: F) -> Vec<Option<Result<LocalOperator>>>
where
    F: Fn(StencilWindow) -> Result<LocalOperator> + Sync,
{
    (1..columns)
        .into_par_iter()
        .map(|k| {
            let window = StencilWindow::new(k, s);
            window.fits(columns).then(|| fit(window))
        })
        .collect()
}

/// Eigenvalue series per grid step with branch continuity.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralTimeSeries {
    pub grid: crate::snapshots::TimeGrid,
    /// Continuous-time eigenvalues `log(mu)/dt` of the local operator
    /// attributed to step `k` (interval `[t_{k-1}, t_k]`); entry 0 repeats
    /// entry 1.
    pub system_eigs: Vec<Vec<C64>>,
    /// Koopman exponents `lambda(t_k, t_0)`; all zero at `k = 0`.
    pub koopman_eigs: Vec<Vec<C64>>,
    /// Residuals of the window attributed to step `k`; NaN where the window
    /// runs past the data or at `k = 0`.
    pub residual_abs: Vec<f64>,
    pub residual_rel: Vec<f64>,
    pub switch_flags: Vec<bool>,
    /// `matching[k][b]`: index into the canonical eigenvalue order at step
    /// `k` followed by branch `b`.
    pub matching: Vec<Vec<usize>>,
    /// Steps where two eigenvalues coincided and matching fell back to the
    /// canonical order.
    pub collisions: Vec<bool>,
}

impl SpectralTimeSeries {
    pub fn branches(&self) -> usize {
        self.koopman_eigs.first().map(Vec::len).unwrap_or(0)
    }
}

/// Local operators and their running product `M_{k,0}`.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorFamily {
    pub grid: crate::snapshots::TimeGrid,
    /// `locals[k - 1]` is the operator used for step `k`.
    pub locals: Vec<LocalOperator>,
    /// `accumulated[k] = M_{k,0}`, `accumulated[0] = I`.
    pub accumulated: Vec<CMatrix>,
}

impl OperatorFamily {
    pub fn from_locals(grid: crate::snapshots::TimeGrid, locals: Vec<LocalOperator>) -> Result<Self> {
        let n = locals
            .first()
            .map(|l| l.matrix.nrows())
            .ok_or(Error::TooShort { columns: 1, needed: 2 })?;
        let mut accumulated = Vec::with_capacity(locals.len() + 1);
        accumulated.push(identity(n));
        for local in &locals {
            let next = &local.matrix * accumulated.last().unwrap();
            if !linalg::is_finite(&next) {
                return Err(Error::NonFinite("accumulated operator"));
            }
            accumulated.push(next);
        }
        Ok(Self {
            grid,
            locals,
            accumulated,
        })
    }
}

/// Accumulates per-step argument increments of matched eigenvalue branches.
///
/// Branches are matched against positions extrapolated from their last
/// step, so conjugate pairs that meet on the negative real axis cross
/// instead of bouncing back.
#[derive(Debug, Clone)]
pub struct BranchTracker {
    previous: Vec<C64>,
    ratio: Vec<C64>,
    lambda: Vec<C64>,
}

impl BranchTracker {
    pub fn new(n: usize) -> Self {
        Self {
            previous: vec![c(1.0, 0.0); n],
            ratio: vec![c(1.0, 0.0); n],
            lambda: vec![c(0.0, 0.0); n],
        }
    }

    /// Feeds the (canonically ordered) eigenvalues of the next `M_{k,0}`.
    pub fn advance(&mut self, values: &[C64]) -> (Vec<usize>, bool) {
        let predicted: Vec<C64> = self.previous.iter().zip(&self.ratio).map(|(p, r)| p * r).collect();
        let (perm, collided) = linalg::match_branches(&predicted, values);
        for (b, &i) in perm.iter().enumerate() {
            let mu = values[i];
            let step = mu / self.previous[b];
            self.ratio[b] = if step.is_finite() { step } else { c(1.0, 0.0) };
            self.lambda[b] = c(mu.norm().ln(), self.lambda[b].im + step.arg());
            self.previous[b] = mu;
        }
        (perm, collided)
    }

    pub fn exponents(&self) -> &[C64] {
        &self.lambda
    }
}

/// Orders local-operator eigenvalues to follow the previous step's branches.
pub(crate) struct SystemTracker {
    previous: Option<Vec<C64>>,
}

impl SystemTracker {
    pub(crate) fn new() -> Self {
        Self { previous: None }
    }

    pub(crate) fn order(&mut self, mut rates: Vec<C64>) -> Vec<C64> {
        if let Some(prev) = &self.previous {
            let (perm, _) = linalg::match_branches(prev, &rates);
            rates = perm.iter().map(|&i| rates[i]).collect();
        }
        self.previous = Some(rates.clone());
        rates
    }
}

/// Builds the spectral series of a family of per-step operators.
pub(crate) fn spectral_series(
    family: &OperatorFamily,
    residual_abs: Vec<f64>,
    residual_rel: Vec<f64>,
    switch_flags: Vec<bool>,
) -> Result<SpectralTimeSeries> {
    let dt = family.grid.dt;
    let n = family.accumulated[0].nrows();
    let local_rates: Vec<Vec<C64>> = family
        .locals
        .par_iter()
        .map(|l| linalg::eigenvalues(&l.matrix).map(|mu| mu.into_iter().map(|z| principal_log(z) / dt).collect()))
        .collect::<Result<_>>()?;
    let accumulated_mu: Vec<Vec<C64>> = family.accumulated[1..]
        .par_iter()
        .map(linalg::eigenvalues)
        .collect::<Result<_>>()?;

    let mut system = SystemTracker::new();
    let mut system_eigs = Vec::with_capacity(family.accumulated.len());
    for rates in local_rates {
        system_eigs.push(system.order(rates));
    }
    system_eigs.insert(0, system_eigs.first().cloned().unwrap_or_default());

    let mut tracker = BranchTracker::new(n);
    let mut koopman_eigs = vec![vec![c(0.0, 0.0); n]];
    let mut matching = vec![(0..n).collect::<Vec<_>>()];
    let mut collisions = vec![false];
    for mu in &accumulated_mu {
        let (perm, collided) = tracker.advance(mu);
        koopman_eigs.push(tracker.exponents().to_vec());
        matching.push(perm);
        collisions.push(collided);
    }
    Ok(SpectralTimeSeries {
        grid: family.grid,
        system_eigs,
        koopman_eigs,
        residual_abs,
        residual_rel,
        switch_flags,
        matching,
        collisions,
    })
}

/// Result of the moving-stencil baseline.
#[derive(Debug, Clone)]
pub struct MovingStencil {
    pub series: SpectralTimeSeries,
    pub family: OperatorFamily,
}

/// Plain DMD on every window `(k, s)` with no switch handling: the local
/// operator of window `k` is used for step `k` and simply accumulated.
/// Windows running past the data reuse the last fitted operator.
pub fn moving_stencil_spectrum(snaps: &SnapshotMatrix, s: usize, rank_tol: f64) -> Result<MovingStencil> {
    if s < 2 {
        return Err(Error::InvalidParameter("moving stencil needs s >= 2".into()));
    }
    let columns = snaps.columns();
    if columns < s + 1 {
        return Err(Error::TooShort { columns, needed: s + 1 });
    }
    let fitted = fit_all(columns, s, |w| local_operator(snaps, w, rank_tol));
    let mut locals: Vec<LocalOperator> = Vec::with_capacity(columns - 1);
    let mut residual_abs = vec![f64::NAN];
    let mut residual_rel = vec![f64::NAN];
    for (offset, fit) in fitted.into_iter().enumerate() {
        match fit {
            Some(result) => {
                let op = result?;
                residual_abs.push(op.residual_norm);
                residual_rel.push(op.residual_rel);
                locals.push(op);
            }
            None => {
                let mut op = locals.last().expect("first window fits").clone();
                op.window = StencilWindow::new(offset + 1, s);
                residual_abs.push(f64::NAN);
                residual_rel.push(f64::NAN);
                locals.push(op);
            }
        }
    }
    let family = OperatorFamily::from_locals(snaps.grid, locals)?;
    let flags = vec![false; columns];
    let series = spectral_series(&family, residual_abs, residual_rel, flags)?;
    Ok(MovingStencil { series, family })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{eigenvalues, expm, real_matrix, real_vector};
    use crate::snapshots::{sample_trajectory, TimeGrid};
    use crate::systems::{catalog, SystemSpec};
    use std::collections::BTreeMap;

    fn geometric(g: &CMatrix, x0: &CVector, steps: usize, dt: f64) -> SnapshotMatrix {
        let mut cols = vec![x0.clone()];
        for _ in 0..steps {
            let next = g * cols.last().unwrap();
            cols.push(next);
        }
        let values = CMatrix::from_columns(&cols);
        let labels = (1..=x0.len()).map(|i| format!("x{i}")).collect();
        SnapshotMatrix::new(TimeGrid::new(0.0, dt, steps).unwrap(), values, labels).unwrap()
    }

    #[test]
    fn window_geometry() {
        let w = StencilWindow::new(3, 2);
        assert_eq!(w.columns(), 2..5);
        assert!(w.fits(5) && !w.fits(4));
        assert!(!StencilWindow::new(0, 2).fits(10));
    }

    #[test]
    fn companion_scalar_geometric() {
        let snaps = geometric(&real_matrix(1, 1, &[0.9]), &real_vector(&[2.0]), 4, 0.1);
        let comp = companion_coefficients(&snaps, StencilWindow::new(1, 1)).unwrap();
        assert!((comp.coefficients[0] - c(0.9, 0.0)).norm() < 1e-15);
        assert!(comp.residual_norm < 1e-15);
    }

    #[test]
    fn companion_exact_for_constant_planar_system() {
        let a = real_matrix(2, 2, &[0.1, 1.0, -3.0, -0.2]);
        let g = expm(&(a * c(0.01, 0.0))).unwrap();
        let snaps = geometric(&g, &real_vector(&[1.0, 1.0]), 10, 0.01);
        let w = StencilWindow::new(4, 2);
        let comp = companion_coefficients(&snaps, w).unwrap();
        assert!(comp.residual_rel <= 1e-12);
        // companion and operator share their spectrum on a full-rank stencil
        let mut cm: Vec<C64> = eigenvalues(&companion_matrix(&comp.coefficients)).unwrap();
        let mut gm: Vec<C64> = eigenvalues(&g).unwrap();
        cm.sort_by(|a, b| a.im.partial_cmp(&b.im).unwrap());
        gm.sort_by(|a, b| a.im.partial_cmp(&b.im).unwrap());
        for (x, y) in cm.iter().zip(&gm) {
            assert!((x - y).norm() < 1e-9);
        }
    }

    #[test]
    fn companion_rejects_zero_stencil() {
        let snaps = geometric(&identity(2), &real_vector(&[0.0, 0.0]), 3, 1.0);
        assert!(matches!(
            companion_coefficients(&snaps, StencilWindow::new(1, 2)),
            Err(Error::DegenerateStencil(1))
        ));
        assert!(matches!(
            local_operator(&snaps, StencilWindow::new(1, 2), DEFAULT_RANK_TOL),
            Err(Error::DegenerateStencil(1))
        ));
    }

    #[test]
    fn operator_recovers_generator_map() {
        let g = real_matrix(3, 3, &[0.9, 0.1, 0.0, -0.2, 1.0, 0.05, 0.0, 0.3, 0.95]);
        let snaps = geometric(&g, &real_vector(&[1.0, -0.5, 2.0]), 8, 0.1);
        for s in [3, 4] {
            let op = local_operator(&snaps, StencilWindow::new(2, s), DEFAULT_RANK_TOL).unwrap();
            assert_eq!(op.rank_used, 3);
            assert!((&op.matrix - &g).norm() < 1e-10, "s={s}");
            assert!(op.residual_rel < 1e-12);
        }
    }

    #[test]
    fn operator_inside_first_segment() {
        let spec = catalog("switching-frequency", &BTreeMap::new()).unwrap();
        let grid = TimeGrid::new(0.0, 0.01, 300).unwrap();
        let snaps = sample_trajectory(&spec, &real_vector(&[1.0, 1.0]), grid).unwrap();
        let op = local_operator(&snaps, StencilWindow::new(20, 2), DEFAULT_RANK_TOL).unwrap();
        let mut mu = eigenvalues(&op.matrix).unwrap();
        mu.sort_by(|a, b| b.im.partial_cmp(&a.im).unwrap());
        assert!((mu[0] - c(0.0, 0.02).exp()).norm() < 1e-10);
        assert!((mu[1] - c(0.0, -0.02).exp()).norm() < 1e-10);
    }

    #[test]
    fn rank_one_stencil() {
        let g = real_matrix(2, 2, &[0.5, 0.0, 0.0, 2.0]);
        let snaps = geometric(&g, &real_vector(&[3.0, 0.0]), 5, 1.0);
        let op = local_operator(&snaps, StencilWindow::new(1, 3), DEFAULT_RANK_TOL).unwrap();
        assert_eq!(op.rank_used, 1);
        let v = real_vector(&[1.0, 0.0]);
        assert!((&op.matrix * &v - v * c(0.5, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn straddling_window_leaves_residual() {
        let spec = catalog("switching-frequency", &BTreeMap::new()).unwrap();
        let grid = TimeGrid::new(0.0, 0.01, 200).unwrap();
        let snaps = sample_trajectory(&spec, &real_vector(&[1.0, 1.0]), grid).unwrap();
        // switch at t = 1 = t_100; window k = 99 holds pairs up to (t_101, t_102)
        let straddle = local_operator(&snaps, StencilWindow::new(99, 3), DEFAULT_RANK_TOL).unwrap();
        let interior = local_operator(&snaps, StencilWindow::new(50, 3), DEFAULT_RANK_TOL).unwrap();
        assert!(straddle.residual_rel > 1e-4, "{}", straddle.residual_rel);
        assert!(interior.residual_rel < 1e-12);
    }

    #[test]
    fn moving_stencil_constant_system() {
        let a = real_matrix(2, 2, &[-0.1, 2.0, -2.0, -0.1]);
        let spec = SystemSpec::constant(a.clone()).unwrap();
        let grid = TimeGrid::new(0.0, 0.01, 100).unwrap();
        let snaps = sample_trajectory(&spec, &real_vector(&[1.0, 0.0]), grid).unwrap();
        let result = moving_stencil_spectrum(&snaps, 2, DEFAULT_RANK_TOL).unwrap();
        let mut exact = eigenvalues(&a).unwrap();
        exact.sort_by(|a, b| a.im.partial_cmp(&b.im).unwrap());
        for k in 0..=100 {
            let mut got = result.series.system_eigs[k].clone();
            got.sort_by(|a, b| a.im.partial_cmp(&b.im).unwrap());
            for (x, y) in got.iter().zip(&exact) {
                assert!((x - y).norm() < 1e-8, "k={k}");
            }
        }
        assert!(result.series.residual_rel[100].is_nan());
        assert_eq!(result.family.accumulated.len(), 101);
    }
}
