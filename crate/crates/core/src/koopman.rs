//! Data-driven Koopman spectra of non-autonomous linear systems: the hybrid
//! (switch-detecting) algorithm, the decoupled-observable algorithm, mode
//! decomposition, the error metric against an oracle, and the leading-order
//! bias predictor for moving-stencil DMD on spiral systems.

use std::f64::consts::FRAC_PI_2;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dmd::{self, fit_operator, spectral_series, LocalOperator, StencilWindow};
pub use crate::dmd::{BranchTracker, OperatorFamily, SpectralTimeSeries};
use crate::error::{Error, Result};
use crate::linalg::{self, c, eig, identity, principal_log, spectral_norm, CMatrix, CVector, C64};
use crate::snapshots::{select_active_observables, ObservableMap, SnapshotMatrix, TimeGrid, DEFAULT_ACTIVITY_TOL};
use crate::systems::{fundamental_matrix, KoopmanSpectrumExact, SpiralBlock, SystemSpec};

pub const DEFAULT_EPSILON_REL: f64 = 1e-6;
/// Largest admissible per-step phase turn of an observable in the
/// decoupled algorithm.
pub const DEFAULT_MAX_PHASE_STEP: f64 = FRAC_PI_2;
/// Eigenbases with a larger condition number are rejected for mode expansions.
pub const MAX_CONDITION: f64 = 1e8;

/// Per-window restriction to the observables that actually move.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActiveSelection {
    pub tol: f64,
    /// Row reconstructed from the conserved sum of all rows.
    pub conserved_row: Option<usize>,
}

impl Default for ActiveSelection {
    fn default() -> Self {
        Self {
            tol: DEFAULT_ACTIVITY_TOL,
            conserved_row: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Algorithm1Options {
    /// Threshold on the relative fit residual of a window.
    pub epsilon_rel: f64,
    /// Number of snapshot pairs per window; defaults to the number of
    /// independent observables plus one.
    pub stencil: Option<usize>,
    pub rank_tol: f64,
    pub active: Option<ActiveSelection>,
}

impl Default for Algorithm1Options {
    fn default() -> Self {
        Self {
            epsilon_rel: DEFAULT_EPSILON_REL,
            stencil: None,
            rank_tol: dmd::DEFAULT_RANK_TOL,
            active: None,
        }
    }
}

/// A maximal run of flagged windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchEvent {
    /// Estimated switch time: the newest snapshot time of the first
    /// flagged window's consistent part, `t_{k_first + s - 2}`.
    pub time: f64,
    /// Interval that certainly contains the switch (or switches).
    pub interval: (f64, f64),
    pub first_window: usize,
    pub last_window: usize,
    /// More flagged windows than one switch explains: several switches
    /// fell inside one stencil span and were merged.
    pub merged: bool,
}

#[derive(Debug, Clone)]
pub struct Algorithm1Result {
    pub series: SpectralTimeSeries,
    pub family: OperatorFamily,
    pub switches: Vec<SwitchEvent>,
    pub stencil: usize,
    /// Rows fitted for step `k` (index `k - 1`); all rows without selection.
    pub active_rows: Vec<Vec<usize>>,
}

fn embed(op: LocalOperator, rows: &[usize], n: usize, conserved: Option<usize>) -> LocalOperator {
    let mut matrix = identity(n);
    for (a, &i) in rows.iter().enumerate() {
        for (b, &j) in rows.iter().enumerate() {
            matrix[(i, j)] = op.matrix[(a, b)];
        }
    }
    if let Some(cr) = conserved {
        // the conserved total fixes row cr: 1^T M = 1^T
        for j in 0..n {
            let others: C64 = (0..n).filter(|&i| i != cr).map(|i| matrix[(i, j)]).sum();
            matrix[(cr, j)] = c(1.0, 0.0) - others;
        }
    }
    LocalOperator { matrix, ..op }
}

/// Hybrid-system algorithm: local least-squares operators on sliding
/// windows, with windows whose relative residual exceeds `epsilon_rel`
/// treated as switch-contaminated and replaced by the previous operator.
///
/// Window `k` covers snapshots `t_{k-1} .. t_{k+s-1}` and supplies the
/// operator for the step `t_{k-1} -> t_k`.
pub fn algorithm1(snaps: &SnapshotMatrix, options: &Algorithm1Options) -> Result<Algorithm1Result> {
    if !(options.epsilon_rel > 0.0) {
        return Err(Error::InvalidParameter("epsilon_rel must be positive".into()));
    }
    let n = snaps.rows();
    let conserved = options.active.and_then(|a| a.conserved_row);
    if let Some(cr) = conserved {
        if cr >= n {
            return Err(Error::InvalidParameter(format!("conserved row {cr} out of range")));
        }
    }
    let independent = n - usize::from(conserved.is_some());
    let s = options.stencil.unwrap_or(independent + 1);
    if s < 2 {
        return Err(Error::InvalidParameter("stencil must hold at least two pairs".into()));
    }
    let columns = snaps.columns();
    if columns < s + 1 {
        return Err(Error::TooShort { columns, needed: s + 1 });
    }

    let fit = |window: StencilWindow| -> Result<(LocalOperator, Vec<usize>)> {
        match options.active {
            None => Ok((dmd::local_operator(snaps, window, options.rank_tol)?, (0..n).collect())),
            Some(sel) => {
                let rows = select_active_observables(snaps, window, sel.tol, sel.conserved_row)?;
                let cols = window.columns();
                let x = CMatrix::from_fn(rows.len(), window.s, |i, j| snaps.values[(rows[i], cols.start + j)]);
                let y = CMatrix::from_fn(rows.len(), window.s, |i, j| snaps.values[(rows[i], cols.start + 1 + j)]);
                let op = fit_operator(&x, &y, window, options.rank_tol)?;
                Ok((embed(op, &rows, n, sel.conserved_row), rows))
            }
        }
    };
    type Fitted = Option<Result<(LocalOperator, Vec<usize>)>>;
    let fitted: Vec<Fitted> = (1..columns)
        .into_par_iter()
        .map(|k| {
            let window = StencilWindow::new(k, s);
            window.fits(columns).then(|| fit(window))
        })
        .collect();

    let mut locals: Vec<LocalOperator> = Vec::with_capacity(columns - 1);
    let mut residual_abs = vec![f64::NAN];
    let mut residual_rel = vec![f64::NAN];
    let mut flags = vec![false];
    let mut active_rows = Vec::with_capacity(columns - 1);
    for (offset, item) in fitted.into_iter().enumerate() {
        let k = offset + 1;
        let window = StencilWindow::new(k, s);
        match item {
            Some(result) => {
                let (op, rows) = result?;
                let flagged = op.residual_rel > options.epsilon_rel;
                residual_abs.push(op.residual_norm);
                residual_rel.push(op.residual_rel);
                flags.push(flagged);
                if flagged {
                    let previous = locals.last().ok_or(Error::WarmUp { stencil: s })?;
                    let reused = LocalOperator {
                        matrix: previous.matrix.clone(),
                        rank_used: previous.rank_used,
                        ..op
                    };
                    active_rows.push(active_rows.last().cloned().unwrap_or_default());
                    locals.push(reused);
                } else {
                    active_rows.push(rows);
                    locals.push(op);
                }
            }
            None => {
                let previous = locals.last().expect("first window always fits");
                let reused = LocalOperator {
                    window,
                    residual_norm: f64::NAN,
                    residual_rel: f64::NAN,
                    ..previous.clone()
                };
                residual_abs.push(f64::NAN);
                residual_rel.push(f64::NAN);
                flags.push(false);
                active_rows.push(active_rows.last().cloned().unwrap_or_default());
                locals.push(reused);
            }
        }
    }
    let family = OperatorFamily::from_locals(snaps.grid, locals)?;
    let switches = switch_events(&flags, s, snaps.grid);
    let series = spectral_series(&family, residual_abs, residual_rel, flags)?;
    Ok(Algorithm1Result {
        series,
        family,
        switches,
        stencil: s,
        active_rows,
    })
}

fn switch_events(flags: &[bool], s: usize, grid: TimeGrid) -> Vec<SwitchEvent> {
    let mut events = Vec::new();
    let mut k = 1;
    while k < flags.len() {
        if !flags[k] {
            k += 1;
            continue;
        }
        let first = k;
        while k + 1 < flags.len() && flags[k + 1] {
            k += 1;
        }
        let last = k;
        let at = |j: usize| grid.time(j.min(grid.steps));
        events.push(SwitchEvent {
            time: at(first + s - 2),
            interval: (at((first + s).saturating_sub(3)), at(last + 1)),
            first_window: first,
            last_window: last,
            merged: last + 1 - first > s,
        });
        k += 1;
    }
    events
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Algorithm2Options {
    pub max_phase_step: f64,
}

impl Default for Algorithm2Options {
    fn default() -> Self {
        Self {
            max_phase_step: DEFAULT_MAX_PHASE_STEP,
        }
    }
}

/// Decoupled-observable algorithm: every observable row is its own
/// one-dimensional stencil of two snapshots, so the local operator is the
/// diagonal of one-step ratios and each row is its own eigenvalue branch.
pub fn algorithm2(u: &SnapshotMatrix, options: &Algorithm2Options) -> Result<(SpectralTimeSeries, OperatorFamily)> {
    let m = u.rows();
    let columns = u.columns();
    if columns < 2 {
        return Err(Error::TooShort { columns, needed: 2 });
    }
    let dt = u.grid.dt;
    let mut locals = Vec::with_capacity(columns - 1);
    let mut system_eigs = Vec::with_capacity(columns);
    let mut koopman_eigs = vec![vec![c(0.0, 0.0); m]];
    for k in 1..columns {
        let mut logs = Vec::with_capacity(m);
        let mut ratios = CVector::zeros(m);
        for i in 0..m {
            let den = u.values[(i, k - 1)];
            if den == c(0.0, 0.0) {
                return Err(Error::ZeroDenominator { row: i, step: k });
            }
            let ratio = u.values[(i, k)] / den;
            let local = principal_log(ratio);
            if !local.re.is_finite() {
                return Err(Error::ZeroDenominator { row: i, step: k });
            }
            if local.im.abs() > options.max_phase_step {
                return Err(Error::Aliasing {
                    row: i,
                    step: k,
                    phase: local.im,
                    limit: options.max_phase_step,
                });
            }
            ratios[i] = ratio;
            logs.push(local);
        }
        let previous = koopman_eigs.last().unwrap();
        koopman_eigs.push(previous.iter().zip(&logs).map(|(a, b)| a + b).collect());
        system_eigs.push(logs.iter().map(|l| l / dt).collect::<Vec<_>>());
        locals.push(LocalOperator {
            matrix: CMatrix::from_diagonal(&ratios),
            residual_norm: 0.0,
            residual_rel: 0.0,
            window: StencilWindow::new(k, 1),
            rank_used: m,
        });
    }
    system_eigs.insert(0, system_eigs[0].clone());
    let family = OperatorFamily::from_locals(u.grid, locals)?;
    let mut residual = vec![0.0; columns];
    residual[0] = f64::NAN;
    let series = SpectralTimeSeries {
        grid: u.grid,
        system_eigs,
        koopman_eigs,
        residual_abs: residual.clone(),
        residual_rel: residual,
        switch_flags: vec![false; columns],
        matching: vec![(0..m).collect(); columns],
        collisions: vec![false; columns],
    };
    Ok((series, family))
}

/// Branch-tracked Koopman exponents of an accumulated operator family.
#[derive(Debug, Clone, PartialEq)]
pub struct KoopmanBranches {
    pub koopman_eigs: Vec<Vec<C64>>,
    pub matching: Vec<Vec<usize>>,
    pub collisions: Vec<bool>,
}

pub fn extract_koopman_eigs(family: &OperatorFamily) -> Result<KoopmanBranches> {
    let columns = family.accumulated.len();
    let nan = vec![f64::NAN; columns];
    let series = spectral_series(family, nan.clone(), nan, vec![false; columns])?;
    Ok(KoopmanBranches {
        koopman_eigs: series.koopman_eigs,
        matching: series.matching,
        collisions: series.collisions,
    })
}

/// Eigenvalues in state coordinates recovered from a polar-observable series.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpectrum {
    /// Per step: `sigma +- i omega` for each pair, then unpaired rows.
    pub system_eigs: Vec<Vec<C64>>,
    /// Per step: `alpha +- i beta` for each pair, then unpaired rows.
    pub koopman_eigs: Vec<Vec<C64>>,
}

/// Maps the radius/phase branches back to conjugate state eigenvalues:
/// the radius carries the real part, the phase carries `-i` times the
/// imaginary part.
pub fn state_spectrum(series: &SpectralTimeSeries, map: &ObservableMap) -> Result<StateSpectrum> {
    if series.branches() != map.observable_dim() {
        return Err(Error::DimensionMismatch(format!(
            "{} branches for an observable map of dimension {}",
            series.branches(),
            map.observable_dim()
        )));
    }
    let convert = |row: &Vec<C64>| -> Vec<C64> {
        let mut out = Vec::with_capacity(row.len());
        for p in 0..map.pairs.len() {
            let (r, ph) = map.pair_rows(p);
            let (re, im) = (row[r].re, -row[ph].im);
            out.push(c(re, im));
            out.push(c(re, -im));
        }
        out.extend_from_slice(&row[2 * map.pairs.len()..]);
        out
    };
    Ok(StateSpectrum {
        system_eigs: series.system_eigs.iter().map(convert).collect(),
        koopman_eigs: series.koopman_eigs.iter().map(convert).collect(),
    })
}

/// Principal-log eigenvalues, eigenfunction values at `x0` and modes of a
/// fundamental-matrix approximation.
#[derive(Debug, Clone)]
pub struct KoopmanDecomposition {
    pub eigenvalues: Vec<C64>,
    /// `phi_i(x0) = w_i^H x0`.
    pub amplitudes: Vec<C64>,
    pub modes: CMatrix,
    pub weights: CMatrix,
    pub condition: f64,
}

impl KoopmanDecomposition {
    /// `sum_i e^{lambda_i} phi_i(x0) v_i`.
    pub fn reconstruct(&self) -> CVector {
        let mut x = CVector::zeros(self.modes.nrows());
        for i in 0..self.eigenvalues.len() {
            x += self.modes.column(i) * (self.eigenvalues[i].exp() * self.amplitudes[i]);
        }
        x
    }
}

pub fn koopman_mode_decomposition(m: &CMatrix, x0: &CVector) -> Result<KoopmanDecomposition> {
    if x0.len() != m.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "initial state of length {} for a {}x{} operator",
            x0.len(),
            m.nrows(),
            m.ncols()
        )));
    }
    let d = eig(m)?;
    if !(d.condition <= MAX_CONDITION) {
        return Err(Error::IllConditioned(d.condition));
    }
    let amplitudes = (0..d.values.len()).map(|i| d.left.column(i).dotc(x0)).collect();
    Ok(KoopmanDecomposition {
        eigenvalues: d.values.iter().map(|&mu| principal_log(mu)).collect(),
        amplitudes,
        modes: d.right,
        weights: d.left,
        condition: d.condition,
    })
}

/// `E_k = ||M_{k,0} - M(t_k, t_0)||_2 / ||M(t_k, t_0)||_2`.
pub fn error_ek(family: &OperatorFamily, spec: &SystemSpec) -> Result<Vec<f64>> {
    if !spec.has_oracle() {
        return Err(Error::Unsupported("E_k needs a closed-form fundamental matrix".into()));
    }
    if family.accumulated[0].nrows() != spec.dim() {
        return Err(Error::DimensionMismatch(format!(
            "operator family of size {} for a {}-dimensional system",
            family.accumulated[0].nrows(),
            spec.dim()
        )));
    }
    let grid = family.grid;
    family
        .accumulated
        .par_iter()
        .enumerate()
        .map(|(k, m)| {
            let exact = fundamental_matrix(spec, grid.time(k), grid.t0)?.matrix;
            Ok(spectral_norm(&(m - &exact)) / spectral_norm(&exact))
        })
        .collect()
}

/// Reference family built from the exact one-step fundamental matrices
/// `M(t_k, t_{k-1})`, with its spectrum tracked like a data-driven run.
pub fn exact_family(spec: &SystemSpec, grid: TimeGrid) -> Result<(SpectralTimeSeries, OperatorFamily)> {
    if grid.steps == 0 {
        return Err(Error::TooShort { columns: 1, needed: 2 });
    }
    let locals = (1..grid.columns())
        .into_par_iter()
        .map(|k| {
            let matrix = fundamental_matrix(spec, grid.time(k), grid.time(k - 1))?.matrix;
            Ok(LocalOperator {
                matrix,
                residual_norm: 0.0,
                residual_rel: 0.0,
                window: StencilWindow::new(k, 1),
                rank_used: spec.dim(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let family = OperatorFamily::from_locals(grid, locals)?;
    let columns = grid.columns();
    let series = spectral_series(&family, vec![0.0; columns], vec![0.0; columns], vec![false; columns])?;
    Ok((series, family))
}

/// Largest distance per step between computed and exact Koopman exponents
/// after optimal branch matching.
pub fn max_eigenvalue_deviation(series: &SpectralTimeSeries, exact: &[KoopmanSpectrumExact]) -> Result<f64> {
    if exact.len() != series.koopman_eigs.len() {
        return Err(Error::DimensionMismatch("series lengths differ".into()));
    }
    let mut worst: f64 = 0.0;
    for (computed, reference) in series.koopman_eigs.iter().zip(exact) {
        if computed.len() != reference.eigenvalues.len() {
            return Err(Error::DimensionMismatch("branch counts differ".into()));
        }
        let (perm, _) = linalg::match_branches(&reference.eigenvalues, computed);
        for (b, &i) in perm.iter().enumerate() {
            worst = worst.max((computed[i] - reference.eigenvalues[b]).norm());
        }
    }
    Ok(worst)
}

/// Leading-order predictions `(ln|mu|, Arg mu)` for the companion
/// eigenvalues of a three-snapshot stencil centred at `t` on a spiral
/// system with rates `sigma(t)`, `omega(t)`.
///
/// The snapshots of a spiral block satisfy `x'' - p x' + q x = 0` with
/// `p = 2 sigma + omega'/omega` and `q = omega^2 + sigma^2 - sigma' + sigma omega'/omega`,
/// so the companion roots approach `exp((p/2 +- i sqrt(q - p^2/4)) dt)`.
/// The imaginary part carries `omega^2 - sigma' - omega'^2 / (4 omega^2)`;
/// [`theorem2_arg_without_drift`] drops the last term.
pub fn theorem2_bias(sigma: f64, sigma_dot: f64, omega: f64, omega_dot: f64, dt: f64) -> Result<(f64, f64)> {
    theorem2_arg_without_drift(sigma_dot, omega, dt)?;
    let radicand = 1.0 - sigma_dot / (omega * omega) - (omega_dot / (2.0 * omega * omega)).powi(2);
    if radicand < 0.0 {
        return Err(Error::Domain(format!("arg radicand {radicand} is negative")));
    }
    Ok(((sigma + omega_dot / (2.0 * omega)) * dt, omega * dt * radicand.sqrt()))
}

/// `omega dt sqrt(1 - sigma'/omega^2)`: the argument prediction without the
/// `omega'^2` correction, exact to leading order only when `omega' = 0`.
pub fn theorem2_arg_without_drift(sigma_dot: f64, omega: f64, dt: f64) -> Result<f64> {
    if omega == 0.0 {
        return Err(Error::Domain("omega must be nonzero".into()));
    }
    let radicand = 1.0 - sigma_dot / (omega * omega);
    if radicand < 0.0 {
        return Err(Error::Domain(format!("1 - sigma'/omega^2 = {radicand} is negative")));
    }
    Ok(omega * dt * radicand.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem2Row {
    pub dt: f64,
    /// `ln|mu| / dt` of the companion eigenvalues.
    pub measured_re: f64,
    /// `|Arg mu| / dt`.
    pub measured_arg: f64,
    pub predicted_re: f64,
    pub predicted_arg: f64,
    /// [`theorem2_arg_without_drift`] per unit time.
    pub predicted_arg_without_drift: f64,
    /// The true rates `sigma(t)` and `|omega(t)|` at the stencil centre.
    pub exact_re: f64,
    pub exact_arg: f64,
}

impl Theorem2Row {
    pub fn residual_re(&self) -> f64 {
        (self.measured_re - self.predicted_re).abs()
    }

    pub fn residual_arg(&self) -> f64 {
        (self.measured_arg - self.predicted_arg).abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem2Sweep {
    pub t: f64,
    pub rows: Vec<Theorem2Row>,
    /// Least-squares slope of `log residual` against `log dt`; `None` when
    /// fewer than two residuals rise above round-off.
    pub order_re: Option<f64>,
    pub order_arg: Option<f64>,
}

/// Residuals (per unit time) below this are round-off and excluded from the
/// order fit; companion roots of a three-snapshot stencil lose about
/// `eps / dt^3` to cancellation.
pub const ORDER_FLOOR: f64 = 1e-8;

pub fn empirical_order(dts: &[f64], residuals: &[f64]) -> Option<f64> {
    let points: Vec<(f64, f64)> = dts
        .iter()
        .zip(residuals)
        .filter(|(_, &r)| r > ORDER_FLOOR && r.is_finite())
        .map(|(&h, &r)| (h.ln(), r.ln()))
        .collect();
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Measures the companion eigenvalues of `x(t - dt), x(t), x(t + dt)` for one
/// spiral block at each `dt` and compares them with [`theorem2_bias`].
pub fn theorem2_sweep(block: &SpiralBlock, x0: (f64, f64), t0: f64, t: f64, dts: &[f64]) -> Result<Theorem2Sweep> {
    let state = |tau: f64| -> CVector {
        let (alpha, beta) = block.exponents(t0, tau);
        let g = alpha.exp();
        let (s, co) = beta.sin_cos();
        CVector::from_vec(vec![
            c(g * (co * x0.0 + s * x0.1), 0.0),
            c(g * (-s * x0.0 + co * x0.1), 0.0),
        ])
    };
    let (sigma, omega) = (block.sigma.value(t), block.omega.value(t));
    let (sigma_dot, omega_dot) = (block.sigma.derivative(t), block.omega.derivative(t));
    let mut rows = Vec::with_capacity(dts.len());
    for &dt in dts {
        if !(dt > 0.0) || t - dt < t0 {
            return Err(Error::InvalidParameter(format!(
                "dt = {dt} must be positive with t - dt >= t0"
            )));
        }
        let grid = TimeGrid::new(t - dt, dt, 2)?;
        let cols = [state(t - dt), state(t), state(t + dt)];
        let snaps = SnapshotMatrix::new(grid, CMatrix::from_columns(&cols), vec!["xa".into(), "xb".into()])?;
        let comp = dmd::companion_coefficients(&snaps, StencilWindow::new(1, 2))?;
        let mu = linalg::eigenvalues(&dmd::companion_matrix(&comp.coefficients))?;
        let top = mu
            .iter()
            .copied()
            .max_by(|a, b| a.im.partial_cmp(&b.im).unwrap())
            .expect("two eigenvalues");
        let (pred_re, pred_arg) = theorem2_bias(sigma, sigma_dot, omega, omega_dot, dt)?;
        rows.push(Theorem2Row {
            dt,
            measured_re: top.norm().ln() / dt,
            measured_arg: top.arg().abs() / dt,
            predicted_re: pred_re / dt,
            predicted_arg: pred_arg.abs() / dt,
            predicted_arg_without_drift: theorem2_arg_without_drift(sigma_dot, omega, dt)?.abs() / dt,
            exact_re: sigma,
            exact_arg: omega.abs(),
        });
    }
    let dts: Vec<f64> = rows.iter().map(|r| r.dt).collect();
    let res_re: Vec<f64> = rows.iter().map(Theorem2Row::residual_re).collect();
    let res_arg: Vec<f64> = rows.iter().map(Theorem2Row::residual_arg).collect();
    Ok(Theorem2Sweep {
        t,
        order_re: empirical_order(&dts, &res_re),
        order_arg: empirical_order(&dts, &res_arg),
        rows,
    })
}

/// Matrix logarithm divided by `dt`: the constant generator `A` with
/// `M = exp(A dt)`.
pub fn generator(m: &CMatrix, dt: f64) -> Result<CMatrix> {
    let n = m.nrows();
    let e = m - identity(n);
    let log = if linalg::one_norm(&e) < 0.25 {
        // log(I + E) = E - E^2/2 + E^3/3 - ...
        let mut term = e.clone();
        let mut sum = e.clone();
        for j in 2..200 {
            term = &term * &e;
            let add = &term * c(if j % 2 == 0 { -1.0 } else { 1.0 } / j as f64, 0.0);
            sum += &add;
            if add.norm() <= 1e-18 * sum.norm().max(1e-300) {
                break;
            }
        }
        sum
    } else {
        let d = eig(m)?;
        if !(d.condition <= MAX_CONDITION) {
            return Err(Error::IllConditioned(d.condition));
        }
        let logs = CVector::from_iterator(n, d.values.iter().map(|&mu| principal_log(mu)));
        &d.right * CMatrix::from_diagonal(&logs) * d.left.adjoint()
    };
    Ok(log / c(dt, 0.0))
}

/// Transfer rates `((from, to), K)` of a compartment generator
/// (1-based), i.e. the off-diagonal entries `A[to][from]` above `tol`.
pub fn compartment_rates(a: &CMatrix, tol: f64) -> Vec<((usize, usize), f64)> {
    let n = a.nrows();
    let mut rates = Vec::new();
    for from in 0..n {
        for to in 0..n {
            if from != to && a[(to, from)].re > tol {
                rates.push(((from + 1, to + 1), a[(to, from)].re));
            }
        }
    }
    rates
}
