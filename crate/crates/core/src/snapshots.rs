//! Snapshot matrices, the polar observable map, and snapshot CSV files.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::dmd::StencilWindow;
use crate::error::{Error, Result};
use crate::linalg::{c, numerical_rank, CMatrix, CVector, C64};
use crate::systems::{self, SystemSpec};

/// Substeps per snapshot interval when a system has no closed-form oracle.
pub const FALLBACK_SUBSTEPS: usize = 100;

/// Default absolute tolerance on row variation for active observables.
pub const DEFAULT_ACTIVITY_TOL: f64 = 1e-12;

/// Uniform time grid `t_k = t0 + k * dt`, `k = 0..=steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t0: f64,
    pub dt: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, dt: f64, steps: usize) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) || !t0.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "time grid needs finite t0 and dt > 0 (t0={t0}, dt={dt})"
            )));
        }
        Ok(Self { t0, dt, steps })
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn columns(&self) -> usize {
        self.steps + 1
    }

    pub fn end(&self) -> f64 {
        self.time(self.steps)
    }
}

/// Column-per-time snapshot data. Column `k` holds the observables at `t_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotMatrix {
    pub grid: TimeGrid,
    pub values: CMatrix,
    pub labels: Vec<String>,
}

impl SnapshotMatrix {
    pub fn new(grid: TimeGrid, values: CMatrix, labels: Vec<String>) -> Result<Self> {
        if values.ncols() != grid.columns() {
            return Err(Error::DimensionMismatch(format!(
                "{} snapshot columns for a grid of {} steps",
                values.ncols(),
                grid.steps
            )));
        }
        if labels.len() != values.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {} observable rows",
                labels.len(),
                values.nrows()
            )));
        }
        if !crate::linalg::is_finite(&values) {
            return Err(Error::NonFinite("snapshot matrix"));
        }
        Ok(Self { grid, values, labels })
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn columns(&self) -> usize {
        self.values.ncols()
    }

    pub fn column(&self, k: usize) -> CVector {
        self.values.column(k).into_owned()
    }

    pub fn is_real(&self) -> bool {
        self.values.iter().all(|z| z.im == 0.0)
    }

    /// Keeps only the listed rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.rows()) {
            return Err(Error::DimensionMismatch(format!("row {bad} out of range")));
        }
        let values = self.values.select_rows(rows.iter());
        let labels = rows.iter().map(|&r| self.labels[r].clone()).collect();
        Self::new(self.grid, values, labels)
    }
}

pub fn state_labels(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("x{i}")).collect()
}

/// Samples `x(t_k) = M(t_k, t0) x0` from the closed-form oracle, or from the
/// RK4 oracle for systems without one.
pub fn sample_trajectory(spec: &SystemSpec, x0: &CVector, grid: TimeGrid) -> Result<SnapshotMatrix> {
    let n = spec.dim();
    if x0.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "initial state of length {} for a {n}-dimensional system",
            x0.len()
        )));
    }
    if !spec.has_oracle() {
        return systems::integrate_rk4(spec, x0, grid, FALLBACK_SUBSTEPS);
    }
    let mut values = CMatrix::zeros(n, grid.columns());
    for k in 0..grid.columns() {
        let m = systems::fundamental_matrix(spec, grid.time(k), grid.t0)?;
        values.set_column(k, &(&m.matrix * x0));
    }
    SnapshotMatrix::new(grid, values, state_labels(n))
}

/// Polar observables: each state pair `(a, b)` becomes a radius
/// `r = sqrt(x_a^2 + x_b^2)` and a unit phase factor `(x_a + i x_b) / r`.
/// Unpaired coordinates pass through unchanged after all pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableMap {
    pub state_dim: usize,
    pub pairs: Vec<(usize, usize)>,
}

impl ObservableMap {
    pub fn new(state_dim: usize, pairs: Vec<(usize, usize)>) -> Result<Self> {
        let mut seen = vec![false; state_dim];
        for &(a, b) in &pairs {
            for i in [a, b] {
                if i >= state_dim {
                    return Err(Error::InvalidParameter(format!(
                        "pair index {i} out of range for dimension {state_dim}"
                    )));
                }
                if seen[i] {
                    return Err(Error::InvalidParameter(format!(
                        "state index {i} appears in more than one pair"
                    )));
                }
                seen[i] = true;
            }
        }
        Ok(Self { state_dim, pairs })
    }

    pub fn unpaired(&self) -> Vec<usize> {
        (0..self.state_dim)
            .filter(|i| !self.pairs.iter().any(|&(a, b)| a == *i || b == *i))
            .collect()
    }

    pub fn observable_dim(&self) -> usize {
        self.state_dim
    }

    /// Observable row of the radius and phase for pair `p`.
    pub fn pair_rows(&self, p: usize) -> (usize, usize) {
        (2 * p, 2 * p + 1)
    }

    pub fn labels(&self) -> Vec<String> {
        let mut labels = Vec::with_capacity(self.state_dim);
        for &(a, b) in &self.pairs {
            labels.push(format!("r_x{}_x{}", a + 1, b + 1));
            labels.push(format!("phase_x{}_x{}", a + 1, b + 1));
        }
        labels.extend(self.unpaired().into_iter().map(|i| format!("x{}", i + 1)));
        labels
    }

    fn check_state(&self, x: &CVector, column: usize) -> Result<()> {
        if x.len() != self.state_dim {
            return Err(Error::DimensionMismatch(format!(
                "state of length {} for observable map of dimension {}",
                x.len(),
                self.state_dim
            )));
        }
        for (row, z) in x.iter().enumerate() {
            if z.im.abs() > 1e-12 * (1.0 + z.re.abs()) {
                return Err(Error::NonRealState { row, column });
            }
        }
        Ok(())
    }

    pub fn forward(&self, x: &CVector) -> Result<CVector> {
        self.forward_at(x, 0)
    }

    fn forward_at(&self, x: &CVector, column: usize) -> Result<CVector> {
        self.check_state(x, column)?;
        let mut u = CVector::zeros(self.state_dim);
        for (p, &(a, b)) in self.pairs.iter().enumerate() {
            let (xa, xb) = (x[a].re, x[b].re);
            let r = xa.hypot(xb);
            if r == 0.0 || !r.is_finite() {
                return Err(Error::OriginHit { column, pair: (a, b) });
            }
            u[2 * p] = c(r, 0.0);
            u[2 * p + 1] = c(xa / r, xb / r);
        }
        for (offset, i) in self.unpaired().into_iter().enumerate() {
            u[2 * self.pairs.len() + offset] = c(x[i].re, 0.0);
        }
        Ok(u)
    }

    pub fn inverse(&self, u: &CVector) -> Result<CVector> {
        self.inverse_at(u, 0)
    }

    fn inverse_at(&self, u: &CVector, column: usize) -> Result<CVector> {
        if u.len() != self.state_dim {
            return Err(Error::DimensionMismatch(format!(
                "observable vector of length {} for dimension {}",
                u.len(),
                self.state_dim
            )));
        }
        let mut x = CVector::zeros(self.state_dim);
        for (p, &(a, b)) in self.pairs.iter().enumerate() {
            let r = u[2 * p];
            let phase = u[2 * p + 1];
            let modulus = phase.norm();
            if (modulus - 1.0).abs() > 1e-6 {
                return Err(Error::ModulusViolation {
                    row: 2 * p + 1,
                    column,
                    modulus,
                });
            }
            // x_a = u1 (u2 + conj u2) / 2,  x_b = u1 (u2 - conj u2) / 2i
            x[a] = r * (phase + phase.conj()) * 0.5;
            x[b] = r * (phase - phase.conj()) / c(0.0, 2.0);
        }
        for (offset, i) in self.unpaired().into_iter().enumerate() {
            x[i] = u[2 * self.pairs.len() + offset];
        }
        Ok(x)
    }
}

pub fn apply_observables(map: &ObservableMap, snaps: &SnapshotMatrix) -> Result<SnapshotMatrix> {
    let mut values = CMatrix::zeros(map.observable_dim(), snaps.columns());
    for k in 0..snaps.columns() {
        values.set_column(k, &map.forward_at(&snaps.column(k), k)?);
    }
    SnapshotMatrix::new(snaps.grid, values, map.labels())
}

pub fn reconstruct_state(map: &ObservableMap, u_snaps: &SnapshotMatrix) -> Result<SnapshotMatrix> {
    let mut values = CMatrix::zeros(map.state_dim, u_snaps.columns());
    for k in 0..u_snaps.columns() {
        values.set_column(k, &map.inverse_at(&u_snaps.column(k), k)?);
    }
    SnapshotMatrix::new(u_snaps.grid, values, state_labels(map.state_dim))
}

/// Rows that change over the window by more than `tol` and that together
/// keep the restricted stencil at full numerical row rank. `conserved_row`,
/// if given, is always excluded: its value follows from the conserved total.
pub fn select_active_observables(
    snaps: &SnapshotMatrix,
    window: StencilWindow,
    tol: f64,
    conserved_row: Option<usize>,
) -> Result<Vec<usize>> {
    window.validate(snaps.columns())?;
    let cols = window.columns();
    let varying: Vec<usize> = (0..snaps.rows())
        .filter(|&r| Some(r) != conserved_row)
        .filter(|&r| {
            let first = snaps.values[(r, cols.start)];
            cols.clone()
                .map(|j| (snaps.values[(r, j)] - first).norm())
                .fold(0.0, f64::max)
                > tol
        })
        .collect();

    let mut active: Vec<usize> = Vec::new();
    for r in varying {
        let mut trial = active.clone();
        trial.push(r);
        let block = CMatrix::from_fn(trial.len(), cols.len(), |i, j| snaps.values[(trial[i], cols.start + j)]);
        if numerical_rank(&block, crate::linalg::PINV_RTOL) == trial.len() {
            active = trial;
        }
    }
    if active.is_empty() {
        return Err(Error::EmptyActiveSet {
            k: window.k,
            s: window.s,
        });
    }
    Ok(active)
}

fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes the snapshot CSV: a schema comment, a `t,<labels>` header (split
/// into `re_`/`im_` columns when any entry is non-real) and one row per t_k.
pub fn write_snapshots_csv<W: Write>(mut out: W, snaps: &SnapshotMatrix) -> Result<()> {
    let complex = !snaps.is_real();
    writeln!(out, "# schema=snapshots version=1")?;
    let mut header = vec!["t".to_string()];
    for label in &snaps.labels {
        if complex {
            header.push(format!("re_{label}"));
            header.push(format!("im_{label}"));
        } else {
            header.push(label.clone());
        }
    }
    writeln!(out, "{}", header.join(","))?;
    for k in 0..snaps.columns() {
        let mut fields = vec![fmt_f64(snaps.grid.time(k))];
        for r in 0..snaps.rows() {
            let z = snaps.values[(r, k)];
            fields.push(fmt_f64(z.re));
            if complex {
                fields.push(fmt_f64(z.im));
            }
        }
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}

pub fn read_snapshots_csv<R: BufRead>(input: R) -> Result<SnapshotMatrix> {
    let mut lines = input.lines().enumerate().filter(|(_, l)| {
        l.as_ref()
            .map(|s| !s.starts_with('#') && !s.trim().is_empty())
            .unwrap_or(true)
    });
    let (_, header) = lines.next().ok_or_else(|| Error::Format("missing header".into()))?;
    let header = header?;
    let names: Vec<&str> = header.split(',').map(str::trim).collect();
    if names.first() != Some(&"t") || names.len() < 2 {
        return Err(Error::Format(format!("header must start with `t`: {header}")));
    }
    let complex = names[1].starts_with("re_");
    let labels: Vec<String> = if complex {
        if !(names.len() - 1).is_multiple_of(2) {
            return Err(Error::Format("unpaired re_/im_ columns".into()));
        }
        names[1..]
            .chunks(2)
            .map(|p| {
                let label = p[0].strip_prefix("re_");
                match (label, p[1].strip_prefix("im_")) {
                    (Some(a), Some(b)) if a == b => Ok(a.to_string()),
                    _ => Err(Error::Format(format!("bad complex column pair {}/{}", p[0], p[1]))),
                }
            })
            .collect::<Result<_>>()?
    } else {
        names[1..].iter().map(|s| s.to_string()).collect()
    };

    let m = labels.len();
    let mut times = Vec::new();
    let mut columns: Vec<CVector> = Vec::new();
    for (lineno, line) in lines {
        let line = line?;
        let fields: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 1)))?;
        let expected = 1 + if complex { 2 * m } else { m };
        if fields.len() != expected {
            return Err(Error::Format(format!(
                "line {}: expected {expected} fields, found {}",
                lineno + 1,
                fields.len()
            )));
        }
        times.push(fields[0]);
        let col = CVector::from_fn(m, |r, _| {
            if complex {
                c(fields[1 + 2 * r], fields[2 + 2 * r])
            } else {
                c(fields[1 + r], 0.0)
            }
        });
        columns.push(col);
    }
    let grid = grid_from_times(&times)?;
    let values = CMatrix::from_columns(&columns);
    SnapshotMatrix::new(grid, values, labels)
}

/// Recovers a uniform grid from a time column.
pub fn grid_from_times(times: &[f64]) -> Result<TimeGrid> {
    match times.len() {
        0 => Err(Error::Format("no snapshot rows".into())),
        1 => TimeGrid::new(times[0], 1.0, 0),
        n => {
            let steps = n - 1;
            let dt = (times[steps] - times[0]) / steps as f64;
            let grid = TimeGrid::new(times[0], dt, steps)?;
            for (k, &t) in times.iter().enumerate() {
                if (grid.time(k) - t).abs() > 1e-9 * dt.max(t.abs()) {
                    return Err(Error::Format(format!("irregular time grid at row {k}")));
                }
            }
            Ok(grid)
        }
    }
}

/// Helper for tests and callers holding plain complex values.
pub fn snapshot_from_columns(grid: TimeGrid, columns: &[Vec<C64>]) -> Result<SnapshotMatrix> {
    let m = columns.first().map(|c| c.len()).unwrap_or(0);
    let values = CMatrix::from_fn(m, columns.len(), |i, j| columns[j][i]);
    SnapshotMatrix::new(grid, values, (1..=m).map(|i| format!("u{i}")).collect())
}
