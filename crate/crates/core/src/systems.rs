//! Linear non-autonomous systems `x' = A(t) x`, their exact fundamental
//! matrices, an RK4 reference integrator and the built-in example catalog.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dmd::BranchTracker;
use crate::error::{Error, Result};
use crate::linalg::{c, eig, expm, identity, inverse, is_finite, CMatrix, CVector, C64};
use crate::snapshots::{state_labels, SnapshotMatrix, TimeGrid};

/// Two times closer than this (relative to their magnitude) are the same instant.
pub const SNAP_TOL: f64 = 1e-12;

/// Largest step used when tracking eigenvalue branches of a hybrid oracle.
pub const TRACKING_STEP: f64 = 0.01;

fn same_time(a: f64, b: f64) -> bool {
    (a - b).abs() <= SNAP_TOL * a.abs().max(b.abs()).max(1.0)
}

/// `c + a cos(w t) + b sin(w t)`, the scalar family with closed-form integrals.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Harmonic {
    #[serde(rename = "const", default)]
    pub constant: f64,
    #[serde(default)]
    pub cos_amp: f64,
    #[serde(default)]
    pub sin_amp: f64,
    #[serde(default)]
    pub freq: f64,
}

impl Harmonic {
    pub fn constant(value: f64) -> Self {
        Self {
            constant: value,
            ..Self::default()
        }
    }

    pub fn new(constant: f64, cos_amp: f64, sin_amp: f64, freq: f64) -> Self {
        Self {
            constant,
            cos_amp,
            sin_amp,
            freq,
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        let (s, co) = (self.freq * t).sin_cos();
        self.constant + self.cos_amp * co + self.sin_amp * s
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let (s, co) = (self.freq * t).sin_cos();
        self.freq * (self.sin_amp * co - self.cos_amp * s)
    }

    /// Exact integral over `[t0, t]`.
    pub fn integral(&self, t0: f64, t: f64) -> f64 {
        if self.freq == 0.0 {
            return (self.constant + self.cos_amp) * (t - t0);
        }
        let w = self.freq;
        self.constant * (t - t0) + self.cos_amp / w * ((w * t).sin() - (w * t0).sin())
            - self.sin_amp / w * ((w * t).cos() - (w * t0).cos())
    }

    pub fn is_finite(&self) -> bool {
        [self.constant, self.cos_amp, self.sin_amp, self.freq]
            .iter()
            .all(|x| x.is_finite())
    }
}

/// Complex scalar function with harmonic real and imaginary parts.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplexFn {
    #[serde(default)]
    pub re: Harmonic,
    #[serde(default)]
    pub im: Harmonic,
}

impl ComplexFn {
    pub fn real(re: Harmonic) -> Self {
        Self {
            re,
            im: Harmonic::default(),
        }
    }

    pub fn value(&self, t: f64) -> C64 {
        c(self.re.value(t), self.im.value(t))
    }

    pub fn integral(&self, t0: f64, t: f64) -> C64 {
        c(self.re.integral(t0, t), self.im.integral(t0, t))
    }
}

/// A 2x2 block `[[sigma, omega], [-omega, sigma]]` acting on state
/// coordinates `(first, second)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpiralBlock {
    pub first: usize,
    pub second: usize,
    #[serde(default)]
    pub sigma: Harmonic,
    pub omega: Harmonic,
}

impl SpiralBlock {
    /// `(alpha, beta)`: integrals of sigma and omega over `[t0, t]`.
    pub fn exponents(&self, t0: f64, t: f64) -> (f64, f64) {
        (self.sigma.integral(t0, t), self.omega.integral(t0, t))
    }
}

pub type MatrixFn = Arc<dyn Fn(f64) -> CMatrix + Send + Sync>;

#[derive(Clone)]
pub enum SystemSpec {
    /// Piecewise-constant `A(t) = A_l` on `[T_l, T_{l+1})`.
    Hybrid {
        switch_times: Vec<f64>,
        matrices: Vec<CMatrix>,
    },
    /// `A(t) = R diag(lambda_i(t)) R^-1` with constant eigenvectors.
    Commuting { r: CMatrix, eigenvalues: Vec<ComplexFn> },
    /// Block-diagonal spiral blocks; uncovered coordinates are constant.
    Spiral { dim: usize, blocks: Vec<SpiralBlock> },
    /// Arbitrary `A(t)`; only the integrator oracle applies.
    Generic { dim: usize, matrix: MatrixFn },
}

impl fmt::Debug for SystemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Hybrid { switch_times, matrices } => f
                .debug_struct("Hybrid")
                .field("switch_times", switch_times)
                .field("matrices", matrices)
                .finish(),
            Self::Commuting { r, eigenvalues } => f
                .debug_struct("Commuting")
                .field("r", r)
                .field("eigenvalues", eigenvalues)
                .finish(),
            Self::Spiral { dim, blocks } => f
                .debug_struct("Spiral")
                .field("dim", dim)
                .field("blocks", blocks)
                .finish(),
            Self::Generic { dim, .. } => f.debug_struct("Generic").field("dim", dim).finish(),
        }
    }
}

impl SystemSpec {
    pub fn hybrid(switch_times: Vec<f64>, matrices: Vec<CMatrix>) -> Result<Self> {
        let spec = Self::Hybrid { switch_times, matrices };
        spec.validate()?;
        Ok(spec)
    }

    pub fn commuting(r: CMatrix, eigenvalues: Vec<ComplexFn>) -> Result<Self> {
        let spec = Self::Commuting { r, eigenvalues };
        spec.validate()?;
        Ok(spec)
    }

    pub fn spiral(dim: usize, blocks: Vec<SpiralBlock>) -> Result<Self> {
        let spec = Self::Spiral { dim, blocks };
        spec.validate()?;
        Ok(spec)
    }

    pub fn constant(a: CMatrix) -> Result<Self> {
        Self::hybrid(vec![0.0], vec![a])
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Hybrid { switch_times, matrices } => {
                if switch_times.is_empty() || switch_times.len() != matrices.len() {
                    return Err(Error::InvalidParameter(format!(
                        "hybrid system needs one matrix per switch time ({} times, {} matrices)",
                        switch_times.len(),
                        matrices.len()
                    )));
                }
                if switch_times.iter().any(|t| !t.is_finite()) {
                    return Err(Error::NonFinite("switch times"));
                }
                if switch_times.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::InvalidParameter(
                        "switch times must be strictly increasing".into(),
                    ));
                }
                let n = matrices[0].nrows();
                for m in matrices {
                    if m.nrows() != m.ncols() || m.nrows() == 0 {
                        return Err(Error::NotSquare {
                            rows: m.nrows(),
                            cols: m.ncols(),
                        });
                    }
                    if m.nrows() != n {
                        return Err(Error::DimensionMismatch(format!(
                            "hybrid matrices of sizes {n} and {}",
                            m.nrows()
                        )));
                    }
                    if !is_finite(m) {
                        return Err(Error::NonFinite("hybrid matrix"));
                    }
                }
            }
            Self::Commuting { r, eigenvalues } => {
                if r.nrows() != r.ncols() || r.nrows() == 0 {
                    return Err(Error::NotSquare {
                        rows: r.nrows(),
                        cols: r.ncols(),
                    });
                }
                if eigenvalues.len() != r.nrows() {
                    return Err(Error::DimensionMismatch(format!(
                        "{} eigenvalue functions for a {}x{} eigenvector matrix",
                        eigenvalues.len(),
                        r.nrows(),
                        r.ncols()
                    )));
                }
                if !eigenvalues.iter().all(|f| f.re.is_finite() && f.im.is_finite()) {
                    return Err(Error::NonFinite("eigenvalue function"));
                }
                inverse(r)?;
            }
            Self::Spiral { dim, blocks } => {
                if *dim == 0 {
                    return Err(Error::InvalidParameter("dimension must be positive".into()));
                }
                let mut used = vec![false; *dim];
                for b in blocks {
                    if b.first == b.second {
                        return Err(Error::InvalidParameter(
                            "spiral block needs two distinct coordinates".into(),
                        ));
                    }
                    for i in [b.first, b.second] {
                        if i >= *dim {
                            return Err(Error::InvalidParameter(format!(
                                "spiral coordinate {i} out of range for dimension {dim}"
                            )));
                        }
                        if used[i] {
                            return Err(Error::InvalidParameter(format!(
                                "coordinate {i} belongs to two spiral blocks"
                            )));
                        }
                        used[i] = true;
                    }
                    if !b.sigma.is_finite() || !b.omega.is_finite() {
                        return Err(Error::NonFinite("spiral block function"));
                    }
                }
            }
            Self::Generic { dim, .. } => {
                if *dim == 0 {
                    return Err(Error::InvalidParameter("dimension must be positive".into()));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Hybrid { matrices, .. } => matrices[0].nrows(),
            Self::Commuting { r, .. } => r.nrows(),
            Self::Spiral { dim, .. } | Self::Generic { dim, .. } => *dim,
        }
    }

    pub fn has_oracle(&self) -> bool {
        !matches!(self, Self::Generic { .. })
    }

    fn segment(switch_times: &[f64], t: f64) -> usize {
        switch_times
            .iter()
            .rposition(|&s| s <= t || same_time(s, t))
            .unwrap_or(0)
    }

    fn segment_left(switch_times: &[f64], t: f64) -> usize {
        switch_times
            .iter()
            .rposition(|&s| s < t && !same_time(s, t))
            .unwrap_or(0)
    }

    /// `A(t)`, right-continuous at switch times.
    pub fn matrix_at(&self, t: f64) -> CMatrix {
        match self {
            Self::Hybrid { switch_times, matrices } => matrices[Self::segment(switch_times, t)].clone(),
            _ => self.smooth_matrix_at(t),
        }
    }

    /// Left limit `A(t-)`; differs from [`matrix_at`](Self::matrix_at) only at switches.
    pub fn matrix_at_left(&self, t: f64) -> CMatrix {
        match self {
            Self::Hybrid { switch_times, matrices } => matrices[Self::segment_left(switch_times, t)].clone(),
            _ => self.smooth_matrix_at(t),
        }
    }

    fn smooth_matrix_at(&self, t: f64) -> CMatrix {
        match self {
            Self::Hybrid { .. } => unreachable!(),
            Self::Commuting { r, eigenvalues } => {
                let diag = CVector::from_iterator(r.nrows(), eigenvalues.iter().map(|f| f.value(t)));
                let r_inv = inverse(r).expect("validated invertible");
                r * CMatrix::from_diagonal(&diag) * r_inv
            }
            Self::Spiral { dim, blocks } => {
                let mut a = CMatrix::zeros(*dim, *dim);
                for b in blocks {
                    let (s, w) = (b.sigma.value(t), b.omega.value(t));
                    a[(b.first, b.first)] = c(s, 0.0);
                    a[(b.second, b.second)] = c(s, 0.0);
                    a[(b.first, b.second)] = c(w, 0.0);
                    a[(b.second, b.first)] = c(-w, 0.0);
                }
                a
            }
            Self::Generic { matrix, .. } => matrix(t),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FundamentalMatrix {
    pub t: f64,
    pub t0: f64,
    pub matrix: CMatrix,
}

/// Exact `M(t, t0)` with `x(t) = M(t, t0) x(t0)`.
pub fn fundamental_matrix(spec: &SystemSpec, t: f64, t0: f64) -> Result<FundamentalMatrix> {
    if !t.is_finite() || !t0.is_finite() {
        return Err(Error::NonFinite("time"));
    }
    if t < t0 && !same_time(t, t0) {
        return Err(Error::Domain(format!("t = {t} precedes t0 = {t0}")));
    }
    let n = spec.dim();
    let matrix = match spec {
        SystemSpec::Hybrid { switch_times, matrices } => {
            let mut m = identity(n);
            let mut a = t0;
            while a < t && !same_time(a, t) {
                let l = SystemSpec::segment(switch_times, a);
                let b = match switch_times.get(l + 1) {
                    Some(&next) if next < t && !same_time(next, t) => next,
                    _ => t,
                };
                m = expm(&(&matrices[l] * c(b - a, 0.0)))? * m;
                a = b;
            }
            m
        }
        SystemSpec::Commuting { r, eigenvalues } => {
            let diag = CVector::from_iterator(n, eigenvalues.iter().map(|f| f.integral(t0, t).exp()));
            r * CMatrix::from_diagonal(&diag) * inverse(r)?
        }
        SystemSpec::Spiral { blocks, .. } => {
            let mut m = identity(n);
            for b in blocks {
                let (alpha, beta) = b.exponents(t0, t);
                let g = alpha.exp();
                let (s, co) = beta.sin_cos();
                m[(b.first, b.first)] = c(g * co, 0.0);
                m[(b.first, b.second)] = c(g * s, 0.0);
                m[(b.second, b.first)] = c(-g * s, 0.0);
                m[(b.second, b.second)] = c(g * co, 0.0);
            }
            m
        }
        SystemSpec::Generic { .. } => {
            return Err(Error::Unsupported(
                "generic systems have no closed-form fundamental matrix; use the RK4 oracle".into(),
            ))
        }
    };
    if !is_finite(&matrix) {
        return Err(Error::Overflow(f64::INFINITY));
    }
    Ok(FundamentalMatrix { t, t0, matrix })
}

/// Classical RK4 with `substeps` steps per grid interval. Stage times that
/// land on a switch use the one-sided limit facing into the step.
pub fn integrate_rk4(spec: &SystemSpec, x0: &CVector, grid: TimeGrid, substeps: usize) -> Result<SnapshotMatrix> {
    if substeps == 0 {
        return Err(Error::InvalidParameter("substeps must be at least 1".into()));
    }
    let n = spec.dim();
    if x0.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "initial state of length {} for a {n}-dimensional system",
            x0.len()
        )));
    }
    let h = grid.dt / substeps as f64;
    let mut values = CMatrix::zeros(n, grid.columns());
    values.set_column(0, x0);
    let mut x = x0.clone();
    let eval = |m: CMatrix| -> Result<CMatrix> {
        if m.nrows() != n || m.ncols() != n {
            return Err(Error::DimensionMismatch("A(t) has the wrong shape".into()));
        }
        if !is_finite(&m) {
            return Err(Error::NonFinite("A(t) evaluation"));
        }
        Ok(m)
    };
    for k in 0..grid.steps {
        let tk = grid.time(k);
        for j in 0..substeps {
            let t = tk + j as f64 * h;
            let a0 = eval(spec.matrix_at(t))?;
            let am = eval(spec.matrix_at(t + 0.5 * h))?;
            let a1 = eval(spec.matrix_at_left(t + h))?;
            let k1 = &a0 * &x;
            let k2 = &am * (&x + &k1 * c(0.5 * h, 0.0));
            let k3 = &am * (&x + &k2 * c(0.5 * h, 0.0));
            let k4 = &a1 * (&x + &k3 * c(h, 0.0));
            x += (k1 + k2 * c(2.0, 0.0) + k3 * c(2.0, 0.0) + k4) * c(h / 6.0, 0.0);
        }
        values.set_column(k + 1, &x);
    }
    if !is_finite(&values) {
        return Err(Error::NonFinite("integrated trajectory"));
    }
    SnapshotMatrix::new(grid, values, state_labels(n))
}

/// Exact Koopman eigenvalues `lambda_i(t, t0)` (with `e^lambda_i` the
/// eigenvalues of `M(t, t0)`), eigenfunction weights and modes.
#[derive(Debug, Clone)]
pub struct KoopmanSpectrumExact {
    pub t: f64,
    pub t0: f64,
    pub eigenvalues: Vec<C64>,
    /// Columns `w_i`; the eigenfunction is `phi_i(x) = w_i^H x`.
    pub weights: CMatrix,
    /// Columns `v_i`.
    pub modes: CMatrix,
}

impl KoopmanSpectrumExact {
    pub fn eigenfunction(&self, i: usize, x: &CVector) -> C64 {
        self.weights.column(i).dotc(x)
    }

    /// `sum_i e^{lambda_i} phi_i(x0) v_i`.
    pub fn expand(&self, x0: &CVector) -> CVector {
        let mut x = CVector::zeros(self.modes.nrows());
        for (i, lambda) in self.eigenvalues.iter().enumerate() {
            x += self.modes.column(i) * (lambda.exp() * self.eigenfunction(i, x0));
        }
        x
    }
}

pub fn koopman_exact(spec: &SystemSpec, t: f64, t0: f64) -> Result<KoopmanSpectrumExact> {
    if t < t0 && !same_time(t, t0) {
        return Err(Error::Domain(format!("t = {t} precedes t0 = {t0}")));
    }
    match spec {
        SystemSpec::Hybrid { .. } => {
            let steps = ((t - t0) / TRACKING_STEP).ceil().max(1.0) as usize;
            let grid = TimeGrid::new(t0, (t - t0).max(f64::MIN_POSITIVE) / steps as f64, steps)?;
            let mut series = track_hybrid(spec, grid, 1)?;
            let mut last = series.pop().expect("grid has columns");
            last.t = t;
            Ok(last)
        }
        _ => closed_form_spectrum(spec, t, t0),
    }
}

/// Exact spectra at every grid time, branch-continuous along the grid.
pub fn koopman_exact_series(spec: &SystemSpec, grid: TimeGrid) -> Result<Vec<KoopmanSpectrumExact>> {
    match spec {
        SystemSpec::Hybrid { .. } => {
            let sub = (grid.dt / TRACKING_STEP).ceil().max(1.0) as usize;
            let fine = TimeGrid::new(grid.t0, grid.dt / sub as f64, grid.steps * sub)?;
            track_hybrid(spec, fine, sub)
        }
        _ => (0..grid.columns())
            .map(|k| closed_form_spectrum(spec, grid.time(k), grid.t0))
            .collect(),
    }
}

fn closed_form_spectrum(spec: &SystemSpec, t: f64, t0: f64) -> Result<KoopmanSpectrumExact> {
    let n = spec.dim();
    match spec {
        SystemSpec::Commuting { r, eigenvalues } => {
            let eigenvalues = eigenvalues.iter().map(|f| f.integral(t0, t)).collect();
            let mut modes = r.clone();
            for mut col in modes.column_iter_mut() {
                let norm = col.norm();
                col.unscale_mut(norm);
            }
            let weights = inverse(&modes)?.adjoint();
            Ok(KoopmanSpectrumExact {
                t,
                t0,
                eigenvalues,
                weights,
                modes,
            })
        }
        SystemSpec::Spiral { blocks, .. } => {
            let mut eigenvalues = vec![c(0.0, 0.0); n];
            let mut modes = identity(n);
            let s = std::f64::consts::FRAC_1_SQRT_2;
            for b in blocks {
                let (alpha, beta) = b.exponents(t0, t);
                // (e_first +- i e_second)/sqrt 2 carries e^{alpha +- i beta}
                eigenvalues[b.first] = c(alpha, beta);
                eigenvalues[b.second] = c(alpha, -beta);
                modes[(b.first, b.first)] = c(s, 0.0);
                modes[(b.second, b.first)] = c(0.0, s);
                modes[(b.first, b.second)] = c(s, 0.0);
                modes[(b.second, b.second)] = c(0.0, -s);
            }
            let weights = modes.clone();
            Ok(KoopmanSpectrumExact {
                t,
                t0,
                eigenvalues,
                weights,
                modes,
            })
        }
        SystemSpec::Hybrid { .. } | SystemSpec::Generic { .. } => unreachable!(),
    }
}

/// Follows the eigenvalues of `M(t_j, t0)` along `fine`, recording every
/// `stride`-th point.
fn track_hybrid(spec: &SystemSpec, fine: TimeGrid, stride: usize) -> Result<Vec<KoopmanSpectrumExact>> {
    let n = spec.dim();
    let mut out = Vec::with_capacity(fine.steps / stride + 1);
    let mut tracker = BranchTracker::new(n);
    out.push(KoopmanSpectrumExact {
        t: fine.t0,
        t0: fine.t0,
        eigenvalues: vec![c(0.0, 0.0); n],
        weights: identity(n),
        modes: identity(n),
    });
    let mut m = identity(n);
    for j in 1..=fine.steps {
        let step = fundamental_matrix(spec, fine.time(j), fine.time(j - 1))?;
        m = step.matrix * m;
        let record = j % stride == 0;
        let (values, decomposition) = if record {
            let d = eig(&m)?;
            (d.values.clone(), Some(d))
        } else {
            (crate::linalg::eigenvalues(&m)?, None)
        };
        let (perm, _) = tracker.advance(&values);
        let lambda = tracker.exponents().to_vec();
        if let Some(d) = decomposition {
            let modes = CMatrix::from_fn(n, n, |i, b| d.right[(i, perm[b])]);
            let weights = CMatrix::from_fn(n, n, |i, b| d.left[(i, perm[b])]);
            out.push(KoopmanSpectrumExact {
                t: fine.time(j),
                t0: fine.t0,
                eigenvalues: lambda.clone(),
                weights,
                modes,
            });
        }
    }
    Ok(out)
}

/// Natural frequencies of the two-mass, three-spring chain:
/// `det(K - nu M) = 0`, `omega_j = sqrt(nu_j)`, returned as `(larger, smaller)`.
pub fn coupled_frequencies(m1: f64, m2: f64, k1: f64, k2: f64, k3: f64) -> Result<(f64, f64)> {
    if [m1, m2, k1, k3].iter().any(|&p| !(p > 0.0)) || !(k2 >= 0.0) {
        return Err(Error::InvalidParameter(
            "masses and outer elasticities must be positive, coupling non-negative".into(),
        ));
    }
    let a = m1 * m2;
    let b = m1 * (k2 + k3) + m2 * (k1 + k2);
    let cc = (k1 + k2) * (k2 + k3) - k2 * k2;
    let disc = (b * b - 4.0 * a * cc).max(0.0).sqrt();
    let nu_hi = (b + disc) / (2.0 * a);
    // product form avoids cancellation in the smaller root
    let nu_lo = cc / (a * nu_hi);
    Ok((nu_hi.sqrt(), nu_lo.sqrt()))
}

/// Matrix of the coupled oscillator in `(x1, x2, x1', x2')` coordinates.
pub fn coupled_oscillator_matrix(m1: f64, m2: f64, k1: f64, k2: f64, k3: f64) -> CMatrix {
    crate::linalg::real_matrix(
        4,
        4,
        &[
            0.0,
            0.0,
            1.0,
            0.0, //
            0.0,
            0.0,
            0.0,
            1.0, //
            -(k1 + k2) / m1,
            k2 / m1,
            0.0,
            0.0, //
            k2 / m2,
            -(k2 + k3) / m2,
            0.0,
            0.0,
        ],
    )
}

pub const CATALOG_NAMES: [&str; 8] = [
    "scalar",
    "switching-frequency",
    "switching-damped-driven",
    "hybrid-coupled-osc",
    "multicompartment",
    "cont-frequency",
    "cont-damping",
    "cont-coupled-osc",
];

/// Nonzero transfer rates `((from, to), rate, delay)`, compartments 1-based.
pub const MULTICOMPARTMENT_RATES: [((usize, usize), f64, f64); 6] = [
    ((1, 2), 0.0988, 0.0),
    ((2, 1), 0.1410, 5.0),
    ((2, 3), 0.0590, 3.0),
    ((3, 4), 0.1150, 18.0),
    ((4, 1), 0.0149, 30.0),
    ((4, 5), 0.0154, 55.0),
];

/// Which data-driven algorithm suits a catalog system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SuggestedAlgorithm {
    Hybrid,
    Continuous,
}

#[derive(Debug, Clone)]
pub struct CatalogEntry {
    pub name: String,
    pub spec: SystemSpec,
    pub x0: Vec<f64>,
    pub algorithm: SuggestedAlgorithm,
    /// Polar observable pairs for the continuous algorithm.
    pub pairs: Vec<(usize, usize)>,
    /// Row whose value follows from a conserved total.
    pub conserved_row: Option<usize>,
}

struct Params {
    name: &'static str,
    values: BTreeMap<String, f64>,
}

impl Params {
    fn new(name: &'static str, defaults: &[(&str, f64)], overrides: &BTreeMap<String, f64>) -> Result<Self> {
        let mut values: BTreeMap<String, f64> = defaults.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        for (key, &value) in overrides {
            if !values.contains_key(key) {
                let known: Vec<&str> = defaults.iter().map(|(k, _)| *k).collect();
                return Err(Error::InvalidParameter(format!(
                    "`{name}` has no parameter `{key}` (known: {})",
                    known.join(", ")
                )));
            }
            if !value.is_finite() {
                return Err(Error::InvalidParameter(format!("parameter `{key}` must be finite")));
            }
            values.insert(key.clone(), value);
        }
        Ok(Self { name, values })
    }

    fn get(&self, key: &str) -> f64 {
        self.values[key]
    }

    fn positive(&self, key: &str) -> Result<f64> {
        let v = self.get(key);
        if v > 0.0 {
            Ok(v)
        } else {
            Err(Error::InvalidParameter(format!(
                "`{}` parameter `{key}` must be positive, got {v}",
                self.name
            )))
        }
    }
}

/// Alternating hybrid system: `even` on segments 0, 2, 4, ..., `odd` on the rest.
fn alternating(switch_times: Vec<f64>, even: CMatrix, odd: CMatrix) -> Result<SystemSpec> {
    let matrices = (0..switch_times.len())
        .map(|l| if l % 2 == 0 { even.clone() } else { odd.clone() })
        .collect();
    SystemSpec::hybrid(switch_times, matrices)
}

pub fn catalog(name: &str, overrides: &BTreeMap<String, f64>) -> Result<SystemSpec> {
    Ok(catalog_entry(name, overrides)?.spec)
}

pub fn catalog_entry(name: &str, overrides: &BTreeMap<String, f64>) -> Result<CatalogEntry> {
    use crate::linalg::real_matrix;
    let entry = |name: &str, spec, x0: &[f64], algorithm, pairs: Vec<(usize, usize)>, conserved_row| CatalogEntry {
        name: name.to_string(),
        spec,
        x0: x0.to_vec(),
        algorithm,
        pairs,
        conserved_row,
    };
    match name {
        "scalar" => {
            let p = Params::new(
                "scalar",
                &[("a", 1.0), ("a_cos_amp", 0.0), ("a_sin_amp", 0.0), ("a_freq", 0.0)],
                overrides,
            )?;
            let a = Harmonic::new(p.get("a"), p.get("a_cos_amp"), p.get("a_sin_amp"), p.get("a_freq"));
            let spec = SystemSpec::commuting(identity(1), vec![ComplexFn::real(a)])?;
            Ok(entry(name, spec, &[1.0], SuggestedAlgorithm::Hybrid, vec![], None))
        }
        "switching-frequency" => {
            let p = Params::new(
                "switching-frequency",
                &[("omega1", 2.0), ("omega2", 1.0), ("period", 1.0), ("horizon", 100.0)],
                overrides,
            )?;
            let period = p.positive("period")?;
            let count = (p.positive("horizon")? / period).ceil() as usize + 1;
            let block = |w: f64| real_matrix(2, 2, &[0.0, 1.0, -w * w, 0.0]);
            let spec = alternating(
                (0..count).map(|l| l as f64 * period).collect(),
                block(p.get("omega1")),
                block(p.get("omega2")),
            )?;
            Ok(entry(name, spec, &[1.0, 1.0], SuggestedAlgorithm::Hybrid, vec![], None))
        }
        "switching-damped-driven" => {
            let p = Params::new(
                "switching-damped-driven",
                &[
                    ("sigma1", 1.0),
                    ("sigma2", -1.0),
                    ("omega", 2.0),
                    ("t0", 0.0),
                    ("horizon", 100.0),
                ],
                overrides,
            )?;
            let horizon = p.positive("horizon")?;
            // T_l = T_{l-1} + l/2
            let mut times = vec![p.get("t0")];
            let mut l = 1.0;
            while *times.last().unwrap() < p.get("t0") + horizon {
                times.push(times.last().unwrap() + l / 2.0);
                l += 1.0;
            }
            let w = p.get("omega");
            let block = |s: f64| real_matrix(2, 2, &[s, 1.0, -w * w, s]);
            let spec = alternating(times, block(p.get("sigma1")), block(p.get("sigma2")))?;
            Ok(entry(name, spec, &[1.0, 1.0], SuggestedAlgorithm::Hybrid, vec![], None))
        }
        "hybrid-coupled-osc" => {
            let p = Params::new(
                "hybrid-coupled-osc",
                &[
                    ("m1", 1.0),
                    ("m2", 1.0),
                    ("k2", 1.0),
                    ("k1_even", 4.0),
                    ("k1_odd", 9.0),
                    ("k3_even", 9.0),
                    ("k3_odd", 16.0),
                    ("period", 1.0),
                    ("horizon", 100.0),
                ],
                overrides,
            )?;
            let (m1, m2) = (p.positive("m1")?, p.positive("m2")?);
            coupled_frequencies(m1, m2, p.get("k1_even"), p.get("k2"), p.get("k3_even"))?;
            coupled_frequencies(m1, m2, p.get("k1_odd"), p.get("k2"), p.get("k3_odd"))?;
            let period = p.positive("period")?;
            let count = (p.positive("horizon")? / period).ceil() as usize + 1;
            let spec = alternating(
                (0..count).map(|l| l as f64 * period).collect(),
                coupled_oscillator_matrix(m1, m2, p.get("k1_even"), p.get("k2"), p.get("k3_even")),
                coupled_oscillator_matrix(m1, m2, p.get("k1_odd"), p.get("k2"), p.get("k3_odd")),
            )?;
            Ok(entry(name, spec, &[1.0; 4], SuggestedAlgorithm::Hybrid, vec![], None))
        }
        "multicompartment" => {
            let defaults: Vec<(String, f64)> = MULTICOMPARTMENT_RATES
                .iter()
                .flat_map(|&((i, j), k, t)| [(format!("k{i}{j}"), k), (format!("t{i}{j}"), t)])
                .collect();
            let defaults: Vec<(&str, f64)> = defaults.iter().map(|(k, v)| (k.as_str(), *v)).collect();
            let p = Params::new("multicompartment", &defaults, overrides)?;
            let rates: Vec<((usize, usize), f64, f64)> = MULTICOMPARTMENT_RATES
                .iter()
                .map(|&((i, j), _, _)| ((i, j), p.get(&format!("k{i}{j}")), p.get(&format!("t{i}{j}"))))
                .collect();
            if rates.iter().any(|r| r.1 < 0.0) {
                return Err(Error::InvalidParameter("rate coefficients must be non-negative".into()));
            }
            Ok(entry(
                name,
                compartment_system(5, &rates)?,
                &[1.0, 0.0, 0.0, 0.0, 0.0],
                SuggestedAlgorithm::Hybrid,
                vec![],
                Some(4),
            ))
        }
        "cont-frequency" | "cont-damping" => {
            let damping = name == "cont-damping";
            let p = Params::new(
                if damping { "cont-damping" } else { "cont-frequency" },
                &[
                    ("sigma0", 0.0),
                    ("omega0", 2.0),
                    ("omega_d", PI),
                    ("a_d", 0.5),
                    ("b_d", 0.0),
                ],
                overrides,
            )?;
            let forced = Harmonic::new(0.0, p.get("a_d"), p.get("b_d"), p.get("omega_d"));
            let (mut sigma, mut omega) = (Harmonic::constant(p.get("sigma0")), Harmonic::constant(p.get("omega0")));
            if damping {
                sigma = Harmonic {
                    constant: p.get("sigma0"),
                    ..forced
                };
            } else {
                omega = Harmonic {
                    constant: p.get("omega0"),
                    ..forced
                };
            }
            let spec = SystemSpec::spiral(
                2,
                vec![SpiralBlock {
                    first: 0,
                    second: 1,
                    sigma,
                    omega,
                }],
            )?;
            Ok(entry(
                name,
                spec,
                &[1.0, 1.0],
                SuggestedAlgorithm::Continuous,
                vec![(0, 1)],
                None,
            ))
        }
        "cont-coupled-osc" => {
            let p = Params::new(
                "cont-coupled-osc",
                &[
                    ("m1", 1.0),
                    ("m2", 1.0),
                    ("k1", 2.0),
                    ("k2", 1.0),
                    ("k3", 3.0),
                    ("amp1", 0.5),
                    ("freq1", 2.0),
                    ("amp2", 0.5),
                    ("freq2", 0.4),
                ],
                overrides,
            )?;
            let (w1, w2) = coupled_frequencies(p.get("m1"), p.get("m2"), p.get("k1"), p.get("k2"), p.get("k3"))?;
            let omega1 = Harmonic::new(w1, p.get("amp1"), p.get("amp1"), p.get("freq1"));
            let omega2 = Harmonic::new(w2, p.get("amp2"), p.get("amp2"), p.get("freq2"));
            let spec = SystemSpec::spiral(
                4,
                vec![
                    SpiralBlock {
                        first: 0,
                        second: 2,
                        sigma: Harmonic::default(),
                        omega: omega1,
                    },
                    SpiralBlock {
                        first: 1,
                        second: 3,
                        sigma: Harmonic::default(),
                        omega: omega2,
                    },
                ],
            )?;
            Ok(entry(
                name,
                spec,
                &[1.0; 4],
                SuggestedAlgorithm::Continuous,
                vec![(0, 2), (1, 3)],
                None,
            ))
        }
        other => Err(Error::UnknownSystem(other.to_string())),
    }
}

/// Closed compartment model: transfer `(i, j)` moves mass from compartment
/// `i` to `j` at `rate` once `t >= delay` (1-based indices).
pub fn compartment_system(n: usize, rates: &[((usize, usize), f64, f64)]) -> Result<SystemSpec> {
    for &((i, j), _, delay) in rates {
        if i == 0 || j == 0 || i > n || j > n || i == j {
            return Err(Error::InvalidParameter(format!("invalid transfer ({i},{j})")));
        }
        if !delay.is_finite() {
            return Err(Error::NonFinite("delay"));
        }
    }
    let mut times: Vec<f64> = rates.iter().map(|r| r.2).collect();
    times.push(0.0_f64.min(times.iter().copied().fold(f64::INFINITY, f64::min)));
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    times.dedup_by(|a, b| same_time(*a, *b));
    let matrices = times
        .iter()
        .map(|&t| {
            let mut a = CMatrix::zeros(n, n);
            for &((i, j), k, delay) in rates {
                if delay <= t || same_time(delay, t) {
                    a[(i - 1, i - 1)] -= c(k, 0.0);
                    a[(j - 1, i - 1)] += c(k, 0.0);
                }
            }
            a
        })
        .collect();
    SystemSpec::hybrid(times, matrices)
}
