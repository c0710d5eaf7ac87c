use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use koopman_family::dmd::moving_stencil_spectrum;
use koopman_family::error::Error as CoreError;
use koopman_family::koopman::{
    algorithm1, algorithm2, error_ek, exact_family, max_eigenvalue_deviation, theorem2_sweep, ActiveSelection,
    Algorithm1Options, Algorithm2Options, OperatorFamily, SpectralTimeSeries, SwitchEvent, Theorem2Sweep,
};
use koopman_family::linalg::real_vector;
use koopman_family::snapshots::{
    apply_observables, read_snapshots_csv, sample_trajectory, state_labels, write_snapshots_csv, ObservableMap,
    SnapshotMatrix, TimeGrid,
};
use koopman_family::systems::{koopman_exact_series, SystemSpec};
use serde::Serialize;

use crate::config::{Algorithm, ResolvedSystem, RunConfig};
use crate::error::{CliError, Result};
use crate::output::{self, emit, read_spectral_csv};

const MERGE_CAVEAT: &str = "switches closer together than the stencil span produce one merged event; \
its interval bounds all of them but the individual times are not resolved";

fn prepare(cfg: &RunConfig) -> Result<ResolvedSystem> {
    cfg.validate()?;
    cfg.system.resolve()
}

pub fn simulate(cfg: &RunConfig) -> Result<()> {
    let sys = prepare(cfg)?;
    let snaps = simulate_snapshots(cfg, &sys)?;
    let mut buf = Vec::new();
    write_snapshots_csv(&mut buf, &snaps)?;
    emit(cfg.outputs.out.as_deref(), &String::from_utf8(buf).expect("ascii csv"))
}

pub fn simulate_snapshots(cfg: &RunConfig, sys: &ResolvedSystem) -> Result<SnapshotMatrix> {
    let n = sys.spec.dim();
    let x0 = cfg
        .x0
        .clone()
        .or_else(|| sys.x0.clone())
        .ok_or_else(|| CliError::config("x0 is required for inline systems"))?;
    if x0.len() != n {
        return Err(CliError::config(format!(
            "x0 has {} entries, system dimension is {n}",
            x0.len()
        )));
    }
    let grid = TimeGrid::new(cfg.grid.t0, cfg.grid.dt, cfg.grid.steps)?;
    let mut snaps = sample_trajectory(&sys.spec, &real_vector(&x0), grid)?;
    snaps.labels = state_labels(n);
    Ok(snaps)
}

pub fn read_snapshots(path: &Path, dim: usize) -> Result<SnapshotMatrix> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let snaps = read_snapshots_csv(BufReader::new(file)).map_err(|e| match e {
        CoreError::Io(io) => CliError::io(path, io),
        other => CliError::Input {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    })?;
    if snaps.rows() != dim {
        return Err(CliError::config(format!(
            "{}: {} observable columns, the configured system has dimension {dim}",
            path.display(),
            snaps.rows()
        )));
    }
    Ok(snaps)
}

/// Output of one analysis run.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub algorithm: Algorithm,
    pub series: SpectralTimeSeries,
    /// State-space operator family; `None` for the observable-space algorithm.
    pub family: Option<OperatorFamily>,
    pub switches: Vec<SwitchEvent>,
    pub stencil: Option<usize>,
}

pub fn run_analysis(cfg: &RunConfig, sys: &ResolvedSystem, snaps: &SnapshotMatrix) -> Result<Analysis> {
    let p = &cfg.params;
    let analysis = match cfg.algorithm {
        Algorithm::Alg1 => {
            let options = Algorithm1Options {
                epsilon_rel: p.epsilon_rel,
                stencil: p.stencil,
                rank_tol: p.rank_tol,
                active: sys.conserved_row.map(|row| ActiveSelection {
                    conserved_row: Some(row),
                    ..ActiveSelection::default()
                }),
            };
            let r = algorithm1(snaps, &options)?;
            Analysis {
                algorithm: cfg.algorithm,
                series: r.series,
                family: Some(r.family),
                switches: r.switches,
                stencil: Some(r.stencil),
            }
        }
        Algorithm::Alg2 => {
            let pairs = p.pairs.clone().unwrap_or_else(|| sys.pairs.clone());
            let map = ObservableMap::new(snaps.rows(), pairs)?;
            let u = apply_observables(&map, snaps)?;
            let (series, _) = algorithm2(&u, &Algorithm2Options::default())?;
            Analysis {
                algorithm: cfg.algorithm,
                series,
                family: None,
                switches: Vec::new(),
                stencil: None,
            }
        }
        Algorithm::DmdMoving => {
            let s = p.stencil.unwrap_or(snaps.rows() + 1);
            let r = moving_stencil_spectrum(snaps, s, p.rank_tol)?;
            Analysis {
                algorithm: cfg.algorithm,
                series: r.series,
                family: Some(r.family),
                switches: Vec::new(),
                stencil: Some(s),
            }
        }
        Algorithm::Oracle => {
            require_oracle(&sys.spec)?;
            let (series, family) = exact_family(&sys.spec, snaps.grid)?;
            Analysis {
                algorithm: cfg.algorithm,
                series,
                family: Some(family),
                switches: Vec::new(),
                stencil: None,
            }
        }
    };
    Ok(analysis)
}

fn require_oracle(spec: &SystemSpec) -> Result<()> {
    if spec.has_oracle() {
        Ok(())
    } else {
        Err(CliError::config("the configured system has no closed-form oracle"))
    }
}

#[derive(Debug, Serialize)]
struct SwitchReport<'a> {
    schema: &'static str,
    version: u32,
    algorithm: &'static str,
    stencil: Option<usize>,
    epsilon_rel: Option<f64>,
    switch_times: Vec<f64>,
    events: &'a [SwitchEvent],
    merged_events: usize,
    caveat: &'static str,
}

pub fn analyze(cfg: &RunConfig, input: &Path) -> Result<()> {
    let sys = prepare(cfg)?;
    let snaps = read_snapshots(input, sys.spec.dim())?;
    let a = run_analysis(cfg, &sys, &snaps)?;
    emit(cfg.outputs.out.as_deref(), &output::spectral_csv(&a.series))?;
    if let Some(path) = &cfg.outputs.residuals_out {
        emit(Some(path), &output::residual_csv(&a.series))?;
    }
    if let Some(path) = &cfg.outputs.report_out {
        let detects = a.algorithm == Algorithm::Alg1;
        let report = SwitchReport {
            schema: "switch-report",
            version: 1,
            algorithm: a.algorithm.name(),
            stencil: a.stencil,
            epsilon_rel: detects.then_some(cfg.params.epsilon_rel),
            switch_times: a.switches.iter().map(|e| e.time).collect(),
            events: &a.switches,
            merged_events: a.switches.iter().filter(|e| e.merged).count(),
            caveat: if detects {
                MERGE_CAVEAT
            } else {
                "this algorithm does not detect switches"
            },
        };
        emit(Some(path), &json(&report))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareSummary {
    pub schema: &'static str,
    pub version: u32,
    pub algorithm: &'static str,
    pub steps: usize,
    pub max_e_k: f64,
    pub mean_e_k: f64,
    pub max_e_k_step: usize,
    pub max_eigenvalue_deviation: f64,
}

/// E_k of the configured algorithm on `snaps`, and the Koopman exponent
/// deviation of `spectral` (or of the fresh run) from the oracle.
pub fn run_compare(
    cfg: &RunConfig,
    sys: &ResolvedSystem,
    snaps: &SnapshotMatrix,
    spectral: Option<&output::SpectralTable>,
) -> Result<(Vec<f64>, CompareSummary)> {
    require_oracle(&sys.spec)?;
    let a = run_analysis(cfg, sys, snaps)?;
    let family = a.family.as_ref().ok_or_else(|| {
        CliError::config("compare needs a state-space operator family; alg2 works in observable coordinates")
    })?;
    let ek = error_ek(family, &sys.spec)?;
    let mut series = a.series.clone();
    if let Some(table) = spectral {
        if table.koopman_eigs.len() != snaps.columns() {
            return Err(CliError::config(format!(
                "spectral file has {} steps, snapshots have {}",
                table.koopman_eigs.len(),
                snaps.columns()
            )));
        }
        series.system_eigs = table.system_eigs.clone();
        series.koopman_eigs = table.koopman_eigs.clone();
    }
    let exact = koopman_exact_series(&sys.spec, snaps.grid)?;
    let deviation = max_eigenvalue_deviation(&series, &exact)?;
    let (max_e_k_step, max_e_k) = ek
        .iter()
        .copied()
        .enumerate()
        .fold((0, 0.0), |best, (k, e)| if e > best.1 { (k, e) } else { best });
    let summary = CompareSummary {
        schema: "compare-summary",
        version: 1,
        algorithm: a.algorithm.name(),
        steps: snaps.grid.steps,
        max_e_k,
        mean_e_k: ek.iter().sum::<f64>() / ek.len() as f64,
        max_e_k_step,
        max_eigenvalue_deviation: deviation,
    };
    Ok((ek, summary))
}

pub fn compare(cfg: &RunConfig, snapshots: &Path, spectral: Option<&Path>) -> Result<()> {
    let sys = prepare(cfg)?;
    let snaps = read_snapshots(snapshots, sys.spec.dim())?;
    let table = spectral.map(read_spectral_csv).transpose()?;
    let (ek, summary) = run_compare(cfg, &sys, &snaps, table.as_ref())?;
    emit(cfg.outputs.out.as_deref(), &output::ek_csv(snaps.grid, &ek))?;
    if let Some(path) = &cfg.outputs.report_out {
        emit(Some(path), &json(&summary))?;
    }
    Ok(())
}

pub fn run_theorem2(cfg: &RunConfig, sys: &ResolvedSystem) -> Result<Theorem2Sweep> {
    let blocks = match &sys.spec {
        SystemSpec::Spiral { blocks, .. } => blocks,
        _ => return Err(CliError::config("theorem2 needs a spiral system")),
    };
    let block = blocks.get(cfg.params.block).ok_or_else(|| {
        CliError::config(format!(
            "params.block = {} but the system has {} spiral block(s)",
            cfg.params.block,
            blocks.len()
        ))
    })?;
    if let Some(x0) = &cfg.x0 {
        if x0.len() != sys.spec.dim() {
            return Err(CliError::config(format!(
                "x0 has {} entries, system dimension is {}",
                x0.len(),
                sys.spec.dim()
            )));
        }
    }
    if cfg.params.dt_sweep.is_empty() {
        return Err(CliError::config("theorem2 needs --dt-sweep"));
    }
    let x0 = cfg
        .x0
        .as_ref()
        .or(sys.x0.as_ref())
        .map(|x| (x[block.first], x[block.second]))
        .unwrap_or((1.0, 0.0));
    Ok(theorem2_sweep(
        block,
        x0,
        cfg.grid.t0,
        cfg.params.at,
        &cfg.params.dt_sweep,
    )?)
}

pub fn theorem2(cfg: &RunConfig) -> Result<()> {
    let sys = prepare(cfg)?;
    let sweep = run_theorem2(cfg, &sys)?;
    emit(cfg.outputs.out.as_deref(), &output::theorem2_csv(&sweep))?;
    if let Some(path) = &cfg.outputs.report_out {
        emit(Some(path), &json(&sweep))?;
    }
    Ok(())
}

/// Prints the canonical form of the merged configuration.
pub fn show_config(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    cfg.system.resolve()?;
    emit(cfg.outputs.out.as_deref(), &cfg.to_json())
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serialises");
    s.push('\n');
    s
}
