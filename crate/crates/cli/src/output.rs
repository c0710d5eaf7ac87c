//! CSV emitters and the spectral CSV reader. Every file opens with a
//! `# schema=<name> version=1` line; numbers carry 17 significant digits.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use koopman_family::koopman::{SpectralTimeSeries, Theorem2Sweep};
use koopman_family::linalg::{c, C64};
use koopman_family::snapshots::TimeGrid;

use crate::error::{CliError, Result};

pub const SPECTRAL_HEADER: &str = "k,t,branch,re_lambda_A,im_lambda_A,re_lambda_K,im_lambda_K,residual_rel,switch_flag";
pub const RESIDUAL_HEADER: &str = "k,t,residual_abs,residual_rel,switch_flag";
pub const EK_HEADER: &str = "k,t,e_k";
pub const THEOREM2_HEADER: &str = "dt,measured_re,predicted_re,residual_re,measured_arg,predicted_arg,residual_arg,\
predicted_arg_without_drift,exact_re,exact_arg,order_re,order_arg";

pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn schema(name: &str) -> String {
    format!("# schema={name} version=1\n")
}

pub fn spectral_csv(series: &SpectralTimeSeries) -> String {
    let mut s = schema("spectral");
    s.push_str(SPECTRAL_HEADER);
    s.push('\n');
    for k in 0..series.koopman_eigs.len() {
        let t = num(series.grid.time(k));
        let (rel, flag) = (num(series.residual_rel[k]), u8::from(series.switch_flags[k]));
        for (b, lk) in series.koopman_eigs[k].iter().enumerate() {
            let la = series.system_eigs[k][b];
            writeln!(
                s,
                "{k},{t},{b},{},{},{},{},{rel},{flag}",
                num(la.re),
                num(la.im),
                num(lk.re),
                num(lk.im)
            )
            .unwrap();
        }
    }
    s
}

pub fn residual_csv(series: &SpectralTimeSeries) -> String {
    let mut s = schema("residuals");
    s.push_str(RESIDUAL_HEADER);
    s.push('\n');
    for k in 0..series.residual_rel.len() {
        writeln!(
            s,
            "{k},{},{},{},{}",
            num(series.grid.time(k)),
            num(series.residual_abs[k]),
            num(series.residual_rel[k]),
            u8::from(series.switch_flags[k])
        )
        .unwrap();
    }
    s
}

pub fn ek_csv(grid: TimeGrid, ek: &[f64]) -> String {
    let mut s = schema("error-ek");
    s.push_str(EK_HEADER);
    s.push('\n');
    for (k, e) in ek.iter().enumerate() {
        writeln!(s, "{k},{},{}", num(grid.time(k)), num(*e)).unwrap();
    }
    s
}

pub fn theorem2_csv(sweep: &Theorem2Sweep) -> String {
    let opt = |o: Option<f64>| o.map(num).unwrap_or_default();
    let mut s = schema("theorem2");
    s.push_str(THEOREM2_HEADER);
    s.push('\n');
    for r in &sweep.rows {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            num(r.dt),
            num(r.measured_re),
            num(r.predicted_re),
            num(r.residual_re()),
            num(r.measured_arg),
            num(r.predicted_arg),
            num(r.residual_arg()),
            num(r.predicted_arg_without_drift),
            num(r.exact_re),
            num(r.exact_arg),
            opt(sweep.order_re),
            opt(sweep.order_arg)
        )
        .unwrap();
    }
    s
}

/// Spectral CSV contents regrouped per step.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralTable {
    pub times: Vec<f64>,
    pub system_eigs: Vec<Vec<C64>>,
    pub koopman_eigs: Vec<Vec<C64>>,
    pub residual_rel: Vec<f64>,
    pub switch_flags: Vec<bool>,
}

pub fn read_spectral_csv(path: &Path) -> Result<SpectralTable> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_spectral_csv(&text).map_err(|message| CliError::Input {
        path: path.to_path_buf(),
        message,
    })
}

pub fn parse_spectral_csv(text: &str) -> std::result::Result<SpectralTable, String> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.starts_with('#') && !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == SPECTRAL_HEADER => {}
        Some((i, h)) => {
            return Err(format!(
                "line {}: expected header `{SPECTRAL_HEADER}`, found `{h}`",
                i + 1
            ))
        }
        None => return Err("empty spectral file".into()),
    }
    let mut table = SpectralTable {
        times: Vec::new(),
        system_eigs: Vec::new(),
        koopman_eigs: Vec::new(),
        residual_rel: Vec::new(),
        switch_flags: Vec::new(),
    };
    for (i, line) in lines {
        let at = |msg: String| format!("line {}: {msg}", i + 1);
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 9 {
            return Err(at(format!("expected 9 fields, found {}", fields.len())));
        }
        let int = |f: &str| f.parse::<usize>().map_err(|e| at(format!("`{f}`: {e}")));
        let float = |f: &str| f.parse::<f64>().map_err(|e| at(format!("`{f}`: {e}")));
        let (k, branch) = (int(fields[0])?, int(fields[2])?);
        if k == table.times.len() && branch == 0 {
            table.times.push(float(fields[1])?);
            table.system_eigs.push(Vec::new());
            table.koopman_eigs.push(Vec::new());
            table.residual_rel.push(float(fields[7])?);
            table.switch_flags.push(int(fields[8])? != 0);
        } else if k + 1 != table.times.len() || branch != table.koopman_eigs[k].len() {
            return Err(at(format!("rows out of order at k={k}, branch={branch}")));
        }
        table.system_eigs[k].push(c(float(fields[3])?, float(fields[4])?));
        table.koopman_eigs[k].push(c(float(fields[5])?, float(fields[6])?));
    }
    if let Some(first) = table.koopman_eigs.first() {
        if table.koopman_eigs.iter().any(|row| row.len() != first.len()) {
            return Err("branch count varies between steps".into());
        }
    }
    Ok(table)
}

/// Writes to `path`, or to standard output when `path` is `None`.
pub fn emit(path: Option<&Path>, contents: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, contents).map_err(|e| CliError::io(p, e)),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(contents.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| CliError::io("<stdout>", e))
        }
    }
}
