//! Convergence studies over a ladder of block steps.

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::analysis::{truncation_order, DEFAULT_P_MAX};
use crate::integrate::{
    integrate, measure_lte, rk4_reference, FloatScheme, IntegrateError, Problem,
};
use crate::scheme::Scheme;

/// `{1/8, 1/16, 1/32, 1/64, 1/128}`.
pub const STANDARD_LADDER: [f64; 5] = [0.125, 0.0625, 0.03125, 0.015625, 0.0078125];

const REFERENCE_START_STEPS: usize = 1024;
const REFERENCE_MAX_STEPS: usize = 1 << 22;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("need >=3 dt values, got {0}")]
    TooFewDts(usize),
    #[error("dt list must be strictly decreasing and positive")]
    NotDecreasing,
    #[error("need >=3 points with positive error for a slope fit, got {0}")]
    TooFewPoints(usize),
    #[error("dt = {dt}: {source}")]
    Run { dt: f64, source: IntegrateError },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Where the errors were measured against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Exact,
    /// Doubling-verified RK4; the largest step count used.
    Rk4 {
        n_steps: usize,
    },
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Exact => write!(f, "exact solution"),
            Self::Rk4 { n_steps } => {
                write!(f, "RK4 reference ({n_steps} steps, doubling-verified)")
            }
        }
    }
}

/// Errors per `Δt`, per block component. Components are flattened as
/// `row·m + i` for row `row` of the block and solution component `i`.
#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceReport {
    pub scheme: String,
    pub problem: String,
    pub t_end: f64,
    pub s: usize,
    pub m: usize,
    /// Truncation order `q` of the scheme.
    pub truncation_order: u32,
    pub dts: Vec<f64>,
    pub global_errors: Vec<Vec<f64>>,
    /// Max-norm over components, per `Δt`.
    pub global_max: Vec<f64>,
    pub lte: Option<Vec<Vec<f64>>>,
    pub global_slopes: Vec<f64>,
    pub global_max_slope: f64,
    pub lte_slopes: Option<Vec<f64>>,
    /// Slope of the max-norm LTE.
    pub lte_max_slope: Option<f64>,
    pub provenance: Provenance,
}

impl ConvergenceReport {
    pub fn components(&self) -> usize {
        self.s * self.m
    }

    pub fn min_global_slope(&self) -> f64 {
        self.global_slopes
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_global_slope(&self) -> f64 {
        self.global_slopes
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn column(rows: &[Vec<f64>], j: usize) -> Vec<f64> {
        rows.iter().map(|r| r[j]).collect()
    }
}

impl fmt::Display for ConvergenceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} on {} to T = {} (truncation order {}), errors vs {}",
            self.scheme, self.problem, self.t_end, self.truncation_order, self.provenance
        )?;
        write!(f, "{:>12}", "dt")?;
        for j in 0..self.components() {
            write!(f, " {:>12}", format!("err[{j}]"))?;
        }
        if self.lte.is_some() {
            for j in 0..self.components() {
                write!(f, " {:>12}", format!("lte[{j}]"))?;
            }
        }
        writeln!(f)?;
        for (k, dt) in self.dts.iter().enumerate() {
            write!(f, "{dt:>12.6e}")?;
            for e in &self.global_errors[k] {
                write!(f, " {e:>12.4e}")?;
            }
            if let Some(lte) = &self.lte {
                for e in &lte[k] {
                    write!(f, " {e:>12.4e}")?;
                }
            }
            writeln!(f)?;
        }
        write!(f, "{:>12}", "slope")?;
        for s in &self.global_slopes {
            write!(f, " {s:>12.3}")?;
        }
        if let Some(lte) = &self.lte_slopes {
            for s in lte {
                write!(f, " {s:>12.3}")?;
            }
        }
        writeln!(f)?;
        write!(f, "max-norm global slope {:.3}", self.global_max_slope)?;
        if let Some(s) = self.lte_max_slope {
            write!(f, ", max-norm LTE slope {s:.3}")?;
        }
        Ok(())
    }
}

/// Least-squares slope of `log2(err)` against `log2(dt)`. Points with a
/// non-positive or non-finite error are dropped with a warning.
pub fn fit_slope(points: &[(f64, f64)]) -> Result<f64, HarnessError> {
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|&&(dt, err)| {
            let ok = err > 0.0 && err.is_finite() && dt > 0.0;
            if !ok {
                log::warn!("excluding point (dt = {dt}, err = {err}) from slope fit");
            }
            ok
        })
        .map(|&(dt, err)| (dt.log2(), err.log2()))
        .collect();
    if usable.len() < 3 {
        return Err(HarnessError::TooFewPoints(usable.len()));
    }
    let n = usable.len() as f64;
    let mx = usable.iter().map(|p| p.0).sum::<f64>() / n;
    let my = usable.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = usable.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = usable.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    Ok(sxy / sxx)
}

/// RK4 solution at `t`, doubling the step count from 1024 until the
/// doubling check in [`rk4_reference`] passes.
pub fn reference_solution(problem: &Problem, t: f64) -> Result<(Vec<f64>, usize), IntegrateError> {
    let mut n = REFERENCE_START_STEPS;
    loop {
        match rk4_reference(problem, t, n) {
            Ok(u) => return Ok((u, 2 * n)),
            Err(IntegrateError::ReferenceNotConverged { .. }) if n < REFERENCE_MAX_STEPS => n *= 2,
            Err(e) => return Err(e),
        }
    }
}

struct Run {
    errors: Vec<f64>,
    lte: Option<Vec<f64>>,
    reference_steps: usize,
}

fn run_one(
    scheme: &FloatScheme,
    problem: &Problem,
    dt: f64,
    t_end: f64,
) -> Result<Run, IntegrateError> {
    let traj = integrate(scheme, problem, dt, t_end, false)?;
    let last = traj.last();
    let mut errors = Vec::with_capacity(last.values.len());
    let mut reference_steps = 0;
    for (j, t) in last.row_times(scheme, dt).into_iter().enumerate() {
        let truth = match problem.exact(t) {
            Some(u) => u,
            None => {
                let (u, n) = reference_solution(problem, t)?;
                reference_steps = reference_steps.max(n);
                u
            }
        };
        errors.extend(last.row(j).iter().zip(&truth).map(|(v, u)| (u - v).abs()));
    }
    let lte = if problem.has_exact() {
        Some(measure_lte(scheme, problem, dt, t_end)?)
    } else {
        None
    };
    Ok(Run {
        errors,
        lte,
        reference_steps,
    })
}

/// Runs `scheme` on `problem` for each `Δt` and fits log–log slopes.
pub fn converge(
    scheme: &Scheme,
    problem: &Problem,
    dts: &[f64],
    t_end: f64,
) -> Result<ConvergenceReport, HarnessError> {
    if dts.len() < 3 {
        return Err(HarnessError::TooFewDts(dts.len()));
    }
    if dts.iter().any(|&dt| dt.is_nan() || dt <= 0.0) || dts.windows(2).any(|w| w[1] >= w[0]) {
        return Err(HarnessError::NotDecreasing);
    }
    let fs = FloatScheme::from(scheme);
    let runs: Vec<Run> = dts
        .par_iter()
        .map(|&dt| {
            run_one(&fs, problem, dt, t_end).map_err(|source| HarnessError::Run { dt, source })
        })
        .collect::<Result<_, _>>()?;

    let global_errors: Vec<Vec<f64>> = runs.iter().map(|r| r.errors.clone()).collect();
    let global_max: Vec<f64> = global_errors
        .iter()
        .map(|e| e.iter().copied().fold(0.0, f64::max))
        .collect();
    let components = global_errors[0].len();
    let slopes_of = |rows: &[Vec<f64>]| -> Result<Vec<f64>, HarnessError> {
        (0..components)
            .map(|j| {
                let col = ConvergenceReport::column(rows, j);
                fit_slope(&dts.iter().copied().zip(col).collect::<Vec<_>>())
            })
            .collect()
    };
    let global_slopes = slopes_of(&global_errors)?;
    let global_max_slope = fit_slope(
        &dts.iter()
            .copied()
            .zip(global_max.iter().copied())
            .collect::<Vec<_>>(),
    )?;
    let lte: Option<Vec<Vec<f64>>> = runs.iter().map(|r| r.lte.clone()).collect();
    let lte_slopes = lte.as_deref().map(slopes_of).transpose()?;
    let lte_max_slope = lte
        .as_ref()
        .map(|rows| {
            let maxima = rows.iter().map(|e| e.iter().copied().fold(0.0, f64::max));
            fit_slope(&dts.iter().copied().zip(maxima).collect::<Vec<_>>())
        })
        .transpose()?;
    let provenance = if problem.has_exact() {
        Provenance::Exact
    } else {
        Provenance::Rk4 {
            n_steps: runs.iter().map(|r| r.reference_steps).max().unwrap_or(0),
        }
    };

    Ok(ConvergenceReport {
        scheme: scheme.name().to_string(),
        problem: problem.name().to_string(),
        t_end,
        s: scheme.size(),
        m: problem.dim(),
        truncation_order: truncation_order(scheme, DEFAULT_P_MAX).order,
        dts: dts.to_vec(),
        global_errors,
        global_max,
        lte,
        global_slopes,
        global_max_slope,
        lte_slopes,
        lte_max_slope,
        provenance,
    })
}

fn csv_header(report: &ConvergenceReport) -> Vec<String> {
    let mut header = vec!["dt".to_string()];
    header.extend((0..report.components()).map(|j| format!("global_err_comp_{j}")));
    if report.lte.is_some() {
        header.extend((0..report.components()).map(|j| format!("lte_comp_{j}")));
    }
    header
}

fn csv_rows(report: &ConvergenceReport) -> Vec<Vec<f64>> {
    report
        .dts
        .iter()
        .enumerate()
        .map(|(k, &dt)| {
            let mut row = vec![dt];
            row.extend(&report.global_errors[k]);
            if let Some(lte) = &report.lte {
                row.extend(&lte[k]);
            }
            row
        })
        .collect()
}

/// 17 significant digits, enough to round-trip any double.
fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn emit_csv(report: &ConvergenceReport, path: impl AsRef<Path>) -> Result<(), HarnessError> {
    let mut out = io::BufWriter::new(fs::File::create(path)?);
    writeln!(out, "{}", csv_header(report).join(","))?;
    for row in csv_rows(report) {
        writeln!(
            out,
            "{}",
            row.into_iter().map(fmt_f64).collect::<Vec<_>>().join(",")
        )?;
    }
    out.flush()?;
    Ok(())
}

/// A standalone gnuplot script with the data inlined and guide lines of
/// slopes `q` and `q + 1`.
pub fn plot_script(report: &ConvergenceReport, image: &str) -> String {
    let header = csv_header(report);
    let rows = csv_rows(report);
    let q = report.truncation_order;
    let finest = rows.len() - 1;
    let dt_min = report.dts[finest];
    let lte_anchor = report
        .lte
        .as_ref()
        .map(|l| l[finest].iter().copied().fold(0.0, f64::max))
        .unwrap_or(report.global_max[finest]);
    let global_anchor = report.global_max[finest];

    let mut s = String::new();
    s.push_str(&format!(
        "# {} on {}, T = {}\n",
        report.scheme, report.problem, report.t_end
    ));
    s.push_str(&format!("# columns: {}\n", header.join(" ")));
    s.push_str("set terminal pngcairo size 900,650\n");
    s.push_str(&format!("set output '{image}'\n"));
    s.push_str("set logscale xy\n");
    s.push_str("set format x '2^{%L}'\nset format y '10^{%T}'\n");
    s.push_str("set xlabel 'dt'\nset ylabel 'error'\n");
    s.push_str("set key left top\nset grid\n");
    s.push_str(&format!(
        "set title '{} on {}: errors and truncation errors vs dt'\n",
        report.scheme, report.problem
    ));
    s.push_str("$data << EOD\n");
    for row in &rows {
        s.push_str(
            &row.iter()
                .map(|x| fmt_f64(*x))
                .collect::<Vec<_>>()
                .join(" "),
        );
        s.push('\n');
    }
    s.push_str("EOD\n");
    s.push_str(&format!("q = {q}\n"));
    s.push_str(&format!(
        "lte_ref(x) = {} * (x / {})**q\n",
        fmt_f64(lte_anchor),
        fmt_f64(dt_min)
    ));
    s.push_str(&format!(
        "err_ref(x) = {} * (x / {})**(q + 1)\n",
        fmt_f64(global_anchor),
        fmt_f64(dt_min)
    ));
    let mut curves = Vec::new();
    let n = report.components();
    for j in 0..n {
        curves.push(format!(
            "$data using 1:{} with linespoints lw 2 title 'err {}'",
            j + 2,
            component_label(report, j)
        ));
    }
    if report.lte.is_some() {
        for j in 0..n {
            curves.push(format!(
                "$data using 1:{} with linespoints dt 3 title 'tr err {}'",
                n + j + 2,
                component_label(report, j)
            ));
        }
    }
    curves.push("lte_ref(x) with lines dt 2 lc 'gray' title sprintf('slope %d', q)".to_string());
    curves
        .push("err_ref(x) with lines dt 4 lc 'black' title sprintf('slope %d', q + 1)".to_string());
    s.push_str("plot ");
    s.push_str(&curves.join(", \\\n     "));
    s.push('\n');
    s
}

fn component_label(report: &ConvergenceReport, j: usize) -> String {
    if report.m == 1 {
        format!("v({})", j + 1)
    } else {
        format!("v({}) u{}", j / report.m + 1, j % report.m + 1)
    }
}

pub fn emit_plot_script(
    report: &ConvergenceReport,
    path: impl AsRef<Path>,
) -> Result<(), HarnessError> {
    let path = path.as_ref();
    let image = path.with_extension("png");
    let image = image
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "convergence.png".into());
    fs::write(path, plot_script(report, &image))?;
    Ok(())
}
