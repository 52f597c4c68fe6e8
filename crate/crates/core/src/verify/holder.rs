//! Hölder scans: `E|X_{s,t} − X_{s,0}|^α` over a set of t-lags at the
//! last s-node of the grid, with a log-log power-law fit.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{run_paths, summarize, McConfig};
use crate::error::{Error, Result};
use crate::hyperbolic::presets::BoundedTestSystem;
use crate::hyperbolic::{solve_system, SolverOptions};
use crate::lattice::{sample_cell_increments, Grid, NoiseSpec};
use crate::malliavin::{solve_state_line, PolynomialFields};
use crate::sheet::{build_sheet, sample_ou_exact, SheetField};

/// Process whose t-regularity is scanned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HolderSource {
    /// The Brownian sheet itself.
    Sheet,
    /// `U_{s,t}` of the linear model `X_1(x) = x`, `x_0 = 1`, driven by the
    /// exact OU sheet.
    ModelU,
    /// `x` of the bounded test system.
    SystemX,
    /// `p` of the bounded test system.
    SystemP,
    /// `u` of the bounded test system.
    SystemU,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderReport {
    pub source: HolderSource,
    pub lags: Vec<f64>,
    pub moments: Vec<f64>,
    pub moment_se: Vec<f64>,
    pub fitted_slope: f64,
    /// 95% interval from the regression residuals.
    pub slope_ci: (f64, f64),
    pub alpha: f64,
    /// `exp` of the fitted intercept, so that `moment ≈ constant·lag^slope`.
    pub constant: f64,
    pub n_paths: usize,
    pub config_digest: String,
}

impl HolderReport {
    pub fn to_json(&self) -> String {
        super::to_canonical_json(self)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# sheetcalc holder-scan v1 digest={}", self.config_digest)?;
        writeln!(w, "lag,moment,se")?;
        for ((lag, m), se) in self.lags.iter().zip(&self.moments).zip(&self.moment_se) {
            writeln!(w, "{lag},{m},{se}")?;
        }
        Ok(())
    }
}

/// Ordinary least squares of `ln moment` on `ln lag`. Returns the slope,
/// its 95% Student-t interval and `exp(intercept)`.
pub fn fit_power_law(lags: &[f64], moments: &[f64]) -> Result<(f64, (f64, f64), f64)> {
    if lags.len() != moments.len() {
        return Err(Error::Shape("lags and moments differ in length".into()));
    }
    if lags.len() < 3 {
        return Err(Error::config("run.lags", "at least three lags are needed for a fit"));
    }
    if let Some(m) = moments.iter().find(|m| !(m.is_finite() && **m > 0.0)) {
        return Err(Error::Degenerate(format!(
            "moment {m} cannot be fitted on a log scale; the process does not move over the lags"
        )));
    }
    let xs: Vec<f64> = lags.iter().map(|l| l.ln()).collect();
    let ys: Vec<f64> = moments.iter().map(|m| m.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx <= 0.0 {
        return Err(Error::Degenerate("all lags are equal".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - intercept - slope * x;
            r * r
        })
        .sum();
    let dof = n - 2.0;
    let se = (rss / dof / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, dof)
        .map_err(|e| Error::Degenerate(e.to_string()))?
        .inverse_cdf(0.975);
    Ok((slope, (slope - t * se, slope + t * se), intercept.exp()))
}

fn lag_steps(grid: &Grid, lags: &[f64]) -> Result<Vec<usize>> {
    lags.iter()
        .map(|lag| {
            let k = (lag / grid.dt).round();
            if !(*lag > 0.0) || (lag - k * grid.dt).abs() > 1e-9 * grid.dt.max(*lag) {
                return Err(Error::config("run.lags", format!("{lag} is not a positive multiple of dt")));
            }
            if k as usize > grid.n_t {
                return Err(Error::config("run.lags", format!("{lag} exceeds the t-extent of the grid")));
            }
            Ok(k as usize)
        })
        .collect()
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Values of the scanned process at `(n_s, j)` for every `j` of one path.
fn column_at_end(source: HolderSource, grid: &Grid, seed: u64, path: u64) -> Result<Vec<Vec<f64>>> {
    let i = grid.n_s;
    let column = |f: &SheetField| (0..=grid.n_t).map(|j| f.node(i, j).to_vec()).collect();
    match source {
        HolderSource::Sheet => {
            let incs = sample_cell_increments(grid, &NoiseSpec::new(seed, path, 1))?;
            Ok(column(&build_sheet(&incs)))
        }
        HolderSource::ModelU => {
            let vf = PolynomialFields::linear1d();
            let z = sample_ou_exact(grid, &NoiseSpec::new(seed, path, 1))?;
            (0..=grid.n_t)
                .map(|j| Ok(solve_state_line(&vf, &z.row(j), &[1.0])?.u_at(i).to_vec()))
                .collect()
        }
        HolderSource::SystemX | HolderSource::SystemP | HolderSource::SystemU => {
            let sol = solve_bounded_system(grid, seed, path)?;
            Ok(match source {
                HolderSource::SystemX => column(&sol.x),
                HolderSource::SystemP => column(&sol.p),
                _ => column(&sol.u),
            })
        }
    }
}

fn solve_bounded_system(grid: &Grid, seed: u64, path: u64) -> Result<crate::hyperbolic::HyperbolicSolution> {
    let noise = NoiseSpec::new(seed, path, 1);
    let incs = sample_cell_increments(grid, &noise)?;
    let bounds = BoundedTestSystem::brownian_boundaries(grid, &noise)?;
    solve_system(&BoundedTestSystem, &bounds, grid, &incs, &SolverOptions::default())
}

/// Estimates `E|X_{S,t} − X_{S,0}|^α` for each lag `t` at `S = n_s·ds` and
/// fits `ln moment = ln C + slope·ln t`. Lags must be multiples of `dt`
/// within the t-extent; dyadic lags give evenly spaced log points.
pub fn run_holder_scan(
    source: HolderSource,
    grid: &Grid,
    alpha: f64,
    lags: &[f64],
    cfg: &McConfig,
) -> Result<HolderReport> {
    grid.validate()?;
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::config("run.alpha", format!("must be positive, got {alpha}")));
    }
    if lags.len() < 3 {
        return Err(Error::config("run.lags", "at least three lags are needed for a fit"));
    }
    let steps = lag_steps(grid, lags)?;
    let per_path = run_paths(cfg, |path| {
        let col = column_at_end(source, grid, cfg.seed, path)?;
        Ok(steps
            .iter()
            .map(|k| distance(&col[*k], &col[0]).powf(alpha))
            .collect::<Vec<f64>>())
    })?;
    let mut moments = Vec::with_capacity(lags.len());
    let mut moment_se = Vec::with_capacity(lags.len());
    for q in 0..lags.len() {
        let s = summarize(&per_path.iter().map(|r| r[q]).collect::<Vec<_>>());
        moments.push(s.mean);
        moment_se.push(s.se);
    }
    let (fitted_slope, slope_ci, constant) = fit_power_law(lags, &moments)?;
    Ok(HolderReport {
        source,
        lags: lags.to_vec(),
        moments,
        moment_se,
        fitted_slope,
        slope_ci,
        alpha,
        constant,
        n_paths: cfg.n_paths,
        config_digest: String::new(),
    })
}
