//! Integration by parts, the Bismut form, reversibility and the
//! carré-du-champ limit.

use serde::{Deserialize, Serialize};

use super::{run_paths, McConfig, MCReport};
use crate::error::{Error, Result};
use crate::lattice::{sample_boundary_bm, Grid, NoiseSpec};
use crate::malliavin::{
    apply_l, bismut_lhs, compute_malliavin_line, gamma_form, probe_payoff, probe_vector_fields, solve_state_line,
    FaultInjection, MalliavinLine, Payoff, VectorFields,
};
use crate::sheet::{sample_ou_exact, sample_ou_hyperbolic, SheetField};
use crate::stochcalc::{Axis, LineProcess};

/// Gaps `t` at which `(1/t)·E[(F_t − F_0)(G_t − G_0)]` is sampled before
/// extrapolating to `t = 0`.
pub const CARRE_DU_CHAMP_GAPS: [f64; 3] = [1.0 / 16.0, 1.0 / 8.0, 1.0 / 4.0];

const PROBE_SEED: u64 = 0x5eed;

/// A model integrated along s-lines of `n_s` steps of size `ds`, started
/// from `x0`. The horizon is `n_s·ds`.
#[derive(Clone, Copy)]
pub struct LineExperiment<'a> {
    pub fields: &'a dyn VectorFields,
    pub x0: &'a [f64],
    pub n_s: usize,
    pub ds: f64,
    pub fault: FaultInjection,
}

/// Which sampler produces the OU sheet for the t-direction experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OuSampler {
    #[default]
    Exact,
    Hyperbolic,
}

impl LineExperiment<'_> {
    fn validate(&self) -> Result<()> {
        if self.n_s == 0 {
            return Err(Error::config("grid.n_s", "must be at least 1"));
        }
        if !(self.ds.is_finite() && self.ds > 0.0) {
            return Err(Error::config("grid.ds", format!("must be positive, got {}", self.ds)));
        }
        if self.x0.len() != self.fields.state_dim() {
            return Err(Error::config(
                "model.x0",
                format!("expected {} entries, got {}", self.fields.state_dim(), self.x0.len()),
            ));
        }
        probe_vector_fields(self.fields, PROBE_SEED)
    }

    fn malliavin(&self, z: &LineProcess) -> Result<MalliavinLine> {
        let state = solve_state_line(self.fields, z, self.x0)?;
        compute_malliavin_line(self.fields, &state, z, self.fault)
    }

    /// The t = 0 line of path `path`: a Brownian motion in s drawn from
    /// boundary slot 0, optionally observed on every `coarsen`-th node.
    fn line(&self, seed: u64, path: u64, coarsen: usize) -> Result<MalliavinLine> {
        let m = self.fields.noise_dim();
        let bm = sample_boundary_bm(self.n_s, self.ds, m, &NoiseSpec::new(seed, path, m), 0)?;
        let mut z = LineProcess::new(bm.values, m, self.ds, Axis::S);
        if coarsen > 1 {
            z = z.subsample(coarsen)?;
        }
        self.malliavin(&z)
    }

    fn ou_field(&self, sampler: OuSampler, dt: f64, n_t: usize, seed: u64, path: u64) -> Result<SheetField> {
        let m = self.fields.noise_dim();
        let grid = Grid::new(self.n_s, n_t, self.ds, dt)?;
        let noise = NoiseSpec::new(seed, path, m);
        match sampler {
            OuSampler::Exact => sample_ou_exact(&grid, &noise),
            OuSampler::Hyperbolic => sample_ou_hyperbolic(&grid, &noise),
        }
    }
}

fn payoff_notes(payoffs: &[&dyn Payoff]) -> Vec<String> {
    if payoffs.iter().any(|p| !p.bounded()) {
        vec!["unbounded payoff: relies on the model having moments of all orders".to_string()]
    } else {
        Vec::new()
    }
}

fn check_payoffs(exp: &LineExperiment<'_>, payoffs: &[&dyn Payoff]) -> Result<()> {
    for p in payoffs {
        if p.dim() != exp.fields.state_dim() {
            return Err(Error::config(
                "run.payoffs",
                format!("payoff of dimension {} for a state of dimension {}", p.dim(), exp.fields.state_dim()),
            ));
        }
        probe_payoff(*p, PROBE_SEED)?;
    }
    Ok(())
}

fn unzip(pairs: Vec<(f64, f64)>) -> (Vec<f64>, Vec<f64>) {
    pairs.into_iter().unzip()
}

fn ibp_report(
    exp: &LineExperiment<'_>,
    f: &dyn Payoff,
    g: &dyn Payoff,
    cfg: &McConfig,
    coarsen: usize,
) -> Result<MCReport> {
    let pairs = run_paths(cfg, |path| {
        let line = exp.line(cfg.seed, path, coarsen)?;
        let k = line.len();
        let lhs = gamma_form(f, g, &line, k);
        let rhs = -f.value(line.x_at(k)) * apply_l(g, &line, k);
        Ok((lhs, rhs))
    })?;
    let (lhs, rhs) = unzip(pairs);
    let mut report = MCReport::from_pairs(&lhs, &rhs)?;
    report.workers = cfg.workers;
    report.notes = payoff_notes(&[f, g]);
    Ok(report)
}

/// `E[∇f Γ ∇g]` against `−E[f·LG]` at the end of the t = 0 line.
pub fn run_ibp(exp: &LineExperiment<'_>, f: &dyn Payoff, g: &dyn Payoff, cfg: &McConfig) -> Result<MCReport> {
    exp.validate()?;
    check_payoffs(exp, &[f, g])?;
    ibp_report(exp, f, g, cfg, 1)
}

/// Adds a first-order bias budget: the same paths are rerun on the grid
/// with twice the step, and `|fine − coarse|` bounds the remaining
/// discretization bias of the fine estimate.
fn attach_bias(fine: &mut MCReport, coarse: &MCReport) {
    let d = &mut fine.diagnostics;
    d.insert("lhs_coarse".into(), coarse.lhs_mean);
    d.insert("rhs_coarse".into(), coarse.rhs_mean);
    d.insert("lhs_bias".into(), (fine.lhs_mean - coarse.lhs_mean).abs());
    d.insert("rhs_bias".into(), (fine.rhs_mean - coarse.rhs_mean).abs());
    d.insert("lhs_extrapolated".into(), 2.0 * fine.lhs_mean - coarse.lhs_mean);
    d.insert("rhs_extrapolated".into(), 2.0 * fine.rhs_mean - coarse.rhs_mean);
}

fn check_even(exp: &LineExperiment<'_>) -> Result<()> {
    if !exp.n_s.is_multiple_of(2) {
        return Err(Error::config("grid.n_s", "must be even for the Richardson bias budget"));
    }
    Ok(())
}

pub fn run_ibp_with_bias(
    exp: &LineExperiment<'_>,
    f: &dyn Payoff,
    g: &dyn Payoff,
    cfg: &McConfig,
) -> Result<MCReport> {
    exp.validate()?;
    check_even(exp)?;
    check_payoffs(exp, &[f, g])?;
    let mut fine = ibp_report(exp, f, g, cfg, 1)?;
    let coarse = ibp_report(exp, f, g, cfg, 2)?;
    attach_bias(&mut fine, &coarse);
    Ok(fine)
}

fn bismut_report(
    exp: &LineExperiment<'_>,
    f: &dyn Payoff,
    component: usize,
    cfg: &McConfig,
    coarsen: usize,
) -> Result<MCReport> {
    let d = exp.fields.state_dim();
    let pairs = run_paths(cfg, |path| {
        let line = exp.line(cfg.seed, path, coarsen)?;
        let k = line.len();
        let mut lhs = vec![0.0; d];
        bismut_lhs(f, &line, k, &mut lhs);
        let rhs = -f.value(line.x_at(k)) * line.r_at(k)[component];
        Ok((lhs[component], rhs))
    })?;
    let (lhs, rhs) = unzip(pairs);
    let mut report = MCReport::from_pairs(&lhs, &rhs)?;
    report.workers = cfg.workers;
    report.notes = payoff_notes(&[f]);
    Ok(report)
}

fn check_component(exp: &LineExperiment<'_>, component: usize) -> Result<()> {
    if component >= exp.fields.state_dim() {
        return Err(Error::config("run.component", format!("{component} is out of range")));
    }
    Ok(())
}

/// `E[∇f U C]_j` against `−E[f R_j]` at the end of the t = 0 line.
pub fn run_bismut(exp: &LineExperiment<'_>, f: &dyn Payoff, component: usize, cfg: &McConfig) -> Result<MCReport> {
    exp.validate()?;
    check_component(exp, component)?;
    check_payoffs(exp, &[f])?;
    bismut_report(exp, f, component, cfg, 1)
}

pub fn run_bismut_with_bias(
    exp: &LineExperiment<'_>,
    f: &dyn Payoff,
    component: usize,
    cfg: &McConfig,
) -> Result<MCReport> {
    exp.validate()?;
    check_even(exp)?;
    check_component(exp, component)?;
    check_payoffs(exp, &[f])?;
    let mut fine = bismut_report(exp, f, component, cfg, 1)?;
    let coarse = bismut_report(exp, f, component, cfg, 2)?;
    attach_bias(&mut fine, &coarse);
    Ok(fine)
}

fn steps_of(gap: f64, dt: f64, field: &str) -> Result<usize> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::config("grid.dt", format!("must be positive, got {dt}")));
    }
    let k = (gap / dt).round();
    if !(gap >= 0.0) || (gap - k * dt).abs() > 1e-9 * dt.max(gap) {
        return Err(Error::config(field, format!("{gap} is not a multiple of dt = {dt}")));
    }
    Ok(k as usize)
}

/// `E[(F' − F)(G' − G)]` against `−2E[F(G' − G)]`, where primes are taken
/// on the line `t = t_gap` of the OU sheet.
pub fn run_reversibility(
    exp: &LineExperiment<'_>,
    f: &dyn Payoff,
    g: &dyn Payoff,
    t_gap: f64,
    dt: f64,
    sampler: OuSampler,
    cfg: &McConfig,
) -> Result<MCReport> {
    exp.validate()?;
    check_payoffs(exp, &[f, g])?;
    let k = steps_of(t_gap, dt, "run.t_gap")?;
    let m = exp.fields.noise_dim();
    let pairs = run_paths(cfg, |path| {
        let (x0, x1) = if k == 0 {
            let bm = sample_boundary_bm(exp.n_s, exp.ds, m, &NoiseSpec::new(cfg.seed, path, m), 0)?;
            let z = LineProcess::new(bm.values, m, exp.ds, Axis::S);
            let x = solve_state_line(exp.fields, &z, exp.x0)?.x_at(exp.n_s).to_vec();
            (x.clone(), x)
        } else {
            let field = exp.ou_field(sampler, dt, k, cfg.seed, path)?;
            let end = |j: usize| -> Result<Vec<f64>> {
                Ok(solve_state_line(exp.fields, &field.row(j), exp.x0)?.x_at(exp.n_s).to_vec())
            };
            (end(0)?, end(k)?)
        };
        let (f0, f1) = (f.value(&x0), f.value(&x1));
        let (g0, g1) = (g.value(&x0), g.value(&x1));
        Ok(((f1 - f0) * (g1 - g0), -2.0 * f0 * (g1 - g0)))
    })?;
    let (lhs, rhs) = unzip(pairs);
    let mut report = MCReport::from_pairs(&lhs, &rhs)?;
    report.workers = cfg.workers;
    report.notes = payoff_notes(&[f, g]);
    report.diagnostics.insert("t_gap".into(), t_gap);
    Ok(report)
}

/// Least-squares weights `w_k` such that `Σ w_k y_k` is the intercept of
/// the line fitted to the points `(t_k, y_k)`.
fn intercept_weights(ts: &[f64]) -> Vec<f64> {
    let n = ts.len() as f64;
    let mean = ts.iter().sum::<f64>() / n;
    let sxx: f64 = ts.iter().map(|t| (t - mean) * (t - mean)).sum();
    ts.iter().map(|t| 1.0 / n - mean * (t - mean) / sxx).collect()
}

/// Carré-du-champ limit. For each path, `(1/t)(F_t − F_0)(G_t − G_0)` at
/// the given gaps is extrapolated linearly to `t = 0` and paired with
/// `∇f Γ ∇g` on the `t = 0` line of the same sheet.
pub fn run_carre_du_champ(
    exp: &LineExperiment<'_>,
    f: &dyn Payoff,
    g: &dyn Payoff,
    gaps: &[f64],
    sampler: OuSampler,
    cfg: &McConfig,
) -> Result<MCReport> {
    exp.validate()?;
    check_payoffs(exp, &[f, g])?;
    if gaps.len() < 2 {
        return Err(Error::config("run.lags", "at least two gaps are needed to extrapolate"));
    }
    let dt = gaps.iter().copied().fold(f64::INFINITY, f64::min);
    let steps = gaps
        .iter()
        .map(|gap| steps_of(*gap, dt, "run.lags"))
        .collect::<Result<Vec<_>>>()?;
    if steps.contains(&0) {
        return Err(Error::config("run.lags", "gaps must be positive"));
    }
    let n_t = *steps.iter().max().unwrap();
    let weights = intercept_weights(gaps);
    let rows = run_paths(cfg, |path| {
        let field = exp.ou_field(sampler, dt, n_t, cfg.seed, path)?;
        let line = exp.malliavin(&field.row(0))?;
        let k = line.len();
        let x0 = line.x_at(k);
        let (f0, g0) = (f.value(x0), g.value(x0));
        let mut ys = Vec::with_capacity(steps.len());
        for (gap, j) in gaps.iter().zip(&steps) {
            let state = solve_state_line(exp.fields, &field.row(*j), exp.x0)?;
            let x = state.x_at(exp.n_s);
            ys.push((f.value(x) - f0) * (g.value(x) - g0) / gap);
        }
        let intercept: f64 = weights.iter().zip(&ys).map(|(w, y)| w * y).sum();
        Ok((intercept, gamma_form(f, g, &line, k), ys))
    })?;
    let lhs: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let rhs: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let mut report = MCReport::from_pairs(&lhs, &rhs)?;
    report.workers = cfg.workers;
    report.notes = payoff_notes(&[f, g]);
    for (q, gap) in gaps.iter().enumerate() {
        let ys: Vec<f64> = rows.iter().map(|r| r.2[q]).collect();
        let s = super::summarize(&ys);
        report.diagnostics.insert(format!("scaled_lhs_t{gap}"), s.mean);
        report.diagnostics.insert(format!("scaled_lhs_se_t{gap}"), s.se);
    }
    Ok(report)
}
