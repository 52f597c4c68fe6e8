//! Calculus-rule checks on the lattice, the sheet covariance probe and the
//! OU cross-validation.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::{fit_power_law, run_paths, summarize, McConfig};
use crate::error::{Error, Result};
use crate::lattice::{sample_boundary_bm, sample_cell_increments, CellIncrements, Grid, NoiseSpec, Stream};
use crate::sheet::{build_sheet, sample_ou_exact, sample_ou_hyperbolic, SheetField, SweepOrder};
use crate::stochcalc::{
    check_mixed_annihilation, integral_two_param, integral_two_param_ordered, integral_zeta1,
    integral_zeta1_stratonovich, integral_zeta2, Axis, IntegralKind, LineProcess,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleCheck {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub target: f64,
    /// Allowed `|value − target|`; zero for bit-level identities.
    pub tolerance: f64,
    pub detail: String,
}

impl RuleCheck {
    fn within(name: &str, value: f64, target: f64, tolerance: f64, detail: String) -> Self {
        RuleCheck {
            name: name.to_string(),
            passed: (value - target).abs() <= tolerance,
            value,
            target,
            tolerance,
            detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RulesReport {
    pub checks: Vec<RuleCheck>,
    pub n_paths: usize,
    pub config_digest: String,
}

impl RulesReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&RuleCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> String {
        super::to_canonical_json(self)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# sheetcalc rules v1 digest={}", self.config_digest)?;
        writeln!(w, "name,passed,value,target,tolerance")?;
        for c in &self.checks {
            writeln!(w, "{},{},{},{},{}", c.name, c.passed, c.value, c.target, c.tolerance)?;
        }
        Ok(())
    }
}

/// Number of independent dyadic samples used by each bit-level check.
const EXACT_SAMPLES: u64 = 64;

/// Rounds to a multiple of 2⁻¹⁰, so sums and products of a few such values
/// are exact in binary floating point.
fn dyadic(v: f64) -> f64 {
    (v * 1024.0).round() / 1024.0
}

fn dyadic_walk(seed: u64, path: u64, slot: u32, n: usize, step: f64) -> LineProcess {
    let mut src = NoiseSpec::new(seed, path, 1).source(Stream::Custom(slot));
    let mut values = vec![dyadic(src.normal(0))];
    for k in 0..n {
        let next = values[k] + dyadic(src.normal(k as u64 + 1) * 0.25);
        values.push(next);
    }
    LineProcess::new(values, 1, step, Axis::S)
}

fn exact_check(name: &str, mismatches: usize, samples: u64, detail: &str) -> RuleCheck {
    RuleCheck {
        name: name.to_string(),
        passed: mismatches == 0,
        value: mismatches as f64,
        target: 0.0,
        tolerance: 0.0,
        detail: format!("{detail}; {mismatches} of {samples} samples differ in any bit"),
    }
}

fn telescoping_checks(seed: u64) -> Result<Vec<RuleCheck>> {
    let n = 64;
    let step = 1.0 / n as f64;
    let ones = LineProcess::new(vec![1.0; n + 1], 1, step, Axis::S);
    let (mut zeta1, mut strat, mut bridge) = (0, 0, 0);
    for path in 0..EXACT_SAMPLES {
        let x = dyadic_walk(seed, path, 0, n, step);
        let a = dyadic_walk(seed, path, 1, n, step);
        let (x0, xn) = (x.at(0)[0], x.last()[0]);

        if integral_zeta1(&ones, &x)?.last()[0].to_bits() != (xn - x0).to_bits() {
            zeta1 += 1;
        }
        let two_x = x.map(|v| 2.0 * v);
        if integral_zeta1_stratonovich(&two_x, &x)?.last()[0].to_bits() != (xn * xn - x0 * x0).to_bits() {
            strat += 1;
        }
        let s = integral_zeta1_stratonovich(&a, &x)?;
        let i = integral_zeta1(&a, &x)?;
        let q = integral_zeta2(&a, &x)?;
        if (0..=n).any(|k| s.at(k)[0].to_bits() != (i.at(k)[0] + 0.5 * q.at(k)[0]).to_bits()) {
            bridge += 1;
        }
    }
    let mut sheet = 0;
    for path in 0..EXACT_SAMPLES {
        let grid = Grid::new(16, 16, 1.0 / 16.0, 1.0 / 16.0)?;
        let incs = sample_cell_increments(&grid, &NoiseSpec::new(seed, path, 1))?;
        let w = build_sheet(&CellIncrements::from_fn(grid, 1, |i, j, _| dyadic(incs.get(i, j, 0))));
        let bs = dyadic_walk(seed, path, 2, grid.n_s, grid.ds);
        let bt = dyadic_walk(seed, path, 3, grid.n_t, grid.dt);
        let mut x = w.clone();
        for j in 0..=grid.n_t {
            for i in 0..=grid.n_s {
                x.node_mut(i, j)[0] += bs.at(i)[0] + bt.at(j)[0];
            }
        }
        let ones = SheetField {
            grid,
            dim: 1,
            values: vec![1.0; grid.n_nodes()],
        };
        let z = integral_two_param(IntegralKind::Zeta3, Some(&ones), &x, None)?;
        let differs = (0..=grid.n_t).any(|j| {
            (0..=grid.n_s).any(|i| {
                let direct = x.at(i, j, 0) - x.at(i, 0, 0) - x.at(0, j, 0) + x.at(0, 0, 0);
                z.at(i, j, 0).to_bits() != direct.to_bits()
            })
        });
        if differs {
            sheet += 1;
        }
    }
    Ok(vec![
        exact_check("zeta1_telescoping", zeta1, EXACT_SAMPLES, "a = 1: sum equals x_n - x_0"),
        exact_check(
            "stratonovich_square_telescoping",
            strat,
            EXACT_SAMPLES,
            "midpoint integral of 2x against x equals x_n^2 - x_0^2",
        ),
        exact_check("zeta3_telescoping", sheet, EXACT_SAMPLES, "a = 1: double sum equals the rectangle increment"),
        exact_check(
            "ito_stratonovich_bridge",
            bridge,
            EXACT_SAMPLES,
            "midpoint integral equals Ito integral plus half the covariation at every node",
        ),
    ])
}

fn order_exchange_check(seed: u64) -> Result<RuleCheck> {
    let grid = Grid::new(24, 17, 1.0 / 24.0, 1.0 / 17.0)?;
    let mut mismatches = 0;
    for path in 0..EXACT_SAMPLES {
        let noise = NoiseSpec::new(seed, path, 2);
        let w = build_sheet(&sample_cell_increments(&grid, &noise)?);
        let a = w.component(1).values.iter().map(|v| v.sin()).collect();
        let a = SheetField { grid, dim: 1, values: a };
        let x = w.component(0);
        let s = integral_two_param_ordered(IntegralKind::Zeta3, Some(&a), &x, None, SweepOrder::SMajor)?;
        let t = integral_two_param_ordered(IntegralKind::Zeta3, Some(&a), &x, None, SweepOrder::TMajor)?;
        if s.values.iter().zip(&t.values).any(|(p, q)| p.to_bits() != q.to_bits()) {
            mismatches += 1;
        }
    }
    Ok(exact_check(
        "zeta3_order_exchange",
        mismatches,
        EXACT_SAMPLES,
        "rows-then-columns against columns-then-rows with a = sin(w^2)",
    ))
}

fn zeta6_checks(cfg: &McConfig) -> Result<Vec<RuleCheck>> {
    let grid = Grid::new(16, 16, 1.0 / 16.0, 1.0 / 16.0)?;
    let pairs = run_paths(cfg, |path| {
        let w = build_sheet(&sample_cell_increments(&grid, &NoiseSpec::new(cfg.seed, path, 2))?);
        let (w1, w2) = (w.component(0), w.component(1));
        let diag = integral_two_param(IntegralKind::Zeta6, None, &w1, Some(&w1))?;
        let off = integral_two_param(IntegralKind::Zeta6, None, &w1, Some(&w2))?;
        Ok((diag.at(16, 16, 0), off.at(16, 16, 0)))
    })?;
    let diag = summarize(&pairs.iter().map(|p| p.0).collect::<Vec<_>>());
    let off = summarize(&pairs.iter().map(|p| p.1).collect::<Vec<_>>());
    Ok(vec![
        RuleCheck::within(
            "zeta6_diagonal",
            diag.mean,
            1.0,
            4.0 * diag.se,
            format!("sum of squared double increments over [0,1]^2, se {:.3e}", diag.se),
        ),
        RuleCheck::within(
            "zeta6_off_diagonal",
            off.mean,
            0.0,
            4.0 * off.se,
            format!("cross product of independent components, se {:.3e}", off.se),
        ),
    ])
}

fn mixed_annihilation_check(cfg: &McConfig) -> Result<RuleCheck> {
    let fine = Grid::new(64, 64, 1.0 / 64.0, 1.0 / 64.0)?;
    let pairs = run_paths(cfg, |path| {
        let incs = sample_cell_increments(&fine, &NoiseSpec::new(cfg.seed, path, 2))?;
        let w_fine = build_sheet(&incs);
        let w_coarse = build_sheet(&incs.coarsen(2, 2)?);
        Ok((
            check_mixed_annihilation(&w_coarse, 1, &w_coarse, 0)?,
            check_mixed_annihilation(&w_fine, 1, &w_fine, 0)?,
        ))
    })?;
    let rms = |v: Vec<f64>| (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt();
    let coarse = rms(pairs.iter().map(|p| p.0).collect());
    let fine_rms = rms(pairs.iter().map(|p| p.1).collect());
    let target = std::f64::consts::SQRT_2;
    Ok(RuleCheck::within(
        "mixed_annihilation_refinement",
        coarse / fine_rms,
        target,
        0.2 * target,
        format!("rms at step 1/32: {coarse:.4e}, at 1/64: {fine_rms:.4e}"),
    ))
}

/// Order of the chain-rule residual for `f = sin` on a Brownian line, with
/// common random numbers across `ds = 1/16 … 1/128`.
fn chain_rule_checks(cfg: &McConfig) -> Result<Vec<RuleCheck>> {
    const FINE: usize = 128;
    let factors = [8usize, 4, 2, 1];
    let per_path = run_paths(cfg, |path| {
        let bm = sample_boundary_bm(FINE, 1.0 / FINE as f64, 1, &NoiseSpec::new(cfg.seed, path, 1), 0)?;
        let fine = LineProcess::new(bm.values, 1, 1.0 / FINE as f64, Axis::S);
        let mut out = Vec::with_capacity(2 * factors.len());
        for f in factors {
            let x = fine.subsample(f)?;
            let exact = x.last()[0].sin() - x.at(0)[0].sin();
            let strat = integral_zeta1_stratonovich(&x.map(f64::cos), &x)?.last()[0];
            let qv = integral_zeta2(&x, &x)?;
            let ito = integral_zeta1(&x.map(f64::cos), &x)?.last()[0]
                + 0.5 * integral_zeta1(&x.map(|v| -v.sin()), &qv)?.last()[0];
            out.push(exact - strat);
            out.push(exact - ito);
        }
        Ok(out)
    })?;
    let steps: Vec<f64> = factors.iter().map(|f| *f as f64 / FINE as f64).collect();
    let mut checks = Vec::new();
    for (offset, name) in [(0, "chain_rule_stratonovich_order"), (1, "chain_rule_ito_order")] {
        let rms: Vec<f64> = (0..factors.len())
            .map(|q| {
                let v: Vec<f64> = per_path.iter().map(|r| r[2 * q + offset]).collect();
                (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
            })
            .collect();
        let (slope, _, _) = fit_power_law(&steps, &rms)?;
        checks.push(RuleCheck {
            name: name.to_string(),
            passed: (0.8..=1.2).contains(&slope),
            value: slope,
            target: 1.0,
            tolerance: 0.2,
            detail: format!("residual rms {rms:?} at ds {steps:?}"),
        });
    }
    Ok(checks)
}

/// The calculus-rule suite: bit-level telescoping and bridge identities on
/// dyadic data, order exchange, the `δ^{ij} ds dt` rule, mixed annihilation
/// under refinement and the chain-rule residual order.
pub fn run_rules_suite(cfg: &McConfig) -> Result<RulesReport> {
    cfg.validate()?;
    let mut checks = telescoping_checks(cfg.seed)?;
    checks.push(order_exchange_check(cfg.seed)?);
    checks.extend(zeta6_checks(cfg)?);
    checks.push(mixed_annihilation_check(cfg)?);
    checks.extend(chain_rule_checks(cfg)?);
    Ok(RulesReport {
        checks,
        n_paths: cfg.n_paths,
        config_digest: String::new(),
    })
}

/// Empirical `E[w_a w_b]` for one pair of nodes against `(s∧s')(t∧t')`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceProbe {
    pub a: (f64, f64),
    pub b: (f64, f64),
    pub expected: f64,
    pub estimate: f64,
    pub se: f64,
}

impl CovarianceProbe {
    pub fn within(&self, k: f64) -> bool {
        (self.estimate - self.expected).abs() <= k * self.se
    }
}

/// Nine pairs spread over `[0,2]²`, all on the grid of step 1/8.
pub const COVARIANCE_PAIRS: [((f64, f64), (f64, f64)); 9] = [
    ((1.0, 1.0), (1.0, 2.0)),
    ((0.5, 0.5), (2.0, 2.0)),
    ((2.0, 2.0), (2.0, 2.0)),
    ((0.25, 1.5), (1.75, 0.5)),
    ((1.0, 2.0), (2.0, 1.0)),
    ((0.5, 2.0), (0.5, 2.0)),
    ((1.5, 1.5), (0.75, 1.25)),
    ((2.0, 0.25), (0.125, 2.0)),
    ((1.25, 1.75), (1.75, 1.25)),
];

fn node_of(grid: &Grid, (s, t): (f64, f64)) -> Result<(usize, usize)> {
    let i = (s / grid.ds).round();
    let j = (t / grid.dt).round();
    let on_grid = (s - i * grid.ds).abs() < 1e-9 && (t - j * grid.dt).abs() < 1e-9;
    if !on_grid || s < 0.0 || t < 0.0 || i as usize > grid.n_s || j as usize > grid.n_t {
        return Err(Error::config("run.probes", format!("({s}, {t}) is not a grid node")));
    }
    Ok((i as usize, j as usize))
}

/// Sheet covariance at the given node pairs, one shared set of paths. The
/// mean is known to be zero, so the estimate is the mean product.
pub fn sheet_covariance_check(
    grid: &Grid,
    pairs: &[((f64, f64), (f64, f64))],
    cfg: &McConfig,
) -> Result<Vec<CovarianceProbe>> {
    grid.validate()?;
    let nodes = pairs
        .iter()
        .map(|(a, b)| Ok((node_of(grid, *a)?, node_of(grid, *b)?)))
        .collect::<Result<Vec<_>>>()?;
    let products = run_paths(cfg, |path| {
        let w = build_sheet(&sample_cell_increments(grid, &NoiseSpec::new(cfg.seed, path, 1))?);
        Ok(nodes
            .iter()
            .map(|((i, j), (k, l))| w.at(*i, *j, 0) * w.at(*k, *l, 0))
            .collect::<Vec<f64>>())
    })?;
    Ok(pairs
        .iter()
        .enumerate()
        .map(|(q, (a, b))| {
            let s = summarize(&products.iter().map(|p| p[q]).collect::<Vec<_>>());
            CovarianceProbe {
                a: *a,
                b: *b,
                expected: a.0.min(b.0) * a.1.min(b.1),
                estimate: s.mean,
                se: s.se,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n_a: usize,
    pub n_b: usize,
}

impl KsResult {
    pub fn rejected_at(&self, level: f64) -> bool {
        self.p_value < level
    }
}

/// Kolmogorov survival function `Q(λ) = 2 Σ (−1)^{k−1} e^{−2k²λ²}`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov–Smirnov test with the asymptotic p-value and the
/// usual small-sample correction of `λ`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Degenerate("KS test needs two non-empty samples".into()));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(Error::Degenerate("KS test sample contains NaN".into()));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = (na * nb / (na + nb)).sqrt();
    let p_value = kolmogorov_q((ne + 0.12 + 0.11 / ne) * d);
    Ok(KsResult {
        statistic: d,
        p_value,
        n_a: a.len(),
        n_b: b.len(),
    })
}

/// Compares the marginal of `z` at the last node of `grid` between the exact
/// sampler and the lattice solver. The two samples use distinct seeds so
/// that they are independent.
pub fn ou_cross_validation(grid: &Grid, cfg: &McConfig) -> Result<KsResult> {
    grid.validate()?;
    let (i, j) = (grid.n_s, grid.n_t);
    let exact = run_paths(cfg, |path| {
        Ok(sample_ou_exact(grid, &NoiseSpec::new(cfg.seed, path, 1))?.at(i, j, 0))
    })?;
    let other = McConfig {
        seed: cfg.seed ^ 0x9e37_79b9_7f4a_7c15,
        ..*cfg
    };
    let solved = run_paths(&other, |path| {
        Ok(sample_ou_hyperbolic(grid, &NoiseSpec::new(other.seed, path, 1))?.at(i, j, 0))
    })?;
    ks_two_sample(&exact, &solved)
}
