//! One function per command. Each returns the JSON result, the CSV report,
//! any field dumps, and whether the acceptance thresholds were met.

use serde::Serialize;
use serde_json::{json, Value};

use sheetcalc::hyperbolic::presets::{BoundedTestSystem, GoursatSystem, OuClockSystem, SheetSystem};
use sheetcalc::hyperbolic::{blowup_monitor, check_symmetry, solve_system, Boundaries, Coefficients, SolverOptions};
use sheetcalc::lattice::{sample_boundary_bm, sample_cell_increments, BoundaryPath, Grid, NoiseSpec};
use sheetcalc::malliavin::{FaultInjection, PolyPayoff, VectorFields};
use sheetcalc::sheet::{build_sheet, sample_ou_exact, sample_ou_hyperbolic, SheetField};
use sheetcalc::verify::{
    ou_cross_validation, run_bismut, run_bismut_with_bias, run_carre_du_champ, run_holder_scan, run_ibp,
    run_ibp_with_bias, run_reversibility, run_rules_suite, sheet_covariance_check, LineExperiment, MCReport,
    OuSampler,
};
use sheetcalc::{Error, Result};

use crate::config::{Command, ExperimentConfig, SystemPreset};

pub struct Outcome {
    pub result: Value,
    pub csv: String,
    /// `(file name, contents)` of field dumps.
    pub dumps: Vec<(String, String)>,
    pub passed: bool,
    pub summary: String,
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("reports serialize")
}

fn csv_of(write: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> String {
    let mut buf = Vec::new();
    write(&mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("csv is utf-8")
}

fn field_dump(field: &SheetField, quantity: &str, digest: &str) -> String {
    csv_of(|w| field.write_csv(w, &format!("sheetcalc field v1 digest={digest} quantity={quantity} path=0")))
}

fn payoffs(cfg: &ExperimentConfig, count: usize, d: usize) -> Result<Vec<PolyPayoff>> {
    let specs = cfg.run.payoffs.clone().unwrap_or_default();
    if specs.len() < count {
        return Err(Error::config(
            "run.payoffs",
            format!("{count} payoffs required, {} given", specs.len()),
        ));
    }
    specs.iter().take(count).map(|s| PolyPayoff::from_spec(s, d)).collect()
}

fn noise_dim(cfg: &ExperimentConfig) -> usize {
    cfg.model.as_ref().and_then(|m| m.m).unwrap_or(1)
}

/// `|z| < k` and, with a target, both sides within `k·SE + bias` of it.
fn mc_passed(r: &MCReport, target: Option<f64>, k: f64) -> bool {
    let sides = target.is_none_or(|t| r.sides_within(t, k, r.diagnostic("lhs_bias"), r.diagnostic("rhs_bias")));
    sides && r.z_score.abs() < k
}

fn mc_outcome(mut r: MCReport, cfg: &ExperimentConfig, digest: &str) -> Outcome {
    r.config_digest = digest.to_string();
    r.workers = cfg.mc.workers;
    let k = cfg.run.k_se.unwrap_or(3.0);
    let passed = mc_passed(&r, cfg.run.target, k);
    Outcome {
        summary: format!(
            "lhs {:.6} ± {:.6}, rhs {:.6} ± {:.6}, z {:.3}",
            r.lhs_mean, r.lhs_se, r.rhs_mean, r.rhs_se, r.z_score
        ),
        csv: csv_of(|w| r.write_csv(w)),
        result: to_value(&r),
        dumps: Vec::new(),
        passed,
    }
}

pub fn execute(cfg: &ExperimentConfig, digest: &str, fault: FaultInjection) -> Result<Outcome> {
    let grid = cfg.grid()?;
    match cfg.run.command {
        Command::RunIbp | Command::RunBismut | Command::RunReversibility => model_command(cfg, &grid, digest, fault),
        Command::HolderScan => {
            let source = cfg.run.source.unwrap_or(sheetcalc::verify::HolderSource::Sheet);
            let alpha = cfg.run.alpha.unwrap_or(2.0);
            let lags = cfg.run.lags.clone().unwrap_or_default();
            let mut r = run_holder_scan(source, &grid, alpha, &lags, &cfg.mc)?;
            r.config_digest = digest.to_string();
            let (lo, hi) = cfg.run.slope_range.unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
            Ok(Outcome {
                summary: format!(
                    "slope {:.4} [{:.4}, {:.4}], constant {:.4e}",
                    r.fitted_slope, r.slope_ci.0, r.slope_ci.1, r.constant
                ),
                passed: (lo..=hi).contains(&r.fitted_slope),
                csv: csv_of(|w| r.write_csv(w)),
                result: to_value(&r),
                dumps: Vec::new(),
            })
        }
        Command::VerifyRules => {
            let mut r = run_rules_suite(&cfg.mc)?;
            r.config_digest = digest.to_string();
            let failed: Vec<&str> = r.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
            Ok(Outcome {
                summary: if failed.is_empty() {
                    format!("{} checks passed", r.checks.len())
                } else {
                    format!("failed: {}", failed.join(", "))
                },
                passed: failed.is_empty(),
                csv: csv_of(|w| r.write_csv(w)),
                result: to_value(&r),
                dumps: Vec::new(),
            })
        }
        Command::SampleOu => {
            let noise = NoiseSpec::new(cfg.mc.seed, 0, noise_dim(cfg));
            let field = match cfg.run.sampler.unwrap_or_default() {
                OuSampler::Exact => sample_ou_exact(&grid, &noise)?,
                OuSampler::Hyperbolic => sample_ou_hyperbolic(&grid, &noise)?,
            };
            let ks = ou_cross_validation(&grid, &cfg.mc)?;
            let passed = !ks.rejected_at(0.01);
            Ok(Outcome {
                summary: format!("KS statistic {:.5}, p-value {:.4}", ks.statistic, ks.p_value),
                csv: format!(
                    "# sheetcalc ks v1 digest={digest}\nstatistic,p_value,n_a,n_b\n{},{},{},{}\n",
                    ks.statistic, ks.p_value, ks.n_a, ks.n_b
                ),
                result: json!({ "ks": to_value(&ks), "s": grid.s(grid.n_s), "t": grid.t(grid.n_t) }),
                dumps: vec![("field.csv".into(), field_dump(&field, "z", digest))],
                passed,
            })
        }
        Command::SimulateSheet => {
            let incs = sample_cell_increments(&grid, &NoiseSpec::new(cfg.mc.seed, 0, noise_dim(cfg)))?;
            let field = build_sheet(&incs);
            let probes = sheet_covariance_check(&grid, cfg.run.probes.as_deref().unwrap_or(&[]), &cfg.mc)?;
            let k = cfg.run.k_se.unwrap_or(4.0);
            let mut csv = format!("# sheetcalc sheet-probes v1 digest={digest}\ns,t,s2,t2,expected,estimate,se\n");
            for p in &probes {
                csv.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    p.a.0, p.a.1, p.b.0, p.b.1, p.expected, p.estimate, p.se
                ));
            }
            Ok(Outcome {
                summary: format!("{} covariance probes", probes.len()),
                passed: probes.iter().all(|p| p.within(k)),
                csv,
                result: json!({ "probes": to_value(&probes) }),
                dumps: vec![("field.csv".into(), field_dump(&field, "w", digest))],
            })
        }
        Command::SolveHyperbolic => solve_hyperbolic(cfg, &grid, digest),
    }
}

fn model_command(cfg: &ExperimentConfig, grid: &Grid, digest: &str, fault: FaultInjection) -> Result<Outcome> {
    let vf = cfg.fields()?;
    let x0 = cfg.x0();
    let d = vf.state_dim();
    let exp = LineExperiment {
        fields: &vf,
        x0: &x0,
        n_s: grid.n_s,
        ds: grid.ds,
        fault,
    };
    let bias = cfg.run.bias.unwrap_or(false);
    let report = match cfg.run.command {
        Command::RunIbp => {
            let p = payoffs(cfg, 2, d)?;
            if bias {
                run_ibp_with_bias(&exp, &p[0], &p[1], &cfg.mc)?
            } else {
                run_ibp(&exp, &p[0], &p[1], &cfg.mc)?
            }
        }
        Command::RunBismut => {
            let p = payoffs(cfg, 1, d)?;
            let component = cfg.run.component.unwrap_or(0);
            if bias {
                run_bismut_with_bias(&exp, &p[0], component, &cfg.mc)?
            } else {
                run_bismut(&exp, &p[0], component, &cfg.mc)?
            }
        }
        _ => {
            let p = payoffs(cfg, 2, d)?;
            let sampler = cfg.run.sampler.unwrap_or_default();
            match &cfg.run.lags {
                Some(gaps) => run_carre_du_champ(&exp, &p[0], &p[1], gaps, sampler, &cfg.mc)?,
                None => {
                    let t_gap = cfg.run.t_gap.unwrap_or(0.0);
                    run_reversibility(&exp, &p[0], &p[1], t_gap, grid.dt, sampler, &cfg.mc)?
                }
            }
        }
    };
    let mut outcome = mc_outcome(report, cfg, digest);
    if fault.flip_r_sign_in_l {
        outcome.result["fault_injection"] = json!("r-sign");
    }
    Ok(outcome)
}

#[derive(Serialize)]
struct HyperbolicReport {
    system: SystemPreset,
    nodes: usize,
    in_domain: usize,
    max_m: f64,
    frontier: Vec<(usize, usize)>,
    norm: &'static str,
    inverse_drift: f64,
    blowup_m: Option<f64>,
    /// Largest deviation from the closed form, for the noiseless Goursat problem.
    #[serde(skip_serializing_if = "Option::is_none")]
    max_error_vs_closed_form: Option<f64>,
}

fn solve_hyperbolic(cfg: &ExperimentConfig, grid: &Grid, digest: &str) -> Result<Outcome> {
    let system = cfg.run.system.unwrap_or(SystemPreset::Sheet);
    let m = noise_dim(cfg);
    let noise = NoiseSpec::new(cfg.mc.seed, 0, m);
    let goursat = GoursatSystem {
        lambda: cfg.run.lambda.unwrap_or(1.0),
        noise: cfg.run.noise.unwrap_or(0.0),
    };
    let (coeffs, bounds): (Box<dyn Coefficients>, Boundaries) = match system {
        SystemPreset::Sheet => (Box::new(SheetSystem { m }), Boundaries::zero(grid, m, 0)),
        SystemPreset::OuClock => {
            let sys = OuClockSystem { m };
            let z0 = sample_boundary_bm(grid.n_s, grid.ds, m, &noise, 0)?;
            let b = sys.boundaries(grid, &z0);
            (Box::new(sys), b)
        }
        SystemPreset::Goursat => (
            Box::new(goursat),
            Boundaries {
                x_s0: BoundaryPath::deterministic(grid.n_s, grid.ds, 1, |s| vec![s]),
                x_0t: BoundaryPath::deterministic(grid.n_t, grid.dt, 1, |t| vec![t]),
                p_0t: BoundaryPath::zero(grid.n_t, grid.dt, 0),
                q_s0: BoundaryPath::zero(grid.n_s, grid.ds, 0),
            },
        ),
        SystemPreset::Bounded => (Box::new(BoundedTestSystem), BoundedTestSystem::brownian_boundaries(grid, &noise)?),
    };
    check_symmetry(coeffs.as_ref(), cfg.mc.seed)?;
    let m_noise = coeffs.dims().m;
    let incs = sample_cell_increments(grid, &NoiseSpec::new(cfg.mc.seed, 0, m_noise))?;
    let options = SolverOptions {
        blowup_m: cfg.run.blowup_m.unwrap_or(f64::INFINITY),
        verify_transpose: None,
    };
    let sol = solve_system(coeffs.as_ref(), &bounds, grid, &incs, &options)?;
    let summary = blowup_monitor(&sol);
    let max_error = (system == SystemPreset::Goursat && goursat.noise == 0.0).then(|| {
        (0..=grid.n_t)
            .flat_map(|j| (0..=grid.n_s).map(move |i| (i, j)))
            .filter(|(i, j)| sol.in_domain(*i, *j))
            .map(|(i, j)| (sol.x.at(i, j, 0) - goursat.exact(grid.s(i), grid.t(j))).abs())
            .fold(0.0, f64::max)
    });
    let report = HyperbolicReport {
        system,
        nodes: grid.n_nodes(),
        in_domain: summary.in_domain,
        max_m: summary.max_m,
        frontier: summary.frontier.clone(),
        norm: summary.norm,
        inverse_drift: sol.inverse_drift,
        blowup_m: cfg.run.blowup_m,
        max_error_vs_closed_form: max_error,
    };
    let mut csv = format!("# sheetcalc hyperbolic v1 digest={digest}\nquantity,value\n");
    csv.push_str(&format!("in_domain,{}\nnodes,{}\n", report.in_domain, report.nodes));
    csv.push_str(&format!("max_m,{}\ninverse_drift,{}\n", report.max_m, report.inverse_drift));
    if let Some(e) = max_error {
        csv.push_str(&format!("max_error_vs_closed_form,{e}\n"));
    }
    let mut dumps = vec![("field.csv".to_string(), field_dump(&sol.x, "x", digest))];
    if sol.p.dim > 0 {
        dumps.push(("p.csv".to_string(), field_dump(&sol.p, "p", digest)));
    }
    Ok(Outcome {
        summary: format!(
            "{} of {} nodes in domain, max m {:.4e}, inverse drift {:.3e}",
            report.in_domain, report.nodes, report.max_m, report.inverse_drift
        ),
        passed: cfg.run.drift_tolerance.is_none_or(|tol| sol.inverse_drift <= tol),
        csv,
        result: to_value(&report),
        dumps,
    })
}
