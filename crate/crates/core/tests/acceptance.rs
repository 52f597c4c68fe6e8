//! Acceptance suite. Every criterion prints one `PASS`/`FAIL` line and then
//! asserts. Run with `cargo test --release --test acceptance -- --nocapture`
//! to see the lines.

use std::f64::consts::E;

use sheetcalc::hyperbolic::presets::SheetSystem;
use sheetcalc::hyperbolic::{solve_system, Boundaries, SolverOptions};
use sheetcalc::lattice::{sample_boundary_bm, sample_cell_increments, Grid, NoiseSpec};
use sheetcalc::linalg;
use sheetcalc::malliavin::{
    compute_malliavin_line, solve_state_line, FaultInjection, FieldTable, PayoffSpec, PolyPayoff, PolynomialFields,
};
use sheetcalc::polynomial::{Monomial, Polynomial};
use sheetcalc::stochcalc::{Axis, LineProcess};
use sheetcalc::verify::{
    ou_cross_validation, run_bismut_with_bias, run_carre_du_champ, run_holder_scan, run_ibp, run_ibp_with_bias,
    run_rules_suite, sheet_covariance_check, HolderSource, LineExperiment, McConfig, MCReport, OuSampler,
    CARRE_DU_CHAMP_GAPS, COVARIANCE_PAIRS,
};

const IBP_PATHS: usize = 100_000;

fn report(n: u32, name: &str, pass: bool, detail: String) {
    println!("criterion {n} [{name}]: {} {detail}", if pass { "PASS" } else { "FAIL" });
}

fn linear_experiment(fields: &PolynomialFields, fault: FaultInjection) -> LineExperiment<'_> {
    LineExperiment {
        fields,
        x0: &[1.0],
        n_s: 128,
        ds: 1.0 / 128.0,
        fault,
    }
}

fn x_payoff() -> PolyPayoff {
    PolyPayoff::from_spec(&PayoffSpec::Coordinate { index: 0 }, 1).unwrap()
}

/// Both sides within `3·SE + Richardson bias` of `target`, and `|z| < 3`.
fn ibp_tolerance_met(r: &MCReport, target: f64) -> bool {
    r.sides_within(target, 3.0, r.diagnostic("lhs_bias"), r.diagnostic("rhs_bias")) && r.z_score.abs() < 3.0
}

fn describe(r: &MCReport, target: f64) -> String {
    format!(
        "target {target:.6}; lhs {:.5} ± {:.5} (bias {:.5}), rhs {:.5} ± {:.5} (bias {:.5}), z {:.2}",
        r.lhs_mean,
        r.lhs_se,
        r.diagnostic("lhs_bias"),
        r.rhs_mean,
        r.rhs_se,
        r.diagnostic("rhs_bias"),
        r.z_score
    )
}

fn linear_ibp(fault: FaultInjection) -> MCReport {
    let vf = PolynomialFields::linear1d();
    let f = x_payoff();
    run_ibp_with_bias(&linear_experiment(&vf, fault), &f, &f, &McConfig::new(IBP_PATHS, 2024)).unwrap()
}

#[test]
fn criterion_1_sheet_covariance() {
    let grid = Grid::new(16, 16, 0.125, 0.125).unwrap();
    let probes = sheet_covariance_check(&grid, &COVARIANCE_PAIRS, &McConfig::new(10_000, 101)).unwrap();
    let pass = probes.iter().all(|p| p.within(4.0));
    let worst = probes
        .iter()
        .map(|p| (p.estimate - p.expected).abs() / p.se)
        .fold(0.0, f64::max);
    report(1, "sheet covariance", pass, format!("9 probes, worst deviation {worst:.2} SE"));
    assert!(pass, "{probes:?}");
}

#[test]
fn criterion_2_ou_cross_validation() {
    let grid = Grid::new(64, 64, 1.0 / 64.0, 1.0 / 64.0).unwrap();
    let ks = ou_cross_validation(&grid, &McConfig::new(10_000, 202)).unwrap();
    let pass = !ks.rejected_at(0.01);
    report(
        2,
        "OU cross-validation",
        pass,
        format!("KS statistic {:.4}, p-value {:.3}", ks.statistic, ks.p_value),
    );
    assert!(pass, "{ks:?}");
}

#[test]
fn criterion_3_calculus_rules() {
    let rules = run_rules_suite(&McConfig::new(10_000, 303)).unwrap();
    for c in &rules.checks {
        println!("    {:<34} {} value {:.6} target {} ± {:.3e}", c.name, c.passed, c.value, c.target, c.tolerance);
    }
    let pass = rules.all_passed();
    report(3, "calculus rules", pass, format!("{} checks", rules.checks.len()));
    assert!(pass);
}

#[test]
fn criterion_4_ibp_linear_model() {
    let r = linear_ibp(FaultInjection::default());
    let target = E * E;
    let pass = ibp_tolerance_met(&r, target);
    report(4, "IBP reproduction", pass, describe(&r, target));
    assert!(pass);
}

#[test]
fn criterion_5_bismut_linear_model() {
    let vf = PolynomialFields::linear1d();
    let f = x_payoff();
    let exp = linear_experiment(&vf, FaultInjection::default());
    let r = run_bismut_with_bias(&exp, &f, 0, &McConfig::new(IBP_PATHS, 2025)).unwrap();
    let target = 0.5_f64.exp();
    let pass = ibp_tolerance_met(&r, target);
    report(5, "Bismut reproduction", pass, describe(&r, target));
    assert!(pass);
}

#[test]
fn criterion_6_carre_du_champ_limit() {
    let vf = PolynomialFields::linear1d();
    let f = x_payoff();
    let exp = linear_experiment(&vf, FaultInjection::default());
    let cfg = McConfig::new(IBP_PATHS, 606);
    let r = run_carre_du_champ(&exp, &f, &f, &CARRE_DU_CHAMP_GAPS, OuSampler::Exact, &cfg).unwrap();
    // the IBP lhs run on its own, on the t = 0 lines of the same paths
    let ibp = run_ibp(&exp, &f, &f, &cfg).unwrap();
    let same_rows = ibp.lhs_mean == r.rhs_mean;
    let pass = r.diff_mean.abs() <= 3.0 * r.diff_se && same_rows;
    report(
        6,
        "carre-du-champ limit",
        pass,
        format!(
            "intercept {:.4} ± {:.4}, IBP lhs {:.4} ± {:.4}, paired z {:.2}",
            r.lhs_mean, r.lhs_se, ibp.lhs_mean, ibp.lhs_se, r.z_score
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_7_holder_regression() {
    let cfg = McConfig::new(10_000, 707);
    let grid = Grid::new(64, 16, 1.0 / 64.0, 1.0 / 64.0).unwrap();
    let lags = [1.0 / 64.0, 1.0 / 32.0, 1.0 / 16.0, 1.0 / 8.0, 1.0 / 4.0];
    let mut pass = true;
    let mut lines = Vec::new();
    for source in [
        HolderSource::Sheet,
        HolderSource::ModelU,
        HolderSource::SystemU,
        HolderSource::SystemP,
    ] {
        let r = run_holder_scan(source, &grid, 2.0, &lags, &cfg).unwrap();
        let ok = match source {
            HolderSource::Sheet => {
                (r.fitted_slope - 1.0).abs() <= 0.1 && (r.slope_ci.1 - r.slope_ci.0) / 2.0 < 0.1
            }
            _ => (0.85..=1.15).contains(&r.fitted_slope),
        };
        pass &= ok;
        lines.push(format!(
            "{source:?} slope {:.3} [{:.3}, {:.3}]",
            r.fitted_slope, r.slope_ci.0, r.slope_ci.1
        ));
    }
    report(7, "Holder regression", pass, lines.join("; "));
    assert!(pass);
}

fn planar_fields() -> PolynomialFields {
    let mono = |coef: f64, powers: &[u32]| Monomial {
        coef,
        powers: powers.to_vec(),
    };
    let poly = |terms: Vec<Monomial>| Polynomial { terms };
    PolynomialFields::new(FieldTable {
        d: 2,
        m: 2,
        fields: vec![
            vec![poly(vec![mono(-0.1, &[1])]), Polynomial::zero()],
            vec![Polynomial::constant(1.0), poly(vec![mono(0.5, &[1])])],
            vec![poly(vec![mono(0.3, &[0, 2])]), Polynomial::constant(1.0)],
        ],
        bound: None,
    })
    .unwrap()
}

#[test]
fn criterion_8_structural_invariants() {
    let mut failures = Vec::new();

    let vf = planar_fields();
    let (n, ds) = (64, 1.0 / 64.0);
    let mut min_eig = f64::INFINITY;
    let mut congruence_exact = true;
    for path in 0..1000 {
        let bm = sample_boundary_bm(n, ds, 2, &NoiseSpec::new(808, path, 2), 0).unwrap();
        let z = LineProcess::new(bm.values, 2, ds, Axis::S);
        let state = solve_state_line(&vf, &z, &[0.2, -0.4]).unwrap();
        let line = compute_malliavin_line(&vf, &state, &z, FaultInjection::default()).unwrap();
        for k in 0..=n {
            min_eig = min_eig.min(linalg::min_symmetric_eigenvalue(line.gamma_at(k), 2));
            congruence_exact &= linalg::congruence(state.u_at(k), line.c_at(k), 2) == line.gamma_at(k);
        }
    }
    if min_eig < -1e-10 {
        failures.push(format!("min eigenvalue of Gamma {min_eig:e}"));
    }
    if !congruence_exact {
        failures.push("Gamma differs from U C U^T".into());
    }

    let grid = Grid::new(32, 32, 1.0 / 32.0, 1.0 / 32.0).unwrap();
    let incs = sample_cell_increments(&grid, &NoiseSpec::new(808, 0, 2)).unwrap();
    let sol = solve_system(
        &SheetSystem { m: 2 },
        &Boundaries::zero(&grid, 2, 0),
        &grid,
        &incs,
        &SolverOptions::default(),
    )
    .unwrap();
    let eye = linalg::identity(2);
    let identity_everywhere = (0..=grid.n_t).all(|j| {
        (0..=grid.n_s).all(|i| {
            sol.u.node(i, j) == &eye[..]
                && sol.v.node(i, j) == &eye[..]
                && sol.u_inv.node(i, j) == &eye[..]
                && sol.v_inv.node(i, j) == &eye[..]
        })
    });
    let stars_zero = sol.u_star.values.iter().chain(&sol.v_star.values).all(|v| *v == 0.0);
    if !(identity_everywhere && stars_zero) {
        failures.push("companions are not exactly trivial for b = 0".into());
    }

    let cfg = McConfig::new(2000, 808);
    let rules = run_rules_suite(&cfg).unwrap();
    if !rules.get("zeta3_order_exchange").is_some_and(|c| c.passed) {
        failures.push("zeta3 order exchange is not bit-exact".into());
    }
    if rules.to_json() != run_rules_suite(&cfg).unwrap().to_json() {
        failures.push("rules report differs between runs".into());
    }
    let lin = PolynomialFields::linear1d();
    let f = x_payoff();
    let exp = linear_experiment(&lin, FaultInjection::default());
    let ibp = |workers| {
        run_ibp(&exp, &f, &f, &McConfig { workers, ..cfg })
            .unwrap()
            .to_json()
    };
    if ibp(2) != ibp(2) {
        failures.push("IBP report differs between runs".into());
    }

    let pass = failures.is_empty();
    report(
        8,
        "structural invariants",
        pass,
        if pass {
            format!("min eigenvalue of Gamma {min_eig:.3e}")
        } else {
            failures.join("; ")
        },
    );
    assert!(pass);
}

#[test]
fn criterion_9_fault_injection() {
    let r = linear_ibp(FaultInjection { flip_r_sign_in_l: true });
    let target = E * E;
    let caught = !ibp_tolerance_met(&r, target) && r.z_score.abs() > 10.0;
    report(9, "fault-injection discrimination", caught, describe(&r, target));
    assert!(caught);
}
