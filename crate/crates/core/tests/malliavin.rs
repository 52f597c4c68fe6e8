use sheetcalc::lattice::{sample_boundary_bm, Grid, NoiseSpec};
use sheetcalc::linalg;
use sheetcalc::malliavin::{
    apply_l, compute_malliavin_line, probe_payoff, probe_vector_fields, solve_state_line, FaultInjection, FieldTable,
    MalliavinLine, PayoffSpec, PolyPayoff, PolynomialFields, VectorFields,
};
use sheetcalc::polynomial::{Monomial, Polynomial};
use sheetcalc::sheet::sample_ou_exact;
use sheetcalc::stochcalc::{Axis, LineProcess};
use sheetcalc::Error;

fn bm_line(n: usize, ds: f64, m: usize, seed: u64, path: u64) -> LineProcess {
    let bm = sample_boundary_bm(n, ds, m, &NoiseSpec::new(seed, path, m), 0).unwrap();
    LineProcess::new(bm.values, m, ds, Axis::S)
}

fn malliavin(vf: &dyn VectorFields, z: &LineProcess, x0: &[f64]) -> MalliavinLine {
    let state = solve_state_line(vf, z, x0).unwrap();
    compute_malliavin_line(vf, &state, z, FaultInjection::default()).unwrap()
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// `X_0 = (−0.1 x₀, 0)`, `X_1 = (1, 0.5 x₀)`, `X_2 = (0.3 x₁², 1)`.
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
fn zero_fields_leave_everything_trivial() {
    let vf = PolynomialFields::zero(2, 2).unwrap();
    let z = bm_line(32, 1.0 / 32.0, 2, 1, 0);
    let line = malliavin(&vf, &z, &[0.4, -1.0]);
    let eye = linalg::identity(2);
    for k in 0..=32 {
        assert_eq!(line.x_at(k), &[0.4, -1.0]);
        assert_eq!(line.state.u_at(k), &eye[..]);
        assert!(line.c_at(k).iter().chain(line.gamma_at(k)).all(|v| *v == 0.0));
        assert!(line.r_at(k).iter().chain(line.l_at(k)).all(|v| *v == 0.0));
    }
}

#[test]
fn linear_model_mean_matches_lattice_and_continuum() {
    let vf = PolynomialFields::linear1d();
    let n = 64;
    let ds = 1.0 / n as f64;
    let values: Vec<f64> = (0..20_000)
        .map(|p| solve_state_line(&vf, &bm_line(n, ds, 1, 3, p), &[1.0]).unwrap().x_at(n)[0])
        .collect();
    let (mean, se) = mean_se(&values);
    // each Euler step multiplies by 1 + Δz + ds/2, so E[x_1] = (1 + ds/2)^n exactly
    let lattice = (1.0 + 0.5 * ds).powi(n as i32);
    assert!((mean - lattice).abs() < 4.0 * se, "{mean} vs {lattice} (se {se})");
    assert!((lattice - 0.5_f64.exp()).abs() < ds);
}

#[test]
fn linear_model_tracks_the_exponential() {
    let vf = PolynomialFields::linear1d();
    let n = 4096;
    let ds = 1.0 / n as f64;
    for path in 0..5 {
        let z = bm_line(n, ds, 1, 9, path);
        let line = malliavin(&vf, &z, &[1.0]);
        let (x1, z1) = (line.x_at(n)[0], z.last()[0]);
        let tol = 0.05 * x1.max(1.0);
        assert!((x1 - z1.exp()).abs() < tol, "x {x1} vs e^z {}", z1.exp());
        // U and x follow the same recursion in this model
        assert!((line.state.u_at(n)[0] - x1).abs() < 1e-12 * x1);
        assert!((line.gamma_at(n)[0] - x1 * x1).abs() < 2.0 * tol * x1.max(1.0));
        assert!((line.r_at(n)[0] + z1).abs() < 0.05 * (1.0 + z1.abs()));
        assert!((line.l_at(n)[0] - x1 * (1.0 - z1)).abs() < 0.1 * x1.max(1.0) * (1.0 + z1.abs()));
    }
}

#[test]
fn normalized_diffusion_is_nearly_constant() {
    // U⁻¹X_1(x) → 1; the lattice defect is a sum of (ds − Δz²) terms, so
    // its sup along the line shrinks like √ds
    let vf = PolynomialFields::linear1d();
    let sup_defect = |n: usize| {
        let ds = 1.0 / n as f64;
        let mut worst = 0.0_f64;
        for path in 0..20 {
            let fine = bm_line(4096, 1.0 / 4096.0, 1, 4, path);
            let z = fine.subsample(4096 / n).unwrap();
            let state = solve_state_line(&vf, &z, &[1.0]).unwrap();
            for k in 0..=n {
                worst = worst.max((state.u_inv_at(k)[0] * state.x_at(k)[0] - 1.0).abs());
            }
        }
        (worst, ds.sqrt())
    };
    let (coarse, root_coarse) = sup_defect(64);
    let (fine, root_fine) = sup_defect(4096);
    assert!(coarse < 8.0 * root_coarse, "{coarse}");
    assert!(fine < 8.0 * root_fine, "{fine}");
    assert!(fine < coarse / 3.0);
}

#[test]
fn gamma_is_congruence_and_psd() {
    let vf = planar_fields();
    probe_vector_fields(&vf, 11).unwrap();
    let n = 64;
    let mut worst = f64::INFINITY;
    for path in 0..1000 {
        let z = bm_line(n, 1.0 / n as f64, 2, 21, path);
        let line = malliavin(&vf, &z, &[0.2, -0.1]);
        for k in [n / 2, n] {
            let expected = linalg::congruence(line.state.u_at(k), line.c_at(k), 2);
            assert_eq!(line.gamma_at(k), &expected[..]);
            worst = worst.min(linalg::min_symmetric_eigenvalue(line.gamma_at(k), 2));
            worst = worst.min(linalg::min_symmetric_eigenvalue(line.c_at(k), 2));
        }
    }
    assert!(worst >= -1e-10, "min eigenvalue {worst}");
}

#[test]
fn apply_l_on_simple_payoffs() {
    let vf = PolynomialFields::linear1d();
    let z = bm_line(128, 1.0 / 128.0, 1, 2, 0);
    let line = malliavin(&vf, &z, &[1.0]);
    let k = 128;
    let constant = PolyPayoff::from_spec(&PayoffSpec::Constant { value: 3.0 }, 1).unwrap();
    assert_eq!(apply_l(&constant, &line, k), 0.0);
    let coord = PolyPayoff::from_spec(&PayoffSpec::Coordinate { index: 0 }, 1).unwrap();
    assert_eq!(apply_l(&coord, &line, k), line.l_at(k)[0]);
    let square = PolyPayoff::from_spec(&PayoffSpec::Square, 1).unwrap();
    let (x, l, g) = (line.x_at(k)[0], line.l_at(k)[0], line.gamma_at(k)[0]);
    assert!((apply_l(&square, &line, k) - (2.0 * x * l + 2.0 * g)).abs() < 1e-12 * (1.0 + x * l + g).abs());
    for p in [&constant, &coord, &square] {
        probe_payoff(p, 1).unwrap();
    }
}

#[test]
fn r_sign_fault_changes_only_l() {
    let vf = PolynomialFields::linear1d();
    let z = bm_line(64, 1.0 / 64.0, 1, 6, 0);
    let state = solve_state_line(&vf, &z, &[1.0]).unwrap();
    let good = compute_malliavin_line(&vf, &state, &z, FaultInjection::default()).unwrap();
    let bad = compute_malliavin_line(&vf, &state, &z, FaultInjection { flip_r_sign_in_l: true }).unwrap();
    assert_eq!(good.gamma, bad.gamma);
    assert_eq!(good.r, bad.r);
    for k in 0..=64 {
        // L = U(R + I) and L' = U(−R + I) differ by 2UR
        let diff = good.l_at(k)[0] - bad.l_at(k)[0];
        let expected = 2.0 * state.u_at(k)[0] * good.r_at(k)[0];
        assert!((diff - expected).abs() < 1e-12 * (1.0 + expected.abs()));
    }
}

struct BadHessian;

impl VectorFields for BadHessian {
    fn state_dim(&self) -> usize {
        1
    }
    fn noise_dim(&self) -> usize {
        1
    }
    fn field(&self, i: usize, x: &[f64], out: &mut [f64]) {
        out[0] = if i == 1 { x[0].sin() } else { 0.0 };
    }
    fn jacobian(&self, i: usize, x: &[f64], out: &mut [f64]) {
        out[0] = if i == 1 { x[0].cos() } else { 0.0 };
    }
    fn hessian(&self, i: usize, x: &[f64], out: &mut [f64]) {
        // sign error
        out[0] = if i == 1 { x[0].sin() } else { 0.0 };
    }
}

#[test]
fn derivative_probe_catches_wrong_hessian() {
    let err = probe_vector_fields(&BadHessian, 1).unwrap_err();
    assert!(matches!(err, Error::DerivativeMismatch { .. }), "{err}");
}

#[test]
fn table_validation_names_the_field() {
    let err = PolynomialFields::new(FieldTable {
        d: 1,
        m: 1,
        fields: vec![vec![Polynomial::zero()]],
        bound: None,
    })
    .unwrap_err();
    assert!(matches!(err, Error::Config { ref field, .. } if field == "model.fields"));
    let err = PolynomialFields::new(FieldTable {
        d: 1,
        m: 1,
        fields: vec![vec![Polynomial::zero()], vec![Polynomial::variable(1)]],
        bound: None,
    })
    .unwrap_err();
    assert!(matches!(err, Error::Config { ref field, .. } if field == "model.fields[1][0]"));
}

#[test]
fn law_along_t_is_stationary() {
    // rows t = 0 and t = 8 of the same sheets are nearly independent
    // (correlation e^{−4}), so compare them as two samples
    let grid = Grid::new(64, 8, 1.0 / 64.0, 1.0).unwrap();
    let vf = PolynomialFields::linear1d();
    let n_paths = 4000;
    let mut stats = vec![Vec::with_capacity(n_paths); 6];
    for path in 0..n_paths {
        let field = sample_ou_exact(&grid, &NoiseSpec::new(31, path as u64, 1)).unwrap();
        for (slot, j) in [0, grid.n_t].into_iter().enumerate() {
            let line = malliavin(&vf, &field.row(j), &[1.0]);
            stats[3 * slot].push(line.x_at(64)[0]);
            stats[3 * slot + 1].push(line.gamma_at(64)[0]);
            stats[3 * slot + 2].push(line.l_at(64)[0]);
        }
    }
    for q in 0..3 {
        let (a, sa) = mean_se(&stats[q]);
        let (b, sb) = mean_se(&stats[3 + q]);
        let combined = (sa * sa + sb * sb).sqrt();
        assert!((a - b).abs() < 4.0 * combined, "quantity {q}: {a} vs {b} (se {combined})");
    }
}

#[test]
fn t_increments_have_drift_half_l_and_bracket_gamma() {
    let n = 64;
    let ds = 1.0 / n as f64;
    let t = 1.0 / 16.0;
    let grid = Grid::new(n, 1, ds, t).unwrap();
    let vf = PolynomialFields::linear1d();
    let n_paths = 20_000;
    let (mut cross, mut square, mut xl, mut gamma) = (vec![], vec![], vec![], vec![]);
    for path in 0..n_paths {
        let field = sample_ou_exact(&grid, &NoiseSpec::new(41, path, 1)).unwrap();
        let line0 = malliavin(&vf, &field.row(0), &[1.0]);
        let x_t = solve_state_line(&vf, &field.row(1), &[1.0]).unwrap().x_at(n)[0];
        let x_0 = line0.x_at(n)[0];
        cross.push(x_0 * (x_t - x_0));
        square.push((x_t - x_0).powi(2));
        xl.push(x_0 * line0.l_at(n)[0]);
        gamma.push(line0.gamma_at(n)[0]);
    }
    // lattice oracle: E[x_0 x_t] = (1 + ds(1 + ρ) + ds²/4)^n with ρ = e^{−t/2}
    let rho = (-0.5 * t).exp();
    let same = (1.0 + 2.0 * ds + ds * ds / 4.0).powi(n as i32);
    let mixed = (1.0 + ds * (1.0 + rho) + ds * ds / 4.0).powi(n as i32);
    let (c_mean, c_se) = mean_se(&cross);
    let (q_mean, q_se) = mean_se(&square);
    assert!((c_mean - (mixed - same)).abs() < 4.0 * c_se, "{c_mean} vs {}", mixed - same);
    assert!((q_mean - 2.0 * (same - mixed)).abs() < 4.0 * q_se);

    // the continuum limits are ½E[x L] = −½e² and E[Γ] = e²
    let e2 = 2.0_f64.exp();
    let (xl_mean, xl_se) = mean_se(&xl);
    let (g_mean, g_se) = mean_se(&gamma);
    let curvature = e2 * t;
    assert!((c_mean / t - 0.5 * xl_mean).abs() < 4.0 * (c_se / t + 0.5 * xl_se) + curvature);
    assert!((q_mean / t - g_mean).abs() < 4.0 * (q_se / t + g_se) + curvature);
    assert!((0.5 * xl_mean + 0.5 * e2).abs() < 4.0 * xl_se + e2 * 4.0 * ds);
    assert!((g_mean - e2).abs() < 4.0 * g_se + e2 * 4.0 * ds);
}
