use proptest::prelude::*;
use sheetcalc::lattice::{sample_boundary_bm, sample_cell_increments, CellIncrements, Grid, NoiseSpec, NormalSource, Stream};
use sheetcalc::sheet::{accumulate_cells, build_sheet, sample_ou_exact, SheetField, SweepOrder};
use sheetcalc::stochcalc::{bdg_moment_check, integral_two_param, integral_two_param_ordered, IntegralKind};

fn dyadic_cells(grid: Grid, m: usize, codes: &[i32]) -> CellIncrements {
    CellIncrements::from_fn(grid, m, |i, j, k| {
        f64::from(codes[(j * grid.n_s + i) * m + k]) / 8.0
    })
}

fn small_grid() -> impl Strategy<Value = (usize, usize)> {
    (1usize..12, 1usize..12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn fill_matches_random_access(seed in any::<u64>(), path in 0u64..1000, start in 0u64..64, len in 0usize..40) {
        let mut src = NormalSource::new(seed, Stream::Cells, path);
        let mut filled = vec![0.0; len];
        src.fill_scaled(start, 1.0, &mut filled);
        for (k, v) in filled.iter().enumerate() {
            prop_assert_eq!(*v, src.normal(start + k as u64));
        }
    }

    #[test]
    fn path_noise_is_addressed_not_sequential(seed in any::<u64>(), path in 0u64..1000, (n_s, n_t) in small_grid()) {
        let grid = Grid::new(n_s, n_t, 0.25, 0.5).unwrap();
        let a = sample_cell_increments(&grid, &NoiseSpec::new(seed, path, 2)).unwrap();
        // drawing other paths first does not move this one
        for other in 0..3 {
            sample_cell_increments(&grid, &NoiseSpec::new(seed, other, 2)).unwrap();
        }
        let b = sample_cell_increments(&grid, &NoiseSpec::new(seed, path, 2)).unwrap();
        prop_assert_eq!(&a, &b);
        let c = sample_cell_increments(&grid, &NoiseSpec::new(seed, path + 1, 2)).unwrap();
        prop_assert_ne!(a.values, c.values);
    }

    #[test]
    fn sweep_orders_and_transpose_agree_bitwise(seed in any::<u64>(), (n_s, n_t) in small_grid(), m in 1usize..3) {
        let grid = Grid::new(n_s, n_t, 0.1, 0.3).unwrap();
        let incs = sample_cell_increments(&grid, &NoiseSpec::new(seed, 0, m)).unwrap();
        let s = accumulate_cells(&incs, SweepOrder::SMajor);
        let t = accumulate_cells(&incs, SweepOrder::TMajor);
        prop_assert_eq!(&s.values, &t.values);
        let tr = build_sheet(&incs.transpose());
        prop_assert_eq!(tr.values, s.transpose().values);
    }

    #[test]
    fn sheet_node_is_sum_of_cells_below_left(codes in prop::collection::vec(-64i32..64, 60), (n_s, n_t) in (1usize..6, 1usize..10)) {
        let grid = Grid::new(n_s, n_t, 0.5, 0.5).unwrap();
        let incs = dyadic_cells(grid, 1, &codes);
        let w = build_sheet(&incs);
        for j in 0..=n_t {
            for i in 0..=n_s {
                let direct: f64 = (0..j).flat_map(|q| (0..i).map(move |p| (p, q))).map(|(p, q)| incs.get(p, q, 0)).sum();
                prop_assert_eq!(w.at(i, j, 0), direct);
            }
        }
    }

    #[test]
    fn coarsened_sheet_matches_even_nodes(seed in any::<u64>(), (hs, ht) in (1usize..6, 1usize..6)) {
        let grid = Grid::new(2 * hs, 2 * ht, 0.125, 0.25).unwrap();
        let incs = sample_cell_increments(&grid, &NoiseSpec::new(seed, 3, 1)).unwrap();
        let fine = build_sheet(&incs);
        let coarse = build_sheet(&incs.coarsen(2, 2).unwrap());
        for j in 0..=ht {
            for i in 0..=hs {
                prop_assert!((coarse.at(i, j, 0) - fine.at(2 * i, 2 * j, 0)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unit_integrand_zeta3_recovers_rectangular_increment(codes in prop::collection::vec(-64i32..64, 80), (n_s, n_t) in (1usize..8, 1usize..10)) {
        let grid = Grid::new(n_s, n_t, 0.25, 0.25).unwrap();
        let x = build_sheet(&dyadic_cells(grid, 1, &codes));
        let one = SheetField { grid, dim: 1, values: vec![1.0; grid.n_nodes()] };
        let z = integral_two_param(IntegralKind::Zeta3, Some(&one), &x, None).unwrap();
        for j in 0..=n_t {
            for i in 0..=n_s {
                let rect = x.at(i, j, 0) - x.at(i, 0, 0) - x.at(0, j, 0) + x.at(0, 0, 0);
                prop_assert_eq!(z.at(i, j, 0), rect);
            }
        }
    }

    #[test]
    fn zeta3_is_bit_identical_across_orders(seed in any::<u64>(), (n_s, n_t) in small_grid()) {
        let grid = Grid::new(n_s, n_t, 0.2, 0.2).unwrap();
        let x = build_sheet(&sample_cell_increments(&grid, &NoiseSpec::new(seed, 0, 1)).unwrap());
        let a = x.clone();
        let s = integral_two_param_ordered(IntegralKind::Zeta3, Some(&a), &x, None, SweepOrder::SMajor).unwrap();
        let t = integral_two_param_ordered(IntegralKind::Zeta3, Some(&a), &x, None, SweepOrder::TMajor).unwrap();
        prop_assert_eq!(s.values, t.values);
    }

    #[test]
    fn zeta6_of_independent_components_is_small(seed in any::<u64>()) {
        // Σ ΔΔw¹ ΔΔw² has mean 0 and variance n_s n_t (ds dt)²
        let grid = Grid::new(32, 32, 1.0 / 32.0, 1.0 / 32.0).unwrap();
        let w = build_sheet(&sample_cell_increments(&grid, &NoiseSpec::new(seed, 0, 2)).unwrap());
        let z = integral_two_param(IntegralKind::Zeta6, None, &w.component(0), Some(&w.component(1))).unwrap();
        let sd = (grid.n_cells() as f64).sqrt() * grid.ds * grid.dt;
        prop_assert!(z.at(32, 32, 0).abs() < 6.0 * sd);
    }
}

#[test]
fn boundary_slots_are_independent_of_cells() {
    let noise = NoiseSpec::new(9, 4, 1);
    let a = sample_boundary_bm(16, 0.0625, 1, &noise, 0).unwrap();
    let b = sample_boundary_bm(16, 0.0625, 1, &noise, 1).unwrap();
    assert_eq!(a.at(0), &[0.0]);
    assert_ne!(a.values, b.values);
}

#[test]
fn ou_rows_are_stationary_with_exponential_correlation() {
    let grid = Grid::new(4, 8, 0.25, 0.25).unwrap();
    let n = 20_000;
    let (mut v0, mut v8, mut c) = (0.0, 0.0, 0.0);
    for path in 0..n {
        let z = sample_ou_exact(&grid, &NoiseSpec::new(41, path, 1)).unwrap();
        let (a, b) = (z.at(4, 0, 0), z.at(4, 8, 0));
        v0 += a * a;
        v8 += b * b;
        c += a * b;
    }
    let nf = n as f64;
    let (v0, v8, c) = (v0 / nf, v8 / nf, c / nf);
    // Var z_{1,t} = 1 for every t; Cov(z_{1,0}, z_{1,2}) = e^{-1}
    let se_var = (2.0 / nf).sqrt();
    assert!((v0 - 1.0).abs() < 4.0 * se_var, "{v0}");
    assert!((v8 - 1.0).abs() < 4.0 * se_var, "{v8}");
    let rho = (-1.0f64).exp();
    let se_cov = ((1.0 + rho * rho) / nf).sqrt();
    assert!((c - rho).abs() < 4.0 * se_cov, "{c}");
}

#[test]
fn bdg_holds_for_sheet_integrand() {
    let grid = Grid::new(16, 16, 1.0 / 16.0, 1.0 / 16.0).unwrap();
    let paths = (0..4000).map(|p| {
        let a = build_sheet(&sample_cell_increments(&grid, &NoiseSpec::new(77, p, 2)).unwrap()).component(0);
        let incs = sample_cell_increments(&grid, &NoiseSpec::new(77, p, 2)).unwrap().component(1);
        (a, incs)
    });
    let est = bdg_moment_check(paths, 0, 4.0).unwrap();
    assert!(est.lhs <= est.constant * est.rhs + 4.0 * est.lhs_se, "{est:?}");
    assert!(est.ratio() > 0.0);
}
