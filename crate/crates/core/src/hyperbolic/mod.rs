//! Lattice solver for hyperbolic systems driven by the Brownian sheet,
//! with the companion linearizations `u, u*, v, v*` and the blow-up
//! monitor.

mod coefficients;
pub mod presets;

pub use coefficients::{check_symmetry, Coefficients, StatePoint, SystemDims, Transposed};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{BoundaryPath, CellIncrements, Grid};
use crate::linalg;
use crate::sheet::SheetField;

/// Axis data of the system: `x` on both axes, `p` on `s = 0`, `q` on `t = 0`.
#[derive(Debug, Clone)]
pub struct Boundaries {
    pub x_s0: BoundaryPath,
    pub x_0t: BoundaryPath,
    pub p_0t: BoundaryPath,
    pub q_s0: BoundaryPath,
}

impl Boundaries {
    /// All four paths identically zero.
    pub fn zero(grid: &Grid, d: usize, n: usize) -> Self {
        Boundaries {
            x_s0: BoundaryPath::zero(grid.n_s, grid.ds, d),
            x_0t: BoundaryPath::zero(grid.n_t, grid.dt, d),
            p_0t: BoundaryPath::zero(grid.n_t, grid.dt, n),
            q_s0: BoundaryPath::zero(grid.n_s, grid.ds, n),
        }
    }

    /// The data of the transposed problem.
    pub fn transpose(&self) -> Self {
        Boundaries {
            x_s0: self.x_0t.clone(),
            x_0t: self.x_s0.clone(),
            p_0t: self.q_s0.clone(),
            q_s0: self.p_0t.clone(),
        }
    }

    fn validate(&self, grid: &Grid, dims: SystemDims) -> Result<()> {
        let check = |name: &str, path: &BoundaryPath, steps: usize, dim: usize| {
            if path.dim != dim || path.values.len() != (steps + 1) * dim {
                Err(Error::Shape(format!(
                    "boundary {name} has {} values of dim {}, expected {} of dim {dim}",
                    path.values.len(),
                    path.dim,
                    (steps + 1) * dim
                )))
            } else {
                Ok(())
            }
        };
        check("x_s0", &self.x_s0, grid.n_s, dims.d)?;
        check("x_0t", &self.x_0t, grid.n_t, dims.d)?;
        check("p_0t", &self.p_0t, grid.n_t, dims.n)?;
        check("q_s0", &self.q_s0, grid.n_s, dims.n)?;
        for (a, b) in self.x_s0.at(0).iter().zip(self.x_0t.at(0)) {
            if (a - b).abs() > 1e-12 * (1.0 + a.abs().max(b.abs())) {
                return Err(Error::Consistency(format!(
                    "x_s0 and x_0t disagree at the origin ({a} vs {b})"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Nodes whose companion norm exceeds this are out of the domain.
    pub blowup_m: f64,
    /// When set, the transposed problem is solved as well and the two
    /// `x` fields must agree to this relative tolerance.
    pub verify_transpose: Option<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            blowup_m: f64::INFINITY,
            verify_transpose: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HyperbolicSolution {
    pub x: SheetField,
    pub p: SheetField,
    pub q: SheetField,
    /// `d × d` row-major per node.
    pub u: SheetField,
    pub u_inv: SheetField,
    /// `d × d × d` per node: entry `[a][b][c]`.
    pub u_star: SheetField,
    pub v: SheetField,
    pub v_inv: SheetField,
    pub v_star: SheetField,
    /// `(n_s + 1) × (n_t + 1)`, t-line-major like [`SheetField`].
    pub domain_mask: Vec<bool>,
    /// Running sup of the companion norm.
    pub m_field: Vec<f64>,
    /// Largest `|u·u⁻¹ − I|` or `|v·v⁻¹ − I|` over the domain.
    pub inverse_drift: f64,
    pub norm: &'static str,
}

impl HyperbolicSolution {
    pub fn grid(&self) -> Grid {
        self.x.grid
    }

    #[inline]
    pub fn node_index(&self, i: usize, j: usize) -> usize {
        j * (self.x.grid.n_s + 1) + i
    }

    #[inline]
    pub fn in_domain(&self, i: usize, j: usize) -> bool {
        self.domain_mask[self.node_index(i, j)]
    }

    pub fn m_at(&self, i: usize, j: usize) -> f64 {
        self.m_field[self.node_index(i, j)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlowupSummary {
    pub max_m: f64,
    /// Out-of-domain nodes with an in-domain left or lower neighbour.
    pub frontier: Vec<(usize, usize)>,
    pub in_domain: usize,
    pub norm: &'static str,
}

pub fn blowup_monitor(sol: &HyperbolicSolution) -> BlowupSummary {
    let grid = sol.grid();
    let mut frontier = Vec::new();
    let mut in_domain = 0;
    for j in 0..=grid.n_t {
        for i in 0..=grid.n_s {
            if sol.in_domain(i, j) {
                in_domain += 1;
                continue;
            }
            let left = i > 0 && sol.in_domain(i - 1, j);
            let below = j > 0 && sol.in_domain(i, j - 1);
            if left || below || (i == 0 && j == 0) {
                frontier.push((i, j));
            }
        }
    }
    BlowupSummary {
        max_m: sol.m_field.iter().copied().fold(0.0, f64::max),
        frontier,
        in_domain,
        norm: sol.norm,
    }
}

/// Reusable buffers for the companion updates.
struct Scratch {
    d: usize,
    unit: Vec<f64>,
    b: Vec<f64>,
    b2: Vec<f64>,
    step: Vec<f64>,
    col_b: Vec<f64>,
    col_c: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    h: Vec<f64>,
    mat: Vec<f64>,
}

impl Scratch {
    fn new(d: usize) -> Self {
        Scratch {
            d,
            unit: vec![0.0; d],
            b: vec![0.0; d * d],
            b2: vec![0.0; d * d],
            step: vec![0.0; d * d],
            col_b: vec![0.0; d],
            col_c: vec![0.0; d],
            f: vec![0.0; d],
            g: vec![0.0; d],
            h: vec![0.0; d],
            mat: vec![0.0; d * d],
        }
    }
}

/// One step of a companion pair along its own axis.
///
/// `lin(c, out)` adds the image of the unit vector `e_c` under the
/// linearization; `quad(col_b, col_c, out)` adds the quadratic term whose
/// correction is `b11`-composed by `comp(y, out)`.
#[allow(clippy::too_many_arguments)]
fn companion_step(
    sc: &mut Scratch,
    lin: &dyn Fn(&[f64], &mut [f64]),
    quad: &dyn Fn(&[f64], &[f64], &mut [f64]),
    comp: &dyn Fn(&[f64], &mut [f64]),
    u: &[f64],
    u_inv: &[f64],
    u_star: &[f64],
    u_out: &mut [f64],
    u_inv_out: &mut [f64],
    u_star_out: &mut [f64],
) {
    let d = sc.d;
    // B[:, c] = linearization applied to e_c
    sc.b.iter_mut().for_each(|v| *v = 0.0);
    for c in 0..d {
        sc.unit.iter_mut().for_each(|v| *v = 0.0);
        sc.unit[c] = 1.0;
        sc.f.iter_mut().for_each(|v| *v = 0.0);
        lin(&sc.unit, &mut sc.f);
        for r in 0..d {
            sc.b[r * d + c] = sc.f[r];
        }
    }
    // u ← u + B u
    linalg::matmul(&sc.b, u, d, &mut sc.mat);
    for k in 0..d * d {
        u_out[k] = u[k] + sc.mat[k];
    }
    // u⁻¹ ← u⁻¹ (I − B + B²)
    linalg::matmul(&sc.b, &sc.b, d, &mut sc.b2);
    for k in 0..d * d {
        sc.step[k] = sc.b2[k] - sc.b[k];
    }
    for k in 0..d {
        sc.step[k * d + k] += 1.0;
    }
    linalg::matmul(u_inv, &sc.step, d, u_inv_out);
    // u* ← u* + u⁻¹ {quad(u e_b, u e_c) − b11∘quad}
    u_star_out.copy_from_slice(u_star);
    for bi in 0..d {
        for r in 0..d {
            sc.col_b[r] = u[r * d + bi];
        }
        for ci in 0..d {
            for r in 0..d {
                sc.col_c[r] = u[r * d + ci];
            }
            sc.f.iter_mut().for_each(|v| *v = 0.0);
            quad(&sc.col_b, &sc.col_c, &mut sc.f);
            if sc.f.iter().all(|v| *v == 0.0) {
                continue;
            }
            sc.g.iter_mut().for_each(|v| *v = 0.0);
            comp(&sc.f, &mut sc.g);
            for r in 0..d {
                sc.g[r] = sc.f[r] - sc.g[r];
            }
            linalg::matvec(u_inv, &sc.g, d, &mut sc.h);
            for a in 0..d {
                u_star_out[a * d * d + bi * d + ci] += sc.h[a];
            }
        }
    }
}

fn b_quad_s(coeffs: &dyn Coefficients, x: &[f64], xi: &[f64], tb: &[f64], tc: &[f64], out: &mut [f64]) {
    coeffs.b12(x, xi, tb, tc, out);
    coeffs.b22(x, xi, xi, tb, tc, out);
}

fn b_quad_t(coeffs: &dyn Coefficients, x: &[f64], tau: &[f64], sb: &[f64], sc: &[f64], out: &mut [f64]) {
    coeffs.b21(x, sb, sc, tau, out);
    coeffs.b22(x, sb, sc, tau, tau, out);
}

/// Solves the system on the lattice by an explicit sweep over the nodes in
/// s-major order. Each new node takes
///
/// ```text
/// x[i+1][j+1] = ((x[i+1][j] + x[i][j+1]) − x[i][j]) + ΔΔx
/// ```
///
/// with `ΔΔx` the coefficient sum evaluated at the lower-left corner on the
/// cell's lower and left edge increments. `p` steps along each t-line,
/// `q` along each s-line, `u, u⁻¹, u*` along t-lines and `v, v⁻¹, v*`
/// along s-lines. A node leaves the domain when either predecessor has
/// left it or when its companion norm exceeds `blowup_m`; it then keeps
/// the values of a predecessor, preferring an in-domain one and the left
/// neighbour over the lower one.
pub fn solve_system(
    coeffs: &dyn Coefficients,
    boundaries: &Boundaries,
    grid: &Grid,
    incs: &CellIncrements,
    options: &SolverOptions,
) -> Result<HyperbolicSolution> {
    grid.validate()?;
    let dims = coeffs.dims();
    let SystemDims { d, n, m } = dims;
    if d == 0 {
        return Err(Error::config("system.d", "state dimension must be at least 1"));
    }
    if incs.grid.n_s != grid.n_s || incs.grid.n_t != grid.n_t || incs.m != m {
        return Err(Error::Shape(format!(
            "cell increments are {}×{}×{}, expected {}×{}×{m}",
            incs.grid.n_s, incs.grid.n_t, incs.m, grid.n_s, grid.n_t
        )));
    }
    if options.blowup_m.is_nan() || options.blowup_m <= 0.0 {
        return Err(Error::config("run.blowup_M", "must be positive"));
    }
    boundaries.validate(grid, dims)?;

    let dd = d * d;
    let mut sol = HyperbolicSolution {
        x: SheetField::zeros(*grid, d),
        p: SheetField::zeros(*grid, n),
        q: SheetField::zeros(*grid, n),
        u: SheetField::zeros(*grid, dd),
        u_inv: SheetField::zeros(*grid, dd),
        u_star: SheetField::zeros(*grid, dd * d),
        v: SheetField::zeros(*grid, dd),
        v_inv: SheetField::zeros(*grid, dd),
        v_star: SheetField::zeros(*grid, dd * d),
        domain_mask: vec![false; grid.n_nodes()],
        m_field: vec![0.0; grid.n_nodes()],
        inverse_drift: 0.0,
        norm: "frobenius",
    };
    let eye = linalg::identity(d);
    let mut sc = Scratch::new(d);
    let mut xi = vec![0.0; d];
    let mut tau = vec![0.0; d];
    let mut ddx = vec![0.0; d];
    let mut xa = vec![0.0; d];
    let mut tmp = vec![0.0; dd.max(d).max(n)];
    let stride = grid.n_s + 1;

    for i in 0..=grid.n_s {
        for j in 0..=grid.n_t {
            let node = j * stride + i;
            let left = (i > 0).then(|| node - 1);
            let below = (j > 0).then(|| node - stride);
            let preds_in = left.is_none_or(|k| sol.domain_mask[k]) && below.is_none_or(|k| sol.domain_mask[k]);
            if !preds_in {
                let src = left
                    .filter(|k| sol.domain_mask[*k])
                    .or(below.filter(|k| sol.domain_mask[*k]))
                    .or(left)
                    .or(below)
                    .unwrap();
                copy_node(&mut sol, src, node);
                sol.m_field[node] = running_sup(&sol.m_field, left, below, 0.0);
                continue;
            }

            // x
            let xo = node * d;
            match (i, j) {
                (_, 0) => sol.x.values[xo..xo + d].copy_from_slice(boundaries.x_s0.at(i)),
                (0, _) => sol.x.values[xo..xo + d].copy_from_slice(boundaries.x_0t.at(j)),
                _ => {
                    let c00 = (node - stride - 1) * d;
                    let c10 = (node - stride) * d;
                    let c01 = (node - 1) * d;
                    for k in 0..d {
                        xi[k] = sol.x.values[c10 + k] - sol.x.values[c00 + k];
                        tau[k] = sol.x.values[c01 + k] - sol.x.values[c00 + k];
                    }
                    ddx.iter_mut().for_each(|v| *v = 0.0);
                    {
                        let x00 = &sol.x.values[c00..c00 + d];
                        let state = StatePoint {
                            x: x00,
                            p: &sol.p.values[(node - stride - 1) * n..(node - stride) * n],
                            q: &sol.q.values[(node - stride - 1) * n..(node - stride) * n],
                        };
                        let dw = incs.cell(i - 1, j - 1);
                        coeffs.a1(state, dw, &mut ddx);
                        coeffs.a2(state, dw, dw, &mut ddx);
                        coeffs.b11(x00, &xi, &tau, &mut ddx);
                        coeffs.b12(x00, &xi, &tau, &tau, &mut ddx);
                        coeffs.b21(x00, &xi, &xi, &tau, &mut ddx);
                        coeffs.b22(x00, &xi, &xi, &tau, &tau, &mut ddx);
                    }
                    for k in 0..d {
                        let corner = (sol.x.values[c10 + k] + sol.x.values[c01 + k]) - sol.x.values[c00 + k];
                        sol.x.values[xo + k] = corner + ddx[k];
                    }
                }
            }

            // p along the t-line, q along the s-line
            let po = node * n;
            if i == 0 {
                sol.p.values[po..po + n].copy_from_slice(boundaries.p_0t.at(j));
            } else {
                let a = node - 1;
                for k in 0..d {
                    xi[k] = sol.x.values[xo + k] - sol.x.values[a * d + k];
                }
                tmp[..n].iter_mut().for_each(|v| *v = 0.0);
                let state = state_at(&sol, a, d, n);
                coeffs.c1(state, &xi, &mut tmp[..n]);
                coeffs.c2(state, &xi, &xi, &mut tmp[..n]);
                for k in 0..n {
                    sol.p.values[po + k] = sol.p.values[a * n + k] + tmp[k];
                }
            }
            if j == 0 {
                sol.q.values[po..po + n].copy_from_slice(boundaries.q_s0.at(i));
            } else {
                let b = node - stride;
                for k in 0..d {
                    tau[k] = sol.x.values[xo + k] - sol.x.values[b * d + k];
                }
                tmp[..n].iter_mut().for_each(|v| *v = 0.0);
                let state = state_at(&sol, b, d, n);
                coeffs.e1(state, &tau, &mut tmp[..n]);
                coeffs.e2(state, &tau, &tau, &mut tmp[..n]);
                for k in 0..n {
                    sol.q.values[po + k] = sol.q.values[b * n + k] + tmp[k];
                }
            }

            // companions
            let mo = node * dd;
            let so = node * dd * d;
            if i == 0 && j == 0 {
                sol.u.values[mo..mo + dd].copy_from_slice(&eye);
                sol.u_inv.values[mo..mo + dd].copy_from_slice(&eye);
                sol.v.values[mo..mo + dd].copy_from_slice(&eye);
                sol.v_inv.values[mo..mo + dd].copy_from_slice(&eye);
            }
            if let Some(a) = left {
                for k in 0..d {
                    xi[k] = sol.x.values[xo + k] - sol.x.values[a * d + k];
                }
                xa.copy_from_slice(&sol.x.values[a * d..(a + 1) * d]);
                let (u_prev, u_next) = split_pair(&mut sol.u.values, a * dd, mo, dd);
                let (ui_prev, ui_next) = split_pair(&mut sol.u_inv.values, a * dd, mo, dd);
                let (us_prev, us_next) = split_pair(&mut sol.u_star.values, a * dd * d, so, dd * d);
                companion_step(
                    &mut sc,
                    &|e, out| {
                        coeffs.b11(&xa, &xi, e, out);
                        coeffs.b21(&xa, &xi, &xi, e, out);
                    },
                    &|tb, tc, out| b_quad_s(coeffs, &xa, &xi, tb, tc, out),
                    &|y, out| coeffs.b11(&xa, &xi, y, out),
                    u_prev,
                    ui_prev,
                    us_prev,
                    u_next,
                    ui_next,
                    us_next,
                );
            }
            if let Some(b) = below {
                for k in 0..d {
                    tau[k] = sol.x.values[xo + k] - sol.x.values[b * d + k];
                }
                xa.copy_from_slice(&sol.x.values[b * d..(b + 1) * d]);
                let xb = &xa;
                let (v_prev, v_next) = split_pair(&mut sol.v.values, b * dd, mo, dd);
                let (vi_prev, vi_next) = split_pair(&mut sol.v_inv.values, b * dd, mo, dd);
                let (vs_prev, vs_next) = split_pair(&mut sol.v_star.values, b * dd * d, so, dd * d);
                companion_step(
                    &mut sc,
                    &|e, out| {
                        coeffs.b11(xb, e, &tau, out);
                        coeffs.b12(xb, e, &tau, &tau, out);
                    },
                    &|sb, sc_, out| b_quad_t(coeffs, xb, &tau, sb, sc_, out),
                    &|y, out| coeffs.b11(xb, y, &tau, out),
                    v_prev,
                    vi_prev,
                    vs_prev,
                    v_next,
                    vi_next,
                    vs_next,
                );
            }
            // axis conventions: u = v on s = 0 with u* = 0; v = u on t = 0 with v* = 0
            if i == 0 && j > 0 {
                let (v, u) = (&sol.v.values[mo..mo + dd], &mut sol.u.values[mo..mo + dd]);
                u.copy_from_slice(v);
                let vi = sol.v_inv.values[mo..mo + dd].to_vec();
                sol.u_inv.values[mo..mo + dd].copy_from_slice(&vi);
            }
            if j == 0 && i > 0 {
                let u = sol.u.values[mo..mo + dd].to_vec();
                sol.v.values[mo..mo + dd].copy_from_slice(&u);
                let ui = sol.u_inv.values[mo..mo + dd].to_vec();
                sol.v_inv.values[mo..mo + dd].copy_from_slice(&ui);
            }

            let norm = (linalg::sum_squares(&sol.u.values[mo..mo + dd])
                + linalg::sum_squares(&sol.u_inv.values[mo..mo + dd])
                + linalg::sum_squares(&sol.v.values[mo..mo + dd])
                + linalg::sum_squares(&sol.v_inv.values[mo..mo + dd]))
            .sqrt();
            let within = norm <= options.blowup_m;
            if within {
                check_finite(&sol, node, i, j)?;
                sol.domain_mask[node] = true;
                sol.m_field[node] = running_sup(&sol.m_field, left, below, norm);
                let drift = linalg::inverse_defect(&sol.u.values[mo..mo + dd], &sol.u_inv.values[mo..mo + dd], d)
                    .max(linalg::inverse_defect(
                        &sol.v.values[mo..mo + dd],
                        &sol.v_inv.values[mo..mo + dd],
                        d,
                    ));
                sol.inverse_drift = sol.inverse_drift.max(drift);
            } else if options.blowup_m.is_infinite() {
                return Err(Error::NonFinite {
                    quantity: "companions",
                    i,
                    j,
                });
            } else {
                let seen = if norm.is_nan() { f64::INFINITY } else { norm };
                sol.m_field[node] = running_sup(&sol.m_field, left, below, seen);
                if let Some(src) = left.or(below) {
                    copy_node(&mut sol, src, node);
                }
            }
        }
    }

    if let Some(tol) = options.verify_transpose {
        verify_transpose(coeffs, boundaries, grid, incs, options, &sol, tol)?;
    }
    Ok(sol)
}

fn verify_transpose(
    coeffs: &dyn Coefficients,
    boundaries: &Boundaries,
    grid: &Grid,
    incs: &CellIncrements,
    options: &SolverOptions,
    sol: &HyperbolicSolution,
    tol: f64,
) -> Result<()> {
    let inner = SolverOptions {
        verify_transpose: None,
        ..*options
    };
    let other = solve_system(
        &Transposed(coeffs),
        &boundaries.transpose(),
        &grid.transpose(),
        &incs.transpose(),
        &inner,
    )?;
    for j in 0..=grid.n_t {
        for i in 0..=grid.n_s {
            if !(sol.in_domain(i, j) && other.in_domain(j, i)) {
                continue;
            }
            let pairs = sol
                .x
                .node(i, j)
                .iter()
                .zip(other.x.node(j, i))
                .chain(sol.p.node(i, j).iter().zip(other.q.node(j, i)))
                .chain(sol.q.node(i, j).iter().zip(other.p.node(j, i)));
            for (a, b) in pairs {
                if (a - b).abs() > tol * (1.0 + a.abs().max(b.abs())) {
                    return Err(Error::Consistency(format!(
                        "transposed sweep differs at node ({i}, {j}): {a} vs {b}"
                    )));
                }
            }
        }
    }
    Ok(())
}

fn state_at(sol: &HyperbolicSolution, node: usize, d: usize, n: usize) -> StatePoint<'_> {
    StatePoint {
        x: &sol.x.values[node * d..(node + 1) * d],
        p: &sol.p.values[node * n..(node + 1) * n],
        q: &sol.q.values[node * n..(node + 1) * n],
    }
}

/// Disjoint `(read, write)` views of two nodes of one buffer, `src < dst`.
fn split_pair(values: &mut [f64], src: usize, dst: usize, len: usize) -> (&[f64], &mut [f64]) {
    debug_assert!(src + len <= dst);
    let (head, tail) = values.split_at_mut(dst);
    (&head[src..src + len], &mut tail[..len])
}

fn running_sup(m_field: &[f64], left: Option<usize>, below: Option<usize>, here: f64) -> f64 {
    let mut sup = here;
    for k in [left, below].into_iter().flatten() {
        sup = sup.max(m_field[k]);
    }
    sup
}

fn copy_node(sol: &mut HyperbolicSolution, src: usize, dst: usize) {
    fn copy(field: &mut SheetField, src: usize, dst: usize) {
        let dim = field.dim;
        field.values.copy_within(src * dim..(src + 1) * dim, dst * dim);
    }
    copy(&mut sol.x, src, dst);
    copy(&mut sol.p, src, dst);
    copy(&mut sol.q, src, dst);
    copy(&mut sol.u, src, dst);
    copy(&mut sol.u_inv, src, dst);
    copy(&mut sol.u_star, src, dst);
    copy(&mut sol.v, src, dst);
    copy(&mut sol.v_inv, src, dst);
    copy(&mut sol.v_star, src, dst);
}

fn check_finite(sol: &HyperbolicSolution, node: usize, i: usize, j: usize) -> Result<()> {
    let fields: [(&'static str, &SheetField); 9] = [
        ("x", &sol.x),
        ("p", &sol.p),
        ("q", &sol.q),
        ("u", &sol.u),
        ("u_inv", &sol.u_inv),
        ("u_star", &sol.u_star),
        ("v", &sol.v),
        ("v_inv", &sol.v_inv),
        ("v_star", &sol.v_star),
    ];
    for (quantity, field) in fields {
        let dim = field.dim;
        if field.values[node * dim..(node + 1) * dim].iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { quantity, i, j });
        }
    }
    Ok(())
}
