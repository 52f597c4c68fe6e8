//! Malliavin covariance and drift along the t-lines of an OU-driven state.
//!
//! For each fixed `t`, the line `s ↦ z_{st}` is a Brownian motion and
//! drives
//!
//! ```text
//! ∂_s x = X_i(x) ∂_s z^i + X_0(x) ds,      ∂_s U = ∇X_i(x) U ∂_s z^i + ∇X_0(x) U ds
//! ```
//!
//! From `x, U` we build `C, Γ = U C Uᵀ, R` and `L`.

mod fields;

pub use fields::{
    probe_payoff, probe_vector_fields, FieldTable, Payoff, PayoffSpec, PolyPayoff, PolynomialFields, VectorFields,
};

use crate::error::{Error, Result};
use crate::linalg;
use crate::stochcalc::LineProcess;

/// `x, U, U⁻¹` along one line, `n + 1` nodes each.
#[derive(Debug, Clone, PartialEq)]
pub struct StateLine {
    pub d: usize,
    pub ds: f64,
    /// t-index of the line.
    pub line: usize,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub u_inv: Vec<f64>,
}

impl StateLine {
    pub fn len(&self) -> usize {
        self.x.len() / self.d - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x_at(&self, k: usize) -> &[f64] {
        &self.x[k * self.d..(k + 1) * self.d]
    }

    pub fn u_at(&self, k: usize) -> &[f64] {
        let dd = self.d * self.d;
        &self.u[k * dd..(k + 1) * dd]
    }

    pub fn u_inv_at(&self, k: usize) -> &[f64] {
        let dd = self.d * self.d;
        &self.u_inv[k * dd..(k + 1) * dd]
    }
}

/// Per-node Jacobians and Itô corrections shared by the state recursion.
struct Coefs {
    d: usize,
    m: usize,
    xs: Vec<f64>,
    jacs: Vec<f64>,
    hess: Vec<f64>,
    drift: Vec<f64>,
    drift_jac: Vec<f64>,
    aa: Vec<f64>,
    tmp: Vec<f64>,
}

impl Coefs {
    fn new(d: usize, m: usize) -> Self {
        Coefs {
            d,
            m,
            xs: vec![0.0; (m + 1) * d],
            jacs: vec![0.0; (m + 1) * d * d],
            hess: vec![0.0; d * d * d],
            drift: vec![0.0; d],
            drift_jac: vec![0.0; d * d],
            aa: vec![0.0; d * d],
            tmp: vec![0.0; d * d],
        }
    }

    /// Fills `X_i, ∇X_i`, the Itô drift `X̃_0 = X_0 + ½ Σ ∇X_i X_i`, its
    /// Jacobian `∇X̃_0 = ∇X_0 + ½ Σ (∇²X_i·X_i + ∇X_i ∇X_i)` and `Σ ∇X_i ∇X_i`.
    fn evaluate(&mut self, vf: &dyn VectorFields, x: &[f64]) {
        let (d, dd) = (self.d, self.d * self.d);
        for i in 0..=self.m {
            vf.field(i, x, &mut self.xs[i * d..(i + 1) * d]);
            vf.jacobian(i, x, &mut self.jacs[i * dd..(i + 1) * dd]);
        }
        self.drift.copy_from_slice(&self.xs[..d]);
        self.drift_jac.copy_from_slice(&self.jacs[..dd]);
        self.aa.iter_mut().for_each(|v| *v = 0.0);
        for i in 1..=self.m {
            let xi = &self.xs[i * d..(i + 1) * d];
            let a = &self.jacs[i * dd..(i + 1) * dd];
            for r in 0..d {
                let mut acc = 0.0;
                for c in 0..d {
                    acc += a[r * d + c] * xi[c];
                }
                self.drift[r] += 0.5 * acc;
            }
            linalg::matmul(a, a, d, &mut self.tmp);
            vf.hessian(i, x, &mut self.hess);
            for r in 0..d {
                for c in 0..d {
                    let mut hx = 0.0;
                    for b in 0..d {
                        hx += self.hess[(r * d + c) * d + b] * xi[b];
                    }
                    self.drift_jac[r * d + c] += 0.5 * (hx + self.tmp[r * d + c]);
                    self.aa[r * d + c] += self.tmp[r * d + c];
                }
            }
        }
    }
}

fn check_line(vf: &dyn VectorFields, z_line: &LineProcess) -> Result<(usize, usize, usize)> {
    let (d, m) = (vf.state_dim(), vf.noise_dim());
    if z_line.dim != m {
        return Err(Error::Shape(format!(
            "driving line has dimension {}, fields expect {m}",
            z_line.dim
        )));
    }
    if z_line.is_empty() {
        return Err(Error::Shape("driving line has no steps".into()));
    }
    Ok((d, m, z_line.len()))
}

/// Euler–Maruyama for `x` and `U` in Itô form along one driving line,
/// with `U⁻¹` from its own linear recursion
///
/// ```text
/// U⁻¹_{k+1} = U⁻¹_k (I − Σ ∇X_i Δz^i − ∇X̃_0 ds + Σ ∇X_i ∇X_i ds)
/// ```
pub fn solve_state_line(vf: &dyn VectorFields, z_line: &LineProcess, x0: &[f64]) -> Result<StateLine> {
    let (d, m, n) = check_line(vf, z_line)?;
    if x0.len() != d {
        return Err(Error::Shape(format!("x0 has length {}, expected {d}", x0.len())));
    }
    let dd = d * d;
    let ds = z_line.step;
    let mut line = StateLine {
        d,
        ds,
        line: z_line.fixed_other,
        x: vec![0.0; (n + 1) * d],
        u: vec![0.0; (n + 1) * dd],
        u_inv: vec![0.0; (n + 1) * dd],
    };
    line.x[..d].copy_from_slice(x0);
    let eye = linalg::identity(d);
    line.u[..dd].copy_from_slice(&eye);
    line.u_inv[..dd].copy_from_slice(&eye);

    let mut co = Coefs::new(d, m);
    let mut step = vec![0.0; dd];
    let mut inv_step = vec![0.0; dd];
    let mut prod = vec![0.0; dd];
    let mut dz = vec![0.0; m];
    for k in 0..n {
        for (i, v) in dz.iter_mut().enumerate() {
            *v = z_line.increment(k, i);
        }
        let (head, tail) = line.x.split_at_mut((k + 1) * d);
        let x = &head[k * d..];
        co.evaluate(vf, x);
        for r in 0..d {
            let mut dx = co.drift[r] * ds;
            for i in 1..=m {
                dx += co.xs[i * d + r] * dz[i - 1];
            }
            tail[r] = x[r] + dx;
        }
        // M = Σ ∇X_i Δz^i + ∇X̃_0 ds
        for e in 0..dd {
            let mut acc = co.drift_jac[e] * ds;
            for i in 1..=m {
                acc += co.jacs[i * dd + e] * dz[i - 1];
            }
            step[e] = acc;
            inv_step[e] = co.aa[e] * ds - acc;
        }
        for r in 0..d {
            inv_step[r * d + r] += 1.0;
        }
        let (uh, ut) = line.u.split_at_mut((k + 1) * dd);
        linalg::matmul(&step, &uh[k * dd..], d, &mut prod);
        for e in 0..dd {
            ut[e] = uh[k * dd + e] + prod[e];
        }
        let (vh, vt) = line.u_inv.split_at_mut((k + 1) * dd);
        linalg::matmul(&vh[k * dd..], &inv_step, d, &mut vt[..dd]);

        let finite = |v: &[f64]| v.iter().all(|a| a.is_finite());
        for (quantity, ok) in [
            ("x", finite(&line.x[(k + 1) * d..(k + 2) * d])),
            ("U", finite(&line.u[(k + 1) * dd..(k + 2) * dd])),
            ("U_inv", finite(&line.u_inv[(k + 1) * dd..(k + 2) * dd])),
        ] {
            if !ok {
                return Err(Error::NonFinite {
                    quantity,
                    i: k + 1,
                    j: z_line.fixed_other,
                });
            }
        }
    }
    Ok(line)
}

/// Deliberate defects for checking that the harness can detect them.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FaultInjection {
    /// Use `−R` in place of `R` when forming `L`.
    pub flip_r_sign_in_l: bool,
}

/// `C, Γ, R, L` along one line, `n + 1` nodes each.
#[derive(Debug, Clone, PartialEq)]
pub struct MalliavinLine {
    pub state: StateLine,
    pub c: Vec<f64>,
    pub gamma: Vec<f64>,
    pub r: Vec<f64>,
    pub l: Vec<f64>,
}

impl MalliavinLine {
    pub fn d(&self) -> usize {
        self.state.d
    }

    pub fn len(&self) -> usize {
        self.state.len()
    }

    pub fn is_empty(&self) -> bool {
        self.state.is_empty()
    }

    pub fn x_at(&self, k: usize) -> &[f64] {
        self.state.x_at(k)
    }

    pub fn c_at(&self, k: usize) -> &[f64] {
        let dd = self.d() * self.d();
        &self.c[k * dd..(k + 1) * dd]
    }

    pub fn gamma_at(&self, k: usize) -> &[f64] {
        let dd = self.d() * self.d();
        &self.gamma[k * dd..(k + 1) * dd]
    }

    pub fn r_at(&self, k: usize) -> &[f64] {
        &self.r[k * self.d()..(k + 1) * self.d()]
    }

    pub fn l_at(&self, k: usize) -> &[f64] {
        &self.l[k * self.d()..(k + 1) * self.d()]
    }
}

/// Builds `C, Γ, R, L` from a solved state line:
///
/// ```text
/// C_s = ∫ U⁻¹X_i ⊗ U⁻¹X_i dr                          left endpoint
/// R_s = −∫ U⁻¹X_i ∂z^i                                 midpoint
/// L_s = U_s R_s + U_s ∫ U⁻¹ {∇²X_i ∂z^i + ∇²X_0 dr} Γ + U_s ∫ U⁻¹ ∇X_i X_i dr
/// ```
///
/// The `∂z` integral in `L` averages the whole integrand, `Γ` included,
/// over the two endpoints of each step; `dr` integrals use the left one.
pub fn compute_malliavin_line(
    vf: &dyn VectorFields,
    state: &StateLine,
    z_line: &LineProcess,
    fault: FaultInjection,
) -> Result<MalliavinLine> {
    let (d, m, n) = check_line(vf, z_line)?;
    if state.d != d || state.len() != n {
        return Err(Error::Shape("state line does not match the driving line".into()));
    }
    let dd = d * d;
    let ds = state.ds;
    let mut out = MalliavinLine {
        state: state.clone(),
        c: vec![0.0; (n + 1) * dd],
        gamma: vec![0.0; (n + 1) * dd],
        r: vec![0.0; (n + 1) * d],
        l: vec![0.0; (n + 1) * d],
    };

    // per-node integrands: h_i = U⁻¹X_i, g_i = U⁻¹ ∇²X_i[Γ], and the dr
    // integrand U⁻¹{∇²X_0[Γ] + Σ ∇X_i X_i}
    let mut xs = vec![0.0; (m + 1) * d];
    let mut jac = vec![0.0; dd];
    let mut hess = vec![0.0; dd * d];
    let mut tmp = vec![0.0; d];
    let mut drift_vec = vec![0.0; d];
    let integrands = |k: usize,
                      gamma: &[f64],
                      h: &mut [f64],
                      g: &mut [f64],
                      dr: &mut [f64],
                      xs: &mut [f64],
                      jac: &mut [f64],
                      hess: &mut [f64],
                      tmp: &mut [f64],
                      drift_vec: &mut [f64]| {
        let x = state.x_at(k);
        let u_inv = state.u_inv_at(k);
        drift_vec.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..=m {
            vf.field(i, x, &mut xs[i * d..(i + 1) * d]);
            vf.hessian(i, x, hess);
            // ∇²X_i[Γ]
            for r in 0..d {
                let mut acc = 0.0;
                for a in 0..d {
                    for b in 0..d {
                        acc += hess[(r * d + a) * d + b] * gamma[a * d + b];
                    }
                }
                tmp[r] = acc;
            }
            if i == 0 {
                for r in 0..d {
                    drift_vec[r] += tmp[r];
                }
                continue;
            }
            linalg::matvec(u_inv, tmp, d, &mut g[(i - 1) * d..i * d]);
            linalg::matvec(u_inv, &xs[i * d..(i + 1) * d], d, &mut h[(i - 1) * d..i * d]);
            vf.jacobian(i, x, jac);
            for r in 0..d {
                let mut acc = 0.0;
                for c in 0..d {
                    acc += jac[r * d + c] * xs[i * d + c];
                }
                drift_vec[r] += acc;
            }
        }
        linalg::matvec(u_inv, drift_vec, d, dr);
    };

    let mut h = vec![0.0; m * d];
    let mut g = vec![0.0; m * d];
    let mut dr = vec![0.0; d];
    let mut h_next = vec![0.0; m * d];
    let mut g_next = vec![0.0; m * d];
    let mut dr_next = vec![0.0; d];
    let mut i2 = vec![0.0; d];
    let mut i3 = vec![0.0; d];
    let mut r = vec![0.0; d];
    let mut inner = vec![0.0; d];
    let r_sign = if fault.flip_r_sign_in_l { -1.0 } else { 1.0 };

    integrands(
        0,
        &out.gamma[..dd],
        &mut h,
        &mut g,
        &mut dr,
        &mut xs,
        &mut jac,
        &mut hess,
        &mut tmp,
        &mut drift_vec,
    );
    for k in 0..n {
        // C and Γ at k + 1
        for a in 0..d {
            for b in 0..d {
                let mut acc = 0.0;
                for i in 0..m {
                    acc += h[i * d + a] * h[i * d + b];
                }
                out.c[(k + 1) * dd + a * d + b] = out.c[k * dd + a * d + b] + acc * ds;
            }
        }
        let gamma = linalg::congruence(state.u_at(k + 1), &out.c[(k + 1) * dd..(k + 2) * dd], d);
        out.gamma[(k + 1) * dd..(k + 2) * dd].copy_from_slice(&gamma);
        integrands(
            k + 1,
            &gamma,
            &mut h_next,
            &mut g_next,
            &mut dr_next,
            &mut xs,
            &mut jac,
            &mut hess,
            &mut tmp,
            &mut drift_vec,
        );
        for c in 0..d {
            let mut dr_acc = 0.0;
            let mut i2_acc = 0.0;
            for i in 0..m {
                let dz = z_line.increment(k, i);
                dr_acc += 0.5 * (h[i * d + c] + h_next[i * d + c]) * dz;
                i2_acc += 0.5 * (g[i * d + c] + g_next[i * d + c]) * dz;
            }
            r[c] -= dr_acc;
            i2[c] += i2_acc;
            i3[c] += dr[c] * ds;
        }
        out.r[(k + 1) * d..(k + 2) * d].copy_from_slice(&r);
        for c in 0..d {
            inner[c] = r_sign * r[c] + i2[c] + i3[c];
        }
        linalg::matvec(state.u_at(k + 1), &inner, d, &mut out.l[(k + 1) * d..(k + 2) * d]);

        std::mem::swap(&mut h, &mut h_next);
        std::mem::swap(&mut g, &mut g_next);
        std::mem::swap(&mut dr, &mut dr_next);

        let finite = out.gamma[(k + 1) * dd..(k + 2) * dd]
            .iter()
            .chain(&out.l[(k + 1) * d..(k + 2) * d])
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite {
                quantity: "L",
                i: k + 1,
                j: state.line,
            });
        }
    }
    Ok(out)
}

/// `LG = L^i ∂_i g + Γ^{ij} ∂_i ∂_j g` at node `k`.
pub fn apply_l(payoff: &dyn Payoff, line: &MalliavinLine, k: usize) -> f64 {
    let d = line.d();
    let x = line.x_at(k);
    let mut grad = vec![0.0; d];
    let mut hess = vec![0.0; d * d];
    payoff.gradient(x, &mut grad);
    payoff.hessian(x, &mut hess);
    let l = line.l_at(k);
    let gamma = line.gamma_at(k);
    let mut total = 0.0;
    for a in 0..d {
        total += l[a] * grad[a];
        for b in 0..d {
            total += gamma[a * d + b] * hess[a * d + b];
        }
    }
    total
}

/// `∇f Γ ∇g` at node `k`.
pub fn gamma_form(f: &dyn Payoff, g: &dyn Payoff, line: &MalliavinLine, k: usize) -> f64 {
    let d = line.d();
    let x = line.x_at(k);
    let (mut gf, mut gg) = (vec![0.0; d], vec![0.0; d]);
    f.gradient(x, &mut gf);
    g.gradient(x, &mut gg);
    let gamma = line.gamma_at(k);
    let mut total = 0.0;
    for a in 0..d {
        for b in 0..d {
            total += gf[a] * gamma[a * d + b] * gg[b];
        }
    }
    total
}

/// `∇f U C`, the left side of the Bismut formula, at node `k`.
pub fn bismut_lhs(f: &dyn Payoff, line: &MalliavinLine, k: usize, out: &mut [f64]) {
    let d = line.d();
    let mut gf = vec![0.0; d];
    f.gradient(line.x_at(k), &mut gf);
    let mut uc = vec![0.0; d * d];
    linalg::matmul(line.state.u_at(k), line.c_at(k), d, &mut uc);
    for c in 0..d {
        out[c] = (0..d).map(|a| gf[a] * uc[a * d + c]).sum();
    }
}
