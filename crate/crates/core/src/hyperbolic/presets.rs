//! Ready-made coefficient sets.

use super::coefficients::{Coefficients, StatePoint, SystemDims};
use super::Boundaries;
use crate::error::Result;
use crate::lattice::{sample_boundary_bm, BoundaryPath, Grid, NoiseSpec};

/// `d_s d_t x = d_s d_t w`: the solution is the sheet itself.
#[derive(Debug, Clone, Copy)]
pub struct SheetSystem {
    pub m: usize,
}

impl Coefficients for SheetSystem {
    fn dims(&self) -> SystemDims {
        SystemDims { d: self.m, n: 0, m: self.m }
    }
    fn a1(&self, _state: StatePoint<'_>, dw: &[f64], out: &mut [f64]) {
        for (o, w) in out.iter_mut().zip(dw) {
            *o += w;
        }
    }
}

/// The OU sheet written as a system with an auxiliary clock component:
/// state `(z⁰, z¹, …, z^m)` with `d_s d_t z⁰ = 0`, `z⁰ = s + t`, and
///
/// ```text
/// d_s d_t z^k = d_s d_t w^k − ½ d_s z^k d_t z⁰
/// ```
#[derive(Debug, Clone, Copy)]
pub struct OuClockSystem {
    pub m: usize,
}

impl OuClockSystem {
    /// Clock boundaries `z⁰_{s0} = s`, `z⁰_{0t} = t`, the supplied
    /// `z_{s0}`, and `z_{0t} = 0`.
    pub fn boundaries(&self, grid: &Grid, z_s0: &BoundaryPath) -> Boundaries {
        let m = self.m;
        let mut x_s0 = Vec::with_capacity((grid.n_s + 1) * (m + 1));
        for i in 0..=grid.n_s {
            x_s0.push(grid.s(i));
            x_s0.extend_from_slice(z_s0.at(i));
        }
        let mut x_0t = Vec::with_capacity((grid.n_t + 1) * (m + 1));
        for j in 0..=grid.n_t {
            x_0t.push(grid.t(j));
            x_0t.extend(std::iter::repeat_n(0.0, m));
        }
        let path = |values, step| BoundaryPath {
            values,
            dim: m + 1,
            step,
            kind: crate::lattice::BoundaryKind::Deterministic,
        };
        Boundaries {
            x_s0: path(x_s0, grid.ds),
            x_0t: path(x_0t, grid.dt),
            p_0t: BoundaryPath::zero(grid.n_t, grid.dt, 0),
            q_s0: BoundaryPath::zero(grid.n_s, grid.ds, 0),
        }
    }
}

impl Coefficients for OuClockSystem {
    fn dims(&self) -> SystemDims {
        SystemDims {
            d: self.m + 1,
            n: 0,
            m: self.m,
        }
    }
    fn a1(&self, _state: StatePoint<'_>, dw: &[f64], out: &mut [f64]) {
        for k in 0..self.m {
            out[k + 1] += dw[k];
        }
    }
    fn b11(&self, _x: &[f64], xi: &[f64], tau: &[f64], out: &mut [f64]) {
        for k in 1..=self.m {
            out[k] += (-0.5 * xi[k]) * tau[0];
        }
    }
}

/// Scalar `d_s d_t x = λ d_s x d_t x`. Without noise this is the Goursat
/// problem `∂_s∂_t x = λ ∂_s x ∂_t x`, solved by
/// `e^{−λx} = e^{−λx_{s0}} + e^{−λx_{0t}} − e^{−λx_{00}}`.
#[derive(Debug, Clone, Copy)]
pub struct GoursatSystem {
    pub lambda: f64,
    /// Coefficient of the sheet increment.
    pub noise: f64,
}

impl GoursatSystem {
    /// Closed-form solution for the boundary data `x_{s0} = s`, `x_{0t} = t`.
    pub fn exact(&self, s: f64, t: f64) -> f64 {
        let l = self.lambda;
        -((-l * s).exp() + (-l * t).exp() - 1.0).ln() / l
    }
}

impl Coefficients for GoursatSystem {
    fn dims(&self) -> SystemDims {
        SystemDims { d: 1, n: 0, m: 1 }
    }
    fn a1(&self, _state: StatePoint<'_>, dw: &[f64], out: &mut [f64]) {
        out[0] += self.noise * dw[0];
    }
    fn b11(&self, _x: &[f64], xi: &[f64], tau: &[f64], out: &mut [f64]) {
        out[0] += self.lambda * xi[0] * tau[0];
    }
}

/// A scalar system with bounded Lipschitz coefficients in every slot,
/// used for the regularity scans:
///
/// ```text
/// a1 = 1 + 0.3 sin x          b11 = 0.5 cos x · ξτ
/// b12 = 0.1 sin x · ξτ₁τ₂     b21 = 0.1 cos x · ξ₁ξ₂τ
/// c1 = (1 + 0.5 cos p) · ξ    c2 = 0.25 sin x · ξ₁ξ₂
/// e1 = τ
/// ```
#[derive(Debug, Clone, Copy, Default)]
pub struct BoundedTestSystem;

impl BoundedTestSystem {
    /// Brownian `x_{s0}`, `x_{0t}` and `p_{0t}` from boundary slots 1, 2, 3,
    /// and `q_{s0} = 0`.
    pub fn brownian_boundaries(grid: &Grid, noise: &NoiseSpec) -> Result<Boundaries> {
        Ok(Boundaries {
            x_s0: sample_boundary_bm(grid.n_s, grid.ds, 1, noise, 1)?,
            x_0t: sample_boundary_bm(grid.n_t, grid.dt, 1, noise, 2)?,
            p_0t: sample_boundary_bm(grid.n_t, grid.dt, 1, noise, 3)?,
            q_s0: BoundaryPath::zero(grid.n_s, grid.ds, 1),
        })
    }
}

impl Coefficients for BoundedTestSystem {
    fn dims(&self) -> SystemDims {
        SystemDims { d: 1, n: 1, m: 1 }
    }
    fn a1(&self, state: StatePoint<'_>, dw: &[f64], out: &mut [f64]) {
        out[0] += (1.0 + 0.3 * state.x[0].sin()) * dw[0];
    }
    fn b11(&self, x: &[f64], xi: &[f64], tau: &[f64], out: &mut [f64]) {
        out[0] += 0.5 * x[0].cos() * xi[0] * tau[0];
    }
    fn b12(&self, x: &[f64], xi: &[f64], tau1: &[f64], tau2: &[f64], out: &mut [f64]) {
        out[0] += 0.1 * x[0].sin() * xi[0] * tau1[0] * tau2[0];
    }
    fn b21(&self, x: &[f64], xi1: &[f64], xi2: &[f64], tau: &[f64], out: &mut [f64]) {
        out[0] += 0.1 * x[0].cos() * xi1[0] * xi2[0] * tau[0];
    }
    fn c1(&self, state: StatePoint<'_>, xi: &[f64], out: &mut [f64]) {
        out[0] += (1.0 + 0.5 * state.p[0].cos()) * xi[0];
    }
    fn c2(&self, state: StatePoint<'_>, xi1: &[f64], xi2: &[f64], out: &mut [f64]) {
        out[0] += 0.25 * state.x[0].sin() * xi1[0] * xi2[0];
    }
    fn e1(&self, _state: StatePoint<'_>, tau: &[f64], out: &mut [f64]) {
        out[0] += tau[0];
    }
    fn declared_constant(&self) -> Option<f64> {
        Some(1.5)
    }
}
