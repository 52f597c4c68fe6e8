//! Coefficient callbacks of the hyperbolic system
//!
//! ```text
//! d_s d_t x = a1(ΔΔw) + a2(ΔΔw, ΔΔw)
//!           + b11(d_s x, d_t x) + b12(d_s x, d_t x, d_t x)
//!           + b21(d_s x, d_s x, d_t x) + b22(d_s x, d_s x, d_t x, d_t x)
//! d_s p     = c1(d_s x) + c2(d_s x, d_s x)
//! d_t q     = e1(d_t x) + e2(d_t x, d_t x)
//! ```
//!
//! In `b_jk` the first `j` arguments are s-differentials and the last `k`
//! are t-differentials. Every method *adds* its value into `out`; the
//! defaults add nothing, so an implementation only overrides the terms it
//! has.

use crate::error::{Error, Result};
use crate::lattice::{NoiseSpec, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SystemDims {
    /// Dimension of `x`.
    pub d: usize,
    /// Dimension of `p` and `q`.
    pub n: usize,
    /// Noise dimension.
    pub m: usize,
}

/// The state `(x, p, q)` at a node.
#[derive(Debug, Clone, Copy)]
pub struct StatePoint<'a> {
    pub x: &'a [f64],
    pub p: &'a [f64],
    pub q: &'a [f64],
}

#[allow(unused_variables)]
pub trait Coefficients: Send + Sync {
    fn dims(&self) -> SystemDims;

    fn a1(&self, state: StatePoint<'_>, dw: &[f64], out: &mut [f64]) {}
    fn a2(&self, state: StatePoint<'_>, dw1: &[f64], dw2: &[f64], out: &mut [f64]) {}

    fn b11(&self, x: &[f64], xi: &[f64], tau: &[f64], out: &mut [f64]) {}
    fn b12(&self, x: &[f64], xi: &[f64], tau1: &[f64], tau2: &[f64], out: &mut [f64]) {}
    fn b21(&self, x: &[f64], xi1: &[f64], xi2: &[f64], tau: &[f64], out: &mut [f64]) {}
    fn b22(&self, x: &[f64], xi1: &[f64], xi2: &[f64], tau1: &[f64], tau2: &[f64], out: &mut [f64]) {}

    fn c1(&self, state: StatePoint<'_>, xi: &[f64], out: &mut [f64]) {}
    fn c2(&self, state: StatePoint<'_>, xi1: &[f64], xi2: &[f64], out: &mut [f64]) {}

    fn e1(&self, state: StatePoint<'_>, tau: &[f64], out: &mut [f64]) {}
    fn e2(&self, state: StatePoint<'_>, tau1: &[f64], tau2: &[f64], out: &mut [f64]) {}

    /// Caller-declared bound and Lipschitz constant `K`, for diagnostics only.
    fn declared_constant(&self) -> Option<f64> {
        None
    }
}

/// The system with the roles of s and t exchanged: `x'_{ts} = x_{st}`,
/// `p' = q`, `q' = p`.
pub struct Transposed<'a>(pub &'a dyn Coefficients);

fn swap<'a>(state: StatePoint<'a>) -> StatePoint<'a> {
    StatePoint {
        x: state.x,
        p: state.q,
        q: state.p,
    }
}

impl Coefficients for Transposed<'_> {
    fn dims(&self) -> SystemDims {
        self.0.dims()
    }
    fn a1(&self, state: StatePoint<'_>, dw: &[f64], out: &mut [f64]) {
        self.0.a1(swap(state), dw, out)
    }
    fn a2(&self, state: StatePoint<'_>, dw1: &[f64], dw2: &[f64], out: &mut [f64]) {
        self.0.a2(swap(state), dw1, dw2, out)
    }
    fn b11(&self, x: &[f64], xi: &[f64], tau: &[f64], out: &mut [f64]) {
        self.0.b11(x, tau, xi, out)
    }
    fn b12(&self, x: &[f64], xi: &[f64], tau1: &[f64], tau2: &[f64], out: &mut [f64]) {
        self.0.b21(x, tau1, tau2, xi, out)
    }
    fn b21(&self, x: &[f64], xi1: &[f64], xi2: &[f64], tau: &[f64], out: &mut [f64]) {
        self.0.b12(x, tau, xi1, xi2, out)
    }
    fn b22(&self, x: &[f64], xi1: &[f64], xi2: &[f64], tau1: &[f64], tau2: &[f64], out: &mut [f64]) {
        self.0.b22(x, tau1, tau2, xi1, xi2, out)
    }
    fn c1(&self, state: StatePoint<'_>, xi: &[f64], out: &mut [f64]) {
        self.0.e1(swap(state), xi, out)
    }
    fn c2(&self, state: StatePoint<'_>, xi1: &[f64], xi2: &[f64], out: &mut [f64]) {
        self.0.e2(swap(state), xi1, xi2, out)
    }
    fn e1(&self, state: StatePoint<'_>, tau: &[f64], out: &mut [f64]) {
        self.0.c1(swap(state), tau, out)
    }
    fn e2(&self, state: StatePoint<'_>, tau1: &[f64], tau2: &[f64], out: &mut [f64]) {
        self.0.c2(swap(state), tau1, tau2, out)
    }
    fn declared_constant(&self) -> Option<f64> {
        self.0.declared_constant()
    }
}

/// Probes `a2, b12, b21, b22, c2, e2` for symmetry in their repeated
/// differential arguments at a few random points.
pub fn check_symmetry(coeffs: &dyn Coefficients, seed: u64) -> Result<()> {
    let SystemDims { d, n, m } = coeffs.dims();
    let mut src = NoiseSpec::new(seed, 0, 1).source(Stream::Probe);
    let mut counter = 0u64;
    let mut draw = |len: usize| -> Vec<f64> {
        let mut v = vec![0.0; len];
        src.fill_scaled(counter, 1.0, &mut v);
        counter += len as u64;
        v
    };
    let close = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .all(|(x, y)| (x - y).abs() <= 1e-10 * (1.0 + x.abs().max(y.abs())))
    };
    let fail = |what: &str| Err(Error::config("system", format!("{what} is not symmetric in its repeated arguments")));
    for _ in 0..4 {
        let (x, p, q) = (draw(d), draw(n), draw(n));
        let st = StatePoint { x: &x, p: &p, q: &q };
        let (w1, w2) = (draw(m), draw(m));
        let (u1, u2, u3, u4) = (draw(d), draw(d), draw(d), draw(d));

        let (mut l, mut r) = (vec![0.0; d], vec![0.0; d]);
        coeffs.a2(st, &w1, &w2, &mut l);
        coeffs.a2(st, &w2, &w1, &mut r);
        if !close(&l, &r) {
            return fail("a2");
        }
        let (mut l, mut r) = (vec![0.0; d], vec![0.0; d]);
        coeffs.b12(&x, &u1, &u2, &u3, &mut l);
        coeffs.b12(&x, &u1, &u3, &u2, &mut r);
        if !close(&l, &r) {
            return fail("b12");
        }
        let (mut l, mut r) = (vec![0.0; d], vec![0.0; d]);
        coeffs.b21(&x, &u1, &u2, &u3, &mut l);
        coeffs.b21(&x, &u2, &u1, &u3, &mut r);
        if !close(&l, &r) {
            return fail("b21");
        }
        let (mut l, mut r, mut r2) = (vec![0.0; d], vec![0.0; d], vec![0.0; d]);
        coeffs.b22(&x, &u1, &u2, &u3, &u4, &mut l);
        coeffs.b22(&x, &u2, &u1, &u3, &u4, &mut r);
        coeffs.b22(&x, &u1, &u2, &u4, &u3, &mut r2);
        if !close(&l, &r) || !close(&l, &r2) {
            return fail("b22");
        }
        let (mut l, mut r) = (vec![0.0; n], vec![0.0; n]);
        coeffs.c2(st, &u1, &u2, &mut l);
        coeffs.c2(st, &u2, &u1, &mut r);
        if !close(&l, &r) {
            return fail("c2");
        }
        let (mut l, mut r) = (vec![0.0; n], vec![0.0; n]);
        coeffs.e2(st, &u1, &u2, &mut l);
        coeffs.e2(st, &u2, &u1, &mut r);
        if !close(&l, &r) {
            return fail("e2");
        }
    }
    Ok(())
}
