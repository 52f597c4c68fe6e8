//! Vector fields `X_0, …, X_m` and payoffs, with derivative probing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{NoiseSpec, Stream};
use crate::polynomial::Polynomial;

/// Smooth vector fields on `ℝ^d`. Index 0 is the drift, `1..=m` the
/// diffusion fields.
pub trait VectorFields: Send + Sync {
    fn state_dim(&self) -> usize;
    fn noise_dim(&self) -> usize;

    /// `X_i(x)`.
    fn field(&self, i: usize, x: &[f64], out: &mut [f64]);

    /// `∇X_i(x)`, row-major: `out[r·d + c] = ∂_c X_i^r`.
    fn jacobian(&self, i: usize, x: &[f64], out: &mut [f64]);

    /// `∇²X_i(x)`: `out[(r·d + a)·d + b] = ∂_a ∂_b X_i^r`.
    fn hessian(&self, i: usize, x: &[f64], out: &mut [f64]);

    /// Declared common bound on the fields and their derivatives.
    fn declared_bound(&self) -> Option<f64> {
        None
    }
}

/// Vector fields given by polynomial tables, one polynomial per component.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialFields {
    d: usize,
    m: usize,
    fields: Vec<Vec<Polynomial>>,
    jac: Vec<Vec<Polynomial>>,
    hess: Vec<Vec<Polynomial>>,
    bound: Option<f64>,
}

/// Serializable form: `fields[i][r]` is component `r` of `X_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldTable {
    pub d: usize,
    pub m: usize,
    pub fields: Vec<Vec<Polynomial>>,
    #[serde(default)]
    pub bound: Option<f64>,
}

impl PolynomialFields {
    pub fn new(table: FieldTable) -> Result<Self> {
        let FieldTable { d, m, fields, bound } = table;
        if d == 0 {
            return Err(Error::config("model.d", "state dimension must be at least 1"));
        }
        if m == 0 {
            return Err(Error::config("model.m", "noise dimension must be at least 1"));
        }
        if fields.len() != m + 1 {
            return Err(Error::config(
                "model.fields",
                format!("expected {} vector fields (X_0..X_m), got {}", m + 1, fields.len()),
            ));
        }
        for (i, f) in fields.iter().enumerate() {
            if f.len() != d {
                return Err(Error::config(
                    format!("model.fields[{i}]"),
                    format!("expected {d} components, got {}", f.len()),
                ));
            }
            for (r, p) in f.iter().enumerate() {
                p.check_arity(d, &format!("model.fields[{i}][{r}]"))?;
            }
        }
        let jac: Vec<Vec<Polynomial>> = fields
            .iter()
            .map(|f| {
                f.iter()
                    .flat_map(|p| (0..d).map(move |c| p.derivative(c)))
                    .collect()
            })
            .collect();
        let hess = jac
            .iter()
            .map(|j| {
                j.iter()
                    .flat_map(|p| (0..d).map(move |b| p.derivative(b)))
                    .collect()
            })
            .collect();
        Ok(PolynomialFields {
            d,
            m,
            fields,
            jac,
            hess,
            bound,
        })
    }

    /// `d = m = 1`, `X_1(x) = x`, `X_0 = 0`.
    pub fn linear1d() -> Self {
        PolynomialFields::new(FieldTable {
            d: 1,
            m: 1,
            fields: vec![vec![Polynomial::zero()], vec![Polynomial::variable(0)]],
            bound: None,
        })
        .unwrap()
    }

    /// `d = m`, `X_i = e_i`, `X_0 = 0`: the state is the driving line itself.
    pub fn ou(m: usize) -> Result<Self> {
        let mut fields = vec![vec![Polynomial::zero(); m]];
        for i in 0..m {
            let mut f = vec![Polynomial::zero(); m];
            f[i] = Polynomial::constant(1.0);
            fields.push(f);
        }
        PolynomialFields::new(FieldTable {
            d: m,
            m,
            fields,
            bound: Some(1.0),
        })
    }

    /// All fields zero.
    pub fn zero(d: usize, m: usize) -> Result<Self> {
        PolynomialFields::new(FieldTable {
            d,
            m,
            fields: vec![vec![Polynomial::zero(); d]; m + 1],
            bound: Some(0.0),
        })
    }

    pub fn table(&self) -> FieldTable {
        FieldTable {
            d: self.d,
            m: self.m,
            fields: self.fields.clone(),
            bound: self.bound,
        }
    }
}

impl VectorFields for PolynomialFields {
    fn state_dim(&self) -> usize {
        self.d
    }
    fn noise_dim(&self) -> usize {
        self.m
    }
    fn field(&self, i: usize, x: &[f64], out: &mut [f64]) {
        for (o, p) in out.iter_mut().zip(&self.fields[i]) {
            *o = p.eval(x);
        }
    }
    fn jacobian(&self, i: usize, x: &[f64], out: &mut [f64]) {
        for (o, p) in out.iter_mut().zip(&self.jac[i]) {
            *o = p.eval(x);
        }
    }
    fn hessian(&self, i: usize, x: &[f64], out: &mut [f64]) {
        for (o, p) in out.iter_mut().zip(&self.hess[i]) {
            *o = p.eval(x);
        }
    }
    fn declared_bound(&self) -> Option<f64> {
        self.bound
    }
}

/// A real function of the state with its first two derivatives.
pub trait Payoff: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], out: &mut [f64]);
    /// Row-major `d × d`.
    fn hessian(&self, x: &[f64], out: &mut [f64]);
    fn bounded(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolyPayoff {
    d: usize,
    poly: Polynomial,
    grad: Vec<Polynomial>,
    hess: Vec<Polynomial>,
}

/// Named payoff presets accepted in configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PayoffSpec {
    /// `x ↦ x_j`.
    Coordinate { index: usize },
    /// `x ↦ Σ x_k²`.
    Square,
    Constant { value: f64 },
}

impl PolyPayoff {
    pub fn new(d: usize, poly: Polynomial) -> Result<Self> {
        poly.check_arity(d, "run.payoffs")?;
        let grad: Vec<Polynomial> = (0..d).map(|k| poly.derivative(k)).collect();
        let hess = grad
            .iter()
            .flat_map(|g| (0..d).map(move |k| g.derivative(k)))
            .collect();
        Ok(PolyPayoff { d, poly, grad, hess })
    }

    pub fn from_spec(spec: &PayoffSpec, d: usize) -> Result<Self> {
        match spec {
            PayoffSpec::Coordinate { index } => {
                if *index >= d {
                    return Err(Error::config(
                        "run.payoffs",
                        format!("coordinate {index} out of range for dimension {d}"),
                    ));
                }
                PolyPayoff::new(d, Polynomial::variable(*index))
            }
            PayoffSpec::Square => PolyPayoff::new(
                d,
                (0..d).fold(Polynomial::zero(), |acc, k| {
                    acc.add(&Polynomial::variable(k).mul(&Polynomial::variable(k)))
                }),
            ),
            PayoffSpec::Constant { value } => PolyPayoff::new(d, Polynomial::constant(*value)),
        }
    }
}

impl Payoff for PolyPayoff {
    fn dim(&self) -> usize {
        self.d
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.poly.eval(x)
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        for (o, p) in out.iter_mut().zip(&self.grad) {
            *o = p.eval(x);
        }
    }
    fn hessian(&self, x: &[f64], out: &mut [f64]) {
        for (o, p) in out.iter_mut().zip(&self.hess) {
            *o = p.eval(x);
        }
    }
    fn bounded(&self) -> bool {
        self.grad.iter().all(|g| g.is_zero())
    }
}

const PROBE_POINTS: usize = 8;
const PROBE_REL_TOL: f64 = 1e-4;

fn probe_points(d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut src = NoiseSpec::new(seed, 0, 1).source(Stream::Probe);
    (0..PROBE_POINTS)
        .map(|p| (0..d).map(|k| src.normal((p * d + k) as u64)).collect())
        .collect()
}

fn compare(what: impl Fn() -> String, analytic: f64, numeric: f64) -> Result<()> {
    let scale = 1.0_f64.max(analytic.abs()).max(numeric.abs());
    if (analytic - numeric).abs() > PROBE_REL_TOL * scale || !analytic.is_finite() {
        return Err(Error::DerivativeMismatch {
            what: what(),
            analytic,
            numeric,
        });
    }
    Ok(())
}

/// Central-difference check of `jacobian` against `field` and of `hessian`
/// against `jacobian` at eight random points.
pub fn probe_vector_fields(vf: &dyn VectorFields, seed: u64) -> Result<()> {
    let d = vf.state_dim();
    let (mut fp, mut fm) = (vec![0.0; d], vec![0.0; d]);
    let (mut jac, mut jp, mut jm) = (vec![0.0; d * d], vec![0.0; d * d], vec![0.0; d * d]);
    let mut hess = vec![0.0; d * d * d];
    for x in probe_points(d, seed) {
        for i in 0..=vf.noise_dim() {
            vf.jacobian(i, &x, &mut jac);
            vf.hessian(i, &x, &mut hess);
            for c in 0..d {
                let h = 1e-4 * x[c].abs().max(1.0);
                let (mut xp, mut xm) = (x.clone(), x.clone());
                xp[c] += h;
                xm[c] -= h;
                vf.field(i, &xp, &mut fp);
                vf.field(i, &xm, &mut fm);
                vf.jacobian(i, &xp, &mut jp);
                vf.jacobian(i, &xm, &mut jm);
                for r in 0..d {
                    compare(
                        || format!("grad X_{i}[{r}][{c}]"),
                        jac[r * d + c],
                        (fp[r] - fm[r]) / (2.0 * h),
                    )?;
                    for a in 0..d {
                        compare(
                            || format!("hess X_{i}[{r}][{a}][{c}]"),
                            hess[(r * d + a) * d + c],
                            (jp[r * d + a] - jm[r * d + a]) / (2.0 * h),
                        )?;
                    }
                }
            }
        }
    }
    Ok(())
}

/// The same check for a payoff.
pub fn probe_payoff(f: &dyn Payoff, seed: u64) -> Result<()> {
    let d = f.dim();
    let (mut g, mut gp, mut gm) = (vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    let mut hess = vec![0.0; d * d];
    for x in probe_points(d, seed) {
        f.gradient(&x, &mut g);
        f.hessian(&x, &mut hess);
        for c in 0..d {
            let h = 1e-4 * x[c].abs().max(1.0);
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[c] += h;
            xm[c] -= h;
            compare(
                || format!("payoff gradient [{c}]"),
                g[c],
                (f.value(&xp) - f.value(&xm)) / (2.0 * h),
            )?;
            f.gradient(&xp, &mut gp);
            f.gradient(&xm, &mut gm);
            for r in 0..d {
                compare(
                    || format!("payoff hessian [{r}][{c}]"),
                    hess[r * d + c],
                    (gp[r] - gm[r]) / (2.0 * h),
                )?;
            }
        }
    }
    Ok(())
}
