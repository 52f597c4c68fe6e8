//! Discrete one- and two-parameter stochastic integrals.
//!
//! Itô-type integrands are evaluated at the left endpoint of a step, or the
//! lower-left corner of a cell; Stratonovich-type integrands use the
//! average of the two endpoints. Two-parameter integrals are accumulated
//! with the symmetric inclusion–exclusion recurrence of
//! [`accumulate_cells`], so the result does not depend on sweep order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{CellIncrements, Grid};
use crate::sheet::{accumulate_cells, SheetField, SweepOrder};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    S,
    T,
}

/// A `dim`-vector process on `n + 1` equally spaced points of one axis.
#[derive(Debug, Clone, PartialEq)]
pub struct LineProcess {
    pub values: Vec<f64>,
    pub dim: usize,
    pub step: f64,
    pub axis: Axis,
    /// Index of the line on the other axis.
    pub fixed_other: usize,
}

impl LineProcess {
    pub fn new(values: Vec<f64>, dim: usize, step: f64, axis: Axis) -> Self {
        assert!(dim > 0 && values.len().is_multiple_of(dim) && values.len() >= dim);
        LineProcess {
            values,
            dim,
            step,
            axis,
            fixed_other: 0,
        }
    }

    /// Number of steps.
    pub fn len(&self) -> usize {
        self.values.len() / self.dim - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn at(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    #[inline]
    pub fn get(&self, k: usize, c: usize) -> f64 {
        self.values[k * self.dim + c]
    }

    #[inline]
    pub fn increment(&self, k: usize, c: usize) -> f64 {
        self.get(k + 1, c) - self.get(k, c)
    }

    pub fn last(&self) -> &[f64] {
        self.at(self.len())
    }

    pub fn component(&self, c: usize) -> LineProcess {
        LineProcess {
            values: self.values.iter().skip(c).step_by(self.dim).copied().collect(),
            dim: 1,
            step: self.step,
            axis: self.axis,
            fixed_other: self.fixed_other,
        }
    }

    /// Pointwise image under `f`, keeping the dimension.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> LineProcess {
        LineProcess {
            values: self.values.iter().map(|v| f(*v)).collect(),
            ..self.clone()
        }
    }

    /// Every `factor`-th point.
    pub fn subsample(&self, factor: usize) -> Result<LineProcess> {
        if factor == 0 || !self.len().is_multiple_of(factor) {
            return Err(Error::Shape(format!(
                "line of {} steps not divisible by {factor}",
                self.len()
            )));
        }
        let values = (0..=self.len() / factor)
            .flat_map(|k| self.at(k * factor).to_vec())
            .collect();
        Ok(LineProcess {
            values,
            step: self.step * factor as f64,
            ..self.clone()
        })
    }
}

/// The six integrals: two one-parameter forms and four two-parameter forms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntegralKind {
    /// `∫ a d_r x` along each t-line.
    Zeta1,
    /// `∫ d_r x d_r y` along each t-line.
    Zeta2,
    /// `∫∫ a d_r d_u x`.
    Zeta3,
    /// `∫∫ d_r x d_u y`.
    Zeta4,
    /// `∫∫ d_r x d_r d_u y`.
    Zeta5,
    /// `∫∫ d_r d_u x d_r d_u y`.
    Zeta6,
}

fn check_lines(a: &LineProcess, x: &LineProcess) -> Result<()> {
    if a.len() != x.len() {
        return Err(Error::Shape(format!(
            "line lengths differ: {} vs {}",
            a.len(),
            x.len()
        )));
    }
    if a.dim != x.dim && a.dim != 1 {
        return Err(Error::Shape(format!(
            "integrand dim {} incompatible with integrator dim {}",
            a.dim, x.dim
        )));
    }
    Ok(())
}

#[inline]
fn broadcast(line: &LineProcess, k: usize, c: usize) -> f64 {
    if line.dim == 1 {
        line.get(k, 0)
    } else {
        line.get(k, c)
    }
}

fn partial_sums(x: &LineProcess, mut term: impl FnMut(usize, usize) -> f64) -> LineProcess {
    let n = x.len();
    let dim = x.dim;
    let mut values = vec![0.0; (n + 1) * dim];
    for k in 0..n {
        for c in 0..dim {
            values[(k + 1) * dim + c] = values[k * dim + c] + term(k, c);
        }
    }
    LineProcess {
        values,
        dim,
        step: x.step,
        axis: x.axis,
        fixed_other: x.fixed_other,
    }
}

/// Itô line integral `Σ a_k (x_{k+1} − x_k)`, componentwise. A
/// one-dimensional `a` multiplies every component of `x`.
pub fn integral_zeta1(a: &LineProcess, x: &LineProcess) -> Result<LineProcess> {
    check_lines(a, x)?;
    Ok(partial_sums(x, |k, c| broadcast(a, k, c) * x.increment(k, c)))
}

/// Stratonovich line integral `Σ ½(a_k + a_{k+1})(x_{k+1} − x_k)`.
pub fn integral_zeta1_stratonovich(a: &LineProcess, x: &LineProcess) -> Result<LineProcess> {
    check_lines(a, x)?;
    Ok(partial_sums(x, |k, c| {
        0.5 * (broadcast(a, k, c) + broadcast(a, k + 1, c)) * x.increment(k, c)
    }))
}

/// Discrete covariation `Σ (x_{k+1} − x_k)(y_{k+1} − y_k)`, componentwise.
pub fn integral_zeta2(x: &LineProcess, y: &LineProcess) -> Result<LineProcess> {
    check_lines(y, x)?;
    Ok(partial_sums(x, |k, c| x.increment(k, c) * {
        if y.dim == 1 {
            y.increment(k, 0)
        } else {
            y.increment(k, c)
        }
    }))
}

fn check_fields(x: &SheetField, y: &SheetField, what: &str) -> Result<()> {
    if x.grid.n_s != y.grid.n_s || x.grid.n_t != y.grid.n_t {
        return Err(Error::Shape(format!("{what}: grids differ")));
    }
    if x.dim != y.dim && y.dim != 1 && x.dim != 1 {
        return Err(Error::Shape(format!(
            "{what}: dims {} and {} incompatible",
            x.dim, y.dim
        )));
    }
    Ok(())
}

#[inline]
fn field_value(f: &SheetField, i: usize, j: usize, c: usize) -> f64 {
    f.at(i, j, if f.dim == 1 { 0 } else { c })
}

#[inline]
fn field_dd(f: &SheetField, i: usize, j: usize, c: usize) -> f64 {
    f.double_increment(i, j, if f.dim == 1 { 0 } else { c })
}

#[inline]
fn field_ds(f: &SheetField, i: usize, j: usize, c: usize) -> f64 {
    f.s_increment(i, j, if f.dim == 1 { 0 } else { c })
}

#[inline]
fn field_dt(f: &SheetField, i: usize, j: usize, c: usize) -> f64 {
    f.t_increment(i, j, if f.dim == 1 { 0 } else { c })
}

/// Two-parameter integral of the requested kind with s-major accumulation.
///
/// * `Zeta1`: `a`, `x`; Itô integral along every t-line.
/// * `Zeta2`: `x`, `y`; covariation along every t-line.
/// * `Zeta3`: `a`, `x`; `Σ a·ΔΔx` with `a` at the lower-left corner.
/// * `Zeta4`: `x`, `y`; `Σ Δ_s x·Δ_t y`, lower-edge s-increment of `x`
///   and left-edge t-increment of `y`.
/// * `Zeta5`: `x`, `y`; `Σ Δ_s x·ΔΔy`.
/// * `Zeta6`: `x`, `y`; `Σ ΔΔx·ΔΔy`.
pub fn integral_two_param(
    kind: IntegralKind,
    a: Option<&SheetField>,
    x: &SheetField,
    y: Option<&SheetField>,
) -> Result<SheetField> {
    integral_two_param_ordered(kind, a, x, y, SweepOrder::SMajor)
}

pub fn integral_two_param_ordered(
    kind: IntegralKind,
    a: Option<&SheetField>,
    x: &SheetField,
    y: Option<&SheetField>,
    order: SweepOrder,
) -> Result<SheetField> {
    let grid = x.grid;
    let dim = match kind {
        IntegralKind::Zeta1 | IntegralKind::Zeta3 => x.dim.max(a.map_or(1, |a| a.dim)),
        _ => x.dim.max(y.map_or(1, |y| y.dim)),
    };
    match kind {
        IntegralKind::Zeta1 => {
            let a = a.ok_or(Error::MissingOperand("zeta1 requires the integrand `a`"))?;
            check_fields(x, a, "zeta1")?;
            let mut out = SheetField::zeros(grid, dim);
            for j in 0..=grid.n_t {
                for i in 0..grid.n_s {
                    for c in 0..dim {
                        let v = out.at(i, j, c) + field_value(a, i, j, c) * field_ds(x, i, j, c);
                        let idx = out.index(i + 1, j) + c;
                        out.values[idx] = v;
                    }
                }
            }
            Ok(out)
        }
        IntegralKind::Zeta2 => {
            let y = y.ok_or(Error::MissingOperand("zeta2 requires the second integrator `y`"))?;
            check_fields(x, y, "zeta2")?;
            let mut out = SheetField::zeros(grid, dim);
            for j in 0..=grid.n_t {
                for i in 0..grid.n_s {
                    for c in 0..dim {
                        let v = out.at(i, j, c) + field_ds(x, i, j, c) * field_ds(y, i, j, c);
                        let idx = out.index(i + 1, j) + c;
                        out.values[idx] = v;
                    }
                }
            }
            Ok(out)
        }
        IntegralKind::Zeta3 => {
            let a = a.ok_or(Error::MissingOperand("zeta3 requires the integrand `a`"))?;
            check_fields(x, a, "zeta3")?;
            let terms = CellIncrements::from_fn(grid, dim, |i, j, c| field_value(a, i, j, c) * field_dd(x, i, j, c));
            Ok(accumulate_cells(&terms, order))
        }
        IntegralKind::Zeta4 | IntegralKind::Zeta5 | IntegralKind::Zeta6 => {
            let y = y.ok_or(Error::MissingOperand("zeta4/5/6 require the second integrator `y`"))?;
            check_fields(x, y, "zeta4/5/6")?;
            let terms = CellIncrements::from_fn(grid, dim, |i, j, c| match kind {
                IntegralKind::Zeta4 => field_ds(x, i, j, c) * field_dt(y, i, j, c),
                IntegralKind::Zeta5 => field_ds(x, i, j, c) * field_dd(y, i, j, c),
                _ => field_dd(x, i, j, c) * field_dd(y, i, j, c),
            });
            Ok(accumulate_cells(&terms, order))
        }
    }
}

/// `Σ Δ_s x^{xc} · ΔΔw^{wc}` over every cell, with the s-increment of `x`
/// taken on the cell's lower edge. Its root mean square over `[0,S]×[0,T]`
/// is `√(S·T·ds)` for `x` a component of the sheet independent of `w`.
pub fn check_mixed_annihilation(x: &SheetField, x_component: usize, w: &SheetField, w_component: usize) -> Result<f64> {
    if x.grid.n_s != w.grid.n_s || x.grid.n_t != w.grid.n_t {
        return Err(Error::Shape("mixed annihilation: grids differ".into()));
    }
    if x_component >= x.dim || w_component >= w.dim {
        return Err(Error::Shape("mixed annihilation: component out of range".into()));
    }
    let mut total = 0.0;
    for j in 0..x.grid.n_t {
        for i in 0..x.grid.n_s {
            total += x.s_increment(i, j, x_component) * w.double_increment(i, j, w_component);
        }
    }
    Ok(total)
}

/// Upper constant in `E|M|^α ≤ C(α) E⟨M⟩^{α/2}` for continuous martingales,
/// from Itô's formula, Hölder and Doob:
///
/// ```text
/// C(α) = [ α(α−1)/2 · (α/(α−1))^{α−2} ]^{α/2},   C(2) = 1
/// ```
pub fn bdg_constant(alpha: f64) -> Result<f64> {
    if !(alpha >= 2.0) || !alpha.is_finite() {
        return Err(Error::config("run.alpha", format!("BDG moment requires alpha >= 2, got {alpha}")));
    }
    let base = 0.5 * alpha * (alpha - 1.0) * (alpha / (alpha - 1.0)).powf(alpha - 2.0);
    Ok(base.powf(alpha / 2.0))
}

/// Monte Carlo estimate of the two sides of the BDG inequality.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BdgEstimate {
    pub alpha: f64,
    /// `E|∫∫ a dΔΔw|^α`
    pub lhs: f64,
    pub lhs_se: f64,
    /// `E(∫∫ a² ds dt)^{α/2}`
    pub rhs: f64,
    pub rhs_se: f64,
    pub constant: f64,
    pub n_paths: usize,
}

impl BdgEstimate {
    /// `lhs / rhs`, zero when both sides vanish.
    pub fn ratio(&self) -> f64 {
        if self.rhs == 0.0 {
            if self.lhs == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            self.lhs / self.rhs
        }
    }
}

/// Single-path stochastic integral `Σ a·ΔΔw^c` and its bracket `Σ a² ds dt`,
/// with `a` read at each cell's lower-left corner.
pub fn bdg_path_terms(a: &SheetField, incs: &CellIncrements, component: usize) -> Result<(f64, f64)> {
    let grid: &Grid = &incs.grid;
    if a.grid.n_s != grid.n_s || a.grid.n_t != grid.n_t {
        return Err(Error::Shape("bdg: integrand grid differs from increments".into()));
    }
    if component >= incs.m {
        return Err(Error::Shape("bdg: component out of range".into()));
    }
    let area = grid.ds * grid.dt;
    let (mut integral, mut bracket) = (0.0, 0.0);
    for j in 0..grid.n_t {
        for i in 0..grid.n_s {
            let v = a.at(i, j, if a.dim == 1 { 0 } else { component });
            integral += v * incs.get(i, j, component);
            bracket += v * v * area;
        }
    }
    Ok((integral, bracket))
}

/// Estimates `(E|∫∫ a dΔΔw|^α, E(∫∫ a² ds dt)^{α/2})` over the supplied
/// `(integrand, increments)` paths.
pub fn bdg_moment_check<I>(paths: I, component: usize, alpha: f64) -> Result<BdgEstimate>
where
    I: IntoIterator<Item = (SheetField, CellIncrements)>,
{
    let constant = bdg_constant(alpha)?;
    let mut lhs = Vec::new();
    let mut rhs = Vec::new();
    for (a, incs) in paths {
        let (integral, bracket) = bdg_path_terms(&a, &incs, component)?;
        lhs.push(integral.abs().powf(alpha));
        rhs.push(bracket.powf(alpha / 2.0));
    }
    if lhs.len() < 2 {
        return Err(Error::config("mc.n_paths", "at least two paths are required"));
    }
    let (lhs_mean, lhs_se) = mean_se(&lhs);
    let (rhs_mean, rhs_se) = mean_se(&rhs);
    Ok(BdgEstimate {
        alpha,
        lhs: lhs_mean,
        lhs_se,
        rhs: rhs_mean,
        rhs_se,
        constant,
        n_paths: lhs.len(),
    })
}

pub(crate) fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(values: &[f64]) -> LineProcess {
        LineProcess::new(values.to_vec(), 1, 0.25, Axis::S)
    }

    #[test]
    fn unit_integrand_telescopes() {
        let x = line(&[0.3, -1.2, 0.7, 2.5, 2.0]);
        let one = x.map(|_| 1.0);
        let z = integral_zeta1(&one, &x).unwrap();
        assert!((z.last()[0] - (2.0 - 0.3)).abs() < 1e-15);
    }

    #[test]
    fn stratonovich_square_telescopes() {
        let x = line(&[0.5, 0.25, -0.75, 1.5, 1.0]);
        let two_x = x.map(|v| 2.0 * v);
        let z = integral_zeta1_stratonovich(&two_x, &x).unwrap();
        assert_eq!(z.last()[0], 1.0 * 1.0 - 0.5 * 0.5);
    }

    #[test]
    fn covariation_with_constant_vanishes() {
        let x = line(&[0.5, 0.25, -0.75, 1.5]);
        let c = x.map(|_| 3.0);
        let z = integral_zeta2(&x, &c).unwrap();
        assert!(z.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        let x = line(&[0.0, 1.0, 2.0]);
        let y = line(&[0.0, 1.0]);
        assert!(matches!(integral_zeta1(&x, &y), Err(Error::Shape(_))));
        assert!(matches!(integral_zeta2(&x, &y), Err(Error::Shape(_))));
    }

    #[test]
    fn missing_operand_is_reported() {
        let grid = Grid::new(2, 2, 0.5, 0.5).unwrap();
        let x = SheetField::zeros(grid, 1);
        let err = integral_two_param(IntegralKind::Zeta3, None, &x, None).unwrap_err();
        assert!(matches!(err, Error::MissingOperand(_)));
        assert!(integral_two_param(IntegralKind::Zeta6, None, &x, None).is_err());
    }

    #[test]
    fn bdg_constant_table() {
        assert_eq!(bdg_constant(2.0).unwrap(), 1.0);
        let c4 = bdg_constant(4.0).unwrap();
        assert!((c4 - 36.0 * (4.0f64 / 3.0).powi(4)).abs() < 1e-9);
        // Brownian fourth moment ratio 3 must respect the bound
        assert!(c4 >= 3.0);
        assert!(bdg_constant(1.5).is_err());
    }

    #[test]
    fn bdg_zero_integrand() {
        let grid = Grid::new(4, 4, 0.25, 0.25).unwrap();
        let paths = (0..4).map(|p| {
            let incs = crate::lattice::sample_cell_increments(&grid, &crate::lattice::NoiseSpec::new(1, p, 1)).unwrap();
            (SheetField::zeros(grid, 1), incs)
        });
        let est = bdg_moment_check(paths, 0, 2.0).unwrap();
        assert_eq!((est.lhs, est.rhs), (0.0, 0.0));
        assert_eq!(est.ratio(), 0.0);
    }
}
