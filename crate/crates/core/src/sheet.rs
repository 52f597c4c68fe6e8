//! Two-parameter fields on the lattice: the Brownian sheet and the
//! Ornstein–Uhlenbeck sheet.

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::lattice::{sample_boundary_bm, BoundaryPath, CellIncrements, Grid, NoiseSpec, Stream};
use crate::stochcalc::{Axis, LineProcess};

/// Order in which cells are visited when a field is filled from its
/// mixed increments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SweepOrder {
    /// Outer loop over s, inner loop over t.
    #[default]
    SMajor,
    /// Outer loop over t, inner loop over s.
    TMajor,
}

/// A `dim`-vector valued function on the `(n_s + 1) × (n_t + 1)` nodes.
///
/// Storage is t-line-major so that a fixed-t row is contiguous:
/// node `(i, j)` component `k` lives at `((j·(n_s + 1)) + i)·dim + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SheetField {
    pub grid: Grid,
    pub dim: usize,
    pub values: Vec<f64>,
}

impl SheetField {
    pub fn zeros(grid: Grid, dim: usize) -> Self {
        SheetField {
            grid,
            dim,
            values: vec![0.0; grid.n_nodes() * dim],
        }
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        (j * (self.grid.n_s + 1) + i) * self.dim
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize) -> &[f64] {
        let start = self.index(i, j);
        &self.values[start..start + self.dim]
    }

    #[inline]
    pub fn node_mut(&mut self, i: usize, j: usize) -> &mut [f64] {
        let start = self.index(i, j);
        &mut self.values[start..start + self.dim]
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.index(i, j) + k]
    }

    pub fn set_node(&mut self, i: usize, j: usize, value: &[f64]) {
        self.node_mut(i, j).copy_from_slice(value);
    }

    /// The fixed-t line `(x_{i,j} : 0 ≤ i ≤ n_s)`.
    pub fn row(&self, j: usize) -> LineProcess {
        let start = self.index(0, j);
        let end = self.index(self.grid.n_s, j) + self.dim;
        LineProcess {
            values: self.values[start..end].to_vec(),
            dim: self.dim,
            step: self.grid.ds,
            axis: Axis::S,
            fixed_other: j,
        }
    }

    /// The fixed-s line `(x_{i,j} : 0 ≤ j ≤ n_t)`.
    pub fn column(&self, i: usize) -> LineProcess {
        let values = (0..=self.grid.n_t)
            .flat_map(|j| self.node(i, j).to_vec())
            .collect();
        LineProcess {
            values,
            dim: self.dim,
            step: self.grid.dt,
            axis: Axis::T,
            fixed_other: i,
        }
    }

    pub fn component(&self, k: usize) -> SheetField {
        SheetField {
            grid: self.grid,
            dim: 1,
            values: self.values.iter().skip(k).step_by(self.dim).copied().collect(),
        }
    }

    /// `x_{i+1,j+1} − x_{i,j+1} − x_{i+1,j} + x_{i,j}` for component `k`.
    #[inline]
    pub fn double_increment(&self, i: usize, j: usize, k: usize) -> f64 {
        self.at(i + 1, j + 1, k) - self.at(i + 1, j, k) - self.at(i, j + 1, k) + self.at(i, j, k)
    }

    /// One-parameter increment along the cell's lower edge (fixed t = j).
    #[inline]
    pub fn s_increment(&self, i: usize, j: usize, k: usize) -> f64 {
        self.at(i + 1, j, k) - self.at(i, j, k)
    }

    /// One-parameter increment along the cell's left edge (fixed s = i).
    #[inline]
    pub fn t_increment(&self, i: usize, j: usize, k: usize) -> f64 {
        self.at(i, j + 1, k) - self.at(i, j, k)
    }

    /// Recovers the per-cell double increments.
    pub fn cell_increments(&self) -> CellIncrements {
        CellIncrements::from_fn(self.grid, self.dim, |i, j, k| self.double_increment(i, j, k))
    }

    /// Field with axes swapped.
    pub fn transpose(&self) -> SheetField {
        let grid = self.grid.transpose();
        let mut out = SheetField::zeros(grid, self.dim);
        for j in 0..=self.grid.n_t {
            for i in 0..=self.grid.n_s {
                out.set_node(j, i, self.node(i, j));
            }
        }
        out
    }

    /// Writes `i,j,s,t,component,value` rows after a `#` header line.
    pub fn write_csv<W: Write>(&self, mut w: W, header: &str) -> io::Result<()> {
        writeln!(w, "# {header}")?;
        writeln!(w, "i,j,s,t,component,value")?;
        for j in 0..=self.grid.n_t {
            for i in 0..=self.grid.n_s {
                for k in 0..self.dim {
                    writeln!(
                        w,
                        "{},{},{},{},{},{:e}",
                        i,
                        j,
                        self.grid.s(i),
                        self.grid.t(j),
                        k,
                        self.at(i, j, k)
                    )?;
                }
            }
        }
        Ok(())
    }
}

/// Visits every cell in the requested order.
pub(crate) fn for_each_cell(grid: &Grid, order: SweepOrder, mut f: impl FnMut(usize, usize)) {
    match order {
        SweepOrder::SMajor => {
            for i in 0..grid.n_s {
                for j in 0..grid.n_t {
                    f(i, j)
                }
            }
        }
        SweepOrder::TMajor => {
            for j in 0..grid.n_t {
                for i in 0..grid.n_s {
                    f(i, j)
                }
            }
        }
    }
}

/// Fills a field that vanishes on both axes from per-cell mixed increments:
///
/// ```text
/// v[i+1][j+1] = ((v[i+1][j] + v[i][j+1]) − v[i][j]) + term[i][j]
/// ```
///
/// The recurrence is symmetric in the two neighbours, so both sweep orders
/// and the transposed problem produce identical bits.
pub fn accumulate_cells(terms: &CellIncrements, order: SweepOrder) -> SheetField {
    let grid = terms.grid;
    let dim = terms.m;
    let mut field = SheetField::zeros(grid, dim);
    for_each_cell(&grid, order, |i, j| {
        let a = field.index(i + 1, j);
        let b = field.index(i, j + 1);
        let c = field.index(i, j);
        let dst = field.index(i + 1, j + 1);
        let src = terms.index(i, j, 0);
        for k in 0..dim {
            field.values[dst + k] =
                ((field.values[a + k] + field.values[b + k]) - field.values[c + k]) + terms.values[src + k];
        }
    });
    field
}

/// Brownian sheet with zero axes: `w[i][j]` is the sum of the increments of
/// all cells below and to the left of node `(i, j)`.
pub fn build_sheet(incs: &CellIncrements) -> SheetField {
    accumulate_cells(incs, SweepOrder::SMajor)
}

/// Exact Ornstein–Uhlenbeck sheet with covariance `δ^{ij} (s∧s') e^{−|t−t'|/2}`.
///
/// Row `t = 0` is a Brownian motion in s; each later row is the
/// autoregression `z_{·,t+dt} = e^{−dt/2} z_{·,t} + √(1 − e^{−dt}) B` with a
/// fresh Brownian motion `B` drawn from its own stream.
pub fn sample_ou_exact(grid: &Grid, noise: &NoiseSpec) -> Result<SheetField> {
    grid.validate()?;
    let m = noise.m;
    if m == 0 {
        return Err(Error::config("model.m", "noise dimension must be at least 1"));
    }
    let mut field = SheetField::zeros(*grid, m);
    let z0 = sample_boundary_bm(grid.n_s, grid.ds, m, noise, 0)?;
    for i in 0..=grid.n_s {
        field.set_node(i, 0, z0.at(i));
    }
    let decay = (-0.5 * grid.dt).exp();
    let refresh = (-(-grid.dt).exp_m1()).sqrt();
    let mut src = noise.source(Stream::OuRefresh);
    let mut fresh = vec![0.0; grid.n_s * m];
    for j in 0..grid.n_t {
        src.fill_scaled((j * grid.n_s * m) as u64, grid.ds.sqrt(), &mut fresh);
        let mut b = vec![0.0; m];
        for i in 0..=grid.n_s {
            if i > 0 {
                for k in 0..m {
                    b[k] += fresh[(i - 1) * m + k];
                }
            }
            for k in 0..m {
                let prev = field.at(i, j, k);
                let idx = field.index(i, j + 1) + k;
                field.values[idx] = decay * prev + refresh * b[k];
            }
        }
    }
    Ok(field)
}

/// Lattice solution of `d_s d_t z = d_s d_t w − ½ d_s z dt` with `z_{0t} = 0`
/// and the supplied `z_{s0}`. The drift uses the s-increment on the cell's
/// lower edge:
///
/// ```text
/// z[i+1][j+1] = ((z[i+1][j] + z[i][j+1]) − z[i][j]) + (ΔΔw + (−½ Δ_s z)·dt)
/// ```
pub fn solve_ou_hyperbolic(grid: &Grid, z_boundary: &BoundaryPath, incs: &CellIncrements) -> Result<SheetField> {
    grid.validate()?;
    if incs.grid.n_s != grid.n_s || incs.grid.n_t != grid.n_t {
        return Err(Error::Shape("cell increments do not match the grid".into()));
    }
    let m = incs.m;
    if z_boundary.dim != m || z_boundary.len() != grid.n_s {
        return Err(Error::Shape(format!(
            "z boundary has {} steps of dim {}, expected {} of dim {}",
            z_boundary.len(),
            z_boundary.dim,
            grid.n_s,
            m
        )));
    }
    let mut z = SheetField::zeros(*grid, m);
    for i in 0..=grid.n_s {
        z.set_node(i, 0, z_boundary.at(i));
    }
    let dt = grid.dt;
    // rows are swept in s-major order, matching the general hyperbolic solver
    for i in 0..grid.n_s {
        for j in 0..grid.n_t {
            for k in 0..m {
                let x10 = z.at(i + 1, j, k);
                let x01 = z.at(i, j + 1, k);
                let x00 = z.at(i, j, k);
                let corner = (x10 + x01) - x00;
                let dsz = x10 - x00;
                let ddz = incs.get(i, j, k) + (-0.5 * dsz) * dt;
                let idx = z.index(i + 1, j + 1) + k;
                z.values[idx] = corner + ddz;
            }
        }
    }
    Ok(z)
}

/// OU sheet for one path via the lattice solver, with `z_{s0}` drawn from
/// boundary slot 0 and the sheet increments from the cell stream.
pub fn sample_ou_hyperbolic(grid: &Grid, noise: &NoiseSpec) -> Result<SheetField> {
    let incs = crate::lattice::sample_cell_increments(grid, noise)?;
    let z0 = sample_boundary_bm(grid.n_s, grid.ds, noise.m, noise, 0)?;
    solve_ou_hyperbolic(grid, &z0, &incs)
}
