//! Discretization grid and the deterministic noise source.
//!
//! Every random quantity in the crate is addressed by an index tuple
//!
//! ```text
//! (seed, stream, path_index, element) -> N(0, 1)
//! ```
//!
//! The `(seed, stream)` pair keys a ChaCha8 block cipher, `path_index`
//! selects the cipher stream, and `element` selects the word position. A
//! deviate therefore does not depend on which other deviates were drawn or in
//! what order, which is what lets paired estimators share paths across
//! threads and across grid refinements.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rectangular lattice `{(i·ds, j·dt) : 0 ≤ i ≤ n_s, 0 ≤ j ≤ n_t}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub n_s: usize,
    pub n_t: usize,
    pub ds: f64,
    pub dt: f64,
}

impl Grid {
    pub fn new(n_s: usize, n_t: usize, ds: f64, dt: f64) -> Result<Self> {
        let grid = Grid { n_s, n_t, ds, dt };
        grid.validate()?;
        Ok(grid)
    }

    /// Grid with `n_s` cells of width `s_extent / n_s` and likewise in t.
    pub fn with_extents(n_s: usize, n_t: usize, s_extent: f64, t_extent: f64) -> Result<Self> {
        if n_s == 0 {
            return Err(Error::config("grid.n_s", "must be at least 1"));
        }
        if n_t == 0 {
            return Err(Error::config("grid.n_t", "must be at least 1"));
        }
        Grid::new(n_s, n_t, s_extent / n_s as f64, t_extent / n_t as f64)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_s == 0 {
            return Err(Error::config("grid.n_s", "must be at least 1"));
        }
        if self.n_t == 0 {
            return Err(Error::config("grid.n_t", "must be at least 1"));
        }
        if !(self.ds.is_finite() && self.ds > 0.0) {
            return Err(Error::config("grid.ds", format!("must be positive, got {}", self.ds)));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::config("grid.dt", format!("must be positive, got {}", self.dt)));
        }
        Ok(())
    }

    pub fn s(&self, i: usize) -> f64 {
        i as f64 * self.ds
    }

    pub fn t(&self, j: usize) -> f64 {
        j as f64 * self.dt
    }

    pub fn s_extent(&self) -> f64 {
        self.s(self.n_s)
    }

    pub fn t_extent(&self) -> f64 {
        self.t(self.n_t)
    }

    pub fn n_cells(&self) -> usize {
        self.n_s * self.n_t
    }

    pub fn n_nodes(&self) -> usize {
        (self.n_s + 1) * (self.n_t + 1)
    }

    pub fn transpose(&self) -> Grid {
        Grid {
            n_s: self.n_t,
            n_t: self.n_s,
            ds: self.dt,
            dt: self.ds,
        }
    }

    /// The grid obtained by merging `fs × ft` blocks of cells.
    pub fn coarsen(&self, fs: usize, ft: usize) -> Result<Grid> {
        if fs == 0 || !self.n_s.is_multiple_of(fs) {
            return Err(Error::config("grid.n_s", format!("not divisible by coarsening factor {fs}")));
        }
        if ft == 0 || !self.n_t.is_multiple_of(ft) {
            return Err(Error::config("grid.n_t", format!("not divisible by coarsening factor {ft}")));
        }
        Ok(Grid {
            n_s: self.n_s / fs,
            n_t: self.n_t / ft,
            ds: self.ds * fs as f64,
            dt: self.dt * ft as f64,
        })
    }
}

/// Disjoint regions of the counter space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    /// Cell increments of the sheet.
    Cells,
    /// Boundary Brownian motions; the slot separates x_{s0}, x_{0t}, z_{s0}, ...
    Boundary(u32),
    /// Fresh s-direction Brownian motions used by the exact OU sampler.
    OuRefresh,
    /// Probe points for derivative checks.
    Probe,
    /// Anything else a caller needs.
    Custom(u32),
}

impl Stream {
    fn code(self) -> u64 {
        match self {
            Stream::Cells => 1 << 32,
            Stream::Boundary(k) => (2 << 32) | k as u64,
            Stream::OuRefresh => 3 << 32,
            Stream::Probe => 4 << 32,
            Stream::Custom(k) => (5 << 32) | k as u64,
        }
    }
}

/// Identifies one Monte Carlo path's noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub seed: u64,
    pub path_index: u64,
    /// Noise dimension.
    pub m: usize,
}

impl NoiseSpec {
    pub fn new(seed: u64, path_index: u64, m: usize) -> Self {
        NoiseSpec { seed, path_index, m }
    }

    pub fn source(&self, stream: Stream) -> NormalSource {
        NormalSource::new(self.seed, stream, self.path_index)
    }
}

/// Index-addressed standard normal deviates.
///
/// Element `2k` and `2k + 1` are the cosine and sine outputs of one
/// Box–Muller transform applied to the two 64-bit words at pair position `k`.
#[derive(Clone)]
pub struct NormalSource {
    rng: ChaCha8Rng,
}

impl NormalSource {
    pub fn new(seed: u64, stream: Stream, path_index: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        key[8..16].copy_from_slice(&stream.code().to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(path_index);
        NormalSource { rng }
    }

    fn pair_at(&mut self, pair: u64) -> (f64, f64) {
        // each pair consumes two u64 = four u32 words
        self.rng.set_word_pos(pair as u128 * 4);
        self.next_pair()
    }

    fn next_pair(&mut self) -> (f64, f64) {
        let a = self.rng.next_u64();
        let b = self.rng.next_u64();
        // u1 in (0, 1], u2 in [0, 1)
        let u1 = ((a >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = (b >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        let r = (-2.0 * u1.ln()).sqrt();
        let (sin, cos) = (std::f64::consts::TAU * u2).sin_cos();
        (r * cos, r * sin)
    }

    /// The deviate at `element`.
    pub fn normal(&mut self, element: u64) -> f64 {
        let (c, s) = self.pair_at(element / 2);
        if element.is_multiple_of(2) {
            c
        } else {
            s
        }
    }

    /// Fills `out[k]` with `scale ·` deviate `start + k`. Equivalent to
    /// calling [`NormalSource::normal`] per element.
    pub fn fill_scaled(&mut self, start: u64, scale: f64, out: &mut [f64]) {
        if out.is_empty() {
            return;
        }
        let mut k = 0;
        let mut element = start;
        if element % 2 == 1 {
            out[0] = scale * self.normal(element);
            k = 1;
            element += 1;
        }
        if k < out.len() {
            self.rng.set_word_pos((element / 2) as u128 * 4);
        }
        while k + 1 < out.len() {
            let (c, s) = self.next_pair();
            out[k] = scale * c;
            out[k + 1] = scale * s;
            k += 2;
        }
        if k < out.len() {
            out[k] = scale * self.next_pair().0;
        }
    }
}

/// Per-cell double increments ΔΔw of an m-dimensional sheet.
///
/// Layout is t-line-major: entry `(i, j, k)` lives at `(j·n_s + i)·m + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellIncrements {
    pub grid: Grid,
    pub m: usize,
    pub values: Vec<f64>,
}

impl CellIncrements {
    pub fn zeros(grid: Grid, m: usize) -> Self {
        CellIncrements {
            grid,
            m,
            values: vec![0.0; grid.n_cells() * m],
        }
    }

    pub fn from_fn(grid: Grid, m: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut incs = CellIncrements::zeros(grid, m);
        for j in 0..grid.n_t {
            for i in 0..grid.n_s {
                for k in 0..m {
                    let idx = incs.index(i, j, k);
                    incs.values[idx] = f(i, j, k);
                }
            }
        }
        incs
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (j * self.grid.n_s + i) * self.m + k
    }

    #[inline]
    pub fn cell(&self, i: usize, j: usize) -> &[f64] {
        let start = self.index(i, j, 0);
        &self.values[start..start + self.m]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.index(i, j, k)]
    }

    pub fn scaled(&self, lambda: f64) -> Self {
        CellIncrements {
            grid: self.grid,
            m: self.m,
            values: self.values.iter().map(|v| lambda * v).collect(),
        }
    }

    /// Single noise component as a one-dimensional increment array.
    pub fn component(&self, k: usize) -> Self {
        CellIncrements {
            grid: self.grid,
            m: 1,
            values: self.values.iter().skip(k).step_by(self.m).copied().collect(),
        }
    }

    /// Increments of the sheet with s and t exchanged.
    pub fn transpose(&self) -> Self {
        let grid = self.grid.transpose();
        let m = self.m;
        let mut out = CellIncrements::zeros(grid, m);
        for j in 0..self.grid.n_t {
            for i in 0..self.grid.n_s {
                let dst = out.index(j, i, 0);
                out.values[dst..dst + m].copy_from_slice(self.cell(i, j));
            }
        }
        out
    }

    /// Increments of the same sheet on the grid with `fs × ft` merged cells.
    pub fn coarsen(&self, fs: usize, ft: usize) -> Result<Self> {
        let coarse = self.grid.coarsen(fs, ft)?;
        let mut out = CellIncrements::zeros(coarse, self.m);
        for j in 0..self.grid.n_t {
            for i in 0..self.grid.n_s {
                let dst = out.index(i / fs, j / ft, 0);
                let src = self.index(i, j, 0);
                for k in 0..self.m {
                    out.values[dst + k] += self.values[src + k];
                }
            }
        }
        Ok(out)
    }
}

/// Draws the `n_s × n_t × m` cell increments for one path. Each entry is
/// `√(ds·dt)` times the deviate addressed by its storage index.
pub fn sample_cell_increments(grid: &Grid, noise: &NoiseSpec) -> Result<CellIncrements> {
    grid.validate()?;
    if noise.m == 0 {
        return Err(Error::config("model.m", "noise dimension must be at least 1"));
    }
    let mut incs = CellIncrements::zeros(*grid, noise.m);
    let scale = (grid.ds * grid.dt).sqrt();
    noise.source(Stream::Cells).fill_scaled(0, scale, &mut incs.values);
    Ok(incs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryKind {
    Brownian,
    Deterministic,
    Zero,
}

/// A path on one axis, `(n + 1) × dim` values spaced `step` apart.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryPath {
    pub values: Vec<f64>,
    pub dim: usize,
    pub step: f64,
    pub kind: BoundaryKind,
}

impl BoundaryPath {
    pub fn zero(n: usize, step: f64, dim: usize) -> Self {
        BoundaryPath {
            values: vec![0.0; (n + 1) * dim],
            dim,
            step,
            kind: BoundaryKind::Zero,
        }
    }

    /// Deterministic path `k ↦ f(k·step)`.
    pub fn deterministic(n: usize, step: f64, dim: usize, f: impl Fn(f64) -> Vec<f64>) -> Self {
        let mut values = Vec::with_capacity((n + 1) * dim);
        for k in 0..=n {
            let v = f(k as f64 * step);
            assert_eq!(v.len(), dim, "boundary function returned wrong dimension");
            values.extend_from_slice(&v);
        }
        BoundaryPath {
            values,
            dim,
            step,
            kind: BoundaryKind::Deterministic,
        }
    }

    /// Constant path equal to `value`.
    pub fn constant(n: usize, step: f64, value: &[f64]) -> Self {
        let v = value.to_vec();
        BoundaryPath::deterministic(n, step, value.len(), move |_| v.clone())
    }

    /// Number of steps.
    pub fn len(&self) -> usize {
        self.values.len() / self.dim.max(1) - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn at(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    /// Shifts the path so that it starts at `origin`.
    pub fn offset(mut self, origin: &[f64]) -> Self {
        assert_eq!(origin.len(), self.dim);
        for chunk in self.values.chunks_mut(self.dim) {
            for (v, o) in chunk.iter_mut().zip(origin) {
                *v += o;
            }
        }
        self
    }

    /// Every `factor`-th node.
    pub fn subsample(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.len().is_multiple_of(factor) {
            return Err(Error::config(
                "grid",
                format!("boundary of {} steps not divisible by {factor}", self.len()),
            ));
        }
        let values = (0..=self.len() / factor)
            .flat_map(|k| self.at(k * factor).to_vec())
            .collect();
        Ok(BoundaryPath {
            values,
            dim: self.dim,
            step: self.step * factor as f64,
            kind: self.kind,
        })
    }
}

/// Brownian motion from 0 with `n` steps of variance `step` per component,
/// drawn from `Stream::Boundary(slot)` so it is independent of the cell
/// increments of the same path.
pub fn sample_boundary_bm(
    n: usize,
    step: f64,
    dim: usize,
    noise: &NoiseSpec,
    slot: u32,
) -> Result<BoundaryPath> {
    if n == 0 {
        return Err(Error::config("boundary.n", "must be at least 1"));
    }
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::config("boundary.step", format!("must be positive, got {step}")));
    }
    let mut values = vec![0.0; (n + 1) * dim];
    noise
        .source(Stream::Boundary(slot))
        .fill_scaled(0, step.sqrt(), &mut values[dim..]);
    for k in 1..=n {
        for c in 0..dim {
            values[k * dim + c] += values[(k - 1) * dim + c];
        }
    }
    Ok(BoundaryPath {
        values,
        dim,
        step,
        kind: BoundaryKind::Brownian,
    })
}
