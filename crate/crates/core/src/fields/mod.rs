//! Grids, fields and the discrete operators everything else is built on.
//!
//! A [`Grid`] is a uniform tensor grid in one or two dimensions. Periodic
//! axes store `n` nodes `x_0 … x_{n-1}`; the Neumann line stores `n + 1`
//! nodes `x_0 … x_n`. The spacing is always `extent / n`.
//!
//! Quadrature is the rectangle rule on periodic grids and the trapezoid rule
//! on Neumann grids. With these weights the second-order Laplacian stencil
//! (mirror ghost nodes on Neumann boundaries) is self-adjoint, so discrete
//! summation by parts holds exactly.

mod io;
mod spectral;

use std::f64::consts::PI;
use std::sync::Arc;

pub use io::{load_field, read_field, save_field, write_field};
use spectral::Spectral;

use crate::error::{Error, Result};

/// Relative tolerance for the zero-mean precondition of H⁻¹ operations.
pub const ZERO_MEAN_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Boundary {
    Neumann,
    Periodic,
}

impl Boundary {
    pub fn as_str(self) -> &'static str {
        match self {
            Boundary::Neumann => "neumann",
            Boundary::Periodic => "periodic",
        }
    }
}

impl std::str::FromStr for Boundary {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "neumann" => Ok(Boundary::Neumann),
            "periodic" => Ok(Boundary::Periodic),
            other => Err(format!("unknown boundary condition `{other}`")),
        }
    }
}

#[derive(Debug)]
pub struct Grid {
    dim: usize,
    cells: [usize; 2],
    extent: [f64; 2],
    bc: Boundary,
    spectral: Spectral,
}

impl Grid {
    /// One-dimensional grid on `[0, extent]` with `cells` intervals.
    pub fn line(cells: usize, extent: f64, bc: Boundary) -> Result<Arc<Grid>> {
        if cells < 4 {
            return Err(Error::InvalidGrid(format!(
                "need at least 4 cells, got {cells}"
            )));
        }
        if !(extent > 0.0 && extent.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "extent must be positive, got {extent}"
            )));
        }
        let h = extent / cells as f64;
        Ok(Arc::new(Grid {
            dim: 1,
            cells: [cells, 1],
            extent: [extent, 1.0],
            bc,
            spectral: Spectral::line(cells, h, bc),
        }))
    }

    /// Doubly periodic grid on `[0, lx] × [0, ly]`.
    pub fn periodic_2d(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Arc<Grid>> {
        if nx < 4 || ny < 4 {
            return Err(Error::InvalidGrid(format!(
                "need at least 4 cells per axis, got {nx}x{ny}"
            )));
        }
        if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "extents must be positive, got {lx}x{ly}"
            )));
        }
        Ok(Arc::new(Grid {
            dim: 2,
            cells: [nx, ny],
            extent: [lx, ly],
            bc: Boundary::Periodic,
            spectral: Spectral::periodic_2d(nx, ny, lx / nx as f64, ly / ny as f64),
        }))
    }

    /// Generic constructor used by the file and config readers.
    pub fn new(cells: &[usize], extent: &[f64], bc: Boundary) -> Result<Arc<Grid>> {
        match (cells, extent, bc) {
            ([n], [l], _) => Grid::line(*n, *l, bc),
            ([nx, ny], [lx, ly], Boundary::Periodic) => Grid::periodic_2d(*nx, *ny, *lx, *ly),
            ([_, _], [_, _], Boundary::Neumann) => Err(Error::InvalidGrid(
                "two-dimensional grids must be periodic".into(),
            )),
            _ => Err(Error::InvalidGrid(format!(
                "dimension mismatch: {} cell counts, {} extents",
                cells.len(),
                extent.len()
            ))),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bc(&self) -> Boundary {
        self.bc
    }

    /// Number of intervals per axis (`dim` entries).
    pub fn cells(&self) -> &[usize] {
        &self.cells[..self.dim]
    }

    pub fn extent(&self) -> &[f64] {
        &self.extent[..self.dim]
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.extent[axis] / self.cells[axis] as f64
    }

    /// Nodes along `axis`.
    pub fn axis_len(&self, axis: usize) -> usize {
        match self.bc {
            Boundary::Neumann => self.cells[axis] + 1,
            Boundary::Periodic => self.cells[axis],
        }
    }

    pub fn len(&self) -> usize {
        (0..self.dim).map(|a| self.axis_len(a)).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Domain length (1-D) or area (2-D).
    pub fn volume(&self) -> f64 {
        self.extent().iter().product()
    }

    /// Coordinates of node `i` along `axis`.
    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        i as f64 * self.spacing(axis)
    }

    /// Coordinates `(x, y)` of every node in storage order (`y = 0` in 1-D).
    pub fn nodes(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let nx = self.axis_len(0);
        (0..self.len()).map(move |k| {
            let (i, j) = (k % nx, k / nx);
            let y = if self.dim == 2 { self.coord(1, j) } else { 0.0 };
            (self.coord(0, i), y)
        })
    }

    /// Quadrature weight of node `k`.
    pub fn weight(&self, k: usize) -> f64 {
        match self.bc {
            Boundary::Periodic => (0..self.dim).map(|a| self.spacing(a)).product(),
            Boundary::Neumann => {
                let h = self.spacing(0);
                if k == 0 || k == self.cells[0] {
                    0.5 * h
                } else {
                    h
                }
            }
        }
    }

    pub fn same_as(&self, other: &Grid) -> bool {
        std::ptr::eq(self, other)
            || (self.dim == other.dim
                && self.cells == other.cells
                && self.extent == other.extent
                && self.bc == other.bc)
    }

    /// Eigenvalues of `-Δ_h` in transform order; entry 0 is the constant mode.
    pub fn laplacian_eigenvalues(&self) -> &[f64] {
        self.spectral.eigenvalues()
    }

    /// Applies the operator `g(-Δ_h)` given its per-mode multipliers.
    pub fn apply_spectral(&self, values: &[f64], multipliers: &[f64]) -> Vec<f64> {
        self.spectral.apply(values, multipliers)
    }

    /// Multipliers `g(μ)` for every mode.
    pub fn symbol(&self, g: impl Fn(f64) -> f64) -> Vec<f64> {
        self.laplacian_eigenvalues()
            .iter()
            .map(|&mu| g(mu))
            .collect()
    }
}

/// A discrete scalar function on a [`Grid`].
#[derive(Clone, Debug)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl PartialEq for Field {
    fn eq(&self, other: &Self) -> bool {
        self.grid.same_as(&other.grid) && self.values == other.values
    }
}

impl Field {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Field> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        Ok(Field { grid, values })
    }

    pub fn zeros(grid: &Arc<Grid>) -> Field {
        Field::constant(grid, 0.0)
    }

    pub fn constant(grid: &Arc<Grid>, c: f64) -> Field {
        Field {
            grid: grid.clone(),
            values: vec![c; grid.len()],
        }
    }

    /// Samples `f(x, y)` at every node (`y = 0` in 1-D).
    pub fn from_fn(grid: &Arc<Grid>, mut f: impl FnMut(f64, f64) -> f64) -> Field {
        let values = grid.nodes().map(|(x, y)| f(x, y)).collect();
        Field {
            grid: grid.clone(),
            values,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub(crate) fn with_values(&self, values: Vec<f64>) -> Field {
        debug_assert_eq!(values.len(), self.values.len());
        Field {
            grid: self.grid.clone(),
            values,
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        self.with_values(self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        debug_assert!(self.grid.same_as(&other.grid));
        self.with_values(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    /// `self += a * x`
    pub fn axpy(&mut self, a: f64, x: &Field) {
        debug_assert!(self.grid.same_as(&x.grid));
        for (s, v) in self.values.iter_mut().zip(&x.values) {
            *s += a * v;
        }
    }

    pub fn scale(&mut self, a: f64) {
        self.values.iter_mut().for_each(|v| *v *= a);
    }

    pub fn scaled(&self, a: f64) -> Field {
        self.map(|v| a * v)
    }

    pub fn add(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    fn check_same_grid(&self, other: &Field) -> Result<()> {
        if self.grid.same_as(&other.grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

/// Inner-product context for gradient flows and eigenproblems.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    L2,
    /// `⟨f, g⟩ = ⟨(-Δ)⁻¹ f, g⟩_{L²}`, defined on zero-mean fields only.
    HMinus1,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::L2 => "l2",
            Metric::HMinus1 => "hm1",
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "l2" => Ok(Metric::L2),
            "hm1" | "h-1" | "hminus1" => Ok(Metric::HMinus1),
            other => Err(format!("unknown metric `{other}`")),
        }
    }
}

/// Second-order centered Laplacian; mirror ghosts on Neumann ends,
/// wraparound on periodic axes.
pub fn laplacian(f: &Field) -> Field {
    let g = f.grid();
    let v = f.values();
    let mut out = vec![0.0; v.len()];
    match (g.dim(), g.bc()) {
        (1, Boundary::Neumann) => {
            let n = g.cells()[0];
            let ih2 = 1.0 / (g.spacing(0) * g.spacing(0));
            out[0] = 2.0 * (v[1] - v[0]) * ih2;
            for i in 1..n {
                out[i] = (v[i - 1] - 2.0 * v[i] + v[i + 1]) * ih2;
            }
            out[n] = 2.0 * (v[n - 1] - v[n]) * ih2;
        }
        (1, Boundary::Periodic) => {
            let n = g.cells()[0];
            let ih2 = 1.0 / (g.spacing(0) * g.spacing(0));
            for i in 0..n {
                let l = v[(i + n - 1) % n];
                let r = v[(i + 1) % n];
                out[i] = (l - 2.0 * v[i] + r) * ih2;
            }
        }
        _ => {
            let (nx, ny) = (g.cells()[0], g.cells()[1]);
            let ihx = 1.0 / (g.spacing(0) * g.spacing(0));
            let ihy = 1.0 / (g.spacing(1) * g.spacing(1));
            for j in 0..ny {
                let up = ((j + 1) % ny) * nx;
                let dn = ((j + ny - 1) % ny) * nx;
                let row = j * nx;
                for i in 0..nx {
                    let c = v[row + i];
                    let l = v[row + (i + nx - 1) % nx];
                    let r = v[row + (i + 1) % nx];
                    out[row + i] =
                        (l - 2.0 * c + r) * ihx + (v[dn + i] - 2.0 * c + v[up + i]) * ihy;
                }
            }
        }
    }
    f.with_values(out)
}

/// `(Δ + 1)² f`, periodic grids only.
pub fn helmholtz_sq(f: &Field) -> Result<Field> {
    if f.grid().bc() != Boundary::Periodic {
        return Err(Error::Unsupported(
            "(Δ+1)² is only provided on periodic grids".into(),
        ));
    }
    let once = laplacian(f).add(f);
    Ok(laplacian(&once).add(&once))
}

/// Centered first difference along `axis` (periodic wraparound, one-sided
/// zero at Neumann ends consistent with the mirror ghost).
pub fn derivative(f: &Field, axis: usize) -> Field {
    let g = f.grid();
    let v = f.values();
    let h = g.spacing(axis);
    let nx = g.axis_len(0);
    let n_axis = g.axis_len(axis);
    let stride = if axis == 0 { 1 } else { nx };
    let periodic = g.bc() == Boundary::Periodic;
    let out = (0..v.len())
        .map(|k| {
            let i = if axis == 0 { k % nx } else { k / nx };
            let base = k - i * stride;
            let at = |m: usize| v[base + m * stride];
            if periodic {
                (at((i + 1) % n_axis) - at((i + n_axis - 1) % n_axis)) / (2.0 * h)
            } else if i == 0 || i == n_axis - 1 {
                0.0
            } else {
                (at(i + 1) - at(i - 1)) / (2.0 * h)
            }
        })
        .collect();
    f.with_values(out)
}

/// Quadrature of `f`.
pub fn mass(f: &Field) -> f64 {
    let g = f.grid();
    match g.bc() {
        Boundary::Periodic => g.weight(0) * f.values().iter().sum::<f64>(),
        Boundary::Neumann => f
            .values()
            .iter()
            .enumerate()
            .map(|(k, v)| g.weight(k) * v)
            .sum(),
    }
}

/// Subtracts the mean so that the result has zero mass.
pub fn project_zero_mean(f: &Field) -> Field {
    let mean = mass(f) / f.grid().volume();
    f.map(|v| v - mean)
}

fn l2_unchecked(f: &[f64], g: &[f64], grid: &Grid) -> f64 {
    match grid.bc() {
        Boundary::Periodic => grid.weight(0) * f.iter().zip(g).map(|(a, b)| a * b).sum::<f64>(),
        Boundary::Neumann => f
            .iter()
            .zip(g)
            .enumerate()
            .map(|(k, (a, b))| grid.weight(k) * a * b)
            .sum(),
    }
}

/// Quadrature inner product without the grid check.
pub(crate) fn dot(f: &Field, g: &Field) -> f64 {
    l2_unchecked(f.values(), g.values(), f.grid())
}

fn check_zero_mean(f: &Field) -> Result<()> {
    let grid = f.grid();
    let m = mass(f);
    let scale = dot(f, f).sqrt() * grid.volume().sqrt();
    if m.abs() > ZERO_MEAN_TOL * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::NonZeroMean {
            mean: m / grid.volume(),
        });
    }
    Ok(())
}

/// Solves `-Δ_h w = f` with `mass(w) = 0`.
pub fn inv_neg_laplacian_zero_mean(f: &Field) -> Result<Field> {
    check_zero_mean(f)?;
    Ok(inv_neg_laplacian_unchecked(f))
}

/// Spectral inverse with the constant mode pinned to zero; the mean of the
/// input is ignored.
pub(crate) fn inv_neg_laplacian_unchecked(f: &Field) -> Field {
    let g = f.grid();
    let mult: Vec<f64> = g
        .laplacian_eigenvalues()
        .iter()
        .enumerate()
        .map(|(j, &mu)| if j == 0 { 0.0 } else { 1.0 / mu })
        .collect();
    f.with_values(g.apply_spectral(f.values(), &mult))
}

pub fn inner(metric: Metric, f: &Field, g: &Field) -> Result<f64> {
    f.check_same_grid(g)?;
    match metric {
        Metric::L2 => Ok(dot(f, g)),
        Metric::HMinus1 => {
            check_zero_mean(g)?;
            let w = inv_neg_laplacian_zero_mean(f)?;
            Ok(dot(&w, g))
        }
    }
}

pub fn norm(metric: Metric, f: &Field) -> Result<f64> {
    Ok(inner(metric, f, f)?.max(0.0).sqrt())
}

/// Metric inner product that skips the zero-mean check; callers guarantee
/// the constraint.
pub(crate) fn inner_unchecked(metric: Metric, f: &Field, g: &Field) -> f64 {
    match metric {
        Metric::L2 => dot(f, g),
        Metric::HMinus1 => dot(&inv_neg_laplacian_unchecked(f), g),
    }
}

/// The Riesz map from an L² derivative to the metric gradient:
/// identity for L², `-Δ_h` for H⁻¹.
pub(crate) fn riesz(metric: Metric, g: &Field) -> Field {
    match metric {
        Metric::L2 => g.clone(),
        Metric::HMinus1 => laplacian(g).scaled(-1.0),
    }
}

/// Metric norm of the gradient whose L² representative is `g`:
/// `‖g‖_{L²}` or `‖-Δ g‖_{H⁻¹} = ⟨g, -Δ g⟩^{1/2}`.
pub fn gradient_norm(metric: Metric, g: &Field) -> f64 {
    match metric {
        Metric::L2 => dot(g, g).sqrt(),
        Metric::HMinus1 => (-dot(g, &laplacian(g))).max(0.0).sqrt(),
    }
}

/// Standard starting profiles.
pub fn cos_pi_x(grid: &Arc<Grid>) -> Field {
    let l = grid.extent()[0];
    Field::from_fn(grid, |x, _| (PI * x / l).cos())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rand_field(grid: &Arc<Grid>, seed: u64) -> Field {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Field::from_fn(grid, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn rand_field_seq(grid: &Arc<Grid>, seed: u64) -> Field {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let values = (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Field::new(grid.clone(), values).unwrap()
    }

    fn grids() -> Vec<Arc<Grid>> {
        vec![
            Grid::line(32, 1.0, Boundary::Neumann).unwrap(),
            Grid::line(32, 1.0, Boundary::Periodic).unwrap(),
            Grid::periodic_2d(12, 10, 3.0, 2.0).unwrap(),
        ]
    }

    #[test]
    fn node_counts() {
        assert_eq!(Grid::line(10, 1.0, Boundary::Neumann).unwrap().len(), 11);
        assert_eq!(Grid::line(10, 1.0, Boundary::Periodic).unwrap().len(), 10);
        assert_eq!(Grid::periodic_2d(8, 6, 1.0, 1.0).unwrap().len(), 48);
        assert!(Grid::new(&[8, 8], &[1.0, 1.0], Boundary::Neumann).is_err());
    }

    #[test]
    fn laplacian_of_constant_vanishes() {
        let g = Grid::line(16, 1.0, Boundary::Periodic).unwrap();
        let lap = laplacian(&Field::constant(&g, 1.0));
        assert!(lap.values().iter().all(|&v| v == 0.0));
        for g in grids() {
            assert!(laplacian(&Field::constant(&g, 2.5)).max_abs() < 1e-9);
        }
    }

    #[test]
    fn laplacian_matches_analytic_second_derivative() {
        let n = 200;
        let g = Grid::line(n, 1.0, Boundary::Periodic).unwrap();
        let h = 1.0 / n as f64;
        let k = 2.0 * PI;
        let f = Field::from_fn(&g, |x, _| (k * x).sin());
        let err = laplacian(&f)
            .zip_map(&f, |l, s| (l + k * k * s).abs())
            .max_abs();
        assert!(err <= k.powi(4) * h * h / 12.0, "err {err}");

        let g = Grid::line(n, 1.0, Boundary::Neumann).unwrap();
        let k = PI;
        let f = Field::from_fn(&g, |x, _| (k * x).cos());
        let err = laplacian(&f)
            .zip_map(&f, |l, s| (l + k * k * s).abs())
            .max_abs();
        assert!(err <= k.powi(4) * h * h / 12.0, "err {err}");
    }

    #[test]
    fn helmholtz_square() {
        let g = Grid::periodic_2d(16, 16, 2.0 * PI * 2.0, 2.0 * PI).unwrap();
        let c = Field::constant(&g, 0.7);
        let out = helmholtz_sq(&c).unwrap();
        assert!(out.sub(&c).max_abs() < 1e-12);

        // cos(x) with |k| = 1: discrete symbol (1 - μ_h)²
        let f = Field::from_fn(&g, |x, _| x.cos());
        let hx = g.spacing(0);
        let mu = 4.0 * (hx / 2.0).sin().powi(2) / (hx * hx);
        let out = helmholtz_sq(&f).unwrap();
        let expect = f.scaled((1.0 - mu).powi(2));
        assert!(out.sub(&expect).max_abs() < 1e-10);
        assert!(out.max_abs() < 0.02);

        let r = rand_field_seq(&g, 3);
        let twice = {
            let a = laplacian(&r).add(&r);
            laplacian(&a).add(&a)
        };
        assert_eq!(helmholtz_sq(&r).unwrap(), twice);

        let line = Grid::line(16, 1.0, Boundary::Neumann).unwrap();
        assert!(helmholtz_sq(&Field::zeros(&line)).is_err());
    }

    #[test]
    fn inverse_laplacian() {
        let g = Grid::line(64, 1.0, Boundary::Periodic).unwrap();
        let z = inv_neg_laplacian_zero_mean(&Field::zeros(&g)).unwrap();
        assert_eq!(z.max_abs(), 0.0);

        let f = Field::from_fn(&g, |x, _| (2.0 * PI * x).sin());
        let w = inv_neg_laplacian_zero_mean(&f).unwrap();
        let mu = g.laplacian_eigenvalues()[1];
        assert!(w.sub(&f.scaled(1.0 / mu)).max_abs() < 1e-13);
        assert!((mu - 4.0 * PI * PI).abs() / mu < 1e-3);

        let bad = Field::constant(&g, 0.3);
        match inv_neg_laplacian_zero_mean(&bad) {
            Err(Error::NonZeroMean { mean }) => assert!((mean - 0.3).abs() < 1e-12),
            other => panic!("expected NonZeroMean, got {other:?}"),
        }

        for g in grids() {
            let f = project_zero_mean(&rand_field(&g, 7));
            let w = inv_neg_laplacian_zero_mean(&f).unwrap();
            assert!(mass(&w).abs() < 1e-12);
            let back = laplacian(&w).scaled(-1.0);
            let rel = back.sub(&f).max_abs() / f.max_abs();
            assert!(rel < 1e-10, "{rel}");
        }
    }

    #[test]
    fn inner_products() {
        let g = Grid::line(200, 1.0, Boundary::Neumann).unwrap();
        let one = Field::constant(&g, 1.0);
        assert!((inner(Metric::L2, &one, &one).unwrap() - 1.0).abs() < 1e-14);

        let s = Field::from_fn(&g, |x, _| (2.0 * PI * x).sin());
        let h = g.spacing(0);
        assert!((inner(Metric::L2, &s, &s).unwrap() - 0.5).abs() < h * h);

        let gp = Grid::line(200, 1.0, Boundary::Periodic).unwrap();
        let s = Field::from_fn(&gp, |x, _| (2.0 * PI * x).sin());
        let mu = gp.laplacian_eigenvalues()[1];
        let hm1 = inner(Metric::HMinus1, &s, &s).unwrap();
        assert!((hm1 - 0.5 / mu).abs() < 1e-14);
        assert!((hm1 * 8.0 * PI * PI - 1.0).abs() < 1e-4);

        let other = Grid::line(100, 1.0, Boundary::Periodic).unwrap();
        assert!(matches!(
            inner(Metric::L2, &s, &Field::zeros(&other)),
            Err(Error::GridMismatch)
        ));
        assert!(inner(Metric::HMinus1, &one, &one).is_err());
    }

    #[test]
    fn mass_and_projection() {
        let g = Grid::line(50, 1.0, Boundary::Neumann).unwrap();
        let c = Field::constant(&g, 0.6);
        assert!((mass(&c) - 0.6).abs() < 1e-14);
        assert!(project_zero_mean(&c).max_abs() < 1e-15);
        for g in grids() {
            let p = project_zero_mean(&rand_field(&g, 11));
            assert!(mass(&p).abs() < 1e-14);
        }
    }

    #[test]
    fn operator_properties() {
        for (i, g) in grids().into_iter().enumerate() {
            let f = rand_field(&g, 100 + i as u64);
            let h = rand_field(&g, 200 + i as u64);
            // symmetry
            assert_eq!(
                inner(Metric::L2, &f, &h).unwrap(),
                inner(Metric::L2, &h, &f).unwrap()
            );
            let (fz, hz) = (project_zero_mean(&f), project_zero_mean(&h));
            let a = inner(Metric::HMinus1, &fz, &hz).unwrap();
            let b = inner(Metric::HMinus1, &hz, &fz).unwrap();
            assert!((a - b).abs() <= 1e-12 * a.abs().max(b.abs()));
            // positivity
            assert!(inner(Metric::L2, &f, &f).unwrap() > 0.0);
            assert!(inner(Metric::HMinus1, &fz, &fz).unwrap() > 0.0);
            // self-adjointness of Δ_h
            let lhs = inner(Metric::L2, &laplacian(&f), &h).unwrap();
            let rhs = inner(Metric::L2, &f, &laplacian(&h)).unwrap();
            assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(rhs.abs()));
            // discrete conservation
            let scale = laplacian(&f).max_abs() * g.volume();
            assert!(mass(&laplacian(&f)).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn spectral_symbol_matches_stencil() {
        for g in grids() {
            let f = rand_field(&g, 5);
            let neg = g.symbol(|mu| -mu);
            let spec = g.apply_spectral(f.values(), &neg);
            let lap = laplacian(&f);
            let err = lap
                .values()
                .iter()
                .zip(&spec)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(err <= 1e-10 * lap.max_abs(), "{err}");
        }
    }

    #[test]
    fn centered_derivative() {
        let g = Grid::line(100, 1.0, Boundary::Periodic).unwrap();
        let f = Field::from_fn(&g, |x, _| (2.0 * PI * x).sin());
        let d = derivative(&f, 0);
        let err = d
            .zip_map(
                &Field::from_fn(&g, |x, _| 2.0 * PI * (2.0 * PI * x).cos()),
                |a, b| a - b,
            )
            .max_abs();
        assert!(err < 1e-2);
        let g2 = Grid::periodic_2d(16, 20, 1.0, 1.0).unwrap();
        let f = Field::from_fn(&g2, |_, y| (2.0 * PI * y).sin());
        assert!(derivative(&f, 0).max_abs() < 1e-12);
        assert!(derivative(&f, 1).max_abs() > 1.0);
    }
}
