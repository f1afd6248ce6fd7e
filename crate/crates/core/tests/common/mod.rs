#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use imfcs::energy::{GinzburgLandau1D, LandauBrazovskii2D, Model};
use imfcs::fields::{
    inner, laplacian, mass, norm, project_zero_mean, Boundary, Field, Grid, Metric,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn gl(kappa: f64) -> Model {
    GinzburgLandau1D::new(kappa).into()
}

pub fn lb() -> Model {
    LandauBrazovskii2D::default().into()
}

pub fn line(cells: usize, bc: Boundary) -> Arc<Grid> {
    Grid::line(cells, 1.0, bc).unwrap()
}

/// Two preferred wavelengths per side.
pub fn square(n: usize) -> Arc<Grid> {
    Grid::periodic_2d(n, n, 4.0 * PI, 4.0 * PI).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A few low Fourier modes with random coefficients; smooth enough that
/// finite differences behave.
pub fn smooth(grid: &Arc<Grid>, rng: &mut ChaCha8Rng, amp: f64) -> Field {
    let lx = grid.extent()[0];
    let ly = grid.extent().get(1).copied().unwrap_or(1.0);
    let two_d = grid.dim() == 2;
    let modes: Vec<(f64, f64, f64, f64)> = (0..6)
        .map(|_| {
            let kx = rng.gen_range(0..4) as f64;
            let ky = if two_d {
                rng.gen_range(0..4) as f64
            } else {
                0.0
            };
            (
                kx,
                ky,
                rng.gen_range(-1.0..1.0),
                rng.gen_range(0.0..2.0 * PI),
            )
        })
        .collect();
    let periodic = grid.bc() == Boundary::Periodic;
    let f = Field::from_fn(grid, |x, y| {
        modes
            .iter()
            .map(|&(kx, ky, c, ph)| {
                if periodic {
                    c * (2.0 * PI * (kx * x / lx + ky * y / ly) + ph).cos()
                } else {
                    c * (PI * kx * x / lx).cos()
                }
            })
            .sum()
    });
    let top = f.max_abs().max(1e-12);
    f.scaled(amp / top)
}

pub fn zero_mean_unit(metric: Metric, f: &Field) -> Field {
    let f = match metric {
        Metric::L2 => f.clone(),
        Metric::HMinus1 => project_zero_mean(f),
    };
    let n = norm(metric, &f).unwrap();
    f.scaled(1.0 / n)
}

pub fn with_mass(f: &Field, m: f64) -> Field {
    let shift = m - mass(f) / f.grid().volume();
    f.map(|v| v + shift)
}

pub fn l2(f: &Field, g: &Field) -> f64 {
    inner(Metric::L2, f, g).unwrap()
}

pub fn vec_of(f: &Field) -> DVector<f64> {
    DVector::from_column_slice(f.values())
}

pub fn field_of(grid: &Arc<Grid>, v: &DVector<f64>) -> Field {
    Field::new(grid.clone(), v.iter().copied().collect()).unwrap()
}

/// Dense matrix of a linear map on nodal values.
pub fn dense(grid: &Arc<Grid>, op: impl Fn(&Field) -> Field) -> DMatrix<f64> {
    let n = grid.len();
    let mut a = DMatrix::zeros(n, n);
    let mut e = Field::zeros(grid);
    for j in 0..n {
        e.values_mut()[j] = 1.0;
        a.set_column(j, &vec_of(&op(&e)));
        e.values_mut()[j] = 0.0;
    }
    a
}

/// Identity for L², `-Δ_h` for H⁻¹.
pub fn riesz_matrix(grid: &Arc<Grid>, metric: Metric) -> DMatrix<f64> {
    match metric {
        Metric::L2 => DMatrix::identity(grid.len(), grid.len()),
        Metric::HMinus1 => dense(grid, |e| laplacian(e).scaled(-1.0)),
    }
}

pub fn rel_diff(a: &Field, b: &Field) -> f64 {
    let d = a.sub(b).max_abs();
    d / b.max_abs().max(1e-300)
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}
