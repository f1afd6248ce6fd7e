//! Diagonalization of the discrete Laplacian.
//!
//! Periodic axes use the discrete Fourier basis, the Neumann line uses the
//! type-I cosine basis (computed as an FFT of the even extension). Both bases
//! are eigenbases of the second-order stencil, so any operator that is a
//! function of `-Δ_h` is applied exactly by multiplying transform
//! coefficients.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::Boundary;

#[derive(Clone)]
pub(crate) struct Spectral {
    kind: Kind,
    /// Eigenvalues of `-Δ_h`, one per transform mode.
    eigenvalues: Vec<f64>,
}

#[derive(Clone)]
enum Kind {
    Periodic1 {
        n: usize,
        forward: Arc<dyn Fft<f64>>,
        inverse: Arc<dyn Fft<f64>>,
    },
    Periodic2 {
        nx: usize,
        ny: usize,
        fx: Arc<dyn Fft<f64>>,
        ix: Arc<dyn Fft<f64>>,
        fy: Arc<dyn Fft<f64>>,
        iy: Arc<dyn Fft<f64>>,
    },
    /// Cosine transform on `n + 1` nodes via a length-`2n` FFT.
    Neumann { n: usize, fft: Arc<dyn Fft<f64>> },
}

impl fmt::Debug for Spectral {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            Kind::Periodic1 { n, .. } => format!("fourier({n})"),
            Kind::Periodic2 { nx, ny, .. } => format!("fourier({nx}x{ny})"),
            Kind::Neumann { n, .. } => format!("cosine({})", n + 1),
        };
        f.debug_struct("Spectral").field("kind", &kind).finish()
    }
}

fn periodic_symbol(n: usize, h: f64) -> Vec<f64> {
    (0..n)
        .map(|j| {
            let s = (PI * j as f64 / n as f64).sin();
            4.0 * s * s / (h * h)
        })
        .collect()
}

impl Spectral {
    pub(crate) fn line(n: usize, h: f64, bc: Boundary) -> Self {
        let mut planner = FftPlanner::new();
        match bc {
            Boundary::Periodic => Spectral {
                kind: Kind::Periodic1 {
                    n,
                    forward: planner.plan_fft_forward(n),
                    inverse: planner.plan_fft_inverse(n),
                },
                eigenvalues: periodic_symbol(n, h),
            },
            Boundary::Neumann => {
                let eigenvalues = (0..=n)
                    .map(|j| {
                        let s = (PI * j as f64 / (2 * n) as f64).sin();
                        4.0 * s * s / (h * h)
                    })
                    .collect();
                Spectral {
                    kind: Kind::Neumann {
                        n,
                        fft: planner.plan_fft_forward(2 * n),
                    },
                    eigenvalues,
                }
            }
        }
    }

    pub(crate) fn periodic_2d(nx: usize, ny: usize, hx: f64, hy: f64) -> Self {
        let mut planner = FftPlanner::new();
        let sx = periodic_symbol(nx, hx);
        let sy = periodic_symbol(ny, hy);
        let mut eigenvalues = Vec::with_capacity(nx * ny);
        for my in &sy {
            for mx in &sx {
                eigenvalues.push(mx + my);
            }
        }
        Spectral {
            kind: Kind::Periodic2 {
                nx,
                ny,
                fx: planner.plan_fft_forward(nx),
                ix: planner.plan_fft_inverse(nx),
                fy: planner.plan_fft_forward(ny),
                iy: planner.plan_fft_inverse(ny),
            },
            eigenvalues,
        }
    }

    pub(crate) fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Applies the operator whose eigenvalue on mode `j` is `multipliers[j]`.
    /// Multipliers must depend on the mode only through its Laplacian
    /// eigenvalue so that the periodic result stays real.
    pub(crate) fn apply(&self, values: &[f64], multipliers: &[f64]) -> Vec<f64> {
        debug_assert_eq!(multipliers.len(), self.eigenvalues.len());
        match &self.kind {
            Kind::Periodic1 {
                n,
                forward,
                inverse,
            } => {
                let mut buf: Vec<Complex64> =
                    values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
                forward.process(&mut buf);
                for (c, m) in buf.iter_mut().zip(multipliers) {
                    *c *= m;
                }
                inverse.process(&mut buf);
                let scale = 1.0 / *n as f64;
                buf.iter().map(|c| c.re * scale).collect()
            }
            Kind::Periodic2 {
                nx,
                ny,
                fx,
                ix,
                fy,
                iy,
            } => {
                let (nx, ny) = (*nx, *ny);
                let mut buf: Vec<Complex64> =
                    values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
                fx.process(&mut buf);
                let mut cols = transpose(&buf, nx, ny);
                fy.process(&mut cols);
                // cols is laid out as [ix][iy]
                for i in 0..nx {
                    for j in 0..ny {
                        cols[i * ny + j] *= multipliers[j * nx + i];
                    }
                }
                iy.process(&mut cols);
                let mut rows = transpose(&cols, ny, nx);
                ix.process(&mut rows);
                let scale = 1.0 / (nx * ny) as f64;
                rows.iter().map(|c| c.re * scale).collect()
            }
            Kind::Neumann { n, fft } => {
                let n = *n;
                let mut coeffs = cosine_transform(values, n, fft.as_ref());
                for (c, m) in coeffs.iter_mut().zip(multipliers) {
                    *c *= m;
                }
                let scale = 1.0 / (2 * n) as f64;
                cosine_transform(&coeffs, n, fft.as_ref())
                    .into_iter()
                    .map(|v| v * scale)
                    .collect()
            }
        }
    }
}

/// Type-I DCT, `Y_j = f_0 + (-1)^j f_n + 2 Σ_{k=1}^{n-1} f_k cos(π j k / n)`.
/// Applying it twice returns `2n` times the input.
fn cosine_transform(values: &[f64], n: usize, fft: &dyn Fft<f64>) -> Vec<f64> {
    let mut buf = vec![Complex64::new(0.0, 0.0); 2 * n];
    for (k, &v) in values.iter().enumerate() {
        buf[k].re = v;
        if k > 0 && k < n {
            buf[2 * n - k].re = v;
        }
    }
    fft.process(&mut buf);
    buf[..=n].iter().map(|c| c.re).collect()
}

/// `src` holds `rows` rows of length `len`; returns `len` rows of length `rows`.
fn transpose(src: &[Complex64], len: usize, rows: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); src.len()];
    for r in 0..rows {
        for c in 0..len {
            out[c * rows + r] = src[r * len + c];
        }
    }
    out
}
