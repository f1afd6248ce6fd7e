//! Energy functionals and their convex splittings.
//!
//! Every functional handled here has the shape
//!
//! ```text
//! E(φ) = ½ ⟨φ, K φ⟩ + ∫ p(φ),   K = c₀ + c₁(-Δ) + c₂Δ²,   deg p ≤ 4
//! ```
//!
//! which covers the Ginzburg–Landau and Landau–Brazovskii energies as well as
//! each half of their convex splittings. The quadratic part is diagonal in the
//! transform basis of the grid, which is what lets the convex-splitting
//! steppers solve their implicit systems exactly.

use crate::error::{Error, Result};
use crate::fields::{dot, laplacian, Boundary, Field, Grid};

const THIRD_FACTORIAL: f64 = 6.0;
const FOURTH_FACTORIAL: f64 = 24.0;

/// Constant-coefficient operator `c₀ + c₁(-Δ_h) + c₂Δ_h²`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Quadratic {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Quadratic {
    /// Multiplier on a mode where `-Δ_h` has eigenvalue `mu`.
    pub fn symbol(&self, mu: f64) -> f64 {
        self.c0 + self.c1 * mu + self.c2 * mu * mu
    }

    pub fn apply(&self, f: &Field) -> Field {
        let mut out = f.scaled(self.c0);
        if self.c1 != 0.0 || self.c2 != 0.0 {
            let lap = laplacian(f);
            out.axpy(-self.c1, &lap);
            if self.c2 != 0.0 {
                out.axpy(self.c2, &laplacian(&lap));
            }
        }
        out
    }

    /// `½⟨φ, Kφ⟩`, with the `-Δ` term summed over grid edges.
    fn half_form(&self, f: &Field) -> f64 {
        let mut e = 0.5 * self.c0 * dot(f, f);
        if self.c1 != 0.0 {
            e += 0.5 * self.c1 * dirichlet(f);
        }
        if self.c2 != 0.0 {
            let lap = laplacian(f);
            e += 0.5 * self.c2 * dot(&lap, &lap);
        }
        e
    }
}

/// `Σ_edges cell · (Δφ / h)²`, equal to `⟨φ, -Δ_h φ⟩` by summation by parts.
pub fn dirichlet(f: &Field) -> f64 {
    let g = f.grid();
    let v = f.values();
    match (g.dim(), g.bc()) {
        (1, bc) => {
            let h = g.spacing(0);
            let n = g.cells()[0];
            let edges = (0..n).map(|i| {
                let j = if bc == Boundary::Periodic {
                    (i + 1) % n
                } else {
                    i + 1
                };
                let d = v[j] - v[i];
                d * d
            });
            edges.sum::<f64>() / h
        }
        _ => {
            let (nx, ny) = (g.cells()[0], g.cells()[1]);
            let (hx, hy) = (g.spacing(0), g.spacing(1));
            let mut sx = 0.0;
            let mut sy = 0.0;
            for j in 0..ny {
                let row = j * nx;
                let up = ((j + 1) % ny) * nx;
                for i in 0..nx {
                    let c = v[row + i];
                    let dx = v[row + (i + 1) % nx] - c;
                    let dy = v[up + i] - c;
                    sx += dx * dx;
                    sy += dy * dy;
                }
            }
            hx * hy * (sx / (hx * hx) + sy / (hy * hy))
        }
    }
}

/// Pointwise potential `a₀ + a₁φ + a₂φ² + a₃φ³ + a₄φ⁴`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Poly(pub [f64; 5]);

impl Poly {
    pub fn value(&self, x: f64) -> f64 {
        let a = &self.0;
        a[0] + x * (a[1] + x * (a[2] + x * (a[3] + x * a[4])))
    }

    pub fn d1(&self, x: f64) -> f64 {
        let a = &self.0;
        a[1] + x * (2.0 * a[2] + x * (3.0 * a[3] + x * 4.0 * a[4]))
    }

    pub fn d2(&self, x: f64) -> f64 {
        let a = &self.0;
        2.0 * a[2] + x * (6.0 * a[3] + x * 12.0 * a[4])
    }

    pub fn degree(&self) -> usize {
        self.0.iter().rposition(|&a| a != 0.0).unwrap_or(0)
    }
}

/// `½⟨φ, Kφ⟩ + ∫ p(φ)`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Functional {
    pub quad: Quadratic,
    pub local: Poly,
}

impl Functional {
    pub fn value(&self, f: &Field) -> f64 {
        let g = f.grid();
        let pot: f64 = match g.bc() {
            Boundary::Periodic => {
                g.weight(0) * f.values().iter().map(|&v| self.local.value(v)).sum::<f64>()
            }
            Boundary::Neumann => f
                .values()
                .iter()
                .enumerate()
                .map(|(k, &v)| g.weight(k) * self.local.value(v))
                .sum(),
        };
        self.quad.half_form(f) + pot
    }

    /// L² first variation `Kφ + p'(φ)`.
    pub fn gradient(&self, f: &Field) -> Field {
        let mut out = self.quad.apply(f);
        for (o, &v) in out.values_mut().iter_mut().zip(f.values()) {
            *o += self.local.d1(v);
        }
        out
    }

    /// `Kψ + p''(φ)ψ`.
    pub fn hessian_apply(&self, f: &Field, psi: &Field) -> Field {
        let mut out = self.quad.apply(psi);
        for ((o, &v), &p) in out
            .values_mut()
            .iter_mut()
            .zip(f.values())
            .zip(psi.values())
        {
            *o += self.local.d2(v) * p;
        }
        out
    }

    /// `p''(φ)` at every node.
    pub fn curvature(&self, f: &Field) -> Vec<f64> {
        f.values().iter().map(|&v| self.local.d2(v)).collect()
    }

    /// True when the first variation is affine in φ.
    pub fn has_linear_gradient(&self) -> bool {
        self.local.degree() <= 2
    }

    /// Slope of the affine gradient, valid when [`has_linear_gradient`].
    ///
    /// [`has_linear_gradient`]: Functional::has_linear_gradient
    pub fn linear_symbol(&self, mu: f64) -> f64 {
        self.quad.symbol(mu) + 2.0 * self.local.0[2]
    }

    pub fn sub(&self, other: &Functional) -> Functional {
        let mut local = [0.0; 5];
        for (i, l) in local.iter_mut().enumerate() {
            *l = self.local.0[i] - other.local.0[i];
        }
        Functional {
            quad: Quadratic {
                c0: self.quad.c0 - other.quad.c0,
                c1: self.quad.c1 - other.quad.c1,
                c2: self.quad.c2 - other.quad.c2,
            },
            local: Poly(local),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitKind {
    /// `F = F_c − F_e` with `δF_c` linear (the expansive part carries the
    /// nonlinearity).
    LinearContractive,
    /// `F = F̃_c − F̃_e` with `δF̃_e` linear.
    NonlinearContractive,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitPair {
    pub kind: SplitKind,
    pub contractive: Functional,
    pub expansive: Functional,
}

impl SplitPair {
    /// The part whose gradient is linear.
    pub fn linear_part(&self) -> &Functional {
        match self.kind {
            SplitKind::LinearContractive => &self.contractive,
            SplitKind::NonlinearContractive => &self.expansive,
        }
    }
}

/// `∫ κ²/2 |∇φ|² + (φ² − 1)²/4` on a line.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GinzburgLandau1D {
    pub kappa: f64,
    /// Stabilizing constant of the linear-contractive split; the nonlinear
    /// expansive part is convex while `φ² ≤ (2c + 1)/3`.
    pub c: f64,
}

impl GinzburgLandau1D {
    pub fn new(kappa: f64) -> Self {
        GinzburgLandau1D { kappa, c: 1.0 }
    }
}

/// `∫ ξ²/2 [(Δ + 1)φ]² + τ/2 φ² − γ/3! φ³ + φ⁴/4!` on a periodic rectangle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LandauBrazovskii2D {
    pub tau: f64,
    pub xi: f64,
    pub gamma: f64,
    /// Stabilizing constant of the linear-contractive split.
    pub c: f64,
}

impl Default for LandauBrazovskii2D {
    fn default() -> Self {
        LandauBrazovskii2D {
            tau: -0.15,
            xi: 1.0,
            gamma: 0.25,
            c: 22.75,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Model {
    GinzburgLandau(GinzburgLandau1D),
    LandauBrazovskii(LandauBrazovskii2D),
}

impl From<GinzburgLandau1D> for Model {
    fn from(m: GinzburgLandau1D) -> Self {
        Model::GinzburgLandau(m)
    }
}

impl From<LandauBrazovskii2D> for Model {
    fn from(m: LandauBrazovskii2D) -> Self {
        Model::LandauBrazovskii(m)
    }
}

impl Model {
    pub fn name(&self) -> &'static str {
        match self {
            Model::GinzburgLandau(_) => "gl1d",
            Model::LandauBrazovskii(_) => "lb2d",
        }
    }

    pub fn check_grid(&self, grid: &Grid) -> Result<()> {
        let reason = match self {
            Model::GinzburgLandau(_) if grid.dim() != 1 => Some("needs a 1-D grid"),
            Model::LandauBrazovskii(_) if grid.dim() != 2 => Some("needs a 2-D grid"),
            Model::LandauBrazovskii(_) if grid.bc() != Boundary::Periodic => {
                Some("needs periodic boundaries")
            }
            _ => None,
        };
        match reason {
            Some(r) => Err(Error::IncompatibleGrid {
                model: self.name(),
                reason: r.into(),
            }),
            None => Ok(()),
        }
    }

    /// The full energy as a [`Functional`].
    pub fn functional(&self) -> Functional {
        match *self {
            Model::GinzburgLandau(m) => Functional {
                quad: Quadratic {
                    c1: m.kappa * m.kappa,
                    ..Default::default()
                },
                local: Poly([0.25, 0.0, -0.5, 0.0, 0.25]),
            },
            Model::LandauBrazovskii(m) => {
                let xi2 = m.xi * m.xi;
                Functional {
                    quad: Quadratic {
                        c0: xi2,
                        c1: -2.0 * xi2,
                        c2: xi2,
                    },
                    local: Poly([
                        0.0,
                        0.0,
                        m.tau / 2.0,
                        -m.gamma / THIRD_FACTORIAL,
                        1.0 / FOURTH_FACTORIAL,
                    ]),
                }
            }
        }
    }

    pub fn energy(&self, f: &Field) -> Result<f64> {
        self.check_grid(f.grid())?;
        Ok(self.functional().value(f))
    }

    pub fn gradient_l2(&self, f: &Field) -> Result<Field> {
        self.check_grid(f.grid())?;
        Ok(self.functional().gradient(f))
    }

    pub fn hessian_apply(&self, f: &Field, psi: &Field) -> Result<Field> {
        self.check_grid(f.grid())?;
        if !f.grid().same_as(psi.grid()) {
            return Err(Error::GridMismatch);
        }
        Ok(self.functional().hessian_apply(f, psi))
    }

    pub fn split(&self, kind: SplitKind) -> SplitPair {
        let (contractive, expansive) = match (*self, kind) {
            (Model::GinzburgLandau(m), SplitKind::LinearContractive) => {
                let k2 = m.kappa * m.kappa;
                (
                    Functional {
                        quad: Quadratic {
                            c0: 2.0 * m.c,
                            c1: k2,
                            c2: 0.0,
                        },
                        local: Poly([0.25, 0.0, 0.0, 0.0, 0.0]),
                    },
                    Functional {
                        quad: Quadratic::default(),
                        local: Poly([0.0, 0.0, m.c + 0.5, 0.0, -0.25]),
                    },
                )
            }
            (Model::GinzburgLandau(m), SplitKind::NonlinearContractive) => {
                let k2 = m.kappa * m.kappa;
                (
                    Functional {
                        quad: Quadratic {
                            c1: k2,
                            ..Default::default()
                        },
                        local: Poly([0.25, 0.0, 0.0, 0.0, 0.25]),
                    },
                    Functional {
                        quad: Quadratic::default(),
                        local: Poly([0.0, 0.0, 0.5, 0.0, 0.0]),
                    },
                )
            }
            (Model::LandauBrazovskii(m), SplitKind::LinearContractive) => {
                let xi2 = m.xi * m.xi;
                (
                    Functional {
                        quad: Quadratic {
                            c0: xi2 + m.tau + m.c,
                            c1: -2.0 * xi2,
                            c2: xi2,
                        },
                        local: Poly::default(),
                    },
                    Functional {
                        quad: Quadratic::default(),
                        local: Poly([
                            0.0,
                            0.0,
                            m.c / 2.0,
                            m.gamma / THIRD_FACTORIAL,
                            -1.0 / FOURTH_FACTORIAL,
                        ]),
                    },
                )
            }
            (Model::LandauBrazovskii(m), SplitKind::NonlinearContractive) => {
                let xi2 = m.xi * m.xi;
                (
                    Functional {
                        quad: Quadratic {
                            c2: xi2,
                            ..Default::default()
                        },
                        local: Poly([
                            0.0,
                            0.0,
                            (xi2 + m.tau) / 2.0,
                            -m.gamma / THIRD_FACTORIAL,
                            1.0 / FOURTH_FACTORIAL,
                        ]),
                    },
                    Functional {
                        quad: Quadratic {
                            c1: 2.0 * xi2,
                            ..Default::default()
                        },
                        local: Poly::default(),
                    },
                )
            }
        };
        SplitPair {
            kind,
            contractive,
            expansive,
        }
    }

    /// Interval of φ values on which every split part is convex.
    pub fn convex_range(&self) -> (f64, f64) {
        match *self {
            Model::GinzburgLandau(m) => {
                let r = ((2.0 * m.c + 1.0) / 3.0).sqrt();
                (-r, r)
            }
            Model::LandauBrazovskii(m) => {
                // p''(φ) = c + γφ − φ²/2 ≥ 0
                let disc = (m.gamma * m.gamma + 2.0 * m.c).sqrt();
                (m.gamma - disc, m.gamma + disc)
            }
        }
    }
}
