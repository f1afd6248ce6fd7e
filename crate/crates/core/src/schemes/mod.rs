//! Time steppers for the inner gradient flow `∂φ/∂t = -G δL/δφ`, with
//! `G = I` in L² and `G = -Δ_h` in H⁻¹.
//!
//! The convex-splitting stepper (CS) is built generically from the two
//! splittings of the model: the part of `L` with a linear gradient is treated
//! implicitly, everything else explicitly. The implicit system is a
//! transform-diagonal operator plus one rank-one term and is inverted
//! exactly. The linearized stepper (nCS) moves the first-order Taylor term of
//! the nonlinearity to the implicit side; its state-dependent system is
//! solved with preconditioned GMRES.

mod gmres;

use std::str::FromStr;
use std::sync::Arc;

use crate::energy::{Functional, Model, SplitKind};
use crate::error::{Error, Result};
use crate::fields::{dot, gradient_norm, riesz, Field, Grid, Metric};
use crate::imf::AuxProblem;
use gmres::Gmres;

/// Fields whose sup norm exceeds this are treated as diverged.
pub const DIVERGENCE_BOUND: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SchemeKind {
    Cs,
    Ncs,
}

impl SchemeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SchemeKind::Cs => "cs",
            SchemeKind::Ncs => "ncs",
        }
    }
}

impl FromStr for SchemeKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "cs" => Ok(SchemeKind::Cs),
            "ncs" => Ok(SchemeKind::Ncs),
            other => Err(format!("unknown scheme `{other}` (expected cs or ncs)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Problem {
    /// Ginzburg–Landau in L² (Allen–Cahn flow).
    AcL2,
    /// Ginzburg–Landau in H⁻¹ (Cahn–Hilliard flow).
    ChHm1,
    /// Landau–Brazovskii in H⁻¹.
    LbHm1,
}

impl Problem {
    pub fn of(model: &Model, metric: Metric) -> Result<Problem> {
        match (model, metric) {
            (Model::GinzburgLandau(_), Metric::L2) => Ok(Problem::AcL2),
            (Model::GinzburgLandau(_), Metric::HMinus1) => Ok(Problem::ChHm1),
            (Model::LandauBrazovskii(_), Metric::HMinus1) => Ok(Problem::LbHm1),
            (Model::LandauBrazovskii(_), Metric::L2) => Err(Error::Unsupported(
                "the Landau–Brazovskii model is only run in the H⁻¹ metric".into(),
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepperConfig {
    pub dt: f64,
    pub kind: SchemeKind,
    pub problem: Problem,
    pub relaxation: bool,
}

impl StepperConfig {
    pub fn new(dt: f64, kind: SchemeKind, problem: Problem) -> Self {
        StepperConfig {
            dt,
            kind,
            problem,
            relaxation: false,
        }
    }

    pub fn relaxing(mut self) -> Self {
        self.relaxation = true;
        self
    }
}

/// `x ↦ weight · ⟨b, x⟩_{L²} · a`
#[derive(Clone, Debug)]
pub struct RankOne {
    pub a: Field,
    pub b: Field,
    pub weight: f64,
}

/// `D + Σ sᵢ aᵢ⊗bᵢ` with `D` diagonal in the transform basis of the grid.
#[derive(Clone, Debug)]
pub struct ImplicitOperator {
    grid: Arc<Grid>,
    symbol: Vec<f64>,
    inverse: Vec<f64>,
    corrections: Vec<RankOne>,
    // For correction k: `S_{k-1}⁻¹ a_k` and `1 + s_k ⟨b_k, S_{k-1}⁻¹ a_k⟩`.
    cached: Vec<(Field, f64)>,
}

const SINGULAR_TOL: f64 = 1e-14;
const MAX_CORRECTIONS: usize = 2;

impl ImplicitOperator {
    pub fn new(grid: &Arc<Grid>, symbol: Vec<f64>) -> Result<Self> {
        if symbol.len() != grid.laplacian_eigenvalues().len() {
            return Err(Error::LengthMismatch {
                expected: grid.laplacian_eigenvalues().len(),
                got: symbol.len(),
            });
        }
        let scale = symbol.iter().fold(1.0f64, |m, d| m.max(d.abs()));
        let mut inverse = Vec::with_capacity(symbol.len());
        for (j, &d) in symbol.iter().enumerate() {
            if !(d.abs() > SINGULAR_TOL * scale) {
                return Err(Error::Singular(format!(
                    "transform mode {j} (multiplier {d:e})"
                )));
            }
            inverse.push(1.0 / d);
        }
        Ok(ImplicitOperator {
            grid: grid.clone(),
            symbol,
            inverse,
            corrections: Vec::new(),
            cached: Vec::new(),
        })
    }

    pub fn identity(grid: &Arc<Grid>) -> Self {
        let n = grid.laplacian_eigenvalues().len();
        ImplicitOperator::new(grid, vec![1.0; n]).expect("identity is invertible")
    }

    pub fn with_correction(mut self, a: Field, b: Field, weight: f64) -> Result<Self> {
        if self.corrections.len() >= MAX_CORRECTIONS {
            return Err(Error::Unsupported(format!(
                "at most {MAX_CORRECTIONS} rank-one corrections"
            )));
        }
        if !a.grid().same_as(&self.grid) || !b.grid().same_as(&self.grid) {
            return Err(Error::GridMismatch);
        }
        let z = self.solve_partial(&a);
        let den = 1.0 + weight * dot(&b, &z);
        let scale = 1.0 + (weight * dot(&b, &z)).abs();
        if !(den.abs() > SINGULAR_TOL * scale) {
            return Err(Error::Singular(format!(
                "rank-one correction {} (denominator {den:e})",
                self.corrections.len()
            )));
        }
        self.cached.push((z, den));
        self.corrections.push(RankOne { a, b, weight });
        Ok(self)
    }

    pub fn symbol(&self) -> &[f64] {
        &self.symbol
    }

    pub fn corrections(&self) -> &[RankOne] {
        &self.corrections
    }

    pub fn apply(&self, x: &Field) -> Field {
        let mut out = x.with_values(self.grid.apply_spectral(x.values(), &self.symbol));
        for c in &self.corrections {
            out.axpy(c.weight * dot(&c.b, x), &c.a);
        }
        out
    }

    fn solve_partial(&self, rhs: &Field) -> Field {
        let mut y = rhs.with_values(self.grid.apply_spectral(rhs.values(), &self.inverse));
        for (c, (z, den)) in self.corrections.iter().zip(&self.cached) {
            let t = c.weight * dot(&c.b, &y) / den;
            y.axpy(-t, z);
        }
        y
    }
}

/// Solves `op x = rhs`.
pub fn solve_implicit(op: &ImplicitOperator, rhs: &Field) -> Result<Field> {
    if !rhs.grid().same_as(&op.grid) {
        return Err(Error::GridMismatch);
    }
    Ok(op.solve_partial(rhs))
}

fn metric_symbol(metric: Metric, mu: f64) -> f64 {
    match metric {
        Metric::L2 => 1.0,
        Metric::HMinus1 => mu,
    }
}

/// A stepper bound to one [`AuxProblem`]; cycle-constant work is done once.
#[derive(Clone, Debug)]
pub struct Stepper {
    cfg: StepperConfig,
    inner: Inner,
}

#[derive(Clone, Debug)]
enum Inner {
    Cs(CsData),
    Ncs(NcsData),
}

#[derive(Clone, Debug)]
struct CsData {
    op: ImplicitOperator,
    /// `F_e` of the linear-contractive split.
    expansive: Functional,
    /// `F̃_c` of the nonlinear-contractive split.
    reflected: Functional,
    /// `-ΔtG b_c − βΔt(⟨v, δF̃_e(φ_k)⟩ − ⟨v, Ã_e v⟩⟨m, φ_k⟩) v`
    constant: Field,
}

#[derive(Clone, Debug)]
struct NcsData {
    full: Functional,
}

impl Stepper {
    pub fn new(cfg: StepperConfig, p: &AuxProblem) -> Result<Self> {
        if !(cfg.dt > 0.0 && cfg.dt.is_finite()) {
            return Err(Error::Unsupported(format!(
                "time step must be positive (got {})",
                cfg.dt
            )));
        }
        let problem = Problem::of(&p.model, p.metric)?;
        if problem != cfg.problem {
            return Err(Error::Unsupported(format!(
                "stepper configured for {:?} but the problem is {problem:?}",
                cfg.problem
            )));
        }
        if cfg.relaxation != p.is_relaxation() {
            return Err(Error::Unsupported(
                "relaxation flag does not match the auxiliary problem".into(),
            ));
        }
        if !p.mass_consistent() {
            return Err(Error::NonZeroMean {
                mean: crate::fields::mass(&p.v),
            });
        }
        if p.alpha != 0.0 {
            return Err(Error::Unsupported(format!(
                "steppers are implemented for alpha = 0 only (got {})",
                p.alpha
            )));
        }
        let inner = match cfg.kind {
            SchemeKind::Cs => Inner::Cs(cs_data(cfg.dt, p)?),
            SchemeKind::Ncs => Inner::Ncs(NcsData {
                full: p.model.functional(),
            }),
        };
        Ok(Stepper { cfg, inner })
    }

    pub fn config(&self) -> &StepperConfig {
        &self.cfg
    }

    /// One step `φⁿ → φⁿ⁺¹`.
    pub fn step(&self, p: &AuxProblem, f: &Field) -> Result<Field> {
        if !f.grid().same_as(p.phi_k.grid()) {
            return Err(Error::GridMismatch);
        }
        match &self.inner {
            Inner::Cs(d) => Ok(cs_step(self.cfg.dt, d, p, f)),
            Inner::Ncs(d) => ncs_step(self.cfg.dt, d, p, f),
        }
    }
}

fn cs_data(dt: f64, p: &AuxProblem) -> Result<CsData> {
    let grid = p.phi_k.grid();
    let lin = p.model.split(SplitKind::LinearContractive);
    let nl = p.model.split(SplitKind::NonlinearContractive);
    let fc = lin.contractive;
    let symbol = grid.symbol(|mu| 1.0 + dt * metric_symbol(p.metric, mu) * fc.linear_symbol(mu));
    let mut op = ImplicitOperator::new(grid, symbol)?;

    let zero = Field::zeros(grid);
    let mut constant = riesz(p.metric, &fc.gradient(&zero)).scaled(-dt);
    if !p.is_relaxation() {
        let fe_lin = nl.expansive;
        let av = fe_lin.hessian_apply(&zero, &p.v);
        let vav = dot(&p.v, &av);
        let m = p.pairing();
        op = op.with_correction(p.v.clone(), m.clone(), p.beta * dt * vav)?;
        let c = dot(&p.v, &fe_lin.gradient(&p.phi_k)) - vav * dot(m, &p.phi_k);
        constant.axpy(-p.beta * dt * c, &p.v);
    }
    Ok(CsData {
        op,
        expansive: lin.expansive,
        reflected: nl.contractive,
        constant,
    })
}

fn cs_step(dt: f64, d: &CsData, p: &AuxProblem, f: &Field) -> Field {
    let mut rhs = f.add(&d.constant);
    rhs.axpy(dt, &riesz(p.metric, &d.expansive.gradient(f)));
    if !p.is_relaxation() {
        let hat = p.phi_hat(f).expect("grid checked by caller");
        let c = dot(&p.v, &d.reflected.gradient(&hat));
        rhs.axpy(p.beta * dt * c, &p.v);
    }
    solve_implicit(&d.op, &rhs).expect("grid checked by caller")
}

fn ncs_step(dt: f64, d: &NcsData, p: &AuxProblem, f: &Field) -> Result<Field> {
    let grid = f.grid();
    let metric = p.metric;
    let curv = d.full.curvature(f);
    // explicit remainder p'(φ) − p''(φ)φ
    let rem = f.with_values(
        f.values()
            .iter()
            .zip(&curv)
            .map(|(&x, &c)| d.full.local.d1(x) - c * x)
            .collect(),
    );
    let mut rhs = f.clone();
    rhs.axpy(-dt, &riesz(metric, &rem));
    if !p.is_relaxation() {
        let hat = p.phi_hat(f)?;
        let c = dot(&p.v, &d.full.gradient(&hat));
        rhs.axpy(p.beta * dt * c, &p.v);
    }

    let quad = d.full.quad;
    let apply = |x: &[f64]| -> Vec<f64> {
        let xf = f.with_values(x.to_vec());
        let mut inner = quad.apply(&xf);
        for ((o, &xi), &c) in inner.values_mut().iter_mut().zip(x).zip(&curv) {
            *o += c * xi;
        }
        let mut out = xf;
        out.axpy(dt, &riesz(metric, &inner));
        out.into_values()
    };
    let cbar = (curv.iter().sum::<f64>() / curv.len() as f64).max(0.0);
    let pre: Vec<f64> =
        grid.symbol(|mu| 1.0 / (1.0 + dt * metric_symbol(metric, mu) * (quad.symbol(mu) + cbar)));
    let precond = |x: &[f64]| grid.apply_spectral(x, &pre);

    let mut x = f.values().to_vec();
    Gmres::default().solve(apply, precond, rhs.values(), &mut x)?;
    Field::new(grid.clone(), x)
}

fn wrapper(
    cfg: &StepperConfig,
    expected: Problem,
    kind: SchemeKind,
    p: &AuxProblem,
    f: &Field,
) -> Result<Field> {
    if cfg.problem != expected || cfg.kind != kind {
        return Err(Error::Unsupported(format!(
            "stepper for {expected:?}/{} called with {:?}/{}",
            kind.as_str(),
            cfg.problem,
            cfg.kind.as_str()
        )));
    }
    Stepper::new(*cfg, p)?.step(p, f)
}

/// Convex-splitting step for the Allen–Cahn flow of `L`.
pub fn step_cs_ac(cfg: &StepperConfig, p: &AuxProblem, f: &Field) -> Result<Field> {
    wrapper(cfg, Problem::AcL2, SchemeKind::Cs, p, f)
}

/// Linearized step for the Allen–Cahn flow of `L`.
pub fn step_ncs_ac(cfg: &StepperConfig, p: &AuxProblem, f: &Field) -> Result<Field> {
    wrapper(cfg, Problem::AcL2, SchemeKind::Ncs, p, f)
}

/// Convex-splitting step for the Cahn–Hilliard flow of `L`.
pub fn step_cs_ch(cfg: &StepperConfig, p: &AuxProblem, f: &Field) -> Result<Field> {
    wrapper(cfg, Problem::ChHm1, SchemeKind::Cs, p, f)
}

/// Linearized step for the Cahn–Hilliard flow of `L`.
pub fn step_ncs_ch(cfg: &StepperConfig, p: &AuxProblem, f: &Field) -> Result<Field> {
    wrapper(cfg, Problem::ChHm1, SchemeKind::Ncs, p, f)
}

/// Convex-splitting step for the Landau–Brazovskii flow of `L`.
pub fn step_cs_lb(cfg: &StepperConfig, p: &AuxProblem, f: &Field) -> Result<Field> {
    wrapper(cfg, Problem::LbHm1, SchemeKind::Cs, p, f)
}

/// Linearized step for the Landau–Brazovskii flow of `L`.
pub fn step_ncs_lb(cfg: &StepperConfig, p: &AuxProblem, f: &Field) -> Result<Field> {
    wrapper(cfg, Problem::LbHm1, SchemeKind::Ncs, p, f)
}

/// True when `f` is finite and below [`DIVERGENCE_BOUND`].
pub fn is_diverged(f: &Field) -> bool {
    !f.is_finite() || f.max_abs() > DIVERGENCE_BOUND
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RelaxOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for RelaxOptions {
    fn default() -> Self {
        RelaxOptions {
            tolerance: 1e-8,
            max_iterations: 100_000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RelaxReport {
    pub iterations: usize,
    pub energy: f64,
    pub gradient_norm: f64,
}

/// Gradient flow of `F` (the `v = 0` mode) until `‖δF‖_metric ≤ tolerance`.
///
/// `observe` sees `(iteration, φ)` after every step.
pub fn relax_with(
    model: Model,
    metric: Metric,
    f0: &Field,
    cfg: &StepperConfig,
    opts: RelaxOptions,
    mut observe: impl FnMut(usize, &Field),
) -> Result<(Field, RelaxReport)> {
    if !cfg.relaxation {
        return Err(Error::Unsupported(
            "relax needs a relaxation stepper config".into(),
        ));
    }
    let p = AuxProblem::relaxation(model, metric, f0.clone())?;
    let stepper = Stepper::new(*cfg, &p)?;
    let func = model.functional();
    let mut phi = f0.clone();
    let mut it = 0;
    loop {
        let g = func.gradient(&phi);
        let gn = gradient_norm(metric, &g);
        if gn <= opts.tolerance {
            let energy = func.value(&phi);
            return Ok((
                phi,
                RelaxReport {
                    iterations: it,
                    energy,
                    gradient_norm: gn,
                },
            ));
        }
        if it >= opts.max_iterations {
            return Err(Error::NoConvergence {
                what: "relaxation",
                iterations: it,
                residual: gn,
            });
        }
        phi = stepper.step(&p, &phi).map_err(|_| Error::Diverged)?;
        it += 1;
        if is_diverged(&phi) {
            return Err(Error::Diverged);
        }
        observe(it, &phi);
    }
}

/// [`relax_with`] without an observer.
pub fn relax(
    model: Model,
    metric: Metric,
    f0: &Field,
    cfg: &StepperConfig,
    opts: RelaxOptions,
) -> Result<(Field, RelaxReport)> {
    relax_with(model, metric, f0, cfg, opts, |_, _| {})
}
