//! The Iterative Minimization Formulation.
//!
//! Each cycle freezes the current iterate `φ_k` and the min-mode `v` of the
//! Hessian there, then minimizes the auxiliary functional
//!
//! ```text
//! L(φ) = (1−α)F(φ) + αF(φ − ṽ) − βF(φ_k + ṽ),   ṽ = ⟨v, φ − φ_k⟩ v
//! ```
//!
//! whose minimizer is the next iterate. Near a nondegenerate index-1 saddle
//! the cycle map converges quadratically.

mod aux;

use std::time::{Duration, Instant};

pub use aux::{branch_split, build_aux_split, AuxProblem, AuxSplit, SignBranch};

use crate::energy::Model;
use crate::error::{Error, Result};
use crate::fields::{gradient_norm, mass, Field, Metric};
use crate::minmode::{min_mode_from, EigOptions, EigPair};
use crate::schemes::{is_diverged, Problem, SchemeKind, Stepper, StepperConfig};

/// When to stop the inner minimization of `L`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InnerStop {
    /// Stop once `‖δL‖_metric` falls to this value.
    pub tolerance: Option<f64>,
    /// Hard cap on the number of steps.
    pub cap: usize,
}

impl InnerStop {
    pub fn tolerance(tol: f64, cap: usize) -> Self {
        InnerStop {
            tolerance: Some(tol),
            cap,
        }
    }

    pub fn fixed(cap: usize) -> Self {
        InnerStop {
            tolerance: None,
            cap,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    Tolerance,
    IterationCap,
    Diverged,
    /// Bounded but no longer approaching the tolerance.
    Stalled,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::Tolerance => "tolerance",
            Termination::IterationCap => "iteration-cap",
            Termination::Diverged => "diverged",
            Termination::Stalled => "stalled",
        }
    }

    /// True for outcomes that never reach a minimizer of `L`.
    pub fn is_failure(self) -> bool {
        matches!(self, Termination::Diverged | Termination::Stalled)
    }
}

/// In tolerance mode a run stalls when its best `‖δL‖` fails to drop by 1%
/// over this many steps.
pub const STALL_WINDOW: usize = 500;
const STALL_FACTOR: f64 = 0.99;

#[derive(Clone, Debug)]
pub struct CycleReport {
    pub cycle: usize,
    pub iterations: usize,
    /// `‖δL‖_metric` at the last inner iterate.
    pub aux_gradient_norm: f64,
    /// `‖δF‖_metric` at the cycle's result.
    pub gradient_norm: f64,
    /// Smallest eigenvalue at the cycle's anchor.
    pub lambda: f64,
    pub energy: f64,
    pub max_abs: f64,
    pub wall_time: Duration,
    pub termination: Termination,
}

/// One inner iteration of a run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunRecord {
    pub cycle: usize,
    pub iter: usize,
    pub l: f64,
    pub norm_dl: f64,
    pub f: f64,
    pub norm_df: f64,
}

/// Per-iteration observer.
pub type Tracer<'a, 'b> = &'a mut (dyn FnMut(&RunRecord) + 'b);

/// Minimizes `L` from `φ_k` with `stepper` until `stop` fires.
pub fn run_cycle(
    p: &AuxProblem,
    stepper: &Stepper,
    stop: InnerStop,
    cycle: usize,
    lambda: f64,
    mut trace: Option<Tracer<'_, '_>>,
) -> Result<(Field, CycleReport)> {
    let start = Instant::now();
    let metric = p.metric;
    let func = p.model.functional();
    let mut phi = p.phi_k.clone();
    let mut it = 0;
    let mut max_abs = phi.max_abs();
    let mut best = f64::INFINITY;
    let mut checkpoint = f64::INFINITY;
    let termination = loop {
        let dl = p.aux_gradient(&phi)?;
        let ndl = gradient_norm(metric, &dl);
        if let Some(t) = trace.as_mut() {
            let df = func.gradient(&phi);
            t(&RunRecord {
                cycle,
                iter: it,
                l: p.aux_value(&phi)?,
                norm_dl: ndl,
                f: func.value(&phi),
                norm_df: gradient_norm(metric, &df),
            });
        }
        if !ndl.is_finite() {
            break Termination::Diverged;
        }
        if stop.tolerance.is_some_and(|tol| ndl <= tol) {
            break Termination::Tolerance;
        }
        if it >= stop.cap {
            break Termination::IterationCap;
        }
        best = best.min(ndl);
        if stop.tolerance.is_some() && it > 0 && it % STALL_WINDOW == 0 {
            if best > STALL_FACTOR * checkpoint {
                break Termination::Stalled;
            }
            checkpoint = best;
        }
        match stepper.step(p, &phi) {
            Ok(next) if !is_diverged(&next) => phi = next,
            Ok(_) | Err(Error::NoConvergence { .. }) | Err(Error::Singular(_)) => {
                it += 1;
                break Termination::Diverged;
            }
            Err(e) => return Err(e),
        }
        it += 1;
        max_abs = max_abs.max(phi.max_abs());
    };
    let diverged = termination == Termination::Diverged;
    let (energy, gn, adl) = if diverged {
        (f64::NAN, f64::NAN, f64::NAN)
    } else {
        (
            func.value(&phi),
            gradient_norm(metric, &func.gradient(&phi)),
            gradient_norm(metric, &p.aux_gradient(&phi)?),
        )
    };
    Ok((
        phi,
        CycleReport {
            cycle,
            iterations: it,
            aux_gradient_norm: adl,
            gradient_norm: gn,
            lambda,
            energy,
            max_abs,
            wall_time: start.elapsed(),
            termination,
        },
    ))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImfOptions {
    pub metric: Metric,
    pub scheme: SchemeKind,
    pub dt: f64,
    pub inner: InnerStop,
    pub outer_tolerance: f64,
    pub max_cycles: usize,
    pub alpha: f64,
    pub beta: f64,
    pub eig: EigOptions,
}

impl ImfOptions {
    pub fn new(metric: Metric, scheme: SchemeKind, dt: f64, inner: InnerStop) -> Self {
        ImfOptions {
            metric,
            scheme,
            dt,
            inner,
            outer_tolerance: 1e-8,
            max_cycles: 500,
            alpha: 0.0,
            beta: 2.0,
            eig: EigOptions::new(metric),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ImfStatus {
    Converged,
    CycleCap,
    Diverged,
    /// An inner solve stalled (see [`Termination::Stalled`]).
    Stalled,
}

#[derive(Clone, Debug)]
pub struct ImfRun {
    pub field: Field,
    pub cycles: Vec<CycleReport>,
    /// `‖δF(φ⁽ᵏ⁾)‖_metric` for `k = 0, 1, …`.
    pub errors: Vec<f64>,
    pub status: ImfStatus,
    /// Min-mode at the final iterate's last anchor.
    pub last_mode: Option<EigPair>,
    pub warnings: Vec<String>,
}

impl ImfRun {
    pub fn total_iterations(&self) -> usize {
        self.cycles.iter().map(|c| c.iterations).sum()
    }

    /// Converts a non-converged status into the matching error.
    pub fn into_result(self) -> Result<ImfRun> {
        match self.status {
            ImfStatus::Converged => Ok(self),
            ImfStatus::Diverged | ImfStatus::Stalled => Err(Error::Diverged),
            ImfStatus::CycleCap => Err(Error::CycleCap {
                cycles: self.cycles.len(),
                residual: self.errors.last().copied().unwrap_or(f64::NAN),
            }),
        }
    }
}

/// Runs cycles `min_mode → minimize L` from `f0` until
/// `‖δF‖_metric ≤ outer_tolerance` or the cycle cap.
pub fn run_imf(
    model: &Model,
    f0: &Field,
    opts: &ImfOptions,
    mut trace: Option<Tracer<'_, '_>>,
) -> Result<ImfRun> {
    model.check_grid(f0.grid())?;
    if !f0.is_finite() {
        return Err(Error::Diverged);
    }
    let problem = Problem::of(model, opts.metric)?;
    let cfg = StepperConfig::new(opts.dt, opts.scheme, problem);
    let func = model.functional();
    let (lo, hi) = model.convex_range();
    let mass0 = mass(f0);

    let mut phi = f0.clone();
    let mut cycles = Vec::new();
    let mut errors = vec![gradient_norm(opts.metric, &func.gradient(&phi))];
    let mut warnings = Vec::new();
    let mut guess: Option<Field> = None;
    let mut last_mode = None;
    let mut warned = false;

    while errors.last().copied().unwrap_or(f64::INFINITY) > opts.outer_tolerance {
        let k = cycles.len();
        if k >= opts.max_cycles {
            return Ok(ImfRun {
                field: phi,
                cycles,
                errors,
                status: ImfStatus::CycleCap,
                last_mode,
                warnings,
            });
        }
        let eig = min_mode_from(model, &phi, &opts.eig, guess.as_ref())?;
        if !eig.converged {
            warnings.push(format!(
                "cycle {k}: min-mode accepted at residual {:e} after {} iterations",
                eig.residual, eig.iterations
            ));
        }
        let stop = if k == 0 && eig.lambda >= 0.0 {
            warnings.push(format!(
                "lambda_min(phi0) = {:e} >= 0; first cycle capped at {} iterations",
                eig.lambda, opts.inner.cap
            ));
            InnerStop::fixed(opts.inner.cap)
        } else {
            opts.inner
        };
        let p = AuxProblem::new(
            *model,
            opts.metric,
            phi.clone(),
            eig.v.clone(),
            opts.alpha,
            opts.beta,
        )?;
        let stepper = Stepper::new(cfg, &p)?;
        let (next, report) = run_cycle(&p, &stepper, stop, k, eig.lambda, trace.as_deref_mut())?;
        guess = Some(eig.v.clone());
        last_mode = Some(eig);
        if report.termination.is_failure() {
            let status = if report.termination == Termination::Stalled {
                ImfStatus::Stalled
            } else {
                ImfStatus::Diverged
            };
            cycles.push(report);
            return Ok(ImfRun {
                field: next,
                cycles,
                errors,
                status,
                last_mode,
                warnings,
            });
        }
        if !warned && report.max_abs > hi.min(-lo) {
            warnings.push(format!(
                "cycle {k}: max |phi| = {:.4} left the convex range [{lo:.4}, {hi:.4}]",
                report.max_abs
            ));
            warned = true;
        }
        if opts.metric == Metric::HMinus1 {
            // per unit area, so large 2-D domains are not penalized
            let vol = next.grid().volume();
            let drift = (mass(&next) - mass0).abs() / vol;
            if drift > 1e-10 * (mass0 / vol).abs().max(1.0) {
                warnings.push(format!("cycle {k}: mean drift {drift:e}"));
            }
        }
        // The inner tolerance already holds at φ_k, so further cycles would
        // all repeat this one.
        let stuck = k > 0 && report.iterations == 0;
        errors.push(report.gradient_norm);
        cycles.push(report);
        phi = next;
        if stuck && errors.last().copied().unwrap_or(f64::INFINITY) > opts.outer_tolerance {
            warnings.push(format!(
                "cycle {k}: inner tolerance met at the anchor while the outer tolerance is not; \
                 tighten the inner tolerance"
            ));
            return Ok(ImfRun {
                field: phi,
                cycles,
                errors,
                status: ImfStatus::Stalled,
                last_mode,
                warnings,
            });
        }
    }
    Ok(ImfRun {
        field: phi,
        cycles,
        errors,
        status: ImfStatus::Converged,
        last_mode,
        warnings,
    })
}
