//! Experiment plumbing: configs, initial conditions, runs, CSV artifacts and
//! the table catalog.

mod config;
mod tables;

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use config::{load_config, load_config_unchecked, parse_config, parse_length, parse_model};
pub use tables::{
    band, ch_neumann_init, ch_periodic_init, figure, first_cycle, reference_figures,
    reference_table, reproduce_table, table_csv, Cell, CellOutcome, FigureRef, Grade, Measured,
    TableId, TableReport, FIGURES_CSV, REFERENCE_CSV,
};

use crate::energy::Model;
use crate::error::{Error, Result};
use crate::fields::{gradient_norm, load_field, mass, save_field, Boundary, Field, Grid, Metric};
use crate::imf::{run_imf, ImfOptions, ImfStatus, InnerStop, RunRecord};
use crate::minmode::spectrum_head;
use crate::schemes::{relax_with, Problem, RelaxOptions, SchemeKind, StepperConfig};

const PRERELAX_DT: f64 = 10.0;

/// What `run_experiment` does with a spec.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Saddle search.
    Imf,
    /// Plain gradient flow of `F` (`v = 0`) to a local minimum.
    Relax,
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "imf" => Ok(Mode::Imf),
            "relax" => Ok(Mode::Relax),
            _ => Err(format!("unknown mode `{s}` (expected imf or relax)")),
        }
    }
}

/// How each inner minimization stops.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InnerMode {
    Tolerance(f64),
    /// Exactly this many steps per cycle.
    Iterations(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitialCondition {
    CosPiX,
    Cos2PiX,
    Sin2PiX,
    Constant(f64),
    /// A smooth depression of the given depth and half-width, hugging `x = 0`
    /// (Neumann) or centred (periodic), shifted to the given mass per length.
    TanhLayer {
        mass: f64,
        width: f64,
        depth: f64,
    },
    /// `cos(k y)` in 2-D, `cos(k x)` in 1-D.
    Lamellar(f64),
    /// Three unit plane waves on the hexagonal reciprocal basis, zero mean.
    CylinderSeed,
    /// `(1 − s)·lamellar(1) + s·cylinder_seed`.
    LamellarCylinder(f64),
    File(PathBuf),
}

impl InitialCondition {
    pub const DEFAULT_DEPTH: f64 = 0.3;

    pub fn build(&self, grid: &Arc<Grid>) -> Result<Field> {
        let lx = grid.extent()[0];
        let two_d = grid.dim() == 2;
        Ok(match self {
            InitialCondition::CosPiX => Field::from_fn(grid, |x, _| (PI * x / lx).cos()),
            InitialCondition::Cos2PiX => Field::from_fn(grid, |x, _| (2.0 * PI * x / lx).cos()),
            InitialCondition::Sin2PiX => Field::from_fn(grid, |x, _| (2.0 * PI * x / lx).sin()),
            InitialCondition::Constant(m) => Field::constant(grid, *m),
            InitialCondition::TanhLayer {
                mass: m,
                width,
                depth,
            } => {
                let sharp = width / 2.0;
                let raw = match grid.bc() {
                    Boundary::Neumann => Field::from_fn(grid, |x, _| {
                        m - depth * 0.5 * (1.0 - ((x - width) / sharp).tanh())
                    }),
                    Boundary::Periodic => Field::from_fn(grid, |x, _| {
                        let c = lx / 2.0;
                        m - depth
                            * 0.5
                            * (((x - c + width) / sharp).tanh() - ((x - c - width) / sharp).tanh())
                    }),
                };
                let shift = m - mass(&raw) / grid.volume();
                raw.map(|v| v + shift)
            }
            InitialCondition::Lamellar(k) => {
                if two_d {
                    Field::from_fn(grid, |_, y| (k * y).cos())
                } else {
                    Field::from_fn(grid, |x, _| (k * x).cos())
                }
            }
            InitialCondition::CylinderSeed => zero_mean(cylinder(grid)),
            InitialCondition::LamellarCylinder(s) => {
                let lam = Field::from_fn(grid, |_, y| y.cos());
                zero_mean(lam.scaled(1.0 - s).add(&cylinder(grid).scaled(*s)))
            }
            InitialCondition::File(p) => {
                let f = load_field(p)?;
                if !f.grid().same_as(grid) {
                    return Err(Error::Validation(vec![format!(
                        "{}: field grid does not match the experiment grid",
                        p.display()
                    )]));
                }
                f
            }
        })
    }

    fn problems(&self, cells: &[usize], extent: &[f64], bc: Boundary) -> Vec<String> {
        let mut out = Vec::new();
        let two_d = cells.len() == 2;
        let commensurate = |k: f64, l: f64| {
            let periods = k * l / (2.0 * PI);
            (periods - periods.round()).abs() < 1e-9
        };
        match self {
            InitialCondition::TanhLayer { width, depth, .. } => {
                if !(*width > 0.0) || !(*depth >= 0.0) {
                    out.push("tanh_layer needs width > 0 and depth >= 0".into());
                }
            }
            InitialCondition::Lamellar(k) => {
                let l = if two_d { extent[1] } else { extent[0] };
                if bc == Boundary::Periodic && !commensurate(*k, l) {
                    out.push(format!("lamellar({k}) is not periodic on a length {l}"));
                }
            }
            InitialCondition::CylinderSeed | InitialCondition::LamellarCylinder(_) => {
                if !two_d {
                    out.push("cylinder seeds need a 2-D grid".into());
                } else if !(commensurate(3f64.sqrt() / 2.0, extent[0])
                    && commensurate(0.5, extent[1]))
                {
                    out.push("the hexagonal seed is not periodic on this rectangle".into());
                }
            }
            _ => {}
        }
        out
    }
}

fn cylinder(grid: &Arc<Grid>) -> Field {
    let s3 = 3f64.sqrt() / 2.0;
    Field::from_fn(grid, |x, y| {
        0.5 * (y.cos() + (s3 * x + 0.5 * y).cos() + (s3 * x - 0.5 * y).cos())
    })
}

fn zero_mean(f: Field) -> Field {
    let m = mass(&f) / f.grid().volume();
    f.map(|v| v - m)
}

/// A seeded, smooth random perturbation added to the initial field.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Perturbation {
    pub amplitude: f64,
    pub seed: Option<u64>,
}

impl Perturbation {
    pub const NONE: Perturbation = Perturbation {
        amplitude: 0.0,
        seed: None,
    };

    /// Low-pass filtered white noise scaled to `max |δ| = amplitude`, with
    /// zero mass so H⁻¹ runs keep the initial mass.
    fn sample(&self, grid: &Arc<Grid>) -> Option<Field> {
        if self.amplitude == 0.0 {
            return None;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed.unwrap_or(0));
        let noise: Vec<f64> = (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let ell = 0.05 * grid.extent()[0];
        let filter = grid.symbol(|mu| (-mu * ell * ell).exp());
        let smooth = Field::new(grid.clone(), grid.apply_spectral(&noise, &filter)).ok()?;
        let smooth = zero_mean(smooth);
        let top = smooth.max_abs();
        (top > 0.0).then(|| smooth.scaled(self.amplitude / top))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub name: String,
    pub mode: Mode,
    pub model: Model,
    pub cells: Vec<usize>,
    pub extent: Vec<f64>,
    pub bc: Boundary,
    pub metric: Metric,
    pub init: InitialCondition,
    pub perturbation: Perturbation,
    /// Relax the initial field with CS at `Δt = 10` until `‖δF‖` drops to
    /// this value before an IMF run.
    pub prerelax: Option<f64>,
    pub scheme: SchemeKind,
    pub dt: f64,
    pub inner: InnerMode,
    /// Step cap for tolerance-mode inner solves and for relaxation.
    pub inner_cap: usize,
    pub outer_tolerance: f64,
    pub max_cycles: usize,
    /// Number of eigenvalues reported in `spectrum.csv`.
    pub spectrum: usize,
    /// Divergence is expected data rather than a failure.
    pub comparison: bool,
    pub out: Option<PathBuf>,
}

impl ExperimentSpec {
    pub const DEFAULT_INNER_CAP: usize = 100_000;

    /// Every problem with the experiment, not just the first.
    pub fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        let is_lb = matches!(self.model, Model::LandauBrazovskii(_));
        let dim = if is_lb { 2 } else { 1 };
        if self.cells.len() != dim {
            p.push(format!(
                "model {} needs n with {dim} entries",
                self.model.name()
            ));
        }
        if self.extent.len() != self.cells.len() {
            p.push("extent and n have different lengths".into());
        }
        if self.extent.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            p.push("extent must be positive".into());
        }
        if is_lb && self.bc != Boundary::Periodic {
            p.push("lb2d is periodic-only (bc = periodic)".into());
        }
        if is_lb && self.metric != Metric::HMinus1 {
            p.push("lb2d runs in the hm1 metric".into());
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            p.push(format!("dt must be positive, got {}", self.dt));
        }
        match self.inner {
            InnerMode::Tolerance(t) if !(t > 0.0) => {
                p.push("inner_tolerance must be positive".into())
            }
            InnerMode::Iterations(0) => p.push("inner_iterations must be positive".into()),
            _ => {}
        }
        if !(self.outer_tolerance > 0.0) {
            p.push("outer_tolerance must be positive".into());
        }
        if self.max_cycles == 0 || self.inner_cap == 0 {
            p.push("max_cycles and inner_cap must be positive".into());
        }
        if !(1..=10).contains(&self.spectrum) {
            p.push("spectrum must be in 1..=10".into());
        }
        let a = self.perturbation.amplitude;
        if !(a >= 0.0 && a.is_finite()) {
            p.push("perturbation must be a non-negative amplitude".into());
        } else if a > 0.0 && self.perturbation.seed.is_none() {
            p.push("perturbation > 0 needs a seed".into());
        }
        if self.prerelax.is_some_and(|t| !(t > 0.0)) {
            p.push("prerelax must be positive".into());
        }
        if let Model::GinzburgLandau(m) = self.model {
            if !(m.kappa > 0.0) {
                p.push("kappa must be positive".into());
            }
        }
        if self.cells.len() == self.extent.len() && !self.cells.is_empty() {
            p.extend(self.init.problems(&self.cells, &self.extent, self.bc));
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(p))
        }
    }

    pub fn grid(&self) -> Result<Arc<Grid>> {
        Grid::new(&self.cells, &self.extent, self.bc)
    }

    /// The initial field including the perturbation.
    pub fn initial_field(&self) -> Result<Field> {
        let grid = self.grid()?;
        let f0 = self.init.build(&grid)?;
        let f0 = match self.perturbation.sample(&grid) {
            Some(d) => f0.add(&d),
            None => f0,
        };
        match self.prerelax {
            Some(tol) if self.mode == Mode::Imf => {
                let problem = Problem::of(&self.model, self.metric)?;
                let cfg = StepperConfig::new(PRERELAX_DT, SchemeKind::Cs, problem).relaxing();
                let opts = RelaxOptions {
                    tolerance: tol,
                    max_iterations: self.inner_cap,
                };
                Ok(relax_with(self.model, self.metric, &f0, &cfg, opts, |_, _| {})?.0)
            }
            _ => Ok(f0),
        }
    }

    pub fn imf_options(&self) -> ImfOptions {
        let inner = match self.inner {
            InnerMode::Tolerance(t) => InnerStop::tolerance(t, self.inner_cap),
            InnerMode::Iterations(n) => InnerStop::fixed(n),
        };
        let mut o = ImfOptions::new(self.metric, self.scheme, self.dt, inner);
        o.outer_tolerance = self.outer_tolerance;
        o.max_cycles = self.max_cycles;
        o
    }
}

/// The result of one experiment.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub name: String,
    pub mode: Mode,
    /// `converged`, `cycle-cap`, `diverged`, `stalled` or `iteration-cap`.
    pub status: &'static str,
    pub diverged: bool,
    pub energy: f64,
    pub gradient_norm: f64,
    pub spectrum: Vec<f64>,
    pub cycles: usize,
    pub total_iterations: usize,
    pub initial_mass: f64,
    pub final_mass: f64,
    /// `‖δF‖` per cycle, starting with the initial field.
    pub errors: Vec<f64>,
    pub trace: Vec<RunRecord>,
    pub warnings: Vec<String>,
    pub field: Field,
}

impl Outcome {
    pub fn converged(&self) -> bool {
        self.status == "converged"
    }

    pub fn result_csv(&self) -> String {
        let mut s = String::from("name,mode,status,diverged,energy,gradient_norm,cycles,total_iterations,initial_mass,final_mass");
        for i in 0..self.spectrum.len() {
            let _ = write!(s, ",lambda{}", i + 1);
        }
        s.push('\n');
        let mode = match self.mode {
            Mode::Imf => "imf",
            Mode::Relax => "relax",
        };
        let _ = write!(
            s,
            "{},{},{},{},{:e},{:e},{},{},{:e},{:e}",
            self.name,
            mode,
            self.status,
            self.diverged,
            self.energy,
            self.gradient_norm,
            self.cycles,
            self.total_iterations,
            self.initial_mass,
            self.final_mass
        );
        for l in &self.spectrum {
            let _ = write!(s, ",{l:e}");
        }
        s.push('\n');
        s
    }

    pub fn trace_csv(&self) -> String {
        trace_csv(&self.trace)
    }

    pub fn spectrum_csv(&self) -> String {
        spectrum_csv(&self.spectrum)
    }

    /// Writes `result.csv`, `trace.csv`, `final.field` and `spectrum.csv`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_atomic(&dir.join("result.csv"), &self.result_csv())?;
        write_atomic(&dir.join("trace.csv"), &self.trace_csv())?;
        write_atomic(&dir.join("spectrum.csv"), &self.spectrum_csv())?;
        let tmp = dir.join(".final.field.tmp");
        save_field(&tmp, &self.field)?;
        let dst = dir.join("final.field");
        std::fs::rename(&tmp, &dst).map_err(|e| Error::io(dst, e))
    }
}

pub fn trace_csv(trace: &[RunRecord]) -> String {
    let mut s = String::from("cycle,iter,L,normdL,F,normdF\n");
    for r in trace {
        let _ = writeln!(
            s,
            "{},{},{:e},{:e},{:e},{:e}",
            r.cycle, r.iter, r.l, r.norm_dl, r.f, r.norm_df
        );
    }
    s
}

pub fn spectrum_csv(values: &[f64]) -> String {
    let mut s = String::from("index,lambda\n");
    for (i, l) in values.iter().enumerate() {
        let _ = writeln!(s, "{},{l:e}", i + 1);
    }
    s
}

pub(crate) fn write_atomic(path: &Path, text: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Runs the experiment (IMF or relaxation) and writes artifacts to `spec.out`
/// when set. Divergence is reported in the outcome, not as an error.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Outcome> {
    spec.validate()?;
    let f0 = spec.initial_field()?;
    let outcome = match spec.mode {
        Mode::Imf => run_imf_mode(spec, &f0)?,
        Mode::Relax => run_relax_mode(spec, &f0)?,
    };
    if let Some(dir) = &spec.out {
        outcome.write(dir)?;
    }
    Ok(outcome)
}

fn finish(spec: &ExperimentSpec, field: &Field, diverged: bool) -> Result<(f64, f64, Vec<f64>)> {
    if diverged || !field.is_finite() {
        return Ok((f64::NAN, f64::NAN, Vec::new()));
    }
    let func = spec.model.functional();
    let energy = func.value(field);
    let gn = gradient_norm(spec.metric, &func.gradient(field));
    let spectrum = spectrum_head(&spec.model, field, spec.spectrum, spec.metric)?;
    Ok((energy, gn, spectrum))
}

fn run_imf_mode(spec: &ExperimentSpec, f0: &Field) -> Result<Outcome> {
    let opts = spec.imf_options();
    let mut trace = Vec::new();
    let mut record = |r: &RunRecord| trace.push(*r);
    let run = run_imf(&spec.model, f0, &opts, Some(&mut record))?;
    let diverged = matches!(run.status, ImfStatus::Diverged | ImfStatus::Stalled);
    let status = match run.status {
        ImfStatus::Converged => "converged",
        ImfStatus::CycleCap => "cycle-cap",
        ImfStatus::Diverged => "diverged",
        ImfStatus::Stalled => "stalled",
    };
    let (energy, gn, spectrum) = finish(spec, &run.field, diverged)?;
    Ok(Outcome {
        name: spec.name.clone(),
        mode: Mode::Imf,
        status,
        diverged,
        energy,
        gradient_norm: gn,
        spectrum,
        cycles: run.cycles.len(),
        total_iterations: run.total_iterations(),
        initial_mass: mass(f0),
        final_mass: mass(&run.field),
        errors: run.errors,
        trace,
        warnings: run.warnings,
        field: run.field,
    })
}

fn run_relax_mode(spec: &ExperimentSpec, f0: &Field) -> Result<Outcome> {
    let problem = Problem::of(&spec.model, spec.metric)?;
    let cfg = StepperConfig::new(spec.dt, spec.scheme, problem).relaxing();
    let opts = RelaxOptions {
        tolerance: spec.outer_tolerance,
        max_iterations: spec.inner_cap,
    };
    let func = spec.model.functional();
    let metric = spec.metric;
    let mut trace = Vec::new();
    let mut push = |iter: usize, phi: &Field| {
        let f = func.value(phi);
        let g = gradient_norm(metric, &func.gradient(phi));
        trace.push(RunRecord {
            cycle: 0,
            iter,
            l: f,
            norm_dl: g,
            f,
            norm_df: g,
        });
    };
    push(0, f0);
    let g0 = gradient_norm(metric, &func.gradient(f0));
    let mut last = f0.clone();
    let result = relax_with(spec.model, metric, f0, &cfg, opts, |it, phi| {
        push(it, phi);
        last = phi.clone();
    });
    let (field, status, diverged, iterations) = match result {
        Ok((f, r)) => (f, "converged", false, r.iterations),
        Err(Error::Diverged) => (last, "diverged", true, trace.len().saturating_sub(1)),
        Err(Error::NoConvergence { iterations, .. }) => (last, "iteration-cap", false, iterations),
        Err(e) => return Err(e),
    };
    let (energy, gn, spectrum) = finish(spec, &field, diverged)?;
    let gn_final = if diverged { f64::NAN } else { gn };
    Ok(Outcome {
        name: spec.name.clone(),
        mode: Mode::Relax,
        status,
        diverged,
        energy,
        gradient_norm: gn,
        spectrum,
        cycles: 0,
        total_iterations: iterations,
        initial_mass: mass(f0),
        final_mass: mass(&field),
        errors: vec![g0, gn_final],
        trace,
        warnings: Vec::new(),
        field,
    })
}

/// One error series per seed: `(seed, ‖δF(φ⁽ᵏ⁾)‖ for k = 0, 1, …)`.
/// An empty seed list runs the configured perturbation once.
pub fn convergence_study(
    spec: &ExperimentSpec,
    seeds: &[u64],
) -> Result<Vec<(Option<u64>, Outcome)>> {
    let mut out = Vec::new();
    if seeds.is_empty() {
        out.push((spec.perturbation.seed, run_experiment(spec)?));
    }
    for &seed in seeds {
        let mut s = spec.clone();
        s.perturbation.seed = Some(seed);
        s.out = spec.out.as_ref().map(|d| d.join(format!("seed-{seed}")));
        out.push((Some(seed), run_experiment(&s)?));
    }
    Ok(out)
}

/// CSV `seed,cycle,error` for a study.
pub fn convergence_csv(runs: &[(Option<u64>, Outcome)]) -> String {
    let mut s = String::from("seed,cycle,error\n");
    for (seed, o) in runs {
        let seed = seed.map(|x| x.to_string()).unwrap_or_default();
        for (k, e) in o.errors.iter().enumerate() {
            let _ = writeln!(s, "{seed},{k},{e:e}");
        }
    }
    s
}

/// Least-squares slope of `log e_{k+1}` against `log e_k` over the last
/// `points` pairs whose errors lie above `floor`.
pub fn fitted_order(errors: &[f64], floor: f64, points: usize) -> Option<f64> {
    let usable: Vec<f64> = errors
        .iter()
        .copied()
        .take_while(|e| e.is_finite() && *e > floor)
        .collect();
    if usable.len() < 2 {
        return None;
    }
    let pairs: Vec<(f64, f64)> = usable.windows(2).map(|w| (w[0].ln(), w[1].ln())).collect();
    let pairs = &pairs[pairs.len().saturating_sub(points)..];
    if pairs.len() < 2 {
        return None;
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pairs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}
