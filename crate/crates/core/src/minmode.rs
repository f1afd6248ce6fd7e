//! Smallest eigenpairs of the Hessian in the L² or H⁻¹ metric.
//!
//! In L² the problem is `Hψ = λψ`; in H⁻¹ it is `-Δ Hψ = λψ` on zero-mean
//! fields, equivalently the generalized problem `Hψ = λ(-Δ)⁻¹ψ`. Both are
//! solved as `Hψ = λBψ` by block LOBPCG, with the constraint subspace (zero
//! mass in H⁻¹, and optionally the translation directions on periodic grids)
//! enforced by projection.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::energy::{Functional, Model};
use crate::error::{Error, Result};
use crate::fields::{
    derivative, dot, gradient_norm, inner_unchecked, inv_neg_laplacian_unchecked, laplacian, mass,
    project_zero_mean, Boundary, Field, Metric,
};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EigOptions {
    pub metric: Metric,
    pub max_iterations: usize,
    /// Bound on the metric norm of `H_metric v − λv` for unit `v`.
    pub tolerance: f64,
    pub deflation_angle_threshold_deg: f64,
    pub deflate_translation: bool,
    /// When the iteration budget runs out, the best pair is still returned
    /// (with `converged = false`) if its residual is at most this.
    pub accept_residual: f64,
}

impl EigOptions {
    pub fn new(metric: Metric) -> Self {
        EigOptions {
            metric,
            max_iterations: 2000,
            tolerance: 1e-9,
            deflation_angle_threshold_deg: 10.0,
            deflate_translation: true,
            accept_residual: 1e-3,
        }
    }

    fn validate(&self) -> Result<()> {
        let t = self.deflation_angle_threshold_deg;
        if !(self.tolerance > 0.0) || !(t > 0.0 && t < 90.0) || self.max_iterations == 0 {
            return Err(Error::Unsupported(format!(
                "eigen options need tolerance > 0, 0 < threshold < 90 and max_iterations > 0 (got {self:?})"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct EigPair {
    pub lambda: f64,
    /// Unit in the active metric.
    pub v: Field,
    pub residual: f64,
    pub iterations: usize,
    /// True when the translation directions were projected out.
    pub deflated: bool,
    /// False for a best-effort pair (see [`EigOptions::accept_residual`]).
    pub converged: bool,
}

/// Outcome of [`deflate_translation`].
#[derive(Clone, Debug)]
pub enum Deflation {
    /// `v` is far enough from the translation directions (or there are none).
    Keep(Field),
    /// `v` is a translation mode; re-solve orthogonally to it.
    Retry,
}

/// Discrete translation directions `∂_a φ` with nonzero norm.
fn translations(f: &Field) -> Vec<Field> {
    (0..f.grid().dim())
        .map(|a| derivative(f, a))
        .filter(|t| t.max_abs() > 0.0)
        .collect()
}

/// Metric-orthonormal basis of `span(ts)`.
fn orthonormalize(metric: Metric, ts: &[Field]) -> Vec<Field> {
    let mut out: Vec<Field> = Vec::new();
    for t in ts {
        let mut u = t.clone();
        for _ in 0..2 {
            for q in &out {
                let c = inner_unchecked(metric, q, &u);
                u.axpy(-c, q);
            }
        }
        let n = inner_unchecked(metric, &u, &u).max(0.0).sqrt();
        let scale = inner_unchecked(metric, t, t).max(0.0).sqrt();
        if n > 1e-10 * scale && n > 0.0 {
            u.scale(1.0 / n);
            out.push(u);
        }
    }
    out
}

/// Angle in degrees between `v` and the span of the translation directions.
pub fn translation_angle(metric: Metric, v: &Field, f: &Field) -> Option<f64> {
    let basis = orthonormalize(metric, &translations(f));
    if basis.is_empty() {
        return None;
    }
    let vv = inner_unchecked(metric, v, v);
    if vv <= 0.0 {
        return None;
    }
    let proj: f64 = basis
        .iter()
        .map(|q| inner_unchecked(metric, q, v).powi(2))
        .sum();
    let c = (proj / vv).sqrt().clamp(0.0, 1.0);
    Some(c.acos().to_degrees())
}

/// Signals a retry when `v` lies within `threshold_deg` of the translation
/// directions `∂φ` (measured in `metric`).
pub fn deflate_translation(
    metric: Metric,
    v: &Field,
    f: &Field,
    threshold_deg: f64,
) -> Result<Deflation> {
    if f.grid().bc() != Boundary::Periodic {
        return Err(Error::Unsupported(
            "translation deflation needs periodic boundaries".into(),
        ));
    }
    if !v.grid().same_as(f.grid()) {
        return Err(Error::GridMismatch);
    }
    match translation_angle(metric, v, f) {
        Some(a) if a <= threshold_deg => Ok(Deflation::Retry),
        _ => Ok(Deflation::Keep(v.clone())),
    }
}

/// The default starting vector: `sin 2πx` (periodic) or `cos πx` (Neumann),
/// projected onto zero mass in H⁻¹.
pub fn default_guess(f: &Field, metric: Metric) -> Field {
    let g = f.grid();
    let lx = g.extent()[0];
    let guess = match g.bc() {
        Boundary::Periodic => Field::from_fn(g, |x, _| (2.0 * PI * x / lx).sin()),
        Boundary::Neumann => Field::from_fn(g, |x, _| (PI * x / lx).cos()),
    };
    match metric {
        Metric::L2 => guess,
        Metric::HMinus1 => project_zero_mean(&guess),
    }
}

/// Deterministic, asymmetric smooth bumps that keep the block from being
/// trapped in a symmetry class of `φ`.
fn guard(f: &Field, j: usize) -> Field {
    let g = f.grid();
    let centres = [
        0.31, 0.67, 0.13, 0.83, 0.47, 0.59, 0.21, 0.77, 0.39, 0.91, 0.05, 0.53,
    ];
    let cy = [
        0.43, 0.71, 0.19, 0.61, 0.87, 0.27, 0.55, 0.09, 0.35, 0.79, 0.65, 0.15,
    ];
    let (cx, cy) = (centres[j % centres.len()], cy[j % cy.len()]);
    let lx = g.extent()[0];
    let ly = if g.dim() == 2 { g.extent()[1] } else { 1.0 };
    let width = 0.08 + 0.01 * (j % 5) as f64;
    let periodic = g.bc() == Boundary::Periodic;
    Field::from_fn(g, |x, y| {
        let d = |t: f64, c: f64| {
            let r = t - c;
            if periodic {
                r - r.round()
            } else {
                r
            }
        };
        let dx = d(x / lx, cx);
        let dy = if g.dim() == 2 { d(y / ly, cy) } else { 0.0 };
        (-(dx * dx + dy * dy) / (2.0 * width * width)).exp()
    })
}

/// The constraint set: zero mass (H⁻¹) and a metric-orthonormal list of
/// directions to remove.
struct Constraints {
    metric: Metric,
    zero_mean: bool,
    removed: Vec<Field>,
}

impl Constraints {
    fn project(&self, x: &mut Field) {
        if self.zero_mean {
            let m = mass(x) / x.grid().volume();
            x.values_mut().iter_mut().for_each(|v| *v -= m);
        }
        for q in &self.removed {
            let c = inner_unchecked(self.metric, q, x);
            x.axpy(-c, q);
        }
    }
}

struct Operator<'a> {
    func: Functional,
    phi: &'a Field,
    metric: Metric,
    precond: Vec<f64>,
}

impl<'a> Operator<'a> {
    fn new(func: Functional, phi: &'a Field, metric: Metric) -> Self {
        let curv = func.curvature(phi);
        let shift = curv.iter().fold(0.0f64, |m, c| m.max(c.abs())).max(1.0);
        let precond = phi
            .grid()
            .symbol(|mu| 1.0 / (func.quad.symbol(mu).max(0.0) + shift));
        Operator {
            func,
            phi,
            metric,
            precond,
        }
    }

    fn a(&self, x: &Field) -> Field {
        self.func.hessian_apply(self.phi, x)
    }

    fn b(&self, x: &Field) -> Field {
        match self.metric {
            Metric::L2 => x.clone(),
            Metric::HMinus1 => inv_neg_laplacian_unchecked(x),
        }
    }

    fn t(&self, r: &Field) -> Field {
        r.with_values(r.grid().apply_spectral(r.values(), &self.precond))
    }

    /// Metric norm of the residual whose L² representative is `rho`.
    fn residual_norm(&self, rho: &Field) -> f64 {
        gradient_norm(self.metric, rho)
    }
}

struct Block {
    x: Vec<Field>,
    ax: Vec<Field>,
    bx: Vec<Field>,
}

fn gram(a: &[Field], b: &[Field]) -> DMatrix<f64> {
    let n = a.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = 0.5 * (dot(&a[i], &b[j]) + dot(&a[j], &b[i]));
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Rayleigh–Ritz on `span(s)`: returns Ritz values and coefficient vectors
/// (columns), lowest first.
fn rayleigh_ritz(s: &[Field], as_: &[Field], bs: &[Field]) -> Option<(Vec<f64>, DMatrix<f64>)> {
    let gb = gram(s, bs);
    let ga = gram(s, as_);
    let eb = SymmetricEigen::new(gb);
    let top = eb.eigenvalues.iter().fold(0.0f64, |m, &e| m.max(e));
    if !(top > 0.0) || !top.is_finite() {
        return None;
    }
    let keep: Vec<usize> = (0..eb.eigenvalues.len())
        .filter(|&i| eb.eigenvalues[i] > 1e-13 * top)
        .collect();
    if keep.is_empty() {
        return None;
    }
    let n = s.len();
    let mut q = DMatrix::zeros(n, keep.len());
    for (c, &i) in keep.iter().enumerate() {
        let scale = 1.0 / eb.eigenvalues[i].sqrt();
        for r in 0..n {
            q[(r, c)] = eb.eigenvectors[(r, i)] * scale;
        }
    }
    let c = q.transpose() * ga * &q;
    let c = 0.5 * (&c + c.transpose());
    let ec = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..ec.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| ec.eigenvalues[i].total_cmp(&ec.eigenvalues[j]));
    let vals = order.iter().map(|&i| ec.eigenvalues[i]).collect();
    let mut vecs = DMatrix::zeros(keep.len(), order.len());
    for (c, &i) in order.iter().enumerate() {
        vecs.set_column(c, &ec.eigenvectors.column(i));
    }
    Some((vals, q * vecs))
}

fn combine(s: &[Field], coeffs: &DMatrix<f64>, col: usize, rows: std::ops::Range<usize>) -> Field {
    let mut out = Field::zeros(s[0].grid());
    for r in rows {
        let c = coeffs[(r, col)];
        if c != 0.0 {
            out.axpy(c, &s[r]);
        }
    }
    out
}

/// Two-pass Gram–Schmidt in the `B` inner product on the constraint
/// subspace, dropping nearly dependent vectors.
fn b_orthonormalize(op: &Operator<'_>, cons: &Constraints, vs: Vec<Field>) -> Vec<Field> {
    let mut q: Vec<Field> = Vec::with_capacity(vs.len());
    let mut bq: Vec<Field> = Vec::with_capacity(vs.len());
    for mut v in vs {
        cons.project(&mut v);
        let before = dot(&v, &op.b(&v)).max(0.0).sqrt();
        if !(before > 0.0) || !before.is_finite() {
            continue;
        }
        for _ in 0..2 {
            for (qi, bqi) in q.iter().zip(&bq) {
                let c = dot(bqi, &v);
                v.axpy(-c, qi);
            }
        }
        let bv = op.b(&v);
        let n = dot(&v, &bv).max(0.0).sqrt();
        if n > 1e-8 * before {
            v.scale(1.0 / n);
            bq.push(bv.scaled(1.0 / n));
            q.push(v);
        }
    }
    q
}

const STALL_WINDOW: usize = 100;
const STALL_SLACK: f64 = 1e3;

struct LobpcgResult {
    values: Vec<f64>,
    vectors: Vec<Field>,
    residuals: Vec<f64>,
    iterations: usize,
    converged: bool,
}

/// Block LOBPCG for the `want` smallest eigenpairs of `A x = λ B x` on the
/// constraint subspace.
fn lobpcg(
    op: &Operator<'_>,
    cons: &Constraints,
    start: Vec<Field>,
    want: usize,
    tolerance: f64,
    max_iterations: usize,
    accept: f64,
) -> Result<LobpcgResult> {
    let nb = start.len();
    let project_all = |v: Vec<Field>| -> Vec<Field> {
        v.into_iter()
            .map(|mut x| {
                cons.project(&mut x);
                x
            })
            .collect()
    };
    let x0 = project_all(start);
    let ax0: Vec<Field> = x0.iter().map(|x| op.a(x)).collect();
    let bx0: Vec<Field> = x0.iter().map(|x| op.b(x)).collect();
    let (_, c) = rayleigh_ritz(&x0, &ax0, &bx0)
        .ok_or_else(|| Error::Singular("degenerate starting block".into()))?;
    let k0 = c.ncols().min(nb);
    let mut blk = Block {
        x: (0..k0).map(|j| combine(&x0, &c, j, 0..x0.len())).collect(),
        ax: (0..k0).map(|j| combine(&ax0, &c, j, 0..x0.len())).collect(),
        bx: (0..k0).map(|j| combine(&bx0, &c, j, 0..x0.len())).collect(),
    };
    if blk.x.len() < want {
        return Err(Error::Singular(
            "starting block spans too few directions".into(),
        ));
    }
    let mut p: Option<Block> = None;
    let mut last = f64::INFINITY;
    let mut checkpoint = f64::INFINITY;
    let mut best: Option<LobpcgResult> = None;
    for it in 0..=max_iterations {
        let k = blk.x.len();
        let lambdas: Vec<f64> = (0..k).map(|i| dot(&blk.x[i], &blk.ax[i])).collect();
        let rho: Vec<Field> = (0..k)
            .map(|i| {
                let mut r = blk.ax[i].clone();
                r.axpy(-lambdas[i], &blk.bx[i]);
                r
            })
            .collect();
        let res: Vec<f64> = rho.iter().map(|r| op.residual_norm(r)).collect();
        last = res[..want].iter().fold(0.0f64, |m, &r| m.max(r));
        // rounding floor: accept a stalled solve close to the target
        let stalled = it > 0 && it % STALL_WINDOW == 0 && {
            let stuck = last > 0.9 * checkpoint;
            checkpoint = checkpoint.min(last);
            stuck
        };
        if last <= tolerance || (stalled && last <= STALL_SLACK * tolerance) {
            return Ok(LobpcgResult {
                values: lambdas[..want].to_vec(),
                vectors: blk.x[..want].to_vec(),
                residuals: res[..want].to_vec(),
                iterations: it,
                converged: true,
            });
        }
        if last.is_finite()
            && best
                .as_ref()
                .is_none_or(|b| last < b.residuals.iter().fold(0.0, |m: f64, &r| m.max(r)))
        {
            best = Some(LobpcgResult {
                values: lambdas[..want].to_vec(),
                vectors: blk.x[..want].to_vec(),
                residuals: res[..want].to_vec(),
                iterations: it,
                converged: false,
            });
        }
        if it == max_iterations || !last.is_finite() {
            break;
        }
        let w: Vec<Field> = rho
            .iter()
            .zip(&res)
            .filter(|(_, &r)| r > 0.1 * tolerance)
            .map(|(r, _)| {
                let mut t = op.t(r);
                cons.project(&mut t);
                let n = dot(&t, &op.b(&t)).max(0.0).sqrt();
                if n > 0.0 {
                    t.scale(1.0 / n);
                }
                t
            })
            .collect();
        let mut raw = blk.x.clone();
        raw.extend(w);
        if let Some(pb) = &p {
            raw.extend(pb.x.iter().cloned());
        }
        let s = b_orthonormalize(op, cons, raw);
        let as_: Vec<Field> = s.iter().map(|x| op.a(x)).collect();
        let bs: Vec<Field> = s.iter().map(|x| op.b(x)).collect();
        let rr = rayleigh_ritz(&s, &as_, &bs);
        let (vals, c) = match rr {
            Some(r) if r.0.len() >= k => r,
            _ => {
                // drop the history and retry with a plain block
                if p.is_some() {
                    p = None;
                    continue;
                }
                break;
            }
        };
        let _ = vals;
        let ns = s.len();
        let mut nx = Block {
            x: vec![],
            ax: vec![],
            bx: vec![],
        };
        let mut np = Block {
            x: vec![],
            ax: vec![],
            bx: vec![],
        };
        for j in 0..k {
            nx.x.push(combine(&s, &c, j, 0..ns));
            nx.ax.push(combine(&as_, &c, j, 0..ns));
            nx.bx.push(combine(&bs, &c, j, 0..ns));
            np.x.push(combine(&s, &c, j, k..ns));
            np.ax.push(combine(&as_, &c, j, k..ns));
            np.bx.push(combine(&bs, &c, j, k..ns));
        }
        // keep X exactly inside the constraint subspace
        for j in 0..k {
            let mut x = nx.x[j].clone();
            cons.project(&mut x);
            let n = dot(&x, &op.b(&x)).max(0.0).sqrt();
            if n > 0.0 && (n - 1.0).abs() > 1e-12 {
                let s = 1.0 / n;
                x.scale(s);
                nx.x[j] = x;
                nx.ax[j] = op.a(&nx.x[j]);
                nx.bx[j] = op.b(&nx.x[j]);
            }
        }
        blk = nx;
        p = Some(np);
    }
    if let Some(mut b) = best.filter(|b| b.residuals.iter().all(|&r| r <= accept)) {
        b.iterations = max_iterations;
        return Ok(b);
    }
    Err(Error::NoConvergence {
        what: "eigensolver",
        iterations: max_iterations,
        residual: last,
    })
}

fn check_inputs(model: &Model, f: &Field, guess: Option<&Field>) -> Result<()> {
    model.check_grid(f.grid())?;
    if let Some(g) = guess {
        if !g.grid().same_as(f.grid()) {
            return Err(Error::GridMismatch);
        }
    }
    if !f.is_finite() {
        return Err(Error::Diverged);
    }
    Ok(())
}

fn normalize(metric: Metric, mut v: Field) -> Field {
    let n = inner_unchecked(metric, &v, &v).max(0.0).sqrt();
    if n > 0.0 {
        v.scale(1.0 / n);
    }
    v
}

fn solve(
    model: &Model,
    f: &Field,
    opts: &EigOptions,
    guess: Option<&Field>,
    removed: Vec<Field>,
    want: usize,
) -> Result<LobpcgResult> {
    let op = Operator::new(model.functional(), f, opts.metric);
    let cons = Constraints {
        metric: opts.metric,
        zero_mean: opts.metric == Metric::HMinus1,
        removed,
    };
    let mut start = vec![guess
        .cloned()
        .unwrap_or_else(|| default_guess(f, opts.metric))];
    let guards = (want + 2).max(3) - 1;
    for j in 0..guards {
        start.push(guard(f, j));
    }
    if opts.metric == Metric::L2 {
        // the constant mode is often the answer on symmetric states
        start.push(Field::constant(f.grid(), 1.0));
    }
    lobpcg(
        &op,
        &cons,
        start,
        want,
        opts.tolerance,
        opts.max_iterations,
        opts.accept_residual,
    )
}

/// Smallest eigenpair of the metric Hessian at `f`, starting from `guess`
/// when given.
pub fn min_mode_from(
    model: &Model,
    f: &Field,
    opts: &EigOptions,
    guess: Option<&Field>,
) -> Result<EigPair> {
    opts.validate()?;
    check_inputs(model, f, guess)?;
    let r = solve(model, f, opts, guess, Vec::new(), 1)?;
    let mut pair = EigPair {
        lambda: r.values[0],
        v: normalize(opts.metric, r.vectors[0].clone()),
        residual: r.residuals[0],
        iterations: r.iterations,
        deflated: false,
        converged: r.converged,
    };
    if opts.deflate_translation && f.grid().bc() == Boundary::Periodic {
        if let Deflation::Retry =
            deflate_translation(opts.metric, &pair.v, f, opts.deflation_angle_threshold_deg)?
        {
            let removed = orthonormalize(opts.metric, &translations(f));
            let r = solve(model, f, opts, guess, removed, 1)?;
            pair = EigPair {
                lambda: r.values[0],
                v: normalize(opts.metric, r.vectors[0].clone()),
                residual: r.residuals[0],
                iterations: pair.iterations + r.iterations,
                deflated: true,
                converged: r.converged,
            };
        }
    }
    Ok(pair)
}

/// Smallest eigenpair of the metric Hessian at `f`.
pub fn min_mode(model: &Model, f: &Field, opts: &EigOptions) -> Result<EigPair> {
    min_mode_from(model, f, opts, None)
}

/// Largest grid (node count) handled by the dense path.
pub const DENSE_LIMIT: usize = 401;

/// The `k` smallest eigenvalues of the metric Hessian (mass-constrained in
/// H⁻¹, translations kept).
pub fn spectrum_head(model: &Model, f: &Field, k: usize, metric: Metric) -> Result<Vec<f64>> {
    if k == 0 || k > 10 {
        return Err(Error::Unsupported(format!(
            "spectrum head size must be 1..=10 (got {k})"
        )));
    }
    check_inputs(model, f, None)?;
    if f.grid().dim() == 1 && f.len() <= DENSE_LIMIT {
        let all = dense_spectrum(model, f, metric, &[])?;
        return Ok(all.into_iter().take(k).collect());
    }
    let mut opts = EigOptions::new(metric);
    opts.tolerance = 1e-7;
    let r = solve(model, f, &opts, None, Vec::new(), k)?;
    Ok(r.values)
}

/// Dense assembly of the Hessian `∇²F_h` at `f` as a matrix on nodal values.
pub fn dense_hessian(model: &Model, f: &Field) -> Result<DMatrix<f64>> {
    model.check_grid(f.grid())?;
    let n = f.len();
    let func = model.functional();
    let mut h = DMatrix::zeros(n, n);
    let mut e = Field::zeros(f.grid());
    for j in 0..n {
        e.values_mut()[j] = 1.0;
        let col = func.hessian_apply(f, &e);
        h.set_column(j, &DVector::from_column_slice(col.values()));
        e.values_mut()[j] = 0.0;
    }
    Ok(h)
}

/// Dense matrix of `-Δ_h`.
pub fn dense_neg_laplacian(f: &Field) -> DMatrix<f64> {
    let n = f.len();
    let mut a = DMatrix::zeros(n, n);
    let mut e = Field::zeros(f.grid());
    for j in 0..n {
        e.values_mut()[j] = 1.0;
        let col = laplacian(&e).scaled(-1.0);
        a.set_column(j, &DVector::from_column_slice(col.values()));
        e.values_mut()[j] = 0.0;
    }
    a
}

/// All eigenvalues (ascending) of the metric Hessian at `f` by dense
/// assembly, restricted to the metric complement of `removed` (and to zero
/// mass in H⁻¹).
pub fn dense_spectrum(
    model: &Model,
    f: &Field,
    metric: Metric,
    removed: &[Field],
) -> Result<Vec<f64>> {
    let n = f.len();
    let grid = f.grid();
    let w: Vec<f64> = (0..n).map(|k| grid.weight(k)).collect();
    let sw: Vec<f64> = w.iter().map(|x| x.sqrt()).collect();
    let h = dense_hessian(model, f)?;
    // S = W^{1/2} H W^{-1/2} is symmetric because W H is.
    let mut s = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            s[(i, j)] = sw[i] * h[(i, j)] / sw[j];
        }
    }
    let s = 0.5 * (&s + s.transpose());
    // In y = W^{1/2} x coordinates the L² inner product is Euclidean.
    let (basis, op) = match metric {
        Metric::L2 => (DMatrix::identity(n, n), s),
        Metric::HMinus1 => {
            let a = dense_neg_laplacian(f);
            let mut as_ = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    as_[(i, j)] = sw[i] * a[(i, j)] / sw[j];
                }
            }
            let as_ = 0.5 * (&as_ + as_.transpose());
            let ea = SymmetricEigen::new(as_);
            let top = ea.eigenvalues.iter().fold(0.0f64, |m, &e| m.max(e));
            let pos: Vec<usize> = (0..n)
                .filter(|&i| ea.eigenvalues[i] > 1e-10 * top)
                .collect();
            // z = diag(1/√μ) U₊ᵀ y maps the zero-mean subspace onto an
            // H⁻¹-orthonormal coordinate system.
            let mut u = DMatrix::zeros(n, pos.len());
            for (c, &i) in pos.iter().enumerate() {
                let sq = ea.eigenvalues[i].sqrt();
                for r in 0..n {
                    u[(r, c)] = ea.eigenvectors[(r, i)] * sq;
                }
            }
            let m = u.transpose() * &s * &u;
            (u, 0.5 * (&m + m.transpose()))
        }
    };
    let op = if removed.is_empty() {
        op
    } else {
        // coordinates of each removed direction in the current basis
        let d = basis.ncols();
        let mut cols = Vec::new();
        for t in removed {
            let y = DVector::from_iterator(n, t.values().iter().zip(&sw).map(|(v, s)| v * s));
            let c = match metric {
                Metric::L2 => y,
                Metric::HMinus1 => {
                    // basis columns are U₊√μ; coordinates are diag(1/μ)·(U₊√μ)ᵀ y
                    let mut c = basis.transpose() * y;
                    for i in 0..d {
                        let nn = basis.column(i).norm_squared();
                        c[i] /= nn;
                    }
                    c
                }
            };
            cols.push(c);
        }
        let q = DMatrix::from_columns(&cols).qr().q();
        let proj = DMatrix::identity(d, d) - &q * q.transpose();
        // complement basis: eigenvectors of the projector with eigenvalue 1
        let ep = SymmetricEigen::new(0.5 * (&proj + proj.transpose()));
        let keep: Vec<usize> = (0..d).filter(|&i| ep.eigenvalues[i] > 0.5).collect();
        let mut z = DMatrix::zeros(d, keep.len());
        for (c, &i) in keep.iter().enumerate() {
            z.set_column(c, &ep.eigenvectors.column(i));
        }
        let m = z.transpose() * op * &z;
        0.5 * (&m + m.transpose())
    };
    let mut vals: Vec<f64> = SymmetricEigen::new(op)
        .eigenvalues
        .iter()
        .copied()
        .collect();
    vals.sort_by(|a, b| a.total_cmp(b));
    Ok(vals)
}

/// Metric-orthonormal translation directions at `f` (empty off periodic grids).
pub fn translation_basis(metric: Metric, f: &Field) -> Vec<Field> {
    if f.grid().bc() != Boundary::Periodic {
        return Vec::new();
    }
    let ts: Vec<Field> = translations(f)
        .into_iter()
        .map(|t| match metric {
            Metric::L2 => t,
            Metric::HMinus1 => project_zero_mean(&t),
        })
        .collect();
    orthonormalize(metric, &ts)
}
