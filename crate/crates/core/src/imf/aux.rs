use crate::energy::{Functional, Model, SplitKind};
use crate::error::{Error, Result};
use crate::fields::{dot, inv_neg_laplacian_zero_mean, mass, norm, Field, Metric, ZERO_MEAN_TOL};

/// Frozen data of one IMF cycle.
///
/// The reflected state is `φ̂ = φ_k + ⟨m, φ − φ_k⟩_{L²} v`, where `m = v` in
/// L² and `m = w = (-Δ)⁻¹ v` in H⁻¹. With `v = 0` the problem degenerates to
/// plain minimization of `F` (relaxation mode).
#[derive(Clone, Debug)]
pub struct AuxProblem {
    pub model: Model,
    pub metric: Metric,
    pub phi_k: Field,
    pub v: Field,
    m: Field,
    pub alpha: f64,
    pub beta: f64,
}

impl AuxProblem {
    pub fn new(
        model: Model,
        metric: Metric,
        phi_k: Field,
        v: Field,
        alpha: f64,
        beta: f64,
    ) -> Result<Self> {
        model.check_grid(phi_k.grid())?;
        if !phi_k.grid().same_as(v.grid()) {
            return Err(Error::GridMismatch);
        }
        if alpha + beta <= 1.0 {
            return Err(Error::Unsupported(format!(
                "alpha + beta must exceed 1 (got {alpha} + {beta})"
            )));
        }
        let nv = norm(metric, &v)?;
        if (nv - 1.0).abs() > 1e-8 {
            return Err(Error::Unsupported(format!(
                "min-mode must be unit in the {} metric (norm {nv})",
                metric.as_str()
            )));
        }
        let m = match metric {
            Metric::L2 => v.clone(),
            Metric::HMinus1 => inv_neg_laplacian_zero_mean(&v)?,
        };
        Ok(AuxProblem {
            model,
            metric,
            phi_k,
            v,
            m,
            alpha,
            beta,
        })
    }

    /// `L = F`, used to relax towards local minima.
    pub fn relaxation(model: Model, metric: Metric, phi: Field) -> Result<Self> {
        model.check_grid(phi.grid())?;
        let zero = Field::zeros(phi.grid());
        Ok(AuxProblem {
            model,
            metric,
            v: zero.clone(),
            m: zero,
            phi_k: phi,
            alpha: 0.0,
            beta: 0.0,
        })
    }

    pub fn is_relaxation(&self) -> bool {
        self.beta == 0.0 && self.alpha == 0.0
    }

    /// `w = (-Δ)⁻¹ v` for H⁻¹ problems.
    pub fn w(&self) -> Option<&Field> {
        match self.metric {
            Metric::HMinus1 => Some(&self.m),
            Metric::L2 => None,
        }
    }

    /// The L² representative of the metric pairing with `v`.
    pub fn pairing(&self) -> &Field {
        &self.m
    }

    fn check(&self, f: &Field) -> Result<()> {
        if self.phi_k.grid().same_as(f.grid()) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// `ṽ = φ̂ − φ_k`.
    fn shift(&self, f: &Field) -> Field {
        let c = dot(&self.m, f) - dot(&self.m, &self.phi_k);
        self.v.scaled(c)
    }

    pub fn phi_hat(&self, f: &Field) -> Result<Field> {
        self.check(f)?;
        Ok(self.phi_k.add(&self.shift(f)))
    }

    /// `(1−α)F(φ) + αF(φ − ṽ) − βF(φ_k + ṽ)`.
    pub fn aux_value(&self, f: &Field) -> Result<f64> {
        self.check(f)?;
        let func = self.model.functional();
        let s = self.shift(f);
        let mut l =
            (1.0 - self.alpha) * func.value(f) - self.beta * func.value(&self.phi_k.add(&s));
        if self.alpha != 0.0 {
            l += self.alpha * func.value(&f.sub(&s));
        }
        Ok(l)
    }

    /// L² first variation of [`aux_value`](AuxProblem::aux_value).
    pub fn aux_gradient(&self, f: &Field) -> Result<Field> {
        self.check(f)?;
        let func = self.model.functional();
        let s = self.shift(f);
        let mut g = func.gradient(f).scaled(1.0 - self.alpha);
        if self.beta != 0.0 {
            let hat = func.gradient(&self.phi_k.add(&s));
            g.axpy(-self.beta * dot(&self.v, &hat), &self.m);
        }
        if self.alpha != 0.0 {
            let back = func.gradient(&f.sub(&s));
            let c = dot(&self.v, &back);
            g.axpy(self.alpha, &back);
            g.axpy(-self.alpha * c, &self.m);
        }
        Ok(g)
    }

    /// Checks the H⁻¹ constraint `mass(v) = 0` and `-Δw = v`.
    pub(crate) fn mass_consistent(&self) -> bool {
        match self.metric {
            Metric::L2 => true,
            Metric::HMinus1 => {
                let scale = dot(&self.v, &self.v).sqrt().max(1.0);
                mass(&self.v).abs() <= ZERO_MEAN_TOL * scale
                    && mass(&self.m).abs() <= ZERO_MEAN_TOL * scale
            }
        }
    }
}

/// Evaluators for the decomposition `L = L_c − L_e`.
#[derive(Clone, Debug)]
pub struct AuxSplit {
    problem: AuxProblem,
    lin_c: Functional,
    lin_e: Functional,
    nl_c: Functional,
    nl_e: Functional,
}

/// The three sign branches of the single-split decomposition.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SignBranch {
    /// `α ≥ 0, β ≥ 0`
    BothNonNegative,
    /// `α < 0, β ≥ 0`
    AlphaNegative,
    /// `α ≥ 0, β < 0`
    BetaNegative,
}

impl SignBranch {
    pub fn of(alpha: f64, beta: f64) -> Result<Self> {
        match (alpha >= 0.0, beta >= 0.0) {
            (true, true) => Ok(SignBranch::BothNonNegative),
            (false, true) => Ok(SignBranch::AlphaNegative),
            (true, false) => Ok(SignBranch::BetaNegative),
            (false, false) => Err(Error::Unsupported(
                "alpha and beta cannot both be negative when alpha + beta > 1".into(),
            )),
        }
    }
}

/// Builds `L_c` and `L_e` from the linear-contractive and
/// nonlinear-contractive splittings of the model.
pub fn build_aux_split(p: &AuxProblem) -> Result<AuxSplit> {
    if p.alpha < 0.0 || p.beta < 0.0 {
        return Err(Error::Unsupported(format!(
            "the linear dual split needs alpha, beta >= 0 (got {}, {})",
            p.alpha, p.beta
        )));
    }
    let lin = p.model.split(SplitKind::LinearContractive);
    let nl = p.model.split(SplitKind::NonlinearContractive);
    Ok(AuxSplit {
        problem: p.clone(),
        lin_c: lin.contractive,
        lin_e: lin.expansive,
        nl_c: nl.contractive,
        nl_e: nl.expansive,
    })
}

impl AuxSplit {
    pub fn problem(&self) -> &AuxProblem {
        &self.problem
    }

    fn parts(&self, f: &Field) -> (Field, Field) {
        let s = self.problem.shift(f);
        (f.sub(&s), self.problem.phi_k.add(&s))
    }

    /// `F_c(φ) + αF̃_e(φ) + αF_c(φ − ṽ) + βF̃_e(φ_k + ṽ)`.
    pub fn contractive_value(&self, f: &Field) -> f64 {
        let (a, b) = self.parts(f);
        let (al, be) = (self.problem.alpha, self.problem.beta);
        self.lin_c.value(f)
            + al * (self.nl_e.value(f) + self.lin_c.value(&a))
            + be * self.nl_e.value(&b)
    }

    /// `F_e(φ) + αF̃_c(φ) + αF_e(φ − ṽ) + βF̃_c(φ_k + ṽ)`.
    pub fn expansive_value(&self, f: &Field) -> f64 {
        let (a, b) = self.parts(f);
        let (al, be) = (self.problem.alpha, self.problem.beta);
        self.lin_e.value(f)
            + al * (self.nl_c.value(f) + self.lin_e.value(&a))
            + be * self.nl_c.value(&b)
    }

    /// L² first variation of `L_c`.
    pub fn contractive_gradient(&self, f: &Field) -> Field {
        let p = &self.problem;
        let (a, b) = self.parts(f);
        let mut g = self.lin_c.gradient(f);
        if p.alpha != 0.0 {
            g.axpy(p.alpha, &self.nl_e.gradient(f));
            let ga = self.lin_c.gradient(&a);
            let c = dot(&p.v, &ga);
            g.axpy(p.alpha, &ga);
            g.axpy(-p.alpha * c, &p.m);
        }
        if p.beta != 0.0 {
            g.axpy(p.beta * dot(&p.v, &self.nl_e.gradient(&b)), &p.m);
        }
        g
    }

    /// L² first variation of `L_e`.
    pub fn expansive_gradient(&self, f: &Field) -> Field {
        let p = &self.problem;
        let (a, b) = self.parts(f);
        let mut g = self.lin_e.gradient(f);
        if p.alpha != 0.0 {
            g.axpy(p.alpha, &self.nl_c.gradient(f));
            let ga = self.lin_e.gradient(&a);
            let c = dot(&p.v, &ga);
            g.axpy(p.alpha, &ga);
            g.axpy(-p.alpha * c, &p.m);
        }
        if p.beta != 0.0 {
            g.axpy(p.beta * dot(&p.v, &self.nl_c.gradient(&b)), &p.m);
        }
        g
    }

    /// `⟨ψ, ∇²L_c ψ⟩` and `⟨ψ, ∇²L_e ψ⟩` at `f`.
    pub fn curvatures(&self, f: &Field, psi: &Field) -> (f64, f64) {
        let p = &self.problem;
        let (a, b) = self.parts(f);
        // direction of ṽ along ψ
        let dv = p.v.scaled(dot(&p.m, psi));
        let da = psi.sub(&dv);
        let q = |func: &Functional, at: &Field, d: &Field| dot(d, &func.hessian_apply(at, d));
        let c = q(&self.lin_c, f, psi)
            + p.alpha * (q(&self.nl_e, f, psi) + q(&self.lin_c, &a, &da))
            + p.beta * q(&self.nl_e, &b, &dv);
        let e = q(&self.lin_e, f, psi)
            + p.alpha * (q(&self.nl_c, f, psi) + q(&self.lin_e, &a, &da))
            + p.beta * q(&self.nl_c, &b, &dv);
        (c, e)
    }
}

/// Value-only single-split decomposition `L = L_c − L_e` for each sign
/// branch, built from one convex splitting `F = F_c − F_e`.
///
/// Returns `(L_c(φ), L_e(φ))` together with the curvature of both parts along
/// `psi`.
pub fn branch_split(
    p: &AuxProblem,
    kind: SplitKind,
    f: &Field,
    psi: &Field,
) -> Result<((f64, f64), (f64, f64))> {
    p.check(f)?;
    let pair = p.model.split(kind);
    let (fc, fe) = (pair.contractive, pair.expansive);
    let s = p.shift(f);
    let a = f.sub(&s);
    let b = p.phi_k.add(&s);
    let dv = p.v.scaled(dot(&p.m, psi));
    let da = psi.sub(&dv);
    let q = |func: &Functional, at: &Field, d: &Field| dot(d, &func.hessian_apply(at, d));
    let (al, be) = (p.alpha, p.beta);
    SignBranch::of(al, be)?;
    // Each term `c·F(x)` lands in L_c as `c·F_c(x)` and in L_e as `c·F_e(x)`
    // when `c ≥ 0`; a negative weight swaps the roles of the two parts.
    let mut vc = 0.0;
    let mut ve = 0.0;
    let mut qc = 0.0;
    let mut qe = 0.0;
    let mut add = |c: f64, x: &Field, d: &Field| {
        if c == 0.0 {
            return;
        }
        let (pc, pe) = if c > 0.0 { (&fc, &fe) } else { (&fe, &fc) };
        let c = c.abs();
        vc += c * pc.value(x);
        ve += c * pe.value(x);
        qc += c * q(pc, x, d);
        qe += c * q(pe, x, d);
    };
    add(1.0, f, psi);
    add(-al, f, psi);
    add(al, &a, &da);
    add(-be, &b, &dv);
    Ok(((vc, ve), (qc, qe)))
}
