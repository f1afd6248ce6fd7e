mod common;

use std::sync::Arc;

use common::*;
use imfcs::energy::Model;
use imfcs::fields::{mass, Boundary, Field, Grid, Metric};
use imfcs::imf::{build_aux_split, AuxProblem};
use imfcs::minmode::{min_mode, EigOptions};
use imfcs::schemes::{
    relax, solve_implicit, step_cs_ac, step_cs_ch, step_cs_lb, step_ncs_ac, step_ncs_ch,
    step_ncs_lb, ImplicitOperator, Problem, RelaxOptions, SchemeKind, Stepper, StepperConfig,
};
use nalgebra::DMatrix;

const DTS: [f64; 6] = [0.01, 0.1, 1.0, 5.0, 10.0, 50.0];

struct Case {
    name: &'static str,
    model: Model,
    metric: Metric,
    grid: Arc<Grid>,
    phi: Field,
    v: Field,
}

fn cases() -> Vec<Case> {
    cases_on(1.0)
}

fn cases_on(extent: f64) -> Vec<Case> {
    let mut r = rng(7);
    let mut out = Vec::new();
    for bc in [Boundary::Neumann, Boundary::Periodic] {
        let cells = if bc == Boundary::Neumann { 48 } else { 64 };
        let grid = Grid::line(cells, extent, bc).unwrap();
        let phi = smooth(&grid, &mut r, 0.9);
        let v = zero_mean_unit(Metric::L2, &smooth(&grid, &mut r, 1.0));
        out.push(Case {
            name: "ac",
            model: gl(0.05),
            metric: Metric::L2,
            grid: grid.clone(),
            phi,
            v,
        });
        let phi = with_mass(&smooth(&grid, &mut r, 0.3), 0.6);
        let v = zero_mean_unit(Metric::HMinus1, &smooth(&grid, &mut r, 1.0));
        out.push(Case {
            name: "ch",
            model: gl(0.04),
            metric: Metric::HMinus1,
            grid,
            phi,
            v,
        });
    }
    let grid = square(12);
    let phi = with_mass(&smooth(&grid, &mut r, 0.5), 0.0);
    let v = zero_mean_unit(Metric::HMinus1, &smooth(&grid, &mut r, 1.0));
    out.push(Case {
        name: "lb",
        model: lb(),
        metric: Metric::HMinus1,
        grid,
        phi,
        v,
    });
    out
}

fn problem(c: &Case, relaxation: bool) -> AuxProblem {
    if relaxation {
        AuxProblem::relaxation(c.model, c.metric, c.phi.clone()).unwrap()
    } else {
        AuxProblem::new(c.model, c.metric, c.phi.clone(), c.v.clone(), 0.0, 2.0).unwrap()
    }
}

fn config(c: &Case, dt: f64, kind: SchemeKind, relaxation: bool) -> StepperConfig {
    let cfg = StepperConfig::new(dt, kind, Problem::of(&c.model, c.metric).unwrap());
    if relaxation {
        cfg.relaxing()
    } else {
        cfg
    }
}

fn oracle_solve(a: DMatrix<f64>, rhs: &Field) -> Field {
    let x = a.lu().solve(&vec_of(rhs)).expect("dense system is regular");
    field_of(rhs.grid(), &x)
}

/// `(I + Δt R A) x = f − Δt R (b − δL_e(f))` with `δL_c(x) = A x + b`.
fn cs_oracle(p: &AuxProblem, dt: f64, f: &Field) -> Field {
    let grid = f.grid();
    let split = build_aux_split(p).unwrap();
    let zero = Field::zeros(grid);
    let b = split.contractive_gradient(&zero);
    let a = dense(grid, |e| split.contractive_gradient(e).sub(&b));
    let r = riesz_matrix(grid, p.metric);
    let n = grid.len();
    let lhs = DMatrix::identity(n, n) + dt * &r * a;
    let g = b.sub(&split.expansive_gradient(f));
    let rhs = vec_of(f) - dt * &r * vec_of(&g);
    oracle_solve(lhs, &field_of(grid, &rhs))
}

/// `δF(φⁿ⁺¹)` linearized at `φⁿ`; the reflected term stays explicit.
fn ncs_oracle(p: &AuxProblem, dt: f64, f: &Field) -> Field {
    let grid = f.grid();
    let h = dense(grid, |e| p.model.hessian_apply(f, e).unwrap());
    let r = riesz_matrix(grid, p.metric);
    let n = grid.len();
    let mut g = vec_of(&p.model.gradient_l2(f).unwrap()) - &h * vec_of(f);
    if !p.is_relaxation() {
        let hat = p.phi_hat(f).unwrap();
        let c = l2(&p.v, &p.model.gradient_l2(&hat).unwrap());
        g -= p.beta * c * vec_of(p.pairing());
    }
    let lhs = DMatrix::identity(n, n) + dt * &r * h;
    let rhs = vec_of(f) - dt * &r * g;
    oracle_solve(lhs, &field_of(grid, &rhs))
}

fn named_step(c: &Case, cfg: &StepperConfig, p: &AuxProblem, f: &Field) -> Field {
    let step = match (c.name, cfg.kind) {
        ("ac", SchemeKind::Cs) => step_cs_ac,
        ("ac", SchemeKind::Ncs) => step_ncs_ac,
        ("ch", SchemeKind::Cs) => step_cs_ch,
        ("ch", SchemeKind::Ncs) => step_ncs_ch,
        ("lb", SchemeKind::Cs) => step_cs_lb,
        (_, SchemeKind::Ncs) => step_ncs_lb,
        _ => unreachable!(),
    };
    step(cfg, p, f).unwrap()
}

#[test]
fn every_stepper_matches_its_dense_oracle() {
    for c in cases() {
        for relaxation in [true, false] {
            let p = problem(&c, relaxation);
            for kind in [SchemeKind::Cs, SchemeKind::Ncs] {
                let dt = if c.name == "lb" { 1.0 } else { 0.1 };
                let cfg = config(&c, dt, kind, relaxation);
                let mut r = rng(11);
                let f = match c.metric {
                    Metric::L2 => c.phi.add(&smooth(&c.grid, &mut r, 0.05)),
                    Metric::HMinus1 => c.phi.add(&with_mass(&smooth(&c.grid, &mut r, 0.05), 0.0)),
                };
                let got = named_step(&c, &cfg, &p, &f);
                let want = match kind {
                    SchemeKind::Cs => cs_oracle(&p, dt, &f),
                    SchemeKind::Ncs => ncs_oracle(&p, dt, &f),
                };
                let err = rel_diff(&got, &want);
                let tol = match kind {
                    SchemeKind::Cs => 1e-10,
                    SchemeKind::Ncs => 1e-9,
                };
                assert!(
                    err <= tol,
                    "{} {:?} relax={relaxation} {:?}: {err:e}",
                    c.name,
                    c.grid.bc(),
                    kind
                );
            }
        }
    }
}

#[test]
fn named_steppers_reject_the_wrong_problem() {
    let c = &cases()[0];
    let p = problem(c, false);
    let cfg = config(c, 0.1, SchemeKind::Cs, false);
    assert!(step_cs_ch(&cfg, &p, &c.phi).is_err());
    assert!(step_ncs_ac(&cfg, &p, &c.phi).is_err());
}

#[test]
fn implicit_solve_matches_dense_assembly() {
    let grid = line(48, Boundary::Neumann);
    let mut r = rng(3);
    let a = smooth(&grid, &mut r, 1.0);
    let b = smooth(&grid, &mut r, 1.0);
    let a2 = smooth(&grid, &mut r, 1.0);
    let b2 = smooth(&grid, &mut r, 1.0);
    let rhs = smooth(&grid, &mut r, 1.0);
    let op = ImplicitOperator::new(&grid, grid.symbol(|mu| 1.0 + 0.3 * mu))
        .unwrap()
        .with_correction(a.clone(), b.clone(), 0.7)
        .unwrap()
        .with_correction(a2.clone(), b2.clone(), -0.4)
        .unwrap();
    let x = solve_implicit(&op, &rhs).unwrap();
    // D = I − 0.3 Δ_h assembled from the stencil, corrections from the
    // quadrature inner product
    let n = grid.len();
    let mut m = DMatrix::identity(n, n) + 0.3 * riesz_matrix(&grid, Metric::HMinus1);
    for (u, w, s) in [(&a, &b, 0.7), (&a2, &b2, -0.4)] {
        let wb: Vec<f64> = (0..n).map(|k| grid.weight(k) * w.values()[k]).collect();
        m += s * vec_of(u) * nalgebra::DVector::from_vec(wb).transpose();
    }
    let want = oracle_solve(m, &rhs);
    assert!(rel_diff(&x, &want) <= 1e-10);
    assert!(rel_diff(&op.apply(&x), &rhs) <= 1e-10);

    let id = ImplicitOperator::identity(&grid);
    assert!(rel_diff(&solve_implicit(&id, &rhs).unwrap(), &rhs) <= 1e-15);
}

#[test]
fn singular_operators_are_refused() {
    let grid = line(16, Boundary::Periodic);
    let sym = grid.symbol(|mu| mu);
    assert!(ImplicitOperator::new(&grid, sym).is_err());
    let a = Field::constant(&grid, 1.0);
    let op = ImplicitOperator::identity(&grid).with_correction(a.clone(), a, -1.0);
    assert!(op.is_err());
}

/// AC and CH anchors from the standard starting profiles, with the true
/// min-mode; LB from a small random field.
fn stability_problems() -> Vec<(&'static str, AuxProblem)> {
    let mut out = Vec::new();
    let grid = line(100, Boundary::Neumann);
    let ac = gl(0.01);
    let phi = imfcs::fields::cos_pi_x(&grid);
    let v = min_mode(&ac, &phi, &EigOptions::new(Metric::L2)).unwrap().v;
    out.push((
        "ac",
        AuxProblem::new(ac, Metric::L2, phi, v, 0.0, 2.0).unwrap(),
    ));

    let ch = gl(0.04);
    let phi = imfcs::harness::ch_neumann_init().build(&grid).unwrap();
    let v = min_mode(&ch, &phi, &EigOptions::new(Metric::HMinus1))
        .unwrap()
        .v;
    out.push((
        "ch",
        AuxProblem::new(ch, Metric::HMinus1, phi, v, 0.0, 2.0).unwrap(),
    ));

    let grid = square(16);
    let phi = with_mass(&smooth(&grid, &mut rng(5), 0.3), 0.0);
    let v = min_mode(&lb(), &phi, &EigOptions::new(Metric::HMinus1))
        .unwrap()
        .v;
    out.push((
        "lb",
        AuxProblem::new(lb(), Metric::HMinus1, phi, v, 0.0, 2.0).unwrap(),
    ));
    out
}

#[test]
fn hm1_steppers_conserve_mass() {
    for (name, p) in stability_problems()
        .into_iter()
        .filter(|(_, p)| p.metric == Metric::HMinus1)
    {
        let problem = Problem::of(&p.model, p.metric).unwrap();
        for kind in [SchemeKind::Cs, SchemeKind::Ncs] {
            // nCS at large Δt diverges on CH; the contract concerns bounded runs
            let dts: &[f64] = match kind {
                SchemeKind::Cs => &[0.01, 1.0, 10.0],
                SchemeKind::Ncs => &[0.001, 0.01],
            };
            for &dt in dts {
                let stepper = Stepper::new(StepperConfig::new(dt, kind, problem), &p).unwrap();
                let mut f = p.phi_k.clone();
                let m0 = mass(&f);
                for n in 0..50 {
                    let next = stepper.step(&p, &f).unwrap();
                    let d = (mass(&next) - mass(&f)).abs();
                    assert!(d <= 1e-12, "{name} {kind:?} dt={dt} step {n}: {d:e}");
                    f = next;
                }
                assert!((mass(&f) - m0).abs() <= 1e-10);
            }
        }
    }
}

#[test]
fn convex_splitting_decreases_l_at_every_step_size() {
    for (name, p) in stability_problems() {
        let problem = Problem::of(&p.model, p.metric).unwrap();
        for dt in DTS {
            let stepper =
                Stepper::new(StepperConfig::new(dt, SchemeKind::Cs, problem), &p).unwrap();
            let mut f = p.phi_k.clone();
            let mut l = p.aux_value(&f).unwrap();
            for n in 0..100 {
                f = stepper.step(&p, &f).unwrap();
                let next = p.aux_value(&f).unwrap();
                assert!(
                    next <= l + 1e-10 * l.abs(),
                    "{name} dt={dt} step {n}: {l} -> {next}"
                );
                l = next;
            }
        }
    }
}

#[test]
fn convex_splitting_relaxation_decreases_f_at_every_step_size() {
    for (name, q) in stability_problems() {
        let p = AuxProblem::relaxation(q.model, q.metric, q.phi_k.clone()).unwrap();
        let problem = Problem::of(&p.model, p.metric).unwrap();
        let func = p.model.functional();
        for dt in DTS {
            let cfg = StepperConfig::new(dt, SchemeKind::Cs, problem).relaxing();
            let stepper = Stepper::new(cfg, &p).unwrap();
            let mut f = p.phi_k.clone();
            let mut e = func.value(&f);
            for n in 0..100 {
                f = stepper.step(&p, &f).unwrap();
                let next = func.value(&f);
                assert!(
                    next <= e + 1e-10 * e.abs(),
                    "{name} dt={dt} step {n}: {e} -> {next}"
                );
                e = next;
            }
        }
    }
}

#[test]
fn cs_and_ncs_agree_to_second_order_in_dt() {
    // On the unit interval the CH stabilization makes Δt = 1e-2 far from
    // asymptotic; a longer interval keeps the same equations resolvable.
    for c in cases_on(4.0) {
        let p = problem(&c, false);
        let dts = [1e-2, 1e-3, 1e-4];
        let diffs: Vec<f64> = dts
            .iter()
            .map(|&dt| {
                let cs = Stepper::new(config(&c, dt, SchemeKind::Cs, false), &p).unwrap();
                let ncs = Stepper::new(config(&c, dt, SchemeKind::Ncs, false), &p).unwrap();
                let a = cs.step(&p, &c.phi).unwrap();
                let b = ncs.step(&p, &c.phi).unwrap();
                a.sub(&b).max_abs()
            })
            .collect();
        let order = loglog_slope(&dts, &diffs);
        assert!(
            order >= 1.8,
            "{} {:?}: order {order} from {diffs:?}",
            c.name,
            c.grid.bc()
        );
    }
}

#[test]
fn stationary_points_are_fixed_points() {
    // φ ≡ 0 is critical for GL; the constant mode is its min-mode in L².
    let grid = line(64, Boundary::Neumann);
    let zero = Field::zeros(&grid);
    let v = zero_mean_unit(Metric::L2, &Field::constant(&grid, 1.0));
    let p = AuxProblem::new(gl(0.01), Metric::L2, zero.clone(), v, 0.0, 2.0).unwrap();
    for kind in [SchemeKind::Cs, SchemeKind::Ncs] {
        let s = Stepper::new(StepperConfig::new(10.0, kind, Problem::AcL2), &p).unwrap();
        assert!(s.step(&p, &zero).unwrap().max_abs() <= 1e-10);
    }
    // any constant is critical for the H⁻¹ flow
    let grid = line(64, Boundary::Periodic);
    let m = Field::constant(&grid, 0.6);
    let v = zero_mean_unit(
        Metric::HMinus1,
        &imfcs::fields::cos_pi_x(&grid).map(|x| 2.0 * x * x - 1.0),
    );
    let p = AuxProblem::new(gl(0.04), Metric::HMinus1, m.clone(), v, 0.0, 2.0).unwrap();
    for kind in [SchemeKind::Cs, SchemeKind::Ncs] {
        let s = Stepper::new(StepperConfig::new(10.0, kind, Problem::ChHm1), &p).unwrap();
        assert!(s.step(&p, &m).unwrap().sub(&m).max_abs() <= 1e-10);
    }
}

#[test]
fn relaxation_reaches_the_global_minimum() {
    let grid = line(200, Boundary::Neumann);
    let f0 = Field::constant(&grid, 0.9);
    let cfg = StepperConfig::new(1.0, SchemeKind::Cs, Problem::AcL2).relaxing();
    let (f, rep) = relax(gl(0.01), Metric::L2, &f0, &cfg, RelaxOptions::default()).unwrap();
    assert!(rep.energy.abs() <= 1e-10);
    assert!(f.sub(&Field::constant(&grid, 1.0)).max_abs() <= 1e-8);
}

#[test]
fn cahn_hilliard_relaxation_finds_the_transition_layer() {
    let grid = line(200, Boundary::Neumann);
    let f0 = imfcs::harness::ch_neumann_init().build(&grid).unwrap();
    let cfg = StepperConfig::new(1.0, SchemeKind::Cs, Problem::ChHm1).relaxing();
    let (f, rep) = relax(
        gl(0.04),
        Metric::HMinus1,
        &f0,
        &cfg,
        RelaxOptions::default(),
    )
    .unwrap();
    assert!((rep.energy - 0.03772).abs() <= 5e-4, "F = {}", rep.energy);
    assert!((mass(&f) - mass(&f0)).abs() <= 1e-10);
}

#[test]
fn relaxation_refuses_an_imf_config() {
    let grid = line(32, Boundary::Neumann);
    let cfg = StepperConfig::new(1.0, SchemeKind::Cs, Problem::AcL2);
    let f0 = Field::constant(&grid, 0.9);
    assert!(relax(gl(0.01), Metric::L2, &f0, &cfg, RelaxOptions::default()).is_err());
}

#[test]
fn steppers_reject_nonpositive_dt() {
    let c = &cases()[0];
    let p = problem(c, false);
    for dt in [0.0, -1.0, f64::NAN] {
        assert!(Stepper::new(config(c, dt, SchemeKind::Cs, false), &p).is_err());
    }
}
