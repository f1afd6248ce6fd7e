mod common;

use common::*;
use imfcs::energy::{Model, SplitKind};
use imfcs::fields::{cos_pi_x, inner, mass, Boundary, Field, Metric};
use imfcs::harness::fitted_order;
use imfcs::imf::{
    branch_split, build_aux_split, run_cycle, run_imf, AuxProblem, ImfOptions, ImfStatus,
    InnerStop, RunRecord, SignBranch, Termination,
};
use imfcs::minmode::{min_mode, spectrum_head, EigOptions};
use imfcs::schemes::{Problem, SchemeKind, Stepper, StepperConfig};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn aux(
    model: Model,
    metric: Metric,
    phi_k: &Field,
    v: &Field,
    alpha: f64,
    beta: f64,
) -> AuxProblem {
    AuxProblem::new(model, metric, phi_k.clone(), v.clone(), alpha, beta).unwrap()
}

/// A random anchor in the convex range with a random unit direction.
fn random_problem(seed: u64, metric: Metric, bc: Boundary, alpha: f64, beta: f64) -> AuxProblem {
    let grid = line(64, bc);
    let mut r = rng(seed);
    let (model, phi) = match metric {
        Metric::L2 => (gl(0.05), smooth(&grid, &mut r, 0.6)),
        Metric::HMinus1 => (gl(0.04), with_mass(&smooth(&grid, &mut r, 0.3), 0.3)),
    };
    let v = zero_mean_unit(metric, &smooth(&grid, &mut r, 1.0));
    aux(model, metric, &phi, &v, alpha, beta)
}

/// `f = φ_k + δ` with a small `δ` of zero mass.
fn nearby(p: &AuxProblem, seed: u64, amp: f64) -> Field {
    let d = with_mass(&smooth(p.phi_k.grid(), &mut rng(seed), amp), 0.0);
    p.phi_k.add(&d)
}

const SETTINGS: [(Metric, Boundary); 4] = [
    (Metric::L2, Boundary::Neumann),
    (Metric::L2, Boundary::Periodic),
    (Metric::HMinus1, Boundary::Neumann),
    (Metric::HMinus1, Boundary::Periodic),
];

#[test]
fn reflection_is_trivial_at_the_anchor_and_off_the_mode() {
    for (i, (metric, bc)) in SETTINGS.into_iter().enumerate() {
        let p = random_problem(i as u64, metric, bc, 0.0, 2.0);
        assert!(rel_diff(&p.phi_hat(&p.phi_k).unwrap(), &p.phi_k) <= 1e-15);
        // remove the v component in the metric
        let d = with_mass(&smooth(p.phi_k.grid(), &mut rng(99), 0.2), 0.0);
        let c = inner(metric, &p.v, &d).unwrap();
        let orth = d.sub(&p.v.scaled(c));
        let hat = p.phi_hat(&p.phi_k.add(&orth)).unwrap();
        assert!(hat.sub(&p.phi_k).max_abs() <= 1e-12, "{metric:?} {bc:?}");
    }
}

#[test]
fn reflection_matches_the_dense_tensor() {
    for (i, (metric, bc)) in SETTINGS.into_iter().enumerate() {
        let p = random_problem(10 + i as u64, metric, bc, 0.0, 2.0);
        let grid = p.phi_k.grid().clone();
        let n = grid.len();
        let wts = DVector::from_iterator(n, (0..n).map(|k| grid.weight(k)));
        // H⁻¹ pairing: w solves −Δw = v with zero mass (bordered system)
        let w = match metric {
            Metric::L2 => vec_of(&p.v),
            Metric::HMinus1 => {
                let a = riesz_matrix(&grid, metric);
                let mut b = DMatrix::zeros(n + 1, n + 1);
                b.view_mut((0, 0), (n, n)).copy_from(&a);
                for k in 0..n {
                    b[(n, k)] = wts[k];
                    b[(k, n)] = wts[k];
                }
                let mut rhs = DVector::zeros(n + 1);
                rhs.rows_mut(0, n).copy_from(&vec_of(&p.v));
                b.lu().solve(&rhs).unwrap().rows(0, n).into_owned()
            }
        };
        let gram = vec_of(&p.v) * w.component_mul(&wts).transpose();
        let f = nearby(&p, 5, 0.3);
        let want = vec_of(&p.phi_k) + gram * (vec_of(&f) - vec_of(&p.phi_k));
        let got = p.phi_hat(&f).unwrap();
        assert!(
            rel_diff(&got, &field_of(&grid, &want)) <= 1e-10,
            "{metric:?} {bc:?}"
        );
    }
}

#[test]
fn value_at_the_anchor_is_one_minus_beta_times_f() {
    for (alpha, beta) in [(0.0, 2.0), (0.5, 1.0), (-0.5, 2.0), (1.5, -0.2), (1.0, 0.5)] {
        let p = random_problem(3, Metric::L2, Boundary::Neumann, alpha, beta);
        let f0 = p.model.energy(&p.phi_k).unwrap();
        let l = p.aux_value(&p.phi_k).unwrap();
        assert!(
            (l - (1.0 - beta) * f0).abs() <= 1e-13 * f0.abs().max(1.0),
            "({alpha},{beta})"
        );
    }
    let p = random_problem(4, Metric::HMinus1, Boundary::Periodic, 0.0, 2.0);
    let f0 = p.model.energy(&p.phi_k).unwrap();
    assert!((p.aux_value(&p.phi_k).unwrap() + f0).abs() <= 1e-13);
}

#[test]
fn alpha_plus_beta_must_exceed_one() {
    let p = random_problem(1, Metric::L2, Boundary::Neumann, 0.0, 2.0);
    assert!(AuxProblem::new(p.model, p.metric, p.phi_k.clone(), p.v.clone(), 0.5, 0.5).is_err());
    assert!(AuxProblem::new(
        p.model,
        p.metric,
        p.phi_k.clone(),
        p.v.scaled(2.0),
        0.0,
        2.0
    )
    .is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn gradient_matches_central_differences(
        seed in 0u64..10_000,
        setting in 0usize..4,
        ab in prop::sample::select(vec![(0.0, 2.0), (0.5, 1.0), (-0.5, 2.0), (1.5, -0.2)]),
    ) {
        let (metric, bc) = SETTINGS[setting];
        let p = random_problem(seed, metric, bc, ab.0, ab.1);
        let f = nearby(&p, seed + 1, 0.2);
        let psi = with_mass(&smooth(f.grid(), &mut rng(seed + 2), 1.0), 0.0);
        let eps = 1e-5;
        let fd = (p.aux_value(&f.add(&psi.scaled(eps))).unwrap() - p.aux_value(&f.sub(&psi.scaled(eps))).unwrap())
            / (2.0 * eps);
        let an = l2(&p.aux_gradient(&f).unwrap(), &psi);
        prop_assert!((fd - an).abs() <= 1e-6 * an.abs().max(1e-3), "fd {} vs {}", fd, an);
    }

    #[test]
    fn split_parts_recombine(seed in 0u64..10_000, setting in 0usize..4) {
        let (metric, bc) = SETTINGS[setting];
        let p = random_problem(seed, metric, bc, 0.0, 2.0);
        let s = build_aux_split(&p).unwrap();
        let f = nearby(&p, seed + 1, 0.3);
        let l = p.aux_value(&f).unwrap();
        let diff = s.contractive_value(&f) - s.expansive_value(&f);
        prop_assert!((diff - l).abs() <= 1e-12 * l.abs().max(1.0));
        let g = s.contractive_gradient(&f).sub(&s.expansive_gradient(&f));
        prop_assert!(rel_diff(&g, &p.aux_gradient(&f).unwrap()) <= 1e-10);
    }
}

#[test]
fn split_parts_are_convex_in_range() {
    let (lo, hi) = gl(0.05).convex_range();
    for (i, (metric, bc)) in SETTINGS.into_iter().enumerate() {
        let p = random_problem(40 + i as u64, metric, bc, 0.0, 2.0);
        let s = build_aux_split(&p).unwrap();
        let f = nearby(&p, 41, 0.05);
        assert!(f.values().iter().all(|x| (lo..=hi).contains(x)));
        let mut r = rng(42);
        for _ in 0..100 {
            let psi = smooth(f.grid(), &mut r, 1.0);
            let nn = l2(&psi, &psi);
            let (c, e) = s.curvatures(&f, &psi);
            assert!(
                c >= -1e-10 * nn && e >= -1e-10 * nn,
                "{metric:?} {bc:?}: {c} {e}"
            );
        }
    }
}

#[test]
fn every_sign_branch_is_convex_in_range() {
    let cases = [
        ((0.5, 1.5), SignBranch::BothNonNegative),
        ((-0.5, 2.0), SignBranch::AlphaNegative),
        ((1.5, -0.2), SignBranch::BetaNegative),
    ];
    for ((alpha, beta), branch) in cases {
        assert_eq!(SignBranch::of(alpha, beta).unwrap(), branch);
        for (i, (metric, bc)) in SETTINGS.into_iter().enumerate() {
            let p = random_problem(60 + i as u64, metric, bc, alpha, beta);
            let f = nearby(&p, 61, 0.05);
            let mut r = rng(62);
            for kind in [
                SplitKind::LinearContractive,
                SplitKind::NonlinearContractive,
            ] {
                for _ in 0..100 {
                    let psi = smooth(f.grid(), &mut r, 1.0);
                    let nn = l2(&psi, &psi);
                    let ((vc, ve), (qc, qe)) = branch_split(&p, kind, &f, &psi).unwrap();
                    let l = p.aux_value(&f).unwrap();
                    assert!((vc - ve - l).abs() <= 1e-10 * l.abs().max(1.0));
                    assert!(
                        qc >= -1e-10 * nn && qe >= -1e-10 * nn,
                        "{branch:?} {kind:?} {metric:?} {bc:?}: {qc} {qe}"
                    );
                }
            }
        }
    }
    assert!(SignBranch::of(-1.0, -1.0).is_err());
}

#[test]
fn reflection_inequality_holds_on_random_periodic_pairs() {
    for metric in [Metric::L2, Metric::HMinus1] {
        let p = random_problem(80, metric, Boundary::Periodic, 0.0, 2.0);
        let s = build_aux_split(&p).unwrap();
        for k in 0..50 {
            let phi = nearby(&p, 1000 + k, 0.05);
            let psi = nearby(&p, 2000 + k, 0.05);
            let lhs = p.aux_value(&phi).unwrap() - p.aux_value(&psi).unwrap();
            let g = s
                .contractive_gradient(&phi)
                .sub(&s.expansive_gradient(&psi));
            let rhs = l2(&g, &phi.sub(&psi));
            assert!(lhs <= rhs + 1e-10, "{metric:?} pair {k}: {lhs} > {rhs}");
        }
    }
}

fn ac_saddle_problem(cells: usize) -> AuxProblem {
    let grid = line(cells, Boundary::Neumann);
    let model = gl(0.01);
    let phi = cos_pi_x(&grid);
    let v = min_mode(&model, &phi, &EigOptions::new(Metric::L2))
        .unwrap()
        .v;
    aux(model, Metric::L2, &phi, &v, 0.0, 2.0)
}

fn cycle(
    p: &AuxProblem,
    kind: SchemeKind,
    dt: f64,
    stop: InnerStop,
) -> (Field, imfcs::imf::CycleReport, Vec<RunRecord>) {
    let problem = Problem::of(&p.model, p.metric).unwrap();
    let stepper = Stepper::new(StepperConfig::new(dt, kind, problem), p).unwrap();
    let mut trace = Vec::new();
    let mut rec = |r: &RunRecord| trace.push(*r);
    let (f, rep) = run_cycle(p, &stepper, stop, 0, f64::NAN, Some(&mut rec)).unwrap();
    (f, rep, trace)
}

#[test]
fn first_cycle_iteration_counts() {
    let p = ac_saddle_problem(200);
    let (_, rep, _) = cycle(
        &p,
        SchemeKind::Cs,
        0.01,
        InnerStop::tolerance(1e-4, 100_000),
    );
    assert_eq!(rep.termination, Termination::Tolerance);
    assert!(
        (rep.iterations as f64 - 777.0).abs() <= 77.7,
        "{}",
        rep.iterations
    );

    let (_, rep, _) = cycle(
        &p,
        SchemeKind::Cs,
        10.0,
        InnerStop::tolerance(1e-8, 100_000),
    );
    assert!(
        (rep.iterations as i64 - 28).abs() <= 5,
        "{}",
        rep.iterations
    );

    // nCS at Δt = 5 never reaches the tolerance
    let (_, rep, _) = cycle(
        &p,
        SchemeKind::Ncs,
        5.0,
        InnerStop::tolerance(1e-4, 100_000),
    );
    assert!(rep.termination.is_failure(), "{:?}", rep.termination);
}

#[test]
fn inner_runs_decrease_l_monotonically() {
    let p = ac_saddle_problem(200);
    for dt in [0.01, 0.1, 5.0, 10.0] {
        let (_, _, trace) = cycle(&p, SchemeKind::Cs, dt, InnerStop::fixed(300));
        for w in trace.windows(2) {
            assert!(
                w[1].l <= w[0].l + 1e-10 * w[0].l.abs(),
                "dt={dt} iter {}",
                w[1].iter
            );
        }
    }
}

#[test]
fn a_cycle_started_at_its_minimizer_does_not_move() {
    let p = ac_saddle_problem(200);
    let (f, _, _) = cycle(
        &p,
        SchemeKind::Cs,
        10.0,
        InnerStop::tolerance(1e-11, 100_000),
    );
    let q = aux(p.model, p.metric, &f, &p.v, 0.0, 2.0);
    let eps = 1e-6;
    let g = imfcs::fields::gradient_norm(Metric::L2, &q.aux_gradient(&f).unwrap());
    assert!(g <= eps, "{g}");
    let (g2, rep, _) = cycle(&q, SchemeKind::Cs, 10.0, InnerStop::tolerance(eps, 100));
    assert_eq!(rep.iterations, 0);
    assert_eq!(g2.values(), f.values());
}

#[test]
fn outer_loop_examples() {
    let grid = line(200, Boundary::Neumann);
    let model = gl(0.01);
    let opts = ImfOptions::new(Metric::L2, SchemeKind::Cs, 5.0, InnerStop::fixed(50));
    let run = run_imf(&model, &cos_pi_x(&grid), &opts, None).unwrap();
    assert_eq!(run.status, ImfStatus::Converged);
    assert_eq!(run.cycles.len(), 1);
    assert!((model.energy(&run.field).unwrap() - 0.0094).abs() <= 5e-4);
    // saddle certificate
    let head = spectrum_head(&model, &run.field, 2, Metric::L2).unwrap();
    assert!(head[0] < 0.0 && head[1] > 0.0, "{head:?}");

    let grid = line(200, Boundary::Periodic);
    let f0 = Field::from_fn(&grid, |x, _| (2.0 * std::f64::consts::PI * x).sin());
    let opts = ImfOptions::new(Metric::L2, SchemeKind::Cs, 0.01, InnerStop::fixed(100));
    let run = run_imf(&model, &f0, &opts, None).unwrap();
    assert_eq!(run.status, ImfStatus::Converged);
    assert!(
        (run.cycles.len() as i64 - 14).abs() <= 2,
        "{}",
        run.cycles.len()
    );
}

#[test]
fn cahn_hilliard_cycles_keep_the_mass() {
    let grid = line(200, Boundary::Neumann);
    let model = gl(0.04);
    let f0 = imfcs::harness::ch_neumann_init().build(&grid).unwrap();
    let m0 = mass(&f0);
    let mut opts = ImfOptions::new(Metric::HMinus1, SchemeKind::Cs, 0.01, InnerStop::fixed(60));
    opts.max_cycles = 5;
    opts.outer_tolerance = 0.0;
    let run = run_imf(&model, &f0, &opts, None).unwrap();
    assert_eq!(run.status, ImfStatus::CycleCap);
    let drift = (mass(&run.field) - m0).abs();
    assert!(drift <= 1e-10, "{drift:e}");
    assert!(run.warnings.iter().all(|w| !w.contains("drift")));
}

/// Saddle by capped cycles, then a seeded perturbation of size `eps` and
/// cycles with tight inner solves.
fn cycle_map_errors(model: Model, metric: Metric, f0: &Field, dt: f64, eps: f64) -> Vec<f64> {
    let mut o = ImfOptions::new(metric, SchemeKind::Cs, dt, InnerStop::fixed(200));
    o.outer_tolerance = 1e-10;
    let saddle = run_imf(&model, f0, &o, None).unwrap();
    assert_eq!(saddle.status, ImfStatus::Converged);
    let d = with_mass(&smooth(f0.grid(), &mut rng(1), 1.0), 0.0);
    let start = saddle.field.add(&d.scaled(eps));
    let inner = match metric {
        Metric::L2 => 1e-12,
        Metric::HMinus1 => 1e-11,
    };
    let mut o = ImfOptions::new(
        metric,
        SchemeKind::Cs,
        dt,
        InnerStop::tolerance(inner, 400_000),
    );
    o.outer_tolerance = 1e-9;
    o.max_cycles = 6;
    let run = run_imf(&model, &start, &o, None).unwrap();
    assert_eq!(run.status, ImfStatus::Converged, "{:?}", run.errors);
    run.errors
}

#[test]
fn cycle_map_converges_quadratically() {
    let grid = line(200, Boundary::Neumann);
    let f0 = imfcs::harness::ch_neumann_init().build(&grid).unwrap();
    let errors = cycle_map_errors(gl(0.04), Metric::HMinus1, &f0, 0.01, 0.01);
    let order =
        fitted_order(&errors, 1e-10, 3).unwrap_or_else(|| panic!("too few cycles: {errors:?}"));
    assert!(order >= 1.7, "order {order} from {errors:?}");

    // A wider interface keeps the AC saddle away from degeneracy. Its map
    // converges so fast that one run resolves a single pair, so the pairs
    // come from several perturbation sizes.
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for eps in [0.02, 0.01, 0.005] {
        let errors = cycle_map_errors(gl(0.2), Metric::L2, &cos_pi_x(&grid), 1.0, eps);
        x.push(errors[0]);
        y.push(errors[1]);
    }
    let order = loglog_slope(&x, &y);
    assert!(order >= 1.7, "order {order} from {x:?} -> {y:?}");
}

#[test]
fn zero_progress_cycles_are_reported_as_stalled() {
    // An inner tolerance looser than the outer one stops every cycle at its
    // anchor.
    let grid = line(200, Boundary::Neumann);
    let model = gl(0.01);
    let mut opts = ImfOptions::new(
        Metric::L2,
        SchemeKind::Cs,
        10.0,
        InnerStop::tolerance(1e-3, 1000),
    );
    opts.outer_tolerance = 1e-12;
    let run = run_imf(&model, &cos_pi_x(&grid), &opts, None).unwrap();
    assert_eq!(run.status, ImfStatus::Stalled);
    assert!(run.into_result().is_err());
}
