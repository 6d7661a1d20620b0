use bog_lab::divsolve::{random_data, DivSolver};
use bog_lab::energy::{build_cutoff, energy_ledger, ExactSolution};
use bog_lab::exponents::{beta, beta_ps, q_of_delta, ratio, ExponentParams, Q};
use bog_lab::fields::{cartesian_gradient, divergence, lq_norm, lq_norm_where, mean_zero_project, Field};
use bog_lab::geometry::{build_grid, make_domain, DomainKind, DomainSpec, Grid};
use bog_lab::pressure::PressureEstimator;
use bog_lab::transforms::{boundary_trace, TransformParams};
use bog_lab::Exec;
use num_traits::Signed;
use proptest::prelude::*;
use std::f64::consts::PI;
use std::sync::Arc;

fn grid(kind: DomainKind, r: f64, l: f64, n: [usize; 3]) -> Arc<Grid> {
    Arc::new(build_grid(&make_domain(kind, r, l).unwrap(), n).unwrap())
}

fn physical_kind() -> impl Strategy<Value = DomainKind> {
    prop_oneof![
        Just(DomainKind::Annulus3D),
        Just(DomainKind::HalfAnnulus3D),
        Just(DomainKind::CylinderShell),
        Just(DomainKind::SlabShell),
    ]
}

fn rational(max_num: i64, den: i64) -> impl Strategy<Value = Q> {
    (0..=max_num).prop_map(move |n| ratio(n, den))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn volumes_follow_closed_forms_and_scale(kind in physical_kind(), r in 0.1..20.0f64, l in 1.05..5.0f64, s in 0.5..8.0f64) {
        let d = make_domain(kind, r, l).unwrap();
        let shell = match kind {
            DomainKind::Annulus3D => 4.0 * PI / 3.0 * r.powi(3) * (l.powi(3) - 1.0),
            DomainKind::HalfAnnulus3D => 2.0 * PI / 3.0 * r.powi(3) * (l.powi(3) - 1.0),
            DomainKind::CylinderShell => PI * r.powi(3) * (l * l - 1.0),
            _ => PI * r * r * (l * l - 1.0),
        };
        prop_assert!((d.volume() - shell).abs() <= 1e-12 * shell);
        let g = build_grid(&d, [3, 4, 4]).unwrap();
        prop_assert!((g.total_weight() - shell).abs() <= 1e-10 * shell);
        if kind != DomainKind::SlabShell {
            let big = d.dilate(s).unwrap();
            prop_assert!((big.volume() - s.powi(3) * shell).abs() <= 1e-10 * s.powi(3) * shell);
        }
    }

    #[test]
    fn holder_step_and_restriction(seed in any::<u64>(), q in 2.0..6.0f64, cut in 1.1..1.9f64) {
        let g = grid(DomainKind::Annulus3D, 1.0, 2.0, [4, 4, 8]);
        let f = &random_data(&g, 1, seed)[0];
        let full = lq_norm(f, q).unwrap().value;
        let half = lq_norm(f, q / 2.0).unwrap().value;
        prop_assert!(half <= g.total_weight().powf(1.0 / q) * full * (1.0 + 1e-12));
        let inner = lq_norm_where(f, q, |x| (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt() < cut).unwrap().value;
        prop_assert!(inner <= full);
    }

    #[test]
    fn exponents_are_lipschitz_and_q_is_consistent(d in rational(99, 100), a in rational(199, 100)) {
        let h = ratio(1, 100);
        let at = |d: &Q, a: &Q| ExponentParams::new(d.clone(), a.clone()).unwrap();
        let p = at(&d, &a);
        // Sup of the partial derivatives over [0, 1] x [0, 2] is about 4.54, reached by the second term near (1, 2).
        let bound = ratio(5, 100);
        for next in [at(&(&d + &h), &a), at(&d, &(&a + &h))] {
            prop_assert!((beta(&next) - beta(&p)).abs() <= bound);
            prop_assert!((beta_ps(&next) - beta_ps(&p)).abs() <= bound);
        }
        let q = q_of_delta(&d).unwrap();
        prop_assert_eq!(&q * (ratio(1, 1) - &d / ratio(6, 1)), ratio(3, 1) - &d);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn transported_solution_never_beats_the_minimizer(seed in any::<u64>()) {
        let params = TransformParams::spherical(1.5).unwrap();
        let reference = Arc::new(build_grid(&DomainSpec::reference(DomainKind::ReferenceAnnulus).unwrap(), [6, 6, 8]).unwrap());
        let physical = Arc::new(params.mapped_grid(&reference).unwrap());
        let f = &random_data(&physical, 1, seed)[0];
        let out = params.bogovskii(f, 2.0, &DivSolver::new(reference).unwrap()).unwrap();
        let best = DivSolver::new(physical).unwrap().solve(&out.faces.divergence(), 2.0).unwrap();
        prop_assert!(out.faces.grad_norm(2.0) >= best.grad_norm * (1.0 - 1e-6));
    }

    #[test]
    fn constants_are_dilation_invariant(s in 0.2..50.0f64, kind in prop_oneof![Just(DomainKind::Annulus3D), Just(DomainKind::CylinderShell)]) {
        let base = build_grid(&make_domain(kind, 1.0, 1.75).unwrap(), [4, 6, 6]).unwrap();
        let a = DivSolver::new(Arc::new(base.dilate(s).unwrap())).unwrap().estimate_constant(2.0).unwrap().c_star;
        let b = DivSolver::new(Arc::new(base)).unwrap().estimate_constant(2.0).unwrap().c_star;
        prop_assert!((a - b).abs() <= 1e-8 * b);
    }

    #[test]
    fn pressure_deviation_ignores_constants(seed in any::<u64>(), shift in -100.0..100.0f64) {
        let g = grid(DomainKind::Annulus3D, 1.0, 2.0, [4, 4, 8]);
        let est = PressureEstimator::new(g.clone(), 2.0, 1, 1).unwrap();
        let p = &random_data(&g, 1, seed)[0];
        let moved = Field::scalar_fn(g.clone(), |_| shift).axpy(1.0, p).unwrap();
        let a = est.estimate(p).unwrap();
        let b = est.estimate(&moved).unwrap();
        prop_assert!((a.lhs - b.lhs).abs() <= 1e-10 * a.lhs);
        prop_assert!((a.paired - a.power).abs() <= 1e-6 * a.power);
        prop_assert!(a.chain_slack >= -1e-8 * a.lhs);
    }

    #[test]
    fn ledger_depends_only_on_the_pressure_deviation(k in -50.0..50.0f64, c in -2.0..2.0f64) {
        let z = build_cutoff(1.0, 0.125, 2.0).unwrap();
        let g = Arc::new(Grid::ball(2.0, [6, 6, 12]).unwrap());
        let (u, p) = ExactSolution::RigidRotation.sample(&g);
        let moved = p.axpy(k, &Field::scalar_fn(g.clone(), |_| 1.0)).unwrap();
        let a = energy_ledger(&u, &p, &z, c).unwrap();
        let b = energy_ledger(&u, &moved, &z, c + k).unwrap();
        prop_assert_eq!(a.lhs, b.lhs);
        prop_assert_eq!(a.i1, b.i1);
        prop_assert!((a.i3 - b.i3).abs() <= 1e-12 * (1.0 + k.abs()) * a.lhs);
    }

    #[test]
    fn pushforward_keeps_zero_trace(a in -1.0..1.0f64, b in -1.0..1.0f64, c in -1.0..1.0f64) {
        let params = TransformParams::spherical(1.25).unwrap();
        let reference = Arc::new(build_grid(&DomainSpec::reference(DomainKind::ReferenceAnnulus).unwrap(), [32, 8, 8]).unwrap());
        let vbar = Field::vector_frame(reference, |x| {
            let bump = (x[0] - 1.0) * (2.0 - x[0]);
            [bump * (1.0 + a * x[1].cos()), bump * b * x[1].sin(), bump * (c + x[2].sin())]
        });
        prop_assert!(boundary_trace(&params.push_field(&vbar).unwrap()) < 1e-3);
    }
}

#[test]
fn policies_give_identical_constants() {
    let g = grid(DomainKind::HalfAnnulus3D, 1.0, 1.5, [4, 6, 8]);
    let seq = DivSolver::with_exec(g.clone(), Exec::Sequential).unwrap().estimate_constant(2.0).unwrap();
    let par = DivSolver::with_exec(g, Exec::Parallel).unwrap().estimate_constant(2.0).unwrap();
    assert_eq!(seq.c_star.to_bits(), par.c_star.to_bits());
}

fn order(errs: &[f64]) -> f64 {
    errs.windows(2).map(|w| (w[0] / w[1]).log2()).fold(f64::INFINITY, f64::min)
}

#[test]
fn midpoint_quadrature_is_second_order() {
    // int rho^2 theta over the annulus 1 < rho < 2, exact with the spherical measure
    let exact = (2f64.powi(5) - 1.0) / 5.0 * PI * 2.0 * PI;
    let errs: Vec<f64> = [8, 16, 32]
        .iter()
        .map(|&n| {
            let g = grid(DomainKind::Annulus3D, 1.0, 2.0, [n, n, 4]);
            (Field::scalar_coords(g, |c| c[0] * c[0] * c[1]).integral() - exact).abs() / exact
        })
        .collect();
    assert!(order(&errs) >= 1.9, "{errs:?}");
}

#[test]
fn divergence_matches_gradient_trace_at_second_order() {
    let errs: Vec<f64> = [8, 16, 32]
        .iter()
        .map(|&n| {
            let g = grid(DomainKind::Annulus3D, 1.0, 2.0, [n, n, 2 * n]);
            let v = Field::vector_cartesian(g.clone(), |x| [x[0] * x[1], (x[2]).sin(), x[0] * x[0] + x[2]]);
            let div = divergence(&v, g.coords).unwrap();
            let grads = cartesian_gradient(&v).unwrap();
            let trace: Vec<f64> = grads.iter().map(|m| m[0][0] + m[1][1] + m[2][2]).collect();
            let gap: Vec<f64> = div.data.iter().zip(&trace).map(|(a, b)| a - b).collect();
            let gap = Field::new(g.clone(), div.rank, gap).unwrap();
            lq_norm(&gap, 2.0).unwrap().value
        })
        .collect();
    assert!(order(&errs) >= 1.8, "{errs:?}");
}

#[test]
fn transported_norm_ratio_tracks_the_shell_width() {
    let scaled: Vec<f64> = [1.5, 1.25, 1.125, 1.0625]
        .iter()
        .map(|&l| {
            let params = TransformParams::spherical(l).unwrap();
            let reference =
                Arc::new(build_grid(&DomainSpec::reference(DomainKind::ReferenceAnnulus).unwrap(), [8, 8, 8]).unwrap());
            let physical = Arc::new(params.mapped_grid(&reference).unwrap());
            let f = mean_zero_project(&Field::scalar_fn(physical, |x| x[0] + x[1] * x[2])).unwrap();
            let out = params.bogovskii(&f, 2.0, &DivSolver::new(reference).unwrap()).unwrap();
            out.result.norm_ratio * (l - 1.0)
        })
        .collect();
    let hi = scaled.iter().cloned().fold(f64::MIN, f64::max);
    let lo = scaled.iter().cloned().fold(f64::MAX, f64::min);
    assert!(hi / lo <= 3.0, "{scaled:?}");
}

#[test]
fn constants_do_not_drop_under_refinement() {
    for kind in [DomainKind::Annulus3D, DomainKind::HalfAnnulus3D] {
        let c: Vec<f64> = [[2, 4, 4], [4, 8, 8], [8, 16, 16]]
            .iter()
            .map(|&n| DivSolver::new(grid(kind, 1.0, 2.0, n)).unwrap().estimate_constant(2.0).unwrap().c_star)
            .collect();
        assert!(c.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-3)), "{kind}: {c:?}");
    }
}

#[test]
fn sampled_supremum_meets_the_eigen_constant_at_its_datum() {
    let s = DivSolver::new(grid(DomainKind::Annulus3D, 1.0, 2.0, [4, 6, 8])).unwrap();
    let eig = s.estimate_constant(2.0).unwrap();
    let datum = mean_zero_project(&eig.extremal.unwrap().datum).unwrap();
    let sampled = random_data(s.grid(), 5, 2)
        .iter()
        .chain(std::iter::once(&datum))
        .map(|f| s.solve(f, 2.0).unwrap().constant_estimate)
        .fold(0.0, f64::max);
    assert!((sampled - eig.c_star).abs() <= 0.05 * eig.c_star);
}
