//! Acceptance criteria 1-10, one PASS/FAIL line each.
//!
//! Runs as a plain binary so the report is always printed; exits nonzero when
//! any criterion fails.

use bog_lab::divsolve::{random_data, DivSolver};
use bog_lab::energy::{
    build_cutoff, constant_field_exponent, criterion_quantity, energy_ledger, fit_exponent, step_slope, Criterion,
    ExactSolution, Region,
};
use bog_lab::exponents::{
    beta, branch_condition, branch_equivalence_mismatches, branch_polynomial, certify, int, q_of_delta, ratio,
    rational_range, slab_r_range, ExponentParams, ExponentValues, Q,
};
use bog_lab::fields::{mean_zero_project, Field, Rank};
use bog_lab::geometry::{build_covering, build_grid, make_domain, DomainKind, DomainSpec, Grid};
use bog_lab::pressure::PressureEstimator;
use bog_lab::transforms::TransformParams;
use bog_lab::Exec;
use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn grid(kind: DomainKind, r: f64, l: f64, n: [usize; 3]) -> Arc<Grid> {
    Arc::new(build_grid(&make_domain(kind, r, l).unwrap(), n).unwrap())
}

fn exponent_algebra() -> Verdict {
    let mut failures = Vec::new();
    let mut check = |ok: bool, what: &str| {
        if !ok {
            failures.push(what.to_string());
        }
    };
    check(q_of_delta(&int(0)).unwrap() == int(3), "q(0) = 3");
    check(q_of_delta(&int(1)).unwrap() == ratio(12, 5), "q(1) = 12/5");
    let hundredth = ratio(1, 100);
    let deltas = rational_range(&int(0), &int(1), &hundredth);
    let alphas = rational_range(&int(0), &int(2), &hundredth);
    check(
        deltas.iter().all(|d| {
            let p = ExponentParams::new(d.clone(), int(0)).unwrap();
            beta(&p) == -Q::from_integer(1.into()) / (int(3) - d)
        }),
        "beta(delta, 0) = -1/(3 - delta)",
    );
    check(branch_equivalence_mismatches(&deltas, &alphas).unwrap() == 0, "branch condition <=> beta = beta3");
    let edge = ExponentParams::new(int(1), ratio(3, 19)).unwrap();
    let v = ExponentValues::compute(&edge);
    check(
        branch_polynomial(&edge) == int(0) && branch_condition(&edge) && v.beta == v.beta_terms[2],
        "boundary case (1, 3/19)",
    );
    let low = certify(&deltas, &alphas, |_, v| &v.beta_ps_terms[2] - &v.beta_ps_terms[0]).unwrap();
    check(low.holds(), "beta1 <= beta3 for alpha <= 2");
    let high_alphas = rational_range(&ratio(1, 5), &int(5), &hundredth);
    let high = certify(&deltas, &high_alphas, |_, v| &v.beta_ps_terms[1] - &v.beta_ps_terms[0]).unwrap();
    check(high.holds(), "beta1 <= beta2 for alpha >= 1/5");
    check(slab_r_range(&int(0)).unwrap() == (ratio(3, 2), int(2)), "r1(0), r2(0) = 3/2, 2");
    check(slab_r_range(&int(1)).unwrap() == (ratio(6, 5), ratio(6, 5)), "r1(1) = r2(1) = 6/5");
    let tight = |c: &bog_lab::exponents::Certificate| {
        c.tightest.as_ref().map(|(m, p)| format!("{m} at ({}, {})", p.delta, p.alpha)).unwrap_or_default()
    };
    let detail = if failures.is_empty() {
        format!(
            "{} grid points; tightest beta3-beta1 {}; tightest beta2-beta1 {}",
            low.points + high.points,
            tight(&low),
            tight(&high)
        )
    } else {
        format!("failed: {}", failures.join("; "))
    };
    verdict(failures.is_empty(), detail)
}

fn spherical_divergence_identity() -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for l in [1.5, 1.25] {
        let params = TransformParams::spherical(l).unwrap();
        let errs: Vec<f64> = [8, 16, 32]
            .iter()
            .map(|&n| {
                let reference = Arc::new(build_grid(&DomainSpec::reference(DomainKind::ReferenceAnnulus).unwrap(), [n; 3]).unwrap());
                let physical = Arc::new(params.mapped_grid(&reference).unwrap());
                let f = mean_zero_project(&Field::scalar_fn(physical, |x| {
                    x[0] * x[2] + (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt() + x[1]
                }))
                .unwrap();
                params.bogovskii(&f, 2.0, &DivSolver::new(reference).unwrap()).unwrap().result.div_residual
            })
            .collect();
        let gains = [errs[0] / errs[1], errs[1] / errs[2]];
        pass &= errs[2] < 1e-3 && gains.iter().all(|&g| g >= 3.0);
        parts.push(format!(
            "L={l}: residual {:.2e} -> {:.2e} -> {:.2e}, gains {:.2}, {:.2}",
            errs[0], errs[1], errs[2], gains[0], gains[1]
        ));
    }
    verdict(pass, parts.join("; "))
}

fn radial_oracle_and_minimality() -> Verdict {
    let l: f64 = 1.5;
    let mean = 3.0 * (l.powi(4) - 1.0) / (4.0 * (l.powi(3) - 1.0));
    let oracle = |rho: f64| ((rho.powi(4) - 1.0) / 4.0 - mean * (rho.powi(3) - 1.0) / 3.0) / (rho * rho);
    let g = grid(DomainKind::Annulus3D, 1.0, l, [64, 4, 8]);
    let f = mean_zero_project(&Field::scalar_coords(g.clone(), |c| c[0])).unwrap();
    let v = DivSolver::new(g.clone()).unwrap().solve(&f, 2.0).unwrap().v;
    let (mut err, mut norm) = (0.0, 0.0);
    for i in 0..g.len() {
        let want = oracle(g.node(i)[0]);
        let got = v.frame_vector(i);
        err += g.weights[i] * ((got[0] - want).powi(2) + got[1].powi(2) + got[2].powi(2));
        norm += g.weights[i] * want * want;
    }
    let rel = (err / norm).sqrt();

    let params = TransformParams::spherical(l).unwrap();
    let reference = Arc::new(build_grid(&DomainSpec::reference(DomainKind::ReferenceAnnulus).unwrap(), [16, 8, 8]).unwrap());
    let physical = Arc::new(params.mapped_grid(&reference).unwrap());
    let datum = mean_zero_project(&Field::scalar_fn(physical.clone(), |x| x[0] * x[2] + x[1])).unwrap();
    let pushed = params.bogovskii(&datum, 2.0, &DivSolver::new(reference).unwrap()).unwrap();
    let best = DivSolver::new(physical).unwrap().solve(&pushed.faces.divergence(), 2.0).unwrap();
    let excess = pushed.faces.grad_norm(2.0) / best.grad_norm - 1.0;
    verdict(
        rel < 1e-2 && excess >= -1e-6,
        format!("radial L2 error {rel:.2e}; transported / minimal gradient - 1 = {excess:.3e}"),
    )
}

fn thin_shell_band() -> Verdict {
    let ls = [2.0, 1.5, 1.25, 1.125];
    let scaled = Exec::default().map(&ls, |&l| {
        let c = DivSolver::new(grid(DomainKind::Annulus3D, 1.0, l, [8, 16, 16])).unwrap().estimate_constant(2.0).unwrap();
        c.c_star * (l - 1.0)
    });
    let hi = scaled.iter().cloned().fold(f64::MIN, f64::max);
    let lo = scaled.iter().cloned().fold(f64::MAX, f64::min);
    let list: Vec<String> = scaled.iter().map(|c| format!("{c:.3}")).collect();
    verdict(hi / lo <= 3.0, format!("c_star (L - 1) = [{}], max/min {:.3} <= 3", list.join(", "), hi / lo))
}

fn slab_linear_growth() -> Verdict {
    let radii = [1.0, 2.0, 4.0, 8.0];
    let c: Vec<f64> = radii
        .iter()
        .map(|&r| {
            DivSolver::new(grid(DomainKind::SlabShell, r, 2.0, [16, 32, 16])).unwrap().estimate_constant(2.0).unwrap().c_star
        })
        .collect();
    let slope = fit_exponent(&radii, &c).unwrap();
    let list: Vec<String> = c.iter().map(|x| format!("{x:.3}")).collect();
    verdict(
        (0.8..=1.2).contains(&slope),
        format!("c_star(R) = [{}], log-log slope {slope:.4} in [0.8, 1.2]", list.join(", ")),
    )
}

fn rescaling_invariance() -> Verdict {
    let mut worst = 0.0_f64;
    let mut parts = Vec::new();
    for (kind, n) in [(DomainKind::Annulus3D, [8, 8, 8]), (DomainKind::HalfAnnulus3D, [8, 8, 8]), (DomainKind::CylinderShell, [8, 8, 8])] {
        let base = build_grid(&make_domain(kind, 1.0, 2.0).unwrap(), n).unwrap();
        let big = base.dilate(10.0).unwrap();
        let a = DivSolver::new(Arc::new(base)).unwrap().estimate_constant(2.0).unwrap().c_star;
        let b = DivSolver::new(Arc::new(big)).unwrap().estimate_constant(2.0).unwrap().c_star;
        let rel = (a - b).abs() / a;
        worst = worst.max(rel);
        parts.push(format!("{kind} {a:.6} vs {b:.6}"));
    }
    verdict(worst <= 1e-8, format!("{}; worst relative gap {worst:.1e}", parts.join(", ")))
}

fn pressure_chain() -> Verdict {
    let g = grid(DomainKind::Annulus3D, 1.0, 2.0, [6, 6, 8]);
    let pressures = random_data(&g, 20, 7);
    let mut shift = 0.0_f64;
    let mut identity = 0.0_f64;
    let mut slack = f64::INFINITY;
    let mut binding = 0;
    for q in [2.0, 3.0] {
        let est = PressureEstimator::new(g.clone(), q, 8, 7).unwrap();
        for p in &pressures {
            let p = mean_zero_project(p).unwrap();
            let moved = Field::new(g.clone(), Rank::Scalar, p.data.iter().map(|x| x - 4.5).collect()).unwrap();
            let a = est.estimate(&p).unwrap();
            let b = est.estimate(&moved).unwrap();
            shift = shift.max((a.lhs - b.lhs).abs() / a.lhs);
            identity = identity.max((a.paired - a.power).abs() / a.power);
            slack = slack.min(a.chain_slack / a.lhs);
            binding += a.witness_binding as usize;
        }
    }
    verdict(
        shift <= 1e-12 && identity <= 1e-6 && slack >= -1e-8,
        format!(
            "shift gap {shift:.1e}; pairing identity {identity:.1e}; min slack/lhs {slack:.3}; witness binding in {binding}/40"
        ),
    )
}

fn local_energy_equality() -> Verdict {
    let cutoff = build_cutoff(1.0, 0.125, 2.0).unwrap();
    let errs: Vec<f64> = [8, 16, 32]
        .iter()
        .map(|&n| {
            let g = Arc::new(Grid::ball(2.0, [n, n, 2 * n]).unwrap());
            let (u, p) = ExactSolution::RigidRotation.sample(&g);
            energy_ledger(&u, &p, &cutoff, cutoff.gauge_mean(&p)).unwrap().relative_residual()
        })
        .collect();
    let orders = [(errs[0] / errs[1]).log2(), (errs[1] / errs[2]).log2()];

    let b = [0.6, -0.3, 1.1];
    let fine = Arc::new(Grid::ball(2.0, [4000, 2, 4]).unwrap());
    let (u, p) = ExactSolution::Constant(b).sample(&fine);
    let led = energy_ledger(&u, &p, &cutoff, 0.0).unwrap();
    let (start, width) = (cutoff.plateau_radius(), 4.0 * cutoff.sigma);
    let m = 200_000;
    let analytic = 4.0
        * PI
        * (b[0] * b[0] + b[1] * b[1] + b[2] * b[2])
        * (0..m)
            .map(|i| {
                let t = (i as f64 + 0.5) / m as f64;
                let rho = start + width * t;
                rho * rho * (step_slope(t) / width).powi(2) * width / m as f64
            })
            .sum::<f64>();
    let constant_gap = [led.i2.abs() / led.lhs, led.i3.abs() / led.lhs, (led.lhs - led.i1).abs() / led.lhs, (led.i1 - analytic).abs() / analytic]
        .into_iter()
        .fold(0.0, f64::max);
    verdict(
        errs[2] < 1e-3 && orders.iter().all(|&o| o >= 1.8) && constant_gap <= 1e-6,
        format!(
            "rotation residual/lhs {:.2e} -> {:.2e} -> {:.2e}, orders {:.2}, {:.2}; constant-field ledger gap {constant_gap:.1e}",
            errs[0], errs[1], errs[2], orders[0], orders[1]
        ),
    )
}

fn coverings() -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for kind in [DomainKind::Annulus3D, DomainKind::HalfAnnulus3D] {
        let mut mult = Vec::new();
        for sigma in [0.125, 0.0625, 0.03125, 0.015625] {
            let cover = build_covering(&make_domain(kind, 1.0, 1.0 + 8.0 * sigma).unwrap(), sigma).unwrap();
            let stats = cover.coverage_stats(100_000, 0x5EED, Exec::default());
            let margin = cover.containment_margin(Exec::default());
            pass &= stats.covered == stats.samples && margin >= -1e-12;
            mult.push(stats.max_multiplicity);
        }
        pass &= mult[3] <= mult[0] + 2;
        parts.push(format!("{kind}: full coverage, multiplicity {mult:?}"));
    }
    verdict(pass, parts.join("; "))
}

fn constant_field_growth() -> Verdict {
    let radii: Vec<f64> = (3..=7).map(|k| 10f64.powi(k)).collect();
    let b = [0.3, -0.4, 1.2];
    let mut worst = 0.0_f64;
    let mut min_exponent = f64::INFINITY;
    let mut cases = 0;
    for delta in [ratio(0, 1), ratio(1, 2), ratio(1, 1)] {
        for alpha in [ratio(0, 1), ratio(3, 19), ratio(1, 4), ratio(1, 2), ratio(1, 1), ratio(2, 1)] {
            let params = ExponentParams::new(delta.clone(), alpha).unwrap();
            for (region, n) in [(Region::Whole, [2, 2, 4]), (Region::Half, [2, 2, 4]), (Region::Slab, [2, 4, 2])] {
                let want = constant_field_exponent(&params, region);
                let got = criterion_quantity(|_| b, &radii, &params, region, Criterion::Thin, n).unwrap().fit_exponent.unwrap();
                worst = worst.max((got / want - 1.0).abs());
                min_exponent = min_exponent.min(got);
                cases += 1;
            }
        }
    }
    verdict(
        worst <= 0.05 && min_exponent > 0.0,
        format!("{cases} (delta, alpha, region) cases; worst relative deviation {worst:.1e}; smallest fitted exponent {min_exponent:.4}"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 10] = [
        ("exponent algebra, exact", exponent_algebra),
        ("spherical divergence identity", spherical_divergence_identity),
        ("radial oracle and minimality", radial_oracle_and_minimality),
        ("thin-shell constant band", thin_shell_band),
        ("slab constant linear in R", slab_linear_growth),
        ("rescaling invariance", rescaling_invariance),
        ("pressure chain", pressure_chain),
        ("local energy equality", local_energy_equality),
        ("bounded-overlap coverings", coverings),
        ("constant-field criterion growth", constant_field_growth),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let v = run();
        let secs = start.elapsed().as_secs_f64();
        failed += !v.pass as usize;
        println!(
            "criterion {:>2} {} {name} [{secs:.1}s]: {}",
            i + 1,
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
    }
    println!("acceptance: {} of 10 criteria pass", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
