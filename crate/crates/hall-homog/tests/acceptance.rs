//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured quantities. Tolerances are pinned here and nowhere else.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the numbers.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hall_homog::cell::{
    estimate_pw_constant, homogenize, homogenize_both, solve_cell, PhasePair, SolveOpts,
};
use hall_homog::formulas::{
    assemble_effective, oracle_circular, oracle_grid, sigma0_circular, sigma0_grid,
    transversal_limit, LimitParams,
};
use hall_homog::geometry::{
    circular_schedule, grid_schedule, rasterize, CellGeometry, PhaseField, RhoField,
};
use hall_homog::macro3d::{
    compare, solve_fine, solve_homogenized, CoefficientField, MacroProblem, MacroSolveOpts,
    MicroGeometry, SourceSpec,
};
use hall_homog::sweep::{monotonicity_test, run_sweep, ResolutionPolicy, SweepOpts};
use hall_homog::tensor::{Mat2, PerturbedConductivity, TransversalBlock, Vec2, Vec3};

fn no_pw_opts() -> SweepOpts {
    SweepOpts {
        compute_pw: false,
        ..SweepOpts::default()
    }
}

/// Criterion 1 — homogeneous identity: contrast-1 medium, |h| ≤ 2, the
/// homogenized tensor equals σ₁(h) entrywise within 1e-8 in under a second
/// at N = 64.
#[test]
fn criterion_01_homogeneous_identity() {
    let start = Instant::now();
    let field = PhaseField::homogeneous(64).unwrap();
    let mut worst = 0.0_f64;
    for h in [
        Vec3::new(0.5, -1.0, 1.5),
        Vec3::new(2.0, 0.0, 0.0),
        Vec3::new(0.0, 0.0, -2.0),
        Vec3::ZERO,
    ] {
        assert!(h.norm() <= 2.0 + 1e-12);
        let phases = PhasePair::new(1.3, 0.6, 1.3, 0.6).unwrap();
        let got = homogenize(&field, &phases, h, &SolveOpts::default()).unwrap();
        let want = PerturbedConductivity::new(1.3, 0.6, h).unwrap().realize();
        worst = worst.max(got.sigma3d.as_mat3().max_abs_diff(&want));
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(worst <= 1e-8, "max deviation {worst}");
    assert!(elapsed < 1.0, "took {elapsed} s");
    println!("criterion 1: PASS - homogeneous identity, max deviation {worst:.2e}, {elapsed:.3} s");
}

/// Criterion 2 — laminate oracle: grid-aligned half-cell laminate at h = 0
/// with a₁ = 1, a₂ = 10 gives the harmonic mean 20/11 across and the
/// arithmetic mean 5.5 along the layers, within 1e-6 at N = 64.
#[test]
fn criterion_02_laminate_oracle() {
    let field = PhaseField::laminate(64).unwrap();
    let phases = PhasePair::new(1.0, 0.0, 10.0, 0.0).unwrap();
    let pair = homogenize(&field, &phases, Vec3::ZERO, &SolveOpts::default()).unwrap();
    let s11 = pair.sigma2d.0[0][0];
    let s22 = pair.sigma2d.0[1][1];
    assert!((s11 - 20.0 / 11.0).abs() <= 1e-6, "sigma11 = {s11}");
    assert!((s22 - 5.5).abs() <= 1e-6, "sigma22 = {s22}");
    println!("criterion 2: PASS - laminate means {s11:.9} / {s22:.9}");
}

/// Criterion 3 — route equivalence: direct vs Π-route agree entrywise within
/// 1e-7 over 20 seeded random draws including contrast 10⁴.
#[test]
fn criterion_03_route_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let opts = SolveOpts {
        rel_tol: 1e-12,
        max_iter_per_n: 40,
        ..SolveOpts::default()
    };
    let mut worst = 0.0_f64;
    for draw in 0..20 {
        let alpha1: f64 = rng.gen_range(0.5..2.0);
        let beta1: f64 = rng.gen_range(-1.0..1.0);
        // Contrast log-uniform in [10, 10⁴]; the first two draws pinned at 10⁴.
        let contrast = if draw < 2 {
            1e4
        } else {
            10f64.powf(rng.gen_range(1.0..4.0))
        };
        let alpha2n = alpha1 * contrast;
        let beta2n = alpha2n * rng.gen_range(-1.0..1.0);
        let h = Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let geom = if rng.gen_bool(0.5) {
            CellGeometry::disk(rng.gen_range(0.15..0.35)).unwrap()
        } else {
            CellGeometry::frame(rng.gen_range(0.07..0.2)).unwrap()
        };
        let field = rasterize(&geom, 32).unwrap();
        let phases = PhasePair::new(alpha1, beta1, alpha2n, beta2n).unwrap();
        let (direct, pi) = homogenize_both(&field, &phases, h, &opts).unwrap();
        let diff = direct.sigma3d.as_mat3().max_abs_diff(pi.sigma3d.as_mat3());
        assert!(
            diff <= 1e-7,
            "draw {draw} (contrast {contrast:.1e}): discrepancy {diff:.3e}"
        );
        worst = worst.max(diff);
    }
    println!("criterion 3: PASS - 20 draws, worst route discrepancy {worst:.2e}");
}

/// Criterion 4 — constant antisymmetric shift: adding cJ to both transversal
/// phases shifts the transversal effective block by exactly cJ within 1e-8.
#[test]
fn criterion_04_constant_antisymmetric_shift() {
    let field = rasterize(&CellGeometry::disk(0.3).unwrap(), 64).unwrap();
    let opts = SolveOpts::default();
    let mut worst = 0.0_f64;
    for c in [0.7, -1.2] {
        let s1 = TransversalBlock::new(1.0, 0.5, 1.0);
        let s2 = TransversalBlock::new(50.0, 20.0, 1.0);
        let shift = |s: &TransversalBlock| TransversalBlock {
            alpha: s.alpha,
            skew: s.skew + c,
        };
        for lambda in [Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)] {
            let base = solve_cell(&field, &s1, &s2, lambda, &opts).unwrap();
            let shifted = solve_cell(&field, &shift(&s1), &shift(&s2), lambda, &opts).unwrap();
            // (σ̃* + cJ) λ̃ = σ̃* λ̃ + c J λ̃.
            let want = Vec2::new(
                base.flux_avg.0[0] - c * lambda.0[1],
                base.flux_avg.0[1] + c * lambda.0[0],
            );
            let diff = (shifted.flux_avg.0[0] - want.0[0])
                .abs()
                .max((shifted.flux_avg.0[1] - want.0[1]).abs());
            assert!(
                diff <= 1e-8,
                "c = {c}, λ = {lambda:?}: deviation {diff:.3e}"
            );
            worst = worst.max(diff);
        }
    }
    println!("criterion 4: PASS - cJ shift reproduced, worst deviation {worst:.2e}");
}

/// Criterion 5 — circular-fibre limit: schedule rₙ ∈ {0.2, 0.1, 0.05} with
/// α₂,ₙ = α₂/(π rₙ²); the max-entry relative error against the closed form
/// decreases monotonically and is ≤ 5% at the finest stage, within 2 minutes.
#[test]
fn criterion_05_circular_limit() {
    let start = Instant::now();
    let schedule = circular_schedule(&[0.2, 0.1, 0.05], 1.0, 0.5, 2.0, 1.0).unwrap();
    let rho = RhoField::constant(1.0).unwrap();
    let report = run_sweep(
        &schedule,
        &rho,
        Vec3::new(1.0, 1.0, 1.0),
        None,
        &no_pw_opts(),
    )
    .unwrap();
    let errors: Vec<f64> = report.rows.iter().map(|r| r.rel_error_direct).collect();
    let elapsed = start.elapsed().as_secs_f64();
    assert!(
        errors.windows(2).all(|w| w[1] < w[0]),
        "errors not monotone: {errors:?}"
    );
    let last = *errors.last().unwrap();
    assert!(last <= 0.05, "finest-stage error {last}");
    assert!(elapsed <= 120.0, "took {elapsed} s");
    println!("criterion 5: PASS - circular errors {errors:?}, finest {last:.4}, {elapsed:.1} s");
}

/// Criterion 6 — thin-grid limit: schedule tₙ ∈ {0.125, 0.0625, 0.03125} with
/// 4tₙα₂,ₙ = α₂. At h = 0 the transversal block converges to (α₁ + α₂/2) I₂
/// with monotone error ≤ 10% at the finest stage; the full tensor at
/// h = (1,0,1) is within 10% of the closed form at the finest stage.
#[test]
fn criterion_06_grid_limit() {
    let schedule = grid_schedule(&[0.125, 0.0625, 0.03125], 1.0, 0.5, 2.0, 1.0).unwrap();
    let rho = RhoField::constant(1.0).unwrap();

    let report0 = run_sweep(&schedule, &rho, Vec3::ZERO, None, &no_pw_opts()).unwrap();
    let target = Mat2::IDENTITY.scale(2.0);
    let errors: Vec<f64> = report0
        .rows
        .iter()
        .map(|r| (r.sigma2d - target).max_abs_entry() / 2.0)
        .collect();
    assert!(
        errors.windows(2).all(|w| w[1] < w[0]),
        "h = 0 errors not monotone: {errors:?}"
    );
    assert!(errors[2] <= 0.10, "finest h = 0 error {}", errors[2]);

    let report1 = run_sweep(
        &schedule,
        &rho,
        Vec3::new(1.0, 0.0, 1.0),
        None,
        &no_pw_opts(),
    )
    .unwrap();
    let full = report1.rows.last().unwrap();
    assert!(
        full.rel_error_direct <= 0.10,
        "finest full-tensor error {}",
        full.rel_error_direct
    );
    assert!(
        full.rel_error_pi <= 0.10,
        "finest Π-route error {}",
        full.rel_error_pi
    );
    println!(
        "criterion 6: PASS - grid h=0 errors {errors:?}, full-tensor error {:.4}",
        full.rel_error_direct
    );
}

/// Criterion 7 — oracle self-consistency: both explicit oracles equal the
/// general assembly composed with the transversal limit (θ = ρ) within
/// 1e-12 over 100 seeded random parameter draws.
#[test]
fn criterion_07_oracle_self_consistency() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let p = LimitParams::new(
            rng.gen_range(0.5..3.0),
            rng.gen_range(-2.0..2.0),
            rng.gen_range(0.5..3.0),
            rng.gen_range(-2.0..2.0),
            Vec3::new(
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            ),
        )
        .unwrap();
        let rho: f64 = rng.gen_range(0.5..2.0);

        let circ = oracle_circular(&p, rho).unwrap();
        let via = assemble_effective(&transversal_limit(sigma0_circular, &p), rho, &p).unwrap();
        let scale = circ.as_mat3().max_abs_entry();
        let diff = via.as_mat3().max_abs_diff(circ.as_mat3()) / scale;
        assert!(diff <= 1e-12, "circular mismatch {diff:.3e}");
        worst = worst.max(diff);

        let grid = oracle_grid(&p, rho).unwrap();
        let sig0 = |a1: f64, a2: f64| sigma0_grid(a1, rho * a2);
        let via = assemble_effective(&transversal_limit(sig0, &p), rho, &p).unwrap();
        let scale = grid.as_mat3().max_abs_entry();
        let diff = via.as_mat3().max_abs_diff(grid.as_mat3()) / scale;
        assert!(diff <= 1e-12, "grid mismatch {diff:.3e}");
        worst = worst.max(diff);
    }
    println!("criterion 7: PASS - 100 draws, worst oracle mismatch {worst:.2e}");
}

/// Criterion 8 — monotonicity: nested frames with equal phase conductivities
/// give quadratic-form-ordered effective tensors (smallest eigenvalue of the
/// symmetric difference ≥ -1e-8).
#[test]
fn criterion_08_monotonicity() {
    let verdict = monotonicity_test(0.0625, 0.125, 1.0, 8.0, 64, &SolveOpts::default()).unwrap();
    assert!(
        verdict.min_eigenvalue >= -1e-8,
        "ordering violated: {}",
        verdict.min_eigenvalue
    );
    println!(
        "criterion 8: PASS - nested frames ordered, min eigenvalue {:.3e}",
        verdict.min_eigenvalue
    );
}

/// Criterion 9 — PW constant: the homogeneous cell gives 1/(4π²) within 1%,
/// and along the balanced circular schedule c(rₙ)/|ln rₙ| varies by less
/// than 50% across rₙ ∈ {0.1, 0.05, 0.025}.
#[test]
fn criterion_09_pw_constant() {
    let field = PhaseField::homogeneous(64).unwrap();
    let est = estimate_pw_constant(&field, 1.0, 1.0, &SolveOpts::default()).unwrap();
    let exact = 1.0 / (4.0 * std::f64::consts::PI * std::f64::consts::PI);
    let rel = (est.c_value - exact).abs() / exact;
    assert!(rel <= 0.01, "homogeneous c = {} vs {exact}", est.c_value);

    let policy = ResolutionPolicy::default();
    let mut ratios = Vec::new();
    for r in [0.1, 0.05, 0.025] {
        let n = policy.resolution_for(r);
        let field = rasterize(&CellGeometry::disk(r).unwrap(), n).unwrap();
        let alpha2n = 2.0 / (std::f64::consts::PI * r * r);
        let est = estimate_pw_constant(&field, 1.0, alpha2n, &SolveOpts::default()).unwrap();
        ratios.push(est.c_value / r.ln().abs());
    }
    let (lo, hi) = (
        ratios.iter().cloned().fold(f64::INFINITY, f64::min),
        ratios.iter().cloned().fold(0.0, f64::max),
    );
    assert!(
        hi / lo < 1.5,
        "c/|ln r| varies too much: {ratios:?} (ratio {})",
        hi / lo
    );
    println!("criterion 9: PASS - homogeneous c within {rel:.2e}, log-scaling ratios {ratios:?}");
}

/// Criterion 10 — macro validation: frame microstructure at contrast 10²,
/// h = (0,0,1), f = 1, 48³ grids. The relative L² distance between the fine
/// and homogenized solutions decreases as ε halves from 1/4 to 1/8, every
/// solve satisfies the energy identity within 1e-8, all within 5 minutes.
#[test]
fn criterion_10_macro_validation() {
    let start = Instant::now();
    let phases = PhasePair::new(1.0, 0.3, 100.0, 30.0).unwrap();
    let h = Vec3::new(0.0, 0.0, 1.0);
    let t = 1.0 / 3.0;
    let field = rasterize(&CellGeometry::frame(t).unwrap(), 48).unwrap();
    let (cell, _) = homogenize_both(&field, &phases, h, &SolveOpts::default()).unwrap();

    let mut l2 = Vec::new();
    for eps in [0.25, 0.125] {
        let problem = MacroProblem {
            epsilon: eps,
            geometry: MicroGeometry::Frame { t },
            phases,
            h,
            rho: None,
            source: SourceSpec::default(),
        };
        let dims = (48, 48, 48);
        let fine = solve_fine(&problem, dims, &MacroSolveOpts::default()).unwrap();
        let hom = solve_homogenized(
            &CoefficientField::Constant(*cell.sigma3d.as_mat3()),
            &SourceSpec::default(),
            dims,
            &MacroSolveOpts::default(),
        )
        .unwrap();
        assert!(
            fine.energy_defect() <= 1e-8,
            "fine energy defect {} at eps {eps}",
            fine.energy_defect()
        );
        assert!(
            hom.energy_defect() <= 1e-8,
            "homogenized energy defect {} at eps {eps}",
            hom.energy_defect()
        );
        l2.push(compare(&fine, &hom).unwrap().l2_rel);
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(l2[1] < l2[0], "L² errors did not decrease: {l2:?}");
    assert!(elapsed <= 300.0, "took {elapsed} s");
    println!("criterion 10: PASS - L² errors {l2:?}, {elapsed:.1} s");
}
