//! Aggregated invariant suite behind `hallhomog verify`: one named check per
//! module-level invariant, failing fast on the first violation.

use hall_homog::cell::{estimate_pw_constant, homogenize, homogenize_both, PhasePair, SolveOpts};
use hall_homog::formulas::{
    assemble_effective, oracle_circular, oracle_grid, sigma0_circular, sigma0_grid,
    transversal_limit, LimitParams,
};
use hall_homog::geometry::{circular_schedule, grid_schedule, rasterize, CellGeometry, PhaseField};
use hall_homog::macro3d::{solve_fine, MacroProblem, MacroSolveOpts, MicroGeometry, SourceSpec};
use hall_homog::sweep::monotonicity_test;
use hall_homog::tensor::{
    hall_matrix, pi_conjugate, pi_deconjugate, PerturbedConductivity, PiPair, TransversalBlock,
    Vec2, Vec3,
};

type Check = (&'static str, fn() -> Result<(), String>);

fn splitmix(state: &mut u64) -> f64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    ((z ^ (z >> 31)) >> 11) as f64 / (1u64 << 53) as f64
}

fn tensor_hall_antisymmetry() -> Result<(), String> {
    for hx in [-2.0, 0.0, 1.5] {
        for hy in [-1.0, 0.5] {
            for hz in [-2.0, 0.0, 2.0] {
                let h = Vec3::new(hx, hy, hz);
                let e = hall_matrix(h);
                let sum = e + e.transpose();
                if sum.max_abs_entry() != 0.0 {
                    return Err(format!("E(h) not antisymmetric at h = {h:?}"));
                }
                let x = Vec3::new(0.3, -0.7, 1.1);
                if e.mul_vec(x).dot(x).abs() > 1e-14 {
                    return Err(format!("E(h)x·x != 0 at h = {h:?}"));
                }
            }
        }
    }
    Ok(())
}

fn tensor_pi_round_trip() -> Result<(), String> {
    let mut state = 17u64;
    for _ in 0..10 {
        let pair = PiPair {
            p0: Vec2::new(
                splitmix(&mut state) * 4.0 - 2.0,
                splitmix(&mut state) * 4.0 - 2.0,
            ),
            q0: Vec2::new(
                splitmix(&mut state) * 4.0 - 2.0,
                splitmix(&mut state) * 4.0 - 2.0,
            ),
        };
        let sigma = PerturbedConductivity::new(
            0.5 + splitmix(&mut state),
            splitmix(&mut state) - 0.5,
            Vec3::new(
                splitmix(&mut state) * 2.0,
                splitmix(&mut state) * 2.0,
                splitmix(&mut state) * 2.0,
            ),
        )
        .map_err(|e| e.to_string())?
        .realize();
        let back = pi_deconjugate(&pi_conjugate(&sigma, &pair), &pair);
        if back.max_abs_diff(&sigma) > 1e-12 {
            return Err("Π round trip exceeded 1e-12".into());
        }
    }
    Ok(())
}

fn formulas_oracle_consistency() -> Result<(), String> {
    let mut state = 42u64;
    for draw in 0..20 {
        let p = LimitParams::new(
            0.5 + 2.0 * splitmix(&mut state),
            2.0 * splitmix(&mut state) - 1.0,
            0.5 + 2.0 * splitmix(&mut state),
            2.0 * splitmix(&mut state) - 1.0,
            Vec3::new(
                4.0 * splitmix(&mut state) - 2.0,
                4.0 * splitmix(&mut state) - 2.0,
                4.0 * splitmix(&mut state) - 2.0,
            ),
        )
        .map_err(|e| e.to_string())?;
        let rho = 0.5 + 1.5 * splitmix(&mut state);

        let circ = oracle_circular(&p, rho).map_err(|e| e.to_string())?;
        let assembled = assemble_effective(&transversal_limit(sigma0_circular, &p), rho, &p)
            .map_err(|e| e.to_string())?;
        let scale = circ.as_mat3().max_abs_entry().max(1.0);
        if assembled.as_mat3().max_abs_diff(circ.as_mat3()) > 1e-12 * scale {
            return Err(format!("circular oracle mismatch on draw {draw}"));
        }

        let grid = oracle_grid(&p, rho).map_err(|e| e.to_string())?;
        let sig0 = |a1: f64, a2: f64| sigma0_grid(a1, rho * a2);
        let assembled =
            assemble_effective(&transversal_limit(sig0, &p), rho, &p).map_err(|e| e.to_string())?;
        let scale = grid.as_mat3().max_abs_entry().max(1.0);
        if assembled.as_mat3().max_abs_diff(grid.as_mat3()) > 1e-12 * scale {
            return Err(format!("grid oracle mismatch on draw {draw}"));
        }
    }
    Ok(())
}

fn geometry_schedule_invariants() -> Result<(), String> {
    let s = circular_schedule(&[0.2, 0.1, 0.05], 1.0, 0.5, 2.0, 1.0).map_err(|e| e.to_string())?;
    s.validate().map_err(|e| e.to_string())?;
    let s = grid_schedule(&[0.125, 0.0625], 1.0, 0.5, 2.0, 1.0).map_err(|e| e.to_string())?;
    s.validate().map_err(|e| e.to_string())?;
    let pf = rasterize(&CellGeometry::frame(0.125).map_err(|e| e.to_string())?, 64)
        .map_err(|e| e.to_string())?;
    if pf.raster_fraction() != pf.exact_fraction() {
        return Err("aligned frame raster is not exact".into());
    }
    Ok(())
}

fn cell_homogeneous_identity() -> Result<(), String> {
    let field = PhaseField::homogeneous(32).map_err(|e| e.to_string())?;
    let phases = PhasePair::new(1.0, 0.5, 1.0, 0.5).map_err(|e| e.to_string())?;
    let h = Vec3::new(1.0, 1.0, 1.0);
    let pair = homogenize(&field, &phases, h, &SolveOpts::default()).map_err(|e| e.to_string())?;
    let sigma1 = PerturbedConductivity::new(1.0, 0.5, h)
        .map_err(|e| e.to_string())?
        .realize();
    if pair.sigma3d.as_mat3().max_abs_diff(&sigma1) > 1e-8 {
        return Err("homogeneous identity exceeded 1e-8".into());
    }
    Ok(())
}

fn cell_laminate_means() -> Result<(), String> {
    let field = PhaseField::laminate(64).map_err(|e| e.to_string())?;
    let s1 = TransversalBlock::new(1.0, 0.0, 0.0);
    let s2 = TransversalBlock::new(10.0, 0.0, 0.0);
    let opts = SolveOpts::default();
    let sol1 = hall_homog::cell::solve_cell(&field, &s1, &s2, Vec2::new(1.0, 0.0), &opts)
        .map_err(|e| e.to_string())?;
    if (sol1.flux_avg.0[0] - 20.0 / 11.0).abs() > 1e-6 {
        return Err(format!(
            "laminate harmonic mean off: {}",
            sol1.flux_avg.0[0]
        ));
    }
    let sol2 = hall_homog::cell::solve_cell(&field, &s1, &s2, Vec2::new(0.0, 1.0), &opts)
        .map_err(|e| e.to_string())?;
    if (sol2.flux_avg.0[1] - 5.5).abs() > 1e-6 {
        return Err(format!(
            "laminate arithmetic mean off: {}",
            sol2.flux_avg.0[1]
        ));
    }
    Ok(())
}

fn cell_route_equivalence() -> Result<(), String> {
    let opts = SolveOpts::default();
    let cases = [
        (CellGeometry::disk(0.3), 1.0, 0.5, 20.0, 8.0),
        (CellGeometry::frame(0.125), 0.8, -0.4, 1e3, 300.0),
        (CellGeometry::disk(0.2), 1.5, 0.0, 64.0, -20.0),
    ];
    for (geom, a1, b1, a2, b2) in cases {
        let field = rasterize(&geom.map_err(|e| e.to_string())?, 32).map_err(|e| e.to_string())?;
        let phases = PhasePair::new(a1, b1, a2, b2).map_err(|e| e.to_string())?;
        let h = Vec3::new(1.0, -0.3, 0.8);
        let (d, p) = homogenize_both(&field, &phases, h, &opts).map_err(|e| e.to_string())?;
        let diff = d.sigma3d.as_mat3().max_abs_diff(p.sigma3d.as_mat3());
        if diff > 1e-7 {
            return Err(format!("route discrepancy {diff} at contrast {a2}"));
        }
    }
    Ok(())
}

fn cell_antisymmetric_shift() -> Result<(), String> {
    let field = rasterize(&CellGeometry::disk(0.3).map_err(|e| e.to_string())?, 32)
        .map_err(|e| e.to_string())?;
    let opts = SolveOpts::default();
    let c = 0.6;
    let s1 = TransversalBlock::new(1.0, 0.4, 1.0);
    let s2 = TransversalBlock::new(9.0, 2.0, 1.0);
    let s1s = TransversalBlock {
        alpha: 1.0,
        skew: s1.skew + c,
    };
    let s2s = TransversalBlock {
        alpha: 9.0,
        skew: s2.skew + c,
    };
    let lambda = Vec2::new(1.0, 0.0);
    let base =
        hall_homog::cell::solve_cell(&field, &s1, &s2, lambda, &opts).map_err(|e| e.to_string())?;
    let shifted = hall_homog::cell::solve_cell(&field, &s1s, &s2s, lambda, &opts)
        .map_err(|e| e.to_string())?;
    // cJ e₁ = c e₂.
    if (shifted.flux_avg.0[0] - base.flux_avg.0[0]).abs() > 1e-8
        || (shifted.flux_avg.0[1] - base.flux_avg.0[1] - c).abs() > 1e-8
    {
        return Err("cJ shift not reproduced exactly".into());
    }
    Ok(())
}

fn cell_adjoint_relation() -> Result<(), String> {
    let field = rasterize(&CellGeometry::frame(0.125).map_err(|e| e.to_string())?, 32)
        .map_err(|e| e.to_string())?;
    let phases = PhasePair::new(1.0, 0.5, 8.0, 3.0).map_err(|e| e.to_string())?;
    let h = Vec3::new(0.3, 0.9, 1.1);
    let opts = SolveOpts::default();
    let fwd = homogenize(&field, &phases, h, &opts).map_err(|e| e.to_string())?;
    let neg = Vec3::new(-h.0[0], -h.0[1], -h.0[2]);
    let adj = homogenize(&field, &phases, neg, &opts).map_err(|e| e.to_string())?;
    let diff = fwd
        .sigma3d
        .as_mat3()
        .max_abs_diff(&adj.sigma3d.as_mat3().transpose());
    if diff > 1e-8 {
        return Err(format!("adjoint relation violated by {diff}"));
    }
    Ok(())
}

fn pw_homogeneous_constant() -> Result<(), String> {
    let field = PhaseField::homogeneous(32).map_err(|e| e.to_string())?;
    let est =
        estimate_pw_constant(&field, 1.0, 1.0, &SolveOpts::default()).map_err(|e| e.to_string())?;
    let exact = 1.0 / (4.0 * std::f64::consts::PI * std::f64::consts::PI);
    if (est.c_value - exact).abs() / exact > 0.01 {
        return Err(format!("PW constant {} vs {exact}", est.c_value));
    }
    Ok(())
}

fn sweep_nested_monotonicity() -> Result<(), String> {
    let v = monotonicity_test(0.0625, 0.125, 1.0, 8.0, 32, &SolveOpts::default())
        .map_err(|e| e.to_string())?;
    if !v.passed {
        return Err(format!(
            "nested frames not ordered: eig {}",
            v.min_eigenvalue
        ));
    }
    Ok(())
}

fn macro_energy_identity() -> Result<(), String> {
    let phases = PhasePair::new(1.0, 0.0, 50.0, 0.0).map_err(|e| e.to_string())?;
    let problem = MacroProblem {
        epsilon: 0.5,
        geometry: MicroGeometry::Frame { t: 0.25 },
        phases,
        h: Vec3::ZERO,
        rho: None,
        source: SourceSpec::default(),
    };
    let sol = solve_fine(&problem, (12, 12, 12), &MacroSolveOpts::default())
        .map_err(|e| e.to_string())?;
    if sol.energy_defect() > 1e-8 {
        return Err(format!("energy identity defect {}", sol.energy_defect()));
    }
    if sol.min_value() < -1e-10 {
        return Err(format!(
            "maximum principle violated: min {}",
            sol.min_value()
        ));
    }
    Ok(())
}

/// Run every invariant, printing one line per check; stops at the first
/// failure and returns its description.
pub fn run(quick: bool) -> Result<(), String> {
    let mut checks: Vec<Check> = vec![
        ("tensor_hall_antisymmetry", tensor_hall_antisymmetry),
        ("tensor_pi_round_trip", tensor_pi_round_trip),
        ("formulas_oracle_consistency", formulas_oracle_consistency),
        ("geometry_schedule_invariants", geometry_schedule_invariants),
        ("cell_homogeneous_identity", cell_homogeneous_identity),
        ("cell_laminate_means", cell_laminate_means),
        ("cell_route_equivalence", cell_route_equivalence),
        ("cell_antisymmetric_shift", cell_antisymmetric_shift),
        ("cell_adjoint_relation", cell_adjoint_relation),
        ("pw_homogeneous_constant", pw_homogeneous_constant),
        ("sweep_nested_monotonicity", sweep_nested_monotonicity),
    ];
    if !quick {
        checks.push(("macro_energy_identity", macro_energy_identity));
    }
    for (name, check) in checks {
        match check() {
            Ok(()) => println!("ok {name}"),
            Err(msg) => return Err(format!("{name}: {msg}")),
        }
    }
    Ok(())
}
