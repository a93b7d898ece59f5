//! Drive high-contrast schedules through the cell solver, compare against the
//! closed-form oracles, and emit convergence reports.
//!
//! Stages execute independently (in parallel under the `parallel` feature) and
//! rows are assembled in stage order, so identical configurations produce
//! identical report bytes. Wall-clock timings are kept on the in-memory rows
//! but never written into the deterministic CSV/JSON artifacts.

use std::time::Instant;

use serde::Serialize;

use crate::cell::{estimate_pw_constant, homogenize_both, PhasePair, Route, SolveOpts};
use crate::formulas::{oracle_circular, oracle_grid, LimitParams};
use crate::geometry::{
    modulated_radius, modulated_thickness, rasterize, CellGeometry, ContrastSchedule, RhoField,
    ScheduleKind, ScheduleStage,
};
use crate::par::map_collect;
use crate::tensor::{EffectiveTensor, Mat2, Vec2, Vec3};
use crate::{HomogError, Result};

/// Per-stage raster resolution: `max(min, ceil(cells_per_feature / shape))`,
/// capped. Thin features then span at least `cells_per_feature` cells.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ResolutionPolicy {
    pub min: usize,
    pub cap: usize,
    pub cells_per_feature: f64,
}

impl Default for ResolutionPolicy {
    fn default() -> Self {
        ResolutionPolicy {
            min: 64,
            cap: 512,
            cells_per_feature: 4.0,
        }
    }
}

impl ResolutionPolicy {
    pub fn resolution_for(&self, shape_param: f64) -> usize {
        let needed = (self.cells_per_feature / shape_param).ceil() as usize;
        needed.max(self.min).min(self.cap)
    }
}

/// Sweep-wide options.
#[derive(Debug, Clone, Copy)]
pub struct SweepOpts {
    pub solver: SolveOpts,
    pub policy: ResolutionPolicy,
    /// Estimate the weighted PW constant per stage (one eigensolve each).
    pub compute_pw: bool,
}

impl Default for SweepOpts {
    fn default() -> Self {
        SweepOpts {
            solver: SolveOpts::default(),
            policy: ResolutionPolicy::default(),
            compute_pw: true,
        }
    }
}

/// One sweep row: schedule data, both route tensors, the oracle, and errors.
#[derive(Debug, Clone, Serialize)]
pub struct SweepStageRow {
    pub stage: usize,
    pub shape_param: f64,
    pub epsilon: f64,
    pub theta_n: f64,
    pub alpha2n: f64,
    pub beta2n: f64,
    pub resolution: usize,
    pub raster_fraction: f64,
    pub sigma2d: Mat2,
    pub sigma3d_direct: EffectiveTensor,
    pub sigma3d_pi: EffectiveTensor,
    pub oracle: EffectiveTensor,
    /// Max-entry error relative to the oracle's max entry.
    pub rel_error_direct: f64,
    pub rel_error_pi: f64,
    pub route_discrepancy: f64,
    pub pw_constant: f64,
    /// `εₙ² c`, the cell-size-rescaled PW diagnostic.
    pub pw_rescaled: f64,
    /// `εₙ²|ln rₙ|` (circular) or `4tₙ α₂,ₙ` (grid).
    pub diagnostic: f64,
    pub iterations: usize,
    pub pw_iterations: usize,
    /// Wall-clock seconds; excluded from serialized reports.
    #[serde(skip)]
    pub wall_time_s: f64,
}

/// Rows in stage order plus the driving configuration.
#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub kind: ScheduleKind,
    pub h: Vec3,
    pub rho_sample: f64,
    pub rows: Vec<SweepStageRow>,
}

/// Trend verdict for one scalar metric across stages.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceVerdict {
    pub metric: String,
    pub values: Vec<f64>,
    pub monotone_decreasing: bool,
    pub final_value: f64,
    /// Least-squares slope of ln(value) against ln(shape_param); only with
    /// at least three stages and positive values.
    pub loglog_slope: Option<f64>,
    pub passed: bool,
}

fn monotone_decreasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[1] < w[0])
}

fn loglog_slope(shape: &[f64], values: &[f64]) -> Option<f64> {
    if shape.len() < 3 || values.iter().any(|&v| v <= 0.0) {
        return None;
    }
    let xs: Vec<f64> = shape.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(sxy / sxx)
}

/// Point at which ρ is sampled for the locally-periodic sweep: the cell
/// parameters and the oracle density both use `ρ((1/2, 1/2))`, which reduces
/// to the periodic case for constant ρ ≡ 1.
pub const RHO_SAMPLE_POINT: Vec2 = Vec2([0.5, 0.5]);

fn stage_geometry(
    kind: ScheduleKind,
    stage: &ScheduleStage,
    rho: &RhoField,
) -> Result<(CellGeometry, f64)> {
    match kind {
        ScheduleKind::Circular => {
            let r = modulated_radius(rho, stage.shape_param, RHO_SAMPLE_POINT);
            Ok((CellGeometry::disk(r)?, r))
        }
        ScheduleKind::Grid => {
            let t = modulated_thickness(rho, stage.shape_param, RHO_SAMPLE_POINT);
            Ok((CellGeometry::frame(t)?, t))
        }
    }
}

fn check_stage_resolution(kind: ScheduleKind, shape: f64, n: usize) -> Result<()> {
    let cells = shape * n as f64;
    let needed = match kind {
        ScheduleKind::Circular => 4.0,
        ScheduleKind::Grid => 2.0,
    };
    if cells + 1e-9 < needed {
        return Err(HomogError::UnderResolved(format!(
            "stage feature {shape} spans {cells:.2} cells at N = {n}, needs {needed}"
        )));
    }
    Ok(())
}

fn run_stage(
    schedule: &ContrastSchedule,
    stage: &ScheduleStage,
    rho: &RhoField,
    h: Vec3,
    resolution: usize,
    opts: &SweepOpts,
) -> Result<SweepStageRow> {
    let start = Instant::now();
    let (geometry, shape_eff) = stage_geometry(schedule.kind, stage, rho)?;
    check_stage_resolution(schedule.kind, shape_eff, resolution)?;
    let field = rasterize(&geometry, resolution)?;
    let phases = PhasePair::new(schedule.alpha1, schedule.beta1, stage.alpha2n, stage.beta2n)?;
    let (direct, pi) = homogenize_both(&field, &phases, h, &opts.solver)?;

    let rho_value = rho.eval(RHO_SAMPLE_POINT);
    let limit = LimitParams::new(
        schedule.alpha1,
        schedule.beta1,
        schedule.alpha2,
        schedule.beta2,
        h,
    )?;
    let oracle = match schedule.kind {
        ScheduleKind::Circular => oracle_circular(&limit, rho_value)?,
        ScheduleKind::Grid => oracle_grid(&limit, rho_value)?,
    };

    let (pw_constant, pw_iterations) = if opts.compute_pw {
        let est = estimate_pw_constant(&field, schedule.alpha1, stage.alpha2n, &opts.solver)?;
        (est.c_value, est.iterations)
    } else {
        (f64::NAN, 0)
    };

    let rel_error_direct = direct.sigma3d.max_entry_rel_error(&oracle);
    let rel_error_pi = pi.sigma3d.max_entry_rel_error(&oracle);
    let route_discrepancy = direct.sigma3d.as_mat3().max_abs_diff(pi.sigma3d.as_mat3());

    if !rel_error_direct.is_finite() || !rel_error_pi.is_finite() {
        return Err(HomogError::NonConvergence {
            iterations: direct.iterations,
            residual: f64::NAN,
        });
    }

    Ok(SweepStageRow {
        stage: stage.index,
        shape_param: stage.shape_param,
        epsilon: stage.epsilon,
        theta_n: stage.theta_n,
        alpha2n: stage.alpha2n,
        beta2n: stage.beta2n,
        resolution,
        raster_fraction: field.raster_fraction(),
        sigma2d: direct.sigma2d,
        sigma3d_direct: direct.sigma3d,
        sigma3d_pi: pi.sigma3d,
        oracle,
        rel_error_direct,
        rel_error_pi,
        route_discrepancy,
        pw_constant,
        pw_rescaled: stage.epsilon * stage.epsilon * pw_constant,
        diagnostic: stage.diagnostic,
        iterations: direct.iterations,
        pw_iterations,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Homogenize every stage by both routes and compare with the geometry's
/// oracle. `resolutions` overrides the policy per stage when given.
pub fn run_sweep(
    schedule: &ContrastSchedule,
    rho: &RhoField,
    h: Vec3,
    resolutions: Option<&[usize]>,
    opts: &SweepOpts,
) -> Result<SweepReport> {
    schedule.validate()?;
    if let Some(res) = resolutions {
        if res.len() != schedule.stages.len() {
            return Err(HomogError::InvalidParam(format!(
                "{} resolutions for {} stages",
                res.len(),
                schedule.stages.len()
            )));
        }
    }
    let jobs: Vec<(usize, ScheduleStage)> = schedule
        .stages
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let n = match resolutions {
                Some(res) => res[i],
                None => opts.policy.resolution_for(s.shape_param),
            };
            (n, *s)
        })
        .collect();
    let rows = map_collect(opts.solver.parallelism, jobs, |(n, stage)| {
        run_stage(schedule, &stage, rho, h, n, opts)
    });
    let rows: Result<Vec<SweepStageRow>> = rows.into_iter().collect();
    Ok(SweepReport {
        kind: schedule.kind,
        h,
        rho_sample: rho.eval(RHO_SAMPLE_POINT),
        rows: rows?,
    })
}

impl SweepReport {
    /// Error-vs-stage trend for one route.
    pub fn error_verdict(&self, route: Route) -> ConvergenceVerdict {
        let values: Vec<f64> = self
            .rows
            .iter()
            .map(|r| match route {
                Route::Direct => r.rel_error_direct,
                Route::Pi => r.rel_error_pi,
            })
            .collect();
        let shapes: Vec<f64> = self.rows.iter().map(|r| r.shape_param).collect();
        let mono = monotone_decreasing(&values);
        ConvergenceVerdict {
            metric: format!(
                "oracle_error_{}",
                match route {
                    Route::Direct => "direct",
                    Route::Pi => "pi",
                }
            ),
            final_value: *values.last().unwrap_or(&f64::NAN),
            loglog_slope: loglog_slope(&shapes, &values),
            monotone_decreasing: mono,
            passed: mono,
            values,
        }
    }

    /// Largest route discrepancy across stages.
    pub fn max_route_discrepancy(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.route_discrepancy)
            .fold(0.0, f64::max)
    }

    /// Deterministic CSV: fixed column order, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str("stage,shape_param,epsilon,theta_n,alpha2n,beta2n,resolution,raster_fraction");
        for c in ["s2d_00", "s2d_01", "s2d_10", "s2d_11"] {
            out.push(',');
            out.push_str(c);
        }
        for name in ["direct", "pi", "oracle"] {
            for i in 0..3 {
                for j in 0..3 {
                    out.push_str(&format!(",{name}_{i}{j}"));
                }
            }
        }
        out.push_str(
            ",rel_error_direct,rel_error_pi,route_discrepancy,pw_constant,pw_rescaled,diagnostic,iterations,pw_iterations\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{:.16e}",
                r.stage,
                r.shape_param,
                r.epsilon,
                r.theta_n,
                r.alpha2n,
                r.beta2n,
                r.resolution,
                r.raster_fraction
            ));
            for i in 0..2 {
                for j in 0..2 {
                    out.push_str(&format!(",{:.16e}", r.sigma2d.0[i][j]));
                }
            }
            for m in [&r.sigma3d_direct, &r.sigma3d_pi, &r.oracle] {
                for i in 0..3 {
                    for j in 0..3 {
                        out.push_str(&format!(",{:.16e}", m.as_mat3().0[i][j]));
                    }
                }
            }
            out.push_str(&format!(
                ",{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{}\n",
                r.rel_error_direct,
                r.rel_error_pi,
                r.route_discrepancy,
                r.pw_constant,
                r.pw_rescaled,
                r.diagnostic,
                r.iterations,
                r.pw_iterations
            ));
        }
        out
    }

    /// Deterministic JSON summary with trend verdicts and schedule checks.
    pub fn to_json_summary(&self, schedule: &ContrastSchedule) -> String {
        #[derive(Serialize)]
        struct Summary<'a> {
            kind: ScheduleKind,
            h: Vec3,
            rho_sample: f64,
            stages: usize,
            max_route_discrepancy: f64,
            error_direct: ConvergenceVerdict,
            error_pi: ConvergenceVerdict,
            conditions: Vec<ConvergenceVerdict>,
            rows: &'a Vec<SweepStageRow>,
        }
        let summary = Summary {
            kind: self.kind,
            h: self.h,
            rho_sample: self.rho_sample,
            stages: self.rows.len(),
            max_route_discrepancy: self.max_route_discrepancy(),
            error_direct: self.error_verdict(Route::Direct),
            error_pi: self.error_verdict(Route::Pi),
            conditions: check_conditions(schedule),
            rows: &self.rows,
        };
        serde_json::to_string_pretty(&summary).expect("report serialization cannot fail")
    }
}

/// Verdicts for the schedule-level convergence conditions: the circular
/// `εₙ²|ln rₙ| → 0` diagnostic, constancy of the normalization product
/// `scaleₙ α₂,ₙ`, and boundedness of the cellwise mean `⨍ αₙ`.
pub fn check_conditions(schedule: &ContrastSchedule) -> Vec<ConvergenceVerdict> {
    let shapes: Vec<f64> = schedule.stages.iter().map(|s| s.shape_param).collect();
    let mut verdicts = Vec::new();

    if schedule.kind == ScheduleKind::Circular {
        let values: Vec<f64> = schedule.stages.iter().map(|s| s.diagnostic).collect();
        let mono = monotone_decreasing(&values);
        verdicts.push(ConvergenceVerdict {
            metric: "eps_sq_log_r".into(),
            final_value: *values.last().unwrap_or(&f64::NAN),
            loglog_slope: loglog_slope(&shapes, &values),
            monotone_decreasing: mono,
            passed: mono,
            values,
        });
    }

    let products: Vec<f64> = schedule
        .stages
        .iter()
        .map(|s| s.theta_scale * s.alpha2n)
        .collect();
    let tol = 1e-12 * schedule.alpha2.abs().max(1.0);
    let constant = products.iter().all(|p| (p - schedule.alpha2).abs() <= tol);
    verdicts.push(ConvergenceVerdict {
        metric: "normalization_alpha_constancy".into(),
        final_value: *products.last().unwrap_or(&f64::NAN),
        loglog_slope: None,
        monotone_decreasing: false,
        passed: constant,
        values: products,
    });

    // ⨍ αₙ = α₁(1 - θₙ) + θₙ α₂,ₙ stays below α₁ + α₂ (plus rounding).
    let means: Vec<f64> = schedule
        .stages
        .iter()
        .map(|s| schedule.alpha1 * (1.0 - s.theta_n) + s.theta_n * s.alpha2n)
        .collect();
    let bound = schedule.alpha1 + schedule.alpha2 + 1e-9;
    let bounded = means.iter().all(|&m| m <= bound);
    verdicts.push(ConvergenceVerdict {
        metric: "mean_alpha_bounded".into(),
        final_value: *means.last().unwrap_or(&f64::NAN),
        loglog_slope: None,
        monotone_decreasing: false,
        passed: bounded,
        values: means,
    });

    verdicts
}

/// Quadratic-form ordering of nested frames (symmetric case).
#[derive(Debug, Clone, Serialize)]
pub struct MonotonicityVerdict {
    pub t_small: f64,
    pub t_large: f64,
    pub sigma_small: Mat2,
    pub sigma_large: Mat2,
    /// Smallest eigenvalue of the symmetric difference `A*² - A*¹`.
    pub min_eigenvalue: f64,
    pub passed: bool,
}

/// Homogenize two nested frames with the same phase conductivities at `h = 0`
/// and check `A*(t_small) ≤ A*(t_large)` as quadratic forms.
pub fn monotonicity_test(
    t_small: f64,
    t_large: f64,
    alpha1: f64,
    alpha2n: f64,
    resolution: usize,
    opts: &SolveOpts,
) -> Result<MonotonicityVerdict> {
    if !(t_small <= t_large && t_large < 0.5 && t_small > 0.0) {
        return Err(HomogError::InvalidParam(format!(
            "need 0 < t_small <= t_large < 1/2, got {t_small}, {t_large}"
        )));
    }
    check_stage_resolution(ScheduleKind::Grid, t_small, resolution)?;
    let phases = PhasePair::new(alpha1, 0.0, alpha2n, 0.0)?;
    let run = |t: f64| -> Result<Mat2> {
        let field = rasterize(&CellGeometry::frame(t)?, resolution)?;
        let pair = crate::cell::homogenize(&field, &phases, Vec3::ZERO, opts)?;
        Ok(pair.sigma2d)
    };
    let sigma_small = run(t_small)?;
    let sigma_large = if t_small == t_large {
        sigma_small
    } else {
        run(t_large)?
    };
    let diff = sigma_large - sigma_small;
    let min_eigenvalue = diff.sym_eigenvalues()[0];
    Ok(MonotonicityVerdict {
        t_small,
        t_large,
        sigma_small,
        sigma_large,
        min_eigenvalue,
        passed: min_eigenvalue >= -1e-8,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::circular_schedule;

    fn quick_opts() -> SweepOpts {
        SweepOpts {
            compute_pw: false,
            ..SweepOpts::default()
        }
    }

    #[test]
    fn resolution_policy_values() {
        let p = ResolutionPolicy::default();
        assert_eq!(p.resolution_for(0.2), 64);
        assert_eq!(p.resolution_for(0.05), 80);
        assert_eq!(p.resolution_for(0.03125), 128);
        assert_eq!(p.resolution_for(0.001), 512);
    }

    #[test]
    fn circular_sweep_errors_decrease() {
        let schedule = circular_schedule(&[0.2, 0.1], 1.0, 0.5, 2.0, 1.0).unwrap();
        let rho = RhoField::constant(1.0).unwrap();
        let h = Vec3::new(1.0, 1.0, 1.0);
        let mut opts = quick_opts();
        opts.policy.min = 48;
        let report = run_sweep(&schedule, &rho, h, None, &opts).unwrap();
        assert_eq!(report.rows.len(), 2);
        assert!(report.rows[1].rel_error_direct < report.rows[0].rel_error_direct);
        assert!(report.max_route_discrepancy() < 1e-10);
    }

    #[test]
    fn under_resolved_stage_flagged() {
        let schedule = circular_schedule(&[0.2, 0.02], 1.0, 0.0, 2.0, 0.0).unwrap();
        let rho = RhoField::constant(1.0).unwrap();
        let err =
            run_sweep(&schedule, &rho, Vec3::ZERO, Some(&[64, 64]), &quick_opts()).unwrap_err();
        assert!(matches!(err, HomogError::UnderResolved(_)), "{err:?}");
    }

    #[test]
    fn conditions_circular() {
        let schedule = circular_schedule(&[0.2, 0.1, 0.05], 1.0, 0.5, 2.0, 1.0).unwrap();
        let verdicts = check_conditions(&schedule);
        let diag = verdicts
            .iter()
            .find(|v| v.metric == "eps_sq_log_r")
            .unwrap();
        assert!(diag.passed && diag.monotone_decreasing);
        let norm = verdicts
            .iter()
            .find(|v| v.metric == "normalization_alpha_constancy")
            .unwrap();
        assert!(norm.passed);
        let mean = verdicts
            .iter()
            .find(|v| v.metric == "mean_alpha_bounded")
            .unwrap();
        assert!(mean.passed);
        for m in &mean.values {
            assert!(*m <= 1.0 + 2.0 + 1e-9);
        }
    }

    #[test]
    fn condition_fails_on_drifting_product() {
        let mut schedule = circular_schedule(&[0.2, 0.1], 1.0, 0.0, 2.0, 0.0).unwrap();
        schedule.stages[1].alpha2n *= 1.5;
        let verdicts = check_conditions(&schedule);
        let norm = verdicts
            .iter()
            .find(|v| v.metric == "normalization_alpha_constancy")
            .unwrap();
        assert!(!norm.passed);
    }

    #[test]
    fn monotonicity_of_nested_frames() {
        let v = monotonicity_test(0.0625, 0.125, 1.0, 8.0, 32, &SolveOpts::default()).unwrap();
        assert!(v.passed, "min eig {}", v.min_eigenvalue);
        assert!(v.min_eigenvalue > 0.01); // strictly better conduction
                                          // Equal thicknesses: zero difference.
        let v0 = monotonicity_test(0.125, 0.125, 1.0, 8.0, 32, &SolveOpts::default()).unwrap();
        assert_eq!(v0.min_eigenvalue, 0.0);
        // Contrast 1: both equal α₁ I₂.
        let v1 = monotonicity_test(0.0625, 0.125, 1.0, 1.0, 32, &SolveOpts::default()).unwrap();
        assert!(v1.min_eigenvalue.abs() < 1e-12);
        assert!((v1.sigma_small.0[0][0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn csv_deterministic() {
        let schedule = circular_schedule(&[0.25, 0.125], 1.0, 0.5, 2.0, 1.0).unwrap();
        let rho = RhoField::constant(1.0).unwrap();
        let h = Vec3::new(1.0, 0.0, 1.0);
        let mut opts = quick_opts();
        opts.policy.min = 32;
        let a = run_sweep(&schedule, &rho, h, None, &opts).unwrap();
        let b = run_sweep(&schedule, &rho, h, None, &opts).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.to_json_summary(&schedule), b.to_json_summary(&schedule));
        // Header plus one line per stage.
        assert_eq!(a.to_csv().lines().count(), 1 + a.rows.len());
    }
}
