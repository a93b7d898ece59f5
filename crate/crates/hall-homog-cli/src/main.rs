//! `hallhomog` — batch front door for the columnar Hall homogenization
//! toolkit. Subcommands: `cell` (single homogenization, both routes), `sweep`
//! (contrast schedules vs oracles), `oracle` (closed forms), `pw` (weighted
//! Poincaré-Wirtinger constant), `macro` (fine vs homogenized 3D solves) and
//! `verify` (module invariant suite).
//!
//! Exit codes: 0 success, 2 validation failure, 3 solver failure,
//! 4 acceptance-check failure. All errors go to stderr with a
//! machine-parsable `error[kind]:` prefix.

mod config;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hall_homog::cell::{estimate_pw_constant, homogenize_both, PhasePair, SolveOpts};
use hall_homog::formulas::{oracle_circular, oracle_grid, LimitParams};
use hall_homog::geometry::{circular_schedule, grid_schedule, RhoField};
use hall_homog::macro3d::{
    compare, solve_fine, solve_homogenized, write_binary_grid, write_metadata, CoefficientField,
    MacroProblem, MacroSolveOpts, MicroGeometry, SourceSpec,
};
use hall_homog::sweep::{run_sweep, SweepOpts};
use hall_homog::tensor::{EffectiveTensor, Mat3, Vec3};
use hall_homog::{par, HomogError};

use config::{
    build_phase_field, merged, parse_f64_list, parse_usize_list, parse_vec3, required,
    resolve_out_dir, FileConfig,
};

#[derive(Parser)]
#[command(
    name = "hallhomog",
    version,
    about = "Effective conductivity of Hall-perturbed columnar composites"
)]
struct Cli {
    /// JSON config file with default parameter values (flags override).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for parallel sections (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct PhaseArgs {
    #[arg(long, allow_negative_numbers = true)]
    alpha1: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    beta1: Option<f64>,
    /// Rescaled inclusion limit α₂ (sweep/oracle) .
    #[arg(long, allow_negative_numbers = true)]
    alpha2: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    beta2: Option<f64>,
    /// Finite-stage inclusion value α₂,ₙ (cell/pw/macro).
    #[arg(long, allow_negative_numbers = true)]
    alpha2n: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    beta2n: Option<f64>,
    /// Magnetic field as `h1,h2,h3`.
    #[arg(long, allow_hyphen_values = true)]
    h: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Homogenize one rasterized cell by both routes and print the tensors.
    Cell {
        #[command(flatten)]
        phases: PhaseArgs,
        /// Geometry: disk:R | frame:T | laminate | homogeneous | file:PATH.
        #[arg(long)]
        geometry: Option<String>,
        /// Raster resolution (cells per side).
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        rel_tol: Option<f64>,
        #[arg(long)]
        max_iter_per_n: Option<usize>,
    },
    /// Run a high-contrast schedule against the closed-form oracle.
    Sweep {
        #[command(flatten)]
        phases: PhaseArgs,
        /// Schedule family: circular | grid.
        #[arg(long)]
        kind: Option<String>,
        /// Stage shape parameters, e.g. `0.2,0.1,0.05` (rₙ or tₙ).
        #[arg(long)]
        stages: Option<String>,
        /// Per-stage raster resolutions (defaults to the resolution policy).
        #[arg(long)]
        resolutions: Option<String>,
        /// Constant ρ value (general ρ via the config file).
        #[arg(long)]
        rho_const: Option<f64>,
        /// Skip the per-stage PW eigensolve.
        #[arg(long)]
        no_pw: bool,
        /// Include wall-clock timings on stderr (never in the artifacts).
        #[arg(long)]
        timing: bool,
        #[arg(long)]
        out_csv: Option<PathBuf>,
        #[arg(long)]
        out_json: Option<PathBuf>,
    },
    /// Evaluate a closed-form limit tensor.
    Oracle {
        #[command(flatten)]
        phases: PhaseArgs,
        /// circular | grid.
        #[arg(long)]
        example: Option<String>,
        /// Pointwise density value θ = ρ(x').
        #[arg(long)]
        rho: Option<f64>,
    },
    /// Estimate the weighted Poincaré-Wirtinger constant of a cell.
    Pw {
        #[arg(long)]
        geometry: Option<String>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        alpha1: Option<f64>,
        #[arg(long)]
        alpha2n: Option<f64>,
        /// Cell size for the rescaled ε²c diagnostic.
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Fine-scale vs homogenized 3D Dirichlet solves.
    Macro {
        #[command(flatten)]
        phases: PhaseArgs,
        /// Microstructure period (1/ε must be an integer).
        #[arg(long)]
        epsilon: Option<f64>,
        /// disk:R | frame:T.
        #[arg(long)]
        geometry: Option<String>,
        /// Grid as `nx,ny,nz` (each ≤ 48).
        #[arg(long)]
        res: Option<String>,
        /// Cell-problem resolution for the effective tensor.
        #[arg(long)]
        cell_n: Option<usize>,
        /// Constant source value.
        #[arg(long)]
        f_const: Option<f64>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Run the aggregated module invariant suite.
    Verify {
        /// Skip the slower 3D checks.
        #[arg(long)]
        quick: bool,
    },
}

fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

fn print_mat3(label: &str, m: &Mat3) {
    println!("{label}:");
    for row in &m.0 {
        println!("  {} {} {}", fmt17(row[0]), fmt17(row[1]), fmt17(row[2]));
    }
}

fn print_tensor_blocks(t: &EffectiveTensor) {
    let s = t.transversal();
    println!(
        "  sigma_t: [{} {}; {} {}]",
        fmt17(s.0[0][0]),
        fmt17(s.0[0][1]),
        fmt17(s.0[1][0]),
        fmt17(s.0[1][1])
    );
    println!("  p*: [{} {}]", fmt17(t.col3().0[0]), fmt17(t.col3().0[1]));
    println!("  q*: [{} {}]", fmt17(t.row3().0[0]), fmt17(t.row3().0[1]));
    println!("  alpha*: {}", fmt17(t.corner()));
}

enum CliError {
    Validation(String),
    Solver(String),
    Acceptance(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Acceptance(_) => 4,
        }
    }

    fn report(&self) {
        match self {
            CliError::Validation(m) => eprintln!("error[validation]: {m}"),
            CliError::Solver(m) => eprintln!("error[solver]: {m}"),
            CliError::Acceptance(m) => eprintln!("error[acceptance]: {m}"),
        }
    }
}

fn classify(err: HomogError) -> CliError {
    match err {
        HomogError::InvalidParam(_)
        | HomogError::UnderResolved(_)
        | HomogError::Format(_)
        | HomogError::Io(_) => CliError::Validation(err.to_string()),
        HomogError::NonConvergence { .. }
        | HomogError::EigenNonConvergence { .. }
        | HomogError::SingularMatrix { .. }
        | HomogError::DegenerateContrast(_) => CliError::Solver(err.to_string()),
    }
}

fn validation<T>(r: Result<T, String>) -> Result<T, CliError> {
    r.map_err(CliError::Validation)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(path) => validation(FileConfig::load(path))?,
        None => FileConfig::default(),
    };
    let threads = merged(cli.threads, file.threads, 0);

    par::with_thread_limit(threads, || dispatch(cli.command, &file))
}

fn solve_opts(rel_tol: Option<f64>, max_iter: Option<usize>, file: &FileConfig) -> SolveOpts {
    SolveOpts {
        rel_tol: merged(rel_tol, file.rel_tol, 1e-10),
        max_iter_per_n: merged(max_iter, file.max_iter_per_n, 20),
        ..SolveOpts::default()
    }
}

fn parse_h(flag: Option<String>, file: &FileConfig) -> Result<Vec3, CliError> {
    match flag {
        Some(s) => validation(parse_vec3(&s)),
        None => Ok(Vec3(file.h.unwrap_or([0.0, 0.0, 0.0]))),
    }
}

fn dispatch(command: Command, file: &FileConfig) -> Result<(), CliError> {
    match command {
        Command::Cell {
            phases,
            geometry,
            n,
            rel_tol,
            max_iter_per_n,
        } => {
            let n = merged(n, file.n, 64);
            let spec = validation(required(geometry, file.geometry.clone(), "geometry"))?;
            let field = validation(build_phase_field(&spec, n))?;
            let pair = PhasePair::new(
                validation(required(phases.alpha1, file.alpha1, "alpha1"))?,
                merged(phases.beta1, file.beta1, 0.0),
                validation(required(phases.alpha2n, file.alpha2n, "alpha2n"))?,
                merged(phases.beta2n, file.beta2n, 0.0),
            )
            .map_err(classify)?;
            let h = parse_h(phases.h, file)?;
            let opts = solve_opts(rel_tol, max_iter_per_n, file);
            let (direct, pi) = homogenize_both(&field, &pair, h, &opts).map_err(classify)?;
            println!(
                "geometry {spec} N {n} raster_fraction {}",
                fmt17(field.raster_fraction())
            );
            print_mat3("sigma3d (direct route)", direct.sigma3d.as_mat3());
            print_tensor_blocks(&direct.sigma3d);
            print_mat3("sigma3d (pi route)", pi.sigma3d.as_mat3());
            println!(
                "route_discrepancy {}",
                fmt17(direct.sigma3d.as_mat3().max_abs_diff(pi.sigma3d.as_mat3()))
            );
            println!(
                "iterations {} max_residual {}",
                direct.iterations + pi.iterations,
                fmt17(direct.max_residual.max(pi.max_residual))
            );
            Ok(())
        }

        Command::Sweep {
            phases,
            kind,
            stages,
            resolutions,
            rho_const,
            no_pw,
            timing,
            out_csv,
            out_json,
        } => {
            let kind = validation(required(kind, file.kind.clone(), "kind"))?;
            let stage_list = match stages {
                Some(s) => validation(parse_f64_list(&s))?,
                None => validation(required(None, file.stages.clone(), "stages"))?,
            };
            let alpha1 = validation(required(phases.alpha1, file.alpha1, "alpha1"))?;
            let beta1 = merged(phases.beta1, file.beta1, 0.0);
            let alpha2 = validation(required(phases.alpha2, file.alpha2, "alpha2"))?;
            let beta2 = merged(phases.beta2, file.beta2, 0.0);
            let schedule = match kind.as_str() {
                "circular" => circular_schedule(&stage_list, alpha1, beta1, alpha2, beta2),
                "grid" => grid_schedule(&stage_list, alpha1, beta1, alpha2, beta2),
                other => {
                    return Err(CliError::Validation(format!(
                        "unknown schedule kind '{other}' (expected circular or grid)"
                    )))
                }
            }
            .map_err(classify)?;
            let h = parse_h(phases.h, file)?;
            let rho = match (rho_const, &file.rho) {
                (Some(v), _) => RhoField::constant(v).map_err(classify)?,
                (None, Some(r)) => r.clone(),
                (None, None) => RhoField::constant(1.0).map_err(classify)?,
            };
            let res_list = match resolutions {
                Some(s) => Some(validation(parse_usize_list(&s))?),
                None => file.resolutions.clone(),
            };
            let opts = SweepOpts {
                solver: solve_opts(None, None, file),
                compute_pw: !(no_pw || file.no_pw.unwrap_or(false)),
                ..SweepOpts::default()
            };
            let report =
                run_sweep(&schedule, &rho, h, res_list.as_deref(), &opts).map_err(classify)?;

            for row in &report.rows {
                println!(
                    "stage {} shape {} N {} err_direct {} err_pi {} route_disc {}",
                    row.stage,
                    fmt17(row.shape_param),
                    row.resolution,
                    fmt17(row.rel_error_direct),
                    fmt17(row.rel_error_pi),
                    fmt17(row.route_discrepancy)
                );
                if timing || file.timing.unwrap_or(false) {
                    eprintln!("timing: stage {} took {:.3} s", row.stage, row.wall_time_s);
                }
            }
            if let Some(path) = out_csv {
                std::fs::write(&path, report.to_csv())
                    .map_err(|e| CliError::Validation(format!("write {}: {e}", path.display())))?;
                println!("wrote {}", path.display());
            }
            if let Some(path) = out_json {
                std::fs::write(&path, report.to_json_summary(&schedule))
                    .map_err(|e| CliError::Validation(format!("write {}: {e}", path.display())))?;
                println!("wrote {}", path.display());
            }
            Ok(())
        }

        Command::Oracle {
            phases,
            example,
            rho,
        } => {
            let example = validation(required(example, file.example.clone(), "example"))?;
            let p = LimitParams::new(
                validation(required(phases.alpha1, file.alpha1, "alpha1"))?,
                merged(phases.beta1, file.beta1, 0.0),
                validation(required(phases.alpha2, file.alpha2, "alpha2"))?,
                merged(phases.beta2, file.beta2, 0.0),
                parse_h(phases.h, file)?,
            )
            .map_err(classify)?;
            let rho = merged(rho, file.theta, 1.0);
            let tensor = match example.as_str() {
                "circular" => oracle_circular(&p, rho),
                "grid" => oracle_grid(&p, rho),
                other => {
                    return Err(CliError::Validation(format!(
                        "unknown example '{other}' (expected circular or grid)"
                    )))
                }
            }
            .map_err(classify)?;
            print_mat3(
                &format!("sigma_star ({example}, rho = {rho})"),
                tensor.as_mat3(),
            );
            print_tensor_blocks(&tensor);
            Ok(())
        }

        Command::Pw {
            geometry,
            n,
            alpha1,
            alpha2n,
            epsilon,
        } => {
            let n = merged(n, file.n, 64);
            let spec = validation(required(geometry, file.geometry.clone(), "geometry"))?;
            let field = validation(build_phase_field(&spec, n))?;
            let alpha1 = validation(required(alpha1, file.alpha1, "alpha1"))?;
            let alpha2n = validation(required(alpha2n, file.alpha2n, "alpha2n"))?;
            let est = estimate_pw_constant(&field, alpha1, alpha2n, &solve_opts(None, None, file))
                .map_err(classify)?;
            println!("pw_constant {}", fmt17(est.c_value));
            println!("iterations {}", est.iterations);
            if let Some(eps) = epsilon.or(file.epsilon) {
                println!("rescaled_eps_sq_c {}", fmt17(eps * eps * est.c_value));
            }
            Ok(())
        }

        Command::Macro {
            phases,
            epsilon,
            geometry,
            res,
            cell_n,
            f_const,
            out_dir,
        } => {
            let epsilon = validation(required(epsilon, file.epsilon, "epsilon"))?;
            let spec = validation(required(geometry, file.geometry.clone(), "geometry"))?;
            let micro = if let Some(rest) = spec.strip_prefix("disk:") {
                MicroGeometry::Disk {
                    r: validation(rest.parse().map_err(|_| format!("bad radius '{rest}'")))?,
                }
            } else if let Some(rest) = spec.strip_prefix("frame:") {
                MicroGeometry::Frame {
                    t: validation(rest.parse().map_err(|_| format!("bad thickness '{rest}'")))?,
                }
            } else {
                return Err(CliError::Validation(format!(
                    "macro geometry must be disk:R or frame:T, got '{spec}'"
                )));
            };
            let pair = PhasePair::new(
                validation(required(phases.alpha1, file.alpha1, "alpha1"))?,
                merged(phases.beta1, file.beta1, 0.0),
                validation(required(phases.alpha2n, file.alpha2n, "alpha2n"))?,
                merged(phases.beta2n, file.beta2n, 0.0),
            )
            .map_err(classify)?;
            let h = parse_h(phases.h, file)?;
            let dims = match res {
                Some(s) => {
                    let v = validation(parse_usize_list(&s))?;
                    if v.len() != 3 {
                        return Err(CliError::Validation(format!(
                            "res needs three integers, got '{s}'"
                        )));
                    }
                    (v[0], v[1], v[2])
                }
                None => {
                    let v = file.res.unwrap_or([32, 32, 32]);
                    (v[0], v[1], v[2])
                }
            };
            let source = SourceSpec::Constant {
                value: merged(f_const, file.f_const, 1.0),
            };
            let problem = MacroProblem {
                epsilon,
                geometry: micro,
                phases: pair,
                h,
                rho: None,
                source: source.clone(),
            };

            // Effective tensor from the cell solver at the same stage.
            let cell_n = merged(cell_n, file.cell_n, 48);
            let field = validation(build_phase_field(&spec, cell_n))?;
            let opts = solve_opts(None, None, file);
            let (direct, _) = homogenize_both(&field, &pair, h, &opts).map_err(classify)?;
            print_mat3("sigma_star (cell solver)", direct.sigma3d.as_mat3());

            let mopts = MacroSolveOpts::default();
            let fine = solve_fine(&problem, dims, &mopts).map_err(classify)?;
            let hom = solve_homogenized(
                &CoefficientField::Constant(*direct.sigma3d.as_mat3()),
                &source,
                dims,
                &mopts,
            )
            .map_err(classify)?;
            let metrics = compare(&fine, &hom).map_err(classify)?;
            println!("l2_rel {}", fmt17(metrics.l2_rel));
            println!("h1_rel {}", fmt17(metrics.h1_rel));
            println!(
                "energy_defect_fine {} energy_defect_hom {}",
                fmt17(fine.energy_defect()),
                fmt17(hom.energy_defect())
            );

            let out = resolve_out_dir(out_dir, file.out_dir.clone());
            std::fs::create_dir_all(&out)
                .map_err(|e| CliError::Validation(format!("create {}: {e}", out.display())))?;
            write_binary_grid(&out.join("fine.grid"), &fine).map_err(classify)?;
            write_metadata(&out.join("fine.json"), &fine, "fine").map_err(classify)?;
            write_binary_grid(&out.join("homogenized.grid"), &hom).map_err(classify)?;
            write_metadata(&out.join("homogenized.json"), &hom, "homogenized").map_err(classify)?;
            let summary = serde_json::json!({
                "epsilon": epsilon,
                "dims": [dims.0, dims.1, dims.2],
                "l2_rel": metrics.l2_rel,
                "h1_rel": metrics.h1_rel,
            });
            std::fs::write(
                out.join("compare.json"),
                serde_json::to_string_pretty(&summary).unwrap(),
            )
            .map_err(|e| CliError::Validation(format!("write compare.json: {e}")))?;
            println!("wrote {}", out.display());
            Ok(())
        }

        Command::Verify { quick } => verify::run(quick).map_err(CliError::Acceptance),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            err.report();
            ExitCode::from(err.exit_code())
        }
    }
}
