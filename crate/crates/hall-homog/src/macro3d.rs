//! Small-scale verification of the homogenization statement itself: solve the
//! fine-scale Dirichlet problem on the unit cube with the columnar two-phase
//! coefficient, solve the homogenized problem with the effective tensor, and
//! compare the solutions.
//!
//! Trilinear hexahedral elements on a structured grid, coefficient constant
//! per element (phase of the element center), zero Dirichlet boundary. The
//! reference derivative products are integrated exactly with 2×2×2 Gauss
//! points once per solve and scaled per axis spacing.

use std::io::{Read as _, Write as _};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cell::PhasePair;
use crate::fem::krylov::InnerCgPrecond;
use crate::fem::{fgmres, Csr, CsrBuilder, JacobiPrecond, KrylovOpts};
use crate::geometry::{modulated_radius, modulated_thickness, RhoField};
use crate::tensor::{hall_matrix, Mat3, Vec2, Vec3};
use crate::{HomogError, Result};

/// Hard ceiling on nodes per axis for desk-scale validation runs.
pub const MAX_AXIS_RESOLUTION: usize = 48;

// ---------------------------------------------------------------------------
// Problem description
// ---------------------------------------------------------------------------

/// Source term `f`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum SourceSpec {
    Constant {
        value: f64,
    },
    /// Product of per-coordinate polynomials `p(x₁) q(x₂) r(x₃)`, each given
    /// by its coefficients in increasing degree.
    SeparablePoly {
        px: Vec<f64>,
        py: Vec<f64>,
        pz: Vec<f64>,
    },
}

impl Default for SourceSpec {
    fn default() -> Self {
        SourceSpec::Constant { value: 1.0 }
    }
}

fn poly_eval(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

impl SourceSpec {
    pub fn eval(&self, x: f64, y: f64, z: f64) -> f64 {
        match self {
            SourceSpec::Constant { value } => *value,
            SourceSpec::SeparablePoly { px, py, pz } => {
                poly_eval(px, x) * poly_eval(py, y) * poly_eval(pz, z)
            }
        }
    }
}

/// Transversal microstructure family of the fine problem.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "shape")]
pub enum MicroGeometry {
    Disk { r: f64 },
    Frame { t: f64 },
}

/// Fine-scale Dirichlet problem on `Ω = (0,1)²×(0,1)` with the columnar
/// ε-periodic two-phase Hall coefficient.
#[derive(Debug, Clone)]
pub struct MacroProblem {
    pub epsilon: f64,
    pub geometry: MicroGeometry,
    pub phases: PhasePair,
    pub h: Vec3,
    /// Optional local modulation of the shape parameter.
    pub rho: Option<RhoField>,
    pub source: SourceSpec,
}

impl MacroProblem {
    /// `1/ε` must be an integer: the microstructure tiles the cross-section.
    pub fn periods(&self) -> Result<usize> {
        let m = 1.0 / self.epsilon;
        if !(self.epsilon > 0.0) || (m - m.round()).abs() > 1e-9 {
            return Err(HomogError::InvalidParam(format!(
                "epsilon = {} does not divide the unit cross-section evenly",
                self.epsilon
            )));
        }
        Ok(m.round() as usize)
    }
}

/// Effective coefficient of the homogenized run: constant or varying over the
/// cross-section (columnar).
#[derive(Clone)]
pub enum CoefficientField {
    Constant(Mat3),
    Columnar(Arc<dyn Fn(Vec2) -> Mat3 + Send + Sync>),
}

impl std::fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CoefficientField::Constant(m) => write!(f, "Constant({m:?})"),
            CoefficientField::Columnar(_) => write!(f, "Columnar(<fn>)"),
        }
    }
}

impl CoefficientField {
    fn eval(&self, x: Vec2) -> Mat3 {
        match self {
            CoefficientField::Constant(m) => *m,
            CoefficientField::Columnar(f) => f(x),
        }
    }
}

/// Krylov settings for the 3D solves.
#[derive(Debug, Clone, Copy)]
pub struct MacroSolveOpts {
    pub rel_tol: f64,
    pub max_iter_per_n: usize,
    pub restart: usize,
}

impl Default for MacroSolveOpts {
    fn default() -> Self {
        MacroSolveOpts {
            rel_tol: 1e-10,
            max_iter_per_n: 60,
            restart: 60,
        }
    }
}

/// Discrete solution on the full nodal grid (boundary nodes are exactly 0).
#[derive(Debug, Clone)]
pub struct MacroSolution {
    /// Elements per axis.
    pub dims: (usize, usize, usize),
    /// Nodal values, length `(nx+1)(ny+1)(nz+1)`, x fastest.
    pub u: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    /// Discrete energy `uᵀ K u` and load `Fᵀ u`; equal up to solver residual.
    pub energy_lhs: f64,
    pub energy_rhs: f64,
}

impl MacroSolution {
    pub fn node_count(&self) -> usize {
        (self.dims.0 + 1) * (self.dims.1 + 1) * (self.dims.2 + 1)
    }

    #[inline]
    pub fn node_index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * (self.dims.1 + 1) + j) * (self.dims.0 + 1) + i
    }

    /// Value at grid node `(i, j, k)`.
    pub fn value(&self, i: usize, j: usize, k: usize) -> f64 {
        self.u[self.node_index(i, j, k)]
    }

    /// Relative defect of the energy identity.
    pub fn energy_defect(&self) -> f64 {
        let scale = self.energy_lhs.abs().max(self.energy_rhs.abs()).max(1e-300);
        (self.energy_lhs - self.energy_rhs).abs() / scale
    }

    /// Minimum nodal value (max-principle surrogate for `f ≥ 0`, `h = 0`).
    pub fn min_value(&self) -> f64 {
        self.u.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

// ---------------------------------------------------------------------------
// Trilinear element integrals
// ---------------------------------------------------------------------------

/// `G[a][b][i][j] = ∫_{[0,1]³} ∂_a φ_i ∂_b φ_j`, integrated exactly with
/// 2-point Gauss per axis. Node `l = i + 2j + 4k` for corner `(i,j,k)`.
fn reference_gradients() -> [[[[f64; 8]; 8]; 3]; 3] {
    let gp = [0.5 - 0.5 / 3.0_f64.sqrt(), 0.5 + 0.5 / 3.0_f64.sqrt()];
    let grad = |l: usize, p: [f64; 3]| -> [f64; 3] {
        let li = [l & 1, (l >> 1) & 1, (l >> 2) & 1];
        let shape = |bit: usize, s: f64| if bit == 1 { s } else { 1.0 - s };
        let dshape = |bit: usize| if bit == 1 { 1.0 } else { -1.0 };
        [
            dshape(li[0]) * shape(li[1], p[1]) * shape(li[2], p[2]),
            shape(li[0], p[0]) * dshape(li[1]) * shape(li[2], p[2]),
            shape(li[0], p[0]) * shape(li[1], p[1]) * dshape(li[2]),
        ]
    };
    let mut g = [[[[0.0; 8]; 8]; 3]; 3];
    for &px in &gp {
        for &py in &gp {
            for &pz in &gp {
                let w = 0.125; // (1/2)³ Gauss weights
                let grads: Vec<[f64; 3]> = (0..8).map(|l| grad(l, [px, py, pz])).collect();
                for a in 0..3 {
                    for b in 0..3 {
                        for i in 0..8 {
                            for j in 0..8 {
                                g[a][b][i][j] += w * grads[i][a] * grads[j][b];
                            }
                        }
                    }
                }
            }
        }
    }
    g
}

struct Grid3 {
    nx: usize,
    ny: usize,
    nz: usize,
}

impl Grid3 {
    fn node(&self, i: usize, j: usize, k: usize) -> usize {
        (k * (self.ny + 1) + j) * (self.nx + 1) + i
    }

    fn interior_index(&self) -> (Vec<i64>, usize) {
        let mut map = vec![-1i64; (self.nx + 1) * (self.ny + 1) * (self.nz + 1)];
        let mut count = 0usize;
        for k in 1..self.nz {
            for j in 1..self.ny {
                for i in 1..self.nx {
                    map[self.node(i, j, k)] = count as i64;
                    count += 1;
                }
            }
        }
        (map, count)
    }
}

fn validate_dims(dims: (usize, usize, usize)) -> Result<()> {
    for n in [dims.0, dims.1, dims.2] {
        if n < 2 {
            return Err(HomogError::UnderResolved(format!(
                "need at least 2 elements per axis, got {n}"
            )));
        }
        if n > MAX_AXIS_RESOLUTION {
            return Err(HomogError::InvalidParam(format!(
                "axis resolution {n} exceeds the desk-scale ceiling {MAX_AXIS_RESOLUTION}"
            )));
        }
    }
    Ok(())
}

/// Assemble the interior-node operator with a per-column element matrix
/// builder and the load vector for `source`.
fn assemble_interior(
    dims: (usize, usize, usize),
    element: impl Fn(usize, usize) -> [[f64; 8]; 8],
    source: Option<&SourceSpec>,
) -> (Csr, Vec<f64>) {
    let (nx, ny, nz) = dims;
    let grid = Grid3 { nx, ny, nz };
    let (map, unknowns) = grid.interior_index();
    let (hx, hy, hz) = (1.0 / nx as f64, 1.0 / ny as f64, 1.0 / nz as f64);
    let vol = hx * hy * hz;
    let mut builder = CsrBuilder::new(unknowns);
    let mut rhs = vec![0.0; unknowns];
    let mut cache: Vec<Option<[[f64; 8]; 8]>> = vec![None; nx * ny];
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let ke = {
                    let slot = &mut cache[j * nx + i];
                    if slot.is_none() {
                        *slot = Some(element(i, j));
                    }
                    slot.unwrap()
                };
                let nodes = [
                    grid.node(i, j, k),
                    grid.node(i + 1, j, k),
                    grid.node(i, j + 1, k),
                    grid.node(i + 1, j + 1, k),
                    grid.node(i, j, k + 1),
                    grid.node(i + 1, j, k + 1),
                    grid.node(i, j + 1, k + 1),
                    grid.node(i + 1, j + 1, k + 1),
                ];
                let load = source.map(|s| {
                    s.eval(
                        (i as f64 + 0.5) * hx,
                        (j as f64 + 0.5) * hy,
                        (k as f64 + 0.5) * hz,
                    ) * vol
                        / 8.0
                });
                for (li, &gi) in nodes.iter().enumerate() {
                    let row = map[gi];
                    if row < 0 {
                        continue;
                    }
                    if let Some(load) = load {
                        rhs[row as usize] += load;
                    }
                    for (lj, &gj) in nodes.iter().enumerate() {
                        let col = map[gj];
                        if col >= 0 {
                            builder.add(row as usize, col as usize, ke[li][lj]);
                        }
                    }
                }
            }
        }
    }
    (builder.finish(), rhs)
}

/// Assemble and solve the Dirichlet problem with a columnar coefficient given
/// per transversal element index.
fn solve_columnar(
    dims: (usize, usize, usize),
    coeff: impl Fn(usize, usize) -> Mat3,
    source: &SourceSpec,
    opts: &MacroSolveOpts,
) -> Result<MacroSolution> {
    let (nx, ny, nz) = dims;
    let grid = Grid3 { nx, ny, nz };
    let (map, _) = grid.interior_index();
    let (hx, hy, hz) = (1.0 / nx as f64, 1.0 / ny as f64, 1.0 / nz as f64);
    let vol = hx * hy * hz;
    let inv_h = [1.0 / hx, 1.0 / hy, 1.0 / hz];
    let gref = reference_gradients();

    let full_element = |i: usize, j: usize| -> [[f64; 8]; 8] {
        let sigma = coeff(i, j);
        let mut m = [[0.0; 8]; 8];
        for a in 0..3 {
            for b in 0..3 {
                let s = sigma.0[a][b];
                if s == 0.0 {
                    continue;
                }
                let scale = s * vol * inv_h[a] * inv_h[b];
                // K[i][j] = Σ σ_ab ∫ ∂_b φ_j ∂_a φ_i
                for li in 0..8 {
                    for lj in 0..8 {
                        m[li][lj] += scale * gref[a][b][li][lj];
                    }
                }
            }
        }
        m
    };
    let (matrix, rhs) = assemble_interior(dims, full_element, Some(source));

    let n_axis = nx.max(ny).max(nz);
    let kopts = KrylovOpts {
        rel_tol: opts.rel_tol,
        max_iter: opts.max_iter_per_n * n_axis,
        restart: opts.restart,
    };
    let jacobi = JacobiPrecond::from_matrix(&matrix);
    let (x, stats) = match fgmres(&matrix, &rhs, None, &kopts, &jacobi, None) {
        Ok(r) => r,
        Err(HomogError::NonConvergence { .. }) => {
            // Retry preconditioned by an inner CG on the scalar symmetric part.
            let scalar_element = |i: usize, j: usize| -> [[f64; 8]; 8] {
                let sigma = coeff(i, j);
                let a_mean = (sigma.0[0][0] + sigma.0[1][1] + sigma.0[2][2]) / 3.0;
                let mut m = [[0.0; 8]; 8];
                for a in 0..3 {
                    let scale = a_mean * vol * inv_h[a] * inv_h[a];
                    for li in 0..8 {
                        for lj in 0..8 {
                            m[li][lj] += scale * gref[a][a][li][lj];
                        }
                    }
                }
                m
            };
            let (scalar, _) = assemble_interior(dims, scalar_element, None);
            let precond = InnerCgPrecond::new(
                scalar,
                KrylovOpts {
                    rel_tol: 1e-2,
                    max_iter: 4 * n_axis * n_axis,
                    restart: 0,
                },
                false,
            );
            fgmres(&matrix, &rhs, None, &kopts, &precond, None)?
        }
        Err(e) => return Err(e),
    };

    let unknowns = matrix.n();
    let mut kx = vec![0.0; unknowns];
    matrix.matvec(&x, &mut kx);
    let energy_lhs: f64 = x.iter().zip(&kx).map(|(a, b)| a * b).sum();
    let energy_rhs: f64 = x.iter().zip(&rhs).map(|(a, b)| a * b).sum();

    let mut u = vec![0.0; (nx + 1) * (ny + 1) * (nz + 1)];
    for (node, &eq) in map.iter().enumerate() {
        if eq >= 0 {
            u[node] = x[eq as usize];
        }
    }
    Ok(MacroSolution {
        dims,
        u,
        residual: stats.residual,
        iterations: stats.iterations,
        energy_lhs,
        energy_rhs,
    })
}

/// Solve the fine-scale problem with the ε-periodic two-phase coefficient
/// `σₙ(h)(x₁,x₂)`.
pub fn solve_fine(
    problem: &MacroProblem,
    dims: (usize, usize, usize),
    opts: &MacroSolveOpts,
) -> Result<MacroSolution> {
    validate_dims(dims)?;
    let periods = problem.periods()?;
    let (nx, ny, _) = dims;
    // Feature size check: ≥ 2 elements across a fibre/strut.
    let cells_per_period = (nx.min(ny) as f64) * problem.epsilon;
    let feature_cells = match problem.geometry {
        MicroGeometry::Disk { r } => 2.0 * r * cells_per_period,
        MicroGeometry::Frame { t } => t * cells_per_period,
    };
    if feature_cells + 1e-9 < 2.0 {
        return Err(HomogError::UnderResolved(format!(
            "microstructure feature spans {feature_cells:.2} elements, needs 2"
        )));
    }

    let (hx, hy) = (1.0 / nx as f64, 1.0 / ny as f64);
    let eps = problem.epsilon;
    let sigma1 = Mat3::IDENTITY.scale(problem.phases.alpha1)
        + hall_matrix(problem.h).scale(problem.phases.beta1);
    let sigma2 = Mat3::IDENTITY.scale(problem.phases.alpha2n)
        + hall_matrix(problem.h).scale(problem.phases.beta2n);
    let geometry = problem.geometry;
    let rho = problem.rho.clone();
    let _ = periods;

    let coeff = move |i: usize, j: usize| -> Mat3 {
        let x = (i as f64 + 0.5) * hx;
        let y = (j as f64 + 0.5) * hy;
        let kx = (x / eps).floor();
        let ky = (y / eps).floor();
        // Local cell coordinates in (-1/2, 1/2)².
        let y1 = x / eps - kx - 0.5;
        let y2 = y / eps - ky - 0.5;
        let lattice = Vec2::new(eps * kx, eps * ky);
        let inside = match geometry {
            MicroGeometry::Disk { r } => {
                let r_loc = match &rho {
                    Some(rho) => modulated_radius(rho, r, lattice),
                    None => r,
                };
                y1 * y1 + y2 * y2 <= r_loc * r_loc
            }
            MicroGeometry::Frame { t } => {
                let t_loc = match &rho {
                    Some(rho) => modulated_thickness(rho, t, lattice),
                    None => t,
                };
                y1.abs().max(y2.abs()) >= 0.5 - t_loc
            }
        };
        if inside {
            sigma2
        } else {
            sigma1
        }
    };
    solve_columnar(dims, coeff, &problem.source, opts)
}

/// Solve the homogenized problem with an effective (possibly x′-dependent)
/// coefficient.
pub fn solve_homogenized(
    sigma_star: &CoefficientField,
    source: &SourceSpec,
    dims: (usize, usize, usize),
    opts: &MacroSolveOpts,
) -> Result<MacroSolution> {
    validate_dims(dims)?;
    // Coercivity guard on the symmetric part at a few sample points.
    let (nx, ny) = (dims.0, dims.1);
    for (i, j) in [(0, 0), (nx / 2, ny / 2), (nx - 1, ny - 1)] {
        let x = Vec2::new((i as f64 + 0.5) / nx as f64, (j as f64 + 0.5) / ny as f64);
        let s = sigma_star.eval(x).symmetric_part();
        let tr = s.0[0][0].min(s.0[1][1]).min(s.0[2][2]);
        if tr <= 0.0 {
            return Err(HomogError::InvalidParam(
                "effective coefficient is not coercive".into(),
            ));
        }
    }
    let (hx, hy) = (1.0 / dims.0 as f64, 1.0 / dims.1 as f64);
    let field = sigma_star.clone();
    let coeff = move |i: usize, j: usize| -> Mat3 {
        field.eval(Vec2::new((i as f64 + 0.5) * hx, (j as f64 + 0.5) * hy))
    };
    solve_columnar(dims, coeff, source, opts)
}

// ---------------------------------------------------------------------------
// Comparison
// ---------------------------------------------------------------------------

/// Relative L² and H¹-seminorm distances between two solutions.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ErrorMetrics {
    pub l2_rel: f64,
    pub h1_rel: f64,
}

fn restriction_factor(fine: usize, coarse: usize) -> Result<usize> {
    if coarse == 0 || fine % coarse != 0 {
        return Err(HomogError::InvalidParam(format!(
            "grids are not nested: {fine} vs {coarse} elements"
        )));
    }
    Ok(fine / coarse)
}

/// Restrict `sol` to a coarser nested grid by node injection.
fn restrict(sol: &MacroSolution, dims: (usize, usize, usize)) -> Result<MacroSolution> {
    let fx = restriction_factor(sol.dims.0, dims.0)?;
    let fy = restriction_factor(sol.dims.1, dims.1)?;
    let fz = restriction_factor(sol.dims.2, dims.2)?;
    let mut u = vec![0.0; (dims.0 + 1) * (dims.1 + 1) * (dims.2 + 1)];
    let coarse = MacroSolution {
        dims,
        u: vec![],
        residual: sol.residual,
        iterations: sol.iterations,
        energy_lhs: sol.energy_lhs,
        energy_rhs: sol.energy_rhs,
    };
    for k in 0..=dims.2 {
        for j in 0..=dims.1 {
            for i in 0..=dims.0 {
                u[coarse.node_index(i, j, k)] = sol.value(i * fx, j * fy, k * fz);
            }
        }
    }
    Ok(MacroSolution { u, ..coarse })
}

/// Compare two solutions, restricting the finer one to the coarser grid.
/// The reference for the relative norms is the first argument (fine).
pub fn compare(u_fine: &MacroSolution, u_hom: &MacroSolution) -> Result<ErrorMetrics> {
    let target = (
        u_fine.dims.0.min(u_hom.dims.0),
        u_fine.dims.1.min(u_hom.dims.1),
        u_fine.dims.2.min(u_hom.dims.2),
    );
    let a = restrict(u_fine, target)?;
    let b = restrict(u_hom, target)?;
    let (nx, ny, nz) = target;
    let w = 1.0 / ((nx + 1) * (ny + 1) * (nz + 1)) as f64;

    let mut diff2 = 0.0;
    let mut ref2 = 0.0;
    for (x, y) in a.u.iter().zip(&b.u) {
        diff2 += w * (x - y) * (x - y);
        ref2 += w * x * x;
    }

    // H¹ seminorm from element-centered gradients.
    let (hx, hy, hz) = (1.0 / nx as f64, 1.0 / ny as f64, 1.0 / nz as f64);
    let grad_at = |s: &MacroSolution, i: usize, j: usize, k: usize| -> [f64; 3] {
        let mut g = [0.0; 3];
        for dj in 0..2 {
            for dk in 0..2 {
                g[0] += s.value(i + 1, j + dj, k + dk) - s.value(i, j + dj, k + dk);
            }
        }
        for di in 0..2 {
            for dk in 0..2 {
                g[1] += s.value(i + di, j + 1, k + dk) - s.value(i + di, j, k + dk);
            }
        }
        for di in 0..2 {
            for dj in 0..2 {
                g[2] += s.value(i + di, j + dj, k + 1) - s.value(i + di, j + dj, k);
            }
        }
        [g[0] / (4.0 * hx), g[1] / (4.0 * hy), g[2] / (4.0 * hz)]
    };
    let vol = hx * hy * hz;
    let mut gdiff2 = 0.0;
    let mut gref2 = 0.0;
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let ga = grad_at(&a, i, j, k);
                let gb = grad_at(&b, i, j, k);
                for d in 0..3 {
                    gdiff2 += vol * (ga[d] - gb[d]) * (ga[d] - gb[d]);
                    gref2 += vol * ga[d] * ga[d];
                }
            }
        }
    }

    Ok(ErrorMetrics {
        l2_rel: (diff2 / ref2.max(1e-300)).sqrt(),
        h1_rel: (gdiff2 / gref2.max(1e-300)).sqrt(),
    })
}

// ---------------------------------------------------------------------------
// Export
// ---------------------------------------------------------------------------

/// Flat binary grid: three little-endian u32 node counts, then f64
/// little-endian nodal values, row-major with x fastest.
pub fn write_binary_grid(path: &Path, sol: &MacroSolution) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for d in [sol.dims.0 + 1, sol.dims.1 + 1, sol.dims.2 + 1] {
        out.write_all(&(d as u32).to_le_bytes())?;
    }
    for v in &sol.u {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Read a binary grid written by [`write_binary_grid`].
pub fn read_binary_grid(path: &Path) -> Result<((usize, usize, usize), Vec<f64>)> {
    let mut file = std::fs::File::open(path)?;
    let mut head = [0u8; 12];
    file.read_exact(&mut head)
        .map_err(|_| HomogError::Format("binary grid header truncated".into()))?;
    let dims = (
        u32::from_le_bytes(head[0..4].try_into().unwrap()) as usize,
        u32::from_le_bytes(head[4..8].try_into().unwrap()) as usize,
        u32::from_le_bytes(head[8..12].try_into().unwrap()) as usize,
    );
    let count = dims.0 * dims.1 * dims.2;
    let mut buf = Vec::new();
    file.read_to_end(&mut buf)?;
    if buf.len() != 8 * count {
        return Err(HomogError::Format(format!(
            "binary grid payload has {} bytes, expected {}",
            buf.len(),
            8 * count
        )));
    }
    let values = buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((dims, values))
}

/// JSON metadata sidecar for an exported solution.
pub fn write_metadata(path: &Path, sol: &MacroSolution, label: &str) -> Result<()> {
    #[derive(Serialize)]
    struct Meta<'a> {
        label: &'a str,
        nodes: [usize; 3],
        residual: f64,
        iterations: usize,
        energy_lhs: f64,
        energy_rhs: f64,
        energy_defect: f64,
        layout: &'a str,
    }
    let meta = Meta {
        label,
        nodes: [sol.dims.0 + 1, sol.dims.1 + 1, sol.dims.2 + 1],
        residual: sol.residual,
        iterations: sol.iterations,
        energy_lhs: sol.energy_lhs,
        energy_rhs: sol.energy_rhs,
        energy_defect: sol.energy_defect(),
        layout: "u32le dims ×3, f64le nodal values, x fastest",
    };
    std::fs::write(path, serde_json::to_string_pretty(&meta).unwrap())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_coeff() -> CoefficientField {
        CoefficientField::Constant(Mat3::IDENTITY)
    }

    /// Series solution of -Δu = 1 on the unit cube with zero boundary,
    /// evaluated at the center; independent oracle for the Poisson check.
    fn poisson_center_series() -> f64 {
        let mut total = 0.0;
        let pi = std::f64::consts::PI;
        for i in (1..=99).step_by(2) {
            for j in (1..=99).step_by(2) {
                for k in (1..=99).step_by(2) {
                    let (fi, fj, fk) = (i as f64, j as f64, k as f64);
                    let b = 64.0 / (pi.powi(3) * fi * fj * fk);
                    let lam = pi * pi * (fi * fi + fj * fj + fk * fk);
                    let sign = [1.0, -1.0][(((i - 1) / 2) + ((j - 1) / 2) + ((k - 1) / 2)) % 2];
                    total += sign * b / lam;
                }
            }
        }
        total
    }

    #[test]
    fn poisson_center_value() {
        let sol = solve_homogenized(
            &unit_coeff(),
            &SourceSpec::default(),
            (24, 24, 24),
            &MacroSolveOpts::default(),
        )
        .unwrap();
        let exact = poisson_center_series();
        let center = sol.value(12, 12, 12);
        assert!(
            (center - exact).abs() / exact < 0.05,
            "center {center} vs series {exact}"
        );
        assert!(sol.energy_defect() < 1e-8);
        assert!(sol.min_value() >= -1e-10);
    }

    #[test]
    fn diagonal_scaling_consistency() {
        // σ* = c I₃ scales the solution by 1/c exactly.
        let base = solve_homogenized(
            &unit_coeff(),
            &SourceSpec::default(),
            (8, 8, 8),
            &MacroSolveOpts::default(),
        )
        .unwrap();
        let scaled = solve_homogenized(
            &CoefficientField::Constant(Mat3::IDENTITY.scale(4.0)),
            &SourceSpec::default(),
            (8, 8, 8),
            &MacroSolveOpts::default(),
        )
        .unwrap();
        for (a, b) in base.u.iter().zip(&scaled.u) {
            assert!((a / 4.0 - b).abs() < 1e-10);
        }
    }

    #[test]
    fn fine_equals_homogenized_for_contrast_one() {
        let phases = PhasePair::new(1.0, 0.5, 1.0, 0.5).unwrap();
        let h = Vec3::new(0.0, 0.0, 1.0);
        let problem = MacroProblem {
            epsilon: 0.5,
            geometry: MicroGeometry::Frame { t: 0.25 },
            phases,
            h,
            rho: None,
            source: SourceSpec::default(),
        };
        let fine = solve_fine(&problem, (16, 16, 16), &MacroSolveOpts::default()).unwrap();
        let sigma = Mat3::IDENTITY + hall_matrix(h).scale(0.5);
        let hom = solve_homogenized(
            &CoefficientField::Constant(sigma),
            &SourceSpec::default(),
            (16, 16, 16),
            &MacroSolveOpts::default(),
        )
        .unwrap();
        let err = compare(&fine, &hom).unwrap();
        assert!(err.l2_rel < 1e-9, "l2 {}", err.l2_rel);
        assert!(err.h1_rel < 1e-8, "h1 {}", err.h1_rel);
    }

    #[test]
    fn energy_identity_symmetric_case() {
        let phases = PhasePair::new(1.0, 0.3, 50.0, 10.0).unwrap();
        let problem = MacroProblem {
            epsilon: 0.5,
            geometry: MicroGeometry::Frame { t: 0.25 },
            phases,
            h: Vec3::ZERO,
            rho: None,
            source: SourceSpec::default(),
        };
        let fine = solve_fine(&problem, (16, 16, 8), &MacroSolveOpts::default()).unwrap();
        assert!(fine.energy_defect() < 1e-8, "{}", fine.energy_defect());
        assert!(fine.min_value() >= -1e-10);
    }

    #[test]
    fn under_resolved_fine_rejected() {
        let phases = PhasePair::new(1.0, 0.0, 10.0, 0.0).unwrap();
        let problem = MacroProblem {
            epsilon: 0.125,
            geometry: MicroGeometry::Frame { t: 0.1 },
            phases,
            h: Vec3::ZERO,
            rho: None,
            source: SourceSpec::default(),
        };
        // 16 elements / 8 periods = 2 cells per period; strut 0.2 cells.
        let err = solve_fine(&problem, (16, 16, 8), &MacroSolveOpts::default()).unwrap_err();
        assert!(matches!(err, HomogError::UnderResolved(_)));
    }

    #[test]
    fn epsilon_must_divide() {
        let phases = PhasePair::new(1.0, 0.0, 10.0, 0.0).unwrap();
        let problem = MacroProblem {
            epsilon: 0.3,
            geometry: MicroGeometry::Frame { t: 0.25 },
            phases,
            h: Vec3::ZERO,
            rho: None,
            source: SourceSpec::default(),
        };
        assert!(solve_fine(&problem, (16, 16, 8), &MacroSolveOpts::default()).is_err());
    }

    #[test]
    fn compare_identical_is_zero() {
        let sol = solve_homogenized(
            &unit_coeff(),
            &SourceSpec::default(),
            (8, 8, 8),
            &MacroSolveOpts::default(),
        )
        .unwrap();
        let err = compare(&sol, &sol).unwrap();
        assert_eq!(err.l2_rel, 0.0);
        assert_eq!(err.h1_rel, 0.0);
    }

    #[test]
    fn restriction_and_binary_round_trip() {
        let fine = solve_homogenized(
            &unit_coeff(),
            &SourceSpec::default(),
            (16, 16, 16),
            &MacroSolveOpts::default(),
        )
        .unwrap();
        let coarse = solve_homogenized(
            &unit_coeff(),
            &SourceSpec::default(),
            (8, 8, 8),
            &MacroSolveOpts::default(),
        )
        .unwrap();
        let err = compare(&fine, &coarse).unwrap();
        // Pure discretization difference, small but nonzero.
        assert!(err.l2_rel > 0.0 && err.l2_rel < 0.05, "{}", err.l2_rel);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.grid");
        write_binary_grid(&path, &coarse).unwrap();
        let (dims, values) = read_binary_grid(&path).unwrap();
        assert_eq!(dims, (9, 9, 9));
        assert_eq!(values, coarse.u);
        write_metadata(&dir.path().join("u.json"), &coarse, "test").unwrap();
    }

    #[test]
    fn fine_solve_matches_dense_direct_solve() {
        // Regression oracle: LU-factorize the assembled 16³ interior system
        // and compare the Krylov path against it.
        let phases = PhasePair::new(1.0, 0.4, 20.0, 8.0).unwrap();
        let h = Vec3::new(0.0, 0.0, 1.0);
        let problem = MacroProblem {
            epsilon: 0.5,
            geometry: MicroGeometry::Frame { t: 0.25 },
            phases,
            h,
            rho: None,
            source: SourceSpec::default(),
        };
        let dims = (16, 16, 16);
        let fine = solve_fine(&problem, dims, &MacroSolveOpts::default()).unwrap();

        // Rebuild the same interior system and solve it densely.
        let (nx, ny) = (dims.0, dims.1);
        let (hx, hy) = (1.0 / nx as f64, 1.0 / ny as f64);
        let eps = problem.epsilon;
        let sigma1 = Mat3::IDENTITY.scale(1.0) + hall_matrix(h).scale(0.4);
        let sigma2 = Mat3::IDENTITY.scale(20.0) + hall_matrix(h).scale(8.0);
        let coeff = |i: usize, j: usize| -> Mat3 {
            let x = (i as f64 + 0.5) * hx;
            let y = (j as f64 + 0.5) * hy;
            let y1 = x / eps - (x / eps).floor() - 0.5;
            let y2 = y / eps - (y / eps).floor() - 0.5;
            if y1.abs().max(y2.abs()) >= 0.25 {
                sigma2
            } else {
                sigma1
            }
        };
        let vol = hx * hy * (1.0 / dims.2 as f64);
        let inv_h = [1.0 / hx, 1.0 / hy, dims.2 as f64];
        let gref = reference_gradients();
        let element = |i: usize, j: usize| -> [[f64; 8]; 8] {
            let sigma = coeff(i, j);
            let mut m = [[0.0; 8]; 8];
            for a in 0..3 {
                for b in 0..3 {
                    let s = sigma.0[a][b];
                    if s == 0.0 {
                        continue;
                    }
                    let scale = s * vol * inv_h[a] * inv_h[b];
                    for li in 0..8 {
                        for lj in 0..8 {
                            m[li][lj] += scale * gref[a][b][li][lj];
                        }
                    }
                }
            }
            m
        };
        let (matrix, rhs) = assemble_interior(dims, element, Some(&SourceSpec::default()));
        let mut dense_mat = matrix.to_dense();
        let mut dense_rhs = rhs.clone();
        let x = crate::fem::dense::solve_in_place(&mut dense_mat, &mut dense_rhs).unwrap();

        let grid = Grid3 {
            nx: dims.0,
            ny: dims.1,
            nz: dims.2,
        };
        let (map, _) = grid.interior_index();
        let mut worst = 0.0_f64;
        for (node, &eq) in map.iter().enumerate() {
            if eq >= 0 {
                worst = worst.max((fine.u[node] - x[eq as usize]).abs());
            }
        }
        let scale = x.iter().cloned().fold(0.0_f64, |m, v| m.max(v.abs()));
        assert!(worst <= 1e-8 * scale.max(1e-3), "Krylov vs dense: {worst}");
    }

    #[test]
    fn rho_modulated_homogenized_run() {
        // x'-dependent effective coefficient from the circular closed form
        // with a varying density; the run completes and balances energy.
        use crate::formulas::{oracle_circular, LimitParams};
        use crate::geometry::RhoField;
        let rho = RhoField::cosine(1.0, 0.4, -0.3).unwrap();
        let p = LimitParams::new(1.0, 0.5, 2.0, 1.0, Vec3::new(1.0, 0.0, 1.0)).unwrap();
        let field = CoefficientField::Columnar(Arc::new(move |x: Vec2| {
            *oracle_circular(&p, rho.eval(x)).unwrap().as_mat3()
        }));
        let sol = solve_homogenized(
            &field,
            &SourceSpec::default(),
            (16, 16, 8),
            &MacroSolveOpts::default(),
        )
        .unwrap();
        assert!(sol.energy_defect() < 1e-8, "{}", sol.energy_defect());
    }

    #[test]
    fn l2_error_decreases_as_epsilon_halves() {
        // Moderate contrast, ε ∈ {1/2, 1/4} on a 24³ grid.
        let phases = PhasePair::new(1.0, 0.0, 10.0, 0.0).unwrap();
        let t = 1.0 / 3.0;
        let field =
            crate::geometry::rasterize(&crate::geometry::CellGeometry::frame(t).unwrap(), 24)
                .unwrap();
        let cell = crate::cell::homogenize(
            &field,
            &phases,
            Vec3::ZERO,
            &crate::cell::SolveOpts::default(),
        )
        .unwrap();
        let dims = (24, 24, 24);
        let mut errors = Vec::new();
        for eps in [0.5, 0.25] {
            let problem = MacroProblem {
                epsilon: eps,
                geometry: MicroGeometry::Frame { t },
                phases,
                h: Vec3::ZERO,
                rho: None,
                source: SourceSpec::default(),
            };
            let fine = solve_fine(&problem, dims, &MacroSolveOpts::default()).unwrap();
            let hom = solve_homogenized(
                &CoefficientField::Constant(*cell.sigma3d.as_mat3()),
                &SourceSpec::default(),
                dims,
                &MacroSolveOpts::default(),
            )
            .unwrap();
            errors.push(compare(&fine, &hom).unwrap().l2_rel);
        }
        assert!(
            errors[1] < errors[0],
            "L² error did not decrease: {errors:?}"
        );
    }

    #[test]
    fn separable_poly_source() {
        let src = SourceSpec::SeparablePoly {
            px: vec![0.0, 1.0],  // x
            py: vec![1.0, -1.0], // 1 - y
            pz: vec![1.0],       // 1
        };
        assert_eq!(src.eval(0.5, 0.25, 0.9), 0.5 * 0.75);
        let sol =
            solve_homogenized(&unit_coeff(), &src, (8, 8, 8), &MacroSolveOpts::default()).unwrap();
        assert!(sol.energy_defect() < 1e-8);
    }
}
