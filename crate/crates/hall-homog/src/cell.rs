//! Periodic transversal cell problems on the rasterized unit cell.
//!
//! Bilinear quadrilateral elements on the uniform N×N grid with the
//! coefficient constant per element (phase of the element center) and exact
//! element integrals. Periodicity is realized by wrapping node indices, so the
//! system has N² unknowns and the constant mode is removed by a rank-one
//! projection rather than by pinning a node.
//!
//! The columnar structure reduces all of the 3×3 homogenization to 2D work:
//! directions `e₁, e₂` are plain transversal cell problems, and the `e₃`
//! column solves the reduced source problem `div(Σ̃ ∇w) = div(b J h̃)` whose
//! solution is the periodic part of `W^{e₃} = y₃ + w(y₁,y₂)`.

use serde::{Deserialize, Serialize};

use crate::fem::krylov::{project_mean_zero, InnerCgPrecond};
use crate::fem::{fgmres, pcg, Csr, CsrBuilder, JacobiPrecond, KrylovOpts, SolveStats};
use crate::geometry::PhaseField;
use crate::par::{map_collect, Parallelism};
use crate::tensor::{
    interface_match, pi_deconjugate, EffectiveTensor, Mat2, Mat3, TransversalBlock, Vec2, Vec3,
};
use crate::{HomogError, Result};

/// Exact bilinear element stiffness on a square, isotropic unit coefficient.
/// Local node order SW, SE, NE, NW; independent of the element size in 2D.
const K_ISO: [[f64; 4]; 4] = [
    [4.0 / 6.0, -1.0 / 6.0, -2.0 / 6.0, -1.0 / 6.0],
    [-1.0 / 6.0, 4.0 / 6.0, -1.0 / 6.0, -2.0 / 6.0],
    [-2.0 / 6.0, -1.0 / 6.0, 4.0 / 6.0, -1.0 / 6.0],
    [-1.0 / 6.0, -2.0 / 6.0, -1.0 / 6.0, 4.0 / 6.0],
];

/// Exact element matrix of the rotation part: `K_J[i][j] = ∫ (J∇φ_j)·∇φ_i`.
const K_J: [[f64; 4]; 4] = [
    [0.0, -0.5, 0.0, 0.5],
    [0.5, 0.0, -0.5, 0.0],
    [0.0, 0.5, 0.0, -0.5],
    [-0.5, 0.0, 0.5, 0.0],
];

/// Consistent bilinear mass matrix on a unit square (scale by h²).
const M_UNIT: [[f64; 4]; 4] = [
    [4.0 / 36.0, 2.0 / 36.0, 1.0 / 36.0, 2.0 / 36.0],
    [2.0 / 36.0, 4.0 / 36.0, 2.0 / 36.0, 1.0 / 36.0],
    [1.0 / 36.0, 2.0 / 36.0, 4.0 / 36.0, 2.0 / 36.0],
    [2.0 / 36.0, 1.0 / 36.0, 2.0 / 36.0, 4.0 / 36.0],
];

/// Signs of `∫_e ∇φᵢ = (h/2)(G1[i], G2[i])`.
const G1: [f64; 4] = [-1.0, 1.0, 1.0, -1.0];
const G2: [f64; 4] = [-1.0, -1.0, 1.0, 1.0];

// ---------------------------------------------------------------------------
// Inputs
// ---------------------------------------------------------------------------

/// Finite-n two-phase parameters `(α₁, β₁)` outside, `(α₂,ₙ, β₂,ₙ)` inside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePair {
    pub alpha1: f64,
    pub beta1: f64,
    pub alpha2n: f64,
    pub beta2n: f64,
}

impl PhasePair {
    pub fn new(alpha1: f64, beta1: f64, alpha2n: f64, beta2n: f64) -> Result<Self> {
        if !(alpha1 > 0.0) || !(alpha2n > 0.0) {
            return Err(HomogError::InvalidParam(format!(
                "phase alphas must be positive, got {alpha1} and {alpha2n}"
            )));
        }
        Ok(PhasePair {
            alpha1,
            beta1,
            alpha2n,
            beta2n,
        })
    }

    pub fn block1(&self, h3: f64) -> TransversalBlock {
        TransversalBlock::new(self.alpha1, self.beta1, h3)
    }

    pub fn block2(&self, h3: f64) -> TransversalBlock {
        TransversalBlock::new(self.alpha2n, self.beta2n, h3)
    }

    fn coeff(&self, inclusion: bool) -> (f64, f64) {
        if inclusion {
            (self.alpha2n, self.beta2n)
        } else {
            (self.alpha1, self.beta1)
        }
    }
}

/// Solver settings for the cell problems.
#[derive(Debug, Clone, Copy)]
pub struct SolveOpts {
    /// Relative residual tolerance of the Krylov iteration.
    pub rel_tol: f64,
    /// Iteration budget per solve is `max_iter_per_n * N`.
    pub max_iter_per_n: usize,
    /// GMRES restart length.
    pub restart: usize,
    pub parallelism: Parallelism,
}

impl Default for SolveOpts {
    fn default() -> Self {
        SolveOpts {
            rel_tol: 1e-10,
            max_iter_per_n: 20,
            restart: 50,
            parallelism: Parallelism::default(),
        }
    }
}

impl SolveOpts {
    fn krylov(&self, n: usize) -> KrylovOpts {
        KrylovOpts {
            rel_tol: self.rel_tol,
            max_iter: self.max_iter_per_n * n,
            restart: self.restart,
        }
    }
}

// ---------------------------------------------------------------------------
// Outputs
// ---------------------------------------------------------------------------

/// Which cell problem a solution belongs to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CellDirection {
    /// Transversal corrector for mean gradient `λ̃`.
    Transversal(Vec2),
    /// Reduced `e₃` source problem.
    E3,
}

/// Corrector field on the periodic grid plus its averaged flux.
#[derive(Debug, Clone)]
pub struct CellSolution {
    /// Periodic nodal corrector, mean zero over the cell.
    pub w: Vec<f64>,
    pub resolution: usize,
    pub direction: CellDirection,
    /// Averaged current: transversal components and the e₃ component.
    pub flux_avg: Vec3,
    pub residual: f64,
    pub iterations: usize,
    pub used_fallback: bool,
}

impl CellSolution {
    /// Nodal mean of the corrector (should be ~0 at machine precision).
    pub fn mean(&self) -> f64 {
        self.w.iter().sum::<f64>() / self.w.len() as f64
    }
}

/// Route used to assemble a 3×3 homogenized tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Direct,
    Pi,
}

/// Transversal effective block `(σ̃ₙ)*` and the full 3×3 `(σₙ)*`.
#[derive(Debug, Clone)]
pub struct HomogenizedPair {
    pub sigma2d: Mat2,
    pub sigma3d: EffectiveTensor,
    pub route: Route,
    pub iterations: usize,
    pub max_residual: f64,
}

// ---------------------------------------------------------------------------
// Assembly
// ---------------------------------------------------------------------------

/// Assembled periodic operator together with the per-element coefficients.
struct CellSystem {
    n: usize,
    matrix: Csr,
    coeff_a: Vec<f64>,
    coeff_b: Vec<f64>,
}

#[inline]
fn node(n: usize, i: usize, j: usize) -> usize {
    (j % n) * n + (i % n)
}

fn element_nodes(n: usize, i: usize, j: usize) -> [usize; 4] {
    [
        node(n, i, j),
        node(n, i + 1, j),
        node(n, i + 1, j + 1),
        node(n, i, j + 1),
    ]
}

fn assemble_cell(field: &PhaseField, phases: &PhasePair, h3: f64) -> CellSystem {
    let n = field.resolution();
    let mut coeff_a = vec![0.0; n * n];
    let mut coeff_b = vec![0.0; n * n];
    let mut builder = CsrBuilder::new(n * n);
    for j in 0..n {
        for i in 0..n {
            let (a, b) = phases.coeff(field.is_inclusion(i, j));
            coeff_a[j * n + i] = a;
            coeff_b[j * n + i] = b;
            let gamma = b * h3;
            let nodes = element_nodes(n, i, j);
            for (li, &gi) in nodes.iter().enumerate() {
                for (lj, &gj) in nodes.iter().enumerate() {
                    builder.add(gi, gj, a * K_ISO[li][lj] + gamma * K_J[li][lj]);
                }
            }
        }
    }
    CellSystem {
        n,
        matrix: builder.finish(),
        coeff_a,
        coeff_b,
    }
}

/// Scalar (symmetric-part) stiffness used by the fallback preconditioner and
/// the PW estimator.
fn assemble_scalar_stiffness(n: usize, weight: &[f64]) -> Csr {
    let mut builder = CsrBuilder::new(n * n);
    for j in 0..n {
        for i in 0..n {
            let a = weight[j * n + i];
            let nodes = element_nodes(n, i, j);
            for (li, &gi) in nodes.iter().enumerate() {
                for (lj, &gj) in nodes.iter().enumerate() {
                    builder.add(gi, gj, a * K_ISO[li][lj]);
                }
            }
        }
    }
    builder.finish()
}

fn assemble_weighted_mass(n: usize, weight: &[f64]) -> Csr {
    let h2 = 1.0 / (n * n) as f64;
    let mut builder = CsrBuilder::new(n * n);
    for j in 0..n {
        for i in 0..n {
            let a = weight[j * n + i] * h2;
            let nodes = element_nodes(n, i, j);
            for (li, &gi) in nodes.iter().enumerate() {
                for (lj, &gj) in nodes.iter().enumerate() {
                    builder.add(gi, gj, a * M_UNIT[li][lj]);
                }
            }
        }
    }
    builder.finish()
}

// ---------------------------------------------------------------------------
// Linear solve with high-contrast fallback
// ---------------------------------------------------------------------------

fn solve_periodic(
    system: &CellSystem,
    rhs: &[f64],
    opts: &SolveOpts,
) -> Result<(Vec<f64>, SolveStats, bool)> {
    let n = system.n;
    let proj: &(dyn Fn(&mut [f64]) + Sync) = &project_mean_zero;
    let rhs_norm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
    if rhs_norm == 0.0 {
        return Ok((vec![0.0; rhs.len()], SolveStats::default(), false));
    }
    let kopts = opts.krylov(n);
    let jacobi = JacobiPrecond::from_matrix(&system.matrix);
    match fgmres(&system.matrix, rhs, None, &kopts, &jacobi, Some(proj)) {
        Ok((x, stats)) => Ok((x, stats, false)),
        Err(HomogError::NonConvergence { .. }) => {
            // One retry preconditioned by an inner CG on the scalar part.
            let precond = InnerCgPrecond::new(
                assemble_scalar_stiffness(n, &system.coeff_a),
                KrylovOpts {
                    rel_tol: 1e-2,
                    max_iter: 4 * n,
                    restart: 0,
                },
                true,
            );
            let (x, stats) = fgmres(&system.matrix, rhs, None, &kopts, &precond, Some(proj))?;
            Ok((x, stats, true))
        }
        Err(e) => Err(e),
    }
}

// ---------------------------------------------------------------------------
// Flux averages
// ---------------------------------------------------------------------------

/// Gradient of a bilinear nodal field at the element center; exact for the
/// element-mean gradient.
#[inline]
fn center_gradient(w: &[f64], n: usize, nodes: &[usize; 4]) -> (f64, f64) {
    let inv2h = 0.5 * n as f64;
    let (w0, w1, w2, w3) = (w[nodes[0]], w[nodes[1]], w[nodes[2]], w[nodes[3]]);
    ((-w0 + w1 + w2 - w3) * inv2h, (-w0 - w1 + w2 + w3) * inv2h)
}

fn transversal_flux(system: &CellSystem, h: Vec3, w: &[f64], lambda: Vec2) -> Vec3 {
    let n = system.n;
    let h3 = h.0[2];
    let jh = h.j_transversal();
    let area = 1.0 / (n * n) as f64;
    let (mut f1, mut f2, mut f3) = (0.0, 0.0, 0.0);
    for j in 0..n {
        for i in 0..n {
            let e = j * n + i;
            let nodes = element_nodes(n, i, j);
            let (g1, g2) = center_gradient(w, n, &nodes);
            let (t1, t2) = (g1 + lambda.0[0], g2 + lambda.0[1]);
            let a = system.coeff_a[e];
            let b = system.coeff_b[e];
            let gamma = b * h3;
            f1 += a * t1 - gamma * t2;
            f2 += gamma * t1 + a * t2;
            f3 += b * (t1 * jh.0[0] + t2 * jh.0[1]);
        }
    }
    Vec3::new(f1 * area, f2 * area, f3 * area)
}

fn e3_flux(system: &CellSystem, h: Vec3, w: &[f64]) -> Vec3 {
    let n = system.n;
    let h3 = h.0[2];
    let jh = h.j_transversal();
    let area = 1.0 / (n * n) as f64;
    let (mut f1, mut f2, mut f3) = (0.0, 0.0, 0.0);
    let (mut mean_a, mut mean_b) = (0.0, 0.0);
    for j in 0..n {
        for i in 0..n {
            let e = j * n + i;
            let nodes = element_nodes(n, i, j);
            let (g1, g2) = center_gradient(w, n, &nodes);
            let a = system.coeff_a[e];
            let b = system.coeff_b[e];
            let gamma = b * h3;
            f1 += a * g1 - gamma * g2;
            f2 += gamma * g1 + a * g2;
            f3 += b * (g1 * jh.0[0] + g2 * jh.0[1]);
            mean_a += a;
            mean_b += b;
        }
    }
    mean_a *= area;
    mean_b *= area;
    Vec3::new(
        f1 * area - mean_b * jh.0[0],
        f2 * area - mean_b * jh.0[1],
        mean_a + f3 * area,
    )
}

// ---------------------------------------------------------------------------
// Cell problem solvers
// ---------------------------------------------------------------------------

/// Solve the periodic transversal cell problem for mean gradient `λ̃`:
/// `⟨Σ̃ (∇w + λ̃) · ∇φ⟩ = 0` for all periodic `φ`, `⟨w⟩ = 0`, with
/// `Σ̃ = σ̃₁` outside and `σ̃₂,ₙ` inside the inclusion. The first two flux
/// components hold `⟨Σ̃(∇w + λ̃)⟩`; block-level calls carry no transversal
/// field data, so the third component is 0 here (the full-tensor paths in
/// [`homogenize`] supply `⟨b(∇w + λ̃)⟩·Jh̃` themselves).
pub fn solve_cell(
    field: &PhaseField,
    sig1: &TransversalBlock,
    sig2n: &TransversalBlock,
    lambda: Vec2,
    opts: &SolveOpts,
) -> Result<CellSolution> {
    if !(sig1.alpha > 0.0) || !(sig2n.alpha > 0.0) {
        return Err(HomogError::InvalidParam(
            "transversal blocks must be coercive (alpha > 0)".into(),
        ));
    }
    // Recover (β h₃)-free parameters: solve_cell only needs the blocks, so
    // treat skew as b·h₃ with h₃ = 1 internally.
    let phases = PhasePair {
        alpha1: sig1.alpha,
        beta1: sig1.skew,
        alpha2n: sig2n.alpha,
        beta2n: sig2n.skew,
    };
    let h = Vec3::new(0.0, 0.0, 1.0);
    let system = assemble_cell(field, &phases, 1.0);
    let solution = solve_transversal_system(&system, h, lambda, opts)?;
    Ok(solution)
}

fn solve_transversal_system(
    system: &CellSystem,
    h: Vec3,
    lambda: Vec2,
    opts: &SolveOpts,
) -> Result<CellSolution> {
    let n = system.n;
    let h3 = h.0[2];
    let half_h = 0.5 / n as f64;
    let mut rhs = vec![0.0; n * n];
    for j in 0..n {
        for i in 0..n {
            let e = j * n + i;
            let a = system.coeff_a[e];
            let gamma = system.coeff_b[e] * h3;
            // Σ̃_e λ̃
            let fx = a * lambda.0[0] - gamma * lambda.0[1];
            let fy = gamma * lambda.0[0] + a * lambda.0[1];
            let nodes = element_nodes(n, i, j);
            for (l, &g) in nodes.iter().enumerate() {
                rhs[g] -= half_h * (fx * G1[l] + fy * G2[l]);
            }
        }
    }
    project_mean_zero(&mut rhs);
    let (mut w, stats, used_fallback) = solve_periodic(system, &rhs, opts)?;
    project_mean_zero(&mut w);
    let flux_avg = transversal_flux(system, h, &w, lambda);
    Ok(CellSolution {
        w,
        resolution: n,
        direction: CellDirection::Transversal(lambda),
        flux_avg,
        residual: stats.residual,
        iterations: stats.iterations,
        used_fallback,
    })
}

/// Solve the reduced `e₃` column problem `div(Σ̃ ∇w) = div(b J h̃)` (periodic,
/// mean zero) and return the averaged third-column current
/// `(⟨Σ̃ ∇w⟩ - ⟨b⟩ J h̃, ⟨a⟩ + ⟨b ∇w⟩·J h̃)`.
pub fn solve_cell_e3(
    field: &PhaseField,
    phases: &PhasePair,
    h: Vec3,
    opts: &SolveOpts,
) -> Result<CellSolution> {
    let system = assemble_cell(field, phases, h.0[2]);
    solve_e3_system(&system, h, opts)
}

fn solve_e3_system(system: &CellSystem, h: Vec3, opts: &SolveOpts) -> Result<CellSolution> {
    let n = system.n;
    let jh = h.j_transversal();
    let half_h = 0.5 / n as f64;
    let mut rhs = vec![0.0; n * n];
    for j in 0..n {
        for i in 0..n {
            let e = j * n + i;
            let b = system.coeff_b[e];
            let nodes = element_nodes(n, i, j);
            for (l, &g) in nodes.iter().enumerate() {
                rhs[g] += half_h * b * (jh.0[0] * G1[l] + jh.0[1] * G2[l]);
            }
        }
    }
    project_mean_zero(&mut rhs);
    let (mut w, stats, used_fallback) = solve_periodic(system, &rhs, opts)?;
    project_mean_zero(&mut w);
    let flux_avg = e3_flux(system, h, &w);
    Ok(CellSolution {
        w,
        resolution: n,
        direction: CellDirection::E3,
        flux_avg,
        residual: stats.residual,
        iterations: stats.iterations,
        used_fallback,
    })
}

// ---------------------------------------------------------------------------
// Homogenization routes
// ---------------------------------------------------------------------------

fn coercivity_floor(phases: &PhasePair) -> f64 {
    phases.alpha1.min(phases.alpha2n)
}

fn check_coercive(sigma2d: &Mat2, floor: f64) -> Result<()> {
    let tol = 1e-8 * sigma2d.max_abs_entry().max(1.0);
    let eigs = sigma2d.sym_eigenvalues();
    if eigs[0] < floor - tol {
        return Err(HomogError::NonConvergence {
            iterations: 0,
            residual: floor - eigs[0],
        });
    }
    Ok(())
}

/// Direct route: columns 1, 2 from transversal solves with `λ = e₁, e₂`
/// (transversal part `⟨Σ̃∇W^λ⟩`, third entry `⟨b ∇W^λ⟩·Jh̃`), column 3 from
/// the reduced source problem.
pub fn homogenize(
    field: &PhaseField,
    phases: &PhasePair,
    h: Vec3,
    opts: &SolveOpts,
) -> Result<HomogenizedPair> {
    let system = assemble_cell(field, phases, h.0[2]);
    let tasks: Vec<usize> = vec![0, 1, 2];
    let sols = map_collect(opts.parallelism, tasks, |k| match k {
        0 => solve_transversal_system(&system, h, Vec2::new(1.0, 0.0), opts),
        1 => solve_transversal_system(&system, h, Vec2::new(0.0, 1.0), opts),
        _ => solve_e3_system(&system, h, opts),
    });
    let mut cols = Vec::with_capacity(3);
    let mut iterations = 0;
    let mut max_residual = 0.0_f64;
    for s in sols {
        let s = s?;
        iterations += s.iterations;
        max_residual = max_residual.max(s.residual);
        cols.push(s.flux_avg);
    }
    let m = Mat3([
        [cols[0].0[0], cols[1].0[0], cols[2].0[0]],
        [cols[0].0[1], cols[1].0[1], cols[2].0[1]],
        [cols[0].0[2], cols[1].0[2], cols[2].0[2]],
    ]);
    let tensor = EffectiveTensor::from_mat3(m);
    let sigma2d = tensor.transversal();
    check_coercive(&sigma2d, coercivity_floor(phases))?;
    Ok(HomogenizedPair {
        sigma2d,
        sigma3d: tensor,
        route: Route::Direct,
        iterations,
        max_residual,
    })
}

/// Π-route: homogenize the conjugated medium, in which the off-blocks are
/// phase-constant and the third column needs no solve, then conjugate back.
pub fn homogenize_via_pi(
    field: &PhaseField,
    phases: &PhasePair,
    h: Vec3,
    opts: &SolveOpts,
) -> Result<HomogenizedPair> {
    let system = assemble_cell(field, phases, h.0[2]);
    let tasks: Vec<usize> = vec![0, 1];
    let sols = map_collect(opts.parallelism, tasks, |k| {
        let lambda = if k == 0 {
            Vec2::new(1.0, 0.0)
        } else {
            Vec2::new(0.0, 1.0)
        };
        solve_transversal_system(&system, h, lambda, opts)
    });
    let mut fluxes = Vec::with_capacity(2);
    let mut iterations = 0;
    let mut max_residual = 0.0_f64;
    for s in sols {
        let s = s?;
        iterations += s.iterations;
        max_residual = max_residual.max(s.residual);
        fluxes.push(s.flux_avg);
    }
    let sigma2d = Mat2([
        [fluxes[0].0[0], fluxes[1].0[0]],
        [fluxes[0].0[1], fluxes[1].0[1]],
    ]);
    let tensor = assemble_pi_tensor(field, phases, h, &sigma2d)?;
    check_coercive(&sigma2d, coercivity_floor(phases))?;
    Ok(HomogenizedPair {
        sigma2d,
        sigma3d: tensor,
        route: Route::Pi,
        iterations,
        max_residual,
    })
}

/// Assemble `(σₙ)* = Πₙ⁻¹ (σ'ₙ)* Π̂ₙ⁻¹` from the transversal block
/// `(σ̃ₙ)*` and the phase-constant off-blocks of the transformed medium.
fn assemble_pi_tensor(
    field: &PhaseField,
    phases: &PhasePair,
    h: Vec3,
    sigma_t_star: &Mat2,
) -> Result<EffectiveTensor> {
    let h3 = h.0[2];
    let jh = h.j_transversal();
    let sig1 = phases.block1(h3);
    let sig2 = phases.block2(h3);
    let pair = interface_match(&sig1, &sig2, phases.beta1, phases.beta2n, h)?;

    // Off-blocks of the transformed medium, constant across phases by the
    // choice of (p₀, q₀); evaluate in phase 1.
    let p_prime = sig1.mul_vec(pair.p0) - jh.scale(phases.beta1);
    let q_prime = sig1.transpose().mul_vec(pair.q0) + jh.scale(phases.beta1);
    debug_assert!({
        let p2 = sig2.mul_vec(pair.p0) - jh.scale(phases.beta2n);
        (p2 - p_prime).norm() <= 1e-9 * (1.0 + p_prime.norm())
    });

    // a'ₙ per phase and its raster average.
    let a_prime = |alpha: f64, beta: f64, sig: &TransversalBlock| {
        alpha + sig.mul_vec(pair.p0).dot(pair.q0) + beta * (pair.p0 - pair.q0).dot(jh)
    };
    let a1 = a_prime(phases.alpha1, phases.beta1, &sig1);
    let a2 = a_prime(phases.alpha2n, phases.beta2n, &sig2);
    let theta = field.raster_fraction();
    let a_avg = (1.0 - theta) * a1 + theta * a2;

    let prime = EffectiveTensor::from_blocks(*sigma_t_star, p_prime, q_prime, a_avg);
    Ok(EffectiveTensor::from_mat3(pi_deconjugate(
        prime.as_mat3(),
        &pair,
    )))
}

/// Run both routes sharing the transversal solves: the direct tensor needs
/// one extra source solve, the Π tensor reuses `(σ̃ₙ)*`.
pub fn homogenize_both(
    field: &PhaseField,
    phases: &PhasePair,
    h: Vec3,
    opts: &SolveOpts,
) -> Result<(HomogenizedPair, HomogenizedPair)> {
    let system = assemble_cell(field, phases, h.0[2]);
    let tasks: Vec<usize> = vec![0, 1, 2];
    let sols = map_collect(opts.parallelism, tasks, |k| match k {
        0 => solve_transversal_system(&system, h, Vec2::new(1.0, 0.0), opts),
        1 => solve_transversal_system(&system, h, Vec2::new(0.0, 1.0), opts),
        _ => solve_e3_system(&system, h, opts),
    });
    let mut all = Vec::with_capacity(3);
    let mut iterations = 0;
    let mut max_residual = 0.0_f64;
    for s in sols {
        let s = s?;
        iterations += s.iterations;
        max_residual = max_residual.max(s.residual);
        all.push(s.flux_avg);
    }
    let m = Mat3([
        [all[0].0[0], all[1].0[0], all[2].0[0]],
        [all[0].0[1], all[1].0[1], all[2].0[1]],
        [all[0].0[2], all[1].0[2], all[2].0[2]],
    ]);
    let direct_tensor = EffectiveTensor::from_mat3(m);
    let sigma2d = direct_tensor.transversal();
    check_coercive(&sigma2d, coercivity_floor(phases))?;
    let pi_tensor = assemble_pi_tensor(field, phases, h, &sigma2d)?;
    Ok((
        HomogenizedPair {
            sigma2d,
            sigma3d: direct_tensor,
            route: Route::Direct,
            iterations,
            max_residual,
        },
        HomogenizedPair {
            sigma2d,
            sigma3d: pi_tensor,
            route: Route::Pi,
            iterations,
            max_residual,
        },
    ))
}

// ---------------------------------------------------------------------------
// Weighted Poincaré-Wirtinger constant
// ---------------------------------------------------------------------------

/// Estimate of the largest weighted Rayleigh quotient
/// `c = max { ∫a V² / ∫a|∇V|² : V periodic, ⟨V⟩ = 0 }`.
#[derive(Debug, Clone)]
pub struct PwEstimate {
    pub c_value: f64,
    /// |nodal mean| of the converged eigenvector (should be ~0).
    pub eigvec_mean: f64,
    /// Euclidean norm of the eigenvector after normalization (should be 1).
    pub eigvec_norm: f64,
    pub iterations: usize,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Power iteration for the dominant eigenpair of `K_a⁻¹ M_a` on the
/// mean-zero subspace: at a constrained maximizer, `M_a V - γ m₁ = (1/c) K_a V`
/// with `γ` fixing `1ᵀ` of the right-hand side, so each step solves the
/// a-weighted stiffness against the mean-corrected a-weighted mass image.
pub fn estimate_pw_constant(
    field: &PhaseField,
    alpha1: f64,
    alpha2n: f64,
    opts: &SolveOpts,
) -> Result<PwEstimate> {
    if !(alpha1 > 0.0) || !(alpha2n > 0.0) {
        return Err(HomogError::InvalidParam(
            "PW weights must be positive".into(),
        ));
    }
    let n = field.resolution();
    let count = n * n;
    let mut weight = vec![0.0; count];
    for j in 0..n {
        for i in 0..n {
            weight[j * n + i] = if field.is_inclusion(i, j) {
                alpha2n
            } else {
                alpha1
            };
        }
    }
    let stiffness = assemble_scalar_stiffness(n, &weight);
    let mass = assemble_weighted_mass(n, &weight);
    let inv_diag: Vec<f64> = stiffness
        .diag()
        .into_iter()
        .map(|d| if d != 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let proj: &(dyn Fn(&mut [f64]) + Sync) = &project_mean_zero;
    let inner = KrylovOpts {
        rel_tol: opts.rel_tol,
        max_iter: 2 * opts.max_iter_per_n * n.max(50),
        restart: 0,
    };

    // Deterministic pseudo-random start vector.
    let mut state = 0x5eed_cafe_f00d_u64;
    let mut v: Vec<f64> = (0..count)
        .map(|_| (splitmix64(&mut state) >> 11) as f64 / (1u64 << 53) as f64 - 0.5)
        .collect();
    project_mean_zero(&mut v);
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in v.iter_mut() {
        *x /= norm;
    }

    let max_iter = 500;
    let tol = 1e-8;
    let mut c_prev = 0.0;
    let mut warm: Option<Vec<f64>> = None;
    let mut mv = vec![0.0; count];
    let mut kv = vec![0.0; count];
    for it in 1..=max_iter {
        mass.matvec(&v, &mut mv);
        let mean = mv.iter().sum::<f64>() / count as f64;
        let rhs: Vec<f64> = mv.iter().map(|x| x - mean).collect();
        let (mut x, _) = pcg(
            &stiffness,
            &rhs,
            warm.as_deref(),
            &inner,
            &inv_diag,
            Some(proj),
        )?;
        project_mean_zero(&mut x);
        let xnorm = x.iter().map(|y| y * y).sum::<f64>().sqrt();
        if xnorm == 0.0 {
            return Err(HomogError::EigenNonConvergence {
                iterations: it,
                change: f64::INFINITY,
            });
        }
        warm = Some(x.clone());
        for y in x.iter_mut() {
            *y /= xnorm;
        }
        v = x;
        // Rayleigh quotient at the current iterate.
        mass.matvec(&v, &mut mv);
        stiffness.matvec(&v, &mut kv);
        let num: f64 = v.iter().zip(&mv).map(|(a, b)| a * b).sum();
        let den: f64 = v.iter().zip(&kv).map(|(a, b)| a * b).sum();
        let c = num / den;
        if (c - c_prev).abs() <= tol * c.abs() && it > 2 {
            let mean = v.iter().sum::<f64>() / count as f64;
            return Ok(PwEstimate {
                c_value: c,
                eigvec_mean: mean.abs(),
                eigvec_norm: v.iter().map(|y| y * y).sum::<f64>().sqrt(),
                iterations: it,
            });
        }
        c_prev = c;
    }
    Err(HomogError::EigenNonConvergence {
        iterations: max_iter,
        change: c_prev,
    })
}

// ---------------------------------------------------------------------------
// Energy of the assembled operator (used by invariant checks)
// ---------------------------------------------------------------------------

/// Discrete energy `wᵀ K w` of a nodal field under the cell operator; the
/// skew part drops out, so this equals the a-weighted gradient energy.
pub fn cell_energy(field: &PhaseField, phases: &PhasePair, h3: f64, w: &[f64]) -> f64 {
    let system = assemble_cell(field, phases, h3);
    let mut kw = vec![0.0; w.len()];
    system.matrix.matvec(w, &mut kw);
    w.iter().zip(&kw).map(|(a, b)| a * b).sum()
}
