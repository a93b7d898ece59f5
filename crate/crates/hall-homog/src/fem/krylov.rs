//! Iterative solvers: flexible restarted GMRES for the nonsymmetric Hall
//! systems and preconditioned CG for symmetric ones.
//!
//! Both accept an optional projector that is applied to search directions and
//! iterates; the periodic cell solver uses it to remove the constant mode so
//! the operator stays definite on the working subspace.

use crate::fem::Csr;
use crate::{HomogError, Result};

/// Convergence settings. `max_iter` counts total Krylov steps across restarts.
#[derive(Debug, Clone, Copy)]
pub struct KrylovOpts {
    pub rel_tol: f64,
    pub max_iter: usize,
    pub restart: usize,
}

impl Default for KrylovOpts {
    fn default() -> Self {
        KrylovOpts {
            rel_tol: 1e-10,
            max_iter: 2000,
            restart: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SolveStats {
    pub iterations: usize,
    /// Final true relative residual ‖b - Ax‖ / ‖b‖.
    pub residual: f64,
}

/// Left-applied preconditioner approximating `A⁻¹`.
pub trait Precond: Sync {
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

pub struct IdentityPrecond;

impl Precond for IdentityPrecond {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
    }
}

/// Diagonal (Jacobi) preconditioner.
pub struct JacobiPrecond {
    inv_diag: Vec<f64>,
}

impl JacobiPrecond {
    pub fn from_matrix(a: &Csr) -> Self {
        let inv_diag = a
            .diag()
            .into_iter()
            .map(|d| if d != 0.0 { 1.0 / d } else { 1.0 })
            .collect();
        JacobiPrecond { inv_diag }
    }
}

impl Precond for JacobiPrecond {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        for ((z, r), d) in z.iter_mut().zip(r).zip(&self.inv_diag) {
            *z = r * d;
        }
    }
}

/// Preconditioner that approximately inverts an SPD surrogate (the symmetric
/// scalar part of the operator) by an inner CG sweep. Used as the retry path
/// at extreme contrast; inexact application is fine inside flexible GMRES.
pub struct InnerCgPrecond {
    pub matrix: Csr,
    pub inv_diag: Vec<f64>,
    pub opts: KrylovOpts,
    /// Project onto the mean-zero subspace (periodic problems).
    pub mean_zero: bool,
}

impl InnerCgPrecond {
    pub fn new(matrix: Csr, opts: KrylovOpts, mean_zero: bool) -> Self {
        let inv_diag = matrix
            .diag()
            .into_iter()
            .map(|d| if d != 0.0 { 1.0 / d } else { 1.0 })
            .collect();
        InnerCgPrecond {
            matrix,
            inv_diag,
            opts,
            mean_zero,
        }
    }
}

impl Precond for InnerCgPrecond {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let proj: Option<&(dyn Fn(&mut [f64]) + Sync)> = if self.mean_zero {
            Some(&project_mean_zero)
        } else {
            None
        };
        let rhs = if self.mean_zero {
            let mut rhs = r.to_vec();
            project_mean_zero(&mut rhs);
            rhs
        } else {
            r.to_vec()
        };
        match pcg(&self.matrix, &rhs, None, &self.opts, &self.inv_diag, proj) {
            Ok((x, _)) => z.copy_from_slice(&x),
            Err(_) => {
                for ((z, r), d) in z.iter_mut().zip(r).zip(&self.inv_diag) {
                    *z = r * d;
                }
            }
        }
    }
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (y, x) in y.iter_mut().zip(x) {
        *y += alpha * x;
    }
}

/// Subtract the mean from `x`; projector used by the periodic solvers.
pub fn project_mean_zero(x: &mut [f64]) {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    for v in x.iter_mut() {
        *v -= mean;
    }
}

/// Flexible right-preconditioned restarted GMRES.
///
/// Flexibility (storing the preconditioned directions `z_j`) permits inner
/// iterative preconditioners such as the symmetric-part CG used at extreme
/// contrast. Returns the solution together with iteration statistics, or
/// [`HomogError::NonConvergence`] when the budget is exhausted.
pub fn fgmres(
    a: &Csr,
    b: &[f64],
    x0: Option<&[f64]>,
    opts: &KrylovOpts,
    precond: &dyn Precond,
    projector: Option<&(dyn Fn(&mut [f64]) + Sync)>,
) -> Result<(Vec<f64>, SolveStats)> {
    let n = a.n();
    let mut x = match x0 {
        Some(x0) => x0.to_vec(),
        None => vec![0.0; n],
    };
    if let Some(p) = projector {
        p(&mut x);
    }
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok((vec![0.0; n], SolveStats::default()));
    }

    let m = opts.restart.max(1);
    let mut total_iter = 0usize;
    let mut r = vec![0.0; n];
    let mut w = vec![0.0; n];

    loop {
        // True residual at (re)start.
        a.matvec(&x, &mut r);
        for (r, b) in r.iter_mut().zip(b) {
            *r = b - *r;
        }
        if let Some(p) = projector {
            p(&mut r);
        }
        let rnorm = norm(&r);
        if rnorm <= opts.rel_tol * bnorm {
            return Ok((
                x,
                SolveStats {
                    iterations: total_iter,
                    residual: rnorm / bnorm,
                },
            ));
        }
        if total_iter >= opts.max_iter {
            return Err(HomogError::NonConvergence {
                iterations: total_iter,
                residual: rnorm / bnorm,
            });
        }

        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut h: Vec<Vec<f64>> = Vec::with_capacity(m); // column j holds j+2 entries
        let mut cs: Vec<f64> = Vec::with_capacity(m);
        let mut sn: Vec<f64> = Vec::with_capacity(m);
        let mut g = vec![0.0; m + 1];
        g[0] = rnorm;
        basis.push(r.iter().map(|v| v / rnorm).collect());

        let mut j = 0;
        while j < m && total_iter < opts.max_iter {
            let mut z = vec![0.0; n];
            precond.apply(&basis[j], &mut z);
            if let Some(p) = projector {
                p(&mut z);
            }
            a.matvec(&z, &mut w);
            if let Some(p) = projector {
                p(&mut w);
            }
            dirs.push(z);

            // Modified Gram-Schmidt.
            let mut hcol = vec![0.0; j + 2];
            for (i, v) in basis.iter().enumerate() {
                let hij = dot(&w, v);
                hcol[i] = hij;
                axpy(-hij, v, &mut w);
            }
            let hnext = norm(&w);
            hcol[j + 1] = hnext;

            // Apply accumulated Givens rotations to the new column.
            for i in 0..j {
                let t = cs[i] * hcol[i] + sn[i] * hcol[i + 1];
                hcol[i + 1] = -sn[i] * hcol[i] + cs[i] * hcol[i + 1];
                hcol[i] = t;
            }
            let denom = (hcol[j] * hcol[j] + hcol[j + 1] * hcol[j + 1]).sqrt();
            let (c, s) = if denom == 0.0 {
                (1.0, 0.0)
            } else {
                (hcol[j] / denom, hcol[j + 1] / denom)
            };
            cs.push(c);
            sn.push(s);
            hcol[j] = c * hcol[j] + s * hcol[j + 1];
            hcol[j + 1] = 0.0;
            g[j + 1] = -s * g[j];
            g[j] *= c;
            h.push(hcol);

            total_iter += 1;
            let res_est = g[j + 1].abs();
            if hnext <= 1e-14 * bnorm {
                // Lucky breakdown: the solution lies in the current subspace;
                // the true residual is re-checked at the top of the loop.
                j += 1;
                break;
            }
            basis.push(w.iter().map(|v| v / hnext).collect());
            j += 1;
            if res_est <= opts.rel_tol * bnorm {
                break;
            }
        }

        // Solve the small triangular system and update x.
        let k = j;
        if k > 0 {
            let mut y = vec![0.0; k];
            for i in (0..k).rev() {
                let mut acc = g[i];
                for l in (i + 1)..k {
                    acc -= h[l][i] * y[l];
                }
                y[i] = acc / h[i][i];
            }
            for (yi, z) in y.iter().zip(&dirs) {
                axpy(*yi, z, &mut x);
            }
            if let Some(p) = projector {
                p(&mut x);
            }
        }
    }
}

/// Jacobi-preconditioned conjugate gradients for SPD systems (optionally on
/// the mean-zero subspace via `projector`).
pub fn pcg(
    a: &Csr,
    b: &[f64],
    x0: Option<&[f64]>,
    opts: &KrylovOpts,
    inv_diag: &[f64],
    projector: Option<&(dyn Fn(&mut [f64]) + Sync)>,
) -> Result<(Vec<f64>, SolveStats)> {
    let n = a.n();
    let mut x = match x0 {
        Some(x0) => x0.to_vec(),
        None => vec![0.0; n],
    };
    if let Some(p) = projector {
        p(&mut x);
    }
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok((vec![0.0; n], SolveStats::default()));
    }

    let mut r = vec![0.0; n];
    a.matvec(&x, &mut r);
    for (r, b) in r.iter_mut().zip(b) {
        *r = b - *r;
    }
    if let Some(p) = projector {
        p(&mut r);
    }
    let mut z: Vec<f64> = r.iter().zip(inv_diag).map(|(r, d)| r * d).collect();
    if let Some(p) = projector {
        p(&mut z);
    }
    let mut p_dir = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];

    for it in 0..opts.max_iter {
        let rnorm = norm(&r);
        if rnorm <= opts.rel_tol * bnorm {
            return Ok((
                x,
                SolveStats {
                    iterations: it,
                    residual: rnorm / bnorm,
                },
            ));
        }
        a.matvec(&p_dir, &mut ap);
        if let Some(proj) = projector {
            proj(&mut ap);
        }
        let pap = dot(&p_dir, &ap);
        if pap <= 0.0 {
            return Err(HomogError::NonConvergence {
                iterations: it,
                residual: rnorm / bnorm,
            });
        }
        let alpha = rz / pap;
        axpy(alpha, &p_dir, &mut x);
        axpy(-alpha, &ap, &mut r);
        for ((z, r), d) in z.iter_mut().zip(&r).zip(inv_diag) {
            *z = r * d;
        }
        if let Some(proj) = projector {
            proj(&mut z);
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (p, z) in p_dir.iter_mut().zip(&z) {
            *p = z + beta * *p;
        }
    }
    let rnorm = norm(&r);
    Err(HomogError::NonConvergence {
        iterations: opts.max_iter,
        residual: rnorm / bnorm,
    })
}
