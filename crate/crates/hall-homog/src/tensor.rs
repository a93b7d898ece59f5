//! Small-matrix algebra for Hall-perturbed conductivities.
//!
//! Everything here is exact double-precision value arithmetic: the Hall matrix
//! `E(h)` with `E(h)x = h × x`, the realized phase conductivity
//! `σ(h) = α I₃ + β E(h)`, its transversal 2×2 block `σ̃ = α I₂ + β h₃ J`, and
//! the unit-triangular pair `(Π, Π̂)` that conjugates a two-phase columnar
//! conductivity into one with phase-constant off-blocks.

use serde::{Deserialize, Serialize};

use crate::{HomogError, Result};

/// Relative singularity threshold: inversion requires `|det| >= EPS * max²`.
const SINGULARITY_EPS: f64 = 1e-14;

/// `J = [[0,-1],[1,0]]`, the 90° rotation.
pub const J: Mat2 = Mat2([[0.0, -1.0], [1.0, 0.0]]);

// ---------------------------------------------------------------------------
// Vectors
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2(pub [f64; 2]);

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3(pub [f64; 3]);

impl Vec2 {
    pub const ZERO: Vec2 = Vec2([0.0, 0.0]);

    pub fn new(x: f64, y: f64) -> Self {
        Vec2([x, y])
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.0[0] * o.0[0] + self.0[1] * o.0[1]
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scale(self, s: f64) -> Vec2 {
        Vec2([self.0[0] * s, self.0[1] * s])
    }

    /// `J v = (-v₂, v₁)`.
    pub fn rot90(self) -> Vec2 {
        Vec2([-self.0[1], self.0[0]])
    }
}

impl std::ops::Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2([self.0[0] + o.0[0], self.0[1] + o.0[1]])
    }
}

impl std::ops::Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2([self.0[0] - o.0[0], self.0[1] - o.0[1]])
    }
}

impl std::ops::Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2([-self.0[0], -self.0[1]])
    }
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3([0.0, 0.0, 0.0]);

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3([x, y, z])
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.0[0] * o.0[0] + self.0[1] * o.0[1] + self.0[2] * o.0[2]
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3([
            self.0[1] * o.0[2] - self.0[2] * o.0[1],
            self.0[2] * o.0[0] - self.0[0] * o.0[2],
            self.0[0] * o.0[1] - self.0[1] * o.0[0],
        ])
    }

    /// First two components `(h₁, h₂)`.
    pub fn transversal(self) -> Vec2 {
        Vec2([self.0[0], self.0[1]])
    }

    /// `J h̃ = (-h₂, h₁)`, the rotated transversal field.
    pub fn j_transversal(self) -> Vec2 {
        self.transversal().rot90()
    }
}

// ---------------------------------------------------------------------------
// Matrices
// ---------------------------------------------------------------------------

/// Row-major 2×2 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat2(pub [[f64; 2]; 2]);

/// Row-major 3×3 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat3(pub [[f64; 3]; 3]);

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2([[1.0, 0.0], [0.0, 1.0]]);
    pub const ZERO: Mat2 = Mat2([[0.0; 2]; 2]);

    pub fn diag(a: f64, b: f64) -> Mat2 {
        Mat2([[a, 0.0], [0.0, b]])
    }

    pub fn det(&self) -> f64 {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    pub fn transpose(&self) -> Mat2 {
        Mat2([[self.0[0][0], self.0[1][0]], [self.0[0][1], self.0[1][1]]])
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.0
            .iter()
            .flatten()
            .fold(0.0_f64, |m, &v| m.max(v.abs()))
    }

    pub fn inverse(&self) -> Result<Mat2> {
        let det = self.det();
        let scale = self.max_abs_entry();
        let threshold = SINGULARITY_EPS * scale * scale;
        if det.abs() < threshold || det == 0.0 {
            return Err(HomogError::SingularMatrix {
                det: det.abs(),
                threshold,
            });
        }
        let inv = 1.0 / det;
        Ok(Mat2([
            [self.0[1][1] * inv, -self.0[0][1] * inv],
            [-self.0[1][0] * inv, self.0[0][0] * inv],
        ]))
    }

    pub fn mul_vec(&self, v: Vec2) -> Vec2 {
        Vec2([
            self.0[0][0] * v.0[0] + self.0[0][1] * v.0[1],
            self.0[1][0] * v.0[0] + self.0[1][1] * v.0[1],
        ])
    }

    pub fn scale(&self, s: f64) -> Mat2 {
        let mut m = *self;
        for row in m.0.iter_mut() {
            for v in row.iter_mut() {
                *v *= s;
            }
        }
        m
    }

    /// Symmetric part `(A + Aᵀ)/2`.
    pub fn symmetric_part(&self) -> Mat2 {
        let t = self.transpose();
        Mat2([
            [
                (self.0[0][0] + t.0[0][0]) / 2.0,
                (self.0[0][1] + t.0[0][1]) / 2.0,
            ],
            [
                (self.0[1][0] + t.0[1][0]) / 2.0,
                (self.0[1][1] + t.0[1][1]) / 2.0,
            ],
        ])
    }

    /// Eigenvalues of the symmetric part, ascending.
    pub fn sym_eigenvalues(&self) -> [f64; 2] {
        let s = self.symmetric_part();
        let tr = s.0[0][0] + s.0[1][1];
        let disc = ((s.0[0][0] - s.0[1][1]) / 2.0).powi(2) + s.0[0][1] * s.0[1][0];
        let root = disc.max(0.0).sqrt();
        [tr / 2.0 - root, tr / 2.0 + root]
    }
}

impl std::ops::Add for Mat2 {
    type Output = Mat2;
    fn add(self, o: Mat2) -> Mat2 {
        let mut m = self;
        for (r, or) in m.0.iter_mut().zip(o.0.iter()) {
            for (v, ov) in r.iter_mut().zip(or.iter()) {
                *v += ov;
            }
        }
        m
    }
}

impl std::ops::Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, o: Mat2) -> Mat2 {
        let mut m = self;
        for (r, or) in m.0.iter_mut().zip(o.0.iter()) {
            for (v, ov) in r.iter_mut().zip(or.iter()) {
                *v -= ov;
            }
        }
        m
    }
}

impl std::ops::Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, o: Mat2) -> Mat2 {
        let mut m = Mat2::ZERO;
        for i in 0..2 {
            for j in 0..2 {
                m.0[i][j] = self.0[i][0] * o.0[0][j] + self.0[i][1] * o.0[1][j];
            }
        }
        m
    }
}

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
    pub const ZERO: Mat3 = Mat3([[0.0; 3]; 3]);

    pub fn transpose(&self) -> Mat3 {
        let mut t = Mat3::ZERO;
        for i in 0..3 {
            for j in 0..3 {
                t.0[i][j] = self.0[j][i];
            }
        }
        t
    }

    pub fn det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.0
            .iter()
            .flatten()
            .fold(0.0_f64, |m, &v| m.max(v.abs()))
    }

    pub fn inverse(&self) -> Result<Mat3> {
        let det = self.det();
        let scale = self.max_abs_entry();
        let threshold = SINGULARITY_EPS * scale * scale;
        if det.abs() < threshold || det == 0.0 {
            return Err(HomogError::SingularMatrix {
                det: det.abs(),
                threshold,
            });
        }
        let m = &self.0;
        let inv = 1.0 / det;
        let mut c = Mat3::ZERO;
        c.0[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) * inv;
        c.0[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) * inv;
        c.0[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) * inv;
        c.0[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) * inv;
        c.0[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) * inv;
        c.0[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) * inv;
        c.0[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) * inv;
        c.0[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) * inv;
        c.0[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) * inv;
        Ok(c)
    }

    pub fn mul_vec(&self, v: Vec3) -> Vec3 {
        let mut out = [0.0; 3];
        for (i, row) in self.0.iter().enumerate() {
            out[i] = row[0] * v.0[0] + row[1] * v.0[1] + row[2] * v.0[2];
        }
        Vec3(out)
    }

    pub fn scale(&self, s: f64) -> Mat3 {
        let mut m = *self;
        for row in m.0.iter_mut() {
            for v in row.iter_mut() {
                *v *= s;
            }
        }
        m
    }

    pub fn symmetric_part(&self) -> Mat3 {
        let t = self.transpose();
        let mut s = Mat3::ZERO;
        for i in 0..3 {
            for j in 0..3 {
                s.0[i][j] = (self.0[i][j] + t.0[i][j]) / 2.0;
            }
        }
        s
    }

    /// Largest absolute entry of `self - other`.
    pub fn max_abs_diff(&self, other: &Mat3) -> f64 {
        let mut m = 0.0_f64;
        for i in 0..3 {
            for j in 0..3 {
                m = m.max((self.0[i][j] - other.0[i][j]).abs());
            }
        }
        m
    }
}

impl std::ops::Add for Mat3 {
    type Output = Mat3;
    fn add(self, o: Mat3) -> Mat3 {
        let mut m = self;
        for (r, or) in m.0.iter_mut().zip(o.0.iter()) {
            for (v, ov) in r.iter_mut().zip(or.iter()) {
                *v += ov;
            }
        }
        m
    }
}

impl std::ops::Sub for Mat3 {
    type Output = Mat3;
    fn sub(self, o: Mat3) -> Mat3 {
        let mut m = self;
        for (r, or) in m.0.iter_mut().zip(o.0.iter()) {
            for (v, ov) in r.iter_mut().zip(or.iter()) {
                *v -= ov;
            }
        }
        m
    }
}

impl std::ops::Mul for Mat3 {
    type Output = Mat3;
    fn mul(self, o: Mat3) -> Mat3 {
        let mut m = Mat3::ZERO;
        for i in 0..3 {
            for j in 0..3 {
                m.0[i][j] = (0..3).map(|k| self.0[i][k] * o.0[k][j]).sum();
            }
        }
        m
    }
}

// ---------------------------------------------------------------------------
// Hall matrix and phase conductivity
// ---------------------------------------------------------------------------

/// The antisymmetric matrix with `E(h) x = h × x`.
pub fn hall_matrix(h: Vec3) -> Mat3 {
    let [h1, h2, h3] = h.0;
    Mat3([[0.0, -h3, h2], [h3, 0.0, -h1], [-h2, h1, 0.0]])
}

/// Isotropic conductivity perturbed by a constant magnetic field:
/// realizes to `α I₃ + β E(h)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbedConductivity {
    pub alpha: f64,
    pub beta: f64,
    pub h: Vec3,
}

impl PerturbedConductivity {
    pub fn new(alpha: f64, beta: f64, h: Vec3) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(HomogError::InvalidParam(format!(
                "alpha must be positive, got {alpha}"
            )));
        }
        Ok(Self { alpha, beta, h })
    }

    pub fn realize(&self) -> Mat3 {
        realize_sigma(self)
    }

    /// Transversal block `σ̃ = α I₂ + β h₃ J`.
    pub fn transversal_block(&self) -> TransversalBlock {
        TransversalBlock::new(self.alpha, self.beta, self.h.0[2])
    }
}

/// `σ(h) = α I₃ + β E(h)`; the symmetric part is exactly `α I₃`.
pub fn realize_sigma(p: &PerturbedConductivity) -> Mat3 {
    Mat3::IDENTITY.scale(p.alpha) + hall_matrix(p.h).scale(p.beta)
}

/// Top-left 2×2 block of a 3×3 matrix.
pub fn transversal_block(sigma: &Mat3) -> Mat2 {
    Mat2([
        [sigma.0[0][0], sigma.0[0][1]],
        [sigma.0[1][0], sigma.0[1][1]],
    ])
}

// ---------------------------------------------------------------------------
// Transversal block σ̃ = α I₂ + γ J
// ---------------------------------------------------------------------------

/// 2×2 matrix of the form `α I₂ + γ J` (equal diagonal, antisymmetric
/// off-diagonal). Closed under addition, product and inversion, which keeps
/// the structural invariants `σ̃₁₁ = σ̃₂₂`, `σ̃₂₁ = -σ̃₁₂` exact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransversalBlock {
    /// Diagonal entry.
    pub alpha: f64,
    /// Off-diagonal magnitude `γ = β h₃`.
    pub skew: f64,
}

impl TransversalBlock {
    pub fn new(alpha: f64, beta: f64, h3: f64) -> Self {
        Self {
            alpha,
            skew: beta * h3,
        }
    }

    pub fn as_mat2(&self) -> Mat2 {
        Mat2([[self.alpha, -self.skew], [self.skew, self.alpha]])
    }

    pub fn det(&self) -> f64 {
        self.alpha * self.alpha + self.skew * self.skew
    }

    pub fn transpose(&self) -> TransversalBlock {
        TransversalBlock {
            alpha: self.alpha,
            skew: -self.skew,
        }
    }

    pub fn inverse(&self) -> Result<TransversalBlock> {
        let det = self.det();
        let scale = self.alpha.abs().max(self.skew.abs());
        let threshold = SINGULARITY_EPS * scale * scale;
        if det < threshold || det == 0.0 {
            return Err(HomogError::SingularMatrix { det, threshold });
        }
        Ok(TransversalBlock {
            alpha: self.alpha / det,
            skew: -self.skew / det,
        })
    }

    pub fn mul_vec(&self, v: Vec2) -> Vec2 {
        Vec2([
            self.alpha * v.0[0] - self.skew * v.0[1],
            self.skew * v.0[0] + self.alpha * v.0[1],
        ])
    }

    pub fn sub(&self, o: &TransversalBlock) -> TransversalBlock {
        TransversalBlock {
            alpha: self.alpha - o.alpha,
            skew: self.skew - o.skew,
        }
    }
}

// ---------------------------------------------------------------------------
// Effective tensor with block accessors
// ---------------------------------------------------------------------------

/// Homogenized 3×3 conductivity with block accessors
/// `σ* = [[σ̃*, p*], [q*ᵀ, α*]]`. The accessors partition the nine entries, so
/// `from_blocks` followed by the four accessors is the identity bit for bit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveTensor(pub Mat3);

impl EffectiveTensor {
    pub fn from_mat3(m: Mat3) -> Self {
        EffectiveTensor(m)
    }

    pub fn from_blocks(transversal: Mat2, p: Vec2, q: Vec2, alpha: f64) -> Self {
        let t = transversal.0;
        EffectiveTensor(Mat3([
            [t[0][0], t[0][1], p.0[0]],
            [t[1][0], t[1][1], p.0[1]],
            [q.0[0], q.0[1], alpha],
        ]))
    }

    pub fn as_mat3(&self) -> &Mat3 {
        &self.0
    }

    /// Transversal 2×2 block `σ̃*`.
    pub fn transversal(&self) -> Mat2 {
        transversal_block(&self.0)
    }

    /// Third column without the corner: `p*`.
    pub fn col3(&self) -> Vec2 {
        Vec2([self.0 .0[0][2], self.0 .0[1][2]])
    }

    /// Third row without the corner: `q*`.
    pub fn row3(&self) -> Vec2 {
        Vec2([self.0 .0[2][0], self.0 .0[2][1]])
    }

    /// Corner entry `α*`.
    pub fn corner(&self) -> f64 {
        self.0 .0[2][2]
    }

    /// Largest |entry| difference relative to the other tensor's largest
    /// |entry|; the error norm used by sweeps and acceptance checks.
    pub fn max_entry_rel_error(&self, reference: &EffectiveTensor) -> f64 {
        let scale = reference.0.max_abs_entry();
        if scale == 0.0 {
            return self.0.max_abs_entry();
        }
        self.0.max_abs_diff(&reference.0) / scale
    }
}

// ---------------------------------------------------------------------------
// Π-transformation
// ---------------------------------------------------------------------------

/// Parameter pair of the conjugation `σ ↦ Π σ Π̂` by unit-triangular factors
/// `Π = [[I₂, 0], [q₀ᵀ, 1]]`, `Π̂ = [[I₂, p₀], [0, 1]]` (both determinant 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PiPair {
    pub p0: Vec2,
    pub q0: Vec2,
}

impl PiPair {
    pub const IDENTITY: PiPair = PiPair {
        p0: Vec2([0.0, 0.0]),
        q0: Vec2([0.0, 0.0]),
    };

    pub fn pi(&self) -> Mat3 {
        Mat3([
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [self.q0.0[0], self.q0.0[1], 1.0],
        ])
    }

    pub fn pi_hat(&self) -> Mat3 {
        Mat3([
            [1.0, 0.0, self.p0.0[0]],
            [0.0, 1.0, self.p0.0[1]],
            [0.0, 0.0, 1.0],
        ])
    }

    fn inverted(&self) -> PiPair {
        PiPair {
            p0: -self.p0,
            q0: -self.q0,
        }
    }
}

/// `σ' = Π σ Π̂`.
pub fn pi_conjugate(sigma: &Mat3, pair: &PiPair) -> Mat3 {
    pair.pi() * *sigma * pair.pi_hat()
}

/// `σ = Π⁻¹ σ' Π̂⁻¹`; exact inverse of [`pi_conjugate`] since the triangular
/// factors invert by negating their parameters.
pub fn pi_deconjugate(sigma_prime: &Mat3, pair: &PiPair) -> Mat3 {
    let inv = pair.inverted();
    inv.pi() * *sigma_prime * inv.pi_hat()
}

/// Choose `(p₀, q₀)` so that the conjugated two-phase conductivity has
/// phase-independent off-blocks:
/// `p₀ = (β₂,ₙ - β₁)(σ̃₂,ₙ - σ̃₁)⁻¹ J h̃`,
/// `q₀ = (β₂,ₙ - β₁)(σ̃₁ - σ̃₂,ₙ)⁻ᵀ J h̃`.
///
/// A zero right-hand side (no Hall contrast, or field along e₃) short-circuits
/// to the identity pair without requiring the contrast to be invertible.
pub fn interface_match(
    sig1: &TransversalBlock,
    sig2n: &TransversalBlock,
    beta1: f64,
    beta2n: f64,
    h: Vec3,
) -> Result<PiPair> {
    let rhs = h.j_transversal().scale(beta2n - beta1);
    if rhs.0[0] == 0.0 && rhs.0[1] == 0.0 {
        return Ok(PiPair::IDENTITY);
    }
    let diff = sig2n.sub(sig1);
    let diff_inv = diff.inverse().map_err(|_| {
        HomogError::DegenerateContrast(format!(
            "transversal blocks differ by a singular matrix (Δα = {:.3e}, Δγ = {:.3e})",
            diff.alpha, diff.skew
        ))
    })?;
    let p0 = diff_inv.mul_vec(rhs);
    // (σ̃₁ - σ̃₂,ₙ)⁻ᵀ = -(σ̃₂,ₙ - σ̃₁)⁻ᵀ
    let q0 = -diff_inv.transpose().mul_vec(rhs);
    Ok(PiPair { p0, q0 })
}

/// Limit of the matching parameters as the volume fraction vanishes:
/// `p₀ = β₂ σ̃₂⁻¹ J h̃`, `q₀ = -β₂ σ̃₂⁻ᵀ J h̃` with `σ̃₂ = α₂ I₂ + β₂ h₃ J`.
pub fn pi_limits(alpha2: f64, beta2: f64, h: Vec3) -> Result<PiPair> {
    if !(alpha2 > 0.0) {
        return Err(HomogError::InvalidParam(format!(
            "alpha2 must be positive, got {alpha2}"
        )));
    }
    let sigma2 = TransversalBlock::new(alpha2, beta2, h.0[2]);
    let inv = sigma2.inverse()?;
    let jh = h.j_transversal();
    Ok(PiPair {
        p0: inv.mul_vec(jh).scale(beta2),
        q0: inv.transpose().mul_vec(jh).scale(-beta2),
    })
}
