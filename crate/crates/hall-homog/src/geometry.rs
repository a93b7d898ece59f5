//! Periodic cross-section geometries, their rasterizations, and high-contrast
//! scaling schedules.
//!
//! The unit cell is `Y₂ = (-1/2, 1/2)²`. Built-in inclusion shapes are the
//! centred disk of radius `r` and the square frame `{max(|y₁|,|y₂|) ≥ 1/2 - t}`
//! whose area is `4t(1-t)`. Rasterization assigns a cell to the inclusion when
//! its center lies in the inclusion set; a center exactly on the boundary goes
//! to the inclusion (deterministic, measure-zero choice).

use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::tensor::Vec2;
use crate::{HomogError, Result};

/// Minimum raster resolution.
pub const MIN_RESOLUTION: usize = 4;

// ---------------------------------------------------------------------------
// Cell geometry
// ---------------------------------------------------------------------------

/// Inclusion shape on the periodic unit cell.
#[derive(Clone)]
pub enum CellGeometry {
    /// Centred disk of radius `r`, `0 < r < 1/2`; area `π r²`.
    Disk { r: f64 },
    /// Square frame of thickness `t`, `0 < t < 1/2`; area `4t(1-t)`.
    Frame { t: f64 },
    /// Caller-provided Y₂-periodic indicator with its exact inclusion area.
    Custom {
        indicator: Arc<dyn Fn(f64, f64) -> bool + Send + Sync>,
        exact_area: f64,
    },
}

impl std::fmt::Debug for CellGeometry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CellGeometry::Disk { r } => write!(f, "Disk {{ r: {r} }}"),
            CellGeometry::Frame { t } => write!(f, "Frame {{ t: {t} }}"),
            CellGeometry::Custom { exact_area, .. } => {
                write!(f, "Custom {{ exact_area: {exact_area} }}")
            }
        }
    }
}

impl CellGeometry {
    pub fn disk(r: f64) -> Result<Self> {
        if !(r > 0.0 && r < 0.5) {
            return Err(HomogError::InvalidParam(format!(
                "disk radius must lie in (0, 1/2), got {r}"
            )));
        }
        Ok(CellGeometry::Disk { r })
    }

    pub fn frame(t: f64) -> Result<Self> {
        if !(t > 0.0 && t < 0.5) {
            return Err(HomogError::InvalidParam(format!(
                "frame thickness must lie in (0, 1/2), got {t}"
            )));
        }
        Ok(CellGeometry::Frame { t })
    }

    /// Exact inclusion area within the unit cell.
    pub fn exact_area(&self) -> f64 {
        match self {
            CellGeometry::Disk { r } => std::f64::consts::PI * r * r,
            CellGeometry::Frame { t } => 4.0 * t * (1.0 - t),
            CellGeometry::Custom { exact_area, .. } => *exact_area,
        }
    }

    /// Indicator on the fundamental cell; boundary points count as inclusion.
    pub fn contains(&self, y1: f64, y2: f64) -> bool {
        match self {
            CellGeometry::Disk { r } => y1 * y1 + y2 * y2 <= r * r,
            CellGeometry::Frame { t } => y1.abs().max(y2.abs()) >= 0.5 - t,
            CellGeometry::Custom { indicator, .. } => indicator(y1, y2),
        }
    }
}

// ---------------------------------------------------------------------------
// Phase field
// ---------------------------------------------------------------------------

/// Rasterized two-phase indicator on the N×N periodic grid. `true` marks the
/// inclusion (phase 2). Immutable after construction.
#[derive(Debug, Clone)]
pub struct PhaseField {
    n: usize,
    indicator: Vec<bool>,
    raster_fraction: f64,
    exact_fraction: f64,
}

impl PhaseField {
    pub fn resolution(&self) -> usize {
        self.n
    }

    /// Inclusion flag of cell `(i, j)` (y₁ index `i`, y₂ index `j`).
    #[inline]
    pub fn is_inclusion(&self, i: usize, j: usize) -> bool {
        self.indicator[j * self.n + i]
    }

    /// Fraction of raster cells marked as inclusion.
    pub fn raster_fraction(&self) -> f64 {
        self.raster_fraction
    }

    /// Exact area of the underlying shape (raster fraction for file-loaded
    /// fields, where no analytic shape is known).
    pub fn exact_fraction(&self) -> f64 {
        self.exact_fraction
    }

    pub fn from_indicator(n: usize, indicator: Vec<bool>, exact_fraction: f64) -> Result<Self> {
        if n < MIN_RESOLUTION {
            return Err(HomogError::UnderResolved(format!(
                "resolution {n} below minimum {MIN_RESOLUTION}"
            )));
        }
        if indicator.len() != n * n {
            return Err(HomogError::InvalidParam(format!(
                "indicator length {} != {}",
                indicator.len(),
                n * n
            )));
        }
        let count = indicator.iter().filter(|&&b| b).count();
        let raster_fraction = count as f64 / (n * n) as f64;
        Ok(PhaseField {
            n,
            indicator,
            raster_fraction,
            exact_fraction,
        })
    }

    /// Homogeneous field (no inclusion); useful for contrast-1 checks.
    pub fn homogeneous(n: usize) -> Result<Self> {
        PhaseField::from_indicator(n, vec![false; n * n], 0.0)
    }

    /// Half-cell laminate: inclusion occupies `y₁ < 0`.
    pub fn laminate(n: usize) -> Result<Self> {
        if n % 2 != 0 {
            return Err(HomogError::InvalidParam(format!(
                "laminate needs even resolution, got {n}"
            )));
        }
        let mut ind = vec![false; n * n];
        for j in 0..n {
            for i in 0..n / 2 {
                ind[j * n + i] = true;
            }
        }
        PhaseField::from_indicator(n, ind, 0.5)
    }

    /// Portable grid file: first token `N`, then `N²` 0/1 tokens, row-major
    /// with y₁ fastest.
    pub fn from_grid_file(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let mut tokens = Vec::new();
        for line in BufReader::new(file).lines() {
            let line = line?;
            for tok in line.split_whitespace() {
                tokens.push(tok.to_string());
            }
        }
        if tokens.is_empty() {
            return Err(HomogError::Format("empty grid file".into()));
        }
        let n: usize = tokens[0]
            .parse()
            .map_err(|_| HomogError::Format(format!("bad resolution token '{}'", tokens[0])))?;
        if tokens.len() != 1 + n * n {
            return Err(HomogError::Format(format!(
                "expected {} values after header, found {}",
                n * n,
                tokens.len() - 1
            )));
        }
        let mut ind = Vec::with_capacity(n * n);
        for tok in &tokens[1..] {
            match tok.as_str() {
                "0" => ind.push(false),
                "1" => ind.push(true),
                other => {
                    return Err(HomogError::Format(format!(
                        "indicator values must be 0 or 1, found '{other}'"
                    )))
                }
            }
        }
        let raster = ind.iter().filter(|&&b| b).count() as f64 / (n * n) as f64;
        PhaseField::from_indicator(n, ind, raster)
    }

    pub fn write_grid_file(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "{}", self.n)?;
        for j in 0..self.n {
            let row: Vec<&str> = (0..self.n)
                .map(|i| if self.is_inclusion(i, j) { "1" } else { "0" })
                .collect();
            writeln!(out, "{}", row.join(" "))?;
        }
        Ok(())
    }
}

/// Rasterize `geom` on the N×N cell grid by cell-center membership.
pub fn rasterize(geom: &CellGeometry, n: usize) -> Result<PhaseField> {
    if n < MIN_RESOLUTION {
        return Err(HomogError::UnderResolved(format!(
            "resolution {n} below minimum {MIN_RESOLUTION}"
        )));
    }
    let h = 1.0 / n as f64;
    let mut ind = vec![false; n * n];
    for j in 0..n {
        let y2 = (j as f64 + 0.5) * h - 0.5;
        for i in 0..n {
            let y1 = (i as f64 + 0.5) * h - 0.5;
            ind[j * n + i] = geom.contains(y1, y2);
        }
    }
    PhaseField::from_indicator(n, ind, geom.exact_area())
}

// ---------------------------------------------------------------------------
// Density field ρ
// ---------------------------------------------------------------------------

/// Spatial density used by the locally-periodic (ρ-modulated) constructions.
/// Pointwise clamped to `[c1, c2]`; when `mean_normalized` the declared-domain
/// average must be 1 within a quadrature tolerance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RhoField {
    pub kind: RhoKind,
    pub c1: f64,
    pub c2: f64,
    pub mean_normalized: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum RhoKind {
    Constant {
        value: f64,
    },
    /// `ρ(x) = base · (1 + ax·cos 2πx₁)(1 + ay·cos 2πx₂)`; mean over the unit
    /// square is `base`.
    Cosine {
        base: f64,
        ax: f64,
        ay: f64,
    },
}

impl RhoField {
    pub fn constant(value: f64) -> Result<Self> {
        if !(value > 0.0) {
            return Err(HomogError::InvalidParam(format!(
                "rho must be positive, got {value}"
            )));
        }
        Ok(RhoField {
            kind: RhoKind::Constant { value },
            c1: value,
            c2: value,
            mean_normalized: (value - 1.0).abs() < 1e-12,
        })
    }

    pub fn cosine(base: f64, ax: f64, ay: f64) -> Result<Self> {
        if !(base > 0.0) || ax.abs() >= 1.0 || ay.abs() >= 1.0 {
            return Err(HomogError::InvalidParam(
                "cosine rho needs base > 0 and |ax|, |ay| < 1".into(),
            ));
        }
        let lo = base * (1.0 - ax.abs()) * (1.0 - ay.abs());
        let hi = base * (1.0 + ax.abs()) * (1.0 + ay.abs());
        Ok(RhoField {
            kind: RhoKind::Cosine { base, ax, ay },
            c1: lo,
            c2: hi,
            mean_normalized: (base - 1.0).abs() < 1e-12,
        })
    }

    /// Evaluate at `x' = (x₁, x₂)`, clamped to `[c1, c2]`.
    pub fn eval(&self, x: Vec2) -> f64 {
        let raw = match &self.kind {
            RhoKind::Constant { value } => *value,
            RhoKind::Cosine { base, ax, ay } => {
                let tau = 2.0 * std::f64::consts::PI;
                base * (1.0 + ax * (tau * x.0[0]).cos()) * (1.0 + ay * (tau * x.0[1]).cos())
            }
        };
        raw.clamp(self.c1, self.c2)
    }

    /// Midpoint-rule mean over the unit square on an `n × n` sampling grid.
    pub fn quadrature_mean(&self, n: usize) -> f64 {
        let h = 1.0 / n as f64;
        let mut acc = 0.0;
        for j in 0..n {
            for i in 0..n {
                let x = Vec2::new((i as f64 + 0.5) * h, (j as f64 + 0.5) * h);
                acc += self.eval(x);
            }
        }
        acc / (n * n) as f64
    }

    /// Check `⨍ ρ = 1` within `tol` when the field declares normalization.
    pub fn check_normalization(&self, tol: f64, n: usize) -> Result<()> {
        if !self.mean_normalized {
            return Ok(());
        }
        let mean = self.quadrature_mean(n);
        if (mean - 1.0).abs() > tol {
            return Err(HomogError::InvalidParam(format!(
                "rho declared mean-normalized but quadrature mean is {mean}"
            )));
        }
        Ok(())
    }

    /// Rescale so the quadrature mean becomes 1.
    pub fn auto_rescale(&mut self, n: usize) {
        let mean = self.quadrature_mean(n);
        if mean <= 0.0 {
            return;
        }
        match &mut self.kind {
            RhoKind::Constant { value } => *value /= mean,
            RhoKind::Cosine { base, .. } => *base /= mean,
        }
        self.c1 /= mean;
        self.c2 /= mean;
        self.mean_normalized = true;
    }
}

/// Locally modulated fibre radius `r(x') = r_base √ρ(x')`, clamped so the
/// fibre stays strictly inside its cell.
pub fn modulated_radius(rho: &RhoField, r_base: f64, cell_center: Vec2) -> f64 {
    let r = r_base * rho.eval(cell_center).sqrt();
    r.min(0.5 * (1.0 - 1e-9))
}

/// Locally modulated frame thickness `t(x') = ρ(x') t_base`, clamped into
/// `(0, 1/2)`.
pub fn modulated_thickness(rho: &RhoField, t_base: f64, cell_center: Vec2) -> f64 {
    let t = t_base * rho.eval(cell_center);
    t.min(0.5 * (1.0 - 1e-9))
}

// ---------------------------------------------------------------------------
// Contrast schedules
// ---------------------------------------------------------------------------

/// Which built-in cross-section family a schedule drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Circular,
    Grid,
}

/// One stage of a high-contrast scaling schedule.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ScheduleStage {
    pub index: usize,
    pub epsilon: f64,
    /// `rₙ` for circular stages, `tₙ` for grid stages.
    pub shape_param: f64,
    pub alpha2n: f64,
    pub beta2n: f64,
    /// Exact inclusion area: `π rₙ²` or `4 tₙ (1 - tₙ)`.
    pub theta_n: f64,
    /// Normalization scale with `scale · α₂,ₙ = α₂` exactly:
    /// `π rₙ²` (circular) or `4 tₙ` (grid).
    pub theta_scale: f64,
    /// Stage diagnostic: `εₙ² |ln rₙ|` for circular stages, `4 tₙ α₂,ₙ` for
    /// grid stages.
    pub diagnostic: f64,
}

/// The sequence `n ↦ (εₙ, shape, α₂,ₙ, β₂,ₙ, θₙ)` realizing a scaling law
/// `scaleₙ · α₂,ₙ = α₂`, `scaleₙ · β₂,ₙ = β₂`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContrastSchedule {
    pub kind: ScheduleKind,
    pub alpha1: f64,
    pub beta1: f64,
    /// Rescaled inclusion limits α₂ (> 0) and β₂.
    pub alpha2: f64,
    pub beta2: f64,
    pub stages: Vec<ScheduleStage>,
}

impl ContrastSchedule {
    /// Check the construction invariants: normalization products constant and
    /// volume fractions strictly decreasing.
    pub fn validate(&self) -> Result<()> {
        for s in &self.stages {
            let pa = s.theta_scale * s.alpha2n;
            let pb = s.theta_scale * s.beta2n;
            if (pa - self.alpha2).abs() > 1e-12 * self.alpha2.abs().max(1.0) {
                return Err(HomogError::InvalidParam(format!(
                    "stage {}: theta_scale * alpha2n = {pa} != {}",
                    s.index, self.alpha2
                )));
            }
            if (pb - self.beta2).abs() > 1e-12 * self.beta2.abs().max(1.0) {
                return Err(HomogError::InvalidParam(format!(
                    "stage {}: theta_scale * beta2n = {pb} != {}",
                    s.index, self.beta2
                )));
            }
        }
        for w in self.stages.windows(2) {
            if w[1].theta_n >= w[0].theta_n {
                return Err(HomogError::InvalidParam(format!(
                    "theta_n not strictly decreasing at stage {}",
                    w[1].index
                )));
            }
        }
        Ok(())
    }
}

fn require_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0) {
        return Err(HomogError::InvalidParam(format!(
            "{name} must be positive, got {v}"
        )));
    }
    Ok(())
}

fn require_strictly_decreasing(name: &str, list: &[f64]) -> Result<()> {
    if list.is_empty() {
        return Err(HomogError::InvalidParam(format!("{name} list is empty")));
    }
    for w in list.windows(2) {
        if w[1] >= w[0] {
            return Err(HomogError::InvalidParam(format!(
                "{name} list must be strictly decreasing, got {:?} before {:?}",
                w[0], w[1]
            )));
        }
    }
    Ok(())
}

/// Circular-fibre schedule with `rₙ = εₙ` (so `εₙ²|ln rₙ| → 0`),
/// `θₙ = π rₙ²`, `α₂,ₙ = α₂/θₙ`, `β₂,ₙ = β₂/θₙ`.
pub fn circular_schedule(
    eps_list: &[f64],
    alpha1: f64,
    beta1: f64,
    alpha2: f64,
    beta2: f64,
) -> Result<ContrastSchedule> {
    require_positive("alpha1", alpha1)?;
    require_positive("alpha2", alpha2)?;
    require_strictly_decreasing("eps", eps_list)?;
    for &e in eps_list {
        if !(e > 0.0 && e < 0.5) {
            return Err(HomogError::InvalidParam(format!(
                "eps values must lie in (0, 1/2), got {e}"
            )));
        }
    }
    let stages = eps_list
        .iter()
        .enumerate()
        .map(|(index, &eps)| {
            let r = eps;
            let theta = std::f64::consts::PI * r * r;
            ScheduleStage {
                index,
                epsilon: eps,
                shape_param: r,
                alpha2n: alpha2 / theta,
                beta2n: beta2 / theta,
                theta_n: theta,
                theta_scale: theta,
                diagnostic: eps * eps * r.ln().abs(),
            }
        })
        .collect();
    Ok(ContrastSchedule {
        kind: ScheduleKind::Circular,
        alpha1,
        beta1,
        alpha2,
        beta2,
        stages,
    })
}

/// Thin-grid schedule with `α₂,ₙ = α₂/(4tₙ)`, `β₂,ₙ = β₂/(4tₙ)` and exact
/// volume fraction `θₙ = 4tₙ(1-tₙ)`.
pub fn grid_schedule(
    t_list: &[f64],
    alpha1: f64,
    beta1: f64,
    alpha2: f64,
    beta2: f64,
) -> Result<ContrastSchedule> {
    require_positive("alpha1", alpha1)?;
    require_positive("alpha2", alpha2)?;
    require_strictly_decreasing("t", t_list)?;
    for &t in t_list {
        if !(t > 0.0 && t < 0.5) {
            return Err(HomogError::InvalidParam(format!(
                "t values must lie in (0, 1/2), got {t}"
            )));
        }
    }
    let stages = t_list
        .iter()
        .enumerate()
        .map(|(index, &t)| {
            let scale = 4.0 * t;
            let alpha2n = alpha2 / scale;
            ScheduleStage {
                index,
                epsilon: t,
                shape_param: t,
                alpha2n,
                beta2n: beta2 / scale,
                theta_n: 4.0 * t * (1.0 - t),
                theta_scale: scale,
                diagnostic: scale * alpha2n,
            }
        })
        .collect();
    Ok(ContrastSchedule {
        kind: ScheduleKind::Grid,
        alpha1,
        beta1,
        alpha2,
        beta2,
        stages,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disk_raster_fraction_converges() {
        let geom = CellGeometry::disk(0.25).unwrap();
        let exact = std::f64::consts::PI / 16.0;
        let f64_err = |n: usize| {
            let pf = rasterize(&geom, n).unwrap();
            (pf.raster_fraction() - exact).abs()
        };
        let e64 = f64_err(64);
        assert!(e64 < 0.01, "error at N=64 is {e64}");
        // Monotone error trend over doubling resolutions.
        let errs: Vec<f64> = [32, 64, 128, 256].iter().map(|&n| f64_err(n)).collect();
        assert!(
            errs.windows(2).all(|w| w[1] < w[0]),
            "raster error not monotone: {errs:?}"
        );
    }

    #[test]
    fn frame_raster_exact_when_aligned() {
        // t*N = 8 is an integer: raster fraction equals 4t(1-t) exactly.
        let geom = CellGeometry::frame(0.125).unwrap();
        let pf = rasterize(&geom, 64).unwrap();
        assert_eq!(pf.exact_fraction(), 0.4375);
        assert_eq!(pf.raster_fraction(), 0.4375);
    }

    #[test]
    fn degenerate_disk_rejected() {
        assert!(CellGeometry::disk(0.0).is_err());
        assert!(CellGeometry::disk(0.5).is_err());
    }

    #[test]
    fn raster_below_min_resolution_rejected() {
        let geom = CellGeometry::disk(0.25).unwrap();
        assert!(matches!(
            rasterize(&geom, 3),
            Err(HomogError::UnderResolved(_))
        ));
    }

    #[test]
    fn circular_schedule_scaling_law() {
        let s = circular_schedule(&[0.2, 0.1], 1.0, 0.0, 2.0, 0.5).unwrap();
        s.validate().unwrap();
        let pi = std::f64::consts::PI;
        assert!((s.stages[0].theta_n - pi * 0.04).abs() < 1e-15);
        assert!((s.stages[1].theta_n - pi * 0.01).abs() < 1e-15);
        assert!((s.stages[0].alpha2n - 2.0 / (0.04 * pi)).abs() < 1e-12);
        assert!((s.stages[1].alpha2n - 2.0 / (0.01 * pi)).abs() < 1e-12);
        // Diagnostic ε²|ln r| at ε = 0.1.
        assert!((s.stages[1].diagnostic - 0.01 * (0.1f64).ln().abs()).abs() < 1e-15);
        // θₙ α₂,ₙ = α₂ at every stage.
        for st in &s.stages {
            assert!((st.theta_n * st.alpha2n - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_schedule_scaling_law() {
        let s = grid_schedule(&[0.125, 0.05], 1.0, 1.0, 2.0, 1.0).unwrap();
        s.validate().unwrap();
        assert!((s.stages[1].alpha2n - 10.0).abs() < 1e-12);
        assert!((s.stages[0].beta2n - 2.0).abs() < 1e-12);
        for st in &s.stages {
            assert!((4.0 * st.shape_param * st.alpha2n - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn non_monotone_schedules_rejected() {
        assert!(circular_schedule(&[0.1, 0.2], 1.0, 0.0, 2.0, 0.0).is_err());
        assert!(grid_schedule(&[0.1, 0.1], 1.0, 0.0, 2.0, 0.0).is_err());
        assert!(grid_schedule(&[0.6, 0.1], 1.0, 0.0, 2.0, 0.0).is_err());
    }

    #[test]
    fn rho_modulation() {
        let rho = RhoField::constant(1.0).unwrap();
        assert_eq!(modulated_radius(&rho, 0.1, Vec2::ZERO), 0.1);
        let rho4 = RhoField {
            kind: RhoKind::Constant { value: 4.0 },
            c1: 0.5,
            c2: 5.0,
            mean_normalized: false,
        };
        assert!((modulated_radius(&rho4, 0.1, Vec2::ZERO) - 0.2).abs() < 1e-15);
        // Modulated area scales linearly in ρ.
        let area = |r: f64| std::f64::consts::PI * r * r;
        let r_mod = modulated_radius(&rho4, 0.1, Vec2::ZERO);
        assert!((area(r_mod) - 4.0 * area(0.1)).abs() < 1e-12);
    }

    #[test]
    fn rho_normalization_check() {
        let rho = RhoField::cosine(1.0, 0.5, -0.25).unwrap();
        rho.check_normalization(1e-6, 256).unwrap();
        let mut bad = RhoField::cosine(2.0, 0.3, 0.0).unwrap();
        bad.mean_normalized = true;
        assert!(bad.check_normalization(1e-6, 256).is_err());
        bad.auto_rescale(256);
        bad.check_normalization(1e-6, 256).unwrap();
    }

    #[test]
    fn custom_indicator_rasterizes() {
        // Axis-aligned square of side 1/2 centred at the origin.
        let geom = CellGeometry::Custom {
            indicator: std::sync::Arc::new(|y1: f64, y2: f64| y1.abs() <= 0.25 && y2.abs() <= 0.25),
            exact_area: 0.25,
        };
        let pf = rasterize(&geom, 32).unwrap();
        // Grid-aligned: exact.
        assert_eq!(pf.raster_fraction(), 0.25);
        assert_eq!(pf.exact_fraction(), 0.25);
    }

    #[test]
    fn grid_file_round_trip() {
        let geom = CellGeometry::frame(0.25).unwrap();
        let pf = rasterize(&geom, 8).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("frame.grid");
        pf.write_grid_file(&path).unwrap();
        let loaded = PhaseField::from_grid_file(&path).unwrap();
        assert_eq!(loaded.resolution(), 8);
        for j in 0..8 {
            for i in 0..8 {
                assert_eq!(loaded.is_inclusion(i, j), pf.is_inclusion(i, j));
            }
        }
        assert_eq!(loaded.raster_fraction(), pf.raster_fraction());
    }

    #[test]
    fn grid_file_rejects_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.grid");
        std::fs::write(&path, "4\n0 1 0 1\n0 2 0 1\n0 1 0 1\n0 1 0 1\n").unwrap();
        assert!(matches!(
            PhaseField::from_grid_file(&path),
            Err(HomogError::Format(_))
        ));
    }
}
