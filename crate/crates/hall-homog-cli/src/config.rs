//! JSON run configuration and flag merging. Flags override file values;
//! unknown keys in the file are rejected before any solve starts.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use hall_homog::geometry::{rasterize, CellGeometry, PhaseField, RhoField};
use hall_homog::tensor::Vec3;

/// Optional file-level defaults for every subcommand. All keys are optional;
/// unknown keys are a validation error.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FileConfig {
    pub alpha1: Option<f64>,
    pub beta1: Option<f64>,
    pub alpha2: Option<f64>,
    pub beta2: Option<f64>,
    pub alpha2n: Option<f64>,
    pub beta2n: Option<f64>,
    pub h: Option<[f64; 3]>,
    pub geometry: Option<String>,
    pub n: Option<usize>,
    pub kind: Option<String>,
    pub stages: Option<Vec<f64>>,
    pub resolutions: Option<Vec<usize>>,
    pub rho: Option<RhoField>,
    pub rel_tol: Option<f64>,
    pub max_iter_per_n: Option<usize>,
    pub epsilon: Option<f64>,
    pub res: Option<[usize; 3]>,
    pub cell_n: Option<usize>,
    pub example: Option<String>,
    pub theta: Option<f64>,
    pub f_const: Option<f64>,
    pub out_dir: Option<PathBuf>,
    pub threads: Option<usize>,
    pub timing: Option<bool>,
    pub no_pw: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("config {}: {e}", path.display()))
    }
}

/// Pick the flag value, then the file value, then the default.
pub fn merged<T: Clone>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// Pick the flag value, then the file value; error when both are absent.
pub fn required<T: Clone>(flag: Option<T>, file: Option<T>, name: &str) -> Result<T, String> {
    flag.or(file)
        .ok_or_else(|| format!("missing required parameter '{name}'"))
}

/// Parse "a,b,c" into a fixed-size f64 triple.
pub fn parse_vec3(s: &str) -> Result<Vec3, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated values, got '{s}'"));
    }
    let mut v = [0.0; 3];
    for (slot, p) in v.iter_mut().zip(&parts) {
        *slot = p
            .trim()
            .parse()
            .map_err(|_| format!("bad number '{p}' in '{s}'"))?;
    }
    Ok(Vec3(v))
}

pub fn parse_f64_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| format!("bad number '{p}' in '{s}'"))
        })
        .collect()
}

pub fn parse_usize_list(s: &str) -> Result<Vec<usize>, String> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| format!("bad integer '{p}' in '{s}'"))
        })
        .collect()
}

/// Geometry spec: `disk:R`, `frame:T`, `laminate`, `homogeneous`, or
/// `file:PATH` (portable 0/1 grid).
pub fn build_phase_field(spec: &str, n: usize) -> Result<PhaseField, String> {
    let lower = spec.trim();
    if let Some(rest) = lower.strip_prefix("disk:") {
        let r: f64 = rest.parse().map_err(|_| format!("bad radius '{rest}'"))?;
        let geom = CellGeometry::disk(r).map_err(|e| e.to_string())?;
        return rasterize(&geom, n).map_err(|e| e.to_string());
    }
    if let Some(rest) = lower.strip_prefix("frame:") {
        let t: f64 = rest
            .parse()
            .map_err(|_| format!("bad thickness '{rest}'"))?;
        let geom = CellGeometry::frame(t).map_err(|e| e.to_string())?;
        return rasterize(&geom, n).map_err(|e| e.to_string());
    }
    if let Some(rest) = lower.strip_prefix("file:") {
        return PhaseField::from_grid_file(Path::new(rest)).map_err(|e| e.to_string());
    }
    match lower {
        "laminate" => PhaseField::laminate(n).map_err(|e| e.to_string()),
        "homogeneous" => PhaseField::homogeneous(n).map_err(|e| e.to_string()),
        other => Err(format!(
            "unknown geometry '{other}' (expected disk:R, frame:T, laminate, homogeneous, file:PATH)"
        )),
    }
}

/// Default output directory: flag, config, `HALLHOMOG_OUT_DIR`, then cwd.
pub fn resolve_out_dir(flag: Option<PathBuf>, file: Option<PathBuf>) -> PathBuf {
    flag.or(file)
        .or_else(|| std::env::var_os("HALLHOMOG_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}
