//! Experiment configuration: one TOML file with nested blocks.

use std::fmt;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::cell_problems::{
    scalar_tensor, tensor_from_rows, Coefficients, InterfaceParams, KernelParams, Regime,
};
use crate::fem::Tensor;
use crate::geometry::{build_unit_cell, cells_per_side, CellSpec, Inclusion, Topology};
use crate::ionics::IonicModel;
use crate::micro_solver::InterfaceMode;
use crate::problem::ProblemData;
use super::HarnessError;

/// Every problem found while loading a config, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigErrors(pub Vec<String>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} config error(s)", self.0.len())?;
        for e in &self.0 {
            write!(f, "\n  - {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub dim: usize,
    /// Grid cells per side of the unit cell.
    #[serde(default = "default_cell_n")]
    pub n: usize,
    pub topology: Topology,
    pub inclusion: Inclusion,
    /// Scales `ε = 1/k`; `run --solver micro` uses the first entry.
    #[serde(default = "default_eps")]
    pub eps: Vec<f64>,
}

fn default_cell_n() -> usize {
    8
}

fn default_eps() -> Vec<f64> {
    vec![0.25]
}

/// A conductivity: scalar multiple of the identity, one matrix, or one
/// matrix per unit-cell grid cell (x fastest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Conductivity {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
    Cells { cells: Vec<Vec<Vec<f64>>> },
}

impl Conductivity {
    fn check_matrix(rows: &[Vec<f64>], dim: usize) -> Result<Tensor, String> {
        if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
            return Err(format!("expected a {dim}x{dim} matrix"));
        }
        Ok(tensor_from_rows(rows))
    }

    fn resolve(&self, dim: usize, cells: usize) -> Result<Vec<Tensor>, String> {
        match self {
            Conductivity::Scalar(c) => Ok(vec![scalar_tensor(dim, *c); cells]),
            Conductivity::Matrix(m) => Ok(vec![Self::check_matrix(m, dim)?; cells]),
            Conductivity::Cells { cells: t } => {
                if t.len() != cells {
                    return Err(format!("per-cell table has {} entries, the unit cell has {cells}", t.len()));
                }
                t.iter().map(|m| Self::check_matrix(m, dim)).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientsConfig {
    pub sigma_int: Conductivity,
    pub sigma_out: Conductivity,
    pub sigma_dis: Conductivity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NumericsConfig {
    /// Time step of the ε-problem (and of the macro problem unless `macro_dt` is set).
    pub dt: f64,
    pub macro_dt: Option<f64>,
    /// Macro grid cells per side; must be a multiple of every `1/ε` for `converge`.
    pub macro_n: usize,
    /// Kernel time step; default `α/(10β)`.
    pub dt_kernel: Option<f64>,
    /// Kernel steps `K`; default 80.
    pub kernel_steps: Option<usize>,
    pub tol: f64,
    pub interface_mode: InterfaceMode,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            macro_dt: None,
            macro_n: 32,
            dt_kernel: None,
            kernel_steps: None,
            tol: 1e-10,
            interface_mode: InterfaceMode::Coupled,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: String,
    /// Times at which trajectory CSVs are written; empty means the final time only.
    pub sample_times: Vec<f64>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: "out".into(),
            sample_times: Vec::new(),
        }
    }
}

/// A full experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub geometry: GeometryConfig,
    pub coefficients: CoefficientsConfig,
    pub interface: InterfaceParams,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ionic: Option<IonicModel>,
    pub data: ProblemData,
    pub numerics: NumericsConfig,
    pub output: OutputConfig,
}

const BLOCKS: [&str; 7] = [
    "geometry",
    "coefficients",
    "interface",
    "ionic",
    "data",
    "numerics",
    "output",
];

fn block<T: DeserializeOwned>(
    table: &toml::Table,
    name: &str,
    required: bool,
    errors: &mut Vec<String>,
) -> Option<T> {
    match table.get(name) {
        None if required => {
            errors.push(format!("missing required block [{name}]"));
            None
        }
        None => toml::Value::Table(toml::Table::new())
            .try_into()
            .map_err(|e| errors.push(format!("[{name}]: {e}")))
            .ok(),
        Some(v) => v
            .clone()
            .try_into()
            .map_err(|e: toml::de::Error| errors.push(format!("[{name}]: {}", e.message())))
            .ok(),
    }
}

impl SimConfig {
    /// Parse and validate, collecting every error instead of stopping at the first.
    pub fn from_toml_str(src: &str) -> Result<Self, ConfigErrors> {
        let table: toml::Table = toml::from_str(src).map_err(|e| ConfigErrors(vec![format!("parse error: {e}")]))?;
        let mut errors = Vec::new();
        for key in table.keys() {
            if !BLOCKS.contains(&key.as_str()) {
                errors.push(format!("unknown key `{key}`"));
            }
        }
        let geometry: Option<GeometryConfig> = block(&table, "geometry", true, &mut errors);
        let coefficients: Option<CoefficientsConfig> = block(&table, "coefficients", true, &mut errors);
        let interface: Option<InterfaceParams> = block(&table, "interface", true, &mut errors);
        let ionic: Option<IonicModel> = match table.get("ionic") {
            Some(_) => block(&table, "ionic", true, &mut errors),
            None => None,
        };
        let data: Option<ProblemData> = block(&table, "data", false, &mut errors);
        let numerics: Option<NumericsConfig> = block(&table, "numerics", false, &mut errors);
        let output: Option<OutputConfig> = block(&table, "output", false, &mut errors);
        let ionic_ok = table.get("ionic").is_none() || ionic.is_some();
        match (geometry, coefficients, interface, data, numerics, output) {
            (Some(geometry), Some(coefficients), Some(interface), Some(data), Some(numerics), Some(output))
                if ionic_ok =>
            {
                let cfg = SimConfig {
                    geometry,
                    coefficients,
                    interface,
                    ionic,
                    data,
                    numerics,
                    output,
                };
                errors.extend(cfg.semantic_errors());
                if errors.is_empty() {
                    Ok(cfg)
                } else {
                    Err(ConfigErrors(errors))
                }
            }
            _ => Err(ConfigErrors(errors)),
        }
    }

    /// Canonical TOML text; reloading it gives back the same config.
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    fn semantic_errors(&self) -> Vec<String> {
        let mut e = Vec::new();
        let g = &self.geometry;
        if !(2..=3).contains(&g.dim) {
            e.push(format!("geometry.dim must be 2 or 3, got {}", g.dim));
            return e;
        }
        if let Err(err) = build_unit_cell(&self.cell_spec()) {
            e.push(format!("geometry: {err}"));
        }
        if g.eps.is_empty() {
            e.push("geometry.eps must list at least one scale".into());
        }
        for &eps in &g.eps {
            if let Err(err) = cells_per_side(eps) {
                e.push(format!("geometry.eps: {err}"));
            }
        }
        let cells = g.n.pow(g.dim as u32);
        for (name, c) in [
            ("sigma_int", &self.coefficients.sigma_int),
            ("sigma_out", &self.coefficients.sigma_out),
            ("sigma_dis", &self.coefficients.sigma_dis),
        ] {
            if let Err(err) = c.resolve(g.dim, cells) {
                e.push(format!("coefficients.{name}: {err}"));
            }
        }
        if e.is_empty() {
            if let Ok(cell) = build_unit_cell(&self.cell_spec()) {
                if let Err(err) = self.coefficients().and_then(|c| c.validate(&cell).map_err(|x| x.to_string())) {
                    e.push(format!("coefficients: {err}"));
                }
            }
        }
        if let Err(err) = self.interface.validate() {
            e.push(format!("interface: {err}"));
        }
        if let Some(ionic) = &self.ionic {
            if let Err(err) = ionic.validate(10.0) {
                e.push(format!("ionic: {err}"));
            }
        }
        if let Err(err) = self.data.validate() {
            e.push(format!("data: {err}"));
        }
        for (name, ex) in [
            ("f1", &self.data.f1),
            ("f2", &self.data.f2),
            ("v0", &self.data.v0),
            ("w_in", &self.data.w_in),
            ("s0", &self.data.s0),
            ("s1", &self.data.s1),
        ] {
            if ex.max_x_index() > g.dim {
                e.push(format!("data.{name} uses x{} in dimension {}", ex.max_x_index(), g.dim));
            }
        }
        let n = &self.numerics;
        for (name, v) in [("dt", Some(n.dt)), ("macro_dt", n.macro_dt), ("dt_kernel", n.dt_kernel)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    e.push(format!("numerics.{name} must be positive, got {v}"));
                }
            }
        }
        if n.macro_n < 2 {
            e.push(format!("numerics.macro_n must be at least 2, got {}", n.macro_n));
        }
        if n.kernel_steps == Some(0) {
            e.push("numerics.kernel_steps must be positive".into());
        }
        if !(n.tol > 0.0) {
            e.push(format!("numerics.tol must be positive, got {}", n.tol));
        }
        if let Some(t) = self.output.sample_times.iter().find(|t| !(**t >= 0.0 && **t <= self.data.horizon)) {
            e.push(format!("output.sample_times: {t} is outside [0, T]"));
        }
        e
    }

    /// Commands that step the dynamics need an ionic model.
    pub fn require_ionic(&self) -> Result<&IonicModel, ConfigErrors> {
        self.ionic.as_ref().ok_or_else(|| {
            ConfigErrors(vec![
                "missing [ionic] block: time stepping evaluates I_ion (use variant = \"affine_hh\" with h1 = h2 = \"0\" for a passive membrane)".into(),
            ])
        })
    }

    pub fn cell_spec(&self) -> CellSpec {
        CellSpec {
            dim: self.geometry.dim,
            n: self.geometry.n,
            topology: self.geometry.topology,
            inclusion: self.geometry.inclusion.clone(),
        }
    }

    pub fn coefficients(&self) -> Result<Coefficients, String> {
        let dim = self.geometry.dim;
        let cells = self.geometry.n.pow(dim as u32);
        let c = &self.coefficients;
        Ok(Coefficients {
            dim,
            sigma_int: c.sigma_int.resolve(dim, cells)?,
            sigma_out: c.sigma_out.resolve(dim, cells)?,
            sigma_dis: c.sigma_dis.resolve(dim, cells)?,
        })
    }

    pub fn regime(&self) -> Regime {
        self.interface.regime()
    }

    pub fn kernel_params(&self) -> KernelParams {
        let d = KernelParams::default_for(&self.interface);
        KernelParams {
            dt: self.numerics.dt_kernel.unwrap_or(d.dt),
            steps: self.numerics.kernel_steps.unwrap_or(d.steps),
        }
    }

    pub fn macro_dt(&self) -> f64 {
        self.numerics.macro_dt.unwrap_or(self.numerics.dt)
    }

    /// Requested sample times, or `[T]`.
    pub fn sample_times(&self) -> Vec<f64> {
        if self.output.sample_times.is_empty() {
            vec![self.data.horizon]
        } else {
            let mut t = self.output.sample_times.clone();
            t.sort_by(f64::total_cmp);
            t
        }
    }
}

/// Read and validate a config file.
/// Read and validate a config file. An unreadable file is an I/O error.
pub fn load_config(path: &Path) -> Result<SimConfig, HarnessError> {
    let src = std::fs::read_to_string(path).map_err(HarnessError::io(path))?;
    Ok(SimConfig::from_toml_str(&src)?)
}
