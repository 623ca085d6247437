//! Unit-cell corrector problems and the effective tensors built from them.

mod correctors;
mod tensors;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fem::{FemError, Tensor};
use crate::geometry::{CellGeometry, DomainGeometry, GeometryError, Phase};

pub use correctors::{
    facet_to_nodal, interface_flux_of_chi0, prescribed_jump_solve, solve_chi0, solve_chi0_neumann, solve_chi1,
    solve_t_s1, solve_zeta, CellCorrectors, Corrector, Evolution,
};
pub use tensors::{
    compute_effective, dual_forms, kernel_identity_form, solve_cell_problems, DualForm, EffectiveTensors, KernelTable,
    TensorMeta,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CellError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error("invalid coefficients: {0}")]
    Coefficients(String),
    #[error("invalid interface parameters: {0}")]
    Interface(String),
    #[error("corrector {0} required for this regime is missing")]
    MissingCorrector(&'static str),
}

/// Which conductivity enters a given bilinear form, cell by cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoeffField {
    /// `σ_int` on the healthy phase.
    IntOnOut,
    /// `σ_out` on the healthy phase.
    OutOnOut,
    /// `σ_dis` on the inclusions.
    DisOnInt,
    /// `σ_out` on the healthy phase, `σ_dis` on the inclusions.
    Both,
    /// `σ_int + σ_out` on the healthy phase.
    IntPlusOutOnOut,
}

/// Y-periodic conductivities, one tensor per unit-cell grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub dim: usize,
    pub sigma_int: Vec<Tensor>,
    pub sigma_out: Vec<Tensor>,
    pub sigma_dis: Vec<Tensor>,
}

/// Embed a `dim x dim` row-major matrix into a [`Tensor`].
pub fn tensor_from_rows(rows: &[Vec<f64>]) -> Tensor {
    let mut t = Tensor::zeros();
    for (i, r) in rows.iter().enumerate() {
        for (j, &v) in r.iter().enumerate() {
            t[(i, j)] = v;
        }
    }
    t
}

/// `c I` in the leading `dim x dim` block.
pub fn scalar_tensor(dim: usize, c: f64) -> Tensor {
    let mut t = Tensor::zeros();
    for i in 0..dim {
        t[(i, i)] = c;
    }
    t
}

impl Coefficients {
    pub fn uniform(dim: usize, cells: usize, int: Tensor, out: Tensor, dis: Tensor) -> Self {
        Self {
            dim,
            sigma_int: vec![int; cells],
            sigma_out: vec![out; cells],
            sigma_dis: vec![dis; cells],
        }
    }

    pub fn scalar(dim: usize, cells: usize, int: f64, out: f64, dis: f64) -> Self {
        Self::uniform(
            dim,
            cells,
            scalar_tensor(dim, int),
            scalar_tensor(dim, out),
            scalar_tensor(dim, dis),
        )
    }

    pub fn num_cells(&self) -> usize {
        self.sigma_int.len()
    }

    fn pick(&self, which: CoeffField, phase: Phase, local: usize) -> Option<Tensor> {
        match (which, phase) {
            (CoeffField::IntOnOut, Phase::Out) => Some(self.sigma_int[local]),
            (CoeffField::OutOnOut, Phase::Out) | (CoeffField::Both, Phase::Out) => Some(self.sigma_out[local]),
            (CoeffField::DisOnInt, Phase::Int) | (CoeffField::Both, Phase::Int) => Some(self.sigma_dis[local]),
            (CoeffField::IntPlusOutOnOut, Phase::Out) => Some(self.sigma_int[local] + self.sigma_out[local]),
            _ => None,
        }
    }

    /// Per-cell tensors on the unit cell.
    pub fn cell_field(&self, cell: &CellGeometry, which: CoeffField) -> Vec<Option<Tensor>> {
        cell.mesh
            .phases
            .iter()
            .enumerate()
            .map(|(c, &p)| self.pick(which, p, c))
            .collect()
    }

    /// Per-cell tensors on the ε-tiled domain, `σ(x/ε)`.
    pub fn domain_field(&self, dom: &DomainGeometry, which: CoeffField) -> Vec<Option<Tensor>> {
        dom.mesh
            .phases
            .iter()
            .enumerate()
            .map(|(c, &p)| self.pick(which, p, dom.local_cell_of(c)))
            .collect()
    }

    /// Extreme eigenvalues `(c₀, c̃₀)` over all three conductivities.
    pub fn ellipticity(&self) -> (f64, f64) {
        let d = self.dim;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for t in self.sigma_int.iter().chain(&self.sigma_out).chain(&self.sigma_dis) {
            let m = DMatrix::from_fn(d, d, |i, j| 0.5 * (t[(i, j)] + t[(j, i)]));
            for &e in SymmetricEigen::new(m).eigenvalues.iter() {
                lo = lo.min(e);
                hi = hi.max(e);
            }
        }
        (lo, hi)
    }

    pub fn validate(&self, cell: &CellGeometry) -> Result<(), CellError> {
        let n = cell.mesh.phases.len();
        for (name, f) in [
            ("sigma_int", &self.sigma_int),
            ("sigma_out", &self.sigma_out),
            ("sigma_dis", &self.sigma_dis),
        ] {
            if f.len() != n {
                return Err(CellError::Coefficients(format!(
                    "{name} has {} cells, the unit cell has {n}",
                    f.len()
                )));
            }
            for (c, t) in f.iter().enumerate() {
                for i in 0..self.dim {
                    for j in 0..i {
                        let s = t[(i, j)].abs().max(t[(j, i)].abs()).max(1.0);
                        if (t[(i, j)] - t[(j, i)]).abs() > 1e-12 * s {
                            return Err(CellError::Coefficients(format!("{name} in cell {c} is not symmetric")));
                        }
                    }
                }
            }
        }
        let (lo, _) = self.ellipticity();
        if !(lo > 0.0) {
            return Err(CellError::Coefficients(format!(
                "conductivities must be uniformly elliptic (smallest eigenvalue {lo})"
            )));
        }
        Ok(())
    }
}

/// Scaling regime selected by the interface exponent `ℓ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `ℓ = −1`: tridomain limit with a zero-order interface relaxation.
    Tridomain,
    /// `−1 < ℓ < 1`: standard bidomain with `Ã2 = A2_B + A2_D`.
    Intermediate,
    /// `ℓ = 1`: bidomain with a memory kernel.
    Memory,
    /// `ℓ > 1`: the jump vanishes in the limit.
    NoJump,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterfaceParams {
    /// Capacitive coefficient.
    pub alpha: f64,
    /// Resistive coefficient.
    pub beta: f64,
    /// Scaling exponent.
    pub ell: f64,
}

impl InterfaceParams {
    pub fn validate(&self) -> Result<(), CellError> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(CellError::Interface(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(CellError::Interface(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.ell >= -1.0) || !self.ell.is_finite() {
            return Err(CellError::Interface(format!("ℓ ≥ −1 required, got {}", self.ell)));
        }
        Ok(())
    }

    pub fn regime(&self) -> Regime {
        if self.ell == -1.0 {
            Regime::Tridomain
        } else if self.ell < 1.0 {
            Regime::Intermediate
        } else if self.ell == 1.0 {
            Regime::Memory
        } else {
            Regime::NoJump
        }
    }
}

/// Uniform time grid `t_k = k dt`, `k = 0..=steps`, for the interface evolutions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub dt: f64,
    pub steps: usize,
}

impl KernelParams {
    /// `dt = α/(10β)` over the horizon `8α/β`.
    pub fn default_for(iface: &InterfaceParams) -> Self {
        Self {
            dt: iface.alpha / (10.0 * iface.beta),
            steps: 80,
        }
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.steps as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| k as f64 * self.dt).collect()
    }
}
