use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::correctors::doubled_weights;
use super::{
    solve_chi0, solve_chi0_neumann, solve_chi1, solve_t_s1, solve_zeta, CellCorrectors, CellError, CoeffField,
    Coefficients, Corrector, Evolution, InterfaceParams, KernelParams, Regime,
};
use crate::fem::{affine_load, assemble_stiffness, flux_integral, Tensor};
use crate::geometry::CellGeometry;

/// A tensor evaluated through its flux (linear) and energy (quadratic) formulas.
#[derive(Debug, Clone, PartialEq)]
pub struct DualForm {
    pub flux: DMatrix<f64>,
    pub energy: DMatrix<f64>,
}

impl DualForm {
    /// `max|flux − energy| / max|flux|`; absolute when both forms vanish
    /// to rounding (as `A2_D` does for disconnected inclusions).
    pub fn gap(&self) -> f64 {
        let scale = self.flux.amax().max(self.energy.amax());
        if scale < 1e-12 {
            return (&self.flux - &self.energy).amax();
        }
        (&self.flux - &self.energy).amax() / scale
    }
}

/// Memory kernel `B(t_k)` on a uniform grid; zero beyond the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelTable {
    pub dt: f64,
    pub values: Vec<DMatrix<f64>>,
}

impl KernelTable {
    pub fn zero(dim: usize, dt: f64, steps: usize) -> Self {
        Self {
            dt,
            values: vec![DMatrix::zeros(dim, dim); steps + 1],
        }
    }

    pub fn horizon(&self) -> f64 {
        self.dt * (self.values.len() - 1) as f64
    }

    /// Linear interpolation between nodes; the zero matrix past the last node.
    pub fn at(&self, t: f64) -> DMatrix<f64> {
        let d = self.values[0].nrows();
        if t < 0.0 || t > self.horizon() * (1.0 + 1e-12) {
            return DMatrix::zeros(d, d);
        }
        let s = t / self.dt;
        let k = (s.floor() as usize).min(self.values.len() - 1);
        if k + 1 >= self.values.len() {
            return self.values[k].clone();
        }
        let th = s - k as f64;
        &self.values[k] * (1.0 - th) + &self.values[k + 1] * th
    }

    /// `max_k ‖B(t_k) − B(t_k)ᵀ‖_∞ / ‖B(0)‖_∞` (max-entry norms).
    pub fn asymmetry(&self) -> f64 {
        let b0 = self.values[0].amax();
        let worst = self
            .values
            .iter()
            .map(|b| (b - b.transpose()).amax())
            .fold(0.0, f64::max);
        if b0 == 0.0 {
            worst
        } else {
            worst / b0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorMeta {
    pub geometry_hash: String,
    pub coefficient_hash: String,
    pub vol_out: f64,
    pub vol_int: f64,
    pub interface_area: f64,
    pub dt_kernel: f64,
    pub k: usize,
    /// `‖B(t_K)‖_∞ · α/β`, a bound on the truncated tail `∫_{t_K}^∞ ‖B‖`
    /// assuming decay at the interface relaxation rate `β/α`.
    pub tail_bound: f64,
    /// Largest relative flux/energy discrepancy over the computed tensors.
    pub dual_gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveTensors {
    pub dim: usize,
    pub a1: DMatrix<f64>,
    pub a2: DMatrix<f64>,
    pub a2_b: DMatrix<f64>,
    pub a2_d: DMatrix<f64>,
    pub kernel: Option<KernelTable>,
    /// `∫_Y σ_both ∇T(s1)(t_k)` per kernel node (first `dim` entries used).
    pub f_cellflux: Option<Vec<[f64; 3]>>,
    pub meta: TensorMeta,
}

impl EffectiveTensors {
    /// `Ã2 = A2_B + A2_D`.
    pub fn a2_tilde(&self) -> DMatrix<f64> {
        &self.a2_b + &self.a2_d
    }
}

fn integral_of_sigma(cell: &CellGeometry, sigma: &[Option<Tensor>], dim: usize) -> DMatrix<f64> {
    let vol = cell.mesh.cell_volume();
    let mut c = DMatrix::zeros(dim, dim);
    for s in sigma.iter().flatten() {
        for i in 0..dim {
            for j in 0..dim {
                c[(i, j)] += s[(i, j)] * vol;
            }
        }
    }
    c
}

/// `(1/|Y_out|) ∫ σ ∇(y − w)` in both forms, for a corrector family `w`.
fn dual_tensor(
    cell: &CellGeometry,
    corr: &Corrector,
    sigma: &[Option<Tensor>],
    vol_out: f64,
) -> Result<DualForm, CellError> {
    let dim = cell.dim();
    let mesh = &cell.mesh;
    let c = integral_of_sigma(cell, sigma, dim);
    let k = assemble_stiffness(mesh, &corr.map, sigma)?;
    let loads: Vec<Vec<f64>> = (0..dim).map(|j| affine_load(mesh, &corr.map, sigma, j)).collect();
    let mut flux = DMatrix::zeros(dim, dim);
    let mut energy = DMatrix::zeros(dim, dim);
    for j in 0..dim {
        let fj = flux_integral(mesh, &corr.map, sigma, &corr.fields[j]);
        let kj = k.matvec(&corr.fields[j]);
        for i in 0..dim {
            flux[(i, j)] = (c[(i, j)] - fj[i]) / vol_out;
            let bi_wj: f64 = loads[i].iter().zip(&corr.fields[j]).map(|(a, b)| a * b).sum();
            let bj_wi: f64 = loads[j].iter().zip(&corr.fields[i]).map(|(a, b)| a * b).sum();
            let wi_k_wj: f64 = corr.fields[i].iter().zip(&kj).map(|(a, b)| a * b).sum();
            energy[(i, j)] = (c[(i, j)] - bi_wj - bj_wi + wi_k_wj) / vol_out;
        }
    }
    Ok(DualForm { flux, energy })
}

/// `B(t_k) = −(1/|Y_out|) ∫_Y σ_both ∇χ1(t_k)`; column `j` comes from `χ1^j`.
fn kernel_flux_form(cell: &CellGeometry, coeffs: &Coefficients, chi1: &[Evolution]) -> KernelTable {
    let dim = cell.dim();
    let sigma = coeffs.cell_field(cell, CoeffField::Both);
    let vol_out = cell.vol_out();
    let kp = chi1[0].params;
    let values = (0..=kp.steps)
        .map(|k| {
            let mut b = DMatrix::zeros(dim, dim);
            for (j, ev) in chi1.iter().enumerate() {
                let f = flux_integral(&cell.mesh, &ev.map, &sigma, &ev.fields[k]);
                for h in 0..dim {
                    b[(h, j)] = -f[h] / vol_out;
                }
            }
            b
        })
        .collect();
    KernelTable { dt: kp.dt, values }
}

/// The kernel through the interface identity
/// `B_hj(t) = −(α/|Y_out|) ∫_Γ [χ1^j](t) [χ1^h](0)` (lumped quadrature).
pub fn kernel_identity_form(cell: &CellGeometry, iface: &InterfaceParams, chi1: &[Evolution]) -> KernelTable {
    let dim = cell.dim();
    let w = doubled_weights(&cell.mesh, &chi1[0].map);
    let vol_out = cell.vol_out();
    let kp = chi1[0].params;
    let jumps: Vec<Vec<Vec<f64>>> = chi1.iter().map(|ev| (0..=kp.steps).map(|k| ev.jump(k)).collect()).collect();
    let values = (0..=kp.steps)
        .map(|k| {
            DMatrix::from_fn(dim, dim, |h, j| {
                let s: f64 = (0..w.len()).map(|a| w[a] * jumps[j][k][a] * jumps[h][0][a]).sum();
                -iface.alpha * s / vol_out
            })
        })
        .collect();
    KernelTable { dt: kp.dt, values }
}

fn hash_geometry(cell: &CellGeometry) -> String {
    let mut h = Sha256::new();
    h.update((cell.dim() as u64).to_le_bytes());
    h.update((cell.mesh.grid.cells as u64).to_le_bytes());
    for p in &cell.mesh.phases {
        h.update([*p as u8]);
    }
    crate::hex(&h.finalize())
}

fn hash_coefficients(coeffs: &Coefficients) -> String {
    let mut h = Sha256::new();
    for f in [&coeffs.sigma_int, &coeffs.sigma_out, &coeffs.sigma_dis] {
        for t in f {
            for v in t.iter() {
                h.update(v.to_bits().to_le_bytes());
            }
        }
    }
    crate::hex(&h.finalize())
}

/// Solve every corrector the regime needs. The kernel families (`χ1`, and
/// `T(s1)` when `s1` is given) are solved for the memory regime or when
/// `force_kernel` is set.
pub fn solve_cell_problems(
    cell: &CellGeometry,
    coeffs: &Coefficients,
    iface: &InterfaceParams,
    kp: &KernelParams,
    s1_facets: Option<&[f64]>,
    force_kernel: bool,
    tol: f64,
) -> Result<CellCorrectors, CellError> {
    coeffs.validate(cell)?;
    iface.validate()?;
    let zeta = solve_zeta(cell, coeffs, tol)?;
    let chi0 = solve_chi0(cell, coeffs, tol)?;
    let (chi0_b, chi0_d) = solve_chi0_neumann(cell, coeffs, tol)?;
    let want_kernel = force_kernel || iface.regime() == Regime::Memory;
    let chi1 = if want_kernel {
        Some(solve_chi1(cell, coeffs, iface, kp, &chi0, tol)?)
    } else {
        None
    };
    let t_s1 = match s1_facets {
        Some(s1) if want_kernel => Some(solve_t_s1(cell, coeffs, iface, kp, s1, tol)?),
        _ => None,
    };
    Ok(CellCorrectors {
        zeta,
        chi0,
        chi0_b,
        chi0_d,
        chi1,
        t_s1,
    })
}

/// Effective tensors from solved correctors.
pub fn compute_effective(
    cell: &CellGeometry,
    coeffs: &Coefficients,
    iface: &InterfaceParams,
    corr: &CellCorrectors,
    regime: Regime,
) -> Result<EffectiveTensors, CellError> {
    let dim = cell.dim();
    let vol_out = cell.vol_out();
    let a1 = dual_tensor(cell, &corr.zeta, &coeffs.cell_field(cell, CoeffField::IntOnOut), vol_out)?;
    let a2 = dual_tensor(cell, &corr.chi0, &coeffs.cell_field(cell, CoeffField::Both), vol_out)?;
    let a2_b = dual_tensor(cell, &corr.chi0_b, &coeffs.cell_field(cell, CoeffField::OutOnOut), vol_out)?;
    let a2_d = match &corr.chi0_d {
        Some(c) => dual_tensor(cell, c, &coeffs.cell_field(cell, CoeffField::DisOnInt), vol_out)?,
        None => DualForm {
            flux: DMatrix::zeros(dim, dim),
            energy: DMatrix::zeros(dim, dim),
        },
    };
    if regime == Regime::Memory && corr.chi1.is_none() {
        return Err(CellError::MissingCorrector("chi1"));
    }
    let kernel = corr.chi1.as_ref().map(|c| kernel_flux_form(cell, coeffs, c));
    let f_cellflux = corr.t_s1.as_ref().map(|ev| {
        let sigma = coeffs.cell_field(cell, CoeffField::Both);
        ev.fields
            .iter()
            .map(|u| flux_integral(&cell.mesh, &ev.map, &sigma, u))
            .collect()
    });
    let (dt_kernel, k, tail_bound) = match &kernel {
        Some(kt) => (
            kt.dt,
            kt.values.len() - 1,
            kt.values.last().unwrap().amax() * iface.alpha / iface.beta,
        ),
        None => (0.0, 0, 0.0),
    };
    let dual_gap = [&a1, &a2, &a2_b, &a2_d].iter().map(|d| d.gap()).fold(0.0, f64::max);
    Ok(EffectiveTensors {
        dim,
        a1: a1.flux,
        a2: a2.flux,
        a2_b: a2_b.flux,
        a2_d: a2_d.flux,
        kernel,
        f_cellflux,
        meta: TensorMeta {
            geometry_hash: hash_geometry(cell),
            coefficient_hash: hash_coefficients(coeffs),
            vol_out,
            vol_int: cell.vol_int(),
            interface_area: cell.interface_area(),
            dt_kernel,
            k,
            tail_bound,
            dual_gap,
        },
    })
}

/// Flux and energy forms of every stationary tensor, for cross-checks.
pub fn dual_forms(
    cell: &CellGeometry,
    coeffs: &Coefficients,
    corr: &CellCorrectors,
) -> Result<[DualForm; 3], CellError> {
    let vol_out = cell.vol_out();
    Ok([
        dual_tensor(cell, &corr.zeta, &coeffs.cell_field(cell, CoeffField::IntOnOut), vol_out)?,
        dual_tensor(cell, &corr.chi0, &coeffs.cell_field(cell, CoeffField::Both), vol_out)?,
        dual_tensor(cell, &corr.chi0_b, &coeffs.cell_field(cell, CoeffField::OutOnOut), vol_out)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::*;

    fn boxcell(n: usize, empty: bool) -> CellGeometry {
        build_unit_cell(&CellSpec {
            dim: 2,
            n,
            topology: Topology::Disconnected,
            inclusion: if empty {
                Inclusion::Empty
            } else {
                Inclusion::Box {
                    lo: vec![0.25, 0.25],
                    hi: vec![0.75, 0.75],
                }
            },
        })
        .unwrap()
    }

    fn iface() -> InterfaceParams {
        InterfaceParams {
            alpha: 1.0,
            beta: 1.0,
            ell: 1.0,
        }
    }

    #[test]
    fn trivial_media() {
        let cell = boxcell(8, true);
        let co = Coefficients::scalar(2, 64, 2.0, 1.0, 1.0);
        let kp = KernelParams { dt: 0.1, steps: 2 };
        let corr = solve_cell_problems(&cell, &co, &iface(), &kp, None, false, 1e-12).unwrap();
        let t = compute_effective(&cell, &co, &iface(), &corr, Regime::Intermediate).unwrap();
        assert!((&t.a1 - DMatrix::identity(2, 2) * 2.0).amax() < 1e-10);

        let cell = boxcell(8, false);
        let co = Coefficients::scalar(2, 64, 1.0, 3.0, 3.0);
        let corr = solve_cell_problems(&cell, &co, &iface(), &kp, None, false, 1e-12).unwrap();
        let t = compute_effective(&cell, &co, &iface(), &corr, Regime::Intermediate).unwrap();
        assert!((&t.a2 - DMatrix::identity(2, 2) * 4.0).amax() < 1e-10);
        assert!(t.a2_d.amax() < 1e-8);
    }

    #[test]
    fn kernel_forms_agree() {
        let cell = boxcell(8, false);
        let co = Coefficients::scalar(2, 64, 1.0, 1.0, 5.0);
        let kp = KernelParams { dt: 0.1, steps: 10 };
        let corr = solve_cell_problems(&cell, &co, &iface(), &kp, None, true, 1e-12).unwrap();
        let t = compute_effective(&cell, &co, &iface(), &corr, Regime::Memory).unwrap();
        let flux = t.kernel.unwrap();
        let ident = kernel_identity_form(&cell, &iface(), corr.chi1.as_ref().unwrap());
        for (a, b) in flux.values.iter().zip(&ident.values) {
            assert!((a - b).amax() < 1e-8 * flux.values[0].amax(), "{a} vs {b}");
        }
        assert!(flux.asymmetry() < 1e-6);
    }
}
