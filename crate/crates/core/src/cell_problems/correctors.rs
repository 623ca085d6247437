use rayon::prelude::*;

use super::{CellError, CoeffField, Coefficients, InterfaceParams, KernelParams};
use crate::fem::assembly::{add_interface_mass, add_stiffness, cell_values, tables};
use crate::fem::{
    affine_load, assemble_stiffness, project_zero_mean, DofLayout, DofMap, LinearSolveReport,
    PreparedSystem, Region, SolveOptions, Tensor, TripletBuilder,
};
use crate::geometry::{CellGeometry, Phase, PhaseMesh};

/// One family of stationary correctors, indexed by direction `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Corrector {
    pub map: DofMap,
    pub fields: Vec<Vec<f64>>,
    pub reports: Vec<LinearSolveReport>,
}

/// Time series of a doubled-DOF field on `t_k = k dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Evolution {
    pub map: DofMap,
    pub params: KernelParams,
    /// `fields[k]` at `t_k`.
    pub fields: Vec<Vec<f64>>,
    /// Prescribed nodal jump at `t = 0`.
    pub initial_jump: Vec<f64>,
    pub reports: Vec<LinearSolveReport>,
}

impl Evolution {
    /// Nodal jump at step `k`.
    pub fn jump(&self, k: usize) -> Vec<f64> {
        (0..self.map.num_nodes()).map(|n| self.map.jump(&self.fields[k], n)).collect()
    }
}

/// All correctors of one unit cell. Families not needed by a regime stay `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellCorrectors {
    pub zeta: Corrector,
    pub chi0: Corrector,
    pub chi0_b: Corrector,
    /// `None` when the cell has no inclusion.
    pub chi0_d: Option<Corrector>,
    /// One evolution per direction `j`.
    pub chi1: Option<Vec<Evolution>>,
    pub t_s1: Option<Evolution>,
}

fn stationary(
    mesh: &PhaseMesh,
    map: DofMap,
    sigma: &[Option<Tensor>],
    region: Region,
    tol: f64,
) -> Result<Corrector, CellError> {
    let dim = mesh.dim();
    let k = assemble_stiffness(mesh, &map, sigma)?;
    let sys = PreparedSystem::new(k, SolveOptions::with_tol(tol).neumann());
    let solved: Vec<(Vec<f64>, LinearSolveReport)> = (0..dim)
        .into_par_iter()
        .map(|j| -> Result<_, CellError> {
            let b = affine_load(mesh, &map, sigma, j);
            let (x, rep) = sys.solve(&b, None)?;
            Ok((project_zero_mean(mesh, &map, &x, region)?, rep))
        })
        .collect::<Result<_, _>>()?;
    let (fields, reports) = solved.into_iter().unzip();
    Ok(Corrector { map, fields, reports })
}

/// `ζ^j` on `Y_out`: `−div(σ_int ∇(y^j − ζ^j)) = 0`, zero conormal flux on Γ.
pub fn solve_zeta(cell: &CellGeometry, coeffs: &Coefficients, tol: f64) -> Result<Corrector, CellError> {
    let map = DofMap::new(&cell.mesh, DofLayout::Phase(Phase::Out));
    let sigma = coeffs.cell_field(cell, CoeffField::IntOnOut);
    stationary(&cell.mesh, map, &sigma, Region::Out, tol)
}

/// `χ0^j` on `Y`: `−div(σ_both ∇(y^j − χ0^j)) = 0`, continuous across Γ.
pub fn solve_chi0(cell: &CellGeometry, coeffs: &Coefficients, tol: f64) -> Result<Corrector, CellError> {
    let map = DofMap::new(&cell.mesh, DofLayout::Continuous);
    let sigma = coeffs.cell_field(cell, CoeffField::Both);
    stationary(&cell.mesh, map, &sigma, Region::Y, tol)
}

/// The two decoupled Neumann problems for `χ̂0^B` (in `Y_out`, `σ_out`) and
/// `χ̂0^D` (in `Y_int`, `σ_dis`). `χ̂0^D` is `None` without inclusions.
pub fn solve_chi0_neumann(
    cell: &CellGeometry,
    coeffs: &Coefficients,
    tol: f64,
) -> Result<(Corrector, Option<Corrector>), CellError> {
    let map_b = DofMap::new(&cell.mesh, DofLayout::Phase(Phase::Out));
    let b = stationary(
        &cell.mesh,
        map_b,
        &coeffs.cell_field(cell, CoeffField::OutOnOut),
        Region::Out,
        tol,
    )?;
    let d = if cell.has_inclusion() {
        let map_d = DofMap::new(&cell.mesh, DofLayout::Phase(Phase::Int));
        Some(stationary(
            &cell.mesh,
            map_d,
            &coeffs.cell_field(cell, CoeffField::DisOnInt),
            Region::Int,
            tol,
        )?)
    } else {
        None
    };
    Ok((b, d))
}

/// Lump facet values onto interface nodes: `s_a = Σ_f |f| s_f / 2^(d−1) / m_a`.
pub fn facet_to_nodal(mesh: &PhaseMesh, facet_values: &[f64]) -> Vec<f64> {
    let k = 1 << (mesh.dim() - 1);
    let w = mesh.interface_node_weights();
    let mut s = vec![0.0; w.len()];
    for (f, &v) in mesh.facets.iter().zip(facet_values) {
        for &n in &f.nodes[..k] {
            s[n] += f.area * v / k as f64;
        }
    }
    for (sn, wn) in s.iter_mut().zip(&w) {
        if *wn > 0.0 {
            *sn /= wn;
        }
    }
    s
}

/// Nodal interface flux `σ_out ∇(χ0^j − y^j)·ν` in the discrete weak sense.
///
/// The χ0 equation tested against a B-side interface hat function `φ_a` and
/// integrated over `Y_out` only leaves the boundary term `∫_Γ q φ_a`; with
/// lumped interface quadrature `q_a = −r_a / m_a`, where
/// `r_a = ∫_{Y_out} σ_out ∇(χ0^j − y^j)·∇φ_a`.
pub fn interface_flux_of_chi0(cell: &CellGeometry, coeffs: &Coefficients, chi0: &Corrector, j: usize) -> Vec<f64> {
    let mesh = &cell.mesh;
    let t = tables(mesh);
    let nv = t.nodes();
    let w = mesh.interface_node_weights();
    let mut r = vec![0.0; w.len()];
    for cell_id in 0..mesh.phases.len() {
        if mesh.phases[cell_id] != Phase::Out {
            continue;
        }
        let nodes = mesh.grid.cell_nodes(cell_id);
        let x = cell_values(mesh, &chi0.map, &chi0.fields[j], cell_id);
        let ke = t.stiffness(&coeffs.sigma_out[cell_id]);
        let s = coeffs.sigma_out[cell_id];
        for a in 0..nv {
            if w[nodes[a]] == 0.0 {
                continue;
            }
            let mut v = 0.0;
            for b in 0..nv {
                v += ke[a][b] * x[b];
            }
            // minus ∫ σ e_j · ∇φ_a, the y^j part
            for i in 0..mesh.dim() {
                v -= s[(i, j)] * t.grad_int[i][a];
            }
            r[nodes[a]] += v;
        }
    }
    r.iter().zip(&w).map(|(ra, wa)| if *wa > 0.0 { -ra / wa } else { 0.0 }).collect()
}

/// Doubled-DOF field with prescribed nodal jump `[u] = jump` solving the
/// two-phase elliptic problem with flux continuity; periodic, mean zero on `Y`.
pub fn prescribed_jump_solve(
    mesh: &PhaseMesh,
    doubled: &DofMap,
    sigma: &[Option<Tensor>],
    jump: &[f64],
    tol: f64,
) -> Result<(Vec<f64>, LinearSolveReport), CellError> {
    let cont = DofMap::new(mesh, DofLayout::Continuous);
    let kd = assemble_stiffness(mesh, doubled, sigma)?;
    let kc = assemble_stiffness(mesh, &cont, sigma)?;
    let mut lift = vec![0.0; doubled.len()];
    for node in 0..doubled.num_nodes() {
        if doubled.is_doubled(node) {
            lift[doubled.b(node).unwrap()] = jump[node];
        }
    }
    let kl = kd.matvec(&lift);
    let mut rhs = vec![0.0; cont.len()];
    for (i, v) in kl.iter().enumerate() {
        let node = doubled.node_of(i);
        rhs[cont.b(node).unwrap()] -= v;
    }
    let (z, rep) = PreparedSystem::new(kc, SolveOptions::with_tol(tol).neumann()).solve(&rhs, None)?;
    let u: Vec<f64> = (0..doubled.len())
        .map(|i| z[cont.b(doubled.node_of(i)).unwrap()] + lift[i])
        .collect();
    Ok((project_zero_mean(mesh, doubled, &u, Region::Y)?, rep))
}

/// Backward-Euler evolution of the interface problem
/// `−div(σ_both ∇u) = 0` per phase, `α ∂_t[u] + β[u] = σ_out ∇u·ν` on Γ,
/// from the nodal initial jump `s0`.
fn evolve(
    cell: &CellGeometry,
    coeffs: &Coefficients,
    iface: &InterfaceParams,
    kp: &KernelParams,
    s0: Vec<f64>,
    tol: f64,
) -> Result<Evolution, CellError> {
    let mesh = &cell.mesh;
    let map = DofMap::new(mesh, DofLayout::Doubled);
    let sigma = coeffs.cell_field(cell, CoeffField::Both);
    let (u0, rep0) = prescribed_jump_solve(mesh, &map, &sigma, &s0, tol)?;
    let mut fields = vec![u0];
    let mut reports = vec![rep0];
    if kp.steps > 0 {
        let n = map.len();
        let mut tb = TripletBuilder::new(n);
        add_stiffness(&mut tb, mesh, (&map, 0), (&map, 0), &sigma, 1.0);
        add_interface_mass(&mut tb, mesh, &map, 0, iface.alpha / kp.dt + iface.beta);
        let sys = PreparedSystem::new(tb.build(true), SolveOptions::with_tol(tol).neumann());
        let mut tm = TripletBuilder::new(n);
        add_interface_mass(&mut tm, mesh, &map, 0, iface.alpha / kp.dt);
        let mg = tm.build(true);
        for _ in 0..kp.steps {
            let prev = fields.last().unwrap();
            let rhs = mg.matvec(prev);
            let (x, rep) = sys.solve(&rhs, Some(prev))?;
            fields.push(project_zero_mean(mesh, &map, &x, Region::Y)?);
            reports.push(rep);
        }
    }
    Ok(Evolution {
        map,
        params: *kp,
        fields,
        initial_jump: s0,
        reports,
    })
}

/// `χ1^j(t_k)`, with `α[χ1^j](0) = σ_out ∇(χ0^j − y^j)·ν` (weak flux of χ0).
pub fn solve_chi1(
    cell: &CellGeometry,
    coeffs: &Coefficients,
    iface: &InterfaceParams,
    kp: &KernelParams,
    chi0: &Corrector,
    tol: f64,
) -> Result<Vec<Evolution>, CellError> {
    (0..cell.dim())
        .into_par_iter()
        .map(|j| {
            let s0: Vec<f64> = interface_flux_of_chi0(cell, coeffs, chi0, j)
                .into_iter()
                .map(|q| q / iface.alpha)
                .collect();
            evolve(cell, coeffs, iface, kp, s0, tol)
        })
        .collect()
}

/// `T(s1)(t_k)` with `α[T](0) = s1`; `s1` given per interface facet.
pub fn solve_t_s1(
    cell: &CellGeometry,
    coeffs: &Coefficients,
    iface: &InterfaceParams,
    kp: &KernelParams,
    s1_facets: &[f64],
    tol: f64,
) -> Result<Evolution, CellError> {
    let s0 = facet_to_nodal(&cell.mesh, s1_facets)
        .into_iter()
        .map(|v| v / iface.alpha)
        .collect();
    evolve(cell, coeffs, iface, kp, s0, tol)
}

/// Lumped interface weights restricted to doubled nodes, for `∫_Γ` sums.
pub(crate) fn doubled_weights(mesh: &PhaseMesh, map: &DofMap) -> Vec<f64> {
    let w = mesh.interface_node_weights();
    (0..w.len()).map(|n| if map.is_doubled(n) { w[n] } else { 0.0 }).collect()
}

