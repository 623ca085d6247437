use super::element::Q1Tables;
use super::sparse::{SparseOperator, TripletBuilder};
use super::{DofMap, FemError, Tensor};
use crate::geometry::{Phase, PhaseMesh};

/// Relative tolerance for the symmetry check on coefficient tensors.
const SYM_TOL: f64 = 1e-12;

/// Integration region for means and projections.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Y,
    Out,
    Int,
}

impl Region {
    pub fn contains(self, phase: Phase) -> bool {
        match self {
            Region::Y => true,
            Region::Out => phase == Phase::Out,
            Region::Int => phase == Phase::Int,
        }
    }
}

pub fn tables(mesh: &PhaseMesh) -> Q1Tables {
    Q1Tables::new(mesh.dim(), mesh.grid.h())
}

pub fn check_symmetric(sigma: &[Option<Tensor>], dim: usize) -> Result<(), FemError> {
    for (cell, s) in sigma.iter().enumerate() {
        let Some(s) = s else { continue };
        let scale = s.abs().max().max(f64::MIN_POSITIVE);
        for i in 0..dim {
            for j in 0..i {
                if (s[(i, j)] - s[(j, i)]).abs() > SYM_TOL * scale {
                    return Err(FemError::NonSymmetricCoefficient { cell });
                }
            }
        }
    }
    Ok(())
}

/// Accumulate `scale * ∫ σ ∇φ_col · ∇φ_row` into a block of `tb`.
///
/// Row and column unknowns are looked up through their own maps, with each
/// cell seeing the trace of its own phase. Cells with `None` contribute nothing.
pub fn add_stiffness(
    tb: &mut TripletBuilder,
    mesh: &PhaseMesh,
    rows: (&DofMap, usize),
    cols: (&DofMap, usize),
    sigma: &[Option<Tensor>],
    scale: f64,
) {
    let t = tables(mesh);
    let nv = t.nodes();
    for (cell, s) in sigma.iter().enumerate() {
        let Some(s) = s else { continue };
        let phase = mesh.phases[cell];
        let nodes = mesh.grid.cell_nodes(cell);
        let ke = t.stiffness(s);
        for a in 0..nv {
            let Some(r) = rows.0.dof(nodes[a], phase) else { continue };
            for b in 0..nv {
                let Some(c) = cols.0.dof(nodes[b], phase) else { continue };
                tb.push(r + rows.1, c + cols.1, scale * ke[a][b]);
            }
        }
    }
}

/// `y = K x` for the (possibly rectangular) stiffness block between two maps,
/// computed cell by cell without assembling.
pub fn apply_stiffness(
    mesh: &PhaseMesh,
    rows: &DofMap,
    cols: &DofMap,
    sigma: &[Option<Tensor>],
    x: &[f64],
) -> Vec<f64> {
    let t = tables(mesh);
    let nv = t.nodes();
    let mut y = vec![0.0; rows.len()];
    for (cell, s) in sigma.iter().enumerate() {
        let Some(s) = s else { continue };
        let phase = mesh.phases[cell];
        let nodes = mesh.grid.cell_nodes(cell);
        let mut xe = [0.0; 8];
        let mut any = false;
        for b in 0..nv {
            if let Some(c) = cols.dof(nodes[b], phase) {
                xe[b] = x[c];
                any |= xe[b] != 0.0;
            }
        }
        if !any {
            continue;
        }
        let ke = t.stiffness(s);
        for a in 0..nv {
            let Some(r) = rows.dof(nodes[a], phase) else { continue };
            y[r] += (0..nv).map(|b| ke[a][b] * xe[b]).sum::<f64>();
        }
    }
    y
}

pub fn assemble_stiffness(
    mesh: &PhaseMesh,
    dofs: &DofMap,
    sigma: &[Option<Tensor>],
) -> Result<SparseOperator, FemError> {
    if sigma.len() != mesh.phases.len() {
        return Err(FemError::DimensionMismatch {
            expected: mesh.phases.len(),
            got: sigma.len(),
        });
    }
    check_symmetric(sigma, mesh.dim())?;
    let mut tb = TripletBuilder::new(dofs.len());
    add_stiffness(&mut tb, mesh, (dofs, 0), (dofs, 0), sigma, 1.0);
    Ok(tb.build(true))
}

/// Accumulate `scale * ∫_Γ [x][y]` with nodal (lumped) quadrature.
pub fn add_interface_mass(tb: &mut TripletBuilder, mesh: &PhaseMesh, dofs: &DofMap, offset: usize, scale: f64) {
    let w = mesh.interface_node_weights();
    for (node, &wn) in w.iter().enumerate() {
        if wn == 0.0 {
            continue;
        }
        let (Some(i), Some(j)) = (dofs.b(node), dofs.d(node)) else {
            continue;
        };
        if i == j {
            continue;
        }
        let v = scale * wn;
        tb.push(i + offset, i + offset, v);
        tb.push(j + offset, j + offset, v);
        tb.push(i + offset, j + offset, -v);
        tb.push(j + offset, i + offset, -v);
    }
}

pub fn assemble_interface_mass(mesh: &PhaseMesh, dofs: &DofMap) -> SparseOperator {
    let mut tb = TripletBuilder::new(dofs.len());
    add_interface_mass(&mut tb, mesh, dofs, 0, 1.0);
    tb.build(true)
}

/// Row-sum lumped mass over the cells of `region`, as a diagonal.
pub fn lumped_mass(mesh: &PhaseMesh, dofs: &DofMap, region: Region) -> Vec<f64> {
    let nv = mesh.grid.nodes_per_cell();
    let share = mesh.cell_volume() / nv as f64;
    let mut m = vec![0.0; dofs.len()];
    for cell in 0..mesh.phases.len() {
        let phase = mesh.phases[cell];
        if !region.contains(phase) {
            continue;
        }
        let nodes = mesh.grid.cell_nodes(cell);
        for &n in &nodes[..nv] {
            if let Some(i) = dofs.dof(n, phase) {
                m[i] += share;
            }
        }
    }
    m
}

/// Load vector `b_a = ∫ σ e_j · ∇φ_a`, the weak form of `-div(σ e_j)`
/// (i.e. `K y^j` for the periodic-unwrapped coordinate `y^j`).
pub fn affine_load(mesh: &PhaseMesh, dofs: &DofMap, sigma: &[Option<Tensor>], j: usize) -> Vec<f64> {
    let t = tables(mesh);
    let nv = t.nodes();
    let mut b = vec![0.0; dofs.len()];
    for (cell, s) in sigma.iter().enumerate() {
        let Some(s) = s else { continue };
        let phase = mesh.phases[cell];
        let nodes = mesh.grid.cell_nodes(cell);
        for a in 0..nv {
            let Some(r) = dofs.dof(nodes[a], phase) else { continue };
            for i in 0..mesh.dim() {
                b[r] += s[(i, j)] * t.grad_int[i][a];
            }
        }
    }
    b
}

/// Nodal values of `x` on one cell as seen from that cell's phase.
pub fn cell_values(mesh: &PhaseMesh, dofs: &DofMap, x: &[f64], cell: usize) -> [f64; 8] {
    let phase = mesh.phases[cell];
    let nodes = mesh.grid.cell_nodes(cell);
    let mut w = [0.0; 8];
    for a in 0..mesh.grid.nodes_per_cell() {
        w[a] = dofs.value(x, nodes[a], phase);
    }
    w
}

/// `∫ σ ∇x` summed over cells with a coefficient.
pub fn flux_integral(mesh: &PhaseMesh, dofs: &DofMap, sigma: &[Option<Tensor>], x: &[f64]) -> [f64; 3] {
    let t = tables(mesh);
    let mut out = [0.0; 3];
    for (cell, s) in sigma.iter().enumerate() {
        let Some(s) = s else { continue };
        let f = t.flux(s, &cell_values(mesh, dofs, x, cell));
        for i in 0..3 {
            out[i] += f[i];
        }
    }
    out
}

/// Exact integral of the Q1 field over `region` (vertex mean times volume).
pub fn region_integral(mesh: &PhaseMesh, dofs: &DofMap, x: &[f64], region: Region) -> f64 {
    let nv = mesh.grid.nodes_per_cell();
    let vol = mesh.cell_volume();
    let mut s = 0.0;
    for cell in 0..mesh.phases.len() {
        if !region.contains(mesh.phases[cell]) {
            continue;
        }
        let w = cell_values(mesh, dofs, x, cell);
        s += w[..nv].iter().sum::<f64>() * vol / nv as f64;
    }
    s
}

pub fn region_measure(mesh: &PhaseMesh, region: Region) -> f64 {
    match region {
        Region::Y => mesh.phases.len() as f64 * mesh.cell_volume(),
        Region::Out => mesh.measure(Phase::Out),
        Region::Int => mesh.measure(Phase::Int),
    }
}

pub fn region_mean(mesh: &PhaseMesh, dofs: &DofMap, x: &[f64], region: Region) -> Result<f64, FemError> {
    let vol = region_measure(mesh, region);
    if vol <= 0.0 {
        return Err(FemError::EmptyRegion);
    }
    Ok(region_integral(mesh, dofs, x, region) / vol)
}

/// Subtract the `region` mean from every unknown of a periodic field.
pub fn project_zero_mean(mesh: &PhaseMesh, dofs: &DofMap, x: &[f64], region: Region) -> Result<Vec<f64>, FemError> {
    let m = region_mean(mesh, dofs, x, region)?;
    let mut y: Vec<f64> = x.iter().map(|v| v - m).collect();
    // A second pass removes the rounding left by the first.
    let m2 = region_mean(mesh, dofs, &y, region)?;
    y.iter_mut().for_each(|v| *v -= m2);
    Ok(y)
}
