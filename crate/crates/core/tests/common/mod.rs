//! Dense reference assemblies for small meshes, built from the closed-form
//! Q1 element matrices rather than the library's element tables.
#![allow(dead_code)]

use bidomain_homog::fem::{DofMap, SparseOperator};
use bidomain_homog::geometry::{Phase, PhaseMesh};
use nalgebra::{DMatrix, DVector};

/// Scalar-Laplacian Q1 element matrix on a square (independent of h in 2D).
/// Local node `a` has coordinate bit `i` set when it sits at the far end of axis `i`.
pub fn q1_laplace_2d() -> [[f64; 4]; 4] {
    let mut k = [[0.0; 4]; 4];
    for a in 0..4 {
        for b in 0..4 {
            k[a][b] = match (a ^ b).count_ones() {
                0 => 2.0 / 3.0,
                1 => -1.0 / 6.0,
                _ => -1.0 / 3.0,
            };
        }
    }
    k
}

pub fn dense(op: &SparseOperator) -> DMatrix<f64> {
    let n = op.dim();
    DMatrix::from_fn(n, n, |i, j| op.get(i, j))
}

pub fn solve(a: &DMatrix<f64>, b: &[f64]) -> Vec<f64> {
    a.clone()
        .lu()
        .solve(&DVector::from_column_slice(b))
        .expect("oracle matrix is singular")
        .as_slice()
        .to_vec()
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

/// Add `scale · σ_c ∫ ∇φ_a·∇φ_b` over the 2D cells selected by `sigma`
/// (`None` skips a cell), rows from `rows` and columns from `cols`, each
/// read on the cell's own phase side.
pub fn add_dense_stiffness_2d(
    a: &mut DMatrix<f64>,
    mesh: &PhaseMesh,
    (rows, roff): (&DofMap, usize),
    (cols, coff): (&DofMap, usize),
    sigma: &dyn Fn(usize, Phase) -> Option<f64>,
) {
    let k = q1_laplace_2d();
    for cell in 0..mesh.phases.len() {
        let phase = mesh.phases[cell];
        let Some(s) = sigma(cell, phase) else { continue };
        let nodes = mesh.grid.cell_nodes(cell);
        for p in 0..4 {
            let Some(r) = rows.dof(nodes[p], phase) else { continue };
            for q in 0..4 {
                let Some(c) = cols.dof(nodes[q], phase) else { continue };
                a[(roff + r, coff + c)] += s * k[p][q];
            }
        }
    }
}

/// Lumped mass over the cells of `phase` (`None`: all cells) on `map`.
pub fn dense_lumped_mass(mesh: &PhaseMesh, map: &DofMap, phase: Option<Phase>) -> Vec<f64> {
    let nv = mesh.grid.nodes_per_cell();
    let share = mesh.grid.h().powi(mesh.grid.dim as i32) / nv as f64;
    let mut m = vec![0.0; map.len()];
    for cell in 0..mesh.phases.len() {
        let p = mesh.phases[cell];
        if phase.is_some_and(|q| q != p) {
            continue;
        }
        for &n in &mesh.grid.cell_nodes(cell)[..nv] {
            if let Some(i) = map.dof(n, p) {
                m[i] += share;
            }
        }
    }
    m
}
