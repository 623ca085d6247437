//! Structured periodic unit cells, their ε-tiling over the unit box, and the
//! staircase interface between the healthy phase and the inclusions.
//!
//! Everything lives on a uniform Cartesian grid. Inclusions are unions of
//! grid cells, so the interface Γ is a union of grid faces and every measure
//! (phase volumes, interface area) is an exact rational number. With a
//! power-of-two resolution those rationals are also exact in `f64`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance used when checking that a rational corner coordinate sits on the grid.
const ALIGN_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("dimension must be 2 or 3, got {0}")]
    InvalidDim(usize),
    #[error("resolution must be a power of two >= 2, got {0}")]
    BadResolution(usize),
    #[error("connected/connected topology requires dim = 3")]
    ConnectedIn2d,
    #[error("inclusion coordinate {0} is not aligned with the grid (n = {1})")]
    NotGridAligned(f64, usize),
    #[error("invalid inclusion: {0}")]
    InvalidInclusion(String),
    #[error("disconnected inclusion must lie strictly inside the unit cell")]
    TouchesCellBoundary,
    #[error("{0:?} phase is not connected under periodic identification")]
    PhaseNotConnected(Phase),
    #[error("no interior cells: 1/eps = {0} but at least 3 is required for disconnected inclusions")]
    NoInteriorCells(usize),
    #[error("1/eps must be a positive integer, got eps = {0}")]
    BadEps(f64),
}

/// Material phase of a grid cell.
///
/// `Out` is the healthy bidomain tissue (the connected phase, superscript B in
/// the field names), `Int` the passive damaged inclusion (superscript D).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Out,
    Int,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    /// Inclusions sit strictly inside each cell.
    Disconnected,
    /// Both phases percolate (3D tube cross).
    Connected,
}

/// Shape of the inclusion inside the unit cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Inclusion {
    Empty,
    /// Axis-aligned box `[lo, hi]`; corners must be multiples of `1/n`.
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// Three axis-parallel tubes of square cross-section `width x width`,
    /// centred on the cell, each running through the whole cell.
    TubeCross { width: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    pub dim: usize,
    /// Grid cells per side of the unit cell.
    pub n: usize,
    pub topology: Topology,
    pub inclusion: Inclusion,
}

/// Uniform Cartesian grid on `(0,1)^dim`.
///
/// A periodic grid identifies opposite faces (unit-cell problems); a
/// non-periodic one owns its boundary nodes (macroscopic domain).
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub dim: usize,
    pub cells: usize,
    pub periodic: bool,
}

impl Grid {
    pub fn new(dim: usize, cells: usize, periodic: bool) -> Self {
        Self {
            dim,
            cells,
            periodic,
        }
    }

    pub fn h(&self) -> f64 {
        1.0 / self.cells as f64
    }

    pub fn num_cells(&self) -> usize {
        self.cells.pow(self.dim as u32)
    }

    pub fn nodes_per_side(&self) -> usize {
        if self.periodic {
            self.cells
        } else {
            self.cells + 1
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes_per_side().pow(self.dim as u32)
    }

    /// Number of element vertices, `2^dim`.
    pub fn nodes_per_cell(&self) -> usize {
        1 << self.dim
    }

    pub fn cell_coords(&self, cell: usize) -> [usize; 3] {
        let mut c = [0; 3];
        let mut r = cell;
        for slot in c.iter_mut().take(self.dim) {
            *slot = r % self.cells;
            r /= self.cells;
        }
        c
    }

    pub fn cell_index(&self, coords: [usize; 3]) -> usize {
        let mut idx = 0;
        for i in (0..self.dim).rev() {
            idx = idx * self.cells + coords[i];
        }
        idx
    }

    /// Node index for integer lattice coordinates, wrapping on periodic grids.
    pub fn node_index(&self, coords: [usize; 3]) -> usize {
        let m = self.nodes_per_side();
        let mut idx = 0;
        for i in (0..self.dim).rev() {
            let c = if self.periodic {
                coords[i] % self.cells
            } else {
                coords[i]
            };
            idx = idx * m + c;
        }
        idx
    }

    pub fn node_coords(&self, node: usize) -> [usize; 3] {
        let m = self.nodes_per_side();
        let mut c = [0; 3];
        let mut r = node;
        for slot in c.iter_mut().take(self.dim) {
            *slot = r % m;
            r /= m;
        }
        c
    }

    pub fn node_position(&self, node: usize) -> [f64; 3] {
        let c = self.node_coords(node);
        let h = self.h();
        let mut x = [0.0; 3];
        for i in 0..self.dim {
            x[i] = c[i] as f64 * h;
        }
        x
    }

    pub fn cell_center(&self, cell: usize) -> [f64; 3] {
        let c = self.cell_coords(cell);
        let h = self.h();
        let mut x = [0.0; 3];
        for i in 0..self.dim {
            x[i] = (c[i] as f64 + 0.5) * h;
        }
        x
    }

    /// Global nodes of a cell in local order: local vertex `a` sits at offset
    /// `(a >> i) & 1` along axis `i`. Only the first `2^dim` entries are used.
    pub fn cell_nodes(&self, cell: usize) -> [usize; 8] {
        let c = self.cell_coords(cell);
        let mut out = [0; 8];
        for (a, slot) in out.iter_mut().enumerate().take(self.nodes_per_cell()) {
            let mut nc = c;
            for (i, v) in nc.iter_mut().enumerate().take(self.dim) {
                *v += (a >> i) & 1;
            }
            *slot = self.node_index(nc);
        }
        out
    }

    /// Face neighbour of `cell` along `axis` in direction `dir` (+1 / -1).
    pub fn neighbor(&self, cell: usize, axis: usize, dir: i32) -> Option<usize> {
        let mut c = self.cell_coords(cell);
        if dir > 0 {
            if c[axis] + 1 == self.cells {
                if !self.periodic {
                    return None;
                }
                c[axis] = 0;
            } else {
                c[axis] += 1;
            }
        } else if c[axis] == 0 {
            if !self.periodic {
                return None;
            }
            c[axis] = self.cells - 1;
        } else {
            c[axis] -= 1;
        }
        Some(self.cell_index(c))
    }

    pub fn is_boundary_node(&self, node: usize) -> bool {
        if self.periodic {
            return false;
        }
        let c = self.node_coords(node);
        (0..self.dim).any(|i| c[i] == 0 || c[i] == self.cells)
    }
}

/// One grid face separating an inclusion cell from a healthy cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Facet {
    pub int_cell: usize,
    pub out_cell: usize,
    pub axis: usize,
    /// Unit normal pointing from the inclusion into the healthy phase.
    pub normal: [f64; 3],
    /// Length in 2D, area in 3D.
    pub area: f64,
    /// Face vertices; the first `2^(dim-1)` entries are used.
    pub nodes: [usize; 4],
}

impl Facet {
    pub fn num_nodes(&self, dim: usize) -> usize {
        1 << (dim - 1)
    }
}

/// Phase-labelled grid with its interface facets.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseMesh {
    pub grid: Grid,
    pub phases: Vec<Phase>,
    pub facets: Vec<Facet>,
}

impl PhaseMesh {
    pub fn new(grid: Grid, phases: Vec<Phase>) -> Self {
        let facets = enumerate_facets(&grid, &phases);
        Self {
            grid,
            phases,
            facets,
        }
    }

    pub fn dim(&self) -> usize {
        self.grid.dim
    }

    pub fn cell_volume(&self) -> f64 {
        self.grid.h().powi(self.grid.dim as i32)
    }

    pub fn count(&self, phase: Phase) -> usize {
        self.phases.iter().filter(|&&p| p == phase).count()
    }

    pub fn measure(&self, phase: Phase) -> f64 {
        self.count(phase) as f64 * self.cell_volume()
    }

    pub fn interface_measure(&self) -> f64 {
        self.facets.iter().map(|f| f.area).sum()
    }

    /// Nodal (lumped) interface weights: each facet hands `area / 2^(dim-1)`
    /// to each of its vertices.
    pub fn interface_node_weights(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.grid.num_nodes()];
        let k = 1 << (self.dim() - 1);
        for f in &self.facets {
            let share = f.area / k as f64;
            for &n in &f.nodes[..k] {
                w[n] += share;
            }
        }
        w
    }

    /// Number of face-connected components of `phase`.
    pub fn phase_components(&self, phase: Phase) -> usize {
        let n = self.phases.len();
        let mut seen = vec![false; n];
        let mut comps = 0;
        let mut stack = Vec::new();
        for start in 0..n {
            if seen[start] || self.phases[start] != phase {
                continue;
            }
            comps += 1;
            seen[start] = true;
            stack.push(start);
            while let Some(c) = stack.pop() {
                for axis in 0..self.dim() {
                    for dir in [-1, 1] {
                        if let Some(nb) = self.grid.neighbor(c, axis, dir) {
                            if !seen[nb] && self.phases[nb] == phase {
                                seen[nb] = true;
                                stack.push(nb);
                            }
                        }
                    }
                }
            }
        }
        comps
    }
}

fn enumerate_facets(grid: &Grid, phases: &[Phase]) -> Vec<Facet> {
    let dim = grid.dim;
    let area = grid.h().powi(dim as i32 - 1);
    let mut facets = Vec::new();
    for cell in 0..grid.num_cells() {
        if phases[cell] != Phase::Int {
            continue;
        }
        let cell_nodes = grid.cell_nodes(cell);
        for axis in 0..dim {
            for dir in [-1i32, 1] {
                let Some(nb) = grid.neighbor(cell, axis, dir) else {
                    continue;
                };
                if phases[nb] != Phase::Out {
                    continue;
                }
                let side = usize::from(dir > 0);
                let mut nodes = [0; 4];
                let mut k = 0;
                for (a, &node) in cell_nodes.iter().enumerate().take(grid.nodes_per_cell()) {
                    if (a >> axis) & 1 == side {
                        nodes[k] = node;
                        k += 1;
                    }
                }
                let mut normal = [0.0; 3];
                normal[axis] = f64::from(dir);
                facets.push(Facet {
                    int_cell: cell,
                    out_cell: nb,
                    axis,
                    normal,
                    area,
                    nodes,
                });
            }
        }
    }
    facets
}

/// Discretized periodic unit cell `Y`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellGeometry {
    pub spec: CellSpec,
    pub mesh: PhaseMesh,
}

impl CellGeometry {
    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    /// `|Y_int|`
    pub fn vol_int(&self) -> f64 {
        self.mesh.measure(Phase::Int)
    }

    /// `|Y_out|`
    pub fn vol_out(&self) -> f64 {
        self.mesh.measure(Phase::Out)
    }

    /// `|Γ|`
    pub fn interface_area(&self) -> f64 {
        self.mesh.interface_measure()
    }

    pub fn has_inclusion(&self) -> bool {
        self.mesh.count(Phase::Int) > 0
    }
}

fn check_aligned(x: f64, n: usize) -> Result<usize, GeometryError> {
    let s = x * n as f64;
    let r = s.round();
    if (s - r).abs() > ALIGN_TOL * n as f64 || r < 0.0 || r > n as f64 {
        return Err(GeometryError::NotGridAligned(x, n));
    }
    Ok(r as usize)
}

/// Build the phase-labelled periodic unit cell.
pub fn build_unit_cell(spec: &CellSpec) -> Result<CellGeometry, GeometryError> {
    let dim = spec.dim;
    if dim != 2 && dim != 3 {
        return Err(GeometryError::InvalidDim(dim));
    }
    if spec.n < 2 || !spec.n.is_power_of_two() {
        return Err(GeometryError::BadResolution(spec.n));
    }
    if spec.topology == Topology::Connected && dim != 3 {
        return Err(GeometryError::ConnectedIn2d);
    }
    let n = spec.n;
    let grid = Grid::new(dim, n, true);

    let is_int: Box<dyn Fn([usize; 3]) -> bool> = match (&spec.inclusion, spec.topology) {
        (Inclusion::Empty, Topology::Disconnected) => Box::new(|_| false),
        (Inclusion::Box { lo, hi }, Topology::Disconnected) => {
            if lo.len() != dim || hi.len() != dim {
                return Err(GeometryError::InvalidInclusion(format!(
                    "box corners must have {dim} coordinates"
                )));
            }
            let mut lo_i = [0; 3];
            let mut hi_i = [0; 3];
            for i in 0..dim {
                lo_i[i] = check_aligned(lo[i], n)?;
                hi_i[i] = check_aligned(hi[i], n)?;
                if lo_i[i] >= hi_i[i] {
                    return Err(GeometryError::InvalidInclusion(format!(
                        "box is empty along axis {i}"
                    )));
                }
                if lo_i[i] == 0 || hi_i[i] == n {
                    return Err(GeometryError::TouchesCellBoundary);
                }
            }
            Box::new(move |c| (0..dim).all(|i| c[i] >= lo_i[i] && c[i] < hi_i[i]))
        }
        (Inclusion::TubeCross { width }, Topology::Connected) => {
            let half = width / 2.0;
            if !(*width > 0.0 && *width < 1.0) {
                return Err(GeometryError::InvalidInclusion(format!(
                    "tube width {width} must lie in (0, 1)"
                )));
            }
            let lo = check_aligned(0.5 - half, n)?;
            let hi = check_aligned(0.5 + half, n)?;
            let inside = move |v: usize| v >= lo && v < hi;
            // A cell belongs to the tube along `axis` when its two transverse
            // coordinates fall inside the cross-section.
            Box::new(move |c| {
                (0..3).any(|axis| (0..3).filter(|&j| j != axis).all(|j| inside(c[j])))
            })
        }
        (inc, top) => {
            return Err(GeometryError::InvalidInclusion(format!(
                "{inc:?} is not available for {top:?} topology"
            )))
        }
    };

    let phases: Vec<Phase> = (0..grid.num_cells())
        .map(|c| {
            if is_int(grid.cell_coords(c)) {
                Phase::Int
            } else {
                Phase::Out
            }
        })
        .collect();
    let mesh = PhaseMesh::new(grid, phases);

    if mesh.count(Phase::Out) == 0 || mesh.phase_components(Phase::Out) != 1 {
        return Err(GeometryError::PhaseNotConnected(Phase::Out));
    }
    if spec.topology == Topology::Connected && mesh.phase_components(Phase::Int) != 1 {
        return Err(GeometryError::PhaseNotConnected(Phase::Int));
    }

    Ok(CellGeometry {
        spec: spec.clone(),
        mesh,
    })
}

/// Facet weights for interface quadrature: one weight (the facet measure) per
/// facet, in facet order. Exact for facet-wise constant integrands.
pub fn interface_quadrature(mesh: &PhaseMesh) -> Vec<f64> {
    mesh.facets.iter().map(|f| f.area).collect()
}

/// Convert `eps` to the number of cells per side, `1/eps`.
pub fn cells_per_side(eps: f64) -> Result<usize, GeometryError> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(GeometryError::BadEps(eps));
    }
    let k = (1.0 / eps).round();
    if ((1.0 / eps) - k).abs() > 1e-9 {
        return Err(GeometryError::BadEps(eps));
    }
    Ok(k as usize)
}

/// The ε-periodic structure on `Ω = (0,1)^dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainGeometry {
    pub cell: CellGeometry,
    /// Unit cells per side, `1/ε`.
    pub k: usize,
    /// Fine mesh with `k * n` grid cells per side and Dirichlet boundary.
    pub mesh: PhaseMesh,
    /// Whether each macro cell (row-major over the `k^dim` cells) carries an inclusion.
    pub macro_has_inclusion: Vec<bool>,
}

impl DomainGeometry {
    pub fn eps(&self) -> f64 {
        1.0 / self.k as f64
    }

    pub fn dim(&self) -> usize {
        self.cell.dim()
    }

    /// Macro cell (row-major index in the `k^dim` grid) containing a fine cell.
    pub fn macro_cell_of(&self, fine_cell: usize) -> usize {
        let n = self.cell.spec.n;
        let c = self.mesh.grid.cell_coords(fine_cell);
        let mut m = [0; 3];
        for i in 0..self.dim() {
            m[i] = c[i] / n;
        }
        Grid::new(self.dim(), self.k, false).cell_index(m)
    }

    /// Unit-cell grid cell (row-major in `Y`) that a fine cell is a copy of.
    pub fn local_cell_of(&self, fine_cell: usize) -> usize {
        let n = self.cell.spec.n;
        let c = self.mesh.grid.cell_coords(fine_cell);
        let mut l = [0; 3];
        for i in 0..self.dim() {
            l[i] = c[i] % n;
        }
        self.cell.mesh.grid.cell_index(l)
    }

    pub fn num_macro_cells(&self) -> usize {
        self.k.pow(self.dim() as u32)
    }
}

/// Tile the unit cell `k` times per axis over the unit box.
///
/// With disconnected inclusions, macro cells touching `∂Ω` are left as pure
/// healthy tissue.
pub fn tile_domain(cell: &CellGeometry, k: usize) -> Result<DomainGeometry, GeometryError> {
    let dim = cell.dim();
    let topology = cell.spec.topology;
    if k == 0 {
        return Err(GeometryError::BadEps(f64::INFINITY));
    }
    if topology == Topology::Disconnected && k < 3 {
        return Err(GeometryError::NoInteriorCells(k));
    }
    let n = cell.spec.n;
    let grid = Grid::new(dim, k * n, false);
    let macro_grid = Grid::new(dim, k, false);
    let macro_has_inclusion: Vec<bool> = (0..macro_grid.num_cells())
        .map(|m| {
            if !cell.has_inclusion() {
                return false;
            }
            match topology {
                Topology::Connected => true,
                Topology::Disconnected => {
                    let c = macro_grid.cell_coords(m);
                    (0..dim).all(|i| c[i] > 0 && c[i] + 1 < k)
                }
            }
        })
        .collect();

    let phases: Vec<Phase> = (0..grid.num_cells())
        .map(|fc| {
            let c = grid.cell_coords(fc);
            let mut mc = [0; 3];
            let mut lc = [0; 3];
            for i in 0..dim {
                mc[i] = c[i] / n;
                lc[i] = c[i] % n;
            }
            if macro_has_inclusion[macro_grid.cell_index(mc)] {
                cell.mesh.phases[cell.mesh.grid.cell_index(lc)]
            } else {
                Phase::Out
            }
        })
        .collect();

    Ok(DomainGeometry {
        cell: cell.clone(),
        k,
        mesh: PhaseMesh::new(grid, phases),
        macro_has_inclusion,
    })
}
