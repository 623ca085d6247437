use crate::geometry::{Phase, PhaseMesh};

/// Which unknowns a [`DofMap`] carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DofLayout {
    /// One unknown per node touching the given phase (phase-restricted field).
    Phase(Phase),
    /// One unknown per node, continuous across Γ.
    Continuous,
    /// Nodes on Γ carry two unknowns: the B-side (`Out`) and D-side (`Int`) traces.
    Doubled,
}

/// Node-to-unknown numbering on a [`PhaseMesh`].
///
/// Periodicity is built into the grid node numbering. On a non-periodic grid
/// the boundary nodes are homogeneous Dirichlet and get no unknown at all.
/// Unknowns are numbered by ascending node, B trace before D trace.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    pub layout: DofLayout,
    b: Vec<Option<usize>>,
    d: Vec<Option<usize>>,
    /// Node owning each unknown.
    node_of: Vec<usize>,
    /// Side of each unknown.
    side_of: Vec<Phase>,
}

/// Which phases touch each node: `(touches Out, touches Int)`.
pub fn node_phase_touch(mesh: &PhaseMesh) -> Vec<(bool, bool)> {
    let grid = &mesh.grid;
    let mut t = vec![(false, false); grid.num_nodes()];
    let nv = grid.nodes_per_cell();
    for cell in 0..grid.num_cells() {
        let nodes = grid.cell_nodes(cell);
        for &n in &nodes[..nv] {
            match mesh.phases[cell] {
                Phase::Out => t[n].0 = true,
                Phase::Int => t[n].1 = true,
            }
        }
    }
    t
}

impl DofMap {
    pub fn new(mesh: &PhaseMesh, layout: DofLayout) -> Self {
        let touch = node_phase_touch(mesh);
        let nn = mesh.grid.num_nodes();
        let mut b = vec![None; nn];
        let mut d = vec![None; nn];
        let mut node_of = Vec::new();
        let mut side_of = Vec::new();
        for node in 0..nn {
            if mesh.grid.is_boundary_node(node) {
                continue;
            }
            let (to, ti) = touch[node];
            let mut add = |slot: &mut Option<usize>, side: Phase| {
                *slot = Some(node_of.len());
                node_of.push(node);
                side_of.push(side);
            };
            match layout {
                DofLayout::Phase(Phase::Out) => {
                    if to {
                        add(&mut b[node], Phase::Out);
                    }
                }
                DofLayout::Phase(Phase::Int) => {
                    if ti {
                        add(&mut d[node], Phase::Int);
                    }
                }
                DofLayout::Continuous => {
                    let side = if to { Phase::Out } else { Phase::Int };
                    add(&mut b[node], side);
                    d[node] = b[node];
                }
                DofLayout::Doubled => {
                    if to {
                        add(&mut b[node], Phase::Out);
                    }
                    if ti {
                        add(&mut d[node], Phase::Int);
                    }
                }
            }
        }
        Self {
            layout,
            b,
            d,
            node_of,
            side_of,
        }
    }

    pub fn len(&self) -> usize {
        self.node_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_of.is_empty()
    }

    pub fn num_nodes(&self) -> usize {
        self.b.len()
    }

    /// Unknown seen from a cell of `phase` at `node`, if any.
    pub fn dof(&self, node: usize, phase: Phase) -> Option<usize> {
        match phase {
            Phase::Out => self.b[node],
            Phase::Int => self.d[node],
        }
    }

    pub fn b(&self, node: usize) -> Option<usize> {
        self.b[node]
    }

    pub fn d(&self, node: usize) -> Option<usize> {
        self.d[node]
    }

    pub fn node_of(&self, dof: usize) -> usize {
        self.node_of[dof]
    }

    pub fn side_of(&self, dof: usize) -> Phase {
        self.side_of[dof]
    }

    /// Value of `x` at `node` seen from `phase`; zero for Dirichlet/absent nodes.
    pub fn value(&self, x: &[f64], node: usize, phase: Phase) -> f64 {
        self.dof(node, phase).map_or(0.0, |i| x[i])
    }

    /// `x_B - x_D` at `node`.
    pub fn jump(&self, x: &[f64], node: usize) -> f64 {
        self.value(x, node, Phase::Out) - self.value(x, node, Phase::Int)
    }

    /// Whether `node` carries two distinct unknowns.
    pub fn is_doubled(&self, node: usize) -> bool {
        matches!((self.b[node], self.d[node]), (Some(i), Some(j)) if i != j)
    }
}
