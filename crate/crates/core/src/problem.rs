//! Sources, initial data and interface data shared by the micro and macro solvers.

use serde::{Deserialize, Serialize};

use crate::expr::{Expr, Vars};
use crate::geometry::Grid;

/// Closed-form problem data. Spatial variables are `x1..x3`, time is `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemData {
    /// Intracellular stimulus.
    pub f1: Expr,
    /// Extracellular stimulus.
    pub f2: Expr,
    /// Initial transmembrane potential.
    pub v0: Expr,
    /// Initial gating value, must lie in `[0, 1]`.
    pub w_in: Expr,
    /// Initial interface jump of the ε-problem.
    pub s0: Expr,
    /// Multiply `s0` by `ε^((ℓ+1)/2)`, which keeps `ε^(−ℓ) ∫_Γε s0²` bounded.
    pub s0_scaled: bool,
    /// Declared constant `C` in `ε^(−ℓ) ∫_Γε s0² ≤ C`.
    pub s0_bound: f64,
    /// Interface datum of the limit problems (`x`-dependent, constant in `y`).
    pub s1: Expr,
    /// Final time `T`.
    pub horizon: f64,
}

impl Default for ProblemData {
    fn default() -> Self {
        let zero = Expr::constant(0.0);
        Self {
            f1: zero.clone(),
            f2: zero.clone(),
            v0: zero.clone(),
            w_in: Expr::constant(0.5),
            s0: zero.clone(),
            s0_scaled: false,
            s0_bound: 10.0,
            s1: zero,
            horizon: 1.0,
        }
    }
}

impl ProblemData {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(format!("horizon must be positive, got {}", self.horizon));
        }
        if !(self.s0_bound >= 0.0) {
            return Err(format!("s0_bound must be nonnegative, got {}", self.s0_bound));
        }
        Ok(())
    }

    /// Multiplier applied to `s0` at scale `eps`.
    pub fn s0_factor(&self, eps: f64, ell: f64) -> f64 {
        if self.s0_scaled {
            eps.powf(0.5 * (ell + 1.0))
        } else {
            1.0
        }
    }

    /// Data norm `‖f1‖² + ‖f2‖²` over `Ω × (0,T)` plus `‖v0‖²` over Ω, with
    /// lumped nodal quadrature on `grid` and the rectangle rule on `dt`.
    pub fn source_norms(&self, grid: &Grid, dt: f64) -> f64 {
        let w = nodal_weights(grid);
        let steps = (self.horizon / dt).round() as usize;
        let mut s = 0.0;
        for n in 1..=steps {
            let t = n as f64 * dt;
            for (node, &wn) in w.iter().enumerate() {
                let x = grid.node_position(node);
                let v = Vars::at(&x, t);
                s += dt * wn * (self.f1.eval(&v).powi(2) + self.f2.eval(&v).powi(2));
            }
        }
        for (node, &wn) in w.iter().enumerate() {
            let x = grid.node_position(node);
            s += wn * self.v0.eval(&Vars::at(&x, 0.0)).powi(2);
        }
        s
    }
}

/// Evaluate `e` at the listed nodes of `grid` at time `t`.
pub fn eval_at_nodes(e: &Expr, grid: &Grid, nodes: impl Iterator<Item = usize>, t: f64) -> Vec<f64> {
    nodes.map(|n| e.eval(&Vars::at(&grid.node_position(n), t))).collect()
}

/// Lumped (trapezoidal) quadrature weights of all grid nodes over the unit box.
pub fn nodal_weights(grid: &Grid) -> Vec<f64> {
    let nv = grid.nodes_per_cell();
    let share = grid.h().powi(grid.dim as i32) / nv as f64;
    let mut w = vec![0.0; grid.num_nodes()];
    for c in 0..grid.num_cells() {
        for &n in &grid.cell_nodes(c)[..nv] {
            w[n] += share;
        }
    }
    w
}
