//! The homogenized single-scale systems on `Ω = (0,1)^dim`.
//!
//! All variants share the scheme of the micro solver: exact gating for
//! frozen `v`, explicit ionic current, backward Euler on `v` and on the
//! interface relaxation, quasi-static potentials. Fields are nodal Q1 on a
//! uniform grid with homogeneous Dirichlet data.

mod convolution;

use log::debug;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use convolution::KernelConvolution;

use crate::cell_problems::{EffectiveTensors, InterfaceParams, KernelTable};
use crate::expr::{Expr, Vars};
use crate::fem::{
    assemble_stiffness, lumped_mass, DofLayout, DofMap, FemError, PreparedSystem, Region, SolveOptions,
    SparseOperator, Tensor, TripletBuilder,
};
use crate::geometry::{Grid, Phase, PhaseMesh, Topology};
use crate::ionics::IonicModel;
use crate::micro_solver::step_count;
use crate::problem::ProblemData;

/// `‖A2_D‖_∞` below this counts as zero when checking the topology.
const A2D_ZERO: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum MacroError {
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error("the memory system needs a kernel table")]
    MissingKernel,
    #[error("topology/tensor mismatch: {0}")]
    TopologyMismatch(String),
    #[error("invalid data: {0}")]
    Data(String),
}

/// Which limit system to solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MacroVariant {
    /// `ℓ = 1`: bidomain with the memory convolution.
    Memory,
    /// `−1 < ℓ < 1`: bidomain with `Ã2 = A2_B + A2_D`.
    Mid,
    /// `ℓ = −1`, both phases connected: three coupled potentials.
    TridomainConnected,
    /// `ℓ = −1`, disconnected inclusions: the jump relaxes pointwise.
    TridomainDisconnected,
}

/// `∫_Y σ ∇T(s1)(t_k)` on the kernel grid, for the source `𝓕`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellFlux {
    pub values: Vec<[f64; 3]>,
    pub dt: f64,
    pub vol_out: f64,
}

impl CellFlux {
    fn at(&self, t: f64) -> [f64; 3] {
        let s = t / self.dt;
        let k = s.floor() as usize;
        if k + 1 >= self.values.len() {
            return if k + 1 == self.values.len() && (s - k as f64) < 1e-12 {
                self.values[k]
            } else {
                [0.0; 3]
            };
        }
        let th = s - k as f64;
        let mut g = [0.0; 3];
        for i in 0..3 {
            g[i] = (1.0 - th) * self.values[k][i] + th * self.values[k + 1][i];
        }
        g
    }
}

/// Constant effective coefficients entering one limit system.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroCoefficients {
    pub dim: usize,
    pub a1: Tensor,
    /// Tensor of the `u` (or `u^B`) equation: `A2`, `A2_B + A2_D` or `A2_B`.
    pub a2: Tensor,
    /// `A2_D` (tridomain only).
    pub a2_d: Tensor,
    pub kernel: Option<KernelTable>,
    pub cellflux: Option<CellFlux>,
    /// `|Γ| / |Y_out|`
    pub gamma_ratio: f64,
}

pub fn tensor_of(m: &DMatrix<f64>) -> Tensor {
    let mut t = Tensor::zeros();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            t[(i, j)] = m[(i, j)];
        }
    }
    t
}

fn symmetrized(m: &DMatrix<f64>) -> Tensor {
    tensor_of(&((m + m.transpose()) * 0.5))
}

impl MacroCoefficients {
    /// Pick the tensors a variant needs from computed effective tensors.
    pub fn from_effective(t: &EffectiveTensors, variant: MacroVariant) -> Result<Self, MacroError> {
        let a2 = match variant {
            MacroVariant::Memory => {
                if t.kernel.is_none() {
                    return Err(MacroError::MissingKernel);
                }
                symmetrized(&t.a2)
            }
            MacroVariant::Mid => symmetrized(&t.a2_tilde()),
            MacroVariant::TridomainConnected | MacroVariant::TridomainDisconnected => symmetrized(&t.a2_b),
        };
        let cellflux = match variant {
            MacroVariant::Memory => t.f_cellflux.as_ref().map(|v| CellFlux {
                values: v.clone(),
                dt: t.meta.dt_kernel,
                vol_out: t.meta.vol_out,
            }),
            _ => None,
        };
        Ok(Self {
            dim: t.dim,
            a1: symmetrized(&t.a1),
            a2,
            a2_d: symmetrized(&t.a2_d),
            kernel: (variant == MacroVariant::Memory).then(|| t.kernel.clone()).flatten(),
            cellflux,
            gamma_ratio: t.meta.interface_area / t.meta.vol_out,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MacroOptions {
    /// Grid cells per side.
    pub n: usize,
    pub dt: f64,
    pub tol: f64,
}

impl MacroOptions {
    pub fn new(n: usize, dt: f64) -> Self {
        Self { n, dt, tol: 1e-10 }
    }
}

/// Nodal macroscopic fields on the interior nodes. For the bidomain
/// variants `u_b == u_d` holds the single potential `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroState {
    pub t: f64,
    pub step: usize,
    pub v: Vec<f64>,
    pub u_b: Vec<f64>,
    pub u_d: Vec<f64>,
    pub w: Vec<f64>,
}

impl MacroState {
    /// `[u] = u^B − u^D`
    pub fn jump(&self) -> Vec<f64> {
        self.u_b.iter().zip(&self.u_d).map(|(a, b)| a - b).collect()
    }
}

/// `(v, u) ↦ (u^B, u^D) = (v + u, u)`, the change of unknowns back to the
/// healthy-phase potentials.
pub fn relabel_bidomain(v: &[f64], u: &[f64]) -> (Vec<f64>, Vec<f64>) {
    (v.iter().zip(u).map(|(a, b)| a + b).collect(), u.to_vec())
}

/// `(v, u^B, u^D) ↦ (u^B_1, u^B_2, u^D) = (v + u^B, u^B, u^D)`.
pub fn relabel_tridomain(v: &[f64], u_b: &[f64], u_d: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    (v.iter().zip(u_b).map(|(a, b)| a + b).collect(), u_b.to_vec(), u_d.to_vec())
}

/// Q1 basis gradients at the `2^dim` Gauss points of a cell.
#[derive(Debug, Clone)]
struct GaussQ1 {
    npts: usize,
    nv: usize,
    weight: f64,
    grads: Vec<[[f64; 3]; 8]>,
}

impl GaussQ1 {
    fn new(dim: usize, h: f64) -> Self {
        let g = GAUSS_1D;
        let npts = 1 << dim;
        let nv = 1 << dim;
        let grads = (0..npts)
            .map(|q| {
                let mut gr = [[0.0; 3]; 8];
                for a in 0..nv {
                    for i in 0..dim {
                        let mut v = if (a >> i) & 1 == 1 { 1.0 / h } else { -1.0 / h };
                        for k in 0..dim {
                            if k == i {
                                continue;
                            }
                            let xi = g[(q >> k) & 1];
                            v *= if (a >> k) & 1 == 1 { xi } else { 1.0 - xi };
                        }
                        gr[a][i] = v;
                    }
                }
                gr
            })
            .collect();
        Self {
            npts,
            nv,
            weight: h.powi(dim as i32) / npts as f64,
            grads,
        }
    }
}

const GAUSS_1D: [f64; 2] = [0.211_324_865_405_187_1, 0.788_675_134_594_812_9];

/// Physical Gauss points, cell-major in the order used by [`GaussQ1`].
fn gauss_points(grid: &Grid) -> Vec<[f64; 3]> {
    let h = grid.h();
    let npts = 1 << grid.dim;
    let mut out = Vec::with_capacity(grid.num_cells() * npts);
    for c in 0..grid.num_cells() {
        let cc = grid.cell_coords(c);
        for q in 0..npts {
            let mut x = [0.0; 3];
            for i in 0..grid.dim {
                x[i] = h * (cc[i] as f64 + GAUSS_1D[(q >> i) & 1]);
            }
            out.push(x);
        }
    }
    out
}

/// The operators of one macro system, exposed for residual checks.
#[derive(Debug, Clone)]
pub struct MacroOperators {
    /// Lumped mass on the interior nodes.
    pub mass: Vec<f64>,
    pub k1: SparseOperator,
    pub k2: SparseOperator,
    pub k2_d: SparseOperator,
}

pub struct MacroSolver {
    variant: MacroVariant,
    coeffs: MacroCoefficients,
    iface: InterfaceParams,
    ionic: IonicModel,
    data: ProblemData,
    opts: MacroOptions,
    mesh: PhaseMesh,
    map: DofMap,
    ops: MacroOperators,
    system: PreparedSystem,
    init_sys: PreparedSystem,
    gauss: GaussQ1,
    s1_gauss: Vec<f64>,
}

fn uniform_field(mesh: &PhaseMesh, t: Tensor) -> Vec<Option<Tensor>> {
    vec![Some(t); mesh.phases.len()]
}

impl MacroSolver {
    pub fn new(
        variant: MacroVariant,
        coeffs: MacroCoefficients,
        iface: &InterfaceParams,
        ionic: &IonicModel,
        data: &ProblemData,
        opts: MacroOptions,
    ) -> Result<Self, MacroError> {
        data.validate().map_err(MacroError::Data)?;
        if !(opts.dt > 0.0) || opts.n < 2 {
            return Err(MacroError::Data(format!("need dt > 0 and n ≥ 2, got dt = {}, n = {}", opts.dt, opts.n)));
        }
        if variant == MacroVariant::Memory && coeffs.kernel.is_none() {
            return Err(MacroError::MissingKernel);
        }
        let a2d_norm = coeffs.a2_d.amax();
        match variant {
            MacroVariant::TridomainDisconnected if a2d_norm > A2D_ZERO => {
                return Err(MacroError::TopologyMismatch(format!(
                    "disconnected inclusions need A2_D = 0, got ‖A2_D‖ = {a2d_norm:e}"
                )))
            }
            MacroVariant::TridomainConnected if a2d_norm <= A2D_ZERO => {
                return Err(MacroError::TopologyMismatch(
                    "connected inclusions need a nonzero A2_D".into(),
                ))
            }
            _ => {}
        }
        let dim = coeffs.dim;
        let grid = Grid::new(dim, opts.n, false);
        let mesh = PhaseMesh::new(grid, vec![Phase::Out; opts.n.pow(dim as u32)]);
        let map = DofMap::new(&mesh, DofLayout::Phase(Phase::Out));
        let mass = lumped_mass(&mesh, &map, Region::Out);
        let k1 = assemble_stiffness(&mesh, &map, &uniform_field(&mesh, coeffs.a1))?;
        let k2 = assemble_stiffness(&mesh, &map, &uniform_field(&mesh, coeffs.a2))?;
        let k2_d = assemble_stiffness(&mesh, &map, &uniform_field(&mesh, coeffs.a2_d))?;
        let n = map.len();
        let dt = opts.dt;
        let sopts = SolveOptions::with_tol(opts.tol);

        let system = match variant {
            MacroVariant::TridomainConnected => {
                let c = coeffs.gamma_ratio * (iface.alpha / dt + iface.beta);
                let mut tb = TripletBuilder::new(3 * n);
                tb.push_operator(&k1, 0, 0, 1.0);
                tb.push_operator(&k1, 0, n, 1.0);
                tb.push_operator(&k1, n, 0, 1.0);
                tb.push_operator(&k1, n, n, 1.0);
                tb.push_operator(&k2, n, n, 1.0);
                tb.push_operator(&k2_d, 2 * n, 2 * n, 1.0);
                for (i, m) in mass.iter().enumerate() {
                    tb.push(i, i, m / dt);
                    tb.push(n + i, n + i, c * m);
                    tb.push(2 * n + i, 2 * n + i, c * m);
                    tb.push(n + i, 2 * n + i, -c * m);
                    tb.push(2 * n + i, n + i, -c * m);
                }
                tb.build(true)
            }
            _ => {
                let mut tb = TripletBuilder::new(2 * n);
                tb.push_operator(&k1, 0, 0, 1.0);
                tb.push_operator(&k1, 0, n, 1.0);
                tb.push_operator(&k1, n, 0, 1.0);
                tb.push_operator(&k1, n, n, 1.0);
                tb.push_operator(&k2, n, n, 1.0);
                if let (MacroVariant::Memory, Some(kt)) = (variant, &coeffs.kernel) {
                    let b0 = symmetrized(&kt.values[0]);
                    let kb = assemble_stiffness(&mesh, &map, &uniform_field(&mesh, b0))?;
                    tb.push_operator(&kb, n, n, 0.5 * dt);
                }
                for (i, m) in mass.iter().enumerate() {
                    tb.push(i, i, m / dt);
                }
                tb.build(true)
            }
        };
        let init_op = match variant {
            MacroVariant::TridomainConnected => k1.add_scaled(&k2, 1.0).add_scaled(&k2_d, 1.0),
            _ => k1.add_scaled(&k2, 1.0),
        };
        let gauss = GaussQ1::new(dim, mesh.grid.h());
        let s1_gauss = if coeffs.cellflux.is_some() {
            gauss_points(&mesh.grid)
                .iter()
                .map(|x| data.s1.eval(&Vars::at(x, 0.0)))
                .collect()
        } else {
            Vec::new()
        };
        Ok(Self {
            variant,
            coeffs,
            iface: *iface,
            ionic: ionic.clone(),
            data: data.clone(),
            opts,
            mesh,
            map,
            ops: MacroOperators { mass, k1, k2, k2_d },
            system: PreparedSystem::new(system, sopts),
            init_sys: PreparedSystem::new(init_op, sopts),
            gauss,
            s1_gauss,
        })
    }

    /// Build from effective tensors for the given variant.
    pub fn from_effective(
        variant: MacroVariant,
        tensors: &EffectiveTensors,
        iface: &InterfaceParams,
        ionic: &IonicModel,
        data: &ProblemData,
        opts: MacroOptions,
    ) -> Result<Self, MacroError> {
        Self::new(
            variant,
            MacroCoefficients::from_effective(tensors, variant)?,
            iface,
            ionic,
            data,
            opts,
        )
    }

    pub fn variant(&self) -> MacroVariant {
        self.variant
    }

    pub fn mesh(&self) -> &PhaseMesh {
        &self.mesh
    }

    pub fn map(&self) -> &DofMap {
        &self.map
    }

    pub fn operators(&self) -> &MacroOperators {
        &self.ops
    }

    pub fn options(&self) -> &MacroOptions {
        &self.opts
    }

    fn eval(&self, e: &Expr, t: f64) -> Vec<f64> {
        let grid = &self.mesh.grid;
        (0..self.map.len())
            .map(|i| e.eval(&Vars::at(&grid.node_position(self.map.node_of(i)), t)))
            .collect()
    }

    /// `M (f1 − f2)` plus the weak form of `𝓕` at time `t`.
    fn u_load(&self, t: f64) -> Vec<f64> {
        let f1 = self.eval(&self.data.f1, t);
        let f2 = self.eval(&self.data.f2, t);
        let mut b: Vec<f64> = (0..self.map.len())
            .map(|i| self.ops.mass[i] * (f1[i] - f2[i]))
            .collect();
        if let Some(cf) = &self.coeffs.cellflux {
            // 𝓕 = (1/|Y_out|) Div(s̄1(x) G(t)) with G the cell flux of the
            // unit-jump evolution; tested against φ this is −(1/|Y_out|) ∫ s̄1 G·∇φ.
            let g = cf.at(t);
            let q: Vec<[f64; 3]> = self
                .s1_gauss
                .iter()
                .map(|s| [s * g[0], s * g[1], s * g[2]])
                .collect();
            for (bi, li) in b.iter_mut().zip(self.flux_load(&q)) {
                *bi -= li / cf.vol_out;
            }
        }
        b
    }

    /// `∇u` at every Gauss point, cell-major.
    fn gauss_gradients(&self, u: &[f64]) -> Vec<[f64; 3]> {
        let g = &self.gauss;
        let dim = self.coeffs.dim;
        let mut out = Vec::with_capacity(self.mesh.phases.len() * g.npts);
        for cell in 0..self.mesh.phases.len() {
            let nodes = self.mesh.grid.cell_nodes(cell);
            let vals: Vec<f64> = (0..g.nv).map(|a| self.map.value(u, nodes[a], Phase::Out)).collect();
            for q in 0..g.npts {
                let mut gr = [0.0; 3];
                for (a, va) in vals.iter().enumerate() {
                    for i in 0..dim {
                        gr[i] += va * g.grads[q][a][i];
                    }
                }
                out.push(gr);
            }
        }
        out
    }

    /// Load `∫ q · ∇φ_a` of a vector field sampled at the Gauss points.
    fn flux_load(&self, q: &[[f64; 3]]) -> Vec<f64> {
        let g = &self.gauss;
        let dim = self.coeffs.dim;
        let mut b = vec![0.0; self.map.len()];
        for cell in 0..self.mesh.phases.len() {
            let nodes = self.mesh.grid.cell_nodes(cell);
            for a in 0..g.nv {
                let Some(r) = self.map.b(nodes[a]) else { continue };
                let mut s = 0.0;
                for p in 0..g.npts {
                    let qp = &q[cell * g.npts + p];
                    for i in 0..dim {
                        s += qp[i] * g.grads[p][a][i];
                    }
                }
                b[r] += g.weight * s;
            }
        }
        b
    }

    fn initial_jump(&self) -> Vec<f64> {
        match self.variant {
            MacroVariant::TridomainConnected | MacroVariant::TridomainDisconnected => self.eval(&self.data.s1, 0.0),
            _ => vec![0.0; self.map.len()],
        }
    }

    /// `v = v0`, `w = w_in`, `[u](0) = s̄1` (tridomain) and the potentials
    /// from the quasi-static equations at `t = 0`.
    pub fn init(&self) -> Result<MacroState, MacroError> {
        let v = self.eval(&self.data.v0, 0.0);
        let w = self.eval(&self.data.w_in, 0.0);
        if let Some(x) = w.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(MacroError::Data(format!("initial gating value {x} outside [0, 1]")));
        }
        let s = self.initial_jump();
        let mut r = self.u_load(0.0);
        let k1v = self.ops.k1.matvec(&v);
        for i in 0..r.len() {
            r[i] -= k1v[i];
        }
        if self.variant == MacroVariant::TridomainConnected {
            let ks = self.ops.k2_d.matvec(&s);
            for i in 0..r.len() {
                r[i] += ks[i];
            }
        }
        let (u_b, _) = self.init_sys.solve(&r, None)?;
        let u_d = u_b.iter().zip(&s).map(|(a, b)| a - b).collect();
        Ok(MacroState {
            t: 0.0,
            step: 0,
            v,
            u_b,
            u_d,
            w,
        })
    }

    fn step_with(&self, s: &MacroState, history: Option<&[f64]>) -> Result<MacroState, MacroError> {
        let dt = self.opts.dt;
        let t = s.t + dt;
        let n = self.map.len();
        let w = self.ionic.step_gating(&s.w, &s.v, dt);
        let f1 = self.eval(&self.data.f1, t);
        let m = &self.ops.mass;
        let mut rhs: Vec<f64> = (0..n)
            .map(|i| m[i] * (s.v[i] / dt + f1[i] - self.ionic.ionic_current(s.v[i], w[i])))
            .collect();
        let mut ru = self.u_load(t);
        if let Some(h) = history {
            for i in 0..n {
                ru[i] -= h[i];
            }
        }
        let jump0 = s.jump();
        let (v, u_b, u_d) = match self.variant {
            MacroVariant::TridomainConnected => {
                let a = self.coeffs.gamma_ratio * self.iface.alpha / dt;
                for i in 0..n {
                    ru[i] += a * m[i] * jump0[i];
                }
                rhs.extend(ru);
                rhs.extend((0..n).map(|i| -a * m[i] * jump0[i]));
                let mut guess = s.v.clone();
                guess.extend_from_slice(&s.u_b);
                guess.extend_from_slice(&s.u_d);
                let (x, rep) = self.system.solve(&rhs, Some(&guess))?;
                debug!("macro step {}: {} iterations", s.step + 1, rep.iterations);
                (x[..n].to_vec(), x[n..2 * n].to_vec(), x[2 * n..].to_vec())
            }
            _ => {
                rhs.extend(ru);
                let mut guess = s.v.clone();
                guess.extend_from_slice(&s.u_b);
                let (x, rep) = self.system.solve(&rhs, Some(&guess))?;
                debug!("macro step {}: {} iterations", s.step + 1, rep.iterations);
                let v = x[..n].to_vec();
                let u_b = x[n..].to_vec();
                let u_d = if self.variant == MacroVariant::TridomainDisconnected {
                    let decay = self.iface.alpha / (self.iface.alpha + self.iface.beta * dt);
                    u_b.iter().zip(&jump0).map(|(u, j)| u - decay * j).collect()
                } else {
                    u_b.clone()
                };
                (v, u_b, u_d)
            }
        };
        Ok(MacroState {
            t,
            step: s.step + 1,
            v,
            u_b,
            u_d,
            w,
        })
    }

    /// One step without memory history (exact for every variant but `Memory`).
    pub fn step(&self, s: &MacroState) -> Result<MacroState, MacroError> {
        self.step_with(s, None)
    }

    /// Rows `(node, x, field, value)` over the interior nodes.
    pub fn node_rows(&self, s: &MacroState) -> Vec<(usize, [f64; 3], &'static str, f64)> {
        let grid = &self.mesh.grid;
        let fields: Vec<(&'static str, Vec<f64>)> = match self.variant {
            MacroVariant::Memory | MacroVariant::Mid => {
                vec![("v", s.v.clone()), ("u", s.u_b.clone()), ("w", s.w.clone())]
            }
            _ => vec![
                ("v", s.v.clone()),
                ("u_B", s.u_b.clone()),
                ("u_D", s.u_d.clone()),
                ("jump", s.jump()),
                ("w", s.w.clone()),
            ],
        };
        let mut rows = Vec::new();
        for i in 0..self.map.len() {
            let node = self.map.node_of(i);
            for (name, f) in &fields {
                rows.push((node, grid.node_position(node), *name, f[i]));
            }
        }
        rows
    }
}

/// Result of a macro run.
#[derive(Debug, Clone)]
pub struct MacroRun {
    pub samples: Vec<MacroState>,
    pub last: MacroState,
    pub steps: usize,
    /// Whether the convolution reached past the kernel horizon.
    pub kernel_truncated: bool,
}

/// Run a macro system to the data horizon. `observe` sees every state.
pub fn run_macro(
    solver: &MacroSolver,
    sample_times: &[f64],
    mut observe: impl FnMut(&MacroState),
) -> Result<MacroRun, MacroError> {
    let dt = solver.opts.dt;
    let steps = step_count(solver.data.horizon, dt).map_err(MacroError::Data)?;
    let mut conv = solver
        .coeffs
        .kernel
        .as_ref()
        .filter(|_| solver.variant == MacroVariant::Memory)
        .map(|k| KernelConvolution::new(k.clone(), dt));
    let mut state = solver.init()?;
    let mut samples = Vec::new();
    let mut next = 0;
    let mut record = |s: &MacroState, samples: &mut Vec<MacroState>| {
        while next < sample_times.len() && sample_times[next] <= s.t + 0.5 * dt {
            samples.push(s.clone());
            next += 1;
        }
    };
    observe(&state);
    record(&state, &mut samples);
    for _ in 0..steps {
        let history = match conv.as_mut() {
            Some(c) => {
                c.push(solver.gauss_gradients(&state.u_b));
                Some(solver.flux_load(&c.history_term()))
            }
            None => None,
        };
        state = solver.step_with(&state, history.as_deref())?;
        observe(&state);
        record(&state, &mut samples);
    }
    Ok(MacroRun {
        samples,
        last: state,
        steps,
        kernel_truncated: conv.is_some_and(|c| c.truncated()),
    })
}

/// `ℓ = 1` memory bidomain.
pub fn run_macro_ell1(
    tensors: &EffectiveTensors,
    iface: &InterfaceParams,
    ionic: &IonicModel,
    data: &ProblemData,
    opts: MacroOptions,
) -> Result<MacroRun, MacroError> {
    let s = MacroSolver::from_effective(MacroVariant::Memory, tensors, iface, ionic, data, opts)?;
    run_macro(&s, &[], |_| {})
}

/// `−1 < ℓ < 1` bidomain with `Ã2`.
pub fn run_macro_mid(
    tensors: &EffectiveTensors,
    iface: &InterfaceParams,
    ionic: &IonicModel,
    data: &ProblemData,
    opts: MacroOptions,
) -> Result<MacroRun, MacroError> {
    let s = MacroSolver::from_effective(MacroVariant::Mid, tensors, iface, ionic, data, opts)?;
    run_macro(&s, &[], |_| {})
}

/// `ℓ = −1` tridomain system for the given topology.
pub fn run_macro_minus1(
    tensors: &EffectiveTensors,
    iface: &InterfaceParams,
    topology: Topology,
    ionic: &IonicModel,
    data: &ProblemData,
    opts: MacroOptions,
) -> Result<MacroRun, MacroError> {
    let variant = match topology {
        Topology::Connected => MacroVariant::TridomainConnected,
        Topology::Disconnected => MacroVariant::TridomainDisconnected,
    };
    let s = MacroSolver::from_effective(variant, tensors, iface, ionic, data, opts)?;
    run_macro(&s, &[], |_| {})
}
