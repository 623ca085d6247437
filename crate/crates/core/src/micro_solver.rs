//! Time stepping of the ε-problem: transmembrane potential `v` on the healthy
//! phase, potential `u` on both phases with doubled unknowns on Γ_ε, gating `w`.
//!
//! Each step advances the gating exactly for frozen `v`, evaluates the ionic
//! current explicitly, and solves one symmetric block system for
//! `(v, u)` with backward Euler on `v` and on the interface law
//! `ε^(−ℓ)(α ∂_t[u] + β[u]) = σ_out ∇u·ν`.

use log::debug;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cell_problems::{CellError, CoeffField, Coefficients, InterfaceParams};
use crate::expr::{Expr, Vars};
use crate::fem::assembly::{add_interface_mass, add_stiffness, cell_values};
use crate::fem::dofmap::node_phase_touch;
use crate::fem::{
    apply_stiffness, assemble_interface_mass, assemble_stiffness, lumped_mass, DofLayout, DofMap, FemError,
    PreparedSystem, Region, SolveOptions, SparseOperator, Tensor, TripletBuilder,
};
use crate::geometry::{DomainGeometry, Phase, PhaseMesh};
use crate::ionics::IonicModel;
use crate::problem::ProblemData;

/// Energy left side above this multiple of `(data + 1)` aborts a run.
const BLOW_UP: f64 = 1e6;

#[derive(Debug, Error)]
pub enum MicroError {
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Cell(#[from] CellError),
    #[error("time step {dt} exceeds the stability bound 1/(2 C_I) = {bound}")]
    StepTooLarge { dt: f64, bound: f64 },
    #[error("initial jump violates ε^(−ℓ) ∫ s0² ≤ C: {value:e} > {bound:e}")]
    InitialJump { value: f64, bound: f64 },
    #[error("initial gating value {value} at node {node} is outside [0, 1]")]
    GatingRange { node: usize, value: f64 },
    #[error("energy blow-up at t = {t}: left side {lhs:e} exceeds 1e6 × (data {data:e} + 1)")]
    EnergyBlowUp { t: f64, lhs: f64, data: f64 },
    #[error("invalid data: {0}")]
    Data(String),
}

/// How the interface jump evolves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterfaceMode {
    /// The full law `ε^(−ℓ)(α ∂_t[u] + β[u]) = σ_out ∇u·ν`.
    #[default]
    Coupled,
    /// Test mode: the flux is dropped, so `α ∂_t[u] + β[u] = 0` node by node
    /// and `u` is solved with the jump prescribed.
    FluxFree,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MicroOptions {
    pub dt: f64,
    pub tol: f64,
    pub mode: InterfaceMode,
}

impl MicroOptions {
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            tol: 1e-10,
            mode: InterfaceMode::Coupled,
        }
    }
}

/// Snapshot of the ε-problem.
#[derive(Debug, Clone, PartialEq)]
pub struct MicroState {
    pub t: f64,
    pub step: usize,
    /// On the healthy-phase map.
    pub v: Vec<f64>,
    /// On the doubled map.
    pub u: Vec<f64>,
    /// Gating, on the healthy-phase map.
    pub w: Vec<f64>,
}

/// Terms of the energy estimate, accumulated over a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    /// `sup_t ‖v‖²` over the healthy phase.
    pub sup_v: f64,
    /// `∫∫ |∇(v + u)|²` over the healthy phase.
    pub grad_v_plus_u: f64,
    /// `∫∫ |∇u|²` over the healthy phase.
    pub grad_u_out: f64,
    /// `∫∫ |∇u|²` over the inclusions.
    pub grad_u_int: f64,
    /// `sup_t ε^(−ℓ) ‖[u]‖²_Γε`.
    pub sup_jump: f64,
    /// `ε^(−ℓ) ∫∫ [u]²`.
    pub jump: f64,
    /// Unscaled `∫∫_Γε [u]²`.
    pub jump_raw: f64,
    /// `‖f1‖² + ‖f2‖² + ‖v0‖² + ε^(−ℓ)‖s0‖²`.
    pub data: f64,
    /// Sum of the six left-side terms.
    pub lhs: f64,
    /// `lhs / (data + 1)`, the constant of the estimate for this run.
    pub ratio: f64,
}

impl EnergyReport {
    fn finish(&mut self) {
        self.lhs = self.sup_v + self.grad_v_plus_u + self.grad_u_out + self.grad_u_int + self.sup_jump + self.jump;
        self.ratio = self.lhs / (self.data + 1.0);
    }
}

/// One row of the nodal trajectory output.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeRow {
    pub node: usize,
    pub x: [f64; 3],
    pub phase: &'static str,
    pub v: Option<f64>,
    pub u_b: Option<f64>,
    pub u_d: Option<f64>,
    pub w: Option<f64>,
    pub jump: Option<f64>,
}

/// Assembled operators of one ε-problem.
pub struct MicroSolver {
    domain: DomainGeometry,
    iface: InterfaceParams,
    ionic: IonicModel,
    data: ProblemData,
    opts: MicroOptions,
    /// `ε^(−ℓ)`
    scale: f64,
    vmap: DofMap,
    umap: DofMap,
    cmap: DofMap,
    mv: Vec<f64>,
    mu: Vec<f64>,
    m_gamma: SparseOperator,
    sig_i: Vec<Option<Tensor>>,
    sig_u: Vec<Option<Tensor>>,
    coupled: PreparedSystem,
    constrained: Option<PreparedSystem>,
    init_sys: PreparedSystem,
    e_out: SparseOperator,
    e_int: SparseOperator,
    /// Interface weight per node, zero off doubled nodes.
    gw: Vec<f64>,
    doubled: Vec<usize>,
    data_norm: f64,
}

fn identity_field(mesh: &PhaseMesh, phase: Phase) -> Vec<Option<Tensor>> {
    let mut id = Tensor::zeros();
    for i in 0..mesh.dim() {
        id[(i, i)] = 1.0;
    }
    mesh.phases.iter().map(|&p| (p == phase).then_some(id)).collect()
}

impl MicroSolver {
    pub fn new(
        domain: &DomainGeometry,
        coeffs: &Coefficients,
        iface: &InterfaceParams,
        ionic: &IonicModel,
        data: &ProblemData,
        opts: MicroOptions,
    ) -> Result<Self, MicroError> {
        iface.validate()?;
        data.validate().map_err(MicroError::Data)?;
        coeffs.validate(&domain.cell)?;
        if !(opts.dt > 0.0) {
            return Err(MicroError::Data(format!("dt must be positive, got {}", opts.dt)));
        }
        let ci = ionic.c_i();
        if ci > 0.0 && opts.dt > 1.0 / (2.0 * ci) {
            return Err(MicroError::StepTooLarge {
                dt: opts.dt,
                bound: 1.0 / (2.0 * ci),
            });
        }
        let mesh = &domain.mesh;
        let vmap = DofMap::new(mesh, DofLayout::Phase(Phase::Out));
        let umap = DofMap::new(mesh, DofLayout::Doubled);
        let cmap = DofMap::new(mesh, DofLayout::Continuous);
        let sig_i = coeffs.domain_field(domain, CoeffField::IntOnOut);
        let sig_u: Vec<Option<Tensor>> = coeffs
            .domain_field(domain, CoeffField::IntPlusOutOnOut)
            .into_iter()
            .zip(coeffs.domain_field(domain, CoeffField::DisOnInt))
            .map(|(a, b)| a.or(b))
            .collect();
        let mv = lumped_mass(mesh, &vmap, Region::Out);
        let mu = lumped_mass(mesh, &umap, Region::Out);
        let m_gamma = assemble_interface_mass(mesh, &umap);
        let scale = domain.eps().powf(-iface.ell);
        let (nv, nu) = (vmap.len(), umap.len());
        let sopts = SolveOptions::with_tol(opts.tol);

        let mut tb = TripletBuilder::new(nv + nu);
        add_stiffness(&mut tb, mesh, (&vmap, 0), (&vmap, 0), &sig_i, 1.0);
        add_stiffness(&mut tb, mesh, (&vmap, 0), (&umap, nv), &sig_i, 1.0);
        add_stiffness(&mut tb, mesh, (&umap, nv), (&vmap, 0), &sig_i, 1.0);
        add_stiffness(&mut tb, mesh, (&umap, nv), (&umap, nv), &sig_u, 1.0);
        add_interface_mass(&mut tb, mesh, &umap, nv, scale * (iface.alpha / opts.dt + iface.beta));
        for (i, m) in mv.iter().enumerate() {
            tb.push(i, i, m / opts.dt);
        }
        let coupled = PreparedSystem::new(tb.build(true), sopts);

        let constrained = (opts.mode == InterfaceMode::FluxFree).then(|| {
            let nc = cmap.len();
            let mut tb = TripletBuilder::new(nv + nc);
            add_stiffness(&mut tb, mesh, (&vmap, 0), (&vmap, 0), &sig_i, 1.0);
            add_stiffness(&mut tb, mesh, (&vmap, 0), (&cmap, nv), &sig_i, 1.0);
            add_stiffness(&mut tb, mesh, (&cmap, nv), (&vmap, 0), &sig_i, 1.0);
            add_stiffness(&mut tb, mesh, (&cmap, nv), (&cmap, nv), &sig_u, 1.0);
            for (i, m) in mv.iter().enumerate() {
                tb.push(i, i, m / opts.dt);
            }
            PreparedSystem::new(tb.build(true), sopts)
        });
        let init_sys = PreparedSystem::new(assemble_stiffness(mesh, &cmap, &sig_u)?, sopts);

        let e_out = assemble_stiffness(mesh, &vmap, &identity_field(mesh, Phase::Out))?;
        let e_int = assemble_stiffness(mesh, &umap, &identity_field(mesh, Phase::Int))?;
        let w = mesh.interface_node_weights();
        let doubled: Vec<usize> = (0..umap.num_nodes()).filter(|&n| umap.is_doubled(n)).collect();
        let mut gw = vec![0.0; w.len()];
        for &n in &doubled {
            gw[n] = w[n];
        }
        let data_norm = data.source_norms(&mesh.grid, opts.dt);

        Ok(Self {
            domain: domain.clone(),
            iface: *iface,
            ionic: ionic.clone(),
            data: data.clone(),
            opts,
            scale,
            vmap,
            umap,
            cmap,
            mv,
            mu,
            m_gamma,
            sig_i,
            sig_u,
            coupled,
            constrained,
            init_sys,
            e_out,
            e_int,
            gw,
            doubled,
            data_norm,
        })
    }

    pub fn domain(&self) -> &DomainGeometry {
        &self.domain
    }

    pub fn v_map(&self) -> &DofMap {
        &self.vmap
    }

    pub fn u_map(&self) -> &DofMap {
        &self.umap
    }

    pub fn options(&self) -> &MicroOptions {
        &self.opts
    }

    /// `ε^(−ℓ)`
    pub fn jump_scale(&self) -> f64 {
        self.scale
    }

    fn eval_on(&self, e: &Expr, map: &DofMap, t: f64) -> Vec<f64> {
        let grid = &self.domain.mesh.grid;
        (0..map.len())
            .map(|i| e.eval(&Vars::at(&grid.node_position(map.node_of(i)), t)))
            .collect()
    }

    /// Nodal initial jump `s0ε` (zero off Γ_ε).
    pub fn initial_jump(&self) -> Vec<f64> {
        let grid = &self.domain.mesh.grid;
        let f = self.data.s0_factor(self.domain.eps(), self.iface.ell);
        let mut s = vec![0.0; grid.num_nodes()];
        for &n in &self.doubled {
            s[n] = f * self.data.s0.eval(&Vars::at(&grid.node_position(n), 0.0));
        }
        s
    }

    /// Nodal jump `[u]`, zero off Γ_ε.
    pub fn jump(&self, u: &[f64]) -> Vec<f64> {
        let mut j = vec![0.0; self.umap.num_nodes()];
        for &n in &self.doubled {
            j[n] = self.umap.jump(u, n);
        }
        j
    }

    /// `∫_Γε g²` for a nodal field with lumped quadrature.
    pub fn interface_l2_sq(&self, nodal: &[f64]) -> f64 {
        self.doubled.iter().map(|&n| self.gw[n] * nodal[n] * nodal[n]).sum()
    }

    /// Load `M_u (f1 − f2)` at time `t` on the doubled map.
    fn u_load(&self, t: f64) -> Vec<f64> {
        let f1 = self.eval_on(&self.data.f1, &self.umap, t);
        let f2 = self.eval_on(&self.data.f2, &self.umap, t);
        (0..self.umap.len()).map(|i| self.mu[i] * (f1[i] - f2[i])).collect()
    }

    /// Doubled-map vector carrying a nodal jump on the B side.
    fn lift(&self, jump: &[f64]) -> Vec<f64> {
        let mut l = vec![0.0; self.umap.len()];
        for &n in &self.doubled {
            l[self.umap.b(n).unwrap()] = jump[n];
        }
        l
    }

    /// Continuous-map restriction `Cᵀ r` of a doubled-map vector.
    fn collapse(&self, r: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; self.cmap.len()];
        for (i, v) in r.iter().enumerate() {
            c[self.cmap.b(self.umap.node_of(i)).unwrap()] += v;
        }
        c
    }

    /// `u = C z + L s`.
    fn expand(&self, z: &[f64], lift: &[f64]) -> Vec<f64> {
        (0..self.umap.len())
            .map(|i| z[self.cmap.b(self.umap.node_of(i)).unwrap()] + lift[i])
            .collect()
    }

    /// Initial state: `v = v0`, `w = w_in`, `[u] = s0ε`, and `u` from the
    /// quasi-static equations at `t = 0`.
    pub fn init(&self) -> Result<MicroState, MicroError> {
        let mesh = &self.domain.mesh;
        let s0 = self.initial_jump();
        let bound = self.scale * self.interface_l2_sq(&s0);
        if bound > self.data.s0_bound {
            return Err(MicroError::InitialJump {
                value: bound,
                bound: self.data.s0_bound,
            });
        }
        let v = self.eval_on(&self.data.v0, &self.vmap, 0.0);
        let w = self.eval_on(&self.data.w_in, &self.vmap, 0.0);
        if let Some((i, &value)) = w.iter().enumerate().find(|(_, &x)| !(0.0..=1.0).contains(&x)) {
            return Err(MicroError::GatingRange {
                node: self.vmap.node_of(i),
                value,
            });
        }
        let lift = self.lift(&s0);
        let mut r = self.collapse(&self.u_load(0.0));
        let kv = apply_stiffness(mesh, &self.cmap, &self.vmap, &self.sig_i, &v);
        let kl = apply_stiffness(mesh, &self.cmap, &self.umap, &self.sig_u, &lift);
        for i in 0..r.len() {
            r[i] -= kv[i] + kl[i];
        }
        let (z, rep) = self.init_sys.solve(&r, None)?;
        debug!("micro init: {} iterations", rep.iterations);
        Ok(MicroState {
            t: 0.0,
            step: 0,
            v,
            u: self.expand(&z, &lift),
            w,
        })
    }

    /// One semi-implicit step.
    pub fn step(&self, s: &MicroState) -> Result<MicroState, MicroError> {
        let dt = self.opts.dt;
        let t = s.t + dt;
        let mesh = &self.domain.mesh;
        let w = self.ionic.step_gating(&s.w, &s.v, dt);
        let f1 = self.eval_on(&self.data.f1, &self.vmap, t);
        let nv = self.vmap.len();
        let mut rv: Vec<f64> = (0..nv)
            .map(|i| self.mv[i] * (s.v[i] / dt + f1[i] - self.ionic.ionic_current(s.v[i], w[i])))
            .collect();
        let ru = self.u_load(t);
        let (v, u) = match self.opts.mode {
            InterfaceMode::Coupled => {
                let mg = self.m_gamma.matvec(&s.u);
                let c = self.scale * self.iface.alpha / dt;
                let mut rhs = rv;
                rhs.extend(ru.iter().zip(&mg).map(|(a, b)| a + c * b));
                let mut guess = s.v.clone();
                guess.extend_from_slice(&s.u);
                let (x, rep) = self.coupled.solve(&rhs, Some(&guess))?;
                debug!("micro step {}: {} iterations", s.step + 1, rep.iterations);
                (x[..nv].to_vec(), x[nv..].to_vec())
            }
            InterfaceMode::FluxFree => {
                let decay = self.iface.alpha / (self.iface.alpha + self.iface.beta * dt);
                let jump: Vec<f64> = self.jump(&s.u).iter().map(|j| j * decay).collect();
                let lift = self.lift(&jump);
                let kv = apply_stiffness(mesh, &self.vmap, &self.umap, &self.sig_i, &lift);
                let kz = apply_stiffness(mesh, &self.cmap, &self.umap, &self.sig_u, &lift);
                for i in 0..nv {
                    rv[i] -= kv[i];
                }
                let mut rz = self.collapse(&ru);
                for i in 0..rz.len() {
                    rz[i] -= kz[i];
                }
                let mut rhs = rv;
                rhs.extend(rz);
                let sys = self.constrained.as_ref().expect("flux-free system");
                let (x, _) = sys.solve(&rhs, None)?;
                (x[..nv].to_vec(), self.expand(&x[nv..], &lift))
            }
        };
        Ok(MicroState {
            t,
            step: s.step + 1,
            v,
            u,
            w,
        })
    }

    /// `u` restricted to the B side, on the healthy-phase map.
    pub fn u_out(&self, u: &[f64]) -> Vec<f64> {
        (0..self.vmap.len())
            .map(|i| self.umap.value(u, self.vmap.node_of(i), Phase::Out))
            .collect()
    }

    /// Instantaneous energy terms:
    /// `(‖v‖², |∇(v+u)|², |∇u|²_out, |∇u|²_int, ∫_Γ [u]²)`.
    pub fn energy_terms(&self, s: &MicroState) -> [f64; 5] {
        let ub = self.u_out(&s.u);
        let vu: Vec<f64> = s.v.iter().zip(&ub).map(|(a, b)| a + b).collect();
        let vv: f64 = s.v.iter().zip(&self.mv).map(|(v, m)| m * v * v).sum();
        [
            vv,
            self.e_out.bilinear(&vu, &vu),
            self.e_out.bilinear(&ub, &ub),
            self.e_int.bilinear(&s.u, &s.u),
            self.interface_l2_sq(&self.jump(&s.u)),
        ]
    }

    /// Data side of the energy estimate.
    pub fn data_norm(&self) -> f64 {
        self.data_norm + self.scale * self.interface_l2_sq(&self.initial_jump())
    }

    pub fn node_rows(&self, s: &MicroState) -> Vec<NodeRow> {
        let grid = &self.domain.mesh.grid;
        let touch = node_phase_touch(&self.domain.mesh);
        (0..grid.num_nodes())
            .map(|n| {
                let phase = match touch[n] {
                    (true, true) => "interface",
                    (true, false) => "out",
                    _ => "int",
                };
                let vi = self.vmap.b(n);
                NodeRow {
                    node: n,
                    x: grid.node_position(n),
                    phase,
                    v: vi.map(|i| s.v[i]),
                    u_b: self.umap.b(n).map(|i| s.u[i]),
                    u_d: self.umap.d(n).map(|i| s.u[i]),
                    w: vi.map(|i| s.w[i]),
                    jump: self.umap.is_doubled(n).then(|| self.umap.jump(&s.u, n)),
                }
            })
            .collect()
    }
}

/// Result of [`run_micro`].
#[derive(Debug, Clone)]
pub struct MicroRun {
    /// States at the requested sample times (nearest step at or after each).
    pub samples: Vec<MicroState>,
    pub last: MicroState,
    pub energy: EnergyReport,
    pub steps: usize,
}

/// Number of steps of size `dt` covering `(0, horizon]`.
pub fn step_count(horizon: f64, dt: f64) -> Result<usize, String> {
    let s = horizon / dt;
    let n = s.round();
    if n < 1.0 || (s - n).abs() > 1e-6 * s.max(1.0) {
        return Err(format!("horizon {horizon} is not a multiple of dt = {dt}"));
    }
    Ok(n as usize)
}

/// Run the ε-problem to the data horizon, accumulating the energy report.
/// `observe` sees every state, including the initial one.
pub fn run_micro(
    solver: &MicroSolver,
    sample_times: &[f64],
    mut observe: impl FnMut(&MicroState),
) -> Result<MicroRun, MicroError> {
    let dt = solver.opts.dt;
    let steps = step_count(solver.data.horizon, dt).map_err(MicroError::Data)?;
    let mut energy = EnergyReport {
        data: solver.data_norm(),
        ..EnergyReport::default()
    };
    let mut state = solver.init()?;
    let mut samples = Vec::new();
    let mut next = 0;
    let mut record = |s: &MicroState, samples: &mut Vec<MicroState>| {
        while next < sample_times.len() && sample_times[next] <= s.t + 0.5 * dt {
            samples.push(s.clone());
            next += 1;
        }
    };
    let e0 = solver.energy_terms(&state);
    energy.sup_v = e0[0];
    energy.sup_jump = solver.scale * e0[4];
    observe(&state);
    record(&state, &mut samples);
    for _ in 0..steps {
        state = solver.step(&state)?;
        let e = solver.energy_terms(&state);
        energy.sup_v = energy.sup_v.max(e[0]);
        energy.grad_v_plus_u += dt * e[1];
        energy.grad_u_out += dt * e[2];
        energy.grad_u_int += dt * e[3];
        energy.sup_jump = energy.sup_jump.max(solver.scale * e[4]);
        energy.jump += dt * solver.scale * e[4];
        energy.jump_raw += dt * e[4];
        energy.finish();
        if !energy.lhs.is_finite() || energy.lhs > BLOW_UP * (energy.data + 1.0) {
            return Err(MicroError::EnergyBlowUp {
                t: state.t,
                lhs: energy.lhs,
                data: energy.data,
            });
        }
        observe(&state);
        record(&state, &mut samples);
    }
    energy.finish();
    Ok(MicroRun {
        samples,
        last: state,
        energy,
        steps,
    })
}

/// Averages of a field over blocks of `(cells/k)^dim` grid cells, restricted
/// to the cells of `region`; one value per block, row-major. Blocks without
/// cells of `region` get 0.
pub fn block_average(mesh: &PhaseMesh, map: &DofMap, x: &[f64], region: Region, k: usize) -> Vec<f64> {
    let grid = &mesh.grid;
    let dim = grid.dim;
    let m = grid.cells / k;
    let nv = grid.nodes_per_cell();
    let nblocks = k.pow(dim as u32);
    let mut sum = vec![0.0; nblocks];
    let mut vol = vec![0.0; nblocks];
    for cell in 0..mesh.phases.len() {
        if !region.contains(mesh.phases[cell]) {
            continue;
        }
        let c = grid.cell_coords(cell);
        let mut b = 0;
        for i in (0..dim).rev() {
            b = b * k + c[i] / m;
        }
        let vals = cell_values(mesh, map, x, cell);
        sum[b] += vals[..nv].iter().sum::<f64>() / nv as f64;
        vol[b] += 1.0;
    }
    sum.iter().zip(&vol).map(|(s, v)| if *v > 0.0 { s / v } else { 0.0 }).collect()
}

/// Local cell average over each ε-cell of the domain, restricted to `region`.
/// With `Region::Y` this is the plain average over the whole ε-cell.
pub fn local_cell_average(domain: &DomainGeometry, map: &DofMap, x: &[f64], region: Region) -> Vec<f64> {
    block_average(&domain.mesh, map, x, region, domain.k)
}
