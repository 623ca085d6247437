//! The four harness commands.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use rayon::prelude::*;
use serde::Serialize;

use super::cache::{encode, CacheKey, Lookup, TensorCache};
use super::config::SimConfig;
use super::error::HarnessError;
use super::report::{fmt_num, write_csv, write_svg_plot, PlotSpec, Series};
use crate::cell_problems::{compute_effective, solve_cell_problems, EffectiveTensors, Regime};
use crate::fem::{Region, Tensor};
use crate::geometry::{build_unit_cell, cells_per_side, tile_domain, Topology};
use crate::macro_solver::{run_macro, tensor_of, MacroCoefficients, MacroOptions, MacroSolver, MacroVariant};
use crate::micro_solver::{block_average, local_cell_average, run_micro, MicroOptions, MicroSolver};

type Result<T> = std::result::Result<T, HarnessError>;

/// Where outputs and cached tensors go.
#[derive(Debug, Clone)]
pub struct Context {
    pub out: PathBuf,
    pub cache: TensorCache,
}

impl Context {
    /// `out` overrides the config's output directory; `cache` overrides the
    /// environment variable and the default.
    pub fn new(cfg: &SimConfig, out: Option<&Path>, cache: Option<&Path>) -> Self {
        Self {
            out: out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(&cfg.output.dir)),
            cache: TensorCache::resolve(cache),
        }
    }

    fn ensure_out(&self) -> Result<()> {
        fs::create_dir_all(&self.out).map_err(HarnessError::io(&self.out))
    }

    fn file(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

pub fn cache_key(cfg: &SimConfig, with_kernel: bool) -> Result<CacheKey> {
    let coeffs = cfg.coefficients().map_err(HarnessError::config)?;
    let dim = cfg.geometry.dim;
    let flat = |v: &[Tensor]| -> Vec<Vec<f64>> {
        v.iter()
            .map(|t| (0..dim * dim).map(|k| t[(k / dim, k % dim)]).collect())
            .collect()
    };
    let kp = cfg.kernel_params();
    Ok(CacheKey {
        version: super::cache::CACHE_VERSION,
        cell: cfg.cell_spec(),
        sigma_int: flat(&coeffs.sigma_int),
        sigma_out: flat(&coeffs.sigma_out),
        sigma_dis: flat(&coeffs.sigma_dis),
        alpha: cfg.interface.alpha,
        beta: cfg.interface.beta,
        dt_kernel: if with_kernel { kp.dt } else { 0.0 },
        kernel_steps: if with_kernel { kp.steps } else { 0 },
        with_kernel,
        tol: cfg.numerics.tol,
    })
}

/// Solve the cell problems from scratch. The kernel families (and the
/// unit-jump evolution feeding the `𝓕` source) are solved iff `with_kernel`.
pub fn compute_tensors(cfg: &SimConfig, with_kernel: bool) -> Result<EffectiveTensors> {
    let cell = build_unit_cell(&cfg.cell_spec())?;
    let coeffs = cfg.coefficients().map_err(HarnessError::config)?;
    let ones = vec![1.0; cell.mesh.facets.len()];
    let corr = solve_cell_problems(
        &cell,
        &coeffs,
        &cfg.interface,
        &cfg.kernel_params(),
        with_kernel.then_some(ones.as_slice()),
        with_kernel,
        cfg.numerics.tol,
    )?;
    let regime = match cfg.regime() {
        Regime::Memory if !with_kernel => Regime::Intermediate,
        r => r,
    };
    Ok(compute_effective(&cell, &coeffs, &cfg.interface, &corr, regime)?)
}

#[derive(Debug, Clone)]
pub struct TensorsOutcome {
    pub tensors: EffectiveTensors,
    pub key: String,
    pub lookup: Lookup,
}

/// Tensors through the cache.
pub fn tensors_for(cfg: &SimConfig, ctx: &Context, with_kernel: bool) -> Result<TensorsOutcome> {
    let key = cache_key(cfg, with_kernel)?.digest();
    let (tensors, lookup) = ctx.cache.get_or_compute(&key, || {
        info!("solving cell problems (kernel: {with_kernel})");
        compute_tensors(cfg, with_kernel)
    })?;
    Ok(TensorsOutcome { tensors, key, lookup })
}

/// Compute (or load) the effective tensors and write `tensors.txt`.
pub fn cmd_tensors(cfg: &SimConfig, ctx: &Context) -> Result<TensorsOutcome> {
    let o = tensors_for(cfg, ctx, cfg.regime() == Regime::Memory)?;
    ctx.ensure_out()?;
    let path = ctx.file("tensors.txt");
    fs::write(&path, encode(&o.key, &o.tensors)).map_err(HarnessError::io(&path))?;
    if o.lookup == Lookup::Hit {
        info!("cache hit: tensors loaded without solving");
    }
    Ok(o)
}

/// Dump `B(t_k)` to `kernel.csv`.
pub fn cmd_kernel(cfg: &SimConfig, ctx: &Context) -> Result<PathBuf> {
    let o = tensors_for(cfg, ctx, true)?;
    let kt = o.tensors.kernel.as_ref().expect("kernel requested");
    let dim = o.tensors.dim;
    let mut header = vec!["k".to_string(), "t".to_string()];
    for i in 1..=dim {
        for j in 1..=dim {
            header.push(format!("B{i}{j}"));
        }
    }
    let rows: Vec<Vec<String>> = kt
        .values
        .iter()
        .enumerate()
        .map(|(k, b)| {
            let mut r = vec![k.to_string(), fmt_num(k as f64 * kt.dt)];
            for i in 0..dim {
                for j in 0..dim {
                    r.push(fmt_num(b[(i, j)]));
                }
            }
            r
        })
        .collect();
    info!("kernel asymmetry {:e}", kt.asymmetry());
    ctx.ensure_out()?;
    let path = ctx.file("kernel.csv");
    let h: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(&path, &h, &rows).map_err(HarnessError::io(&path))?;
    Ok(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    Micro,
    Macro,
}

/// Summary written to `report.json` next to the trajectories.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub solver: &'static str,
    pub regime: Regime,
    pub variant: Option<MacroVariant>,
    pub eps: Option<f64>,
    pub dt: f64,
    pub steps: usize,
    pub time_order: u32,
    pub energy: Option<crate::micro_solver::EnergyReport>,
    pub kernel_truncated: Option<bool>,
    pub outputs: Vec<String>,
    pub runtime_s: f64,
}

fn sample_name(prefix: &str, t: f64) -> String {
    format!("{prefix}_t{t:.6}.csv")
}

fn coord_header(dim: usize) -> Vec<&'static str> {
    ["x1", "x2", "x3"][..dim].to_vec()
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}

/// Macro variant for the configured regime and cell topology.
pub fn macro_variant(cfg: &SimConfig) -> MacroVariant {
    match cfg.regime() {
        Regime::Tridomain => match cfg.geometry.topology {
            Topology::Connected => MacroVariant::TridomainConnected,
            Topology::Disconnected => MacroVariant::TridomainDisconnected,
        },
        Regime::Memory => MacroVariant::Memory,
        Regime::Intermediate | Regime::NoJump => MacroVariant::Mid,
    }
}

/// Macro solver for the configured regime; tensors come through the cache
/// (computed on a miss). For `ℓ > 1` the jump vanishes and `A2` replaces `Ã2`.
pub fn build_macro(cfg: &SimConfig, ctx: &Context) -> Result<MacroSolver> {
    let ionic = cfg.require_ionic()?;
    let variant = macro_variant(cfg);
    let o = tensors_for(cfg, ctx, variant == MacroVariant::Memory)?;
    if o.lookup != Lookup::Hit {
        info!("tensors were not cached; computed them first");
    }
    let mut coeffs = MacroCoefficients::from_effective(&o.tensors, variant)?;
    if cfg.regime() == Regime::NoJump {
        let a2 = &o.tensors.a2;
        coeffs.a2 = tensor_of(&((a2 + a2.transpose()) * 0.5));
    }
    let opts = MacroOptions {
        n: cfg.numerics.macro_n,
        dt: cfg.macro_dt(),
        tol: cfg.numerics.tol,
    };
    Ok(MacroSolver::new(variant, coeffs, &cfg.interface, ionic, &cfg.data, opts)?)
}

pub fn build_micro(cfg: &SimConfig, eps: f64) -> Result<MicroSolver> {
    let ionic = cfg.require_ionic()?;
    let cell = build_unit_cell(&cfg.cell_spec())?;
    let domain = tile_domain(&cell, cells_per_side(eps)?)?;
    let coeffs = cfg.coefficients().map_err(HarnessError::config)?;
    let opts = MicroOptions {
        dt: cfg.numerics.dt,
        tol: cfg.numerics.tol,
        mode: cfg.numerics.interface_mode,
    };
    Ok(MicroSolver::new(&domain, &coeffs, &cfg.interface, ionic, &cfg.data, opts)?)
}

/// Run one solver and write a CSV per sample time plus `report.json`.
pub fn cmd_run(cfg: &SimConfig, ctx: &Context, solver: SolverKind) -> Result<RunReport> {
    let start = Instant::now();
    let times = cfg.sample_times();
    let dim = cfg.geometry.dim;
    let mut outputs = Vec::new();
    let mut report = match solver {
        SolverKind::Micro => {
            let eps = cfg.geometry.eps[0];
            let s = build_micro(cfg, eps)?;
            let run = run_micro(&s, &times, |_| {})?;
            ctx.ensure_out()?;
            let mut header = vec!["node"];
            header.extend(coord_header(dim));
            header.extend(["phase", "v", "u_B", "u_D", "w", "jump"]);
            for (t, st) in times.iter().zip(&run.samples) {
                let rows: Vec<Vec<String>> = s
                    .node_rows(st)
                    .into_iter()
                    .map(|r| {
                        let mut row = vec![r.node.to_string()];
                        row.extend(r.x[..dim].iter().map(|x| fmt_num(*x)));
                        row.push(r.phase.to_string());
                        row.extend([opt(r.v), opt(r.u_b), opt(r.u_d), opt(r.w), opt(r.jump)]);
                        row
                    })
                    .collect();
                let name = sample_name("micro", *t);
                let path = ctx.file(&name);
                write_csv(&path, &header, &rows).map_err(HarnessError::io(&path))?;
                outputs.push(name);
            }
            RunReport {
                solver: "micro",
                regime: cfg.regime(),
                variant: None,
                eps: Some(eps),
                dt: cfg.numerics.dt,
                steps: run.steps,
                time_order: 1,
                energy: Some(run.energy),
                kernel_truncated: None,
                outputs: Vec::new(),
                runtime_s: 0.0,
            }
        }
        SolverKind::Macro => {
            let s = build_macro(cfg, ctx)?;
            let run = run_macro(&s, &times, |_| {})?;
            ctx.ensure_out()?;
            let mut header = vec!["node"];
            header.extend(coord_header(dim));
            header.extend(["field", "value"]);
            for (t, st) in times.iter().zip(&run.samples) {
                let rows: Vec<Vec<String>> = s
                    .node_rows(st)
                    .into_iter()
                    .map(|(node, x, field, value)| {
                        let mut row = vec![node.to_string()];
                        row.extend(x[..dim].iter().map(|x| fmt_num(*x)));
                        row.push(field.to_string());
                        row.push(fmt_num(value));
                        row
                    })
                    .collect();
                let name = sample_name("macro", *t);
                let path = ctx.file(&name);
                write_csv(&path, &header, &rows).map_err(HarnessError::io(&path))?;
                outputs.push(name);
            }
            let memory = s.variant() == MacroVariant::Memory;
            RunReport {
                solver: "macro",
                regime: cfg.regime(),
                variant: Some(s.variant()),
                eps: None,
                dt: cfg.macro_dt(),
                steps: run.steps,
                time_order: 1,
                energy: None,
                kernel_truncated: memory.then_some(run.kernel_truncated),
                outputs: Vec::new(),
                runtime_s: 0.0,
            }
        }
    };
    report.outputs = outputs;
    report.runtime_s = start.elapsed().as_secs_f64();
    let path = ctx.file("report.json");
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    fs::write(&path, json).map_err(HarnessError::io(&path))?;
    Ok(report)
}

/// One ε of a convergence sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub eps: f64,
    /// `‖ℳ_ε(v_ε) − ℳ_ε(v)‖_{L²(Ω_T)}`
    pub v_error: f64,
    /// Same for `u` (healthy-phase trace of `u_ε` against `u` or `u^B`).
    pub u_error: f64,
    /// `ε^{−(1+ℓ)/2} ‖[u_ε]‖_{L²(Γ_ε × (0,T))}`
    pub jump_diagnostic: f64,
    /// `(ε ∫∫_Γε [u_ε]²)^{1/2}`, the L² norm of the unfolded jump.
    pub unfolded_jump: f64,
    /// Energy left side over `(data + 1)`.
    pub energy_ratio: f64,
    /// `log₂` of the error ratio to the previous row.
    pub v_rate: Option<f64>,
    pub u_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub ell: f64,
    pub rows: Vec<ConvergenceRow>,
    /// Tridomain with disconnected inclusions: `max |[u] − s̄1 e^{−βt/α}|`
    /// over the macro run.
    pub macro_jump_error: Option<f64>,
}

impl ConvergenceTable {
    pub fn column(&self, f: impl Fn(&ConvergenceRow) -> f64) -> Vec<f64> {
        self.rows.iter().map(f).collect()
    }
}

fn check_halving(eps: &[f64]) -> Result<()> {
    if eps.len() < 3 {
        return Err(HarnessError::config("converge needs at least three ε values"));
    }
    for w in eps.windows(2) {
        if (w[1] - 0.5 * w[0]).abs() > 1e-12 * w[0] {
            return Err(HarnessError::config(format!(
                "ε list must halve at each entry: {} does not follow {}",
                w[1], w[0]
            )));
        }
    }
    Ok(())
}

/// Run the macro system once and the ε-problem for every listed ε (in
/// parallel), comparing local cell averages at every time step.
pub fn cmd_converge(cfg: &SimConfig, ctx: &Context) -> Result<ConvergenceTable> {
    let eps = cfg.geometry.eps.clone();
    check_halving(&eps)?;
    let dt = cfg.numerics.dt;
    if (cfg.macro_dt() - dt).abs() > 1e-15 * dt {
        return Err(HarnessError::config("converge compares step by step: numerics.macro_dt must equal numerics.dt"));
    }
    let ks: Vec<usize> = eps.iter().map(|&e| cells_per_side(e)).collect::<std::result::Result<_, _>>()?;
    let n = cfg.numerics.macro_n;
    if let Some(k) = ks.iter().find(|&&k| n % k != 0) {
        return Err(HarnessError::config(format!(
            "numerics.macro_n = {n} must be a multiple of 1/ε = {k}"
        )));
    }
    let msolver = build_macro(cfg, ctx)?;
    let mut macro_states = Vec::new();
    let alpha = cfg.interface.alpha;
    let beta = cfg.interface.beta;
    let s1 = {
        let grid = &msolver.mesh().grid;
        let map = msolver.map();
        (0..map.len())
            .map(|i| cfg.data.s1.eval(&crate::expr::Vars::at(&grid.node_position(map.node_of(i)), 0.0)))
            .collect::<Vec<f64>>()
    };
    let mut jump_err = 0.0f64;
    let track_jump = msolver.variant() == MacroVariant::TridomainDisconnected;
    run_macro(&msolver, &[], |s| {
        if track_jump {
            let decay = (-beta * s.t / alpha).exp();
            for (j, s1) in s.jump().iter().zip(&s1) {
                jump_err = jump_err.max((j - s1 * decay).abs());
            }
        }
        macro_states.push((s.v.clone(), s.u_b.clone()));
    })?;
    let dim = cfg.geometry.dim;
    let ell = cfg.interface.ell;

    let rows: Vec<Result<(f64, f64, f64, f64, f64)>> = eps
        .par_iter()
        .zip(&ks)
        .map(|(&e, &k)| {
            let solver = build_micro(cfg, e)?;
            let block = (1.0 / k as f64).powi(dim as i32);
            let (mut ev, mut eu) = (0.0, 0.0);
            let run = run_micro(&solver, &[], |s| {
                if s.step == 0 {
                    return;
                }
                let (mv, mu) = &macro_states[s.step];
                let av = local_cell_average(solver.domain(), solver.v_map(), &s.v, Region::Out);
                let au = local_cell_average(solver.domain(), solver.v_map(), &solver.u_out(&s.u), Region::Out);
                let bv = block_average(msolver.mesh(), msolver.map(), mv, Region::Y, k);
                let bu = block_average(msolver.mesh(), msolver.map(), mu, Region::Y, k);
                ev += dt * block * av.iter().zip(&bv).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
                eu += dt * block * au.iter().zip(&bu).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            })?;
            let jump = e.powf(-0.5 * (1.0 + ell)) * run.energy.jump_raw.sqrt();
            info!("ε = {e}: v error {:e}, u error {:e}, jump {jump:e}", ev.sqrt(), eu.sqrt());
            Ok((ev.sqrt(), eu.sqrt(), jump, (e * run.energy.jump_raw).sqrt(), run.energy.ratio))
        })
        .collect();
    let mut table = ConvergenceTable {
        ell,
        rows: Vec::new(),
        macro_jump_error: track_jump.then_some(jump_err),
    };
    for (i, r) in rows.into_iter().enumerate() {
        let (v_error, u_error, jump_diagnostic, unfolded_jump, energy_ratio) = r?;
        let prev = table.rows.last();
        table.rows.push(ConvergenceRow {
            eps: eps[i],
            v_error,
            u_error,
            jump_diagnostic,
            unfolded_jump,
            energy_ratio,
            v_rate: prev.map(|p| (p.v_error / v_error).log2()),
            u_rate: prev.map(|p| (p.u_error / u_error).log2()),
        });
    }
    write_convergence(ctx, &table)?;
    Ok(table)
}

fn write_convergence(ctx: &Context, t: &ConvergenceTable) -> Result<()> {
    ctx.ensure_out()?;
    let rows: Vec<Vec<String>> = t
        .rows
        .iter()
        .map(|r| {
            vec![
                fmt_num(r.eps),
                fmt_num(r.v_error),
                fmt_num(r.u_error),
                fmt_num(r.jump_diagnostic),
                fmt_num(r.unfolded_jump),
                fmt_num(r.energy_ratio),
                opt(r.v_rate),
                opt(r.u_rate),
            ]
        })
        .collect();
    let path = ctx.file("convergence.csv");
    write_csv(
        &path,
        &[
            "eps",
            "v_error",
            "u_error",
            "jump_diagnostic",
            "unfolded_jump",
            "energy_ratio",
            "v_rate",
            "u_rate",
        ],
        &rows,
    )
    .map_err(HarnessError::io(&path))?;
    let mut series = vec![
        Series {
            label: "v error".into(),
            points: t.rows.iter().map(|r| (r.eps, r.v_error)).collect(),
        },
        Series {
            label: "u error".into(),
            points: t.rows.iter().map(|r| (r.eps, r.u_error)).collect(),
        },
    ];
    if t.ell > -1.0 {
        series.push(Series {
            label: "jump diagnostic".into(),
            points: t.rows.iter().map(|r| (r.eps, r.jump_diagnostic)).collect(),
        });
    }
    let path = ctx.file("convergence.svg");
    write_svg_plot(
        &path,
        &series,
        &PlotSpec {
            title: format!("micro vs macro, ℓ = {}", t.ell),
            x_label: "ε".into(),
            y_label: "L²(Ω_T) norm".into(),
            log_log: true,
        },
    )
    .map_err(HarnessError::io(&path))
}
