use std::path::PathBuf;
use std::process::ExitCode;

use bidomain_homog::harness::{
    cmd_converge, cmd_kernel, cmd_run, cmd_tensors, load_config, Context, HarnessError, Lookup, SolverKind,
};
use clap::{Parser, Subcommand, ValueEnum};
use log::info;

#[derive(Parser)]
#[command(name = "bidomain-homog", version, about = "Homogenization of a bidomain model with imperfect interfaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (TOML).
    #[arg(long, global = true, default_value = "config.toml")]
    config: PathBuf,
    /// Output directory; overrides `[output] dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Tensor cache directory; overrides $BIDOMAIN_HOMOG_CACHE.
    #[arg(long, global = true)]
    cache: Option<PathBuf>,
    /// Worker threads for parallel sweeps (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Compute (or load from the cache) the effective tensors.
    Tensors,
    /// Run the ε-problem or the homogenized system and write trajectories.
    Run {
        #[arg(long, value_enum, default_value_t = Solver::Micro)]
        solver: Solver,
    },
    /// Micro-vs-macro sweep over the configured ε list.
    Converge,
    /// Dump the memory kernel B(t_k).
    Kernel,
}

#[derive(Clone, Copy, ValueEnum)]
enum Solver {
    Micro,
    Macro,
}

fn run(cli: &Cli) -> Result<(), HarnessError> {
    let cfg = load_config(&cli.config)?;
    let ctx = Context::new(&cfg, cli.out.as_deref(), cli.cache.as_deref());
    match cli.command {
        Command::Tensors => {
            let o = cmd_tensors(&cfg, &ctx)?;
            let status = match o.lookup {
                Lookup::Hit => "cache hit",
                Lookup::Miss => "cache miss",
                Lookup::Replaced => "cache entry replaced",
            };
            println!("{status}: {}", o.key);
            for (name, m) in [("A1", &o.tensors.a1), ("A2", &o.tensors.a2), ("A2_B", &o.tensors.a2_b), ("A2_D", &o.tensors.a2_d)] {
                let rows: Vec<String> = m
                    .row_iter()
                    .map(|r| r.iter().map(|x| format!("{x:.10e}")).collect::<Vec<_>>().join(" "))
                    .collect();
                println!("{name:<5}= [{}]", rows.join("; "));
            }
            println!("output: {}", ctx.out.join("tensors.txt").display());
        }
        Command::Run { solver } => {
            let kind = match solver {
                Solver::Micro => SolverKind::Micro,
                Solver::Macro => SolverKind::Macro,
            };
            let r = cmd_run(&cfg, &ctx, kind)?;
            for f in &r.outputs {
                println!("{}", ctx.out.join(f).display());
            }
            if let Some(e) = r.energy {
                println!("energy ratio lhs/(data+1) = {:.6e}", e.ratio);
            }
        }
        Command::Converge => {
            let t = cmd_converge(&cfg, &ctx)?;
            println!("{:>10} {:>14} {:>14} {:>14} {:>8} {:>8}", "eps", "v_error", "u_error", "jump", "v_rate", "u_rate");
            for r in &t.rows {
                let rate = |x: Option<f64>| x.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into());
                println!(
                    "{:>10.6} {:>14.6e} {:>14.6e} {:>14.6e} {:>8} {:>8}",
                    r.eps,
                    r.v_error,
                    r.u_error,
                    r.jump_diagnostic,
                    rate(r.v_rate),
                    rate(r.u_rate)
                );
            }
            if let Some(e) = t.macro_jump_error {
                println!("max |[u] - s1 exp(-beta t/alpha)| = {e:.3e}");
            }
        }
        Command::Kernel => {
            let p = cmd_kernel(&cfg, &ctx)?;
            println!("{}", p.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
        info!("using {n} threads");
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
