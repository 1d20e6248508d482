use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ddfem_cli::pipeline::{
    apply_seed_override, cmd_gen_data, cmd_reproduce, cmd_solve, cmd_sweep, cmd_train, Reproduction,
};
use ddfem_cli::{init_threads, parse_config, CliError, PipelineConfig, Result};
use ddfem_core::eval::RunReport;

#[derive(Parser)]
#[command(name = "ddfem", version, about = "Data-driven finite element pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Configuration file (`key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; overrides `threads` (0 = one per core).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the training patches and write the snapshot archive.
    GenData(Common),
    /// Compress the snapshot archive into a basis archive.
    Train(Common),
    /// Assemble, solve and compare the configured layouts.
    Solve(Common),
    /// Evaluate one basis per `sweep.epsilons` entry.
    Sweep(Common),
    /// Run a pinned study and check it against its acceptance bounds.
    Reproduce {
        /// poisson-spiral | burgers-extrapolation
        name: String,
        /// Output directory (default `reproduce-<name>`).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn load(common: &Common) -> Result<(PipelineConfig, PathBuf)> {
    let text = std::fs::read_to_string(&common.config).map_err(|source| CliError::Io {
        path: common.config.clone(),
        source,
    })?;
    let mut cfg = parse_config(&text)?;
    apply_seed_override(&mut cfg, std::env::var("DDFEM_SEED").ok().as_deref())?;
    if let Some(t) = common.threads {
        cfg.threads = t;
    }
    if let Some(out) = &common.out {
        cfg.output.dir = out.display().to_string();
    }
    init_threads(cfg.threads);
    let out = PathBuf::from(&cfg.output.dir);
    Ok((cfg, out))
}

fn print_reports(reports: &[RunReport]) {
    for r in reports {
        println!(
            "{} {}x{} {}: error {:.4e} (max {:.4e}), dofs {} -> {} (ratio {:.2}), online {:.3}s",
            r.formulation,
            r.rows,
            r.cols,
            r.truncation,
            r.final_error(),
            r.max_error(),
            r.dof_fom,
            r.dof_reduced,
            r.dof_ratio,
            r.online_seconds
        );
    }
}

fn written(path: &Path) {
    println!("wrote {}", path.display());
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData(c) => {
            let (cfg, out) = load(&c)?;
            written(&cmd_gen_data(&cfg, &out)?);
        }
        Command::Train(c) => {
            let (cfg, out) = load(&c)?;
            written(&cmd_train(&cfg, &out)?);
        }
        Command::Solve(c) => {
            let (cfg, out) = load(&c)?;
            print_reports(&cmd_solve(&cfg, &out)?);
        }
        Command::Sweep(c) => {
            let (cfg, out) = load(&c)?;
            print_reports(&cmd_sweep(&cfg, &out)?);
        }
        Command::Reproduce { name, out, threads } => {
            let which: Reproduction = name.parse()?;
            init_threads(threads.unwrap_or(0));
            let out = out.unwrap_or_else(|| PathBuf::from(format!("reproduce-{}", which.name())));
            let seed = std::env::var("DDFEM_SEED").ok();
            let done = cmd_reproduce(which, &out, seed.as_deref())?;
            print_reports(&done.reports);
            for c in &done.checks {
                println!("{c}");
            }
            if !done.passed() {
                let failed: Vec<&str> = done
                    .checks
                    .iter()
                    .filter(|c| !c.passed())
                    .map(|c| c.name.as_str())
                    .collect();
                return Err(CliError::BoundsNotMet(failed.join(", ")));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
