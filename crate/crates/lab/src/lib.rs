//! Command-line laboratory over the `metalattice` kernels: subcommands,
//! artifact formats and run configurations.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod grid;
pub mod output;
pub mod spec_io;

use cli::{Cli, Command};
use commands::{Context, Report};
use config::RunConfig;
use error::{LabError, LabResult};
use output::Output;

impl Command {
    /// Subcommand name as typed on the command line.
    pub fn name(&self) -> &'static str {
        match self {
            Command::Build(_) => "build",
            Command::Energy(_) => "energy",
            Command::Mechanism(_) => "mechanism",
            Command::DensitySweep(_) => "density-sweep",
            Command::VerifyBounds(_) => "verify-bounds",
            Command::DomainWall(_) => "domain-wall",
            Command::SoftMode(_) => "soft-mode",
            Command::Inequalities(_) => "inequalities",
        }
    }
}

/// Runs one command in a pool of `cli.jobs` workers and writes its
/// `<command>.run.json`. Failed checks come back as [`LabError::Verification`]
/// after all artifacts are written; the report is returned either way.
pub fn run(cli: &Cli) -> (Option<Report>, LabResult<()>) {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cli.jobs {
        if j == 0 {
            return (None, Err(LabError::Usage("--jobs must be positive".into())));
        }
        pool = pool.num_threads(j);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => return (None, Err(LabError::Usage(format!("worker pool: {e}")))),
    };
    pool.install(|| {
        let name = cli.command.name();
        let out = match Output::new(&cli.out) {
            Ok(o) => o,
            Err(e) => return (None, Err(e)),
        };
        let mut ctx = Context { out, config: RunConfig::new(name, cli.seed) };
        let res = match &cli.command {
            Command::Build(a) => commands::build(&mut ctx, a),
            Command::Energy(a) => commands::energy(&mut ctx, a),
            Command::Mechanism(a) => commands::mechanism(&mut ctx, a),
            Command::DensitySweep(a) => commands::density_sweep(&mut ctx, a),
            Command::VerifyBounds(a) => commands::verify_bounds(&mut ctx, a),
            Command::DomainWall(a) => commands::domain_wall(&mut ctx, a),
            Command::SoftMode(a) => commands::soft_mode(&mut ctx, a),
            Command::Inequalities(a) => commands::inequalities(&mut ctx, a),
        };
        let report = match res {
            Ok(r) => r,
            Err(e) => return (None, Err(e)),
        };
        let run_file = format!("{name}.run.json");
        ctx.config.outputs = ctx.out.written().to_vec();
        ctx.config.outputs.push(run_file.clone());
        if let Err(e) = ctx.out.json(&run_file, &ctx.config) {
            return (Some(report), Err(e));
        }
        let status = if report.failures.is_empty() { Ok(()) } else { Err(LabError::Verification(report.failures.join("; "))) };
        (Some(report), status)
    })
}
