use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::grid::LambdaGrid;
use crate::output::OUT_ENV;

#[derive(Debug, Parser)]
#[command(name = "metalab", version, about = "Spring-lattice metamaterial laboratory")]
pub struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, env = OUT_ENV, default_value = ".")]
    pub out: PathBuf,
    /// Seed of every random choice made by the run.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a lattice and write its spec document and geometry.
    Build(BuildArgs),
    /// Evaluate the averaged energy of a periodic deformation.
    Energy(EnergyArgs),
    /// Tabulate the twist family and search for periodic mechanisms.
    Mechanism(MechanismArgs),
    /// Estimate the effective energy density on a grid of gradients.
    DensitySweep(DensityArgs),
    /// Check the averaged, isotropic, rigidity and cell bounds.
    VerifyBounds(BoundsArgs),
    /// Angles and geometry of the Kagome domain wall.
    DomainWall(WallArgs),
    /// Modulate a mechanism along a conformal map and measure its energy.
    SoftMode(SoftModeArgs),
    /// Sweep the scalar stretch inequalities.
    Inequalities(InequalityArgs),
}

#[derive(Debug, Args)]
pub struct SpecArg {
    /// Built-in lattice name or path of a spec document.
    #[arg(long, default_value = "kagome")]
    pub spec: String,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    /// Built-in lattice name or path of a spec document.
    #[arg(long, conflicts_with = "variant")]
    pub spec: Option<String>,
    /// Variant parameters as JSON, e.g. '{"kind":"rhombus-squares","alpha":1.2,"s1":1,"s2":0.5}'.
    #[arg(long)]
    pub variant: Option<String>,
    /// Supercell size of the geometry dump.
    #[arg(long, default_value_t = 1)]
    pub k: usize,
}

#[derive(Debug, Args)]
pub struct EnergyArgs {
    /// Built-in lattice name or spec path [default: the deformation's, else kagome].
    #[arg(long)]
    pub spec: Option<String>,
    /// Macroscopic gradient m00,m01,m10,m11.
    #[arg(long, default_value = "1,0,0,1", allow_hyphen_values = true)]
    pub lambda: String,
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    #[arg(long, default_value_t = 0.05)]
    pub eta: f64,
    /// Deformation document; overrides --lambda and --k.
    #[arg(long)]
    pub deformation: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MechanismArgs {
    #[command(flatten)]
    pub spec: SpecArg,
    /// Angles of the twist table, spread over the admissible range.
    #[arg(long, default_value_t = 50)]
    pub thetas: usize,
    /// Also run the random mechanism search.
    #[arg(long)]
    pub search: bool,
    /// Supercell size of the search.
    #[arg(long, default_value_t = 2)]
    pub search_k: usize,
    /// Random starts of the search.
    #[arg(long, default_value_t = 32)]
    pub restarts: usize,
    /// Write the geometry of the twist at this angle.
    #[arg(long, allow_hyphen_values = true)]
    pub export_theta: Option<f64>,
    /// Averaged-energy tolerance of the mechanism test.
    #[arg(long, default_value_t = 1e-12)]
    pub energy_tol: f64,
    /// Tolerance on l1 - l2.
    #[arg(long, default_value_t = 1e-8)]
    pub isotropy_tol: f64,
}

#[derive(Debug, Args)]
pub struct DensityArgs {
    #[command(flatten)]
    pub spec: SpecArg,
    #[arg(long, default_value_t = 0.05)]
    pub eta: f64,
    /// Supercell sizes, comma separated.
    #[arg(long, default_value = "1,2", value_delimiter = ',')]
    pub k: Vec<usize>,
    /// iso, diag, random:N or file:PATH.
    #[arg(long, default_value = "iso")]
    pub grid: LambdaGrid,
    /// Random starts per supercell size, besides the deterministic ones.
    #[arg(long, default_value_t = 2)]
    pub restarts: usize,
    #[arg(long, default_value_t = 600)]
    pub max_iter: usize,
    /// Write each minimiser as a deformation document.
    #[arg(long)]
    pub dump_minimizers: bool,
    /// Largest upper estimate accepted on isotropic compressions.
    #[arg(long, default_value_t = 1e-10)]
    pub zero_tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundKind {
    Jensen,
    Isotropic,
    Rigidity,
    Cell,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    #[command(flatten)]
    pub spec: SpecArg,
    #[arg(long, default_value_t = 0.05)]
    pub eta: f64,
    /// Which checks to run (default: all).
    #[arg(long, value_enum, value_delimiter = ',')]
    pub bounds: Vec<BoundKind>,
    /// Trials of each averaged bound.
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    /// Random gradients of the isotropic bound.
    #[arg(long, default_value_t = 10)]
    pub iso_trials: usize,
    /// Samples of the triangle rigidity estimate.
    #[arg(long, default_value_t = 100_000)]
    pub rigidity_samples: usize,
    /// Samples of the cell bounds.
    #[arg(long, default_value_t = 10_000)]
    pub cell_samples: usize,
}

#[derive(Debug, Args)]
pub struct WallArgs {
    /// Twist angle of the first strip, in (2 pi/3, pi).
    #[arg(long, default_value_t = 2.8)]
    pub theta1: f64,
    /// Number of angles listed.
    #[arg(long, default_value_t = 20)]
    pub n: usize,
    /// Half-width of the assembled strip.
    #[arg(long, default_value_t = 15)]
    pub m: usize,
    /// Vertical periods of the assembled strip.
    #[arg(long, default_value_t = 2)]
    pub periods: usize,
    /// Largest spring length error accepted.
    #[arg(long, default_value_t = 1e-10)]
    pub residual_tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TableKind {
    /// One-periodic twist.
    Twist,
    /// Isotropic two-periodic mechanisms found by the search.
    TwoPeriodic,
}

#[derive(Debug, Args)]
pub struct SoftModeArgs {
    #[command(flatten)]
    pub spec: SpecArg,
    /// quadratic, identity, uniform:C,PHI or file:PATH (a target document).
    #[arg(long, default_value = "quadratic")]
    pub target: String,
    /// Lattice scales, comma separated; fractions like 1/8 are accepted.
    #[arg(long, default_value = "1/8,1/16,1/32,1/64", value_delimiter = ',')]
    pub eps: Vec<String>,
    #[arg(long, default_value_t = 0.05)]
    pub eta: f64,
    #[arg(long, default_value_t = 200)]
    pub sweeps: usize,
    #[arg(long, value_enum, default_value = "twist")]
    pub table: TableKind,
    /// Write node, edge and triangle-rotation dumps for every scale.
    #[arg(long)]
    pub dump: bool,
}

#[derive(Debug, Args)]
pub struct InequalityArgs {
    #[arg(long, default_value_t = 3.0)]
    pub max_stretch: f64,
    #[arg(long, default_value_t = 0.02)]
    pub step: f64,
    #[arg(long, default_value_t = 0.005)]
    pub angle_step: f64,
    /// Write every grid point, not only the worst one.
    #[arg(long)]
    pub full: bool,
}
