use std::path::PathBuf;

use bvg_core::grid::{Boundary, BvNorm};
use bvg_core::io::PgmDepth;
use clap::{Args, Parser, Subcommand, ValueEnum};

/// BV / L² / G image decomposition, optimality checks and thin-structure
/// detection.
#[derive(Debug, Parser)]
#[command(name = "bvg", version, about, propagate_version = true)]
pub struct Cli {
    /// Worker threads for the numerical kernels (default: all cores).
    #[arg(long, global = true, env = "BVG_THREADS")]
    pub threads: Option<usize>,

    /// Only print errors.
    #[arg(long, short, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic scene and its analytic reference norms.
    Synth(SynthArgs),
    /// ROF denoising through the dual projection.
    Rof(RofArgs),
    /// Three-part decomposition f = u + v + w.
    Decompose(DecomposeArgs),
    /// L¹, L², TV, BV and G norms of an image.
    Analyze(AnalyzeArgs),
    /// Which regime of the optimality theorem an input falls in.
    Classify(ClassifyArgs),
    /// Optimality conditions of a given decomposition.
    Check(CheckArgs),
    /// G-norm estimate with its bracket and probe log.
    Gnorm(GnormArgs),
    /// Decompose, then detect long thin structures in the texture part.
    DetectRoads(DetectRoadsArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum BoundaryArg {
    /// Reflecting boundary; the G-norm needs zero-mean input.
    Neumann,
    /// The image is zero outside the window (plane semantics).
    ZeroExtended,
}

impl From<BoundaryArg> for Boundary {
    fn from(b: BoundaryArg) -> Self {
        match b {
            BoundaryArg::Neumann => Boundary::Neumann,
            BoundaryArg::ZeroExtended => Boundary::ZeroExtended,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum BvNormArg {
    /// L¹ norm plus total variation.
    Full,
    /// Total variation only.
    Seminorm,
}

impl From<BvNormArg> for BvNorm {
    fn from(b: BvNormArg) -> Self {
        match b {
            BvNormArg::Full => BvNorm::Full,
            BvNormArg::Seminorm => BvNorm::Seminorm,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum DepthArg {
    #[value(name = "8")]
    Eight,
    #[value(name = "16")]
    Sixteen,
}

impl From<DepthArg> for PgmDepth {
    fn from(d: DepthArg) -> Self {
        match d {
            DepthArg::Eight => PgmDepth::Eight,
            DepthArg::Sixteen => PgmDepth::Sixteen,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ShapeKind {
    Disk,
    TexturedSquare,
    Bar,
    GaussianBump,
    Noise,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum TextureArg {
    /// μ‖w‖_G is a penalty.
    Penalty,
    /// ‖w‖_G ≤ μ is a hard constraint.
    Ball,
}

/// An input image plus an optional spacing override.
#[derive(Debug, Args)]
pub struct InputArgs {
    /// Input image (.pgm or .bvgf).
    #[arg(short, long = "input", value_name = "FILE")]
    pub input: PathBuf,

    /// Pixel size, overriding the one stored in the file.
    #[arg(long)]
    pub spacing: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ImageOutArgs {
    /// Sample depth of PGM outputs.
    #[arg(long, value_enum, default_value = "8")]
    pub depth: DepthArg,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, required_unless_present = "spec")]
    pub kind: Option<ShapeKind>,

    /// Scene description as JSON (any shape, including composites).
    #[arg(long, conflicts_with = "kind", value_name = "FILE")]
    pub spec: Option<PathBuf>,

    /// Pixels, as WIDTHxHEIGHT.
    #[arg(long, default_value = "512x512")]
    pub grid: String,

    /// Physical window, as x0,y0,x1,y1.
    #[arg(long, default_value = "-2,-2,2,2", allow_hyphen_values = true)]
    pub domain: String,

    #[arg(long, default_value = "0,0", allow_hyphen_values = true)]
    pub center: String,

    /// Disk radius.
    #[arg(long = "r", default_value_t = 1.0)]
    pub radius: f64,

    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub amplitude: f64,

    /// Side of the textured square.
    #[arg(long, default_value_t = 1.0)]
    pub side: f64,

    /// Texture frequency in cycles per unit length.
    #[arg(long, default_value_t = 8.0)]
    pub frequency: f64,

    /// Bar length.
    #[arg(long, default_value_t = 0.8)]
    pub length: f64,

    /// Bar thickness.
    #[arg(long, default_value_t = 0.01)]
    pub thickness: f64,

    /// Bar direction in degrees.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub angle: f64,

    /// Standard deviation of the bump or of the noise.
    #[arg(long, default_value_t = 0.25)]
    pub sigma: f64,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Average 4×4 samples per pixel.
    #[arg(long)]
    pub supersample: bool,

    /// Gaussian edge blur in pixels.
    #[arg(long)]
    pub edge_blur: Option<f64>,

    /// Fail on under-resolved features instead of warning.
    #[arg(long)]
    pub strict: bool,

    /// Output image (.pgm or .bvgf).
    #[arg(short, long, value_name = "FILE")]
    pub output: PathBuf,

    /// Analytic reference values as JSON.
    #[arg(long, value_name = "FILE")]
    pub oracle: Option<PathBuf>,

    #[command(flatten)]
    pub out: ImageOutArgs,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("weight").required(true).args(["lambda", "ball_radius"]))]
pub struct RofArgs {
    #[command(flatten)]
    pub input: InputArgs,

    /// Fidelity weight of J(u) + λ‖f − u‖².
    #[arg(long)]
    pub lambda: Option<f64>,

    /// Radius of the G-ball, 1/(2λ).
    #[arg(long)]
    pub ball_radius: Option<f64>,

    /// Stop once the dual field moves less than this in max-norm.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,

    #[arg(long, default_value_t = 5000)]
    pub max_iters: usize,

    #[arg(long, value_enum, default_value = "neumann")]
    pub boundary: BoundaryArg,

    /// Momentum steps instead of the plain fixed point.
    #[arg(long)]
    pub accelerated: bool,

    /// Denoised image u.
    #[arg(short, long, value_name = "FILE")]
    pub output: PathBuf,

    /// Removed part v = f − u.
    #[arg(long, value_name = "FILE")]
    pub v_out: Option<PathBuf>,

    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,

    #[command(flatten)]
    pub out: ImageOutArgs,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    #[arg(long)]
    pub lambda: f64,

    #[arg(long)]
    pub mu: f64,

    /// Outer stopping tolerance on the max-norm change of u and w.
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,

    #[arg(long, default_value_t = 200)]
    pub max_iters: usize,

    /// Start every inner projection from zero.
    #[arg(long)]
    pub no_warm_start: bool,

    #[arg(long, value_enum, default_value = "neumann")]
    pub boundary: BoundaryArg,

    #[arg(long, value_enum, default_value = "penalty")]
    pub texture: TextureArg,
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    #[command(flatten)]
    pub input: InputArgs,

    #[command(flatten)]
    pub solver: SolverArgs,

    /// Outputs go to PREFIX_{u,v,w}.{pgm,bvgf} and PREFIX_report.json.
    #[arg(long, value_name = "PREFIX")]
    pub out_prefix: PathBuf,

    /// BV norm used in the report.
    #[arg(long, value_enum, default_value = "full")]
    pub bv_norm: BvNormArg,

    /// Relative tolerance of the G-norm estimates in the report.
    #[arg(long, default_value_t = 1e-3)]
    pub gnorm_tol: f64,

    /// Skip the optimality check in the report.
    #[arg(long)]
    pub no_check: bool,

    #[command(flatten)]
    pub out: ImageOutArgs,
}

#[derive(Debug, Args)]
pub struct NormArgs {
    /// Subtract the mean before estimating the G-norm.
    #[arg(long)]
    pub subtract_mean: bool,

    #[arg(long, value_enum, default_value = "neumann")]
    pub boundary: BoundaryArg,

    /// Relative tolerance of the G-norm estimate.
    #[arg(long, default_value_t = 1e-3)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub input: InputArgs,

    #[command(flatten)]
    pub norms: NormArgs,

    #[arg(long, value_name = "FILE")]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GnormArgs {
    #[command(flatten)]
    pub input: InputArgs,

    #[command(flatten)]
    pub norms: NormArgs,

    #[arg(long, value_name = "FILE")]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TheoremArgs {
    #[arg(long)]
    pub lambda: f64,

    #[arg(long)]
    pub mu: f64,

    /// Relative tolerance of the equalities.
    #[arg(long, default_value_t = 0.05)]
    pub tol: f64,

    #[arg(long, value_enum, default_value = "neumann")]
    pub boundary: BoundaryArg,

    #[arg(long, value_enum, default_value = "full")]
    pub bv_norm: BvNormArg,

    #[arg(long, value_name = "FILE")]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub input: InputArgs,

    #[command(flatten)]
    pub theorem: TheoremArgs,

    /// Subtract the mean before estimating the G-norm.
    #[arg(long)]
    pub subtract_mean: bool,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[arg(short = 'u', long = "u", value_name = "FILE")]
    pub u: PathBuf,

    #[arg(short = 'v', long = "v", value_name = "FILE")]
    pub v: PathBuf,

    #[arg(short = 'w', long = "w", value_name = "FILE")]
    pub w: PathBuf,

    #[command(flatten)]
    pub theorem: TheoremArgs,
}

#[derive(Debug, Args)]
pub struct DetectRoadsArgs {
    #[command(flatten)]
    pub input: InputArgs,

    #[command(flatten)]
    pub solver: SolverArgs,

    /// NFA threshold.
    #[arg(long, default_value_t = 1.0)]
    pub epsilon: f64,

    /// Shortest segment kept, in physical units.
    #[arg(long, default_value_t = 0.0)]
    pub min_length: f64,

    /// Angular tolerance as a fraction of π.
    #[arg(long, default_value_t = 1.0 / 16.0)]
    pub precision: f64,

    /// Distance between samples along a candidate, in pixels.
    #[arg(long, default_value_t = 2.0)]
    pub stride: f64,

    /// Candidate directions over [0, π).
    #[arg(long, default_value_t = 64)]
    pub directions: usize,

    /// Merge distance in physical units (default 3 pixels).
    #[arg(long)]
    pub merge_dist: Option<f64>,

    /// Merge angle in degrees.
    #[arg(long, default_value_t = 5.0)]
    pub merge_angle: f64,

    /// Largest gap bridged by chaining, in physical units (default 10 pixels).
    #[arg(long)]
    pub chain_gap: Option<f64>,

    /// Segments as a JSON array.
    #[arg(long, value_name = "FILE")]
    pub segments: Option<PathBuf>,

    /// Segments as CSV.
    #[arg(long, value_name = "FILE")]
    pub csv: Option<PathBuf>,

    /// Input with the segments drawn on it.
    #[arg(long, value_name = "FILE")]
    pub overlay: Option<PathBuf>,

    /// Texture component w.
    #[arg(long, value_name = "FILE")]
    pub w_out: Option<PathBuf>,

    /// Parameters, counts and run manifest as JSON.
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,

    #[command(flatten)]
    pub out: ImageOutArgs,
}
