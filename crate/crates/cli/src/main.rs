//! `rigkit` command line front end.

mod commands;
mod render;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Exit status 2: the command line was well formed but asked for something
/// that cannot be done.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser, Debug)]
#[command(name = "rigkit", version, about = "Rig processing and evaluation toolkit")]
pub struct Cli {
    /// Seed for every randomized step; overrides a manifest seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "RIGKIT_THREADS")]
    pub threads: Option<usize>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct RigInput {
    /// Rig document (.json) or RigNet rig file (.txt).
    pub rig: PathBuf,
    /// Mesh OBJ; overrides the document's mesh reference.
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    /// Skin bone naming used by RigNet files.
    #[arg(long, value_enum, default_value_t = Naming::Tail)]
    pub naming: Naming,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Naming {
    Tail,
    Head,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Table,
    Json,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum View {
    Front,
    Side,
    Top,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Map mesh and joints into the unit box.
    Normalize {
        #[command(flatten)]
        input: RigInput,
        /// Output document; the mesh is written next to it.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Check structural invariants; exits 1 when any are violated.
    Validate {
        #[command(flatten)]
        input: RigInput,
    },
    /// Encode the skeleton as a breadth-first token stream.
    Tokenize {
        #[command(flatten)]
        input: RigInput,
        #[arg(long, default_value_t = rigkit::codec::DEFAULT_MAX_JOINTS)]
        max_joints: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Decode a token stream back into a rig document.
    Detokenize {
        tokens: PathBuf,
        /// Rig whose names, mesh and skin are carried over when the decoded
        /// tree matches it.
        #[arg(long)]
        template: Option<PathBuf>,
        #[arg(long)]
        template_mesh: Option<PathBuf>,
        /// Keep coordinates in the unit box instead of undoing the stored
        /// normalization.
        #[arg(long)]
        normalized: bool,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Rasterize every bone into a sparse occupancy grid.
    VoxelizeBones {
        #[command(flatten)]
        input: RigInput,
        #[arg(long, default_value_t = rigkit::voxel::DEFAULT_RESOLUTION)]
        resolution: u32,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Voxels overlapped by the mesh surface.
    VoxelizeSurface {
        #[command(flatten)]
        input: RigInput,
        #[arg(long, default_value_t = rigkit::voxel::DEFAULT_RESOLUTION)]
        resolution: u32,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Skinning-weighted bone features attached to voxelized bones.
    BoneFeatures {
        #[command(flatten)]
        input: RigInput,
        /// Per-vertex feature file (joint-indexed embedding format, one row
        /// per vertex); defaults to normalized vertex positions.
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long, default_value_t = rigkit::voxel::DEFAULT_RESOLUTION)]
        resolution: u32,
        #[arg(long, default_value_t = rigkit::voxel::DEFAULT_POOL_EPSILON)]
        epsilon: f64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Distance-based skin weights.
    SkinHeuristic {
        #[command(flatten)]
        input: RigInput,
        #[arg(long, default_value_t = 20.0)]
        sharpness: f64,
        /// Keep the four largest weights per vertex.
        #[arg(long)]
        top4: bool,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Skin weights from point and bone embeddings.
    SkinFromEmbeddings {
        #[command(flatten)]
        input: RigInput,
        /// Per-vertex embeddings.
        #[arg(long)]
        points: PathBuf,
        /// Per-bone embeddings, in bone column order.
        #[arg(long)]
        bones: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Deform the mesh with linear blend skinning.
    Pose {
        #[command(flatten)]
        input: RigInput,
        /// Pose file with local joint rotations.
        #[arg(long)]
        pose: PathBuf,
        /// Posed OBJ.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Score every pair of a manifest.
    Eval {
        manifest: PathBuf,
        #[arg(long, value_enum, default_value_t = ReportFormat::Table)]
        format: ReportFormat,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Also write the JSON report here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Rank vocabulary labels for each joint embedding.
    LabelAssign {
        #[arg(long)]
        joints: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(short, long, default_value_t = 5)]
        k: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Normalize raw joint names into labels.
    LabelClean {
        names: Vec<String>,
        /// File with one raw name per line.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Contrastive loss of labeled joint embeddings against the vocabulary.
    LabelScore {
        #[arg(long)]
        joints: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long, default_value_t = 0.07)]
        temperature: f64,
    },
    /// SVG projection of joints and bones.
    RenderSkeleton {
        #[command(flatten)]
        input: RigInput,
        #[arg(long, value_enum, default_value_t = View::Front)]
        view: View,
        #[arg(long, default_value_t = 512)]
        size: u32,
        /// Draw joint names.
        #[arg(long)]
        labels: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Write a synthetic evaluation set: meshes, rigs and a manifest.
    Synth {
        #[arg(long, default_value_t = 270)]
        pairs: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1000)]
        min_vertices: usize,
        #[arg(long, default_value_t = 5000)]
        max_vertices: usize,
        #[arg(long, default_value_t = 64)]
        max_bones: usize,
        /// Joint displacement of the predictions.
        #[arg(long, default_value_t = 0.03)]
        jitter: f64,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
