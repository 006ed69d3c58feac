use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ohc::cloud::Region;
use ohc::engine::Ohc;
use ohc::hull::classify_points;
use ohc::io;
use ohc::metrics::{score, Partition};
use ohc::pipeline::{segment_large_scale, GroundParams, LabeledCloud, GROUND_LABEL};
use ohc::{OhcParams, SpatialIndex};

#[derive(Parser)]
#[command(name = "ohc", version, about = "Point cloud segmentation by optimal hierarchical clustering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy)]
struct ClusterArgs {
    /// Neighbourhood size for normals
    #[arg(long, default_value_t = 40)]
    k: usize,
    /// Neighbourhood size for the boundary test (defaults to --k)
    #[arg(long)]
    hull_k: Option<usize>,
    /// Weight split between distance and normal terms
    #[arg(long, default_value_t = 4.0)]
    lambda: f64,
    /// Cost of leaving a cluster unmerged
    #[arg(long, default_value_t = 0.4)]
    sm: f64,
    /// Adjacency cutoff on normalized distance
    #[arg(long, default_value_t = 5.0)]
    gamma: f64,
}

impl ClusterArgs {
    fn params(self) -> OhcParams {
        OhcParams {
            k: self.k,
            hull_k: self.hull_k,
            lambda: self.lambda,
            sm: self.sm,
            gamma: self.gamma,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Cluster a whole cloud
    Segment {
        input: PathBuf,
        #[command(flatten)]
        cluster: ClusterArgs,
        /// Label file (defaults to the input with a .labels extension)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Colored PLY output
        #[arg(long)]
        ply: Option<PathBuf>,
        /// Dendrogram JSON output
        #[arg(long)]
        dendrogram: Option<PathBuf>,
    },
    /// Ground removal, downsampling, clustering and label propagation
    Pipeline {
        input: PathBuf,
        #[command(flatten)]
        cluster: ClusterArgs,
        /// Fraction of off-ground points kept for clustering
        #[arg(long, default_value_t = 0.1)]
        fraction: f64,
        /// Ground grid cell size
        #[arg(long, default_value_t = 1.0)]
        cell: f64,
        /// Height above the cell minimum still counted as ground
        #[arg(long, default_value_t = 0.2)]
        height_tol: f64,
        /// Treat every point as off-ground
        #[arg(long)]
        no_ground: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        ply: Option<PathBuf>,
    },
    /// Color points red (exterior) or blue (interior)
    ClassifyBoundary {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 40)]
        k: usize,
    },
    /// Compare two label files
    Evaluate {
        result: PathBuf,
        truth: PathBuf,
        /// Leave out points labeled 0 in either file
        #[arg(long)]
        ignore_ground: bool,
    },
}

fn default_out(input: &Path) -> PathBuf {
    input.with_extension("labels")
}

fn run(command: Command) -> ohc::Result<()> {
    match command {
        Command::Segment {
            input,
            cluster,
            out,
            ply,
            dendrogram,
        } => {
            let cloud = io::read_cloud(&input)?;
            let seg = Ohc::new(&cloud, cluster.params())?.run()?;
            let labels: Vec<u32> = seg.labels().iter().map(|&c| c as u32 + 1).collect();
            let out = out.unwrap_or_else(|| default_out(&input));
            io::write_labels(&out, &labels)?;
            if let Some(path) = ply {
                let n = cloud.len();
                io::write_labeled_ply(
                    path,
                    &LabeledCloud {
                        cloud,
                        labels,
                        ground: vec![false; n],
                    },
                )?;
            }
            if let Some(path) = dendrogram {
                io::write_dendrogram(path, &seg.dendrogram)?;
            }
            println!("{} clusters -> {}", seg.clusters.len(), out.display());
        }
        Command::Pipeline {
            input,
            cluster,
            fraction,
            cell,
            height_tol,
            no_ground,
            out,
            ply,
        } => {
            let cloud = io::read_cloud(&input)?;
            let ground = (!no_ground).then_some(GroundParams {
                cell_size: cell,
                height_tol,
            });
            let labeled = segment_large_scale(&cloud, cluster.params(), fraction, ground)?;
            let out = out.unwrap_or_else(|| default_out(&input));
            io::write_labels(&out, &labeled.labels)?;
            if let Some(path) = ply {
                io::write_labeled_ply(path, &labeled)?;
            }
            let grounded = labeled.ground.iter().filter(|&&g| g).count();
            println!(
                "{} objects, {} ground points -> {}",
                labeled.object_count(),
                grounded,
                out.display()
            );
        }
        Command::ClassifyBoundary { input, out, k } => {
            let cloud = io::read_cloud(&input)?;
            let index = SpatialIndex::build(&cloud)?;
            let regions = classify_points(&cloud, &index, k)?;
            let colors: Vec<[u8; 3]> = regions
                .iter()
                .map(|r| match r {
                    Region::Exterior => [255, 0, 0],
                    Region::Interior => [0, 0, 255],
                })
                .collect();
            io::write_colored_ply(&out, &cloud, &colors)?;
            let interior = regions.iter().filter(|r| **r == Region::Interior).count();
            println!("{interior} interior, {} exterior", regions.len() - interior);
        }
        Command::Evaluate {
            result,
            truth,
            ignore_ground,
        } => {
            let result = io::read_labels(result, None)?;
            let truth = io::read_labels(truth, Some(result.len()))?;
            let keep = |l: u32| !(ignore_ground && l == GROUND_LABEL);
            let pick = |labels: &[u32]| -> Vec<Option<u32>> {
                labels
                    .iter()
                    .zip(result.iter().zip(&truth))
                    .map(|(&l, (&a, &b))| (keep(a) && keep(b)).then_some(l))
                    .collect()
            };
            let report = score(
                &Partition::from_labels(&pick(&result)),
                &Partition::from_labels(&pick(&truth)),
            )?;
            print!("{}", io::format_scores(&report));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
