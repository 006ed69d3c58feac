//! Segmentation of 3-D point clouds by repeated minimum-cost perfect matching
//! over a cluster proximity graph.

pub mod cloud;
pub mod engine;
pub mod error;
pub mod hull;
pub mod io;
pub mod kdtree;
pub mod matching;
pub mod metrics;
pub mod pipeline;
pub mod proximity;

pub use cloud::{estimate_normals, Normal, Point3, PointCloud, Region};
pub use engine::{run, Dendrogram, DendrogramLevel, Ohc, OhcState, Segmentation};
pub use error::{Error, Result};
pub use hull::classify_points;
pub use kdtree::SpatialIndex;
pub use matching::{solve_min_cost_perfect_matching, BipartiteCostView, MatchingResult};
pub use metrics::{score, Partition, ScoreReport};
pub use pipeline::{segment_large_scale, GroundParams, LabeledCloud};
pub use proximity::OhcParams;
