//! Large-scene workflow: drop ground, cluster a voxel sample of what is left,
//! then hand every remaining point the label of its nearest sampled point.

use std::collections::HashMap;

use nalgebra::Vector3;

use crate::cloud::{distance, Point3, PointCloud};
use crate::engine::Ohc;
use crate::error::{Error, Result};
use crate::kdtree::SpatialIndex;
use crate::proximity::OhcParams;

/// Label reserved for ground points.
pub const GROUND_LABEL: u32 = 0;

/// Grid-minimum ground filter settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundParams {
    pub cell_size: f64,
    pub height_tol: f64,
}

impl Default for GroundParams {
    fn default() -> Self {
        Self {
            cell_size: 1.0,
            height_tol: 0.2,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GroundSplit {
    pub ground: Vec<usize>,
    pub off_ground: Vec<usize>,
}

/// A point is ground when it sits within `height_tol` of the lowest point in
/// its `cell_size` x `cell_size` XY column.
pub fn filter_ground(cloud: &PointCloud, cell_size: f64, height_tol: f64) -> Result<GroundSplit> {
    if !(cell_size > 0.0 && cell_size.is_finite()) {
        return Err(Error::InvalidParameter(format!("cell size must be > 0, got {cell_size}")));
    }
    if height_tol.is_nan() || height_tol < 0.0 {
        return Err(Error::InvalidParameter(format!("height tolerance must be >= 0, got {height_tol}")));
    }
    let cell = |p: &Point3| ((p.x / cell_size).floor() as i64, (p.y / cell_size).floor() as i64);
    let mut lowest: HashMap<(i64, i64), f64> = HashMap::new();
    for p in cloud.points() {
        lowest
            .entry(cell(p))
            .and_modify(|z| *z = z.min(p.z))
            .or_insert(p.z);
    }
    let mut split = GroundSplit::default();
    for (i, p) in cloud.points().iter().enumerate() {
        if p.z - lowest[&cell(p)] <= height_tol {
            split.ground.push(i);
        } else {
            split.off_ground.push(i);
        }
    }
    Ok(split)
}

/// Voxel-grid sample of a cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct Downsample {
    pub cloud: PointCloud,
    /// Original id of each sampled point, ascending.
    pub ids: Vec<usize>,
    /// `None` when every point was kept without gridding.
    pub voxel_size: Option<f64>,
}

fn voxel_key(p: &Point3, origin: &Point3, size: f64) -> (i64, i64, i64) {
    (
        ((p.x - origin.x) / size).floor() as i64,
        ((p.y - origin.y) / size).floor() as i64,
        ((p.z - origin.z) / size).floor() as i64,
    )
}

fn bounding_box(points: &[Point3]) -> (Point3, Point3) {
    let mut lo = points[0];
    let mut hi = points[0];
    for p in points {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    (lo, hi)
}

fn occupied_voxels(points: &[Point3], origin: &Point3, size: f64) -> usize {
    let mut seen = std::collections::HashSet::new();
    for p in points {
        seen.insert(voxel_key(p, origin, size));
    }
    seen.len()
}

/// In each occupied voxel, the point nearest the voxel's centroid (lowest id on ties).
pub fn voxel_sample(cloud: &PointCloud, size: f64) -> Vec<usize> {
    if cloud.is_empty() {
        return Vec::new();
    }
    let (origin, _) = bounding_box(cloud.points());
    let mut voxels: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
    for (i, p) in cloud.points().iter().enumerate() {
        voxels.entry(voxel_key(p, &origin, size)).or_default().push(i);
    }
    let mut kept: Vec<usize> = voxels
        .values()
        .map(|ids| {
            let sum = ids
                .iter()
                .fold(Vector3::zeros(), |acc, &i| acc + cloud.point(i).coords);
            let centroid = Point3::from(sum / ids.len() as f64);
            *ids.iter()
                .min_by(|&&a, &&b| {
                    distance(&cloud.point(a), &centroid)
                        .total_cmp(&distance(&cloud.point(b), &centroid))
                        .then(a.cmp(&b))
                })
                .unwrap()
        })
        .collect();
    kept.sort_unstable();
    kept
}

/// Voxel-grid sample keeping about `fraction` of the points (within 5% of the
/// target when the cloud's geometry allows). The voxel size is found by
/// bisection on a log scale.
pub fn downsample(cloud: &PointCloud, fraction: f64) -> Result<Downsample> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidParameter(format!("fraction must be in (0, 1], got {fraction}")));
    }
    let n = cloud.len();
    if fraction == 1.0 || n <= 1 {
        return Ok(Downsample {
            cloud: cloud.clone(),
            ids: (0..n).collect(),
            voxel_size: None,
        });
    }
    let target = ((fraction * n as f64).round() as usize).max(1);
    let slack = 0.05 * target as f64;
    let (origin, hi) = bounding_box(cloud.points());
    let extent = (hi - origin).norm().max(f64::MIN_POSITIVE);

    // Occupied-voxel count falls as the voxel grows.
    let (mut small, mut large) = ((extent * 1e-9).ln(), (extent * 2.0).ln());
    let mut best: Option<(f64, f64)> = None;
    for _ in 0..100 {
        let mid = 0.5 * (small + large);
        let size = mid.exp();
        let count = occupied_voxels(cloud.points(), &origin, size);
        let miss = (count as f64 - target as f64).abs();
        if best.is_none_or(|(m, _)| miss < m) {
            best = Some((miss, size));
        }
        if miss <= slack && count > 0 {
            break;
        }
        if count > target {
            small = mid;
        } else {
            large = mid;
        }
    }
    let size = best.map(|(_, s)| s).unwrap();
    let ids = voxel_sample(cloud, size);
    Ok(Downsample {
        cloud: cloud.subset(&ids),
        ids,
        voxel_size: Some(size),
    })
}

/// Points with a cluster label per point; `ground[i]` points carry [`GROUND_LABEL`].
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCloud {
    pub cloud: PointCloud,
    pub labels: Vec<u32>,
    pub ground: Vec<bool>,
}

impl LabeledCloud {
    pub fn object_count(&self) -> usize {
        let mut ids: Vec<u32> = self
            .labels
            .iter()
            .zip(&self.ground)
            .filter(|(_, g)| !**g)
            .map(|(l, _)| *l)
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }
}

/// Completes a partial labeling: every off-ground point without a label takes
/// the label of its nearest labeled point (lowest label on distance ties).
/// `labels[i]` is `Some` for the labeled subset, and ignored for ground points.
pub fn propagate_labels(full: &PointCloud, ground: &[bool], labels: &[Option<u32>]) -> Result<LabeledCloud> {
    let n = full.len();
    if ground.len() != n || labels.len() != n {
        return Err(Error::LabelCount {
            labels: labels.len().min(ground.len()),
            points: n,
        });
    }
    let seeds: Vec<usize> = (0..n).filter(|&i| !ground[i] && labels[i].is_some()).collect();
    let needs_label = (0..n).any(|i| !ground[i] && labels[i].is_none());
    if seeds.is_empty() {
        if needs_label {
            return Err(Error::Undefined("label propagation without labeled points"));
        }
        return Ok(LabeledCloud {
            cloud: full.clone(),
            labels: vec![GROUND_LABEL; n],
            ground: ground.to_vec(),
        });
    }
    let index = SpatialIndex::from_points(seeds.iter().map(|&i| full.point(i)).collect())?;
    let out: Vec<u32> = (0..n)
        .map(|i| {
            if ground[i] {
                return GROUND_LABEL;
            }
            if let Some(l) = labels[i] {
                return l;
            }
            let p = full.point(i);
            let (_, d) = index.k_nearest_with_distance(&p, 1)[0];
            index
                .within_radius(&p, d)
                .into_iter()
                .map(|(s, _)| labels[seeds[s]].unwrap())
                .min()
                .unwrap()
        })
        .collect();
    Ok(LabeledCloud {
        cloud: full.clone(),
        labels: out,
        ground: ground.to_vec(),
    })
}

/// Ground removal, voxel downsampling, clustering of the sample and label
/// propagation. Ground is skipped entirely when `ground_params` is `None`.
/// Object labels start at 1 in the order of each cluster's smallest point.
pub fn segment_large_scale(
    cloud: &PointCloud,
    params: OhcParams,
    fraction: f64,
    ground_params: Option<GroundParams>,
) -> Result<LabeledCloud> {
    if cloud.is_empty() {
        return Err(Error::EmptyInput);
    }
    params.validate()?;
    let n = cloud.len();
    let split = match ground_params {
        Some(g) => filter_ground(cloud, g.cell_size, g.height_tol)?,
        None => GroundSplit {
            ground: Vec::new(),
            off_ground: (0..n).collect(),
        },
    };
    let mut ground = vec![false; n];
    for &i in &split.ground {
        ground[i] = true;
    }
    let mut labels: Vec<Option<u32>> = vec![None; n];
    if !split.off_ground.is_empty() {
        let objects = cloud.subset(&split.off_ground);
        let sample = downsample(&objects, fraction)?;
        let seg = Ohc::new(&sample.cloud, params)?.run()?;
        for (local, &cluster) in seg.labels().iter().enumerate() {
            let original = split.off_ground[sample.ids[local]];
            labels[original] = Some(cluster as u32 + 1);
        }
    }
    propagate_labels(cloud, &ground, &labels)
}
