//! Point-cloud container and per-point normal estimation.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kdtree::SpatialIndex;

pub type Point3 = nalgebra::Point3<f64>;

/// Euclidean distance. Symmetric bit-for-bit in its arguments.
#[inline]
pub fn distance(a: &Point3, b: &Point3) -> f64 {
    (a - b).norm_squared().sqrt()
}

/// Result of the local convex hull test for one point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Region {
    Interior,
    Exterior,
}

/// Unit normal, or `None` where the neighbourhood is rank-deficient.
///
/// Normals carry no orientation: `n` and `-n` describe the same surface and
/// must only be compared through `|a · b|`.
pub type Normal = Option<Vector3<f64>>;

/// Ordered point set with optional normals and region flags, aligned by index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3>,
    normals: Option<Vec<Normal>>,
    regions: Option<Vec<Region>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        if let Some(i) = points
            .iter()
            .position(|p| !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()))
        {
            return Err(Error::NonFinite(i));
        }
        Ok(Self {
            points,
            normals: None,
            regions: None,
        })
    }

    pub fn from_xyz(coords: &[[f64; 3]]) -> Result<Self> {
        Self::new(coords.iter().map(|c| Point3::new(c[0], c[1], c[2])).collect())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn point(&self, id: usize) -> Point3 {
        self.points[id]
    }

    pub fn normals(&self) -> Option<&[Normal]> {
        self.normals.as_deref()
    }

    pub fn regions(&self) -> Option<&[Region]> {
        self.regions.as_deref()
    }

    pub fn with_normals(mut self, normals: Vec<Normal>) -> Result<Self> {
        if normals.len() != self.points.len() {
            return Err(Error::InvalidParameter(format!(
                "{} normals for {} points",
                normals.len(),
                self.points.len()
            )));
        }
        for n in normals.iter().flatten() {
            if (n.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidParameter("normal is not unit length".into()));
            }
        }
        self.normals = Some(normals);
        Ok(self)
    }

    pub fn with_regions(mut self, regions: Vec<Region>) -> Result<Self> {
        if regions.len() != self.points.len() {
            return Err(Error::InvalidParameter(format!(
                "{} region flags for {} points",
                regions.len(),
                self.points.len()
            )));
        }
        self.regions = Some(regions);
        Ok(self)
    }

    /// Copy of the points at `ids`, carrying normals and regions along.
    pub fn subset(&self, ids: &[usize]) -> PointCloud {
        PointCloud {
            points: ids.iter().map(|&i| self.points[i]).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|n| ids.iter().map(|&i| n[i]).collect()),
            regions: self
                .regions
                .as_ref()
                .map(|r| ids.iter().map(|&i| r[i]).collect()),
        }
    }
}

/// PCA normal of each point's `k`-neighbourhood (the point itself included).
///
/// The normal is the eigenvector of the smallest covariance eigenvalue. When
/// the neighbourhood has rank < 2 (coincident or collinear points) the entry
/// is `None`.
pub fn estimate_normals(cloud: &PointCloud, index: &SpatialIndex, k: usize) -> Result<Vec<Normal>> {
    if k < 3 {
        return Err(Error::InvalidParameter(format!(
            "normal neighbourhood k must be >= 3, got {k}"
        )));
    }
    if cloud.len() < 3 {
        return Err(Error::NormalsUndefined(cloud.len()));
    }
    Ok(cloud
        .points()
        .par_iter()
        .map(|p| {
            let ids = index.k_nearest(p, k);
            let pts: Vec<Point3> = ids.iter().map(|&i| index.point(i)).collect();
            pca_normal(&pts)
        })
        .collect())
}

/// Smallest-variance direction of `pts`, or `None` if they span fewer than two dimensions.
pub fn pca_normal(pts: &[Point3]) -> Normal {
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mean = pts.iter().fold(Vector3::zeros(), |acc, p| acc + p.coords) / n;
    let mut cov = Matrix3::zeros();
    for p in pts {
        let d = p.coords - mean;
        cov += d * d.transpose();
    }
    cov /= n;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let largest = eig.eigenvalues[order[2]];
    let middle = eig.eigenvalues[order[1]];
    if largest <= 0.0 || middle <= 1e-10 * largest {
        return None;
    }
    let v: Vector3<f64> = eig.eigenvectors.column(order[0]).into_owned();
    let norm = v.norm();
    if norm == 0.0 || !norm.is_finite() {
        return None;
    }
    Some(v / norm)
}
