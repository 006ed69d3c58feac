//! Interior/exterior labeling with local tetrahedral hulls.
//!
//! Every point not yet known to be interior builds a tetrahedron from its
//! k-neighbourhood; any point strictly inside it becomes interior. Points
//! never captured by a hull end up exterior.

use nalgebra::{Matrix3, Vector3};

use crate::cloud::{distance, Point3, PointCloud, Region};
use crate::error::{Error, Result};
use crate::kdtree::SpatialIndex;

/// Boundary band for the inside test, in barycentric units.
pub const INSIDE_EPS: f64 = 1e-9;

/// Relative singularity threshold: `|det| <= SINGULAR_EPS * scale^3` is degenerate.
pub const SINGULAR_EPS: f64 = 1e-9;

/// A test vertex and the four tetrahedron corners chosen around it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HullVertices {
    pub v0: Point3,
    pub corners: [Point3; 4],
    /// Caller-supplied ids of the corners.
    pub corner_ids: [usize; 4],
}

impl HullVertices {
    /// Tetrahedron with anonymous corners (ids 0..4).
    pub fn new(v0: Point3, v1: Point3, v2: Point3, v3: Point3, v4: Point3) -> Self {
        Self {
            v0,
            corners: [v1, v2, v3, v4],
            corner_ids: [0, 1, 2, 3],
        }
    }
}

/// Coordinates of `v0 - v1` in the basis `{v2-v1, v3-v1, v4-v1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarycentricCoeffs {
    pub u: f64,
    pub v: f64,
    pub w: f64,
}

/// Inverted tetrahedron basis, reusable for many query points.
#[derive(Debug, Clone, Copy)]
pub struct LocalHull {
    origin: Point3,
    inverse: Matrix3<f64>,
}

impl LocalHull {
    pub fn new(corners: &[Point3; 4]) -> Result<Self> {
        let [v1, v2, v3, v4] = *corners;
        let basis = Matrix3::from_columns(&[v2 - v1, v3 - v1, v4 - v1]);
        let mut scale: f64 = 0.0;
        for i in 0..4 {
            for j in i + 1..4 {
                scale = scale.max(distance(&corners[i], &corners[j]));
            }
        }
        let det = basis.determinant();
        if !(det.abs() > SINGULAR_EPS * scale.powi(3)) {
            return Err(Error::DegenerateTetrahedron);
        }
        let inverse = basis.try_inverse().ok_or(Error::DegenerateTetrahedron)?;
        Ok(Self {
            origin: v1,
            inverse,
        })
    }

    pub fn coeffs(&self, p: &Point3) -> BarycentricCoeffs {
        let c: Vector3<f64> = self.inverse * (p - self.origin);
        BarycentricCoeffs {
            u: c.x,
            v: c.y,
            w: c.z,
        }
    }

    pub fn contains(&self, p: &Point3) -> bool {
        is_inside(&self.coeffs(p))
    }
}

pub fn barycentric_coeffs(h: &HullVertices) -> Result<BarycentricCoeffs> {
    Ok(LocalHull::new(&h.corners)?.coeffs(&h.v0))
}

/// Strict interior test. Points within `INSIDE_EPS` of a face count as outside.
pub fn is_inside(c: &BarycentricCoeffs) -> bool {
    c.u > INSIDE_EPS && c.v > INSIDE_EPS && c.w > INSIDE_EPS && c.u + c.v + c.w < 1.0 - INSIDE_EPS
}

/// Index of the maximum score; equal scores resolve to the lowest id.
fn arg_max<F>(neighbors: &[(usize, Point3)], skip: &[usize], score: F) -> Option<(usize, f64)>
where
    F: Fn(&Point3) -> f64,
{
    let mut best: Option<(usize, usize, f64)> = None;
    for (pos, (id, p)) in neighbors.iter().enumerate() {
        if skip.contains(id) {
            continue;
        }
        let s = score(p);
        let better = match best {
            None => true,
            Some((_, bid, bs)) => s > bs || (s == bs && *id < bid),
        };
        if better {
            best = Some((pos, *id, s));
        }
    }
    best.map(|(pos, _, s)| (pos, s))
}

/// Picks the tetrahedron corners around `v0`:
/// the furthest neighbour, then the one reaching furthest past `v0` from it,
/// then the furthest from their line, then the furthest from their plane.
/// `neighbors` must not contain `v0` itself.
pub fn select_hull_vertices(v0: Point3, neighbors: &[(usize, Point3)]) -> Result<HullVertices> {
    if neighbors.len() < 4 {
        return Err(Error::DegenerateTetrahedron);
    }
    let (i1, reach) = arg_max(neighbors, &[], |p| distance(p, &v0)).unwrap();
    let (id1, v1) = neighbors[i1];
    if reach <= 0.0 {
        return Err(Error::DegenerateTetrahedron);
    }
    let tol = 1e-9 * reach;

    let dir0 = (v0 - v1) / reach;
    let (i2, _) = arg_max(neighbors, &[id1], |p| (p - v1).dot(&dir0)).unwrap();
    let (id2, v2) = neighbors[i2];
    let axis = v2 - v1;
    let axis_len = axis.norm();
    if axis_len <= tol {
        return Err(Error::DegenerateTetrahedron);
    }
    let axis = axis / axis_len;

    let (i3, off_line) = arg_max(neighbors, &[id1, id2], |p| {
        let d = p - v1;
        (d - axis * d.dot(&axis)).norm()
    })
    .unwrap();
    let (id3, v3) = neighbors[i3];
    if off_line <= tol {
        return Err(Error::DegenerateTetrahedron);
    }
    let normal = (v2 - v1).cross(&(v3 - v1)).normalize();

    let (i4, off_plane) =
        arg_max(neighbors, &[id1, id2, id3], |p| (p - v1).dot(&normal).abs()).unwrap();
    let (id4, v4) = neighbors[i4];
    if off_plane <= tol {
        return Err(Error::DegenerateTetrahedron);
    }

    Ok(HullVertices {
        v0,
        corners: [v1, v2, v3, v4],
        corner_ids: [id1, id2, id3, id4],
    })
}

/// Labels every point interior or exterior using `k`-neighbourhood hulls,
/// sweeping test vertices in ascending id order.
pub fn classify_points(cloud: &PointCloud, index: &SpatialIndex, k: usize) -> Result<Vec<Region>> {
    if k < 4 {
        return Err(Error::InvalidParameter(format!(
            "hull neighbourhood k must be >= 4, got {k}"
        )));
    }
    let n = cloud.len();
    let mut interior = vec![false; n];
    if n < 5 {
        return Ok(vec![Region::Exterior; n]);
    }
    let points = cloud.points();
    for i in 0..n {
        if interior[i] {
            continue;
        }
        let neighbors: Vec<(usize, Point3)> = index
            .k_nearest(&points[i], k + 1)
            .into_iter()
            .filter(|&j| j != i)
            .take(k)
            .map(|j| (j, points[j]))
            .collect();
        let Ok(hull) = select_hull_vertices(points[i], &neighbors) else {
            continue;
        };
        let Ok(local) = LocalHull::new(&hull.corners) else {
            continue;
        };
        let center = Point3::from(
            hull.corners
                .iter()
                .fold(Vector3::zeros(), |acc, c| acc + c.coords)
                / 4.0,
        );
        let radius = hull
            .corners
            .iter()
            .map(|c| distance(c, &center))
            .fold(0.0, f64::max);
        for (j, _) in index.within_radius(&center, radius * (1.0 + 1e-9)) {
            if interior[j] || hull.corner_ids.contains(&j) {
                continue;
            }
            if local.contains(&points[j]) {
                interior[j] = true;
            }
        }
    }
    Ok(interior
        .into_iter()
        .map(|b| if b { Region::Interior } else { Region::Exterior })
        .collect())
}
