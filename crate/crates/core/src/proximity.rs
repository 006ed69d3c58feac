//! Cluster dissimilarity and the sparse proximity graph.
//!
//! The dissimilarity of two clusters is evaluated at their closest point
//! pair: a spacing-normalised distance term `alpha`, a normal-agreement term
//! `beta`, and a region predicate `delta` selecting how the two are blended.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{Normal, PointCloud, Region};
use crate::error::{Error, Result};
use crate::kdtree::SpatialIndex;

/// Tunable parameters of the clustering.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OhcParams {
    /// Neighbourhood size for normal estimation.
    pub k: usize,
    /// Neighbourhood size for the hull test; `None` reuses `k`.
    pub hull_k: Option<usize>,
    /// Blend weight between distance and direction terms.
    pub lambda: f64,
    /// Cost of leaving a cluster unmerged.
    pub sm: f64,
    /// Two clusters are adjacent when `alpha <= gamma`.
    pub gamma: f64,
}

impl Default for OhcParams {
    fn default() -> Self {
        Self {
            k: 40,
            hull_k: None,
            lambda: 4.0,
            sm: 0.4,
            gamma: 5.0,
        }
    }
}

impl OhcParams {
    pub fn hull_k(&self) -> usize {
        self.hull_k.unwrap_or(self.k)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.k < 3 {
            return bad(format!("k must be >= 3, got {}", self.k));
        }
        if self.hull_k() < 4 {
            return bad(format!("hull k must be >= 4, got {}", self.hull_k()));
        }
        if !(self.lambda >= 2.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be >= 2, got {}", self.lambda));
        }
        if !(self.sm > 0.0 && self.sm.is_finite()) {
            return bad(format!("sm must be > 0, got {}", self.sm));
        }
        if !(self.gamma > 1.0 && self.gamma.is_finite()) {
            return bad(format!("gamma must be > 1, got {}", self.gamma));
        }
        Ok(())
    }
}

/// A set of point ids with its cached median spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub id: usize,
    /// Sorted ascending.
    pub members: Vec<usize>,
    pub spacing: f64,
}

impl Cluster {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, point: usize) -> bool {
        self.members.binary_search(&point).is_ok()
    }
}

/// Partition of the cloud's point ids into clusters.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSet {
    pub clusters: Vec<Cluster>,
    pub point_cluster: Vec<usize>,
}

impl ClusterSet {
    /// One cluster per point, spaced by the nearest-neighbour distance in the full cloud.
    pub fn singletons(index: &SpatialIndex) -> Self {
        let n = index.len();
        let clusters = (0..n)
            .map(|i| Cluster {
                id: i,
                members: vec![i],
                spacing: index.nn_distance(i).unwrap_or(0.0),
            })
            .collect();
        Self {
            clusters,
            point_cluster: (0..n).collect(),
        }
    }

    /// Builds a set from member lists, computing spacings. Cluster ids follow list order.
    pub fn from_members(groups: Vec<Vec<usize>>, index: &SpatialIndex) -> Result<Self> {
        let n = index.len();
        let mut point_cluster = vec![usize::MAX; n];
        let mut clusters = Vec::with_capacity(groups.len());
        for (id, mut members) in groups.into_iter().enumerate() {
            members.sort_unstable();
            if members.is_empty() {
                return Err(Error::InvalidParameter("empty cluster".into()));
            }
            for &p in &members {
                if p >= n || point_cluster[p] != usize::MAX {
                    return Err(Error::InvalidParameter(format!(
                        "point {p} is out of range or in two clusters"
                    )));
                }
                point_cluster[p] = id;
            }
            clusters.push(Cluster {
                id,
                members,
                spacing: 0.0,
            });
        }
        if point_cluster.contains(&usize::MAX) {
            return Err(Error::InvalidParameter("clusters do not cover every point".into()));
        }
        for c in &mut clusters {
            c.spacing = cluster_spacing(c, index)?;
        }
        Ok(Self {
            clusters,
            point_cluster,
        })
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    /// Checks that clusters are non-empty, disjoint, cover all points and match `point_cluster`.
    pub fn check_partition(&self) -> bool {
        let mut seen = vec![false; self.point_cluster.len()];
        for (ci, c) in self.clusters.iter().enumerate() {
            if c.id != ci || c.members.is_empty() {
                return false;
            }
            for &p in &c.members {
                if p >= seen.len() || seen[p] || self.point_cluster[p] != ci {
                    return false;
                }
                seen[p] = true;
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Member lists, one per cluster.
    pub fn groups(&self) -> Vec<Vec<usize>> {
        self.clusters.iter().map(|c| c.members.clone()).collect()
    }
}

/// Closest points between two clusters; `points.0` lies in the first cluster.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosestPair {
    pub points: (usize, usize),
    pub distance: f64,
}

impl ClosestPair {
    fn key(&self) -> (f64, usize, usize) {
        (self.distance, self.points.0, self.points.1)
    }

    fn better_than(&self, other: &ClosestPair) -> bool {
        let (a, b) = (self.key(), other.key());
        a.0 < b.0 || (a.0 == b.0 && (a.1, a.2) < (b.1, b.2))
    }

    fn swapped(self) -> Self {
        Self {
            points: (self.points.1, self.points.0),
            distance: self.distance,
        }
    }
}

/// Closest pair between `a` and `b`; ties go to the lowest `(a point, b point)`.
pub fn closest_pair(a: &Cluster, b: &Cluster, index: &SpatialIndex) -> ClosestPair {
    let (small, large, flip) = if a.len() <= b.len() {
        (a, b, false)
    } else {
        (b, a, true)
    };
    let mut best: Option<ClosestPair> = None;
    for &p in &small.members {
        let limit = best.map_or(f64::INFINITY, |b| b.distance);
        let Some((q, d)) = index.nearest_where(&index.point(p), limit, |q| large.contains(q)) else {
            continue;
        };
        let cand = if flip {
            ClosestPair {
                points: (q, p),
                distance: d,
            }
        } else {
            ClosestPair {
                points: (p, q),
                distance: d,
            }
        };
        if best.is_none_or(|b| cand.better_than(&b)) {
            best = Some(cand);
        }
    }
    best.expect("clusters are non-empty")
}

/// Median of the values; the mean of the middle two for even counts.
pub fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty(), "median of nothing");
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Median over members of the distance to the nearest other member.
/// A singleton uses its nearest neighbour in the whole cloud.
pub fn cluster_spacing(c: &Cluster, index: &SpatialIndex) -> Result<f64> {
    match c.members.as_slice() {
        [] => Err(Error::Undefined("spacing of an empty cluster")),
        [only] => index.nn_distance(*only),
        members => {
            let mut mins: Vec<f64> = members
                .iter()
                .map(|&p| {
                    index
                        .nearest_where(&index.point(p), f64::INFINITY, |q| q != p && c.contains(q))
                        .expect("cluster has another member")
                        .1
                })
                .collect();
            Ok(median(&mut mins))
        }
    }
}

/// Spacing-normalised distance. Coincident clusters with zero spacing give 0.
pub fn alpha(d: f64, m_a: f64, m_b: f64) -> Result<f64> {
    let m = m_a.max(m_b);
    if m > 0.0 {
        Ok(d / m)
    } else if d == 0.0 {
        Ok(0.0)
    } else {
        Err(Error::ZeroSpacing { distance: d })
    }
}

/// `1 - |n_i · n_j|`, or 0.5 when either normal is undefined.
pub fn beta(n_i: &Normal, n_j: &Normal) -> f64 {
    match (n_i, n_j) {
        (Some(a), Some(b)) => (1.0 - a.dot(b).abs()).clamp(0.0, 1.0),
        _ => 0.5,
    }
}

pub fn delta(r_i: Region, r_j: Region) -> f64 {
    match (r_i, r_j) {
        (Region::Interior, Region::Interior) => 1.0,
        (Region::Exterior, Region::Exterior) => 0.0,
        _ => 0.5,
    }
}

/// Interior pairs weigh distance, exterior pairs weigh direction, mixed pairs split evenly.
pub fn blend(alpha: f64, beta: f64, delta: f64, lambda: f64) -> f64 {
    let heavy = (lambda - 1.0) / lambda;
    let light = 1.0 / lambda;
    if delta == 1.0 {
        heavy * alpha + light * beta
    } else if delta == 0.0 {
        light * alpha + heavy * beta
    } else {
        0.5 * alpha + 0.5 * beta
    }
}

/// Terms of one dissimilarity evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dissimilarity {
    pub pair: ClosestPair,
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
    pub value: f64,
}

fn point_normal(cloud: &PointCloud, p: usize) -> Normal {
    cloud.normals().and_then(|n| n[p])
}

fn point_region(cloud: &PointCloud, p: usize) -> Region {
    cloud.regions().map_or(Region::Exterior, |r| r[p])
}

fn evaluate(
    pair: ClosestPair,
    m_a: f64,
    m_b: f64,
    params: &OhcParams,
    cloud: &PointCloud,
) -> Result<Dissimilarity> {
    let (p, q) = pair.points;
    let alpha = alpha(pair.distance, m_a, m_b)?;
    let beta = beta(&point_normal(cloud, p), &point_normal(cloud, q));
    let delta = delta(point_region(cloud, p), point_region(cloud, q));
    Ok(Dissimilarity {
        pair,
        alpha,
        beta,
        delta,
        value: blend(alpha, beta, delta, params.lambda),
    })
}

/// Dissimilarity of two distinct clusters. Missing normals count as undefined
/// and missing region flags as exterior.
pub fn dissimilarity(
    a: &Cluster,
    b: &Cluster,
    params: &OhcParams,
    cloud: &PointCloud,
    index: &SpatialIndex,
) -> Result<Dissimilarity> {
    let pair = closest_pair(a, b, index);
    evaluate(pair, a.spacing, b.spacing, params, cloud)
}

/// Candidate pairs `(i, j)` with `i < j` and their closest points, found by
/// searching `gamma * spacing` around every member of every cluster.
fn candidate_pairs(
    clusters: &ClusterSet,
    params: &OhcParams,
    index: &SpatialIndex,
) -> BTreeMap<(usize, usize), ClosestPair> {
    let per_cluster: Vec<Vec<((usize, usize), ClosestPair)>> = clusters
        .clusters
        .par_iter()
        .map(|a| {
            let radius = params.gamma * a.spacing * (1.0 + 1e-12);
            let mut found: HashMap<usize, ClosestPair> = HashMap::new();
            for &p in &a.members {
                for (q, d) in index.within_radius(&index.point(p), radius) {
                    let b = clusters.point_cluster[q];
                    if b == a.id {
                        continue;
                    }
                    let cand = ClosestPair {
                        points: (p, q),
                        distance: d,
                    };
                    let cand = if a.id < b { cand } else { cand.swapped() };
                    found
                        .entry(b)
                        .and_modify(|cur| {
                            if cand.better_than(cur) {
                                *cur = cand;
                            }
                        })
                        .or_insert(cand);
                }
            }
            found
                .into_iter()
                .map(|(b, pair)| ((a.id.min(b), a.id.max(b)), pair))
                .collect()
        })
        .collect();

    let mut pairs: BTreeMap<(usize, usize), ClosestPair> = BTreeMap::new();
    for (key, pair) in per_cluster.into_iter().flatten() {
        pairs
            .entry(key)
            .and_modify(|cur| {
                if pair.better_than(cur) {
                    *cur = pair;
                }
            })
            .or_insert(pair);
    }
    pairs.retain(|&(i, j), pair| {
        let (ci, cj) = (&clusters.clusters[i], &clusters.clusters[j]);
        matches!(alpha(pair.distance, ci.spacing, cj.spacing), Ok(a) if a <= params.gamma)
    });
    pairs
}

/// Unordered adjacent cluster pairs `(i, j)`, `i < j`, ascending.
pub fn adjacency(
    clusters: &ClusterSet,
    params: &OhcParams,
    index: &SpatialIndex,
) -> Vec<(usize, usize)> {
    candidate_pairs(clusters, params, index).into_keys().collect()
}

/// An off-diagonal entry of the proximity graph.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProximityEdge {
    pub i: usize,
    pub j: usize,
    pub terms: Dissimilarity,
}

/// Symmetric sparse proximity structure over clusters; the diagonal is `sm`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProximityGraph {
    n: usize,
    sm: f64,
    /// Sorted by `(i, j)` with `i < j`.
    edges: Vec<ProximityEdge>,
    rows: Vec<Vec<(usize, usize)>>,
}

impl ProximityGraph {
    pub fn new(n: usize, sm: f64, mut edges: Vec<ProximityEdge>) -> Self {
        edges.sort_by_key(|e| (e.i, e.j));
        let mut rows = vec![Vec::new(); n];
        for (k, e) in edges.iter().enumerate() {
            rows[e.i].push((e.j, k));
            rows[e.j].push((e.i, k));
        }
        for r in &mut rows {
            r.sort_unstable();
        }
        Self { n, sm, edges, rows }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn sm(&self) -> f64 {
        self.sm
    }

    pub fn edges(&self) -> &[ProximityEdge] {
        &self.edges
    }

    /// Entry `(i, j)`: `sm` on the diagonal, `None` for non-adjacent pairs.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        if i == j {
            return Some(self.sm);
        }
        self.rows[i]
            .binary_search_by_key(&j, |&(c, _)| c)
            .ok()
            .map(|pos| self.edges[self.rows[i][pos].1].terms.value)
    }

    /// Off-diagonal neighbours of `i` with their values, ascending by neighbour.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.rows[i]
            .iter()
            .map(move |&(j, k)| (j, self.edges[k].terms.value))
    }
}

pub fn build_proximity(
    clusters: &ClusterSet,
    params: &OhcParams,
    cloud: &PointCloud,
    index: &SpatialIndex,
) -> Result<ProximityGraph> {
    let pairs: Vec<((usize, usize), ClosestPair)> =
        candidate_pairs(clusters, params, index).into_iter().collect();
    let edges = pairs
        .into_par_iter()
        .map(|((i, j), pair)| {
            let (ci, cj) = (&clusters.clusters[i], &clusters.clusters[j]);
            let terms = evaluate(pair, ci.spacing, cj.spacing, params, cloud)?;
            Ok(ProximityEdge { i, j, terms })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ProximityGraph::new(clusters.len(), params.sm, edges))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::{distance, Point3};
    use nalgebra::Vector3;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn index_of(coords: &[[f64; 3]]) -> (PointCloud, SpatialIndex) {
        let cloud = PointCloud::from_xyz(coords).unwrap();
        let idx = SpatialIndex::build(&cloud).unwrap();
        (cloud, idx)
    }

    fn on_x(xs: &[f64]) -> Vec<[f64; 3]> {
        xs.iter().map(|&x| [x, 0.0, 0.0]).collect()
    }

    #[test]
    fn closest_pair_examples() {
        let (_, idx) = index_of(&on_x(&[0.0, 1.0, 3.0, 5.0]));
        let set = ClusterSet::from_members(vec![vec![0, 1], vec![2, 3]], &idx).unwrap();
        let pair = closest_pair(&set.clusters[0], &set.clusters[1], &idx);
        assert_eq!(pair.points, (1, 2));
        assert_eq!(pair.distance, 2.0);
        let rev = closest_pair(&set.clusters[1], &set.clusters[0], &idx);
        assert_eq!(rev.points, (2, 1));

        let singles = ClusterSet::singletons(&idx);
        let pair = closest_pair(&singles.clusters[0], &singles.clusters[3], &idx);
        assert_eq!((pair.points, pair.distance), ((0, 3), 5.0));
    }

    #[test]
    fn closest_pair_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let coords: Vec<[f64; 3]> = (0..100)
            .map(|_| [rng.gen(), rng.gen(), rng.gen()])
            .collect();
        let (cloud, idx) = index_of(&coords);
        let set = ClusterSet::from_members(vec![(0..50).collect(), (50..100).collect()], &idx).unwrap();
        let mut best = (f64::INFINITY, 0, 0);
        for p in 0..50 {
            for q in 50..100 {
                let d = distance(&cloud.point(p), &cloud.point(q));
                if d < best.0 {
                    best = (d, p, q);
                }
            }
        }
        let got = closest_pair(&set.clusters[0], &set.clusters[1], &idx);
        assert_eq!((got.distance, got.points.0, got.points.1), best);
    }

    #[test]
    fn spacing_examples() {
        let (_, idx) = index_of(&on_x(&[0.0, 1.0, 3.0]));
        let set = ClusterSet::from_members(vec![vec![0, 1, 2]], &idx).unwrap();
        assert_eq!(set.clusters[0].spacing, 1.0);

        let (_, idx) = index_of(&on_x(&[0.0, 5.0]));
        let set = ClusterSet::from_members(vec![vec![0, 1]], &idx).unwrap();
        assert_eq!(set.clusters[0].spacing, 5.0);

        let (_, idx) = index_of(&on_x(&[0.0, 2.0, 9.0]));
        let single = ClusterSet::singletons(&idx);
        assert_eq!(single.clusters[0].spacing, 2.0);
        assert_eq!(single.clusters[0].spacing, idx.nn_distance(0).unwrap());
        assert_eq!(single.clusters[2].spacing, 7.0);

        let mut even = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(median(&mut even), 2.5);
    }

    #[test]
    fn alpha_examples() {
        assert_eq!(alpha(1.0, 0.5, 0.25).unwrap(), 2.0);
        assert_eq!(alpha(0.0, 0.5, 0.25).unwrap(), 0.0);
        assert_eq!(alpha(0.0, 0.0, 0.0).unwrap(), 0.0);
        assert!(matches!(alpha(1.0, 0.0, 0.0), Err(Error::ZeroSpacing { .. })));
        assert_eq!(alpha(1000.0, 500.0, 250.0).unwrap(), alpha(1.0, 0.5, 0.25).unwrap());
    }

    #[test]
    fn beta_examples() {
        let z = Some(Vector3::z());
        assert_eq!(beta(&z, &z), 0.0);
        assert_eq!(beta(&z, &Some(Vector3::x())), 1.0);
        assert_eq!(beta(&z, &Some(-Vector3::z())), 0.0);
        assert_eq!(beta(&z, &None), 0.5);
    }

    #[test]
    fn delta_and_blend_examples() {
        use Region::*;
        assert_eq!(delta(Interior, Interior), 1.0);
        assert_eq!(delta(Exterior, Exterior), 0.0);
        assert_eq!(delta(Interior, Exterior), 0.5);
        assert!((blend(0.4, 0.8, 1.0, 4.0) - 0.5).abs() < 1e-15);
        assert!((blend(0.4, 0.8, 0.0, 4.0) - 0.7).abs() < 1e-15);
        assert!((blend(0.4, 0.8, 0.5, 4.0) - 0.6).abs() < 1e-15);
    }

    #[test]
    fn adjacency_examples() {
        let params = OhcParams::default();
        // Two tight pairs 100 spacings apart.
        let (_, idx) = index_of(&on_x(&[0.0, 1.0, 101.0, 102.0]));
        let set = ClusterSet::from_members(vec![vec![0, 1], vec![2, 3]], &idx).unwrap();
        assert!(adjacency(&set, &params, &idx).is_empty());
        // Abutting clusters.
        let (_, idx) = index_of(&on_x(&[0.0, 1.0, 2.0, 3.0]));
        let set = ClusterSet::from_members(vec![vec![0, 1], vec![2, 3]], &idx).unwrap();
        assert_eq!(adjacency(&set, &params, &idx), vec![(0, 1)]);
        // Chain A-B-C: alpha(A,B) = alpha(B,C) = 4, alpha(A,C) = 9.
        let (_, idx) = index_of(&on_x(&[0.0, 1.0, 5.0, 6.0, 10.0, 11.0]));
        let set =
            ClusterSet::from_members(vec![vec![0, 1], vec![2, 3], vec![4, 5]], &idx).unwrap();
        assert_eq!(adjacency(&set, &params, &idx), vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn far_clusters_have_only_diagonal() {
        let (cloud, idx) = index_of(&on_x(&[0.0, 1.0, 100.0, 101.0, 200.0, 201.0]));
        let set =
            ClusterSet::from_members(vec![vec![0, 1], vec![2, 3], vec![4, 5]], &idx).unwrap();
        let g = build_proximity(&set, &OhcParams::default(), &cloud, &idx).unwrap();
        assert!(g.edges().is_empty());
        for i in 0..3 {
            assert_eq!(g.get(i, i), Some(0.4));
        }
        assert_eq!(g.get(0, 1), None);
    }

    #[test]
    fn coincident_singletons_use_zero_alpha() {
        let (cloud, idx) = index_of(&[[1.0, 2.0, 3.0], [1.0, 2.0, 3.0]]);
        let set = ClusterSet::singletons(&idx);
        let g = build_proximity(&set, &OhcParams::default(), &cloud, &idx).unwrap();
        assert_eq!(g.edges().len(), 1);
        assert_eq!(g.edges()[0].terms.alpha, 0.0);
        assert_eq!(g.get(0, 1), g.get(1, 0));
    }

    fn random_scene(seed: u64, n: usize) -> (PointCloud, SpatialIndex, ClusterSet) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coords: Vec<[f64; 3]> = (0..n)
            .map(|_| [rng.gen_range(0.0..4.0), rng.gen_range(0.0..4.0), rng.gen_range(0.0..0.5)])
            .collect();
        let cloud = PointCloud::from_xyz(&coords).unwrap();
        let idx = SpatialIndex::build(&cloud).unwrap();
        let normals = crate::cloud::estimate_normals(&cloud, &idx, 10).unwrap();
        let regions = crate::hull::classify_points(&cloud, &idx, 10).unwrap();
        let cloud = cloud.with_normals(normals).unwrap().with_regions(regions).unwrap();
        // Clusters: random blocks of consecutive ids.
        let mut groups = Vec::new();
        let mut start = 0;
        while start < n {
            let len = rng.gen_range(1..6).min(n - start);
            groups.push((start..start + len).collect());
            start += len;
        }
        let set = ClusterSet::from_members(groups, &idx).unwrap();
        (cloud, idx, set)
    }

    #[test]
    fn proximity_is_symmetric() {
        let (cloud, idx, set) = random_scene(21, 300);
        let params = OhcParams::default();
        let g = build_proximity(&set, &params, &cloud, &idx).unwrap();
        let mut checked = 0;
        for e in g.edges() {
            let (a, b) = (&set.clusters[e.i], &set.clusters[e.j]);
            let ab = dissimilarity(a, b, &params, &cloud, &idx).unwrap().value;
            let ba = dissimilarity(b, a, &params, &cloud, &idx).unwrap().value;
            assert_eq!(ab, ba);
            assert_eq!(ab, e.terms.value);
            assert_eq!(g.get(e.i, e.j), g.get(e.j, e.i));
            checked += 1;
            if checked == 100 {
                break;
            }
        }
        assert_eq!(checked, 100);
    }

    #[test]
    fn adjacency_matches_exhaustive_alpha() {
        let (_, idx, set) = random_scene(22, 150);
        let params = OhcParams::default();
        let got = adjacency(&set, &params, &idx);
        let mut want = Vec::new();
        for i in 0..set.len() {
            for j in i + 1..set.len() {
                let (a, b) = (&set.clusters[i], &set.clusters[j]);
                let d = closest_pair(a, b, &idx).distance;
                if alpha(d, a.spacing, b.spacing).unwrap() <= params.gamma {
                    want.push((i, j));
                }
            }
        }
        assert_eq!(got, want);
    }

    #[test]
    fn graph_is_scale_invariant() {
        let (cloud, idx, set) = random_scene(23, 200);
        let params = OhcParams::default();
        let g = build_proximity(&set, &params, &cloud, &idx).unwrap();
        let scaled_pts: Vec<Point3> = cloud.points().iter().map(|p| p * 1000.0).collect();
        let scaled = PointCloud::new(scaled_pts)
            .unwrap()
            .with_normals(cloud.normals().unwrap().to_vec())
            .unwrap()
            .with_regions(cloud.regions().unwrap().to_vec())
            .unwrap();
        let sidx = SpatialIndex::build(&scaled).unwrap();
        let sset = ClusterSet::from_members(set.groups(), &sidx).unwrap();
        let sg = build_proximity(&sset, &params, &scaled, &sidx).unwrap();
        assert_eq!(g.edges().len(), sg.edges().len());
        for (a, b) in g.edges().iter().zip(sg.edges()) {
            assert_eq!((a.i, a.j), (b.i, b.j));
            assert!((a.terms.value - b.terms.value).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn blend_is_ordered_by_region(a in 0.0f64..1.0, b in 0.0f64..1.0, lambda in 2.0f64..10.0) {
            prop_assume!(a < b);
            let inner = blend(a, b, 1.0, lambda);
            let mixed = blend(a, b, 0.5, lambda);
            let outer = blend(a, b, 0.0, lambda);
            prop_assert!(inner <= mixed + 1e-15 && mixed <= outer + 1e-15);
            for v in [inner, mixed, outer] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }

        #[test]
        fn beta_in_unit_range(x in prop::array::uniform3(-1.0f64..1.0), y in prop::array::uniform3(-1.0f64..1.0)) {
            let (x, y) = (Vector3::from(x), Vector3::from(y));
            prop_assume!(x.norm() > 1e-3 && y.norm() > 1e-3);
            let b = beta(&Some(x.normalize()), &Some(y.normalize()));
            prop_assert!((0.0..=1.0).contains(&b));
        }
    }
}
