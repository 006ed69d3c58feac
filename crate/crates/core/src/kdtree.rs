//! Static k-d tree over a frozen point set.
//!
//! All queries order results by `(distance, id)`, so equal distances resolve
//! to the lowest point id.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::cloud::{distance, Point3, PointCloud};
use crate::error::{Error, Result};

const LEAF_SIZE: usize = 8;
const NO_CHILD: u32 = u32::MAX;

#[derive(Debug, Clone)]
struct Node {
    lo: [f64; 3],
    hi: [f64; 3],
    start: u32,
    end: u32,
    left: u32,
    right: u32,
}

impl Node {
    fn is_leaf(&self) -> bool {
        self.left == NO_CHILD
    }

    /// Squared distance from `q` to this node's bounding box.
    fn box_dist2(&self, q: &Point3) -> f64 {
        let mut acc = 0.0;
        for axis in 0..3 {
            let c = q[axis];
            let d = if c < self.lo[axis] {
                self.lo[axis] - c
            } else if c > self.hi[axis] {
                c - self.hi[axis]
            } else {
                0.0
            };
            acc += d * d;
        }
        acc
    }
}

/// Immutable nearest-neighbour index. Safe to share between threads.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    points: Vec<Point3>,
    order: Vec<u32>,
    nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    d2: f64,
    id: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2.total_cmp(&other.d2).then(self.id.cmp(&other.id))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl SpatialIndex {
    pub fn build(cloud: &PointCloud) -> Result<Self> {
        Self::from_points(cloud.points().to_vec())
    }

    pub fn from_points(points: Vec<Point3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyInput);
        }
        assert!(points.len() < u32::MAX as usize, "too many points for index");
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        let mut nodes = Vec::with_capacity(2 * points.len() / LEAF_SIZE + 1);
        build_node(&points, &mut order, 0, points.len(), &mut nodes);
        Ok(Self {
            points,
            order,
            nodes,
        })
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

    /// The `k` closest point ids to `query`, ascending by distance (ties by id).
    /// Returns the whole cloud when `k` exceeds its size.
    pub fn k_nearest(&self, query: &Point3, k: usize) -> Vec<usize> {
        self.k_nearest_with_distance(query, k)
            .into_iter()
            .map(|(id, _)| id)
            .collect()
    }

    pub fn k_nearest_with_distance(&self, query: &Point3, k: usize) -> Vec<(usize, f64)> {
        if k == 0 {
            return Vec::new();
        }
        let k = k.min(self.points.len());
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.knn_recurse(0, query, k, &mut heap);
        heap.into_sorted_vec()
            .into_iter()
            .map(|c| (c.id, c.d2.sqrt()))
            .collect()
    }

    fn knn_recurse(&self, node: usize, q: &Point3, k: usize, heap: &mut BinaryHeap<Candidate>) {
        let n = &self.nodes[node];
        if heap.len() == k && n.box_dist2(q) > heap.peek().map_or(f64::INFINITY, |c| c.d2) {
            return;
        }
        if n.is_leaf() {
            for &id in &self.order[n.start as usize..n.end as usize] {
                let id = id as usize;
                let cand = Candidate {
                    d2: (self.points[id] - q).norm_squared(),
                    id,
                };
                if heap.len() < k {
                    heap.push(cand);
                } else if cand < *heap.peek().unwrap() {
                    heap.pop();
                    heap.push(cand);
                }
            }
            return;
        }
        let (near, far) = self.ordered_children(n, q);
        self.knn_recurse(near, q, k, heap);
        self.knn_recurse(far, q, k, heap);
    }

    fn ordered_children(&self, n: &Node, q: &Point3) -> (usize, usize) {
        let (l, r) = (n.left as usize, n.right as usize);
        if self.nodes[l].box_dist2(q) <= self.nodes[r].box_dist2(q) {
            (l, r)
        } else {
            (r, l)
        }
    }

    /// All points with `distance(query, p) <= radius`, ascending by `(distance, id)`.
    pub fn within_radius(&self, query: &Point3, radius: f64) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        if radius.is_nan() || radius < 0.0 {
            return out;
        }
        // Slightly loose box bound; the exact test below decides membership.
        let bound = radius * radius * (1.0 + 1e-9);
        self.radius_recurse(0, query, radius, bound, &mut out);
        out.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        out
    }

    fn radius_recurse(
        &self,
        node: usize,
        q: &Point3,
        radius: f64,
        bound: f64,
        out: &mut Vec<(usize, f64)>,
    ) {
        let n = &self.nodes[node];
        if n.box_dist2(q) > bound {
            return;
        }
        if n.is_leaf() {
            for &id in &self.order[n.start as usize..n.end as usize] {
                let id = id as usize;
                let d = distance(&self.points[id], q);
                if d <= radius {
                    out.push((id, d));
                }
            }
            return;
        }
        self.radius_recurse(n.left as usize, q, radius, bound, out);
        self.radius_recurse(n.right as usize, q, radius, bound, out);
    }

    /// Nearest point accepted by `keep` whose distance does not exceed `limit`.
    pub fn nearest_where<F>(&self, query: &Point3, limit: f64, keep: F) -> Option<(usize, f64)>
    where
        F: Fn(usize) -> bool,
    {
        let mut best: Option<Candidate> = None;
        let mut limit2 = if limit.is_finite() {
            limit * limit
        } else {
            f64::INFINITY
        };
        self.filtered_recurse(0, query, &keep, &mut best, &mut limit2);
        best.map(|c| (c.id, c.d2.sqrt()))
    }

    fn filtered_recurse<F>(
        &self,
        node: usize,
        q: &Point3,
        keep: &F,
        best: &mut Option<Candidate>,
        limit2: &mut f64,
    ) where
        F: Fn(usize) -> bool,
    {
        let n = &self.nodes[node];
        if n.box_dist2(q) > *limit2 {
            return;
        }
        if n.is_leaf() {
            for &id in &self.order[n.start as usize..n.end as usize] {
                let id = id as usize;
                let d2 = (self.points[id] - q).norm_squared();
                if d2 > *limit2 || !keep(id) {
                    continue;
                }
                let cand = Candidate { d2, id };
                if best.is_none_or(|b| cand < b) {
                    *best = Some(cand);
                    *limit2 = d2;
                }
            }
            return;
        }
        let (near, far) = self.ordered_children(n, q);
        self.filtered_recurse(near, q, keep, best, limit2);
        self.filtered_recurse(far, q, keep, best, limit2);
    }

    /// Distance from point `id` to its nearest other point in the index.
    pub fn nn_distance(&self, id: usize) -> Result<f64> {
        if self.points.len() < 2 {
            return Err(Error::Undefined("nearest-neighbour distance of a singleton cloud"));
        }
        let p = self.points[id];
        let (_, d) = self
            .nearest_where(&p, f64::INFINITY, |j| j != id)
            .expect("cloud has another point");
        Ok(d)
    }
}

fn build_node(
    points: &[Point3],
    order: &mut [u32],
    start: usize,
    end: usize,
    nodes: &mut Vec<Node>,
) -> u32 {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &id in &order[start..end] {
        let p = &points[id as usize];
        for axis in 0..3 {
            lo[axis] = lo[axis].min(p[axis]);
            hi[axis] = hi[axis].max(p[axis]);
        }
    }
    let me = nodes.len();
    nodes.push(Node {
        lo,
        hi,
        start: start as u32,
        end: end as u32,
        left: NO_CHILD,
        right: NO_CHILD,
    });
    if end - start <= LEAF_SIZE {
        return me as u32;
    }
    let axis = (0..3)
        .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
        .unwrap();
    let mid = (end - start) / 2;
    order[start..end].select_nth_unstable_by(mid, |&a, &b| {
        points[a as usize][axis]
            .total_cmp(&points[b as usize][axis])
            .then(a.cmp(&b))
    });
    let left = build_node(points, order, start, start + mid, nodes);
    let right = build_node(points, order, start + mid, end, nodes);
    nodes[me].left = left;
    nodes[me].right = right;
    me as u32
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn line(xs: &[f64]) -> SpatialIndex {
        SpatialIndex::from_points(xs.iter().map(|&x| Point3::new(x, 0.0, 0.0)).collect()).unwrap()
    }

    fn random_points(n: usize, seed: u64) -> Vec<Point3> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Point3::new(rng.gen(), rng.gen(), rng.gen()))
            .collect()
    }

    fn brute_knn(points: &[Point3], q: &Point3, k: usize) -> Vec<usize> {
        let mut all: Vec<(f64, usize)> = points
            .iter()
            .enumerate()
            .map(|(i, p)| ((p - q).norm_squared(), i))
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        all.into_iter().take(k).map(|(_, i)| i).collect()
    }

    #[test]
    fn empty_is_rejected() {
        assert!(matches!(
            SpatialIndex::from_points(Vec::new()),
            Err(Error::EmptyInput)
        ));
    }

    #[test]
    fn four_points_on_a_line() {
        let idx = line(&[0.0, 1.0, 2.0, 10.0]);
        assert_eq!(idx.len(), 4);
        assert_eq!(idx.k_nearest(&Point3::origin(), 2), vec![0, 1]);
        assert_eq!(idx.k_nearest(&Point3::new(2.0, 0.0, 0.0), 1), vec![2]);
        assert_eq!(idx.k_nearest(&Point3::origin(), 10), vec![0, 1, 2, 3]);
    }

    #[test]
    fn equal_distances_prefer_lower_id() {
        let idx = line(&[1.0, -1.0, 1.0]);
        assert_eq!(idx.k_nearest(&Point3::origin(), 2), vec![0, 1]);
        assert_eq!(idx.nearest_where(&Point3::origin(), f64::INFINITY, |_| true), Some((0, 1.0)));
    }

    #[test]
    fn knn_matches_brute_force() {
        let pts = random_points(1000, 7);
        let idx = SpatialIndex::from_points(pts.clone()).unwrap();
        let queries = random_points(50, 8);
        for (i, q) in queries.iter().enumerate() {
            let k = 1 + i % 17;
            assert_eq!(idx.k_nearest(q, k), brute_knn(&pts, q, k));
        }
    }

    #[test]
    fn radius_matches_brute_force() {
        let pts = random_points(500, 3);
        let idx = SpatialIndex::from_points(pts.clone()).unwrap();
        for q in random_points(20, 4) {
            let got: Vec<usize> = idx.within_radius(&q, 0.2).into_iter().map(|(i, _)| i).collect();
            let mut want: Vec<(f64, usize)> = pts
                .iter()
                .enumerate()
                .map(|(i, p)| (distance(p, &q), i))
                .filter(|(d, _)| *d <= 0.2)
                .collect();
            want.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            assert_eq!(got, want.into_iter().map(|(_, i)| i).collect::<Vec<_>>());
        }
    }

    #[test]
    fn nn_distance_cases() {
        let idx = line(&[0.0, 1.0, 3.0]);
        assert_eq!(idx.nn_distance(2).unwrap(), 2.0);
        let dup = line(&[5.0, 5.0, 8.0]);
        assert_eq!(dup.nn_distance(0).unwrap(), 0.0);
        assert!(matches!(line(&[1.0]).nn_distance(0), Err(Error::Undefined(_))));
    }

    #[test]
    fn nn_distance_matches_brute_force() {
        let pts = random_points(200, 11);
        let idx = SpatialIndex::from_points(pts.clone()).unwrap();
        for i in 0..pts.len() {
            let want = pts
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, p)| distance(p, &pts[i]))
                .fold(f64::INFINITY, f64::min);
            assert_eq!(idx.nn_distance(i).unwrap(), want);
        }
    }

    #[test]
    fn filtered_nearest_respects_predicate_and_limit() {
        let idx = line(&[0.0, 1.0, 2.0, 3.0]);
        let q = Point3::origin();
        assert_eq!(idx.nearest_where(&q, f64::INFINITY, |i| i >= 2), Some((2, 2.0)));
        assert_eq!(idx.nearest_where(&q, 1.5, |i| i >= 2), None);
        assert_eq!(idx.nearest_where(&q, 2.0, |i| i >= 2), Some((2, 2.0)));
    }
}
