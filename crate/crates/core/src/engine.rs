//! Level-by-level optimal agglomeration.
//!
//! Every level builds the proximity graph of the current clusters, solves the
//! minimum-cost perfect matching over it and merges each cycle of the
//! resulting permutation into one cluster. The loop stops at the first level
//! whose matching is the identity.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{estimate_normals, PointCloud};
use crate::error::{Error, Result};
use crate::hull::classify_points;
use crate::kdtree::SpatialIndex;
use crate::matching::{solve_min_cost_perfect_matching, BipartiteCostView, MatchingResult};
use crate::proximity::{build_proximity, median, Cluster, ClusterSet, OhcParams, ProximityGraph};

/// Merges performed at one level. Group members are cluster ids of the
/// level's input; `heights[g]` is the largest matched dissimilarity inside
/// group `g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DendrogramLevel {
    pub level: usize,
    pub groups: Vec<Vec<usize>>,
    pub heights: Vec<f64>,
    pub clusters_after: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub levels: Vec<DendrogramLevel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OhcState {
    pub clusters: ClusterSet,
    pub level: usize,
    /// Per point, distance to the nearest other member of its cluster
    /// (infinite for singletons).
    within: Vec<f64>,
}

/// Everything computed while running one level.
#[derive(Debug, Clone)]
pub struct LevelOutcome {
    pub graph: ProximityGraph,
    pub view: BipartiteCostView,
    pub matching: MatchingResult,
    pub record: DendrogramLevel,
}

#[derive(Debug, Clone)]
pub struct Segmentation {
    pub clusters: ClusterSet,
    pub dendrogram: Dendrogram,
}

impl Segmentation {
    /// Cluster index of every point.
    pub fn labels(&self) -> &[usize] {
        &self.clusters.point_cluster
    }
}

/// Fills in normals and region flags the cloud does not already carry.
/// Clouds too small for PCA get undefined normals everywhere.
pub fn prepare_cloud(cloud: &PointCloud, index: &SpatialIndex, params: &OhcParams) -> Result<PointCloud> {
    let mut out = cloud.clone();
    if out.normals().is_none() {
        let normals = match estimate_normals(&out, index, params.k) {
            Ok(n) => n,
            Err(Error::NormalsUndefined(_)) => vec![None; out.len()],
            Err(e) => return Err(e),
        };
        out = out.with_normals(normals)?;
    }
    if out.regions().is_none() {
        let regions = classify_points(&out, index, params.hull_k())?;
        out = out.with_regions(regions)?;
    }
    Ok(out)
}

/// A cloud prepared for clustering, with its index and parameters.
#[derive(Debug, Clone)]
pub struct Ohc {
    cloud: PointCloud,
    index: SpatialIndex,
    params: OhcParams,
}

impl Ohc {
    pub fn new(cloud: &PointCloud, params: OhcParams) -> Result<Self> {
        params.validate()?;
        if cloud.is_empty() {
            return Err(Error::EmptyInput);
        }
        let index = SpatialIndex::build(cloud)?;
        let cloud = prepare_cloud(cloud, &index, &params)?;
        Ok(Self {
            cloud,
            index,
            params,
        })
    }

    pub fn cloud(&self) -> &PointCloud {
        &self.cloud
    }

    pub fn index(&self) -> &SpatialIndex {
        &self.index
    }

    pub fn params(&self) -> &OhcParams {
        &self.params
    }

    /// One singleton cluster per point.
    pub fn initialize(&self) -> OhcState {
        OhcState {
            clusters: ClusterSet::singletons(&self.index),
            level: 0,
            within: vec![f64::INFINITY; self.index.len()],
        }
    }

    pub fn run_level(&self, state: &OhcState) -> Result<(OhcState, LevelOutcome)> {
        let graph = build_proximity(&state.clusters, &self.params, &self.cloud, &self.index)?;
        let view = BipartiteCostView::from_proximity(&graph);
        let matching = solve_min_cost_perfect_matching(&view);

        let mut groups = Vec::new();
        let mut heights = Vec::new();
        for g in matching.merge_groups.iter().filter(|g| g.len() > 1) {
            let h = g
                .iter()
                .map(|&i| graph.get(i, matching.permutation[i]).expect("matched edge exists"))
                .fold(f64::NEG_INFINITY, f64::max);
            groups.push(g.clone());
            heights.push(h);
        }

        let next = if groups.is_empty() {
            OhcState {
                clusters: state.clusters.clone(),
                level: state.level + 1,
                within: state.within.clone(),
            }
        } else {
            self.merge(state, &matching.merge_groups)
        };
        let record = DendrogramLevel {
            level: state.level + 1,
            groups,
            heights,
            clusters_after: next.clusters.len(),
        };
        Ok((
            next,
            LevelOutcome {
                graph,
                view,
                matching,
                record,
            },
        ))
    }

    /// Combines each group of cluster ids, renumbering by smallest member point.
    fn merge(&self, state: &OhcState, merge_groups: &[Vec<usize>]) -> OhcState {
        let old = &state.clusters;
        let mut members: Vec<(Vec<usize>, Option<f64>)> = merge_groups
            .iter()
            .map(|g| {
                if let [only] = g.as_slice() {
                    let c = &old.clusters[*only];
                    (c.members.clone(), Some(c.spacing))
                } else {
                    let mut m: Vec<usize> = g
                        .iter()
                        .flat_map(|&ci| old.clusters[ci].members.iter().copied())
                        .collect();
                    m.sort_unstable();
                    (m, None)
                }
            })
            .collect();
        members.sort_by_key(|(m, _)| m[0]);

        let mut point_cluster = vec![0; old.point_cluster.len()];
        for (id, (m, _)) in members.iter().enumerate() {
            for &p in m {
                point_cluster[p] = id;
            }
        }

        let mut within = state.within.clone();
        let updates: Vec<(usize, f64)> = members
            .par_iter()
            .enumerate()
            .filter(|(_, (_, kept))| kept.is_none())
            .flat_map_iter(|(id, (m, _))| {
                let pc = &point_cluster;
                let within = &state.within;
                m.iter().map(move |&p| {
                    let found = self.index.nearest_where(&self.index.point(p), within[p], |q| {
                        q != p && pc[q] == id
                    });
                    (p, found.map_or(within[p], |(_, d)| d.min(within[p])))
                })
            })
            .collect();
        for (p, d) in updates {
            within[p] = d;
        }

        let clusters = members
            .into_iter()
            .enumerate()
            .map(|(id, (m, kept))| {
                let spacing = kept.unwrap_or_else(|| {
                    let mut d: Vec<f64> = m.iter().map(|&p| within[p]).collect();
                    median(&mut d)
                });
                Cluster {
                    id,
                    members: m,
                    spacing,
                }
            })
            .collect();
        OhcState {
            clusters: ClusterSet {
                clusters,
                point_cluster,
            },
            level: state.level + 1,
            within,
        }
    }

    /// Runs levels until the matching is the identity.
    pub fn run(&self) -> Result<Segmentation> {
        self.run_with(|_, _| {})
    }

    /// Like [`Ohc::run`], calling `observe` with each level's input state and outcome.
    pub fn run_with<F>(&self, mut observe: F) -> Result<Segmentation>
    where
        F: FnMut(&OhcState, &LevelOutcome),
    {
        let mut state = self.initialize();
        let mut dendrogram = Dendrogram::default();
        loop {
            let (next, outcome) = self.run_level(&state)?;
            observe(&state, &outcome);
            let done = outcome.record.groups.is_empty();
            dendrogram.levels.push(outcome.record);
            state = next;
            if done {
                break;
            }
        }
        Ok(Segmentation {
            clusters: state.clusters,
            dendrogram,
        })
    }
}

/// Segments `cloud` with optimal hierarchical clustering.
pub fn run(cloud: &PointCloud, params: OhcParams) -> Result<Segmentation> {
    Ohc::new(cloud, params)?.run()
}

/// Pairs clusters greedily: cheapest edge first, both ends unpaired, cost below `sm`.
pub fn greedy_pairing(view: &BipartiteCostView) -> Vec<usize> {
    let n = view.len();
    let mut edges: Vec<(f64, usize, usize)> = (0..n)
        .flat_map(|i| {
            view.row(i)
                .iter()
                .filter(move |&&(j, _)| j > i)
                .map(move |&(j, c)| (c, i, j))
        })
        .filter(|&(c, _, _)| c < view.sm())
        .collect();
    edges.sort_by(|a, b| a.0.total_cmp(&b.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    let mut perm: Vec<usize> = (0..n).collect();
    for (_, i, j) in edges {
        if perm[i] == i && perm[j] == j {
            perm[i] = j;
            perm[j] = i;
        }
    }
    perm
}

/// Classic agglomeration: merge the single cheapest adjacent pair below `sm`
/// until none remains. One dendrogram level per merge.
pub fn greedy_baseline(cloud: &PointCloud, params: OhcParams) -> Result<Segmentation> {
    let ohc = Ohc::new(cloud, params)?;
    let mut state = ohc.initialize();
    let mut dendrogram = Dendrogram::default();
    loop {
        let graph = build_proximity(&state.clusters, &ohc.params, &ohc.cloud, &ohc.index)?;
        let best = graph
            .edges()
            .iter()
            .filter(|e| e.terms.value < ohc.params.sm)
            .min_by(|a, b| {
                a.terms
                    .value
                    .total_cmp(&b.terms.value)
                    .then((a.i, a.j).cmp(&(b.i, b.j)))
            });
        let Some(edge) = best else {
            dendrogram.levels.push(DendrogramLevel {
                level: state.level + 1,
                groups: Vec::new(),
                heights: Vec::new(),
                clusters_after: state.clusters.len(),
            });
            break;
        };
        let groups: Vec<Vec<usize>> = (0..state.clusters.len())
            .filter(|&c| c != edge.j)
            .map(|c| if c == edge.i { vec![edge.i, edge.j] } else { vec![c] })
            .collect();
        let next = ohc.merge(&state, &groups);
        dendrogram.levels.push(DendrogramLevel {
            level: state.level + 1,
            groups: vec![vec![edge.i, edge.j]],
            heights: vec![edge.terms.value],
            clusters_after: next.clusters.len(),
        });
        state = next;
    }
    Ok(Segmentation {
        clusters: state.clusters,
        dendrogram,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matching::matching_cost;
    use crate::proximity::cluster_spacing;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sorted_groups(c: &ClusterSet) -> Vec<Vec<usize>> {
        let mut g = c.groups();
        g.sort();
        g
    }

    /// Three planar pairs, far apart.
    fn three_pairs() -> PointCloud {
        PointCloud::from_xyz(&[
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [20.0, 0.0, 0.0],
            [21.0, 0.5, 0.0],
            [0.0, 30.0, 0.0],
            [0.5, 31.0, 0.0],
        ])
        .unwrap()
    }

    /// Two V-shaped triples; each V's middle point has two equally near partners.
    fn two_vees() -> PointCloud {
        PointCloud::from_xyz(&[
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [-0.6, 0.8, 0.0],
            [30.4, 0.8, 0.0],
            [31.0, 0.0, 0.0],
            [32.0, 0.0, 0.0],
        ])
        .unwrap()
    }

    #[test]
    fn initialize_makes_singletons() {
        let ohc = Ohc::new(&three_pairs(), OhcParams::default()).unwrap();
        let s = ohc.initialize();
        assert_eq!(s.clusters.len(), 6);
        assert!(s.clusters.check_partition());

        let single = PointCloud::from_xyz(&[[1.0, 1.0, 1.0]]).unwrap();
        assert_eq!(Ohc::new(&single, OhcParams::default()).unwrap().initialize().clusters.len(), 1);

        let dup = PointCloud::from_xyz(&[[1.0, 1.0, 1.0], [1.0, 1.0, 1.0]]).unwrap();
        assert_eq!(Ohc::new(&dup, OhcParams::default()).unwrap().initialize().clusters.len(), 2);
    }

    #[test]
    fn empty_cloud_is_rejected() {
        let empty = PointCloud::new(Vec::new()).unwrap();
        assert!(matches!(run(&empty, OhcParams::default()), Err(Error::EmptyInput)));
        assert!(matches!(greedy_baseline(&empty, OhcParams::default()), Err(Error::EmptyInput)));
    }

    #[test]
    fn three_pairs_converge_to_three_clusters() {
        let seg = run(&three_pairs(), OhcParams::default()).unwrap();
        assert_eq!(sorted_groups(&seg.clusters), vec![vec![0, 1], vec![2, 3], vec![4, 5]]);
        assert!(seg.dendrogram.levels.len() <= 3);
        assert!(seg.dendrogram.levels.last().unwrap().groups.is_empty());
    }

    #[test]
    fn vees_defer_one_point_per_level() {
        let ohc = Ohc::new(&two_vees(), OhcParams::default()).unwrap();
        let s0 = ohc.initialize();
        let (s1, out) = ohc.run_level(&s0).unwrap();
        // Level 1: {p0,p1} and {p4,p5} merge; p2 and p3 wait.
        assert_eq!(out.record.groups, vec![vec![0, 1], vec![4, 5]]);
        assert_eq!(sorted_groups(&s1.clusters), vec![vec![0, 1], vec![2], vec![3], vec![4, 5]]);
        // Renumbered by smallest member: {0,1}, {2}, {3}, {4,5}.
        assert_eq!(s1.clusters.clusters[1].members, vec![2]);
        let (s2, _) = ohc.run_level(&s1).unwrap();
        assert_eq!(sorted_groups(&s2.clusters), vec![vec![0, 1, 2], vec![3, 4, 5]]);
        let seg = ohc.run().unwrap();
        assert_eq!(seg.dendrogram.levels.len(), 3);
        assert_eq!(
            seg.dendrogram.levels.iter().map(|l| l.clusters_after).collect::<Vec<_>>(),
            vec![4, 2, 2]
        );
    }

    #[test]
    fn identity_level_only_bumps_counter() {
        let far = PointCloud::from_xyz(&[[0.0, 0.0, 0.0], [3.0, 0.0, 0.0]]).unwrap();
        let ohc = Ohc::new(&far, OhcParams::default()).unwrap();
        let s0 = ohc.initialize();
        let (s1, out) = ohc.run_level(&s0).unwrap();
        assert!(out.matching.is_identity());
        assert_eq!(s1.clusters, s0.clusters);
        assert_eq!(s1.level, 1);
    }

    #[test]
    fn two_points_with_undefined_normals_stay_apart() {
        // alpha = 1, beta = 0.5, both exterior: 0.25 + 0.375 = 0.625 > 0.4.
        let far = PointCloud::from_xyz(&[[0.0, 0.0, 0.0], [3.0, 0.0, 0.0]]).unwrap();
        let ohc = Ohc::new(&far, OhcParams::default()).unwrap();
        let (_, out) = ohc.run_level(&ohc.initialize()).unwrap();
        assert!((out.graph.get(0, 1).unwrap() - 0.625).abs() < 1e-15);
        let seg = ohc.run().unwrap();
        assert_eq!(seg.clusters.len(), 2);
        assert_eq!(seg.dendrogram.levels.len(), 1);
    }

    #[test]
    fn coincident_points_merge_at_level_one() {
        let dup = PointCloud::from_xyz(&[[1.0, 1.0, 1.0], [1.0, 1.0, 1.0]]).unwrap();
        let seg = run(&dup, OhcParams::default()).unwrap();
        assert_eq!(seg.clusters.len(), 1);
        assert_eq!(seg.dendrogram.levels[0].groups, vec![vec![0, 1]]);
        assert!((seg.dendrogram.levels[0].heights[0] - 0.375).abs() < 1e-15);
    }

    #[test]
    fn single_point() {
        let one = PointCloud::from_xyz(&[[0.0, 0.0, 0.0]]).unwrap();
        let seg = run(&one, OhcParams::default()).unwrap();
        assert_eq!(seg.clusters.len(), 1);
        assert_eq!(seg.dendrogram.levels.len(), 1);
        assert!(seg.dendrogram.levels[0].groups.is_empty());
    }

    fn random_scene(seed: u64, n: usize) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers: Vec<[f64; 3]> = (0..4)
            .map(|_| [rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0), rng.gen_range(0.0..2.0)])
            .collect();
        let coords: Vec<[f64; 3]> = (0..n)
            .map(|i| {
                let c = centers[i % centers.len()];
                [
                    c[0] + rng.gen_range(-1.0..1.0),
                    c[1] + rng.gen_range(-1.0..1.0),
                    c[2] + rng.gen_range(-0.3..0.3),
                ]
            })
            .collect();
        PointCloud::from_xyz(&coords).unwrap()
    }

    #[test]
    fn partition_and_progress_hold_each_level() {
        let ohc = Ohc::new(&random_scene(3, 250), OhcParams::default()).unwrap();
        let mut last = usize::MAX;
        let seg = ohc
            .run_with(|state, out| {
                assert!(state.clusters.check_partition());
                assert!(state.clusters.len() < last);
                last = state.clusters.len();
                let cost = matching_cost(&out.matching.permutation, &out.view).unwrap();
                assert!((cost - out.matching.total_cost).abs() < 1e-9);
                if !out.record.groups.is_empty() {
                    assert!(out.record.clusters_after < state.clusters.len());
                }
                // Cached spacings agree with a from-scratch computation.
                for c in &state.clusters.clusters {
                    if c.len() > 1 {
                        assert_eq!(c.spacing, cluster_spacing(c, ohc.index()).unwrap());
                    }
                }
            })
            .unwrap();
        assert!(seg.clusters.check_partition());
        assert!(seg.dendrogram.levels.len() <= 250);
    }

    #[test]
    fn runs_are_deterministic() {
        let cloud = random_scene(4, 200);
        let a = run(&cloud, OhcParams::default()).unwrap();
        let b = run(&cloud, OhcParams::default()).unwrap();
        assert_eq!(a.dendrogram, b.dendrogram);
        assert_eq!(a.clusters, b.clusters);
    }

    #[test]
    fn greedy_baseline_agrees_on_separated_pairs() {
        let ohc = run(&three_pairs(), OhcParams::default()).unwrap();
        let greedy = greedy_baseline(&three_pairs(), OhcParams::default()).unwrap();
        assert_eq!(sorted_groups(&ohc.clusters), sorted_groups(&greedy.clusters));
    }

    #[test]
    fn greedy_pairing_is_never_cheaper() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let n = 12;
            let mut view = BipartiteCostView::new(n, 0.4);
            for i in 0..n - 1 {
                view.insert_symmetric(i, i + 1, rng.gen_range(0.0..0.6));
                if i + 2 < n {
                    view.insert_symmetric(i, i + 2, rng.gen_range(0.0..0.6));
                }
            }
            let greedy = matching_cost(&greedy_pairing(&view), &view).unwrap();
            let optimal = solve_min_cost_perfect_matching(&view).total_cost;
            assert!(optimal <= greedy + 1e-12);
        }
    }

    #[test]
    fn adversarial_chain_beats_greedy() {
        // Greedy grabs the cheap middle edge and strands both ends.
        let view = BipartiteCostView::from_symmetric(4, 0.4, [(0, 1, 0.15), (1, 2, 0.1), (2, 3, 0.15)]);
        let greedy = matching_cost(&greedy_pairing(&view), &view).unwrap();
        let optimal = solve_min_cost_perfect_matching(&view);
        assert!((greedy - 1.0).abs() < 1e-12);
        assert!((optimal.total_cost - 0.6).abs() < 1e-12);
        assert_eq!(optimal.merge_groups, vec![vec![0, 1], vec![2, 3]]);
    }

    #[test]
    fn empty_adjacency_means_no_greedy_merges() {
        let far = PointCloud::from_xyz(&[[0.0, 0.0, 0.0], [3.0, 0.0, 0.0]]).unwrap();
        let seg = greedy_baseline(&far, OhcParams::default()).unwrap();
        assert_eq!(seg.clusters.len(), 2);
        assert_eq!(greedy_pairing(&BipartiteCostView::new(3, 0.4)), vec![0, 1, 2]);
    }
}
