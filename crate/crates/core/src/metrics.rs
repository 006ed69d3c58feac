//! Overlap scores between a segmentation and a reference partition.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};

/// Disjoint clusters of point ids drawn from `0..universe`.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    clusters: Vec<Vec<usize>>,
    universe: usize,
}

impl Partition {
    pub fn new(clusters: Vec<Vec<usize>>, universe: usize) -> Result<Self> {
        let mut seen = vec![false; universe];
        for c in &clusters {
            if c.is_empty() {
                return Err(Error::InvalidParameter("partition has an empty cluster".into()));
            }
            for &p in c {
                if p >= universe || seen[p] {
                    return Err(Error::InvalidParameter(format!(
                        "point {p} is out of range or repeated"
                    )));
                }
                seen[p] = true;
            }
        }
        Ok(Self { clusters, universe })
    }

    /// Groups points by label. Points whose label is `None` are left out.
    pub fn from_labels<L>(labels: &[Option<L>]) -> Self
    where
        L: Copy + Eq + std::hash::Hash + Ord,
    {
        let mut by_label: HashMap<L, Vec<usize>> = HashMap::new();
        for (i, l) in labels.iter().enumerate() {
            if let Some(l) = l {
                by_label.entry(*l).or_default().push(i);
            }
        }
        let mut keyed: Vec<(L, Vec<usize>)> = by_label.into_iter().collect();
        keyed.sort_by_key(|(l, _)| *l);
        Self {
            clusters: keyed.into_iter().map(|(_, c)| c).collect(),
            universe: labels.len(),
        }
    }

    pub fn clusters(&self) -> &[Vec<usize>] {
        &self.clusters
    }

    pub fn universe(&self) -> usize {
        self.universe
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    fn owner_map(&self) -> Vec<usize> {
        let mut owner = vec![usize::MAX; self.universe];
        for (ci, c) in self.clusters.iter().enumerate() {
            for &p in c {
                owner[p] = ci;
            }
        }
        owner
    }

    /// Drops points not covered by both partitions. Returns the restricted
    /// pair and how many points were dropped.
    pub fn align(a: &Partition, b: &Partition) -> Result<(Partition, Partition, usize)> {
        if a.universe != b.universe {
            return Err(Error::InvalidParameter(format!(
                "universes differ: {} vs {}",
                a.universe, b.universe
            )));
        }
        let (oa, ob) = (a.owner_map(), b.owner_map());
        let keep: Vec<bool> = oa
            .iter()
            .zip(&ob)
            .map(|(&x, &y)| x != usize::MAX && y != usize::MAX)
            .collect();
        let covered = oa.iter().filter(|&&x| x != usize::MAX).count()
            + ob.iter().filter(|&&y| y != usize::MAX).count();
        let kept = keep.iter().filter(|&&k| k).count();
        let restrict = |p: &Partition| Partition {
            clusters: p
                .clusters
                .iter()
                .map(|c| c.iter().copied().filter(|&i| keep[i]).collect::<Vec<_>>())
                .filter(|c: &Vec<usize>| !c.is_empty())
                .collect(),
            universe: p.universe,
        };
        Ok((restrict(a), restrict(b), covered - 2 * kept))
    }
}

/// Mean over `from` clusters of the best overlap fraction with any `to` cluster.
fn best_overlap_mean(from: &Partition, to: &Partition, what: &'static str) -> Result<f64> {
    if from.is_empty() {
        return Err(Error::Undefined(what));
    }
    let owner = to.owner_map();
    let mut total = 0.0;
    for c in &from.clusters {
        let mut counts: HashMap<usize, usize> = HashMap::new();
        for &p in c {
            if owner[p] != usize::MAX {
                *counts.entry(owner[p]).or_default() += 1;
            }
        }
        let best = counts.values().copied().max().unwrap_or(0);
        total += best as f64 / c.len() as f64;
    }
    Ok(total / from.len() as f64)
}

/// Average, over result clusters, of the largest share held by one truth cluster.
pub fn completeness(result: &Partition, truth: &Partition) -> Result<f64> {
    best_overlap_mean(result, truth, "completeness of an empty result")
}

/// Average, over truth clusters, of the largest share held by one result cluster.
pub fn correctness(result: &Partition, truth: &Partition) -> Result<f64> {
    best_overlap_mean(truth, result, "correctness against an empty truth")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScoreReport {
    pub completeness: f64,
    pub correctness: f64,
    pub accuracy: f64,
    pub f1: f64,
}

pub fn score(result: &Partition, truth: &Partition) -> Result<ScoreReport> {
    let com = completeness(result, truth)?;
    let cor = correctness(result, truth)?;
    let f1 = if com + cor > 0.0 {
        2.0 * cor * com / (cor + com)
    } else {
        0.0
    };
    Ok(ScoreReport {
        completeness: com,
        correctness: cor,
        accuracy: com.min(cor),
        f1,
    })
}
