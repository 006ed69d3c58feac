//! Minimum-cost perfect matching on the cluster bipartite graph.
//!
//! Each cluster appears once on the left and once on the right. Matching a
//! cluster to itself costs `sm` and means "stay unmerged"; matching across
//! an adjacency edge costs the pair's dissimilarity. The optimal permutation
//! is found with a sparse Kuhn-Munkres (shortest augmenting paths with dual
//! potentials) and then moved, among all optimal permutations, to the
//! lexicographically smallest one. Its cycles are the merge groups.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, VecDeque};

use crate::error::{Error, Result};
use crate::proximity::ProximityGraph;

const NONE: usize = usize::MAX;

/// Sparse square cost matrix with `sm` on the diagonal. Absent entries are forbidden.
#[derive(Debug, Clone, PartialEq)]
pub struct BipartiteCostView {
    sm: f64,
    /// Per row, `(column, cost)` ascending by column; always contains the diagonal.
    rows: Vec<Vec<(usize, f64)>>,
}

impl BipartiteCostView {
    /// Diagonal-only view: the identity is the only feasible assignment.
    pub fn new(n: usize, sm: f64) -> Self {
        Self {
            sm,
            rows: (0..n).map(|i| vec![(i, sm)]).collect(),
        }
    }

    /// View over symmetric off-diagonal entries `(i, j, cost)`.
    pub fn from_symmetric(n: usize, sm: f64, entries: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut view = Self::new(n, sm);
        for (i, j, c) in entries {
            view.insert_symmetric(i, j, c);
        }
        view
    }

    pub fn from_proximity(graph: &ProximityGraph) -> Self {
        Self::from_symmetric(
            graph.len(),
            graph.sm(),
            graph.edges().iter().map(|e| (e.i, e.j, e.terms.value)),
        )
    }

    /// Sets `cost(i, j) = cost(j, i) = c`. Diagonal entries stay at `sm`.
    pub fn insert_symmetric(&mut self, i: usize, j: usize, c: f64) {
        if i == j {
            return;
        }
        self.insert(i, j, c);
        self.insert(j, i, c);
    }

    fn insert(&mut self, i: usize, j: usize, c: f64) {
        let row = &mut self.rows[i];
        match row.binary_search_by_key(&j, |&(col, _)| col) {
            Ok(pos) => row[pos].1 = c,
            Err(pos) => row.insert(pos, (j, c)),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn sm(&self) -> f64 {
        self.sm
    }

    pub fn cost(&self, i: usize, j: usize) -> Option<f64> {
        let row = &self.rows[i];
        row.binary_search_by_key(&j, |&(col, _)| col)
            .ok()
            .map(|pos| row[pos].1)
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    fn max_abs_cost(&self) -> f64 {
        self.rows
            .iter()
            .flatten()
            .map(|&(_, c)| c.abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchingResult {
    /// `permutation[i]` is the right-side partner of left cluster `i`.
    pub permutation: Vec<usize>,
    pub total_cost: f64,
    /// Cycles of the permutation, each ascending, ordered by smallest member.
    pub merge_groups: Vec<Vec<usize>>,
}

impl MatchingResult {
    pub fn is_identity(&self) -> bool {
        self.permutation.iter().enumerate().all(|(i, &j)| i == j)
    }
}

/// Cycles of a permutation. Fixed points become singleton groups.
pub fn extract_merge_groups(permutation: &[usize]) -> Vec<Vec<usize>> {
    let n = permutation.len();
    let mut seen = vec![false; n];
    let mut groups = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        let mut group = Vec::new();
        let mut i = start;
        while !seen[i] {
            seen[i] = true;
            group.push(i);
            i = permutation[i];
        }
        group.sort_unstable();
        groups.push(group);
    }
    groups
}

/// Sum of `cost(i, permutation[i])`.
pub fn matching_cost(permutation: &[usize], view: &BipartiteCostView) -> Result<f64> {
    permutation
        .iter()
        .enumerate()
        .map(|(row, &col)| view.cost(row, col).ok_or(Error::ForbiddenEdge { row, col }))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Key(f64, usize);

impl Eq for Key {}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Solver<'a> {
    view: &'a BipartiteCostView,
    row_pot: Vec<f64>,
    col_pot: Vec<f64>,
    col_of_row: Vec<usize>,
    row_of_col: Vec<usize>,
    // Scratch space for one Dijkstra run.
    dist: Vec<f64>,
    pred: Vec<usize>,
    done: Vec<bool>,
    row_dist: Vec<f64>,
}

impl<'a> Solver<'a> {
    fn new(view: &'a BipartiteCostView) -> Self {
        let n = view.len();
        Self {
            view,
            row_pot: vec![0.0; n],
            col_pot: vec![f64::INFINITY; n],
            col_of_row: vec![NONE; n],
            row_of_col: vec![NONE; n],
            dist: vec![f64::INFINITY; n],
            pred: vec![NONE; n],
            done: vec![false; n],
            row_dist: vec![0.0; n],
        }
    }

    /// Column reduction plus greedy assignment of each column's cheapest free row.
    fn initialize(&mut self) {
        let n = self.view.len();
        let mut best_row = vec![NONE; n];
        for i in 0..n {
            for &(j, c) in self.view.row(i) {
                if c < self.col_pot[j] {
                    self.col_pot[j] = c;
                    best_row[j] = i;
                }
            }
        }
        for j in 0..n {
            let i = best_row[j];
            if self.col_of_row[i] == NONE {
                self.col_of_row[i] = j;
                self.row_of_col[j] = i;
            }
        }
    }

    fn reduced(&self, i: usize, j: usize, c: f64) -> f64 {
        (c - self.row_pot[i] - self.col_pot[j]).max(0.0)
    }

    /// Shortest augmenting path from free row `source`, then dual update and flip.
    fn augment(&mut self, source: usize) {
        let mut heap = BinaryHeap::new();
        let mut touched: Vec<usize> = Vec::new();
        let mut finished: Vec<usize> = Vec::new();
        let mut tree_rows: Vec<usize> = vec![source];
        self.row_dist[source] = 0.0;

        for &(j, c) in self.view.row(source) {
            let nd = self.reduced(source, j, c);
            if nd < self.dist[j] {
                if self.dist[j] == f64::INFINITY {
                    touched.push(j);
                }
                self.dist[j] = nd;
                self.pred[j] = source;
                heap.push(Reverse(Key(nd, j)));
            }
        }

        let (sink, total) = loop {
            let Reverse(Key(d, j)) = heap.pop().expect("diagonal guarantees a feasible assignment");
            if self.done[j] || d > self.dist[j] {
                continue;
            }
            self.done[j] = true;
            finished.push(j);
            let r = self.row_of_col[j];
            if r == NONE {
                break (j, d);
            }
            self.row_dist[r] = d;
            tree_rows.push(r);
            for &(j2, c) in self.view.row(r) {
                if self.done[j2] {
                    continue;
                }
                let nd = d + self.reduced(r, j2, c);
                if nd < self.dist[j2] {
                    if self.dist[j2] == f64::INFINITY {
                        touched.push(j2);
                    }
                    self.dist[j2] = nd;
                    self.pred[j2] = r;
                    heap.push(Reverse(Key(nd, j2)));
                }
            }
        };

        for &j in &finished {
            self.col_pot[j] += self.dist[j] - total;
        }
        for &r in &tree_rows {
            self.row_pot[r] += total - self.row_dist[r];
        }

        let mut j = sink;
        loop {
            let r = self.pred[j];
            let prev = self.col_of_row[r];
            self.col_of_row[r] = j;
            self.row_of_col[j] = r;
            if r == source {
                break;
            }
            j = prev;
        }

        for j in touched {
            self.dist[j] = f64::INFINITY;
            self.pred[j] = NONE;
            self.done[j] = false;
        }
    }

    fn solve(mut self) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
        self.initialize();
        for s in 0..self.view.len() {
            if self.col_of_row[s] == NONE {
                self.augment(s);
            }
        }
        (self.col_of_row, self.row_pot, self.col_pot)
    }
}

/// Among the perfect matchings of the tight-edge graph, moves `col_of_row` to
/// the lexicographically smallest one by rotating alternating cycles.
fn lexicographic_refine(view: &BipartiteCostView, col_of_row: &mut [usize], tight: &[Vec<usize>]) {
    let n = col_of_row.len();
    let mut row_of_col = vec![NONE; n];
    for (r, &c) in col_of_row.iter().enumerate() {
        row_of_col[c] = r;
    }
    let mut fixed_col = vec![false; n];
    let mut parent = vec![NONE; n];
    let mut visited = vec![false; n];
    let mut queue = VecDeque::new();
    let mut visited_rows: Vec<usize> = Vec::new();

    for i in 0..n {
        let target_col = col_of_row[i];
        for &j in &tight[i] {
            if j >= target_col {
                break;
            }
            if fixed_col[j] {
                continue;
            }
            // Search rows reachable from j's owner through tight edges; reaching
            // a row tight to `target_col` closes a cycle that gives `j` to row `i`.
            let start = row_of_col[j];
            queue.clear();
            queue.push_back(start);
            visited[start] = true;
            visited_rows.push(start);
            parent[start] = NONE;
            let mut closing: Option<usize> = None;
            'bfs: while let Some(r) = queue.pop_front() {
                for &c in &tight[r] {
                    if fixed_col[c] {
                        continue;
                    }
                    if c == target_col {
                        closing = Some(r);
                        break 'bfs;
                    }
                    let next = row_of_col[c];
                    if next == i || visited[next] {
                        continue;
                    }
                    visited[next] = true;
                    visited_rows.push(next);
                    parent[next] = r;
                    queue.push_back(next);
                }
            }
            for r in visited_rows.drain(..) {
                visited[r] = false;
            }
            let Some(last) = closing else {
                continue;
            };
            // Walk back: each row on the path takes the column of its successor.
            let mut r = last;
            let mut take = target_col;
            loop {
                let own = col_of_row[r];
                col_of_row[r] = take;
                row_of_col[take] = r;
                take = own;
                if r == start {
                    break;
                }
                r = parent[r];
            }
            debug_assert_eq!(take, j);
            col_of_row[i] = j;
            row_of_col[j] = i;
            break;
        }
        fixed_col[col_of_row[i]] = true;
        debug_assert!(view.cost(i, col_of_row[i]).is_some());
    }
}

/// Minimum-cost perfect matching restricted to present edges, with ties
/// resolved toward the lexicographically smallest permutation.
pub fn solve_min_cost_perfect_matching(view: &BipartiteCostView) -> MatchingResult {
    let n = view.len();
    if n == 0 {
        return MatchingResult {
            permutation: Vec::new(),
            total_cost: 0.0,
            merge_groups: Vec::new(),
        };
    }
    let (mut permutation, row_pot, col_pot) = Solver::new(view).solve();
    let optimal_cost = matching_cost(&permutation, view).expect("solver uses present edges");

    let tol = 1e-10 * (1.0 + view.max_abs_cost());
    let tight: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            view.row(i)
                .iter()
                .filter(|&&(j, c)| c - row_pot[i] - col_pot[j] <= tol)
                .map(|&(j, _)| j)
                .collect()
        })
        .collect();
    let mut refined = permutation.clone();
    lexicographic_refine(view, &mut refined, &tight);
    let refined_cost = matching_cost(&refined, view).expect("tight edges are present");
    let total_cost = if refined_cost <= optimal_cost + 1e-12 * (1.0 + optimal_cost.abs()) {
        permutation = refined;
        refined_cost
    } else {
        optimal_cost
    };
    let merge_groups = extract_merge_groups(&permutation);
    MatchingResult {
        permutation,
        total_cost,
        merge_groups,
    }
}
