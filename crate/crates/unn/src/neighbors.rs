//! Exact k-NN search, the neighbor graph, and sparse edge-matrix entries.
//!
//! The graph stores, for every example `i`, its `k` nearest other examples
//! (`direct[i]`, self excluded, nearest first) and the inverse relation
//! (`reciprocal[j]`: every `i` that lists `j`). Reciprocal lists are the
//! only rows an iteration leveraging `j` ever touches, and they are exactly
//! the support of column `j` of the per-class edge matrix, whose entries
//! [`edge_value`] evaluates on demand — the matrix is never materialized.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Distance used for neighbor search. A tag so other metrics can be added
/// without touching call sites.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricSpec {
    Euclidean,
}

impl MetricSpec {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(MetricSpec::Euclidean),
            other => Err(Error::domain(format!("unknown metric '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MetricSpec::Euclidean => "euclidean",
        }
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        self.distance_sq(a, b).sqrt()
    }

    /// Squared distance; ordering-equivalent to `distance` and cheaper.
    pub fn distance_sq(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            MetricSpec::Euclidean => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum(),
        }
    }
}

/// Search backend. Both are exact and return identical neighbor lists;
/// the kd-tree is only an accelerator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    Exhaustive,
    KdTree,
}

impl Backend {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "exhaustive" => Ok(Backend::Exhaustive),
            "kdtree" | "kd-tree" => Ok(Backend::KdTree),
            other => Err(Error::domain(format!(
                "unknown backend '{other}' (expected exhaustive | kdtree)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Backend::Exhaustive => "exhaustive",
            Backend::KdTree => "kdtree",
        }
    }
}

/// Neighbor ordering key: squared distance, ties broken by ascending index.
#[derive(Debug, Clone, Copy, PartialEq)]
struct NeighborKey {
    dist_sq: f64,
    index: usize,
}

impl Eq for NeighborKey {}

impl Ord for NeighborKey {
    fn cmp(&self, other: &Self) -> Ordering {
        // Distances are finite by construction.
        self.dist_sq
            .partial_cmp(&other.dist_sq)
            .unwrap()
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for NeighborKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// The `min(k, available)` nearest example indices to `query`, by
/// non-decreasing distance with index tie-breaking; `exclude_id` is left out.
pub fn knn_search(
    query: &[f64],
    dataset: &Dataset,
    k: usize,
    metric: MetricSpec,
    exclude_id: Option<usize>,
) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::domain("k must be at least 1"));
    }
    if dataset.is_empty() {
        return Err(Error::domain("cannot search an empty dataset"));
    }
    if query.len() != dataset.dim() {
        return Err(Error::domain(format!(
            "query has dimension {}, dataset has {}",
            query.len(),
            dataset.dim()
        )));
    }
    let mut keys: Vec<NeighborKey> = (0..dataset.len())
        .filter(|&i| Some(i) != exclude_id)
        .map(|i| NeighborKey {
            dist_sq: metric.distance_sq(query, dataset.features(i)),
            index: i,
        })
        .collect();
    let k = k.min(keys.len());
    if k < keys.len() {
        keys.select_nth_unstable(k);
        keys.truncate(k);
    }
    keys.sort_unstable();
    Ok(keys.into_iter().map(|key| key.index).collect())
}

// ---------------------------------------------------------------------------
// kd-tree (exact)
// ---------------------------------------------------------------------------

struct KdNode {
    /// Index of the point stored at this node.
    point: usize,
    split_dim: usize,
    left: Option<usize>,
    right: Option<usize>,
}

/// An exact kd-tree over a dataset's observations. Results are identical to
/// exhaustive search, including tie handling.
pub struct KdTree<'a> {
    dataset: &'a Dataset,
    nodes: Vec<KdNode>,
    root: Option<usize>,
}

impl<'a> KdTree<'a> {
    pub fn build(dataset: &'a Dataset) -> Self {
        let mut indices: Vec<usize> = (0..dataset.len()).collect();
        let mut nodes = Vec::with_capacity(dataset.len());
        let root = Self::build_rec(dataset, &mut indices[..], &mut nodes);
        KdTree {
            dataset,
            nodes,
            root,
        }
    }

    fn build_rec(dataset: &Dataset, ids: &mut [usize], nodes: &mut Vec<KdNode>) -> Option<usize> {
        if ids.is_empty() {
            return None;
        }
        // Split on the dimension with the widest extent.
        let n = dataset.dim();
        let mut split_dim = 0;
        let mut best_extent = f64::NEG_INFINITY;
        for d in 0..n {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for &i in ids.iter() {
                let v = dataset.features(i)[d];
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if hi - lo > best_extent {
                best_extent = hi - lo;
                split_dim = d;
            }
        }
        let mid = ids.len() / 2;
        ids.select_nth_unstable_by(mid, |&a, &b| {
            dataset.features(a)[split_dim]
                .partial_cmp(&dataset.features(b)[split_dim])
                .unwrap()
                .then(a.cmp(&b))
        });
        let point = ids[mid];
        let slot = nodes.len();
        nodes.push(KdNode {
            point,
            split_dim,
            left: None,
            right: None,
        });
        let (lo_ids, rest) = ids.split_at_mut(mid);
        let hi_ids = &mut rest[1..];
        let left = Self::build_rec(dataset, lo_ids, nodes);
        let right = Self::build_rec(dataset, hi_ids, nodes);
        nodes[slot].left = left;
        nodes[slot].right = right;
        Some(slot)
    }

    /// Same contract as [`knn_search`].
    pub fn knn(
        &self,
        query: &[f64],
        k: usize,
        metric: MetricSpec,
        exclude_id: Option<usize>,
    ) -> Result<Vec<usize>> {
        if k == 0 {
            return Err(Error::domain("k must be at least 1"));
        }
        if query.len() != self.dataset.dim() {
            return Err(Error::domain(format!(
                "query has dimension {}, dataset has {}",
                query.len(),
                self.dataset.dim()
            )));
        }
        let available = self.dataset.len() - usize::from(exclude_id.is_some());
        let k = k.min(available);
        let mut heap: BinaryHeap<NeighborKey> = BinaryHeap::with_capacity(k + 1);
        if let Some(root) = self.root {
            self.search_rec(root, query, k, metric, exclude_id, &mut heap);
        }
        let mut out = heap.into_sorted_vec();
        out.truncate(k);
        Ok(out.into_iter().map(|key| key.index).collect())
    }

    fn search_rec(
        &self,
        node_id: usize,
        query: &[f64],
        k: usize,
        metric: MetricSpec,
        exclude_id: Option<usize>,
        heap: &mut BinaryHeap<NeighborKey>,
    ) {
        let node = &self.nodes[node_id];
        if Some(node.point) != exclude_id {
            let key = NeighborKey {
                dist_sq: metric.distance_sq(query, self.dataset.features(node.point)),
                index: node.point,
            };
            if heap.len() < k {
                heap.push(key);
            } else if key < *heap.peek().unwrap() {
                heap.pop();
                heap.push(key);
            }
        }
        let d = node.split_dim;
        let diff = query[d] - self.dataset.features(node.point)[d];
        let (near, far) = if diff < 0.0 {
            (node.left, node.right)
        } else {
            (node.right, node.left)
        };
        if let Some(n) = near {
            self.search_rec(n, query, k, metric, exclude_id, heap);
        }
        if let Some(f) = far {
            // Visit the far side on exact plane ties too: an equidistant
            // point with a smaller index can still displace the current worst.
            let visit = heap.len() < k || diff * diff <= heap.peek().unwrap().dist_sq;
            if visit {
                self.search_rec(f, query, k, metric, exclude_id, heap);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Neighbor graph
// ---------------------------------------------------------------------------

/// Direct and reciprocal k-NN lists over a training set.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborGraph {
    k: usize,
    direct: Vec<Vec<usize>>,
    reciprocal: Vec<Vec<usize>>,
}

impl NeighborGraph {
    /// Effective neighbor count (after any clamping to m-1).
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.direct.len()
    }

    pub fn is_empty(&self) -> bool {
        self.direct.is_empty()
    }

    /// The k nearest examples to `i` (self excluded), nearest first.
    pub fn direct(&self, i: usize) -> &[usize] {
        &self.direct[i]
    }

    /// The examples that list `j` among their own neighbors.
    pub fn reciprocal(&self, j: usize) -> &[usize] {
        &self.reciprocal[j]
    }

    fn from_direct(k: usize, direct: Vec<Vec<usize>>) -> Self {
        let m = direct.len();
        let mut reciprocal = vec![Vec::new(); m];
        for (i, list) in direct.iter().enumerate() {
            for &j in list {
                reciprocal[j].push(i);
            }
        }
        // i was pushed in ascending order already; keep lists sorted.
        NeighborGraph {
            k,
            direct,
            reciprocal,
        }
    }
}

/// Build the neighbor graph of a dataset. `k >= m` is clamped to `m - 1`
/// with a warning so tiny fixtures stay usable.
pub fn build_graph(
    dataset: &Dataset,
    k: usize,
    metric: MetricSpec,
    backend: Backend,
) -> Result<NeighborGraph> {
    if dataset.len() < 2 {
        return Err(Error::domain("graph needs at least 2 examples"));
    }
    if k == 0 {
        return Err(Error::domain("k must be at least 1"));
    }
    let mut k = k;
    if k >= dataset.len() {
        log::warn!(
            "k = {k} >= m = {}; clamping to {}",
            dataset.len(),
            dataset.len() - 1
        );
        k = dataset.len() - 1;
    }
    let direct: Vec<Vec<usize>> = match backend {
        Backend::Exhaustive => (0..dataset.len())
            .into_par_iter()
            .map(|i| knn_search(dataset.features(i), dataset, k, metric, Some(i)))
            .collect::<Result<_>>()?,
        Backend::KdTree => {
            let tree = KdTree::build(dataset);
            (0..dataset.len())
                .into_par_iter()
                .map(|i| tree.knn(dataset.features(i), k, metric, Some(i)))
                .collect::<Result<_>>()?
        }
    };
    Ok(NeighborGraph::from_direct(k, direct))
}

/// Entry `r_ij` of the class-`c` edge matrix: `y_ic * y_jc` when `j` is
/// among the neighbors of `i`, zero otherwise.
pub fn edge_value(
    graph: &NeighborGraph,
    dataset: &Dataset,
    i: usize,
    j: usize,
    c: usize,
) -> f64 {
    if graph.direct(i).contains(&j) {
        dataset.y(i, c) * dataset.y(j, c)
    } else {
        0.0
    }
}

// ---------------------------------------------------------------------------
// Graph cache
// ---------------------------------------------------------------------------

const GRAPH_MAGIC: &str = "unn-graph v1";

/// Dump the direct lists, keyed by the dataset hash, k, and metric.
pub fn save_graph_cache(
    graph: &NeighborGraph,
    dataset: &Dataset,
    metric: MetricSpec,
    path: impl AsRef<Path>,
) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "{GRAPH_MAGIC}");
    let _ = writeln!(
        out,
        "key {} k={} metric={}",
        dataset.content_hash(),
        graph.k(),
        metric.name()
    );
    let _ = writeln!(out, "m {}", graph.len());
    for i in 0..graph.len() {
        let _ = write!(out, "{i}:");
        for &j in graph.direct(i) {
            let _ = write!(out, " {j}");
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Load a cached graph, validating the version line and the
/// (dataset, k, metric) key.
pub fn load_graph_cache(
    path: impl AsRef<Path>,
    dataset: &Dataset,
    k: usize,
    metric: MetricSpec,
) -> Result<NeighborGraph> {
    let text = std::fs::read_to_string(path.as_ref())?;
    let mut lines = text.lines();
    let magic = lines.next().unwrap_or("");
    if magic != GRAPH_MAGIC {
        return Err(Error::VersionMismatch {
            expected: GRAPH_MAGIC.to_string(),
            found: magic.to_string(),
        });
    }
    let effective_k = k.min(dataset.len().saturating_sub(1));
    let expected_key = format!(
        "key {} k={} metric={}",
        dataset.content_hash(),
        effective_k,
        metric.name()
    );
    let key_line = lines.next().unwrap_or("");
    if key_line != expected_key {
        return Err(Error::domain(format!(
            "graph cache key mismatch: file has '{key_line}', expected '{expected_key}'"
        )));
    }
    let m_line = lines.next().unwrap_or("");
    let m: usize = m_line
        .strip_prefix("m ")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::domain(format!("bad graph cache size line '{m_line}'")))?;
    if m != dataset.len() {
        return Err(Error::domain(format!(
            "graph cache holds {m} examples, dataset has {}",
            dataset.len()
        )));
    }
    let mut direct = Vec::with_capacity(m);
    for (i, line) in lines.enumerate() {
        let (head, tail) = line
            .split_once(':')
            .ok_or_else(|| Error::domain(format!("bad graph cache row '{line}'")))?;
        if head.parse::<usize>() != Ok(i) {
            return Err(Error::domain(format!(
                "graph cache rows out of order at '{line}'"
            )));
        }
        let row: Vec<usize> = tail
            .split_whitespace()
            .map(|tok| {
                tok.parse::<usize>()
                    .map_err(|_| Error::domain(format!("bad neighbor index '{tok}'")))
            })
            .collect::<Result<_>>()?;
        direct.push(row);
    }
    if direct.len() != m {
        return Err(Error::domain(format!(
            "graph cache has {} rows, expected {m}",
            direct.len()
        )));
    }
    Ok(NeighborGraph::from_direct(effective_k, direct))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{gen_blobs, gen_ripley, Dataset};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn points(rows: &[&[f64]]) -> Dataset {
        let feats: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
        // Alternate labels; classes are irrelevant for search tests.
        let labels: Vec<usize> = (0..rows.len()).map(|i| i % 2).collect();
        Dataset::from_rows(feats, labels, vec!["a".into(), "b".into()]).unwrap()
    }

    #[test]
    fn search_basic_ordering() {
        let ds = points(&[&[0.0, 0.0], &[1.0, 0.0], &[5.0, 0.0]]);
        let got = knn_search(&[0.1, 0.0], &ds, 2, MetricSpec::Euclidean, None).unwrap();
        assert_eq!(got, vec![0, 1]);
    }

    #[test]
    fn search_breaks_ties_by_index() {
        // Indices 3 and 7 equidistant from the query contend for the last
        // slot; 3 must win.
        let ds = points(&[
            &[0.0],
            &[10.0],
            &[20.0],
            &[2.0],
            &[30.0],
            &[40.0],
            &[50.0],
            &[-2.0],
        ]);
        let got = knn_search(&[0.0], &ds, 2, MetricSpec::Euclidean, None).unwrap();
        assert_eq!(got, vec![0, 3]);
        let tree = KdTree::build(&ds);
        assert_eq!(
            tree.knn(&[0.0], 2, MetricSpec::Euclidean, None).unwrap(),
            vec![0, 3]
        );
    }

    #[test]
    fn search_rejects_dimension_mismatch() {
        let ds = points(&[&[0.0, 0.0], &[1.0, 0.0]]);
        assert!(knn_search(&[0.0], &ds, 1, MetricSpec::Euclidean, None).is_err());
        let tree = KdTree::build(&ds);
        assert!(tree.knn(&[0.0], 1, MetricSpec::Euclidean, None).is_err());
    }

    #[test]
    fn backends_agree_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for case in 0..120 {
            let m = rng.gen_range(5..60);
            let dim = rng.gen_range(1..5);
            let k = rng.gen_range(1..=m.min(7));
            // Snap coordinates to a coarse lattice so exact ties occur often.
            let rows: Vec<Vec<f64>> = (0..m)
                .map(|_| {
                    (0..dim)
                        .map(|_| (rng.gen_range(-4i32..=4) as f64) * 0.5)
                        .collect()
                })
                .collect();
            let labels: Vec<usize> = (0..m).map(|i| i % 2).collect();
            let ds = Dataset::from_rows(rows, labels, vec!["a".into(), "b".into()]).unwrap();
            let tree = KdTree::build(&ds);
            for q in 0..m.min(10) {
                let query = ds.features(q).to_vec();
                for exclude in [None, Some(q)] {
                    let a = knn_search(&query, &ds, k, MetricSpec::Euclidean, exclude).unwrap();
                    let b = tree.knn(&query, k, MetricSpec::Euclidean, exclude).unwrap();
                    assert_eq!(a, b, "case {case}, query {q}, exclude {exclude:?}");
                }
            }
        }
    }

    #[test]
    fn backends_agree_on_ripley_graph() {
        let (train, _) = gen_ripley(250, 10, 17).unwrap();
        let g1 = build_graph(&train, 9, MetricSpec::Euclidean, Backend::Exhaustive).unwrap();
        let g2 = build_graph(&train, 9, MetricSpec::Euclidean, Backend::KdTree).unwrap();
        assert_eq!(g1, g2);
    }

    #[test]
    fn graph_collinear_fixture_and_asymmetry() {
        let ds = points(&[&[0.0], &[1.0], &[3.0]]);
        let g = build_graph(&ds, 1, MetricSpec::Euclidean, Backend::Exhaustive).unwrap();
        assert_eq!(g.direct(0), &[1]);
        assert_eq!(g.direct(1), &[0]); // d(1,0)=1 < d(1,2)=2
        assert_eq!(g.direct(2), &[1]);
        let mut r1 = g.reciprocal(1).to_vec();
        r1.sort_unstable();
        assert_eq!(r1, vec![0, 2]);
        // Asymmetric pair: 1 is a neighbor of 2, but 2 is not a neighbor of 1.
        assert!(g.direct(2).contains(&1));
        assert!(!g.direct(1).contains(&2));
    }

    #[test]
    fn graph_counting_identity_and_inversion_exactness() {
        let ds = gen_blobs(3, 20, 4, 0.6, 3).unwrap();
        let g = build_graph(&ds, 5, MetricSpec::Euclidean, Backend::KdTree).unwrap();
        let direct_total: usize = (0..g.len()).map(|i| g.direct(i).len()).sum();
        let recip_total: usize = (0..g.len()).map(|j| g.reciprocal(j).len()).sum();
        assert_eq!(direct_total, g.len() * g.k().min(g.len() - 1));
        assert_eq!(direct_total, recip_total);
        // Brute-force re-inversion must match exactly.
        for j in 0..g.len() {
            let brute: Vec<usize> = (0..g.len())
                .filter(|&i| g.direct(i).contains(&j))
                .collect();
            assert_eq!(g.reciprocal(j), &brute[..]);
        }
    }

    #[test]
    fn graph_clamps_oversized_k() {
        let ds = points(&[&[0.0], &[1.0], &[2.0]]);
        let g = build_graph(&ds, 10, MetricSpec::Euclidean, Backend::Exhaustive).unwrap();
        assert_eq!(g.k(), 2);
        assert!(g.direct(0).len() == 2);
    }

    #[test]
    fn edge_values_follow_class_vectors() {
        let ds = gen_blobs(2, 4, 2, 0.3, 8).unwrap();
        let g = build_graph(&ds, 2, MetricSpec::Euclidean, Backend::Exhaustive).unwrap();
        for i in 0..ds.len() {
            for &j in g.direct(i) {
                let e = edge_value(&g, &ds, i, j, 0);
                assert_eq!(e, ds.y(i, 0) * ds.y(j, 0));
                assert!(e == 1.0 || e == -1.0);
            }
            for j in 0..ds.len() {
                if !g.direct(i).contains(&j) {
                    assert_eq!(edge_value(&g, &ds, i, j, 0), 0.0);
                }
            }
        }
    }

    #[test]
    fn edge_value_multiclass_off_class_pair() {
        // C=8: two off-class examples that are neighbors give (1/7)^2.
        let ds = gen_blobs(8, 3, 4, 0.4, 21).unwrap();
        let g = build_graph(&ds, 3, MetricSpec::Euclidean, Backend::Exhaustive).unwrap();
        let mut checked = false;
        'outer: for i in 0..ds.len() {
            for &j in g.direct(i) {
                for c in 0..8 {
                    if ds.label(i) != c && ds.label(j) != c {
                        let e = edge_value(&g, &ds, i, j, c);
                        assert!((e - 1.0 / 49.0).abs() < 1e-15);
                        checked = true;
                        break 'outer;
                    }
                }
            }
        }
        assert!(checked);
    }

    #[test]
    fn column_support_equals_reciprocal_list() {
        let ds = gen_blobs(3, 10, 3, 0.5, 12).unwrap();
        let g = build_graph(&ds, 4, MetricSpec::Euclidean, Backend::Exhaustive).unwrap();
        for j in 0..ds.len() {
            for c in 0..ds.class_count() {
                let support: Vec<usize> = (0..ds.len())
                    .filter(|&i| edge_value(&g, &ds, i, j, c) != 0.0)
                    .collect();
                assert_eq!(support, g.reciprocal(j), "j={j} c={c}");
            }
        }
    }

    #[test]
    fn graph_cache_roundtrip_and_key_validation() {
        let ds = gen_blobs(2, 12, 3, 0.4, 6).unwrap();
        let g = build_graph(&ds, 3, MetricSpec::Euclidean, Backend::Exhaustive).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("graph.txt");
        save_graph_cache(&g, &ds, MetricSpec::Euclidean, &path).unwrap();
        let loaded = load_graph_cache(&path, &ds, 3, MetricSpec::Euclidean).unwrap();
        assert_eq!(loaded, g);

        // Wrong k -> key mismatch.
        assert!(load_graph_cache(&path, &ds, 4, MetricSpec::Euclidean).is_err());
        // Different dataset -> key mismatch.
        let other = gen_blobs(2, 12, 3, 0.4, 7).unwrap();
        assert!(load_graph_cache(&path, &other, 3, MetricSpec::Euclidean).is_err());
        // Wrong version line -> version error.
        let mut text = std::fs::read_to_string(&path).unwrap();
        text = text.replacen("unn-graph v1", "unn-graph v9", 1);
        std::fs::write(&path, text).unwrap();
        assert!(matches!(
            load_graph_cache(&path, &ds, 3, MetricSpec::Euclidean),
            Err(Error::VersionMismatch { .. })
        ));
    }
}
