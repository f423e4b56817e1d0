//! Point cloud value type, k-d tree spatial index, exact k-nearest-neighbor
//! queries, and farthest point sampling.
//!
//! Distances are squared L2 throughout; square roots are taken only by callers
//! whose definitions demand unsquared values. All queries are exact: results
//! equal a brute-force linear scan, with ties broken by lower point index.

use crate::error::{Error, Result};

/// An ordered list of 3D points. Coordinates are finite f64, unit-free.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<[f64; 3]>,
}

impl PointCloud {
    /// Builds a cloud, rejecting NaN/Inf coordinates. Empty clouds are
    /// representable; operations that require points check for themselves.
    pub fn new(points: Vec<[f64; 3]>) -> Result<Self> {
        for (index, p) in points.iter().enumerate() {
            if !p.iter().all(|c| c.is_finite()) {
                return Err(Error::NonFinite { index });
            }
        }
        Ok(Self { points })
    }

    /// Builds a cloud from a flat `[x0, y0, z0, x1, ...]` buffer.
    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        assert!(flat.len() % 3 == 0, "flat buffer length must be a multiple of 3");
        Self::new(flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> [f64; 3] {
        self.points[i]
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn iter(&self) -> std::slice::Iter<'_, [f64; 3]> {
        self.points.iter()
    }

    /// Flat `[x0, y0, z0, x1, ...]` copy of the coordinates.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.points.len() * 3);
        for p in &self.points {
            out.extend_from_slice(p);
        }
        out
    }

    /// The sub-cloud at `indices`, preserving the order given.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
        }
    }

    /// Axis-aligned bounding box as (min, max), or None when empty.
    pub fn bounding_box(&self) -> Option<([f64; 3], [f64; 3])> {
        let first = *self.points.first()?;
        let mut lo = first;
        let mut hi = first;
        for p in &self.points {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        Some((lo, hi))
    }

    pub fn centroid(&self) -> Option<[f64; 3]> {
        if self.points.is_empty() {
            return None;
        }
        let mut c = [0.0; 3];
        for p in &self.points {
            for a in 0..3 {
                c[a] += p[a];
            }
        }
        let n = self.points.len() as f64;
        Some([c[0] / n, c[1] / n, c[2] / n])
    }

    fn check_non_empty(&self) -> Result<()> {
        if self.points.is_empty() {
            Err(Error::EmptyCloud)
        } else {
            Ok(())
        }
    }
}

/// Squared Euclidean distance. The single definition used by every query path
/// so that index results and brute-force scans agree bit-for-bit.
#[inline]
pub fn dist2(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// Sorted, deduplicated indices into a parent cloud.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexSet {
    indices: Vec<usize>,
}

impl IndexSet {
    /// Sorts and deduplicates.
    pub fn from_unsorted(mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        Self { indices }
    }

    /// Accepts an already strictly increasing sequence.
    pub fn from_sorted(indices: Vec<usize>) -> Self {
        debug_assert!(indices.windows(2).all(|w| w[0] < w[1]));
        Self { indices }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.indices
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, usize> {
        self.indices.iter()
    }

    /// True when `self` is a subset of `other`.
    pub fn is_subset_of(&self, other: &IndexSet) -> bool {
        self.indices.iter().all(|&i| other.contains(i))
    }
}

const LEAF_SIZE: usize = 16;

enum KdNode {
    Leaf {
        begin: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
        begin: usize,
        end: usize,
    },
}

/// Immutable k-d tree over a cloud. Queries are exact and safe to run
/// concurrently from multiple threads.
pub struct SpatialIndex {
    points: Vec<[f64; 3]>,
    // permutation of original indices, partitioned by the tree
    order: Vec<usize>,
    nodes: Vec<KdNode>,
    root: usize,
}

/// Builds a spatial index over a non-empty, finite cloud.
pub fn build_index(cloud: &PointCloud) -> Result<SpatialIndex> {
    cloud.check_non_empty()?;
    let points = cloud.points().to_vec();
    let mut order: Vec<usize> = (0..points.len()).collect();
    let mut nodes = Vec::new();
    let n = points.len();
    let root = build_node(&points, &mut order, &mut nodes, 0, n);
    Ok(SpatialIndex {
        points,
        order,
        nodes,
        root,
    })
}

fn build_node(
    points: &[[f64; 3]],
    order: &mut [usize],
    nodes: &mut Vec<KdNode>,
    begin: usize,
    end: usize,
) -> usize {
    let len = end - begin;
    if len <= LEAF_SIZE {
        nodes.push(KdNode::Leaf { begin, end });
        return nodes.len() - 1;
    }
    // split on the axis with the widest extent; deterministic tie-break by axis id
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in &order[begin..end] {
        let p = points[i];
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let mut axis = 0;
    for a in 1..3 {
        if hi[a] - lo[a] > hi[axis] - lo[axis] {
            axis = a;
        }
    }
    let mid = begin + len / 2;
    // order point indices by (coordinate, index) so duplicates split deterministically
    order[begin..end].select_nth_unstable_by(mid - begin, |&i, &j| {
        points[i][axis]
            .total_cmp(&points[j][axis])
            .then(i.cmp(&j))
    });
    let value = points[order[mid]][axis];
    let left = build_node(points, order, nodes, begin, mid);
    let right = build_node(points, order, nodes, mid, end);
    nodes.push(KdNode::Split {
        axis,
        value,
        left,
        right,
        begin,
        end,
    });
    nodes.len() - 1
}

/// Candidate heap entry ordered by (squared distance, index) so that ties
/// resolve to the lower point index.
#[derive(PartialEq)]
struct HeapEntry {
    d2: f64,
    idx: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.d2.total_cmp(&other.d2).then(self.idx.cmp(&other.idx))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl SpatialIndex {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The k nearest neighbors of `query`, ascending by squared distance,
    /// ties broken by lower point index. Exactly equals a brute-force scan.
    pub fn knn(&self, query: [f64; 3], k: usize) -> Result<Vec<(usize, f64)>> {
        if k == 0 || k > self.points.len() {
            return Err(Error::KTooLarge {
                k,
                size: self.points.len(),
            });
        }
        let mut heap: std::collections::BinaryHeap<HeapEntry> =
            std::collections::BinaryHeap::with_capacity(k + 1);
        self.search(self.root, query, k, &mut heap);
        let mut out: Vec<(usize, f64)> = heap.into_iter().map(|e| (e.idx, e.d2)).collect();
        out.sort_unstable_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        Ok(out)
    }

    /// Nearest neighbor of `query` (index, squared distance).
    pub fn nearest(&self, query: [f64; 3]) -> (usize, f64) {
        // index is non-empty by construction
        self.knn(query, 1).expect("non-empty index")[0]
    }

    fn search(
        &self,
        node: usize,
        query: [f64; 3],
        k: usize,
        heap: &mut std::collections::BinaryHeap<HeapEntry>,
    ) {
        match self.nodes[node] {
            KdNode::Leaf { begin, end } => {
                for &idx in &self.order[begin..end] {
                    let d2 = dist2(query, self.points[idx]);
                    offer(heap, k, HeapEntry { d2, idx });
                }
            }
            KdNode::Split {
                axis,
                value,
                left,
                right,
                ..
            } => {
                let delta = query[axis] - value;
                let (near, far) = if delta < 0.0 { (left, right) } else { (right, left) };
                self.search(near, query, k, heap);
                // The far side can only contain a better candidate if the
                // plane distance does not already exceed the current worst;
                // on exact ties we must still descend so that lower indices win.
                let plane_d2 = delta * delta;
                let must_visit = heap.len() < k
                    || plane_d2 <= heap.peek().map(|e| e.d2).unwrap_or(f64::INFINITY);
                if must_visit {
                    self.search(far, query, k, heap);
                }
            }
        }
    }
}

fn offer(heap: &mut std::collections::BinaryHeap<HeapEntry>, k: usize, entry: HeapEntry) {
    if heap.len() < k {
        heap.push(entry);
    } else if let Some(worst) = heap.peek() {
        if entry < *worst {
            heap.pop();
            heap.push(entry);
        }
    }
}

/// Reference k-NN by full sort; the oracle the index must match.
pub fn knn_brute(cloud: &PointCloud, query: [f64; 3], k: usize) -> Result<Vec<(usize, f64)>> {
    if k == 0 || k > cloud.len() {
        return Err(Error::KTooLarge {
            k,
            size: cloud.len(),
        });
    }
    let mut all: Vec<(usize, f64)> = cloud
        .iter()
        .enumerate()
        .map(|(i, &p)| (i, dist2(query, p)))
        .collect();
    all.sort_unstable_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    all.truncate(k);
    Ok(all)
}

/// Farthest point sampling result: selection order plus the sorted index set.
#[derive(Debug, Clone)]
pub struct FpsResult {
    /// Indices in the order they were selected; `order[0]` is the start.
    pub order: Vec<usize>,
    /// The same indices as a sorted set.
    pub set: IndexSet,
}

/// Greedy farthest point sampling over `cloud`. The first pick is `start`;
/// each later pick maximizes the minimum squared distance to all previous
/// picks, ties broken by lower index. Deterministic.
pub fn farthest_point_sample(cloud: &PointCloud, count: usize, start: usize) -> Result<FpsResult> {
    if count == 0 || count > cloud.len() {
        return Err(Error::CountTooLarge {
            count,
            size: cloud.len(),
        });
    }
    if start >= cloud.len() {
        return Err(Error::BadStart {
            start,
            size: cloud.len(),
        });
    }
    let order = fps_rows(&cloud.to_flat(), 3, count, start);
    Ok(FpsResult {
        set: IndexSet::from_unsorted(order.clone()),
        order,
    })
}

/// Farthest point sampling over rows of a flat row-major matrix of shape
/// `(n, dim)` under squared Euclidean distance. Shared by 3D clouds and
/// latent-space start selection.
pub fn fps_rows(data: &[f64], dim: usize, count: usize, start: usize) -> Vec<usize> {
    assert!(dim > 0 && data.len() % dim == 0);
    let n = data.len() / dim;
    assert!(count >= 1 && count <= n && start < n);
    let row = |i: usize| &data[i * dim..(i + 1) * dim];
    let d2 = |a: &[f64], b: &[f64]| -> f64 {
        let mut s = 0.0;
        for (x, y) in a.iter().zip(b) {
            let d = x - y;
            s += d * d;
        }
        s
    };
    let mut selected = vec![false; n];
    let mut min_d2 = vec![f64::INFINITY; n];
    let mut order = Vec::with_capacity(count);
    let mut current = start;
    selected[current] = true;
    order.push(current);
    while order.len() < count {
        let cur_row = row(current);
        for i in 0..n {
            if !selected[i] {
                let d = d2(row(i), cur_row);
                if d < min_d2[i] {
                    min_d2[i] = d;
                }
            }
        }
        let mut best: Option<usize> = None;
        for i in 0..n {
            if selected[i] {
                continue;
            }
            match best {
                None => best = Some(i),
                Some(b) => {
                    if min_d2[i] > min_d2[b] {
                        best = Some(i);
                    }
                }
            }
        }
        current = best.expect("count <= n leaves at least one unselected point");
        selected[current] = true;
        order.push(current);
    }
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_cloud(n: usize, rng: &mut impl Rng) -> PointCloud {
        PointCloud::new(
            (0..n)
                .map(|_| [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()])
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn rejects_non_finite() {
        let err = PointCloud::new(vec![[0.0, f64::NAN, 0.0]]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { index: 0 }));
    }

    #[test]
    fn build_index_rejects_empty() {
        let cloud = PointCloud::new(vec![]).unwrap();
        assert!(matches!(build_index(&cloud), Err(Error::EmptyCloud)));
    }

    #[test]
    fn single_point_is_its_own_neighbor() {
        let cloud = PointCloud::new(vec![[1.0, 2.0, 3.0]]).unwrap();
        let index = build_index(&cloud).unwrap();
        let hits = index.knn([-5.0, 0.0, 9.0], 1).unwrap();
        assert_eq!(hits[0].0, 0);
    }

    #[test]
    fn self_query_has_zero_distance() {
        let cloud = PointCloud::new(vec![[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]]).unwrap();
        let index = build_index(&cloud).unwrap();
        let hits = index.knn([1.0, 1.0, 1.0], 1).unwrap();
        assert_eq!(hits, vec![(1, 0.0)]);
    }

    #[test]
    fn collinear_points_forced_order() {
        let cloud = PointCloud::new(vec![
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [2.0, 0.0, 0.0],
            [3.0, 0.0, 0.0],
        ])
        .unwrap();
        let index = build_index(&cloud).unwrap();
        let hits = index.knn([0.9, 0.0, 0.0], 2).unwrap();
        assert_eq!(hits[0].0, 1);
        assert_eq!(hits[1].0, 0);
    }

    #[test]
    fn duplicates_all_retrievable() {
        let cloud = PointCloud::new(vec![[1.0, 1.0, 1.0]; 5]).unwrap();
        let index = build_index(&cloud).unwrap();
        let hits = index.knn([1.0, 1.0, 1.0], 5).unwrap();
        let ids: Vec<usize> = hits.iter().map(|h| h.0).collect();
        assert_eq!(ids, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn k_too_large_rejected() {
        let cloud = PointCloud::new(vec![[0.0; 3]; 3]).unwrap();
        let index = build_index(&cloud).unwrap();
        assert!(matches!(
            index.knn([0.0; 3], 4),
            Err(Error::KTooLarge { k: 4, size: 3 })
        ));
    }

    #[test]
    fn knn_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..40 {
            let n = rng.gen_range(1..=256);
            let cloud = random_cloud(n, &mut rng);
            let index = build_index(&cloud).unwrap();
            let k = rng.gen_range(1..=n.min(9));
            for _ in 0..20 {
                let q = [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()];
                let fast = index.knn(q, k).unwrap();
                let slow = knn_brute(&cloud, q, k).unwrap();
                assert_eq!(fast, slow, "trial {trial} n={n} k={k}");
            }
        }
    }

    #[test]
    fn knn_matches_brute_force_with_duplicates() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let n = rng.gen_range(4..=64);
            let mut pts = Vec::with_capacity(n);
            for _ in 0..n {
                // coarse grid so duplicate coordinates are common
                pts.push([
                    (rng.gen_range(0..3)) as f64,
                    (rng.gen_range(0..3)) as f64,
                    (rng.gen_range(0..3)) as f64,
                ]);
            }
            let cloud = PointCloud::new(pts).unwrap();
            let index = build_index(&cloud).unwrap();
            let k = rng.gen_range(1..=n);
            let q = [rng.gen_range(0.0..2.0), rng.gen_range(0.0..2.0), 0.5];
            assert_eq!(
                index.knn(q, k).unwrap(),
                knn_brute(&cloud, q, k).unwrap()
            );
        }
    }

    #[test]
    fn fps_exhaustion_selects_everything() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cloud = random_cloud(17, &mut rng);
        let fps = farthest_point_sample(&cloud, 17, 4).unwrap();
        assert_eq!(fps.order.len(), 17);
        assert_eq!(fps.set.len(), 17);
        assert_eq!(fps.order[0], 4);
    }

    #[test]
    fn fps_unit_square_picks_opposite_corner() {
        let cloud = PointCloud::new(vec![
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [1.0, 1.0, 0.0],
        ])
        .unwrap();
        let fps = farthest_point_sample(&cloud, 2, 0).unwrap();
        assert_eq!(fps.order, vec![0, 3]);
    }

    #[test]
    fn fps_each_step_is_exhaustive_argmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let n = rng.gen_range(8..=64);
            let cloud = random_cloud(n, &mut rng);
            let count = rng.gen_range(2..=n.min(10));
            let start = rng.gen_range(0..n);
            let fps = farthest_point_sample(&cloud, count, start).unwrap();
            // replay the greedy selection with an explicit argmax over the rest
            let mut chosen = vec![fps.order[0]];
            for step in 1..count {
                let mut best_idx = usize::MAX;
                let mut best_d = f64::NEG_INFINITY;
                for i in 0..n {
                    if chosen.contains(&i) {
                        continue;
                    }
                    let d = chosen
                        .iter()
                        .map(|&c| dist2(cloud.point(i), cloud.point(c)))
                        .fold(f64::INFINITY, f64::min);
                    if d > best_d {
                        best_d = d;
                        best_idx = i;
                    }
                }
                assert_eq!(fps.order[step], best_idx, "step {step}");
                chosen.push(best_idx);
            }
        }
    }

    #[test]
    fn fps_bad_args() {
        let cloud = PointCloud::new(vec![[0.0; 3]; 4]).unwrap();
        assert!(matches!(
            farthest_point_sample(&cloud, 5, 0),
            Err(Error::CountTooLarge { .. })
        ));
        assert!(matches!(
            farthest_point_sample(&cloud, 2, 4),
            Err(Error::BadStart { .. })
        ));
    }

    #[test]
    fn index_set_dedups_and_sorts() {
        let s = IndexSet::from_unsorted(vec![5, 1, 3, 1, 5]);
        assert_eq!(s.as_slice(), &[1, 3, 5]);
        assert!(s.contains(3));
        assert!(!s.contains(2));
    }
}
