//! Exact k-nearest-neighbor queries over 3D points via a kd-tree.
//!
//! Neighbors are ordered by (squared distance, index) so results are total
//! and reproducible even with duplicate coordinates.

use nalgebra::Vector3;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

#[derive(Debug, Clone, Copy)]
struct Node {
    /// Index into the point set.
    point: u32,
    axis: u8,
    left: i32,
    right: i32,
}

pub struct KdTree {
    points: Vec<Vector3<f64>>,
    nodes: Vec<Node>,
    root: i32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapEntry {
    d2: f64,
    index: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2
            .total_cmp(&other.d2)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl KdTree {
    pub fn build(points: &[Vector3<f64>]) -> Self {
        let mut indices: Vec<u32> = (0..points.len() as u32).collect();
        let mut nodes = Vec::with_capacity(points.len());
        let root = Self::build_rec(points, &mut indices, 0, &mut nodes);
        Self {
            points: points.to_vec(),
            nodes,
            root,
        }
    }

    fn build_rec(
        points: &[Vector3<f64>],
        indices: &mut [u32],
        depth: usize,
        nodes: &mut Vec<Node>,
    ) -> i32 {
        if indices.is_empty() {
            return -1;
        }
        let axis = (depth % 3) as u8;
        let mid = indices.len() / 2;
        indices.select_nth_unstable_by(mid, |&a, &b| {
            points[a as usize][axis as usize]
                .total_cmp(&points[b as usize][axis as usize])
                .then(a.cmp(&b))
        });
        let point = indices[mid];
        let slot = nodes.len();
        nodes.push(Node {
            point,
            axis,
            left: -1,
            right: -1,
        });
        let (lo, hi) = indices.split_at_mut(mid);
        let left = Self::build_rec(points, lo, depth + 1, nodes);
        let right = Self::build_rec(points, &mut hi[1..], depth + 1, nodes);
        nodes[slot].left = left;
        nodes[slot].right = right;
        slot as i32
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Nearest neighbor of `query`, optionally excluding one index.
    /// Returns (point index, squared distance).
    pub fn nearest(&self, query: &Vector3<f64>, exclude: Option<usize>) -> Option<(usize, f64)> {
        self.k_nearest(query, 1, exclude).into_iter().next()
    }

    /// The `k` nearest neighbors of `query`, squared distances ascending.
    pub fn k_nearest(
        &self,
        query: &Vector3<f64>,
        k: usize,
        exclude: Option<usize>,
    ) -> Vec<(usize, f64)> {
        if k == 0 || self.points.is_empty() {
            return Vec::new();
        }
        let mut heap: BinaryHeap<HeapEntry> = BinaryHeap::with_capacity(k + 1);
        self.search(self.root, query, k, exclude, &mut heap);
        let mut out: Vec<(usize, f64)> = heap.into_iter().map(|e| (e.index, e.d2)).collect();
        out.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        out
    }

    fn search(
        &self,
        node: i32,
        query: &Vector3<f64>,
        k: usize,
        exclude: Option<usize>,
        heap: &mut BinaryHeap<HeapEntry>,
    ) {
        if node < 0 {
            return;
        }
        let n = &self.nodes[node as usize];
        let idx = n.point as usize;
        if Some(idx) != exclude {
            let d2 = (self.points[idx] - query).norm_squared();
            let entry = HeapEntry { d2, index: idx };
            if heap.len() < k {
                heap.push(entry);
            } else if entry < *heap.peek().unwrap() {
                heap.pop();
                heap.push(entry);
            }
        }
        let axis = n.axis as usize;
        let delta = query[axis] - self.points[idx][axis];
        let (near, far) = if delta < 0.0 {
            (n.left, n.right)
        } else {
            (n.right, n.left)
        };
        self.search(near, query, k, exclude, heap);
        let must_visit_far =
            heap.len() < k || delta * delta <= heap.peek().unwrap().d2;
        if must_visit_far {
            self.search(far, query, k, exclude, heap);
        }
    }
}
