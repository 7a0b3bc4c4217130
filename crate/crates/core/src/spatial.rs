//! Exact nearest-neighbour queries over a static cloud.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::cloud::{CloudError, Point3, PointCloud};

pub const DEFAULT_LEAF_SIZE: usize = 16;

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

/// Balanced kd-tree over a snapshot of a cloud.
///
/// All answers are exact. Ties are broken towards the lowest point id, so the
/// same cloud always produces the same answers.
#[derive(Debug, Clone)]
pub struct KdIndex {
    coords: Vec<[f64; 3]>,
    ids: Vec<u32>,
    nodes: Vec<Node>,
}

/// Heap entry ordered by (squared distance, id).
#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    dist2: f64,
    id: u32,
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.id.cmp(&other.id))
    }
}

#[inline]
fn dist2(a: &[f64; 3], q: &[f64; 3]) -> f64 {
    let dx = a[0] - q[0];
    let dy = a[1] - q[1];
    let dz = a[2] - q[2];
    dx * dx + dy * dy + dz * dz
}

impl KdIndex {
    pub fn build(cloud: &PointCloud) -> Result<Self, CloudError> {
        Self::with_leaf_size(cloud, DEFAULT_LEAF_SIZE)
    }

    pub fn with_leaf_size(cloud: &PointCloud, leaf_size: usize) -> Result<Self, CloudError> {
        if cloud.is_empty() {
            return Err(CloudError::EmptyCloud);
        }
        let leaf_size = leaf_size.max(1);
        let mut order: Vec<u32> = (0..cloud.len() as u32).collect();
        let pts = &cloud.points;
        let mut nodes = Vec::with_capacity(2 * cloud.len() / leaf_size + 1);
        build_node(pts, &mut order, 0, leaf_size, &mut nodes);
        let coords = order
            .iter()
            .map(|&i| {
                let p = &pts[i as usize];
                [p.x, p.y, p.z]
            })
            .collect();
        Ok(Self {
            coords,
            ids: order,
            nodes,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Closest stored point as `(id, distance)`.
    pub fn nearest(&self, q: &Point3) -> (usize, f64) {
        let q = [q.x, q.y, q.z];
        let mut best = Candidate {
            dist2: f64::INFINITY,
            id: u32::MAX,
        };
        self.nearest_rec(0, &q, &mut best);
        (best.id as usize, best.dist2.sqrt())
    }

    fn nearest_rec(&self, node: usize, q: &[f64; 3], best: &mut Candidate) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for i in start..end {
                    let c = Candidate {
                        dist2: dist2(&self.coords[i], q),
                        id: self.ids[i],
                    };
                    if c < *best {
                        *best = c;
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.nearest_rec(near, q, best);
                // equality still descends: a farther-side tie may carry a lower id
                if diff * diff <= best.dist2 {
                    self.nearest_rec(far, q, best);
                }
            }
        }
    }

    /// `true` iff some stored point lies at distance strictly below `radius`.
    pub fn has_within(&self, q: &Point3, radius: f64) -> bool {
        let q = [q.x, q.y, q.z];
        self.has_within_rec(0, &q, radius)
    }

    fn has_within_rec(&self, node: usize, q: &[f64; 3], radius: f64) -> bool {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                (start..end).any(|i| dist2(&self.coords[i], q).sqrt() < radius)
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.has_within_rec(near, q, radius)
                    || (diff.abs() <= radius && self.has_within_rec(far, q, radius))
            }
        }
    }

    /// The `k` closest points as `(id, distance)`, nearest first.
    pub fn k_nearest(&self, q: &Point3, k: usize) -> Vec<(usize, f64)> {
        if k == 0 {
            return Vec::new();
        }
        let q = [q.x, q.y, q.z];
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.knn_rec(0, &q, k, &mut heap);
        heap.into_sorted_vec()
            .into_iter()
            .map(|c| (c.id as usize, c.dist2.sqrt()))
            .collect()
    }

    fn knn_rec(&self, node: usize, q: &[f64; 3], k: usize, heap: &mut BinaryHeap<Candidate>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for i in start..end {
                    let c = Candidate {
                        dist2: dist2(&self.coords[i], q),
                        id: self.ids[i],
                    };
                    if heap.len() < k {
                        heap.push(c);
                    } else if c < *heap.peek().expect("non-empty heap") {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.knn_rec(near, q, k, heap);
                let worst = if heap.len() < k {
                    f64::INFINITY
                } else {
                    heap.peek().map_or(f64::INFINITY, |c| c.dist2)
                };
                if diff * diff <= worst {
                    self.knn_rec(far, q, k, heap);
                }
            }
        }
    }
}

fn build_node(
    pts: &[Point3],
    order: &mut [u32],
    offset: usize,
    leaf_size: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let idx = nodes.len();
    if order.len() <= leaf_size {
        nodes.push(Node::Leaf {
            start: offset,
            end: offset + order.len(),
        });
        return idx;
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in order.iter() {
        let p = &pts[i as usize];
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let axis = (0..3)
        .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])).then(b.cmp(&a)))
        .unwrap_or(0);
    if hi[axis] - lo[axis] <= 0.0 {
        // all points coincide
        nodes.push(Node::Leaf {
            start: offset,
            end: offset + order.len(),
        });
        return idx;
    }
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        pts[a as usize][axis]
            .total_cmp(&pts[b as usize][axis])
            .then(a.cmp(&b))
    });
    let value = pts[order[mid] as usize][axis];
    nodes.push(Node::Leaf { start: 0, end: 0 });
    let (left_half, right_half) = order.split_at_mut(mid);
    let left = build_node(pts, left_half, offset, leaf_size, nodes);
    let right = build_node(pts, right_half, offset + mid, leaf_size, nodes);
    nodes[idx] = Node::Split {
        axis,
        value,
        left,
        right,
    };
    idx
}
