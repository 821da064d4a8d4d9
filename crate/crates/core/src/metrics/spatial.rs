//! Static k-d tree over 3D points for nearest-neighbor queries.

use crate::linalg::Vec3;
use crate::scalar::Real;

const LEAF_SIZE: usize = 8;

enum Node<T> {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: T,
        left: usize,
        right: usize,
    },
}

pub struct KdTree<T> {
    points: Vec<Vec3<T>>,
    /// Point indices permuted so every leaf owns a contiguous range.
    order: Vec<usize>,
    nodes: Vec<Node<T>>,
}

impl<T: Real> KdTree<T> {
    pub fn build(points: &[Vec3<T>]) -> Self {
        let mut tree = Self {
            points: points.to_vec(),
            order: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        if !points.is_empty() {
            tree.build_node(0, points.len(), 0);
        }
        tree
    }

    fn build_node(&mut self, start: usize, end: usize, depth: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        // Split on the axis of largest spread.
        let mut lo = [T::infinity(); 3];
        let mut hi = [T::neg_infinity(); 3];
        for &i in &self.order[start..end] {
            for a in 0..3 {
                lo[a] = lo[a].min(self.points[i][a]);
                hi[a] = hi[a].max(self.points[i][a]);
            }
        }
        let axis = (0..3)
            .max_by(|&a, &b| {
                (hi[a] - lo[a])
                    .partial_cmp(&(hi[b] - lo[b]))
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .unwrap_or(depth % 3);
        let mid = (start + end) / 2;
        let pts = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            pts[a][axis]
                .partial_cmp(&pts[b][axis])
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let value = self.points[self.order[mid]][axis];
        self.nodes.push(Node::Split {
            axis,
            value,
            left: 0,
            right: 0,
        });
        let left = self.build_node(start, mid, depth + 1);
        let right = self.build_node(mid, end, depth + 1);
        if let Node::Split {
            left: l, right: r, ..
        } = &mut self.nodes[id]
        {
            *l = left;
            *r = right;
        }
        id
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The `k` nearest points to `query` as `(index, squared distance)`,
    /// closest first. Points for which `skip` returns true are ignored.
    pub fn k_nearest_filtered(
        &self,
        query: &Vec3<T>,
        k: usize,
        skip: impl Fn(usize) -> bool,
    ) -> Vec<(usize, T)> {
        let mut best: Vec<(usize, T)> = Vec::with_capacity(k + 1);
        if k == 0 || self.nodes.is_empty() {
            return best;
        }
        self.search(0, query, k, &skip, &mut best);
        best
    }

    pub fn k_nearest(&self, query: &Vec3<T>, k: usize) -> Vec<(usize, T)> {
        self.k_nearest_filtered(query, k, |_| false)
    }

    pub fn nearest(&self, query: &Vec3<T>) -> Option<(usize, T)> {
        self.k_nearest(query, 1).into_iter().next()
    }

    fn search(
        &self,
        node: usize,
        q: &Vec3<T>,
        k: usize,
        skip: &impl Fn(usize) -> bool,
        best: &mut Vec<(usize, T)>,
    ) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    if skip(i) {
                        continue;
                    }
                    let d = (self.points[i] - *q).norm_squared();
                    if best.len() < k || d < best[best.len() - 1].1 {
                        let pos = best.partition_point(|(j, bd)| *bd < d || (*bd == d && *j < i));
                        best.insert(pos, (i, d));
                        best.truncate(k);
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
                let (near, far) = if diff < T::zero() {
                    (left, right)
                } else {
                    (right, left)
                };
                self.search(near, q, k, skip, best);
                if best.len() < k || diff * diff <= best[best.len() - 1].1 {
                    self.search(far, q, k, skip, best);
                }
            }
        }
    }
}
