//! Minimal 3D kd-tree for nearest-neighbor queries.

use nalgebra::Point3;

struct Node {
    point: u32,
    axis: u8,
    left: i32,
    right: i32,
}

pub(crate) struct KdTree {
    points: Vec<Point3<f64>>,
    nodes: Vec<Node>,
    root: i32,
}

impl KdTree {
    pub fn build(points: &[Point3<f64>]) -> Self {
        let mut indices: Vec<u32> = (0..points.len() as u32).collect();
        let mut tree = KdTree {
            points: points.to_vec(),
            nodes: Vec::with_capacity(points.len()),
            root: -1,
        };
        tree.root = tree.build_rec(&mut indices, 0);
        tree
    }

    fn build_rec(&mut self, indices: &mut [u32], depth: usize) -> i32 {
        if indices.is_empty() {
            return -1;
        }
        let axis = (depth % 3) as u8;
        let mid = indices.len() / 2;
        indices.select_nth_unstable_by(mid, |&a, &b| {
            self.points[a as usize][axis as usize]
                .partial_cmp(&self.points[b as usize][axis as usize])
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let point = indices[mid];
        let id = self.nodes.len() as i32;
        self.nodes.push(Node {
            point,
            axis,
            left: -1,
            right: -1,
        });
        let (lo, rest) = indices.split_at_mut(mid);
        let hi = &mut rest[1..];
        let left = self.build_rec(lo, depth + 1);
        let right = self.build_rec(hi, depth + 1);
        self.nodes[id as usize].left = left;
        self.nodes[id as usize].right = right;
        id
    }

    /// Indices of the k nearest points to `query`, closest first; ties
    /// broken toward the lower index.
    pub fn knn(&self, query: &Point3<f64>, k: usize) -> Vec<u32> {
        // max-heap of (distance^2, index) keeping the k best
        let mut heap: Vec<(f64, u32)> = Vec::with_capacity(k + 1);
        self.knn_rec(self.root, query, k, &mut heap);
        heap.sort_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.1.cmp(&b.1))
        });
        heap.into_iter().map(|(_, i)| i).collect()
    }

    pub fn nearest(&self, query: &Point3<f64>) -> u32 {
        self.knn(query, 1)[0]
    }

    fn knn_rec(&self, node: i32, query: &Point3<f64>, k: usize, heap: &mut Vec<(f64, u32)>) {
        if node < 0 {
            return;
        }
        let n = &self.nodes[node as usize];
        let p = &self.points[n.point as usize];
        let d2 = (p - query).norm_squared();
        let worst_of = |heap: &Vec<(f64, u32)>| -> (usize, f64) {
            let mut idx = 0;
            let mut val = f64::NEG_INFINITY;
            for (i, e) in heap.iter().enumerate() {
                // prefer evicting the higher index on exact distance ties
                if e.0 > val || (e.0 == val && e.1 > heap[idx].1) {
                    val = e.0;
                    idx = i;
                }
            }
            (idx, val)
        };
        if heap.len() < k {
            heap.push((d2, n.point));
        } else {
            let (idx, worst) = worst_of(heap);
            if d2 < worst || (d2 == worst && n.point < heap[idx].1) {
                heap[idx] = (d2, n.point);
            }
        }
        let axis = n.axis as usize;
        let delta = query[axis] - p[axis];
        let (near, far) = if delta < 0.0 {
            (n.left, n.right)
        } else {
            (n.right, n.left)
        };
        self.knn_rec(near, query, k, heap);
        let worst = if heap.len() < k {
            f64::INFINITY
        } else {
            worst_of(heap).1
        };
        if delta * delta <= worst {
            self.knn_rec(far, query, k, heap);
        }
    }
}
