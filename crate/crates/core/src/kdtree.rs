//! Exact k-nearest-neighbor queries over a static point set.

use std::collections::BinaryHeap;

const LEAF_SIZE: usize = 16;

enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

pub struct KdTree<'a> {
    points: &'a [f64],
    dim: usize,
    order: Vec<usize>,
    root: Node,
}

#[derive(PartialEq)]
struct Candidate(f64, usize);

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

impl<'a> KdTree<'a> {
    pub fn build(points: &'a [f64], dim: usize) -> Self {
        let n = points.len() / dim;
        let mut order: Vec<usize> = (0..n).collect();
        let root = build_node(points, dim, &mut order, 0, n);
        Self {
            points,
            dim,
            order,
            root,
        }
    }

    fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    /// Euclidean distance from point `i` to its `k`-th nearest other point.
    pub fn kth_neighbor_distance(&self, i: usize, k: usize) -> f64 {
        let mut heap = BinaryHeap::with_capacity(k + 1);
        let q = self.point(i).to_vec();
        self.search(&self.root, &q, i, k, &mut heap);
        heap.peek().map_or(f64::INFINITY, |c| c.0.sqrt())
    }

    fn search(&self, node: &Node, q: &[f64], skip: usize, k: usize, heap: &mut BinaryHeap<Candidate>) {
        match node {
            Node::Leaf { start, end } => {
                for &j in &self.order[*start..*end] {
                    if j == skip {
                        continue;
                    }
                    let d: f64 = self
                        .point(j)
                        .iter()
                        .zip(q)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    if heap.len() < k {
                        heap.push(Candidate(d, j));
                    } else if d < heap.peek().unwrap().0 {
                        heap.pop();
                        heap.push(Candidate(d, j));
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[*axis] - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, skip, k, heap);
                if heap.len() < k || diff * diff <= heap.peek().unwrap().0 {
                    self.search(far, q, skip, k, heap);
                }
            }
        }
    }
}

fn build_node(points: &[f64], dim: usize, order: &mut [usize], start: usize, end: usize) -> Node {
    if end - start <= LEAF_SIZE {
        return Node::Leaf { start, end };
    }
    let slice = &mut order[start..end];
    let mut axis = 0;
    let mut widest = -1.0;
    for a in 0..dim {
        let (lo, hi) = slice.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
            let v = points[i * dim + a];
            (lo.min(v), hi.max(v))
        });
        if hi - lo > widest {
            widest = hi - lo;
            axis = a;
        }
    }
    if widest <= 0.0 {
        return Node::Leaf { start, end };
    }
    let mid = slice.len() / 2;
    slice.select_nth_unstable_by(mid, |&a, &b| {
        points[a * dim + axis].total_cmp(&points[b * dim + axis])
    });
    let value = points[slice[mid] * dim + axis];
    // everything left of mid is <= value, right of mid is >= value
    let left = build_node(points, dim, order, start, start + mid);
    let right = build_node(points, dim, order, start + mid, end);
    Node::Split {
        axis,
        value,
        left: Box::new(left),
        right: Box::new(right),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for dim in [1, 2, 5] {
            // coarse values force many exact ties
            let pts: Vec<f64> = (0..300 * dim).map(|_| (rng.random_range(0..20) as f64) * 0.1).collect();
            let tree = KdTree::build(&pts, dim);
            for i in (0..300).step_by(7) {
                let mut d: Vec<f64> = (0..300)
                    .filter(|&j| j != i)
                    .map(|j| {
                        (0..dim)
                            .map(|a| (pts[i * dim + a] - pts[j * dim + a]).powi(2))
                            .sum::<f64>()
                            .sqrt()
                    })
                    .collect();
                d.sort_by(f64::total_cmp);
                for k in [1, 3, 10] {
                    assert_eq!(tree.kth_neighbor_distance(i, k), d[k - 1]);
                }
            }
        }
    }
}
