//! Minimal 2-D k-d tree for nearest-neighbor queries over East-North points.
//! Ties in distance resolve to the lowest point index so results are
//! reproducible and match a linear scan exactly.

use crate::geodesy::EnuPoint;

#[derive(Debug, Clone)]
struct Node {
    point_index: usize,
    axis: usize,
    left: Option<usize>,
    right: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct KdTree2 {
    nodes: Vec<Node>,
    points: Vec<[f64; 2]>,
    root: usize,
}

impl KdTree2 {
    /// Builds a balanced tree by median splitting. Returns `None` for an
    /// empty point set.
    pub fn build(points: &[EnuPoint]) -> Option<Self> {
        if points.is_empty() {
            return None;
        }
        let coords: Vec<[f64; 2]> = points.iter().map(|p| [p.east_m, p.north_m]).collect();
        let mut indices: Vec<usize> = (0..points.len()).collect();
        let mut tree = Self {
            nodes: Vec::with_capacity(points.len()),
            points: coords,
            root: 0,
        };
        let root = tree.build_recursive(&mut indices, 0);
        tree.root = root;
        Some(tree)
    }

    fn build_recursive(&mut self, indices: &mut [usize], depth: usize) -> usize {
        let axis = depth % 2;
        // Sort by coordinate with index as tie-breaker: canonical layout.
        indices.sort_unstable_by(|&a, &b| {
            self.points[a][axis]
                .partial_cmp(&self.points[b][axis])
                .unwrap()
                .then(a.cmp(&b))
        });
        let median = indices.len() / 2;
        let point_index = indices[median];
        let node_slot = self.nodes.len();
        self.nodes.push(Node {
            point_index,
            axis,
            left: None,
            right: None,
        });
        // Split after reserving the slot so child indices are final.
        let (left_slice, rest) = indices.split_at_mut(median);
        let right_slice = &mut rest[1..];
        if !left_slice.is_empty() {
            let left = self.build_recursive(left_slice, depth + 1);
            self.nodes[node_slot].left = Some(left);
        }
        if !right_slice.is_empty() {
            let right = self.build_recursive(right_slice, depth + 1);
            self.nodes[node_slot].right = Some(right);
        }
        node_slot
    }

    /// Index of the nearest point to `query`, with squared distance.
    pub fn nearest(&self, query: &EnuPoint) -> (usize, f64) {
        let q = [query.east_m, query.north_m];
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(self.root, &q, &mut best);
        best
    }

    fn search(&self, node: usize, q: &[f64; 2], best: &mut (usize, f64)) {
        let n = &self.nodes[node];
        let p = self.points[n.point_index];
        let dx = p[0] - q[0];
        let dy = p[1] - q[1];
        let d2 = dx * dx + dy * dy;
        if d2 < best.1 || (d2 == best.1 && n.point_index < best.0) {
            *best = (n.point_index, d2);
        }
        let diff = q[n.axis] - p[n.axis];
        let (near, far) = if diff < 0.0 {
            (n.left, n.right)
        } else {
            (n.right, n.left)
        };
        if let Some(child) = near {
            self.search(child, q, best);
        }
        // The far side may hold an equally distant point with a lower index,
        // so it is pruned only when strictly farther.
        if let Some(child) = far {
            if diff * diff <= best.1 {
                self.search(child, q, best);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn linear_scan(query: &EnuPoint, points: &[EnuPoint]) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        for (i, p) in points.iter().enumerate() {
            let dx = p.east_m - query.east_m;
            let dy = p.north_m - query.north_m;
            let d2 = dx * dx + dy * dy;
            if d2 < best.1 || (d2 == best.1 && i < best.0) {
                best = (i, d2);
            }
        }
        best
    }

    #[test]
    fn empty_set_has_no_tree() {
        assert!(KdTree2::build(&[]).is_none());
    }

    #[test]
    fn query_on_a_data_point_returns_it() {
        let pts = vec![
            EnuPoint::new(0.0, 0.0),
            EnuPoint::new(3.0, 4.0),
            EnuPoint::new(-2.0, 1.0),
        ];
        let tree = KdTree2::build(&pts).unwrap();
        let (idx, d2) = tree.nearest(&EnuPoint::new(3.0, 4.0));
        assert_eq!(idx, 1);
        assert_eq!(d2, 0.0);
    }

    #[test]
    fn equidistant_pair_prefers_lower_index() {
        let pts = vec![EnuPoint::new(1.0, 0.0), EnuPoint::new(-1.0, 0.0)];
        let tree = KdTree2::build(&pts).unwrap();
        let (idx, _) = tree.nearest(&EnuPoint::new(0.0, 0.0));
        assert_eq!(idx, 0);
        // Same with the pair swapped: still the lower index.
        let pts = vec![EnuPoint::new(-1.0, 0.0), EnuPoint::new(1.0, 0.0)];
        let tree = KdTree2::build(&pts).unwrap();
        let (idx, _) = tree.nearest(&EnuPoint::new(0.0, 0.0));
        assert_eq!(idx, 0);
    }

    #[test]
    fn matches_linear_scan_on_random_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let points: Vec<EnuPoint> = (0..500)
            .map(|_| EnuPoint::new(rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0)))
            .collect();
        let tree = KdTree2::build(&points).unwrap();
        for _ in 0..1000 {
            let q = EnuPoint::new(rng.random_range(-120.0..120.0), rng.random_range(-120.0..120.0));
            assert_eq!(tree.nearest(&q), linear_scan(&q, &points));
        }
    }

    #[test]
    fn matches_linear_scan_with_duplicate_coordinates() {
        // Grid with duplicates: plenty of exact ties.
        let mut points = Vec::new();
        for x in 0..5 {
            for y in 0..5 {
                points.push(EnuPoint::new(f64::from(x), f64::from(y)));
                points.push(EnuPoint::new(f64::from(x), f64::from(y)));
            }
        }
        let tree = KdTree2::build(&points).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let q = EnuPoint::new(rng.random_range(-1.0..6.0), rng.random_range(-1.0..6.0));
            assert_eq!(tree.nearest(&q), linear_scan(&q, &points));
        }
        // Probe exact grid points too.
        for x in 0..5 {
            for y in 0..5 {
                let q = EnuPoint::new(f64::from(x), f64::from(y));
                assert_eq!(tree.nearest(&q), linear_scan(&q, &points));
            }
        }
    }
}
