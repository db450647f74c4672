/// Static 3-d tree over a point set, built once by median splits.
#[derive(Debug, Clone)]
pub struct KdTree3 {
    points: Vec<[f64; 3]>,
    /// Point indices arranged so each subtree occupies a contiguous range
    /// with its splitting point in the middle.
    order: Vec<usize>,
}

impl KdTree3 {
    pub fn build(points: Vec<[f64; 3]>) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        Self::split(&points, &mut order, 0);
        Self { points, order }
    }

    fn split(points: &[[f64; 3]], order: &mut [usize], depth: usize) {
        if order.len() <= 1 {
            return;
        }
        let axis = depth % 3;
        let mid = order.len() / 2;
        order.select_nth_unstable_by(mid, |&a, &b| points[a][axis].total_cmp(&points[b][axis]));
        let (left, right) = order.split_at_mut(mid);
        Self::split(points, left, depth + 1);
        Self::split(points, &mut right[1..], depth + 1);
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

    /// Indices of all points within `radius` (inclusive) of `query`, sorted
    /// by distance then index, truncated to `max`.
    pub fn within(&self, query: [f64; 3], radius: f64, max: usize) -> Vec<usize> {
        let mut hits = Vec::new();
        self.search(query, radius * radius, &self.order, 0, &mut hits);
        hits.sort_by(|a: &(f64, usize), b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        hits.truncate(max);
        hits.into_iter().map(|(_, i)| i).collect()
    }

    fn search(&self, q: [f64; 3], r2: f64, order: &[usize], depth: usize, hits: &mut Vec<(f64, usize)>) {
        if order.is_empty() {
            return;
        }
        let mid = order.len() / 2;
        let idx = order[mid];
        let p = self.points[idx];
        let d2 = (0..3).map(|k| (p[k] - q[k]).powi(2)).sum::<f64>();
        if d2 <= r2 {
            hits.push((d2, idx));
        }
        let axis = depth % 3;
        let diff = q[axis] - p[axis];
        let (near, far) = if diff < 0.0 {
            (&order[..mid], &order[mid + 1..])
        } else {
            (&order[mid + 1..], &order[..mid])
        };
        self.search(q, r2, near, depth + 1, hits);
        if diff * diff <= r2 {
            self.search(q, r2, far, depth + 1, hits);
        }
    }
}
