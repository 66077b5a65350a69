//! Exact Euclidean k-nearest-neighbour search over the source inputs.
//!
//! Results are ordered by `(squared distance, original index)`, so ties are
//! resolved towards the lower index and every query is reproducible. The
//! kd-tree computes distances with the same arithmetic as a flat scan and
//! only prunes a subtree when its bound is strictly worse than the current
//! k-th candidate, which keeps the output identical to brute force.

use std::cmp::Ordering;

use crate::{Error, Label, LabeledDataset, Result, Scalar};

const LEAF_SIZE: usize = 16;

#[derive(Clone, Debug)]
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

#[derive(Clone, Debug)]
pub struct KnnIndex<T> {
    dim: usize,
    points: Vec<T>,
    labels: Vec<Label>,
    perm: Vec<usize>,
    nodes: Vec<Node<T>>,
}

/// Neighbours of one query, nearest first.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborList<T> {
    pub indices: Vec<usize>,
    pub distances: Vec<T>,
    /// Set when fewer than the requested `k` points exist.
    pub truncated: bool,
}

impl<T> NeighborList<T> {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

#[inline]
fn sq_dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&u, &v)| {
        let d = u - v;
        acc + d * d
    })
}

#[inline]
fn key_cmp<T: Scalar>(a: (T, usize), b: (T, usize)) -> Ordering {
    a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1))
}

/// Bounded sorted candidate list.
struct Candidates<T> {
    k: usize,
    items: Vec<(T, usize)>,
}

impl<T: Scalar> Candidates<T> {
    fn new(k: usize) -> Self {
        Self {
            k,
            items: Vec::with_capacity(k + 1),
        }
    }

    #[inline]
    fn full(&self) -> bool {
        self.items.len() >= self.k
    }

    #[inline]
    fn worst(&self) -> T {
        self.items.last().map(|c| c.0).unwrap_or_else(T::infinity)
    }

    #[inline]
    fn offer(&mut self, d: T, idx: usize) {
        if self.full() && key_cmp((d, idx), *self.items.last().unwrap()) != Ordering::Less {
            return;
        }
        let pos = self.items.partition_point(|&c| key_cmp(c, (d, idx)) == Ordering::Less);
        self.items.insert(pos, (d, idx));
        self.items.truncate(self.k);
    }
}

impl<T: Scalar> KnnIndex<T> {
    /// Indexes the inputs of `sources`, keeping their labels alongside.
    pub fn build(sources: &LabeledDataset<T>) -> Result<Self> {
        sources.ensure_non_empty()?;
        let dim = sources.dim();
        let n = sources.len();
        let mut index = Self {
            dim,
            points: sources.flat_features().to_vec(),
            labels: sources.labels().to_vec(),
            perm: (0..n).collect(),
            nodes: Vec::new(),
        };
        index.build_node(0, n);
        Ok(index)
    }

    fn coord(&self, i: usize, axis: usize) -> T {
        self.points[i * self.dim + axis]
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE || self.dim == 0 {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        // widest axis
        let mut axis = 0;
        let mut best_spread = -T::one();
        for a in 0..self.dim {
            let (lo, hi) = self.perm[start..end]
                .iter()
                .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &i| {
                    let v = self.coord(i, a);
                    (lo.min(v), hi.max(v))
                });
            if hi - lo > best_spread {
                best_spread = hi - lo;
                axis = a;
            }
        }
        if best_spread <= T::zero() {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mid = start + (end - start) / 2;
        let (points, dim) = (&self.points, self.dim);
        self.perm[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a * dim + axis]
                .partial_cmp(&points[b * dim + axis])
                .unwrap_or(Ordering::Equal)
        });
        let value = self.coord(self.perm[mid], axis);
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        id
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[T] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> Label {
        self.labels[i]
    }

    /// The `min(k, n')` exact nearest points to `x`.
    pub fn query(&self, x: &[T], k: usize) -> Result<NeighborList<T>> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        if k == 0 {
            return Err(Error::InvalidParameter("k must be at least 1".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("query point"));
        }
        let kk = k.min(self.len());
        let mut cand = Candidates::new(kk);
        self.search(0, x, &mut cand);
        Ok(NeighborList {
            indices: cand.items.iter().map(|c| c.1).collect(),
            distances: cand.items.iter().map(|c| c.0.sqrt()).collect(),
            truncated: kk < k,
        })
    }

    fn search(&self, node: usize, x: &[T], cand: &mut Candidates<T>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.perm[start..end] {
                    cand.offer(sq_dist(x, self.point(i)), i);
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = x[axis] - value;
                let (near, far) = if diff < T::zero() { (left, right) } else { (right, left) };
                self.search(near, x, cand);
                // equality still descends: a tied point with a lower index may sit there
                if !cand.full() || diff * diff <= cand.worst() {
                    self.search(far, x, cand);
                }
            }
        }
    }

    /// k-NN estimate of `E[Z | x]`: the mean of `z` over the neighbours of `x`.
    pub fn conditional_mean(&self, x: &[T], k: usize, z: &[T]) -> Result<T> {
        if z.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: z.len(),
            });
        }
        let nb = self.query(x, k)?;
        let sum: T = nb.indices.iter().map(|&j| z[j]).sum();
        Ok(sum / T::from_count(nb.len()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ds_1d(xs: &[f64]) -> LabeledDataset<f64> {
        let mut d = LabeledDataset::new(1);
        for (i, &x) in xs.iter().enumerate() {
            let l = if i % 2 == 0 { Label::Pos } else { Label::Neg };
            d.push(l, &[x]).unwrap();
        }
        d
    }

    /// Brute-force oracle: full sort of every point by (distance², index).
    fn flat_scan(pts: &LabeledDataset<f64>, x: &[f64], k: usize) -> Vec<usize> {
        let mut all: Vec<(f64, usize)> = (0..pts.len())
            .map(|i| {
                let d: f64 = pts.x(i).iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
                (d, i)
            })
            .collect();
        all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        all.into_iter().take(k).map(|p| p.1).collect()
    }

    #[test]
    fn small_cases() {
        let idx = KnnIndex::build(&ds_1d(&[5.0])).unwrap();
        assert_eq!(idx.len(), 1);
        let idx = KnnIndex::build(&ds_1d(&[0.0, 1.0, 2.0, 3.0])).unwrap();
        let nb = idx.query(&[1.4], 2).unwrap();
        assert_eq!(nb.indices, vec![1, 2]);
        assert!(KnnIndex::build(&LabeledDataset::<f64>::new(1)).is_err());
        assert!(matches!(
            idx.query(&[1.0, 2.0], 1),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn duplicates_and_ties() {
        let idx = KnnIndex::build(&ds_1d(&[3.0, 1.0, 1.0, 7.0])).unwrap();
        let nb = idx.query(&[1.0], 1).unwrap();
        assert_eq!(nb.indices, vec![1]);
        assert_eq!(nb.distances, vec![0.0]);
        let nb = idx.query(&[1.0], 2).unwrap();
        assert_eq!(nb.indices, vec![1, 2]);
        // 3.0 and 7.0 are both 2 away from 5.0; the lower index wins
        let mut pts = vec![10.0; 8];
        pts[3] = 3.0;
        pts[7] = 7.0;
        let idx = KnnIndex::build(&ds_1d(&pts)).unwrap();
        assert_eq!(idx.query(&[5.0], 1).unwrap().indices, vec![3]);
    }

    #[test]
    fn truncates_large_k() {
        let idx = KnnIndex::build(&ds_1d(&[0.0, 1.0])).unwrap();
        let nb = idx.query(&[0.2], 5).unwrap();
        assert_eq!(nb.indices, vec![0, 1]);
        assert!(nb.truncated);
        assert!(!idx.query(&[0.2], 2).unwrap().truncated);
    }

    #[test]
    fn conditional_means() {
        let d = ds_1d(&[0.0, 1.0, 2.0, 3.0, 4.0]);
        let idx = KnnIndex::build(&d).unwrap();
        let c = vec![2.5; 5];
        for k in 1..=5 {
            assert_eq!(idx.conditional_mean(&[1.3], k, &c).unwrap(), 2.5);
        }
        let labels: Vec<f64> = d.labels().iter().map(|l| l.sign()).collect();
        assert_eq!(idx.conditional_mean(&[3.0], 1, &labels).unwrap(), -1.0);
        assert!(idx.conditional_mean(&[3.0], 1, &[1.0]).is_err());
    }

    #[test]
    fn grouped_duplicates_give_exact_average() {
        // 4 copies at x=0 with z = 1,2,3,6 and far-away points
        let d = ds_1d(&[0.0, 50.0, 0.0, 60.0, 0.0, 0.0, 70.0]);
        let z = [1.0, 9.0, 2.0, 9.0, 3.0, 6.0, 9.0];
        let idx = KnnIndex::build(&d).unwrap();
        let grouped: Vec<f64> = (0..d.len()).filter(|&i| d.x(i)[0] == 0.0).map(|i| z[i]).collect();
        let expect = grouped.iter().sum::<f64>() / grouped.len() as f64;
        assert_eq!(idx.conditional_mean(&[0.0], 4, &z).unwrap(), expect);
    }

    #[test]
    fn tree_matches_flat_scan_with_heavy_ties() {
        // lattice points produce many equal distances
        let mut d = LabeledDataset::new(2);
        for i in 0..30 {
            for j in 0..30 {
                d.push(Label::Pos, &[(i % 7) as f64, (j % 5) as f64]).unwrap();
            }
        }
        let idx = KnnIndex::build(&d).unwrap();
        for q in [[0.0, 0.0], [3.0, 2.0], [3.5, 2.5], [6.0, 4.0], [10.0, -3.0]] {
            for k in [1, 5, 37, 200] {
                assert_eq!(idx.query(&q, k).unwrap().indices, flat_scan(&d, &q, k));
            }
        }
    }

    proptest! {
        #[test]
        fn matches_flat_scan(
            pts in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 1..120),
            q in prop::collection::vec(-6.0f64..6.0, 3),
            k in 1usize..20,
        ) {
            let mut d = LabeledDataset::new(3);
            for p in &pts {
                d.push(Label::Neg, p).unwrap();
            }
            let idx = KnnIndex::build(&d).unwrap();
            let nb = idx.query(&q, k).unwrap();
            prop_assert_eq!(&nb.indices, &flat_scan(&d, &q, k));
            prop_assert!(nb.distances.windows(2).all(|w| w[0] <= w[1]));
            // prefix property across k
            let nb2 = idx.query(&q, k + 1).unwrap();
            prop_assert_eq!(&nb2.indices[..nb.len()], &nb.indices[..]);
        }

        #[test]
        fn conditional_mean_is_bounded(
            pts in prop::collection::vec(-5.0f64..5.0, 2..60),
            q in -6.0f64..6.0,
            k in 1usize..10,
            seed in 0u64..1000,
        ) {
            let d = ds_1d(&pts);
            let z: Vec<f64> = (0..pts.len()).map(|i| ((i as u64 * 7919 + seed) % 101) as f64 - 50.0).collect();
            let idx = KnnIndex::build(&d).unwrap();
            let nb = idx.query(&[q], k).unwrap();
            let m = idx.conditional_mean(&[q], k, &z).unwrap();
            let lo = nb.indices.iter().map(|&j| z[j]).fold(f64::INFINITY, f64::min);
            let hi = nb.indices.iter().map(|&j| z[j]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(m >= lo - 1e-12 && m <= hi + 1e-12);
        }
    }
}
