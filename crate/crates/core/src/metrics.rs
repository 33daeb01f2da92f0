//! Point-set evaluation: symmetric Chamfer distance and F-score.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::se3::Vec3;

/// Length of the diagonal of the axis-aligned bounding box of `points`.
pub fn bbox_diagonal(points: &[Vec3]) -> f64 {
    let Some(first) = points.first() else {
        return 0.0;
    };
    let (lo, hi) = points
        .iter()
        .fold((*first, *first), |(lo, hi), p| (lo.inf(p), hi.sup(p)));
    (hi - lo).norm()
}

/// Uniform-grid index answering exact nearest-neighbour queries.
///
/// Ties are broken towards the lower point index, so results agree with a
/// plain linear scan.
pub struct PointGrid<'a> {
    points: &'a [Vec3],
    origin: Vec3,
    cell: f64,
    dims: [usize; 3],
    starts: Vec<usize>,
    members: Vec<usize>,
}

const PARALLEL_QUERIES: usize = 4096;

impl<'a> PointGrid<'a> {
    pub fn new(points: &'a [Vec3]) -> Self {
        assert!(!points.is_empty(), "PointGrid needs at least one point");
        let (lo, hi) = points
            .iter()
            .fold((points[0], points[0]), |(lo, hi), p| (lo.inf(p), hi.sup(p)));
        let extent = hi - lo;
        let longest = extent.max();
        let cell = if longest > 0.0 {
            // about two points per cell, never more than 64 cells per axis
            let occupied: f64 = extent
                .iter()
                .filter(|e| **e > 1e-9 * longest)
                .count()
                .max(1) as f64;
            let volume: f64 = extent.iter().filter(|e| **e > 1e-9 * longest).product();
            let per_cell = volume / (points.len() as f64 / 2.0);
            per_cell.powf(1.0 / occupied).max(longest / 64.0)
        } else {
            1.0
        };
        let dims = [0, 1, 2].map(|i| ((extent[i] / cell).floor() as usize + 1).min(65));
        let n_cells = dims[0] * dims[1] * dims[2];
        let mut grid = PointGrid {
            points,
            origin: lo,
            cell,
            dims,
            starts: vec![0; n_cells + 1],
            members: vec![0; points.len()],
        };
        let keys: Vec<usize> = points.iter().map(|p| grid.flat(grid.cell_of(p))).collect();
        for &k in &keys {
            grid.starts[k + 1] += 1;
        }
        for i in 0..n_cells {
            grid.starts[i + 1] += grid.starts[i];
        }
        let mut fill = grid.starts.clone();
        for (i, &k) in keys.iter().enumerate() {
            grid.members[fill[k]] = i;
            fill[k] += 1;
        }
        grid
    }

    fn cell_of(&self, p: &Vec3) -> [usize; 3] {
        [0, 1, 2].map(|i| {
            let c = ((p[i] - self.origin[i]) / self.cell).floor();
            if c.is_nan() || c < 0.0 {
                0
            } else {
                (c as usize).min(self.dims[i] - 1)
            }
        })
    }

    fn flat(&self, c: [usize; 3]) -> usize {
        (c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]
    }

    fn scan_cell(&self, c: [usize; 3], q: &Vec3, best: &mut (usize, f64)) {
        let k = self.flat(c);
        for &i in &self.members[self.starts[k]..self.starts[k + 1]] {
            let d2 = (self.points[i] - q).norm_squared();
            if d2 < best.1 || (d2 == best.1 && i < best.0) {
                *best = (i, d2);
            }
        }
    }

    /// Index of and squared distance to the nearest indexed point.
    pub fn nearest(&self, q: &Vec3) -> (usize, f64) {
        let center = self.cell_of(q);
        let mut best = (usize::MAX, f64::INFINITY);
        let max_ring = *self.dims.iter().max().unwrap();
        for ring in 0..=max_ring {
            let lo = center.map(|c| c as isize - ring as isize);
            let hi = center.map(|c| c as isize + ring as isize);
            for z in lo[2].max(0)..=hi[2].min(self.dims[2] as isize - 1) {
                for y in lo[1].max(0)..=hi[1].min(self.dims[1] as isize - 1) {
                    let on_shell_yz = z == lo[2] || z == hi[2] || y == lo[1] || y == hi[1];
                    if on_shell_yz {
                        for x in lo[0].max(0)..=hi[0].min(self.dims[0] as isize - 1) {
                            self.scan_cell([x as usize, y as usize, z as usize], q, &mut best);
                        }
                    } else {
                        for x in [lo[0], hi[0]] {
                            if x >= 0 && x < self.dims[0] as isize {
                                self.scan_cell([x as usize, y as usize, z as usize], q, &mut best);
                            }
                        }
                    }
                }
            }
            // Anything in ring + 1 or beyond is at least `ring` cells away.
            let reach = ring as f64 * self.cell;
            if best.0 != usize::MAX && best.1 < reach * reach {
                break;
            }
        }
        best
    }

    pub fn nearest_all(&self, queries: &[Vec3]) -> Vec<(usize, f64)> {
        if queries.len() >= PARALLEL_QUERIES {
            queries.par_iter().map(|q| self.nearest(q)).collect()
        } else {
            queries.iter().map(|q| self.nearest(q)).collect()
        }
    }
}

fn check_nonempty(a: &[Vec3], b: &[Vec3]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("point sets must be nonempty"));
    }
    Ok(())
}

fn mean(values: impl Iterator<Item = f64>, n: usize) -> f64 {
    values.sum::<f64>() / n as f64
}

/// `½ (mean_a min_b ‖a − b‖ + mean_b min_a ‖a − b‖)`.
pub fn chamfer_distance(a: &[Vec3], b: &[Vec3]) -> Result<f64> {
    check_nonempty(a, b)?;
    let ab = PointGrid::new(b).nearest_all(a);
    let ba = PointGrid::new(a).nearest_all(b);
    Ok(chamfer_from_nearest(&ab, &ba))
}

/// Chamfer distance from precomputed nearest-neighbour squared distances in
/// both directions.
pub(crate) fn chamfer_from_nearest(ab: &[(usize, f64)], ba: &[(usize, f64)]) -> f64 {
    let d_ab = mean(ab.iter().map(|(_, d2)| d2.sqrt()), ab.len());
    let d_ba = mean(ba.iter().map(|(_, d2)| d2.sqrt()), ba.len());
    0.5 * (d_ab + d_ba)
}

/// F-score in percent. The distance threshold is `threshold_fraction` times
/// the bounding-box diagonal of `b` (the reference set).
pub fn f_score(a: &[Vec3], b: &[Vec3], threshold_fraction: f64) -> Result<f64> {
    check_nonempty(a, b)?;
    if !(threshold_fraction > 0.0) {
        return Err(Error::invalid(format!(
            "threshold fraction must be positive, got {threshold_fraction}"
        )));
    }
    let threshold = threshold_fraction * bbox_diagonal(b);
    let ab = PointGrid::new(b).nearest_all(a);
    let ba = PointGrid::new(a).nearest_all(b);
    Ok(f_score_from_distances(&ab, &ba, threshold))
}

fn f_score_from_distances(ab: &[(usize, f64)], ba: &[(usize, f64)], threshold: f64) -> f64 {
    let within = |d: &[(usize, f64)]| d.iter().filter(|(_, d2)| d2.sqrt() <= threshold).count();
    let precision = within(ab) as f64 / ab.len() as f64;
    let recall = within(ba) as f64 / ba.len() as f64;
    if precision + recall == 0.0 {
        0.0
    } else {
        200.0 * precision * recall / (precision + recall)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub chamfer: f64,
    /// `(threshold fraction, F-score in percent)` in the order requested.
    pub f_scores: Vec<(f64, f64)>,
}

/// Chamfer distance plus one F-score per threshold; `b` is the reference.
pub fn evaluate(a: &[Vec3], b: &[Vec3], thresholds: &[f64]) -> Result<MetricReport> {
    check_nonempty(a, b)?;
    if let Some(t) = thresholds.iter().find(|t| !(**t > 0.0)) {
        return Err(Error::invalid(format!(
            "threshold fraction must be positive, got {t}"
        )));
    }
    let ab = PointGrid::new(b).nearest_all(a);
    let ba = PointGrid::new(a).nearest_all(b);
    let chamfer = 0.5
        * (mean(ab.iter().map(|(_, d2)| d2.sqrt()), a.len())
            + mean(ba.iter().map(|(_, d2)| d2.sqrt()), b.len()));
    let diag = bbox_diagonal(b);
    let f_scores = thresholds
        .iter()
        .map(|t| (*t, f_score_from_distances(&ab, &ba, t * diag)))
        .collect();
    Ok(MetricReport { chamfer, f_scores })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn brute_nearest(q: &Vec3, pts: &[Vec3]) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        for (i, p) in pts.iter().enumerate() {
            let d2 = (p - q).norm_squared();
            if d2 < best.1 {
                best = (i, d2);
            }
        }
        best
    }

    fn cloud(rng: &mut impl Rng, n: usize, scale: f64) -> Vec<Vec3> {
        (0..n)
            .map(|_| Vec3::from_fn(|_, _| rng.random_range(-scale..scale)))
            .collect()
    }

    #[test]
    fn chamfer_examples() {
        let a = vec![Vec3::zeros(), Vec3::x()];
        assert_eq!(chamfer_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(
            chamfer_distance(&[Vec3::zeros()], &[Vec3::x()]).unwrap(),
            1.0
        );
        assert!(chamfer_distance(&[], &a).is_err());
    }

    #[test]
    fn f_score_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = cloud(&mut rng, 50, 1.0);
        assert_eq!(f_score(&a, &a, 0.001).unwrap(), 100.0);
        let far: Vec<Vec3> = a.iter().map(|p| p + Vec3::x() * 100.0).collect();
        assert_eq!(f_score(&a, &far, 0.01).unwrap(), 0.0);

        // b spans a unit diagonal; threshold 0.1. Half of a lies on b, half far away.
        let b = vec![Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0)];
        let a = vec![
            Vec3::zeros(),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(5.0, 5.0, 5.0),
            Vec3::new(-5.0, 0.0, 0.0),
        ];
        let f = f_score(&a, &b, 0.1).unwrap();
        assert!((f - 200.0 * 0.5 / 1.5).abs() < 1e-12);
        assert!(f_score(&a, &b, 0.0).is_err());
    }

    #[test]
    fn grid_handles_degenerate_sets() {
        let same = vec![Vec3::new(1.0, 2.0, 3.0); 5];
        let g = PointGrid::new(&same);
        assert_eq!(g.nearest(&Vec3::zeros()), (0, 14.0));
        let flat: Vec<Vec3> = (0..100)
            .map(|i| Vec3::new(i as f64 * 0.1, 0.0, 0.0))
            .collect();
        let g = PointGrid::new(&flat);
        let q = Vec3::new(3.04, 2.0, -1.0);
        assert_eq!(g.nearest(&q), brute_nearest(&q, &flat));
    }

    proptest! {
        #[test]
        fn grid_matches_linear_scan(seed in any::<u64>(), n in 1usize..400, m in 1usize..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts = cloud(&mut rng, n, 2.0);
            let g = PointGrid::new(&pts);
            for q in cloud(&mut rng, m, 4.0) {
                prop_assert_eq!(g.nearest(&q), brute_nearest(&q, &pts));
            }
        }

        #[test]
        fn chamfer_symmetry_and_rigid_invariance(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = cloud(&mut rng, 60, 1.0);
            let b = cloud(&mut rng, 40, 1.5);
            prop_assert_eq!(chamfer_distance(&a, &b).unwrap(), chamfer_distance(&b, &a).unwrap());
            let t = crate::se3::RigidTransform::new(
                crate::se3::Rotation::from_rotation_vector(&Vec3::new(0.3, -1.0, 0.5)),
                Vec3::new(1.0, 2.0, 3.0),
            );
            let ta: Vec<Vec3> = a.iter().map(|p| t.apply_point(p)).collect();
            let tb: Vec<Vec3> = b.iter().map(|p| t.apply_point(p)).collect();
            let d = chamfer_distance(&ta, &tb).unwrap() - chamfer_distance(&a, &b).unwrap();
            prop_assert!(d.abs() < 1e-9);
        }

        #[test]
        fn f_score_is_monotone(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = cloud(&mut rng, 80, 1.0);
            let b = cloud(&mut rng, 80, 1.0);
            let mut last = 0.0;
            for t in [0.005, 0.01, 0.02, 0.05, 0.1, 0.5] {
                let f = f_score(&a, &b, t).unwrap();
                prop_assert!((0.0..=100.0).contains(&f));
                prop_assert!(f >= last);
                last = f;
            }
        }
    }
}
