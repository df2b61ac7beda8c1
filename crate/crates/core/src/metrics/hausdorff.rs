//! Symmetric Hausdorff distance between point sets.
//!
//! Both paths compare squared distances computed by the same expression and
//! take the square root once at the end, so the grid path returns exactly the
//! brute-force value.

use nalgebra::Vector3;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HausdorffMethod {
    BruteForce,
    #[default]
    Grid,
}

#[inline]
fn dist2(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let (dx, dy, dz) = (a.x - b.x, a.y - b.y, a.z - b.z);
    dx * dx + dy * dy + dz * dz
}

/// `max_a min_b |a - b|^2` by exhaustive search.
pub fn directed_sq_brute_force(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> f64 {
    a.iter()
        .map(|p| b.iter().map(|q| dist2(p, q)).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
}

struct Grid<'a> {
    points: &'a [Vector3<f64>],
    origin: Vector3<f64>,
    cell: f64,
    dims: [i64; 3],
    /// Start offsets into `order` per cell, length `cells + 1`.
    starts: Vec<usize>,
    order: Vec<usize>,
}

impl<'a> Grid<'a> {
    fn new(points: &'a [Vector3<f64>]) -> Self {
        let mut lo = points[0];
        let mut hi = points[0];
        for p in points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let extent = hi - lo;
        let max_ext = extent.max();
        // Roughly one point per cell, never degenerate.
        let mut cell = if max_ext > 0.0 {
            let vol: f64 = extent.iter().map(|e| e.max(max_ext * 1e-3)).product();
            (vol / points.len() as f64).cbrt()
        } else {
            1.0
        };
        if !(cell > 0.0 && cell.is_finite()) {
            cell = max_ext.max(1.0);
        }
        let dims_for = |cell: f64| [0, 1, 2].map(|d| (extent[d] / cell).floor() as i64 + 1);
        let cap = (8 * points.len()).max(64) as i64;
        let mut dims = dims_for(cell);
        while dims[0] * dims[1] * dims[2] > cap {
            cell *= 1.5;
            dims = dims_for(cell);
        }
        let mut grid = Self {
            points,
            origin: lo,
            cell,
            dims,
            starts: Vec::new(),
            order: Vec::new(),
        };
        let n_cells = (dims[0] * dims[1] * dims[2]) as usize;
        let keys: Vec<usize> = points.iter().map(|p| grid.index(grid.coords(p))).collect();
        let mut counts = vec![0usize; n_cells + 1];
        for &k in &keys {
            counts[k + 1] += 1;
        }
        for i in 0..n_cells {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut order = vec![0; points.len()];
        for (i, &k) in keys.iter().enumerate() {
            order[fill[k]] = i;
            fill[k] += 1;
        }
        grid.starts = counts;
        grid.order = order;
        grid
    }

    /// Cell coordinates, clamped into the grid.
    fn coords(&self, p: &Vector3<f64>) -> [i64; 3] {
        [0, 1, 2].map(|d| {
            let c = ((p[d] - self.origin[d]) / self.cell).floor();
            (c.clamp(-1.0e9, 1.0e9) as i64).clamp(0, self.dims[d] - 1)
        })
    }

    /// Unclamped cell coordinates of a query point.
    fn raw_coords(&self, p: &Vector3<f64>) -> [i64; 3] {
        [0, 1, 2].map(|d| {
            let c = ((p[d] - self.origin[d]) / self.cell).floor();
            c.clamp(-1.0e9, 1.0e9) as i64
        })
    }

    fn index(&self, c: [i64; 3]) -> usize {
        ((c[0] * self.dims[1] + c[1]) * self.dims[2] + c[2]) as usize
    }

    fn scan_cell(&self, c: [i64; 3], q: &Vector3<f64>, best: &mut f64) {
        let i = self.index(c);
        for &pi in &self.order[self.starts[i]..self.starts[i + 1]] {
            let d = dist2(q, &self.points[pi]);
            if d < *best {
                *best = d;
            }
        }
    }

    /// Squared distance from `q` to its nearest grid point.
    fn nearest_sq(&self, q: &Vector3<f64>) -> f64 {
        let c = self.raw_coords(q);
        // Chebyshev cell distance from the query cell to the grid box.
        let gap = (0..3)
            .map(|d| (-c[d]).max(c[d] - (self.dims[d] - 1)).max(0))
            .max()
            .unwrap_or(0);
        let reach = (0..3)
            .map(|d| c[d].abs().max((c[d] - (self.dims[d] - 1)).abs()))
            .max()
            .unwrap_or(0);
        let mut best = f64::INFINITY;
        let mut r = gap;
        loop {
            self.scan_shell(c, r, q, &mut best);
            // Unvisited points lie at least `r` whole cells away; one cell of
            // slack absorbs rounding in the cell assignment.
            let bound = (r - 1).max(0) as f64 * self.cell;
            if best <= bound * bound * (1.0 - 1e-12) || r >= reach {
                return best;
            }
            r += 1;
        }
    }

    fn scan_shell(&self, c: [i64; 3], r: i64, q: &Vector3<f64>, best: &mut f64) {
        let lo = |d: usize| (c[d] - r).max(0);
        let hi = |d: usize| (c[d] + r).min(self.dims[d] - 1);
        if lo(0) > hi(0) || lo(1) > hi(1) || lo(2) > hi(2) {
            return;
        }
        for x in lo(0)..=hi(0) {
            for y in lo(1)..=hi(1) {
                let on_face = (x - c[0]).abs() == r || (y - c[1]).abs() == r;
                if on_face {
                    for z in lo(2)..=hi(2) {
                        self.scan_cell([x, y, z], q, best);
                    }
                } else {
                    for z in [c[2] - r, c[2] + r] {
                        if z >= 0 && z < self.dims[2] {
                            self.scan_cell([x, y, z], q, best);
                        }
                    }
                }
            }
        }
    }
}

/// `max_a min_b |a - b|^2` through a uniform grid over `b`.
pub fn directed_sq_grid(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> f64 {
    let grid = Grid::new(b);
    a.iter().map(|p| grid.nearest_sq(p)).fold(0.0, f64::max)
}

/// Symmetric Hausdorff distance in metres; with `squared`, the literal
/// squared-norm variant.
pub fn hausdorff(v1: &[Vector3<f64>], v2: &[Vector3<f64>], method: HausdorffMethod, squared: bool) -> Result<f64> {
    if v1.is_empty() || v2.is_empty() {
        return Err(Error::Empty("hausdorff point set"));
    }
    let directed = match method {
        HausdorffMethod::BruteForce => directed_sq_brute_force,
        HausdorffMethod::Grid => directed_sq_grid,
    };
    let d2 = directed(v1, v2).max(directed(v2, v1));
    Ok(if squared { d2 } else { d2.sqrt() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(rng: &mut ChaCha8Rng, n: usize, spread: f64) -> Vec<Vector3<f64>> {
        (0..n)
            .map(|_| {
                Vector3::new(
                    rng.random_range(-spread..spread),
                    rng.random_range(-spread..spread) * 2.0,
                    rng.random_range(-spread..spread) * 0.3,
                )
            })
            .collect()
    }

    #[test]
    fn identical_sets_and_single_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = cloud(&mut rng, 300, 1.0);
        for m in [HausdorffMethod::BruteForce, HausdorffMethod::Grid] {
            assert_eq!(hausdorff(&v, &v, m, false).unwrap(), 0.0);
            let a = [Vector3::zeros()];
            let b = [Vector3::new(3.0, 4.0, 0.0)];
            assert_eq!(hausdorff(&a, &b, m, false).unwrap(), 5.0);
            assert_eq!(hausdorff(&a, &b, m, true).unwrap(), 25.0);
            assert!(hausdorff(&a, &[], m, false).is_err());
        }
    }

    #[test]
    fn grid_equals_brute_force_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for i in 0..30 {
            let n = rng.random_range(1..=500);
            let m = rng.random_range(1..=500);
            let a = cloud(&mut rng, n, 1.0);
            // Offset and rescale the second set so queries also fall outside the grid.
            let shift = Vector3::new(rng.random_range(-2.0..2.0), 0.0, rng.random_range(-2.0..2.0));
            let b: Vec<_> = cloud(&mut rng, m, 0.1 + i as f64 * 0.1)
                .iter()
                .map(|p| p + shift)
                .collect();
            let x = hausdorff(&a, &b, HausdorffMethod::BruteForce, false).unwrap();
            let y = hausdorff(&a, &b, HausdorffMethod::Grid, false).unwrap();
            assert_eq!(x.to_bits(), y.to_bits(), "pair {i}");
        }
    }

    #[test]
    fn coincident_and_planar_sets() {
        let a = vec![Vector3::new(1.0, 1.0, 1.0); 20];
        let b: Vec<_> = (0..50).map(|i| Vector3::new(i as f64 * 0.1, 0.0, 0.0)).collect();
        for (p, q) in [(&a, &b), (&b, &a), (&a, &a)] {
            let x = hausdorff(p, q, HausdorffMethod::BruteForce, false).unwrap();
            let y = hausdorff(p, q, HausdorffMethod::Grid, false).unwrap();
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn symmetric_and_triangle_inequality() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let a = cloud(&mut rng, 100, 1.0);
            let b = cloud(&mut rng, 80, 1.5);
            let c = cloud(&mut rng, 120, 0.7);
            let h = |x: &[Vector3<f64>], y: &[Vector3<f64>]| hausdorff(x, y, HausdorffMethod::Grid, false).unwrap();
            assert_eq!(h(&a, &b), h(&b, &a));
            assert!(h(&a, &c) <= h(&a, &b) + h(&b, &c) + 1e-12);
        }
    }
}
