//! Uniform-grid spatial index for nearest-neighbor queries.

use std::collections::HashMap;

use crate::Vec3;

/// Hash-grid over a fixed point set, bucketed at a caller-chosen cell size.
pub struct PointGrid {
    cell: f64,
    buckets: HashMap<[i64; 3], Vec<u32>>,
    points: Vec<Vec3>,
    bucket_lo: [i64; 3],
    bucket_hi: [i64; 3],
}

impl PointGrid {
    /// Build with an explicit bucket size.
    pub fn with_cell(points: Vec<Vec3>, cell: f64) -> Self {
        assert!(cell > 0.0 && cell.is_finite());
        let mut buckets: HashMap<[i64; 3], Vec<u32>> = HashMap::new();
        let mut bucket_lo = [i64::MAX; 3];
        let mut bucket_hi = [i64::MIN; 3];
        for (i, p) in points.iter().enumerate() {
            let key = Self::key(*p, cell);
            for a in 0..3 {
                bucket_lo[a] = bucket_lo[a].min(key[a]);
                bucket_hi[a] = bucket_hi[a].max(key[a]);
            }
            buckets.entry(key).or_default().push(i as u32);
        }
        PointGrid {
            cell,
            buckets,
            points,
            bucket_lo,
            bucket_hi,
        }
    }

    /// Build with a bucket size targeting a few points per bucket.
    pub fn new(points: Vec<Vec3>) -> Self {
        assert!(!points.is_empty());
        let mut lo = points[0];
        let mut hi = points[0];
        for p in &points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let extent = (hi - lo).max().max(1e-9);
        let per_axis = (points.len() as f64).cbrt().ceil().max(1.0);
        let cell = extent / per_axis;
        Self::with_cell(points, cell)
    }

    fn key(p: Vec3, cell: f64) -> [i64; 3] {
        [
            (p.x / cell).floor() as i64,
            (p.y / cell).floor() as i64,
            (p.z / cell).floor() as i64,
        ]
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    /// Chebyshev distance from `center` to the nearest / farthest occupied
    /// bucket coordinates: rings outside this band cannot contain points.
    fn ring_band(&self, center: [i64; 3]) -> (i64, i64) {
        let mut near = 0i64;
        let mut far = 0i64;
        for a in 0..3 {
            let below = (self.bucket_lo[a] - center[a]).max(0);
            let above = (center[a] - self.bucket_hi[a]).max(0);
            near = near.max(below.max(above));
            far = far.max(
                (center[a] - self.bucket_lo[a])
                    .abs()
                    .max((center[a] - self.bucket_hi[a]).abs()),
            );
        }
        (near, far)
    }

    /// Index and distance of the nearest stored point.
    pub fn nearest(&self, q: Vec3) -> (u32, f64) {
        assert!(!self.points.is_empty());
        let center = Self::key(q, self.cell);
        let (near, far) = self.ring_band(center);
        let mut best: Option<(u32, f64)> = None;
        let mut ring = near;
        loop {
            self.scan_ring(center, ring, |i| {
                let d = (self.points[i as usize] - q).norm();
                if best.map_or(true, |(_, bd)| d < bd) {
                    best = Some((i, d));
                }
            });
            // Any point in an unscanned bucket is at least ring * cell away.
            if let Some((_, bd)) = best {
                if bd <= (ring as f64) * self.cell || ring > far {
                    return best.unwrap();
                }
            }
            if ring > far && best.is_none() {
                unreachable!("all buckets scanned without finding a point");
            }
            ring += 1;
        }
    }

    /// The k nearest stored points, sorted by distance (ties by index).
    pub fn k_nearest(&self, q: Vec3, k: usize) -> Vec<(u32, f64)> {
        assert!(k >= 1 && k <= self.points.len());
        let center = Self::key(q, self.cell);
        let (near, far) = self.ring_band(center);
        let mut found: Vec<(u32, f64)> = Vec::new();
        let mut ring = near;
        loop {
            self.scan_ring(center, ring, |i| {
                let d = (self.points[i as usize] - q).norm();
                found.push((i, d));
            });
            let done = ring > far
                || (found.len() >= k && {
                    found.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
                    found[k - 1].1 <= (ring as f64) * self.cell
                });
            if done {
                found.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
                found.truncate(k);
                return found;
            }
            ring += 1;
        }
    }

    fn scan_ring(&self, center: [i64; 3], ring: i64, mut visit: impl FnMut(u32)) {
        // clamp to the occupied bucket box so huge rings stay cheap
        let lo: Vec<i64> = (0..3)
            .map(|a| (center[a] - ring).max(self.bucket_lo[a]))
            .collect();
        let hi: Vec<i64> = (0..3)
            .map(|a| (center[a] + ring).min(self.bucket_hi[a]))
            .collect();
        for x in lo[0]..=hi[0] {
            for y in lo[1]..=hi[1] {
                for z in lo[2]..=hi[2] {
                    let cheb = (x - center[0])
                        .abs()
                        .max((y - center[1]).abs())
                        .max((z - center[2]).abs());
                    if cheb != ring {
                        continue;
                    }
                    if let Some(bucket) = self.buckets.get(&[x, y, z]) {
                        for &i in bucket {
                            visit(i);
                        }
                    }
                }
            }
        }
    }
}
