//! Reconstruction quality metrics: chamfer distances, F-score, normal
//! consistency and Monte-Carlo volumetric IoU.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cloud::{OrientedPoint, PointCloud};
use crate::mesh::TriangleMesh;
use crate::spatial::PointGrid;
use crate::{Error, Result, Vec3};

/// Norm used by the chamfer distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChamferNorm {
    L1,
    L2,
}

/// One evaluation run. Chamfer values are stored raw; the display scaling
/// (x10^3 for L1, x10^5 for L2) is applied only when formatting the report.
#[derive(Debug, Clone)]
pub struct MetricsReport {
    pub name: String,
    pub chamfer_l1: f64,
    pub chamfer_l2: f64,
    pub f_score_percent: f64,
    pub normal_consistency_percent: f64,
    pub iou: Option<f64>,
    pub iou_std_error: Option<f64>,
    pub surface_samples: usize,
    pub volume_samples: usize,
    pub f_score_tau: f64,
    pub seed: u64,
}

impl MetricsReport {
    pub fn csv_header() -> &'static str {
        "name,chamfer_l1_x1e3,chamfer_l2_x1e5,f_score,normal_consistency,iou,\
         surface_samples,volume_samples,f_score_tau,seed"
    }

    /// One CSV row with the conventional display scaling applied.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.6},{:.6},{:.3},{:.3},{},{},{},{},{}",
            self.name,
            self.chamfer_l1 * 1e3,
            self.chamfer_l2 * 1e5,
            self.f_score_percent,
            self.normal_consistency_percent,
            self.iou.map_or("n/a".to_string(), |v| format!("{v:.5}")),
            self.surface_samples,
            self.volume_samples,
            self.f_score_tau,
            self.seed
        )
    }
}

/// Area-weighted uniform surface sampling; each sample carries the face
/// normal of its source triangle. Deterministic for a fixed seed.
pub fn sample_surface(mesh: &TriangleMesh, n: usize, seed: u64) -> Result<PointCloud> {
    assert!(n >= 1);
    let areas: Vec<f64> = mesh
        .triangles
        .iter()
        .map(|t| mesh.triangle_area(t))
        .collect();
    let total: f64 = areas.iter().sum();
    if !(total > 0.0) || mesh.triangles.is_empty() {
        return Err(Error::DegenerateMesh);
    }
    let mut cumulative = Vec::with_capacity(areas.len());
    let mut acc = 0.0;
    for a in &areas {
        acc += a;
        cumulative.push(acc);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        let u = rng.random_range(0.0..total);
        let t = cumulative.partition_point(|&c| c <= u).min(areas.len() - 1);
        let tri = mesh.triangles[t];
        let a = mesh.vertices[tri[0] as usize];
        let b = mesh.vertices[tri[1] as usize];
        let c = mesh.vertices[tri[2] as usize];
        // uniform barycentric sample via square-root trick
        let r1: f64 = rng.random();
        let r2: f64 = rng.random();
        let s = r1.sqrt();
        let p = a * (1.0 - s) + b * (s * (1.0 - r2)) + c * (s * r2);
        points.push(OrientedPoint::with_normal(p, mesh.face_normal(&tri)));
    }
    PointCloud::new(points)
}

fn positions(cloud: &PointCloud) -> Vec<Vec3> {
    cloud.points().iter().map(|p| p.position).collect()
}

fn mean_nn(from: &PointCloud, to_grid: &PointGrid, norm: ChamferNorm) -> f64 {
    let mut acc = 0.0;
    for p in from.points() {
        let (_, d) = to_grid.nearest(p.position);
        acc += match norm {
            ChamferNorm::L1 => d,
            ChamferNorm::L2 => d * d,
        };
    }
    acc / from.len() as f64
}

fn grid_for(cloud: &PointCloud) -> PointGrid {
    PointGrid::new(positions(cloud))
}

/// Symmetric chamfer distance: mean nearest-neighbor distance (L1) or
/// squared distance (L2), averaged over both directions. Raw value; any
/// display scaling happens in the report layer.
pub fn chamfer(pred: &PointCloud, gt: &PointCloud, norm: ChamferNorm) -> f64 {
    let pred_grid = grid_for(pred);
    let gt_grid = grid_for(gt);
    0.5 * (mean_nn(pred, &gt_grid, norm) + mean_nn(gt, &pred_grid, norm))
}

/// F-score (percent): harmonic mean of precision and recall at threshold
/// `tau`; 0 when both vanish.
pub fn f_score(pred: &PointCloud, gt: &PointCloud, tau: f64) -> f64 {
    assert!(tau > 0.0);
    let gt_grid = grid_for(gt);
    let pred_grid = grid_for(pred);
    let precision = pred
        .points()
        .iter()
        .filter(|p| gt_grid.nearest(p.position).1 <= tau)
        .count() as f64
        / pred.len() as f64;
    let recall = gt
        .points()
        .iter()
        .filter(|p| pred_grid.nearest(p.position).1 <= tau)
        .count() as f64
        / gt.len() as f64;
    if precision + recall == 0.0 {
        0.0
    } else {
        200.0 * precision * recall / (precision + recall)
    }
}

/// Normal consistency (percent): symmetric mean absolute cosine between a
/// sample's normal and its nearest neighbor's normal.
pub fn normal_consistency(pred: &PointCloud, gt: &PointCloud) -> Result<f64> {
    if !pred.has_normals() || !gt.has_normals() {
        return Err(Error::MissingNormals);
    }
    let one_way = |from: &PointCloud, to: &PointCloud| -> f64 {
        let to_grid = grid_for(to);
        let mut acc = 0.0;
        for p in from.points() {
            let (j, _) = to_grid.nearest(p.position);
            let n_from = p.normal.expect("checked");
            let n_to = to.points()[j as usize].normal.expect("checked");
            acc += n_from.dot(&n_to).abs();
        }
        acc / from.len() as f64
    };
    Ok(50.0 * (one_way(pred, gt) + one_way(gt, pred)))
}

/// Triangle buckets over (y, z) for +x ray-crossing parity tests.
struct RayParityTester {
    cell: f64,
    buckets: std::collections::HashMap<[i64; 2], Vec<usize>>,
    tris: Vec<[Vec3; 3]>,
}

impl RayParityTester {
    fn new(mesh: &TriangleMesh) -> Self {
        let tris: Vec<[Vec3; 3]> = mesh
            .triangles
            .iter()
            .map(|t| {
                [
                    mesh.vertices[t[0] as usize],
                    mesh.vertices[t[1] as usize],
                    mesh.vertices[t[2] as usize],
                ]
            })
            .collect();
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for v in &mesh.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        let extent = ((hi.y - lo.y).max(hi.z - lo.z)).max(1e-9);
        let cell = (extent / (tris.len() as f64).sqrt().max(1.0)).max(1e-9);
        let mut buckets: std::collections::HashMap<[i64; 2], Vec<usize>> =
            std::collections::HashMap::new();
        for (i, t) in tris.iter().enumerate() {
            let ylo = t.iter().map(|v| v.y).fold(f64::INFINITY, f64::min);
            let yhi = t.iter().map(|v| v.y).fold(f64::NEG_INFINITY, f64::max);
            let zlo = t.iter().map(|v| v.z).fold(f64::INFINITY, f64::min);
            let zhi = t.iter().map(|v| v.z).fold(f64::NEG_INFINITY, f64::max);
            for by in (ylo / cell).floor() as i64..=(yhi / cell).floor() as i64 {
                for bz in (zlo / cell).floor() as i64..=(zhi / cell).floor() as i64 {
                    buckets.entry([by, bz]).or_default().push(i);
                }
            }
        }
        RayParityTester { cell, buckets, tris }
    }

    /// Count crossings of the +x ray from `p`; None on a numerically
    /// grazing hit (caller should jitter and retry).
    fn crossings(&self, p: Vec3) -> Option<usize> {
        let key = [
            (p.y / self.cell).floor() as i64,
            (p.z / self.cell).floor() as i64,
        ];
        let mut count = 0;
        let empty = Vec::new();
        for &i in self.buckets.get(&key).unwrap_or(&empty) {
            let [a, b, c] = self.tris[i];
            // 2D orientation tests in the (y, z) plane
            let d1 = orient2d(a, b, p);
            let d2 = orient2d(b, c, p);
            let d3 = orient2d(c, a, p);
            if d1 == 0.0 || d2 == 0.0 || d3 == 0.0 {
                return None; // grazing
            }
            let pos = d1 > 0.0 && d2 > 0.0 && d3 > 0.0;
            let neg = d1 < 0.0 && d2 < 0.0 && d3 < 0.0;
            if !(pos || neg) {
                continue;
            }
            // intersection x by barycentric interpolation
            let total = d1 + d2 + d3;
            let x = (d2 * a.x + d3 * b.x + d1 * c.x) / total;
            if x > p.x {
                count += 1;
            }
        }
        Some(count)
    }

    fn inside(&self, p: Vec3, rng: &mut ChaCha8Rng) -> bool {
        let mut q = p;
        for _ in 0..16 {
            if let Some(c) = self.crossings(q) {
                return c % 2 == 1;
            }
            q = p + Vec3::new(
                0.0,
                rng.random_range(-1e-9..1e-9),
                rng.random_range(-1e-9..1e-9),
            );
        }
        false
    }
}

fn orient2d(a: Vec3, b: Vec3, p: Vec3) -> f64 {
    (b.y - a.y) * (p.z - a.z) - (b.z - a.z) * (p.y - a.y)
}

fn bbox(mesh: &TriangleMesh) -> (Vec3, Vec3) {
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for v in &mesh.vertices {
        lo = lo.inf(v);
        hi = hi.sup(v);
    }
    (lo, hi)
}

/// Structural watertightness: every undirected edge shared by exactly two
/// triangles with opposite orientation.
pub fn is_watertight(mesh: &TriangleMesh) -> bool {
    let mut counts: std::collections::HashMap<(u32, u32), (usize, i64)> =
        std::collections::HashMap::new();
    for t in &mesh.triangles {
        for k in 0..3 {
            let a = t[k];
            let b = t[(k + 1) % 3];
            let e = counts.entry((a.min(b), a.max(b))).or_insert((0, 0));
            e.0 += 1;
            e.1 += if a < b { 1 } else { -1 };
        }
    }
    !mesh.triangles.is_empty() && counts.values().all(|&(c, net)| c == 2 && net == 0)
}

/// Monte-Carlo intersection-over-union of two watertight meshes over `n`
/// uniform samples in their joint bounding box. Returns `(iou, std_error)`.
pub fn iou(
    pred: &TriangleMesh,
    gt: &TriangleMesh,
    n: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    assert!(n >= 1000);
    if !is_watertight(pred) || !is_watertight(gt) {
        return Err(Error::NonWatertight);
    }
    let (plo, phi) = bbox(pred);
    let (glo, ghi) = bbox(gt);
    let lo = plo.inf(&glo);
    let hi = phi.sup(&ghi);
    let tp = RayParityTester::new(pred);
    let tg = RayParityTester::new(gt);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut inter, mut union) = (0usize, 0usize);
    for _ in 0..n {
        let p = Vec3::new(
            rng.random_range(lo.x..hi.x),
            rng.random_range(lo.y..hi.y),
            rng.random_range(lo.z..hi.z),
        );
        let a = tp.inside(p, &mut rng);
        let b = tg.inside(p, &mut rng);
        if a && b {
            inter += 1;
        }
        if a || b {
            union += 1;
        }
    }
    if union == 0 {
        return Ok((0.0, 0.0));
    }
    let r = inter as f64 / union as f64;
    // binomial std error of the ratio estimate, conditioned on union size
    let se = (r * (1.0 - r) / union as f64).sqrt();
    Ok((r, se))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn single_triangle() -> TriangleMesh {
        TriangleMesh::new(
            vec![
                Vec3::new(0.0, 0.0, 0.0),
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(0.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap()
    }

    #[test]
    fn samples_stay_inside_single_triangle() {
        let mesh = single_triangle();
        let cloud = sample_surface(&mesh, 1000, 7).unwrap();
        for p in cloud.points() {
            let q = p.position;
            assert!(q.z.abs() < 1e-12);
            assert!(q.x >= -1e-12 && q.y >= -1e-12 && q.x + q.y <= 1.0 + 1e-12);
            assert_eq!(p.normal.unwrap(), Vec3::new(0.0, 0.0, 1.0));
        }
    }

    #[test]
    fn sampling_is_area_weighted() {
        // areas 0.5 and 1.5 => expected 1:3 split
        let mesh = TriangleMesh::new(
            vec![
                Vec3::new(0.0, 0.0, 0.0),
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(0.0, 1.0, 0.0),
                Vec3::new(10.0, 0.0, 0.0),
                Vec3::new(13.0, 0.0, 0.0),
                Vec3::new(10.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2], [3, 4, 5]],
        )
        .unwrap();
        let n = 10_000usize;
        let cloud = sample_surface(&mesh, n, 11).unwrap();
        let far = cloud.points().iter().filter(|p| p.position.x > 5.0).count();
        let expect = 0.75 * n as f64;
        let sigma = (n as f64 * 0.75 * 0.25).sqrt();
        assert!(
            (far as f64 - expect).abs() <= 3.0 * sigma,
            "{far} samples on the big triangle, expected ~{expect}"
        );
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let mesh = single_triangle();
        let a = sample_surface(&mesh, 100, 3).unwrap();
        let b = sample_surface(&mesh, 100, 3).unwrap();
        for (x, y) in a.points().iter().zip(b.points()) {
            assert_eq!(x.position, y.position);
        }
    }

    fn sphere_mesh(r: f64) -> TriangleMesh {
        use crate::cloud::OrientedPoint;
        use crate::extract::extract_mesh_with;
        use crate::scaffold::{build_hierarchy, rasterize_domain};
        let center = Vec3::new(0.5, 0.5, 0.5);
        let b = 0.03;
        let mut pts = Vec::new();
        let n = ((2.0 * (r + 0.06)) / b).ceil() as i32 + 1;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    pts.push(OrientedPoint::new(
                        center
                            + Vec3::new(
                                -(r + 0.06) + i as f64 * b,
                                -(r + 0.06) + j as f64 * b,
                                -(r + 0.06) + k as f64 * b,
                            ),
                    ));
                }
            }
        }
        let cloud = PointCloud::new(pts).unwrap();
        let h = build_hierarchy(&cloud, b, 1, 1).unwrap();
        let domain = rasterize_domain(&h);
        extract_mesh_with(|p| (p - center).norm() - r, &domain, 0.0).unwrap()
    }

    #[test]
    fn sphere_samples_have_unit_radius() {
        let mesh = sphere_mesh(0.2);
        let cloud = sample_surface(&mesh, 5000, 13).unwrap();
        let center = Vec3::new(0.5, 0.5, 0.5);
        let mean: f64 = cloud
            .points()
            .iter()
            .map(|p| (p.position - center).norm())
            .sum::<f64>()
            / cloud.len() as f64;
        assert!((mean - 0.2).abs() <= 1e-2 * 2.0, "mean radius {mean}");
    }

    #[test]
    fn degenerate_mesh_rejected_for_sampling() {
        let mesh = TriangleMesh {
            vertices: vec![Vec3::zeros(), Vec3::zeros(), Vec3::zeros()],
            triangles: vec![],
            vertex_normals: None,
        };
        assert!(matches!(
            sample_surface(&mesh, 10, 0),
            Err(Error::DegenerateMesh)
        ));
    }

    fn cloud_of(points: &[Vec3]) -> PointCloud {
        PointCloud::new(points.iter().map(|p| OrientedPoint::new(*p)).collect()).unwrap()
    }

    #[test]
    fn chamfer_identical_is_zero() {
        let c = cloud_of(&[Vec3::new(0.1, 0.2, 0.3), Vec3::new(0.7, 0.1, 0.9)]);
        assert_eq!(chamfer(&c, &c, ChamferNorm::L1), 0.0);
        assert_eq!(chamfer(&c, &c, ChamferNorm::L2), 0.0);
    }

    #[test]
    fn chamfer_two_points_at_distance_d() {
        let a = cloud_of(&[Vec3::zeros()]);
        let b = cloud_of(&[Vec3::new(0.25, 0.0, 0.0)]);
        assert_relative_eq!(chamfer(&a, &b, ChamferNorm::L1), 0.25, epsilon = 1e-15);
        assert_relative_eq!(chamfer(&a, &b, ChamferNorm::L2), 0.0625, epsilon = 1e-15);
    }

    #[test]
    fn chamfer_uniform_shift_is_exact() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let pts: Vec<Vec3> = (0..100)
            .map(|_| Vec3::new(rng.random(), rng.random(), rng.random()))
            .collect();
        let eps = 1e-3;
        let shifted: Vec<Vec3> = pts.iter().map(|p| p + Vec3::new(eps, 0.0, 0.0)).collect();
        let a = cloud_of(&pts);
        let b = cloud_of(&shifted);
        assert_relative_eq!(chamfer(&a, &b, ChamferNorm::L1), eps, max_relative = 1e-9);
    }

    #[test]
    fn chamfer_and_fscore_rigid_invariance() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(19);
        let pa: Vec<Vec3> = (0..80)
            .map(|_| Vec3::new(rng.random(), rng.random(), rng.random()))
            .collect();
        let pb: Vec<Vec3> = (0..90)
            .map(|_| Vec3::new(rng.random(), rng.random(), rng.random()))
            .collect();
        let rot = nalgebra::Rotation3::from_euler_angles(0.4, -0.9, 0.2);
        let t = Vec3::new(3.0, -1.0, 2.0);
        let ra: Vec<Vec3> = pa.iter().map(|p| rot * p + t).collect();
        let rb: Vec<Vec3> = pb.iter().map(|p| rot * p + t).collect();
        let (a, b) = (cloud_of(&pa), cloud_of(&pb));
        let (ta, tb) = (cloud_of(&ra), cloud_of(&rb));
        assert_relative_eq!(
            chamfer(&a, &b, ChamferNorm::L1),
            chamfer(&ta, &tb, ChamferNorm::L1),
            max_relative = 1e-9
        );
        assert_relative_eq!(
            f_score(&a, &b, 0.1),
            f_score(&ta, &tb, 0.1),
            epsilon = 1e-9
        );
    }

    #[test]
    fn f_score_identical_and_disjoint() {
        let a = cloud_of(&[Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0)]);
        assert_eq!(f_score(&a, &a, 0.01), 100.0);
        let b = cloud_of(&[Vec3::new(10.0, 10.0, 10.0)]);
        assert_eq!(f_score(&a, &b, 0.01), 0.0);
    }

    #[test]
    fn f_score_formula_half_precision() {
        // pred: 2 points, one within tau; gt fully covered
        let gt = cloud_of(&[Vec3::zeros()]);
        let pred = cloud_of(&[Vec3::zeros(), Vec3::new(5.0, 0.0, 0.0)]);
        let f = f_score(&pred, &gt, 0.1);
        assert_relative_eq!(f, 200.0 * 0.5 * 1.0 / 1.5, epsilon = 1e-12);
    }

    fn with_normals(points: &[Vec3], normals: &[Vec3]) -> PointCloud {
        PointCloud::new(
            points
                .iter()
                .zip(normals)
                .map(|(p, n)| OrientedPoint::with_normal(*p, *n))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn normal_consistency_extremes() {
        let pts = [Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0)];
        let nz = [Vec3::new(0.0, 0.0, 1.0), Vec3::new(0.0, 0.0, 1.0)];
        let ny = [Vec3::new(0.0, 1.0, 0.0), Vec3::new(0.0, 1.0, 0.0)];
        let flipped = [Vec3::new(0.0, 0.0, -1.0), Vec3::new(0.0, 0.0, -1.0)];
        let a = with_normals(&pts, &nz);
        assert_relative_eq!(normal_consistency(&a, &a).unwrap(), 100.0);
        let b = with_normals(&pts, &ny);
        assert_relative_eq!(normal_consistency(&a, &b).unwrap(), 0.0);
        let c = with_normals(&pts, &flipped);
        assert_relative_eq!(normal_consistency(&a, &c).unwrap(), 100.0);
    }

    #[test]
    fn normal_consistency_requires_normals() {
        let bare = cloud_of(&[Vec3::zeros()]);
        assert!(matches!(
            normal_consistency(&bare, &bare),
            Err(Error::MissingNormals)
        ));
    }

    fn unit_cube_mesh(shift: f64) -> TriangleMesh {
        // 12-triangle unit cube with outward orientation, shifted along x
        let v = |x: f64, y: f64, z: f64| Vec3::new(x + shift, y, z);
        let vertices = vec![
            v(0.0, 0.0, 0.0),
            v(1.0, 0.0, 0.0),
            v(0.0, 1.0, 0.0),
            v(1.0, 1.0, 0.0),
            v(0.0, 0.0, 1.0),
            v(1.0, 0.0, 1.0),
            v(0.0, 1.0, 1.0),
            v(1.0, 1.0, 1.0),
        ];
        let triangles = vec![
            [0, 2, 1],
            [1, 2, 3], // z = 0, normal -z
            [4, 5, 6],
            [5, 7, 6], // z = 1, normal +z
            [0, 1, 4],
            [1, 5, 4], // y = 0, normal -y
            [2, 6, 3],
            [3, 6, 7], // y = 1, normal +y
            [0, 4, 2],
            [2, 4, 6], // x = 0, normal -x
            [1, 3, 5],
            [3, 7, 5], // x = 1, normal +x
        ];
        TriangleMesh::new(vertices, triangles).unwrap()
    }

    #[test]
    fn cube_mesh_is_watertight() {
        assert!(is_watertight(&unit_cube_mesh(0.0)));
        let mut open = unit_cube_mesh(0.0);
        open.triangles.pop();
        assert!(!is_watertight(&open));
    }

    #[test]
    fn iou_identical_is_one() {
        let cube = unit_cube_mesh(0.0);
        let (v, _) = iou(&cube, &cube, 20_000, 1).unwrap();
        assert_eq!(v, 1.0);
    }

    #[test]
    fn iou_disjoint_is_zero() {
        let a = unit_cube_mesh(0.0);
        let b = unit_cube_mesh(5.0);
        let (v, _) = iou(&a, &b, 20_000, 2).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn iou_half_shifted_cube_matches_analytic() {
        let a = unit_cube_mesh(0.0);
        let b = unit_cube_mesh(0.5);
        let n = 100_000;
        let (v, se) = iou(&a, &b, n, 3).unwrap();
        let exact = 0.5 / 1.5;
        assert!(se <= 0.01, "standard error {se}");
        assert!(
            (v - exact).abs() <= 3.0 * se.max(1e-4),
            "iou {v} vs analytic {exact} (se {se})"
        );
    }

    #[test]
    fn iou_rejects_open_meshes() {
        let mut open = unit_cube_mesh(0.0);
        open.triangles.pop();
        let closed = unit_cube_mesh(0.0);
        assert!(matches!(
            iou(&open, &closed, 1000, 0),
            Err(Error::NonWatertight)
        ));
    }

    #[test]
    fn csv_row_applies_display_scaling() {
        let report = MetricsReport {
            name: "fixture".into(),
            chamfer_l1: 0.0012,
            chamfer_l2: 0.0000031,
            f_score_percent: 98.5,
            normal_consistency_percent: 97.0,
            iou: Some(0.91),
            iou_std_error: Some(0.004),
            surface_samples: 100_000,
            volume_samples: 100_000,
            f_score_tau: 0.01,
            seed: 42,
        };
        let row = report.csv_row();
        assert!(row.starts_with("fixture,1.200000,0.310000,"), "{row}");
        assert!(row.contains("0.91000"));
    }
}
