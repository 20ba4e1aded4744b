//! Multi-scale sparse voxel scaffold and exact rasterization of the
//! integration domain.
//!
//! Scale `s` voxels have edge length `2^(s-1) * b`. Every active voxel is
//! strictly contained in an active parent at the next coarser scale, and the
//! integration domain is the union of every active voxel's 3x-enlarged
//! region, rasterized exactly onto finest-scale cells.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::basis::BasisParams;
use crate::cloud::PointCloud;
use crate::{Error, Result, Vec3};

/// Identifier of a voxel: scale in `[1, S]` plus grid coordinates at that scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VoxelKey {
    pub scale: u8,
    pub ijk: [i32; 3],
}

/// Per-voxel bookkeeping: contained points, accumulated input normals and
/// optionally attached basis parameters / network features.
#[derive(Debug, Clone)]
pub struct VoxelRecord {
    pub key: VoxelKey,
    pub point_count: u32,
    /// Geometric voxel center (not the centroid of contained points).
    pub centroid: Vec3,
    pub accum_normal: Vec3,
    pub basis_params: Option<BasisParams>,
    pub feature: Option<Vec<f64>>,
}

/// Multi-scale active-voxel scaffold.
#[derive(Debug, Clone)]
pub struct SparseVoxelHierarchy {
    base_size: f64,
    num_scales: u8,
    adaptive_depth: u8,
    /// scales[s - 1] holds the active voxels of scale s.
    scales: Vec<BTreeMap<[i32; 3], VoxelRecord>>,
}

impl SparseVoxelHierarchy {
    pub fn base_size(&self) -> f64 {
        self.base_size
    }

    pub fn num_scales(&self) -> u8 {
        self.num_scales
    }

    pub fn adaptive_depth(&self) -> u8 {
        self.adaptive_depth
    }

    /// Voxel edge length at scale `s`.
    pub fn edge_length(&self, scale: u8) -> f64 {
        (1u64 << (scale - 1)) as f64 * self.base_size
    }

    /// Grid coordinates of the voxel containing `p` at scale `s`.
    pub fn voxel_of(&self, p: Vec3, scale: u8) -> [i32; 3] {
        let w = self.edge_length(scale);
        [
            (p.x / w).floor() as i32,
            (p.y / w).floor() as i32,
            (p.z / w).floor() as i32,
        ]
    }

    pub fn center(&self, key: VoxelKey) -> Vec3 {
        let w = self.edge_length(key.scale);
        Vec3::new(
            (key.ijk[0] as f64 + 0.5) * w,
            (key.ijk[1] as f64 + 0.5) * w,
            (key.ijk[2] as f64 + 0.5) * w,
        )
    }

    pub fn record(&self, key: VoxelKey) -> Option<&VoxelRecord> {
        self.scales.get(key.scale as usize - 1)?.get(&key.ijk)
    }

    pub fn record_mut(&mut self, key: VoxelKey) -> Option<&mut VoxelRecord> {
        self.scales.get_mut(key.scale as usize - 1)?.get_mut(&key.ijk)
    }

    pub fn contains(&self, key: VoxelKey) -> bool {
        self.record(key).is_some()
    }

    pub fn active_count(&self, scale: u8) -> usize {
        self.scales[scale as usize - 1].len()
    }

    /// Iterate records of one scale in deterministic (key) order.
    pub fn scale_records(&self, scale: u8) -> impl Iterator<Item = &VoxelRecord> {
        self.scales[scale as usize - 1].values()
    }

    /// True if voxels at this scale carry basis functions.
    pub fn carries_basis(&self, scale: u8) -> bool {
        scale <= self.adaptive_depth
    }

    /// All basis-carrying voxels, deterministic order (scale, then key).
    pub fn basis_voxels(&self) -> impl Iterator<Item = &VoxelRecord> {
        (1..=self.adaptive_depth).flat_map(move |s| self.scale_records(s))
    }

    /// All active voxels at all scales.
    pub fn all_voxels(&self) -> impl Iterator<Item = &VoxelRecord> {
        (1..=self.num_scales).flat_map(move |s| self.scale_records(s))
    }
}

/// Build the scaffold: a voxel is active at a scale iff it contains at
/// least one input point. Scales above the adaptive depth `m` exist as
/// containment parents only and carry no basis functions.
pub fn build_hierarchy(
    cloud: &PointCloud,
    b: f64,
    s: u8,
    m: u8,
) -> Result<SparseVoxelHierarchy> {
    if !(b > 0.0) {
        return Err(Error::InvalidConfig(format!("base voxel size {b} <= 0")));
    }
    if s < 1 || m < 1 || m > s {
        return Err(Error::InvalidConfig(format!(
            "need 1 <= M <= S, got S={s}, M={m}"
        )));
    }
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let mut h = SparseVoxelHierarchy {
        base_size: b,
        num_scales: s,
        adaptive_depth: m,
        scales: vec![BTreeMap::new(); s as usize],
    };
    for point in cloud.points() {
        for scale in 1..=s {
            let ijk = h.voxel_of(point.position, scale);
            let key = VoxelKey { scale, ijk };
            let centroid = h.center(key);
            let rec = h.scales[scale as usize - 1]
                .entry(ijk)
                .or_insert_with(|| VoxelRecord {
                    key,
                    point_count: 0,
                    centroid,
                    accum_normal: Vec3::zeros(),
                    basis_params: None,
                    feature: None,
                });
            rec.point_count += 1;
            if let Some(n) = point.normal {
                rec.accum_normal += n;
            }
        }
    }
    Ok(h)
}

/// Finest-cell decomposition of the integration domain, with per-cell
/// splatted normals and contained-point lists (populated by the normal
/// field splat).
#[derive(Debug, Clone)]
pub struct DomainCells {
    cell_size: f64,
    cells: Vec<[i32; 3]>,
    index: HashMap<[i32; 3], u32>,
    pub normals: Vec<Vec3>,
    pub cell_points: Vec<Vec<u32>>,
}

impl DomainCells {
    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cells(&self) -> &[[i32; 3]] {
        &self.cells
    }

    pub fn cell_index(&self, ijk: [i32; 3]) -> Option<u32> {
        self.index.get(&ijk).copied()
    }

    pub fn contains_point(&self, p: Vec3) -> bool {
        let ijk = [
            (p.x / self.cell_size).floor() as i32,
            (p.y / self.cell_size).floor() as i32,
            (p.z / self.cell_size).floor() as i32,
        ];
        self.index.contains_key(&ijk)
    }

    pub fn cell_center(&self, ijk: [i32; 3]) -> Vec3 {
        Vec3::new(
            (ijk[0] as f64 + 0.5) * self.cell_size,
            (ijk[1] as f64 + 0.5) * self.cell_size,
            (ijk[2] as f64 + 0.5) * self.cell_size,
        )
    }

    /// World-space box of a finest cell.
    pub fn cell_bounds(&self, ijk: [i32; 3]) -> (Vec3, Vec3) {
        let lo = Vec3::new(
            ijk[0] as f64 * self.cell_size,
            ijk[1] as f64 * self.cell_size,
            ijk[2] as f64 * self.cell_size,
        );
        (lo, lo.add_scalar(self.cell_size))
    }
}

/// Finest-cell index range (inclusive lo, exclusive hi) of the 3x-enlarged
/// region of a voxel. The region spans `3 * 2^(s-1)` finest cells per axis,
/// so the rasterization is exact.
pub fn enlarged_region_cells(key: VoxelKey) -> ([i32; 3], [i32; 3]) {
    let m = 1i32 << (key.scale - 1);
    let mut lo = [0; 3];
    let mut hi = [0; 3];
    for a in 0..3 {
        lo[a] = key.ijk[a] * m - m;
        hi[a] = key.ijk[a] * m + 2 * m;
    }
    (lo, hi)
}

/// Rasterize the union of all enlarged voxel regions onto finest cells.
pub fn rasterize_domain(h: &SparseVoxelHierarchy) -> DomainCells {
    let mut set: BTreeSet<[i32; 3]> = BTreeSet::new();
    for rec in h.all_voxels() {
        let (lo, hi) = enlarged_region_cells(rec.key);
        for i in lo[0]..hi[0] {
            for j in lo[1]..hi[1] {
                for k in lo[2]..hi[2] {
                    set.insert([i, j, k]);
                }
            }
        }
    }
    let cells: Vec<[i32; 3]> = set.into_iter().collect();
    let index = cells
        .iter()
        .enumerate()
        .map(|(i, c)| (*c, i as u32))
        .collect();
    let n = cells.len();
    DomainCells {
        cell_size: h.base_size(),
        cells,
        index,
        normals: vec![Vec3::zeros(); n],
        cell_points: vec![Vec::new(); n],
    }
}

/// All unordered pairs of basis-carrying voxels whose supports (3-voxel-wide
/// cubes centered at the voxel centers) intersect with positive volume.
/// Includes self-pairs and cross-scale pairs; duplicate-free.
pub fn neighbor_pairs(h: &SparseVoxelHierarchy) -> Vec<(VoxelKey, VoxelKey)> {
    let mut pairs = Vec::new();
    for s1 in 1..=h.adaptive_depth() {
        let w1 = h.edge_length(s1);
        for rec in h.scale_records(s1) {
            let k1 = rec.key;
            let c1 = rec.centroid;
            for s2 in s1..=h.adaptive_depth() {
                let w2 = h.edge_length(s2);
                let reach = 1.5 * (w1 + w2);
                let mut lo = [0i32; 3];
                let mut hi = [0i32; 3];
                for a in 0..3 {
                    // |c2 - c1| < reach with c2 = (i2 + 0.5) * w2
                    lo[a] = ((c1[a] - reach) / w2 - 0.5).ceil() as i32;
                    hi[a] = ((c1[a] + reach) / w2 - 0.5).floor() as i32;
                    // open interval: drop boundary-touching candidates
                    if ((lo[a] as f64 + 0.5) * w2 - c1[a]).abs() >= reach - 1e-12 * w2 {
                        lo[a] += 1;
                    }
                    if ((hi[a] as f64 + 0.5) * w2 - c1[a]).abs() >= reach - 1e-12 * w2 {
                        hi[a] -= 1;
                    }
                }
                for i in lo[0]..=hi[0] {
                    for j in lo[1]..=hi[1] {
                        for k in lo[2]..=hi[2] {
                            let k2 = VoxelKey {
                                scale: s2,
                                ijk: [i, j, k],
                            };
                            if s2 == s1 && k2 < k1 {
                                continue;
                            }
                            if h.contains(k2) {
                                pairs.push((k1, k2));
                            }
                        }
                    }
                }
            }
        }
    }
    pairs
}

/// Per-scale sets of voxel keys containing at least one surface sample.
/// Supervision target for the structure-prediction loss.
pub fn ground_truth_occupancy(
    surface_samples: &PointCloud,
    b: f64,
    s: u8,
) -> Result<Vec<BTreeSet<[i32; 3]>>> {
    if surface_samples.is_empty() {
        return Err(Error::EmptyCloud);
    }
    if !(b > 0.0) || s < 1 {
        return Err(Error::InvalidConfig("need b > 0 and S >= 1".into()));
    }
    let mut sets = vec![BTreeSet::new(); s as usize];
    for p in surface_samples.points() {
        for scale in 1..=s {
            let w = (1u64 << (scale - 1)) as f64 * b;
            let ijk = [
                (p.position.x / w).floor() as i32,
                (p.position.y / w).floor() as i32,
                (p.position.z / w).floor() as i32,
            ];
            sets[scale as usize - 1].insert(ijk);
        }
    }
    Ok(sets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::OrientedPoint;

    fn cloud_of(positions: &[[f64; 3]]) -> PointCloud {
        PointCloud::new(
            positions
                .iter()
                .map(|p| OrientedPoint::new(Vec3::new(p[0], p[1], p[2])))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn singleton_has_one_voxel_per_scale() {
        let cloud = cloud_of(&[[0.5, 0.5, 0.5]]);
        let h = build_hierarchy(&cloud, 0.02, 4, 4).unwrap();
        for s in 1..=4 {
            assert_eq!(h.active_count(s), 1);
            let rec = h.scale_records(s).next().unwrap();
            assert_eq!(rec.point_count, 1);
            // the voxel contains the point
            let w = h.edge_length(s);
            for a in 0..3 {
                let lo = rec.key.ijk[a] as f64 * w;
                assert!(lo <= 0.5 && 0.5 < lo + w);
            }
        }
    }

    #[test]
    fn edge_lengths_double_per_scale() {
        let cloud = cloud_of(&[[0.5, 0.5, 0.5]]);
        let h = build_hierarchy(&cloud, 0.02, 4, 4).unwrap();
        assert!((h.edge_length(4) - 0.16).abs() < 1e-15);
        assert!((h.edge_length(1) - 0.02).abs() < 1e-15);
    }

    #[test]
    fn two_points_map_to_expected_finest_voxels() {
        // 0.05 apart along x with b = 0.02: cell indices by direct computation
        let cloud = cloud_of(&[[0.101, 0.5, 0.5], [0.151, 0.5, 0.5]]);
        let h = build_hierarchy(&cloud, 0.02, 2, 2).unwrap();
        let i0 = (0.101f64 / 0.02).floor() as i32;
        let i1 = (0.151f64 / 0.02).floor() as i32;
        assert_eq!(h.active_count(1), if i0 == i1 { 1 } else { 2 });
        assert!(h.contains(VoxelKey {
            scale: 1,
            ijk: [i0, 25, 25]
        }));
        assert!(h.contains(VoxelKey {
            scale: 1,
            ijk: [i1, 25, 25]
        }));
    }

    #[test]
    fn invalid_config_rejected() {
        let cloud = cloud_of(&[[0.5, 0.5, 0.5]]);
        assert!(matches!(
            build_hierarchy(&cloud, -1.0, 4, 4),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            build_hierarchy(&cloud, 0.02, 2, 3),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn parent_containment() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let positions: Vec<[f64; 3]> = (0..200)
            .map(|_| [rng.random(), rng.random(), rng.random()])
            .collect();
        let h = build_hierarchy(&cloud_of(&positions), 0.02, 4, 4).unwrap();
        for s in 1..4u8 {
            for rec in h.scale_records(s) {
                let parent = VoxelKey {
                    scale: s + 1,
                    ijk: [
                        rec.key.ijk[0].div_euclid(2),
                        rec.key.ijk[1].div_euclid(2),
                        rec.key.ijk[2].div_euclid(2),
                    ],
                };
                assert!(h.contains(parent), "missing parent of {:?}", rec.key);
            }
        }
    }

    #[test]
    fn single_finest_voxel_rasterizes_to_27_cells() {
        let cloud = cloud_of(&[[0.5, 0.5, 0.5]]);
        let h = build_hierarchy(&cloud, 0.02, 1, 1).unwrap();
        let domain = rasterize_domain(&h);
        assert_eq!(domain.len(), 27);
    }

    #[test]
    fn two_adjacent_finest_voxels_rasterize_to_36_cells() {
        let cloud = cloud_of(&[[0.010, 0.010, 0.010], [0.030, 0.010, 0.010]]);
        let h = build_hierarchy(&cloud, 0.02, 1, 1).unwrap();
        assert_eq!(h.active_count(1), 2);
        let domain = rasterize_domain(&h);
        assert_eq!(domain.len(), 36);
    }

    #[test]
    fn scale2_voxel_rasterizes_to_216_cells() {
        let cloud = cloud_of(&[[0.5, 0.5, 0.5]]);
        // S=2 with a single point: one voxel per scale; scale-2 enlargement
        // dominates with (3*2)^3 = 216 cells
        let h = build_hierarchy(&cloud, 0.02, 2, 2).unwrap();
        let domain = rasterize_domain(&h);
        assert_eq!(domain.len(), 216);
    }

    #[test]
    fn rasterization_matches_bruteforce_union() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let positions: Vec<[f64; 3]> = (0..40)
            .map(|_| [rng.random(), rng.random(), rng.random()])
            .collect();
        let h = build_hierarchy(&cloud_of(&positions), 0.05, 3, 3).unwrap();
        let domain = rasterize_domain(&h);
        let mut expected = BTreeSet::new();
        for rec in h.all_voxels() {
            let (lo, hi) = enlarged_region_cells(rec.key);
            for i in lo[0]..hi[0] {
                for j in lo[1]..hi[1] {
                    for k in lo[2]..hi[2] {
                        expected.insert([i, j, k]);
                    }
                }
            }
        }
        assert_eq!(domain.len(), expected.len());
        for c in domain.cells() {
            assert!(expected.contains(c));
        }
        // linear bound on domain size
        let mut bound = 0usize;
        for s in 1..=3u8 {
            let m = 1usize << (s - 1);
            bound += 27 * m * m * m * h.active_count(s);
        }
        assert!(domain.len() <= bound);
    }

    #[test]
    fn single_voxel_has_self_pair_only() {
        let cloud = cloud_of(&[[0.5, 0.5, 0.5]]);
        let h = build_hierarchy(&cloud, 0.02, 1, 1).unwrap();
        let pairs = neighbor_pairs(&h);
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].0, pairs[0].1);
    }

    #[test]
    fn distant_voxels_have_no_cross_pair() {
        // 4 voxel-widths apart: supports span +-1.5 widths, no overlap
        let cloud = cloud_of(&[[0.010, 0.010, 0.010], [0.090, 0.010, 0.010]]);
        let h = build_hierarchy(&cloud, 0.02, 1, 1).unwrap();
        let pairs = neighbor_pairs(&h);
        assert_eq!(pairs.len(), 2); // two self-pairs only
        for (a, b) in pairs {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn touching_supports_do_not_pair() {
        // exactly 3 voxel-widths apart: supports touch at a face (zero volume)
        let cloud = cloud_of(&[[0.010, 0.010, 0.010], [0.070, 0.010, 0.010]]);
        let h = build_hierarchy(&cloud, 0.02, 1, 1).unwrap();
        let pairs = neighbor_pairs(&h);
        assert_eq!(pairs.len(), 2);
    }

    #[test]
    fn neighbor_pairs_match_bruteforce_aabb() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let positions: Vec<[f64; 3]> = (0..20)
            .map(|_| [rng.random(), rng.random(), rng.random()])
            .collect();
        let h = build_hierarchy(&cloud_of(&positions), 0.07, 3, 3).unwrap();
        let got: BTreeSet<(VoxelKey, VoxelKey)> = neighbor_pairs(&h).into_iter().collect();
        assert_eq!(got.len(), neighbor_pairs(&h).len(), "pairs must be unique");

        let voxels: Vec<&VoxelRecord> = h.basis_voxels().collect();
        let mut expected = BTreeSet::new();
        for a in &voxels {
            for b in &voxels {
                let ka = a.key;
                let kb = b.key;
                if (kb.scale, kb.ijk) < (ka.scale, ka.ijk) {
                    continue;
                }
                let wa = h.edge_length(ka.scale);
                let wb = h.edge_length(kb.scale);
                let reach = 1.5 * (wa + wb);
                let overlap = (0..3).all(|ax| (a.centroid[ax] - b.centroid[ax]).abs() < reach - 1e-12);
                if overlap {
                    expected.insert((ka, kb));
                }
            }
        }
        assert_eq!(got, expected);
    }

    #[test]
    fn occupancy_labels_per_scale() {
        let cloud = cloud_of(&[[0.3, 0.3, 0.3]]);
        let labels = ground_truth_occupancy(&cloud, 0.02, 4).unwrap();
        for set in &labels {
            assert_eq!(set.len(), 1);
        }
    }

    #[test]
    fn occupancy_containment_across_scales() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let positions: Vec<[f64; 3]> = (0..300)
            .map(|_| {
                // samples on a sphere of radius 0.35 around the cube center
                let v = Vec3::new(
                    rng.random::<f64>() - 0.5,
                    rng.random::<f64>() - 0.5,
                    rng.random::<f64>() - 0.5,
                )
                .normalize()
                    * 0.35;
                [v.x + 0.5, v.y + 0.5, v.z + 0.5]
            })
            .collect();
        let cloud = cloud_of(&positions);
        let labels = ground_truth_occupancy(&cloud, 0.02, 3).unwrap();
        // every sample's containing key present at every scale
        for p in cloud.points() {
            for s in 1..=3u8 {
                let w = (1u64 << (s - 1)) as f64 * 0.02;
                let ijk = [
                    (p.position.x / w).floor() as i32,
                    (p.position.y / w).floor() as i32,
                    (p.position.z / w).floor() as i32,
                ];
                assert!(labels[s as usize - 1].contains(&ijk));
            }
        }
        // parents of scale-s occupancy are contained in scale-(s+1) occupancy
        for s in 0..2usize {
            for ijk in &labels[s] {
                let parent = [
                    ijk[0].div_euclid(2),
                    ijk[1].div_euclid(2),
                    ijk[2].div_euclid(2),
                ];
                assert!(labels[s + 1].contains(&parent));
            }
        }
    }
}
