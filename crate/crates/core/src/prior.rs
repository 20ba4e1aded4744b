//! Forward-only neural prior operators: sparse convolution with
//! point-count kernel selection, point-voxel attention, prediction heads
//! and the training-loss components as evaluation functions.
//!
//! No training happens here; weights come from a self-describing bundle
//! file or from a seeded initializer for fixtures.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::basis::BasisParams;
use crate::cloud::PointCloud;
use crate::scaffold::{SparseVoxelHierarchy, VoxelKey};
use crate::{Error, Result, Vec3};

/// Dense array with explicit shape, stored row-major.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Array {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Array {
    pub fn zeros(shape: &[usize]) -> Array {
        Array {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    fn check(&self) -> Result<()> {
        let expect: usize = self.shape.iter().product();
        if self.data.len() != expect {
            return Err(Error::ShapeMismatch(format!(
                "array data length {} does not match shape {:?}",
                self.data.len(),
                self.shape
            )));
        }
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::WeightBundle("non-finite weight value".into()));
        }
        Ok(())
    }

    /// `y = W x + b` for a [rows, cols] matrix; `b` may be empty.
    fn affine(&self, x: &[f64], bias: &[f64]) -> Result<Vec<f64>> {
        if self.shape.len() != 2 || self.shape[1] != x.len() {
            return Err(Error::ShapeMismatch(format!(
                "matrix {:?} applied to vector of length {}",
                self.shape,
                x.len()
            )));
        }
        let (rows, cols) = (self.shape[0], self.shape[1]);
        if !bias.is_empty() && bias.len() != rows {
            return Err(Error::ShapeMismatch("bias length".into()));
        }
        let mut y = vec![0.0; rows];
        for r in 0..rows {
            let mut acc = if bias.is_empty() { 0.0 } else { bias[r] };
            let row = &self.data[r * cols..(r + 1) * cols];
            for (w, xv) in row.iter().zip(x) {
                acc += w * xv;
            }
            y[r] = acc;
        }
        Ok(y)
    }
}

/// Named weight arrays plus the layer dimension table. Serialized as JSON
/// with a sha256 integrity checksum over the canonical array encoding.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightBundle {
    /// Feature channel count C (uniform across scales).
    pub channels: usize,
    /// Per-axis free coefficient count of the basis head output.
    pub basis_free_dim: usize,
    pub arrays: BTreeMap<String, Array>,
    #[serde(default)]
    pub checksum: String,
}

const MLPS: [(&str, usize); 5] = [
    ("phi_q", 0), // 0 = input dim C
    ("phi_u", 0),
    ("psi_k", 0),
    ("phi_pos", 3),
    ("phi_w", 0),
];

impl WeightBundle {
    fn canonical_payload(&self) -> Vec<u8> {
        // checksum covers everything except the checksum field itself
        let body = (self.channels, self.basis_free_dim, &self.arrays);
        serde_json::to_vec(&body).expect("serializable")
    }

    fn compute_checksum(&self) -> String {
        let digest = Sha256::digest(self.canonical_payload());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn seal(&mut self) {
        self.checksum = self.compute_checksum();
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.basis_free_dim == 0 {
            return Err(Error::WeightBundle("zero dimension".into()));
        }
        if self.checksum != self.compute_checksum() {
            return Err(Error::WeightBundle("checksum mismatch".into()));
        }
        let c = self.channels;
        for o in 0..27 {
            self.expect(&format!("conv.w.{o}"), &[c, c])?;
        }
        for (name, in_dim) in MLPS {
            let din = if in_dim == 0 { c } else { in_dim };
            let dout = if name == "phi_w" { 1 } else { c };
            self.expect(&format!("{name}.l1.w"), &[c, din])?;
            self.expect(&format!("{name}.l1.b"), &[c])?;
            self.expect(&format!("{name}.l2.w"), &[dout, c])?;
            self.expect(&format!("{name}.l2.b"), &[dout])?;
        }
        for (head, dout) in [
            ("head_normal", 3),
            ("head_basis", 3 * self.basis_free_dim),
            ("head_occ", 1),
        ] {
            self.expect(&format!("{head}.l1.w"), &[c, c])?;
            self.expect(&format!("{head}.l1.b"), &[c])?;
            self.expect(&format!("{head}.l2.w"), &[dout, c])?;
            self.expect(&format!("{head}.l2.b"), &[dout])?;
        }
        Ok(())
    }

    fn expect(&self, name: &str, shape: &[usize]) -> Result<()> {
        let arr = self
            .arrays
            .get(name)
            .ok_or_else(|| Error::WeightBundle(format!("missing array {name}")))?;
        arr.check()?;
        if arr.shape != shape {
            return Err(Error::ShapeMismatch(format!(
                "{name}: shape {:?}, expected {shape:?}",
                arr.shape
            )));
        }
        Ok(())
    }

    fn array(&self, name: &str) -> &Array {
        &self.arrays[name]
    }

    /// Two-layer MLP with ReLU after the hidden layer.
    fn mlp(&self, name: &str, x: &[f64]) -> Result<Vec<f64>> {
        let mut h = self.array(&format!("{name}.l1.w")).affine(
            x,
            &self.array(&format!("{name}.l1.b")).data,
        )?;
        for v in &mut h {
            *v = v.max(0.0);
        }
        self.array(&format!("{name}.l2.w"))
            .affine(&h, &self.array(&format!("{name}.l2.b")).data)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::WeightBundle(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<WeightBundle> {
        if !path.exists() {
            return Err(Error::FileNotFound(path.display().to_string()));
        }
        let text = std::fs::read_to_string(path)?;
        let bundle: WeightBundle =
            serde_json::from_str(&text).map_err(|e| Error::WeightBundle(e.to_string()))?;
        bundle.validate()?;
        Ok(bundle)
    }

    /// Seeded pseudo-random bundle for fixtures: uniform weights in
    /// [-scale, scale], zero biases.
    pub fn seeded(channels: usize, basis_free_dim: usize, seed: u64) -> WeightBundle {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 0.1;
        let mut arrays: BTreeMap<String, Array> = BTreeMap::new();
        fn rand_array(
            arrays: &mut BTreeMap<String, Array>,
            name: String,
            shape: &[usize],
            rng: &mut ChaCha8Rng,
            scale: f64,
        ) {
            let n: usize = shape.iter().product();
            arrays.insert(
                name,
                Array {
                    shape: shape.to_vec(),
                    data: (0..n).map(|_| rng.random_range(-scale..scale)).collect(),
                },
            );
        }
        let c = channels;
        for o in 0..27 {
            rand_array(&mut arrays, format!("conv.w.{o}"), &[c, c], &mut rng, scale);
        }
        for (name, in_dim) in MLPS {
            let din = if in_dim == 0 { c } else { in_dim };
            let dout = if name == "phi_w" { 1 } else { c };
            rand_array(&mut arrays, format!("{name}.l1.w"), &[c, din], &mut rng, scale);
            arrays.insert(format!("{name}.l1.b"), Array::zeros(&[c]));
            rand_array(&mut arrays, format!("{name}.l2.w"), &[dout, c], &mut rng, scale);
            arrays.insert(format!("{name}.l2.b"), Array::zeros(&[dout]));
        }
        for (head, dout) in [
            ("head_normal", 3),
            ("head_basis", 3 * basis_free_dim),
            ("head_occ", 1),
        ] {
            rand_array(&mut arrays, format!("{head}.l1.w"), &[c, c], &mut rng, scale);
            arrays.insert(format!("{head}.l1.b"), Array::zeros(&[c]));
            rand_array(&mut arrays, format!("{head}.l2.w"), &[dout, c], &mut rng, scale);
            arrays.insert(format!("{head}.l2.b"), Array::zeros(&[dout]));
        }
        let mut bundle = WeightBundle {
            channels,
            basis_free_dim,
            arrays,
            checksum: String::new(),
        };
        bundle.seal();
        bundle
    }
}

/// Per-voxel feature vectors with a uniform channel count.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    pub channels: usize,
    pub features: BTreeMap<VoxelKey, Vec<f64>>,
}

impl FeatureGrid {
    /// Hand-crafted input features from voxel statistics: point count
    /// (log-scaled), accumulated normal direction, then zero padding.
    pub fn from_hierarchy(h: &SparseVoxelHierarchy, channels: usize) -> FeatureGrid {
        assert!(channels >= 4);
        let mut features = BTreeMap::new();
        for rec in h.all_voxels() {
            let mut f = vec![0.0; channels];
            f[0] = (1.0 + rec.point_count as f64).ln();
            let n = rec.accum_normal;
            let len = n.norm();
            if len > 0.0 {
                f[1] = n.x / len;
                f[2] = n.y / len;
                f[3] = n.z / len;
            }
            features.insert(rec.key, f);
        }
        FeatureGrid { channels, features }
    }

    pub fn get(&self, key: VoxelKey) -> Option<&Vec<f64>> {
        self.features.get(&key)
    }
}

/// Branch selection by contained point count: descend to the
/// finer-scale feature for crowded voxels, ascend for sparse ones, stay
/// otherwise. Boundary counts and missing levels resolve to the current
/// feature.
pub fn select_kernel_feature<'a>(
    f_down: Option<&'a [f64]>,
    f_cur: &'a [f64],
    f_up: Option<&'a [f64]>,
    n_vj: u32,
    n_min: u32,
    n_max: u32,
) -> &'a [f64] {
    assert!(n_min < n_max);
    if n_vj > n_max {
        f_down.unwrap_or(f_cur)
    } else if n_vj < n_min {
        f_up.unwrap_or(f_cur)
    } else {
        f_cur
    }
}

fn offset_index(d: [i32; 3]) -> usize {
    ((d[0] + 1) + 3 * (d[1] + 1) + 9 * (d[2] + 1)) as usize
}

/// Mean feature of the active finer-scale children of a voxel, if any.
fn down_feature(grid: &FeatureGrid, key: VoxelKey) -> Option<Vec<f64>> {
    if key.scale <= 1 {
        return None;
    }
    let mut acc = vec![0.0; grid.channels];
    let mut count = 0usize;
    for dx in 0..2 {
        for dy in 0..2 {
            for dz in 0..2 {
                let child = VoxelKey {
                    scale: key.scale - 1,
                    ijk: [
                        key.ijk[0] * 2 + dx,
                        key.ijk[1] * 2 + dy,
                        key.ijk[2] * 2 + dz,
                    ],
                };
                if let Some(f) = grid.get(child) {
                    for (a, v) in acc.iter_mut().zip(f) {
                        *a += v;
                    }
                    count += 1;
                }
            }
        }
    }
    if count == 0 {
        return None;
    }
    for a in &mut acc {
        *a /= count as f64;
    }
    Some(acc)
}

fn up_feature(grid: &FeatureGrid, h: &SparseVoxelHierarchy, key: VoxelKey) -> Option<Vec<f64>> {
    if key.scale >= h.num_scales() {
        return None;
    }
    let parent = VoxelKey {
        scale: key.scale + 1,
        ijk: [
            key.ijk[0].div_euclid(2),
            key.ijk[1].div_euclid(2),
            key.ijk[2].div_euclid(2),
        ],
    };
    grid.get(parent).cloned()
}

/// One residual sparse-convolution layer with per-neighbor level selection
/// over the 27-offset neighborhood. Absent neighbors contribute zero.
pub fn multi_layer_conv(
    grid: &FeatureGrid,
    h: &SparseVoxelHierarchy,
    w: &WeightBundle,
    n_min: u32,
    n_max: u32,
) -> Result<FeatureGrid> {
    if grid.channels != w.channels {
        return Err(Error::ShapeMismatch(format!(
            "feature channels {} vs kernel channels {}",
            grid.channels, w.channels
        )));
    }
    let mut out = BTreeMap::new();
    for (&key, f_i) in &grid.features {
        let mut acc = f_i.clone();
        for dz in -1..=1 {
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let j = VoxelKey {
                        scale: key.scale,
                        ijk: [key.ijk[0] + dx, key.ijk[1] + dy, key.ijk[2] + dz],
                    };
                    let Some(f_cur) = grid.get(j) else {
                        continue;
                    };
                    let n_vj = h.record(j).map_or(0, |r| r.point_count);
                    let down = down_feature(grid, j);
                    let up = up_feature(grid, h, j);
                    let selected = select_kernel_feature(
                        down.as_deref(),
                        f_cur,
                        up.as_deref(),
                        n_vj,
                        n_min,
                        n_max,
                    );
                    let kernel = w.array(&format!("conv.w.{}", offset_index([dx, dy, dz])));
                    let contribution = kernel.affine(selected, &[])?;
                    for (a, v) in acc.iter_mut().zip(&contribution) {
                        *a += v;
                    }
                }
            }
        }
        out.insert(key, acc);
    }
    Ok(FeatureGrid {
        channels: grid.channels,
        features: out,
    })
}

/// Refine a voxel feature by attending over its contained points.
/// `points` holds (relative position delta, point feature) pairs; the
/// summation order is the given index order for determinism.
pub fn point_voxel_attention(
    f_v: &[f64],
    points: &[(Vec3, Vec<f64>)],
    w: &WeightBundle,
) -> Result<Vec<f64>> {
    if points.is_empty() {
        return Err(Error::EmptyVoxel);
    }
    let k_v = w.mlp("psi_k", f_v)?;
    let mut logits = Vec::with_capacity(points.len());
    let mut payloads = Vec::with_capacity(points.len());
    for (delta, f_p) in points {
        let q = w.mlp("phi_q", f_p)?;
        let u = w.mlp("phi_u", f_p)?;
        let pos = w.mlp("phi_pos", &[delta.x, delta.y, delta.z])?;
        let arg: Vec<f64> = k_v
            .iter()
            .zip(&q)
            .zip(&pos)
            .map(|((kv, qv), pv)| kv - qv + pv)
            .collect();
        let logit = w.mlp("phi_w", &arg)?[0];
        logits.push(logit);
        let payload: Vec<f64> = u.iter().zip(&pos).map(|(uv, pv)| uv + pv).collect();
        payloads.push(payload);
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    let mut out = f_v.to_vec();
    for (e, payload) in exps.iter().zip(&payloads) {
        let weight = e / total;
        for (o, p) in out.iter_mut().zip(payload) {
            *o += weight * p;
        }
    }
    Ok(out)
}

/// Per-voxel head outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorVoxel {
    pub normal: Vec3,
    /// True when the raw normal head output was (numerically) zero and the
    /// (0, 0, 1) sentinel was substituted.
    pub low_confidence: bool,
    pub params: BasisParams,
    pub occupancy_logit: f64,
}

#[derive(Debug, Clone, Default)]
pub struct PriorOutputs {
    pub voxels: BTreeMap<VoxelKey, PriorVoxel>,
}

/// Run the normal / basis-parameter / occupancy heads over every feature.
pub fn predict_priors(grid: &FeatureGrid, w: &WeightBundle) -> Result<PriorOutputs> {
    let mut voxels = BTreeMap::new();
    for (&key, f) in &grid.features {
        let raw_n = w.mlp("head_normal", f)?;
        let n = Vec3::new(raw_n[0], raw_n[1], raw_n[2]);
        let len = n.norm();
        let (normal, low_confidence) = if len > 1e-12 {
            (n / len, false)
        } else {
            (Vec3::new(0.0, 0.0, 1.0), true)
        };
        let raw_b = w.mlp("head_basis", f)?;
        let d = w.basis_free_dim;
        let mut axes = [
            raw_b[0..d].to_vec(),
            raw_b[d..2 * d].to_vec(),
            raw_b[2 * d..3 * d].to_vec(),
        ];
        for axis in &mut axes {
            if axis.iter().all(|v| *v == 0.0) {
                axis[0] = 1.0; // keep the parameters attachable
            }
        }
        let occupancy_logit = w.mlp("head_occ", f)?[0];
        voxels.insert(
            key,
            PriorVoxel {
                normal,
                low_confidence,
                params: BasisParams { axes },
                occupancy_logit,
            },
        );
    }
    Ok(PriorOutputs { voxels })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainingPhase {
    StructureOnly,
    Full,
}

/// Relative weights of the training loss terms; all default to 1.
#[derive(Debug, Clone, Copy)]
pub struct LossWeights {
    pub w_struct: f64,
    pub w_vox: f64,
    pub w_surf: f64,
    pub w_grad: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            w_struct: 1.0,
            w_vox: 1.0,
            w_surf: 1.0,
            w_grad: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub l_struct: f64,
    pub l_vox_normal: f64,
    pub l_f: f64,
    pub l_grad: f64,
    pub l_total: f64,
}

const LOGIT_CLAMP: f64 = 30.0;

fn cross_entropy(logit: f64, label: bool) -> f64 {
    let x = logit.clamp(-LOGIT_CLAMP, LOGIT_CLAMP);
    // softplus(x) - y * x, numerically stable
    let softplus = if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    };
    softplus - if label { x } else { 0.0 }
}

/// Loss components over a predicted structure and a (field-like) implicit
/// function. `value` / `gradient` evaluate the implicit function on the
/// surface samples; pass the solved field's closures in production.
#[allow(clippy::too_many_arguments)]
pub fn loss_components(
    pred: &PriorOutputs,
    h: &SparseVoxelHierarchy,
    labels: &[BTreeSet<[i32; 3]>],
    samples: &PointCloud,
    value: impl Fn(Vec3) -> f64,
    gradient: impl Fn(Vec3) -> Vec3,
    weights: &LossWeights,
    phase: TrainingPhase,
) -> Result<LossBreakdown> {
    if !samples.has_normals() {
        return Err(Error::MissingNormals);
    }
    // multi-level cross-entropy over active voxels
    let mut l_struct = 0.0;
    let mut l_vox_normal = 0.0;
    for scale in 1..=h.num_scales() {
        let label_set = labels
            .get(scale as usize - 1)
            .ok_or(Error::MissingLabels(scale))?;
        let mut ce = 0.0;
        let mut ce_count = 0usize;
        let mut l1 = 0.0;
        let mut l1_count = 0usize;
        for rec in h.scale_records(scale) {
            let Some(voxel) = pred.voxels.get(&rec.key) else {
                continue;
            };
            ce += cross_entropy(voxel.occupancy_logit, label_set.contains(&rec.key.ijk));
            ce_count += 1;
            let gt_len = rec.accum_normal.norm();
            if gt_len > 0.0 {
                let gt = rec.accum_normal / gt_len;
                l1 += (voxel.normal - gt).abs().sum();
                l1_count += 1;
            }
        }
        if ce_count > 0 {
            l_struct += ce / ce_count as f64;
        }
        if l1_count > 0 {
            l_vox_normal += l1 / l1_count as f64;
        }
    }
    // surface losses
    let mut l_f = 0.0;
    let mut l_grad = 0.0;
    for p in samples.points() {
        l_f += value(p.position).abs();
        let g = gradient(p.position);
        let len = g.norm();
        let aligned = if len > 0.0 {
            g.dot(&p.normal.expect("checked")) / len
        } else {
            0.0
        };
        l_grad += 1.0 - aligned;
    }
    let n = samples.len() as f64;
    l_f /= n;
    l_grad /= n;

    let full = match phase {
        TrainingPhase::StructureOnly => 0.0,
        TrainingPhase::Full => 1.0,
    };
    let l_total = weights.w_struct * l_struct
        + weights.w_vox * l_vox_normal
        + full * (weights.w_surf * l_f + weights.w_grad * l_grad);
    Ok(LossBreakdown {
        l_struct,
        l_vox_normal,
        l_f,
        l_grad,
        l_total,
    })
}
