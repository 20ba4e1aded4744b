//! End-to-end reconstruction driver: config file handling plus the
//! `reconstruct`, `evaluate` and `dump_system` entry points used by the CLI
//! and the Python bindings.
//!
//! Every config key has a default and unknown keys are hard errors, so a
//! config file is a complete, reproducible experiment record. Output files
//! are byte-deterministic for a fixed config (wall time is reported on the
//! side, never written into the report file).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::basis::{make_basis_spec, BasisSpec, Continuity};
use crate::cloud::{normalize_to_unit_cube, PointCloud, Transform};
use crate::extract::{extract_mesh, remove_floaters};
use crate::io::{load_mesh, load_point_cloud, write_mesh, CloudFormat, MeshFormat};
use crate::mesh::TriangleMesh;
use crate::metrics::{
    chamfer, f_score, iou, normal_consistency, sample_surface, ChamferNorm, MetricsReport,
};
use crate::normals::{estimate_normals, splat_normal_field};
use crate::prior::{multi_layer_conv, predict_priors, FeatureGrid, WeightBundle};
use crate::scaffold::{build_hierarchy, rasterize_domain, SparseVoxelHierarchy};
use crate::solver::{assemble_system, solve_with_stats, ImplicitField, SolverWeights};
use crate::{Error, Result, Vec3};

fn default_workers() -> usize {
    0 // 0 = all available cores; stages here are sequential either way
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InputSection {
    pub path: String,
    /// "auto" (file normals when present, else estimated), "file",
    /// "estimate" or "prior".
    pub normals: String,
    pub k_neighbors: usize,
    pub padding: f64,
}

impl Default for InputSection {
    fn default() -> Self {
        InputSection {
            path: String::new(),
            normals: "auto".into(),
            k_neighbors: 16,
            padding: 0.1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScaffoldSection {
    pub b: f64,
    pub scales: u8,
    /// Adaptive depth M; None means every scale carries bases.
    pub basis_scales: Option<u8>,
}

impl Default for ScaffoldSection {
    fn default() -> Self {
        ScaffoldSection {
            b: 0.02,
            scales: 4,
            basis_scales: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BasisSection {
    pub degree: u32,
    pub sine_freqs: Vec<u32>,
    /// "c1-polynomial" or "c0-sines".
    pub continuity: String,
}

impl Default for BasisSection {
    fn default() -> Self {
        BasisSection {
            degree: 4,
            sine_freqs: Vec::new(),
            continuity: "c1-polynomial".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub lambda_h: f64,
    pub lambda_p: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            lambda_h: 3.0,
            lambda_p: 64.0,
            tol: 1e-8,
            max_iter: 4000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractSection {
    pub iso: f64,
    /// Floater threshold; None means 3 * b.
    pub tau: Option<f64>,
}

impl Default for ExtractSection {
    fn default() -> Self {
        ExtractSection {
            iso: 0.0,
            tau: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorSection {
    pub enabled: bool,
    /// Weight bundle path; None uses a seeded random bundle.
    pub weights: Option<String>,
    pub channels: usize,
    pub seed: u64,
    pub n_min: u32,
    pub n_max: u32,
}

impl Default for PriorSection {
    fn default() -> Self {
        PriorSection {
            enabled: false,
            weights: None,
            channels: 8,
            seed: 42,
            n_min: 4,
            n_max: 32,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsSection {
    pub surface_samples: usize,
    pub volume_samples: usize,
    pub f_score_tau: f64,
    pub seed: u64,
}

impl Default for MetricsSection {
    fn default() -> Self {
        MetricsSection {
            surface_samples: 30_000,
            volume_samples: 100_000,
            f_score_tau: 0.01,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub mesh: String,
    pub report: String,
    pub system: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            mesh: "out.ply".into(),
            report: "report.txt".into(),
            system: "system.txt".into(),
        }
    }
}

/// Full pipeline configuration. TOML sections mirror the module names.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    #[serde(default = "default_workers")]
    pub workers: usize,
    pub input: InputSection,
    pub scaffold: ScaffoldSection,
    pub basis: BasisSection,
    pub solver: SolverSection,
    pub extract: ExtractSection,
    pub prior: PriorSection,
    pub metrics: MetricsSection,
    pub output: OutputSection,
}

impl Config {
    pub fn load(path: &Path) -> Result<Config> {
        if !path.exists() {
            return Err(Error::FileNotFound(path.display().to_string()));
        }
        let text = std::fs::read_to_string(path)?;
        Config::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Config> {
        let config: Config =
            toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("serializable config")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scaffold.b > 0.0) {
            return Err(Error::InvalidConfig("scaffold.b must be > 0".into()));
        }
        if self.scaffold.scales < 1 {
            return Err(Error::InvalidConfig("scaffold.scales must be >= 1".into()));
        }
        if let Some(m) = self.scaffold.basis_scales {
            if m < 1 || m > self.scaffold.scales {
                return Err(Error::InvalidConfig(
                    "scaffold.basis_scales must be in 1..=scales".into(),
                ));
            }
        }
        if !(self.solver.tol > 0.0) {
            return Err(Error::InvalidConfig("solver.tol must be > 0".into()));
        }
        if !matches!(
            self.input.normals.as_str(),
            "auto" | "file" | "estimate" | "prior"
        ) {
            return Err(Error::InvalidConfig(format!(
                "input.normals = {:?} (expected auto | file | estimate | prior)",
                self.input.normals
            )));
        }
        self.basis_continuity()?;
        if let Some(tau) = self.extract.tau {
            if !(tau > 0.0) {
                return Err(Error::InvalidConfig("extract.tau must be > 0".into()));
            }
        }
        if self.prior.n_min >= self.prior.n_max {
            return Err(Error::InvalidConfig("prior.n_min must be < n_max".into()));
        }
        Ok(())
    }

    fn basis_continuity(&self) -> Result<Continuity> {
        match self.basis.continuity.as_str() {
            "c1-polynomial" => Ok(Continuity::C1Polynomial),
            "c0-sines" => Ok(Continuity::C0WithSines),
            other => Err(Error::InvalidConfig(format!(
                "basis.continuity = {other:?} (expected c1-polynomial | c0-sines)"
            ))),
        }
    }

    pub fn basis_spec(&self) -> Result<BasisSpec> {
        make_basis_spec(
            self.basis.degree,
            &self.basis.sine_freqs,
            self.basis_continuity()?,
        )
    }

    pub fn solver_weights(&self) -> SolverWeights {
        SolverWeights {
            lambda_h: self.solver.lambda_h,
            lambda_p: self.solver.lambda_p,
        }
    }

    pub fn adaptive_depth(&self) -> u8 {
        self.scaffold.basis_scales.unwrap_or(self.scaffold.scales)
    }

    pub fn floater_tau(&self) -> f64 {
        self.extract.tau.unwrap_or(3.0 * self.scaffold.b)
    }
}

/// Summary of one reconstruction run. `to_text` is byte-deterministic for
/// identical configs; timing lives only in `wall_time_s` for console output.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub dof_count: usize,
    pub cg_iterations: usize,
    pub relative_residual: f64,
    pub screened_poisson: bool,
    pub vertices: usize,
    pub triangles: usize,
    pub wall_time_s: f64,
}

impl RunReport {
    pub fn to_text(&self) -> String {
        format!(
            "dofs = {}\ncg_iterations = {}\nrelative_residual = {:.6e}\n\
             mode = {}\nvertices = {}\ntriangles = {}\n",
            self.dof_count,
            self.cg_iterations,
            self.relative_residual,
            if self.screened_poisson {
                "screened-poisson"
            } else {
                "variational"
            },
            self.vertices,
            self.triangles,
        )
    }
}

fn cloud_format(path: &Path) -> Result<CloudFormat> {
    CloudFormat::from_path(path).ok_or_else(|| {
        Error::InvalidConfig(format!(
            "unrecognized point cloud extension: {}",
            path.display()
        ))
    })
}

fn mesh_format(path: &Path) -> Result<MeshFormat> {
    MeshFormat::from_path(path).ok_or_else(|| {
        Error::InvalidConfig(format!("unrecognized mesh extension: {}", path.display()))
    })
}

fn load_input(config: &Config, input_override: Option<&Path>) -> Result<PointCloud> {
    let path = input_override
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from(&config.input.path));
    if path.as_os_str().is_empty() {
        return Err(Error::InvalidConfig("no input path given".into()));
    }
    load_point_cloud(&path, cloud_format(&path)?)
}

fn prior_bundle(config: &Config) -> Result<WeightBundle> {
    match &config.prior.weights {
        Some(path) => WeightBundle::load(Path::new(path)),
        None => Ok(WeightBundle::seeded(
            config.prior.channels,
            config.basis_spec()?.free_dim(),
            config.prior.seed,
        )),
    }
}

/// Prior-predicted per-point normals (from the containing finest voxel) and
/// per-voxel basis parameters attached onto the hierarchy records.
fn apply_prior(
    config: &Config,
    cloud: &PointCloud,
    h: &mut SparseVoxelHierarchy,
) -> Result<Option<Vec<Vec3>>> {
    if !config.prior.enabled {
        return Ok(None);
    }
    let bundle = prior_bundle(config)?;
    let features = FeatureGrid::from_hierarchy(h, bundle.channels);
    let features = multi_layer_conv(&features, h, &bundle, config.prior.n_min, config.prior.n_max)?;
    let outputs = predict_priors(&features, &bundle)?;
    for (key, voxel) in &outputs.voxels {
        if let Some(rec) = h.record_mut(*key) {
            rec.basis_params = Some(voxel.params.clone());
        }
    }
    let normals = cloud
        .points()
        .iter()
        .map(|p| {
            let key = crate::scaffold::VoxelKey {
                scale: 1,
                ijk: h.voxel_of(p.position, 1),
            };
            outputs
                .voxels
                .get(&key)
                .map_or(Vec3::new(0.0, 0.0, 1.0), |v| v.normal)
        })
        .collect();
    Ok(Some(normals))
}

fn resolve_normals(config: &Config, cloud: &PointCloud) -> Result<PointCloud> {
    let mode = config.input.normals.as_str();
    match mode {
        "file" => {
            if !cloud.has_normals() {
                return Err(Error::MissingNormals);
            }
            Ok(cloud.clone())
        }
        "auto" if cloud.has_normals() => Ok(cloud.clone()),
        "auto" | "estimate" => {
            let estimates = estimate_normals(cloud, config.input.k_neighbors)?;
            let normals: Vec<Vec3> = estimates.iter().map(|e| e.normal).collect();
            cloud.with_normals(&normals)
        }
        _ => unreachable!("validated mode"),
    }
}

/// Decide the global inside/outside sign: oriented normals point outward,
/// so the field must increase along them across the surface.
fn fix_sign(field: &mut ImplicitField, cloud: &PointCloud, b: f64) {
    let eps = 0.5 * b;
    let mut along = 0.0;
    for p in cloud.points() {
        let Some(n) = p.normal else { continue };
        along += field.value(p.position + n * eps) - field.value(p.position - n * eps);
    }
    if along < 0.0 {
        field.flip_sign();
    }
}

/// Everything `reconstruct` produces besides the files on disk.
#[derive(Debug)]
pub struct ReconstructionResult {
    pub mesh: TriangleMesh,
    pub field: ImplicitField,
    pub transform: Transform,
    pub report: RunReport,
}

/// Run the full pipeline in memory: load → normalize → scaffold → normals →
/// splat → assemble → solve → extract → floaters → denormalize.
pub fn run_reconstruction(
    config: &Config,
    input_override: Option<&Path>,
) -> Result<ReconstructionResult> {
    let start = std::time::Instant::now();
    config.validate()?;
    let raw = load_input(config, input_override).map_err(|e| e.at_stage("load"))?;
    let (unit_cloud, back) = normalize_to_unit_cube(&raw, config.input.padding)
        .map_err(|e| e.at_stage("normalize"))?;

    let b = config.scaffold.b;
    let mut hierarchy = build_hierarchy(&unit_cloud, b, config.scaffold.scales, config.adaptive_depth())
        .map_err(|e| e.at_stage("scaffold"))?;
    let mut domain = rasterize_domain(&hierarchy);

    if config.input.normals == "prior" && !config.prior.enabled {
        return Err(Error::InvalidConfig(
            "input.normals = \"prior\" requires prior.enabled = true".into(),
        ));
    }
    let prior_normals = apply_prior(config, &unit_cloud, &mut hierarchy)
        .map_err(|e| e.at_stage("prior"))?;
    let cloud = match (prior_normals, config.input.normals.as_str()) {
        (Some(normals), "prior") => unit_cloud
            .with_normals(&normals)
            .map_err(|e| e.at_stage("prior"))?,
        _ => resolve_normals(config, &unit_cloud).map_err(|e| e.at_stage("normals"))?,
    };

    splat_normal_field(&cloud, &mut domain).map_err(|e| e.at_stage("splat"))?;

    let spec = config.basis_spec().map_err(|e| e.at_stage("assemble"))?;
    let weights = config.solver_weights();
    let system = assemble_system(&hierarchy, &domain, &spec, &weights, &cloud)
        .map_err(|e| e.at_stage("assemble"))?;

    let (alpha, iterations) = solve_with_stats(&system, config.solver.tol, config.solver.max_iter)
        .map_err(|e| e.at_stage("solve"))?;
    let relative_residual = {
        let ax = system.matvec(&alpha);
        let rhs_norm = system.rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        let res = system
            .rhs
            .iter()
            .zip(&ax)
            .map(|(bv, av)| (bv - av) * (bv - av))
            .sum::<f64>()
            .sqrt();
        if rhs_norm > 0.0 {
            res / rhs_norm
        } else {
            0.0
        }
    };
    let mut field =
        ImplicitField::new(hierarchy, spec, alpha).map_err(|e| e.at_stage("solve"))?;
    fix_sign(&mut field, &cloud, b);

    let mesh = extract_mesh(&field, &domain, config.extract.iso)
        .map_err(|e| e.at_stage("extract"))?;
    let mesh = remove_floaters(&mesh, &cloud, config.floater_tau())
        .map_err(|e| e.at_stage("extract"))?;
    let mesh = mesh.map_vertices(|v| back.apply(v));

    let report = RunReport {
        dof_count: field.alpha.len(),
        cg_iterations: iterations,
        relative_residual,
        screened_poisson: weights.lambda_h == 0.0,
        vertices: mesh.vertices.len(),
        triangles: mesh.triangles.len(),
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    Ok(ReconstructionResult {
        mesh,
        field,
        transform: back,
        report,
    })
}

/// `reconstruct` command: run the pipeline and write the mesh and report
/// files named in the config (or the output override).
pub fn reconstruct(
    config: &Config,
    input_override: Option<&Path>,
    output_override: Option<&Path>,
) -> Result<RunReport> {
    let result = run_reconstruction(config, input_override)?;
    let mesh_path = output_override
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from(&config.output.mesh));
    write_mesh(&result.mesh, &mesh_path, mesh_format(&mesh_path)?)
        .map_err(|e| e.at_stage("write"))?;
    std::fs::write(&config.output.report, result.report.to_text())
        .map_err(|e| Error::from(e).at_stage("write"))?;
    Ok(result.report)
}

/// `evaluate` command: score a predicted mesh against ground truth and
/// append one CSV row (header written when the file is new or empty).
pub fn evaluate(
    pred_path: &Path,
    gt_path: &Path,
    out_csv: &Path,
    metrics: &MetricsSection,
) -> Result<MetricsReport> {
    let pred = load_mesh(pred_path, mesh_format(pred_path)?)?;
    let gt = load_mesh(gt_path, mesh_format(gt_path)?)?;
    let report = evaluate_meshes(&pred, &gt, metrics, pred_path.display().to_string())?;
    let mut text = String::new();
    let need_header = !out_csv.exists()
        || std::fs::metadata(out_csv).map(|m| m.len() == 0).unwrap_or(true);
    if need_header {
        text.push_str(MetricsReport::csv_header());
        text.push('\n');
    }
    text.push_str(&report.csv_row());
    text.push('\n');
    use std::io::Write as _;
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(out_csv)?;
    file.write_all(text.as_bytes())?;
    Ok(report)
}

/// Metric computation shared by the CLI and the bindings. IoU is recorded
/// as null when either mesh is open.
pub fn evaluate_meshes(
    pred: &TriangleMesh,
    gt: &TriangleMesh,
    metrics: &MetricsSection,
    name: String,
) -> Result<MetricsReport> {
    let n = metrics.surface_samples;
    // same seed both sides: identical meshes score exactly perfect
    let pred_samples = sample_surface(pred, n, metrics.seed)?;
    let gt_samples = sample_surface(gt, n, metrics.seed)?;
    let (iou_value, iou_se) = match iou(pred, gt, metrics.volume_samples, metrics.seed) {
        Ok((v, se)) => (Some(v), Some(se)),
        Err(Error::NonWatertight) => (None, None),
        Err(e) => return Err(e),
    };
    Ok(MetricsReport {
        name,
        chamfer_l1: chamfer(&pred_samples, &gt_samples, ChamferNorm::L1),
        chamfer_l2: chamfer(&pred_samples, &gt_samples, ChamferNorm::L2),
        f_score_percent: f_score(&pred_samples, &gt_samples, metrics.f_score_tau),
        normal_consistency_percent: normal_consistency(&pred_samples, &gt_samples)?,
        iou: iou_value,
        iou_std_error: iou_se,
        surface_samples: n,
        volume_samples: metrics.volume_samples,
        f_score_tau: metrics.f_score_tau,
        seed: metrics.seed,
    })
}

/// `dump-system` command: assemble only, write the coordinate-format dump.
pub fn dump_system(config: &Config, input_override: Option<&Path>) -> Result<PathBuf> {
    config.validate()?;
    let raw = load_input(config, input_override).map_err(|e| e.at_stage("load"))?;
    let (unit_cloud, _) = normalize_to_unit_cube(&raw, config.input.padding)
        .map_err(|e| e.at_stage("normalize"))?;
    let hierarchy = build_hierarchy(
        &unit_cloud,
        config.scaffold.b,
        config.scaffold.scales,
        config.adaptive_depth(),
    )
    .map_err(|e| e.at_stage("scaffold"))?;
    let mut domain = rasterize_domain(&hierarchy);
    let cloud = resolve_normals(config, &unit_cloud).map_err(|e| e.at_stage("normals"))?;
    splat_normal_field(&cloud, &mut domain).map_err(|e| e.at_stage("splat"))?;
    let spec = config.basis_spec().map_err(|e| e.at_stage("assemble"))?;
    let system = assemble_system(&hierarchy, &domain, &spec, &config.solver_weights(), &cloud)
        .map_err(|e| e.at_stage("assemble"))?;
    let path = PathBuf::from(&config.output.system);
    std::fs::write(&path, system.dump_coordinate())
        .map_err(|e| Error::from(e).at_stage("write"))?;
    Ok(path)
}
