//! Python bindings: point clouds, meshes, configs and the reconstruction
//! pipeline exposed as the `galvox_py` extension module.

use std::path::Path;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use galvox::cloud::OrientedPoint;
use galvox::io::{CloudFormat, MeshFormat};
use galvox::Vec3;

fn py_err(e: galvox::Error) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn cloud_format(path: &Path) -> PyResult<CloudFormat> {
    CloudFormat::from_path(path)
        .ok_or_else(|| PyValueError::new_err(format!("unrecognized cloud extension: {path:?}")))
}

fn mesh_format(path: &Path) -> PyResult<MeshFormat> {
    MeshFormat::from_path(path)
        .ok_or_else(|| PyValueError::new_err(format!("unrecognized mesh extension: {path:?}")))
}

/// Oriented point cloud.
#[pyclass(skip_from_py_object)]
#[derive(Clone)]
struct PointCloud {
    inner: galvox::cloud::PointCloud,
}

#[pymethods]
impl PointCloud {
    #[new]
    #[pyo3(signature = (positions, normals=None))]
    fn new(
        positions: Vec<(f64, f64, f64)>,
        normals: Option<Vec<(f64, f64, f64)>>,
    ) -> PyResult<Self> {
        if let Some(n) = &normals {
            if n.len() != positions.len() {
                return Err(PyValueError::new_err("normal count != position count"));
            }
        }
        let points: Vec<OrientedPoint> = positions
            .iter()
            .enumerate()
            .map(|(i, &(x, y, z))| {
                let p = Vec3::new(x, y, z);
                match &normals {
                    Some(n) => {
                        let (nx, ny, nz) = n[i];
                        OrientedPoint::with_normal(p, Vec3::new(nx, ny, nz))
                    }
                    None => OrientedPoint::new(p),
                }
            })
            .collect();
        Ok(PointCloud {
            inner: galvox::cloud::PointCloud::new(points).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let path = Path::new(path);
        let inner =
            galvox::io::load_point_cloud(path, cloud_format(path)?).map_err(py_err)?;
        Ok(PointCloud { inner })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        galvox::io::write_point_cloud_xyz(&self.inner, Path::new(path)).map_err(py_err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn has_normals(&self) -> bool {
        self.inner.has_normals()
    }

    fn positions(&self) -> Vec<(f64, f64, f64)> {
        self.inner
            .points()
            .iter()
            .map(|p| (p.position.x, p.position.y, p.position.z))
            .collect()
    }

    fn normals(&self) -> Option<Vec<(f64, f64, f64)>> {
        if !self.inner.has_normals() {
            return None;
        }
        Some(
            self.inner
                .points()
                .iter()
                .map(|p| {
                    let n = p.normal.expect("has_normals");
                    (n.x, n.y, n.z)
                })
                .collect(),
        )
    }
}

/// Indexed triangle mesh.
#[pyclass(skip_from_py_object)]
#[derive(Clone)]
struct TriangleMesh {
    inner: galvox::mesh::TriangleMesh,
}

#[pymethods]
impl TriangleMesh {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let path = Path::new(path);
        let inner = galvox::io::load_mesh(path, mesh_format(path)?).map_err(py_err)?;
        Ok(TriangleMesh { inner })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        let path = Path::new(path);
        galvox::io::write_mesh(&self.inner, path, mesh_format(path)?).map_err(py_err)
    }

    fn vertices(&self) -> Vec<(f64, f64, f64)> {
        self.inner.vertices.iter().map(|v| (v.x, v.y, v.z)).collect()
    }

    fn triangles(&self) -> Vec<(u32, u32, u32)> {
        self.inner
            .triangles
            .iter()
            .map(|t| (t[0], t[1], t[2]))
            .collect()
    }

    fn num_vertices(&self) -> usize {
        self.inner.vertices.len()
    }

    fn num_triangles(&self) -> usize {
        self.inner.triangles.len()
    }

    fn is_watertight(&self) -> bool {
        galvox::metrics::is_watertight(&self.inner)
    }

    fn euler_characteristic(&self) -> i64 {
        self.inner.euler_characteristic()
    }
}

/// Pipeline configuration (TOML-backed; unknown keys are errors).
#[pyclass(skip_from_py_object)]
#[derive(Clone)]
struct Config {
    inner: galvox::pipeline::Config,
}

#[pymethods]
impl Config {
    #[new]
    fn new() -> Self {
        Config {
            inner: galvox::pipeline::Config::default(),
        }
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(Config {
            inner: galvox::pipeline::Config::parse(text).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn from_file(path: &str) -> PyResult<Self> {
        Ok(Config {
            inner: galvox::pipeline::Config::load(Path::new(path)).map_err(py_err)?,
        })
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml()
    }
}

/// Solved implicit field, evaluable anywhere in space.
#[pyclass]
struct Field {
    inner: galvox::solver::ImplicitField,
}

#[pymethods]
impl Field {
    fn value(&self, x: f64, y: f64, z: f64) -> f64 {
        self.inner.value(Vec3::new(x, y, z))
    }

    fn gradient(&self, x: f64, y: f64, z: f64) -> (f64, f64, f64) {
        let g = self.inner.gradient(Vec3::new(x, y, z));
        (g.x, g.y, g.z)
    }
}

/// Run the reconstruction pipeline on a point cloud file.
/// Returns (mesh, field, report dict).
#[pyfunction]
#[pyo3(signature = (config, input=None))]
fn reconstruct<'py>(
    py: Python<'py>,
    config: &Config,
    input: Option<&str>,
) -> PyResult<(TriangleMesh, Py<Field>, Bound<'py, PyDict>)> {
    let result = galvox::pipeline::run_reconstruction(
        &config.inner,
        input.map(Path::new),
    )
    .map_err(py_err)?;
    let report = PyDict::new(py);
    report.set_item("dofs", result.report.dof_count)?;
    report.set_item("cg_iterations", result.report.cg_iterations)?;
    report.set_item("relative_residual", result.report.relative_residual)?;
    report.set_item("screened_poisson", result.report.screened_poisson)?;
    report.set_item("vertices", result.report.vertices)?;
    report.set_item("triangles", result.report.triangles)?;
    report.set_item("wall_time_s", result.report.wall_time_s)?;
    let field = Py::new(py, Field {
        inner: result.field,
    })?;
    Ok((
        TriangleMesh {
            inner: result.mesh,
        },
        field,
        report,
    ))
}

/// Score a predicted mesh against ground truth; IoU is None for open meshes.
#[pyfunction]
#[pyo3(signature = (pred, gt, surface_samples=30000, volume_samples=100000, f_score_tau=0.01, seed=42))]
fn evaluate<'py>(
    py: Python<'py>,
    pred: &TriangleMesh,
    gt: &TriangleMesh,
    surface_samples: usize,
    volume_samples: usize,
    f_score_tau: f64,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let metrics = galvox::pipeline::MetricsSection {
        surface_samples,
        volume_samples,
        f_score_tau,
        seed,
    };
    let report =
        galvox::pipeline::evaluate_meshes(&pred.inner, &gt.inner, &metrics, "py".into())
            .map_err(py_err)?;
    let out = PyDict::new(py);
    out.set_item("chamfer_l1", report.chamfer_l1)?;
    out.set_item("chamfer_l2", report.chamfer_l2)?;
    out.set_item("f_score", report.f_score_percent)?;
    out.set_item("normal_consistency", report.normal_consistency_percent)?;
    out.set_item("iou", report.iou)?;
    out.set_item("iou_std_error", report.iou_std_error)?;
    Ok(out)
}

/// PCA + spanning-tree normal estimation; returns oriented unit normals.
#[pyfunction]
#[pyo3(signature = (cloud, k=16))]
fn estimate_normals(cloud: &PointCloud, k: usize) -> PyResult<Vec<(f64, f64, f64)>> {
    let estimates = galvox::normals::estimate_normals(&cloud.inner, k).map_err(py_err)?;
    Ok(estimates.iter().map(|e| (e.normal.x, e.normal.y, e.normal.z)).collect())
}

#[pymodule]
fn galvox_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PointCloud>()?;
    m.add_class::<TriangleMesh>()?;
    m.add_class::<Config>()?;
    m.add_class::<Field>()?;
    m.add_function(wrap_pyfunction!(reconstruct, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_normals, m)?)?;
    Ok(())
}
