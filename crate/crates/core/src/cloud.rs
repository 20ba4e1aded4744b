//! Point cloud container, normalization and coordinate transforms.

use crate::{Error, Result, Vec3};

/// A sample point with an optional unit normal and a screening value.
///
/// The screening value is the target field value at the point; zero asserts
/// the point lies on the surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedPoint {
    pub position: Vec3,
    pub normal: Option<Vec3>,
    pub screening: f64,
}

impl OrientedPoint {
    pub fn new(position: Vec3) -> Self {
        OrientedPoint {
            position,
            normal: None,
            screening: 0.0,
        }
    }

    pub fn with_normal(position: Vec3, normal: Vec3) -> Self {
        OrientedPoint {
            position,
            normal: Some(normal),
            screening: 0.0,
        }
    }
}

/// Ordered list of oriented points with a tight bounding box.
#[derive(Debug, Clone)]
pub struct PointCloud {
    points: Vec<OrientedPoint>,
    bbox_min: Vec3,
    bbox_max: Vec3,
}

impl PointCloud {
    pub fn new(points: Vec<OrientedPoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        let mut bbox_min = points[0].position;
        let mut bbox_max = points[0].position;
        for p in &points {
            bbox_min = bbox_min.inf(&p.position);
            bbox_max = bbox_max.sup(&p.position);
        }
        Ok(PointCloud {
            points,
            bbox_min,
            bbox_max,
        })
    }

    pub fn points(&self) -> &[OrientedPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn bbox(&self) -> (Vec3, Vec3) {
        (self.bbox_min, self.bbox_max)
    }

    pub fn has_normals(&self) -> bool {
        self.points.iter().all(|p| p.normal.is_some())
    }

    /// Replace per-point normals, keeping positions and screening values.
    pub fn with_normals(&self, normals: &[Vec3]) -> Result<Self> {
        if normals.len() != self.points.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} normals for {} points",
                normals.len(),
                self.points.len()
            )));
        }
        let points = self
            .points
            .iter()
            .zip(normals)
            .map(|(p, n)| OrientedPoint {
                position: p.position,
                normal: Some(*n),
                screening: p.screening,
            })
            .collect();
        PointCloud::new(points)
    }

    /// Map every position through `f`, recomputing the bounding box.
    pub fn map_positions(&self, f: impl Fn(Vec3) -> Vec3) -> Result<Self> {
        let points = self
            .points
            .iter()
            .map(|p| OrientedPoint {
                position: f(p.position),
                normal: p.normal,
                screening: p.screening,
            })
            .collect();
        PointCloud::new(points)
    }
}

/// Uniform scale plus translation: `apply(p) = scale * p + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transform {
    pub scale: f64,
    pub translation: Vec3,
}

impl Transform {
    pub fn identity() -> Self {
        Transform {
            scale: 1.0,
            translation: Vec3::zeros(),
        }
    }

    pub fn apply(&self, p: Vec3) -> Vec3 {
        p * self.scale + self.translation
    }

    pub fn invert(&self) -> Transform {
        Transform {
            scale: 1.0 / self.scale,
            translation: -self.translation / self.scale,
        }
    }
}

/// Uniformly rescale the cloud into `[padding, 1 - padding]^3`.
///
/// Returns the normalized cloud and the transform mapping normalized
/// coordinates back to the input frame. Zero-extent clouds are translated to
/// the cube center without scaling.
pub fn normalize_to_unit_cube(cloud: &PointCloud, padding: f64) -> Result<(PointCloud, Transform)> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    assert!((0.0..0.5).contains(&padding), "padding must be in [0, 0.5)");
    let (lo, hi) = cloud.bbox();
    let extent = (hi - lo).max();
    let center = (lo + hi) * 0.5;
    let scale = if extent > 0.0 {
        (1.0 - 2.0 * padding) / extent
    } else {
        1.0
    };
    let cube_center = Vec3::new(0.5, 0.5, 0.5);
    let normalized = cloud.map_positions(|p| (p - center) * scale + cube_center)?;
    // inverse of p_norm = (p - center) * scale + cube_center
    let back = Transform {
        scale: 1.0 / scale,
        translation: center - cube_center / scale,
    };
    Ok((normalized, back))
}
