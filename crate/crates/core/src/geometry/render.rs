use super::mesh::{TriangleMesh, Vec3};
use super::GeometryError;

/// Depth value written where no surface is hit.
pub const BACKGROUND_DEPTH: f32 = 1.0;
pub const DEFAULT_DEPTH_SIZE: usize = 64;
pub const DEFAULT_ELEVATION_DEG: f64 = 20.0;

/// Orthographic camera placement around the vertical axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Viewpoint {
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
}

impl Viewpoint {
    pub fn new(azimuth_deg: f64, elevation_deg: f64) -> Self {
        Self {
            azimuth_deg,
            elevation_deg,
        }
    }

    /// World point to camera coordinates `(u, v, depth)`.
    ///
    /// At azimuth 0 and elevation 0 the camera looks along `+y` with `+x`
    /// to the right and `+z` up. The azimuth turns the object
    /// counter-clockwise about `z` in front of the camera, so rotating a
    /// mesh by `a` and viewing at azimuth 0 matches viewing at azimuth `a`.
    /// The elevation raises the camera, tilting its view downwards.
    fn camera_transform(&self) -> impl Fn(&Vec3) -> Vec3 {
        let (sa, ca) = self.azimuth_deg.to_radians().sin_cos();
        let (se, ce) = self.elevation_deg.to_radians().sin_cos();
        move |p: &Vec3| {
            let qx = ca * p.x - sa * p.y;
            let qy = sa * p.x + ca * p.y;
            let qz = p.z;
            Vec3::new(qx, qy * se + qz * ce, qy * ce - qz * se)
        }
    }
}

/// `n` viewpoints spaced `360 / n` degrees apart, starting at azimuth 0.
pub fn viewpoint_ring(n: usize, elevation_deg: f64) -> Result<Vec<Viewpoint>, GeometryError> {
    if n == 0 {
        return Err(GeometryError::Argument(
            "viewpoint ring needs at least one view".into(),
        ));
    }
    Ok((0..n)
        .map(|k| Viewpoint::new(k as f64 * 360.0 / n as f64, elevation_deg))
        .collect())
}

/// Normalised orthographic depth image, row-major with row 0 at the top.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl DepthMap {
    pub fn from_values(width: usize, height: usize, values: Vec<f32>) -> Result<Self, GeometryError> {
        if values.len() != width * height {
            return Err(GeometryError::Argument(format!(
                "{} depth values for a {width}x{height} map",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(GeometryError::Argument(format!(
                "depth value {v} outside [0, 1]"
            )));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.values[row * self.width + col]
    }
}

/// Renders a normalised mesh with orthographic rays.
///
/// The image covers the unit square perpendicular to the view direction.
/// Rays traverse the view volume `[-0.5, 0.5]` in camera depth, so a hit at
/// camera depth `d` maps to `d + 0.5` (clamped into `[0, 1]`); the nearest hit
/// wins and misses read [`BACKGROUND_DEPTH`].
pub fn render_depth(
    mesh: &TriangleMesh,
    view: &Viewpoint,
    size: usize,
) -> Result<DepthMap, GeometryError> {
    if size < 8 {
        return Err(GeometryError::Argument(format!(
            "depth map size must be >= 8, got {size}"
        )));
    }
    let project = view.camera_transform();
    let cam: Vec<Vec3> = mesh.vertices().iter().map(project).collect();
    let mut depth = vec![f64::INFINITY; size * size];
    let px = |u: f64| (u + 0.5) * size as f64 - 0.5;
    let py = |v: f64| (0.5 - v) * size as f64 - 0.5;

    for &[a, b, c] in mesh.triangles() {
        let (pa, pb, pc) = (cam[a], cam[b], cam[c]);
        let area = (pb.x - pa.x) * (pc.y - pa.y) - (pc.x - pa.x) * (pb.y - pa.y);
        if area.abs() < 1e-14 {
            // Edge-on in this projection; neighbouring faces cover its silhouette.
            continue;
        }
        let umin = pa.x.min(pb.x).min(pc.x);
        let umax = pa.x.max(pb.x).max(pc.x);
        let vmin = pa.y.min(pb.y).min(pc.y);
        let vmax = pa.y.max(pb.y).max(pc.y);
        let c0 = px(umin).ceil().max(0.0) as usize;
        let c1 = px(umax).floor().min(size as f64 - 1.0);
        let r0 = py(vmax).ceil().max(0.0) as usize;
        let r1 = py(vmin).floor().min(size as f64 - 1.0);
        if c1 < 0.0 || r1 < 0.0 {
            continue;
        }
        let tol = 1e-9;
        for row in r0..=r1 as usize {
            let v = 0.5 - (row as f64 + 0.5) / size as f64;
            for col in c0..=c1 as usize {
                let u = -0.5 + (col as f64 + 0.5) / size as f64;
                let w0 = ((pb.x - u) * (pc.y - v) - (pc.x - u) * (pb.y - v)) / area;
                let w1 = ((pc.x - u) * (pa.y - v) - (pa.x - u) * (pc.y - v)) / area;
                let w2 = 1.0 - w0 - w1;
                if w0 < -tol || w1 < -tol || w2 < -tol {
                    continue;
                }
                let d = w0 * pa.z + w1 * pb.z + w2 * pc.z;
                let slot = &mut depth[row * size + col];
                if d < *slot {
                    *slot = d;
                }
            }
        }
    }

    let values = depth
        .into_iter()
        .map(|d| {
            if d.is_finite() {
                (d + 0.5).clamp(0.0, 1.0) as f32
            } else {
                BACKGROUND_DEPTH
            }
        })
        .collect();
    Ok(DepthMap {
        width: size,
        height: size,
        values,
    })
}
