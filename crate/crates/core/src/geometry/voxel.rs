use super::mesh::{TriangleMesh, Vec3};
use super::GeometryError;

/// The voxel domain is `[-DOMAIN_HALF_EXTENT, DOMAIN_HALF_EXTENT]^3`.
pub const DOMAIN_HALF_EXTENT: f64 = 0.5;

/// Upper cell faces are pulled in by this much so that a surface lying
/// exactly on a shared face belongs to the upper cell only.
const HALF_OPEN_EPS: f64 = 1e-9;

/// Binary occupancy over the voxel domain. Entry `(i, j, k)` lives at flat
/// index `(i * R + j) * R + k`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct VoxelGrid {
    resolution: usize,
    occupancy: Vec<bool>,
}

impl VoxelGrid {
    pub fn empty(resolution: usize) -> Self {
        Self {
            resolution,
            occupancy: vec![false; resolution.pow(3)],
        }
    }

    pub fn from_occupancy(resolution: usize, occupancy: Vec<bool>) -> Result<Self, GeometryError> {
        if occupancy.len() != resolution.pow(3) {
            return Err(GeometryError::Argument(format!(
                "{} entries for resolution {resolution}",
                occupancy.len()
            )));
        }
        Ok(Self {
            resolution,
            occupancy,
        })
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.resolution + j) * self.resolution + k
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> bool {
        self.occupancy[self.index(i, j, k)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, value: bool) {
        let idx = self.index(i, j, k);
        self.occupancy[idx] = value;
    }

    pub fn occupancy(&self) -> &[bool] {
        &self.occupancy
    }

    pub fn len(&self) -> usize {
        self.occupancy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occupancy.is_empty()
    }

    pub fn occupied_count(&self) -> usize {
        self.occupancy.iter().filter(|&&o| o).count()
    }

    /// Occupancy as 0/1 values, in flat index order.
    pub fn to_values<T: From<u8>>(&self) -> Vec<T> {
        self.occupancy.iter().map(|&o| T::from(o as u8)).collect()
    }

    /// Closed bounds of cell `idx` along one axis.
    pub fn cell_bounds(&self, idx: usize) -> (f64, f64) {
        let r = self.resolution as f64;
        (
            -DOMAIN_HALF_EXTENT + idx as f64 / r,
            -DOMAIN_HALF_EXTENT + (idx + 1) as f64 / r,
        )
    }
}

#[inline]
fn axis_test(a: f64, b: f64, pa: (f64, f64), pb: (f64, f64), pc: (f64, f64), r: f64) -> bool {
    // Projects the three vertices onto the axis (a, b) in the plane given by
    // the coordinate pairs and checks the interval against the box radius.
    let p0 = a * pa.0 + b * pa.1;
    let p1 = a * pb.0 + b * pb.1;
    let p2 = a * pc.0 + b * pc.1;
    let min = p0.min(p1).min(p2);
    let max = p0.max(p1).max(p2);
    !(min > r || max < -r)
}

/// Separating-axis test between a triangle and the closed box
/// `center ± half`. Touching counts as overlap.
pub fn triangle_box_overlap(tri: &[Vec3; 3], center: &Vec3, half: &Vec3) -> bool {
    let v0 = tri[0] - center;
    let v1 = tri[1] - center;
    let v2 = tri[2] - center;

    // Box face normals.
    for ax in 0..3 {
        let min = v0[ax].min(v1[ax]).min(v2[ax]);
        let max = v0[ax].max(v1[ax]).max(v2[ax]);
        if min > half[ax] || max < -half[ax] {
            return false;
        }
    }

    // Edge cross products.
    let edges = [v1 - v0, v2 - v1, v0 - v2];
    for e in &edges {
        let (fx, fy, fz) = (e.x.abs(), e.y.abs(), e.z.abs());
        // e x X
        if !axis_test(
            e.z,
            -e.y,
            (v0.y, v0.z),
            (v1.y, v1.z),
            (v2.y, v2.z),
            fz * half.y + fy * half.z,
        ) {
            return false;
        }
        // e x Y
        if !axis_test(
            -e.z,
            e.x,
            (v0.x, v0.z),
            (v1.x, v1.z),
            (v2.x, v2.z),
            fz * half.x + fx * half.z,
        ) {
            return false;
        }
        // e x Z
        if !axis_test(
            e.y,
            -e.x,
            (v0.x, v0.y),
            (v1.x, v1.y),
            (v2.x, v2.y),
            fy * half.x + fx * half.y,
        ) {
            return false;
        }
    }

    // Triangle plane.
    let normal = edges[0].cross(&edges[1]);
    let d = normal.dot(&v0);
    let r = half.x * normal.x.abs() + half.y * normal.y.abs() + half.z * normal.z.abs();
    d.abs() <= r
}

fn cell_range(lo: f64, hi: f64, r: usize) -> (usize, usize) {
    let to_cell = |v: f64| {
        let c = ((v + DOMAIN_HALF_EXTENT) * r as f64).floor();
        c.clamp(0.0, (r - 1) as f64) as usize
    };
    (to_cell(lo), to_cell(hi))
}

/// Surface voxelisation: a cell is occupied iff some triangle meets it.
///
/// Cells are half-open `[lo, hi)` per axis, except the last one which is
/// closed, so the domain is partitioned exactly.
pub fn voxelize(mesh: &TriangleMesh, resolution: usize) -> Result<VoxelGrid, GeometryError> {
    if resolution < 2 {
        return Err(GeometryError::Argument(format!(
            "resolution must be >= 2, got {resolution}"
        )));
    }
    let (lo, hi) = mesh.bounds();
    let tol = 1e-9;
    if (0..3).any(|a| lo[a] < -DOMAIN_HALF_EXTENT - tol || hi[a] > DOMAIN_HALF_EXTENT + tol) {
        return Err(GeometryError::Domain(format!(
            "bounding box {:?}..{:?} exceeds [-0.5, 0.5]^3",
            lo.as_slice(),
            hi.as_slice()
        )));
    }
    let mut grid = VoxelGrid::empty(resolution);
    let bounds: Vec<(f64, f64)> = (0..resolution).map(|i| grid.cell_bounds(i)).collect();
    let last = resolution - 1;
    for t in 0..mesh.triangles().len() {
        let tri = mesh.triangle(t);
        let tmin = tri[0].inf(&tri[1]).inf(&tri[2]);
        let tmax = tri[0].sup(&tri[1]).sup(&tri[2]);
        let (i0, i1) = cell_range(tmin.x, tmax.x, resolution);
        let (j0, j1) = cell_range(tmin.y, tmax.y, resolution);
        let (k0, k1) = cell_range(tmin.z, tmax.z, resolution);
        for i in i0..=i1 {
            for j in j0..=j1 {
                for k in k0..=k1 {
                    let idx = grid.index(i, j, k);
                    if grid.occupancy[idx] {
                        continue;
                    }
                    let upper = |c: usize, hi: f64| if c == last { hi } else { hi - HALF_OPEN_EPS };
                    let (xl, xh) = (bounds[i].0, upper(i, bounds[i].1));
                    let (yl, yh) = (bounds[j].0, upper(j, bounds[j].1));
                    let (zl, zh) = (bounds[k].0, upper(k, bounds[k].1));
                    let center = Vec3::new((xl + xh) * 0.5, (yl + yh) * 0.5, (zl + zh) * 0.5);
                    let half = Vec3::new((xh - xl) * 0.5, (yh - yl) * 0.5, (zh - zl) * 0.5);
                    if triangle_box_overlap(&tri, &center, &half) {
                        grid.occupancy[idx] = true;
                    }
                }
            }
        }
    }
    Ok(grid)
}
