//! Dense point-sampling reference for the surface voxelizer.

use depthvox::geometry::{triangle_box_overlap, TriangleMesh, Vec3, VoxelGrid};

/// Samples per cell axis.
pub const SUBDIV: usize = 10;

/// Closest point on triangle `abc` to `p`.
pub fn closest_point(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

pub struct OracleResult {
    /// Cells holding a sample within `margin` of the surface.
    pub oracle: VoxelGrid,
    pub margin: f64,
}

fn cell_range(lo: f64, hi: f64, r: usize) -> (usize, usize) {
    let to = |v: f64| (((v + 0.5) * r as f64).floor().max(0.0) as usize).min(r - 1);
    (to(lo), to(hi))
}

/// Marks a cell when any of its `SUBDIV^3` sub-cell centres lies within half a
/// sub-cell diagonal of the surface. Every closed cell the surface touches is marked.
pub fn sample_oracle(mesh: &TriangleMesh, r: usize) -> OracleResult {
    let h = 1.0 / r as f64;
    let margin = 3f64.sqrt() / 2.0 * h / SUBDIV as f64;
    let tol = margin + 1e-12;
    let mut bins: Vec<Vec<usize>> = vec![Vec::new(); r * r * r];
    for t in 0..mesh.triangles().len() {
        let tri = mesh.triangle(t);
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        for ax in 0..3 {
            let mn = tri.iter().map(|v| v[ax]).fold(f64::INFINITY, f64::min) - tol;
            let mx = tri.iter().map(|v| v[ax]).fold(f64::NEG_INFINITY, f64::max) + tol;
            (lo[ax], hi[ax]) = cell_range(mn, mx, r);
        }
        for i in lo[0]..=hi[0] {
            for j in lo[1]..=hi[1] {
                for k in lo[2]..=hi[2] {
                    bins[(i * r + j) * r + k].push(t);
                }
            }
        }
    }
    let mut oracle = VoxelGrid::empty(r);
    for i in 0..r {
        for j in 0..r {
            for k in 0..r {
                let cands = &bins[(i * r + j) * r + k];
                if cands.is_empty() {
                    continue;
                }
                let tris: Vec<[Vec3; 3]> = cands.iter().map(|&t| mesh.triangle(t)).collect();
                let base = Vec3::new(i as f64, j as f64, k as f64) * h - Vec3::repeat(0.5);
                let sub = h / SUBDIV as f64;
                let hit = (0..SUBDIV.pow(3)).any(|s| {
                    let (a, b, c) = (s / (SUBDIV * SUBDIV), s / SUBDIV % SUBDIV, s % SUBDIV);
                    let p = base
                        + Vec3::new(a as f64 + 0.5, b as f64 + 0.5, c as f64 + 0.5) * sub;
                    tris.iter()
                        .any(|t| (closest_point(&p, &t[0], &t[1], &t[2]) - p).norm() <= tol)
                });
                oracle.set(i, j, k, hit);
            }
        }
    }
    OracleResult { oracle, margin }
}

pub struct Comparison {
    /// Voxelizer cells the oracle leaves empty.
    pub extra: usize,
    /// Oracle-only cells where the surface reaches the cell shrunk by the margin.
    pub interior_misses: usize,
    pub disagreements: usize,
    pub occupied: usize,
}

pub fn compare(mesh: &TriangleMesh, grid: &VoxelGrid) -> Comparison {
    let r = grid.resolution();
    let OracleResult { oracle, margin } = sample_oracle(mesh, r);
    let h = 1.0 / r as f64;
    let shrunk = Vec3::repeat(h / 2.0 - margin);
    let mut cmp = Comparison {
        extra: 0,
        interior_misses: 0,
        disagreements: 0,
        occupied: grid.occupied_count(),
    };
    for i in 0..r {
        for j in 0..r {
            for k in 0..r {
                let (v, o) = (grid.get(i, j, k), oracle.get(i, j, k));
                if v && !o {
                    cmp.extra += 1;
                }
                if o && !v {
                    cmp.disagreements += 1;
                    let center =
                        Vec3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5) * h
                            - Vec3::repeat(0.5);
                    let touches = (0..mesh.triangles().len())
                        .any(|t| triangle_box_overlap(&mesh.triangle(t), &center, &shrunk));
                    if touches {
                        cmp.interior_misses += 1;
                    }
                }
            }
        }
    }
    cmp
}
