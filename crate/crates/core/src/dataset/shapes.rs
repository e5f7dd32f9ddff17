//! Procedural stand-ins for CAD model classes.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::DatasetError;
use crate::geometry::{TriangleMesh, Vec3};

/// Recipes built as unions of 2 to 4 placed primitives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CompositeKind {
    /// 2-4 primitives of random kind at random offsets.
    Random,
    Table,
    Lamp,
    Dumbbell,
    Snowman,
    Arch,
    Mushroom,
    Chair,
    Bathtub,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ShapeKind {
    Box,
    Icosphere,
    Cylinder,
    Composite(CompositeKind),
}

impl ShapeKind {
    /// Every kind, in class-id order.
    pub const ALL: [ShapeKind; 12] = [
        ShapeKind::Box,
        ShapeKind::Icosphere,
        ShapeKind::Cylinder,
        ShapeKind::Composite(CompositeKind::Random),
        ShapeKind::Composite(CompositeKind::Table),
        ShapeKind::Composite(CompositeKind::Lamp),
        ShapeKind::Composite(CompositeKind::Dumbbell),
        ShapeKind::Composite(CompositeKind::Snowman),
        ShapeKind::Composite(CompositeKind::Arch),
        ShapeKind::Composite(CompositeKind::Mushroom),
        ShapeKind::Composite(CompositeKind::Chair),
        ShapeKind::Composite(CompositeKind::Bathtub),
    ];

    pub fn class_id(self) -> u16 {
        Self::ALL.iter().position(|&k| k == self).expect("listed") as u16
    }

    pub fn from_class_id(id: u16) -> Option<Self> {
        Self::ALL.get(id as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::Box => "box",
            ShapeKind::Icosphere => "icosphere",
            ShapeKind::Cylinder => "cylinder",
            ShapeKind::Composite(c) => match c {
                CompositeKind::Random => "composite",
                CompositeKind::Table => "table",
                CompositeKind::Lamp => "lamp",
                CompositeKind::Dumbbell => "dumbbell",
                CompositeKind::Snowman => "snowman",
                CompositeKind::Arch => "arch",
                CompositeKind::Mushroom => "mushroom",
                CompositeKind::Chair => "chair",
                CompositeKind::Bathtub => "bathtub",
            },
        }
    }

    pub fn is_composite(self) -> bool {
        matches!(self, ShapeKind::Composite(_))
    }
}

impl fmt::Display for ShapeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ShapeKind {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| DatasetError::Argument(format!("unknown shape kind `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrimitiveParams {
    /// Icosphere subdivision level, at most 4.
    pub subdivision: u32,
    /// Segments around a cylinder, at least 3.
    pub segments: usize,
    /// Smallest relative side length drawn for boxes and radii, in `(0, 1]`.
    pub min_extent: f64,
}

impl Default for PrimitiveParams {
    fn default() -> Self {
        Self {
            subdivision: 2,
            segments: 16,
            min_extent: 0.3,
        }
    }
}

impl PrimitiveParams {
    fn validate(&self) -> Result<(), DatasetError> {
        if self.subdivision > 4 {
            return Err(DatasetError::Argument(format!(
                "subdivision {} exceeds 4",
                self.subdivision
            )));
        }
        if self.segments < 3 {
            return Err(DatasetError::Argument(format!(
                "cylinder needs >= 3 segments, got {}",
                self.segments
            )));
        }
        if !(self.min_extent > 0.0 && self.min_extent <= 1.0) {
            return Err(DatasetError::Argument(format!(
                "min_extent must lie in (0, 1], got {}",
                self.min_extent
            )));
        }
        Ok(())
    }
}

/// Axis-aligned box centred at `c` with side lengths `e`.
fn cuboid(c: Vec3, e: Vec3) -> TriangleMesh {
    let h = e * 0.5;
    let v: Vec<Vec3> = (0..8)
        .map(|i| {
            Vec3::new(
                if i & 1 == 0 { -h.x } else { h.x },
                if i & 2 == 0 { -h.y } else { h.y },
                if i & 4 == 0 { -h.z } else { h.z },
            ) + c
        })
        .collect();
    let quads = [
        [0, 2, 3, 1],
        [4, 5, 7, 6],
        [0, 1, 5, 4],
        [2, 6, 7, 3],
        [0, 4, 6, 2],
        [1, 3, 7, 5],
    ];
    let tris = quads
        .iter()
        .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
        .collect();
    TriangleMesh::new(v, tris).expect("static topology")
}

/// Unit-diameter icosphere scaled per axis by `s` and moved to `c`.
fn ellipsoid(c: Vec3, s: Vec3, subdivision: u32) -> TriangleMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vec3> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .iter()
    .map(|p| Vec3::from(*p).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivision {
        let mut cache: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<Vec3>| {
            let key = (a.min(b), a.max(b));
            *cache.entry(key).or_insert_with(|| {
                verts.push(((verts[a] + verts[b]) * 0.5).normalize());
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for &[a, b, c] in &faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let verts = verts
        .into_iter()
        .map(|p| c + p.component_mul(&s) * 0.5)
        .collect();
    TriangleMesh::new(verts, faces).expect("static topology")
}

/// Closed cylinder along `z`, centred at `c`, with capped ends.
fn cylinder(c: Vec3, radius: f64, height: f64, segments: usize) -> TriangleMesh {
    let mut verts = Vec::with_capacity(2 * segments + 2);
    for z in [-0.5 * height, 0.5 * height] {
        for s in 0..segments {
            let a = s as f64 * std::f64::consts::TAU / segments as f64;
            verts.push(c + Vec3::new(radius * a.cos(), radius * a.sin(), z));
        }
    }
    let bottom = verts.len();
    verts.push(c - Vec3::z() * 0.5 * height);
    let top = verts.len();
    verts.push(c + Vec3::z() * 0.5 * height);
    let mut tris = Vec::with_capacity(4 * segments);
    for s in 0..segments {
        let n = (s + 1) % segments;
        tris.push([s, n, segments + n]);
        tris.push([s, segments + n, segments + s]);
        tris.push([bottom, n, s]);
        tris.push([top, segments + s, segments + n]);
    }
    TriangleMesh::new(verts, tris).expect("static topology")
}

fn rand_vec(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Vec3 {
    Vec3::new(
        rng.gen_range(lo..=hi),
        rng.gen_range(lo..=hi),
        rng.gen_range(lo..=hi),
    )
}

fn composite(kind: CompositeKind, p: &PrimitiveParams, rng: &mut ChaCha8Rng) -> TriangleMesh {
    let j = |rng: &mut ChaCha8Rng, base: f64| base * rng.gen_range(0.8..=1.2);
    let sub = p.subdivision;
    let seg = p.segments;
    let parts: Vec<TriangleMesh> = match kind {
        CompositeKind::Random => {
            let n = rng.gen_range(2..=4);
            (0..n)
                .map(|_| {
                    let c = rand_vec(rng, -0.35, 0.35);
                    match rng.gen_range(0..3) {
                        0 => cuboid(c, rand_vec(rng, 0.15, 0.5)),
                        1 => ellipsoid(c, rand_vec(rng, 0.15, 0.5), sub),
                        _ => cylinder(c, rng.gen_range(0.07..=0.25), rng.gen_range(0.15..=0.6), seg),
                    }
                })
                .collect()
        }
        CompositeKind::Table => {
            let w = j(rng, 1.0);
            let d = j(rng, 0.6);
            let h = j(rng, 0.6);
            let t = 0.08;
            vec![
                cuboid(Vec3::new(0.0, 0.0, h), Vec3::new(w, d, t)),
                cuboid(Vec3::new(-0.42 * w, 0.0, h / 2.0), Vec3::new(t, 0.9 * d, h)),
                cuboid(Vec3::new(0.42 * w, 0.0, h / 2.0), Vec3::new(t, 0.9 * d, h)),
            ]
        }
        CompositeKind::Lamp => {
            let h = j(rng, 1.0);
            let shade = j(rng, 0.45);
            vec![
                cylinder(Vec3::new(0.0, 0.0, 0.03), j(rng, 0.25), 0.06, seg),
                cylinder(Vec3::new(0.0, 0.0, h / 2.0), 0.03, h, seg),
                cylinder(Vec3::new(0.0, 0.0, h), shade / 2.0, j(rng, 0.3), seg),
            ]
        }
        CompositeKind::Dumbbell => {
            let len = j(rng, 1.0);
            let r = j(rng, 0.35);
            let bar = cylinder(Vec3::zeros(), 0.05, len, seg)
                .transformed(|v| Vec3::new(v.z, v.y, v.x));
            vec![
                bar,
                ellipsoid(Vec3::new(-len / 2.0, 0.0, 0.0), Vec3::repeat(r), sub),
                ellipsoid(Vec3::new(len / 2.0, 0.0, 0.0), Vec3::repeat(j(rng, 0.35)), sub),
            ]
        }
        CompositeKind::Snowman => {
            let n = rng.gen_range(2..=3);
            let mut z = 0.0;
            let mut r = j(rng, 0.6);
            let mut parts = Vec::new();
            for _ in 0..n {
                z += r / 2.0;
                parts.push(ellipsoid(Vec3::new(0.0, 0.0, z), Vec3::repeat(r), sub));
                z += r / 2.0 * 0.8;
                r *= rng.gen_range(0.6..=0.8);
            }
            parts
        }
        CompositeKind::Arch => {
            let w = j(rng, 1.0);
            let h = j(rng, 0.8);
            let t = j(rng, 0.18);
            let d = j(rng, 0.3);
            vec![
                cuboid(Vec3::new(-(w - t) / 2.0, 0.0, h / 2.0), Vec3::new(t, d, h)),
                cuboid(Vec3::new((w - t) / 2.0, 0.0, h / 2.0), Vec3::new(t, d, h)),
                cuboid(Vec3::new(0.0, 0.0, h + t / 2.0), Vec3::new(w, d, t)),
            ]
        }
        CompositeKind::Mushroom => {
            let h = j(rng, 0.6);
            let cap = j(rng, 0.9);
            vec![
                cylinder(Vec3::new(0.0, 0.0, h / 2.0), j(rng, 0.12), h, seg),
                ellipsoid(Vec3::new(0.0, 0.0, h), Vec3::new(cap, cap, cap * 0.45), sub),
            ]
        }
        CompositeKind::Chair => {
            let w = j(rng, 0.6);
            let seat = j(rng, 0.5);
            let back = j(rng, 0.6);
            let t = 0.07;
            vec![
                cuboid(Vec3::new(0.0, 0.0, seat), Vec3::new(w, w, t)),
                cuboid(Vec3::new(0.0, w / 2.0, seat + back / 2.0), Vec3::new(w, t, back)),
                cuboid(Vec3::new(-0.45 * w, 0.0, seat / 2.0), Vec3::new(t, w, seat)),
                cuboid(Vec3::new(0.45 * w, 0.0, seat / 2.0), Vec3::new(t, w, seat)),
            ]
        }
        CompositeKind::Bathtub => {
            let l = j(rng, 1.0);
            let w = j(rng, 0.5);
            let h = j(rng, 0.35);
            let t = 0.06;
            vec![
                cuboid(Vec3::new(0.0, 0.0, t / 2.0), Vec3::new(l, w, t)),
                cuboid(Vec3::new(0.0, -w / 2.0, h / 2.0), Vec3::new(l, t, h)),
                cuboid(Vec3::new(0.0, w / 2.0, h / 2.0), Vec3::new(l, t, h)),
                cuboid(Vec3::new(-l / 2.0, 0.0, h / 2.0), Vec3::new(t, w, h)),
            ]
        }
    };
    TriangleMesh::merge(&parts).expect("non-empty parts")
}

/// Deterministic mesh for `(kind, params, seed)`, in model units (not yet
/// normalised). The seed draws proportions and a yaw about the vertical axis.
pub fn gen_primitive(
    kind: ShapeKind,
    params: &PrimitiveParams,
    seed: u64,
) -> Result<TriangleMesh, DatasetError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lo = params.min_extent;
    let mesh = match kind {
        ShapeKind::Box => cuboid(Vec3::zeros(), rand_vec(&mut rng, lo, 1.0)),
        ShapeKind::Icosphere => ellipsoid(Vec3::zeros(), rand_vec(&mut rng, lo, 1.0), params.subdivision),
        ShapeKind::Cylinder => {
            let r = rng.gen_range(lo..=1.0) * 0.5;
            let h = rng.gen_range(lo..=1.0);
            cylinder(Vec3::zeros(), r, h, params.segments)
        }
        ShapeKind::Composite(c) => composite(c, params, &mut rng),
    };
    let yaw = rng.gen_range(0.0..90.0);
    Ok(mesh.rotated_about_z(yaw))
}

/// A mesh with its class label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMesh {
    pub mesh: TriangleMesh,
    pub class_id: u16,
}

/// `per_class` meshes of each kind, ordered kind-major. Per-mesh seeds are
/// drawn from one generator seeded with `seed`.
pub fn generate_shapes(
    kinds: &[ShapeKind],
    per_class: usize,
    params: &PrimitiveParams,
    seed: u64,
) -> Result<Vec<LabeledMesh>, DatasetError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(kinds.len() * per_class);
    for &kind in kinds {
        for _ in 0..per_class {
            let s: u64 = rng.gen();
            out.push(LabeledMesh {
                mesh: gen_primitive(kind, params, s)?,
                class_id: kind.class_id(),
            });
        }
    }
    Ok(out)
}
