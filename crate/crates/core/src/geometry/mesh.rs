use std::io::{BufRead, BufReader, Read};

use nalgebra::Vector3;

use super::GeometryError;

pub type Vec3 = Vector3<f64>;

/// Longest bounding-box side after [`normalize_mesh`].
pub const NORMALIZED_EXTENT: f64 = 0.9;

#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Vec3>,
    triangles: Vec<[usize; 3]>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> Result<Self, GeometryError> {
        if triangles.is_empty() {
            return Err(GeometryError::Degenerate("mesh has no triangles".into()));
        }
        if let Some(v) = vertices.iter().find(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(GeometryError::Degenerate(format!(
                "non-finite vertex coordinate {v:?}"
            )));
        }
        for (face, tri) in triangles.iter().enumerate() {
            if let Some(&index) = tri.iter().find(|&&i| i >= vertices.len()) {
                return Err(GeometryError::Index {
                    face,
                    index,
                    vertex_count: vertices.len(),
                });
            }
        }
        Ok(Self {
            vertices,
            triangles,
        })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn triangle(&self, idx: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[idx];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Axis-aligned bounding box as `(min, max)`.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for v in &self.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        (lo, hi)
    }

    /// Concatenates meshes without welding shared vertices.
    pub fn merge(parts: &[TriangleMesh]) -> Result<Self, GeometryError> {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        for p in parts {
            let off = vertices.len();
            vertices.extend_from_slice(&p.vertices);
            triangles.extend(p.triangles.iter().map(|t| t.map(|i| i + off)));
        }
        Self::new(vertices, triangles)
    }

    pub fn transformed(&self, f: impl Fn(&Vec3) -> Vec3) -> Self {
        Self {
            vertices: self.vertices.iter().map(f).collect(),
            triangles: self.triangles.clone(),
        }
    }

    /// Counter-clockwise rotation about the vertical (`z`) axis.
    pub fn rotated_about_z(&self, degrees: f64) -> Self {
        let (s, c) = degrees.to_radians().sin_cos();
        self.transformed(|v| Vec3::new(c * v.x - s * v.y, s * v.x + c * v.y, v.z))
    }
}

/// Centres the bounding box at the origin and scales its longest side to
/// [`NORMALIZED_EXTENT`], preserving aspect ratio.
pub fn normalize_mesh(mesh: &TriangleMesh) -> Result<TriangleMesh, GeometryError> {
    let (lo, hi) = mesh.bounds();
    let extent = (hi - lo).max();
    if extent <= 0.0 || !extent.is_finite() {
        return Err(GeometryError::Degenerate(
            "bounding box has zero extent".into(),
        ));
    }
    let center = (lo + hi) * 0.5;
    let scale = NORMALIZED_EXTENT / extent;
    Ok(mesh.transformed(|v| (v - center) * scale))
}

struct Lines<R> {
    inner: R,
    line_no: usize,
    buf: String,
}

impl<R: BufRead> Lines<R> {
    /// Next non-blank line with comments stripped, as owned tokens.
    fn next_tokens(&mut self) -> Result<Option<Vec<String>>, GeometryError> {
        loop {
            self.buf.clear();
            let n = self
                .inner
                .read_line(&mut self.buf)
                .map_err(|e| GeometryError::Format {
                    line: self.line_no + 1,
                    message: e.to_string(),
                })?;
            if n == 0 {
                return Ok(None);
            }
            self.line_no += 1;
            let content = self.buf.split('#').next().unwrap_or("");
            let tokens: Vec<String> = content.split_whitespace().map(str::to_owned).collect();
            if !tokens.is_empty() {
                return Ok(Some(tokens));
            }
        }
    }

    fn err(&self, message: impl Into<String>) -> GeometryError {
        GeometryError::Format {
            line: self.line_no,
            message: message.into(),
        }
    }
}

fn parse_num<T: std::str::FromStr>(
    lines: &Lines<impl BufRead>,
    tok: &str,
    what: &str,
) -> Result<T, GeometryError> {
    tok.parse()
        .map_err(|_| lines.err(format!("cannot parse {what} from `{tok}`")))
}

/// Parses an OFF mesh. Polygons with more than three corners are
/// fan-triangulated from their first corner.
///
/// Headers where the counts follow the magic on the same line
/// (`OFF8 6 0`, as found in parts of ModelNet) are accepted.
pub fn load_off(reader: impl Read) -> Result<TriangleMesh, GeometryError> {
    let mut lines = Lines {
        inner: BufReader::new(reader),
        line_no: 0,
        buf: String::new(),
    };
    let first = lines
        .next_tokens()?
        .ok_or_else(|| lines.err("empty input, missing OFF magic"))?;
    let Some(rest) = first[0].strip_prefix("OFF") else {
        return Err(lines.err(format!("bad magic `{}`, expected OFF", first[0])));
    };
    let mut counts: Vec<String> = Vec::new();
    if !rest.is_empty() {
        counts.push(rest.to_owned());
    }
    counts.extend(first[1..].iter().cloned());
    if counts.is_empty() {
        counts = lines
            .next_tokens()?
            .ok_or_else(|| lines.err("missing vertex/face counts"))?;
    }
    if counts.len() < 2 {
        return Err(lines.err("counts line needs at least V and F"));
    }
    let nv: usize = parse_num(&lines, &counts[0], "vertex count")?;
    let nf: usize = parse_num(&lines, &counts[1], "face count")?;

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let Some(tok) = lines.next_tokens()? else {
            return Err(GeometryError::Truncation {
                what: "vertices",
                expected: nv,
                found: vertices.len(),
            });
        };
        if tok.len() < 3 {
            return Err(lines.err("vertex line needs three coordinates"));
        }
        let x: f64 = parse_num(&lines, &tok[0], "coordinate")?;
        let y: f64 = parse_num(&lines, &tok[1], "coordinate")?;
        let z: f64 = parse_num(&lines, &tok[2], "coordinate")?;
        vertices.push(Vec3::new(x, y, z));
    }

    let mut triangles = Vec::with_capacity(nf);
    for face in 0..nf {
        let Some(tok) = lines.next_tokens()? else {
            return Err(GeometryError::Truncation {
                what: "faces",
                expected: nf,
                found: face,
            });
        };
        let k: usize = parse_num(&lines, &tok[0], "polygon size")?;
        if k < 3 {
            return Err(lines.err(format!("polygon with {k} corners")));
        }
        if tok.len() < k + 1 {
            return Err(lines.err(format!("face declares {k} corners but lists {}", tok.len() - 1)));
        }
        let idx = tok[1..=k]
            .iter()
            .map(|t| parse_num::<usize>(&lines, t, "vertex index"))
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(&index) = idx.iter().find(|&&i| i >= nv) {
            return Err(GeometryError::Index {
                face,
                index,
                vertex_count: nv,
            });
        }
        for w in 1..k - 1 {
            triangles.push([idx[0], idx[w], idx[w + 1]]);
        }
    }
    TriangleMesh::new(vertices, triangles)
}
