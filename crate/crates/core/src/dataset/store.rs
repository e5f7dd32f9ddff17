use std::io::{Read, Write};
use std::path::Path;

use super::shapes::LabeledMesh;
use super::DatasetError;
use crate::codec::{partition, FULL_RESOLUTION};
use crate::geometry::{
    normalize_mesh, render_depth, viewpoint_ring, voxelize, DepthMap, VoxelGrid,
    DEFAULT_DEPTH_SIZE, DEFAULT_ELEVATION_DEG,
};

pub const STORE_MAGIC: &[u8; 4] = b"VOXC";
pub const STORE_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub depth: DepthMap,
    pub target: VoxelGrid,
    pub class_id: u16,
    pub view_index: u16,
}

/// An ordered, immutable set of samples sharing one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleStore {
    pub resolution: usize,
    pub depth_width: usize,
    pub depth_height: usize,
    pub n_views: usize,
    pub n_classes: usize,
    pub flags: u16,
    pub seed: u64,
    pub records: Vec<Sample>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildConfig {
    pub n_views: usize,
    pub resolution: usize,
    pub depth_size: usize,
    pub elevation_deg: f64,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            n_views: 8,
            resolution: FULL_RESOLUTION,
            depth_size: DEFAULT_DEPTH_SIZE,
            elevation_deg: DEFAULT_ELEVATION_DEG,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BuildReport {
    /// Meshes dropped because they could not be normalised or voxelised to
    /// a grid that is neither empty nor full.
    pub skipped: usize,
}

/// Normalises, voxelises once and renders every viewpoint of every mesh.
/// Records are ordered by mesh, then view.
pub fn build_dataset(
    meshes: &[LabeledMesh],
    config: &BuildConfig,
    seed: u64,
) -> Result<(SampleStore, BuildReport), DatasetError> {
    if meshes.is_empty() {
        return Err(DatasetError::Argument("empty mesh list".into()));
    }
    if config.n_views == 0 || config.n_views > u16::MAX as usize {
        return Err(DatasetError::Argument(format!(
            "n_views must lie in 1..=65535, got {}",
            config.n_views
        )));
    }
    let views = viewpoint_ring(config.n_views, config.elevation_deg)?;
    let mut report = BuildReport::default();
    let mut records = Vec::with_capacity(meshes.len() * config.n_views);
    let full = config.resolution.pow(3);
    for m in meshes {
        let Ok(norm) = normalize_mesh(&m.mesh) else {
            report.skipped += 1;
            continue;
        };
        let target = voxelize(&norm, config.resolution)?;
        let occupied = target.occupied_count();
        if occupied == 0 || occupied == full {
            report.skipped += 1;
            continue;
        }
        for (vi, view) in views.iter().enumerate() {
            records.push(Sample {
                depth: render_depth(&norm, view, config.depth_size)?,
                target: target.clone(),
                class_id: m.class_id,
                view_index: vi as u16,
            });
        }
    }
    let n_classes = meshes.iter().map(|m| m.class_id as usize + 1).max().unwrap_or(0);
    Ok((
        SampleStore {
            resolution: config.resolution,
            depth_width: config.depth_size,
            depth_height: config.depth_size,
            n_views: config.n_views,
            n_classes,
            flags: 0,
            seed,
            records,
        },
        report,
    ))
}

/// 10^3 blocks cut from every target of a 30^3 store, in partition order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubregionStore {
    pub blocks: Vec<VoxelGrid>,
}

impl SubregionStore {
    /// All blocks flattened into one `[n, 1000]` buffer of 0/1 values.
    pub fn values(&self) -> Vec<f32> {
        self.blocks.iter().flat_map(|b| b.to_values::<f32>()).collect()
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }
}

pub fn build_subregion_store(store: &SampleStore) -> Result<SubregionStore, DatasetError> {
    if store.resolution != FULL_RESOLUTION {
        return Err(DatasetError::Resolution {
            expected: FULL_RESOLUTION,
            found: store.resolution,
        });
    }
    let mut blocks = Vec::with_capacity(27 * store.records.len());
    for r in &store.records {
        blocks.extend(partition(&r.target)?.into_blocks());
    }
    Ok(SubregionStore { blocks })
}

/// Moves every record of `holdout_class` into the test store, preserving order.
pub fn split_holdout(
    store: &SampleStore,
    holdout_class: u16,
) -> Result<(SampleStore, SampleStore), DatasetError> {
    if !store.records.iter().any(|r| r.class_id == holdout_class) {
        return Err(DatasetError::Argument(format!(
            "class {holdout_class} has no samples in this store"
        )));
    }
    let (test, train): (Vec<Sample>, Vec<Sample>) = store
        .records
        .iter()
        .cloned()
        .partition(|r| r.class_id == holdout_class);
    let with = |records| SampleStore {
        records,
        ..store.clone_header()
    };
    Ok((with(train), with(test)))
}

impl SampleStore {
    fn clone_header(&self) -> SampleStore {
        SampleStore {
            resolution: self.resolution,
            depth_width: self.depth_width,
            depth_height: self.depth_height,
            n_views: self.n_views,
            n_classes: self.n_classes,
            flags: self.flags,
            seed: self.seed,
            records: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Serialises to the little-endian `.voxc` layout.
    pub fn to_bytes(&self) -> Vec<u8> {
        let voxels = self.resolution.pow(3);
        let depth_len = self.depth_width * self.depth_height;
        let mut out = Vec::with_capacity(
            44 + self.records.len() * (4 + 4 * depth_len + voxels.div_ceil(8)),
        );
        out.extend_from_slice(STORE_MAGIC);
        out.extend_from_slice(&STORE_VERSION.to_le_bytes());
        out.extend_from_slice(&self.flags.to_le_bytes());
        for v in [
            self.resolution,
            self.depth_width,
            self.depth_height,
            self.n_views,
            self.n_classes,
        ] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.extend_from_slice(&(self.records.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        for r in &self.records {
            out.extend_from_slice(&r.class_id.to_le_bytes());
            out.extend_from_slice(&r.view_index.to_le_bytes());
            for v in r.depth.values() {
                out.extend_from_slice(&v.to_le_bytes());
            }
            let mut packed = vec![0u8; voxels.div_ceil(8)];
            for (i, &o) in r.target.occupancy().iter().enumerate() {
                if o {
                    packed[i / 8] |= 1 << (i % 8);
                }
            }
            out.extend_from_slice(&packed);
        }
        out
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<(), DatasetError> {
        w.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DatasetError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DatasetError> {
        let mut c = Cursor { bytes, pos: 0 };
        if c.take(4, "magic")? != STORE_MAGIC {
            return Err(DatasetError::Format {
                offset: 0,
                message: "bad magic, expected VOXC".into(),
            });
        }
        let version = c.u16("version")?;
        if version != STORE_VERSION {
            return Err(DatasetError::Version {
                offset: 4,
                found: version,
            });
        }
        let flags = c.u16("flags")?;
        let resolution = c.u32("resolution")? as usize;
        let depth_width = c.u32("depth width")? as usize;
        let depth_height = c.u32("depth height")? as usize;
        let n_views = c.u32("view count")? as usize;
        let n_classes = c.u32("class count")? as usize;
        let n_records = c.u64("record count")?;
        let seed = c.u64("seed")?;
        if resolution == 0 || depth_width == 0 || depth_height == 0 || n_views == 0 {
            return Err(c.err_at(8, "zero-sized header field"));
        }
        let voxels = resolution
            .checked_pow(3)
            .ok_or_else(|| c.err_at(8, "resolution overflows"))?;
        let depth_len = depth_width * depth_height;
        let record_len = 4 + 4 * depth_len as u64 + voxels.div_ceil(8) as u64;
        let remaining = (bytes.len() - c.pos) as u64;
        if n_records.saturating_mul(record_len) > remaining {
            return Err(DatasetError::Format {
                offset: bytes.len() as u64,
                message: format!(
                    "truncated: header announces {n_records} records of {record_len} bytes, {remaining} bytes follow"
                ),
            });
        }
        let mut records = Vec::with_capacity(n_records as usize);
        for _ in 0..n_records {
            let start = c.pos as u64;
            let class_id = c.u16("class id")?;
            let view_index = c.u16("view index")?;
            if (view_index as usize) >= n_views {
                return Err(c.err_at(start + 2, format!("view index {view_index} >= {n_views}")));
            }
            if (class_id as usize) >= n_classes {
                return Err(c.err_at(start, format!("class id {class_id} >= {n_classes}")));
            }
            let raw = c.take(4 * depth_len, "depth map")?;
            let values: Vec<f32> = raw
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            let depth = DepthMap::from_values(depth_width, depth_height, values)
                .map_err(|e| c.err_at(start + 4, e.to_string()))?;
            let packed = c.take(voxels.div_ceil(8), "occupancy")?;
            let occ = (0..voxels).map(|i| packed[i / 8] >> (i % 8) & 1 == 1).collect();
            records.push(Sample {
                depth,
                target: VoxelGrid::from_occupancy(resolution, occ)?,
                class_id,
                view_index,
            });
        }
        if c.pos != bytes.len() {
            return Err(c.err_at(c.pos as u64, "trailing bytes after last record"));
        }
        Ok(Self {
            resolution,
            depth_width,
            depth_height,
            n_views,
            n_classes,
            flags,
            seed,
            records,
        })
    }

    pub fn read_from(mut r: impl Read) -> Result<Self, DatasetError> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Total occupied and unoccupied voxels across all targets.
    pub fn occupancy_counts(&self) -> (u64, u64) {
        let occ: u64 = self
            .records
            .iter()
            .map(|r| r.target.occupied_count() as u64)
            .sum();
        let total = (self.records.len() * self.resolution.pow(3)) as u64;
        (occ, total - occ)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], DatasetError> {
        if self.bytes.len() - self.pos < n {
            return Err(DatasetError::Format {
                offset: self.pos as u64,
                message: format!("truncated while reading {what}"),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16, DatasetError> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32, DatasetError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64, DatasetError> {
        let b = self.take(8, what)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn err_at(&self, offset: u64, message: impl Into<String>) -> DatasetError {
        DatasetError::Format {
            offset,
            message: message.into(),
        }
    }
}
