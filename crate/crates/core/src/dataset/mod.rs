//! Sample construction, hold-out splitting and the `.voxc` container.

mod shapes;
mod store;

pub use shapes::{
    gen_primitive, generate_shapes, CompositeKind, LabeledMesh, PrimitiveParams, ShapeKind,
};
pub use store::{
    build_dataset, build_subregion_store, split_holdout, BuildConfig, BuildReport, Sample,
    SampleStore, SubregionStore, STORE_MAGIC, STORE_VERSION,
};

use thiserror::Error;

use crate::codec::CodecError;
use crate::geometry::GeometryError;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("expected resolution {expected}, found {found}")]
    Resolution { expected: usize, found: usize },
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },
    #[error("unsupported store version {found} at byte {offset}")]
    Version { offset: u64, found: u16 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Codec(#[from] CodecError),
}
