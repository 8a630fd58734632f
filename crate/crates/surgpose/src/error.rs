use std::path::{Path, PathBuf};

use surgpose_core::annotate::AnnotateError;
use surgpose_core::kinematics::KinematicsError;
use surgpose_core::metrics::MetricsError;
use surgpose_core::{GeometryError, MeshError, PnpError, TrajectoryError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{path}: {key_path}: {message}")]
    Schema { path: PathBuf, key_path: String, message: String },
    #[error("depth {depth_mm} mm at pixel {pixel} exceeds 16 bits at depth scale {depth_scale}")]
    DepthOverflow { depth_mm: f64, depth_scale: f64, pixel: usize },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("png error in {path}: {message}")]
    Png { path: PathBuf, message: String },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Annotate(#[from] AnnotateError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Pnp(#[from] PnpError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        Error::Io { path: path.as_ref().to_path_buf(), source }
    }

    pub fn parse(path: impl AsRef<Path>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse { path: path.as_ref().to_path_buf(), line, message: message.into() }
    }

    pub fn schema(path: impl AsRef<Path>, key_path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema { path: path.as_ref().to_path_buf(), key_path: key_path.into(), message: message.into() }
    }
}

pub(crate) fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
