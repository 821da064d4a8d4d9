use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("PLY parse error at byte {offset}: {message}")]
    Ply { offset: usize, message: String },
    #[error("image {path}: {message}")]
    Image { path: PathBuf, message: String },
    #[error("manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error("camera {id}: {message}")]
    Camera { id: u32, message: String },
    #[error(transparent)]
    Core(#[from] splatkit::SplatError),
}

pub type Result<T, E = IoError> = std::result::Result<T, E>;

pub(crate) fn file_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> IoError {
    let path = path.into();
    move |source| IoError::File { path, source }
}
