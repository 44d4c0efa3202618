use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error(transparent)]
    Core(#[from] adrrec_core::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
}

pub type AppResult<T> = Result<T, AppError>;

impl AppError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AppError::Io { path: path.into(), source }
    }

    /// 2 configuration, 3 data, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        use adrrec_core::Error as E;
        match self {
            AppError::Config(_) | AppError::Core(E::Config(_)) | AppError::Core(E::Shape(_)) => 2,
            AppError::Core(E::Numerical(_)) => 4,
            _ => 3,
        }
    }
}
