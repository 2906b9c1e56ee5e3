use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}:{line}: {msg}", path.display())]
    Format { path: PathBuf, line: usize, msg: String },
    #[error("missing inputs in {}: expected {}", dir.display(), expected.join(", "))]
    Missing { dir: PathBuf, expected: Vec<String> },
    #[error(transparent)]
    Solver(#[from] navslip_core::Error),
    #[error("verification failed: {0}")]
    Verify(String),
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.to_path_buf(), source }
    }

    pub fn format(path: &Path, line: usize, msg: impl Into<String>) -> Self {
        HarnessError::Format { path: path.to_path_buf(), line, msg: msg.into() }
    }
}
