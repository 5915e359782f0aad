use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("config: {0}")]
    Config(String),
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: nss_core::Error,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("thread pool: {0}")]
    Threads(String),
}

pub type LabResult<T> = Result<T, LabError>;

/// Tags a core error with the pipeline stage it came from.
pub(crate) trait AtStage<T> {
    fn at(self, stage: &'static str) -> LabResult<T>;
}

impl<T> AtStage<T> for nss_core::Result<T> {
    fn at(self, stage: &'static str) -> LabResult<T> {
        self.map_err(|source| LabError::Stage { stage, source })
    }
}
