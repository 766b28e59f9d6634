use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("{0}: file contains no data rows")]
    EmptyFile(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dataset has no ground-truth labels")]
    MissingLabels,

    #[error("class {class} has {available} points but {requested} were requested")]
    InsufficientClass {
        class: usize,
        available: usize,
        requested: usize,
    },

    #[error("vertex {0} has zero degree; the normalized laplacian is undefined")]
    IsolatedVertex(usize),

    #[error("eigensolver failed: {0}")]
    Eigensolver(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("graph is disconnected ({components} components); run the embedding per component")]
    Disconnected { components: usize },

    #[error("cluster {0} is empty")]
    EmptyCluster(usize),

    #[error("shape mismatch: {0}")]
    Shape(String),
}

pub type Result<T> = std::result::Result<T, Error>;
