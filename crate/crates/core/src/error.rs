use thiserror::Error;

/// Broad failure category. The CLI maps each to a distinct exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Config,
    Data,
    Numeric,
    Io,
}

impl Category {
    pub fn exit_code(self) -> i32 {
        match self {
            Category::Config => 2,
            Category::Data => 3,
            Category::Numeric => 4,
            Category::Io => 5,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("fitting {context} failed: {source}")]
    Nuisance {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn category(&self) -> Category {
        match self {
            Error::Config(_) | Error::Unsupported(_) => Category::Config,
            Error::Data(_) | Error::Csv(_) => Category::Data,
            Error::Numeric(_) => Category::Numeric,
            Error::Nuisance { source, .. } => source.category(),
            Error::Io(_) | Error::Json(_) => Category::Io,
        }
    }

    /// Wraps a solver error with the nuisance it came from.
    pub fn in_nuisance(self, context: impl Into<String>) -> Error {
        Error::Nuisance {
            context: context.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
