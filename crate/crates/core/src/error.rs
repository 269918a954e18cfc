use std::path::PathBuf;

/// Crate-wide error type. The CLI maps each variant onto a process exit
/// code: usage errors exit 1, data errors exit 2, sampler errors exit 3.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("usage: {0}")]
    Usage(String),

    #[error("schema error: missing column `{column}` in {path}")]
    MissingColumn { column: String, path: PathBuf },

    #[error("data error: {0}")]
    Data(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("sampler error: {0}")]
    Sampler(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI contract.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Argument(_) => 1,
            Error::MissingColumn { .. } | Error::Data(_) | Error::Io { .. } => 2,
            Error::Sampler(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_code_contract() {
        assert_eq!(Error::Usage("x".into()).exit_code(), 1);
        assert_eq!(Error::Argument("x".into()).exit_code(), 1);
        assert_eq!(Error::Data("x".into()).exit_code(), 2);
        assert_eq!(
            Error::MissingColumn {
                column: "hr".into(),
                path: "f.csv".into()
            }
            .exit_code(),
            2
        );
        assert_eq!(
            Error::io("f", std::io::Error::other("boom")).exit_code(),
            2
        );
        assert_eq!(Error::Sampler("x".into()).exit_code(), 3);
    }
}
