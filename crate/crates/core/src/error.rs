use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("{kind} {id} not found")]
    NotFound { kind: &'static str, id: u64 },
    #[error("request {request} references unknown stop {stop}")]
    UnknownStop { request: u32, stop: u32 },
    #[error("no path from vertex {from} to vertex {to}")]
    Unreachable { from: u32, to: u32 },
    #[error("configuration error: {0}")]
    Configuration(String),
    #[error("internal consistency violation: {0}")]
    Consistency(String),
    #[error("replication {index} failed: {source}")]
    Replication {
        index: u32,
        #[source]
        source: alloc::boxed::Box<Error>,
    },
}

impl Error {
    pub(crate) fn not_found(kind: &'static str, id: impl Into<u64>) -> Self {
        Error::NotFound {
            kind,
            id: id.into(),
        }
    }
}
