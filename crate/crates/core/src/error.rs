use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    Parameter(&'static str),
    #[error("capacity exceeded: {len} values do not fit {capacity} slots")]
    Capacity { len: usize, capacity: usize },
    #[error("no rotation key for step {0}")]
    MissingRotationKey(i64),
    #[error("noise budget exhausted{}", layer_suffix(.0))]
    BudgetExhausted(Option<&'static str>),
    #[error("decryption integrity check failed: noise exceeded the decryption bound")]
    DecryptionIntegrity,
    #[error("chunk size {got} does not match block size {expected}")]
    ChunkSize { expected: usize, got: usize },
    #[error("protocol error: {0}")]
    Protocol(&'static str),
    #[error("malformed encoding: {0}")]
    Format(&'static str),
}

fn layer_suffix(layer: &Option<&'static str>) -> alloc::string::String {
    match layer {
        Some(l) => alloc::format!(" in {l}"),
        None => alloc::string::String::new(),
    }
}

pub type Result<T> = core::result::Result<T, Error>;
