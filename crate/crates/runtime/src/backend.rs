/// Invoked once the persisted version is durable.
pub type PersistCallback = Box<dyn FnOnce() + Send>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("version {0} is not available")]
    UnknownVersion(u64),
    #[error("storage error: {0}")]
    Storage(String),
}

/// Storage of a state object's versions. The runtime never calls `persist`
/// or `restore` while an action is running.
pub trait StateObjectBackend: Send + Sync {
    /// Captures the current state as `version` together with `metadata`.
    /// May return before the data is durable; `done` runs once it is.
    fn persist(&self, version: u64, metadata: Vec<u8>, done: PersistCallback);

    /// Rolls the state back to `version`, discarding every later version, and
    /// returns the metadata stored with it. Version 0 is the initial state and
    /// has empty metadata.
    fn restore(&self, version: u64) -> Result<Vec<u8>, BackendError>;

    /// Versions up to and including `version` will not be restored again.
    fn prune(&self, version: u64);

    /// Durable, unpruned versions with their metadata, in ascending order.
    fn list_versions(&self) -> Vec<(u64, Vec<u8>)>;
}
