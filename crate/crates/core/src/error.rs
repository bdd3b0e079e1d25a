use std::path::PathBuf;

/// Errors produced by the simulation kernel, the domain models and the
/// experiment harness.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    // --- simulation kernel ---
    #[error("event scheduled in the past: fire_at={fire_at}ms < now={now}ms")]
    ScheduleInPast { fire_at: u64, now: u64 },
    #[error("event ceiling of {limit} dispatches exceeded; model does not terminate")]
    EventCeiling { limit: u64 },
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    // --- git model ---
    #[error("unknown branch `{0}`")]
    UnknownBranch(String),
    #[error("branch `{0}` already exists")]
    DuplicateBranch(String),
    #[error("access token mismatch for repository write")]
    TokenMismatch,
    #[error("push with an empty change set")]
    EmptyChangeSet,
    #[error("cannot merge branch `{0}` into itself")]
    MergeSelf(String),

    // --- cluster model ---
    #[error("pod capacity exceeded: need {requested} pods, {available} available of {capacity}")]
    CapacityExceeded {
        requested: u32,
        available: u32,
        capacity: u32,
    },
    #[error("unknown namespace `{0}`")]
    UnknownNamespace(String),

    // --- reconcilers / nephio ---
    #[error("unknown reconciler profile `{given}`; valid profiles are argo, flux, csync")]
    UnknownProfile { given: String },
    #[error("reconcile invoked with zero drift (harness bug)")]
    ReconcileWithoutDrift,
    #[error("parameter slot `{0}` has no configured value; package stuck in draft")]
    MissingParameter(String),
    #[error("cannot advance a published package revision")]
    AlreadyPublished,

    // --- harness / config ---
    #[error("invalid experiment parameters: {0}")]
    InvalidParams(String),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("preset parse error: {0}")]
    PresetParse(String),
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("manifest target already populated: {0}")]
    DirtyTargetDir(PathBuf),
    #[error("no records to aggregate")]
    EmptyRecords,
    #[error("CSV header mismatch at column `{0}`")]
    HeaderMismatch(String),
    #[error("CSV parse error on line {line}: {msg}")]
    CsvParse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code the CLI maps this error to.
    /// 2 = configuration error, 3 = capacity error, 4 = I/O error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::CapacityExceeded { .. } => 3,
            Error::Io(_) => 4,
            Error::ScheduleInPast { .. }
            | Error::EventCeiling { .. }
            | Error::ReconcileWithoutDrift => 1,
            _ => 2,
        }
    }
}
