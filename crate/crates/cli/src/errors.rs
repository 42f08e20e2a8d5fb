//! Error-to-exit-code policy.
//!
//! Every failure is sorted into one of three buckets before it reaches the
//! user: domain failures (bad data, diverged training, incomplete runs),
//! environment failures (unreadable or already-existing files), and config
//! failures (invalid flags, presets, layouts). The bucket is the exit code,
//! so scripts can branch on *why* a command failed without parsing stderr.

use toolstream_core::dataset::DatasetError;
use toolstream_core::trainer::{CheckpointError, TrainerError};

/// Exit code for a successful command.
pub const EXIT_OK: i32 = 0;
/// Domain failure: violations found, training diverged, run incomplete.
pub const EXIT_DOMAIN: i32 = 1;
/// Environment failure: I/O errors, or outputs that exist without `--force`.
pub const EXIT_ENVIRONMENT: i32 = 2;
/// Config failure: bad flags, presets, strategies, or config files.
pub const EXIT_CONFIG: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Domain(String),
    #[error("{0}")]
    Environment(String),
    #[error("{0}")]
    Config(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Domain(_) => EXIT_DOMAIN,
            CliError::Environment(_) => EXIT_ENVIRONMENT,
            CliError::Config(_) => EXIT_CONFIG,
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Io { .. } => CliError::Environment(e.to_string()),
            other => CliError::Domain(other.to_string()),
        }
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        match e {
            CheckpointError::Io { .. } => CliError::Environment(e.to_string()),
            // Pointing a run at a checkpoint from another configuration is a
            // configuration mistake, not a damaged file.
            CheckpointError::ConfigMismatch => CliError::Config(e.to_string()),
            other => CliError::Domain(other.to_string()),
        }
    }
}

impl From<TrainerError> for CliError {
    fn from(e: TrainerError) -> Self {
        match e {
            TrainerError::Config { .. }
            | TrainerError::UnknownStrategy { .. }
            | TrainerError::Groups { .. } => CliError::Config(e.to_string()),
            TrainerError::Io { .. } => CliError::Environment(e.to_string()),
            TrainerError::Dataset(inner) => inner.into(),
            TrainerError::Checkpoint(inner) => inner.into(),
            other => CliError::Domain(other.to_string()),
        }
    }
}

impl From<toolstream_core::metrics::MetricsError> for CliError {
    fn from(e: toolstream_core::metrics::MetricsError) -> Self {
        CliError::Domain(e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn buckets_map_to_distinct_codes() {
        assert_eq!(CliError::Domain(String::new()).code(), 1);
        assert_eq!(CliError::Environment(String::new()).code(), 2);
        assert_eq!(CliError::Config(String::new()).code(), 3);
    }

    #[test]
    fn trainer_errors_land_in_their_buckets() {
        let diverged = TrainerError::Diverged {
            stage: "refinement",
            step: 3,
            loss: f64::INFINITY,
        };
        assert_eq!(CliError::from(diverged).code(), EXIT_DOMAIN);
        let unknown = TrainerError::UnknownStrategy {
            given: "wat".into(),
        };
        assert_eq!(CliError::from(unknown).code(), EXIT_CONFIG);
        let io = TrainerError::Io {
            path: "x".into(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "gone"),
        };
        assert_eq!(CliError::from(io).code(), EXIT_ENVIRONMENT);
    }

    #[test]
    fn nested_dataset_io_stays_environmental() {
        let io = TrainerError::Dataset(DatasetError::Io {
            path: "corpus.jsonl".into(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "gone"),
        });
        assert_eq!(CliError::from(io).code(), EXIT_ENVIRONMENT);
        let bad = TrainerError::Dataset(DatasetError::WrongTurnCount { got: 2 });
        assert_eq!(CliError::from(bad).code(), EXIT_DOMAIN);
    }
}
