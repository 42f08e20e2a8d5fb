//! One module per subcommand. Each returns the process exit code on the
//! happy path and a [`crate::errors::CliError`] (which carries its own exit
//! code) on failure.

pub mod continual;
pub mod report;
pub mod synth;
pub mod train;
pub mod validate;
