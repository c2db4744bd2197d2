mod corpus;
mod embed;
mod eval;
mod redd;
mod run;
mod serve;
mod topic;
mod triage;

use std::path::Path;

use redd_core::corpus::{load_corpus, Corpus, Split};
use redd_core::redd::Architecture;
use redd_service::ServiceError;
use serde::de::DeserializeOwned;

use crate::args::{Command, SplitArg};
use crate::output::Output;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] redd_core::Error),
    #[error(transparent)]
    Service(#[from] ServiceError),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        let validation = match self {
            CliError::Core(e) => e.is_validation(),
            CliError::Service(ServiceError::Core(e)) => e.is_validation(),
            CliError::Service(ServiceError::Invalid(_) | ServiceError::NotFound(_)) => true,
            CliError::Service(_) | CliError::Runtime(_) => false,
        };
        if validation {
            2
        } else {
            3
        }
    }
}

pub type CmdResult = Result<Output, CliError>;

pub fn dispatch(cmd: Command) -> CmdResult {
    match cmd {
        Command::Corpus(c) => corpus::run(c),
        Command::Embed(c) => embed::run(c),
        Command::Topic(c) => topic::run(c),
        Command::Redd(c) => redd::run(c),
        Command::Eval(c) => eval::run(c),
        Command::Triage(c) => triage::run(c),
        Command::Serve(a) => serve::run(a),
        Command::Run(a) => run::run(a),
    }
}

pub(crate) fn config_err(field: &str, reason: impl Into<String>) -> redd_core::Error {
    redd_core::Error::Config {
        field: field.into(),
        reason: reason.into(),
    }
}

/// A missing input file is bad input, not a runtime failure.
pub(crate) fn input<'a>(path: &'a Path, flag: &str) -> Result<&'a Path, CliError> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(config_err(flag, format!("file {} not found", path.display())).into())
    }
}

pub(crate) fn read_input(path: &Path, flag: &str) -> Result<String, CliError> {
    Ok(redd_core::util::read_to_string(input(path, flag)?)?)
}

pub(crate) fn corpus_arg(path: &Path, flag: &str) -> Result<Corpus, CliError> {
    Ok(load_corpus(input(path, flag)?)?)
}

/// Reads JSON (`.json`) or TOML (anything else) into `T`.
pub(crate) fn read_config<T: DeserializeOwned>(path: &Path, flag: &str) -> Result<T, CliError> {
    let text = read_input(path, flag)?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|reason| config_err(flag, reason).into())
}

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path, flag: &str) -> Result<T, CliError> {
    let text = read_input(path, flag)?;
    serde_json::from_str(&text).map_err(|e| config_err(flag, e.to_string()).into())
}

pub(crate) fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    Ok(redd_core::util::write_atomic(path, bytes.as_ref())?)
}

pub(crate) fn parse_architecture(s: &str) -> Result<Architecture, CliError> {
    match s {
        "linear" => Ok(Architecture::Linear),
        "nonlinear" => Ok(Architecture::Nonlinear),
        other => Err(config_err(
            "architecture",
            format!("expected linear or nonlinear, got `{other}`"),
        )
        .into()),
    }
}

pub(crate) fn split_matches(arg: SplitArg, split: Split) -> bool {
    match arg {
        SplitArg::All => true,
        SplitArg::Train => split == Split::Train,
        SplitArg::Test => split == Split::Test,
        SplitArg::Unassigned => split == Split::Unassigned,
    }
}
