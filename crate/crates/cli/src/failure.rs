use std::fmt;

use serde_json::{json, Value};

/// A problem attributable to one command-line flag.
#[derive(Debug)]
pub struct FlagError {
    pub flag: &'static str,
    pub message: String,
}

impl FlagError {
    pub fn missing(flag: &'static str) -> Self {
        FlagError {
            flag,
            message: format!("missing required flag {flag}"),
        }
    }

    pub fn invalid(flag: &'static str, message: impl Into<String>) -> Self {
        FlagError {
            flag,
            message: format!("{flag}: {}", message.into()),
        }
    }
}

impl fmt::Display for FlagError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for FlagError {}

/// A verification command ran to completion and its check did not pass.
#[derive(Debug)]
pub struct CheckFailed(pub String);

impl fmt::Display for CheckFailed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "check failed: {}", self.0)
    }
}

impl std::error::Error for CheckFailed {}

fn kind(e: &redr_core::Error) -> &'static str {
    use redr_core::Error::*;
    match e {
        Shape { .. } | EmptyInput { .. } | NonFinite { .. } | Index { .. } | NonScalarLoss(_) => "numeric",
        NonDeterministic { .. } => "nondeterministic",
        Config(_) | UnknownParam(_) => "config",
        Passage { .. } | Data(_) | EmbeddingDim { .. } | Json(_) => "data",
        Checkpoint(_) => "checkpoint",
        Oracle(_) => "oracle",
        Training(_) | RewardCollapse { .. } => "training",
        Io(_) => "io",
    }
}

/// Machine-readable description of `err`.
pub fn to_json(err: &anyhow::Error) -> Value {
    let message = format!("{err:#}");
    if let Some(f) = err.chain().find_map(|c| c.downcast_ref::<FlagError>()) {
        return json!({"error": {"kind": "usage", "flag": f.flag, "message": message}});
    }
    if err.chain().any(|c| c.is::<CheckFailed>()) {
        return json!({"error": {"kind": "check", "message": message}});
    }
    let kind = err
        .chain()
        .find_map(|c| c.downcast_ref::<redr_core::Error>())
        .map(kind)
        .or_else(|| err.chain().any(|c| c.is::<std::io::Error>()).then_some("io"))
        .unwrap_or("error");
    json!({"error": {"kind": kind, "message": message}})
}

/// Writes the error object as the last line on stderr.
pub fn report(err: &anyhow::Error) {
    eprintln!("{}", to_json(err));
}
