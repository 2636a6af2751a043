use std::fmt::Display;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad arguments, configuration or inputs; exit code 1.
    Validation,
    /// A failure after inputs were accepted; exit code 2.
    Runtime,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn validation(m: impl Display) -> Self {
        CliError { kind: ErrorKind::Validation, message: m.to_string() }
    }

    pub fn runtime(m: impl Display) -> Self {
        CliError { kind: ErrorKind::Runtime, message: m.to_string() }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Validation => 1,
            ErrorKind::Runtime => 2,
        }
    }

    /// One line of JSON for stderr.
    pub fn to_json(&self) -> String {
        let kind = match self.kind {
            ErrorKind::Validation => "validation",
            ErrorKind::Runtime => "runtime",
        };
        serde_json::json!({ "error": kind, "message": self.message }).to_string()
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Tags errors from core calls made after validation as runtime failures.
pub trait OrRuntime<T> {
    fn or_runtime(self, context: &str) -> CliResult<T>;
}

impl<T, E: Display> OrRuntime<T> for Result<T, E> {
    fn or_runtime(self, context: &str) -> CliResult<T> {
        self.map_err(|e| CliError::runtime(format!("{context}: {e}")))
    }
}

/// Same for errors caused by bad inputs.
pub trait OrInvalid<T> {
    fn or_invalid(self, context: &str) -> CliResult<T>;
}

impl<T, E: Display> OrInvalid<T> for Result<T, E> {
    fn or_invalid(self, context: &str) -> CliResult<T> {
        self.map_err(|e| CliError::validation(format!("{context}: {e}")))
    }
}
