use serde::Serialize;

use pap_core::{Error, FieldError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Usage,
    Io,
    /// The input is not valid JSON.
    Syntax,
    /// Valid JSON that does not match the expected shape.
    Schema,
    /// Well-formed input describing an invalid model.
    Model,
    TooLarge,
    Infeasible,
    Internal,
}

/// Machine-readable failure, printed on stderr by the command line and
/// returned as the body of every 4xx/5xx response.
#[derive(Debug, Clone, Serialize, thiserror::Error)]
#[error("{message}")]
pub struct AppError {
    pub code: ErrorKind,
    pub field_path: Option<String>,
    pub message: String,
}

impl AppError {
    pub fn new(code: ErrorKind, message: impl Into<String>) -> Self {
        AppError { code, field_path: None, message: message.into() }
    }

    pub fn at(mut self, field_path: impl Into<String>) -> Self {
        self.field_path = Some(field_path.into());
        self
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Usage, message)
    }

    pub fn exit_code(&self) -> i32 {
        match self.code {
            ErrorKind::Infeasible => 3,
            ErrorKind::Internal => 1,
            _ => 2,
        }
    }

    pub fn http_status(&self) -> u16 {
        match self.code {
            ErrorKind::Syntax => 400,
            ErrorKind::Usage | ErrorKind::Schema | ErrorKind::Model => 422,
            ErrorKind::TooLarge => 413,
            ErrorKind::Infeasible => 409,
            ErrorKind::Io | ErrorKind::Internal => 500,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("error serializes")
    }
}

impl From<Error> for AppError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InstanceTooLarge(_) => ErrorKind::TooLarge,
            Error::Model(_) | Error::IncompleteRule(_) | Error::Precondition(_) | Error::Numeric(_) => ErrorKind::Model,
            Error::Usage(_) => ErrorKind::Usage,
            Error::Infeasible => ErrorKind::Infeasible,
            Error::Internal(_) => ErrorKind::Internal,
            Error::Json(_) => ErrorKind::Schema,
        };
        AppError::new(code, e.to_string())
    }
}

impl From<FieldError> for AppError {
    fn from(e: FieldError) -> Self {
        let base = AppError::from(e.error);
        if e.field_path.is_empty() {
            base
        } else {
            base.at(e.field_path)
        }
    }
}
