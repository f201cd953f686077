use std::fmt;

use driftlab::{Error, ErrorClass};

/// Failure of a CLI run, carrying its exit-code class and a stable tag.
#[derive(Debug)]
pub struct CliError {
    pub class: ErrorClass,
    pub tag: String,
    pub message: String,
}

impl CliError {
    pub fn validation(tag: &str, message: impl Into<String>) -> Self {
        Self {
            class: ErrorClass::Validation,
            tag: tag.to_string(),
            message: message.into(),
        }
    }

    pub fn config(e: serde_json::Error) -> Self {
        Self::validation("config", e.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self.class {
            ErrorClass::Validation => 1,
            ErrorClass::Numerical => 2,
            ErrorClass::Budget => 3,
        }
    }

    fn class_name(&self) -> &'static str {
        match self.class {
            ErrorClass::Validation => "validation",
            ErrorClass::Numerical => "numerical",
            ErrorClass::Budget => "budget",
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        Self {
            class: e.class(),
            tag: e.tag().to_string(),
            message: e.to_string(),
        }
    }
}

/// One line: `error class=<class> tag=<tag> msg=<message>`.
impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msg: String = self
            .message
            .chars()
            .map(|c| if c.is_control() { ' ' } else { c })
            .collect();
        write!(f, "error class={} tag={} msg={}", self.class_name(), self.tag, msg)
    }
}
