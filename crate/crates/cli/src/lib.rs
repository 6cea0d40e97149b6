//! Pipeline commands behind the `hfr` binary.

pub mod commands;
pub mod config;
pub mod export;

use std::fmt;

/// A failure caused by the caller's input; exits with status 1.
#[derive(Debug)]
pub struct UserError(pub String);

impl fmt::Display for UserError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UserError {}

pub fn user(e: impl fmt::Display) -> anyhow::Error {
    UserError(e.to_string()).into()
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_USER: i32 = 1;
pub const EXIT_INTERNAL: i32 = 2;

pub fn exit_code(e: &anyhow::Error) -> i32 {
    if e.chain().any(|c| c.downcast_ref::<UserError>().is_some()) {
        EXIT_USER
    } else {
        EXIT_INTERNAL
    }
}
