//! VPL, the restricted language generated programs are written in.
//!
//! A program is either a bare statement sequence with the input pre-bound as
//! `image` (or `video`), or a single `def execute_command(image):` wrapper.

mod ast;
mod check;
mod error;
mod interp;
mod lexer;
mod parser;
mod printer;
mod value;

pub use ast::*;
pub use check::{check_return_type, TaskKind};
pub use error::{classify_error, ErrorBucket, ErrorRecord, Limit, VplError, DETECTION_TOOLS};
pub use interp::{execute, ExecutionLimits, ExecutionOutcome, ProgramInput, ToolDispatch, BUILTINS};
pub use parser::{parse, WRAPPER_NAME};
pub use printer::to_source;
pub use value::Value;
