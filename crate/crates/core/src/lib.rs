//! Engine that turns natural-language visual queries into small sandboxed
//! programs, runs them against pluggable vision tools, bootstraps in-context
//! examples from labeled data, and retries failed programs.

pub mod ace;
pub mod api;
pub mod correct;
pub mod eval;
mod gate;
pub mod lang;
pub mod llm;
pub mod routines;
pub mod scene;
pub mod toolbox;
pub mod tools;
