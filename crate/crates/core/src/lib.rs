//! Toolchain for contextual-QA uncertainty recognition: benchmark
//! construction, tuning-set synthesis, and endpoint evaluation.

pub mod bench;
pub mod eval;
pub mod gateway;
pub mod prompt;
pub mod record;
pub mod text;
pub mod tuneset;

pub use record::{ContextualQA, Label, PostfixTag, ResponseClass, Source, SubQuestionGroup};
