//! Proof terms ("rewrites") for orthogonal higher-order rewriting systems:
//! flattening to canonical form, residual projection, permutation-equivalence
//! decision, and standardization.

pub mod error;
pub mod flatten;
pub mod hrs;
pub mod project;
pub mod rewrite;
pub mod split;
pub mod standard;
pub mod syntax;
pub mod testkit;
pub mod term;

pub use error::{Error, Result};
pub use flatten::FlatRewrite;
pub use hrs::{Hrs, Rule};
pub use project::Verdict;
pub use rewrite::{Multistep, Rewrite, RewriteJudgment};
pub use standard::SequentialRewrite;
pub use term::{Name, Signature, Term, Type, TypingContext};
