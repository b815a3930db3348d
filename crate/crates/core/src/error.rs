use thiserror::Error;

use crate::term::Type;

/// Errors shared by every layer of the library.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("unknown constant `{0}`")]
    UnknownConstant(String),
    #[error("unknown rule symbol `{0}`")]
    UnknownRuleSymbol(String),
    #[error("type mismatch: expected `{expected}`, found `{found}` in `{context}`")]
    TypeMismatch {
        expected: Type,
        found: Type,
        context: String,
    },
    #[error("term is not typable: {0}")]
    NotTypable(String),
    #[error("term is not in beta-normal form")]
    NotBetaNormal,
    #[error("ill-typed rule `{rule}`: {reason}")]
    IllTypedRule { rule: String, reason: String },
    #[error("left-hand side of rule `{0}` is not a pattern")]
    NotAPattern(String),
    #[error("rule `{rule}` is not left-linear: metavariable `{metavar}` occurs {count} times")]
    NotLeftLinear {
        rule: String,
        metavar: String,
        count: usize,
    },
    #[error("rule `{rule}`: metavariable `{metavar}` occurs on the right-hand side only")]
    VariableEscape { rule: String, metavar: String },
    #[error("rule `{0}` sides are not of base type")]
    NotBaseType(String),
    #[error("redex occurrence is stale: no such redex in the given term")]
    StaleOccurrence,
    #[error("occurrences overlap in a non-orthogonal way")]
    OverlappingOccurrences,
    #[error("rewrites are not composable: target `{0}` differs from source `{1}`")]
    NonComposable(String, String),
    #[error("ill-typed rewrite: {0}")]
    IllTyped(String),
    #[error("flattening exceeded its internal budget (implementation bug)")]
    InternalBudgetExceeded,
    #[error("split choices do not cover the rule occurrences of the multistep")]
    BadChoices,
    #[error("multisteps are not composable")]
    NotComposable,
    #[error("multisteps are not compatible")]
    NotCompatible,
    #[error("rewrites are not coinitial")]
    NotCoinitial,
    #[error("higher-order matching failed (non-orthogonal input?)")]
    MatchFailure,
    #[error("budget exceeded after {0} steps")]
    BudgetExceeded(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
