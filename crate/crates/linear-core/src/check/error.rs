use std::fmt;

use thiserror::Error;

use crate::ir::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Linearity {
    DoubleUse,
    Discarded,
    LeftOver,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TypeErrorKind {
    UnboundVariable,
    LinearityViolation(Linearity),
    UsageEnvMismatch,
    MultiplicityMismatch,
    NonExhaustiveCase,
    TagMismatch,
    IllFormedMult,
    TypeMismatch,
}

impl TypeErrorKind {
    /// Stable label used in reports, e.g. `LinearityViolation(DoubleUse)`.
    pub fn label(&self) -> String {
        match self {
            TypeErrorKind::LinearityViolation(l) => format!("LinearityViolation({l:?})"),
            k => format!("{k:?}"),
        }
    }

    pub fn is_linearity(&self) -> bool {
        matches!(self, TypeErrorKind::LinearityViolation(_))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub struct TypeError {
    pub kind: TypeErrorKind,
    pub path: Path,
    pub message: String,
}

impl fmt::Display for TypeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            TypeErrorKind::LinearityViolation(l) => write!(f, "LinearityViolation: {l:?} {}", self.message),
            k => write!(f, "{k:?}: {}", self.message),
        }
    }
}
