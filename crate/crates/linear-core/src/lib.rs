//! A lazy linear core calculus with usage environments: syntax, a
//! resource-threading typechecker, two big-step evaluators, and
//! type-preserving rewrites.

pub mod check;
pub mod corpus;
pub mod eval;
pub mod gen;
pub mod ir;
pub mod name;
pub mod parse;
pub mod pretty;
pub mod transform;

pub use ir::{Expr, Mult, Name, Program, Ty};
