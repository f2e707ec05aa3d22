//! Local rewrites on the main term, each checked by typechecking the
//! result again.

mod rules;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::check::{check_program, Checked, TypeError, TypeErrorKind};
use crate::ir::{alpha_eq_ty, strip_annotations, Decls, Expr, Path, Program, Ty};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pass {
    Inline,
    Beta,
    BetaSharing,
    BetaMult,
    CaseKnown,
    CaseOfCase,
    LetLam,
    LetApp,
    LetCase,
    CaseLet,
    LetLet,
    EtaExpand,
    EtaReduce,
    BinderSwap,
    ReverseBinderSwap,
}

impl Pass {
    pub const ALL: [Pass; 15] = [
        Pass::Inline,
        Pass::Beta,
        Pass::BetaSharing,
        Pass::BetaMult,
        Pass::CaseKnown,
        Pass::CaseOfCase,
        Pass::LetLam,
        Pass::LetApp,
        Pass::LetCase,
        Pass::CaseLet,
        Pass::LetLet,
        Pass::EtaExpand,
        Pass::EtaReduce,
        Pass::BinderSwap,
        Pass::ReverseBinderSwap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Pass::Inline => "inline",
            Pass::Beta => "beta",
            Pass::BetaSharing => "beta-sharing",
            Pass::BetaMult => "beta-mult",
            Pass::CaseKnown => "case-known",
            Pass::CaseOfCase => "case-of-case",
            Pass::LetLam => "let-lam",
            Pass::LetApp => "let-app",
            Pass::LetCase => "let-case",
            Pass::CaseLet => "case-let",
            Pass::LetLet => "let-let",
            Pass::EtaExpand => "eta-expand",
            Pass::EtaReduce => "eta-reduce",
            Pass::BinderSwap => "binder-swap",
            Pass::ReverseBinderSwap => "reverse-binder-swap",
        }
    }

    /// Every pass except the reverse binder swap, which is known to break
    /// linearity.
    pub fn sound() -> impl Iterator<Item = Pass> {
        Pass::ALL.into_iter().filter(|p| *p != Pass::ReverseBinderSwap)
    }
}

impl fmt::Display for Pass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Pass {
    type Err = String;

    fn from_str(s: &str) -> Result<Pass, String> {
        Pass::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| format!("unknown pass `{s}`"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum RewriteError {
    #[error("not applicable: {0}")]
    NotApplicable(String),
    #[error("guard failed: {0}")]
    GuardFailed(String),
}

/// What a rule may consult besides the term: declarations and the type
/// of every node of the term, by path.
#[derive(Clone, Copy, Debug)]
pub struct RewriteCtx<'a> {
    pub decls: &'a Decls,
    pub types: &'a HashMap<Path, Ty>,
}

/// Rewrite the node of `main` at `path`, returning the new main term.
pub fn rewrite(ctx: RewriteCtx, main: &Expr, path: &[u32], pass: Pass) -> Result<Expr, RewriteError> {
    let (at, new) = rules::apply(ctx, main, path, pass)?;
    let mut out = main.clone();
    *out.at_mut(&at).expect("rewrite site exists") = new;
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Preserved,
    Rejected(TypeError),
    NotApplicable(String),
    GuardFailed(String),
}

impl Verdict {
    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Preserved => "Preserved",
            Verdict::Rejected(_) => "Rejected",
            Verdict::NotApplicable(_) => "NotApplicable",
            Verdict::GuardFailed(_) => "GuardFailed",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Preserved => write!(f, "Preserved"),
            Verdict::Rejected(e) => write!(f, "Rejected({e})"),
            Verdict::NotApplicable(m) => write!(f, "NotApplicable: {m}"),
            Verdict::GuardFailed(m) => write!(f, "GuardFailed: {m}"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TransformOutcome {
    pub pass: Pass,
    pub path: Path,
    pub before: Expr,
    pub after: Expr,
    pub verdict: Verdict,
}

/// Where a pass is applied.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SitePolicy {
    At(Path),
    /// Outermost first, once per node, chaining the rewrites.
    Everywhere,
    /// Every applicable site of the current term, each on its own; the
    /// term is left unchanged.
    Each,
}

/// Typecheck `main` with recomputed annotations and compare its type.
pub fn verify(p: &Program, ty: &Ty, main: &Expr) -> (Verdict, Option<Checked>) {
    match check_program(&p.with_main(strip_annotations(main))) {
        Ok(c) if alpha_eq_ty(&c.ty, ty) => (Verdict::Preserved, Some(c)),
        Ok(c) => (
            Verdict::Rejected(TypeError {
                kind: TypeErrorKind::TypeMismatch,
                path: Vec::new(),
                message: format!("type changed from {ty} to {}", c.ty),
            }),
            None,
        ),
        Err(e) => (Verdict::Rejected(e), None),
    }
}

fn outcome(pass: Pass, path: &[u32], before: &Expr, r: Result<Expr, RewriteError>, p: &Program, ty: &Ty) -> (TransformOutcome, Option<Checked>) {
    let (after, verdict, checked) = match r {
        Ok(after) => {
            let (v, c) = verify(p, ty, &after);
            (after, v, c)
        }
        Err(RewriteError::NotApplicable(m)) => (before.clone(), Verdict::NotApplicable(m), None),
        Err(RewriteError::GuardFailed(m)) => (before.clone(), Verdict::GuardFailed(m), None),
    };
    (TransformOutcome { pass, path: path.to_vec(), before: before.clone(), after, verdict }, checked)
}

/// Apply `pass` at one site of a checked program and verify the result.
pub fn apply_at(c: &Checked, pass: Pass, path: &[u32]) -> TransformOutcome {
    let p = &c.program;
    let ctx = RewriteCtx { decls: &p.decls, types: &c.types };
    outcome(pass, path, &p.main, rewrite(ctx, &p.main, path, pass), p, &c.ty).0
}

/// Paths of every node where `pass` applies, in pre-order.
pub fn applicable_sites(c: &Checked, pass: Pass) -> Vec<Path> {
    let ctx = RewriteCtx { decls: &c.program.decls, types: &c.types };
    c.program.main.paths().into_iter().filter(|path| rules::apply(ctx, &c.program.main, path, pass).is_ok()).collect()
}

/// Apply `pass` outermost-first. After rewriting a node the walk goes on
/// with the rewritten node's children, so each node is rewritten at most
/// once. Stops at the first rejection.
pub fn apply_everywhere(c: &Checked, pass: Pass) -> (Checked, Vec<TransformOutcome>) {
    let mut cur = c.clone();
    let mut outs = Vec::new();
    let mut next = 0usize;
    loop {
        let paths = cur.program.main.paths();
        let Some(path) = paths.iter().skip(next).find(|path| {
            let ctx = RewriteCtx { decls: &cur.program.decls, types: &cur.types };
            rules::apply(ctx, &cur.program.main, path, pass).is_ok()
        }) else {
            break;
        };
        let path = path.clone();
        let ctx = RewriteCtx { decls: &cur.program.decls, types: &cur.types };
        let r = rewrite(ctx, &cur.program.main, &path, pass);
        let (o, checked) = outcome(pass, &path, &cur.program.main, r, &cur.program, &c.ty);
        let preserved = o.verdict == Verdict::Preserved;
        outs.push(o);
        let Some(checked) = checked.filter(|_| preserved) else { break };
        cur = checked;
        // Resume after the rewritten node; an η-expansion also skips the
        // function it wrapped.
        let resume = if pass == Pass::EtaExpand { [path.clone(), vec![0, 0]].concat() } else { path.clone() };
        let paths = cur.program.main.paths();
        next = paths.iter().position(|q| *q == resume).map_or(paths.len(), |i| i + 1);
    }
    (cur, outs)
}

/// Run a pipeline of passes over a checked program, verifying after each
/// rewrite. The program carried forward is the last one that verified.
pub fn preservation_check(p: &Program, pipeline: &[(Pass, SitePolicy)]) -> Result<Vec<TransformOutcome>, TypeError> {
    let mut cur = check_program(p)?;
    let mut outs = Vec::new();
    for (pass, policy) in pipeline {
        match policy {
            SitePolicy::At(path) => {
                let o = apply_at(&cur, *pass, path);
                if o.verdict == Verdict::Preserved {
                    cur = verify(&cur.program, &cur.ty, &o.after).1.expect("verified");
                }
                outs.push(o);
            }
            SitePolicy::Everywhere => {
                let (next, os) = apply_everywhere(&cur, *pass);
                cur = next;
                outs.extend(os);
            }
            SitePolicy::Each => {
                for path in applicable_sites(&cur, *pass) {
                    outs.push(apply_at(&cur, *pass, &path));
                }
            }
        }
    }
    Ok(outs)
}
