//! Linear typechecking by resource threading.
//!
//! The checker carries a multiset Δ of linear resources through the term.
//! Each rule takes what it needs out of Δ and leaves the rest for its
//! continuation, so "consumed" is always Δ-in minus Δ-out. Fragments of a
//! resource split at a constructor are produced lazily, when a tagged
//! resource is first demanded.

mod error;

use std::collections::HashMap;
use std::fmt;

pub use error::{Linearity, TypeError, TypeErrorKind};

use crate::ir::{
    alpha_eq_ty, subst_mult_ty, Alt, Bind, CtorSig, DataDecl, Decls, Expr, Mult, Name, Path, Pattern,
    Program, ResKey, Tag, Ty, UsageEnv,
};

/// What a name stands for in the typing context.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Entry {
    Unr(Ty),
    Delta(Ty, UsageEnv),
    /// A linear (or multiplicity-polymorphic) binder; its resource lives
    /// in Δ until consumed.
    Lin(Ty, Mult),
    MultVar,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Resource {
    pub key: ResKey,
    pub ty: Ty,
    pub mult: Mult,
}

impl Resource {
    pub fn linear(name: &Name, ty: Ty) -> Resource {
        Resource { key: ResKey::plain(name.clone()), ty, mult: Mult::One }
    }

    pub fn irrelevant(&self) -> Resource {
        Resource { key: self.key.irrelevant(), ..self.clone() }
    }
}

#[derive(Clone, Debug, Default)]
pub struct TypingCtx {
    pub gamma: Vec<(Name, Entry)>,
    pub delta: Vec<Resource>,
}

#[derive(Clone, Debug)]
pub struct TraceRecord {
    pub rule: &'static str,
    pub path: Path,
    pub delta_in: Vec<ResKey>,
    pub delta_out: Vec<ResKey>,
}

pub fn render_path(path: &[u32]) -> String {
    if path.is_empty() {
        "root".into()
    } else {
        path.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(".")
    }
}

fn render_keys(keys: &[ResKey]) -> String {
    keys.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(", ")
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} at {}: Δ-in {{{}}} Δ-out {{{}}}",
            self.rule,
            render_path(&self.path),
            render_keys(&self.delta_in),
            render_keys(&self.delta_out)
        )
    }
}

/// A successfully checked program.
#[derive(Clone, Debug)]
pub struct Checked {
    pub ty: Ty,
    /// The input with every let, letrec and case-binder annotation filled.
    pub program: Program,
    /// Type of every node, by path.
    pub types: HashMap<Path, Ty>,
}

/// How an alternative sees the scrutinee's resources.
#[derive(Clone, Debug)]
pub enum AltMode {
    /// Scrutinee in WHNF and this alternative matches it: one resource
    /// group per linear constructor argument.
    Whnf(Vec<Vec<Resource>>),
    /// Scrutinee resources, made irrelevant inside the alternative.
    NotWhnf(Vec<Resource>),
}

/// The multiplicity of an argument and the resources it consumed.
type ArgUse = (Mult, Vec<Resource>);

fn env_of(rs: &[Resource]) -> UsageEnv {
    UsageEnv::from_entries(rs.iter().map(|r| (r.key.clone(), r.mult.clone())))
}

fn related(a: &ResKey, b: &ResKey) -> bool {
    a.descends_from(b) || b.descends_from(a)
}

fn sorted_keys(rs: &[Resource]) -> Vec<ResKey> {
    let mut v: Vec<ResKey> = rs.iter().map(|r| r.key.clone()).collect();
    v.sort();
    v
}

struct Checker<'a> {
    decls: &'a Decls,
    scope: Vec<(Name, Entry)>,
    delta: Vec<Resource>,
    log: Vec<Resource>,
    relaxed: bool,
    arity: HashMap<(ResKey, String), usize>,
    types: HashMap<Path, Ty>,
    envs: HashMap<Path, UsageEnv>,
    trace: Option<Vec<TraceRecord>>,
    path: Path,
}

type R<T> = Result<T, TypeError>;

impl<'a> Checker<'a> {
    fn new(decls: &'a Decls) -> Checker<'a> {
        Checker {
            decls,
            scope: Vec::new(),
            delta: Vec::new(),
            log: Vec::new(),
            relaxed: false,
            arity: HashMap::new(),
            types: HashMap::new(),
            envs: HashMap::new(),
            trace: None,
            path: Vec::new(),
        }
    }

    fn from_ctx(decls: &'a Decls, ctx: &TypingCtx) -> Checker<'a> {
        let mut c = Checker::new(decls);
        c.scope = ctx.gamma.clone();
        for r in &ctx.delta {
            if !c.scope.iter().any(|(n, _)| *n == r.key.name) {
                c.scope.push((r.key.name.clone(), Entry::Lin(r.ty.clone(), r.mult.clone())));
            }
        }
        c.delta = ctx.delta.clone();
        c
    }

    fn err<T>(&self, kind: TypeErrorKind, message: impl Into<String>) -> R<T> {
        Err(TypeError { kind, path: self.path.clone(), message: message.into() })
    }

    fn lookup(&self, x: &Name) -> Option<&Entry> {
        self.scope.iter().rev().find(|(n, _)| n == x).map(|(_, e)| e)
    }

    fn mult_wf(&self, m: &Mult) -> bool {
        match m {
            Mult::One | Mult::Many => true,
            Mult::Var(p) => matches!(self.lookup(p), Some(Entry::MultVar)),
        }
    }

    fn check_mult(&self, m: &Mult) -> R<()> {
        if self.mult_wf(m) {
            Ok(())
        } else {
            self.err(TypeErrorKind::IllFormedMult, format!("multiplicity {m} is not in scope"))
        }
    }

    fn ty_wf(&self, t: &Ty) -> R<()> {
        fn go(c: &Checker, t: &Ty, bound: &mut Vec<Name>) -> R<()> {
            let mult = |m: &Mult, bound: &Vec<Name>| match m {
                Mult::Var(p) if bound.contains(p) => Ok(()),
                _ => c.check_mult(m),
            };
            match t {
                Ty::Data(k, ms) => {
                    let expected = c.decls.data(k).map_or(0, |d| d.params.len());
                    if ms.len() != expected {
                        return c.err(
                            TypeErrorKind::TypeMismatch,
                            format!("{k} expects {expected} multiplicity arguments, got {}", ms.len()),
                        );
                    }
                    ms.iter().try_for_each(|m| mult(m, bound))
                }
                Ty::Fun(a, m, r) => {
                    mult(m, bound)?;
                    go(c, a, bound)?;
                    go(c, r, bound)
                }
                Ty::Forall(p, b) => {
                    bound.push(p.clone());
                    let r = go(c, b, bound);
                    bound.pop();
                    r
                }
            }
        }
        go(self, t, &mut Vec::new())
    }

    fn expect_ty(&self, found: &Ty, expected: &Ty) -> R<()> {
        if alpha_eq_ty(found, expected) {
            Ok(())
        } else {
            self.err(TypeErrorKind::TypeMismatch, format!("expected {expected}, found {found}"))
        }
    }

    fn keys(&self) -> Vec<ResKey> {
        sorted_keys(&self.delta)
    }

    fn record(&mut self, rule: &'static str, delta_in: Vec<ResKey>) {
        let delta_out = self.keys();
        let path = self.path.clone();
        if let Some(t) = self.trace.as_mut() {
            t.push(TraceRecord { rule, path, delta_in, delta_out });
        }
    }

    fn child(&mut self, i: u32, e: &Expr) -> R<Ty> {
        self.path.push(i);
        let r = self.infer(e);
        self.path.pop();
        r
    }

    fn infer(&mut self, e: &Expr) -> R<Ty> {
        let din = self.trace.is_some().then(|| self.keys());
        let (rule, ty) = self.infer_rule(e)?;
        self.types.insert(self.path.clone(), ty.clone());
        if let Some(din) = din {
            self.record(rule, din);
        }
        Ok(ty)
    }

    fn fam_arity(&self, parent: &ResKey, ctor: &str) -> usize {
        self.arity
            .get(&(parent.clone(), ctor.to_string()))
            .copied()
            .unwrap_or_else(|| self.decls.linear_arity(ctor).unwrap_or(0))
    }

    /// Whether `frags` are exactly a complete split tree below `parent`.
    fn complete(&self, parent: &ResKey, frags: &[ResKey]) -> bool {
        if frags.iter().any(|k| k == parent) {
            return frags.len() == 1;
        }
        let d = parent.tags.len();
        let Some(ctor) = frags.first().and_then(|k| k.tags.get(d)).map(|t| t.ctor.clone()) else {
            return false;
        };
        if frags.iter().any(|k| k.tags[d].ctor != ctor) {
            return false;
        }
        let n = self.fam_arity(parent, &ctor);
        if frags.iter().any(|k| k.tags[d].index as usize > n || k.tags[d].index == 0) {
            return false;
        }
        (1..=n).all(|j| {
            let child = parent.tagged(Tag { ctor: ctor.clone(), index: j as u32 });
            let sub: Vec<ResKey> = frags.iter().filter(|k| k.descends_from(&child)).cloned().collect();
            !sub.is_empty() && self.complete(&child, &sub)
        })
    }

    /// Remove `key` from Δ, splitting an ancestor or merging a complete
    /// family of fragments as needed.
    fn carve(&mut self, key: &ResKey) -> R<()> {
        loop {
            if let Some(i) = self.delta.iter().position(|r| &r.key == key) {
                let r = self.delta.remove(i);
                self.log.push(r);
                return Ok(());
            }
            if let Some(i) = self.delta.iter().position(|r| key.descends_from(&r.key)) {
                let din = self.trace.is_some().then(|| self.keys());
                let anc = self.delta.remove(i);
                let tag = &key.tags[anc.key.tags.len()];
                let n = self.fam_arity(&anc.key, &tag.ctor);
                if tag.index == 0 || tag.index as usize > n {
                    return self.err(TypeErrorKind::TagMismatch, format!("{key}"));
                }
                for j in 1..=n {
                    let key = anc.key.tagged(Tag { ctor: tag.ctor.clone(), index: j as u32 });
                    self.delta.push(Resource { key, ..anc.clone() });
                }
                if let Some(din) = din {
                    self.record("Split", din);
                }
                continue;
            }
            let frags: Vec<ResKey> =
                self.delta.iter().filter(|r| r.key.descends_from(key)).map(|r| r.key.clone()).collect();
            if !frags.is_empty() && self.complete(key, &frags) {
                let first = self.delta.iter().find(|r| r.key.descends_from(key)).cloned().unwrap();
                self.delta.retain(|r| !r.key.descends_from(key));
                self.delta.push(Resource { key: key.clone(), ..first });
                continue;
            }
            break;
        }
        let clash = self.delta.iter().any(|r| r.key.name == key.name && r.key.depth == key.depth);
        if clash {
            self.err(TypeErrorKind::TagMismatch, format!("{key}"))
        } else {
            self.err(TypeErrorKind::LinearityViolation(Linearity::DoubleUse), key.name.to_string())
        }
    }

    /// Replace every complete family of fragments in Δ by its parent.
    fn merge_families(&mut self) {
        loop {
            let parents: Vec<ResKey> = self
                .delta
                .iter()
                .filter(|r| !r.key.tags.is_empty())
                .map(|r| {
                    let mut p = r.key.clone();
                    p.tags.pop();
                    p
                })
                .collect();
            let mut changed = false;
            for p in parents {
                let frags: Vec<ResKey> =
                    self.delta.iter().filter(|r| r.key.descends_from(&p)).map(|r| r.key.clone()).collect();
                if !frags.is_empty() && !frags.contains(&p) && self.complete(&p, &frags) {
                    let first = self.delta.iter().find(|r| r.key.descends_from(&p)).cloned().unwrap();
                    self.delta.retain(|r| !r.key.descends_from(&p));
                    self.delta.push(Resource { key: p, ..first });
                    changed = true;
                    break;
                }
            }
            if !changed {
                return;
            }
        }
    }

    /// Fail if anything standing for a key of `env` is still available.
    fn require_consumed(&mut self, env: &UsageEnv) -> R<()> {
        self.merge_families();
        for k in env.keys() {
            if let Some(r) = self.delta.iter().find(|r| related(&r.key, k)) {
                return self.err(TypeErrorKind::LinearityViolation(Linearity::Discarded), r.key.to_string());
            }
        }
        Ok(())
    }

    fn infer_rule(&mut self, e: &Expr) -> R<(&'static str, Ty)> {
        match e {
            Expr::Var(x) => match self.lookup(x).cloned() {
                Some(Entry::Unr(t)) => Ok(("Var_ω", t)),
                Some(Entry::Delta(t, env)) => {
                    for k in env.keys() {
                        self.carve(k)?;
                    }
                    Ok(("Var_Δ", t))
                }
                Some(Entry::Lin(t, m)) => {
                    self.carve(&ResKey::plain(x.clone()))?;
                    Ok((if m == Mult::One { "Var_1" } else { "Var_p" }, t))
                }
                Some(Entry::MultVar) | None => self.err(TypeErrorKind::UnboundVariable, x.to_string()),
            },
            Expr::Ctor(k) => match self.decls.ctor_type(k) {
                Ok(t) => Ok(("Ctor", t)),
                Err(e) => self.err(TypeErrorKind::TypeMismatch, e.to_string()),
            },
            Expr::MultAbs(p, b) => {
                self.scope.push((p.clone(), Entry::MultVar));
                let r = self.child(0, b);
                self.scope.pop();
                Ok(("ΛI", Ty::Forall(p.clone(), Box::new(r?))))
            }
            Expr::MultApp(f, m) => {
                let t = self.child(0, f)?;
                self.check_mult(m)?;
                match t {
                    Ty::Forall(p, body) => Ok(("ΛE", subst_mult_ty(&body, &p, m))),
                    t => self.err(TypeErrorKind::TypeMismatch, format!("expected a multiplicity abstraction, found {t}")),
                }
            }
            Expr::Abs(x, m, t, b) => {
                self.check_mult(m)?;
                self.ty_wf(t)?;
                if *m == Mult::Many {
                    self.scope.push((x.clone(), Entry::Unr(t.clone())));
                } else {
                    self.scope.push((x.clone(), Entry::Lin(t.clone(), m.clone())));
                    self.delta.push(Resource { key: ResKey::plain(x.clone()), ty: t.clone(), mult: m.clone() });
                }
                let start = self.log.len();
                let r = self.child(0, b);
                self.scope.pop();
                let r = r?;
                let own: Vec<Resource> = self.log.split_off(start).into_iter().filter(|r| r.key.name != *x).collect();
                self.log.extend(own);
                if let Some(left) = self.delta.iter().find(|r| r.key.name == *x) {
                    return self.err(TypeErrorKind::LinearityViolation(Linearity::Discarded), left.key.to_string());
                }
                Ok(("λI", Ty::fun(t.clone(), m.clone(), r)))
            }
            Expr::App(f, a) => {
                let tf = self.child(0, f)?;
                let Ty::Fun(arg, m, res) = tf else {
                    return self.err(TypeErrorKind::TypeMismatch, format!("expected a function, found {tf}"));
                };
                let start = self.log.len();
                let ta = self.child(1, a)?;
                if m == Mult::Many && self.log.len() > start {
                    let used: Vec<ResKey> = self.log[start..].iter().map(|r| r.key.clone()).collect();
                    return self.err(
                        TypeErrorKind::MultiplicityMismatch,
                        format!("argument of an unrestricted function consumes {}", render_keys(&used)),
                    );
                }
                self.expect_ty(&ta, &arg)?;
                Ok(("λE", *res))
            }
            Expr::Let(b, body) => {
                self.ty_wf(&b.ty)?;
                let env = self.lazy_rhs(0, &b.rhs, &b.ty)?;
                self.check_annotation(&b.env, &env)?;
                self.envs.insert(self.path.clone(), env.clone());
                self.scope.push((b.var.clone(), Entry::Delta(b.ty.clone(), env.clone())));
                let r = self.child(1, body);
                self.scope.pop();
                let r = r?;
                self.require_consumed(&env)?;
                Ok(("Let", r))
            }
            Expr::LetRec(binds, body) => {
                for b in binds {
                    self.ty_wf(&b.ty)?;
                }
                let env = self.rec_usage(binds)?;
                for b in binds {
                    self.check_annotation(&b.env, &env)?;
                }
                self.envs.insert(self.path.clone(), env.clone());
                let n = self.scope.len();
                for b in binds {
                    self.scope.push((b.var.clone(), Entry::Delta(b.ty.clone(), env.clone())));
                }
                let r = self.child(binds.len() as u32, body);
                self.scope.truncate(n);
                let r = r?;
                self.require_consumed(&env)?;
                Ok(("LetRec", r))
            }
            Expr::Case(s, z, ann, zty, alts) => self.case(s, z, ann, zty, alts),
        }
    }

    fn check_annotation(&self, ann: &Option<UsageEnv>, env: &UsageEnv) -> R<()> {
        match ann {
            Some(a) if a != env => self.err(TypeErrorKind::UsageEnvMismatch, format!("annotated {a}, inferred {env}")),
            _ => Ok(()),
        }
    }

    /// Check a lazily bound right-hand side: its resources are recorded
    /// but stay available to the continuation.
    fn lazy_rhs(&mut self, i: u32, rhs: &Expr, ty: &Ty) -> R<UsageEnv> {
        let saved = self.delta.clone();
        let start = self.log.len();
        let t = self.child(i, rhs);
        let consumed: Vec<Resource> = self.log.drain(start..).collect();
        self.delta = saved;
        let t = t?;
        self.path.push(i);
        let r = self.expect_ty(&t, ty);
        self.path.pop();
        r?;
        Ok(env_of(&consumed))
    }

    fn rec_round(&mut self, binds: &[Bind], env: &UsageEnv) -> R<Vec<UsageEnv>> {
        let n = self.scope.len();
        for b in binds {
            self.scope.push((b.var.clone(), Entry::Delta(b.ty.clone(), env.clone())));
        }
        let mut out = Vec::new();
        let mut res = Ok(());
        for (i, b) in binds.iter().enumerate() {
            match self.lazy_rhs(i as u32, &b.rhs, &b.ty) {
                Ok(e) => out.push(e),
                Err(e) => {
                    res = Err(e);
                    break;
                }
            }
        }
        self.scope.truncate(n);
        res.map(|_| out)
    }

    /// Least shared usage environment of a recursive group, by iteration
    /// from the empty environment.
    fn rec_usage(&mut self, binds: &[Bind]) -> R<UsageEnv> {
        let outer = self.relaxed;
        let cap = 4 + 4 * (self.delta.len() + 1) * (binds.len() + 1);
        let mut env = UsageEnv::new();
        let mut converged = false;
        for _ in 0..cap {
            self.relaxed = true;
            let r = self.rec_round(binds, &env);
            self.relaxed = outer;
            let mut entries: Vec<(ResKey, Mult)> = Vec::new();
            for e in r? {
                for (k, m) in e.entries() {
                    if !entries.iter().any(|(k2, _)| k2 == k) {
                        entries.push((k.clone(), m.clone()));
                    }
                }
            }
            let next = UsageEnv::from_entries(entries);
            if next == env {
                converged = true;
                break;
            }
            env = next;
        }
        if !converged {
            return self.err(TypeErrorKind::UsageEnvMismatch, "recursive usage environment did not converge");
        }
        let got = self.rec_round(binds, &env)?;
        if !self.relaxed {
            for (b, g) in binds.iter().zip(&got) {
                if let Some((k, _)) = env.entries().iter().find(|(k, _)| !g.contains(k)) {
                    return self.err(
                        TypeErrorKind::LinearityViolation(Linearity::Discarded),
                        format!("{k} (not consumed by {})", b.var),
                    );
                }
            }
        }
        Ok(env)
    }

    /// The ⊩ judgement along a constructor-application spine: the type and,
    /// per argument, its multiplicity and the resources it consumed.
    fn spine_split(&mut self, e: &Expr) -> R<(Ty, Vec<ArgUse>)> {
        match e {
            Expr::App(f, a) => {
                self.path.push(0);
                let r = self.spine_split(f);
                self.path.pop();
                let (tf, mut args) = r?;
                let Ty::Fun(arg, m, res) = tf else {
                    return self.err(TypeErrorKind::TypeMismatch, format!("expected a function, found {tf}"));
                };
                let start = self.log.len();
                let ta = self.child(1, a)?;
                let used = self.log[start..].to_vec();
                if m == Mult::Many && !used.is_empty() {
                    return self.err(
                        TypeErrorKind::MultiplicityMismatch,
                        format!("unrestricted constructor field consumes {}", render_keys(&sorted_keys(&used))),
                    );
                }
                self.expect_ty(&ta, &arg)?;
                self.types.insert(self.path.clone(), (*res).clone());
                args.push((m, used));
                Ok((*res, args))
            }
            Expr::MultApp(f, m) => {
                self.path.push(0);
                let r = self.spine_split(f);
                self.path.pop();
                let (t, args) = r?;
                self.check_mult(m)?;
                let Ty::Forall(p, body) = t else {
                    return self.err(TypeErrorKind::TypeMismatch, format!("expected a multiplicity abstraction, found {t}"));
                };
                let t = subst_mult_ty(&body, &p, m);
                self.types.insert(self.path.clone(), t.clone());
                Ok((t, args))
            }
            _ => Ok((self.infer(e)?, Vec::new())),
        }
    }

    /// Per-linear-field resources for a saturated constructor application,
    /// or `None` for abstractions and partial applications.
    fn whnf_split(&mut self, s: &Expr) -> R<(Ty, Option<Vec<Vec<Resource>>>)> {
        self.path.push(0);
        let r = self.spine_split(s);
        self.path.pop();
        let (t, args) = r?;
        let saturated = matches!(s.spine().0, Expr::Ctor(_)) && matches!(t, Ty::Data(..));
        if saturated {
            Ok((t, Some(args.into_iter().filter(|(m, _)| m.is_linear()).map(|(_, rs)| rs).collect())))
        } else {
            Ok((t, None))
        }
    }

    fn validate_alts(&self, sty: &Ty, alts: &[Alt]) -> R<Vec<Option<CtorSig>>> {
        let data: Option<(&DataDecl, &Vec<Mult>)> = match sty {
            Ty::Data(t, args) => self.decls.data(t).map(|d| (d, args)),
            _ => None,
        };
        let mut sigs = Vec::new();
        for alt in alts {
            let Pattern::Con(k, xs) = &alt.pat else {
                sigs.push(None);
                continue;
            };
            let Some((_, args)) = data.filter(|(d, _)| d.ctors.iter().any(|c| c.name == *k)) else {
                return self.err(TypeErrorKind::TypeMismatch, format!("pattern {k} does not match type {sty}"));
            };
            let sig = self.decls.ctor_signature(k, args).map_err(|e| TypeError {
                kind: TypeErrorKind::TypeMismatch,
                path: self.path.clone(),
                message: e.to_string(),
            })?;
            if xs.len() != sig.fields.len() {
                return self.err(
                    TypeErrorKind::TypeMismatch,
                    format!("{k} has {} fields, pattern binds {}", sig.fields.len(), xs.len()),
                );
            }
            for ((x, m), (_, fm)) in xs.iter().zip(&sig.fields) {
                if m != fm {
                    return self.err(
                        TypeErrorKind::MultiplicityMismatch,
                        format!("pattern variable {x} bound at {m}, field has multiplicity {fm}"),
                    );
                }
            }
            sigs.push(Some(sig));
        }
        if !alts.iter().any(|a| a.pat == Pattern::Wild) {
            match data {
                Some((d, _)) => {
                    if let Some(c) = d
                        .ctors
                        .iter()
                        .find(|c| !alts.iter().any(|a| matches!(&a.pat, Pattern::Con(k, _) if *k == c.name)))
                    {
                        return self.err(TypeErrorKind::NonExhaustiveCase, format!("missing alternative for {}", c.name));
                    }
                }
                None => return self.err(TypeErrorKind::NonExhaustiveCase, format!("no alternative covers {sty}")),
            }
        }
        Ok(sigs)
    }

    fn case(&mut self, s: &Expr, z: &Name, ann: &Option<UsageEnv>, zty: &Ty, alts: &[Alt]) -> R<(&'static str, Ty)> {
        self.ty_wf(zty)?;
        let start = self.log.len();
        let whnf = s.is_whnf();
        let (sty, fields) = if whnf { self.whnf_split(s)? } else { (self.child(0, s)?, None) };
        let consumed: Vec<Resource> = self.log[start..].to_vec();
        self.expect_ty(&sty, zty)?;
        let ds = env_of(&consumed);
        self.check_annotation(ann, &ds)?;
        self.envs.insert(self.path.clone(), ds);
        let sigs = self.validate_alts(&sty, alts)?;
        let matching = if whnf {
            let head = match s.spine().0 {
                Expr::Ctor(k) if fields.is_some() => Some(k.clone()),
                _ => None,
            };
            alts.iter()
                .position(|a| matches!((&a.pat, &head), (Pattern::Con(k, _), Some(h)) if k == h))
                .or_else(|| alts.iter().position(|a| a.pat == Pattern::Wild))
        } else {
            None
        };
        let mid = self.delta.clone();
        let mid_log = self.log.len();
        let mut results = Vec::new();
        for (i, alt) in alts.iter().enumerate() {
            self.delta = mid.clone();
            self.log.truncate(mid_log);
            let mode = if Some(i) == matching {
                AltMode::Whnf(fields.clone().unwrap_or_else(|| vec![consumed.clone()]))
            } else {
                AltMode::NotWhnf(consumed.clone())
            };
            self.path.push(i as u32 + 1);
            let r = self.alt(alt, z, &sty, sigs[i].as_ref(), &mode);
            self.path.pop();
            let t = r?;
            results.push((std::mem::take(&mut self.delta), self.log.split_off(mid_log), t));
        }
        let (first_delta, first_log, first_ty) = results[0].clone();
        for (i, (_, _, t)) in results.iter().enumerate().skip(1) {
            self.path.push(i as u32 + 1);
            let r = self.expect_ty(t, &first_ty);
            self.path.pop();
            r?;
        }
        let base = sorted_keys(&first_delta);
        if self.relaxed {
            let mut delta = first_delta.clone();
            delta.retain(|r| results.iter().all(|(d, _, _)| d.iter().any(|o| o.key == r.key)));
            let mut log = first_log;
            for (_, l, _) in &results[1..] {
                for r in l {
                    if !log.iter().any(|o| o.key == r.key) {
                        log.push(r.clone());
                    }
                }
            }
            self.delta = delta;
            self.log.extend(log);
        } else {
            for (i, (d, _, _)) in results.iter().enumerate().skip(1) {
                let other = sorted_keys(d);
                if other != base {
                    let diff = base
                        .iter()
                        .find(|k| !other.contains(k))
                        .or_else(|| other.iter().find(|k| !base.contains(k)))
                        .cloned()
                        .unwrap();
                    self.path.push(i as u32 + 1);
                    let r = self.err(
                        TypeErrorKind::LinearityViolation(Linearity::Discarded),
                        format!("{diff} (alternatives consume different resources)"),
                    );
                    self.path.pop();
                    return r;
                }
            }
            self.delta = first_delta;
            self.log.extend(first_log);
        }
        Ok((if whnf { "Case_WHNF" } else { "Case_NotWHNF" }, first_ty))
    }

    /// Type one alternative. The caller's Δ holds everything except the
    /// scrutinee resources, which `mode` supplies.
    fn alt(&mut self, alt: &Alt, z: &Name, sty: &Ty, sig: Option<&CtorSig>, mode: &AltMode) -> R<Ty> {
        let din = self.trace.is_some().then(|| self.keys());
        let (whnf, extra): (bool, Vec<Resource>) = match mode {
            AltMode::Whnf(fields) => (true, fields.concat()),
            AltMode::NotWhnf(rs) => (false, rs.iter().map(|r| r.irrelevant()).collect()),
        };
        let n_scope = self.scope.len();
        let start = self.log.len();
        let rule = match (&alt.pat, sig) {
            (Pattern::Con(k, xs), Some(sig)) => {
                if sig.linear.is_empty() {
                    self.scope.push((z.clone(), Entry::Delta(sty.clone(), UsageEnv::new())));
                    for ((x, _), (fty, _)) in xs.iter().zip(&sig.fields) {
                        self.scope.push((x.clone(), Entry::Unr(fty.clone())));
                    }
                    "Alt0"
                } else {
                    self.delta.extend(extra.iter().cloned());
                    self.scope.push((z.clone(), Entry::Delta(sty.clone(), env_of(&extra))));
                    let n = sig.linear.len();
                    if !whnf {
                        for r in &extra {
                            self.arity.insert((r.key.clone(), k.clone()), n);
                        }
                    }
                    for (j, ((x, _), (fty, fm))) in xs.iter().zip(&sig.fields).enumerate() {
                        let entry = if !fm.is_linear() {
                            Entry::Unr(fty.clone())
                        } else {
                            let li = sig.linear.iter().position(|&p| p == j).unwrap();
                            let env = match mode {
                                AltMode::Whnf(fields) => env_of(fields.get(li).map_or(&[][..], |v| v)),
                                AltMode::NotWhnf(_) => env_of(&extra)
                                    .map_keys(|key| key.tagged(Tag { ctor: k.clone(), index: li as u32 + 1 })),
                            };
                            Entry::Delta(fty.clone(), env)
                        };
                        self.scope.push((x.clone(), entry));
                    }
                    if whnf {
                        "AltN_WHNF"
                    } else {
                        "AltN_NotWHNF"
                    }
                }
            }
            _ => {
                self.delta.extend(extra.iter().cloned());
                self.scope.push((z.clone(), Entry::Delta(sty.clone(), env_of(&extra))));
                "Alt_"
            }
        };
        let t = self.infer(&alt.rhs);
        self.scope.truncate(n_scope);
        let t = t?;
        self.merge_families();
        for r in &self.delta {
            if let Some(e) = extra.iter().find(|e| related(&r.key, &e.key)) {
                let kind = if r.key.tags.len() > e.key.tags.len() {
                    TypeErrorKind::TagMismatch
                } else {
                    TypeErrorKind::LinearityViolation(Linearity::Discarded)
                };
                return self.err(kind, r.key.to_string());
            }
        }
        let tail: Vec<Resource> =
            self.log.split_off(start).into_iter().filter(|r| !extra.iter().any(|e| related(&r.key, &e.key))).collect();
        self.log.extend(tail);
        if let Some(din) = din {
            self.record(rule, din);
        }
        Ok(t)
    }
}

fn elaborate(e: &mut Expr, path: &mut Path, envs: &HashMap<Path, UsageEnv>) {
    match e {
        Expr::Let(b, _) => b.env = envs.get(path).cloned(),
        Expr::LetRec(bs, _) => {
            for b in bs {
                b.env = envs.get(path).cloned();
            }
        }
        Expr::Case(_, _, env, _, _) => *env = envs.get(path).cloned(),
        _ => {}
    }
    let n = e.children().len() as u32;
    for i in 0..n {
        path.push(i);
        elaborate(e.child_mut(i).unwrap(), path, envs);
        path.pop();
    }
}

fn run(p: &Program, trace: bool) -> (Result<Checked, TypeError>, Vec<TraceRecord>) {
    let mut c = Checker::new(&p.decls);
    if trace {
        c.trace = Some(Vec::new());
    }
    let r = check_in(&mut c, p);
    (r, c.trace.take().unwrap_or_default())
}

fn check_in(c: &mut Checker, p: &Program) -> R<Checked> {
    for a in &p.assumes {
        c.ty_wf(&a.ty)?;
        c.check_mult(&a.mult)?;
        if a.mult == Mult::Many {
            c.scope.push((a.name.clone(), Entry::Unr(a.ty.clone())));
        } else {
            c.scope.push((a.name.clone(), Entry::Lin(a.ty.clone(), a.mult.clone())));
            c.delta.push(Resource { key: ResKey::plain(a.name.clone()), ty: a.ty.clone(), mult: a.mult.clone() });
        }
    }
    let ty = c.infer(&p.main)?;
    c.merge_families();
    if !c.delta.is_empty() {
        return c.err(TypeErrorKind::LinearityViolation(Linearity::LeftOver), render_keys(&c.keys()));
    }
    let mut main = p.main.clone();
    elaborate(&mut main, &mut Vec::new(), &c.envs);
    let program = Program { main, ..p.clone() };
    Ok(Checked { ty, program, types: std::mem::take(&mut c.types) })
}

/// Check a whole program: `main` must consume every linear assumption.
pub fn check_program(p: &Program) -> Result<Checked, TypeError> {
    run(p, false).0
}

/// As [`check_program`], also returning one record per rule application.
pub fn check_program_traced(p: &Program) -> (Result<Checked, TypeError>, Vec<TraceRecord>) {
    run(p, true)
}

/// Infer the type of `e` and return the resources it leaves unconsumed.
pub fn infer(decls: &Decls, ctx: &TypingCtx, e: &Expr) -> Result<(Ty, Vec<Resource>), TypeError> {
    let mut c = Checker::from_ctx(decls, ctx);
    let t = c.infer(e)?;
    Ok((t, c.delta))
}

/// Infer `e` and require every resource of the context to be consumed.
pub fn check_closed(decls: &Decls, ctx: &TypingCtx, e: &Expr) -> Result<Ty, TypeError> {
    let mut c = Checker::from_ctx(decls, ctx);
    let t = c.infer(e)?;
    c.merge_families();
    if !c.delta.is_empty() {
        return c.err(TypeErrorKind::LinearityViolation(Linearity::LeftOver), render_keys(&c.keys()));
    }
    Ok(t)
}

pub fn mult_wf(ctx: &TypingCtx, m: &Mult) -> bool {
    match m {
        Mult::One | Mult::Many => true,
        Mult::Var(p) => ctx.gamma.iter().rev().find(|(n, _)| n == p).is_some_and(|(_, e)| *e == Entry::MultVar),
    }
}

/// The ⊩ judgement: for a constructor application, the resources of each
/// linear argument; for an abstraction or partial application, everything
/// it consumes as a single group.
pub fn check_whnf_split(decls: &Decls, ctx: &TypingCtx, e: &Expr) -> Result<(Ty, Vec<UsageEnv>), TypeError> {
    let mut c = Checker::from_ctx(decls, ctx);
    if !e.is_whnf() {
        return c.err(TypeErrorKind::TypeMismatch, "expression is not in weak head normal form");
    }
    let start = c.log.len();
    c.path.push(0);
    let r = c.spine_split(e);
    c.path.pop();
    let (t, args) = r?;
    let saturated = matches!(e.spine().0, Expr::Ctor(_)) && matches!(t, Ty::Data(..));
    let envs = if saturated {
        args.iter().filter(|(m, _)| m.is_linear()).map(|(_, rs)| env_of(rs)).collect()
    } else {
        vec![env_of(&c.log[start..])]
    };
    Ok((t, envs))
}

/// Type a single alternative. `ctx.delta` holds the resources other than
/// the scrutinee's; `mode` supplies those. Returns the alternative's type
/// and the resources left over.
pub fn check_alt(
    decls: &Decls,
    ctx: &TypingCtx,
    alt: &Alt,
    mode: &AltMode,
    z: &Name,
    scrut_ty: &Ty,
) -> Result<(Ty, Vec<Resource>), TypeError> {
    let mut c = Checker::from_ctx(decls, ctx);
    let sigs = c.validate_alts(scrut_ty, std::slice::from_ref(alt)).or_else(|e| {
        if e.kind == TypeErrorKind::NonExhaustiveCase {
            let sig = match (&alt.pat, scrut_ty) {
                (Pattern::Con(k, _), Ty::Data(_, args)) => decls.ctor_signature(k, args).ok(),
                _ => None,
            };
            Ok(vec![sig])
        } else {
            Err(e)
        }
    })?;
    let t = c.alt(alt, z, scrut_ty, sigs[0].as_ref(), mode)?;
    Ok((t, c.delta))
}

/// Split the resource `key` of `delta` into one fragment per linear field
/// of `k`.
pub fn split_on_demand(decls: &Decls, delta: &[Resource], key: &ResKey, k: &str) -> Result<Vec<Resource>, TypeError> {
    let fail = |kind, message: String| Err(TypeError { kind, path: Vec::new(), message });
    let Some(i) = delta.iter().position(|r| r.key == *key) else {
        return fail(TypeErrorKind::LinearityViolation(Linearity::DoubleUse), key.name.to_string());
    };
    let n = decls.linear_arity(k).unwrap_or(0);
    if n == 0 {
        return fail(TypeErrorKind::TagMismatch, format!("{k} has no linear fields to split {key} into"));
    }
    if delta.iter().any(|r| r.key.name == key.name && r.key.depth == key.depth && r.key.tags.len() > key.tags.len()) {
        return fail(TypeErrorKind::TagMismatch, format!("{key} is already split"));
    }
    let mut out = delta.to_vec();
    let r = out.remove(i);
    for j in 1..=n {
        out.push(Resource { key: r.key.tagged(Tag { ctor: k.to_string(), index: j as u32 }), ..r.clone() });
    }
    Ok(out)
}

/// Shared usage environment of a recursive binding group.
pub fn infer_rec_usage(decls: &Decls, ctx: &TypingCtx, binds: &[Bind]) -> Result<UsageEnv, TypeError> {
    Checker::from_ctx(decls, ctx).rec_usage(binds)
}
