//! Abstract syntax of the calculus: multiplicities, types, usage
//! environments, terms, and datatype declarations.

mod alpha;
mod decls;
mod subst;

use std::collections::BTreeMap;

pub use alpha::{alpha_eq, alpha_eq_ty, alpha_eq_with};
pub use decls::{CtorSig, DataDecl, CtorDecl, Decls, SigError};
pub use subst::{
    free_mult_vars, free_mult_vars_ty, free_vars, refresh_binders, rename, strip_annotations,
    subst_expr, subst_expr_fresh, subst_mult_expr, subst_mult_ty,
};

pub use crate::name::Name;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mult {
    One,
    Many,
    Var(Name),
}

impl Mult {
    /// Anything but ω must be used exactly once.
    pub fn is_linear(&self) -> bool {
        !matches!(self, Mult::Many)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Ty {
    Data(String, Vec<Mult>),
    Fun(Box<Ty>, Mult, Box<Ty>),
    Forall(Name, Box<Ty>),
}

impl Ty {
    pub fn data(name: &str) -> Ty {
        Ty::Data(name.to_string(), Vec::new())
    }

    pub fn fun(arg: Ty, mult: Mult, res: Ty) -> Ty {
        Ty::Fun(Box::new(arg), mult, Box::new(res))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Tag {
    pub ctor: String,
    pub index: u32,
}

/// Identity of a linear resource: the variable, how many case scrutinies
/// deep it has been made irrelevant, and the split fragments it belongs to.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ResKey {
    pub name: Name,
    pub depth: u32,
    pub tags: Vec<Tag>,
}

impl ResKey {
    pub fn plain(name: Name) -> ResKey {
        ResKey { name, depth: 0, tags: Vec::new() }
    }

    pub fn irrelevant(&self) -> ResKey {
        ResKey { name: self.name.clone(), depth: self.depth + 1, tags: self.tags.clone() }
    }

    pub fn tagged(&self, tag: Tag) -> ResKey {
        let mut tags = self.tags.clone();
        tags.push(tag);
        ResKey { name: self.name.clone(), depth: self.depth, tags }
    }

    /// `self` is `other` or a fragment (transitively) split from it.
    pub fn descends_from(&self, other: &ResKey) -> bool {
        self.name == other.name
            && self.depth == other.depth
            && self.tags.len() >= other.tags.len()
            && self.tags[..other.tags.len()] == other.tags[..]
    }
}

/// A usage environment: the resources a Δ-bound variable stands for.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct UsageEnv {
    entries: Vec<(ResKey, Mult)>,
}

impl UsageEnv {
    pub fn new() -> UsageEnv {
        UsageEnv::default()
    }

    pub fn from_entries(entries: impl IntoIterator<Item = (ResKey, Mult)>) -> UsageEnv {
        let mut entries: Vec<_> = entries.into_iter().collect();
        entries.sort();
        UsageEnv { entries }
    }

    pub fn entries(&self) -> &[(ResKey, Mult)] {
        &self.entries
    }

    pub fn keys(&self) -> impl Iterator<Item = &ResKey> {
        self.entries.iter().map(|(k, _)| k)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn contains(&self, key: &ResKey) -> bool {
        self.entries.iter().any(|(k, _)| k == key)
    }

    pub fn map_keys(&self, f: impl Fn(&ResKey) -> ResKey) -> UsageEnv {
        UsageEnv::from_entries(self.entries.iter().map(|(k, m)| (f(k), m.clone())))
    }

    pub fn retain(&mut self, f: impl Fn(&ResKey) -> bool) {
        self.entries.retain(|(k, _)| f(k));
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Pattern {
    Wild,
    Con(String, Vec<(Name, Mult)>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Alt {
    pub pat: Pattern,
    pub rhs: Expr,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bind {
    pub var: Name,
    pub env: Option<UsageEnv>,
    pub ty: Ty,
    pub rhs: Expr,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Expr {
    Var(Name),
    Ctor(String),
    MultAbs(Name, Box<Expr>),
    MultApp(Box<Expr>, Mult),
    Abs(Name, Mult, Ty, Box<Expr>),
    App(Box<Expr>, Box<Expr>),
    Let(Box<Bind>, Box<Expr>),
    LetRec(Vec<Bind>, Box<Expr>),
    /// Scrutinee, case binder, binder usage env, binder type, alternatives.
    Case(Box<Expr>, Name, Option<UsageEnv>, Ty, Vec<Alt>),
}

/// Child indices from the root. Children are numbered: `MultAbs`/`Abs` body
/// 0; `MultApp` function 0; `App` function 0, argument 1; `Let` rhs 0,
/// body 1; `LetRec` rhs 0..n, body n; `Case` scrutinee 0, alternative i at
/// i + 1.
pub type Path = Vec<u32>;

impl Expr {
    pub fn var(name: &Name) -> Expr {
        Expr::Var(name.clone())
    }

    pub fn app(f: Expr, a: Expr) -> Expr {
        Expr::App(Box::new(f), Box::new(a))
    }

    pub fn apps(f: Expr, args: impl IntoIterator<Item = Expr>) -> Expr {
        args.into_iter().fold(f, Expr::app)
    }

    pub fn lam(x: &Name, m: Mult, ty: Ty, body: Expr) -> Expr {
        Expr::Abs(x.clone(), m, ty, Box::new(body))
    }

    pub fn let_(x: &Name, ty: Ty, rhs: Expr, body: Expr) -> Expr {
        Expr::Let(Box::new(Bind { var: x.clone(), env: None, ty, rhs }), Box::new(body))
    }

    pub fn children(&self) -> Vec<&Expr> {
        match self {
            Expr::Var(_) | Expr::Ctor(_) => vec![],
            Expr::MultAbs(_, b) | Expr::MultApp(b, _) | Expr::Abs(_, _, _, b) => vec![b],
            Expr::App(f, a) => vec![f, a],
            Expr::Let(bind, body) => vec![&bind.rhs, body],
            Expr::LetRec(binds, body) => {
                let mut v: Vec<&Expr> = binds.iter().map(|b| &b.rhs).collect();
                v.push(body);
                v
            }
            Expr::Case(s, _, _, _, alts) => {
                let mut v = vec![&**s];
                v.extend(alts.iter().map(|a| &a.rhs));
                v
            }
        }
    }

    pub fn child_mut(&mut self, i: u32) -> Option<&mut Expr> {
        let i = i as usize;
        match self {
            Expr::Var(_) | Expr::Ctor(_) => None,
            Expr::MultAbs(_, b) | Expr::MultApp(b, _) | Expr::Abs(_, _, _, b) => {
                (i == 0).then_some(&mut **b)
            }
            Expr::App(f, a) => match i {
                0 => Some(f),
                1 => Some(a),
                _ => None,
            },
            Expr::Let(bind, body) => match i {
                0 => Some(&mut bind.rhs),
                1 => Some(body),
                _ => None,
            },
            Expr::LetRec(binds, body) => {
                if i < binds.len() {
                    Some(&mut binds[i].rhs)
                } else if i == binds.len() {
                    Some(body)
                } else {
                    None
                }
            }
            Expr::Case(s, _, _, _, alts) => {
                if i == 0 {
                    Some(s)
                } else {
                    alts.get_mut(i - 1).map(|a| &mut a.rhs)
                }
            }
        }
    }

    pub fn at(&self, path: &[u32]) -> Option<&Expr> {
        let mut cur = self;
        for &i in path {
            cur = *cur.children().get(i as usize)?;
        }
        Some(cur)
    }

    pub fn at_mut(&mut self, path: &[u32]) -> Option<&mut Expr> {
        let mut cur = self;
        for &i in path {
            cur = cur.child_mut(i)?;
        }
        Some(cur)
    }

    /// All node paths in pre-order.
    pub fn paths(&self) -> Vec<Path> {
        fn go(e: &Expr, cur: &mut Path, out: &mut Vec<Path>) {
            out.push(cur.clone());
            for (i, c) in e.children().into_iter().enumerate() {
                cur.push(i as u32);
                go(c, cur, out);
                cur.pop();
            }
        }
        let mut out = Vec::new();
        go(self, &mut Vec::new(), &mut out);
        out
    }

    pub fn size(&self) -> usize {
        1 + self.children().iter().map(|c| c.size()).sum::<usize>()
    }

    /// Head of an application spine, looking through multiplicity
    /// applications, together with the term arguments in order.
    pub fn spine(&self) -> (&Expr, Vec<&Expr>, Vec<&Mult>) {
        let mut args = Vec::new();
        let mut mults = Vec::new();
        let mut cur = self;
        loop {
            match cur {
                Expr::App(f, a) => {
                    args.push(&**a);
                    cur = f;
                }
                Expr::MultApp(f, m) => {
                    mults.push(m);
                    cur = f;
                }
                _ => break,
            }
        }
        args.reverse();
        mults.reverse();
        (cur, args, mults)
    }

    /// Weak head normal form: abstractions and constructor applications.
    /// A bare variable is not in WHNF.
    pub fn is_whnf(&self) -> bool {
        match self {
            Expr::MultAbs(..) | Expr::Abs(..) | Expr::Ctor(_) => true,
            Expr::App(..) | Expr::MultApp(..) => matches!(self.spine().0, Expr::Ctor(_)),
            _ => false,
        }
    }
}

/// A top-level `assume x :m ty;` declaration: a free variable of `main`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Assume {
    pub name: Name,
    pub mult: Mult,
    pub ty: Ty,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Span {
    pub line: u32,
    pub col: u32,
    pub end_line: u32,
    pub end_col: u32,
}

#[derive(Clone, Debug)]
pub struct Program {
    pub decls: Decls,
    pub assumes: Vec<Assume>,
    pub main: Expr,
    pub spans: BTreeMap<Path, Span>,
}

impl Program {
    pub fn new(decls: Decls, assumes: Vec<Assume>, main: Expr) -> Program {
        Program { decls, assumes, main, spans: BTreeMap::new() }
    }

    pub fn with_main(&self, main: Expr) -> Program {
        Program {
            decls: self.decls.clone(),
            assumes: self.assumes.clone(),
            main,
            spans: BTreeMap::new(),
        }
    }

    /// Alpha-equivalence of the main terms, identifying assumptions by
    /// position and other free names by spelling.
    pub fn alpha_eq(&self, other: &Program) -> bool {
        if self.assumes.len() != other.assumes.len() {
            return false;
        }
        let mut pairs: Vec<(Name, Name)> = Vec::new();
        for (a, b) in self.assumes.iter().zip(&other.assumes) {
            if a.mult != b.mult || !alpha_eq_ty(&a.ty, &b.ty) {
                return false;
            }
            pairs.push((a.name.clone(), b.name.clone()));
        }
        let fb: Vec<Name> = free_vars(&other.main).into_iter().chain(free_mult_vars(&other.main)).collect();
        for x in free_vars(&self.main).into_iter().chain(free_mult_vars(&self.main)) {
            if pairs.iter().any(|(a, _)| *a == x) {
                continue;
            }
            if let Some(y) = fb.iter().find(|y| y.text() == x.text() && !pairs.iter().any(|(_, b)| b == *y)) {
                pairs.push((x, y.clone()));
            }
        }
        alpha_eq_with(&self.main, &other.main, pairs)
    }

    pub fn span(&self, path: &[u32]) -> Option<Span> {
        let mut p = path.to_vec();
        loop {
            if let Some(s) = self.spans.get(&p) {
                return Some(*s);
            }
            p.pop()?;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(x: &Name, y: &Name) -> Expr {
        Expr::apps(Expr::Ctor("MkPair".into()), [Expr::var(x), Expr::var(y)])
    }

    #[test]
    fn whnf_classification() {
        let x = Name::fresh("x");
        let y = Name::fresh("y");
        assert!(Expr::lam(&x, Mult::One, Ty::data("a"), Expr::var(&x)).is_whnf());
        assert!(pair(&x, &y).is_whnf());
        assert!(!Expr::var(&x).is_whnf());
        assert!(!Expr::app(Expr::var(&x), Expr::var(&y)).is_whnf());
        let inst = Expr::app(
            Expr::MultApp(Box::new(Expr::Ctor("MkQ".into())), Mult::One),
            Expr::var(&x),
        );
        assert!(inst.is_whnf());
    }

    #[test]
    fn child_paths_follow_documented_order() {
        let x = Name::fresh("x");
        let y = Name::fresh("y");
        let e = Expr::let_(&y, Ty::data("b"), Expr::var(&x), pair(&x, &y));
        assert_eq!(e.at(&[0]), Some(&Expr::var(&x)));
        assert_eq!(e.at(&[1, 1]), Some(&Expr::var(&y)));
        assert_eq!(e.paths().len(), e.size());
    }

    #[test]
    fn fragment_descent() {
        let x = Name::fresh("x");
        let k = ResKey::plain(x).irrelevant();
        let f = k.tagged(Tag { ctor: "K".into(), index: 2 });
        assert!(f.descends_from(&k));
        assert!(!k.descends_from(&f));
        assert!(!f.descends_from(&ResKey::plain(f.name.clone())));
    }
}
