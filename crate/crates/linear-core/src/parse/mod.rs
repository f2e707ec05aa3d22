//! Concrete syntax: lexer, recursive-descent parser, and name resolution.
//!
//! Every binder is given a fresh [`Name`] during resolution, so names in
//! the resulting AST are unique even when the source reuses a spelling.

pub mod lexer;

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use crate::ir::{
    Alt, Assume, Bind, CtorDecl, DataDecl, Decls, Expr, Mult, Name, Path, Pattern, Program,
    ResKey, Span, Tag, Ty, UsageEnv,
};
use lexer::{lex, Tok, Token};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{col}: {message}")]
pub struct ParseError {
    pub line: u32,
    pub col: u32,
    pub message: String,
    pub expected: Vec<String>,
}

impl ParseError {
    pub(crate) fn at(line: u32, col: u32, message: impl Into<String>) -> ParseError {
        ParseError { line, col, message: message.into(), expected: Vec::new() }
    }
}

type Pos = (u32, u32);

/// A constructor with its position and fields.
type RCtor = (String, Pos, Vec<(RTy, RMult)>);

#[derive(Debug, Clone)]
enum RMult {
    One,
    Many,
    Var(String),
}

#[derive(Debug, Clone)]
enum RTy {
    Data(String, Vec<RMult>),
    Fun(Box<RTy>, RMult, Box<RTy>),
    Forall(String, Box<RTy>),
}

#[derive(Debug)]
struct REntry {
    name: String,
    depth: u32,
    tags: Vec<Tag>,
    mult: RMult,
}

#[derive(Debug)]
struct RBind {
    var: String,
    pos: Pos,
    env: Option<Vec<REntry>>,
    ty: RTy,
    rhs: RExpr,
}

#[derive(Debug)]
enum RPat {
    Wild,
    Con(String, Vec<(String, RMult, Pos)>),
}

#[derive(Debug)]
struct RExpr {
    kind: RKind,
    span: Span,
}

#[derive(Debug)]
enum RKind {
    Var(String),
    Ctor(String),
    MultAbs(String, Box<RExpr>),
    MultApp(Box<RExpr>, RMult),
    Abs(String, RMult, RTy, Box<RExpr>),
    App(Box<RExpr>, Box<RExpr>),
    Let(Box<RBind>, Box<RExpr>),
    LetRec(Vec<RBind>, Box<RExpr>),
    Case(Box<RExpr>, String, Option<Vec<REntry>>, RTy, Vec<(RPat, Pos, RExpr)>),
}

#[derive(Debug)]
enum RDecl {
    Data { tycon: String, params: Vec<String>, ctors: Vec<RCtor>, pos: Pos },
    Assume { name: String, mult: RMult, ty: RTy, pos: Pos },
}

struct Parser {
    toks: Vec<Token>,
    i: usize,
    last_end: Pos,
}

fn is_ctor_name(s: &str) -> bool {
    s.chars().next().is_some_and(|c| c.is_ascii_uppercase())
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.i].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.i + k).min(self.toks.len() - 1)].tok
    }

    fn pos(&self) -> Pos {
        let t = &self.toks[self.i];
        (t.line, t.col)
    }

    fn bump(&mut self) -> Tok {
        let t = &self.toks[self.i];
        self.last_end = (t.end_line, t.end_col);
        let tok = t.tok.clone();
        if self.i + 1 < self.toks.len() {
            self.i += 1;
        }
        tok
    }

    fn fail<T>(&self, expected: &[&str]) -> Result<T, ParseError> {
        let t = &self.toks[self.i];
        Err(ParseError {
            line: t.line,
            col: t.col,
            message: format!("expected {}, found {}", expected.join(" or "), t.tok.describe()),
            expected: expected.iter().map(|s| s.to_string()).collect(),
        })
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(t) if *t == s)
    }

    fn is_kw(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Kw(t) if *t == s)
    }

    fn sym(&mut self, s: &'static str) -> Result<(), ParseError> {
        if self.is_sym(s) {
            self.bump();
            Ok(())
        } else {
            self.fail(&[&format!("`{s}`")])
        }
    }

    fn kw(&mut self, s: &'static str) -> Result<(), ParseError> {
        if self.is_kw(s) {
            self.bump();
            Ok(())
        } else {
            self.fail(&[&format!("`{s}`")])
        }
    }

    fn ident(&mut self) -> Result<(String, Pos), ParseError> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok((s, pos))
            }
            _ => self.fail(&["identifier"]),
        }
    }

    fn var_name(&mut self) -> Result<(String, Pos), ParseError> {
        match self.peek() {
            Tok::Ident(s) if !is_ctor_name(s) => self.ident(),
            _ => self.fail(&["variable name"]),
        }
    }

    fn ctor_name(&mut self) -> Result<(String, Pos), ParseError> {
        match self.peek() {
            Tok::Ident(s) if is_ctor_name(s) => self.ident(),
            _ => self.fail(&["constructor name"]),
        }
    }

    fn span_from(&self, start: Pos) -> Span {
        Span { line: start.0, col: start.1, end_line: self.last_end.0, end_col: self.last_end.1 }
    }

    fn mult(&mut self) -> Result<RMult, ParseError> {
        match self.peek().clone() {
            Tok::Int(1) => {
                self.bump();
                Ok(RMult::One)
            }
            Tok::Ident(s) if s == "w" => {
                self.bump();
                Ok(RMult::Many)
            }
            Tok::Ident(s) if !is_ctor_name(&s) => {
                self.bump();
                Ok(RMult::Var(s))
            }
            _ => self.fail(&["multiplicity (`1`, `w` or a variable)"]),
        }
    }

    fn starts_mult(&self) -> bool {
        matches!(self.peek(), Tok::Int(1)) || matches!(self.peek(), Tok::Ident(s) if !is_ctor_name(s))
    }

    fn ty(&mut self) -> Result<RTy, ParseError> {
        if self.is_kw("forall") {
            self.bump();
            let (p, _) = self.var_name()?;
            self.sym(".")?;
            return Ok(RTy::Forall(p, Box::new(self.ty()?)));
        }
        let arg = self.btype()?;
        if self.is_sym("->") {
            self.bump();
            self.sym("@")?;
            let m = self.mult()?;
            let res = self.ty()?;
            Ok(RTy::Fun(Box::new(arg), m, Box::new(res)))
        } else {
            Ok(arg)
        }
    }

    fn btype(&mut self) -> Result<RTy, ParseError> {
        if self.is_sym("(") {
            self.bump();
            let t = self.ty()?;
            self.sym(")")?;
            return Ok(t);
        }
        let (name, _) = self.ident()?;
        let mut args = Vec::new();
        while self.starts_mult() {
            args.push(self.mult()?);
        }
        Ok(RTy::Data(name, args))
    }

    fn atype(&mut self) -> Result<RTy, ParseError> {
        if self.is_sym("(") {
            self.bump();
            let t = self.ty()?;
            self.sym(")")?;
            Ok(t)
        } else {
            let (name, _) = self.ident()?;
            Ok(RTy::Data(name, Vec::new()))
        }
    }

    fn usage_ann(&mut self) -> Result<Option<Vec<REntry>>, ParseError> {
        if !(self.is_sym(":") && *self.peek_at(1) == Tok::Delta) {
            return Ok(None);
        }
        self.bump();
        self.bump();
        self.sym("{")?;
        let mut entries = Vec::new();
        if !self.is_sym("}") {
            loop {
                entries.push(self.usage_entry()?);
                if self.is_sym(",") {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.sym("}")?;
        Ok(Some(entries))
    }

    fn usage_entry(&mut self) -> Result<REntry, ParseError> {
        let mut depth = 0;
        while self.is_sym("[") {
            self.bump();
            depth += 1;
        }
        let (name, _) = self.var_name()?;
        for _ in 0..depth {
            self.sym("]")?;
        }
        let mut tags = Vec::new();
        while self.is_sym("#") {
            self.bump();
            let (ctor, _) = self.ctor_name()?;
            self.sym(".")?;
            let index = match self.peek() {
                Tok::Int(n) if *n >= 1 => *n,
                _ => return self.fail(&["positive field index"]),
            };
            self.bump();
            tags.push(Tag { ctor, index });
        }
        self.sym(":")?;
        let mult = self.mult()?;
        Ok(REntry { name, depth, tags, mult })
    }

    fn bind(&mut self) -> Result<RBind, ParseError> {
        let (var, pos) = self.var_name()?;
        let env = self.usage_ann()?;
        self.sym(":")?;
        let ty = self.ty()?;
        self.sym("=")?;
        let rhs = self.expr()?;
        Ok(RBind { var, pos, env, ty, rhs })
    }

    fn expr(&mut self) -> Result<RExpr, ParseError> {
        let start = self.pos();
        let kind = match self.peek() {
            Tok::Sym("\\") => {
                self.bump();
                self.sym("(")?;
                let (x, _) = self.var_name()?;
                self.sym(":")?;
                let m = self.mult()?;
                let t = self.ty()?;
                self.sym(")")?;
                self.sym(".")?;
                RKind::Abs(x, m, t, Box::new(self.expr()?))
            }
            Tok::Sym("/\\") => {
                self.bump();
                let (p, _) = self.var_name()?;
                self.sym(".")?;
                RKind::MultAbs(p, Box::new(self.expr()?))
            }
            Tok::Kw("let") => {
                self.bump();
                let b = self.bind()?;
                self.kw("in")?;
                RKind::Let(Box::new(b), Box::new(self.expr()?))
            }
            Tok::Kw("letrec") => {
                self.bump();
                let mut binds = Vec::new();
                loop {
                    binds.push(self.bind()?);
                    self.sym(";")?;
                    if self.is_kw("in") {
                        break;
                    }
                }
                self.kw("in")?;
                RKind::LetRec(binds, Box::new(self.expr()?))
            }
            Tok::Kw("case") => {
                self.bump();
                let scrut = self.expr()?;
                self.kw("of")?;
                let (z, _) = self.var_name()?;
                let env = self.usage_ann()?;
                self.sym(":")?;
                let ty = self.ty()?;
                self.sym("{")?;
                let mut alts = Vec::new();
                loop {
                    let pos = self.pos();
                    let pat = self.pattern()?;
                    self.sym("=>")?;
                    alts.push((pat, pos, self.expr()?));
                    if self.is_sym(";") {
                        self.bump();
                    }
                    if self.is_sym("}") {
                        break;
                    }
                }
                self.sym("}")?;
                RKind::Case(Box::new(scrut), z, env, ty, alts)
            }
            _ => return self.app(),
        };
        Ok(RExpr { kind, span: self.span_from(start) })
    }

    fn pattern(&mut self) -> Result<RPat, ParseError> {
        if self.is_sym("_") {
            self.bump();
            return Ok(RPat::Wild);
        }
        let (k, _) = match self.peek() {
            Tok::Ident(s) if is_ctor_name(s) => self.ident()?,
            _ => return self.fail(&["`_`", "constructor pattern"]),
        };
        let mut binders = Vec::new();
        while matches!(self.peek(), Tok::Ident(_)) {
            let (x, pos) = self.var_name()?;
            self.sym("@")?;
            binders.push((x, self.mult()?, pos));
        }
        Ok(RPat::Con(k, binders))
    }

    fn starts_atom(&self) -> bool {
        matches!(self.peek(), Tok::Ident(_)) || self.is_sym("(")
    }

    fn app(&mut self) -> Result<RExpr, ParseError> {
        let start = self.pos();
        let mut e = self.atom()?;
        loop {
            if self.starts_atom() {
                let a = self.atom()?;
                e = RExpr { kind: RKind::App(Box::new(e), Box::new(a)), span: self.span_from(start) };
            } else if self.is_sym("@") {
                self.bump();
                let m = self.mult()?;
                e = RExpr { kind: RKind::MultApp(Box::new(e), m), span: self.span_from(start) };
            } else {
                return Ok(e);
            }
        }
    }

    fn atom(&mut self) -> Result<RExpr, ParseError> {
        let start = self.pos();
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                let kind = if is_ctor_name(&s) { RKind::Ctor(s) } else { RKind::Var(s) };
                Ok(RExpr { kind, span: self.span_from(start) })
            }
            Tok::Sym("(") => {
                self.bump();
                let e = self.expr()?;
                self.sym(")")?;
                Ok(e)
            }
            _ => self.fail(&["expression"]),
        }
    }

    fn decl(&mut self) -> Result<RDecl, ParseError> {
        let pos = self.pos();
        if self.is_kw("assume") {
            self.bump();
            let (name, _) = self.var_name()?;
            self.sym(":")?;
            let mult = self.mult()?;
            let ty = self.ty()?;
            self.sym(";")?;
            return Ok(RDecl::Assume { name, mult, ty, pos });
        }
        self.kw("data")?;
        let (tycon, _) = self.ident()?;
        let mut params = Vec::new();
        while matches!(self.peek(), Tok::Ident(_)) {
            params.push(self.var_name()?.0);
        }
        let mut ctors = Vec::new();
        if self.is_sym("=") {
            self.bump();
            loop {
                let (k, kpos) = self.ctor_name()?;
                let mut fields = Vec::new();
                while matches!(self.peek(), Tok::Ident(_)) || self.is_sym("(") {
                    let t = self.atype()?;
                    self.sym("@")?;
                    fields.push((t, self.mult()?));
                }
                ctors.push((k, kpos, fields));
                if self.is_sym("|") {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.sym(";")?;
        Ok(RDecl::Data { tycon, params, ctors, pos })
    }

    fn program(&mut self) -> Result<(Vec<RDecl>, RExpr), ParseError> {
        let mut decls = Vec::new();
        while self.is_kw("data") || self.is_kw("assume") {
            decls.push(self.decl()?);
        }
        let main = self.expr()?;
        if *self.peek() != Tok::Eof {
            return self.fail(&["end of input"]);
        }
        Ok((decls, main))
    }
}

struct Resolver<'a> {
    decls: &'a Decls,
    vars: Vec<(String, Name)>,
    mvars: Vec<(String, Name)>,
    free: HashMap<String, Name>,
    free_mult: HashMap<String, Name>,
    spans: BTreeMap<Path, Span>,
    path: Path,
}

impl Resolver<'_> {
    fn var(&mut self, s: &str) -> Name {
        if let Some((_, n)) = self.vars.iter().rev().find(|(t, _)| t == s) {
            return n.clone();
        }
        self.free.entry(s.to_string()).or_insert_with(|| Name::fresh(s)).clone()
    }

    fn mult(&mut self, m: &RMult) -> Mult {
        match m {
            RMult::One => Mult::One,
            RMult::Many => Mult::Many,
            RMult::Var(s) => {
                if let Some((_, n)) = self.mvars.iter().rev().find(|(t, _)| t == s) {
                    return Mult::Var(n.clone());
                }
                Mult::Var(self.free_mult.entry(s.clone()).or_insert_with(|| Name::fresh(s)).clone())
            }
        }
    }

    fn ty(&mut self, t: &RTy) -> Ty {
        match t {
            RTy::Data(k, ms) => Ty::Data(k.clone(), ms.iter().map(|m| self.mult(m)).collect()),
            RTy::Fun(a, m, r) => {
                let m = self.mult(m);
                Ty::fun(self.ty(a), m, self.ty(r))
            }
            RTy::Forall(p, b) => {
                let n = Name::fresh(p);
                self.mvars.push((p.clone(), n.clone()));
                let b = self.ty(b);
                self.mvars.pop();
                Ty::Forall(n, Box::new(b))
            }
        }
    }

    fn env(&mut self, entries: &Option<Vec<REntry>>, pos: Pos) -> Result<Option<UsageEnv>, ParseError> {
        let Some(entries) = entries else { return Ok(None) };
        let mut resolved = Vec::new();
        for e in entries {
            if let Some(t) = e.tags.iter().find(|t| self.decls.ctor(&t.ctor).is_none()) {
                return Err(ParseError::at(pos.0, pos.1, format!("unknown constructor {}", t.ctor)));
            }
            let name = self.var(&e.name);
            resolved.push((ResKey { name, depth: e.depth, tags: e.tags.clone() }, self.mult(&e.mult)));
        }
        Ok(Some(UsageEnv::from_entries(resolved)))
    }

    fn child(&mut self, i: u32, e: &RExpr) -> Result<Expr, ParseError> {
        self.path.push(i);
        let r = self.expr(e);
        self.path.pop();
        r
    }

    fn scoped<T>(&mut self, names: &[(String, Name)], f: impl FnOnce(&mut Self) -> T) -> T {
        let n = self.vars.len();
        self.vars.extend(names.iter().cloned());
        let r = f(self);
        self.vars.truncate(n);
        r
    }

    fn expr(&mut self, e: &RExpr) -> Result<Expr, ParseError> {
        self.spans.insert(self.path.clone(), e.span);
        Ok(match &e.kind {
            RKind::Var(s) => Expr::Var(self.var(s)),
            RKind::Ctor(k) => {
                if self.decls.ctor(k).is_none() {
                    return Err(ParseError::at(e.span.line, e.span.col, format!("unknown constructor {k}")));
                }
                Expr::Ctor(k.clone())
            }
            RKind::MultAbs(p, b) => {
                let n = Name::fresh(p);
                self.mvars.push((p.clone(), n.clone()));
                let b = self.child(0, b);
                self.mvars.pop();
                Expr::MultAbs(n, Box::new(b?))
            }
            RKind::MultApp(f, m) => {
                let m = self.mult(m);
                Expr::MultApp(Box::new(self.child(0, f)?), m)
            }
            RKind::Abs(x, m, t, b) => {
                let m = self.mult(m);
                let t = self.ty(t);
                let n = Name::fresh(x);
                let b = self.scoped(&[(x.clone(), n.clone())], |r| r.child(0, b))?;
                Expr::Abs(n, m, t, Box::new(b))
            }
            RKind::App(f, a) => Expr::app(self.child(0, f)?, self.child(1, a)?),
            RKind::Let(b, body) => {
                let rhs = self.child(0, &b.rhs)?;
                let env = self.env(&b.env, b.pos)?;
                let ty = self.ty(&b.ty);
                let var = Name::fresh(&b.var);
                let body = self.scoped(&[(b.var.clone(), var.clone())], |r| r.child(1, body))?;
                Expr::Let(Box::new(Bind { var, env, ty, rhs }), Box::new(body))
            }
            RKind::LetRec(binds, body) => {
                for (i, b) in binds.iter().enumerate() {
                    if binds[..i].iter().any(|o| o.var == b.var) {
                        return Err(ParseError::at(b.pos.0, b.pos.1, format!("`{}` bound twice in letrec", b.var)));
                    }
                }
                let names: Vec<(String, Name)> = binds.iter().map(|b| (b.var.clone(), Name::fresh(&b.var))).collect();
                let n = binds.len() as u32;
                self.scoped(&names, |r| {
                    let mut out = Vec::new();
                    for (i, (b, (_, var))) in binds.iter().zip(&names).enumerate() {
                        let env = r.env(&b.env, b.pos)?;
                        let ty = r.ty(&b.ty);
                        let rhs = r.child(i as u32, &b.rhs)?;
                        out.push(Bind { var: var.clone(), env, ty, rhs });
                    }
                    Ok(Expr::LetRec(out, Box::new(r.child(n, body)?)))
                })?
            }
            RKind::Case(s, z, env, t, alts) => {
                let scrut = self.child(0, s)?;
                let env = self.env(env, (e.span.line, e.span.col))?;
                let ty = self.ty(t);
                let zn = Name::fresh(z);
                let mut out = Vec::new();
                for (i, (pat, pos, rhs)) in alts.iter().enumerate() {
                    let mut scope = vec![(z.clone(), zn.clone())];
                    let pat = match pat {
                        RPat::Wild => Pattern::Wild,
                        RPat::Con(k, xs) => {
                            if self.decls.ctor(k).is_none() {
                                return Err(ParseError::at(pos.0, pos.1, format!("unknown constructor {k}")));
                            }
                            let mut bs = Vec::new();
                            for (j, (x, m, xpos)) in xs.iter().enumerate() {
                                if xs[..j].iter().any(|(y, _, _)| y == x) {
                                    return Err(ParseError::at(xpos.0, xpos.1, format!("`{x}` bound twice in pattern")));
                                }
                                let n = Name::fresh(x);
                                scope.push((x.clone(), n.clone()));
                                bs.push((n, self.mult(m)));
                            }
                            Pattern::Con(k.clone(), bs)
                        }
                    };
                    let rhs = self.scoped(&scope, |r| r.child(i as u32 + 1, rhs))?;
                    out.push(Alt { pat, rhs });
                }
                Expr::Case(Box::new(scrut), zn, env, ty, out)
            }
        })
    }
}

fn resolve_decls(raw: &[RDecl]) -> Result<Decls, ParseError> {
    let mut out = Vec::new();
    let mut first_pos = (1, 1);
    for d in raw {
        let RDecl::Data { tycon, params, ctors, pos } = d else { continue };
        first_pos = *pos;
        let pnames: Vec<(String, Name)> = params.iter().map(|p| (p.clone(), Name::fresh(p))).collect();
        let mut r = Resolver {
            decls: &Decls::default(),
            vars: Vec::new(),
            mvars: pnames.clone(),
            free: HashMap::new(),
            free_mult: HashMap::new(),
            spans: BTreeMap::new(),
            path: Vec::new(),
        };
        let ctors = ctors
            .iter()
            .map(|(k, _, fields)| CtorDecl {
                name: k.clone(),
                fields: fields.iter().map(|(t, m)| (r.ty(t), r.mult(m))).collect(),
            })
            .collect();
        if let Some(p) = r.free_mult.keys().next() {
            return Err(ParseError::at(pos.0, pos.1, format!("multiplicity `{p}` is not a parameter of {tycon}")));
        }
        out.push(DataDecl { tycon: tycon.clone(), params: pnames.into_iter().map(|(_, n)| n).collect(), ctors });
    }
    Decls::new(out).map_err(|e| ParseError::at(first_pos.0, first_pos.1, e.to_string()))
}

pub fn parse_program(src: &str) -> Result<Program, ParseError> {
    let toks = lex(src)?;
    let mut p = Parser { toks, i: 0, last_end: (1, 1) };
    let (raw_decls, raw_main) = p.program()?;
    let decls = resolve_decls(&raw_decls)?;
    let mut r = Resolver {
        decls: &decls,
        vars: Vec::new(),
        mvars: Vec::new(),
        free: HashMap::new(),
        free_mult: HashMap::new(),
        spans: BTreeMap::new(),
        path: Vec::new(),
    };
    let mut assumes = Vec::new();
    for d in &raw_decls {
        if let RDecl::Assume { name, mult, ty, pos } = d {
            if r.vars.iter().any(|(s, _)| s == name) {
                return Err(ParseError::at(pos.0, pos.1, format!("`{name}` assumed twice")));
            }
            let n = Name::fresh(name);
            let mult = r.mult(mult);
            let ty = r.ty(ty);
            r.vars.push((name.clone(), n.clone()));
            assumes.push(Assume { name: n, mult, ty });
        }
    }
    let main = r.expr(&raw_main)?;
    let spans = std::mem::take(&mut r.spans);
    Ok(Program { decls, assumes, main, spans })
}

/// The expected verdict recorded in a `-- EXPECT: accept|reject` header.
pub fn expected_verdict(src: &str) -> Option<bool> {
    src.lines().find_map(|l| {
        let rest = l.trim().strip_prefix("--")?.trim().strip_prefix("EXPECT:")?.trim();
        match rest {
            "accept" => Some(true),
            "reject" => Some(false),
            _ => None,
        }
    })
}
