//! Pretty printing back to the concrete syntax.
//!
//! Output re-parses to an alpha-equivalent program. Distinct names that
//! share a spelling are told apart with primes.

use std::collections::{HashMap, HashSet};
use std::fmt;

use crate::ir::{free_mult_vars, free_vars, Alt, Bind, Expr, Mult, Name, Pattern, Program, ResKey, Ty, UsageEnv};
use crate::parse::lexer::KEYWORDS;

const WIDTH: usize = 80;

#[derive(Default)]
struct Namer {
    map: HashMap<Name, String>,
    used: HashSet<String>,
}

impl Namer {
    fn name(&mut self, n: &Name) -> String {
        if let Some(s) = self.map.get(n) {
            return s.clone();
        }
        let mut s = n.text().to_string();
        if s.is_empty() || s == "w" || s == "_" || KEYWORDS.contains(&s.as_str()) {
            s.push('\'');
        }
        while self.used.contains(&s) {
            s.push('\'');
        }
        self.used.insert(s.clone());
        self.map.insert(n.clone(), s.clone());
        s
    }

    fn seed(&mut self, e: &Expr) {
        for x in free_vars(e) {
            self.name(&x);
        }
        for p in free_mult_vars(e) {
            self.name(&p);
        }
    }

    fn mult(&mut self, m: &Mult) -> String {
        match m {
            Mult::One => "1".into(),
            Mult::Many => "w".into(),
            Mult::Var(p) => self.name(p),
        }
    }

    /// Level 0: anything. 1: argument of an arrow. 2: atomic.
    fn ty(&mut self, t: &Ty, level: u8) -> String {
        let s = match t {
            Ty::Data(k, ms) if ms.is_empty() => return k.clone(),
            Ty::Data(k, ms) => {
                let args: Vec<String> = ms.iter().map(|m| self.mult(m)).collect();
                let s = format!("{k} {}", args.join(" "));
                if level < 2 {
                    return s;
                }
                s
            }
            Ty::Fun(a, m, r) => format!("{} ->@{} {}", self.ty(a, 1), self.mult(m), self.ty(r, 0)),
            Ty::Forall(p, b) => format!("forall {}. {}", self.name(p), self.ty(b, 0)),
        };
        if level == 0 {
            s
        } else {
            format!("({s})")
        }
    }

    fn key(&mut self, k: &ResKey) -> String {
        let d = k.depth as usize;
        let mut s = format!("{}{}{}", "[".repeat(d), self.name(&k.name), "]".repeat(d));
        for t in &k.tags {
            s.push_str(&format!("#{}.{}", t.ctor, t.index));
        }
        s
    }

    fn env(&mut self, env: &UsageEnv) -> String {
        let parts: Vec<String> = env.entries().iter().map(|(k, m)| format!("{}:{}", self.key(k), self.mult(m))).collect();
        format!("Δ{{{}}}", parts.join(", "))
    }

    fn ann(&mut self, env: &Option<UsageEnv>) -> String {
        env.as_ref().map_or_else(String::new, |e| format!(" :{}", self.env(e)))
    }

    fn bind_head(&mut self, b: &Bind) -> String {
        let v = self.name(&b.var);
        let ann = self.ann(&b.env);
        format!("{v}{ann} : {}", self.ty(&b.ty, 0))
    }

    fn pat(&mut self, p: &Pattern) -> String {
        match p {
            Pattern::Wild => "_".into(),
            Pattern::Con(k, xs) => {
                let mut s = k.clone();
                for (x, m) in xs {
                    let x = self.name(x);
                    s.push_str(&format!(" {x}@{}", self.mult(m)));
                }
                s
            }
        }
    }

    fn case_head(&mut self, z: &Name, env: &Option<UsageEnv>, t: &Ty) -> String {
        let z = self.name(z);
        let ann = self.ann(env);
        format!("{z}{ann} : {}", self.ty(t, 0))
    }

    /// Single-line rendering. Level 0: anything. 1: application head.
    /// 2: atomic.
    fn flat(&mut self, e: &Expr, level: u8) -> String {
        let (s, own) = match e {
            Expr::Var(x) => return self.name(x),
            Expr::Ctor(k) => return k.clone(),
            Expr::App(f, a) => (format!("{} {}", self.flat(f, 1), self.flat(a, 2)), 1),
            Expr::MultApp(f, m) => (format!("{} @{}", self.flat(f, 1), self.mult(m)), 1),
            Expr::MultAbs(p, b) => (format!("/\\{}. {}", self.name(p), self.flat(b, 0)), 0),
            Expr::Abs(x, m, t, b) => {
                let x = self.name(x);
                (format!("\\({x} :{} {}). {}", self.mult(m), self.ty(t, 0), self.flat(b, 0)), 0)
            }
            Expr::Let(b, body) => {
                let rhs = self.flat(&b.rhs, 0);
                (format!("let {} = {rhs} in {}", self.bind_head(b), self.flat(body, 0)), 0)
            }
            Expr::LetRec(bs, body) => {
                let mut s = "letrec".to_string();
                for b in bs {
                    let head = self.bind_head(b);
                    s.push_str(&format!(" {head} = {};", self.flat(&b.rhs, 0)));
                }
                (format!("{s} in {}", self.flat(body, 0)), 0)
            }
            Expr::Case(s, z, env, t, alts) => {
                let scrut = self.flat(s, 0);
                let head = self.case_head(z, env, t);
                let alts: Vec<String> = alts.iter().map(|a| self.flat_alt(a)).collect();
                (format!("case {scrut} of {head} {{ {} }}", alts.join("; ")), 0)
            }
        };
        if own >= level {
            s
        } else {
            format!("({s})")
        }
    }

    fn flat_alt(&mut self, a: &Alt) -> String {
        let p = self.pat(&a.pat);
        format!("{p} => {}", self.flat(&a.rhs, 0))
    }

    /// Multi-line rendering at the given indentation when the flat form is
    /// too wide.
    fn doc(&mut self, e: &Expr, level: u8, indent: usize) -> String {
        let flat = self.flat(e, level);
        if flat.len() + indent <= WIDTH {
            return flat;
        }
        let pad = " ".repeat(indent + 2);
        let s = match e {
            Expr::Let(b, body) => {
                let head = self.bind_head(b);
                let rhs = self.doc(&b.rhs, 0, indent + 2);
                let body = self.doc(body, 0, indent);
                format!("let {head} =\n{pad}{rhs}\n{}in {body}", " ".repeat(indent))
            }
            Expr::LetRec(bs, body) => {
                let mut s = "letrec".to_string();
                for b in bs {
                    let head = self.bind_head(b);
                    let rhs = self.doc(&b.rhs, 0, indent + 4);
                    s.push_str(&format!("\n{pad}{head} =\n{pad}  {rhs};"));
                }
                let body = self.doc(body, 0, indent);
                format!("{s}\n{}in {body}", " ".repeat(indent))
            }
            Expr::Case(scrut, z, env, t, alts) => {
                let scrut = self.doc(scrut, 0, indent + 5);
                let head = self.case_head(z, env, t);
                let mut s = format!("case {scrut} of {head} {{");
                for (i, a) in alts.iter().enumerate() {
                    let p = self.pat(&a.pat);
                    let rhs = self.doc(&a.rhs, 0, indent + 4);
                    let sep = if i + 1 < alts.len() { ";" } else { "" };
                    s.push_str(&format!("\n{pad}{p} =>\n{pad}  {rhs}{sep}"));
                }
                format!("{s}\n{}}}", " ".repeat(indent))
            }
            Expr::Abs(x, m, t, b) => {
                let x = self.name(x);
                let head = format!("\\({x} :{} {}).", self.mult(m), self.ty(t, 0));
                format!("{head}\n{pad}{}", self.doc(b, 0, indent + 2))
            }
            Expr::MultAbs(p, b) => {
                let p = self.name(p);
                format!("/\\{p}.\n{pad}{}", self.doc(b, 0, indent + 2))
            }
            _ => return flat,
        };
        if level == 0 {
            s
        } else {
            format!("({s})")
        }
    }
}

pub fn pretty_expr(e: &Expr) -> String {
    let mut n = Namer::default();
    n.seed(e);
    n.doc(e, 0, 0)
}

pub fn pretty_ty(t: &Ty) -> String {
    Namer::default().ty(t, 0)
}

pub fn pretty_mult(m: &Mult) -> String {
    Namer::default().mult(m)
}

pub fn pretty_env(env: &UsageEnv) -> String {
    Namer::default().env(env)
}

pub fn pretty_program(p: &Program) -> String {
    let mut n = Namer::default();
    for a in &p.assumes {
        n.name(&a.name);
    }
    n.seed(&p.main);
    let mut out = String::new();
    for d in p.decls.iter() {
        let mut line = format!("data {}", d.tycon);
        for q in &d.params {
            line.push(' ');
            line.push_str(&n.name(q));
        }
        let ctors: Vec<String> = d
            .ctors
            .iter()
            .map(|c| {
                let mut s = c.name.clone();
                for (t, m) in &c.fields {
                    s.push_str(&format!(" {}@{}", n.ty(t, 2), n.mult(m)));
                }
                s
            })
            .collect();
        if !ctors.is_empty() {
            line.push_str(" = ");
            line.push_str(&ctors.join(" | "));
        }
        out.push_str(&line);
        out.push_str(";\n");
    }
    for a in &p.assumes {
        let x = n.name(&a.name);
        out.push_str(&format!("assume {x} :{} {};\n", n.mult(&a.mult), n.ty(&a.ty, 0)));
    }
    out.push_str(&n.doc(&p.main, 0, 0));
    out.push('\n');
    out
}

impl fmt::Display for Mult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&pretty_mult(self))
    }
}

impl fmt::Display for Ty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&pretty_ty(self))
    }
}

impl fmt::Display for UsageEnv {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&pretty_env(self))
    }
}

impl fmt::Display for ResKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&Namer::default().key(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_program;

    fn round_trip(src: &str) {
        let p = parse_program(src).unwrap();
        let text = pretty_program(&p);
        let q = parse_program(&text).unwrap_or_else(|e| panic!("{e}\n{text}"));
        assert!(p.alpha_eq(&q), "{text}");
    }

    #[test]
    fn simple_round_trips() {
        round_trip(r"\(x :1 a). x");
        round_trip(r"/\p. \(x :p a). x");
        round_trip(r"assume f :w forall p. a ->@p a; assume x :1 a; f @1 x");
        round_trip("data B = T | F; assume b :w B; case b of z : B { T => F; _ => z }");
        round_trip("data P = MkP B@1 B@w; data B = T; assume x :1 a; \
                    let y :Δ{x:1} : a = x in letrec g : a ->@w a = \\(v :w a). g v; in y");
    }

    #[test]
    fn shadowed_names_are_primed() {
        let p = parse_program(r"\(x :1 a). \(x :1 a). x").unwrap();
        let s = pretty_expr(&p.main);
        assert_eq!(s, r"\(x :1 a). \(x' :1 a). x'");
    }

    #[test]
    fn nested_lambda_argument_is_parenthesised() {
        round_trip(r"assume f :w (a ->@1 a) ->@1 a; f (\(y :1 a). y)");
        round_trip(r"(\(y :1 a). y) (\(y :1 a). y)");
    }

    #[test]
    fn wide_terms_break_lines() {
        let src = "data B = T | F; assume b :w B; case b of z : B { T => case b of zz : B { T => F; F => T }; F => case b of zzz : B { T => F; F => T } }";
        let p = parse_program(src).unwrap();
        let s = pretty_expr(&p.main);
        assert!(s.contains('\n'));
        round_trip(src);
    }

    #[test]
    fn types_print_with_arrow_precedence() {
        let a = Ty::data("a");
        let t = Ty::fun(Ty::fun(a.clone(), Mult::One, a.clone()), Mult::Many, a);
        assert_eq!(pretty_ty(&t), "(a ->@1 a) ->@w a");
    }
}
