//! Random programs for property tests.
//!
//! Generation is type-directed and tracks linear resources abstractly:
//! every linear resource is a token, and every variable in scope consumes
//! a set of tokens when used. A term is generated against the exact set
//! of tokens it has to consume, so most candidates typecheck; the checker
//! filters the rest.

use std::collections::BTreeSet;

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

use crate::check::{check_program, Checked};
use crate::ir::{Alt, Assume, Bind, Decls, Expr, Mult, Name, Pattern, Program, Ty};
use crate::parse::parse_program;

pub const PRELUDE: &str = "data Unit = MkUnit;\n\
                           data Bool = T | F;\n\
                           data P = MkP Bool@1 Bool@1;\n\
                           data M = MkM Bool@w Bool@1;\n\
                           data Q p = MkQ Bool@p;\n";

#[derive(Clone, Copy, Debug)]
pub struct GenConfig {
    pub depth: u32,
    /// No assumptions: the program can be run.
    pub closed: bool,
    pub max_size: usize,
}

impl Default for GenConfig {
    fn default() -> GenConfig {
        GenConfig { depth: 4, closed: true, max_size: 400 }
    }
}

pub fn prelude_decls() -> Decls {
    parse_program(&format!("{PRELUDE} MkUnit")).expect("prelude parses").decls
}

type Toks = BTreeSet<u32>;

const FINISH_FUEL: u32 = 64;

#[derive(Clone, Debug)]
struct Var {
    name: Name,
    ty: Ty,
    toks: Toks,
}

struct Gen<'d> {
    rng: StdRng,
    decls: &'d Decls,
    next_tok: u32,
    scope: Vec<Var>,
}

fn bool_ty() -> Ty {
    Ty::data("Bool")
}

impl<'d> Gen<'d> {
    fn tok(&mut self) -> u32 {
        self.next_tok += 1;
        self.next_tok
    }

    fn coin(&mut self, p: f64) -> bool {
        self.rng.gen_bool(p)
    }

    fn mult(&mut self) -> Mult {
        if self.coin(0.6) {
            Mult::One
        } else {
            Mult::Many
        }
    }

    fn data_ty(&mut self) -> Ty {
        match self.rng.gen_range(0..7) {
            0 => Ty::data("Unit"),
            1 | 2 => bool_ty(),
            3 => Ty::data("P"),
            4 => Ty::data("M"),
            5 => Ty::Data("Q".into(), vec![Mult::One]),
            _ => Ty::Data("Q".into(), vec![Mult::Many]),
        }
    }

    fn any_ty(&mut self) -> Ty {
        if self.coin(0.2) {
            let arg = if self.coin(0.7) { bool_ty() } else { Ty::data("Unit") };
            let m = self.mult();
            Ty::fun(arg, m, bool_ty())
        } else {
            self.data_ty()
        }
    }

    fn with<T>(&mut self, vars: Vec<Var>, f: impl FnOnce(&mut Self) -> T) -> T {
        let n = self.scope.len();
        self.scope.extend(vars);
        let r = f(self);
        self.scope.truncate(n);
        r
    }

    /// Randomly distribute `r` over the children marked in `allowed`.
    fn split(&mut self, r: &Toks, allowed: &[bool]) -> Option<Vec<Toks>> {
        let idx: Vec<usize> = (0..allowed.len()).filter(|&i| allowed[i]).collect();
        if idx.is_empty() && !r.is_empty() {
            return None;
        }
        let mut out = vec![Toks::new(); allowed.len()];
        for &t in r {
            out[*idx.choose(&mut self.rng).unwrap()].insert(t);
        }
        Some(out)
    }

    fn subset(&mut self, r: &Toks) -> Toks {
        let p = self.rng.gen_range(0.0..1.0);
        r.iter().copied().filter(|_| self.rng.gen_bool(p)).collect()
    }

    fn ctors(&self, t: &Ty) -> Vec<String> {
        let Ty::Data(d, _) = t else { return Vec::new() };
        self.decls.data(d).map(|d| d.ctors.iter().map(|c| c.name.clone()).collect()).unwrap_or_default()
    }

    fn sig(&self, k: &str, t: &Ty) -> crate::ir::CtorSig {
        let Ty::Data(_, args) = t else { unreachable!() };
        self.decls.ctor_signature(k, args).expect("prelude constructor")
    }

    fn ctor_head(&self, k: &str, t: &Ty) -> Expr {
        let Ty::Data(_, args) = t else { unreachable!() };
        args.iter().fold(Expr::Ctor(k.to_string()), |e, m| Expr::MultApp(Box::new(e), m.clone()))
    }

    fn expr(&mut self, t: &Ty, r: &Toks, d: u32) -> Expr {
        if d == 0 {
            return self.finish(t, r, FINISH_FUEL);
        }
        for _ in 0..4 {
            let e = match self.rng.gen_range(0..100) {
                0..=9 => self.atom(t, r),
                10..=19 => self.ctor(t, r, d),
                20..=27 => self.lam(t, r, d),
                28..=41 => self.app(t, r, d, true),
                42..=47 => self.app(t, r, d, false),
                48..=53 => self.app_var(t, r, d),
                54..=65 => Some(self.let_(t, r, d)),
                66..=69 => Some(self.letrec(t, r, d)),
                70..=77 => self.case_whnf(t, r, d),
                78..=93 => Some(self.case_not_whnf(t, r, d)),
                _ => self.mult_redex(t, r, d),
            };
            if let Some(e) = e {
                return e;
            }
        }
        self.finish(t, r, FINISH_FUEL)
    }

    fn atom(&mut self, t: &Ty, r: &Toks) -> Option<Expr> {
        let c: Vec<Name> = self.scope.iter().filter(|v| v.ty == *t && v.toks == *r).map(|v| v.name.clone()).collect();
        c.choose(&mut self.rng).map(Expr::var)
    }

    fn ctor_app(&mut self, t: &Ty, k: &str, r: &Toks, d: u32) -> Option<(Expr, Vec<Toks>)> {
        let sig = self.sig(k, t);
        let allowed: Vec<bool> = sig.fields.iter().map(|(_, m)| m.is_linear()).collect();
        let parts = self.split(r, &allowed)?;
        let mut e = self.ctor_head(k, t);
        for ((fty, _), rp) in sig.fields.iter().zip(&parts) {
            let a = self.expr(fty, rp, d.saturating_sub(1));
            e = Expr::app(e, a);
        }
        Some((e, parts))
    }

    fn ctor(&mut self, t: &Ty, r: &Toks, d: u32) -> Option<Expr> {
        let ks = self.ctors(t);
        let k = ks.choose(&mut self.rng)?.clone();
        self.ctor_app(t, &k, r, d).map(|(e, _)| e)
    }

    fn lam(&mut self, t: &Ty, r: &Toks, d: u32) -> Option<Expr> {
        let Ty::Fun(s, m, res) = t else { return None };
        let x = Name::fresh("x");
        let mut body_r = r.clone();
        let mut toks = Toks::new();
        if m.is_linear() {
            let tx = self.tok();
            toks.insert(tx);
            body_r.insert(tx);
        }
        let v = Var { name: x.clone(), ty: (**s).clone(), toks };
        let body = self.with(vec![v], |g| g.expr(res, &body_r, d - 1));
        Some(Expr::Abs(x, m.clone(), (**s).clone(), Box::new(body)))
    }

    fn app(&mut self, t: &Ty, r: &Toks, d: u32, redex: bool) -> Option<Expr> {
        let s = if self.coin(0.8) { self.data_ty() } else { self.any_ty() };
        let m = self.mult();
        let fty = Ty::fun(s.clone(), m.clone(), t.clone());
        let parts = self.split(r, &[true, m.is_linear()])?;
        let f = if redex { self.lam(&fty, &parts[0], d)? } else { self.expr(&fty, &parts[0], d - 1) };
        let a = self.expr(&s, &parts[1], d - 1);
        Some(Expr::app(f, a))
    }

    /// Apply a function variable in scope.
    fn app_var(&mut self, t: &Ty, r: &Toks, d: u32) -> Option<Expr> {
        let fs: Vec<Var> = self
            .scope
            .iter()
            .filter(|v| matches!(&v.ty, Ty::Fun(_, _, res) if **res == *t) && v.toks.is_subset(r))
            .cloned()
            .collect();
        let f = fs.choose(&mut self.rng)?.clone();
        let Ty::Fun(s, m, _) = &f.ty else { unreachable!() };
        let rest: Toks = r.difference(&f.toks).copied().collect();
        if !m.is_linear() && !rest.is_empty() {
            return None;
        }
        let a = self.expr(s, &rest, d - 1);
        Some(Expr::app(Expr::Var(f.name), a))
    }

    fn let_(&mut self, t: &Ty, r: &Toks, d: u32) -> Expr {
        let s = self.any_ty();
        let r1 = self.subset(r);
        let rhs = self.expr(&s, &r1, d - 1);
        let y = Name::fresh("y");
        let v = Var { name: y.clone(), ty: s.clone(), toks: r1 };
        let body = self.with(vec![v], |g| g.expr(t, r, d - 1));
        Expr::Let(Box::new(Bind { var: y, env: None, ty: s, rhs }), Box::new(body))
    }

    /// `letrec go = λb. case b of { T → e; F → go T } in body`, where `e`
    /// and every use of `go` consume the same resources.
    fn letrec(&mut self, t: &Ty, r: &Toks, d: u32) -> Expr {
        let rg = self.subset(r);
        let go = Name::fresh("go");
        let gty = Ty::fun(bool_ty(), Mult::Many, t.clone());
        let (b, c) = (Name::fresh("b"), Name::fresh("c"));
        let base = self.with(
            vec![Var { name: b.clone(), ty: bool_ty(), toks: Toks::new() }, Var { name: c.clone(), ty: bool_ty(), toks: Toks::new() }],
            |g| g.expr(t, &rg, d - 1),
        );
        let again = Expr::app(Expr::var(&go), Expr::Ctor("T".into()));
        let (t_alt, f_alt) = if self.coin(0.5) { (base, again) } else { (again, base) };
        let (t_alt, f_alt) = if matches!(t_alt, Expr::App(..)) && t_alt.spine().0 == &Expr::var(&go) {
            // `go T` under the T branch would not terminate.
            (f_alt, t_alt)
        } else {
            (t_alt, f_alt)
        };
        let case = Expr::Case(
            Box::new(Expr::var(&b)),
            c,
            None,
            bool_ty(),
            vec![
                Alt { pat: Pattern::Con("T".into(), vec![]), rhs: t_alt },
                Alt { pat: Pattern::Con("F".into(), vec![]), rhs: f_alt },
            ],
        );
        let rhs = Expr::lam(&b, Mult::Many, bool_ty(), case);
        let v = Var { name: go.clone(), ty: gty.clone(), toks: rg };
        let body = self.with(vec![v], |g| g.expr(t, r, d - 1));
        Expr::LetRec(vec![Bind { var: go, env: None, ty: gty, rhs }], Box::new(body))
    }

    fn case_whnf(&mut self, t: &Ty, r: &Toks, d: u32) -> Option<Expr> {
        let dt = self.data_ty();
        let ks = self.ctors(&dt);
        let k = ks.choose(&mut self.rng)?.clone();
        let rs = self.subset(r);
        let (scrut, parts) = self.ctor_app(&dt, &k, &rs, d)?;
        let sig = self.sig(&k, &dt);
        let z = Name::fresh("z");
        let wild = ks.len() > 1 && self.coin(0.3);
        let listed: Vec<String> = if wild {
            let mut ks = ks.clone();
            ks.shuffle(&mut self.rng);
            ks.truncate(1);
            ks
        } else {
            ks.clone()
        };
        let mut alts = Vec::new();
        for k2 in &listed {
            if *k2 == k {
                let ys: Vec<Name> = sig.fields.iter().map(|_| Name::fresh("y")).collect();
                let mut vars = vec![Var { name: z.clone(), ty: dt.clone(), toks: rs.clone() }];
                for ((y, (fty, _)), p) in ys.iter().zip(&sig.fields).zip(&parts) {
                    vars.push(Var { name: y.clone(), ty: fty.clone(), toks: p.clone() });
                }
                let rhs = self.with(vars, |g| g.expr(t, r, d - 1));
                let pat = Pattern::Con(k.clone(), ys.into_iter().zip(sig.fields.iter().map(|(_, m)| m.clone())).collect());
                alts.push(Alt { pat, rhs });
            } else {
                alts.push(self.irrelevant_alt(Some(k2), &dt, &z, &rs, r, t, d));
            }
        }
        if wild {
            if listed.contains(&k) {
                alts.push(self.irrelevant_alt(None, &dt, &z, &rs, r, t, d));
            } else {
                let v = Var { name: z.clone(), ty: dt.clone(), toks: rs.clone() };
                let rhs = self.with(vec![v], |g| g.expr(t, r, d - 1));
                alts.push(Alt { pat: Pattern::Wild, rhs });
            }
        }
        Some(Expr::Case(Box::new(scrut), z, None, dt, alts))
    }

    fn case_not_whnf(&mut self, t: &Ty, r: &Toks, d: u32) -> Expr {
        let owned: Vec<Var> = self
            .scope
            .iter()
            .filter(|v| matches!(v.ty, Ty::Data(..)) && !v.toks.is_empty() && v.toks.is_subset(r))
            .cloned()
            .collect();
        let (scrut, dt, rs) = match owned.choose(&mut self.rng) {
            Some(v) if self.rng.gen_bool(0.5) => (Expr::var(&v.name), v.ty.clone(), v.toks.clone()),
            _ => {
                let dt = self.data_ty();
                let rs = self.subset(r);
                let mut s = self.expr(&dt, &rs, d - 1);
                if s.is_whnf() {
                    let w = Name::fresh("w");
                    s = Expr::let_(&w, dt.clone(), s, Expr::var(&w));
                }
                (s, dt, rs)
            }
        };
        self.case_on(scrut, dt, rs, t, r, d)
    }

    fn case_on(&mut self, scrut: Expr, dt: Ty, rs: Toks, t: &Ty, r: &Toks, d: u32) -> Expr {
        let ks = self.ctors(&dt);
        let z = Name::fresh("z");
        let wild = ks.len() > 1 && d > 0 && self.coin(0.25);
        let listed = if wild { ks[..1].to_vec() } else { ks };
        let mut alts: Vec<Alt> = listed.iter().map(|k| self.irrelevant_alt(Some(k), &dt, &z, &rs, r, t, d)).collect();
        if wild {
            alts.push(self.irrelevant_alt(None, &dt, &z, &rs, r, t, d));
        }
        Expr::Case(Box::new(scrut), z, None, dt, alts)
    }

    /// An alternative that sees the scrutinee's resources `rs` only
    /// through the case binder or the pattern variables.
    #[allow(clippy::too_many_arguments)]
    fn irrelevant_alt(&mut self, k: Option<&String>, dt: &Ty, z: &Name, rs: &Toks, r: &Toks, t: &Ty, d: u32) -> Alt {
        let saved = self.scope.clone();
        self.scope.retain(|v| v.toks.is_disjoint(rs));
        let mut obl: Toks = r.difference(rs).copied().collect();
        let sig = k.map(|k| self.sig(k, dt));
        let ys: Vec<Name> = sig.iter().flat_map(|s| s.fields.iter().map(|_| Name::fresh("y"))).collect();
        let mut vars = Vec::new();
        let discharged = rs.is_empty() || sig.as_ref().is_some_and(|s| s.linear.is_empty());
        if let Some(sig) = &sig {
            for (y, (fty, m)) in ys.iter().zip(&sig.fields) {
                if !m.is_linear() || discharged {
                    vars.push(Var { name: y.clone(), ty: fty.clone(), toks: Toks::new() });
                }
            }
        }
        if discharged {
            vars.push(Var { name: z.clone(), ty: dt.clone(), toks: Toks::new() });
        } else if sig.is_none() || (d > 1 && self.coin(0.3)) {
            let g = self.tok();
            obl.insert(g);
            vars.push(Var { name: z.clone(), ty: dt.clone(), toks: [g].into() });
        } else {
            let sig = sig.as_ref().unwrap();
            for &i in &sig.linear {
                let g = self.tok();
                obl.insert(g);
                vars.push(Var { name: ys[i].clone(), ty: sig.fields[i].0.clone(), toks: [g].into() });
            }
        }
        self.scope.extend(vars);
        let rhs = self.expr(t, &obl, d.saturating_sub(1));
        self.scope = saved;
        let pat = match (k, sig) {
            (Some(k), Some(sig)) => Pattern::Con(k.clone(), ys.into_iter().zip(sig.fields.into_iter().map(|(_, m)| m)).collect()),
            _ => Pattern::Wild,
        };
        Alt { pat, rhs }
    }

    /// `(Λp. λ(x :p s). e) π a`.
    fn mult_redex(&mut self, t: &Ty, r: &Toks, d: u32) -> Option<Expr> {
        let s = self.data_ty();
        let pi = self.mult();
        let parts = self.split(r, &[true, pi.is_linear()])?;
        let p = Name::fresh("p");
        let x = Name::fresh("x");
        let tx = self.tok();
        let mut body_r = parts[0].clone();
        body_r.insert(tx);
        let v = Var { name: x.clone(), ty: s.clone(), toks: [tx].into() };
        let body = self.with(vec![v], |g| g.expr(t, &body_r, d - 1));
        let f = Expr::MultAbs(p.clone(), Box::new(Expr::Abs(x, Mult::Var(p), s.clone(), Box::new(body))));
        let a = self.expr(&s, &parts[1], d - 1);
        Some(Expr::app(Expr::MultApp(Box::new(f), pi), a))
    }

    /// A small term of type `t` consuming exactly `r`.
    fn finish(&mut self, t: &Ty, r: &Toks, fuel: u32) -> Expr {
        if let Some(e) = self.atom(t, r) {
            return e;
        }
        if let Some(v) = self.owner(r) {
            if fuel > 0 {
                if let Some((scrut, dt)) = self.drop_var(&v, fuel) {
                    return self.finish_case(scrut, dt, v.toks.clone(), t, r, fuel - 1);
                }
            }
        }
        match t {
            Ty::Fun(s, m, res) => {
                let x = Name::fresh("x");
                let mut body_r = r.clone();
                let mut toks = Toks::new();
                if m.is_linear() {
                    let tx = self.tok();
                    toks.insert(tx);
                    body_r.insert(tx);
                }
                let v = Var { name: x.clone(), ty: (**s).clone(), toks };
                let body = self.with(vec![v], |g| g.finish(res, &body_r, fuel));
                Expr::Abs(x, m.clone(), (**s).clone(), Box::new(body))
            }
            Ty::Data(..) => {
                let ks = self.ctors(t);
                let k = ks
                    .iter()
                    .find(|k| self.sig(k, t).fields.is_empty() && self.coin(0.8))
                    .unwrap_or_else(|| ks.choose(&mut self.rng).unwrap())
                    .clone();
                let sig = self.sig(&k, t);
                let allowed: Vec<bool> = sig.fields.iter().map(|(_, m)| m.is_linear()).collect();
                let parts = self.split(r, &allowed).unwrap_or_else(|| vec![Toks::new(); allowed.len()]);
                let mut e = self.ctor_head(&k, t);
                for ((fty, _), rp) in sig.fields.iter().zip(&parts) {
                    let a = self.finish(fty, rp, fuel.saturating_sub(1));
                    e = Expr::app(e, a);
                }
                e
            }
            Ty::Forall(..) => Expr::Ctor("MkUnit".into()),
        }
    }

    /// A variable consuming part of `r`, preferring single resources.
    fn owner(&mut self, r: &Toks) -> Option<Var> {
        if r.is_empty() {
            return None;
        }
        let vs: Vec<Var> = self.scope.iter().filter(|v| !v.toks.is_empty() && v.toks.is_subset(r)).cloned().collect();
        let single: Vec<Var> = vs.iter().filter(|v| v.toks.len() == 1).cloned().collect();
        single.choose(&mut self.rng).or_else(|| vs.choose(&mut self.rng)).cloned()
    }

    /// A non-WHNF data-typed term consuming exactly `v`'s resources.
    fn drop_var(&mut self, v: &Var, fuel: u32) -> Option<(Expr, Ty)> {
        let mut e = Expr::var(&v.name);
        let mut t = v.ty.clone();
        loop {
            match t {
                Ty::Data(..) => return Some((e, t)),
                Ty::Fun(s, _, res) => {
                    let a = self.finish(&s, &Toks::new(), fuel.saturating_sub(1));
                    e = Expr::app(e, a);
                    t = *res;
                }
                Ty::Forall(..) => return None,
            }
        }
    }

    fn finish_case(&mut self, scrut: Expr, dt: Ty, rs: Toks, t: &Ty, r: &Toks, fuel: u32) -> Expr {
        let ks = self.ctors(&dt);
        let z = Name::fresh("z");
        let alts = ks
            .iter()
            .map(|k| {
                let saved = self.scope.clone();
                self.scope.retain(|v| v.toks.is_disjoint(&rs));
                let mut obl: Toks = r.difference(&rs).copied().collect();
                let sig = self.sig(k, &dt);
                let ys: Vec<Name> = sig.fields.iter().map(|_| Name::fresh("y")).collect();
                for (i, (y, (fty, m))) in ys.iter().zip(&sig.fields).enumerate() {
                    let toks = if m.is_linear() && sig.linear.contains(&i) {
                        let g = self.tok();
                        obl.insert(g);
                        [g].into()
                    } else {
                        Toks::new()
                    };
                    self.scope.push(Var { name: y.clone(), ty: fty.clone(), toks });
                }
                if sig.linear.is_empty() {
                    self.scope.push(Var { name: z.clone(), ty: dt.clone(), toks: Toks::new() });
                }
                let rhs = self.finish(t, &obl, fuel);
                self.scope = saved;
                Alt { pat: Pattern::Con(k.clone(), ys.into_iter().zip(sig.fields.into_iter().map(|(_, m)| m)).collect()), rhs }
            })
            .collect();
        Expr::Case(Box::new(scrut), z, None, dt, alts)
    }
}

fn assumptions(g: &mut Gen) -> (Vec<Assume>, Toks) {
    let mut assumes = Vec::new();
    let mut toks = Toks::new();
    let fns = [
        ("not", Ty::fun(bool_ty(), Mult::Many, bool_ty())),
        ("and", Ty::fun(bool_ty(), Mult::One, Ty::fun(bool_ty(), Mult::One, bool_ty()))),
    ];
    for (n, ty) in fns {
        let name = Name::fresh(n);
        g.scope.push(Var { name: name.clone(), ty: ty.clone(), toks: Toks::new() });
        assumes.push(Assume { name, mult: Mult::Many, ty });
    }
    for _ in 0..g.rng.gen_range(0..4) {
        let ty = g.data_ty();
        let name = Name::fresh("u");
        let t = g.tok();
        toks.insert(t);
        g.scope.push(Var { name: name.clone(), ty: ty.clone(), toks: [t].into() });
        assumes.push(Assume { name, mult: Mult::One, ty });
    }
    (assumes, toks)
}

/// A candidate program for `seed`. Most candidates typecheck; none are
/// guaranteed to.
pub fn generate(decls: &Decls, seed: u64, cfg: &GenConfig) -> Program {
    let mut g = Gen { rng: StdRng::seed_from_u64(seed), decls, next_tok: 0, scope: Vec::new() };
    let (assumes, toks) = if cfg.closed { (Vec::new(), Toks::new()) } else { assumptions(&mut g) };
    let t = g.any_ty();
    let main = g.expr(&t, &toks, cfg.depth);
    Program::new(decls.clone(), assumes, main)
}

/// The first accepted candidate at or after `seed` that fits the size
/// bound, with the seed that produced it.
pub fn generate_well_typed(decls: &Decls, seed: u64, cfg: &GenConfig) -> (u64, Checked) {
    let mut s = seed;
    loop {
        let p = generate(decls, s, cfg);
        if p.main.size() <= cfg.max_size {
            if let Ok(c) = check_program(&p) {
                return (s, c);
            }
        }
        s = s.wrapping_add(0x9e37_79b9_7f4a_7c15);
    }
}
