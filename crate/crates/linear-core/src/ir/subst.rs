use std::collections::BTreeSet;

use super::{Alt, Bind, Expr, Mult, Name, Pattern, ResKey, Ty, UsageEnv};

pub fn free_vars(e: &Expr) -> BTreeSet<Name> {
    let mut out = BTreeSet::new();
    collect_free(e, &mut Vec::new(), &mut out);
    out
}

fn collect_free(e: &Expr, bound: &mut Vec<Name>, out: &mut BTreeSet<Name>) {
    match e {
        Expr::Var(x) => {
            if !bound.contains(x) {
                out.insert(x.clone());
            }
        }
        Expr::Ctor(_) => {}
        Expr::MultAbs(_, b) | Expr::MultApp(b, _) => collect_free(b, bound, out),
        Expr::Abs(x, _, _, b) => {
            bound.push(x.clone());
            collect_free(b, bound, out);
            bound.pop();
        }
        Expr::App(f, a) => {
            collect_free(f, bound, out);
            collect_free(a, bound, out);
        }
        Expr::Let(bind, body) => {
            collect_free(&bind.rhs, bound, out);
            bound.push(bind.var.clone());
            collect_free(body, bound, out);
            bound.pop();
        }
        Expr::LetRec(binds, body) => {
            let n = bound.len();
            bound.extend(binds.iter().map(|b| b.var.clone()));
            for b in binds {
                collect_free(&b.rhs, bound, out);
            }
            collect_free(body, bound, out);
            bound.truncate(n);
        }
        Expr::Case(s, z, _, _, alts) => {
            collect_free(s, bound, out);
            for alt in alts {
                let n = bound.len();
                bound.push(z.clone());
                if let Pattern::Con(_, xs) = &alt.pat {
                    bound.extend(xs.iter().map(|(x, _)| x.clone()));
                }
                collect_free(&alt.rhs, bound, out);
                bound.truncate(n);
            }
        }
    }
}

pub fn free_mult_vars_ty(t: &Ty) -> BTreeSet<Name> {
    let mut out = BTreeSet::new();
    mvars_ty(t, &mut Vec::new(), &mut out);
    out
}

fn mvar(m: &Mult, bound: &[Name], out: &mut BTreeSet<Name>) {
    if let Mult::Var(p) = m {
        if !bound.contains(p) {
            out.insert(p.clone());
        }
    }
}

fn mvars_ty(t: &Ty, bound: &mut Vec<Name>, out: &mut BTreeSet<Name>) {
    match t {
        Ty::Data(_, ms) => ms.iter().for_each(|m| mvar(m, bound, out)),
        Ty::Fun(a, m, r) => {
            mvars_ty(a, bound, out);
            mvar(m, bound, out);
            mvars_ty(r, bound, out);
        }
        Ty::Forall(p, b) => {
            bound.push(p.clone());
            mvars_ty(b, bound, out);
            bound.pop();
        }
    }
}

fn mvars_env(env: &Option<UsageEnv>, bound: &[Name], out: &mut BTreeSet<Name>) {
    if let Some(env) = env {
        env.entries().iter().for_each(|(_, m)| mvar(m, bound, out));
    }
}

pub fn free_mult_vars(e: &Expr) -> BTreeSet<Name> {
    let mut out = BTreeSet::new();
    mvars_expr(e, &mut Vec::new(), &mut out);
    out
}

fn mvars_expr(e: &Expr, bound: &mut Vec<Name>, out: &mut BTreeSet<Name>) {
    match e {
        Expr::Var(_) | Expr::Ctor(_) => {}
        Expr::MultAbs(p, b) => {
            bound.push(p.clone());
            mvars_expr(b, bound, out);
            bound.pop();
        }
        Expr::MultApp(f, m) => {
            mvars_expr(f, bound, out);
            mvar(m, bound, out);
        }
        Expr::Abs(_, m, t, b) => {
            mvar(m, bound, out);
            mvars_ty(t, bound, out);
            mvars_expr(b, bound, out);
        }
        Expr::App(f, a) => {
            mvars_expr(f, bound, out);
            mvars_expr(a, bound, out);
        }
        Expr::Let(bind, body) => {
            mvars_bind(bind, bound, out);
            mvars_expr(body, bound, out);
        }
        Expr::LetRec(binds, body) => {
            binds.iter().for_each(|b| mvars_bind(b, bound, out));
            mvars_expr(body, bound, out);
        }
        Expr::Case(s, _, env, t, alts) => {
            mvars_expr(s, bound, out);
            mvars_env(env, bound, out);
            mvars_ty(t, bound, out);
            for alt in alts {
                if let Pattern::Con(_, xs) = &alt.pat {
                    xs.iter().for_each(|(_, m)| mvar(m, bound, out));
                }
                mvars_expr(&alt.rhs, bound, out);
            }
        }
    }
}

fn mvars_bind(b: &Bind, bound: &mut Vec<Name>, out: &mut BTreeSet<Name>) {
    mvars_env(&b.env, bound, out);
    mvars_ty(&b.ty, bound, out);
    mvars_expr(&b.rhs, bound, out);
}

/// Capture-avoiding `e[s/x]`. When `s` is a variable, resource names in
/// usage-env annotations are renamed as well; otherwise annotations that
/// mention `x` go stale and are left for the checker to recompute.
pub fn subst_expr(e: &Expr, x: &Name, s: &Expr) -> Expr {
    let sub = Subst { x, s, fv: free_vars(s), fmv: free_mult_vars(s), fresh: false };
    sub.go(e)
}

/// As [`subst_expr`], but every copy of `s` gets fresh binders.
pub fn subst_expr_fresh(e: &Expr, x: &Name, s: &Expr) -> Expr {
    let sub = Subst { x, s, fv: free_vars(s), fmv: free_mult_vars(s), fresh: true };
    sub.go(e)
}

/// Alpha-rename free occurrences of `old` (including in annotations).
pub fn rename(e: &Expr, old: &Name, new: &Name) -> Expr {
    subst_expr(e, old, &Expr::Var(new.clone()))
}

struct Subst<'a> {
    x: &'a Name,
    s: &'a Expr,
    fv: BTreeSet<Name>,
    fmv: BTreeSet<Name>,
    fresh: bool,
}

impl Subst<'_> {
    fn env(&self, env: &Option<UsageEnv>) -> Option<UsageEnv> {
        match (env, self.s) {
            (Some(env), Expr::Var(y)) => Some(env.map_keys(|k| {
                if &k.name == self.x {
                    ResKey { name: y.clone(), ..k.clone() }
                } else {
                    k.clone()
                }
            })),
            _ => env.clone(),
        }
    }

    /// Whether binder `b` over `scope` must be renamed before substituting.
    fn captures(&self, b: &Name, scope: &[&Expr]) -> bool {
        self.fv.contains(b) && scope.iter().any(|e| free_vars(e).contains(self.x))
    }

    fn go(&self, e: &Expr) -> Expr {
        match e {
            Expr::Var(y) if y == self.x && self.fresh => refresh_binders(self.s),
            Expr::Var(y) if y == self.x => self.s.clone(),
            Expr::Var(_) | Expr::Ctor(_) => e.clone(),
            Expr::MultAbs(p, b) => {
                if self.fmv.contains(p) && free_vars(b).contains(self.x) {
                    let p2 = p.refresh();
                    let b2 = subst_mult_expr(b, p, &Mult::Var(p2.clone()));
                    Expr::MultAbs(p2, Box::new(self.go(&b2)))
                } else {
                    Expr::MultAbs(p.clone(), Box::new(self.go(b)))
                }
            }
            Expr::MultApp(f, m) => Expr::MultApp(Box::new(self.go(f)), m.clone()),
            Expr::Abs(y, m, t, b) => {
                if y == self.x {
                    e.clone()
                } else if self.captures(y, &[b]) {
                    let y2 = y.refresh();
                    let b2 = rename(b, y, &y2);
                    Expr::Abs(y2, m.clone(), t.clone(), Box::new(self.go(&b2)))
                } else {
                    Expr::Abs(y.clone(), m.clone(), t.clone(), Box::new(self.go(b)))
                }
            }
            Expr::App(f, a) => Expr::app(self.go(f), self.go(a)),
            Expr::Let(bind, body) => {
                let rhs = self.go(&bind.rhs);
                let env = self.env(&bind.env);
                let (var, body) = if &bind.var == self.x {
                    (bind.var.clone(), (**body).clone())
                } else if self.captures(&bind.var, &[body]) {
                    let v2 = bind.var.refresh();
                    (v2.clone(), self.go(&rename(body, &bind.var, &v2)))
                } else {
                    (bind.var.clone(), self.go(body))
                };
                Expr::Let(Box::new(Bind { var, env, ty: bind.ty.clone(), rhs }), Box::new(body))
            }
            Expr::LetRec(binds, body) => {
                if binds.iter().any(|b| &b.var == self.x) {
                    return e.clone();
                }
                let mut binds = binds.clone();
                let mut body = (**body).clone();
                for i in 0..binds.len() {
                    let v = binds[i].var.clone();
                    let mut scope: Vec<&Expr> = binds.iter().map(|b| &b.rhs).collect();
                    scope.push(&body);
                    if self.captures(&v, &scope) {
                        let v2 = v.refresh();
                        for b in binds.iter_mut() {
                            b.rhs = rename(&b.rhs, &v, &v2);
                        }
                        body = rename(&body, &v, &v2);
                        binds[i].var = v2;
                    }
                }
                let binds = binds
                    .iter()
                    .map(|b| Bind {
                        var: b.var.clone(),
                        env: self.env(&b.env),
                        ty: b.ty.clone(),
                        rhs: self.go(&b.rhs),
                    })
                    .collect();
                Expr::LetRec(binds, Box::new(self.go(&body)))
            }
            Expr::Case(s, z, env, t, alts) => {
                let scrut = self.go(s);
                let env = self.env(env);
                if z == self.x {
                    return Expr::Case(Box::new(scrut), z.clone(), env, t.clone(), alts.clone());
                }
                let mut z = z.clone();
                let mut alts = alts.clone();
                let rhss: Vec<&Expr> = alts.iter().map(|a| &a.rhs).collect();
                if self.captures(&z, &rhss) {
                    let z2 = z.refresh();
                    for a in alts.iter_mut() {
                        a.rhs = rename(&a.rhs, &z, &z2);
                    }
                    z = z2;
                }
                let alts = alts.iter().map(|a| self.alt(a)).collect();
                Expr::Case(Box::new(scrut), z, env, t.clone(), alts)
            }
        }
    }

    fn alt(&self, alt: &Alt) -> Alt {
        match &alt.pat {
            Pattern::Wild => Alt { pat: Pattern::Wild, rhs: self.go(&alt.rhs) },
            Pattern::Con(k, xs) => {
                if xs.iter().any(|(y, _)| y == self.x) {
                    return alt.clone();
                }
                let mut xs = xs.clone();
                let mut rhs = alt.rhs.clone();
                for (y, _) in xs.iter_mut() {
                    if self.captures(y, &[&rhs]) {
                        let y2 = y.refresh();
                        rhs = rename(&rhs, y, &y2);
                        *y = y2;
                    }
                }
                Alt { pat: Pattern::Con(k.clone(), xs), rhs: self.go(&rhs) }
            }
        }
    }
}

fn subst_mult(m: &Mult, p: &Name, pi: &Mult) -> Mult {
    match m {
        Mult::Var(q) if q == p => pi.clone(),
        _ => m.clone(),
    }
}

/// `σ[π/p]`, renaming `∀` binders that would capture `π`.
pub fn subst_mult_ty(t: &Ty, p: &Name, pi: &Mult) -> Ty {
    match t {
        Ty::Data(k, ms) => Ty::Data(k.clone(), ms.iter().map(|m| subst_mult(m, p, pi)).collect()),
        Ty::Fun(a, m, r) => Ty::fun(subst_mult_ty(a, p, pi), subst_mult(m, p, pi), subst_mult_ty(r, p, pi)),
        Ty::Forall(q, b) => {
            if q == p {
                t.clone()
            } else if matches!(pi, Mult::Var(v) if v == q) && free_mult_vars_ty(b).contains(p) {
                let q2 = q.refresh();
                let b2 = subst_mult_ty(b, q, &Mult::Var(q2.clone()));
                Ty::Forall(q2, Box::new(subst_mult_ty(&b2, p, pi)))
            } else {
                Ty::Forall(q.clone(), Box::new(subst_mult_ty(b, p, pi)))
            }
        }
    }
}

fn subst_mult_env(env: &Option<UsageEnv>, p: &Name, pi: &Mult) -> Option<UsageEnv> {
    env.as_ref()
        .map(|env| UsageEnv::from_entries(env.entries().iter().map(|(k, m)| (k.clone(), subst_mult(m, p, pi)))))
}

/// `e[π/p]` over every multiplicity annotation in a term.
pub fn subst_mult_expr(e: &Expr, p: &Name, pi: &Mult) -> Expr {
    let go = |e: &Expr| subst_mult_expr(e, p, pi);
    let ty = |t: &Ty| subst_mult_ty(t, p, pi);
    let bind = |b: &Bind| Bind {
        var: b.var.clone(),
        env: subst_mult_env(&b.env, p, pi),
        ty: ty(&b.ty),
        rhs: go(&b.rhs),
    };
    match e {
        Expr::Var(_) | Expr::Ctor(_) => e.clone(),
        Expr::MultAbs(q, b) => {
            if q == p {
                e.clone()
            } else if matches!(pi, Mult::Var(v) if v == q) && free_mult_vars(b).contains(p) {
                let q2 = q.refresh();
                let b2 = subst_mult_expr(b, q, &Mult::Var(q2.clone()));
                Expr::MultAbs(q2, Box::new(go(&b2)))
            } else {
                Expr::MultAbs(q.clone(), Box::new(go(b)))
            }
        }
        Expr::MultApp(f, m) => Expr::MultApp(Box::new(go(f)), subst_mult(m, p, pi)),
        Expr::Abs(x, m, t, b) => Expr::Abs(x.clone(), subst_mult(m, p, pi), ty(t), Box::new(go(b))),
        Expr::App(f, a) => Expr::app(go(f), go(a)),
        Expr::Let(b, body) => Expr::Let(Box::new(bind(b)), Box::new(go(body))),
        Expr::LetRec(bs, body) => Expr::LetRec(bs.iter().map(bind).collect(), Box::new(go(body))),
        Expr::Case(s, z, env, t, alts) => Expr::Case(
            Box::new(go(s)),
            z.clone(),
            subst_mult_env(env, p, pi),
            ty(t),
            alts.iter()
                .map(|a| Alt {
                    pat: match &a.pat {
                        Pattern::Wild => Pattern::Wild,
                        Pattern::Con(k, xs) => Pattern::Con(
                            k.clone(),
                            xs.iter().map(|(x, m)| (x.clone(), subst_mult(m, p, pi))).collect(),
                        ),
                    },
                    rhs: go(&a.rhs),
                })
                .collect(),
        ),
    }
}

/// Give every binder in `e` (term and multiplicity) a fresh identity.
/// Used when a subterm is duplicated.
pub fn refresh_binders(e: &Expr) -> Expr {
    Refresher { map: Vec::new() }.expr(e)
}

struct Refresher {
    map: Vec<(Name, Name)>,
}

impl Refresher {
    fn look(&self, n: &Name) -> Name {
        self.map.iter().rev().find(|(a, _)| a == n).map_or_else(|| n.clone(), |(_, b)| b.clone())
    }

    fn bind(&mut self, n: &Name) -> Name {
        let n2 = n.refresh();
        self.map.push((n.clone(), n2.clone()));
        n2
    }

    fn mult(&self, m: &Mult) -> Mult {
        match m {
            Mult::Var(p) => Mult::Var(self.look(p)),
            _ => m.clone(),
        }
    }

    fn ty(&mut self, t: &Ty) -> Ty {
        match t {
            Ty::Data(k, ms) => Ty::Data(k.clone(), ms.iter().map(|m| self.mult(m)).collect()),
            Ty::Fun(a, m, r) => {
                let m = self.mult(m);
                Ty::fun(self.ty(a), m, self.ty(r))
            }
            Ty::Forall(p, b) => {
                let n = self.map.len();
                let p2 = self.bind(p);
                let b = self.ty(b);
                self.map.truncate(n);
                Ty::Forall(p2, Box::new(b))
            }
        }
    }

    fn env(&self, env: &Option<UsageEnv>) -> Option<UsageEnv> {
        env.as_ref().map(|env| {
            UsageEnv::from_entries(env.entries().iter().map(|(k, m)| {
                (ResKey { name: self.look(&k.name), ..k.clone() }, self.mult(m))
            }))
        })
    }

    fn expr(&mut self, e: &Expr) -> Expr {
        match e {
            Expr::Var(x) => Expr::Var(self.look(x)),
            Expr::Ctor(_) => e.clone(),
            Expr::MultAbs(p, b) => {
                let n = self.map.len();
                let p2 = self.bind(p);
                let b = self.expr(b);
                self.map.truncate(n);
                Expr::MultAbs(p2, Box::new(b))
            }
            Expr::MultApp(f, m) => Expr::MultApp(Box::new(self.expr(f)), self.mult(m)),
            Expr::Abs(x, m, t, b) => {
                let m = self.mult(m);
                let t = self.ty(t);
                let n = self.map.len();
                let x2 = self.bind(x);
                let b = self.expr(b);
                self.map.truncate(n);
                Expr::Abs(x2, m, t, Box::new(b))
            }
            Expr::App(f, a) => Expr::app(self.expr(f), self.expr(a)),
            Expr::Let(bind, body) => {
                let rhs = self.expr(&bind.rhs);
                let env = self.env(&bind.env);
                let ty = self.ty(&bind.ty);
                let n = self.map.len();
                let var = self.bind(&bind.var);
                let body = self.expr(body);
                self.map.truncate(n);
                Expr::Let(Box::new(Bind { var, env, ty, rhs }), Box::new(body))
            }
            Expr::LetRec(binds, body) => {
                let n = self.map.len();
                let vars: Vec<Name> = binds.iter().map(|b| self.bind(&b.var)).collect();
                let binds = binds
                    .iter()
                    .zip(vars)
                    .map(|(b, var)| Bind {
                        var,
                        env: self.env(&b.env),
                        ty: self.ty(&b.ty),
                        rhs: self.expr(&b.rhs),
                    })
                    .collect();
                let body = self.expr(body);
                self.map.truncate(n);
                Expr::LetRec(binds, Box::new(body))
            }
            Expr::Case(s, z, env, t, alts) => {
                let s = self.expr(s);
                let env = self.env(env);
                let t = self.ty(t);
                let n = self.map.len();
                let z2 = self.bind(z);
                let alts = alts
                    .iter()
                    .map(|a| {
                        let m = self.map.len();
                        let pat = match &a.pat {
                            Pattern::Wild => Pattern::Wild,
                            Pattern::Con(k, xs) => Pattern::Con(
                                k.clone(),
                                xs.iter().map(|(x, mu)| (self.bind(x), self.mult(mu))).collect(),
                            ),
                        };
                        let rhs = self.expr(&a.rhs);
                        self.map.truncate(m);
                        Alt { pat, rhs }
                    })
                    .collect();
                self.map.truncate(n);
                Expr::Case(Box::new(s), z2, env, t, alts)
            }
        }
    }
}

/// Drop every usage-env annotation so the checker recomputes them.
pub fn strip_annotations(e: &Expr) -> Expr {
    let strip = |b: &Bind| Bind { var: b.var.clone(), env: None, ty: b.ty.clone(), rhs: strip_annotations(&b.rhs) };
    match e {
        Expr::Var(_) | Expr::Ctor(_) => e.clone(),
        Expr::MultAbs(p, b) => Expr::MultAbs(p.clone(), Box::new(strip_annotations(b))),
        Expr::MultApp(f, m) => Expr::MultApp(Box::new(strip_annotations(f)), m.clone()),
        Expr::Abs(x, m, t, b) => Expr::Abs(x.clone(), m.clone(), t.clone(), Box::new(strip_annotations(b))),
        Expr::App(f, a) => Expr::app(strip_annotations(f), strip_annotations(a)),
        Expr::Let(b, body) => Expr::Let(Box::new(strip(b)), Box::new(strip_annotations(body))),
        Expr::LetRec(bs, body) => Expr::LetRec(bs.iter().map(strip).collect(), Box::new(strip_annotations(body))),
        Expr::Case(s, z, _, t, alts) => Expr::Case(
            Box::new(strip_annotations(s)),
            z.clone(),
            None,
            t.clone(),
            alts.iter().map(|a| Alt { pat: a.pat.clone(), rhs: strip_annotations(&a.rhs) }).collect(),
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::alpha_eq;

    fn a() -> Ty {
        Ty::data("a")
    }

    #[test]
    fn free_vars_examples() {
        let x = Name::fresh("x");
        assert_eq!(free_vars(&Expr::var(&x)), BTreeSet::from([x.clone()]));
        assert!(free_vars(&Expr::lam(&x, Mult::One, a(), Expr::var(&x))).is_empty());
    }

    #[test]
    fn substitution_avoids_capture() {
        let x = Name::fresh("x");
        let y = Name::fresh("y");
        // (\y. x y)[y/x]
        let e = Expr::lam(&y, Mult::One, a(), Expr::app(Expr::var(&x), Expr::var(&y)));
        let r = subst_expr(&e, &x, &Expr::var(&y));
        let Expr::Abs(y2, _, _, body) = &r else { panic!("not a lambda") };
        assert_ne!(y2, &y);
        assert_eq!(**body, Expr::app(Expr::var(&y), Expr::var(y2)));
        assert!(free_vars(&r).contains(&y));
    }

    #[test]
    fn substitution_respects_shadowing() {
        let x = Name::fresh("x");
        let y = Name::fresh("y");
        let e = Expr::lam(&y, Mult::One, a(), Expr::var(&y));
        assert_eq!(subst_expr(&e, &x, &Expr::Ctor("K".into())), e);
        let shadow = Expr::lam(&x, Mult::One, a(), Expr::var(&x));
        assert_eq!(subst_expr(&shadow, &x, &Expr::var(&y)), shadow);
    }

    #[test]
    fn mult_substitution() {
        let p = Name::fresh("p");
        let t = Ty::fun(a(), Mult::Var(p.clone()), a());
        assert_eq!(subst_mult_ty(&t, &p, &Mult::One), Ty::fun(a(), Mult::One, a()));
        let shadowed = Ty::Forall(p.clone(), Box::new(t.clone()));
        assert_eq!(subst_mult_ty(&shadowed, &p, &Mult::Many), shadowed);
        let x = Name::fresh("x");
        let e = Expr::lam(&x, Mult::Var(p.clone()), a(), Expr::var(&x));
        assert_eq!(subst_mult_expr(&e, &p, &Mult::Many), Expr::lam(&x, Mult::Many, a(), Expr::var(&x)));
    }

    #[test]
    fn mult_substitution_avoids_capture() {
        let p = Name::fresh("p");
        let q = Name::fresh("q");
        // (forall q. a ->p a)[q/p] must not capture.
        let t = Ty::Forall(q.clone(), Box::new(Ty::fun(a(), Mult::Var(p.clone()), a())));
        let r = subst_mult_ty(&t, &p, &Mult::Var(q.clone()));
        let Ty::Forall(q2, body) = &r else { panic!() };
        assert_ne!(q2, &q);
        assert_eq!(**body, Ty::fun(a(), Mult::Var(q.clone()), a()));
    }

    #[test]
    fn refresh_is_alpha_equivalent() {
        let x = Name::fresh("x");
        let y = Name::fresh("y");
        let e = Expr::lam(&x, Mult::One, a(), Expr::let_(&y, a(), Expr::var(&x), Expr::var(&y)));
        let r = refresh_binders(&e);
        assert!(alpha_eq(&e, &r));
        assert_ne!(e, r);
    }

    #[test]
    fn renaming_updates_annotations() {
        let x = Name::fresh("x");
        let w = Name::fresh("w");
        let y = Name::fresh("y");
        let mut e = Expr::let_(&y, a(), Expr::var(&x), Expr::var(&y));
        if let Expr::Let(b, _) = &mut e {
            b.env = Some(UsageEnv::from_entries([(ResKey::plain(x.clone()), Mult::One)]));
        }
        let r = rename(&e, &x, &w);
        let Expr::Let(b, _) = &r else { panic!() };
        assert!(b.env.as_ref().unwrap().contains(&ResKey::plain(w.clone())));
    }
}
