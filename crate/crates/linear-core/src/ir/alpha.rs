use super::{Alt, Bind, Expr, Mult, Name, Pattern, Ty, UsageEnv};

/// Alpha-equivalence of terms, including binder names inside types and
/// usage-env annotations.
pub fn alpha_eq(a: &Expr, b: &Expr) -> bool {
    Alpha::default().expr(a, b)
}

/// Alpha-equivalence where the given free names are identified pairwise.
pub fn alpha_eq_with(a: &Expr, b: &Expr, free: impl IntoIterator<Item = (Name, Name)>) -> bool {
    Alpha { pairs: free.into_iter().collect() }.expr(a, b)
}

pub fn alpha_eq_ty(a: &Ty, b: &Ty) -> bool {
    Alpha::default().ty(a, b)
}

#[derive(Default)]
struct Alpha {
    pairs: Vec<(Name, Name)>,
}

impl Alpha {
    fn name(&self, a: &Name, b: &Name) -> bool {
        let i = self.pairs.iter().rposition(|(l, _)| l == a);
        let j = self.pairs.iter().rposition(|(_, r)| r == b);
        match (i, j) {
            (None, None) => a == b,
            (Some(i), Some(j)) => i == j,
            _ => false,
        }
    }

    fn with<T>(&mut self, binders: impl IntoIterator<Item = (Name, Name)>, f: impl FnOnce(&mut Self) -> T) -> T {
        let n = self.pairs.len();
        self.pairs.extend(binders);
        let r = f(self);
        self.pairs.truncate(n);
        r
    }

    fn mult(&self, a: &Mult, b: &Mult) -> bool {
        match (a, b) {
            (Mult::Var(p), Mult::Var(q)) => self.name(p, q),
            _ => a == b,
        }
    }

    fn ty(&mut self, a: &Ty, b: &Ty) -> bool {
        match (a, b) {
            (Ty::Data(k, ms), Ty::Data(l, ns)) => {
                k == l && ms.len() == ns.len() && ms.iter().zip(ns).all(|(m, n)| self.mult(m, n))
            }
            (Ty::Fun(a1, m1, r1), Ty::Fun(a2, m2, r2)) => {
                self.mult(m1, m2) && self.ty(a1, a2) && self.ty(r1, r2)
            }
            (Ty::Forall(p, b1), Ty::Forall(q, b2)) => {
                self.with([(p.clone(), q.clone())], |s| s.ty(b1, b2))
            }
            _ => false,
        }
    }

    fn env(&self, a: &Option<UsageEnv>, b: &Option<UsageEnv>) -> bool {
        match (a, b) {
            (None, None) => true,
            (Some(a), Some(b)) => {
                if a.len() != b.len() {
                    return false;
                }
                let mut used = vec![false; b.len()];
                a.entries().iter().all(|(ka, ma)| {
                    let hit = b.entries().iter().enumerate().position(|(i, (kb, mb))| {
                        !used[i]
                            && ka.depth == kb.depth
                            && ka.tags == kb.tags
                            && self.name(&ka.name, &kb.name)
                            && self.mult(ma, mb)
                    });
                    hit.map(|i| used[i] = true).is_some()
                })
            }
            _ => false,
        }
    }

    fn bind_head(&mut self, a: &Bind, b: &Bind) -> bool {
        self.env(&a.env, &b.env) && self.ty(&a.ty, &b.ty)
    }

    fn expr(&mut self, a: &Expr, b: &Expr) -> bool {
        match (a, b) {
            (Expr::Var(x), Expr::Var(y)) => self.name(x, y),
            (Expr::Ctor(k), Expr::Ctor(l)) => k == l,
            (Expr::MultAbs(p, b1), Expr::MultAbs(q, b2)) => {
                self.with([(p.clone(), q.clone())], |s| s.expr(b1, b2))
            }
            (Expr::MultApp(f, m), Expr::MultApp(g, n)) => self.mult(m, n) && self.expr(f, g),
            (Expr::Abs(x, m, t, b1), Expr::Abs(y, n, u, b2)) => {
                self.mult(m, n) && self.ty(t, u) && self.with([(x.clone(), y.clone())], |s| s.expr(b1, b2))
            }
            (Expr::App(f, x), Expr::App(g, y)) => self.expr(f, g) && self.expr(x, y),
            (Expr::Let(b1, e1), Expr::Let(b2, e2)) => {
                self.bind_head(b1, b2)
                    && self.expr(&b1.rhs, &b2.rhs)
                    && self.with([(b1.var.clone(), b2.var.clone())], |s| s.expr(e1, e2))
            }
            (Expr::LetRec(bs1, e1), Expr::LetRec(bs2, e2)) => {
                if bs1.len() != bs2.len() || !bs1.iter().zip(bs2).all(|(x, y)| self.bind_head(x, y)) {
                    return false;
                }
                let pairs: Vec<_> = bs1.iter().zip(bs2).map(|(x, y)| (x.var.clone(), y.var.clone())).collect();
                self.with(pairs, |s| bs1.iter().zip(bs2).all(|(x, y)| s.expr(&x.rhs, &y.rhs)) && s.expr(e1, e2))
            }
            (Expr::Case(s1, z1, env1, t1, alts1), Expr::Case(s2, z2, env2, t2, alts2)) => {
                self.expr(s1, s2)
                    && self.env(env1, env2)
                    && self.ty(t1, t2)
                    && alts1.len() == alts2.len()
                    && self.with([(z1.clone(), z2.clone())], |s| {
                        alts1.iter().zip(alts2).all(|(a1, a2)| s.alt(a1, a2))
                    })
            }
            _ => false,
        }
    }

    fn alt(&mut self, a: &Alt, b: &Alt) -> bool {
        match (&a.pat, &b.pat) {
            (Pattern::Wild, Pattern::Wild) => self.expr(&a.rhs, &b.rhs),
            (Pattern::Con(k, xs), Pattern::Con(l, ys)) => {
                k == l
                    && xs.len() == ys.len()
                    && xs.iter().zip(ys).all(|((_, m), (_, n))| self.mult(m, n))
                    && self.with(
                        xs.iter().zip(ys).map(|((x, _), (y, _))| (x.clone(), y.clone())),
                        |s| s.expr(&a.rhs, &b.rhs),
                    )
            }
            _ => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bound_names_are_irrelevant() {
        let (x, y) = (Name::fresh("x"), Name::fresh("y"));
        let a = Ty::data("a");
        let e1 = Expr::lam(&x, Mult::One, a.clone(), Expr::var(&x));
        let e2 = Expr::lam(&y, Mult::One, a.clone(), Expr::var(&y));
        assert!(alpha_eq(&e1, &e2));
        let free = Expr::lam(&y, Mult::One, a, Expr::var(&x));
        assert!(!alpha_eq(&e1, &free));
    }

    #[test]
    fn free_names_must_match() {
        let (x, y) = (Name::fresh("x"), Name::fresh("y"));
        assert!(!alpha_eq(&Expr::var(&x), &Expr::var(&y)));
        assert!(alpha_eq(&Expr::var(&x), &Expr::var(&x)));
    }

    #[test]
    fn shadowing_is_respected() {
        let (x, y, z) = (Name::fresh("x"), Name::fresh("y"), Name::fresh("z"));
        let a = Ty::data("a");
        // \x. \x. x  ~  \y. \z. z   but not  \y. \z. y
        let e1 = Expr::lam(&x, Mult::One, a.clone(), Expr::lam(&x, Mult::One, a.clone(), Expr::var(&x)));
        let e2 = Expr::lam(&y, Mult::One, a.clone(), Expr::lam(&z, Mult::One, a.clone(), Expr::var(&z)));
        let e3 = Expr::lam(&y, Mult::One, a.clone(), Expr::lam(&z, Mult::One, a, Expr::var(&y)));
        assert!(alpha_eq(&e1, &e2));
        assert!(!alpha_eq(&e1, &e3));
    }

    #[test]
    fn forall_binders() {
        let (p, q) = (Name::fresh("p"), Name::fresh("q"));
        let a = Ty::data("a");
        let t1 = Ty::Forall(p.clone(), Box::new(Ty::fun(a.clone(), Mult::Var(p.clone()), a.clone())));
        let t2 = Ty::Forall(q.clone(), Box::new(Ty::fun(a.clone(), Mult::Var(q.clone()), a.clone())));
        assert!(alpha_eq_ty(&t1, &t2));
        assert!(!alpha_eq_ty(&t1, &Ty::fun(a.clone(), Mult::Var(p), a)));
    }
}
