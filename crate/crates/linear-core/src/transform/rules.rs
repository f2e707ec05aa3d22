use super::{Pass, RewriteCtx, RewriteError};
use crate::ir::{
    alpha_eq_ty, free_vars, refresh_binders, rename, subst_expr_fresh, subst_mult_expr, Alt, Bind, Expr, Mult, Name,
    Path, Pattern, Ty,
};

type Rewrite = Result<(Path, Expr), RewriteError>;

fn na<T>(msg: impl Into<String>) -> Result<T, RewriteError> {
    Err(RewriteError::NotApplicable(msg.into()))
}

/// The path actually rewritten (a rule may climb to an enclosing node)
/// and its replacement.
pub(super) fn apply(ctx: RewriteCtx, main: &Expr, path: &[u32], pass: Pass) -> Rewrite {
    let Some(e) = main.at(path) else { return na(format!("no node at {path:?}")) };
    let here = |r: Result<Expr, RewriteError>| r.map(|n| (path.to_vec(), n));
    match pass {
        Pass::Inline => here(inline(e)),
        Pass::Beta => here(beta(e)),
        Pass::BetaSharing => here(beta_sharing(e)),
        Pass::BetaMult => here(beta_mult(e)),
        Pass::CaseKnown => here(case_known(e)),
        Pass::CaseOfCase => here(case_of_case(e)),
        Pass::LetLam => here(let_lam(e)),
        Pass::LetApp => here(let_app(e)),
        Pass::LetCase => here(let_case(e)),
        Pass::CaseLet => case_let(ctx, main, path),
        Pass::LetLet => here(let_let(e)),
        Pass::EtaExpand => here(eta_expand(ctx, main, path)),
        Pass::EtaReduce => here(eta_reduce(ctx, e, path)),
        Pass::BinderSwap => here(binder_swap(e, false)),
        Pass::ReverseBinderSwap => here(binder_swap(e, true)),
    }
}

fn inline(e: &Expr) -> Result<Expr, RewriteError> {
    let Expr::Let(b, body) = e else { return na("not a let") };
    if !free_vars(body).contains(&b.var) {
        return na(format!("{} is not used", b.var));
    }
    Ok(Expr::Let(b.clone(), Box::new(subst_expr_fresh(body, &b.var, &b.rhs))))
}

fn beta(e: &Expr) -> Result<Expr, RewriteError> {
    let Expr::App(f, a) = e else { return na("not an application") };
    let Expr::Abs(x, _, _, body) = &**f else { return na("not a redex") };
    Ok(subst_expr_fresh(body, x, a))
}

fn beta_sharing(e: &Expr) -> Result<Expr, RewriteError> {
    let Expr::App(f, a) = e else { return na("not an application") };
    let Expr::Abs(x, m, t, body) = &**f else { return na("not a redex") };
    if *m != Mult::Many {
        return na(format!("binder {x} is not unrestricted"));
    }
    Ok(Expr::Let(Box::new(Bind { var: x.clone(), env: None, ty: t.clone(), rhs: (**a).clone() }), body.clone()))
}

fn beta_mult(e: &Expr) -> Result<Expr, RewriteError> {
    let Expr::MultApp(f, pi) = e else { return na("not a multiplicity application") };
    let Expr::MultAbs(p, body) = &**f else { return na("not a multiplicity redex") };
    Ok(subst_mult_expr(body, p, pi))
}

fn case_known(e: &Expr) -> Result<Expr, RewriteError> {
    let Expr::Case(s, z, _, _, alts) = e else { return na("not a case") };
    let (head, args, _) = s.spine();
    let Expr::Ctor(k) = head else { return na("scrutinee is not a constructor application") };
    let alt = alts
        .iter()
        .find(|a| matches!(&a.pat, Pattern::Con(c, _) if c == k))
        .or_else(|| alts.iter().find(|a| a.pat == Pattern::Wild));
    let Some(alt) = alt else { return na(format!("no alternative for {k}")) };
    let mut rhs = alt.rhs.clone();
    if let Pattern::Con(_, ys) = &alt.pat {
        if ys.len() != args.len() {
            return na(format!("{k} is not fully applied"));
        }
        for ((y, _), a) in ys.iter().zip(args) {
            rhs = subst_expr_fresh(&rhs, y, a);
        }
    }
    Ok(subst_expr_fresh(&rhs, z, s))
}

fn case_of_case(e: &Expr) -> Result<Expr, RewriteError> {
    let Expr::Case(s, w, _, tw, walts) = e else { return na("not a case") };
    let Expr::Case(inner, z, _, tz, calts) = &**s else { return na("scrutinee is not a case") };
    let alts = calts
        .iter()
        .map(|a| {
            let outer = Expr::Case(Box::new(Expr::Ctor(String::new())), w.clone(), None, tw.clone(), walts.clone());
            let Expr::Case(_, w2, _, _, walts2) = refresh_binders(&outer) else { unreachable!() };
            Alt { pat: a.pat.clone(), rhs: Expr::Case(Box::new(a.rhs.clone()), w2, None, tw.clone(), walts2) }
        })
        .collect();
    Ok(Expr::Case(inner.clone(), z.clone(), None, tz.clone(), alts))
}

fn let_lam(e: &Expr) -> Result<Expr, RewriteError> {
    let Expr::Abs(y, m, t, body) = e else { return na("not an abstraction") };
    let Expr::Let(b, inner) = &**body else { return na("body is not a let") };
    if free_vars(&b.rhs).contains(y) {
        return na(format!("the let mentions {y}"));
    }
    Ok(Expr::Let(b.clone(), Box::new(Expr::Abs(y.clone(), m.clone(), t.clone(), inner.clone()))))
}

fn let_app(e: &Expr) -> Result<Expr, RewriteError> {
    let Expr::App(f, a) = e else { return na("not an application") };
    let Expr::Let(b, body) = &**f else { return na("function is not a let") };
    Ok(Expr::Let(b.clone(), Box::new(Expr::App(body.clone(), a.clone()))))
}

fn let_case(e: &Expr) -> Result<Expr, RewriteError> {
    let Expr::Case(s, z, env, t, alts) = e else { return na("not a case") };
    let Expr::Let(b, body) = &**s else { return na("scrutinee is not a let") };
    Ok(Expr::Let(b.clone(), Box::new(Expr::Case(body.clone(), z.clone(), env.clone(), t.clone(), alts.clone()))))
}

fn let_let(e: &Expr) -> Result<Expr, RewriteError> {
    let Expr::Let(outer, body) = e else { return na("not a let") };
    let Expr::Let(inner, b) = &outer.rhs else { return na("rhs is not a let") };
    let moved = Bind { rhs: (**b).clone(), ..(**outer).clone() };
    Ok(Expr::Let(inner.clone(), Box::new(Expr::Let(Box::new(moved), body.clone()))))
}

/// Whether child `i` of `parent` is the hole of an evaluation context
/// that binds nothing.
fn is_e_edge(parent: &Expr, i: u32) -> bool {
    match parent {
        Expr::App(..) => true,
        Expr::MultApp(..) | Expr::Let(..) | Expr::Case(..) => i == 0,
        _ => false,
    }
}

/// Subterms of `e` reachable through evaluation contexts, `e` included,
/// in pre-order.
fn e_positions(e: &Expr) -> Vec<Path> {
    fn go(e: &Expr, cur: &mut Path, out: &mut Vec<Path>) {
        out.push(cur.clone());
        for (i, c) in e.children().into_iter().enumerate() {
            if is_e_edge(e, i as u32) {
                cur.push(i as u32);
                go(c, cur, out);
                cur.pop();
            }
        }
    }
    let mut out = Vec::new();
    go(e, &mut Vec::new(), &mut out);
    out
}

fn is_atom(e: &Expr) -> bool {
    matches!(e, Expr::Var(_) | Expr::Ctor(_))
}

/// `case e of { ρ → E[e1] }` to `let x = e1 in case e of { ρ → E[x] }`,
/// provided `e1` mentions neither the case binder nor the pattern
/// variables. At a case node the first such subterm is floated; at a node
/// inside an alternative that node is.
fn case_let(ctx: RewriteCtx, main: &Expr, path: &[u32]) -> Rewrite {
    let e = main.at(path).expect("site exists");
    if matches!(e, Expr::Case(..)) {
        let Expr::Case(_, _, _, _, alts) = e else { unreachable!() };
        let mut guarded = None;
        for (i, alt) in alts.iter().enumerate() {
            for q in e_positions(&alt.rhs) {
                if is_atom(alt.rhs.at(&q).expect("position exists")) {
                    continue;
                }
                match float(ctx, main, path, i, &q) {
                    Ok(new) => return Ok((path.to_vec(), new)),
                    Err(g @ RewriteError::GuardFailed(_)) => guarded = guarded.or(Some(g)),
                    Err(RewriteError::NotApplicable(_)) => {}
                }
            }
        }
        return Err(guarded.unwrap_or_else(|| RewriteError::NotApplicable("no subterm to float".into())));
    }
    let Some(k) = (0..path.len()).rev().find(|&k| {
        matches!(main.at(&path[..k]), Some(Expr::Case(..))) && path[k] >= 1
    }) else {
        return na("not inside a case alternative");
    };
    for j in k + 1..path.len() {
        if !is_e_edge(main.at(&path[..j]).expect("on path"), path[j]) {
            return na("not in an evaluation context of the alternative");
        }
    }
    if is_atom(e) {
        return na("atoms are not floated");
    }
    let case_path = &path[..k];
    let new = float(ctx, main, case_path, (path[k] - 1) as usize, &path[k + 1..])?;
    Ok((case_path.to_vec(), new))
}

fn float(ctx: RewriteCtx, main: &Expr, case_path: &[u32], alt: usize, q: &[u32]) -> Result<Expr, RewriteError> {
    let Some(Expr::Case(s, z, env, t, alts)) = main.at(case_path) else { unreachable!() };
    let e1 = alts[alt].rhs.at(q).expect("position exists");
    let mut bound = vec![z.clone()];
    if let Pattern::Con(_, ys) = &alts[alt].pat {
        bound.extend(ys.iter().map(|(y, _)| y.clone()));
    }
    let fv = free_vars(e1);
    if let Some(y) = bound.iter().find(|y| fv.contains(y)) {
        return Err(RewriteError::GuardFailed(format!("the floated term mentions {y}, bound by the case")));
    }
    let full: Path = [case_path, &[alt as u32 + 1], q].concat();
    let Some(ty) = ctx.types.get(&full) else { return na("no type recorded for the floated term") };
    let x = Name::fresh("x");
    let mut alts = alts.clone();
    *alts[alt].rhs.at_mut(q).expect("position exists") = Expr::Var(x.clone());
    let case = Expr::Case(s.clone(), z.clone(), env.clone(), t.clone(), alts);
    Ok(Expr::Let(Box::new(Bind { var: x, env: None, ty: ty.clone(), rhs: e1.clone() }), Box::new(case)))
}

/// Whether the node at `path` lies on the head spine of a case scrutinee
/// in weak head normal form.
fn in_whnf_scrutinee_head(main: &Expr, path: &[u32]) -> bool {
    for k in (0..path.len()).rev() {
        let parent = main.at(&path[..k]).expect("on path");
        match (parent, path[k]) {
            (Expr::App(..) | Expr::MultApp(..), 0) => continue,
            (Expr::Case(s, ..), 0) => return s.is_whnf(),
            _ => return false,
        }
    }
    false
}

fn eta_expand(ctx: RewriteCtx, main: &Expr, path: &[u32]) -> Result<Expr, RewriteError> {
    let e = main.at(path).expect("site exists");
    let Some(Ty::Fun(arg, m, _)) = ctx.types.get(path) else { return na("not of function type") };
    if in_whnf_scrutinee_head(main, path) {
        return na("head of a scrutinee in weak head normal form");
    }
    let x = Name::fresh("x");
    Ok(Expr::lam(&x, m.clone(), (**arg).clone(), Expr::app(e.clone(), Expr::Var(x.clone()))))
}

fn eta_reduce(ctx: RewriteCtx, e: &Expr, path: &[u32]) -> Result<Expr, RewriteError> {
    let Expr::Abs(x, m, t, body) = e else { return na("not an abstraction") };
    let Expr::App(f, a) = &**body else { return na("body is not an application") };
    if **a != Expr::Var(x.clone()) || free_vars(f).contains(x) {
        return na(format!("body is not an application to {x}"));
    }
    let fpath: Path = [path, &[0, 0]].concat();
    match ctx.types.get(&fpath) {
        Some(Ty::Fun(t2, m2, _)) if alpha_eq_ty(t, t2) && m == m2 => Ok((**f).clone()),
        _ => na("function type does not match the binder"),
    }
}

fn binder_swap(e: &Expr, reverse: bool) -> Result<Expr, RewriteError> {
    let Expr::Case(s, z, env, t, alts) = e else { return na("not a case") };
    let Expr::Var(x) = &**s else { return na("scrutinee is not a variable") };
    let (from, to) = if reverse { (z, x) } else { (x, z) };
    if !alts.iter().any(|a| free_vars(&a.rhs).contains(from)) {
        return na(format!("{from} does not occur in the alternatives"));
    }
    let alts = alts.iter().map(|a| Alt { pat: a.pat.clone(), rhs: rename(&a.rhs, from, to) }).collect();
    Ok(Expr::Case(s.clone(), z.clone(), env.clone(), t.clone(), alts))
}
