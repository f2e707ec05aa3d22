use std::collections::HashMap;

use crate::check::{check_program, TypeError};
use crate::ir::{Alt, Bind, Expr, Mult, Name, Path, Program, Ty};

enum Op<'a> {
    Arg(&'a Expr, Path),
    Mult(&'a Mult),
}

/// Let-bind every argument that is not already a variable, so that
/// evaluation can share it. `types` gives the type of each node of `e` by
/// path; arguments without a recorded type get the placeholder type `?`.
/// Introduced lets carry no usage environment.
pub fn translate_sharing(e: &Expr, types: &HashMap<Path, Ty>) -> Expr {
    go(e, &mut Vec::new(), types)
}

fn go(e: &Expr, path: &mut Path, types: &HashMap<Path, Ty>) -> Expr {
    let child = |i: u32, c: &Expr, path: &mut Path| {
        path.push(i);
        let r = go(c, path, types);
        path.pop();
        r
    };
    match e {
        Expr::Var(_) | Expr::Ctor(_) => e.clone(),
        Expr::App(..) | Expr::MultApp(..) => spine(e, path, types),
        Expr::MultAbs(p, b) => Expr::MultAbs(p.clone(), Box::new(child(0, b, path))),
        Expr::Abs(x, m, t, b) => Expr::Abs(x.clone(), m.clone(), t.clone(), Box::new(child(0, b, path))),
        Expr::Let(b, body) => {
            let rhs = child(0, &b.rhs, path);
            let body = child(1, body, path);
            Expr::Let(Box::new(Bind { rhs, ..(**b).clone() }), Box::new(body))
        }
        Expr::LetRec(bs, body) => {
            let binds = bs
                .iter()
                .enumerate()
                .map(|(i, b)| Bind { rhs: child(i as u32, &b.rhs, path), ..b.clone() })
                .collect();
            let body = child(bs.len() as u32, body, path);
            Expr::LetRec(binds, Box::new(body))
        }
        Expr::Case(s, z, env, t, alts) => {
            // A scrutinee in WHNF must stay one, so its lets go outside.
            let (lets, s) = if s.is_whnf() && matches!(s.spine().0, Expr::Ctor(_)) {
                path.push(0);
                let r = spine_parts(s, path, types);
                path.pop();
                r
            } else {
                (Vec::new(), child(0, s, path))
            };
            let alts = alts
                .iter()
                .enumerate()
                .map(|(i, a)| Alt { pat: a.pat.clone(), rhs: child(i as u32 + 1, &a.rhs, path) })
                .collect();
            wrap(lets, Expr::Case(Box::new(s), z.clone(), env.clone(), t.clone(), alts))
        }
    }
}

fn spine(e: &Expr, path: &mut Path, types: &HashMap<Path, Ty>) -> Expr {
    let (lets, out) = spine_parts(e, path, types);
    wrap(lets, out)
}

fn wrap(lets: Vec<Bind>, mut out: Expr) -> Expr {
    for b in lets.into_iter().rev() {
        out = Expr::Let(Box::new(b), Box::new(out));
    }
    out
}

fn spine_parts(e: &Expr, path: &mut Path, types: &HashMap<Path, Ty>) -> (Vec<Bind>, Expr) {
    let mut ops = Vec::new();
    let mut cur = e;
    let mut p = path.clone();
    loop {
        match cur {
            Expr::App(f, a) => {
                let mut ap = p.clone();
                ap.push(1);
                ops.push(Op::Arg(a, ap));
                cur = f;
            }
            Expr::MultApp(f, m) => {
                ops.push(Op::Mult(m));
                cur = f;
            }
            _ => break,
        }
        p.push(0);
    }
    ops.reverse();
    let mut out = go(cur, &mut p, types);
    let mut lets = Vec::new();
    for op in ops {
        match op {
            Op::Mult(m) => out = Expr::MultApp(Box::new(out), m.clone()),
            Op::Arg(a @ Expr::Var(_), _) => out = Expr::app(out, a.clone()),
            Op::Arg(a, mut ap) => {
                let x = Name::fresh("s");
                let ty = types.get(&ap).cloned().unwrap_or_else(|| Ty::data("?"));
                let rhs = go(a, &mut ap, types);
                lets.push(Bind { var: x.clone(), env: None, ty, rhs });
                out = Expr::app(out, Expr::Var(x));
            }
        }
    }
    (lets, out)
}

/// Check `p`, translate its main term, and check the result again so
/// that the introduced lets get their usage environments.
pub fn share_program(p: &Program) -> Result<(Program, Ty), TypeError> {
    let checked = check_program(p)?;
    let shared = p.with_main(translate_sharing(&p.main, &checked.types));
    let again = check_program(&shared)?;
    Ok((again.program, again.ty))
}
