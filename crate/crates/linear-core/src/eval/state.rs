use std::collections::{BTreeMap, BTreeSet};

use super::{Ann, Binding, EvalEnv, Frame};
use crate::check::{check_closed, TypeError, TypingCtx};
use crate::ir::{free_vars, strip_annotations, Bind, Decls, Expr, Name, Ty};

/// A snapshot of the machine: the environment, the term under
/// evaluation, and the continuation stack, innermost frame last.
#[derive(Clone, Copy, Debug)]
pub struct MachineState<'a> {
    pub theta: &'a EvalEnv,
    pub focus: &'a Expr,
    pub sigma: &'a [Frame],
}

/// Put the focus back into the term its continuation expects.
pub fn plug(focus: &Expr, sigma: &[Frame]) -> Expr {
    let mut e = focus.clone();
    for f in sigma.iter().rev() {
        e = match f {
            Frame::Apply(x) => Expr::app(e, Expr::Var(x.clone())),
            Frame::MultApply(m) => Expr::MultApp(Box::new(e), m.clone()),
            Frame::Case { z, env, ty, alts } => Expr::Case(Box::new(e), z.clone(), env.clone(), ty.clone(), alts.clone()),
            Frame::Update { .. } => e,
        };
    }
    e
}

/// `[Θ | e]`: rebuild a term from the environment. Bindings become lets
/// whose resources are those of their right-hand sides, and mutually
/// dependent bindings become one letrec. Only bindings that `e` or a linear
/// binding can reach are kept; they are ordered so that every binding is in
/// scope of its uses.
pub fn expand_env(theta: &EvalEnv, e: &Expr) -> Expr {
    let mut keep: BTreeSet<Name> = BTreeSet::new();
    let mut todo: Vec<Name> = free_vars(e).into_iter().collect();
    todo.extend(theta.iter().filter(|(_, b)| b.ann == Ann::LinearOne).map(|(x, _)| x.clone()));
    let mut deps: BTreeMap<Name, Vec<Name>> = BTreeMap::new();
    while let Some(x) = todo.pop() {
        let Some(b) = theta.get(&x) else { continue };
        if !keep.insert(x.clone()) {
            continue;
        }
        let ds: Vec<Name> = free_vars(&b.rhs).into_iter().filter(|y| theta.contains(y)).collect();
        todo.extend(ds.iter().cloned());
        deps.insert(x, ds);
    }
    let sccs = tarjan(&deps);
    let mut out = e.clone();
    for scc in sccs.iter().rev() {
        let recursive = scc.len() > 1 || deps[&scc[0]].contains(&scc[0]);
        if recursive {
            let binds = scc.iter().map(|x| bind_of(x, theta.get(x).expect("kept"))).collect();
            out = Expr::LetRec(binds, Box::new(out));
            continue;
        }
        let x = &scc[0];
        let b = theta.get(x).expect("kept");
        out = Expr::Let(Box::new(bind_of(x, b)), Box::new(out));
    }
    out
}

fn bind_of(x: &Name, b: &Binding) -> Bind {
    let env = match &b.ann {
        Ann::Delta(env) => Some(env.clone()),
        _ => None,
    };
    Bind { var: x.clone(), env, ty: b.ty.clone(), rhs: b.rhs.clone() }
}

/// Strongly connected components, dependencies before dependents.
fn tarjan(deps: &BTreeMap<Name, Vec<Name>>) -> Vec<Vec<Name>> {
    struct T<'a> {
        deps: &'a BTreeMap<Name, Vec<Name>>,
        index: BTreeMap<Name, usize>,
        low: BTreeMap<Name, usize>,
        stack: Vec<Name>,
        on: BTreeSet<Name>,
        out: Vec<Vec<Name>>,
    }
    impl T<'_> {
        fn visit(&mut self, v: &Name) {
            let i = self.index.len();
            self.index.insert(v.clone(), i);
            self.low.insert(v.clone(), i);
            self.stack.push(v.clone());
            self.on.insert(v.clone());
            for w in &self.deps[v] {
                if !self.index.contains_key(w) {
                    self.visit(w);
                    let lw = self.low[w];
                    let lv = self.low.get_mut(v).unwrap();
                    *lv = (*lv).min(lw);
                } else if self.on.contains(w) {
                    let iw = self.index[w];
                    let lv = self.low.get_mut(v).unwrap();
                    *lv = (*lv).min(iw);
                }
            }
            if self.low[v] == self.index[v] {
                let mut scc = Vec::new();
                loop {
                    let w = self.stack.pop().unwrap();
                    self.on.remove(&w);
                    scc.push(w.clone());
                    if &w == v {
                        break;
                    }
                }
                scc.sort();
                self.out.push(scc);
            }
        }
    }
    let mut t = T { deps, index: BTreeMap::new(), low: BTreeMap::new(), stack: Vec::new(), on: BTreeSet::new(), out: Vec::new() };
    for v in deps.keys() {
        if !t.index.contains_key(v) {
            t.visit(v);
        }
    }
    t.out
}

/// Typecheck the expanded state with annotations recomputed.
pub fn check_state(decls: &Decls, st: &MachineState) -> Result<Ty, TypeError> {
    let term = strip_annotations(&expand_env(st.theta, &plug(st.focus, st.sigma)));
    check_closed(decls, &TypingCtx::default(), &term)
}

pub fn check_state_welltyped(decls: &Decls, st: &MachineState) -> bool {
    check_state(decls, st).is_ok()
}
