#![allow(dead_code)]

pub mod props;

use std::collections::HashMap;

use linear_core::eval::Observation;
use linear_core::ir::{refresh_binders, subst_expr, subst_mult_expr, Expr, Name, Pattern};
use linear_core::parse::parse_program;
use linear_core::Program;

pub fn parse(src: &str) -> Program {
    parse_program(src).unwrap_or_else(|e| panic!("{e}\n{src}"))
}

/// Call-by-name reference evaluator: substitution for application, an
/// unmemoised environment for lets, so every use of a let-bound variable
/// re-evaluates its rhs.
pub struct CallByName {
    env: HashMap<Name, Expr>,
    pub rhs_evals: HashMap<String, usize>,
    fuel: u64,
}

impl CallByName {
    pub fn new(fuel: u64) -> CallByName {
        CallByName { env: HashMap::new(), rhs_evals: HashMap::new(), fuel }
    }

    fn is_con(e: &Expr) -> bool {
        match e {
            Expr::Ctor(_) => true,
            Expr::App(f, _) | Expr::MultApp(f, _) => Self::is_con(f),
            _ => false,
        }
    }

    pub fn whnf(&mut self, e: &Expr) -> Option<Expr> {
        if self.fuel == 0 {
            return None;
        }
        self.fuel -= 1;
        match e {
            Expr::Var(x) => {
                let rhs = self.env.get(x)?.clone();
                *self.rhs_evals.entry(x.text().to_string()).or_default() += 1;
                self.whnf(&rhs)
            }
            Expr::Ctor(_) | Expr::Abs(..) | Expr::MultAbs(..) => Some(e.clone()),
            _ if Self::is_con(e) => Some(e.clone()),
            Expr::App(f, a) => match self.whnf(f)? {
                v @ Expr::Abs(..) => {
                    let Expr::Abs(y, _, _, b) = refresh_binders(&v) else { unreachable!() };
                    self.whnf(&subst_expr(&b, &y, a))
                }
                v if Self::is_con(&v) => Some(Expr::app(v, (**a).clone())),
                _ => None,
            },
            Expr::MultApp(f, m) => match self.whnf(f)? {
                v @ Expr::MultAbs(..) => {
                    let Expr::MultAbs(p, b) = refresh_binders(&v) else { unreachable!() };
                    self.whnf(&subst_mult_expr(&b, &p, m))
                }
                v if Self::is_con(&v) => Some(Expr::MultApp(Box::new(v), m.clone())),
                _ => None,
            },
            Expr::Let(b, body) => {
                self.env.insert(b.var.clone(), b.rhs.clone());
                self.whnf(body)
            }
            Expr::LetRec(bs, body) => {
                for b in bs {
                    self.env.insert(b.var.clone(), b.rhs.clone());
                }
                self.whnf(body)
            }
            Expr::Case(s, z, _, _, alts) => {
                let v = self.whnf(s)?;
                let (head, args, _) = v.spine();
                let Expr::Ctor(k) = head else { return None };
                let alt = alts
                    .iter()
                    .find(|a| matches!(&a.pat, Pattern::Con(k2, _) if k2 == k))
                    .or_else(|| alts.iter().find(|a| a.pat == Pattern::Wild))?;
                let mut rhs = subst_expr(&alt.rhs, z, &v);
                if let Pattern::Con(_, ys) = &alt.pat {
                    for ((y, _), a) in ys.iter().zip(&args) {
                        rhs = subst_expr(&rhs, y, a);
                    }
                }
                self.whnf(&rhs)
            }
        }
    }

    pub fn observe(&mut self, e: &Expr, depth: usize) -> Observation {
        let Some(v) = self.whnf(e) else { return Observation::Cut };
        if !Self::is_con(&v) {
            return Observation::Fun;
        }
        let (head, args, _) = v.spine();
        let Expr::Ctor(k) = head else { unreachable!() };
        let fields = args
            .iter()
            .map(|a| if depth == 0 { Observation::Cut } else { self.observe(a, depth - 1) })
            .collect();
        Observation::Con(k.clone(), fields)
    }
}
