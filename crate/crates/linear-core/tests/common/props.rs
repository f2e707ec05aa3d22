//! Property checks shared by the focused tests and the acceptance run.
//! Each returns how many instances it examined and what went wrong.

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

use linear_core::check::{check_alt, check_closed, AltMode, Entry, Resource, TypeError, TypingCtx};
use linear_core::eval::{differential_run, DiffVerdict, EvalOptions};
use linear_core::gen::{generate, generate_well_typed, prelude_decls, GenConfig};
use linear_core::ir::{
    alpha_eq_ty, strip_annotations, Alt, Assume, Bind, Decls, Expr, Mult, Name, Pattern, ResKey, Ty, UsageEnv,
};
use linear_core::parse::parse_program;
use linear_core::pretty::pretty_program;
use linear_core::transform::{preservation_check, Pass, SitePolicy, Verdict};
use linear_core::Program;

#[derive(Debug, Default)]
pub struct Tally {
    pub instances: usize,
    pub failures: Vec<String>,
}

impl Tally {
    fn fail(&mut self, msg: String) {
        if self.failures.len() < 5 {
            self.failures.push(msg);
        } else {
            self.failures.push(String::new());
        }
    }

    pub fn ok(&self, min: usize) -> bool {
        self.failures.is_empty() && self.instances >= min
    }

    pub fn summary(&self) -> String {
        let shown: Vec<&str> = self.failures.iter().filter(|f| !f.is_empty()).map(|s| s.as_str()).collect();
        format!("{} instances, {} failures {shown:?}", self.instances, self.failures.len())
    }
}

fn ctx_of(assumes: &[Assume]) -> TypingCtx {
    let mut ctx = TypingCtx::default();
    for a in assumes {
        if a.mult == Mult::Many {
            ctx.gamma.push((a.name.clone(), Entry::Unr(a.ty.clone())));
        } else {
            ctx.gamma.push((a.name.clone(), Entry::Lin(a.ty.clone(), a.mult.clone())));
            ctx.delta.push(Resource::linear(&a.name, a.ty.clone()));
        }
    }
    ctx
}

fn same(a: &Result<Ty, TypeError>, b: &Result<Ty, TypeError>) -> bool {
    match (a, b) {
        (Ok(s), Ok(t)) => alpha_eq_ty(s, t),
        (Err(_), Err(_)) => true,
        _ => false,
    }
}

/// One occurrence of a linear assumption replaced by another of the same
/// type, which usually breaks linearity.
fn swapped(p: &Program) -> Option<Program> {
    let lin: Vec<&Assume> = p.assumes.iter().filter(|a| a.mult == Mult::One).collect();
    for path in p.main.paths() {
        let Some(Expr::Var(x)) = p.main.at(&path) else { continue };
        let Some(a) = lin.iter().find(|a| a.name == *x) else { continue };
        if let Some(b) = lin.iter().find(|b| b.name != a.name && b.ty == a.ty) {
            let mut main = p.main.clone();
            *main.at_mut(&path).unwrap() = Expr::Var(b.name.clone());
            return Some(p.with_main(main));
        }
    }
    None
}

/// Open programs, well-typed and not, for the context-swapping lemmas.
fn open_programs(n: u64) -> Vec<Program> {
    let decls = prelude_decls();
    let cfg = GenConfig { closed: false, ..GenConfig::default() };
    (0..n)
        .flat_map(|seed| {
            let checked = generate_well_typed(&decls, seed, &cfg).1.program;
            let p = checked.with_main(strip_annotations(&checked.main));
            let bad = swapped(&p);
            [Some(p), Some(generate(&decls, seed ^ 0xabcdef, &cfg)), bad].into_iter().flatten()
        })
        .collect()
}

/// A linear assumption `x :1 σ` against `x :_{y} σ` with a fresh linear `y`:
/// both accepted at the same type, or both rejected. Also returns how
/// many of the instances were accepted.
pub fn linear_vs_delta(programs: u64) -> (Tally, usize) {
    let mut t = Tally::default();
    let mut accepted = 0;
    for p in open_programs(programs) {
        let base = ctx_of(&p.assumes);
        let direct = check_closed(&p.decls, &base, &p.main);
        for a in p.assumes.iter().filter(|a| a.mult == Mult::One) {
            let y = Name::fresh("y");
            let mut ctx = base.clone();
            for (n, e) in ctx.gamma.iter_mut() {
                if *n == a.name {
                    *e = Entry::Delta(a.ty.clone(), UsageEnv::from_entries([(ResKey::plain(y.clone()), Mult::One)]));
                }
            }
            ctx.delta.retain(|r| r.key.name != a.name);
            ctx.delta.push(Resource::linear(&y, a.ty.clone()));
            let via_delta = check_closed(&p.decls, &ctx, &p.main);
            if !same(&direct, &via_delta) {
                t.fail(format!("{}: {direct:?} vs {via_delta:?}", a.name));
            }
            t.instances += 1;
            accepted += direct.is_ok() as usize;
        }
    }
    (t, accepted)
}

/// An unrestricted assumption `x :ω σ` against `x :_{} σ`.
pub fn unrestricted_vs_empty_delta(programs: u64) -> Tally {
    let mut t = Tally::default();
    for p in open_programs(programs) {
        let base = ctx_of(&p.assumes);
        let direct = check_closed(&p.decls, &base, &p.main);
        for a in p.assumes.iter().filter(|a| a.mult == Mult::Many) {
            let mut ctx = base.clone();
            for (n, e) in ctx.gamma.iter_mut() {
                if *n == a.name {
                    *e = Entry::Delta(a.ty.clone(), UsageEnv::new());
                }
            }
            let via_delta = check_closed(&p.decls, &ctx, &p.main);
            if !same(&direct, &via_delta) {
                t.fail(format!("{}: {direct:?} vs {via_delta:?}", a.name));
            }
            t.instances += 1;
        }
    }
    t
}

/// Random alternative bodies over a small scope, without any linearity
/// bookkeeping; the checker decides.
struct Bodies<'d> {
    rng: StdRng,
    decls: &'d Decls,
}

impl Bodies<'_> {
    fn expr(&mut self, ty: &Ty, scope: &[(Name, Ty)], depth: u32) -> Expr {
        let vars: Vec<&Name> = scope.iter().filter(|(_, t)| t == ty).map(|(n, _)| n).collect();
        let roll = self.rng.gen_range(0..10);
        if !vars.is_empty() && (depth == 0 || roll < 4) {
            return Expr::Var((*vars.choose(&mut self.rng).unwrap()).clone());
        }
        if depth > 0 && roll < 7 && !scope.is_empty() {
            let (s, sty) = scope.choose(&mut self.rng).unwrap().clone();
            let Ty::Data(tycon, _) = &sty else { unreachable!() };
            let ctors = self.decls.data(tycon).unwrap().ctors.clone();
            let w = Name::fresh("w");
            let alts = ctors
                .iter()
                .map(|k| {
                    let ys: Vec<(Name, Ty, Mult)> =
                        k.fields.iter().map(|(t, m)| (Name::fresh("a"), t.clone(), m.clone())).collect();
                    let mut inner = scope.to_vec();
                    inner.push((w.clone(), sty.clone()));
                    inner.extend(ys.iter().map(|(n, t, _)| (n.clone(), t.clone())));
                    let pat = Pattern::Con(k.name.clone(), ys.iter().map(|(n, _, m)| (n.clone(), m.clone())).collect());
                    Alt { pat, rhs: self.expr(ty, &inner, depth - 1) }
                })
                .collect();
            return Expr::Case(Box::new(Expr::Var(s)), w, None, sty, alts);
        }
        if depth > 0 && roll < 8 {
            let x = Name::fresh("l");
            let t = Ty::data("Bool");
            let rhs = self.expr(&t, scope, depth - 1);
            let mut inner = scope.to_vec();
            inner.push((x.clone(), t.clone()));
            let body = self.expr(ty, &inner, depth - 1);
            return Expr::Let(Box::new(Bind { var: x, env: None, ty: t, rhs }), Box::new(body));
        }
        let Ty::Data(tycon, _) = ty else { unreachable!() };
        let ctors = self.decls.data(tycon).unwrap().ctors.clone();
        let k = ctors.choose(&mut self.rng).unwrap();
        let args: Vec<Expr> = k.fields.iter().map(|(t, _)| self.expr(t, scope, depth.saturating_sub(1))).collect();
        Expr::apps(Expr::Ctor(k.name.clone()), args)
    }
}

/// Every assignment of `items` to `n` groups.
pub fn partitions<T: Clone>(items: &[T], n: usize) -> Vec<Vec<Vec<T>>> {
    let mut out = vec![vec![Vec::new(); n]];
    for it in items {
        out = out
            .into_iter()
            .flat_map(|groups| {
                (0..n).map(move |g| {
                    let mut groups = groups.clone();
                    groups[g].push(it.clone());
                    groups
                })
            })
            .collect();
    }
    out
}

fn accepted(decls: &Decls, ctx: &TypingCtx, alt: &Alt, mode: &AltMode, z: &Name, sty: &Ty) -> Option<Ty> {
    match check_alt(decls, ctx, alt, mode, z, sty) {
        Ok((t, left)) if left.is_empty() => Some(t),
        _ => None,
    }
}

/// Alternatives accepted with the scrutinee's resources irrelevant are
/// accepted, at the same type, for every split of those resources over the
/// linear fields. Returns the tally over accepted alternatives and the
/// number of splits checked.
pub fn irrelevance(wanted: usize, seed: u64) -> (Tally, usize) {
    let decls = prelude_decls();
    let mut g = Bodies { rng: StdRng::seed_from_u64(seed), decls: &decls };
    let bool_ty = Ty::data("Bool");
    let mut t = Tally::default();
    let mut splits = 0;
    let mut tries = 0;
    while t.instances < wanted && tries < 200_000 {
        tries += 1;
        let (k, sty) = if g.rng.gen_bool(0.5) { ("MkP", Ty::data("P")) } else { ("MkM", Ty::data("M")) };
        let sig = decls.ctor_signature(k, &[]).unwrap();
        let us: Vec<Name> = (0..g.rng.gen_range(1..=3)).map(|_| Name::fresh("u")).collect();
        let extra = g.rng.gen_bool(0.3).then(|| Name::fresh("v"));
        let z = Name::fresh("z");
        let ys: Vec<Name> = sig.fields.iter().map(|_| Name::fresh("y")).collect();

        let mut ctx = TypingCtx::default();
        let mut scope: Vec<(Name, Ty)> = vec![(z.clone(), sty.clone())];
        scope.extend(ys.iter().zip(&sig.fields).map(|(y, (t, _))| (y.clone(), t.clone())));
        for u in &us {
            ctx.gamma.push((u.clone(), Entry::Lin(bool_ty.clone(), Mult::One)));
            scope.push((u.clone(), bool_ty.clone()));
        }
        if let Some(v) = &extra {
            ctx.delta.push(Resource::linear(v, bool_ty.clone()));
            scope.push((v.clone(), bool_ty.clone()));
        }
        let rty = if g.rng.gen_bool(0.7) { bool_ty.clone() } else { Ty::data("P") };
        let rhs = g.expr(&rty, &scope, 3);
        let pat = Pattern::Con(k.into(), ys.iter().zip(&sig.fields).map(|(y, (_, m))| (y.clone(), m.clone())).collect());
        let alt = Alt { pat, rhs };

        let resources: Vec<Resource> = us.iter().map(|u| Resource::linear(u, bool_ty.clone())).collect();
        let Some(ty) = accepted(&decls, &ctx, &alt, &AltMode::NotWhnf(resources.clone()), &z, &sty) else { continue };
        t.instances += 1;
        for groups in partitions(&resources, sig.linear.len()) {
            let whnf = accepted(&decls, &ctx, &alt, &AltMode::Whnf(groups.clone()), &z, &sty);
            if !whnf.as_ref().is_some_and(|w| alpha_eq_ty(w, &ty)) {
                let shown: Vec<Vec<String>> =
                    groups.iter().map(|g| g.iter().map(|r| r.key.to_string()).collect()).collect();
                t.fail(format!("{:?} accepted irrelevantly but not with groups {shown:?}", alt.rhs));
            }
            splits += 1;
        }
    }
    (t, splits)
}

/// `parse ∘ pretty` is the identity up to α on generated programs.
pub fn round_trip(n: u64) -> Tally {
    let decls = prelude_decls();
    let mut t = Tally::default();
    for seed in 0..n {
        let cfg = GenConfig { closed: seed % 3 != 0, ..GenConfig::default() };
        let p = generate(&decls, seed, &cfg);
        let text = pretty_program(&p);
        match parse_program(&text) {
            Ok(back) if back.alpha_eq(&p) => {}
            Ok(back) => t.fail(format!("seed {seed}: {text}\n---\n{}", pretty_program(&back))),
            Err(e) => t.fail(format!("seed {seed}: {e}\n{text}")),
        }
        t.instances += 1;
    }
    t
}

/// Well-typed generated programs, alternating open and closed.
pub fn generated(n: u64) -> Vec<Program> {
    let decls = prelude_decls();
    (0..n)
        .map(|seed| {
            let cfg = GenConfig { closed: seed % 2 == 0, ..GenConfig::default() };
            generate_well_typed(&decls, seed, &cfg).1.program
        })
        .collect()
}

/// Every sound pass at every site, separately and chained, must keep the
/// program well-typed at its type. Counts the rewrites performed.
pub fn preservation(programs: &[(String, Program)]) -> Tally {
    let pipeline: Vec<(Pass, SitePolicy)> =
        Pass::sound().flat_map(|p| [(p, SitePolicy::Each), (p, SitePolicy::Everywhere)]).collect();
    let mut t = Tally::default();
    for (name, p) in programs {
        match preservation_check(p, &pipeline) {
            Err(e) => t.fail(format!("{name} does not typecheck: {e}")),
            Ok(outs) => {
                for o in outs {
                    match o.verdict {
                        Verdict::Preserved => t.instances += 1,
                        Verdict::Rejected(e) => {
                            t.instances += 1;
                            t.fail(format!("{} at {:?} of {name}: {e}", o.pass, o.path));
                        }
                        Verdict::NotApplicable(_) | Verdict::GuardFailed(_) => {}
                    }
                }
            }
        }
    }
    t
}

#[derive(Debug, Default)]
pub struct RunTally {
    pub programs: usize,
    pub stuck: usize,
    pub mismatches: usize,
    pub asserted: usize,
    pub states_checked: u64,
    pub failures: Vec<String>,
}

/// Run `n` closed generated programs under both semantics, checking the
/// state at every step for the first `asserted` of them.
pub fn run_generated(n: u64, asserted: u64) -> RunTally {
    let decls = prelude_decls();
    let mut t = RunTally::default();
    for seed in 0..n {
        let (_, c) = generate_well_typed(&decls, seed, &GenConfig::default());
        let opts = EvalOptions { assert_states: seed < asserted, ..EvalOptions::default() };
        let d = match differential_run(&c.program, &opts) {
            Ok(d) => d,
            Err(e) => {
                t.failures.push(format!("seed {seed}: {e}"));
                continue;
            }
        };
        t.programs += 1;
        t.asserted += opts.assert_states as usize;
        t.stuck += (d.natural.outcome.is_stuck() || d.instrumented.outcome.is_stuck()) as usize;
        match d.verdict {
            DiffVerdict::Agree => {}
            DiffVerdict::StuckOnWellTyped(m) => t.failures.push(format!("seed {seed}: {m}")),
            DiffVerdict::DifferentialMismatch(m) => {
                t.mismatches += 1;
                t.failures.push(format!("seed {seed}: {m}"));
            }
        }
        t.states_checked += d.instrumented.states_checked;
        for (step, msg) in &d.instrumented.state_failures {
            t.failures.push(format!("seed {seed} step {step}: {msg}"));
        }
    }
    t
}
