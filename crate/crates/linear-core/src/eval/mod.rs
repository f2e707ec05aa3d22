//! Call-by-need evaluation. The natural semantics shares every binding;
//! the instrumented semantics binds linear arguments as linear bindings
//! and erases them once forced, so a second use gets stuck.

mod sharing;
mod state;

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use thiserror::Error;

pub use sharing::{share_program, translate_sharing};
pub use state::{check_state, check_state_welltyped, expand_env, plug, MachineState};

use crate::ir::{free_vars, refresh_binders, subst_expr, subst_mult_expr, Alt, Decls, Expr, Mult, Name, Pattern, Program, Ty, UsageEnv};
use crate::pretty::pretty_expr;

pub const DEFAULT_FUEL: u64 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Semantics {
    Natural,
    Instrumented,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Ann {
    Omega,
    LinearOne,
    Delta(UsageEnv),
}

#[derive(Clone, Debug)]
pub struct Binding {
    pub ann: Ann,
    pub ty: Ty,
    pub rhs: Expr,
    /// Letrec group the binding was introduced with.
    pub group: Option<u32>,
}

/// The runtime environment Θ, ordered by name creation.
#[derive(Clone, Debug, Default)]
pub struct EvalEnv {
    bindings: BTreeMap<Name, Binding>,
}

impl EvalEnv {
    pub fn new() -> EvalEnv {
        EvalEnv::default()
    }

    pub fn insert(&mut self, x: Name, b: Binding) {
        self.bindings.insert(x, b);
    }

    pub fn get(&self, x: &Name) -> Option<&Binding> {
        self.bindings.get(x)
    }

    pub fn remove(&mut self, x: &Name) -> Option<Binding> {
        self.bindings.remove(x)
    }

    pub fn contains(&self, x: &Name) -> bool {
        self.bindings.contains_key(x)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Name, &Binding)> {
        self.bindings.iter()
    }

    pub fn len(&self) -> usize {
        self.bindings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }
}

/// A pending continuation: what to do with the value of the focus.
#[derive(Clone, Debug)]
pub enum Frame {
    Apply(Name),
    MultApply(Mult),
    Case { z: Name, env: Option<UsageEnv>, ty: Ty, alts: Vec<Alt> },
    /// Memoise the value into the binding; `since` marks the erasure log
    /// so a Δ binding can drop the resources its evaluation consumed.
    Update { var: Name, since: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StuckReason {
    DoubleForce,
    NotAFunction,
    NotAMultAbs,
    NotAConstructor,
}

impl fmt::Display for StuckReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Clone, Debug)]
pub enum EvalOutcome {
    Value(Expr, EvalEnv),
    Stuck { reason: StuckReason, name: Option<Name>, step: u64 },
    FuelExhausted(u64),
}

impl EvalOutcome {
    pub fn is_stuck(&self) -> bool {
        matches!(self, EvalOutcome::Stuck { .. })
    }
}

impl fmt::Display for EvalOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalOutcome::Value(v, _) => write!(f, "{}", pretty_expr(v)),
            EvalOutcome::Stuck { reason, name: Some(x), step } => write!(f, "Stuck({reason}) on {x} at step {step}"),
            EvalOutcome::Stuck { reason, name: None, step } => write!(f, "Stuck({reason}) at step {step}"),
            EvalOutcome::FuelExhausted(n) => write!(f, "FuelExhausted after {n} steps"),
        }
    }
}

/// Failures that mean the input broke the evaluator's preconditions.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("unbound variable {0}")]
    UnboundVariable(Name),
    #[error("no alternative matches {0}")]
    UnmatchedPattern(String),
    #[error("argument is not a variable: {0}")]
    NotTranslated(String),
}

/// Structure of a value, forced to a bounded depth.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Observation {
    Con(String, Vec<Observation>),
    Fun,
    /// Depth or fuel ran out before this field was forced.
    Cut,
    Stuck(StuckReason),
}

impl fmt::Display for Observation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Observation::Con(k, fs) if fs.is_empty() => write!(f, "{k}"),
            Observation::Con(k, fs) => {
                write!(f, "({k}")?;
                for o in fs {
                    write!(f, " {o}")?;
                }
                write!(f, ")")
            }
            Observation::Fun => write!(f, "<fun>"),
            Observation::Cut => write!(f, "…"),
            Observation::Stuck(r) => write!(f, "<stuck {r}>"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct EvalOptions {
    pub fuel: u64,
    /// Typecheck the expanded state at every step.
    pub assert_states: bool,
    pub trace: bool,
    /// How deep to force the final value; 0 skips observation.
    pub observe_depth: usize,
}

impl Default for EvalOptions {
    fn default() -> EvalOptions {
        EvalOptions { fuel: DEFAULT_FUEL, assert_states: false, trace: false, observe_depth: 32 }
    }
}

#[derive(Clone, Debug)]
pub struct EvalRun {
    pub outcome: EvalOutcome,
    pub steps: u64,
    /// How many times the rhs of a let or letrec binding was evaluated,
    /// keyed by the binder's source spelling.
    pub rhs_evals: BTreeMap<String, usize>,
    pub observation: Option<Observation>,
    pub trace: Vec<String>,
    pub states_checked: u64,
    /// Steps whose state failed to typecheck, with the reason.
    pub state_failures: Vec<(u64, String)>,
}

enum Mode {
    Eval(Expr),
    Return(Expr),
}

enum Halt {
    Value(Expr),
    Stuck(StuckReason, Option<Name>),
    Fuel,
}

struct Machine<'a> {
    decls: &'a Decls,
    sem: Semantics,
    fuel: u64,
    trace: Option<Vec<String>>,
    assert_states: bool,
    state_ty: Option<Ty>,
    theta: EvalEnv,
    erased: HashSet<Name>,
    erased_log: Vec<Name>,
    stack: Vec<Frame>,
    steps: u64,
    groups: u32,
    rhs_evals: BTreeMap<String, usize>,
    states_checked: u64,
    state_failures: Vec<(u64, String)>,
}

fn is_ctor_value(v: &Expr) -> bool {
    v.is_whnf() && matches!(v.spine().0, Expr::Ctor(_))
}

impl Machine<'_> {
    fn bind(&mut self, x: &Name, b: Binding) -> Name {
        self.theta.insert(x.clone(), b);
        x.clone()
    }

    fn note(&mut self, rule: &str, focus: &Expr) {
        if let Some(t) = self.trace.as_mut() {
            t.push(format!("{:>6} {rule:<8} |Θ|={:<3} {}", self.steps, self.theta.len(), pretty_expr(focus)));
        }
    }

    fn assert_state(&mut self, focus: &Expr) {
        let st = MachineState { theta: &self.theta, focus, sigma: &self.stack };
        self.states_checked += 1;
        match check_state(self.decls, &st) {
            Ok(t) => match &self.state_ty {
                None => self.state_ty = Some(t),
                Some(t0) if crate::ir::alpha_eq_ty(t0, &t) => {}
                Some(t0) => self.state_failures.push((self.steps, format!("state has type {t}, expected {t0}"))),
            },
            Err(e) => self.state_failures.push((self.steps, e.to_string())),
        }
    }

    /// Run until the stack is back to `base` with a value.
    fn run(&mut self, start: Expr, base: usize, checks: bool) -> Result<Halt, EvalError> {
        let mut mode = Mode::Eval(start);
        loop {
            if self.steps >= self.fuel {
                return Ok(Halt::Fuel);
            }
            if checks && self.assert_states {
                let focus = match &mode {
                    Mode::Eval(e) | Mode::Return(e) => e,
                };
                self.assert_state(&focus.clone());
            }
            self.steps += 1;
            mode = match mode {
                Mode::Eval(e) => match self.eval(e)? {
                    Ok(m) => m,
                    Err((r, x)) => return Ok(Halt::Stuck(r, x)),
                },
                Mode::Return(v) => {
                    if self.stack.len() == base {
                        return Ok(Halt::Value(v));
                    }
                    let frame = self.stack.pop().expect("stack above base");
                    match self.ret(v, frame)? {
                        Ok(m) => m,
                        Err((r, x)) => return Ok(Halt::Stuck(r, x)),
                    }
                }
            };
        }
    }

    #[allow(clippy::type_complexity)]
    fn eval(&mut self, e: Expr) -> Result<Result<Mode, (StuckReason, Option<Name>)>, EvalError> {
        let m = match e {
            Expr::Var(x) => return self.lookup(x),
            Expr::Ctor(_) | Expr::Abs(..) | Expr::MultAbs(..) => {
                self.note("Value", &e);
                Mode::Return(e)
            }
            Expr::App(..) | Expr::MultApp(..) if e.is_whnf() => {
                self.note("Value", &e);
                Mode::Return(e)
            }
            Expr::App(f, a) => {
                self.note("App", &Expr::App(f.clone(), a.clone()));
                let Expr::Var(x) = *a else {
                    return Err(EvalError::NotTranslated(pretty_expr(&a)));
                };
                self.stack.push(Frame::Apply(x));
                Mode::Eval(*f)
            }
            Expr::MultApp(f, m) => {
                self.note("MultApp", &f);
                self.stack.push(Frame::MultApply(m));
                Mode::Eval(*f)
            }
            Expr::Let(b, body) => {
                self.note("Let", &Expr::Let(b.clone(), body.clone()));
                let b = *b;
                let (var, body) = if self.theta.contains(&b.var) {
                    let v2 = b.var.refresh();
                    let body = subst_expr(&body, &b.var, &Expr::Var(v2.clone()));
                    (v2, body)
                } else {
                    (b.var.clone(), *body)
                };
                let ann = match self.sem {
                    Semantics::Natural => Ann::Omega,
                    Semantics::Instrumented => Ann::Delta(b.env.clone().unwrap_or_default()),
                };
                self.bind(&var, Binding { ann, ty: b.ty, rhs: b.rhs, group: None });
                Mode::Eval(body)
            }
            Expr::LetRec(bs, body) => {
                self.note("LetRec", &Expr::LetRec(bs.clone(), body.clone()));
                let mut bs = bs;
                let mut body = *body;
                for i in 0..bs.len() {
                    if self.theta.contains(&bs[i].var) {
                        let old = bs[i].var.clone();
                        let new = Expr::Var(old.refresh());
                        for b in bs.iter_mut() {
                            b.rhs = subst_expr(&b.rhs, &old, &new);
                        }
                        body = subst_expr(&body, &old, &new);
                        let Expr::Var(n) = new else { unreachable!() };
                        bs[i].var = n;
                    }
                }
                let group = self.groups;
                self.groups += 1;
                for b in bs {
                    let ann = match self.sem {
                        Semantics::Natural => Ann::Omega,
                        Semantics::Instrumented => Ann::Delta(b.env.unwrap_or_default()),
                    };
                    self.bind(&b.var, Binding { ann, ty: b.ty, rhs: b.rhs, group: Some(group) });
                }
                Mode::Eval(body)
            }
            Expr::Case(s, z, env, ty, alts) => {
                self.note("Case", &s);
                self.stack.push(Frame::Case { z, env, ty, alts });
                Mode::Eval(*s)
            }
        };
        Ok(Ok(m))
    }

    #[allow(clippy::type_complexity)]
    fn lookup(&mut self, x: Name) -> Result<Result<Mode, (StuckReason, Option<Name>)>, EvalError> {
        if self.erased.contains(&x) {
            self.note("Stuck", &Expr::Var(x.clone()));
            return Ok(Err((StuckReason::DoubleForce, Some(x))));
        }
        let Some(b) = self.theta.get(&x) else {
            return Err(EvalError::UnboundVariable(x));
        };
        if b.ann == Ann::LinearOne {
            self.note("Var_1", &Expr::Var(x.clone()));
            let b = self.theta.remove(&x).expect("binding present");
            self.erased.insert(x.clone());
            self.erased_log.push(x);
            return Ok(Ok(Mode::Eval(b.rhs)));
        }
        let rule = if b.ann == Ann::Omega { "Var_ω" } else { "Var_Δ" };
        let rhs = b.rhs.clone();
        self.note(rule, &Expr::Var(x.clone()));
        if rhs.is_whnf() {
            return Ok(Ok(Mode::Return(rhs)));
        }
        *self.rhs_evals.entry(x.text().to_string()).or_default() += 1;
        self.stack.push(Frame::Update { var: x, since: self.erased_log.len() });
        Ok(Ok(Mode::Eval(rhs)))
    }

    #[allow(clippy::type_complexity)]
    fn ret(&mut self, v: Expr, frame: Frame) -> Result<Result<Mode, (StuckReason, Option<Name>)>, EvalError> {
        let m = match frame {
            Frame::Update { var, since } => {
                self.note("Update", &v);
                let gone: HashSet<&Name> = self.erased_log[since..].iter().collect();
                if let Some(b) = self.theta.bindings.get_mut(&var) {
                    if let Ann::Delta(env) = &mut b.ann {
                        env.retain(|k| !gone.contains(&k.name));
                    }
                    b.rhs = v.clone();
                }
                Mode::Return(v)
            }
            Frame::Apply(x) => match v {
                Expr::Abs(..) => {
                    let Expr::Abs(y, m, ty, body) = refresh_binders(&v) else { unreachable!() };
                    if self.sem == Semantics::Instrumented && m.is_linear() {
                        self.note("β_1", &body);
                        self.bind(&y, Binding { ann: Ann::LinearOne, ty, rhs: Expr::Var(x), group: None });
                        Mode::Eval(*body)
                    } else {
                        self.note("β_ω", &body);
                        Mode::Eval(subst_expr(&body, &y, &Expr::Var(x)))
                    }
                }
                v if is_ctor_value(&v) => Mode::Return(Expr::app(v, Expr::Var(x))),
                _ => return Ok(Err((StuckReason::NotAFunction, None))),
            },
            Frame::MultApply(pi) => match v {
                Expr::MultAbs(..) => {
                    let Expr::MultAbs(p, body) = refresh_binders(&v) else { unreachable!() };
                    self.note("β_mult", &body);
                    Mode::Eval(subst_mult_expr(&body, &p, &pi))
                }
                v if is_ctor_value(&v) => Mode::Return(Expr::MultApp(Box::new(v), pi)),
                _ => return Ok(Err((StuckReason::NotAMultAbs, None))),
            },
            Frame::Case { z, env, ty, alts } => {
                if !is_ctor_value(&v) {
                    return Ok(Err((StuckReason::NotAConstructor, None)));
                }
                let (head, args, _) = v.spine();
                let Expr::Ctor(k) = head else { unreachable!() };
                let mut names = Vec::new();
                for a in &args {
                    match a {
                        Expr::Var(x) => names.push(x.clone()),
                        other => return Err(EvalError::NotTranslated(pretty_expr(other))),
                    }
                }
                let alt = alts
                    .iter()
                    .find(|a| matches!(&a.pat, Pattern::Con(k2, _) if k2 == k))
                    .or_else(|| alts.iter().find(|a| a.pat == Pattern::Wild))
                    .ok_or_else(|| EvalError::UnmatchedPattern(pretty_expr(&v)))?;
                self.note("Case_K", &v);
                let mut rhs = alt.rhs.clone();
                if free_vars(&rhs).contains(&z) {
                    // The binder is shared through the environment so that
                    // arguments stay variables.
                    let z2 = z.refresh();
                    let ann = match self.sem {
                        Semantics::Natural => Ann::Omega,
                        Semantics::Instrumented => {
                            let mut env = env.unwrap_or_default();
                            env.retain(|k| !self.erased.contains(&k.name));
                            Ann::Delta(env)
                        }
                    };
                    self.bind(&z2, Binding { ann, ty, rhs: v.clone(), group: None });
                    rhs = subst_expr(&rhs, &z, &Expr::Var(z2));
                }
                if let Pattern::Con(_, ys) = &alt.pat {
                    if ys.len() != names.len() {
                        return Err(EvalError::UnmatchedPattern(pretty_expr(&v)));
                    }
                    for ((y, _), x) in ys.iter().zip(&names) {
                        rhs = subst_expr(&rhs, y, &Expr::Var(x.clone()));
                    }
                }
                Mode::Eval(rhs)
            }
        };
        Ok(Ok(m))
    }

    fn observe(&mut self, v: &Expr, depth: usize) -> Result<Observation, EvalError> {
        if !is_ctor_value(v) {
            return Ok(Observation::Fun);
        }
        let (head, args, _) = v.spine();
        let Expr::Ctor(k) = head else { unreachable!() };
        let mut fields = Vec::new();
        for a in args {
            if depth == 0 {
                fields.push(Observation::Cut);
                continue;
            }
            let o = match self.run(a.clone(), 0, false)? {
                Halt::Value(w) => self.observe(&w, depth - 1)?,
                Halt::Stuck(r, _) => {
                    self.stack.clear();
                    Observation::Stuck(r)
                }
                Halt::Fuel => {
                    self.stack.clear();
                    Observation::Cut
                }
            };
            fields.push(o);
        }
        Ok(Observation::Con(k.clone(), fields))
    }
}

/// Evaluate `e` in `theta`. `e` must be sharing-translated.
pub fn evaluate(decls: &Decls, theta: EvalEnv, e: &Expr, sem: Semantics, opts: &EvalOptions) -> Result<EvalRun, EvalError> {
    let mut m = Machine {
        decls,
        sem,
        fuel: opts.fuel,
        trace: opts.trace.then(Vec::new),
        assert_states: opts.assert_states,
        state_ty: None,
        theta,
        erased: HashSet::new(),
        erased_log: Vec::new(),
        stack: Vec::new(),
        steps: 0,
        groups: 0,
        rhs_evals: BTreeMap::new(),
        states_checked: 0,
        state_failures: Vec::new(),
    };
    let halt = m.run(e.clone(), 0, true)?;
    let steps = m.steps;
    let (outcome, observation) = match halt {
        Halt::Value(v) => {
            if m.assert_states {
                m.assert_state(&v);
            }
            let obs = if opts.observe_depth > 0 {
                m.fuel = steps.saturating_add(opts.fuel);
                Some(m.observe(&v, opts.observe_depth)?)
            } else {
                None
            };
            (EvalOutcome::Value(v, m.theta.clone()), obs)
        }
        Halt::Stuck(reason, name) => (EvalOutcome::Stuck { reason, name, step: steps }, None),
        Halt::Fuel => (EvalOutcome::FuelExhausted(steps), None),
    };
    Ok(EvalRun {
        outcome,
        steps,
        rhs_evals: m.rhs_evals,
        observation,
        trace: m.trace.unwrap_or_default(),
        states_checked: m.states_checked,
        state_failures: m.state_failures,
    })
}

pub fn eval_natural(decls: &Decls, theta: EvalEnv, e: &Expr, opts: &EvalOptions) -> Result<EvalRun, EvalError> {
    evaluate(decls, theta, e, Semantics::Natural, opts)
}

pub fn eval_instrumented(decls: &Decls, theta: EvalEnv, e: &Expr, opts: &EvalOptions) -> Result<EvalRun, EvalError> {
    evaluate(decls, theta, e, Semantics::Instrumented, opts)
}

/// Why a program could not be prepared for evaluation.
#[derive(Clone, Debug, Error)]
pub enum PrepareError {
    #[error("{0}")]
    Type(#[from] crate::check::TypeError),
    #[error("evaluation needs a closed program, but {0} is assumed")]
    Open(Name),
}

/// Make `p` ready to run: closed, sharing-translated and, unless
/// `unchecked`, typechecked. Returns the main term and, when checked, its
/// type.
pub fn prepare(p: &Program, unchecked: bool) -> Result<(Expr, Option<Ty>), PrepareError> {
    if let Some(a) = p.assumes.first() {
        return Err(PrepareError::Open(a.name.clone()));
    }
    if unchecked {
        let types = crate::check::check_program(p).map(|c| c.types).unwrap_or_default();
        return Ok((translate_sharing(&p.main, &types), None));
    }
    let (shared, ty) = share_program(p)?;
    Ok((shared.main, Some(ty)))
}

/// Result of running both semantics on one program.
#[derive(Clone, Debug)]
pub struct DiffReport {
    pub natural: EvalRun,
    pub instrumented: EvalRun,
    pub verdict: DiffVerdict,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DiffVerdict {
    Agree,
    DifferentialMismatch(String),
    StuckOnWellTyped(String),
}

/// Run a checked program under both semantics and compare the values.
pub fn differential_run(p: &Program, opts: &EvalOptions) -> Result<DiffReport, DiffError> {
    let (main, _) = prepare(p, false)?;
    let natural = eval_natural(&p.decls, EvalEnv::new(), &main, opts)?;
    let instrumented = eval_instrumented(&p.decls, EvalEnv::new(), &main, opts)?;
    let verdict = compare_runs(&natural, &instrumented);
    Ok(DiffReport { natural, instrumented, verdict })
}

/// Compare a natural run with an instrumented run of the same term.
pub fn compare_runs(n: &EvalRun, i: &EvalRun) -> DiffVerdict {
    if i.outcome.is_stuck() {
        return DiffVerdict::StuckOnWellTyped(i.outcome.to_string());
    }
    match (&n.outcome, &i.outcome) {
        (EvalOutcome::FuelExhausted(_), EvalOutcome::FuelExhausted(_)) => DiffVerdict::Agree,
        (EvalOutcome::Value(..), EvalOutcome::Value(..)) if n.observation == i.observation => DiffVerdict::Agree,
        (EvalOutcome::Value(..), EvalOutcome::Value(..)) => DiffVerdict::DifferentialMismatch(format!(
            "natural {} vs instrumented {}",
            show(&n.observation),
            show(&i.observation)
        )),
        (a, b) => DiffVerdict::DifferentialMismatch(format!("natural {a} vs instrumented {b}")),
    }
}

fn show(o: &Option<Observation>) -> String {
    o.as_ref().map_or_else(|| "-".into(), |o| o.to_string())
}

#[derive(Clone, Debug, Error)]
pub enum DiffError {
    #[error(transparent)]
    Prepare(#[from] PrepareError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}
