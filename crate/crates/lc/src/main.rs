use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use linear_core::check::{check_program_traced, render_path, Checked};
use linear_core::corpus::run_corpus;
use linear_core::eval::{
    compare_runs, evaluate, prepare, DiffVerdict, EvalEnv, EvalOptions, EvalOutcome, EvalRun, PrepareError, Semantics,
    DEFAULT_FUEL,
};
use linear_core::ir::{strip_annotations, Path as IrPath};
use linear_core::parse::parse_program;
use linear_core::pretty::{pretty_program, pretty_ty};
use linear_core::transform::{apply_at, apply_everywhere, verify, Pass, TransformOutcome, Verdict};
use linear_core::Program;

const OK: u8 = 0;
const REJECTED: u8 = 1;
const PARSE: u8 = 2;
const INTERNAL: u8 = 3;
const FUEL: u8 = 4;

#[derive(Parser)]
#[command(name = "lc", version, about = "Check, run and rewrite linear core programs")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Sem {
    Natural,
    Instrumented,
    Both,
}

#[derive(Subcommand)]
enum Cmd {
    /// Typecheck a program and print its type.
    Check { file: PathBuf },
    /// Evaluate a closed program to weak head normal form.
    Eval {
        file: PathBuf,
        #[arg(long, value_enum, default_value = "natural")]
        semantics: Sem,
        #[arg(long, default_value_t = DEFAULT_FUEL)]
        fuel: u64,
        /// Typecheck every intermediate state (instrumented semantics).
        #[arg(long)]
        assert_states: bool,
        /// Run without typechecking first.
        #[arg(long)]
        unchecked: bool,
    },
    /// Apply rewrites to the main term.
    Transform {
        file: PathBuf,
        /// Comma-separated pass names, applied in order.
        #[arg(long, value_delimiter = ',', required = true)]
        pass: Vec<Pass>,
        /// Node to rewrite: dot-separated child indices, or `root`.
        #[arg(long, conflicts_with = "everywhere")]
        at: Option<String>,
        #[arg(long)]
        everywhere: bool,
        /// Report whether each rewrite still typechecks.
        #[arg(long)]
        verify: bool,
        /// Succeed only if some rewrite is rejected.
        #[arg(long, requires = "verify")]
        expect_reject: bool,
    },
    /// Classify every `.lc` file of a directory against its header.
    Corpus {
        dir: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
        /// `all`, or comma-separated pass names to run over accepted programs.
        #[arg(long)]
        passes: Option<String>,
    },
}

fn tracing() -> bool {
    std::env::var("LC_TRACE").is_ok_and(|v| v == "1")
}

fn load(file: &Path) -> Result<Program, u8> {
    let src = fs::read_to_string(file).map_err(|e| {
        eprintln!("{}: {e}", file.display());
        INTERNAL
    })?;
    parse_program(&src).map_err(|e| {
        eprintln!("{}:{e}", file.display());
        PARSE
    })
}

fn checked(file: &Path, p: &Program) -> Result<Checked, u8> {
    let (r, trace) = check_program_traced(p);
    if tracing() {
        for t in trace {
            eprintln!("{t}");
        }
    }
    r.map_err(|e| {
        println!("{e}");
        match p.span(&e.path) {
            Some(s) => eprintln!("{}:{}:{}: at {}", file.display(), s.line, s.col, render_path(&e.path)),
            None => eprintln!("{}: at {}", file.display(), render_path(&e.path)),
        }
        REJECTED
    })
}

fn cmd_check(file: &Path) -> Result<u8, u8> {
    let p = load(file)?;
    let c = checked(file, &p)?;
    println!("{}", pretty_ty(&c.ty));
    Ok(OK)
}

fn show_value(r: &EvalRun) -> String {
    match (&r.outcome, &r.observation) {
        (EvalOutcome::Value(..), Some(o)) => o.to_string(),
        (o, _) => o.to_string(),
    }
}

fn outcome_code(r: &EvalRun) -> u8 {
    match r.outcome {
        EvalOutcome::Value(..) if r.state_failures.is_empty() => OK,
        EvalOutcome::Value(..) | EvalOutcome::Stuck { .. } => REJECTED,
        EvalOutcome::FuelExhausted(_) => FUEL,
    }
}

fn cmd_eval(file: &Path, sem: Sem, fuel: u64, assert_states: bool, unchecked: bool) -> Result<u8, u8> {
    let p = load(file)?;
    if !unchecked {
        checked(file, &p)?;
    }
    let main = match prepare(&p, unchecked) {
        Ok((main, _)) => main,
        Err(e @ PrepareError::Open(_)) => {
            eprintln!("{e}");
            return Err(REJECTED);
        }
        Err(e) => {
            println!("{e}");
            return Err(REJECTED);
        }
    };
    let opts = EvalOptions { fuel, assert_states, trace: tracing(), ..EvalOptions::default() };
    let run = |s: Semantics| {
        let r = evaluate(&p.decls, EvalEnv::new(), &main, s, &opts).map_err(|e| {
            eprintln!("internal error: {e}");
            INTERNAL
        })?;
        for l in &r.trace {
            eprintln!("{l}");
        }
        for (step, msg) in &r.state_failures {
            println!("ill-typed state at step {step}: {msg}");
        }
        Ok::<EvalRun, u8>(r)
    };
    match sem {
        Sem::Natural | Sem::Instrumented => {
            let r = run(if sem == Sem::Natural { Semantics::Natural } else { Semantics::Instrumented })?;
            println!("{}", show_value(&r));
            Ok(outcome_code(&r))
        }
        Sem::Both => {
            let n = run(Semantics::Natural)?;
            let i = run(Semantics::Instrumented)?;
            println!("{}", show_value(&n));
            match compare_runs(&n, &i) {
                DiffVerdict::Agree => {
                    println!("agree");
                    Ok(outcome_code(&n).max(outcome_code(&i)))
                }
                DiffVerdict::DifferentialMismatch(m) => {
                    println!("DifferentialMismatch: {m}");
                    Ok(REJECTED)
                }
                DiffVerdict::StuckOnWellTyped(m) => {
                    println!("{m}");
                    Ok(REJECTED)
                }
            }
        }
    }
}

fn parse_site(s: &str) -> Result<IrPath, String> {
    if s == "root" {
        return Ok(Vec::new());
    }
    s.split('.').map(|i| i.parse::<u32>().map_err(|_| format!("bad path `{s}`"))).collect()
}

fn report(o: &TransformOutcome, show_verdict: bool) {
    match &o.verdict {
        Verdict::NotApplicable(m) => println!("{} at {}: NotApplicable: {m}", o.pass, render_path(&o.path)),
        Verdict::GuardFailed(m) => println!("{} at {}: GuardFailed: {m}", o.pass, render_path(&o.path)),
        v if show_verdict || tracing() => println!("{} at {}: {v}", o.pass, render_path(&o.path)),
        _ => {}
    }
}

fn cmd_transform(
    file: &Path,
    passes: &[Pass],
    at: Option<&str>,
    show_verdict: bool,
    expect_reject: bool,
) -> Result<u8, u8> {
    let p = load(file)?;
    let mut cur = checked(file, &p)?;
    let site = at.map(parse_site).transpose().map_err(|e| {
        eprintln!("{e}");
        PARSE
    })?;
    let mut broken = None;
    for &pass in passes {
        let outs = match &site {
            Some(path) => {
                let o = apply_at(&cur, pass, path);
                if o.verdict == Verdict::Preserved {
                    cur = verify(&cur.program, &cur.ty, &o.after).1.expect("verified");
                }
                vec![o]
            }
            None => {
                let (next, outs) = apply_everywhere(&cur, pass);
                cur = next;
                outs
            }
        };
        if outs.is_empty() {
            println!("{pass}: NotApplicable: no site");
        }
        for o in &outs {
            report(o, show_verdict);
            if matches!(o.verdict, Verdict::Rejected(_)) {
                broken = Some(o.after.clone());
            }
        }
    }
    let rejected = broken.is_some();
    let main = broken.unwrap_or_else(|| cur.program.main.clone());
    print!("{}", pretty_program(&cur.program.with_main(strip_annotations(&main))));
    Ok(match (show_verdict, rejected, expect_reject) {
        (true, true, false) => REJECTED,
        (true, false, true) => {
            eprintln!("expected a rejection");
            REJECTED
        }
        _ => OK,
    })
}

fn cmd_corpus(dir: &Path, out: Option<&Path>, passes: Option<&str>) -> Result<u8, u8> {
    let passes: Vec<Pass> = match passes {
        None => Vec::new(),
        Some("all") => Pass::sound().collect(),
        Some(list) => list.split(',').map(str::parse).collect::<Result<_, _>>().map_err(|e: String| {
            eprintln!("{e}");
            PARSE
        })?,
    };
    let rep = run_corpus(dir, &passes).map_err(|e| {
        eprintln!("{}: {e}", dir.display());
        INTERNAL
    })?;
    for e in &rep.entries {
        let rewrites: usize = e.pass_results.values().map(|t| t.applied).sum();
        println!(
            "{:<16} expect {:<7} actual {:<7} {:<32} {:>4} rewrites {:>8.2}ms{}",
            e.name,
            e.expect.as_deref().unwrap_or("-"),
            e.actual,
            e.error_kind.as_deref().unwrap_or("-"),
            rewrites,
            e.ms,
            if e.mismatch() { "  MISMATCH" } else { "" }
        );
    }
    let t = &rep.totals;
    println!(
        "{} programs: {} accepted, {} rejected, {} mismatches; {} of {} rewrites preserved",
        t.programs, t.accepted, t.rejected, t.mismatches, t.preserved, t.rewrites
    );
    if let Some(out) = out {
        let json = serde_json::to_string_pretty(&rep).expect("report serializes");
        fs::write(out, json + "\n").map_err(|e| {
            eprintln!("{}: {e}", out.display());
            INTERNAL
        })?;
    }
    Ok(if t.mismatches == 0 { OK } else { REJECTED })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let r = match &cli.cmd {
        Cmd::Check { file } => cmd_check(file),
        Cmd::Eval { file, semantics, fuel, assert_states, unchecked } => {
            cmd_eval(file, *semantics, *fuel, *assert_states, *unchecked)
        }
        Cmd::Transform { file, pass, at, everywhere: _, verify, expect_reject } => {
            cmd_transform(file, pass, at.as_deref(), *verify, *expect_reject)
        }
        Cmd::Corpus { dir, report, passes } => cmd_corpus(dir, report.as_deref(), passes.as_deref()),
    };
    ExitCode::from(r.unwrap_or_else(|c| c))
}
