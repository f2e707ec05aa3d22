use std::fs;
use std::path::PathBuf;

use linear_core::check::{check_program, check_program_traced, Linearity, TypeErrorKind};
use linear_core::parse::{expected_verdict, parse_program};
use linear_core::pretty::pretty_ty;

fn corpus_file(name: &str) -> String {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus").join(format!("{name}.lc"));
    fs::read_to_string(p).unwrap()
}

fn check_src(src: &str) -> Result<String, (TypeErrorKind, String)> {
    let p = parse_program(src).unwrap_or_else(|e| panic!("{e}"));
    check_program(&p).map(|c| pretty_ty(&c.ty)).map_err(|e| (e.kind, e.to_string()))
}

#[test]
fn corpus_verdicts_match_headers() {
    for name in ["f", "f1", "f2", "f3", "f4", "f5", "f6", "f7", "f8", "f9", "f10", "f11", "f12"] {
        let src = corpus_file(name);
        let expect = expected_verdict(&src).unwrap();
        let got = check_src(&src);
        assert_eq!(got.is_ok(), expect, "{name}: {got:?}");
        if let Err((kind, _)) = got {
            assert!(kind.is_linearity(), "{name}: {kind:?}");
        }
    }
}

#[test]
fn f7_has_type_c() {
    assert_eq!(check_src(&corpus_file("f7")).unwrap(), "c");
}

#[test]
fn f8_reports_double_use_of_x() {
    let (kind, msg) = check_src(&corpus_file("f8")).unwrap_err();
    assert_eq!(kind, TypeErrorKind::LinearityViolation(Linearity::DoubleUse));
    assert_eq!(msg, "LinearityViolation: DoubleUse x");
}

#[test]
fn f2_discards_x() {
    let (kind, _) = check_src(&corpus_file("f2")).unwrap_err();
    assert_eq!(kind, TypeErrorKind::LinearityViolation(Linearity::Discarded));
}

#[test]
fn linear_identity() {
    assert_eq!(check_src(r"\(x :1 a). x").unwrap(), "a ->@1 a");
}

#[test]
fn dropping_a_linear_argument_is_rejected() {
    let (kind, _) = check_src(r"\(x :1 a). \(y :1 a). x").unwrap_err();
    assert_eq!(kind, TypeErrorKind::LinearityViolation(Linearity::Discarded));
}

#[test]
fn unrestricted_function_needs_unrestricted_argument() {
    let (kind, _) = check_src("assume f :w a ->@w a; assume x :1 a; f x").unwrap_err();
    assert_eq!(kind, TypeErrorKind::MultiplicityMismatch);
}

#[test]
fn multiplicity_polymorphism() {
    let src = r"assume x :1 a; (/\p. \(y :p a). y) @1 x";
    assert_eq!(check_src(src).unwrap(), "a");
    let (kind, _) = check_src(r"\(y :q a). y").unwrap_err();
    assert_eq!(kind, TypeErrorKind::IllFormedMult);
    let (kind, _) = check_src(r"/\p. \(y :p a). \(g :w a ->@w a). g y").unwrap_err();
    assert_eq!(kind, TypeErrorKind::MultiplicityMismatch);
}

#[test]
fn unbound_variable() {
    let (kind, msg) = check_src("nope").unwrap_err();
    assert_eq!(kind, TypeErrorKind::UnboundVariable);
    assert_eq!(msg, "UnboundVariable: nope");
}

#[test]
fn non_exhaustive_case() {
    let (kind, _) = check_src("data B = T | F; assume b :w B; case b of z : B { T => F }").unwrap_err();
    assert_eq!(kind, TypeErrorKind::NonExhaustiveCase);
}

#[test]
fn wrong_annotation_is_rejected() {
    let ok = "assume u :w a ->@1 a; assume x :1 a; let y :Δ{x:1} : a = u x in y";
    assert_eq!(check_src(ok).unwrap(), "a");
    let bad = "assume u :w a ->@1 a; assume x :1 a; let y :Δ{} : a = u x in y";
    assert_eq!(check_src(bad).unwrap_err().0, TypeErrorKind::UsageEnvMismatch);
}

#[test]
fn annotations_are_filled_in() {
    let p = parse_program("assume u :w a ->@1 a; assume x :1 a; let y : a = u x in y").unwrap();
    let c = check_program(&p).unwrap();
    let linear_core::Expr::Let(b, _) = &c.program.main else { panic!() };
    let env = b.env.as_ref().unwrap();
    assert_eq!(env.len(), 1);
    assert_eq!(env.keys().next().unwrap().name, p.assumes[1].name);
}

#[test]
fn pattern_variables_must_be_used_together() {
    // Not in WHNF: a and b stand for tagged fragments of x, so using a
    // alone leaves the other fragment behind.
    let base = "data P = MkP a@1 b@1; assume x :1 c; assume f :w c ->@1 P; \
                assume k :w a ->@1 b ->@1 d; assume g :w a ->@1 d;";
    assert_eq!(check_src(&format!("{base} case f x of z : P {{ MkP a@1 b@1 => k a b }}")).unwrap(), "d");
    let (kind, _) = check_src(&format!("{base} case f x of z : P {{ MkP a@1 b@1 => g a }}")).unwrap_err();
    assert_eq!(kind, TypeErrorKind::TagMismatch);
    // Mixing a fragment with the whole binder.
    let mix = "data P = MkP a@1 b@1; assume x :1 c; assume f :w c ->@1 P; \
               assume k :w a ->@1 P ->@1 d; case f x of z : P { MkP a@1 b@1 => k a z }";
    assert!(check_src(mix).is_err());
    // Scrutinee resources are irrelevant in the alternative.
    let direct = "data P = MkP a@1 b@1; assume x :1 c; assume f :w c ->@1 P; \
                  case f x of z : P { MkP a@1 b@1 => x }";
    assert_eq!(check_src(direct).unwrap_err().0, TypeErrorKind::LinearityViolation(Linearity::DoubleUse));
}

#[test]
fn case_of_case_with_nested_fragments() {
    let src = "data P = MkP a@1 b@1; assume x :1 c; assume f :w c ->@1 P; assume k :w a ->@1 b ->@1 P; \
               case (case f x of z : P { MkP a@1 b@1 => k a b }) of w : P { MkP p@1 q@1 => k p q }";
    assert_eq!(check_src(src).unwrap(), "P");
}

#[test]
fn trace_records_rules() {
    let p = parse_program(&corpus_file("f7")).unwrap();
    let (r, trace) = check_program_traced(&p);
    assert!(r.is_ok());
    assert!(trace.iter().any(|t| t.rule == "Case_WHNF"));
    assert!(trace.iter().any(|t| t.rule == "AltN_WHNF"));
    assert!(trace.iter().any(|t| t.rule == "Var_1"));
}

#[test]
fn lambda_binders_are_not_captured_resources() {
    let src = "data A = MkA; let id : A ->@1 A = \\(a :1 A). a in id";
    assert_eq!(check_src(src).unwrap(), "A ->@1 A");
    let src = "data A = MkA; assume f :w (A ->@1 A) ->@w A; f (\\(a :1 A). a)";
    assert_eq!(check_src(src).unwrap(), "A");
}
