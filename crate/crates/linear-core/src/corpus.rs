//! Batch classification of a directory of `.lc` files against the
//! verdicts recorded in their headers.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::check::check_program;
use crate::parse::{expected_verdict, parse_program};
use crate::transform::{preservation_check, Pass, SitePolicy, Verdict};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct PassTally {
    pub applied: usize,
    pub preserved: usize,
    pub rejected: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct CorpusEntry {
    pub name: String,
    /// `accept` or `reject`, from the `-- EXPECT:` header.
    pub expect: Option<String>,
    /// `accept`, `reject`, or `parse-error`.
    pub actual: String,
    pub error_kind: Option<String>,
    pub pass_results: BTreeMap<String, PassTally>,
    pub ms: f64,
}

impl CorpusEntry {
    /// Wrong verdict, missing header, or a sound pass that broke typing.
    pub fn mismatch(&self) -> bool {
        self.expect.as_deref() != Some(self.actual.as_str())
            || self.pass_results.iter().any(|(p, t)| t.rejected > 0 && p != Pass::ReverseBinderSwap.name())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Totals {
    pub programs: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub mismatches: usize,
    pub rewrites: usize,
    pub preserved: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct CorpusReport {
    pub entries: Vec<CorpusEntry>,
    pub totals: Totals,
}

fn verdict_word(accepted: bool) -> &'static str {
    if accepted {
        "accept"
    } else {
        "reject"
    }
}

/// Classify one source text, then run `passes` over it if it was accepted.
pub fn run_entry(name: &str, src: &str, passes: &[Pass]) -> CorpusEntry {
    let start = Instant::now();
    let expect = expected_verdict(src).map(|v| verdict_word(v).to_string());
    let mut pass_results = BTreeMap::new();
    let (actual, error_kind) = match parse_program(src) {
        Err(_) => ("parse-error", Some("ParseError".to_string())),
        Ok(p) => match check_program(&p) {
            Err(e) => (verdict_word(false), Some(e.kind.label())),
            Ok(_) => {
                let pipeline: Vec<(Pass, SitePolicy)> =
                    passes.iter().flat_map(|&p| [(p, SitePolicy::Each), (p, SitePolicy::Everywhere)]).collect();
                for o in preservation_check(&p, &pipeline).unwrap_or_default() {
                    let t: &mut PassTally = pass_results.entry(o.pass.name().to_string()).or_default();
                    match o.verdict {
                        Verdict::Preserved => {
                            t.applied += 1;
                            t.preserved += 1;
                        }
                        Verdict::Rejected(_) => {
                            t.applied += 1;
                            t.rejected += 1;
                        }
                        Verdict::NotApplicable(_) | Verdict::GuardFailed(_) => {}
                    }
                }
                for p in passes {
                    pass_results.entry(p.name().to_string()).or_default();
                }
                (verdict_word(true), None)
            }
        },
    };
    CorpusEntry {
        name: name.to_string(),
        expect,
        actual: actual.to_string(),
        error_kind,
        pass_results,
        ms: start.elapsed().as_secs_f64() * 1000.0,
    }
}

/// Every `.lc` file of `dir`, in filename order, processed in parallel.
pub fn run_corpus(dir: &Path, passes: &[Pass]) -> io::Result<CorpusReport> {
    let mut files: Vec<(String, String)> = Vec::new();
    for ent in fs::read_dir(dir)? {
        let path = ent?.path();
        if path.extension().is_some_and(|e| e == "lc") {
            let name = path.file_name().expect("file has a name").to_string_lossy().into_owned();
            files.push((name, fs::read_to_string(&path)?));
        }
    }
    files.sort();
    let entries: Vec<CorpusEntry> = files.par_iter().map(|(name, src)| run_entry(name, src, passes)).collect();
    let mut totals = Totals { programs: entries.len(), ..Totals::default() };
    for e in &entries {
        totals.accepted += (e.actual == "accept") as usize;
        totals.rejected += (e.actual == "reject") as usize;
        totals.mismatches += e.mismatch() as usize;
        for t in e.pass_results.values() {
            totals.rewrites += t.applied;
            totals.preserved += t.preserved;
        }
    }
    Ok(CorpusReport { entries, totals })
}
