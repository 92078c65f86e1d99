//! Driver for the parallel location calculus: source loading, diagnostics,
//! schedule trace files, metrics reports, timing and a thread-backed
//! evaluator.

pub mod cli;
pub mod diag;
pub mod report;
pub mod threads;
pub mod timing;
pub mod trace_file;

use std::path::Path;

use locpar_core::syntax::{implicit_par, parse_program, Program};
use locpar_core::typecheck::{typecheck_program, TypedProgram};

use crate::diag::Diagnostic;

/// Reads, parses and type-checks a program file.
pub fn load(path: &Path, implicit: bool) -> Result<TypedProgram, Diagnostic> {
    let text = std::fs::read_to_string(path).map_err(|e| Diagnostic::io(path, &e))?;
    let mut p = parse_program(&text).map_err(|e| Diagnostic::syntax(path, &e))?;
    if implicit {
        p = make_implicit(p);
    }
    typecheck_program(&p).map_err(|e| Diagnostic::typing(path, &e))
}

/// Marks every `let` in the program as a spawn point.
pub fn make_implicit(mut p: Program) -> Program {
    for fd in &mut p.fundecls {
        fd.body = implicit_par(&fd.body);
    }
    p.main = implicit_par(&p.main);
    p
}
