#![allow(dead_code)]

use std::path::PathBuf;

use locpar_core::eval_seq::{run_seq, SeqOptions, SeqRun};
use locpar_core::layout::{flatten_result, CanonicalValue};
use locpar_core::syntax::parse_program;
use locpar_core::typecheck::{typecheck_program, TypedProgram};
use locpar_core::Name;

pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../locpar/examples")
}

pub fn source(name: &str) -> String {
    let path = corpus_dir().join(format!("{name}.lcp"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Names of the programs expected to type-check.
pub fn positives() -> Vec<String> {
    let mut out: Vec<String> = std::fs::read_dir(corpus_dir())
        .expect("corpus directory")
        .filter_map(|e| {
            let p = e.ok()?.path();
            let stem = p.file_stem()?.to_str()?.to_owned();
            (p.extension()? == "lcp" && !stem.starts_with("bad_")).then_some(stem)
        })
        .collect();
    out.sort();
    out
}

pub fn typed(src: &str) -> TypedProgram {
    let p = parse_program(src).expect("parses");
    typecheck_program(&p).expect("type-checks")
}

pub fn load(name: &str) -> TypedProgram {
    typed(&source(name))
}

pub fn seq(tp: &TypedProgram) -> SeqRun {
    run_seq(
        &tp.program,
        &tp.env,
        SeqOptions {
            audit: true,
            ..SeqOptions::default()
        },
    )
    .expect("runs")
}

pub fn seq_value(tp: &TypedProgram) -> CanonicalValue {
    let r = seq(tp);
    flatten_result(&tp.env, &r.value, &tp.main_ty, &r.state.store).expect("complete value")
}

pub fn node(tag: &str, children: Vec<CanonicalValue>) -> CanonicalValue {
    CanonicalValue::Node(Name::new(tag), children)
}

pub fn leaf(n: i64) -> CanonicalValue {
    CanonicalValue::Leaf(n)
}

/// `Node n l r` / `Leaf 1` tree of the given depth, as `buildtree` makes.
pub fn full_tree(depth: i64, leaf_val: i64) -> CanonicalValue {
    if depth <= 0 {
        node("Leaf", vec![leaf(leaf_val)])
    } else {
        node(
            "Node",
            vec![
                leaf(depth),
                full_tree(depth - 1, leaf_val),
                full_tree(depth - 1, leaf_val),
            ],
        )
    }
}

/// Replaces the argument of the last call in `main`, e.g. tree depth.
pub fn with_main_arg(src: &str, call: &str, arg: i64) -> String {
    let at = src.rfind(call).expect("call in main");
    let end = src[at..].find('\n').map_or(src.len(), |k| at + k);
    format!("{}{call} {arg}{}", &src[..at], &src[end..])
}
