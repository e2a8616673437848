#![allow(dead_code)]

use hir_core::frontend::parse;
use hir_core::Module;
use std::path::PathBuf;

pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

/// `(file name, source)` for every corpus program, sorted by name.
pub fn corpus() -> Vec<(String, String)> {
    let mut out: Vec<_> = std::fs::read_dir(corpus_dir())
        .unwrap()
        .filter_map(|e| {
            let p = e.ok()?.path();
            (p.extension()? == "hir").then(|| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read_to_string(&p).unwrap()))
        })
        .collect();
    out.sort();
    out
}

/// Corpus programs expected to verify without errors.
pub fn clean_corpus() -> Vec<(String, Module)> {
    corpus()
        .into_iter()
        .filter(|(n, _)| n != "err_add.hir" && n != "mac.hir")
        .map(|(n, s)| {
            let m = parse(&s, &n).unwrap();
            (n, m)
        })
        .collect()
}

pub fn load(name: &str) -> Module {
    let src = std::fs::read_to_string(corpus_dir().join(name)).unwrap();
    parse(&src, name).unwrap()
}
pub mod kernels;
pub mod gen;
pub mod audit;
