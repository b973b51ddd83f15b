#![allow(dead_code)]

use std::path::PathBuf;

use txsym_core::asm::assemble;
use txsym_core::isa::Program;

pub fn corpus() -> Vec<(String, Program)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("corpus");
    let mut files: Vec<_> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "tasm"))
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| {
            let src = std::fs::read_to_string(&p).unwrap();
            let name = p.file_stem().unwrap().to_string_lossy().into_owned();
            let prog = assemble(&src).unwrap_or_else(|e| panic!("{name}: {e}"));
            (name, prog)
        })
        .collect()
}
