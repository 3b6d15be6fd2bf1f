//! Checks shared between the unit-style test targets and the acceptance
//! harness. Each check panics on failure.
#![allow(dead_code)]

pub mod emit;
pub mod formulas;
pub mod oracle;
pub mod walk;

use std::path::PathBuf;

pub fn models_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models")
}

pub fn read(name: &str) -> String {
    std::fs::read_to_string(models_dir().join(name)).unwrap()
}

pub fn load(name: &str) -> coda::ValidModel {
    coda::load_file(&models_dir().join(name)).unwrap_or_else(|d| panic!("{name}: {d:?}"))
}

/// Shipped files with the given extension, sorted by name.
pub fn shipped(ext: &str) -> Vec<String> {
    let mut out: Vec<String> = std::fs::read_dir(models_dir())
        .unwrap()
        .filter_map(|e| {
            let p = e.unwrap().path();
            (p.extension().and_then(|e| e.to_str()) == Some(ext)).then(|| p.file_name().unwrap().to_string_lossy().into_owned())
        })
        .collect();
    out.sort();
    out
}
