//! Fixtures shared by the benchmarks.

use std::path::PathBuf;

use euroem_core::{load_system, SystemModel};

/// The bundled three-zone dataset.
pub fn dataset_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/ieee118-3z")
}

/// The bundled dataset cut to its first `hours`.
pub fn bundled(hours: usize) -> SystemModel {
    load_system(&dataset_dir())
        .and_then(|s| s.truncated(hours))
        .expect("bundled dataset loads")
}
