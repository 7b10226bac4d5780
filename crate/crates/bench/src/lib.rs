//! Fixtures shared by the benchmarks.

use std::path::Path;

use recoilspec_core::Scenario;

/// Loads one of the bundled scenarios in `configs/`.
pub fn scenario(name: &str) -> Scenario {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    Scenario::load(&path).expect("bundled scenario")
}
