//! Fixture loading shared by the benchmarks.

use std::path::PathBuf;

use gridswitch_core::case::{parse_case, GridCase};

pub fn fixture(name: &str) -> GridCase {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures")
        .join(name);
    let text = std::fs::read_to_string(&path).expect("fixture readable");
    parse_case(&text).expect("fixture parses")
}
