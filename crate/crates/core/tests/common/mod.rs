//! Fixture helpers shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::path::PathBuf;

use gapdecomp::synth::DgpSpec;

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn spec(name: &str) -> DgpSpec {
    let text = std::fs::read_to_string(fixture_path(name)).unwrap();
    DgpSpec::from_json(&text).unwrap()
}

/// Same DGP with other sample sizes.
pub fn resized(mut s: DgpSpec, n_w: usize, n_b: usize) -> DgpSpec {
    s.n_w = n_w;
    s.n_b = n_b;
    s
}

pub const DISCRETE_FIXTURES: [&str; 3] = ["hand_example.json", "two_cell_mismatch.json", "two_dim_weighted.json"];
pub const CONTINUOUS_FIXTURES: [&str; 2] = ["logit_mismatch.json", "logit_common.json"];

pub fn sup_dist(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
