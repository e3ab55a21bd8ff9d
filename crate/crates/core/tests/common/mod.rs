#![allow(dead_code)]

use std::path::PathBuf;

use hiopf_core::network::{NetworkCase, DEFAULT_SLACK_COST};
use hiopf_core::opf::OpfData;

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub fn case(name: &str) -> NetworkCase {
    NetworkCase::from_file(fixture_path(&format!("{name}.m")))
        .unwrap()
        .with_slack_generators(DEFAULT_SLACK_COST)
}

pub fn data(name: &str) -> OpfData {
    OpfData::from_case(&case(name)).unwrap()
}
