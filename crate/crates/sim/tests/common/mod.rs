#![allow(dead_code)]

use adyn_core::model::{load_model, load_model_file};
use adyn_core::TraitGraphModel;

pub fn fixture(name: &str) -> TraitGraphModel {
    load_model_file(format!("{}/../../fixtures/{name}.json", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

/// One trait, no mutation: logistic birth-death with `b = 2, d = 1, c = 1`.
pub fn logistic() -> TraitGraphModel {
    load_model(
        r#"{"vertices":["x"],"edges":[],"birth":{"x":2},"death":{"x":1},
            "competition":{"equal":1},"alpha":1.5}"#,
    )
    .unwrap()
}

/// Single path 0 → 1 → 2 with only `2` fit, so `V_mut = {2}`.
pub fn single_path() -> TraitGraphModel {
    load_model(
        r#"{"vertices":["0","1","2"],"edges":[{"from":"0","to":"1","m":1},{"from":"1","to":"2","m":1}],
            "birth":{"0":2,"1":1,"2":20},"death":{"0":1,"1":1.5,"2":0},
            "competition":{"equal":1},"alpha":1.5}"#,
    )
    .unwrap()
}
