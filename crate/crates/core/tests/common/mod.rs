#![allow(dead_code)]

use std::collections::BTreeMap;

use adyn_core::model::{load_model, load_model_file, ModelConfig, TraitGraphModel};
use proptest::prelude::*;

pub fn fixture_path(name: &str) -> String {
    format!("{}/../../fixtures/{name}.json", env!("CARGO_MANIFEST_DIR"))
}

pub fn fixture(name: &str) -> TraitGraphModel {
    load_model_file(fixture_path(name)).unwrap()
}

/// Raw JSON of a fixture, for oracles that must not go through the model code.
pub fn raw(name: &str) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(fixture_path(name)).unwrap()).unwrap()
}

pub fn p(v: &serde_json::Value, block: &str, id: &str) -> f64 {
    v[block][id].as_f64().unwrap()
}

/// Random small trait graph: out-edge weights normalised per vertex, random
/// demography, generic competition, alpha in {0.5, 1.5, 2.5}.
pub fn arb_model() -> impl Strategy<Value = TraitGraphModel> {
    (2usize..=6)
        .prop_flat_map(|n| {
            (
                Just(n),
                prop::collection::vec(prop::bool::weighted(0.35), n * n),
                prop::collection::vec(0.2f64..1.0, n * n),
                prop::collection::vec(0.5f64..3.0, n),
                prop::collection::vec(0.0f64..1.0, n),
                prop::collection::vec(0.1f64..1.6, n * n),
                prop::sample::select(vec![0.5, 1.5, 2.5]),
            )
        })
        .prop_map(|(n, adj, w, b, d, c, alpha)| {
            let ids: Vec<String> = (0..n).map(|i| format!("t{i}")).collect();
            let mut edges = Vec::new();
            for u in 0..n {
                let outs: Vec<usize> = (0..n).filter(|&v| v != u && adj[u * n + v]).collect();
                let total: f64 = outs.iter().map(|&v| w[u * n + v]).sum();
                for &v in &outs {
                    edges.push(serde_json::json!({"from": ids[u], "to": ids[v], "m": w[u * n + v] / total}));
                }
            }
            let mut comp: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
            for u in 0..n {
                for v in 0..n {
                    let x = if u == v { 0.5 + c[u * n + v] / 2.0 } else { c[u * n + v] };
                    comp.entry(ids[u].clone()).or_default().insert(ids[v].clone(), x);
                }
            }
            let doc = serde_json::json!({
                "vertices": ids,
                "edges": edges,
                "birth": ids.iter().cloned().zip(b.iter().copied()).collect::<BTreeMap<_, _>>(),
                "death": ids.iter().cloned().zip(d.iter().copied()).collect::<BTreeMap<_, _>>(),
                "competition": comp,
                "alpha": alpha,
            });
            load_model(&doc.to_string()).expect("generated model is valid")
        })
}

pub fn config_of(model: &TraitGraphModel) -> ModelConfig {
    model.to_config()
}
