use clap::ValueEnum;
use pkgbridge_core::depgraph::Exclusions;
use serde_json::{json, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Tsv,
    Json,
}

pub fn print_json(value: &Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("json renders"));
}

pub fn exclusions_json(excluded: &Exclusions) -> Value {
    excluded
        .iter()
        .map(|(name, r)| (name.clone(), json!({"kind": r.kind.as_str(), "detail": r.detail})))
        .collect::<serde_json::Map<_, _>>()
        .into()
}
