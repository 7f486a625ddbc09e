//! Reference tabular models shipped with the crate.
//!
//! `F1` is a three-token first-order model with a single context `c1`.
//! `F2` is adversarial: under the partner context `c2`, the most likely
//! self opener (`x </s>`) leaves the partner no continuation above 0.05,
//! while the runner-up (`y </s>`) is answered by `w </s>` with
//! probability 0.91 * 0.73.

use crate::model::TabularModel;

pub const F1_JSON: &str = include_str!("../fixtures/f1.json");
pub const F2_JSON: &str = include_str!("../fixtures/f2.json");

pub const F1_CONTEXT: &str = "c1";
pub const F2_SELF_CONTEXT: &str = "c1";
pub const F2_PARTNER_CONTEXT: &str = "c2";

pub fn f1() -> TabularModel {
    TabularModel::from_json(F1_JSON).expect("F1 fixture is valid")
}

pub fn f2() -> TabularModel {
    TabularModel::from_json(F2_JSON).expect("F2 fixture is valid")
}

/// Looks up a built-in fixture by id (`F1`, `F2`, case-insensitive).
pub fn by_name(name: &str) -> Option<TabularModel> {
    match name.to_ascii_lowercase().as_str() {
        "f1" => Some(f1()),
        "f2" => Some(f2()),
        _ => None,
    }
}

pub const NAMES: [&str; 2] = ["F1", "F2"];

/// Single-context (`c`) model over `content` equiprobable tokens plus an
/// eos of probability `eos_prob`, from every row. With a tiny `eos_prob`
/// every beam hypothesis runs to the token limit, which makes call counts
/// exact.
pub fn flat(content: usize, eos_prob: f64) -> TabularModel {
    use std::collections::BTreeMap;

    use crate::model::{TabularSpec, START_ROW};

    let mut vocab: Vec<String> = (0..content).map(|i| format!("w{i}")).collect();
    vocab.push("</s>".into());
    let mut row = vec![(1.0 - eos_prob) / content as f64; content];
    row.push(eos_prob);
    let rows: BTreeMap<String, Vec<f64>> = std::iter::once(START_ROW.to_string())
        .chain(vocab[..content].iter().cloned())
        .map(|k| (k, row.clone()))
        .collect();
    TabularModel::from_spec(TabularSpec {
        vocab,
        eos: "</s>".into(),
        contexts: BTreeMap::from([("c".to_string(), rows)]),
    })
    .expect("flat rows are normalized")
}
