#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use turnbeam_core::model::{TabularSpec, START_ROW};
use turnbeam_core::TabularModel;

pub fn vocab_names(size: usize) -> Vec<String> {
    let mut names: Vec<String> = (0..size - 1).map(|i| format!("t{i}")).collect();
    names.push("</s>".into());
    names
}

fn random_row(rng: &mut ChaCha8Rng, size: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..size).map(|_| rng.gen_range(0.05..1.0)).collect();
    let sum: f64 = raw.iter().sum();
    raw.iter().map(|x| x / sum).collect()
}

/// Random strictly positive first-order table model with the given
/// context keys; eos is the last token.
pub fn random_tabular(seed: u64, size: usize, contexts: &[&str]) -> TabularModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = vocab_names(size);
    let mut ctx_map = BTreeMap::new();
    for key in contexts {
        let mut rows = BTreeMap::new();
        rows.insert(START_ROW.to_string(), random_row(&mut rng, size));
        for name in &vocab[..size - 1] {
            rows.insert(name.clone(), random_row(&mut rng, size));
        }
        ctx_map.insert(key.to_string(), rows);
    }
    TabularModel::from_spec(TabularSpec {
        vocab,
        eos: "</s>".into(),
        contexts: ctx_map,
    })
    .expect("random rows are normalized")
}
