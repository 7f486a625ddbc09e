use std::fs;
use std::path::Path;

use turnbeam::experiment::{full_grid, run_experiment, Cell, ExperimentMatrix, PolicyKind};
use turnbeam::Registry;
use turnbeam_core::corpus::{build_vocabulary, parse_corpus, to_conversations};
use turnbeam_core::metrics::to_csv_string;
use turnbeam_core::{fit_ngram, NGramConfig, PartnerKind, UtteranceAlgorithm};

fn fixture(name: &str) -> String {
    fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)).unwrap()
}

fn f1_matrix() -> ExperimentMatrix {
    serde_json::from_str(&fixture("matrix_f1.json")).unwrap()
}

#[test]
fn one_cell_one_conversation_gives_one_row() {
    let records = parse_corpus(&fixture("f1_corpus.jsonl")).unwrap();
    let mut matrix = f1_matrix();
    matrix.cells.truncate(1);
    matrix.conversations = Some(1);
    let rows = run_experiment(&matrix, &records, &Registry::builtin(), 3).unwrap();
    assert_eq!(rows.len(), 1);
    let csv = to_csv_string(&rows).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.starts_with("strategy,steps,width,partner_kind,nll_mean,rate,rank,gap,n\n"));
    // no lookahead, so the top candidate is always kept
    assert_eq!(rows[0].rate, 0.0);
    assert_eq!(rows[0].n, 1);
}

#[test]
fn same_seed_gives_identical_csv() {
    let records = parse_corpus(&fixture("f1_corpus.jsonl")).unwrap();
    let mut matrix = f1_matrix();
    matrix.conversations = Some(2);
    let registry = Registry::builtin();
    let a = to_csv_string(&run_experiment(&matrix, &records, &registry, 11).unwrap()).unwrap();
    let b = to_csv_string(&run_experiment(&matrix, &records, &registry, 11).unwrap()).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.lines().count(), 4);
}

#[test]
fn grid_covers_every_distinct_strategy() {
    let cells = full_grid();
    assert_eq!(cells.len(), 26);
    let zero: Vec<&Cell> = cells.iter().filter(|c| c.steps == 0).collect();
    assert_eq!(zero.len(), 2);
    for (i, a) in cells.iter().enumerate() {
        assert!(cells[i + 1..].iter().all(|b| b != a));
    }
}

#[test]
fn corpus_errors_carry_line_numbers() {
    let bad = "{\"turns\":[{\"speaker\":\"self\",\"text\":\"a\"}]}\n{\"turns\":[{\"speaker\":\"self\",\"text\":\"a zz\"}]}\n";
    let records = parse_corpus(bad).unwrap();
    let err = run_experiment(&f1_matrix(), &records, &Registry::builtin(), 0).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("line 2") && msg.contains("zz"), "{msg}");
}

#[test]
fn fitted_model_runs_with_both_policies() {
    let records = parse_corpus(&fixture("chat_corpus.jsonl")).unwrap();
    let vocab = build_vocabulary(&records, "</s>").unwrap();
    let convs = to_conversations(&records, &vocab).unwrap();
    let model = fit_ngram(&convs, &vocab, NGramConfig { order: 1, ..NGramConfig::default() }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("chat.json"), model.to_json()).unwrap();
    let registry = Registry::with_dir(Some(dir.path())).unwrap();
    assert_eq!(registry.get("chat").unwrap().info.kind, "ngram");

    let mut matrix = ExperimentMatrix {
        model: "chat".into(),
        mindless_model: Some("chat".into()),
        beam_width: 3,
        max_tokens: 6,
        iterations: 2,
        similarity_threshold: 2,
        conversations: None,
        partner_policy: PolicyKind::Scripted,
        self_context: None,
        partner_context: None,
        cells: vec![
            Cell { algorithm: UtteranceAlgorithm::Beam, steps: 1, partner: PartnerKind::Mindless },
            Cell { algorithm: UtteranceAlgorithm::IterativeBeam, steps: 2, partner: PartnerKind::Transparent },
        ],
    };
    let scripted = run_experiment(&matrix, &records, &registry, 5).unwrap();
    matrix.partner_policy = PolicyKind::Model;
    let modelled = run_experiment(&matrix, &records, &registry, 5).unwrap();
    for rows in [&scripted, &modelled] {
        assert_eq!(rows.len(), 2);
        for r in rows.iter() {
            assert!(r.nll_mean.is_finite() && r.nll_mean > 0.0);
            assert_eq!(r.n, 3);
        }
    }
}
