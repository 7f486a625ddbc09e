use turnbeam_core::multiturn::{make_partner, multi_turn_search, MultiTurnParams, PartnerKind, SelfSide};
use turnbeam_core::{fixtures, Context, SpeakerRole, UtteranceAlgorithm};

fn calls(lookahead: usize, width: usize, max_tokens: usize) -> (u64, u64) {
    let m = fixtures::flat(8, 1e-6);
    let ctx = Context::keyed(SpeakerRole::SelfSpeaker, "c");
    let partner = make_partner(PartnerKind::Egocentric, &m, None, &ctx, None).unwrap();
    let params = MultiTurnParams {
        beam_width: width,
        lookahead,
        max_tokens,
        algorithm: UtteranceAlgorithm::Beam,
        ..MultiTurnParams::default()
    };
    let (_, trace) = multi_turn_search(SelfSide { model: &m, context: &ctx }, &partner, &[], &params).unwrap();
    (trace.model_call_count - trace.lookahead_call_count, trace.lookahead_call_count)
}

#[test]
fn call_counts_are_exact() {
    let (k, t) = (5u64, 10u64);
    // one call for the empty prefix, then k per remaining step
    let per_search = 1 + (t - 1) * k;
    for lookahead in [0, 1, 2, 4, 8] {
        let (h0, look) = calls(lookahead, k as usize, t as usize);
        assert_eq!(h0, per_search);
        assert_eq!(look, lookahead as u64 * k * per_search, "L = {lookahead}");
    }
}

#[test]
fn lookahead_calls_grow_linearly() {
    let (_, four) = calls(4, 5, 10);
    let (_, eight) = calls(8, 5, 10);
    assert_eq!(eight, 2 * four);
    let bound = 8 * 5 * 10 * 5;
    assert!(eight <= bound);
}
