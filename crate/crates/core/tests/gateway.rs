use std::sync::Arc;

use evalscale::gateway::{
    extract_solution, CharHeuristic, ExtractError, Gateway, GatewayError, GenerationSettings, Generator,
    RequestOrigin, RequestPurpose, ScriptedGenerator, SyntheticGenerator, TokenBudget, TokenCounter, BLOCK_END,
    BLOCK_START,
};
use proptest::prelude::*;

fn gateway(budget: TokenBudget) -> Gateway {
    Gateway::new(Arc::new(SyntheticGenerator::default()), budget, GenerationSettings::default())
}

fn origin(offset: u32, seed: u64) -> RequestOrigin {
    RequestOrigin {
        trajectory: 0,
        depth: 3,
        sample_offset: offset,
        seed,
    }
}

#[test]
fn default_budget_split() {
    let b = TokenBudget::default();
    assert_eq!((b.context_total, b.program_max, b.input_plus_reasoning_max), (49_152, 15_536, 33_616));
    let g = gateway(b);
    let r = g.request("p".into(), 2, RequestPurpose::Proposal, origin(0, 1));
    assert_eq!(r.max_output_tokens, 15_536);
}

#[test]
fn budget_rejects_inconsistent_json() {
    let ok: TokenBudget =
        serde_json::from_str(r#"{"context_total":10,"program_max":4,"input_plus_reasoning_max":6}"#).unwrap();
    assert_eq!(ok.program_max, 4);
    assert!(serde_json::from_str::<TokenBudget>(r#"{"context_total":10,"program_max":4,"input_plus_reasoning_max":7}"#).is_err());
}

proptest! {
    #[test]
    fn extraction_never_panics(text in "(EVOLVE-BLOCK-START|EVOLVE-BLOCK-END|\n|[a-z #]{0,6}|é){0,12}") {
        let _ = extract_solution(&text, true);
        prop_assert_eq!(extract_solution(&text, false).unwrap(), text);
    }

    #[test]
    fn extraction_recovers_the_wrapped_body(
        prefix in "[a-z \n]{0,20}",
        body in "[a-z0-9 =\n]{0,40}",
        suffix in "[a-z \n]{0,20}",
    ) {
        let text = format!("{prefix}\n# {BLOCK_START}\n{body}\n# {BLOCK_END}\n{suffix}");
        prop_assert_eq!(extract_solution(&text, true).unwrap(), format!("{body}\n"));
    }

    #[test]
    fn unclosed_block_is_an_error(body in "[a-z\n]{0,30}") {
        let text = format!("{BLOCK_START}\n{body}");
        prop_assert_eq!(extract_solution(&text, true), Err(ExtractError::Unterminated));
    }

    #[test]
    fn budget_accepts_exact_partitions(program in 0u64..100_000, rest in 0u64..100_000, skew in -3i64..=3) {
        let total = (program + rest) as i64 + skew;
        prop_assume!(total >= 0);
        let got = TokenBudget::new(total as u64, program, rest);
        prop_assert_eq!(got.is_ok(), skew == 0 && program > 0);
    }

    #[test]
    fn preflight_matches_the_estimate(chars in 0usize..2_000, limit in 1u64..600) {
        let budget = TokenBudget::new(limit + 100, 100, limit).unwrap();
        let g = gateway(budget);
        let prompt = "x".repeat(chars);
        let estimate = CharHeuristic.count(&prompt);
        prop_assert!(estimate * 4 >= chars as u64);
        let req = g.request(prompt, 1, RequestPurpose::Proposal, origin(0, 0));
        match g.generate(&req) {
            Ok(r) => {
                prop_assert!(estimate <= limit);
                prop_assert_eq!(r.candidates.len(), 1);
            }
            Err(GatewayError::PromptTooLarge { estimated, limit: l }) => {
                prop_assert_eq!((estimated, l), (estimate, limit));
                prop_assert!(estimate > limit);
            }
            Err(e) => prop_assert!(false, "unexpected {e}"),
        }
    }

    #[test]
    fn split_requests_match_one_batch(k in 1u32..12, cuts in prop::collection::vec(1u32..5, 1..12), seed in any::<u64>()) {
        let g = gateway(TokenBudget::default());
        let whole = g
            .generate(&g.request("prompt".into(), k, RequestPurpose::Proposal, origin(0, seed)))
            .unwrap()
            .candidates;
        prop_assert_eq!(whole.len(), k as usize);
        let mut parts = Vec::new();
        let mut offset = 0;
        for c in cuts.iter().cycle() {
            if offset >= k {
                break;
            }
            let n = (*c).min(k - offset);
            let req = g.request("prompt".into(), n, RequestPurpose::Proposal, origin(offset, seed));
            parts.extend(g.generate(&req).unwrap().candidates);
            offset += n;
        }
        prop_assert_eq!(whole, parts);
    }

    #[test]
    fn scripted_samples_cycle(list in prop::collection::vec("[a-z]{1,4}", 1..5), k in 1u32..10) {
        let line = serde_json::json!({"prompt_hash": "*", "candidates": list}).to_string();
        let g = ScriptedGenerator::from_jsonl(&line).unwrap();
        let req = gateway(TokenBudget::default()).request("q".into(), k, RequestPurpose::Proposal, origin(0, 0));
        let got = g.generate(&req).unwrap().candidates;
        for (i, c) in got.iter().enumerate() {
            prop_assert_eq!(c, &list[i % list.len()]);
        }
    }
}
