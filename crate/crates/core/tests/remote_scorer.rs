//! Remote scorer against the bundled stub server: wire protocol, echo-based
//! continuation scoring, vocabulary errors, and fail-fast vs retry behavior.

use std::collections::BTreeMap;

use sgr_core::scorer::stub::{prompt_hash, rules_from_jsonl, rules_to_jsonl, StubRule, StubServer};
use sgr_core::scorer::{RemoteScorer, Scorer, ScorerConfig, ScorerError, ScorerKind};

fn remote_config(url: &str) -> ScorerConfig {
    let mut cfg = ScorerConfig::new(ScorerKind::Remote);
    cfg.endpoint = Some(url.to_string());
    cfg.timeout_ms = 2_000;
    cfg.max_retries = 1;
    cfg.backoff_ms = 5;
    cfg
}

#[test]
fn answer_scoring_maps_scripted_logprobs() {
    let prompt = "instruction\n(q1, a) <click on> (d1, b)";
    let server = StubServer::start(vec![StubRule::Answer {
        prompt_hash: prompt_hash(prompt),
        top_logprobs: BTreeMap::from([("yes".into(), -0.1), ("no".into(), -2.3)]),
    }])
    .unwrap();
    let scorer = RemoteScorer::new(&remote_config(server.url())).unwrap();
    let score = scorer.score_answer(prompt).unwrap();
    assert_eq!(score.yes_logit, -0.1);
    assert_eq!(score.no_logit, -2.3);
    let expected = (-0.1f64).exp() / ((-0.1f64).exp() + (-2.3f64).exp());
    assert!((score.prob_yes - expected).abs() < 1e-12);
}

#[test]
fn continuation_scoring_reads_the_echoed_target_span() {
    let prompt = "instruction\n(q1, a) <click on>";
    let target = " (d1, b)";
    let full = format!("{prompt}{target}");
    // Script three target tokens at offsets inside the target span.
    let base = prompt.len();
    let server = StubServer::start(vec![StubRule::Echo {
        prompt_hash: prompt_hash(&full),
        tokens: vec![" (d1,".into(), " b".into(), ")".into()],
        token_logprobs: vec![-0.1, -0.2, -0.3],
        text_offset: vec![base, base + 5, base + 7],
    }])
    .unwrap();
    let scorer = RemoteScorer::new(&remote_config(server.url())).unwrap();
    let score = scorer.score_continuation(prompt, target).unwrap();
    assert_eq!(score.token_logprobs, vec![-0.1, -0.2, -0.3]);
    assert!((score.total + 0.6).abs() < 1e-12);
}

#[test]
fn echo_tokens_before_the_target_are_ignored() {
    let prompt = "ab";
    let target = "cd";
    let full = "abcd";
    let server = StubServer::start(vec![StubRule::Echo {
        prompt_hash: prompt_hash(full),
        tokens: vec!["ab".into(), "cd".into()],
        token_logprobs: vec![-9.0, -0.5],
        text_offset: vec![0, 2],
    }])
    .unwrap();
    let scorer = RemoteScorer::new(&remote_config(server.url())).unwrap();
    let score = scorer.score_continuation(prompt, target).unwrap();
    assert_eq!(score.token_logprobs, vec![-0.5]);
}

#[test]
fn missing_answer_token_is_token_not_in_vocabulary() {
    let prompt = "p";
    let server = StubServer::start(vec![StubRule::Answer {
        prompt_hash: prompt_hash(prompt),
        top_logprobs: BTreeMap::from([("yes".into(), -0.5)]),
    }])
    .unwrap();
    let scorer = RemoteScorer::new(&remote_config(server.url())).unwrap();
    let err = scorer.score_answer(prompt).unwrap_err();
    assert!(matches!(err, ScorerError::TokenNotInVocabulary(t) if t == "no"));
}

#[test]
fn configured_token_strings_are_honored() {
    let prompt = "p2";
    let server = StubServer::start(vec![StubRule::Answer {
        prompt_hash: prompt_hash(prompt),
        top_logprobs: BTreeMap::from([("Yes".into(), -0.2), ("No".into(), -1.0)]),
    }])
    .unwrap();
    let mut cfg = remote_config(server.url());
    cfg.yes_token = "Yes".into();
    cfg.no_token = "No".into();
    let scorer = RemoteScorer::new(&cfg).unwrap();
    let score = scorer.score_answer(prompt).unwrap();
    assert_eq!(score.yes_logit, -0.2);
}

#[test]
fn http_4xx_fails_fast_without_retries() {
    let server = StubServer::start(vec![StubRule::HttpError {
        prompt_hash: "*".into(),
        status: 404,
    }])
    .unwrap();
    let mut cfg = remote_config(server.url());
    cfg.max_retries = 3;
    let scorer = RemoteScorer::new(&cfg).unwrap();
    let err = scorer.score_answer("whatever").unwrap_err();
    assert!(matches!(err, ScorerError::RemoteProtocol(_)), "{err:?}");
    assert_eq!(
        server.hits(&prompt_hash("whatever")),
        1,
        "4xx must not retry"
    );
}

#[test]
fn http_5xx_retries_then_fails() {
    let server = StubServer::start(vec![StubRule::HttpError {
        prompt_hash: "*".into(),
        status: 503,
    }])
    .unwrap();
    let mut cfg = remote_config(server.url());
    cfg.max_retries = 2;
    let scorer = RemoteScorer::new(&cfg).unwrap();
    let err = scorer.score_answer("p3").unwrap_err();
    assert!(
        matches!(err, ScorerError::RemoteTransport { attempts: 3, .. }),
        "{err:?}"
    );
    assert_eq!(server.hits(&prompt_hash("p3")), 3);
}

#[test]
fn unmatched_prompt_is_a_protocol_error() {
    let server = StubServer::start(vec![]).unwrap();
    let scorer = RemoteScorer::new(&remote_config(server.url())).unwrap();
    let err = scorer.score_answer("nobody scripted me").unwrap_err();
    assert!(matches!(err, ScorerError::RemoteProtocol(_)), "{err:?}");
}

#[test]
fn empty_target_is_invalid_before_any_request() {
    let server = StubServer::start(vec![]).unwrap();
    let scorer = RemoteScorer::new(&remote_config(server.url())).unwrap();
    let err = scorer.score_continuation("p", "").unwrap_err();
    assert!(matches!(err, ScorerError::InvalidTarget));
    assert_eq!(server.hits(&prompt_hash("p")), 0);
}

#[test]
fn fixture_jsonl_round_trips_and_drives_the_server() {
    let prompt = "replayed prompt";
    let rules = vec![
        StubRule::Answer {
            prompt_hash: prompt_hash(prompt),
            top_logprobs: BTreeMap::from([("yes".into(), -0.3), ("no".into(), -0.9)]),
        },
        StubRule::HttpError {
            prompt_hash: "*".into(),
            status: 500,
        },
    ];
    let jsonl = rules_to_jsonl(&rules);
    let reloaded = rules_from_jsonl(&jsonl).unwrap();
    assert_eq!(reloaded, rules);

    let server = StubServer::start(reloaded).unwrap();
    let scorer = RemoteScorer::new(&remote_config(server.url())).unwrap();
    let score = scorer.score_answer(prompt).unwrap();
    assert_eq!(score.yes_logit, -0.3);
    // Unscripted prompts fall through to the catch-all 500.
    assert!(scorer.score_answer("other").is_err());
}

#[test]
fn concurrent_calls_respect_the_in_flight_bound_and_pair_responses() {
    // Script ten distinct prompts with distinct logprobs and call them from
    // ten threads through a scorer bounded at two in-flight requests; each
    // response must pair with its own request.
    let prompts: Vec<String> = (0..10).map(|i| format!("prompt number {i}")).collect();
    let rules: Vec<StubRule> = prompts
        .iter()
        .enumerate()
        .map(|(i, p)| StubRule::Answer {
            prompt_hash: prompt_hash(p),
            top_logprobs: BTreeMap::from([
                ("yes".into(), -(i as f64) / 10.0 - 0.05),
                ("no".into(), -1.0),
            ]),
        })
        .collect();
    let server = StubServer::start(rules).unwrap();
    let mut cfg = remote_config(server.url());
    cfg.max_in_flight = 2;
    let scorer = RemoteScorer::new(&cfg).unwrap();
    std::thread::scope(|scope| {
        for (i, p) in prompts.iter().enumerate() {
            let scorer = &scorer;
            scope.spawn(move || {
                let score = scorer.score_answer(p).unwrap();
                let expected = -(i as f64) / 10.0 - 0.05;
                assert!((score.yes_logit - expected).abs() < 1e-12);
            });
        }
    });
}
