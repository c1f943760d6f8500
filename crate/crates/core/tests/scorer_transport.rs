use std::sync::Arc;
use std::time::Duration;

use lexkit::scorer::{
    serve_http, HashScorer, HttpScorer, ScoreRequest, Scorer, TokenizeMode, SPAN,
};
use lexkit::Error;
use rayon::prelude::*;

fn local() -> Arc<HashScorer> {
    Arc::new(HashScorer::new(11, 800, 64).unwrap())
}

fn request(context: &str, k: usize, candidates: Vec<u32>, topk: usize) -> ScoreRequest {
    ScoreRequest {
        context: context.to_string(),
        num_masks: k,
        candidate_ids: candidates,
        topk,
    }
}

#[test]
fn http_matches_in_process() {
    let scorer = local();
    let server = serve_http(scorer.clone(), "127.0.0.1:0", 2).unwrap();
    let client = HttpScorer::new(&server.url());

    assert_eq!(client.info().unwrap(), scorer.info().unwrap());
    assert_eq!(client.info().unwrap().vocab_size, 800);
    for mode in [TokenizeMode::Standalone, TokenizeMode::WithLeadingSpace] {
        assert_eq!(
            client.tokenize("drug trafficking", mode).unwrap(),
            scorer.tokenize("drug trafficking", mode).unwrap()
        );
    }
    let req = request(&format!("The applicant was convicted of {SPAN} in 2019."), 2, vec![4, 9, 17, 300, 799], 3);
    let remote = client.fill(&req).unwrap();
    assert_eq!(remote, scorer.fill(&req).unwrap());
    assert_eq!(remote.positions.len(), 2);
    assert!(remote.positions.iter().all(|p| p.candidate_logprobs.len() == 5 && p.topk.len() == 3));
    server.shutdown();
}

#[test]
fn http_errors_keep_their_kind() {
    let server = serve_http(local(), "127.0.0.1:0", 1).unwrap();
    let client = HttpScorer::new(&server.url());

    let long = "word ".repeat(200);
    match client.tokenize(&long, TokenizeMode::Standalone) {
        Err(Error::TooLong { max_input_tokens, .. }) => assert_eq!(max_input_tokens, 64),
        other => panic!("expected TooLong, got {other:?}"),
    }
    // Client-side checks fire before the request leaves.
    assert!(matches!(client.tokenize("", TokenizeMode::Standalone), Err(Error::Invalid(_))));
    let bad_id = request(&format!("a {SPAN} b"), 1, vec![800], 0);
    assert!(client.fill(&bad_id).is_err());

    // Server-side checks arrive as wire errors.
    let raw = ureq::post(&format!("{}/fill", server.url()))
        .send_json(serde_json::json!({"context": "no sentinel", "num_masks": 1, "candidate_ids": [], "topk": 1}));
    match raw {
        Err(ureq::Error::Status(code, resp)) => {
            assert_eq!(code, 400);
            let body: serde_json::Value = resp.into_json().unwrap();
            assert_eq!(body["error"]["kind"], "protocol");
        }
        other => panic!("expected HTTP 400, got {other:?}"),
    }
    match ureq::get(&format!("{}/missing", server.url())).call() {
        Err(ureq::Error::Status(code, _)) => assert_eq!(code, 404),
        other => panic!("expected HTTP 404, got {other:?}"),
    }
    server.shutdown();
}

#[test]
fn unreachable_endpoint_is_a_connection_error() {
    let port = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let client = HttpScorer::new(&format!("http://127.0.0.1:{port}")).with_retry(3, Duration::from_millis(5));
    let started = std::time::Instant::now();
    match client.info() {
        Err(Error::Connection(msg)) => assert!(msg.contains("after 3 attempts"), "{msg}"),
        other => panic!("expected a connection error, got {other:?}"),
    }
    // Two backoff sleeps: 5ms then 10ms.
    assert!(started.elapsed() >= Duration::from_millis(15));
}

#[test]
fn concurrent_requests_pair_with_their_responses() {
    let scorer = local();
    let server = serve_http(scorer.clone(), "127.0.0.1:0", 4).unwrap();
    let client = HttpScorer::new(&server.url()).with_in_flight(3);
    let contexts: Vec<String> = (0..64).map(|i| format!("case {i} concerns {SPAN} and appeal {i}")).collect();
    let ok = contexts.par_iter().all(|c| {
        let req = request(c, 1 + c.len() % 3, vec![5, 6, 7], 2);
        client.fill(&req).unwrap() == scorer.fill(&req).unwrap()
    });
    assert!(ok);
    server.shutdown();
}

#[test]
fn connect_parses_endpoints() {
    let s = lexkit::scorer::connect("hash:seed=3,vocab=1000,max=128").unwrap();
    assert_eq!(s.info().unwrap().vocab_size, 1000);
    assert_eq!(s.info().unwrap().max_input_tokens, 128);
    assert!(lexkit::scorer::connect("ftp://x").is_err());
    assert!(lexkit::scorer::connect("hash:vocab=abc").is_err());
}
