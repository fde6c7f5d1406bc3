//! Wire-protocol tests: the mock server against the remote client.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ssbd::fixtures::random_table_fixture;
use ssbd::model::{LanguageModel, RemoteModel};
use ssbd::server::spawn_mock_server;
use ssbd::token::TokenSeq;

fn local_addr() -> std::net::SocketAddr {
    "127.0.0.1:0".parse().unwrap()
}

#[test]
fn remote_forward_matches_local_table() {
    let fixture = random_table_fixture(31, "s");
    let local = fixture.model.clone();
    let server = spawn_mock_server(Box::new(fixture.model), local_addr(), 64).unwrap();
    let remote = RemoteModel::connect(&server.base_url()).unwrap();

    assert_eq!(remote.vocab().size(), local.vocab().size());
    assert_eq!(remote.vocab().eos_id(), local.vocab().eos_id());

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let v = local.vocab().size() as u32;
    for _ in 0..20 {
        let len = rng.gen_range(1..8);
        let prompt = TokenSeq::from((0..len).map(|_| rng.gen_range(1..v)).collect::<Vec<u32>>());
        let from = rng.gen_range(0..prompt.len());
        let want = local.forward(&prompt, from).unwrap();
        let got = remote.forward(&prompt, from).unwrap();
        assert_eq!(got.len(), want.len());
        for (a, b) in got.iter().zip(&want) {
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn malformed_requests_get_400_with_error_body() {
    let fixture = random_table_fixture(32, "s");
    let server = spawn_mock_server(Box::new(fixture.model), local_addr(), 64).unwrap();
    let client = reqwest::blocking::Client::new();

    for body in ["not json", r#"{"tokens": "x"}"#, r#"{"tokens":[1],"from_position":9}"#] {
        let resp = client
            .post(format!("{}/v1/forward", server.base_url()))
            .header("content-type", "application/json")
            .body(body)
            .send()
            .unwrap();
        assert_eq!(resp.status(), 400, "body {body:?}");
        let json: serde_json::Value = resp.json().unwrap();
        assert!(json.get("error").is_some());
    }

    // Out-of-vocab token id.
    let resp = client
        .post(format!("{}/v1/forward", server.base_url()))
        .json(&serde_json::json!({"tokens": [100000], "from_position": 0}))
        .send()
        .unwrap();
    assert_eq!(resp.status(), 400);
}

#[test]
fn vocab_endpoint_reports_size_and_eos() {
    let fixture = random_table_fixture(33, "s");
    let size = fixture.model.vocab().size();
    let eos = fixture.model.vocab().eos_id().0;
    let server = spawn_mock_server(Box::new(fixture.model), local_addr(), 64).unwrap();
    let json: serde_json::Value = reqwest::blocking::get(format!("{}/v1/vocab", server.base_url()))
        .unwrap()
        .json()
        .unwrap();
    assert_eq!(json["size"], size as u64);
    assert_eq!(json["eos_id"], eos as u64);
}

#[test]
fn top_k_truncation_renormalizes_and_zero_fills() {
    // A vocab past the full-distribution cap forces the top-k wire format.
    use ssbd::dist::ProbDist;
    use ssbd::model::TableModel;
    use ssbd::token::{TokenId, Vocab};

    let v = 5000usize;
    let vocab = Vocab::new(v, TokenId(0)).unwrap();
    let mut probs = vec![0.0; v];
    // Mass concentrated on two ids; the tail shares the rest thinly.
    probs[7] = 0.5;
    probs[9] = 0.3;
    let tail = 0.2 / (v - 2) as f64;
    for (i, p) in probs.iter_mut().enumerate() {
        if i != 7 && i != 9 {
            *p = tail;
        }
    }
    let dist = ProbDist::new(probs).unwrap();
    let mut model = TableModel::new(vocab, Some(dist));
    model
        .insert(TokenSeq::from([1]), ProbDist::one_hot(v, TokenId(7)))
        .unwrap();

    let server = spawn_mock_server(Box::new(model), local_addr(), 2).unwrap();
    let remote = RemoteModel::connect(&server.base_url()).unwrap();

    // Fallback row truncated to k=2: ids 7 and 9 survive, renormalized.
    let got = remote.forward(&TokenSeq::from([2]), 0).unwrap().remove(0);
    assert!((got.prob(TokenId(7)) - 0.5 / 0.8).abs() < 1e-9);
    assert!((got.prob(TokenId(9)) - 0.3 / 0.8).abs() < 1e-9);
    assert_eq!(got.prob(TokenId(0)), 0.0, "missing ids get probability 0");

    // One-hot rows survive truncation exactly.
    let got = remote.forward(&TokenSeq::from([1]), 0).unwrap().remove(0);
    assert_eq!(got.prob(TokenId(7)), 1.0);
}
