use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;

use dupdetect::embedding::{load_store, EmbeddingProvider, ProviderConfig, RemoteProvider};
use dupdetect::Error;
use serde_json::{json, Value};
use tiny_http::{Header, Response, Server};

const DIM: usize = 1536;

fn vector_for(text: &str) -> Vec<f32> {
    let seed = text.bytes().fold(7u32, |h, b| h.wrapping_mul(31).wrapping_add(b as u32));
    (0..DIM).map(|i| ((seed.wrapping_add(i as u32) % 97) as f32) / 97.0 - 0.5).collect()
}

struct Stub {
    url: String,
    hits: Arc<AtomicUsize>,
}

/// Serves `/embeddings`. Requests numbered `fail_from` and later get `fail_status`.
fn stub(fail_from: Option<usize>, fail_status: u16) -> Stub {
    let server = Server::http("127.0.0.1:0").unwrap();
    let url = format!("http://{}", server.server_addr().to_ip().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = hits.clone();
    thread::spawn(move || {
        for mut req in server.incoming_requests() {
            let n = counter.fetch_add(1, Ordering::SeqCst);
            let mut body = String::new();
            req.as_reader().read_to_string(&mut body).unwrap();
            let auth_ok = req.headers().iter().any(|h| h.field.equiv("Authorization") && h.value.as_str() == "Bearer k");
            if fail_from.is_some_and(|f| n >= f) || !auth_ok {
                let status = if auth_ok { fail_status } else { 401 };
                let _ = req.respond(Response::from_string("no").with_status_code(status));
                continue;
            }
            let parsed: Value = serde_json::from_str(&body).unwrap();
            let data: Vec<Value> = parsed["input"]
                .as_array()
                .unwrap()
                .iter()
                .enumerate()
                .map(|(i, t)| json!({ "index": i, "embedding": vector_for(t.as_str().unwrap()) }))
                .collect();
            let header = Header::from_bytes("Content-Type", "application/json").unwrap();
            let _ = req.respond(Response::from_string(json!({ "data": data }).to_string()).with_header(header));
        }
    });
    Stub { url, hits }
}

fn config(url: &str) -> ProviderConfig {
    let mut cfg = ProviderConfig::remote(url);
    cfg.request_batch = 2;
    cfg.backoff_ms = 1;
    cfg.retry_limit = 2;
    cfg
}

fn items(n: u64) -> Vec<(u64, String)> {
    (1..=n).map(|i| (i, format!("text number {i}"))).collect()
}

#[test]
fn three_texts_give_three_vectors() {
    let s = stub(None, 500);
    let p = RemoteProvider::new(config(&s.url), "k").unwrap();
    let out = p.embed(&items(3)).unwrap();
    assert_eq!(out.store.len(), 3);
    assert_eq!(out.store.dim(), DIM);
    assert_eq!(out.store.ids(), &[1, 2, 3]);
    assert_eq!(out.store.get(2).unwrap(), vector_for("text number 2").as_slice());
}

#[test]
fn empty_input_makes_no_requests() {
    let s = stub(None, 500);
    let p = RemoteProvider::new(config(&s.url), "k").unwrap();
    let out = p.embed(&[]).unwrap();
    assert!(out.store.is_empty());
    assert_eq!(p.requests_made(), 0);
    assert_eq!(s.hits.load(Ordering::SeqCst), 0);
}

#[test]
fn second_run_is_served_from_cache() {
    let s = stub(None, 500);
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache.emb");
    let first = RemoteProvider::new(config(&s.url), "k").unwrap().with_cache(&cache);
    let a = first.embed(&items(5)).unwrap();
    assert_eq!(first.requests_made(), 3);

    let second = RemoteProvider::new(config(&s.url), "k").unwrap().with_cache(&cache);
    let b = second.embed(&items(5)).unwrap();
    assert_eq!(second.requests_made(), 0);
    assert_eq!(a.store, b.store);

    // cache holds exactly the served vectors
    let cached = load_store(&cache).unwrap();
    for (id, text) in items(5) {
        assert_eq!(cached.get(id).unwrap(), vector_for(&text).as_slice());
    }
}

#[test]
fn fatal_status_aborts_and_keeps_partial_cache() {
    let s = stub(Some(1), 400);
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache.emb");
    let mut cfg = config(&s.url);
    cfg.max_concurrency = 1;
    let p = RemoteProvider::new(cfg, "k").unwrap().with_cache(&cache);
    let err = p.embed(&items(6)).unwrap_err();
    assert!(matches!(err, Error::Http(_)), "{err:?}");
    assert_eq!(p.requests_made(), 2);
    assert_eq!(s.hits.load(Ordering::SeqCst), 2);
    let cached = load_store(&cache).unwrap();
    assert_eq!(cached.ids(), &[1, 2]);
}

#[test]
fn retryable_status_is_retried_then_fails() {
    let s = stub(Some(0), 503);
    let p = RemoteProvider::new(config(&s.url), "k").unwrap();
    let err = p.embed(&items(1)).unwrap_err();
    assert!(matches!(err, Error::Http(_)));
    assert_eq!(p.requests_made(), 3);
}

#[test]
fn missing_credential_is_a_config_error() {
    let err = RemoteProvider::new(config("http://127.0.0.1:9"), "").err().unwrap();
    assert!(matches!(err, Error::Config(_)));
    assert_eq!(err.class(), "config");
}

#[test]
fn cache_from_other_provider_is_rejected() {
    let s = stub(None, 500);
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache.emb");
    RemoteProvider::new(config(&s.url), "k").unwrap().with_cache(&cache).embed(&items(2)).unwrap();
    let mut other = config(&s.url);
    other.model_name = "another-model".into();
    let err = RemoteProvider::new(other, "k").unwrap().with_cache(&cache).embed(&items(2)).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
}
