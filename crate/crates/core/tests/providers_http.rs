#![cfg(feature = "http")]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;

use ikb_core::providers::http::{HttpChat, HttpEmbedder};
use ikb_core::providers::*;

/// Minimal HTTP/1.1 server replying with `statuses` in turn (then 200s).
fn fake_server(statuses: Vec<u16>, body: &'static str) -> (String, Arc<AtomicUsize>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let hits = Arc::new(AtomicUsize::new(0));
    let h = hits.clone();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let mut stream = stream.unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap() == 0 || line == "\r\n" {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            let k = h.fetch_add(1, Ordering::SeqCst);
            let status = statuses.get(k).copied().unwrap_or(200);
            let payload = if status == 200 { body } else { "{}" };
            let resp = format!(
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{payload}",
                payload.len()
            );
            stream.write_all(resp.as_bytes()).unwrap();
        }
    });
    (format!("http://{addr}/v1"), hits)
}

fn cfg(endpoint: &str) -> ProviderConfig {
    ProviderConfig {
        mode: ProviderMode::Http,
        endpoint: Some(endpoint.to_string()),
        model: Some("test-model".into()),
        backoff_base_s: 0.01,
        max_retries: 3,
        timeout_s: 5.0,
        ..Default::default()
    }
}

#[test]
fn retries_through_rate_limits() {
    let (url, hits) = fake_server(vec![429, 429], r#"{"choices":[{"message":{"role":"assistant","content":"hello"}}]}"#);
    let chat = HttpChat::new(Role::Parser, cfg(&url)).unwrap();
    let x = chat.chat(&ChatRequest::text(Role::Parser, "sys", "hi")).unwrap();
    assert_eq!(x.reply, "hello");
    assert_eq!(x.attempts, 3);
    assert_eq!(hits.load(Ordering::SeqCst), 3);
}

#[test]
fn gives_up_after_max_retries() {
    let (url, hits) = fake_server(vec![503; 10], "{}");
    let chat = HttpChat::new(Role::Verifier, cfg(&url)).unwrap();
    let err = chat.chat(&ChatRequest::text(Role::Verifier, "sys", "hi")).unwrap_err();
    assert!(matches!(err, ProviderError::Unavailable { attempts: 4, .. }), "{err}");
    assert_eq!(hits.load(Ordering::SeqCst), 4);
}

#[test]
fn unresolvable_host_is_unavailable() {
    let mut c = cfg("http://nonexistent.invalid/v1");
    c.max_retries = 1;
    let chat = HttpChat::new(Role::Summarizer, c).unwrap();
    let err = chat.chat(&ChatRequest::text(Role::Summarizer, "sys", "hi")).unwrap_err();
    assert!(matches!(err, ProviderError::Unavailable { attempts: 2, .. }), "{err}");
}

#[test]
fn embeddings_endpoint() {
    let (url, _) = fake_server(vec![], r#"{"data":[{"embedding":[3.0, 4.0]}]}"#);
    let e = HttpEmbedder::new(cfg(&url), 2).unwrap();
    let v = e.embed("chair").unwrap();
    assert!((v[0] - 0.6).abs() < 1e-6 && (v[1] - 0.8).abs() < 1e-6);
    let wrong = HttpEmbedder::new(cfg(&url), 3).unwrap();
    assert!(matches!(wrong.embed("chair"), Err(ProviderError::DimensionMismatch { .. })));
}
