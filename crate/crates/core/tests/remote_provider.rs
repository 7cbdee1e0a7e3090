use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;

use degsel_core::model_space::{FamilyLabel, HierarchyId, HierarchyLabel, TrendLabel};
use degsel_core::rcrus::{DecisionProvider, HeuristicProvider};
use degsel_core::remote::{RemoteConfig, RemoteProvider};
use degsel_core::sim::{generate, ProcessKind, SimParams};
use degsel_core::trajectory::Trajectory;

/// Serves scripted replies in order (the last one repeats) and records
/// request bodies.
struct MockServer {
    url: String,
    hits: Arc<AtomicUsize>,
    bodies: Arc<Mutex<Vec<String>>>,
}

fn serve(replies: &[&str]) -> MockServer {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/generate", listener.local_addr().unwrap());
    let replies: Vec<String> = replies.iter().map(|s| s.to_string()).collect();
    let hits = Arc::new(AtomicUsize::new(0));
    let bodies = Arc::new(Mutex::new(Vec::new()));
    let (h, b) = (hits.clone(), bodies.clone());
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap_or(0);
                }
            }
            let mut body = vec![0; len];
            let _ = reader.read_exact(&mut body);
            b.lock()
                .unwrap()
                .push(String::from_utf8_lossy(&body).into_owned());
            let i = h.fetch_add(1, Ordering::SeqCst);
            let text = &replies[i.min(replies.len() - 1)];
            let payload = serde_json::json!({ "text": text }).to_string();
            let _ = write!(
                stream,
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                payload.len(),
                payload
            );
        }
    });
    MockServer { url, hits, bodies }
}

fn provider(url: &str) -> RemoteProvider {
    RemoteProvider::new(
        RemoteConfig {
            timeout_secs: 5.0,
            ..RemoteConfig::new(url)
        },
        HeuristicProvider::default(),
    )
}

fn path() -> Trajectory {
    generate(&SimParams::default_for(ProcessKind::HomogGamma, 8), "u")
        .unwrap()
        .trajectory
}

#[test]
fn well_formed_reply_is_parsed_and_cached() {
    let server = serve(&["W 0.9"]);
    let p = provider(&server.url);
    let t = path();
    let a = p.decide(HierarchyId::F, &t, "gearbox", None);
    assert_eq!(a.label, HierarchyLabel::Family(FamilyLabel::W));
    assert_eq!(a.confidence, 0.9);
    assert!(a.note.is_none());
    let again = p.decide(HierarchyId::F, &t, "gearbox", None);
    assert_eq!(again, a);
    assert_eq!(server.hits.load(Ordering::SeqCst), 1);
    assert_eq!(p.cached_len(), 1);

    let body: serde_json::Value = serde_json::from_str(&server.bodies.lock().unwrap()[0]).unwrap();
    assert!(body["prompt"].as_str().unwrap().contains("gearbox"));
    assert!(body["max_tokens"].as_u64().unwrap() > 0);
}

#[test]
fn malformed_twice_falls_back_to_heuristic() {
    let server = serve(&["banana"]);
    let p = provider(&server.url);
    let t = path();
    let a = p.decide(HierarchyId::F, &t, "", None);
    let internal = HeuristicProvider::default().family(&t);
    assert_eq!(a.label, internal.label);
    assert_eq!(a.confidence, internal.confidence);
    assert!(a.note.unwrap().contains("malformed"));
    assert_eq!(server.hits.load(Ordering::SeqCst), 2);
    assert_eq!(p.cached_len(), 0);
}

#[test]
fn malformed_then_valid_uses_the_retry() {
    let server = serve(&["I think", "NL 0.75"]);
    let a = provider(&server.url).decide(HierarchyId::T, &path(), "", None);
    assert_eq!(a.label, HierarchyLabel::Trend(TrendLabel::NL));
    assert_eq!(a.confidence, 0.75);
    assert_eq!(server.hits.load(Ordering::SeqCst), 2);
}

#[test]
fn out_of_range_confidence_is_clamped() {
    let server = serve(&["G 1.7"]);
    let a = provider(&server.url).decide(HierarchyId::F, &path(), "", None);
    assert_eq!(a.label, HierarchyLabel::Family(FamilyLabel::G));
    assert_eq!(a.confidence, 1.0);
    assert!(a.note.unwrap().contains("clamped"));
}

#[test]
fn unreachable_endpoint_falls_back() {
    let addr = {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap()
    };
    let p = provider(&format!("http://{addr}/generate"));
    let a = p.decide(HierarchyId::F, &path(), "", None);
    assert!(a.note.unwrap().contains("request failed"));
}

#[test]
fn concurrent_decisions_share_the_cache() {
    let server = serve(&["G 0.8", "L 0.7"]);
    let p = Arc::new(provider(&server.url));
    let t = path();
    let handles: Vec<_> = (0..8)
        .map(|i| {
            let (p, t) = (p.clone(), t.clone());
            thread::spawn(move || {
                let h = if i % 2 == 0 {
                    HierarchyId::F
                } else {
                    HierarchyId::T
                };
                p.decide(h, &t, "wear", None)
            })
        })
        .collect();
    for h in handles {
        let a = h.join().unwrap();
        assert!(a.confidence >= 0.5);
    }
    assert!(p.cached_len() <= 2);
}
