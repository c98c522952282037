//! HTTP backend behavior against a scripted local server: payload shape,
//! retry with backoff, error surfacing, and the in-flight concurrency cap.

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use kgalign::bridge::{Backend, BackendError, HttpBackend, HttpConfig, RenderedPrompt};

#[derive(Clone, Copy)]
enum Behavior {
    /// Respond 200 after a delay.
    Ok { delay_ms: u64 },
    /// Fail the first `n` requests with 500, then succeed.
    FailFirst { n: usize },
    /// Always fail with 500 and a fixed body.
    AlwaysFail,
}

#[derive(Default)]
struct Stats {
    hits: AtomicUsize,
    in_flight: AtomicUsize,
    max_in_flight: AtomicUsize,
    bad_payloads: AtomicUsize,
    missing_auth: AtomicUsize,
}

struct Server {
    addr: String,
    stats: Arc<Stats>,
}

fn respond(stream: &mut TcpStream, status: &str, body: &str) {
    let resp = format!(
        "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    let _ = stream.write_all(resp.as_bytes());
    let _ = stream.flush();
}

fn read_request(stream: &mut TcpStream) -> (String, String) {
    let mut buf = Vec::new();
    let mut chunk = [0u8; 1024];
    let header_end;
    loop {
        let n = stream.read(&mut chunk).unwrap_or(0);
        if n == 0 {
            return (String::new(), String::new());
        }
        buf.extend_from_slice(&chunk[..n]);
        if let Some(pos) = buf.windows(4).position(|w| w == b"\r\n\r\n") {
            header_end = pos + 4;
            break;
        }
    }
    let headers = String::from_utf8_lossy(&buf[..header_end]).to_string();
    let content_length: usize = headers
        .lines()
        .find_map(|l| {
            let (k, v) = l.split_once(':')?;
            k.eq_ignore_ascii_case("content-length")
                .then(|| v.trim().parse().ok())?
        })
        .unwrap_or(0);
    let mut body = buf[header_end..].to_vec();
    while body.len() < content_length {
        let n = stream.read(&mut chunk).unwrap_or(0);
        if n == 0 {
            break;
        }
        body.extend_from_slice(&chunk[..n]);
    }
    (headers, String::from_utf8_lossy(&body).to_string())
}

/// Expect auth when `expect_token` is set; count payload violations instead
/// of panicking inside the server thread.
fn spawn_server(behavior: Behavior, expect_token: Option<&'static str>) -> Server {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let stats = Arc::new(Stats::default());
    let stats_bg = stats.clone();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let stats = stats_bg.clone();
            std::thread::spawn(move || {
                let hit = stats.hits.fetch_add(1, Ordering::SeqCst);
                let now = stats.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
                stats.max_in_flight.fetch_max(now, Ordering::SeqCst);

                let (headers, body) = read_request(&mut stream);
                let payload: serde_json::Value =
                    serde_json::from_str(&body).unwrap_or(serde_json::Value::Null);
                let n = payload["n"].as_u64().unwrap_or(1) as usize;
                let ok_shape = payload["model"].is_string()
                    && payload["temperature"] == 0
                    && payload["messages"][0]["role"] == "system"
                    && payload["messages"][1]["role"] == "user";
                if !ok_shape {
                    stats.bad_payloads.fetch_add(1, Ordering::SeqCst);
                }
                if let Some(token) = expect_token {
                    let want = format!("Bearer {token}");
                    if !headers.lines().any(|l| l.contains(&want)) {
                        stats.missing_auth.fetch_add(1, Ordering::SeqCst);
                    }
                }

                match behavior {
                    Behavior::Ok { delay_ms } => {
                        std::thread::sleep(Duration::from_millis(delay_ms));
                        let choices: Vec<serde_json::Value> = (0..n)
                            .map(|i| {
                                serde_json::json!({"message": {"content": format!("answer {i}")}})
                            })
                            .collect();
                        let body =
                            serde_json::to_string(&serde_json::json!({ "choices": choices }))
                                .unwrap();
                        respond(&mut stream, "200 OK", &body);
                    }
                    Behavior::FailFirst { n: first } => {
                        if hit < first {
                            respond(&mut stream, "500 Internal Server Error", "transient");
                        } else {
                            let body = serde_json::to_string(&serde_json::json!({
                                "choices": [{"message": {"content": "recovered"}}]
                            }))
                            .unwrap();
                            respond(&mut stream, "200 OK", &body);
                        }
                    }
                    Behavior::AlwaysFail => {
                        respond(&mut stream, "500 Internal Server Error", "synthetic meltdown");
                    }
                }
                stats.in_flight.fetch_sub(1, Ordering::SeqCst);
            });
        }
    });
    Server { addr, stats }
}

fn backend_for(server: &Server, concurrency: usize, retries: u32, auth_env: &str) -> HttpBackend {
    HttpBackend::new(HttpConfig {
        endpoint: server.addr.clone(),
        model: "test-model".into(),
        auth_env: auth_env.into(),
        timeout: Duration::from_secs(5),
        max_retries: retries,
        concurrency,
        initial_backoff: Duration::from_millis(10),
        soft_dim: 8,
    })
    .unwrap()
}

fn prompt() -> RenderedPrompt {
    RenderedPrompt::new("system text", "user text")
}

#[test]
fn payload_shape_and_auth_header_are_correct() {
    let server = spawn_server(Behavior::Ok { delay_ms: 0 }, Some("sekret-token"));
    std::env::set_var("KGALIGN_TEST_TOKEN_A", "sekret-token");
    let backend = backend_for(&server, 2, 0, "KGALIGN_TEST_TOKEN_A");
    let out = backend.generate(&prompt(), &[], 3).unwrap();
    assert_eq!(out.len(), 3);
    assert_eq!(out[0].text, "answer 0");
    assert!(out[0].score > out[1].score, "rank order preserved");
    assert_eq!(server.stats.bad_payloads.load(Ordering::SeqCst), 0);
    assert_eq!(server.stats.missing_auth.load(Ordering::SeqCst), 0);
}

#[test]
fn transient_failures_are_retried_with_backoff() {
    let server = spawn_server(Behavior::FailFirst { n: 2 }, None);
    let backend = backend_for(&server, 2, 3, "KGALIGN_TEST_TOKEN_B");
    let started = std::time::Instant::now();
    let out = backend.generate(&prompt(), &[], 1).unwrap();
    assert_eq!(out[0].text, "recovered");
    // Two retries with 10ms then 20ms backoff.
    assert!(started.elapsed() >= Duration::from_millis(30));
    assert_eq!(server.stats.hits.load(Ordering::SeqCst), 3);
}

#[test]
fn exhausted_retries_surface_the_final_error_verbatim() {
    let server = spawn_server(Behavior::AlwaysFail, None);
    let backend = backend_for(&server, 2, 2, "KGALIGN_TEST_TOKEN_C");
    match backend.generate(&prompt(), &[], 1) {
        Err(BackendError::Exhausted { attempts, last }) => {
            assert_eq!(attempts, 3);
            assert!(last.contains("synthetic meltdown"), "last error: {last}");
            assert!(last.contains("500"));
        }
        other => panic!("expected Exhausted, got {other:?}"),
    }
    assert_eq!(server.stats.hits.load(Ordering::SeqCst), 3);
}

#[test]
fn in_flight_requests_never_exceed_the_limit() {
    let server = spawn_server(Behavior::Ok { delay_ms: 120 }, None);
    let backend = Arc::new(backend_for(&server, 3, 0, "KGALIGN_TEST_TOKEN_D"));
    let mut handles = Vec::new();
    for _ in 0..9 {
        let b = backend.clone();
        handles.push(std::thread::spawn(move || {
            b.generate(&prompt(), &[], 1).unwrap();
        }));
    }
    for h in handles {
        h.join().unwrap();
    }
    assert_eq!(server.stats.hits.load(Ordering::SeqCst), 9);
    let peak = server.stats.max_in_flight.load(Ordering::SeqCst);
    assert!(peak <= 3, "peak concurrency {peak} exceeded the cap");
}

#[test]
fn score_is_unsupported() {
    let server = spawn_server(Behavior::Ok { delay_ms: 0 }, None);
    let backend = backend_for(&server, 1, 0, "KGALIGN_TEST_TOKEN_E");
    assert!(!backend.supports_score());
    assert!(matches!(
        backend.score(&prompt(), &[], "x"),
        Err(BackendError::ScoreUnsupported(_))
    ));
}
