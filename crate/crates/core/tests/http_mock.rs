use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use agent3d::vlm::{CacheBackend, ChatRequest, HttpBackend, HttpConfig, UserPart, VlmBackend};
use agent3d::Error;
use image::RgbImage;
use serde_json::Value;

#[derive(Debug, Clone)]
struct Seen {
    headers: Vec<String>,
    body: Value,
}

/// Serves the canned (status, extra headers, body) responses in order, one
/// per connection, and records each request.
fn mock(responses: Vec<(u16, &'static str, String)>) -> (String, Arc<Mutex<Vec<Seen>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    thread::spawn(move || {
        for (status, extra, body) in responses {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream);
            let mut headers = Vec::new();
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end().to_string();
                if line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                headers.push(line);
            }
            let mut buf = vec![0u8; len];
            reader.read_exact(&mut buf).unwrap();
            log.lock().unwrap().push(Seen {
                headers,
                body: serde_json::from_slice(&buf).unwrap_or(Value::Null),
            });
            let mut stream = reader.into_inner();
            let reply = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n{extra}\r\n{body}",
                body.len()
            );
            stream.write_all(reply.as_bytes()).unwrap();
            stream.flush().unwrap();
        }
    });
    (format!("http://{addr}/v1/chat/completions"), seen)
}

fn ok_body(text: &str) -> String {
    serde_json::json!({
        "choices": [{"message": {"role": "assistant", "content": text}}],
        "usage": {"prompt_tokens": 11, "completion_tokens": 3}
    })
    .to_string()
}

fn config(endpoint: String) -> HttpConfig {
    HttpConfig {
        endpoint,
        api_key: Some("test-key".into()),
        timeout: Duration::from_secs(5),
        max_retries: 3,
        backoff_base: Duration::from_millis(10),
        ..HttpConfig::default()
    }
}

fn request() -> ChatRequest {
    let img = Arc::new(RgbImage::from_pixel(4, 4, image::Rgb([10, 200, 30])));
    ChatRequest::new("system text", vec![UserPart::Image(img), UserPart::Text("(0, 0) front?".into())])
}

#[test]
fn retries_rate_limits_and_server_errors() {
    let (url, seen) = mock(vec![
        (429, "Retry-After: 0\r\n", "{}".into()),
        (503, "", "{}".into()),
        (200, "", ok_body("(1, 2) left")),
    ]);
    let backend = HttpBackend::new(config(url)).unwrap();
    let reply = backend.complete(&request()).unwrap();
    assert_eq!(reply.text, "(1, 2) left");
    assert_eq!(reply.usage.unwrap().prompt_tokens, 11);
    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 3);
    assert!(seen[0].headers.iter().any(|h| h == "authorization: Bearer test-key" || h == "Authorization: Bearer test-key"));
    let body = &seen[2].body;
    assert_eq!(body["temperature"], 0.0);
    assert_eq!(body["messages"][0]["role"], "system");
    let parts = body["messages"][1]["content"].as_array().unwrap();
    assert!(parts[0]["image_url"]["url"].as_str().unwrap().starts_with("data:image/png;base64,"));
    assert_eq!(parts[1]["text"], "(0, 0) front?");
}

#[test]
fn client_errors_are_not_retried() {
    let (url, seen) = mock(vec![(400, "", "{\"error\": \"bad\"}".into())]);
    let backend = HttpBackend::new(config(url)).unwrap();
    let err = backend.complete(&request()).unwrap_err();
    assert!(matches!(err, Error::Http(ref m) if m.contains("400")), "{err}");
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn gives_up_after_max_retries() {
    let (url, seen) = mock(vec![(500, "", "{}".into()), (502, "", "{}".into()), (503, "", "{}".into())]);
    let backend = HttpBackend::new(HttpConfig {
        max_retries: 2,
        ..config(url)
    })
    .unwrap();
    assert!(matches!(backend.complete(&request()), Err(Error::Http(_))));
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn cache_serves_repeats_without_network() {
    let (url, seen) = mock(vec![(200, "", ok_body("cached answer"))]);
    let dir = tempfile::tempdir().unwrap();
    let cache = CacheBackend::new(HttpBackend::new(config(url.clone())).unwrap(), dir.path()).unwrap();
    assert_eq!(cache.complete(&request()).unwrap().text, "cached answer");
    assert_eq!(cache.complete(&request()).unwrap().text, "cached answer");
    assert_eq!((cache.hits(), cache.misses()), (1, 1));

    // a fresh process-level cache over the same directory stays offline too
    let again = CacheBackend::new(HttpBackend::new(config(url)).unwrap(), dir.path()).unwrap();
    assert_eq!(again.complete(&request()).unwrap().text, "cached answer");
    assert_eq!((again.hits(), again.misses()), (1, 0));
    assert_eq!(seen.lock().unwrap().len(), 1);
}
