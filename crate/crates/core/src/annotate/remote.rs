//! Client for a remote genre / topic / persuasion classification service.
//!
//! Contract: three endpoints under a base URL, each taking `POST {"text": str}`:
//! `/genre` -> `{"genre": str}`, `/topic` -> `{"topic": str | int}`,
//! `/persuasion` -> `{"spans": [{"technique": str, "start": int, "end": int}]}`.
//! Transport failures, timeouts, HTTP 429 and 5xx are retried with exponential backoff;
//! other statuses and unparsable bodies are protocol errors.

use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{ConceptAnnotation, TechniqueRegistry, NUM_FINE};
use crate::error::{Error, Result};

/// Environment variable holding the service credential. Never read from config files.
pub const TOKEN_ENV: &str = "PROPDET_ANNOTATOR_TOKEN";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnotatorEndpoint {
    pub base_url: String,
    #[serde(skip)]
    pub token: Option<String>,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub rate_limit_per_sec: f64,
    pub backoff_base_ms: u64,
    pub backoff_max_ms: u64,
    /// Maximum in-flight requests when annotating many articles.
    pub concurrency: usize,
}

impl Default for AnnotatorEndpoint {
    fn default() -> Self {
        AnnotatorEndpoint {
            base_url: String::new(),
            token: None,
            timeout_ms: 30_000,
            max_retries: 5,
            rate_limit_per_sec: 2.0,
            backoff_base_ms: 500,
            backoff_max_ms: 30_000,
            concurrency: 2,
        }
    }
}

impl AnnotatorEndpoint {
    pub fn new(base_url: impl Into<String>) -> Self {
        AnnotatorEndpoint {
            base_url: base_url.into(),
            ..Default::default()
        }
    }

    pub fn with_token_from_env(mut self) -> Self {
        self.token = std::env::var(TOKEN_ENV).ok().filter(|t| !t.is_empty());
        self
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let ms = self.backoff_base_ms.saturating_mul(1u64 << attempt.min(20));
        Duration::from_millis(ms.min(self.backoff_max_ms))
    }
}

/// Spaces request starts at least `1 / rate` seconds apart across threads.
#[derive(Debug)]
struct RateLimiter {
    interval: Duration,
    next: Mutex<Instant>,
}

impl RateLimiter {
    fn new(per_sec: f64) -> Self {
        let interval = if per_sec > 0.0 && per_sec.is_finite() {
            Duration::from_secs_f64(1.0 / per_sec)
        } else {
            Duration::ZERO
        };
        RateLimiter {
            interval,
            next: Mutex::new(Instant::now()),
        }
    }

    fn acquire(&self) {
        let wait = {
            let mut next = self.next.lock().expect("rate limiter");
            let now = Instant::now();
            let slot = (*next).max(now);
            *next = slot + self.interval;
            slot - now
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

#[derive(Debug, Deserialize)]
struct GenreReply {
    genre: String,
}

#[derive(Debug, Deserialize)]
struct TopicReply {
    topic: serde_json::Value,
}

#[derive(Debug, Deserialize)]
struct Span {
    technique: String,
    #[allow(dead_code)]
    start: i64,
    #[allow(dead_code)]
    end: i64,
}

#[derive(Debug, Deserialize)]
struct PersuasionReply {
    spans: Vec<Span>,
}

pub struct RemoteAnnotator {
    endpoint: AnnotatorEndpoint,
    registry: TechniqueRegistry,
    agent: ureq::Agent,
    limiter: RateLimiter,
    retries: AtomicU64,
}

impl RemoteAnnotator {
    pub fn new(endpoint: AnnotatorEndpoint, registry: &TechniqueRegistry) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(endpoint.timeout_ms)))
            .http_status_as_error(false)
            .build();
        RemoteAnnotator {
            limiter: RateLimiter::new(endpoint.rate_limit_per_sec),
            agent: ureq::Agent::new_with_config(config),
            registry: registry.clone(),
            endpoint,
            retries: AtomicU64::new(0),
        }
    }

    pub fn id(&self) -> String {
        format!("remote:{}", self.endpoint.base_url.trim_end_matches('/'))
    }

    pub fn registry(&self) -> &TechniqueRegistry {
        &self.registry
    }

    /// Retries performed since construction.
    pub fn retries(&self) -> u64 {
        self.retries.load(Ordering::SeqCst)
    }

    fn call<T: DeserializeOwned>(&self, path: &str, text: &str) -> Result<T> {
        let url = format!("{}/{}", self.endpoint.base_url.trim_end_matches('/'), path);
        let body = serde_json::json!({ "text": text });
        let mut attempt = 0u32;
        loop {
            self.limiter.acquire();
            let mut req = self.agent.post(&url);
            if let Some(token) = &self.endpoint.token {
                req = req.header("Authorization", &format!("Bearer {token}"));
            }
            let failure = match req.send_json(&body) {
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    if (200..300).contains(&status) {
                        return resp
                            .body_mut()
                            .read_json::<T>()
                            .map_err(|e| Error::Protocol(format!("{url}: {e}")));
                    }
                    if status != 429 && status < 500 {
                        return Err(Error::Protocol(format!("{url}: HTTP {status}")));
                    }
                    format!("{url}: HTTP {status}")
                }
                Err(e) => format!("{url}: {e}"),
            };
            if attempt >= self.endpoint.max_retries {
                return Err(Error::Network(format!("{failure} (gave up after {attempt} retries)")));
            }
            let delay = self.endpoint.backoff(attempt);
            attempt += 1;
            self.retries.fetch_add(1, Ordering::SeqCst);
            log::warn!("{failure}; retry {attempt}/{} in {delay:?}", self.endpoint.max_retries);
            std::thread::sleep(delay);
        }
    }

    pub fn annotate(&self, text: &str) -> Result<ConceptAnnotation> {
        let genre: GenreReply = self.call("genre", text)?;
        let genre = self.registry.genre(&genre.genre).ok_or(Error::TaxonomyMismatch {
            kind: "genre",
            label: genre.genre,
        })?;

        let topic: TopicReply = self.call("topic", text)?;
        let topic_label = match &topic.topic {
            serde_json::Value::String(s) => s.clone(),
            other => other.to_string(),
        };
        let topic = self.registry.topic_index(&topic_label).ok_or(Error::TaxonomyMismatch {
            kind: "topic",
            label: topic_label,
        })?;

        let spans: PersuasionReply = self.call("persuasion", text)?;
        let mut fine = vec![0u32; NUM_FINE];
        for span in spans.spans {
            let i = self.registry.fine_index(&span.technique).ok_or(Error::TaxonomyMismatch {
                kind: "technique",
                label: span.technique,
            })?;
            fine[i] += 1;
        }
        ConceptAnnotation::from_fine(genre, topic, fine, &self.registry)
    }

    /// Annotates `(id, text)` items with up to `endpoint.concurrency` requests in flight.
    /// Results come back in input order.
    pub fn annotate_many(&self, items: &[(String, String)]) -> Vec<(String, Result<ConceptAnnotation>)> {
        let workers = self.endpoint.concurrency.clamp(1, items.len().max(1));
        let next = AtomicUsize::new(0);
        let slots: Vec<Mutex<Option<Result<ConceptAnnotation>>>> = items.iter().map(|_| Mutex::new(None)).collect();
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some((_, text)) = items.get(i) else { break };
                    *slots[i].lock().expect("slot") = Some(self.annotate(text));
                });
            }
        });
        items
            .iter()
            .zip(slots)
            .map(|((id, _), slot)| {
                let r = slot.into_inner().expect("slot").expect("every item visited");
                (id.clone(), r)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::super::stub::{StubResponse, StubServer};
    use super::*;
    use std::sync::atomic::AtomicUsize;
    use std::sync::Arc;

    fn fast(url: String) -> AnnotatorEndpoint {
        AnnotatorEndpoint {
            base_url: url,
            timeout_ms: 5_000,
            max_retries: 4,
            rate_limit_per_sec: 0.0,
            backoff_base_ms: 1,
            backoff_max_ms: 10,
            ..Default::default()
        }
    }

    fn service(technique: &'static str) -> impl Fn(&super::super::stub::StubRequest) -> StubResponse {
        move |req| match req.path.as_str() {
            "/genre" => StubResponse::ok(r#"{"genre":"Opinion"}"#),
            "/topic" => StubResponse::ok(r#"{"topic":3}"#),
            "/persuasion" => StubResponse::ok(format!(
                r#"{{"spans":[{{"technique":"{technique}","start":0,"end":5}}]}}"#
            )),
            _ => StubResponse::status(404),
        }
    }

    #[test]
    fn single_span_echo() {
        let server = StubServer::start(service("Loaded_Language")).unwrap();
        let reg = TechniqueRegistry::default();
        let client = RemoteAnnotator::new(fast(server.url()), &reg);
        let a = client.annotate("some text").unwrap();
        assert_eq!(a.genre, super::super::Genre::Opinion);
        assert_eq!(a.topic, 3);
        let ll = reg.fine_index("Loaded_Language").unwrap();
        for (i, &c) in a.persuasion_fine.iter().enumerate() {
            assert_eq!(c, u32::from(i == ll));
        }
        assert_eq!(server.hits(), 3);
        assert!(server.requests()[0].body.contains("some text"));
    }

    #[test]
    fn retries_through_rate_limiting() {
        let failures = Arc::new(AtomicUsize::new(0));
        let inner = service("Loaded_Language");
        let f = failures.clone();
        let server = StubServer::start(move |req| {
            if f.fetch_add(1, Ordering::SeqCst) < 3 {
                StubResponse::status(429)
            } else {
                inner(req)
            }
        })
        .unwrap();
        let client = RemoteAnnotator::new(fast(server.url()), &TechniqueRegistry::default());
        assert!(client.annotate("x").is_ok());
        assert_eq!(client.retries(), 3);
    }

    #[test]
    fn retry_budget_exhausted_is_network_error() {
        let server = StubServer::start(|_| StubResponse::status(503)).unwrap();
        let mut ep = fast(server.url());
        ep.max_retries = 2;
        let client = RemoteAnnotator::new(ep, &TechniqueRegistry::default());
        assert!(matches!(client.annotate("x"), Err(Error::Network(_))));
        assert_eq!(server.hits(), 3);
    }

    #[test]
    fn unknown_technique_is_taxonomy_mismatch() {
        let server = StubServer::start(service("Foo")).unwrap();
        let client = RemoteAnnotator::new(fast(server.url()), &TechniqueRegistry::default());
        match client.annotate("x") {
            Err(Error::TaxonomyMismatch { label, .. }) => assert_eq!(label, "Foo"),
            other => panic!("expected taxonomy mismatch, got {other:?}"),
        }
    }

    #[test]
    fn garbage_body_and_client_errors_are_protocol_errors() {
        let server = StubServer::start(|_| StubResponse::ok("not json")).unwrap();
        let client = RemoteAnnotator::new(fast(server.url()), &TechniqueRegistry::default());
        assert!(matches!(client.annotate("x"), Err(Error::Protocol(_))));
        let server = StubServer::start(|_| StubResponse::status(401)).unwrap();
        let client = RemoteAnnotator::new(fast(server.url()), &TechniqueRegistry::default());
        assert!(matches!(client.annotate("x"), Err(Error::Protocol(_))));
        assert_eq!(client.retries(), 0);
    }

    #[test]
    fn token_sent_as_bearer() {
        let server = StubServer::start(service("Repetition")).unwrap();
        let mut ep = fast(server.url());
        ep.token = Some("s3cret".into());
        RemoteAnnotator::new(ep, &TechniqueRegistry::default()).annotate("x").unwrap();
        assert_eq!(server.requests()[0].authorization.as_deref(), Some("Bearer s3cret"));
    }

    #[test]
    fn many_articles_keep_input_order() {
        let server = StubServer::start(service("Slogans")).unwrap();
        let mut ep = fast(server.url());
        ep.concurrency = 3;
        let client = RemoteAnnotator::new(ep, &TechniqueRegistry::default());
        let items: Vec<_> = (0..7).map(|i| (format!("a{i}"), format!("text {i}"))).collect();
        let out = client.annotate_many(&items);
        let ids: Vec<_> = out.iter().map(|(id, _)| id.as_str()).collect();
        assert_eq!(ids, ["a0", "a1", "a2", "a3", "a4", "a5", "a6"]);
        assert!(out.iter().all(|(_, r)| r.is_ok()));
        assert_eq!(server.hits(), 21);
    }

    #[test]
    fn rate_limit_spaces_requests() {
        let server = StubServer::start(service("Slogans")).unwrap();
        let mut ep = fast(server.url());
        ep.rate_limit_per_sec = 50.0;
        let client = RemoteAnnotator::new(ep, &TechniqueRegistry::default());
        let t = Instant::now();
        client.annotate("x").unwrap();
        client.annotate("y").unwrap();
        // six requests, five enforced gaps of 20ms
        assert!(t.elapsed() >= Duration::from_millis(100));
    }
}
