use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::cache::{CacheKey, ReplyCache};
use super::prompt::PromptTemplate;
use super::{retryable_status, AcquireError};

/// Exponential backoff: the `n`-th retry waits `min(base * 2^n, max)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_retries: usize,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 5,
            base_delay_ms: 500,
            max_delay_ms: 30_000,
        }
    }
}

impl RetryPolicy {
    pub fn delay(&self, retry: usize) -> Duration {
        let factor = 1u64.checked_shl(retry.min(63) as u32).unwrap_or(u64::MAX);
        Duration::from_millis(self.base_delay_ms.saturating_mul(factor).min(self.max_delay_ms))
    }
}

/// Where and how to query. Vendor differences live here, not in code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EndpointConfig {
    /// Full chat-completions URL.
    pub url: String,
    pub model: String,
    /// Environment variable holding the bearer token.
    pub credential_env: String,
    pub temperature: f64,
    pub concurrency: usize,
    pub timeout_secs: u64,
    pub retry: RetryPolicy,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        Self {
            url: "https://api.openai.com/v1/chat/completions".into(),
            model: String::new(),
            credential_env: "VERBSENSE_API_KEY".into(),
            temperature: 0.0,
            concurrency: 4,
            timeout_secs: 120,
            retry: RetryPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ImageInput {
    Bytes { data: Vec<u8>, mime: String },
    Url(String),
}

impl ImageInput {
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        match self {
            ImageInput::Bytes { data, .. } => {
                h.update(b"bytes:");
                h.update(data);
            }
            ImageInput::Url(url) => {
                h.update(b"url:");
                h.update(url.as_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    fn wire_url(&self) -> String {
        match self {
            ImageInput::Bytes { data, mime } => {
                format!(
                    "data:{mime};base64,{}",
                    base64::engine::general_purpose::STANDARD.encode(data)
                )
            }
            ImageInput::Url(url) => url.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransportResponse {
    pub status: u16,
    pub body: String,
}

/// One HTTP POST of a JSON body. `Err` means no response was received.
pub trait Transport: Send + Sync {
    fn post_json(&self, url: &str, headers: &[(&str, String)], body: &str) -> Result<TransportResponse, String>;
}

pub struct HttpTransport {
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self { agent }
    }
}

impl Transport for HttpTransport {
    fn post_json(&self, url: &str, headers: &[(&str, String)], body: &str) -> Result<TransportResponse, String> {
        let mut req = self.agent.post(url).header("Content-Type", "application/json");
        for (name, value) in headers {
            req = req.header(*name, value.as_str());
        }
        let mut resp = req.send(body).map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let body = resp.body_mut().read_to_string().map_err(|e| e.to_string())?;
        Ok(TransportResponse { status, body })
    }
}

/// One image to query in [`ChatClient::fetch_many`].
#[derive(Debug, Clone)]
pub struct FetchJob {
    pub image_id: String,
    pub image: ImageInput,
}

type Sleeper = Box<dyn Fn(Duration) + Send + Sync>;

/// Cache-first chat-completion client.
pub struct ChatClient<T: Transport> {
    config: EndpointConfig,
    transport: T,
    cache: ReplyCache,
    credential: Option<String>,
    sleeper: Sleeper,
    requests: AtomicUsize,
}

impl<T: Transport> ChatClient<T> {
    /// Reads the credential from `config.credential_env`. A missing
    /// credential only fails once a request has to leave the cache.
    pub fn new(config: EndpointConfig, transport: T, cache: ReplyCache) -> Self {
        let credential = std::env::var(&config.credential_env).ok().filter(|s| !s.is_empty());
        Self {
            config,
            transport,
            cache,
            credential,
            sleeper: Box::new(std::thread::sleep),
            requests: AtomicUsize::new(0),
        }
    }

    pub fn with_credential(mut self, credential: impl Into<String>) -> Self {
        self.credential = Some(credential.into());
        self
    }

    pub fn with_sleeper(mut self, sleeper: impl Fn(Duration) + Send + Sync + 'static) -> Self {
        self.sleeper = Box::new(sleeper);
        self
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    /// Requests sent so far, retries included.
    pub fn request_count(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    pub fn cache_key(&self, prompt: &PromptTemplate, image: &ImageInput) -> CacheKey {
        CacheKey::new(&self.config.model, &prompt.digest(), &image.digest())
    }

    pub fn fetch_reply(&self, prompt: &PromptTemplate, image: &ImageInput) -> Result<String, AcquireError> {
        let key = self.cache_key(prompt, image);
        if let Some(hit) = self.cache.get(&key)? {
            return Ok(hit.reply);
        }
        let reply = self.request_with_retries(prompt, image)?;
        Ok(self.cache.put(&key, &self.config.model, &reply)?.reply)
    }

    /// Fetches every job with at most `config.concurrency` requests in
    /// flight. Results come back in job order.
    pub fn fetch_many(&self, prompt: &PromptTemplate, jobs: &[FetchJob]) -> Vec<Result<String, AcquireError>> {
        let slots: Vec<Mutex<Option<Result<String, AcquireError>>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        let workers = self.config.concurrency.max(1).min(jobs.len().max(1));
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(job) = jobs.get(i) else { break };
                    let result = self.fetch_reply(prompt, &job.image);
                    if let Err(e) = &result {
                        log::warn!("image {}: {e}", job.image_id);
                    }
                    *slots[i].lock().unwrap() = Some(result);
                });
            }
        });
        slots
            .into_iter()
            .map(|m| m.into_inner().unwrap().expect("every job ran"))
            .collect()
    }

    fn request_body(&self, prompt: &PromptTemplate, image: &ImageInput) -> String {
        serde_json::json!({
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": [{
                "role": "user",
                "content": [
                    {"type": "text", "text": prompt.text()},
                    {"type": "image_url", "image_url": {"url": image.wire_url()}},
                ],
            }],
        })
        .to_string()
    }

    fn request_with_retries(&self, prompt: &PromptTemplate, image: &ImageInput) -> Result<String, AcquireError> {
        let credential = self
            .credential
            .as_ref()
            .ok_or_else(|| AcquireError::MissingCredential(self.config.credential_env.clone()))?;
        let body = self.request_body(prompt, image);
        let headers = [("Authorization", format!("Bearer {credential}"))];
        let policy = &self.config.retry;
        let mut attempt = 0;
        loop {
            self.requests.fetch_add(1, Ordering::SeqCst);
            let failure = match self.transport.post_json(&self.config.url, &headers, &body) {
                Ok(r) if (200..300).contains(&r.status) => return extract_content(&r.body),
                Ok(r) if r.status == 401 || r.status == 403 => {
                    return Err(AcquireError::Auth {
                        status: r.status,
                        body: r.body,
                    })
                }
                Ok(r) => AcquireError::Http {
                    status: r.status,
                    body: r.body,
                },
                Err(e) => AcquireError::Transport(e),
            };
            let retryable = match &failure {
                AcquireError::Http { status, .. } => retryable_status(*status),
                _ => true,
            };
            if !retryable {
                return Err(failure);
            }
            if attempt >= policy.max_retries {
                return Err(AcquireError::RateLimitExhausted {
                    attempts: attempt + 1,
                    last: failure.to_string(),
                });
            }
            let wait = policy.delay(attempt);
            log::info!("retrying in {wait:?} after: {failure}");
            (self.sleeper)(wait);
            attempt += 1;
        }
    }
}

fn extract_content(body: &str) -> Result<String, AcquireError> {
    let v: serde_json::Value = serde_json::from_str(body).map_err(|e| AcquireError::BadReply(e.to_string()))?;
    v.pointer("/choices/0/message/content")
        .and_then(|c| c.as_str())
        .map(str::to_string)
        .ok_or_else(|| AcquireError::BadReply("missing choices[0].message.content".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::VecDeque;
    use std::sync::Arc;

    struct Scripted {
        replies: Mutex<VecDeque<Result<TransportResponse, String>>>,
        bodies: Mutex<Vec<String>>,
    }

    impl Scripted {
        fn new(replies: Vec<Result<TransportResponse, String>>) -> Self {
            Self {
                replies: Mutex::new(replies.into()),
                bodies: Mutex::new(Vec::new()),
            }
        }
    }

    impl Transport for Scripted {
        fn post_json(&self, _: &str, headers: &[(&str, String)], body: &str) -> Result<TransportResponse, String> {
            assert_eq!(headers[0].1, "Bearer secret");
            self.bodies.lock().unwrap().push(body.to_string());
            self.replies.lock().unwrap().pop_front().expect("unexpected request")
        }
    }

    fn ok(content: &str) -> Result<TransportResponse, String> {
        Ok(TransportResponse {
            status: 200,
            body: serde_json::json!({"choices": [{"message": {"content": content}}]}).to_string(),
        })
    }

    fn status(code: u16) -> Result<TransportResponse, String> {
        Ok(TransportResponse {
            status: code,
            body: "{}".into(),
        })
    }

    fn client(
        replies: Vec<Result<TransportResponse, String>>,
        dir: &tempfile::TempDir,
    ) -> (ChatClient<Scripted>, Arc<Mutex<Vec<Duration>>>) {
        let slept = Arc::new(Mutex::new(Vec::new()));
        let log = slept.clone();
        let config = EndpointConfig {
            model: "test-model".into(),
            credential_env: "VERBSENSE_TEST_UNSET_VARIABLE".into(),
            retry: RetryPolicy {
                max_retries: 2,
                base_delay_ms: 100,
                max_delay_ms: 150,
            },
            ..Default::default()
        };
        let c = ChatClient::new(config, Scripted::new(replies), ReplyCache::new(dir.path()))
            .with_credential("secret")
            .with_sleeper(move |d| log.lock().unwrap().push(d));
        (c, slept)
    }

    fn image() -> ImageInput {
        ImageInput::Bytes {
            data: vec![1, 2, 3],
            mime: "image/jpeg".into(),
        }
    }

    #[test]
    fn second_call_is_a_cache_hit() {
        let dir = tempfile::tempdir().unwrap();
        let (c, _) = client(vec![ok("eating, walking")], &dir);
        let p = PromptTemplate::open();
        assert_eq!(c.fetch_reply(&p, &image()).unwrap(), "eating, walking");
        assert_eq!(c.fetch_reply(&p, &image()).unwrap(), "eating, walking");
        assert_eq!(c.request_count(), 1);
    }

    #[test]
    fn rate_limit_then_success_retries_once() {
        let dir = tempfile::tempdir().unwrap();
        let (c, slept) = client(vec![status(429), ok("drawing")], &dir);
        assert_eq!(c.fetch_reply(&PromptTemplate::open(), &image()).unwrap(), "drawing");
        assert_eq!(c.request_count(), 2);
        assert_eq!(*slept.lock().unwrap(), vec![Duration::from_millis(100)]);
    }

    #[test]
    fn bad_credential_is_not_retried() {
        let dir = tempfile::tempdir().unwrap();
        let (c, _) = client(vec![status(401)], &dir);
        let err = c.fetch_reply(&PromptTemplate::open(), &image()).unwrap_err();
        assert!(matches!(err, AcquireError::Auth { status: 401, .. }));
        assert!(!err.is_retryable());
        assert_eq!(c.request_count(), 1);
    }

    #[test]
    fn retries_exhaust_with_capped_backoff() {
        let dir = tempfile::tempdir().unwrap();
        let (c, slept) = client(vec![status(503), Err("reset".into()), status(429)], &dir);
        let err = c.fetch_reply(&PromptTemplate::open(), &image()).unwrap_err();
        assert!(matches!(err, AcquireError::RateLimitExhausted { attempts: 3, .. }));
        assert_eq!(
            *slept.lock().unwrap(),
            vec![Duration::from_millis(100), Duration::from_millis(150)]
        );
    }

    #[test]
    fn client_errors_other_than_auth_fail_fast() {
        let dir = tempfile::tempdir().unwrap();
        let (c, _) = client(vec![status(400)], &dir);
        let err = c.fetch_reply(&PromptTemplate::open(), &image()).unwrap_err();
        assert!(matches!(err, AcquireError::Http { status: 400, .. }));
    }

    #[test]
    fn wire_body_carries_prompt_image_and_zero_temperature() {
        let dir = tempfile::tempdir().unwrap();
        let (c, _) = client(vec![ok("x")], &dir);
        c.fetch_reply(&PromptTemplate::open(), &image()).unwrap();
        let body: serde_json::Value = serde_json::from_str(&c.transport.bodies.lock().unwrap()[0]).unwrap();
        assert_eq!(body["temperature"], 0.0);
        assert_eq!(body["model"], "test-model");
        assert_eq!(
            body["messages"][0]["content"][1]["image_url"]["url"],
            "data:image/jpeg;base64,AQID"
        );
    }

    #[test]
    fn missing_credential_only_matters_on_a_miss() {
        let dir = tempfile::tempdir().unwrap();
        let config = EndpointConfig {
            model: "m".into(),
            credential_env: "VERBSENSE_TEST_UNSET_VARIABLE".into(),
            ..Default::default()
        };
        let c = ChatClient::new(config, Scripted::new(vec![]), ReplyCache::new(dir.path()));
        let err = c.fetch_reply(&PromptTemplate::open(), &image()).unwrap_err();
        assert!(matches!(err, AcquireError::MissingCredential(_)));
        let key = c.cache_key(&PromptTemplate::open(), &image());
        ReplyCache::new(dir.path()).put(&key, "m", "cached").unwrap();
        assert_eq!(c.fetch_reply(&PromptTemplate::open(), &image()).unwrap(), "cached");
    }

    #[test]
    fn fetch_many_keeps_job_order() {
        let dir = tempfile::tempdir().unwrap();
        let (c, _) = client((0..6).map(|_| ok("same")).collect(), &dir);
        let jobs: Vec<FetchJob> = (0..6)
            .map(|i| FetchJob {
                image_id: format!("img{i}"),
                image: ImageInput::Url(format!("https://example.invalid/{i}.jpg")),
            })
            .collect();
        let out = c.fetch_many(&PromptTemplate::open(), &jobs);
        assert_eq!(out.len(), 6);
        assert!(out.iter().all(|r| matches!(r.as_deref(), Ok("same"))));
        assert_eq!(c.request_count(), 6);
    }
}
