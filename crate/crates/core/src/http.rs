//! Cached, rate-limited HTTP access.
//!
//! Every remote call in the pipeline goes through [`HttpClient`]. Responses
//! are stored under `<cache>/<host>/<sha256>.json`, keyed by the request URL
//! and its sorted query parameters. In offline (replay) mode a cache miss is
//! an error and the network is never touched.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use base64::Engine;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Raw response as seen by the pipeline.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Response {
    pub status: u16,
    pub body: Vec<u8>,
}

impl Response {
    pub fn is_success(&self) -> bool {
        (200..300).contains(&self.status)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{0}")]
pub struct TransportError(pub String);

/// The network boundary. Tests substitute in-memory fakes.
pub trait Transport: Send + Sync {
    fn get(&self, url: &str, params: &[(String, String)]) -> Result<Response, TransportError>;

    /// Single-file multipart upload, used for the GROBID endpoint.
    fn post_file(&self, url: &str, field: &str, filename: &str, bytes: &[u8]) -> Result<Response, TransportError>;
}

#[derive(Debug, Error)]
pub enum HttpError {
    #[error("transport error for {url} after {attempts} attempts: {message}")]
    Transport { url: String, attempts: u32, message: String },
    #[error("HTTP {status} for {url}")]
    Status { url: String, status: u16 },
    #[error("rate limited by {url}")]
    RateLimited { url: String },
    #[error("replay mode: no cached response for {url}")]
    ReplayMiss { url: String },
    #[error("cache I/O at {path}: {message}")]
    Cache { path: String, message: String },
}

impl HttpError {
    pub fn status(&self) -> Option<u16> {
        match self {
            HttpError::Status { status, .. } => Some(*status),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CacheMode {
    /// Serve hits from the cache, fetch and store misses.
    #[default]
    ReadWrite,
    /// Cache only; misses fail with [`HttpError::ReplayMiss`].
    Offline,
    /// Ignore existing entries, always fetch, overwrite.
    Refresh,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpConfig {
    pub retries: u32,
    pub backoff_base_ms: u64,
    pub per_host_cap: usize,
    pub min_interval_ms: u64,
    /// Contact address attached as `mailto` to requests for `mailto_hosts`.
    pub mailto: Option<String>,
    pub mailto_hosts: Vec<String>,
}

impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            retries: 3,
            backoff_base_ms: 500,
            per_host_cap: 4,
            min_interval_ms: 100,
            mailto: None,
            mailto_hosts: vec!["api.openalex.org".into()],
        }
    }
}

/// Host part of a URL, or `unknown` when the URL does not parse.
pub fn host_of(url: &str) -> String {
    url::Url::parse(url).ok().and_then(|u| u.host_str().map(str::to_lowercase)).unwrap_or_else(|| "unknown".into())
}

/// Cache key: sha256 over `GET <url>\n` followed by the sorted `k=v\n` lines.
pub fn cache_key(url: &str, params: &[(String, String)]) -> String {
    let mut sorted: Vec<&(String, String)> = params.iter().collect();
    sorted.sort();
    let mut canonical = format!("GET {url}\n");
    for (k, v) in sorted {
        canonical.push_str(k);
        canonical.push('=');
        canonical.push_str(v);
        canonical.push('\n');
    }
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

#[derive(Debug, Serialize, Deserialize)]
struct Envelope {
    url: String,
    params: Vec<(String, String)>,
    status: u16,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    body: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    body_base64: Option<String>,
}

/// On-disk response store.
#[derive(Debug, Clone)]
pub struct ResponseCache {
    root: PathBuf,
}

impl ResponseCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        ResponseCache { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn entry_path(&self, url: &str, params: &[(String, String)]) -> PathBuf {
        self.root.join(host_of(url)).join(format!("{}.json", cache_key(url, params)))
    }

    pub fn load(&self, url: &str, params: &[(String, String)]) -> Result<Option<Response>, HttpError> {
        let path = self.entry_path(url, params);
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(cache_err(&path, e)),
        };
        let env: Envelope = serde_json::from_str(&text).map_err(|e| cache_err(&path, e))?;
        let body = match (env.body, env.body_base64) {
            (Some(b), _) => b.into_bytes(),
            (None, Some(b64)) => {
                base64::engine::general_purpose::STANDARD.decode(b64).map_err(|e| cache_err(&path, e))?
            }
            (None, None) => Vec::new(),
        };
        Ok(Some(Response { status: env.status, body }))
    }

    pub fn store(&self, url: &str, params: &[(String, String)], resp: &Response) -> Result<(), HttpError> {
        let path = self.entry_path(url, params);
        let (body, body_base64) = match std::str::from_utf8(&resp.body) {
            Ok(s) => (Some(s.to_string()), None),
            Err(_) => (None, Some(base64::engine::general_purpose::STANDARD.encode(&resp.body))),
        };
        let mut sorted = params.to_vec();
        sorted.sort();
        let env = Envelope { url: url.to_string(), params: sorted, status: resp.status, body, body_base64 };
        let json = serde_json::to_string_pretty(&env).map_err(|e| cache_err(&path, e))?;
        write_atomic(&path, json.as_bytes()).map_err(|e| cache_err(&path, e))
    }

    pub fn evict(&self, url: &str, params: &[(String, String)]) -> Result<bool, HttpError> {
        let path = self.entry_path(url, params);
        match std::fs::remove_file(&path) {
            Ok(()) => Ok(true),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(false),
            Err(e) => Err(cache_err(&path, e)),
        }
    }
}

fn cache_err(path: &Path, e: impl std::fmt::Display) -> HttpError {
    HttpError::Cache { path: path.display().to_string(), message: e.to_string() }
}

/// Writes via a sibling temp file and rename so readers never see partial data.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension(format!("tmp.{}.{:?}", std::process::id(), std::thread::current().id()));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}

#[derive(Debug, Default)]
struct HostSlot {
    in_flight: usize,
    next_start: Option<Instant>,
}

/// Per-host admission control: at most `cap` requests in flight per host and
/// at least `interval` between consecutive request starts.
#[derive(Debug)]
pub struct RateLimiter {
    cap: usize,
    interval: Duration,
    hosts: Mutex<HashMap<String, HostSlot>>,
    freed: Condvar,
}

/// Releases the slot on drop.
pub struct Permit<'a> {
    limiter: &'a RateLimiter,
    host: String,
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut hosts = self.limiter.hosts.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(slot) = hosts.get_mut(&self.host) {
            slot.in_flight -= 1;
        }
        drop(hosts);
        self.limiter.freed.notify_all();
    }
}

impl RateLimiter {
    pub fn new(cap: usize, interval: Duration) -> Self {
        RateLimiter { cap: cap.max(1), interval, hosts: Mutex::new(HashMap::new()), freed: Condvar::new() }
    }

    pub fn acquire(&self, host: &str) -> Permit<'_> {
        let mut hosts = self.hosts.lock().unwrap_or_else(|e| e.into_inner());
        loop {
            let slot = hosts.entry(host.to_string()).or_default();
            if slot.in_flight < self.cap {
                break;
            }
            hosts = self.freed.wait(hosts).unwrap_or_else(|e| e.into_inner());
        }
        let slot = hosts.get_mut(host).expect("slot inserted above");
        slot.in_flight += 1;
        let now = Instant::now();
        let start = match slot.next_start {
            Some(t) if t > now => t,
            _ => now,
        };
        slot.next_start = Some(start + self.interval);
        drop(hosts);
        let wait = start.saturating_duration_since(Instant::now());
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
        Permit { limiter: self, host: host.to_string() }
    }
}

/// The pipeline's HTTP entry point.
pub struct HttpClient {
    transport: Arc<dyn Transport>,
    cache: ResponseCache,
    limiter: RateLimiter,
    config: HttpConfig,
    mode: CacheMode,
    key_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl HttpClient {
    pub fn new(transport: Arc<dyn Transport>, cache: ResponseCache, config: HttpConfig, mode: CacheMode) -> Self {
        let limiter = RateLimiter::new(config.per_host_cap, Duration::from_millis(config.min_interval_ms));
        HttpClient { transport, cache, limiter, config, mode, key_locks: Mutex::new(HashMap::new()) }
    }

    pub fn mode(&self) -> CacheMode {
        self.mode
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }

    pub fn limiter(&self) -> &RateLimiter {
        &self.limiter
    }

    fn key_lock(&self, key: &str) -> Arc<Mutex<()>> {
        let mut locks = self.key_locks.lock().unwrap_or_else(|e| e.into_inner());
        locks.entry(key.to_string()).or_default().clone()
    }

    /// GET with caching. Non-2xx responses surface as [`HttpError::Status`];
    /// 4xx responses are cached so replays reproduce them, 5xx and 429 are not.
    pub fn cached_get(&self, url: &str, params: &[(&str, &str)]) -> Result<Vec<u8>, HttpError> {
        let params: Vec<(String, String)> = params.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        let key = cache_key(url, &params);
        let lock = self.key_lock(&key);
        let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());

        if self.mode != CacheMode::Refresh {
            if let Some(resp) = self.cache.load(url, &params)? {
                return into_result(url, resp);
            }
        }
        if self.mode == CacheMode::Offline {
            return Err(HttpError::ReplayMiss { url: url.to_string() });
        }

        let host = host_of(url);
        let mut wire_params = params.clone();
        if let Some(mail) = &self.config.mailto {
            if self.config.mailto_hosts.contains(&host) {
                wire_params.push(("mailto".into(), mail.clone()));
            }
        }
        let resp = self.with_retries(url, &host, true, || self.transport.get(url, &wire_params))?;
        if resp.is_success() || (400..500).contains(&resp.status) && resp.status != 429 {
            self.cache.store(url, &params, &resp)?;
        }
        into_result(url, resp)
    }

    /// Drops a cached entry so the next request refetches.
    pub fn evict(&self, url: &str, params: &[(&str, &str)]) -> Result<bool, HttpError> {
        let params: Vec<(String, String)> = params.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        self.cache.evict(url, &params)
    }

    /// Uncached rate-limited upload. Only transport failures, 429 and 503 are retried.
    pub fn post_file(&self, url: &str, field: &str, filename: &str, bytes: &[u8]) -> Result<Response, HttpError> {
        if self.mode == CacheMode::Offline {
            return Err(HttpError::ReplayMiss { url: url.to_string() });
        }
        let host = host_of(url);
        self.with_retries(url, &host, false, || self.transport.post_file(url, field, filename, bytes))
    }

    fn with_retries(
        &self,
        url: &str,
        host: &str,
        retry_server_errors: bool,
        mut call: impl FnMut() -> Result<Response, TransportError>,
    ) -> Result<Response, HttpError> {
        let attempts = self.config.retries + 1;
        let mut last: Result<Response, TransportError> = Err(TransportError("not attempted".into()));
        for attempt in 0..attempts {
            if attempt > 0 {
                let backoff = self.config.backoff_base_ms.saturating_mul(1 << (attempt - 1).min(16));
                std::thread::sleep(Duration::from_millis(backoff));
            }
            last = {
                let _permit = self.limiter.acquire(host);
                call()
            };
            match &last {
                Ok(r) if r.status == 429 || r.status == 503 => continue,
                Ok(r) if retry_server_errors && r.status >= 500 => continue,
                Ok(_) => break,
                Err(e) => log::debug!("attempt {} for {url} failed: {e}", attempt + 1),
            }
        }
        match last {
            Ok(r) if r.status == 429 => Err(HttpError::RateLimited { url: url.to_string() }),
            Ok(r) => Ok(r),
            Err(e) => Err(HttpError::Transport { url: url.to_string(), attempts, message: e.0 }),
        }
    }
}

fn into_result(url: &str, resp: Response) -> Result<Vec<u8>, HttpError> {
    if resp.is_success() {
        Ok(resp.body)
    } else {
        Err(HttpError::Status { url: url.to_string(), status: resp.status })
    }
}

/// Blocking transport backed by `ureq`.
pub struct UreqTransport {
    agent: ureq::Agent,
    user_agent: String,
}

impl UreqTransport {
    pub fn new(user_agent: impl Into<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent =
            ureq::Agent::config_builder().http_status_as_error(false).timeout_global(Some(timeout)).build().into();
        UreqTransport { agent, user_agent: user_agent.into() }
    }
}

const MAX_BODY: u64 = 200 * 1024 * 1024;

fn read_response(resp: ureq::http::Response<ureq::Body>) -> Result<Response, TransportError> {
    let status = resp.status().as_u16();
    let body =
        resp.into_body().with_config().limit(MAX_BODY).read_to_vec().map_err(|e| TransportError(e.to_string()))?;
    Ok(Response { status, body })
}

impl Transport for UreqTransport {
    fn get(&self, url: &str, params: &[(String, String)]) -> Result<Response, TransportError> {
        let mut req = self.agent.get(url).header("User-Agent", &self.user_agent);
        for (k, v) in params {
            req = req.query(k, v);
        }
        read_response(req.call().map_err(|e| TransportError(e.to_string()))?)
    }

    fn post_file(&self, url: &str, field: &str, filename: &str, bytes: &[u8]) -> Result<Response, TransportError> {
        let boundary = format!("----dsprobe{}", hex::encode(&Sha256::digest(bytes)[..8]));
        let mut body = Vec::with_capacity(bytes.len() + 256);
        body.extend_from_slice(
            format!(
                "--{boundary}\r\nContent-Disposition: form-data; name=\"{field}\"; filename=\"{filename}\"\r\nContent-Type: application/pdf\r\n\r\n"
            )
            .as_bytes(),
        );
        body.extend_from_slice(bytes);
        body.extend_from_slice(format!("\r\n--{boundary}--\r\n").as_bytes());
        let resp = self
            .agent
            .post(url)
            .header("User-Agent", &self.user_agent)
            .header("Content-Type", &format!("multipart/form-data; boundary={boundary}"))
            .send(&body[..])
            .map_err(|e| TransportError(e.to_string()))?;
        read_response(resp)
    }
}

/// Transport that refuses every request; used in replay mode.
pub struct NoNetwork;

impl Transport for NoNetwork {
    fn get(&self, url: &str, _: &[(String, String)]) -> Result<Response, TransportError> {
        Err(TransportError(format!("network disabled: {url}")))
    }

    fn post_file(&self, url: &str, _: &str, _: &str, _: &[u8]) -> Result<Response, TransportError> {
        Err(TransportError(format!("network disabled: {url}")))
    }
}
