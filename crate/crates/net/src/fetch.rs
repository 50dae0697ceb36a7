//! Rate-limited bulk download of profile images from a URL manifest.
//!
//! Each entry is tried at most `1 + retries` times with exponential
//! backoff. Timeouts, connection failures, 429 and 5xx responses are
//! retried; other HTTP errors are final. Failures are recorded in the
//! returned log, never raised; only an unusable output directory aborts
//! the run.

use std::collections::{HashSet, VecDeque};
use std::path::{Path, PathBuf};
use std::time::Duration;

use futures::stream::{self, StreamExt};
use ganeye_core::{Error, Result};
use reqwest::{header, StatusCode, Url};
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex;
use tokio::time::Instant;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FetchManifestEntry {
    pub image_id: String,
    pub url: String,
}

/// Reads a CSV manifest with header `image_id,url`.
pub fn load_fetch_manifest(path: &Path) -> Result<Vec<FetchManifestEntry>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for (i, row) in reader.deserialize::<FetchManifestEntry>().enumerate() {
        // Line 1 is the header.
        let line = i + 2;
        let entry = row.map_err(|e| csv_error(path, e))?;
        check_image_id(&entry.image_id).map_err(|message| Error::Parse { line, message })?;
        match Url::parse(&entry.url) {
            Ok(u) if matches!(u.scheme(), "http" | "https") => {}
            _ => {
                return Err(Error::Parse {
                    line,
                    message: format!("not an http(s) URL: {}", entry.url),
                })
            }
        }
        if !seen.insert(entry.image_id.clone()) {
            return Err(Error::DuplicateIds(format!("{} (line {line})", entry.image_id)));
        }
        entries.push(entry);
    }
    Ok(entries)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    if let csv::ErrorKind::Io(_) = e.kind() {
        let csv::ErrorKind::Io(io) = e.into_kind() else { unreachable!() };
        return Error::Io {
            context: path.display().to_string(),
            source: io,
        };
    }
    Error::Parse {
        line,
        message: format!("{}: {e}", path.display()),
    }
}

/// Ids become file names, so they must be a single plain path component.
fn check_image_id(id: &str) -> std::result::Result<(), String> {
    let bad = id.is_empty()
        || id == "."
        || id == ".."
        || id.starts_with('.')
        || id.chars().any(|c| matches!(c, '/' | '\\' | '\0') || c.is_control());
    if bad {
        Err(format!("image_id {id:?} is not usable as a file name"))
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FetchConfig {
    /// Maximum requests started in any one-second window, counting retries.
    pub rate_limit: u32,
    pub retries: u32,
    pub timeout: Duration,
    /// Delay before the first retry; doubles on each further attempt.
    pub backoff: Duration,
    pub concurrency: usize,
}

impl Default for FetchConfig {
    fn default() -> Self {
        Self {
            rate_limit: 5,
            retries: 2,
            timeout: Duration::from_secs(20),
            backoff: Duration::from_millis(500),
            concurrency: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FetchStatus {
    Ok,
    HttpError,
    Timeout,
    NonImage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FetchLogEntry {
    pub image_id: String,
    pub status: FetchStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub http_status: Option<u16>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub media_type: Option<String>,
    pub attempts: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Sliding-window limiter: the (n+1)-th request waits until a full second
/// has passed since the n-th most recent one started.
#[derive(Debug)]
pub struct RateLimiter {
    limit: usize,
    window: Duration,
    starts: Mutex<VecDeque<Instant>>,
}

impl RateLimiter {
    pub fn per_second(limit: u32) -> Self {
        assert!(limit > 0, "rate limit must be positive");
        Self {
            limit: limit as usize,
            window: Duration::from_secs(1),
            starts: Mutex::new(VecDeque::new()),
        }
    }

    pub async fn acquire(&self) {
        let mut starts = self.starts.lock().await;
        if starts.len() == self.limit {
            let oldest = starts.pop_front().expect("window is full");
            tokio::time::sleep_until(oldest + self.window).await;
        }
        starts.push_back(Instant::now());
    }
}

enum Attempt {
    Done(FetchLogEntry),
    Retry { status: FetchStatus, http_status: Option<u16>, error: String },
}

pub async fn fetch_images(
    entries: &[FetchManifestEntry],
    out_dir: &Path,
    config: &FetchConfig,
) -> Result<Vec<FetchLogEntry>> {
    if config.rate_limit == 0 {
        return Err(Error::InvalidInput("rate limit must be at least 1 request/second".into()));
    }
    let io = |e| Error::Io {
        context: out_dir.display().to_string(),
        source: e,
    };
    tokio::fs::create_dir_all(out_dir).await.map_err(io)?;
    // Fail before any download if files cannot be created here.
    tempfile::NamedTempFile::new_in(out_dir).map_err(io)?;

    let client = reqwest::Client::builder()
        .timeout(config.timeout)
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot build HTTP client: {e}")))?;
    let limiter = RateLimiter::per_second(config.rate_limit);

    let results: Vec<Result<FetchLogEntry>> = stream::iter(entries)
        .map(|entry| fetch_one(&client, &limiter, entry, out_dir, config))
        .buffered(config.concurrency.max(1))
        .collect()
        .await;
    results.into_iter().collect()
}

async fn fetch_one(
    client: &reqwest::Client,
    limiter: &RateLimiter,
    entry: &FetchManifestEntry,
    out_dir: &Path,
    config: &FetchConfig,
) -> Result<FetchLogEntry> {
    let mut attempt = 0;
    loop {
        attempt += 1;
        limiter.acquire().await;
        match try_fetch(client, entry, out_dir, attempt).await? {
            Attempt::Done(log) => {
                tracing::debug!(image_id = %entry.image_id, status = ?log.status, "fetched");
                return Ok(log);
            }
            Attempt::Retry { status, http_status, error } => {
                if attempt > config.retries {
                    tracing::warn!(image_id = %entry.image_id, attempts = attempt, %error, "giving up");
                    return Ok(FetchLogEntry {
                        image_id: entry.image_id.clone(),
                        status,
                        http_status,
                        path: None,
                        media_type: None,
                        attempts: attempt,
                        error: Some(error),
                    });
                }
                let delay = config.backoff * 2u32.saturating_pow(attempt - 1);
                tracing::debug!(image_id = %entry.image_id, attempt, ?delay, %error, "retrying");
                tokio::time::sleep(delay).await;
            }
        }
    }
}

async fn try_fetch(
    client: &reqwest::Client,
    entry: &FetchManifestEntry,
    out_dir: &Path,
    attempt: u32,
) -> Result<Attempt> {
    let failed = |status, http_status: Option<u16>, error: String| {
        Attempt::Done(FetchLogEntry {
            image_id: entry.image_id.clone(),
            status,
            http_status,
            path: None,
            media_type: None,
            attempts: attempt,
            error: Some(error),
        })
    };
    let transient = |e: reqwest::Error| Attempt::Retry {
        status: if e.is_timeout() { FetchStatus::Timeout } else { FetchStatus::HttpError },
        http_status: None,
        error: e.to_string(),
    };

    let response = match client.get(&entry.url).send().await {
        Ok(r) => r,
        Err(e) if e.is_builder() => return Ok(failed(FetchStatus::HttpError, None, e.to_string())),
        Err(e) => return Ok(transient(e)),
    };
    let status = response.status();
    if !status.is_success() {
        let error = format!("HTTP {status}");
        if status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
            return Ok(Attempt::Retry {
                status: FetchStatus::HttpError,
                http_status: Some(status.as_u16()),
                error,
            });
        }
        return Ok(failed(FetchStatus::HttpError, Some(status.as_u16()), error));
    }
    let media_type = response
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .map(|v| v.split(';').next().unwrap_or_default().trim().to_ascii_lowercase());
    let Some(media_type) = media_type.filter(|m| m.starts_with("image/")) else {
        return Ok(Attempt::Done(FetchLogEntry {
            image_id: entry.image_id.clone(),
            status: FetchStatus::NonImage,
            http_status: Some(status.as_u16()),
            path: None,
            media_type: response
                .headers()
                .get(header::CONTENT_TYPE)
                .and_then(|v| v.to_str().ok())
                .map(str::to_string),
            attempts: attempt,
            error: None,
        }));
    };
    let bytes = match response.bytes().await {
        Ok(b) => b,
        Err(e) => return Ok(transient(e)),
    };

    let path = out_dir.join(&entry.image_id);
    write_atomically(&path, &bytes).await?;
    Ok(Attempt::Done(FetchLogEntry {
        image_id: entry.image_id.clone(),
        status: FetchStatus::Ok,
        http_status: Some(status.as_u16()),
        path: Some(path.display().to_string()),
        media_type: Some(media_type),
        attempts: attempt,
        error: None,
    }))
}

async fn write_atomically(path: &Path, bytes: &[u8]) -> Result<()> {
    let io = |e| Error::Io {
        context: path.display().to_string(),
        source: e,
    };
    let name = path.file_name().expect("ids are plain file names").to_string_lossy();
    let partial: PathBuf = path.with_file_name(format!(".{name}.part"));
    tokio::fs::write(&partial, bytes).await.map_err(io)?;
    tokio::fs::rename(&partial, path).await.map_err(io)
}
