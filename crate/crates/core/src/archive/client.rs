//! Blocking HTTP client for the two archive endpoints: the availability
//! lookup and the raw-content fetch. Failures are classified so the fetcher
//! can tell "retry later" from "give up on this URL".

use std::time::Duration;

use serde::Deserialize;

use super::{raw_content_url, ArchiveError, Snapshot};

/// Transient failures are worth retrying (5xx, timeouts, resets); permanent
/// ones are not (4xx other than an availability 404, malformed responses).
#[derive(Debug)]
pub enum ClientError {
    Transient(String),
    Permanent(String),
}

impl std::fmt::Display for ClientError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ClientError::Transient(msg) => write!(f, "transient: {msg}"),
            ClientError::Permanent(msg) => write!(f, "permanent: {msg}"),
        }
    }
}

impl std::error::Error for ClientError {}

#[derive(Deserialize)]
struct AvailabilityResponse {
    #[serde(default)]
    archived_snapshots: ArchivedSnapshots,
}

#[derive(Deserialize, Default)]
struct ArchivedSnapshots {
    closest: Option<ClosestSnapshot>,
}

#[derive(Deserialize)]
struct ClosestSnapshot {
    url: String,
    timestamp: String,
    // The service reports the archived capture's status as a string.
    status: String,
    available: bool,
}

pub struct ArchiveClient {
    http: reqwest::blocking::Client,
    endpoint: String,
}

impl ArchiveClient {
    /// `endpoint` is the archive service base, e.g. `https://archive.org`
    /// or a local mock; no trailing slash.
    pub fn new(endpoint: &str, request_timeout: Duration) -> Result<ArchiveClient, ArchiveError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(request_timeout)
            .user_agent(concat!("retrocorpus/", env!("CARGO_PKG_VERSION")))
            // Environment proxies would capture mock-endpoint traffic.
            .no_proxy()
            .build()
            .map_err(|e| ArchiveError::Client(e.to_string()))?;
        Ok(ArchiveClient { http, endpoint: endpoint.trim_end_matches('/').to_string() })
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn classify(e: reqwest::Error) -> ClientError {
        // Anything that failed below the HTTP layer (connect, reset,
        // timeout, torn body) can succeed on a retry.
        ClientError::Transient(e.to_string())
    }

    /// Asks the availability endpoint for the snapshot closest to `target`.
    /// The service's own closest-selection is trusted and passed through;
    /// deciding whether the snapshot is usable is the caller's job.
    pub fn query_availability(
        &self,
        url: &str,
        target: &str,
    ) -> Result<Option<Snapshot>, ClientError> {
        let query: String = url::form_urlencoded::Serializer::new(String::new())
            .append_pair("url", url)
            .append_pair("timestamp", target)
            .finish();
        let lookup = format!("{}/wayback/available?{query}", self.endpoint);
        let response = self.http.get(&lookup).send().map_err(Self::classify)?;
        let status = response.status();
        if status.as_u16() == 404 {
            return Ok(None);
        }
        if status.is_client_error() {
            return Err(ClientError::Permanent(format!("availability lookup returned {status}")));
        }
        if !status.is_success() {
            return Err(ClientError::Transient(format!("availability lookup returned {status}")));
        }
        let body = response.text().map_err(Self::classify)?;
        let parsed: AvailabilityResponse = serde_json::from_str(&body)
            .map_err(|e| ClientError::Permanent(format!("availability response: {e}")))?;
        let Some(closest) = parsed.archived_snapshots.closest else {
            return Ok(None);
        };
        let http_status: u16 = closest.status.parse().map_err(|_| {
            ClientError::Permanent(format!("non-numeric snapshot status {:?}", closest.status))
        })?;
        Ok(Some(Snapshot {
            archive_url: closest.url,
            timestamp: closest.timestamp,
            http_status,
            available: closest.available,
        }))
    }

    /// Fetches the snapshot's raw-content form and returns the payload plus
    /// the Content-Type header, if any.
    pub fn fetch_raw(&self, archive_url: &str) -> Result<(Vec<u8>, Option<String>), ClientError> {
        let raw = raw_content_url(archive_url);
        let response = self.http.get(&raw).send().map_err(Self::classify)?;
        let status = response.status();
        if status.is_client_error() {
            return Err(ClientError::Permanent(format!("fetch returned {status}")));
        }
        if !status.is_success() {
            return Err(ClientError::Transient(format!("fetch returned {status}")));
        }
        let content_type = response
            .headers()
            .get(reqwest::header::CONTENT_TYPE)
            .and_then(|v| v.to_str().ok())
            .map(str::to_string);
        let bytes = response.bytes().map_err(Self::classify)?;
        Ok((bytes.to_vec(), content_type))
    }
}
