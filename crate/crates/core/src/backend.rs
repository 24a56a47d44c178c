//! Errors shared by every model backend (mock or remote).

use std::time::Duration;

use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum BackendError {
    #[error("backend did not answer within {0:?}")]
    Timeout(Duration),
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("malformed backend response: {0}")]
    MalformedResponse(String),
}

impl BackendError {
    pub fn code(&self) -> &'static str {
        match self {
            BackendError::Timeout(_) => "BACKEND_TIMEOUT",
            BackendError::Unavailable(_) => "BACKEND_UNAVAILABLE",
            BackendError::MalformedResponse(_) => "MALFORMED_RESPONSE",
        }
    }

    /// Timeouts and unavailability may succeed on a later event.
    pub fn is_retryable(&self) -> bool {
        !matches!(self, BackendError::MalformedResponse(_))
    }
}

/// Shared HTTP plumbing for the remote adapters.
pub(crate) mod http {
    use std::time::Duration;

    use serde::{de::DeserializeOwned, Serialize};

    use super::BackendError;

    pub(crate) fn client(timeout: Duration) -> reqwest::Client {
        reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .expect("http client configuration is static")
    }

    /// POSTs `body` as JSON to `base` + `path` and decodes the JSON reply.
    pub(crate) async fn post_json<Req: Serialize, Resp: DeserializeOwned>(
        client: &reqwest::Client,
        base: &str,
        path: &str,
        timeout: Duration,
        body: &Req,
    ) -> Result<Resp, BackendError> {
        let url = format!("{}{}", base.trim_end_matches('/'), path);
        let send = client.post(&url).json(body).send();
        let response = match tokio::time::timeout(timeout, send).await {
            Err(_) => return Err(BackendError::Timeout(timeout)),
            Ok(Err(e)) if e.is_timeout() => return Err(BackendError::Timeout(timeout)),
            Ok(Err(e)) => return Err(BackendError::Unavailable(e.to_string())),
            Ok(Ok(r)) => r,
        };
        let status = response.status();
        if !status.is_success() {
            return Err(BackendError::Unavailable(format!("{url} returned {status}")));
        }
        let bytes = match tokio::time::timeout(timeout, response.bytes()).await {
            Err(_) => return Err(BackendError::Timeout(timeout)),
            Ok(Err(e)) => return Err(BackendError::Unavailable(e.to_string())),
            Ok(Ok(b)) => b,
        };
        serde_json::from_slice(&bytes).map_err(|e| BackendError::MalformedResponse(e.to_string()))
    }
}
