use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{debug, warn};

use crate::prompt::PromptBundle;

/// Failure of a single request to a backend.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum BackendError {
    #[error("request timed out")]
    Timeout,
    #[error("provider answered with status {status}: {message}")]
    Status { status: u16, message: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed provider response: {0}")]
    Malformed(String),
}

impl BackendError {
    /// Overload, rate limiting and connection trouble are worth another try.
    pub fn is_transient(&self) -> bool {
        match self {
            BackendError::Status { status, .. } => matches!(status, 408 | 425 | 429 | 500 | 502 | 503 | 504 | 529),
            BackendError::Transport(_) => true,
            BackendError::Timeout | BackendError::Malformed(_) => false,
        }
    }
}

#[derive(Debug, Error)]
pub enum GenerationError {
    #[error("provider timed out")]
    ProviderTimeout,
    #[error("provider refused the request: {0}")]
    ProviderRefusal(String),
    #[error("gave up after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: BackendError },
    #[error("provider output has no valid suggestion line")]
    UnparseableOutput,
    #[error("invalid provider config: {0}")]
    InvalidConfig(String),
}

/// Something that turns one prompt into raw completion text.
pub trait CompletionBackend: Send + Sync {
    fn send(&self, bundle: &PromptBundle, timeout: Duration) -> Result<String, BackendError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    /// Base URL of a chat-completion endpoint; unused by the mock.
    pub base_url: String,
    pub model: String,
    pub timeout_s: f64,
    pub max_retries: u32,
    /// Requests per minute; 0 disables the limiter.
    pub rpm: u32,
    pub backoff_base_ms: u64,
    pub backoff_max_ms: u64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            base_url: "http://127.0.0.1:8080/v1".into(),
            model: "gpt-4".into(),
            timeout_s: 30.0,
            max_retries: 2,
            rpm: 0,
            backoff_base_ms: 250,
            backoff_max_ms: 4_000,
        }
    }
}

impl ProviderConfig {
    pub fn validate(&self) -> Result<(), GenerationError> {
        if !(self.timeout_s.is_finite() && self.timeout_s > 0.0) {
            return Err(GenerationError::InvalidConfig(format!(
                "timeout_s must be positive, got {}",
                self.timeout_s
            )));
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_s)
    }

    /// Delay before retry number `retry` (0-based): base * 2^retry, capped.
    pub fn backoff(&self, retry: u32) -> Duration {
        let factor = 1u64.checked_shl(retry).unwrap_or(u64::MAX);
        Duration::from_millis(self.backoff_base_ms.saturating_mul(factor).min(self.backoff_max_ms))
    }
}

/// Token bucket shared by every caller of one provider.
#[derive(Debug)]
pub struct RateLimiter {
    capacity: f64,
    per_sec: f64,
    state: Mutex<(f64, Instant)>,
}

impl RateLimiter {
    pub fn per_minute(rpm: u32) -> Self {
        let capacity = f64::from(rpm.max(1));
        Self {
            capacity,
            per_sec: capacity / 60.0,
            state: Mutex::new((capacity, Instant::now())),
        }
    }

    /// Blocks until a token is available.
    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut state = self.state.lock().expect("rate limiter poisoned");
                let now = Instant::now();
                let (tokens, last) = *state;
                let tokens = (tokens + now.duration_since(last).as_secs_f64() * self.per_sec).min(self.capacity);
                if tokens >= 1.0 {
                    *state = (tokens - 1.0, now);
                    return;
                }
                *state = (tokens, now);
                Duration::from_secs_f64((1.0 - tokens) / self.per_sec)
            };
            thread::sleep(wait);
        }
    }
}

/// A backend plus the retry, timeout and rate-limit policy around it.
pub struct Provider {
    backend: Arc<dyn CompletionBackend>,
    config: ProviderConfig,
    limiter: Option<RateLimiter>,
}

impl std::fmt::Debug for Provider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Provider")
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

impl Provider {
    pub fn new(backend: Arc<dyn CompletionBackend>, config: ProviderConfig) -> Result<Self, GenerationError> {
        config.validate()?;
        let limiter = (config.rpm > 0).then(|| RateLimiter::per_minute(config.rpm));
        Ok(Self {
            backend,
            config,
            limiter,
        })
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    /// Sends the bundle, retrying transient failures with exponential backoff.
    ///
    /// At most `max_retries + 1` requests are made. A timeout is reported as
    /// is and not retried, so the caller's wait stays bounded by `timeout_s`.
    pub fn complete(&self, bundle: &PromptBundle) -> Result<String, GenerationError> {
        let timeout = self.config.timeout();
        let mut retry = 0u32;
        loop {
            if let Some(limiter) = &self.limiter {
                limiter.acquire();
            }
            match self.backend.send(bundle, timeout) {
                Ok(text) => return Ok(text),
                Err(BackendError::Timeout) => return Err(GenerationError::ProviderTimeout),
                Err(e) if e.is_transient() => {
                    if retry >= self.config.max_retries {
                        return Err(GenerationError::RetriesExhausted {
                            attempts: retry + 1,
                            last: e,
                        });
                    }
                    let delay = self.config.backoff(retry);
                    warn!(error = %e, retry = retry + 1, ?delay, "transient provider failure, retrying");
                    thread::sleep(delay);
                    retry += 1;
                }
                Err(e) => {
                    debug!(error = %e, "provider refused");
                    return Err(GenerationError::ProviderRefusal(e.to_string()));
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generation::testing::ScriptedBackend;
    use crate::prompt::PromptComposer;
    use crate::store::{Closeness, PartnerPersona};

    fn bundle() -> PromptBundle {
        let persona = PartnerPersona {
            partner_id: "p".into(),
            display_name: "P".into(),
            topic_preferences: vec![],
            closeness: Closeness::Average,
        };
        PromptComposer::default()
            .compose_response_prompt("hello", &[], &persona, &[])
            .unwrap()
    }

    fn fast(max_retries: u32) -> ProviderConfig {
        ProviderConfig {
            max_retries,
            backoff_base_ms: 1,
            backoff_max_ms: 2,
            ..ProviderConfig::default()
        }
    }

    fn overloaded() -> BackendError {
        BackendError::Status {
            status: 503,
            message: "overloaded".into(),
        }
    }

    #[test]
    fn overload_exhausts_retries() {
        let backend = Arc::new(ScriptedBackend::failing(vec![overloaded(); 5]));
        let p = Provider::new(backend.clone(), fast(2)).unwrap();
        let err = p.complete(&bundle()).unwrap_err();
        assert!(
            matches!(err, GenerationError::RetriesExhausted { attempts: 3, .. }),
            "{err}"
        );
        assert_eq!(backend.calls(), 3);
    }

    #[test]
    fn request_count_is_min_failures_retries_plus_one() {
        for failures in 0..5usize {
            for retries in 0..4u32 {
                let backend = Arc::new(ScriptedBackend::failing(vec![overloaded(); failures]));
                let p = Provider::new(backend.clone(), fast(retries)).unwrap();
                let result = p.complete(&bundle());
                assert_eq!(backend.calls(), failures.min(retries as usize) + 1);
                assert_eq!(result.is_ok(), failures <= retries as usize);
            }
        }
    }

    #[test]
    fn refusal_is_not_retried() {
        let backend = Arc::new(ScriptedBackend::failing(vec![BackendError::Status {
            status: 400,
            message: "bad request".into(),
        }]));
        let p = Provider::new(backend.clone(), fast(3)).unwrap();
        assert!(matches!(
            p.complete(&bundle()),
            Err(GenerationError::ProviderRefusal(_))
        ));
        assert_eq!(backend.calls(), 1);
    }

    #[test]
    fn timeout_is_surfaced() {
        let backend = Arc::new(ScriptedBackend::failing(vec![BackendError::Timeout]));
        let p = Provider::new(backend.clone(), fast(3)).unwrap();
        assert!(matches!(p.complete(&bundle()), Err(GenerationError::ProviderTimeout)));
        assert_eq!(backend.calls(), 1);
    }

    #[test]
    fn config_validation() {
        let cfg = ProviderConfig {
            timeout_s: 0.0,
            ..ProviderConfig::default()
        };
        assert!(matches!(
            Provider::new(Arc::new(ScriptedBackend::failing(vec![])), cfg),
            Err(GenerationError::InvalidConfig(_))
        ));
    }

    #[test]
    fn backoff_doubles_and_caps() {
        let cfg = ProviderConfig {
            backoff_base_ms: 100,
            backoff_max_ms: 1_000,
            ..ProviderConfig::default()
        };
        let ms: Vec<u128> = (0..6).map(|r| cfg.backoff(r).as_millis()).collect();
        assert_eq!(ms, vec![100, 200, 400, 800, 1000, 1000]);
        assert_eq!(cfg.backoff(200).as_millis(), 1000);
    }

    #[test]
    fn limiter_spaces_requests() {
        // 600 rpm = 10 per second, burst of 600; drain the burst first
        let limiter = RateLimiter::per_minute(600);
        for _ in 0..600 {
            limiter.acquire();
        }
        let start = Instant::now();
        limiter.acquire();
        limiter.acquire();
        let waited = start.elapsed();
        assert!(waited >= Duration::from_millis(150), "{waited:?}");
    }
}
