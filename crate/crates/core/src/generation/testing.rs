//! Fault-injection backends for tests.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use super::mock::MockBackend;
use super::provider::{BackendError, CompletionBackend};
use crate::prompt::PromptBundle;

/// Plays back a script of results, then answers like [`MockBackend`]
/// (or keeps failing, when built with [`ScriptedBackend::always`]).
#[derive(Debug)]
pub struct ScriptedBackend {
    script: Mutex<VecDeque<Result<String, BackendError>>>,
    forever: Option<BackendError>,
    calls: AtomicUsize,
}

impl ScriptedBackend {
    pub fn new(script: Vec<Result<String, BackendError>>) -> Self {
        Self {
            script: Mutex::new(script.into()),
            forever: None,
            calls: AtomicUsize::new(0),
        }
    }

    /// Fails with each error in turn, then succeeds.
    pub fn failing(errors: Vec<BackendError>) -> Self {
        Self::new(errors.into_iter().map(Err).collect())
    }

    pub fn always(error: BackendError) -> Self {
        Self {
            forever: Some(error),
            ..Self::new(Vec::new())
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl CompletionBackend for ScriptedBackend {
    fn send(&self, bundle: &PromptBundle, timeout: Duration) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if let Some(next) = self.script.lock().expect("script poisoned").pop_front() {
            return next;
        }
        match &self.forever {
            Some(e) => Err(e.clone()),
            None => MockBackend.send(bundle, timeout),
        }
    }
}
