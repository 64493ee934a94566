//! Model endpoints: chat completion for extraction, classification, answering
//! and judging; embeddings for claims, documents and queries.
//!
//! [`HttpProvider`] speaks the OpenAI-compatible wire protocol. [`MockProvider`]
//! is a deterministic in-process stand-in that the test suite and offline
//! pipeline runs use.

mod http;
mod mock;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use thiserror::Error;

pub use http::{HttpProvider, ProviderConfig};
pub use mock::{MockMode, MockProvider};

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("endpoint returned HTTP {status}: {body}")]
    Status { status: u16, body: String },

    #[error("request timed out")]
    Timeout,

    #[error("transport failure: {0}")]
    Transport(String),

    /// The endpoint answered, but not in the expected shape.
    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("invalid provider configuration: {0}")]
    Config(String),
}

impl ProviderError {
    /// Server errors, throttling, timeouts and connection failures are worth
    /// another attempt; other client errors (auth in particular) are not.
    pub fn is_retryable(&self) -> bool {
        match self {
            ProviderError::Status { status, .. } => {
                *status >= 500 || *status == 429 || *status == 408
            }
            ProviderError::Timeout | ProviderError::Transport(_) => true,
            ProviderError::Protocol(_) | ProviderError::Config(_) => false,
        }
    }
}

pub trait Provider: Send + Sync {
    /// Returns the first completion's text for a system + user prompt pair.
    fn chat(&self, system: &str, user: &str) -> Result<String, ProviderError>;

    /// One L2-normalized vector per input, in input order, all of equal
    /// dimension.
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError>;

    /// Number of requests that may be in flight at once.
    fn max_in_flight(&self) -> usize {
        1
    }
}

impl<P: Provider + ?Sized> Provider for &P {
    fn chat(&self, system: &str, user: &str) -> Result<String, ProviderError> {
        (**self).chat(system, user)
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        (**self).embed(texts)
    }

    fn max_in_flight(&self) -> usize {
        (**self).max_in_flight()
    }
}

impl<P: Provider + ?Sized> Provider for Box<P> {
    fn chat(&self, system: &str, user: &str) -> Result<String, ProviderError> {
        (**self).chat(system, user)
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        (**self).embed(texts)
    }

    fn max_in_flight(&self) -> usize {
        (**self).max_in_flight()
    }
}

/// Scales `v` to unit L2 norm. Fails on zero or non-finite vectors.
pub fn l2_normalize(v: &mut [f64]) -> Result<(), ProviderError> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !norm.is_finite() || norm == 0.0 {
        return Err(ProviderError::Protocol(format!(
            "cannot normalize vector with norm {norm}"
        )));
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Ok(())
}

/// Applies `f` to every item with at most `limit` calls running concurrently.
/// Results come back in input order regardless of completion order.
pub fn map_bounded<T, R, F>(items: &[T], limit: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync,
{
    let workers = limit.max(1).min(items.len());
    if workers <= 1 {
        return items
            .iter()
            .enumerate()
            .map(|(i, item)| f(i, item))
            .collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let result = f(i, &items[i]);
                *slots[i].lock().expect("result slot poisoned") = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| {
            slot.into_inner()
                .expect("result slot poisoned")
                .expect("every index visited")
        })
        .collect()
}
