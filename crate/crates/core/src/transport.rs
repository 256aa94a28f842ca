//! Request/response seam for remote model endpoints (captioner, evaluator,
//! judge). The core never opens sockets itself; callers plug in a transport.

use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("transport error: {0}")]
pub struct TransportError(pub String);

pub trait Transport {
    /// POSTs a JSON document and returns the JSON reply.
    fn post_json(&self, endpoint: &str, body: &Value) -> Result<Value, TransportError>;
}

/// Replays canned replies in order; used to exercise remote adapters offline.
#[derive(Debug, Default)]
pub struct CannedTransport {
    replies: std::cell::RefCell<std::collections::VecDeque<Result<Value, TransportError>>>,
    requests: std::cell::RefCell<Vec<(String, Value)>>,
}

impl CannedTransport {
    pub fn new(replies: impl IntoIterator<Item = Result<Value, TransportError>>) -> Self {
        CannedTransport {
            replies: std::cell::RefCell::new(replies.into_iter().collect()),
            requests: Default::default(),
        }
    }

    pub fn requests(&self) -> Vec<(String, Value)> {
        self.requests.borrow().clone()
    }
}

impl Transport for CannedTransport {
    fn post_json(&self, endpoint: &str, body: &Value) -> Result<Value, TransportError> {
        self.requests.borrow_mut().push((endpoint.to_string(), body.clone()));
        self.replies
            .borrow_mut()
            .pop_front()
            .unwrap_or_else(|| Err(TransportError("no canned reply left".into())))
    }
}
