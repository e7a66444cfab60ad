use std::collections::VecDeque;
use std::sync::Mutex;

use super::{AgentError, ChatRequest, Transport};

/// Local stand-in for a provider: replays scripted replies and records requests.
#[derive(Debug, Default)]
pub struct MockTransport {
    replies: Mutex<VecDeque<Result<String, AgentError>>>,
    requests: Mutex<Vec<ChatRequest>>,
}

impl MockTransport {
    pub fn new(replies: impl IntoIterator<Item = Result<String, AgentError>>) -> MockTransport {
        MockTransport {
            replies: Mutex::new(replies.into_iter().collect()),
            requests: Mutex::new(Vec::new()),
        }
    }

    pub fn requests(&self) -> Vec<ChatRequest> {
        self.requests.lock().expect("mock lock").clone()
    }
}

impl Transport for MockTransport {
    fn complete(&self, request: &ChatRequest) -> Result<String, AgentError> {
        self.requests.lock().expect("mock lock").push(request.clone());
        self.replies
            .lock()
            .expect("mock lock")
            .pop_front()
            .unwrap_or_else(|| Err(AgentError::Transport("mock has no scripted reply left".into())))
    }
}
