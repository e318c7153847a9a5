use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::vlm::{ChatRequest, MatchRule, ScriptRule, ScriptedTranscript, VlmBackend, VlmReply};
use crate::Result;

/// One request/reply pair as seen by the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub request_text: String,
    pub image_count: usize,
    pub reply: String,
}

impl Exchange {
    pub fn new(req: &ChatRequest, reply: &str) -> Self {
        Self {
            request_text: req.text(),
            image_count: req.image_count(),
            reply: reply.to_string(),
        }
    }
}

/// Passes requests through and keeps every exchange so a run can be
/// replayed offline.
pub struct RecordingBackend<'a> {
    inner: &'a dyn VlmBackend,
    log: Mutex<Vec<Exchange>>,
}

impl<'a> RecordingBackend<'a> {
    pub fn new(inner: &'a dyn VlmBackend) -> Self {
        Self {
            inner,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn exchanges(&self) -> Vec<Exchange> {
        self.log.lock().unwrap().clone()
    }

    /// Strict transcript with one exact-text rule per recorded exchange.
    pub fn transcript(&self) -> Option<ScriptedTranscript> {
        let rules: Vec<ScriptRule> = self
            .exchanges()
            .into_iter()
            .map(|e| ScriptRule {
                matcher: MatchRule {
                    contains: Vec::new(),
                    equals: Some(e.request_text),
                    min_images: e.image_count,
                },
                response: e.reply,
                note: None,
            })
            .collect();
        (!rules.is_empty()).then_some(ScriptedTranscript { rules, strict: true })
    }
}

impl VlmBackend for RecordingBackend<'_> {
    fn id(&self) -> String {
        self.inner.id()
    }

    fn complete(&self, request: &ChatRequest) -> Result<VlmReply> {
        let reply = self.inner.complete(request)?;
        self.log.lock().unwrap().push(Exchange::new(request, &reply.text));
        Ok(reply)
    }
}
