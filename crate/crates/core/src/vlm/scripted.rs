use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use super::{ChatRequest, VlmBackend, VlmReply};
use crate::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchRule {
    /// Substrings that must all occur in the request text.
    #[serde(default)]
    pub contains: Vec<String>,
    /// Whole request text, when an exact match is wanted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equals: Option<String>,
    #[serde(default)]
    pub min_images: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptRule {
    #[serde(rename = "match")]
    pub matcher: MatchRule,
    pub response: String,
    /// Free-form label; not used for matching.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Ordered response rules; the first rule that matches wins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedTranscript {
    pub rules: Vec<ScriptRule>,
    #[serde(default)]
    pub strict: bool,
}

impl ScriptedTranscript {
    pub fn new(rules: Vec<ScriptRule>, strict: bool) -> Result<Self> {
        let t = Self { rules, strict };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rules.is_empty() {
            return Err(Error::InvalidSpec("transcript has no rules".into()));
        }
        for (i, r) in self.rules.iter().enumerate() {
            if r.matcher.contains.iter().any(String::is_empty) {
                return Err(Error::InvalidSpec(format!("rules[{i}] has an empty substring")));
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let t: Self = serde_json::from_str(&text)?;
        t.validate()?;
        Ok(t)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_string_pretty(self)? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn find(&self, request: &ChatRequest) -> Option<&ScriptRule> {
        let text = request.text();
        let images = request.image_count();
        self.rules.iter().find(|r| {
            let m = &r.matcher;
            m.min_images <= images
                && m.equals.as_ref().is_none_or(|e| *e == text)
                && m.contains.iter().all(|s| text.contains(s.as_str()))
        })
    }
}

/// Replies from a [`ScriptedTranscript`]. A miss is an error in strict mode
/// and an empty reply otherwise.
#[derive(Debug)]
pub struct ScriptedBackend {
    transcript: ScriptedTranscript,
    calls: AtomicUsize,
}

impl ScriptedBackend {
    pub fn new(transcript: ScriptedTranscript) -> Self {
        Self {
            transcript,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl VlmBackend for ScriptedBackend {
    fn id(&self) -> String {
        "scripted".into()
    }

    fn complete(&self, request: &ChatRequest) -> Result<VlmReply> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let text = match self.transcript.find(request) {
            Some(rule) => rule.response.clone(),
            None if self.transcript.strict => return Err(Error::NoRuleMatched),
            None => String::new(),
        };
        Ok(VlmReply {
            text,
            usage: None,
            backend_id: self.id(),
        })
    }
}
