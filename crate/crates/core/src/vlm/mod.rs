//! Uniform gateway to the vision-language model.
//!
//! Three interchangeable backends implement [`VlmBackend`]: a live
//! chat-completions HTTP client, a deterministic transcript-driven
//! stand-in, and a content-addressed caching proxy around either.

mod cache;
mod http;
mod scripted;

use std::io::Cursor;
use std::sync::Arc;

use base64::Engine as _;
use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use cache::{cache_key, CacheBackend};
pub use http::{HttpBackend, HttpConfig};
pub use scripted::{MatchRule, ScriptRule, ScriptedBackend, ScriptedTranscript};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Assistant,
}

#[derive(Debug, Clone)]
pub enum UserPart {
    Text(String),
    Image(Arc<RgbImage>),
}

#[derive(Debug, Clone)]
pub struct ChatTurn {
    pub role: Role,
    pub parts: Vec<UserPart>,
}

/// One model call: system text, optional earlier turns, and the final user
/// message.
#[derive(Debug, Clone)]
pub struct ChatRequest {
    pub system_text: String,
    pub history: Vec<ChatTurn>,
    pub user_parts: Vec<UserPart>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub model_name: String,
}

pub const DEFAULT_MODEL: &str = "gpt-4-vision-preview";

impl ChatRequest {
    pub fn new(system_text: impl Into<String>, user_parts: Vec<UserPart>) -> Self {
        Self {
            system_text: system_text.into(),
            history: Vec::new(),
            user_parts,
            temperature: 0.0,
            max_tokens: 1024,
            model_name: DEFAULT_MODEL.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.user_parts.is_empty() {
            return Err(Error::InvalidRequest("request has no user parts".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(Error::InvalidRequest(format!("temperature {} outside [0, 2]", self.temperature)));
        }
        for part in self.all_parts() {
            if let UserPart::Image(img) = part {
                if img.width() == 0 || img.height() == 0 {
                    return Err(Error::InvalidRequest("empty image attached".into()));
                }
            }
        }
        Ok(())
    }

    fn all_parts(&self) -> impl Iterator<Item = &UserPart> {
        self.history.iter().flat_map(|t| t.parts.iter()).chain(self.user_parts.iter())
    }

    /// System text, then every text part in order, joined by newlines.
    pub fn text(&self) -> String {
        let mut out = self.system_text.clone();
        for part in self.all_parts() {
            if let UserPart::Text(t) = part {
                out.push('\n');
                out.push_str(t);
            }
        }
        out
    }

    pub fn images(&self) -> impl Iterator<Item = &Arc<RgbImage>> {
        self.all_parts().filter_map(|p| match p {
            UserPart::Image(i) => Some(i),
            UserPart::Text(_) => None,
        })
    }

    pub fn image_count(&self) -> usize {
        self.images().count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VlmReply {
    pub text: String,
    #[serde(default)]
    pub usage: Option<TokenUsage>,
    pub backend_id: String,
}

pub trait VlmBackend: Send + Sync {
    fn id(&self) -> String;
    fn complete(&self, request: &ChatRequest) -> Result<VlmReply>;
}

impl<T: VlmBackend + ?Sized> VlmBackend for Box<T> {
    fn id(&self) -> String {
        (**self).id()
    }
    fn complete(&self, request: &ChatRequest) -> Result<VlmReply> {
        (**self).complete(request)
    }
}

impl<T: VlmBackend + ?Sized> VlmBackend for &T {
    fn id(&self) -> String {
        (**self).id()
    }
    fn complete(&self, request: &ChatRequest) -> Result<VlmReply> {
        (**self).complete(request)
    }
}

impl<T: VlmBackend + ?Sized> VlmBackend for Arc<T> {
    fn id(&self) -> String {
        (**self).id()
    }
    fn complete(&self, request: &ChatRequest) -> Result<VlmReply> {
        (**self).complete(request)
    }
}

/// Validates and forwards to the backend.
pub fn complete(request: &ChatRequest, backend: &dyn VlmBackend) -> Result<VlmReply> {
    request.validate()?;
    backend.complete(request)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InlineImage {
    pub png: Vec<u8>,
    pub base64: String,
    pub media_type: &'static str,
}

impl InlineImage {
    pub fn data_uri(&self) -> String {
        format!("data:{};base64,{}", self.media_type, self.base64)
    }
}

pub fn encode_image(img: &RgbImage) -> Result<InlineImage> {
    if img.width() == 0 || img.height() == 0 {
        return Err(Error::InvalidRequest("cannot encode an empty image".into()));
    }
    let mut png = Vec::new();
    img.write_to(&mut Cursor::new(&mut png), image::ImageFormat::Png)?;
    let base64 = base64::engine::general_purpose::STANDARD.encode(&png);
    Ok(InlineImage {
        png,
        base64,
        media_type: "image/png",
    })
}

pub fn decode_image(payload: &InlineImage) -> Result<RgbImage> {
    let bytes = base64::engine::general_purpose::STANDARD
        .decode(&payload.base64)
        .map_err(|e| Error::Image(e.to_string()))?;
    Ok(image::load_from_memory(&bytes)?.to_rgb8())
}
