use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use sha2::{Digest, Sha256};

use super::{ChatRequest, UserPart, VlmBackend, VlmReply};
use crate::{Error, Result};

/// Content-addressed reply cache in front of another backend.
pub struct CacheBackend<B> {
    inner: B,
    dir: PathBuf,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl<B: VlmBackend> CacheBackend<B> {
    pub fn new(inner: B, dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self {
            inner,
            dir,
            locks: Mutex::new(HashMap::new()),
            hits: AtomicUsize::new(0),
            misses: AtomicUsize::new(0),
        })
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }

    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::SeqCst)
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }

    pub fn entry_path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    fn key_lock(&self, key: &str) -> Arc<Mutex<()>> {
        self.locks.lock().unwrap().entry(key.to_string()).or_default().clone()
    }
}

fn read_entry(path: &Path) -> Result<Option<VlmReply>> {
    match fs::read_to_string(path) {
        Ok(text) => serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| Error::CacheCorrupt(format!("{}: {e}", path.display()))),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(Error::io(path, e)),
    }
}

/// Hex SHA-256 over every field that influences the reply.
pub fn cache_key(request: &ChatRequest) -> String {
    let mut h = Sha256::new();
    let mut field = |tag: &[u8], bytes: &[u8]| {
        h.update(tag);
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(bytes);
    };
    field(b"model", request.model_name.as_bytes());
    field(b"temp", &request.temperature.to_le_bytes());
    field(b"system", request.system_text.as_bytes());
    let turns = request
        .history
        .iter()
        .map(|t| (format!("{:?}", t.role), &t.parts))
        .chain(std::iter::once(("User".to_string(), &request.user_parts)));
    for (role, parts) in turns {
        field(b"turn", role.as_bytes());
        for p in parts {
            match p {
                UserPart::Text(t) => field(b"text", t.as_bytes()),
                UserPart::Image(img) => {
                    let mut dims = img.width().to_le_bytes().to_vec();
                    dims.extend(img.height().to_le_bytes());
                    field(b"imgdim", &dims);
                    field(b"img", img.as_raw());
                }
            }
        }
    }
    hex::encode(h.finalize())
}

impl<B: VlmBackend> VlmBackend for CacheBackend<B> {
    fn id(&self) -> String {
        format!("cache({})", self.inner.id())
    }

    fn complete(&self, request: &ChatRequest) -> Result<VlmReply> {
        let key = cache_key(request);
        let path = self.entry_path(&key);
        let lock = self.key_lock(&key);
        let _guard = lock.lock().unwrap();
        if let Some(reply) = read_entry(&path)? {
            self.hits.fetch_add(1, Ordering::SeqCst);
            return Ok(reply);
        }
        self.misses.fetch_add(1, Ordering::SeqCst);
        let reply = self.inner.complete(request)?;
        let tmp = self.dir.join(format!(".{key}.{}.tmp", std::process::id()));
        fs::write(&tmp, serde_json::to_vec_pretty(&reply)?).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        Ok(reply)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vlm::{MatchRule, ScriptRule, ScriptedBackend, ScriptedTranscript};
    use image::{Rgb, RgbImage};

    fn backend() -> ScriptedBackend {
        ScriptedBackend::new(
            ScriptedTranscript::new(
                vec![ScriptRule {
                    matcher: MatchRule::default(),
                    response: "ok".into(),
                    note: None,
                }],
                true,
            )
            .unwrap(),
        )
    }

    #[test]
    fn second_call_is_a_hit() {
        let dir = tempfile::tempdir().unwrap();
        let c = CacheBackend::new(backend(), dir.path()).unwrap();
        let r = ChatRequest::new("s", vec![UserPart::Text("x".into())]);
        let a = c.complete(&r).unwrap();
        let b = c.complete(&r).unwrap();
        assert_eq!(a, b);
        assert_eq!(c.inner().calls(), 1);
        assert_eq!((c.hits(), c.misses()), (1, 1));
    }

    #[test]
    fn key_depends_on_image_bytes_and_temperature() {
        let img = |v| Arc::new(RgbImage::from_pixel(2, 2, Rgb([v, 0, 0])));
        let a = ChatRequest::new("s", vec![UserPart::Image(img(1))]);
        let b = ChatRequest::new("s", vec![UserPart::Image(img(2))]);
        assert_ne!(cache_key(&a), cache_key(&b));
        let mut c = a.clone();
        c.temperature = 0.5;
        assert_ne!(cache_key(&a), cache_key(&c));
        assert_eq!(cache_key(&a), cache_key(&a.clone()));
        assert_eq!(cache_key(&a).len(), 64);
    }

    #[test]
    fn corrupt_entry_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let c = CacheBackend::new(backend(), dir.path()).unwrap();
        let r = ChatRequest::new("s", vec![UserPart::Text("x".into())]);
        fs::write(c.entry_path(&cache_key(&r)), "{not json").unwrap();
        assert!(matches!(c.complete(&r), Err(Error::CacheCorrupt(_))));
    }
}
