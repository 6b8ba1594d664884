use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use super::{ChatExchange, ChatProvider, Message};
use crate::error::{Error, Result};

pub enum CacheMode {
    /// Serve hits from the cache, forward misses to the inner provider and store them.
    Record(Box<dyn ChatProvider>),
    /// Serve hits only; a miss is an error.
    Strict,
}

/// Content-addressed exchange cache. One file per prompt digest holding
/// every recorded exchange for that prompt, in request order; the n-th
/// request for a digest within a session maps to the n-th recording.
pub struct ReplayCache {
    dir: PathBuf,
    mode: CacheMode,
    state: Mutex<HashMap<String, usize>>,
}

impl ReplayCache {
    pub fn new(dir: impl Into<PathBuf>, mode: CacheMode) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(ReplayCache {
            dir,
            mode,
            state: Mutex::new(HashMap::new()),
        })
    }

    fn path(&self, digest: &str) -> PathBuf {
        self.dir.join(format!("{digest}.json"))
    }

    fn read(path: &Path) -> Result<Vec<ChatExchange>> {
        match fs::read_to_string(path) {
            Ok(text) => Ok(serde_json::from_str(&text)?),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
            Err(e) => Err(Error::io(path, e)),
        }
    }

    fn write(&self, path: &Path, records: &[ChatExchange]) -> Result<()> {
        let tmp = path.with_extension("json.tmp");
        let text = serde_json::to_string_pretty(records)?;
        fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }
}

impl ChatProvider for ReplayCache {
    fn complete(&self, messages: &[Message], temperature: f64, digest: &str) -> Result<ChatExchange> {
        // Held across the inner call so cache writes are serialized.
        let mut occurrences = self.state.lock().unwrap();
        let n = occurrences.entry(digest.to_string()).or_insert(0);
        let path = self.path(digest);
        let mut records = Self::read(&path)?;
        if let Some(hit) = records.get(*n) {
            *n += 1;
            return Ok(hit.clone());
        }
        match &self.mode {
            CacheMode::Strict => Err(Error::CacheMiss(digest.to_string())),
            CacheMode::Record(inner) => {
                let exchange = inner.complete(messages, temperature, digest)?;
                records.push(exchange.clone());
                self.write(&path, &records)?;
                *n += 1;
                Ok(exchange)
            }
        }
    }
}
