//! Fixture store layout: one file per rendered prompt,
//! `<dir>/<prompt-sha256>.json`, holding every recorded response for that
//! prompt keyed by formatted temperature and attempt number.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{temperature_key, ClientError, ClientTranscript, CompletionRequest, ModelClient};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub temperature: String,
    pub attempt: u32,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureFile {
    pub prompt_sha256: String,
    pub entries: Vec<FixtureEntry>,
}

impl FixtureFile {
    pub fn lookup(&self, temperature: &str, attempt: u32) -> Option<&str> {
        self.entries
            .iter()
            .find(|e| e.attempt == attempt && e.temperature == temperature)
            .map(|e| e.response.as_str())
    }
}

/// Concurrent reads, serialized writes.
#[derive(Debug)]
pub struct FixtureStore {
    dir: PathBuf,
    write_lock: Mutex<()>,
}

impl FixtureStore {
    pub fn open(dir: impl Into<PathBuf>) -> Self {
        FixtureStore {
            dir: dir.into(),
            write_lock: Mutex::new(()),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, prompt_sha256: &str) -> PathBuf {
        self.dir.join(format!("{prompt_sha256}.json"))
    }

    pub fn load(&self, prompt_sha256: &str) -> Result<Option<FixtureFile>, ClientError> {
        let path = self.path(prompt_sha256);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| ClientError::Store(format!("{}: {e}", path.display())))
    }

    pub fn get(&self, prompt_sha256: &str, temperature: &str, attempt: u32) -> Result<Option<String>, ClientError> {
        Ok(self
            .load(prompt_sha256)?
            .and_then(|f| f.lookup(temperature, attempt).map(str::to_string)))
    }

    /// Inserts or replaces one response. Files are rewritten atomically with
    /// entries sorted by attempt then temperature.
    pub fn put(&self, prompt_sha256: &str, temperature: &str, attempt: u32, response: &str) -> Result<(), ClientError> {
        let _guard = self.write_lock.lock().unwrap_or_else(|e| e.into_inner());
        fs::create_dir_all(&self.dir)?;
        let mut file = self.load(prompt_sha256)?.unwrap_or_else(|| FixtureFile {
            prompt_sha256: prompt_sha256.to_string(),
            entries: Vec::new(),
        });
        file.entries.retain(|e| !(e.attempt == attempt && e.temperature == temperature));
        file.entries.push(FixtureEntry {
            temperature: temperature.to_string(),
            attempt,
            response: response.to_string(),
        });
        file.entries
            .sort_by(|a, b| a.attempt.cmp(&b.attempt).then_with(|| a.temperature.cmp(&b.temperature)));

        let mut text = serde_json::to_string_pretty(&file).map_err(|e| ClientError::Store(e.to_string()))?;
        text.push('\n');
        let path = self.path(prompt_sha256);
        let tmp = path.with_extension("json.tmp");
        {
            let mut out = fs::File::create(&tmp)?;
            out.write_all(text.as_bytes())?;
            out.sync_all()?;
        }
        fs::rename(&tmp, &path)?;
        Ok(())
    }
}

/// Stores every response of a transcript; returns the fixture id (the
/// prompt hash).
pub fn record_fixture(transcript: &ClientTranscript, store: &FixtureStore) -> Result<String, ClientError> {
    let id = super::prompt_sha256(&transcript.prompt.system, &transcript.prompt.user);
    for a in &transcript.attempts {
        if let Some(resp) = &a.response {
            store.put(&id, &temperature_key(a.temperature), a.attempt, resp)?;
        }
    }
    Ok(id)
}

/// Serves recorded responses; a miss is an error, never a live call.
pub struct ReplayClient<'a> {
    store: &'a FixtureStore,
}

impl<'a> ReplayClient<'a> {
    pub fn new(store: &'a FixtureStore) -> Self {
        ReplayClient { store }
    }
}

impl ModelClient for ReplayClient<'_> {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, ClientError> {
        let hash = request.prompt_sha256();
        let temperature = temperature_key(request.temperature);
        self.store
            .get(&hash, &temperature, request.attempt)?
            .ok_or(ClientError::FixtureMiss {
                prompt_sha256: hash,
                temperature,
                attempt: request.attempt,
            })
    }
}

/// Forwards to an inner client and records each response.
pub struct RecordingClient<'a, C> {
    inner: C,
    store: &'a FixtureStore,
}

impl<'a, C: ModelClient> RecordingClient<'a, C> {
    pub fn new(inner: C, store: &'a FixtureStore) -> Self {
        RecordingClient { inner, store }
    }
}

impl<C: ModelClient> ModelClient for RecordingClient<'_, C> {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, ClientError> {
        let response = self.inner.complete(request)?;
        self.store.put(
            &request.prompt_sha256(),
            &temperature_key(request.temperature),
            request.attempt,
            &response,
        )?;
        Ok(response)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req<'a>(user: &'a str, attempt: u32) -> CompletionRequest<'a> {
        CompletionRequest {
            system: "s",
            user,
            temperature: 0.2 + 0.2 * f64::from(attempt),
            max_tokens: 512,
            attempt,
        }
    }

    #[test]
    fn record_then_replay() {
        let dir = tempfile::tempdir().unwrap();
        let store = FixtureStore::open(dir.path());
        let scripted = super::super::ScriptedClient::new(vec![Ok("{\n \"a\": 1 }\u{e9}".into())]);
        let rec = RecordingClient::new(scripted, &store);
        let original = rec.complete(&req("u", 0)).unwrap();
        let replayed = ReplayClient::new(&store).complete(&req("u", 0)).unwrap();
        assert_eq!(original.as_bytes(), replayed.as_bytes());
    }

    #[test]
    fn miss_is_explicit() {
        let dir = tempfile::tempdir().unwrap();
        let store = FixtureStore::open(dir.path());
        store.put(&req("u", 0).prompt_sha256(), "0.2000", 0, "x").unwrap();
        let replay = ReplayClient::new(&store);
        assert!(matches!(replay.complete(&req("other", 0)), Err(ClientError::FixtureMiss { .. })));
        assert!(matches!(replay.complete(&req("u", 1)), Err(ClientError::FixtureMiss { attempt: 1, .. })));
    }
}
