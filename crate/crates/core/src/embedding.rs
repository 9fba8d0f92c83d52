//! Text to unit-vector encoding.
//!
//! Two providers sit behind [`Embedder`]: a deterministic character n-gram
//! feature hasher for offline use, and a client for a remote embeddings
//! endpoint. [`CachedEmbedder`] adds a content-addressed cache in front of
//! either one, optionally persisted to an append-only file.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::exec::Exec;
use crate::linalg::{dot, l2_norm};
use crate::transport::{HttpTransport, RetryPolicy, Transport, TransportError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbedError {
    #[error("text is empty or whitespace-only")]
    EmptyText,
    #[error("text produced an all-zero feature vector")]
    Degenerate,
    #[error("embedding service unavailable: {0}")]
    RemoteUnavailable(String),
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid embedder config: {0}")]
    Config(String),
    #[error("cache i/o: {0}")]
    CacheIo(String),
    #[error("item {index}: {source}")]
    AtIndex {
        index: usize,
        #[source]
        source: Box<EmbedError>,
    },
}

impl EmbedError {
    fn at(self, index: usize) -> Self {
        match self {
            e @ EmbedError::AtIndex { .. } => e,
            e => EmbedError::AtIndex { index, source: Box::new(e) },
        }
    }
}

/// Unit-norm embedding of a text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    /// L2-normalizes `values`. Fails on an empty, zero or non-finite input.
    pub fn normalized(mut values: Vec<f64>) -> Result<Self, EmbedError> {
        let norm = l2_norm(&values);
        if values.is_empty() || norm == 0.0 || !norm.is_finite() {
            return Err(EmbedError::Degenerate);
        }
        for v in &mut values {
            *v /= norm;
        }
        Ok(EmbeddingVector(values))
    }

    /// Wraps values that are already unit norm (e.g. read back from cache).
    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        EmbeddingVector(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn cosine(&self, other: &EmbeddingVector) -> f64 {
        dot(&self.0, &other.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Hash,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedderConfig {
    pub provider_kind: ProviderKind,
    pub dimension: usize,
    pub ngram_range: (usize, usize),
    pub endpoint_url: String,
    pub model_name: String,
    pub auth_token_env: String,
    pub cache_path: Option<PathBuf>,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig {
            provider_kind: ProviderKind::Hash,
            dimension: 128,
            ngram_range: (3, 5),
            endpoint_url: String::new(),
            model_name: String::new(),
            auth_token_env: "EMBEDDING_API_KEY".into(),
            cache_path: None,
        }
    }
}

impl EmbedderConfig {
    pub fn hash(dimension: usize) -> Self {
        EmbedderConfig { dimension, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), EmbedError> {
        if self.dimension < 8 {
            return Err(EmbedError::Config(format!("dimension {} < 8", self.dimension)));
        }
        let (lo, hi) = self.ngram_range;
        if lo == 0 || lo > hi {
            return Err(EmbedError::Config(format!("bad ngram range {lo}..{hi}")));
        }
        if self.provider_kind == ProviderKind::Remote && self.endpoint_url.trim().is_empty() {
            return Err(EmbedError::Config("remote provider requires endpoint_url".into()));
        }
        Ok(())
    }
}

pub trait Embedder: Send + Sync {
    fn dimension(&self) -> usize;

    /// Identifies the provider and its output space; part of every cache key.
    fn namespace(&self) -> String;

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError>;

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| self.embed(t).map_err(|e| e.at(i)))
            .collect()
    }
}

impl<E: Embedder + ?Sized> Embedder for Arc<E> {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn namespace(&self) -> String {
        (**self).namespace()
    }
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        (**self).embed(text)
    }
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        (**self).embed_batch(texts)
    }
}

fn check_text(text: &str) -> Result<(), EmbedError> {
    if text.trim().is_empty() {
        Err(EmbedError::EmptyText)
    } else {
        Ok(())
    }
}

const HASH_SEED: u64 = 0x5eed_a11c_e0f0_2024;

/// Seeded FNV-1a followed by the murmur3 finalizer.
fn hash64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ HASH_SEED;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
    h ^= h >> 33;
    h = h.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    h ^ (h >> 33)
}

/// Signed feature hashing of character n-grams.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dimension: usize,
    min_n: usize,
    max_n: usize,
    exec: Exec,
}

impl HashEmbedder {
    pub fn new(dimension: usize, ngram_range: (usize, usize)) -> Result<Self, EmbedError> {
        EmbedderConfig { dimension, ngram_range, ..Default::default() }.validate()?;
        Ok(HashEmbedder { dimension, min_n: ngram_range.0, max_n: ngram_range.1, exec: Exec::default() })
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    /// Raw signed bucket counts before normalization.
    pub fn features(&self, text: &str) -> Vec<f64> {
        // Lowercase, collapse whitespace, and mark the text boundaries so
        // texts shorter than the smallest n still yield one n-gram.
        let normalized = text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
        let chars: Vec<char> = std::iter::once('<').chain(normalized.chars()).chain(std::iter::once('>')).collect();
        let mut out = vec![0.0; self.dimension];
        let mut buf = String::new();
        for n in self.min_n..=self.max_n {
            let windows: Box<dyn Iterator<Item = &[char]>> = if chars.len() >= n {
                Box::new(chars.windows(n))
            } else if n == self.min_n {
                Box::new(std::iter::once(&chars[..]))
            } else {
                Box::new(std::iter::empty())
            };
            for gram in windows {
                buf.clear();
                buf.extend(gram);
                let h = hash64(buf.as_bytes());
                let bucket = ((h >> 1) % self.dimension as u64) as usize;
                out[bucket] += if h & 1 == 0 { 1.0 } else { -1.0 };
            }
        }
        out
    }
}

impl Embedder for HashEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn namespace(&self) -> String {
        format!("hash:dim={}:ngram={}-{}", self.dimension, self.min_n, self.max_n)
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        check_text(text)?;
        EmbeddingVector::normalized(self.features(text))
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        self.exec.try_map(texts, |i, t| self.embed(t).map_err(|e| e.at(i)))
    }
}

/// Client for an embeddings endpoint speaking
/// `{model, input:[..]} -> {data:[{embedding:[..]}]}`.
pub struct RemoteEmbedder<T: Transport = HttpTransport> {
    transport: T,
    endpoint_url: String,
    model_name: String,
    dimension: usize,
    token: Option<String>,
    retry: RetryPolicy,
}

impl<T: Transport> RemoteEmbedder<T> {
    pub fn new(cfg: &EmbedderConfig, transport: T) -> Result<Self, EmbedError> {
        let cfg = EmbedderConfig { provider_kind: ProviderKind::Remote, ..cfg.clone() };
        cfg.validate()?;
        let token = if cfg.auth_token_env.is_empty() { None } else { std::env::var(&cfg.auth_token_env).ok() };
        Ok(RemoteEmbedder {
            transport,
            endpoint_url: cfg.endpoint_url,
            model_name: cfg.model_name,
            dimension: cfg.dimension,
            token,
            retry: RetryPolicy::default(),
        })
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    fn request(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let body = json!({ "model": self.model_name, "input": texts });
        let resp = self
            .retry
            .run(|| self.transport.post_json(&self.endpoint_url, self.token.as_deref(), &body))
            .map_err(|e: TransportError| EmbedError::RemoteUnavailable(e.to_string()))?;
        let data = resp
            .get("data")
            .and_then(Value::as_array)
            .ok_or_else(|| EmbedError::RemoteUnavailable("response lacks data array".into()))?;
        if data.len() != texts.len() {
            return Err(EmbedError::RemoteUnavailable(format!(
                "asked for {} embeddings, got {}",
                texts.len(),
                data.len()
            )));
        }
        let mut out = Vec::with_capacity(data.len());
        for (i, item) in data.iter().enumerate() {
            out.push(self.parse_item(item).map_err(|e| e.at(i))?);
        }
        Ok(out)
    }

    fn parse_item(&self, item: &Value) -> Result<EmbeddingVector, EmbedError> {
        let values: Vec<f64> = item
            .get("embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| EmbedError::RemoteUnavailable("item lacks embedding".into()))?
            .iter()
            .map(|v| v.as_f64().ok_or_else(|| EmbedError::RemoteUnavailable("non-numeric value".into())))
            .collect::<Result<_, _>>()?;
        if values.len() != self.dimension {
            return Err(EmbedError::DimensionMismatch { expected: self.dimension, got: values.len() });
        }
        EmbeddingVector::normalized(values)
    }
}

impl<T: Transport> Embedder for RemoteEmbedder<T> {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn namespace(&self) -> String {
        format!("remote:{}:dim={}", self.model_name, self.dimension)
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        check_text(text)?;
        let mut v = self.request(&[text.to_string()]).map_err(|e| match e {
            EmbedError::AtIndex { source, .. } => *source,
            e => e,
        })?;
        Ok(v.remove(0))
    }

    /// One bulk request for the whole batch.
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        for (i, t) in texts.iter().enumerate() {
            check_text(t).map_err(|e| e.at(i))?;
        }
        self.request(texts)
    }
}

pub type CacheKey = [u8; 32];

pub fn cache_key(namespace: &str, text: &str) -> CacheKey {
    let mut h = Sha256::new();
    h.update(namespace.as_bytes());
    h.update([0u8]);
    h.update(text.as_bytes());
    h.finalize().into()
}

/// Content-addressed embedding store.
///
/// File layout is a sequence of little-endian records
/// `[key: 32 bytes][dim: u32][f64 × dim][crc32: u32]`, the checksum covering
/// everything before it in the record.
pub struct EmbeddingCache {
    entries: RwLock<HashMap<CacheKey, Vec<f64>>>,
    file: Option<Mutex<File>>,
    corrupt_records: usize,
}

impl EmbeddingCache {
    pub fn in_memory() -> Self {
        EmbeddingCache { entries: RwLock::new(HashMap::new()), file: None, corrupt_records: 0 }
    }

    /// Opens (creating if needed) a cache file and loads every intact record.
    pub fn open(path: &Path) -> Result<Self, EmbedError> {
        let io = |e: std::io::Error| EmbedError::CacheIo(format!("{}: {e}", path.display()));
        let mut entries = HashMap::new();
        let mut corrupt = 0;
        if path.exists() {
            let mut bytes = Vec::new();
            BufReader::new(File::open(path).map_err(io)?).read_to_end(&mut bytes).map_err(io)?;
            let (loaded, bad) = decode_records(&bytes);
            corrupt = bad;
            entries.extend(loaded);
        }
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
        Ok(EmbeddingCache { entries: RwLock::new(entries), file: Some(Mutex::new(file)), corrupt_records: corrupt })
    }

    pub fn get(&self, key: &CacheKey) -> Option<Vec<f64>> {
        self.entries.read().unwrap().get(key).cloned()
    }

    pub fn insert(&self, key: CacheKey, values: &[f64]) -> Result<(), EmbedError> {
        {
            let mut entries = self.entries.write().unwrap();
            if entries.contains_key(&key) {
                return Ok(());
            }
            entries.insert(key, values.to_vec());
        }
        if let Some(file) = &self.file {
            let record = encode_record(&key, values);
            let mut f = file.lock().unwrap();
            f.write_all(&record).map_err(|e| EmbedError::CacheIo(e.to_string()))?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Records skipped on load because of checksum or framing errors.
    pub fn corrupt_records(&self) -> usize {
        self.corrupt_records
    }
}

pub fn encode_record(key: &CacheKey, values: &[f64]) -> Vec<u8> {
    let mut rec = Vec::with_capacity(32 + 4 + 8 * values.len() + 4);
    rec.extend_from_slice(key);
    rec.extend_from_slice(&(values.len() as u32).to_le_bytes());
    for v in values {
        rec.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32fast::hash(&rec);
    rec.extend_from_slice(&crc.to_le_bytes());
    rec
}

/// Decodes as many records as possible. Returns the intact ones and the
/// number of records dropped; a truncated tail counts as one dropped record.
pub fn decode_records(bytes: &[u8]) -> (Vec<(CacheKey, Vec<f64>)>, usize) {
    let mut out = Vec::new();
    let mut bad = 0;
    let mut pos = 0;
    while pos < bytes.len() {
        if bytes.len() - pos < 36 {
            bad += 1;
            break;
        }
        let dim = u32::from_le_bytes(bytes[pos + 32..pos + 36].try_into().unwrap()) as usize;
        let body_len = 36 + 8 * dim;
        if dim > (1 << 20) || bytes.len() - pos < body_len + 4 {
            // Framing is unrecoverable past this point.
            bad += 1;
            log::warn!("embedding cache: truncated or corrupt record at byte {pos}, ignoring the rest");
            break;
        }
        let body = &bytes[pos..pos + body_len];
        let stored = u32::from_le_bytes(bytes[pos + body_len..pos + body_len + 4].try_into().unwrap());
        if crc32fast::hash(body) == stored {
            let key: CacheKey = body[..32].try_into().unwrap();
            let values = body[36..]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            out.push((key, values));
        } else {
            bad += 1;
            log::warn!("embedding cache: checksum mismatch at byte {pos}, treating as miss");
        }
        pos += body_len + 4;
    }
    (out, bad)
}

/// An embedder fronted by a cache keyed on (namespace, text).
pub struct CachedEmbedder<E> {
    inner: E,
    cache: EmbeddingCache,
}

impl<E: Embedder> CachedEmbedder<E> {
    pub fn new(inner: E, cache: EmbeddingCache) -> Self {
        CachedEmbedder { inner, cache }
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }

    pub fn cache(&self) -> &EmbeddingCache {
        &self.cache
    }

    pub fn lookup(&self, text: &str) -> Option<EmbeddingVector> {
        let key = cache_key(&self.inner.namespace(), text);
        let values = self.cache.get(&key)?;
        if values.len() != self.inner.dimension() {
            return None;
        }
        Some(EmbeddingVector::from_raw(values))
    }
}

impl<E: Embedder> Embedder for CachedEmbedder<E> {
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn namespace(&self) -> String {
        self.inner.namespace()
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        check_text(text)?;
        if let Some(v) = self.lookup(text) {
            return Ok(v);
        }
        let v = self.inner.embed(text)?;
        self.cache.insert(cache_key(&self.inner.namespace(), text), v.as_slice())?;
        Ok(v)
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let mut out: Vec<Option<EmbeddingVector>> = Vec::with_capacity(texts.len());
        let mut misses = Vec::new();
        let mut miss_idx = Vec::new();
        for (i, t) in texts.iter().enumerate() {
            check_text(t).map_err(|e| e.at(i))?;
            let hit = self.lookup(t);
            if hit.is_none() {
                misses.push(t.clone());
                miss_idx.push(i);
            }
            out.push(hit);
        }
        if !misses.is_empty() {
            let fresh = self.inner.embed_batch(&misses).map_err(|e| match e {
                EmbedError::AtIndex { index, source } => EmbedError::AtIndex { index: miss_idx[index], source },
                e => e,
            })?;
            let ns = self.inner.namespace();
            for ((i, text), v) in miss_idx.iter().zip(&misses).zip(fresh) {
                self.cache.insert(cache_key(&ns, text), v.as_slice())?;
                out[*i] = Some(v);
            }
        }
        Ok(out.into_iter().map(|v| v.expect("every slot filled")).collect())
    }
}

/// Builds the configured provider, wrapped in a cache when `cache_path` is set.
pub fn build_embedder(cfg: &EmbedderConfig) -> Result<Arc<dyn Embedder>, EmbedError> {
    cfg.validate()?;
    let base: Arc<dyn Embedder> = match cfg.provider_kind {
        ProviderKind::Hash => Arc::new(HashEmbedder::new(cfg.dimension, cfg.ngram_range)?),
        ProviderKind::Remote => Arc::new(RemoteEmbedder::new(cfg, HttpTransport::default())?),
    };
    Ok(match &cfg.cache_path {
        Some(path) => Arc::new(CachedEmbedder::new(base, EmbeddingCache::open(path)?)),
        None => base,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::{CountingTransport, RecordedExchange, RecordedResponse, RecordedTransport, RequestMatcher};

    fn hash64e() -> HashEmbedder {
        HashEmbedder::new(64, (3, 5)).unwrap()
    }

    #[test]
    fn hash_embedding_is_unit_norm_and_deterministic() {
        let e = hash64e();
        let a = e.embed("abc").unwrap();
        let b = e.embed("abc").unwrap();
        assert_eq!(a.dim(), 64);
        assert!((l2_norm(a.as_slice()) - 1.0).abs() <= 1e-9);
        assert_eq!(a, b);
    }

    #[test]
    fn empty_text_is_rejected() {
        let e = hash64e();
        assert_eq!(e.embed(""), Err(EmbedError::EmptyText));
        assert_eq!(e.embed("  \t\n"), Err(EmbedError::EmptyText));
        let err = e.embed_batch(&["ok".into(), " ".into()]).unwrap_err();
        assert!(matches!(err, EmbedError::AtIndex { index: 1, .. }));
    }

    #[test]
    fn single_character_texts_embed() {
        let e = hash64e();
        let out = e.embed_batch(&["a".into(), "b".into()]).unwrap();
        assert_eq!(out, vec![e.embed("a").unwrap(), e.embed("b").unwrap()]);
        assert!(e.embed_batch(&[]).unwrap().is_empty());
    }

    #[test]
    fn distinct_texts_have_cosine_below_one() {
        let e = hash64e();
        let a = e.embed("ask for price").unwrap();
        let b = e.embed("compare products").unwrap();
        assert!((a.cosine(&a) - 1.0).abs() < 1e-12);
        assert!(a.cosine(&b) < 1.0);
    }

    #[test]
    fn config_validation() {
        assert!(EmbedderConfig::hash(4).validate().is_err());
        let mut c = EmbedderConfig::hash(16);
        c.ngram_range = (5, 3);
        assert!(c.validate().is_err());
        let c = EmbedderConfig { provider_kind: ProviderKind::Remote, ..EmbedderConfig::hash(16) };
        assert!(c.validate().is_err());
    }

    fn remote_cfg(dim: usize) -> EmbedderConfig {
        EmbedderConfig {
            provider_kind: ProviderKind::Remote,
            dimension: dim,
            endpoint_url: "http://embed.test/v1/embeddings".into(),
            model_name: "m".into(),
            auth_token_env: String::new(),
            ..Default::default()
        }
    }

    fn reply(vectors: Vec<Vec<f64>>) -> RecordedExchange {
        RecordedExchange {
            request: RequestMatcher { url_contains: Some("/v1/embeddings".into()), body_contains: None },
            response: RecordedResponse {
                status: 200,
                body: json!({ "data": vectors.into_iter().map(|v| json!({"embedding": v})).collect::<Vec<_>>() }),
            },
        }
    }

    #[test]
    fn remote_rejects_wrong_width() {
        let t = RecordedTransport::new(vec![reply(vec![vec![1.0; 7]])]);
        let e = RemoteEmbedder::new(&remote_cfg(8), t).unwrap().with_retry(RetryPolicy::none());
        assert_eq!(e.embed("hi"), Err(EmbedError::DimensionMismatch { expected: 8, got: 7 }));
    }

    #[test]
    fn remote_normalizes_and_batches() {
        let t = CountingTransport::new(RecordedTransport::new(vec![reply(vec![vec![3.0; 8], vec![0.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]])]));
        let e = RemoteEmbedder::new(&remote_cfg(8), t).unwrap();
        let out = e.embed_batch(&["a".into(), "b".into()]).unwrap();
        assert!((l2_norm(out[0].as_slice()) - 1.0).abs() < 1e-12);
        assert_eq!(out[1].as_slice()[1], 1.0);
        assert_eq!(e.transport.calls(), 1);
    }

    #[test]
    fn remote_failure_after_retries() {
        let bad = RecordedExchange {
            request: RequestMatcher::default(),
            response: RecordedResponse { status: 503, body: Value::Null },
        };
        let t = CountingTransport::new(RecordedTransport::new(vec![bad; 4]));
        let e = RemoteEmbedder::new(&remote_cfg(8), t)
            .unwrap()
            .with_retry(RetryPolicy { retries: 3, initial: std::time::Duration::from_millis(1) });
        assert!(matches!(e.embed("x"), Err(EmbedError::RemoteUnavailable(_))));
        assert_eq!(e.transport.calls(), 4);
    }

    #[test]
    fn cache_lookup_miss_then_hit() {
        let c = CachedEmbedder::new(hash64e(), EmbeddingCache::in_memory());
        assert!(c.lookup("x").is_none());
        let v = c.embed("x").unwrap();
        assert_eq!(c.lookup("x"), Some(v));
    }

    #[test]
    fn cache_key_includes_dimension() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.cache");
        let small = CachedEmbedder::new(hash64e(), EmbeddingCache::open(&path).unwrap());
        small.embed("x").unwrap();
        drop(small);
        let big = CachedEmbedder::new(HashEmbedder::new(128, (3, 5)).unwrap(), EmbeddingCache::open(&path).unwrap());
        assert_eq!(big.cache().len(), 1);
        assert!(big.lookup("x").is_none());
    }

    #[test]
    fn cache_file_round_trips_bitwise_and_skips_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.cache");
        let texts: Vec<String> = ["alpha", "beta", "gamma"].iter().map(|s| s.to_string()).collect();
        let fresh = {
            let c = CachedEmbedder::new(hash64e(), EmbeddingCache::open(&path).unwrap());
            c.embed_batch(&texts).unwrap()
        };
        // Flip one byte inside the second record's payload.
        let mut bytes = std::fs::read(&path).unwrap();
        let rec_len = 32 + 4 + 8 * 64 + 4;
        bytes[rec_len + 40] ^= 0xff;
        std::fs::write(&path, &bytes).unwrap();

        let c = CachedEmbedder::new(hash64e(), EmbeddingCache::open(&path).unwrap());
        assert_eq!(c.cache().corrupt_records(), 1);
        assert_eq!(c.lookup("alpha"), Some(fresh[0].clone()));
        assert!(c.lookup("beta").is_none());
        assert_eq!(c.embed("beta").unwrap(), fresh[1]);
    }

    #[test]
    fn warm_cache_makes_no_remote_calls() {
        let texts: Vec<String> = (0..1000).map(|i| format!("text number {i}")).collect();
        let vectors: Vec<Vec<f64>> = (0..1000).map(|i| (0..8).map(|j| ((i * 8 + j) % 7) as f64 + 1.0).collect()).collect();
        let transport = Arc::new(CountingTransport::new(RecordedTransport::new(vec![reply(vectors)])));
        let remote = RemoteEmbedder::new(&remote_cfg(8), transport.clone()).unwrap();
        let c = CachedEmbedder::new(remote, EmbeddingCache::in_memory());
        let first = c.embed_batch(&texts).unwrap();
        assert_eq!(transport.calls(), 1);
        let second = c.embed_batch(&texts).unwrap();
        assert_eq!(transport.calls(), 1);
        assert_eq!(first, second);
    }
}
