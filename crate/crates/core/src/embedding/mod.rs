//! Instruction templating and vectorization of documents and queries.

mod cache;
mod presets;

pub use cache::{CacheError, EmbeddingCache};
pub use presets::{DocFormat, InstructionPreset, PresetError, PresetPair, Side, DEFAULT_PRESET};

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::time::Duration;

use parking_lot::Mutex;

use crate::provider::{Embedder, ProviderError};

pub const DEFAULT_TRUNCATE_CHARS: usize = 4096;

/// A unit-norm embedding with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    pub values: Vec<f32>,
    pub provider_id: String,
    pub preset_id: String,
}

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Substitutes `text` into the preset's placeholder.
pub fn apply_instruction(preset: &InstructionPreset, text: &str) -> String {
    let (prefix, suffix) = preset.parts();
    let mut out = String::with_capacity(prefix.len() + text.len() + suffix.len());
    out.push_str(prefix);
    out.push_str(text);
    out.push_str(suffix);
    out
}

/// Keeps at most `limit` characters, cutting only at character boundaries.
pub fn truncate_chars(text: &str, limit: usize) -> &str {
    match text.char_indices().nth(limit) {
        Some((byte, _)) => &text[..byte],
        None => text,
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NormalizeError {
    #[error("cannot normalize a zero vector")]
    Zero,
    #[error("vector has a non-finite component")]
    NonFinite,
}

/// Scales `values` to unit L2 norm.
pub fn normalize(values: &[f32]) -> Result<Vec<f32>, NormalizeError> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(NormalizeError::NonFinite);
    }
    let norm = values
        .iter()
        .map(|&v| f64::from(v) * f64::from(v))
        .sum::<f64>()
        .sqrt();
    if norm == 0.0 {
        return Err(NormalizeError::Zero);
    }
    Ok(values.iter().map(|&v| (f64::from(v) / norm) as f32).collect())
}

pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Deterministic offline embedding: character trigrams hashed into `dim`
/// buckets, counted, then L2-normalized. Texts shorter than three characters
/// count as a single gram; the empty text maps to the first basis vector.
pub fn mock_embed(text: &str, dim: usize) -> EmbeddingVector {
    assert!(dim >= 8, "mock embedding dimension must be at least 8");
    let mut counts = vec![0f32; dim];
    let chars: Vec<char> = text.chars().collect();
    if chars.is_empty() {
        counts[0] = 1.0;
    } else if chars.len() < 3 {
        counts[(fnv1a(text.as_bytes()) % dim as u64) as usize] += 1.0;
    } else {
        let mut buf = String::with_capacity(12);
        for w in chars.windows(3) {
            buf.clear();
            buf.extend(w);
            counts[(fnv1a(buf.as_bytes()) % dim as u64) as usize] += 1.0;
        }
    }
    EmbeddingVector {
        values: normalize(&counts).expect("counts are non-zero"),
        provider_id: format!("mock-trigram-{dim}"),
        preset_id: String::new(),
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error("embedding provider failed: {0}")]
    Provider(#[from] ProviderError),
    #[error("provider returned an unusable vector: {0}")]
    Vector(#[from] NormalizeError),
    #[error(transparent)]
    Cache(#[from] CacheError),
}

#[derive(Debug, Clone)]
pub struct EmbedOptions {
    pub batch_size: usize,
    pub concurrency: usize,
    /// Extra attempts after a transient provider failure.
    pub max_retries: u32,
    pub retry_backoff: Duration,
    pub truncate_limit: usize,
}

impl Default for EmbedOptions {
    fn default() -> Self {
        EmbedOptions {
            batch_size: 32,
            concurrency: 4,
            max_retries: 2,
            retry_backoff: Duration::from_millis(200),
            truncate_limit: DEFAULT_TRUNCATE_CHARS,
        }
    }
}

/// The exact string sent to the provider for `text`: instruction applied,
/// then truncated so the instruction always survives.
pub fn prepare_input(preset: &InstructionPreset, text: &str, limit: usize) -> String {
    truncate_chars(&apply_instruction(preset, text), limit).to_string()
}

fn call_with_retries(
    provider: &dyn Embedder,
    inputs: &[String],
    opts: &EmbedOptions,
) -> Result<Vec<Vec<f32>>, ProviderError> {
    let mut attempt = 0;
    loop {
        match provider.embed(inputs) {
            Ok(v) => return Ok(v),
            Err(e) if e.is_transient() && attempt < opts.max_retries => {
                tracing::warn!(attempt, error = %e, "embedding call failed; retrying");
                std::thread::sleep(opts.retry_backoff * 2u32.pow(attempt));
                attempt += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

/// Embeds `texts` under `preset`, in input order. Cache hits skip the
/// provider; duplicate texts are sent once. Completed batches are written to
/// the cache even when a later batch fails.
pub fn embed_batch(
    texts: &[&str],
    preset: &InstructionPreset,
    provider: &dyn Embedder,
    cache: Option<&EmbeddingCache>,
    opts: &EmbedOptions,
) -> Result<Vec<EmbeddingVector>, EmbedError> {
    let inputs: Vec<String> = texts
        .iter()
        .map(|t| prepare_input(preset, t, opts.truncate_limit))
        .collect();
    let keys: Vec<[u8; 32]> = inputs
        .iter()
        .map(|i| EmbeddingCache::key(provider.id(), &preset.preset_id, i))
        .collect();

    let mut resolved: Vec<Option<std::sync::Arc<[f32]>>> = keys
        .iter()
        .map(|k| cache.and_then(|c| c.get(k)))
        .collect();

    let mut pending: Vec<usize> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, slot) in resolved.iter().enumerate() {
        if slot.is_none() && seen.insert(keys[i]) {
            pending.push(i);
        }
    }

    let fresh: Mutex<std::collections::HashMap<[u8; 32], std::sync::Arc<[f32]>>> =
        Mutex::new(Default::default());
    let batches: Vec<&[usize]> = pending.chunks(opts.batch_size.max(1)).collect();
    let next = AtomicUsize::new(0);
    let failed = AtomicBool::new(false);
    let error: Mutex<Option<EmbedError>> = Mutex::new(None);
    let workers = opts.concurrency.max(1).min(batches.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| {
                while !failed.load(Ordering::SeqCst) {
                    let n = next.fetch_add(1, Ordering::SeqCst);
                    let Some(batch) = batches.get(n) else { break };
                    if let Err(e) = embed_one_batch(batch, &inputs, &keys, provider, cache, opts, &fresh) {
                        failed.store(true, Ordering::SeqCst);
                        error.lock().get_or_insert(e);
                    }
                }
            });
        }
    });
    if let Some(e) = error.into_inner() {
        return Err(e);
    }

    let fresh = fresh.into_inner();
    for (i, slot) in resolved.iter_mut().enumerate() {
        if slot.is_none() {
            *slot = fresh.get(&keys[i]).cloned();
        }
    }
    Ok(resolved
        .into_iter()
        .map(|v| EmbeddingVector {
            values: v.expect("every key resolved").to_vec(),
            provider_id: provider.id().to_string(),
            preset_id: preset.preset_id.clone(),
        })
        .collect())
}

fn embed_one_batch(
    batch: &[usize],
    inputs: &[String],
    keys: &[[u8; 32]],
    provider: &dyn Embedder,
    cache: Option<&EmbeddingCache>,
    opts: &EmbedOptions,
    fresh: &Mutex<std::collections::HashMap<[u8; 32], std::sync::Arc<[f32]>>>,
) -> Result<(), EmbedError> {
    let batch_inputs: Vec<String> = batch.iter().map(|&i| inputs[i].clone()).collect();
    let raw = call_with_retries(provider, &batch_inputs, opts)?;
    if raw.len() != batch.len() {
        return Err(ProviderError::Malformed(format!(
            "expected {} vectors, got {}",
            batch.len(),
            raw.len()
        ))
        .into());
    }
    let mut out = Vec::with_capacity(batch.len());
    for (&i, values) in batch.iter().zip(raw) {
        if values.len() != provider.dim() {
            return Err(ProviderError::DimensionMismatch {
                expected: provider.dim(),
                got: values.len(),
            }
            .into());
        }
        let unit: std::sync::Arc<[f32]> = normalize(&values)?.into();
        out.push((keys[i], unit));
    }
    if let Some(cache) = cache {
        cache.insert_many(&out)?;
    }
    fresh.lock().extend(out);
    Ok(())
}
