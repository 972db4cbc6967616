use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use super::{ProviderError, TextEmbedder};
use crate::text::{content_tokens, words};

/// Cosine similarity; zero when either vector is zero.
pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (*x as f64, *y as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na.sqrt() * nb.sqrt())
    }
}

fn fnv1a(s: &str) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn splitmix(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Offline embedder: each content token maps to a fixed pseudo-random
/// direction and a text embeds as the normalized sum over its distinct
/// tokens. Equal token sets give identical vectors; word order and
/// repetition do not matter.
#[derive(Debug)]
pub struct HashEmbedder {
    dim: usize,
    cache: Mutex<HashMap<String, Arc<Vec<f32>>>>,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        HashEmbedder { dim, cache: Mutex::new(HashMap::new()) }
    }

    fn token_vector(&self, token: &str) -> Arc<Vec<f32>> {
        let mut cache = self.cache.lock().expect("embedder cache poisoned");
        if let Some(v) = cache.get(token) {
            return v.clone();
        }
        let mut state = fnv1a(token);
        let v: Vec<f32> = (0..self.dim)
            .map(|_| ((splitmix(&mut state) >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0) as f32)
            .collect();
        let v = Arc::new(v);
        cache.insert(token.to_string(), v.clone());
        v
    }

    pub fn embed_tokens(&self, tokens: &[String]) -> Result<Vec<f32>, ProviderError> {
        if tokens.is_empty() {
            return Err(ProviderError::EmptyText);
        }
        let mut acc = vec![0.0f64; self.dim];
        for t in tokens {
            for (a, x) in acc.iter_mut().zip(self.token_vector(t).iter()) {
                *a += *x as f64;
            }
        }
        let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
        Ok(acc.iter().map(|v| (v / norm) as f32).collect())
    }
}

impl TextEmbedder for HashEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, ProviderError> {
        let mut tokens = content_tokens(text);
        if tokens.is_empty() {
            // all stopwords: fall back to the raw words
            tokens = words(text);
            tokens.sort();
            tokens.dedup();
        }
        self.embed_tokens(&tokens)
    }
}
