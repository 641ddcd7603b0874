//! Hashed character-trigram embeddings and keyword/embedding feature screening.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use soilfuse_core::FeatureDef;

pub const EMBEDDING_DIM: usize = 256;

const FNV_OFFSET: u32 = 0x811c_9dc5;
const FNV_PRIME: u32 = 0x0100_0193;

pub fn fnv1a32(bytes: &[u8]) -> u32 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ b as u32).wrapping_mul(FNV_PRIME))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub vector: Vec<f64>,
    /// False for the zero vector produced by text without trigrams.
    pub is_unit: bool,
}

impl Embedding {
    pub fn cosine(&self, other: &Embedding) -> f64 {
        if !self.is_unit || !other.is_unit {
            return 0.0;
        }
        self.vector.iter().zip(&other.vector).map(|(a, b)| a * b).sum::<f64>().clamp(-1.0, 1.0)
    }
}

/// Lowercases `s`, hashes each character trigram (UTF-8 bytes, FNV-1a) into
/// one of 256 buckets, and L2-normalizes the counts. Text shorter than three
/// characters yields the zero vector.
pub fn embed_text(s: &str) -> Embedding {
    let chars: Vec<char> = s.to_lowercase().chars().collect();
    let mut vector = vec![0.0; EMBEDDING_DIM];
    let mut buf = [0u8; 12];
    for w in chars.windows(3) {
        let mut n = 0;
        for c in w {
            n += c.encode_utf8(&mut buf[n..]).len();
        }
        vector[fnv1a32(&buf[..n]) as usize % EMBEDDING_DIM] += 1.0;
    }
    let norm = vector.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Embedding { vector, is_unit: false };
    }
    vector.iter_mut().for_each(|v| *v /= norm);
    Embedding { vector, is_unit: true }
}

/// Lowercased alphanumeric tokens.
pub fn tokenize(s: &str) -> BTreeSet<String> {
    s.to_lowercase().split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_owned).collect()
}

pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureEmbedding {
    pub feature_id: String,
    pub name: String,
    pub keywords: BTreeSet<String>,
    pub embedding: Embedding,
}

impl FeatureEmbedding {
    /// Keywords come from name and annotation; the vector embeds the name.
    pub fn from_def(def: &FeatureDef) -> Self {
        let mut keywords = tokenize(&def.name);
        keywords.extend(tokenize(&def.annotation));
        FeatureEmbedding { feature_id: def.id.clone(), name: def.name.clone(), keywords, embedding: embed_text(&def.name) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScreeningWeights {
    pub keyword: f64,
    pub embedding: f64,
}

impl Default for ScreeningWeights {
    fn default() -> Self {
        ScreeningWeights { keyword: 0.5, embedding: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScreenHit {
    pub feature_id: String,
    pub name: String,
    pub score: f64,
    pub keyword_score: f64,
    pub embedding_score: f64,
}

/// Ranks features by weighted keyword Jaccard plus embedding cosine.
/// Zero scores are dropped; ties go to the smaller feature id.
pub fn screen_features(query: &str, k: usize, index: &[FeatureEmbedding], weights: ScreeningWeights) -> Vec<ScreenHit> {
    let tokens = tokenize(query);
    let q = embed_text(query);
    let mut hits: Vec<ScreenHit> = index
        .iter()
        .map(|f| {
            let keyword_score = jaccard(&tokens, &f.keywords);
            let embedding_score = q.cosine(&f.embedding).max(0.0);
            ScreenHit {
                feature_id: f.feature_id.clone(),
                name: f.name.clone(),
                score: weights.keyword * keyword_score + weights.embedding * embedding_score,
                keyword_score,
                embedding_score,
            }
        })
        .filter(|h| h.score > 0.0)
        .collect();
    hits.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.feature_id.cmp(&b.feature_id)));
    hits.truncate(k);
    hits
}
