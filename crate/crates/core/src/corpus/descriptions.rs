use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::vocab::{EntityKind, Vocabulary};
use crate::error::{Error, Result};

/// Mapping-file title that supplies the description for otherwise unmapped titles.
pub const DEFAULT_DESCRIPTION_KEY: &str = "<default>";

/// FNV-1a, 64 bit. Stable across platforms and releases.
pub fn stable_hash(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes
        .iter()
        .fold(OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(PRIME))
}

/// Deterministic unit vector standing in for a pretrained description encoding.
///
/// The text hash seeds a ChaCha stream from which `dim` standard normals are
/// drawn and normalized.
pub fn fallback_embedding(text: &str, dim: usize) -> Result<Vec<f64>> {
    if text.is_empty() {
        return Err(Error::Empty("fallback_embedding text".into()));
    }
    if dim < 2 {
        return Err(Error::Config(format!("embedding dimension must be >= 2, got {dim}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(stable_hash(text.as_bytes()));
    let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    Ok(v)
}

#[derive(Deserialize)]
struct MappingRecord {
    title: String,
    description: String,
}

#[derive(Deserialize)]
struct EmbeddingRecord {
    key: String,
    vector: Vec<f64>,
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
            path: path.to_path_buf(),
            line: i + 1,
            reason: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Reads `{"title", "description"}` lines into an ordered list of pairs.
pub fn read_mapping_file(path: &Path) -> Result<Vec<(String, String)>> {
    Ok(read_jsonl::<MappingRecord>(path)?
        .into_iter()
        .map(|r| (r.title, r.description))
        .collect())
}

/// Reads `{"key", "vector"}` lines. All vectors must share one dimension.
pub fn read_embedding_file(path: &Path) -> Result<HashMap<String, Vec<f64>>> {
    let records = read_jsonl::<EmbeddingRecord>(path)?;
    let mut out = HashMap::with_capacity(records.len());
    let mut dim = None;
    for r in records {
        let expected = *dim.get_or_insert(r.vector.len());
        if r.vector.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: r.vector.len(),
                context: format!("embedding for `{}`", r.key),
            });
        }
        out.insert(r.key, r.vector);
    }
    Ok(out)
}

/// Title → description text and vector. One description node per distinct text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptionTable {
    dim: usize,
    descriptions: Vocabulary,
    vectors: Vec<Vec<f64>>,
    title_to_desc: Vec<Option<u32>>,
}

impl DescriptionTable {
    /// Builds the table for every non-UNK title of `titles`.
    ///
    /// `mapping` pairs title names with description texts; a title named
    /// [`DEFAULT_DESCRIPTION_KEY`] covers unmapped titles (and UNK). Vectors
    /// come from `embeddings` keyed by title name, falling back to the
    /// default key, or from [`fallback_embedding`] with `fallback_dim` when no
    /// embeddings are supplied.
    pub fn build(
        titles: &Vocabulary,
        mapping: &[(String, String)],
        embeddings: Option<&HashMap<String, Vec<f64>>>,
        fallback_dim: usize,
    ) -> Result<Self> {
        let mut by_title: HashMap<&str, &str> = HashMap::new();
        let mut seen_text: HashMap<&str, &str> = HashMap::new();
        for (title, text) in mapping {
            if text.is_empty() {
                return Err(Error::Empty(format!("description text for `{title}`")));
            }
            if title != DEFAULT_DESCRIPTION_KEY {
                if let Some(prev) = seen_text.insert(text.as_str(), title.as_str()) {
                    if prev != title {
                        return Err(Error::NonInjectiveMapping(text.clone()));
                    }
                }
            }
            by_title.insert(title.as_str(), text.as_str());
        }
        let default_text = by_title.get(DEFAULT_DESCRIPTION_KEY).copied();

        let dim = match embeddings {
            Some(map) => map
                .values()
                .next()
                .map(Vec::len)
                .ok_or_else(|| Error::Empty("embedding file".into()))?,
            None => fallback_dim,
        };
        let mut descriptions = Vocabulary::new(EntityKind::Description);
        let mut vectors = vec![fallback_embedding(Vocabulary::UNK_TOKEN, dim)?];
        let mut title_to_desc = vec![None; titles.len()];

        let mut resolve = |title: &str, explicit: Option<&str>| -> Result<Option<u32>> {
            let (text, key) = match explicit {
                Some(t) => (t, title),
                None => match default_text {
                    Some(t) => (t, DEFAULT_DESCRIPTION_KEY),
                    None => return Ok(None),
                },
            };
            if let Some(id) = descriptions.get(text) {
                return Ok(Some(id));
            }
            let vector = match embeddings {
                Some(map) => map
                    .get(key)
                    .or_else(|| map.get(DEFAULT_DESCRIPTION_KEY))
                    .cloned()
                    .ok_or_else(|| Error::MissingDescription(format!("{title} (no vector)")))?,
                None => fallback_embedding(text, dim)?,
            };
            if vector.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: vector.len(),
                    context: format!("description vector for `{title}`"),
                });
            }
            if vector.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("description vector for `{title}`")));
            }
            let id = descriptions.intern(text);
            debug_assert_eq!(id as usize, vectors.len());
            vectors.push(vector);
            Ok(Some(id))
        };

        for (id, name) in titles.iter() {
            let explicit = by_title.get(name).copied();
            if explicit.is_none() && default_text.is_none() {
                return Err(Error::MissingDescription(name.to_string()));
            }
            title_to_desc[id as usize] = resolve(name, explicit)?;
        }
        title_to_desc[Vocabulary::UNK as usize] = resolve(Vocabulary::UNK_TOKEN, None)?;

        Ok(DescriptionTable {
            dim,
            descriptions,
            vectors,
            title_to_desc,
        })
    }

    /// Every title described by its own name.
    pub fn from_title_names(titles: &Vocabulary, fallback_dim: usize) -> Result<Self> {
        let mapping: Vec<(String, String)> = titles
            .iter()
            .map(|(_, n)| (n.to_string(), n.to_string()))
            .collect();
        Self::build(titles, &mapping, None, fallback_dim)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Description vocabulary (index 0 is UNK).
    pub fn descriptions(&self) -> &Vocabulary {
        &self.descriptions
    }

    pub fn description_of(&self, title_id: u32) -> Option<u32> {
        self.title_to_desc.get(title_id as usize).copied().flatten()
    }

    pub fn vector(&self, desc_id: u32) -> Option<&[f64]> {
        self.vectors.get(desc_id as usize).map(Vec::as_slice)
    }

    pub fn text(&self, desc_id: u32) -> Option<&str> {
        self.descriptions.name(desc_id)
    }

    /// Number of titles the table was built for (including UNK).
    pub fn title_count(&self) -> usize {
        self.title_to_desc.len()
    }

    /// Distinct description ids referenced by at least one title, ascending.
    pub fn referenced(&self) -> Vec<u32> {
        let set: HashSet<u32> = self.title_to_desc.iter().flatten().copied().collect();
        let mut v: Vec<u32> = set.into_iter().collect();
        v.sort_unstable();
        v
    }
}

/// File-backed constructor for [`DescriptionTable`].
pub fn attach_descriptions(
    titles: &Vocabulary,
    mapping_file: &Path,
    embedding_file: Option<&Path>,
    fallback_dim: usize,
) -> Result<DescriptionTable> {
    let mapping = read_mapping_file(mapping_file)?;
    let embeddings = embedding_file.map(read_embedding_file).transpose()?;
    DescriptionTable::build(titles, &mapping, embeddings.as_ref(), fallback_dim)
}
