use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Node and entity kinds: job titles, companies, and job descriptions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Title,
    Company,
    Description,
}

impl EntityKind {
    pub const ALL: [EntityKind; 3] = [EntityKind::Title, EntityKind::Company, EntityKind::Description];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            EntityKind::Title => "title",
            EntityKind::Company => "company",
            EntityKind::Description => "description",
        };
        f.write_str(name)
    }
}

/// Dense string interner for one entity kind. Index 0 is the UNK entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    kind: EntityKind,
    names: Vec<String>,
    index: HashMap<String, u32>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    kind: EntityKind,
    names: Vec<String>,
}

impl From<VocabularyRepr> for Vocabulary {
    fn from(repr: VocabularyRepr) -> Self {
        let mut vocab = Vocabulary::new(repr.kind);
        for name in repr.names.iter().skip(1) {
            vocab.intern(name);
        }
        vocab
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(vocab: Vocabulary) -> Self {
        VocabularyRepr {
            kind: vocab.kind,
            names: vocab.names,
        }
    }
}

impl Vocabulary {
    pub const UNK: u32 = 0;
    pub const UNK_TOKEN: &'static str = "<unk>";

    pub fn new(kind: EntityKind) -> Self {
        let mut index = HashMap::new();
        index.insert(Self::UNK_TOKEN.to_string(), Self::UNK);
        Vocabulary {
            kind,
            names: vec![Self::UNK_TOKEN.to_string()],
            index,
        }
    }

    pub fn kind(&self) -> EntityKind {
        self.kind
    }

    /// Returns the index of `name`, assigning the next dense index on first sight.
    pub fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        id
    }

    pub fn get(&self, name: &str) -> Option<u32> {
        self.index.get(name).copied()
    }

    pub fn get_or_unk(&self, name: &str) -> u32 {
        self.get(name).unwrap_or(Self::UNK)
    }

    pub fn name(&self, id: u32) -> Option<&str> {
        self.names.get(id as usize).map(String::as_str)
    }

    /// Number of entries including UNK.
    pub fn len(&self) -> usize {
        self.names.len()
    }

    /// True when only the UNK entry is present.
    pub fn is_empty(&self) -> bool {
        self.names.len() == 1
    }

    /// Known (non-UNK) entries in index order.
    pub fn iter(&self) -> impl Iterator<Item = (u32, &str)> {
        self.names
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, s)| (i as u32, s.as_str()))
    }
}

/// Title and company vocabularies shared by every corpus loaded in one session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabularies {
    pub titles: Vocabulary,
    pub companies: Vocabulary,
}

impl Default for Vocabularies {
    fn default() -> Self {
        Vocabularies {
            titles: Vocabulary::new(EntityKind::Title),
            companies: Vocabulary::new(EntityKind::Company),
        }
    }
}
