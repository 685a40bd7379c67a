//! Resume corpora: ingestion, validation, company-frequency filtering and the
//! title → description table.
//!
//! Resume files are UTF-8 with one JSON object per line:
//!
//! ```text
//! {"id": "u1", "label": 0, "source": "real",
//!  "entries": [{"title": "Engineer", "company": "Acme", "duration_months": 24}]}
//! ```
//!
//! Entries are ordered oldest first. `start`/`end` strings are accepted and
//! carried through serialization but never interpreted.

mod descriptions;
mod vocab;

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use descriptions::{
    attach_descriptions, fallback_embedding, read_embedding_file, read_mapping_file, stable_hash,
    DescriptionTable, DEFAULT_DESCRIPTION_KEY,
};
pub use vocab::{EntityKind, Vocabularies, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TitleId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CompanyId(pub u32);

/// Ground truth: 0 for human-authored, 1 for machine-generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Label {
    Human,
    Synthetic,
}

impl Label {
    pub fn as_f64(self) -> f64 {
        match self {
            Label::Human => 0.0,
            Label::Synthetic => 1.0,
        }
    }

    pub fn is_synthetic(self) -> bool {
        self == Label::Synthetic
    }

    pub fn flipped(self) -> Label {
        match self {
            Label::Human => Label::Synthetic,
            Label::Synthetic => Label::Human,
        }
    }
}

impl TryFrom<u8> for Label {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            0 => Ok(Label::Human),
            1 => Ok(Label::Synthetic),
            other => Err(format!("label must be 0 or 1, got {other}")),
        }
    }
}

impl From<Label> for u8 {
    fn from(l: Label) -> u8 {
        match l {
            Label::Human => 0,
            Label::Synthetic => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct JobEntry {
    pub title_id: TitleId,
    pub company_id: CompanyId,
    pub duration_months: u32,
    pub start: Option<String>,
    pub end: Option<String>,
}

impl JobEntry {
    pub fn new(title_id: TitleId, company_id: CompanyId, duration_months: u32) -> Self {
        JobEntry {
            title_id,
            company_id,
            duration_months,
            start: None,
            end: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Resume {
    pub id: String,
    pub label: Label,
    pub source: String,
    pub entries: Vec<JobEntry>,
}

impl Resume {
    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::InvalidResume {
                id: self.id.clone(),
                reason: "empty entry list".into(),
            });
        }
        if let Some(pos) = self.entries.iter().position(|e| e.duration_months < 1) {
            return Err(Error::InvalidResume {
                id: self.id.clone(),
                reason: format!("entry {pos} has duration_months < 1"),
            });
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct EntryRecord {
    title: String,
    company: String,
    duration_months: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    start: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    end: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct ResumeRecord {
    id: String,
    label: Label,
    source: String,
    entries: Vec<EntryRecord>,
}

/// Parses line-delimited resume records, interning entity names into `vocab`.
///
/// `origin` only labels error messages. Blank lines are skipped.
pub fn parse_resumes<R: BufRead>(
    reader: R,
    origin: &Path,
    expected_label: Option<Label>,
    vocab: &mut Vocabularies,
) -> Result<Vec<Resume>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ResumeRecord =
            serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
                path: origin.to_path_buf(),
                line: i + 1,
                reason: e.to_string(),
            })?;
        if record.entries.is_empty() {
            return Err(Error::InvalidResume {
                id: record.id,
                reason: "empty entry list".into(),
            });
        }
        let mut entries = Vec::with_capacity(record.entries.len());
        for (pos, e) in record.entries.into_iter().enumerate() {
            if e.duration_months < 1 || e.duration_months > u32::MAX as i64 {
                return Err(Error::InvalidResume {
                    id: record.id,
                    reason: format!(
                        "entry {pos} has duration_months = {} (must be >= 1)",
                        e.duration_months
                    ),
                });
            }
            entries.push(JobEntry {
                title_id: TitleId(vocab.titles.intern(&e.title)),
                company_id: CompanyId(vocab.companies.intern(&e.company)),
                duration_months: e.duration_months as u32,
                start: e.start,
                end: e.end,
            });
        }
        out.push(Resume {
            id: record.id,
            label: expected_label.unwrap_or(record.label),
            source: record.source,
            entries,
        });
    }
    Ok(out)
}

pub fn load_resumes(
    path: &Path,
    expected_label: Option<Label>,
    vocab: &mut Vocabularies,
) -> Result<Vec<Resume>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_resumes(BufReader::new(file), path, expected_label, vocab)
}

pub fn serialize_resumes<W: Write>(
    mut writer: W,
    resumes: &[Resume],
    vocab: &Vocabularies,
) -> Result<()> {
    for r in resumes {
        let record = ResumeRecord {
            id: r.id.clone(),
            label: r.label,
            source: r.source.clone(),
            entries: r
                .entries
                .iter()
                .map(|e| EntryRecord {
                    title: vocab.titles.name(e.title_id.0).unwrap_or(Vocabulary::UNK_TOKEN).to_string(),
                    company: vocab
                        .companies
                        .name(e.company_id.0)
                        .unwrap_or(Vocabulary::UNK_TOKEN)
                        .to_string(),
                    duration_months: e.duration_months as i64,
                    start: e.start.clone(),
                    end: e.end.clone(),
                })
                .collect(),
        };
        serde_json::to_writer(&mut writer, &record)?;
        writer.write_all(b"\n").map_err(|e| Error::io("<writer>", e))?;
    }
    Ok(())
}

pub fn write_resumes(path: &Path, resumes: &[Resume], vocab: &Vocabularies) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serialize_resumes(&mut w, resumes, vocab)?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Number of job entries per company across `resumes`.
pub fn company_counts(resumes: &[Resume]) -> HashMap<CompanyId, usize> {
    let mut counts = HashMap::new();
    for e in resumes.iter().flat_map(|r| &r.entries) {
        *counts.entry(e.company_id).or_insert(0) += 1;
    }
    counts
}

/// Keeps resumes in which every company meets `min_occurrences` under the given counts.
pub fn filter_with_counts(
    resumes: &[Resume],
    counts: &HashMap<CompanyId, usize>,
    min_occurrences: usize,
) -> Vec<Resume> {
    resumes
        .iter()
        .filter(|r| {
            r.entries
                .iter()
                .all(|e| counts.get(&e.company_id).copied().unwrap_or(0) >= min_occurrences)
        })
        .cloned()
        .collect()
}

/// Drops resumes containing any company with fewer than `min_occurrences` job
/// entries in the input corpus. Counting happens once on the input.
pub fn filter_by_company_frequency(resumes: &[Resume], min_occurrences: usize) -> Result<Vec<Resume>> {
    if min_occurrences < 1 {
        return Err(Error::Config("min_occurrences must be >= 1".into()));
    }
    Ok(filter_with_counts(resumes, &company_counts(resumes), min_occurrences))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;
    use std::io::Cursor;

    fn parse(text: &str, vocab: &mut Vocabularies) -> Result<Vec<Resume>> {
        parse_resumes(Cursor::new(text), Path::new("mem.jsonl"), None, vocab)
    }

    #[test]
    fn parses_two_records() {
        let text = r#"{"id":"a","label":0,"source":"real","entries":[{"title":"Engineer","company":"Acme","duration_months":12}]}
{"id":"b","label":1,"source":"gpt","entries":[{"title":"Engineer","company":"Globex","duration_months":3,"start":"2020-01"},{"title":"Manager","company":"Acme","duration_months":30}]}
"#;
        let mut vocab = Vocabularies::default();
        let rs = parse(text, &mut vocab).unwrap();
        assert_eq!(rs.len(), 2);
        assert_eq!(rs[1].label, Label::Synthetic);
        assert_eq!(rs[1].entries[0].start.as_deref(), Some("2020-01"));
        assert_eq!(vocab.titles.len(), 3);
        assert_eq!(vocab.companies.len(), 3);
        assert_eq!(rs[0].entries[0].company_id, rs[1].entries[1].company_id);
    }

    #[test]
    fn zero_duration_names_the_record() {
        let text = r#"{"id":"bad-7","label":0,"source":"real","entries":[{"title":"T","company":"C","duration_months":0}]}"#;
        let err = parse(text, &mut Vocabularies::default()).unwrap_err();
        assert!(err.to_string().contains("bad-7"), "{err}");
    }

    #[test]
    fn empty_entries_and_malformed_lines_are_rejected() {
        let empty = r#"{"id":"e","label":0,"source":"real","entries":[]}"#;
        assert!(matches!(
            parse(empty, &mut Vocabularies::default()),
            Err(Error::InvalidResume { .. })
        ));
        let text = "\n{\"id\":\"a\",\"label\":0,\"source\":\"r\",\"entries\":[{\"title\":\"T\",\"company\":\"C\",\"duration_months\":1}]}\n{not json}\n";
        match parse(text, &mut Vocabularies::default()) {
            Err(Error::MalformedRecord { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let bad_label = r#"{"id":"a","label":2,"source":"r","entries":[{"title":"T","company":"C","duration_months":1}]}"#;
        assert!(matches!(
            parse(bad_label, &mut Vocabularies::default()),
            Err(Error::MalformedRecord { .. })
        ));
    }

    #[test]
    fn expected_label_overrides_file_label() {
        let text = r#"{"id":"a","label":0,"source":"x","entries":[{"title":"T","company":"C","duration_months":1}]}"#;
        let rs = parse_resumes(
            Cursor::new(text),
            Path::new("m"),
            Some(Label::Synthetic),
            &mut Vocabularies::default(),
        )
        .unwrap();
        assert_eq!(rs[0].label, Label::Synthetic);
    }

    #[test]
    fn ten_records_three_companies() {
        let companies = ["Acme", "Globex", "Initech", "Acme", "Acme", "Globex", "Initech", "Globex", "Acme", "Acme"];
        let text: String = companies
            .iter()
            .enumerate()
            .map(|(i, c)| {
                format!(
                    "{{\"id\":\"r{i}\",\"label\":0,\"source\":\"real\",\"entries\":[{{\"title\":\"T{}\",\"company\":\"{c}\",\"duration_months\":{}}}]}}\n",
                    i % 4,
                    i + 1
                )
            })
            .collect();
        let mut vocab = Vocabularies::default();
        let rs = parse(&text, &mut vocab).unwrap();
        assert_eq!(rs.len(), 10);
        // hand count: Acme, Globex, Initech
        let distinct: BTreeSet<_> = companies.iter().collect();
        assert_eq!(distinct.len(), 3);
        assert_eq!(vocab.companies.len(), 3 + 1);
        assert_eq!(vocab.titles.len(), 4 + 1);
    }

    #[test]
    fn reload_assigns_stable_indices() {
        let text = r#"{"id":"a","label":0,"source":"r","entries":[{"title":"B","company":"Y","duration_months":1},{"title":"A","company":"X","duration_months":2}]}"#;
        let mut v1 = Vocabularies::default();
        let mut v2 = Vocabularies::default();
        let r1 = parse(text, &mut v1).unwrap();
        let r2 = parse(text, &mut v2).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(v1, v2);
    }

    fn toy(id: &str, companies: &[u32]) -> Resume {
        Resume {
            id: id.into(),
            label: Label::Human,
            source: "real".into(),
            entries: companies
                .iter()
                .map(|&c| JobEntry::new(TitleId(1), CompanyId(c), 12))
                .collect(),
        }
    }

    #[test]
    fn filter_keeps_everything_when_all_frequent() {
        let rs: Vec<_> = (0..5).map(|i| toy(&format!("r{i}"), &[1, 2])).collect();
        assert_eq!(filter_by_company_frequency(&rs, 4).unwrap(), rs);
    }

    #[test]
    fn filter_drops_resume_with_rare_company() {
        let mut rs: Vec<_> = (0..5).map(|i| toy(&format!("r{i}"), &[1])).collect();
        rs.push(toy("rare", &[1, 9]));
        let kept = filter_by_company_frequency(&rs, 4).unwrap();
        assert_eq!(kept.len(), 5);
        assert!(kept.iter().all(|r| r.id != "rare"));
        assert!(filter_by_company_frequency(&rs, 0).is_err());
    }

    #[test]
    fn filter_matches_brute_force_on_six_resume_toy() {
        let rs = vec![
            toy("a", &[1, 2, 3]),
            toy("b", &[1, 1]),
            toy("c", &[2, 4]),
            toy("d", &[3, 1]),
            toy("e", &[2, 2, 5]),
            toy("f", &[4, 1]),
        ];
        // brute force: count each company by scanning every entry of every resume
        let survivors: Vec<&str> = rs
            .iter()
            .filter(|r| {
                r.entries.iter().all(|e| {
                    let mut n = 0;
                    for other in &rs {
                        for oe in &other.entries {
                            if oe.company_id == e.company_id {
                                n += 1;
                            }
                        }
                    }
                    n >= 4
                })
            })
            .map(|r| r.id.as_str())
            .collect();
        // company 1 occurs 5x, company 2 occurs 4x, the rest fewer
        assert_eq!(survivors, vec!["b"]);
        let kept: Vec<String> = filter_by_company_frequency(&rs, 4)
            .unwrap()
            .into_iter()
            .map(|r| r.id)
            .collect();
        assert_eq!(kept, survivors);
    }
}
