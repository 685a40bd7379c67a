//! Markov career model used as a stand-in "real" corpus.
//!
//! A resume walks one career ladder: a start level, then level-to-level
//! transitions (or a stop) per row of the ladder's transition table. Each job
//! sits at a company from the ladder's industries that hires the current
//! level; moves prefer companies of equal or higher tier.

use std::collections::{BTreeSet, HashMap};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::rules::lognormal_months;
use super::{GeneratorConfig, Method};
use crate::corpus::{CompanyId, JobEntry, Label, Resume, TitleId, Vocabularies};
use crate::error::{Error, Result};
use crate::rng::substream;

const ROW_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DurationSpec {
    pub mu: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderSpec {
    pub name: String,
    #[serde(default = "one")]
    pub weight: f64,
    /// Titles from entry level upwards.
    pub titles: Vec<String>,
    pub start: Vec<f64>,
    /// `transitions[i][j]`: probability that a job at level `i` is followed by one at level `j`.
    pub transitions: Vec<Vec<f64>>,
    /// Probability that the career ends after a job at level `i`.
    pub stop: Vec<f64>,
    pub industries: Vec<String>,
    pub durations: Vec<DurationSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompanySpec {
    pub name: String,
    pub industry: String,
    #[serde(default)]
    pub tier: u32,
    /// Inclusive range of ladder levels the company hires at.
    pub levels: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkovSchema {
    pub ladders: Vec<LadderSpec>,
    pub companies: Vec<CompanySpec>,
    /// Probability of staying at the current company when it hires the next level.
    #[serde(default)]
    pub company_stay: f64,
    /// Entries drawn before the stop outcome is allowed.
    #[serde(default = "default_min_length")]
    pub min_length: usize,
    #[serde(default = "default_max_length")]
    pub max_length: usize,
    /// Optional title → description text; titles without one get a generated sentence.
    #[serde(default)]
    pub descriptions: HashMap<String, String>,
}

fn one() -> f64 {
    1.0
}

fn default_min_length() -> usize {
    1
}

fn default_max_length() -> usize {
    12
}

fn check_distribution(what: &str, probs: &[f64]) -> Result<()> {
    if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::Schema(format!("{what}: probabilities must be finite and >= 0")));
    }
    let sum: f64 = probs.iter().sum();
    if sum == 0.0 {
        return Err(Error::Schema(format!("{what}: absorbing zero-probability row")));
    }
    if (sum - 1.0).abs() > ROW_TOLERANCE {
        return Err(Error::Schema(format!("{what}: probabilities sum to {sum}, expected 1")));
    }
    Ok(())
}

fn sample_index<R: Rng>(rng: &mut R, probs: &[f64]) -> usize {
    let total: f64 = probs.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, p) in probs.iter().enumerate() {
        if u < *p {
            return i;
        }
        u -= p;
    }
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

impl MarkovSchema {
    pub fn validate(&self) -> Result<()> {
        if self.ladders.is_empty() {
            return Err(Error::Schema("no ladders".into()));
        }
        if self.min_length < 1 || self.max_length < self.min_length {
            return Err(Error::Schema("need 1 <= min_length <= max_length".into()));
        }
        if !(0.0..=1.0).contains(&self.company_stay) {
            return Err(Error::Schema("company_stay must be in [0, 1]".into()));
        }
        let weights: Vec<f64> = self.ladders.iter().map(|l| l.weight).collect();
        check_distribution("ladder weights", &normalized(&weights))?;
        for ladder in &self.ladders {
            let n = ladder.titles.len();
            let name = &ladder.name;
            if n == 0 {
                return Err(Error::Schema(format!("ladder `{name}` has no titles")));
            }
            if ladder.start.len() != n
                || ladder.transitions.len() != n
                || ladder.stop.len() != n
                || ladder.durations.len() != n
                || ladder.transitions.iter().any(|row| row.len() != n)
            {
                return Err(Error::Schema(format!("ladder `{name}`: table sizes must match {n} titles")));
            }
            check_distribution(&format!("ladder `{name}` start"), &ladder.start)?;
            for i in 0..n {
                let mut row = ladder.transitions[i].clone();
                row.push(ladder.stop[i]);
                check_distribution(&format!("ladder `{name}` row {i}"), &row)?;
                let d = &ladder.durations[i];
                if !(d.mu.is_finite() && d.sigma.is_finite() && d.sigma >= 0.0) {
                    return Err(Error::Schema(format!("ladder `{name}` level {i}: bad duration")));
                }
            }
            // every level must be able to reach a stop
            let mut can_stop: Vec<bool> = ladder.stop.iter().map(|s| *s > 0.0).collect();
            loop {
                let mut changed = false;
                for i in 0..n {
                    if !can_stop[i] && (0..n).any(|j| ladder.transitions[i][j] > 0.0 && can_stop[j]) {
                        can_stop[i] = true;
                        changed = true;
                    }
                }
                if !changed {
                    break;
                }
            }
            if let Some(i) = can_stop.iter().position(|c| !c) {
                return Err(Error::Schema(format!(
                    "ladder `{name}` level {i} is absorbing: no path reaches a stop"
                )));
            }
            for level in 0..n {
                if self.hiring(ladder, level).next().is_none() {
                    return Err(Error::Schema(format!(
                        "ladder `{name}` level {level}: no company hires this level"
                    )));
                }
            }
        }
        Ok(())
    }

    fn hiring<'a>(&'a self, ladder: &'a LadderSpec, level: usize) -> impl Iterator<Item = usize> + 'a {
        self.companies.iter().enumerate().filter_map(move |(i, c)| {
            (ladder.industries.contains(&c.industry) && c.levels[0] <= level && level <= c.levels[1])
                .then_some(i)
        })
    }

    fn choose_company<R: Rng>(
        &self,
        rng: &mut R,
        ladder: &LadderSpec,
        level: usize,
        current: Option<usize>,
    ) -> usize {
        let hiring: Vec<usize> = self.hiring(ladder, level).collect();
        let Some(cur) = current else {
            return hiring[rng.random_range(0..hiring.len())];
        };
        if hiring.contains(&cur) && rng.random::<f64>() < self.company_stay {
            return cur;
        }
        let tier = self.companies[cur].tier;
        let upward: Vec<usize> = hiring
            .iter()
            .copied()
            .filter(|&c| c != cur && self.companies[c].tier >= tier)
            .collect();
        if !upward.is_empty() {
            return upward[rng.random_range(0..upward.len())];
        }
        let others: Vec<usize> = hiring.iter().copied().filter(|&c| c != cur).collect();
        if !others.is_empty() {
            return others[rng.random_range(0..others.len())];
        }
        hiring[0]
    }

    /// Title → description pairs for every title of every ladder.
    pub fn description_mapping(&self) -> Vec<(String, String)> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for ladder in &self.ladders {
            for (level, title) in ladder.titles.iter().enumerate() {
                if !seen.insert(title.clone()) {
                    continue;
                }
                let text = self.descriptions.get(title).cloned().unwrap_or_else(|| {
                    format!(
                        "{title}: level {} role in the {} track, responsible for duties expected of a {}.",
                        level + 1,
                        ladder.name,
                        title.to_lowercase()
                    )
                });
                out.push((title.clone(), text));
            }
        }
        out
    }

    /// The built-in oracle career model: five ladders over four industries
    /// and thirty-two companies in three tiers.
    pub fn oracle() -> Self {
        fn ladder(
            name: &str,
            titles: &[&str],
            industries: &[&str],
            weight: f64,
        ) -> LadderSpec {
            let n = titles.len();
            let mut transitions = vec![vec![0.0; n]; n];
            let mut stop = vec![0.0; n];
            for i in 0..n {
                if i + 1 < n {
                    transitions[i][i] = 0.25;
                    transitions[i][i + 1] = 0.55;
                    stop[i] = 0.20;
                } else {
                    transitions[i][i] = 0.35;
                    stop[i] = 0.65;
                }
            }
            let mut start = vec![0.0; n];
            start[0] = 0.6;
            start[1] = 0.3;
            start[2] = 0.1;
            LadderSpec {
                name: name.to_string(),
                weight,
                titles: titles.iter().map(|s| s.to_string()).collect(),
                start,
                transitions,
                stop,
                industries: industries.iter().map(|s| s.to_string()).collect(),
                durations: (0..n)
                    .map(|i| DurationSpec {
                        mu: 2.6 + 0.25 * i as f64,
                        sigma: 0.45,
                    })
                    .collect(),
            }
        }
        let ladders = vec![
            ladder(
                "engineering",
                &["Junior Software Engineer", "Software Engineer", "Senior Software Engineer", "Staff Engineer", "Engineering Manager"],
                &["software", "finance"],
                1.5,
            ),
            ladder(
                "data",
                &["Data Analyst", "Data Scientist", "Senior Data Scientist", "Lead Data Scientist"],
                &["software", "retail"],
                1.0,
            ),
            ladder(
                "sales",
                &["Sales Associate", "Account Executive", "Senior Account Executive", "Sales Manager", "Sales Director"],
                &["retail", "manufacturing"],
                1.0,
            ),
            ladder(
                "finance",
                &["Junior Accountant", "Accountant", "Senior Accountant", "Finance Manager", "Chief Financial Officer"],
                &["finance", "manufacturing"],
                1.0,
            ),
            ladder(
                "operations",
                &["Operations Assistant", "Operations Coordinator", "Operations Manager", "Director of Operations"],
                &["manufacturing", "retail"],
                0.8,
            ),
        ];
        let industries = ["software", "finance", "retail", "manufacturing"];
        let tiers: [(&str, u32, [usize; 2]); 8] = [
            ("Labs", 0, [0, 2]),
            ("Works", 0, [0, 1]),
            ("Partners", 0, [0, 2]),
            ("Group", 1, [1, 3]),
            ("Systems", 1, [0, 3]),
            ("Holdings", 1, [1, 4]),
            ("Global", 2, [2, 4]),
            ("International", 2, [3, 4]),
        ];
        let mut companies = Vec::new();
        for industry in industries {
            let stem = match industry {
                "software" => "Byte",
                "finance" => "Ledger",
                "retail" => "Market",
                _ => "Forge",
            };
            for (suffix, tier, levels) in tiers {
                companies.push(CompanySpec {
                    name: format!("{stem}{suffix}"),
                    industry: industry.to_string(),
                    tier,
                    levels,
                });
            }
        }
        MarkovSchema {
            ladders,
            companies,
            company_stay: 0.25,
            min_length: 2,
            max_length: 8,
            descriptions: HashMap::new(),
        }
    }
}

fn normalized(w: &[f64]) -> Vec<f64> {
    let s: f64 = w.iter().sum();
    if s > 0.0 {
        w.iter().map(|x| x / s).collect()
    } else {
        w.to_vec()
    }
}

/// Samples `cfg.count` label-0 resumes from `schema`, interning names into `vocab`.
pub fn gen_markov_real(
    cfg: &GeneratorConfig,
    schema: &MarkovSchema,
    vocab: &mut Vocabularies,
) -> Result<Vec<Resume>> {
    cfg.expect(Method::MarkovReal)?;
    schema.validate()?;
    let title_ids: Vec<Vec<TitleId>> = schema
        .ladders
        .iter()
        .map(|l| l.titles.iter().map(|t| TitleId(vocab.titles.intern(t))).collect())
        .collect();
    let company_ids: Vec<CompanyId> = schema
        .companies
        .iter()
        .map(|c| CompanyId(vocab.companies.intern(&c.name)))
        .collect();
    let weights: Vec<f64> = schema.ladders.iter().map(|l| l.weight).collect();

    let resumes = (0..cfg.count)
        .map(|i| {
            let mut rng = substream(cfg.seed, i as u64);
            let li = sample_index(&mut rng, &weights);
            let ladder = &schema.ladders[li];
            let mut level = sample_index(&mut rng, &ladder.start);
            let mut company = None;
            let mut entries = Vec::new();
            loop {
                let c = schema.choose_company(&mut rng, ladder, level, company);
                company = Some(c);
                let d = &ladder.durations[level];
                entries.push(JobEntry::new(
                    title_ids[li][level],
                    company_ids[c],
                    lognormal_months(&mut rng, d.mu, d.sigma),
                ));
                if entries.len() >= schema.max_length {
                    break;
                }
                let mut row = ladder.transitions[level].clone();
                let may_stop = entries.len() >= schema.min_length || row.iter().all(|&p| p == 0.0);
                row.push(if may_stop { ladder.stop[level] } else { 0.0 });
                let next = sample_index(&mut rng, &row);
                if next == row.len() - 1 {
                    break;
                }
                level = next;
            }
            Resume {
                id: format!("{}-{}-{}", Method::MarkovReal.tag(), cfg.seed, i),
                label: Label::Human,
                source: Method::MarkovReal.tag().to_string(),
                entries,
            }
        })
        .collect();
    Ok(resumes)
}
