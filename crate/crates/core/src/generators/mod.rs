//! Labeled resume generators.
//!
//! Four rule-based strategies produce synthetic (label 1) resumes from a real
//! corpus: random, popular, swapping and replacing. A Markov career model
//! produces a procedurally "real" (label 0) corpus for desk-scale experiments.
//! Resumes from external generators are ingested from files.
//!
//! Every output resume `i` draws from its own stream seeded by
//! `(cfg.seed, i)`, so any partition of the work reproduces sequential output.

mod markov;
mod rules;
mod stats;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{load_resumes, Label, Resume, Vocabularies};
use crate::error::{Error, Result};

pub use markov::{gen_markov_real, CompanySpec, DurationSpec, LadderSpec, MarkovSchema};
pub use rules::{gen_popular, gen_random, gen_replacing, gen_swapping, popularity_pool};
pub use stats::{corpus_stats, CorpusStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Random,
    Popular,
    Swapping,
    Replacing,
    MarkovReal,
}

impl Method {
    pub fn tag(self) -> &'static str {
        match self {
            Method::Random => "random",
            Method::Popular => "popular",
            Method::Swapping => "swapping",
            Method::Replacing => "replacing",
            Method::MarkovReal => "markov_real",
        }
    }

    pub fn parse(s: &str) -> Result<Method> {
        Ok(match s {
            "random" => Method::Random,
            "popular" => Method::Popular,
            "swapping" => Method::Swapping,
            "replacing" => Method::Replacing,
            "markov_real" => Method::MarkovReal,
            other => return Err(Error::Config(format!("unknown generator method `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub method: Method,
    pub count: usize,
    pub seed: u64,
    #[serde(default = "default_top_fraction")]
    pub popular_top_fraction: f64,
    /// Log-month mean for `popular`; fitted from the corpus when absent.
    #[serde(default)]
    pub lognormal_mu: Option<f64>,
    #[serde(default)]
    pub lognormal_sigma: Option<f64>,
    /// Company pairs exchanged per resume by `swapping`.
    #[serde(default = "default_swaps")]
    pub n_swaps: usize,
}

fn default_top_fraction() -> f64 {
    0.10
}

fn default_swaps() -> usize {
    1
}

impl GeneratorConfig {
    pub fn new(method: Method, count: usize, seed: u64) -> Self {
        GeneratorConfig {
            method,
            count,
            seed,
            popular_top_fraction: default_top_fraction(),
            lognormal_mu: None,
            lognormal_sigma: None,
            n_swaps: default_swaps(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.count < 1 {
            return Err(Error::Config("generator count must be >= 1".into()));
        }
        if !(self.popular_top_fraction > 0.0 && self.popular_top_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "popular_top_fraction must be in (0, 1], got {}",
                self.popular_top_fraction
            )));
        }
        if let Some(s) = self.lognormal_sigma {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Config(format!("lognormal_sigma must be > 0, got {s}")));
            }
        }
        if let Some(m) = self.lognormal_mu {
            if !m.is_finite() {
                return Err(Error::Config("lognormal_mu must be finite".into()));
            }
        }
        if self.n_swaps < 1 {
            return Err(Error::Config("n_swaps must be >= 1".into()));
        }
        Ok(())
    }

    fn expect(&self, method: Method) -> Result<()> {
        self.validate()?;
        if self.method != method {
            return Err(Error::Config(format!(
                "configuration is for `{}`, called `{}`",
                self.method.tag(),
                method.tag()
            )));
        }
        Ok(())
    }
}

/// Output of a rule-based generator.
#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub resumes: Vec<Resume>,
    /// Resumes emitted without an effective perturbation (swapping only).
    pub unchanged: usize,
}

/// Dispatches to the rule-based generator selected by `cfg.method`.
pub fn generate_synthetic(real: &[Resume], cfg: &GeneratorConfig) -> Result<Generated> {
    match cfg.method {
        Method::Random => gen_random(real, cfg),
        Method::Popular => gen_popular(real, cfg),
        Method::Swapping => gen_swapping(real, cfg),
        Method::Replacing => gen_replacing(real, cfg),
        Method::MarkovReal => Err(Error::Config(
            "markov_real needs a schema, use gen_markov_real".into(),
        )),
    }
}

/// Loads externally generated resumes with label forced to 1 and `source` set to `source_tag`.
pub fn ingest_external(path: &Path, source_tag: &str, vocab: &mut Vocabularies) -> Result<Vec<Resume>> {
    let mut resumes = load_resumes(path, Some(Label::Synthetic), vocab)?;
    for r in &mut resumes {
        r.source = source_tag.to_string();
    }
    Ok(resumes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn config_validation() {
        let mut cfg = GeneratorConfig::new(Method::Popular, 10, 1);
        assert!(cfg.validate().is_ok());
        cfg.popular_top_fraction = 0.0;
        assert!(cfg.validate().is_err());
        cfg.popular_top_fraction = 1.0;
        cfg.lognormal_sigma = Some(0.0);
        assert!(cfg.validate().is_err());
        let zero = GeneratorConfig::new(Method::Random, 0, 1);
        assert!(zero.validate().is_err());
        assert_eq!(Method::parse("swapping").unwrap(), Method::Swapping);
        assert!(Method::parse("llm").is_err());
    }

    #[test]
    fn ingest_forces_label_and_source() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, r#"{{"id":"g1","label":0,"source":"whatever","entries":[{{"title":"T","company":"C","duration_months":5}}]}}"#).unwrap();
        writeln!(f, r#"{{"id":"g2","label":1,"source":"whatever","entries":[{{"title":"T","company":"D","duration_months":5}}]}}"#).unwrap();
        let mut vocab = Vocabularies::default();
        let rs = ingest_external(f.path(), "gpt-4o", &mut vocab).unwrap();
        assert_eq!(rs.len(), 2);
        assert!(rs.iter().all(|r| r.label == Label::Synthetic && r.source == "gpt-4o"));

        let other = ingest_external(f.path(), "llama-3", &mut vocab).unwrap();
        let tags: std::collections::BTreeSet<_> =
            rs.iter().chain(&other).map(|r| r.source.as_str()).collect();
        assert_eq!(tags.len(), 2);
    }
}
