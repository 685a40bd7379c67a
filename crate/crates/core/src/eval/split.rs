use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::{Label, Resume};
use crate::error::{Error, Result};
use crate::rng::{keyed_seed, substream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub val_fraction_of_train: f64,
    pub seed: u64,
    /// Stratify by label and generator source.
    pub stratify_by_label: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            test_fraction: 0.2,
            val_fraction_of_train: 0.2,
            seed: 0,
            stratify_by_label: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Vec<Resume>,
    pub val: Vec<Resume>,
    pub test: Vec<Resume>,
}

impl Splits {
    /// Genuine training resumes: the only admissible input of a trusted graph.
    pub fn trusted(&self) -> Vec<Resume> {
        self.train.iter().filter(|r| r.label == Label::Human).cloned().collect()
    }
}

/// Deterministic train/validation/test partition. Within each stratum a
/// seeded shuffle assigns round(n · test_fraction) resumes to test and
/// round(rest · val_fraction) of the remainder to validation. Every split
/// keeps the input order.
pub fn split(dataset: &[Resume], spec: &SplitSpec) -> Result<Splits> {
    for f in [spec.test_fraction, spec.val_fraction_of_train] {
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::Config(format!("split fraction {f} outside (0, 1)")));
        }
    }
    if dataset.is_empty() {
        return Err(Error::Empty("dataset".into()));
    }
    let mut strata: BTreeMap<(u8, String), Vec<usize>> = BTreeMap::new();
    for (i, r) in dataset.iter().enumerate() {
        let key = if spec.stratify_by_label {
            (r.label.as_f64() as u8, r.source.clone())
        } else {
            (0, String::new())
        };
        strata.entry(key).or_default().push(i);
    }
    if spec.stratify_by_label {
        for label in [0u8, 1] {
            if !strata.keys().any(|(l, _)| *l == label) {
                return Err(Error::Empty(format!("class {label} under stratified split")));
            }
        }
    }
    let mut role = vec![0u8; dataset.len()];
    for ((label, source), mut members) in strata {
        members.shuffle(&mut substream(keyed_seed(spec.seed, &format!("{label}/{source}")), 0));
        let n_test = (members.len() as f64 * spec.test_fraction).round() as usize;
        let rest = members.len() - n_test;
        let n_val = (rest as f64 * spec.val_fraction_of_train).round() as usize;
        for (k, &i) in members.iter().enumerate() {
            role[i] = if k < n_test {
                2
            } else if k < n_test + n_val {
                1
            } else {
                0
            };
        }
    }
    let pick = |r: u8| -> Vec<Resume> {
        dataset
            .iter()
            .zip(&role)
            .filter(|(_, &x)| x == r)
            .map(|(res, _)| res.clone())
            .collect()
    };
    Ok(Splits {
        train: pick(0),
        val: pick(1),
        test: pick(2),
    })
}
