use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{GeneratorConfig, Generated, Method};
use crate::corpus::{CompanyId, JobEntry, Label, Resume, TitleId};
use crate::error::{Error, Result};
use crate::rng::substream;

const MAX_ATTEMPTS: usize = 10;

fn synthetic(method: Method, cfg: &GeneratorConfig, index: usize, entries: Vec<JobEntry>) -> Resume {
    Resume {
        id: format!("{}-{}-{}", method.tag(), cfg.seed, index),
        label: Label::Synthetic,
        source: method.tag().to_string(),
        entries,
    }
}

fn require_nonempty(real: &[Resume]) -> Result<()> {
    if real.is_empty() || real.iter().all(|r| r.entries.is_empty()) {
        return Err(Error::Empty("real corpus".into()));
    }
    Ok(())
}

/// Independent uniform draws from the observed entity multisets, with lengths
/// taken from the empirical length distribution.
pub fn gen_random(real: &[Resume], cfg: &GeneratorConfig) -> Result<Generated> {
    cfg.expect(Method::Random)?;
    require_nonempty(real)?;
    let entries: Vec<&JobEntry> = real.iter().flat_map(|r| &r.entries).collect();
    let lengths: Vec<usize> = real.iter().map(|r| r.entries.len()).filter(|&k| k > 0).collect();
    let resumes = (0..cfg.count)
        .map(|i| {
            let mut rng = substream(cfg.seed, i as u64);
            let k = lengths[rng.random_range(0..lengths.len())];
            let out = (0..k)
                .map(|_| {
                    let t = entries[rng.random_range(0..entries.len())].title_id;
                    let c = entries[rng.random_range(0..entries.len())].company_id;
                    let d = entries[rng.random_range(0..entries.len())].duration_months;
                    JobEntry::new(t, c, d)
                })
                .collect();
            synthetic(Method::Random, cfg, i, out)
        })
        .collect();
    Ok(Generated {
        resumes,
        unchanged: 0,
    })
}

/// Entities ranked by occurrence count (descending), ties by index (ascending);
/// the first `floor(fraction * distinct)` form the pool.
pub fn popularity_pool<K: Copy + Ord + std::hash::Hash>(
    items: impl Iterator<Item = K>,
    fraction: f64,
) -> Vec<K> {
    let mut counts: HashMap<K, usize> = HashMap::new();
    for k in items {
        *counts.entry(k).or_insert(0) += 1;
    }
    let mut ranked: Vec<(K, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let keep = (fraction * ranked.len() as f64 + 1e-9).floor() as usize;
    ranked.truncate(keep);
    ranked.into_iter().map(|(k, _)| k).collect()
}

fn log_duration_moments(real: &[Resume]) -> (f64, f64) {
    let logs: Vec<f64> = real
        .iter()
        .flat_map(|r| &r.entries)
        .map(|e| (e.duration_months as f64).ln())
        .collect();
    let n = logs.len() as f64;
    let mean = logs.iter().sum::<f64>() / n;
    let var = logs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub(crate) fn lognormal_months<R: Rng>(rng: &mut R, mu: f64, sigma: f64) -> u32 {
    let z: f64 = StandardNormal.sample(rng);
    let months = (mu + sigma * z).exp().round();
    months.clamp(1.0, u32::MAX as f64) as u32
}

/// Titles and companies drawn uniformly from the most frequent fraction of
/// each vocabulary, durations log-normal.
pub fn gen_popular(real: &[Resume], cfg: &GeneratorConfig) -> Result<Generated> {
    cfg.expect(Method::Popular)?;
    require_nonempty(real)?;
    let entries: Vec<&JobEntry> = real.iter().flat_map(|r| &r.entries).collect();
    let titles: Vec<TitleId> = popularity_pool(entries.iter().map(|e| e.title_id), cfg.popular_top_fraction);
    let companies: Vec<CompanyId> =
        popularity_pool(entries.iter().map(|e| e.company_id), cfg.popular_top_fraction);
    if titles.is_empty() || companies.is_empty() {
        return Err(Error::Empty(format!(
            "popular pool at fraction {} (titles {}, companies {})",
            cfg.popular_top_fraction,
            titles.len(),
            companies.len()
        )));
    }
    let (fit_mu, fit_sigma) = log_duration_moments(real);
    let mu = cfg.lognormal_mu.unwrap_or(fit_mu);
    let sigma = cfg.lognormal_sigma.unwrap_or(fit_sigma);
    let lengths: Vec<usize> = real.iter().map(|r| r.entries.len()).filter(|&k| k > 0).collect();

    let resumes = (0..cfg.count)
        .map(|i| {
            let mut rng = substream(cfg.seed, i as u64);
            let k = lengths[rng.random_range(0..lengths.len())];
            let out = (0..k)
                .map(|_| {
                    let t = titles[rng.random_range(0..titles.len())];
                    let c = companies[rng.random_range(0..companies.len())];
                    JobEntry::new(t, c, lognormal_months(&mut rng, mu, sigma))
                })
                .collect();
            synthetic(Method::Popular, cfg, i, out)
        })
        .collect();
    Ok(Generated {
        resumes,
        unchanged: 0,
    })
}

fn distinct_pair<R: Rng>(rng: &mut R, n: usize) -> (usize, usize) {
    let a = rng.random_range(0..n);
    let mut b = rng.random_range(0..n - 1);
    if b >= a {
        b += 1;
    }
    (a.min(b), a.max(b))
}

/// Copies a real resume and exchanges the companies of two distinct positions.
pub fn gen_swapping(real: &[Resume], cfg: &GeneratorConfig) -> Result<Generated> {
    cfg.expect(Method::Swapping)?;
    let eligible: Vec<&Resume> = real.iter().filter(|r| r.entries.len() >= 2).collect();
    if eligible.is_empty() {
        return Err(Error::Empty("no resume with at least two entries to swap".into()));
    }
    let mut unchanged = 0;
    let mut resumes = Vec::with_capacity(cfg.count);
    for i in 0..cfg.count {
        let mut rng = substream(cfg.seed, i as u64);
        let mut entries = Vec::new();
        let mut swapped = false;
        for _ in 0..MAX_ATTEMPTS {
            let src = eligible[rng.random_range(0..eligible.len())];
            entries = src.entries.clone();
            swapped = false;
            for _ in 0..cfg.n_swaps {
                let (a, b) = distinct_pair(&mut rng, entries.len());
                if entries[a].company_id != entries[b].company_id {
                    let (ca, cb) = (entries[a].company_id, entries[b].company_id);
                    entries[a].company_id = cb;
                    entries[b].company_id = ca;
                    swapped = true;
                }
            }
            if swapped {
                break;
            }
        }
        if !swapped {
            unchanged += 1;
            log::warn!("swapping output {i}: no distinct companies found after {MAX_ATTEMPTS} attempts");
        }
        resumes.push(synthetic(Method::Swapping, cfg, i, entries));
    }
    Ok(Generated { resumes, unchanged })
}

/// Copies a real resume and replaces one company by a company taken from an
/// entry of another resume.
pub fn gen_replacing(real: &[Resume], cfg: &GeneratorConfig) -> Result<Generated> {
    cfg.expect(Method::Replacing)?;
    let sources: Vec<usize> = (0..real.len()).filter(|&i| !real[i].entries.is_empty()).collect();
    if sources.len() < 2 {
        return Err(Error::Empty("replacing needs at least two resumes".into()));
    }
    // (owner resume, company) for every entry in the corpus
    let pool: Vec<(usize, CompanyId)> = real
        .iter()
        .enumerate()
        .flat_map(|(ri, r)| r.entries.iter().map(move |e| (ri, e.company_id)))
        .collect();
    let mut global: HashMap<CompanyId, usize> = HashMap::new();
    for &(_, c) in &pool {
        *global.entry(c).or_insert(0) += 1;
    }
    let alternatives = |ri: usize, c: CompanyId| -> usize {
        let own = real[ri].entries.len();
        let own_c = real[ri].entries.iter().filter(|e| e.company_id == c).count();
        (pool.len() - own) - (global[&c] - own_c)
    };

    let mut resumes = Vec::with_capacity(cfg.count);
    for i in 0..cfg.count {
        let mut rng = substream(cfg.seed, i as u64);
        let mut chosen = None;
        for _ in 0..MAX_ATTEMPTS {
            let ri = sources[rng.random_range(0..sources.len())];
            let pos = rng.random_range(0..real[ri].entries.len());
            if alternatives(ri, real[ri].entries[pos].company_id) > 0 {
                chosen = Some((ri, pos));
                break;
            }
        }
        let (ri, pos) = chosen.ok_or_else(|| {
            Error::Empty("no alternative company exists in the rest of the corpus".into())
        })?;
        let original = real[ri].entries[pos].company_id;
        let replacement = loop {
            let (owner, c) = pool[rng.random_range(0..pool.len())];
            if owner != ri && c != original {
                break c;
            }
        };
        let mut entries = real[ri].entries.clone();
        entries[pos].company_id = replacement;
        resumes.push(synthetic(Method::Replacing, cfg, i, entries));
    }
    Ok(Generated {
        resumes,
        unchanged: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn resume(id: &str, entries: &[(u32, u32, u32)]) -> Resume {
        Resume {
            id: id.into(),
            label: Label::Human,
            source: "real".into(),
            entries: entries
                .iter()
                .map(|&(t, c, d)| JobEntry::new(TitleId(t), CompanyId(c), d))
                .collect(),
        }
    }

    /// 50 resumes with varied lengths and skewed entity frequencies.
    fn corpus50() -> Vec<Resume> {
        (0..50)
            .map(|i| {
                let len = 1 + i % 4;
                let entries: Vec<_> = (0..len)
                    .map(|j| {
                        let t = 1 + ((i * 7 + j * 3) % 9) as u32;
                        let c = 1 + ((i * 5 + j) % 6) as u32;
                        let d = 6 + ((i + j) % 5) as u32 * 6;
                        (t, c, d)
                    })
                    .collect();
                resume(&format!("r{i}"), &entries)
            })
            .collect()
    }

    #[test]
    fn random_degenerate_support() {
        let real = vec![resume("a", &[(1, 1, 12), (1, 1, 12)]), resume("b", &[(1, 1, 12)])];
        let out = gen_random(&real, &GeneratorConfig::new(Method::Random, 20, 3)).unwrap();
        for r in &out.resumes {
            assert_eq!(r.label, Label::Synthetic);
            assert!(r.entries.len() == 1 || r.entries.len() == 2);
            assert!(r.entries.iter().all(|e| *e == JobEntry::new(TitleId(1), CompanyId(1), 12)));
        }
    }

    #[test]
    fn generators_are_deterministic() {
        let real = corpus50();
        for method in [Method::Random, Method::Popular, Method::Swapping, Method::Replacing] {
            let mut cfg = GeneratorConfig::new(method, 30, 42);
            cfg.popular_top_fraction = 0.5;
            let a = super::super::generate_synthetic(&real, &cfg).unwrap();
            let b = super::super::generate_synthetic(&real, &cfg).unwrap();
            assert_eq!(a, b, "{method:?}");
            cfg.seed = 43;
            let c = super::super::generate_synthetic(&real, &cfg).unwrap();
            assert_ne!(a.resumes, c.resumes, "{method:?}");
        }
    }

    #[test]
    fn random_marginals_match_corpus() {
        let real = corpus50();
        let out = gen_random(&real, &GeneratorConfig::new(Method::Random, 1000, 11)).unwrap();
        let corpus_titles: Vec<u32> = real.iter().flat_map(|r| &r.entries).map(|e| e.title_id.0).collect();
        let fake_titles: Vec<u32> = out.resumes.iter().flat_map(|r| &r.entries).map(|e| e.title_id.0).collect();
        let mut p: BTreeMap<u32, f64> = BTreeMap::new();
        for t in &corpus_titles {
            *p.entry(*t).or_default() += 1.0 / corpus_titles.len() as f64;
        }
        let n = fake_titles.len() as f64;
        for (t, pt) in &p {
            let observed = fake_titles.iter().filter(|x| *x == t).count() as f64;
            let sigma = (n * pt * (1.0 - pt)).sqrt();
            assert!((observed - n * pt).abs() <= 3.0 * sigma, "title {t}: {observed} vs {}", n * pt);
        }
        assert!(fake_titles.iter().all(|t| p.contains_key(t)));
        // lengths come from the empirical distribution {1,2,3,4}
        assert!(out.resumes.iter().all(|r| (1..=4).contains(&r.entries.len())));
    }

    #[test]
    fn popular_full_fraction_pool_is_full_vocabulary() {
        let real = corpus50();
        let pool = popularity_pool(real.iter().flat_map(|r| &r.entries).map(|e| e.company_id), 1.0);
        assert_eq!(pool.len(), 6);
        let mut cfg = GeneratorConfig::new(Method::Popular, 200, 5);
        cfg.popular_top_fraction = 1.0;
        let out = gen_popular(&real, &cfg).unwrap();
        assert!(out.resumes.iter().flat_map(|r| &r.entries).all(|e| pool.contains(&e.company_id)));
    }

    #[test]
    fn popular_dominant_company() {
        // company 1 holds 90% of entries among 10 companies
        let mut real = Vec::new();
        for i in 0..81 {
            real.push(resume(&format!("a{i}"), &[(1 + (i % 10) as u32, 1, 12)]));
        }
        for c in 2..=10u32 {
            real.push(resume(&format!("b{c}"), &[(1, c, 12)]));
        }
        let out = gen_popular(&real, &GeneratorConfig::new(Method::Popular, 100, 9)).unwrap();
        assert!(out.resumes.iter().flat_map(|r| &r.entries).all(|e| e.company_id == CompanyId(1)));
    }

    #[test]
    fn popular_ties_break_by_index() {
        let pool = popularity_pool([3u32, 1, 2, 2, 3, 1].into_iter(), 0.34);
        assert_eq!(pool, vec![1]);
        let pool = popularity_pool([5u32, 5, 5, 1, 2].into_iter(), 0.67);
        assert_eq!(pool, vec![5, 1]);
    }

    #[test]
    fn popular_empty_pool_is_error() {
        let real = vec![resume("a", &[(1, 1, 3)]), resume("b", &[(2, 2, 3)])];
        let cfg = GeneratorConfig::new(Method::Popular, 5, 1);
        assert!(matches!(gen_popular(&real, &cfg), Err(Error::Empty(_))));
    }

    #[test]
    fn lognormal_durations_follow_mu() {
        let mut rng = substream(17, 0);
        let mu = 3.0;
        let n = 10_000;
        let mean_log = (0..n)
            .map(|_| (lognormal_months(&mut rng, mu, 0.4) as f64).ln())
            .sum::<f64>()
            / n as f64;
        assert!((mean_log - mu).abs() < 0.05, "{mean_log}");
    }

    #[test]
    fn swapping_two_entry_resume() {
        let real = vec![resume("a", &[(1, 10, 12), (2, 20, 24)])];
        let out = gen_swapping(&real, &GeneratorConfig::new(Method::Swapping, 5, 1)).unwrap();
        for r in &out.resumes {
            assert_eq!(
                r.entries,
                vec![
                    JobEntry::new(TitleId(1), CompanyId(20), 12),
                    JobEntry::new(TitleId(2), CompanyId(10), 24)
                ]
            );
        }
        assert_eq!(out.unchanged, 0);
    }

    #[test]
    fn swapping_position_pairs_are_uniform() {
        let real = vec![resume("a", &[(1, 10, 1), (2, 20, 2), (3, 30, 3)])];
        let n = 1000;
        let out = gen_swapping(&real, &GeneratorConfig::new(Method::Swapping, n, 2)).unwrap();
        let mut counts: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for r in &out.resumes {
            let moved: Vec<usize> = (0..3)
                .filter(|&k| r.entries[k].company_id != real[0].entries[k].company_id)
                .collect();
            assert_eq!(moved.len(), 2);
            *counts.entry((moved[0], moved[1])).or_default() += 1;
        }
        assert_eq!(counts.len(), 3);
        let p = 1.0 / 3.0;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts.values() {
            assert!((*c as f64 - n as f64 * p).abs() <= 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn swapping_preserves_titles_durations_and_company_multiset() {
        let real = corpus50();
        let out = gen_swapping(&real, &GeneratorConfig::new(Method::Swapping, 200, 4)).unwrap();
        for r in &out.resumes {
            let src = real
                .iter()
                .find(|s| {
                    s.entries.len() == r.entries.len()
                        && s.entries.iter().zip(&r.entries).all(|(a, b)| {
                            a.title_id == b.title_id && a.duration_months == b.duration_months
                        })
                        && {
                            let mut x: Vec<_> = s.entries.iter().map(|e| e.company_id).collect();
                            let mut y: Vec<_> = r.entries.iter().map(|e| e.company_id).collect();
                            x.sort();
                            y.sort();
                            x == y
                        }
                })
                .expect("output derives from a source resume");
            assert!(src.entries.len() >= 2);
        }
    }

    #[test]
    fn swapping_without_eligible_resume_fails() {
        let real = vec![resume("a", &[(1, 1, 1)])];
        assert!(gen_swapping(&real, &GeneratorConfig::new(Method::Swapping, 1, 1)).is_err());
        let same = vec![resume("a", &[(1, 1, 1), (2, 1, 1)])];
        let out = gen_swapping(&same, &GeneratorConfig::new(Method::Swapping, 3, 1)).unwrap();
        assert_eq!(out.unchanged, 3);
    }

    #[test]
    fn replacing_single_alternative() {
        let real = vec![resume("a", &[(1, 10, 5)]), resume("b", &[(2, 20, 5)])];
        let out = gen_replacing(&real, &GeneratorConfig::new(Method::Replacing, 50, 8)).unwrap();
        for r in &out.resumes {
            match r.entries[0].title_id.0 {
                1 => assert_eq!(r.entries[0].company_id, CompanyId(20)),
                2 => assert_eq!(r.entries[0].company_id, CompanyId(10)),
                _ => unreachable!(),
            }
        }
    }

    #[test]
    fn replacing_changes_exactly_one_company() {
        let real = corpus50();
        let out = gen_replacing(&real, &GeneratorConfig::new(Method::Replacing, 300, 8)).unwrap();
        for r in &out.resumes {
            let ok = real.iter().any(|s| {
                s.entries.len() == r.entries.len()
                    && s.entries.iter().zip(&r.entries).all(|(a, b)| {
                        a.title_id == b.title_id && a.duration_months == b.duration_months
                    })
                    && s.entries
                        .iter()
                        .zip(&r.entries)
                        .filter(|(a, b)| a.company_id != b.company_id)
                        .count()
                        == 1
            });
            assert!(ok, "{r:?}");
        }
    }

    #[test]
    fn replacing_distribution_matches_enumeration() {
        // four companies; source resume fixed by making it the only 2-entry one
        let real = vec![
            resume("src", &[(1, 1, 1)]),
            resume("o1", &[(2, 2, 1), (2, 3, 1)]),
            resume("o2", &[(3, 3, 1), (3, 4, 1), (3, 1, 1)]),
        ];
        let n = 6000;
        let out = gen_replacing(&real, &GeneratorConfig::new(Method::Replacing, n, 21)).unwrap();
        // enumeration: for every (source, position), the alternatives are the
        // other resumes' entries whose company differs from the original.
        let mut expected: BTreeMap<(String, usize, u32), f64> = BTreeMap::new();
        for (ri, r) in real.iter().enumerate() {
            for (pos, e) in r.entries.iter().enumerate() {
                let alts: Vec<u32> = real
                    .iter()
                    .enumerate()
                    .filter(|(oi, _)| *oi != ri)
                    .flat_map(|(_, o)| o.entries.iter().map(|x| x.company_id.0))
                    .filter(|&c| c != e.company_id.0)
                    .collect();
                for c in &alts {
                    *expected.entry((r.id.clone(), pos, *c)).or_default() +=
                        1.0 / real.len() as f64 / r.entries.len() as f64 / alts.len() as f64;
                }
            }
        }
        let mut observed: BTreeMap<(String, usize, u32), f64> = BTreeMap::new();
        for r in &out.resumes {
            // identify source by title (titles are unique per source here)
            let src = real.iter().find(|s| s.entries[0].title_id == r.entries[0].title_id).unwrap();
            let pos = (0..r.entries.len())
                .find(|&k| r.entries[k].company_id != src.entries[k].company_id)
                .unwrap();
            *observed.entry((src.id.clone(), pos, r.entries[pos].company_id.0)).or_default() += 1.0;
        }
        assert_eq!(
            observed.keys().collect::<Vec<_>>(),
            expected.keys().collect::<Vec<_>>()
        );
        for (k, p) in &expected {
            let o = observed[k];
            let sigma = (n as f64 * p * (1.0 - p)).sqrt();
            assert!((o - n as f64 * p).abs() <= 4.0 * sigma, "{k:?}: {o} vs {}", n as f64 * p);
        }
    }

    #[test]
    fn replacing_without_alternative_fails() {
        let real = vec![resume("a", &[(1, 1, 5)]), resume("b", &[(2, 1, 5)])];
        assert!(gen_replacing(&real, &GeneratorConfig::new(Method::Replacing, 1, 1)).is_err());
        assert!(gen_replacing(&real[..1], &GeneratorConfig::new(Method::Replacing, 1, 1)).is_err());
    }
}
