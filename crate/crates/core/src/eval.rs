//! Ranking and mean average precision with junk handling.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};

/// Relevant and junk ids of one query. Junk items are dropped from the
/// ranking before precision is measured.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GtEntry {
    relevant: BTreeSet<String>,
    junk: BTreeSet<String>,
}

impl GtEntry {
    pub fn new<I, J, S, T>(relevant: I, junk: J) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        J: IntoIterator<Item = T>,
        S: Into<String>,
        T: Into<String>,
    {
        let relevant: BTreeSet<String> = relevant.into_iter().map(Into::into).collect();
        let junk: BTreeSet<String> = junk.into_iter().map(Into::into).collect();
        if let Some(id) = relevant.intersection(&junk).next() {
            return Err(Error::contract(format!("'{id}' is both relevant and junk")));
        }
        Ok(Self { relevant, junk })
    }

    pub fn relevant(&self) -> &BTreeSet<String> {
        &self.relevant
    }

    pub fn junk(&self) -> &BTreeSet<String> {
        &self.junk
    }

    /// Moves `id` from the relevant set to the junk set, for datasets whose
    /// queries are also database images.
    pub fn exclude(&mut self, id: &str) {
        self.relevant.remove(id);
        self.junk.insert(id.to_owned());
    }
}

/// Ground truth for all queries, keyed by query id.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GroundTruth {
    pub entries: BTreeMap<String, GtEntry>,
}

impl GroundTruth {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, query: impl Into<String>, entry: GtEntry) {
        self.entries.insert(query.into(), entry);
    }

    pub fn get(&self, query: &str) -> Option<&GtEntry> {
        self.entries.get(query)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn queries(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Applies [`GtEntry::exclude`] with each query's own id.
    pub fn exclude_self(&mut self) {
        for (q, e) in self.entries.iter_mut() {
            e.exclude(q);
        }
    }
}

/// Average precision of a ranking: junk removed, precision taken at every
/// relevant hit, relevant items never retrieved count as zero.
pub fn average_precision<S: AsRef<str>>(ranked: &[S], gt: &GtEntry) -> Result<f64> {
    if gt.relevant.is_empty() {
        return Err(Error::contract("ground-truth entry has no relevant items"));
    }
    let mut seen = BTreeSet::new();
    let mut pos = 0usize;
    let mut hits = 0usize;
    let mut sum = 0.0;
    for id in ranked {
        let id = id.as_ref();
        if !seen.insert(id) {
            return Err(Error::contract(format!(
                "'{id}' appears twice in the ranking"
            )));
        }
        if gt.junk.contains(id) {
            continue;
        }
        pos += 1;
        if gt.relevant.contains(id) {
            hits += 1;
            sum += hits as f64 / pos as f64;
        }
    }
    Ok(sum / gt.relevant.len() as f64)
}

/// Arithmetic mean of per-query APs.
pub fn mean_ap(aps: &[f64]) -> Result<f64> {
    if aps.is_empty() {
        return Err(Error::contract("mean_ap needs at least one query"));
    }
    Ok(aps.iter().sum::<f64>() / aps.len() as f64)
}

/// Indices sorted by descending score; ties broken by ascending id.
pub fn rank_by_score<S: AsRef<str>>(ids: &[S], scores: &[f64]) -> Result<Vec<usize>> {
    crate::error::check_dim(ids.len(), scores.len())?;
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&i, &j| {
        scores[j]
            .partial_cmp(&scores[i])
            .unwrap_or(Ordering::Equal)
            .then_with(|| ids[i].as_ref().cmp(ids[j].as_ref()))
    });
    Ok(order)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(rel: &[&str], junk: &[&str]) -> GtEntry {
        GtEntry::new(rel.iter().copied(), junk.iter().copied()).unwrap()
    }

    #[test]
    fn hand_cases() {
        let gt = entry(&["a"], &[]);
        assert_eq!(average_precision(&["a", "b"], &gt).unwrap(), 1.0);

        let gt = entry(&["a", "c"], &[]);
        let ap = average_precision(&["a", "b", "c", "d"], &gt).unwrap();
        assert!((ap - 5.0 / 6.0).abs() < 1e-15);

        let gt = entry(&["c"], &["a", "b"]);
        assert_eq!(average_precision(&["a", "b", "c"], &gt).unwrap(), 1.0);

        let gt = entry(&["a", "z"], &[]);
        assert_eq!(average_precision(&["a", "b"], &gt).unwrap(), 0.5);
    }

    #[test]
    fn errors() {
        assert!(GtEntry::new(["a"], ["a"]).is_err());
        let gt = entry(&[], &["a"]);
        assert!(average_precision(&["a"], &gt).is_err());
        let gt = entry(&["a"], &[]);
        assert!(average_precision(&["a", "a"], &gt).is_err());
        assert!(mean_ap(&[]).is_err());
    }

    #[test]
    fn mean() {
        assert_eq!(mean_ap(&[1.0, 0.5]).unwrap(), 0.75);
        assert_eq!(mean_ap(&[0.3]).unwrap(), 0.3);
    }

    #[test]
    fn ranking_ties_by_id() {
        let ids = ["b", "a", "c"];
        let order = rank_by_score(&ids, &[0.5, 0.5, 0.9]).unwrap();
        assert_eq!(order, vec![2, 1, 0]);
    }

    #[test]
    fn exclude_self() {
        let mut gt = GroundTruth::new();
        gt.insert("q", entry(&["q", "x"], &[]));
        gt.exclude_self();
        let e = gt.get("q").unwrap();
        assert!(!e.relevant().contains("q"));
        assert!(e.junk().contains("q"));
    }
}
