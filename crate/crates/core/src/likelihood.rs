//! Perplexity-based likelihood bias: distribution summaries and pairwise
//! descriptor significance.

use std::collections::{BTreeMap, HashSet};
use std::io::BufRead;
use std::sync::Arc;

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::SentenceIndex;
use crate::jsonl;
use crate::registry::Axis;
use crate::stats::{self, Alternative, Summary, DEFAULT_ALPHA};

/// Template used for pairwise significance unless overridden.
pub const DEFAULT_TEMPLATE: &str = "i_love_pnp";
pub const DEFAULT_MIN_LEN: usize = 6;
pub const DEFAULT_MAX_LEN: usize = 19;
/// Descriptors listed at each end of the median ranking.
pub const EXTREME_COUNT: usize = 3;

/// One line of `ppl.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerplexityScore {
    pub sentence_id: String,
    pub perplexity: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PerplexityEntry {
    pub sentence_id: String,
    pub perplexity: f64,
    pub axis: Axis,
    pub descriptor: Arc<str>,
    pub template_id: Arc<str>,
    pub noun: Arc<str>,
}

/// Perplexities joined to sentence metadata, ordered by sentence id.
#[derive(Clone, Debug, Default)]
pub struct PerplexityTable {
    entries: Vec<PerplexityEntry>,
}

impl PerplexityTable {
    pub fn entries(&self) -> &[PerplexityEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Join scores to the compiled dataset.
pub fn ingest_perplexities<I>(scores: I, dataset: &SentenceIndex) -> Result<PerplexityTable>
where
    I: IntoIterator<Item = PerplexityScore>,
{
    let mut seen = HashSet::new();
    let mut unknown = Vec::new();
    let mut entries = Vec::new();
    for score in scores {
        if !score.perplexity.is_finite() || score.perplexity <= 0.0 {
            return Err(Error::Value(format!(
                "perplexity for {:?} must be positive and finite, got {}",
                score.sentence_id, score.perplexity
            )));
        }
        if !seen.insert(score.sentence_id.clone()) {
            return Err(Error::Duplicate {
                kind: "score",
                key: score.sentence_id,
            });
        }
        match dataset.get(&score.sentence_id) {
            Some(meta) => entries.push(PerplexityEntry {
                perplexity: score.perplexity,
                axis: meta.axis,
                descriptor: meta.descriptor.clone(),
                template_id: meta.template_id.clone(),
                noun: meta.noun.clone(),
                sentence_id: score.sentence_id,
            }),
            None => unknown.push(score.sentence_id),
        }
    }
    if !unknown.is_empty() {
        unknown.sort();
        return Err(Error::Join { offenders: unknown });
    }
    entries.sort_by(|a, b| a.sentence_id.cmp(&b.sentence_id));
    Ok(PerplexityTable { entries })
}

/// Read `ppl.jsonl` and join it.
pub fn read_perplexities<R: BufRead>(reader: R, source_name: &str, dataset: &SentenceIndex) -> Result<PerplexityTable> {
    let scores: Vec<PerplexityScore> = jsonl::read_records(reader, source_name)?;
    ingest_perplexities(scores, dataset)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GroupBy {
    Axis,
    Template,
    AxisTemplate,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroupSummary {
    pub axis: Option<Axis>,
    pub template_id: Option<String>,
    #[serde(flatten)]
    pub summary: Summary,
}

/// Perplexity summary per group, sorted by (axis, template).
pub fn distribution_summary(table: &PerplexityTable, group_by: GroupBy) -> Result<Vec<GroupSummary>> {
    if table.is_empty() {
        return Err(Error::Argument("perplexity table is empty".into()));
    }
    let mut groups: BTreeMap<(Option<Axis>, Option<&str>), Vec<f64>> = BTreeMap::new();
    for e in &table.entries {
        let key = match group_by {
            GroupBy::Axis => (Some(e.axis), None),
            GroupBy::Template => (None, Some(&*e.template_id)),
            GroupBy::AxisTemplate => (Some(e.axis), Some(&*e.template_id)),
        };
        groups.entry(key).or_default().push(e.perplexity);
    }
    groups
        .into_iter()
        .map(|((axis, template), values)| {
            Ok(GroupSummary {
                axis,
                template_id: template.map(str::to_string),
                summary: stats::summarize(&values)?,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SigOptions {
    pub min_len: usize,
    pub max_len: usize,
    pub alpha: f64,
}

impl Default for SigOptions {
    fn default() -> Self {
        SigOptions {
            min_len: DEFAULT_MIN_LEN,
            max_len: DEFAULT_MAX_LEN,
            alpha: DEFAULT_ALPHA,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedDescriptor {
    pub descriptor: String,
    pub median_perplexity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairwiseSigReport {
    pub axis: Axis,
    pub template_id: String,
    pub percent_significant: f64,
    pub significant_pairs: usize,
    pub pair_count: usize,
    pub eligible_descriptors: usize,
    /// Lowest median perplexity first.
    pub low_ppl_descriptors: Vec<RankedDescriptor>,
    /// Highest median perplexity first.
    pub high_ppl_descriptors: Vec<RankedDescriptor>,
}

/// True when the descriptor's character count lies within the filter.
pub fn passes_length_filter(descriptor: &str, min_len: usize, max_len: usize) -> bool {
    (min_len..=max_len).contains(&descriptor.chars().count())
}

/// Test every unordered pair of length-filtered descriptors on one axis
/// under one template, pooling all nouns and variants per descriptor.
pub fn pairwise_significance(
    table: &PerplexityTable,
    axis: Axis,
    template_id: &str,
    opts: SigOptions,
) -> Result<PairwiseSigReport> {
    let mut samples: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let mut template_seen = false;
    for e in &table.entries {
        if &*e.template_id != template_id {
            continue;
        }
        template_seen = true;
        if e.axis == axis && passes_length_filter(&e.descriptor, opts.min_len, opts.max_len) {
            samples.entry(&e.descriptor).or_default().push(e.perplexity);
        }
    }
    if !template_seen {
        return Err(Error::Lookup(format!("no scores for template {template_id:?}")));
    }
    if samples.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "axis {axis} under template {template_id:?} has {} descriptor(s) passing the {}-{} character filter",
            samples.len(),
            opts.min_len,
            opts.max_len
        )));
    }

    let groups: Vec<(&str, &Vec<f64>)> = samples.iter().map(|(k, v)| (*k, v)).collect();
    let mut significant = 0;
    let mut pairs = 0;
    for ((_, a), (_, b)) in groups.iter().tuple_combinations() {
        let r = stats::mann_whitney_u(a, b, Alternative::TwoSided)?;
        pairs += 1;
        if r.is_significant(opts.alpha) {
            significant += 1;
        }
    }

    let mut ranked = groups
        .iter()
        .map(|(d, v)| {
            Ok(RankedDescriptor {
                descriptor: d.to_string(),
                median_perplexity: stats::median(v)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    // Ties broken by descriptor text so the lists are deterministic.
    ranked.sort_by(|a, b| {
        a.median_perplexity
            .total_cmp(&b.median_perplexity)
            .then_with(|| a.descriptor.cmp(&b.descriptor))
    });
    let low = ranked.iter().take(EXTREME_COUNT).cloned().collect();
    let high = ranked.iter().rev().take(EXTREME_COUNT).cloned().collect();

    Ok(PairwiseSigReport {
        axis,
        template_id: template_id.to_string(),
        percent_significant: 100.0 * significant as f64 / pairs as f64,
        significant_pairs: significant,
        pair_count: pairs,
        eligible_descriptors: groups.len(),
        low_ppl_descriptors: low,
        high_ppl_descriptors: high,
    })
}

/// Run [`pairwise_significance`] on every axis present in the table,
/// skipping (with a warning) axes with too few eligible descriptors.
pub fn pairwise_significance_by_axis(
    table: &PerplexityTable,
    template_id: &str,
    opts: SigOptions,
) -> Result<Vec<PairwiseSigReport>> {
    let axes: Vec<Axis> = table.entries.iter().map(|e| e.axis).sorted().dedup().collect();
    let mut out = Vec::new();
    for axis in axes {
        match pairwise_significance(table, axis, template_id, opts) {
            Ok(r) => out.push(r),
            Err(Error::InsufficientData(msg)) => log::warn!("skipping: {msg}"),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::{compile_dataset, SentenceRecord, VariationPolicy};
    use crate::registry::Registry;
    use std::sync::OnceLock;

    fn fixture() -> &'static (Vec<SentenceRecord>, SentenceIndex) {
        static FIXTURE: OnceLock<(Vec<SentenceRecord>, SentenceIndex)> = OnceLock::new();
        FIXTURE.get_or_init(|| {
            let reg = Registry::shipped();
            let records: Vec<SentenceRecord> = compile_dataset(&reg, VariationPolicy::None)
                .unwrap()
                .map(|r| r.unwrap())
                .filter(|r| r.template_id == "i_love_pnp" || r.template_id == "i_hate_pnp")
                .filter(|r| r.axis == Axis::Ability || r.axis == Axis::Nonce)
                .collect();
            let index = SentenceIndex::from_records(&records).unwrap();
            (records, index)
        })
    }

    fn score(id: &str, p: f64) -> PerplexityScore {
        PerplexityScore {
            sentence_id: id.into(),
            perplexity: p,
        }
    }

    #[test]
    fn unknown_ids_are_join_errors() {
        let (records, index) = fixture();
        let scores = vec![score(&records[0].id, 10.0), score("x|y|z", 5.0)];
        match ingest_perplexities(scores, index) {
            Err(Error::Join { offenders }) => assert_eq!(offenders, vec!["x|y|z".to_string()]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_values_and_duplicates_are_rejected() {
        let (records, index) = fixture();
        assert!(matches!(
            ingest_perplexities(vec![score(&records[0].id, -1.0)], index),
            Err(Error::Value(_))
        ));
        assert!(matches!(
            ingest_perplexities(vec![score(&records[0].id, f64::NAN)], index),
            Err(Error::Value(_))
        ));
        assert!(matches!(
            ingest_perplexities(vec![score(&records[0].id, 1.0), score(&records[0].id, 2.0)], index),
            Err(Error::Duplicate { .. })
        ));
    }

    #[test]
    fn summaries_per_cell() {
        let (records, index) = fixture();
        let table = ingest_perplexities(records.iter().map(|r| score(&r.id, 42.0)), index).unwrap();
        let cells = distribution_summary(&table, GroupBy::AxisTemplate).unwrap();
        assert_eq!(cells.len(), 4);
        let total: usize = cells.iter().map(|c| c.summary.count).sum();
        assert_eq!(total, records.len());
        for c in &cells {
            let s = c.summary;
            assert_eq!((s.min, s.q1, s.median, s.q3, s.max), (42.0, 42.0, 42.0, 42.0, 42.0));
        }
        assert!(distribution_summary(&PerplexityTable::default(), GroupBy::Axis).is_err());
    }

    #[test]
    fn length_filter_counts_characters() {
        assert!(!passes_length_filter("bi", 6, 19));
        assert!(passes_length_filter("hard-of-hearing", 6, 19));
        assert!(passes_length_filter("autistic", 6, 19));
        assert!(!passes_length_filter("who is visually impaired", 6, 19));
        assert!(passes_length_filter("sechs", 5, 5));
    }

    #[test]
    fn separated_descriptors_are_all_significant() {
        let (records, index) = fixture();
        // Each descriptor gets its own perplexity band far from the others.
        let descs: Vec<&str> = records
            .iter()
            .map(|r| r.descriptor_text.as_str())
            .sorted()
            .dedup()
            .collect();
        let scores = records.iter().enumerate().map(|(i, r)| {
            let rank = descs.iter().position(|d| *d == r.descriptor_text).unwrap() as f64;
            score(&r.id, 100.0 * (rank + 1.0) + (i % 7) as f64)
        });
        let table = ingest_perplexities(scores, index).unwrap();
        let rep = pairwise_significance(&table, Axis::Ability, "i_love_pnp", SigOptions::default()).unwrap();
        let k = rep.eligible_descriptors;
        assert_eq!(rep.pair_count, k * (k - 1) / 2);
        assert_eq!(rep.percent_significant, 100.0);
        assert!(rep.low_ppl_descriptors[0].median_perplexity <= rep.low_ppl_descriptors[1].median_perplexity);
        assert!(rep.high_ppl_descriptors[0].median_perplexity >= rep.high_ppl_descriptors[1].median_perplexity);

        // Rank-based: scaling every perplexity leaves the report unchanged.
        let scaled = ingest_perplexities(
            table
                .entries()
                .iter()
                .map(|e| score(&e.sentence_id, e.perplexity * 3.5)),
            index,
        )
        .unwrap();
        let again = pairwise_significance(&scaled, Axis::Ability, "i_love_pnp", SigOptions::default()).unwrap();
        assert_eq!(again.percent_significant, rep.percent_significant);
        assert_eq!(again.pair_count, rep.pair_count);
    }

    #[test]
    fn too_few_descriptors_is_insufficient_data() {
        let (records, index) = fixture();
        let table = ingest_perplexities(records.iter().map(|r| score(&r.id, 5.0)), index).unwrap();
        let opts = SigOptions {
            min_len: 40,
            max_len: 50,
            ..SigOptions::default()
        };
        assert!(matches!(
            pairwise_significance(&table, Axis::Ability, "i_love_pnp", opts),
            Err(Error::InsufficientData(_))
        ));
        assert!(matches!(
            pairwise_significance(&table, Axis::Ability, "im_np", SigOptions::default()),
            Err(Error::Lookup(_))
        ));
    }
}
