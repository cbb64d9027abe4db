//! Offensiveness differentials across descriptors and templates, and
//! descriptor frequency in text corpora.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::BufRead;
use std::sync::Arc;

use aho_corasick::AhoCorasick;
use rand::seq::IteratorRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generation::ResponseRecord;
use crate::index::SentenceIndex;
use crate::jsonl;
use crate::registry::Axis;
use crate::stats;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Corpus sample size used for frequency counts unless overridden.
pub const DEFAULT_SAMPLE_SIZE: usize = 10_000_000;

/// One line of `offense.jsonl`. The id names a sentence or a response.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OffenseScore {
    pub id: String,
    pub prob_offensive: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OffenseEntry {
    pub id: String,
    pub prob_offensive: f64,
    pub descriptor: Arc<str>,
    pub axis: Axis,
    pub template_id: Arc<str>,
}

/// Offensiveness probabilities joined to descriptor and template.
#[derive(Clone, Debug, Default)]
pub struct OffenseTable {
    entries: Vec<OffenseEntry>,
}

impl OffenseTable {
    /// Build from already-joined entries, checking the probability range.
    pub fn from_entries(mut entries: Vec<OffenseEntry>) -> Result<Self> {
        for e in &entries {
            check_probability(&e.id, e.prob_offensive)?;
        }
        entries.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(OffenseTable { entries })
    }

    pub fn entries(&self) -> &[OffenseEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn check_probability(id: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Value(format!(
            "offensiveness for {id:?} must lie in [0, 1], got {p}"
        )))
    }
}

/// Join scores to sentences, either directly or through `responses`.
pub fn ingest_offense<I>(scores: I, dataset: &SentenceIndex, responses: &[ResponseRecord]) -> Result<OffenseTable>
where
    I: IntoIterator<Item = OffenseScore>,
{
    let by_response: HashMap<&str, &str> = responses
        .iter()
        .map(|r| (r.response_id.as_str(), r.sentence_id.as_str()))
        .collect();
    let mut seen = HashSet::new();
    let mut unknown = Vec::new();
    let mut entries = Vec::new();
    for s in scores {
        check_probability(&s.id, s.prob_offensive)?;
        if !seen.insert(s.id.clone()) {
            return Err(Error::Duplicate {
                kind: "offense score",
                key: s.id,
            });
        }
        let meta = dataset
            .get(&s.id)
            .or_else(|| by_response.get(s.id.as_str()).and_then(|sid| dataset.get(sid)));
        match meta {
            Some(m) => entries.push(OffenseEntry {
                prob_offensive: s.prob_offensive,
                descriptor: m.descriptor.clone(),
                axis: m.axis,
                template_id: m.template_id.clone(),
                id: s.id,
            }),
            None => unknown.push(s.id),
        }
    }
    if !unknown.is_empty() {
        unknown.sort();
        return Err(Error::Join { offenders: unknown });
    }
    OffenseTable::from_entries(entries)
}

pub fn read_offense<R: BufRead>(
    reader: R,
    source_name: &str,
    dataset: &SentenceIndex,
    responses: &[ResponseRecord],
) -> Result<OffenseTable> {
    let scores: Vec<OffenseScore> = jsonl::read_records(reader, source_name)?;
    ingest_offense(scores, dataset, responses)
}

/// Bucket edges for grouping descriptor means: ascending, starting at 0
/// and ending at 1. Bucket `i` is `[edges[i], edges[i+1])`; the last one
/// also includes 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketEdges(Vec<f64>);

impl BucketEdges {
    pub fn new(edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 || edges[0] != 0.0 || edges[edges.len() - 1] != 1.0 {
            return Err(Error::Config(format!(
                "bucket edges must run from 0 to 1, got {edges:?}"
            )));
        }
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if edges.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Config(format!(
                "bucket edges must be strictly ascending, got {edges:?}"
            )));
        }
        Ok(BucketEdges(edges))
    }

    /// Default edges for the shipped templates; quartiles for any other.
    pub fn default_for(template_id: &str) -> Self {
        let edges = match template_id {
            "im_np" => vec![0.0, 0.03, 0.2, 0.5, 0.72, 1.0],
            "i_love_pnp" => vec![0.0, 0.24, 0.49, 0.74, 0.99, 1.0],
            "i_hate_pnp" => vec![0.0, 0.85, 0.999, 1.0],
            _ => vec![0.0, 0.25, 0.5, 0.75, 1.0],
        };
        BucketEdges(edges)
    }

    pub fn edges(&self) -> &[f64] {
        &self.0
    }

    /// Index of the bucket holding `p`.
    pub fn bucket_of(&self, p: f64) -> usize {
        let n = self.0.len() - 1;
        self.0[1..n].partition_point(|e| *e <= p)
    }
}

impl std::str::FromStr for BucketEdges {
    type Err = Error;

    /// Comma-separated list, e.g. `0,0.5,1`.
    fn from_str(s: &str) -> Result<Self> {
        let edges = s
            .split(',')
            .map(|x| {
                x.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("bad bucket edge {x:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        BucketEdges::new(edges)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DescriptorOffense {
    pub descriptor: String,
    pub mean: f64,
    /// Set for nonce-axis descriptors; shown starred in reports.
    pub nonce: bool,
}

impl DescriptorOffense {
    pub fn display_name(&self) -> String {
        if self.nonce {
            format!("{}*", self.descriptor)
        } else {
            self.descriptor.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OffenseBucket {
    pub lower: f64,
    pub upper: f64,
    /// Sorted by ascending mean, then name.
    pub descriptors: Vec<DescriptorOffense>,
}

/// Mean offensiveness per descriptor under one template.
fn descriptor_means<'a>(entries: impl Iterator<Item = &'a OffenseEntry>) -> BTreeMap<&'a str, (Axis, f64)> {
    let mut acc: BTreeMap<&str, (Axis, f64, usize)> = BTreeMap::new();
    for e in entries {
        let slot = acc.entry(&e.descriptor).or_insert((e.axis, 0.0, 0));
        slot.1 += e.prob_offensive;
        slot.2 += 1;
    }
    acc.into_iter()
        .map(|(d, (axis, sum, n))| (d, (axis, sum / n as f64)))
        .collect()
}

/// Group descriptors by their mean offensiveness under one template.
pub fn offense_by_descriptor(
    table: &OffenseTable,
    template_id: &str,
    edges: &BucketEdges,
) -> Result<Vec<OffenseBucket>> {
    let means = descriptor_means(table.entries.iter().filter(|e| &*e.template_id == template_id));
    if means.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no offensiveness scores for template {template_id:?}"
        )));
    }
    let mut buckets: Vec<OffenseBucket> = edges
        .0
        .windows(2)
        .map(|w| OffenseBucket {
            lower: w[0],
            upper: w[1],
            descriptors: Vec::new(),
        })
        .collect();
    for (d, (axis, mean)) in means {
        buckets[edges.bucket_of(mean)].descriptors.push(DescriptorOffense {
            descriptor: d.to_string(),
            mean,
            nonce: axis == Axis::Nonce,
        });
    }
    for b in &mut buckets {
        b.descriptors
            .sort_by(|x, y| x.mean.total_cmp(&y.mean).then_with(|| x.descriptor.cmp(&y.descriptor)));
    }
    Ok(buckets)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemplateOffense {
    pub template_id: String,
    pub mean: f64,
    /// Population standard deviation across descriptor means.
    pub std: f64,
    pub descriptor_count: usize,
}

/// Mean and spread of per-descriptor means for every template, sorted by
/// descending spread.
pub fn offense_by_template(table: &OffenseTable) -> Result<Vec<TemplateOffense>> {
    let mut by_template: BTreeMap<&str, Vec<&OffenseEntry>> = BTreeMap::new();
    for e in &table.entries {
        by_template.entry(&e.template_id).or_default().push(e);
    }
    let mut rows = by_template
        .into_iter()
        .map(|(t, entries)| {
            let means: Vec<f64> = descriptor_means(entries.into_iter())
                .values()
                .map(|(_, m)| *m)
                .collect();
            Ok(TemplateOffense {
                template_id: t.to_string(),
                mean: stats::mean(&means)?,
                std: stats::population_variance(&means)?.sqrt(),
                descriptor_count: means.len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| b.std.total_cmp(&a.std).then_with(|| a.template_id.cmp(&b.template_id)));
    Ok(rows)
}

/// Share of entries scored at or above `threshold`.
pub fn offensive_fraction(table: &OffenseTable, threshold: f64) -> Result<f64> {
    if table.is_empty() {
        return Err(Error::Argument("offensiveness table is empty".into()));
    }
    let hits = table.entries.iter().filter(|e| e.prob_offensive >= threshold).count();
    Ok(hits as f64 / table.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyRow {
    pub descriptor: String,
    pub occurrences: u64,
    pub examples_scanned: u64,
    pub frequency: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyReport {
    pub examples_scanned: u64,
    /// One row per requested descriptor, in request order.
    pub rows: Vec<FrequencyRow>,
}

/// Counts word-bounded, case-insensitive usages of single-word
/// descriptors in one pass over a corpus.
#[derive(Clone, Debug)]
pub struct FrequencyCounter {
    descriptors: Vec<String>,
    /// Pattern index for each descriptor.
    pattern_of: Vec<usize>,
    matcher: AhoCorasick,
    counts: Vec<u64>,
    examples: u64,
}

impl FrequencyCounter {
    pub fn new(descriptors: &[String]) -> Result<Self> {
        if let Some(bad) = descriptors
            .iter()
            .find(|d| d.trim().is_empty() || d.contains(char::is_whitespace))
        {
            return Err(Error::Argument(format!("descriptor {bad:?} is not a single word")));
        }
        let mut patterns: Vec<String> = Vec::new();
        let mut pattern_of = Vec::with_capacity(descriptors.len());
        for d in descriptors {
            let lower = d.to_lowercase();
            let idx = match patterns.iter().position(|p| *p == lower) {
                Some(i) => i,
                None => {
                    patterns.push(lower);
                    patterns.len() - 1
                }
            };
            pattern_of.push(idx);
        }
        let matcher = AhoCorasick::new(&patterns).map_err(|e| Error::Argument(e.to_string()))?;
        Ok(FrequencyCounter {
            descriptors: descriptors.to_vec(),
            pattern_of,
            counts: vec![0; patterns.len()],
            matcher,
            examples: 0,
        })
    }

    pub fn add_example(&mut self, text: &str) {
        self.examples += 1;
        let lower = text.to_lowercase();
        for m in self.matcher.find_overlapping_iter(&lower) {
            let before = lower[..m.start()].chars().next_back();
            let after = lower[m.end()..].chars().next();
            if before.is_none_or(|c| !c.is_alphanumeric()) && after.is_none_or(|c| !c.is_alphanumeric()) {
                self.counts[m.pattern().as_usize()] += 1;
            }
        }
    }

    pub fn finish(self) -> FrequencyReport {
        let n = self.examples;
        let rows = self
            .descriptors
            .into_iter()
            .zip(self.pattern_of)
            .map(|(descriptor, p)| {
                let occurrences = self.counts[p];
                FrequencyRow {
                    descriptor,
                    occurrences,
                    examples_scanned: n,
                    frequency: if n == 0 { 0.0 } else { occurrences as f64 / n as f64 },
                }
            })
            .collect();
        FrequencyReport {
            examples_scanned: n,
            rows,
        }
    }
}

/// Frequency of each descriptor across the corpus examples.
///
/// ```
/// use hb_core::offense::descriptor_frequency;
/// let report = descriptor_frequency(["I am blind.", "blind Blind BLIND"], &["blind".to_string()]).unwrap();
/// assert_eq!(report.rows[0].occurrences, 4);
/// assert_eq!(report.rows[0].frequency, 2.0);
/// ```
pub fn descriptor_frequency<I, S>(corpus: I, descriptors: &[String]) -> Result<FrequencyReport>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut counter = FrequencyCounter::new(descriptors)?;
    for example in corpus {
        counter.add_example(example.as_ref());
    }
    Ok(counter.finish())
}

/// Uniform sample of at most `k` items in one pass. Output keeps no
/// particular order.
pub fn reservoir_sample<I: IntoIterator>(items: I, k: usize, seed: u64) -> Vec<I::Item> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    items.into_iter().choose_multiple(&mut rng, k)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CorpusFormat {
    /// One example per line.
    #[default]
    Text,
    /// One `{"text": ...}` record per line.
    Jsonl,
}

#[derive(Deserialize)]
struct TextRecord {
    text: String,
}

/// Read corpus examples, skipping blank lines.
pub fn read_corpus<R: BufRead>(
    reader: R,
    format: CorpusFormat,
    source_name: &str,
) -> impl Iterator<Item = Result<String>> {
    let source = source_name.to_string();
    reader.lines().enumerate().filter_map(move |(i, line)| {
        let line = match line {
            Ok(l) => l,
            Err(e) => return Some(Err(e.into())),
        };
        if line.trim().is_empty() {
            return None;
        }
        Some(match format {
            CorpusFormat::Text => Ok(line),
            CorpusFormat::Jsonl => serde_json::from_str::<TextRecord>(&line)
                .map(|r| r.text)
                .map_err(|e| Error::schema(&source, i + 1, e.to_string())),
        })
    })
}
