use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::SentenceIndex;
use crate::registry::Axis;

/// Allowed distance of an ingested vector's sum from 1.
pub const SUM_TOLERANCE: f64 = 1e-4;

/// One line of `responses.jsonl`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub response_id: String,
    pub sentence_id: String,
    /// Full generation context (personas plus the templated sentence).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<String>,
    pub text: String,
}

/// One line of `styles.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StyleRecord {
    pub response_id: String,
    pub probs: Vec<f64>,
}

/// Read `style_manifest.json`: a JSON list of style names.
pub fn read_manifest<R: Read>(reader: R) -> Result<Vec<String>> {
    Ok(serde_json::from_reader(reader)?)
}

/// Check a raw probability vector against the style count and return it
/// renormalized to sum exactly to one.
pub fn validate_style_vector(probs: &[f64], style_count: usize) -> Result<Vec<f64>> {
    if probs.len() != style_count {
        return Err(Error::Shape {
            expected: style_count,
            found: probs.len(),
        });
    }
    if let Some(bad) = probs.iter().find(|p| !p.is_finite() || **p < 0.0 || **p > 1.0) {
        return Err(Error::Value(format!("style probability {bad} outside [0, 1]")));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > SUM_TOLERANCE {
        return Err(Error::Value(format!("style vector sums to {sum}, not 1")));
    }
    Ok(probs.iter().map(|p| p / sum).collect())
}

/// Style vectors of generated responses, grouped by the (template,
/// descriptor) of the sentence each response answers.
#[derive(Clone, Debug, PartialEq)]
pub struct StyleGrid {
    manifest: Vec<String>,
    axes: BTreeMap<String, Axis>,
    cells: BTreeMap<(String, String), BTreeMap<String, Vec<f64>>>,
}

impl StyleGrid {
    pub fn new(manifest: Vec<String>) -> Result<Self> {
        if manifest.is_empty() {
            return Err(Error::Argument("style manifest is empty".into()));
        }
        let mut seen = HashSet::new();
        for name in &manifest {
            if !seen.insert(name) {
                return Err(Error::Duplicate {
                    kind: "style",
                    key: name.clone(),
                });
            }
        }
        Ok(StyleGrid {
            manifest,
            axes: BTreeMap::new(),
            cells: BTreeMap::new(),
        })
    }

    /// Add one response's vector, validating and renormalizing it.
    pub fn insert(
        &mut self,
        template_id: &str,
        descriptor: &str,
        axis: Axis,
        response_id: &str,
        probs: &[f64],
    ) -> Result<()> {
        let probs = validate_style_vector(probs, self.manifest.len()).map_err(|e| match e {
            Error::Value(msg) => Error::Value(format!("response {response_id:?}: {msg}")),
            other => other,
        })?;
        match self.axes.get(descriptor) {
            Some(existing) if *existing != axis => {
                return Err(Error::Validation(format!(
                    "descriptor {descriptor:?} seen on axes {existing} and {axis}"
                )))
            }
            Some(_) => {}
            None => {
                self.axes.insert(descriptor.to_string(), axis);
            }
        }
        let cell = self
            .cells
            .entry((template_id.to_string(), descriptor.to_string()))
            .or_default();
        if cell.insert(response_id.to_string(), probs).is_some() {
            return Err(Error::Duplicate {
                kind: "response",
                key: response_id.to_string(),
            });
        }
        Ok(())
    }

    pub fn manifest(&self) -> &[String] {
        &self.manifest
    }

    pub fn style_count(&self) -> usize {
        self.manifest.len()
    }

    pub fn style_index(&self, name: &str) -> Option<usize> {
        self.manifest.iter().position(|s| s == name)
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Template ids present, sorted.
    pub fn templates(&self) -> Vec<&str> {
        self.cells
            .keys()
            .map(|(t, _)| t.as_str())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// Descriptors present, sorted.
    pub fn descriptors(&self) -> impl Iterator<Item = &str> {
        self.axes.keys().map(String::as_str)
    }

    pub fn axis_of(&self, descriptor: &str) -> Option<Axis> {
        self.axes.get(descriptor).copied()
    }

    /// Axes with at least one descriptor, sorted.
    pub fn axes(&self) -> Vec<Axis> {
        self.axes
            .values()
            .copied()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// Vectors of one cell, ordered by response id.
    pub fn cell(&self, template_id: &str, descriptor: &str) -> Option<&BTreeMap<String, Vec<f64>>> {
        self.cells.get(&(template_id.to_string(), descriptor.to_string()))
    }

    /// All cells in (template, descriptor) order.
    pub fn cells(&self) -> impl Iterator<Item = (&str, &str, &BTreeMap<String, Vec<f64>>)> {
        self.cells.iter().map(|((t, d), c)| (t.as_str(), d.as_str(), c))
    }

    /// Number of responses across all cells.
    pub fn response_count(&self) -> usize {
        self.cells.values().map(BTreeMap::len).sum()
    }

    /// Number of (template, descriptor) combinations with no responses.
    pub fn missing_cells(&self) -> usize {
        self.templates().len() * self.axes.len() - self.cells.len()
    }
}

/// Join style vectors to responses and responses to sentences.
pub fn ingest_style_vectors<I>(
    styles: I,
    responses: &[ResponseRecord],
    dataset: &SentenceIndex,
    manifest: Vec<String>,
) -> Result<StyleGrid>
where
    I: IntoIterator<Item = StyleRecord>,
{
    let mut by_response: HashMap<&str, &str> = HashMap::with_capacity(responses.len());
    let mut dangling = Vec::new();
    for r in responses {
        if by_response.insert(&r.response_id, &r.sentence_id).is_some() {
            return Err(Error::Duplicate {
                kind: "response",
                key: r.response_id.clone(),
            });
        }
        if dataset.get(&r.sentence_id).is_none() {
            dangling.push(format!("{} -> {}", r.response_id, r.sentence_id));
        }
    }
    if !dangling.is_empty() {
        return Err(Error::Join { offenders: dangling });
    }

    let mut grid = StyleGrid::new(manifest)?;
    let mut unknown = Vec::new();
    let mut scored = 0usize;
    for s in styles {
        let Some(sentence_id) = by_response.get(s.response_id.as_str()) else {
            unknown.push(s.response_id);
            continue;
        };
        let meta = dataset.get(sentence_id).expect("checked above");
        grid.insert(&meta.template_id, &meta.descriptor, meta.axis, &s.response_id, &s.probs)?;
        scored += 1;
    }
    if !unknown.is_empty() {
        unknown.sort();
        return Err(Error::Join { offenders: unknown });
    }
    if scored < responses.len() {
        log::warn!("{} response(s) have no style vector", responses.len() - scored);
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vectors_are_checked_and_renormalized() {
        assert!(matches!(validate_style_vector(&[0.5, 0.4], 2), Err(Error::Value(_))));
        assert!(matches!(
            validate_style_vector(&[0.5, 0.5], 3),
            Err(Error::Shape { .. })
        ));
        assert!(matches!(validate_style_vector(&[1.1, -0.1], 2), Err(Error::Value(_))));
        let v = validate_style_vector(&[0.50004, 0.5], 2).unwrap();
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let five = validate_style_vector(&[0.2; 5], 5).unwrap();
        assert_eq!(five.len(), 5);
    }

    #[test]
    fn grid_bookkeeping() {
        let mut g = StyleGrid::new(vec!["a".into(), "b".into()]).unwrap();
        g.insert("t1", "d1", Axis::Age, "r2", &[1.0, 0.0]).unwrap();
        g.insert("t1", "d1", Axis::Age, "r1", &[0.0, 1.0]).unwrap();
        g.insert("t2", "d2", Axis::Ability, "r3", &[0.5, 0.5]).unwrap();
        assert_eq!(g.templates(), vec!["t1", "t2"]);
        assert_eq!(g.descriptors().collect::<Vec<_>>(), vec!["d1", "d2"]);
        assert_eq!(g.missing_cells(), 2);
        assert_eq!(g.response_count(), 3);
        let ids: Vec<&String> = g.cell("t1", "d1").unwrap().keys().collect();
        assert_eq!(ids, vec!["r1", "r2"]);
        assert!(matches!(
            g.insert("t1", "d1", Axis::Age, "r1", &[1.0, 0.0]),
            Err(Error::Duplicate { .. })
        ));
        assert!(matches!(
            g.insert("t1", "d1", Axis::Religion, "r9", &[1.0, 0.0]),
            Err(Error::Validation(_))
        ));
        assert!(StyleGrid::new(vec!["a".into(), "a".into()]).is_err());
    }
}
