use serde::{Deserialize, Serialize};

use super::grid::StyleGrid;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Linkage {
    #[default]
    Average,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distance {
    /// 1 − Pearson correlation.
    #[default]
    Pearson,
}

/// One agglomeration step. Labels below `leaves.len()` are leaves; label
/// `leaves.len() + i` is the cluster formed at step `i`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StyleDendrogram {
    /// Style names of the clustered (non-constant) dimensions.
    pub leaves: Vec<String>,
    pub merges: Vec<Merge>,
    /// Styles with constant probability; left out of the tree.
    pub isolated: Vec<String>,
}

impl StyleDendrogram {
    /// Leaf names under a node label.
    pub fn members(&self, label: usize) -> Vec<String> {
        let mut out = Vec::new();
        let mut stack = vec![label];
        while let Some(l) = stack.pop() {
            if l < self.leaves.len() {
                out.push(self.leaves[l].clone());
            } else {
                let m = &self.merges[l - self.leaves.len()];
                stack.push(m.right);
                stack.push(m.left);
            }
        }
        out.sort();
        out
    }

    /// Styles sharing a flat cluster with `style` when the tree is cut at
    /// `height` (merges at or below it are kept).
    pub fn flat_cluster_around(&self, style: &str, height: f64) -> Result<Vec<String>> {
        if self.isolated.iter().any(|s| s == style) {
            return Ok(vec![style.to_string()]);
        }
        let mut label = self
            .leaves
            .iter()
            .position(|s| s == style)
            .ok_or_else(|| Error::Lookup(format!("style {style:?} is not in the dendrogram")))?;
        for (i, m) in self.merges.iter().enumerate() {
            if m.height > height {
                break;
            }
            if m.left == label || m.right == label {
                label = self.leaves.len() + i;
            }
        }
        Ok(self.members(label))
    }

    /// Height at which two styles first share a cluster.
    pub fn join_height(&self, a: &str, b: &str) -> Option<f64> {
        let ia = self.leaves.iter().position(|s| s == a)?;
        let ib = self.leaves.iter().position(|s| s == b)?;
        let (mut la, mut lb) = (ia, ib);
        for (i, m) in self.merges.iter().enumerate() {
            let here = self.leaves.len() + i;
            let hits_a = m.left == la || m.right == la;
            let hits_b = m.left == lb || m.right == lb;
            if hits_a && hits_b {
                return Some(m.height);
            }
            if hits_a {
                la = here;
            }
            if hits_b {
                lb = here;
            }
        }
        None
    }
}

/// Pearson correlation; `None` when either series is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Cluster style dimensions from per-style series of labelled points.
pub fn cluster_series(names: &[String], series: &[Vec<f64>]) -> Result<StyleDendrogram> {
    if names.len() != series.len() {
        return Err(Error::Shape {
            expected: names.len(),
            found: series.len(),
        });
    }
    if names.len() < 2 {
        return Err(Error::InsufficientData("clustering needs at least 2 styles".into()));
    }
    if series.iter().any(|s| s.len() < 2) {
        return Err(Error::InsufficientData("clustering needs at least 2 responses".into()));
    }
    let mut leaves = Vec::new();
    let mut kept = Vec::new();
    let mut isolated = Vec::new();
    for (name, s) in names.iter().zip(series) {
        let first = s[0];
        if s.iter().all(|v| *v == first) {
            log::warn!("style {name:?} is constant; isolating it as a leaf");
            isolated.push(name.clone());
        } else {
            leaves.push(name.clone());
            kept.push(s);
        }
    }
    let n = kept.len();
    let mut merges = Vec::new();
    if n >= 2 {
        let mut condensed = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                let r = pearson(kept[i], kept[j]).expect("non-constant series");
                condensed.push((1.0 - r).max(0.0));
            }
        }
        let dendrogram = kodama::linkage(&mut condensed, n, kodama::Method::Average);
        merges = dendrogram
            .steps()
            .iter()
            .map(|s| Merge {
                left: s.cluster1,
                right: s.cluster2,
                height: s.dissimilarity,
                size: s.size,
            })
            .collect();
    }
    Ok(StyleDendrogram {
        leaves,
        merges,
        isolated,
    })
}

/// Agglomerative clustering of style dimensions: each style is a point
/// whose coordinates are its probabilities across all responses.
pub fn cluster_styles(grid: &StyleGrid, _linkage: Linkage, _distance: Distance) -> Result<StyleDendrogram> {
    let mut series = vec![Vec::with_capacity(grid.response_count()); grid.style_count()];
    for (_, _, cell) in grid.cells() {
        for v in cell.values() {
            for (s, p) in series.iter_mut().zip(v) {
                s.push(*p);
            }
        }
    }
    cluster_series(grid.manifest(), &series)
}
