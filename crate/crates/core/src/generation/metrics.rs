use std::collections::{BTreeMap, HashSet};
use std::io::Read;

use serde::{Deserialize, Serialize};

use super::grid::StyleGrid;
use crate::error::{Error, Result};
use crate::registry::Axis;
use crate::stats::population_variance;

/// Reports multiply raw variances by this factor.
pub const REPORT_SCALE: f64 = 1000.0;

const SHIPPED_CLUSTERS: &str = include_str!("../../data/clusters.json");

/// A named group of near-synonymous styles.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub name: String,
    pub member_styles: Vec<String>,
}

impl ClusterSpec {
    /// The six default clusters.
    pub fn shipped() -> Vec<ClusterSpec> {
        serde_json::from_str(SHIPPED_CLUSTERS).expect("valid shipped clusters")
    }

    pub fn read<R: Read>(reader: R) -> Result<Vec<ClusterSpec>> {
        Ok(serde_json::from_reader(reader)?)
    }

    /// A cluster containing every style of the manifest.
    pub fn all_styles(manifest: &[String]) -> ClusterSpec {
        ClusterSpec {
            name: "all".into(),
            member_styles: manifest.to_vec(),
        }
    }
}

/// A cluster with its members resolved to manifest indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResolvedCluster {
    pub name: String,
    pub indices: Vec<usize>,
}

/// Resolve clusters against a manifest; members must exist, be distinct,
/// and no style may sit in two clusters.
pub fn resolve_clusters(specs: &[ClusterSpec], manifest: &[String]) -> Result<Vec<ResolvedCluster>> {
    let mut used = HashSet::new();
    let mut names = HashSet::new();
    specs
        .iter()
        .map(|spec| {
            if !names.insert(&spec.name) {
                return Err(Error::Duplicate {
                    kind: "cluster",
                    key: spec.name.clone(),
                });
            }
            let mut indices = Vec::with_capacity(spec.member_styles.len());
            for style in &spec.member_styles {
                let idx = manifest
                    .iter()
                    .position(|s| s == style)
                    .ok_or_else(|| Error::Lookup(format!("cluster {:?} names unknown style {style:?}", spec.name)))?;
                if !used.insert(idx) {
                    return Err(Error::Config(format!(
                        "style {style:?} appears twice across clusters (in {:?})",
                        spec.name
                    )));
                }
                indices.push(idx);
            }
            Ok(ResolvedCluster {
                name: spec.name.clone(),
                indices,
            })
        })
        .collect()
}

/// Mean style vectors at the three levels of aggregation.
#[derive(Clone, Debug, PartialEq)]
pub struct StyleProfiles {
    /// Mean over responses of each (template, descriptor) cell.
    pub cell_means: BTreeMap<(String, String), Vec<f64>>,
    /// Mean of a descriptor's cell means over the templates it appears in.
    pub descriptor_means: BTreeMap<String, Vec<f64>>,
    /// Mean of the descriptor means.
    pub global_mean: Vec<f64>,
}

fn mean_of<'a, I: IntoIterator<Item = &'a Vec<f64>>>(vectors: I, dim: usize) -> Vec<f64> {
    let mut acc = vec![0.0; dim];
    let mut n = 0usize;
    for v in vectors {
        for (a, x) in acc.iter_mut().zip(v) {
            *a += x;
        }
        n += 1;
    }
    acc.iter_mut().for_each(|a| *a /= n as f64);
    acc
}

/// Unweighted means: over responses per cell, over templates per
/// descriptor, and over descriptors globally.
pub fn mean_style_profiles(grid: &StyleGrid) -> Result<StyleProfiles> {
    if grid.is_empty() {
        return Err(Error::Argument("style grid is empty".into()));
    }
    let dim = grid.style_count();
    warn_on_gaps(grid);
    let cell_means: BTreeMap<(String, String), Vec<f64>> = grid
        .cells()
        .map(|(t, d, cell)| ((t.to_string(), d.to_string()), mean_of(cell.values(), dim)))
        .collect();
    let mut per_descriptor: BTreeMap<&str, Vec<&Vec<f64>>> = BTreeMap::new();
    for ((_, d), m) in &cell_means {
        per_descriptor.entry(d).or_default().push(m);
    }
    let descriptor_means: BTreeMap<String, Vec<f64>> = per_descriptor
        .into_iter()
        .map(|(d, ms)| (d.to_string(), mean_of(ms, dim)))
        .collect();
    let global_mean = mean_of(descriptor_means.values(), dim);
    Ok(StyleProfiles {
        cell_means,
        descriptor_means,
        global_mean,
    })
}

fn warn_on_gaps(grid: &StyleGrid) {
    let missing = grid.missing_cells();
    if missing > 0 {
        log::warn!("incomplete style grid: {missing} (template, descriptor) cell(s) have no responses");
    }
}

/// How per-descriptor values of one template are reduced.
#[derive(Clone, Copy)]
enum Reduce<'a> {
    /// Sum of per-style variances over these styles.
    PerStyle(&'a [usize]),
    /// Variance of the within-set probability sum.
    Summed(&'a [usize]),
}

/// Core of all three metrics, in raw units. Templates without any
/// selected descriptor are left out of the average.
fn gen_bias_raw<F>(grid: &StyleGrid, keep: F, reduce: Reduce<'_>) -> Result<f64>
where
    F: Fn(&str) -> bool,
{
    if grid.is_empty() {
        return Err(Error::Argument("style grid is empty".into()));
    }
    let dim = grid.style_count();
    let mut by_template: BTreeMap<&str, Vec<Vec<f64>>> = BTreeMap::new();
    for (t, d, cell) in grid.cells() {
        if keep(d) {
            by_template.entry(t).or_default().push(mean_of(cell.values(), dim));
        }
    }
    if by_template.is_empty() {
        return Err(Error::Argument("no descriptors selected".into()));
    }
    let mut total = 0.0;
    for (t, means) in &by_template {
        if means.len() < 2 {
            log::warn!("template {t:?} has a single descriptor; its variance is 0");
        }
        total += match reduce {
            Reduce::PerStyle(styles) => styles
                .iter()
                .map(|&s| population_variance(&means.iter().map(|m| m[s]).collect::<Vec<_>>()))
                .sum::<Result<f64>>()?,
            Reduce::Summed(styles) => {
                let sums: Vec<f64> = means.iter().map(|m| styles.iter().map(|&s| m[s]).sum()).collect();
                population_variance(&sums)?
            }
        };
    }
    Ok(total / by_template.len() as f64)
}

fn all_styles(grid: &StyleGrid) -> Vec<usize> {
    (0..grid.style_count()).collect()
}

/// Full generation bias in raw units (multiply by [`REPORT_SCALE`] to report).
pub fn full_gen_bias(grid: &StyleGrid) -> Result<f64> {
    gen_bias_raw(grid, |_| true, Reduce::PerStyle(&all_styles(grid)))
}

/// Contribution of one cluster's styles to the full generation bias, raw units.
pub fn partial_gen_bias(grid: &StyleGrid, cluster: &ResolvedCluster) -> Result<f64> {
    gen_bias_raw(grid, |_| true, Reduce::PerStyle(&cluster.indices))
}

/// Variance of the cluster-summed probability, raw units.
pub fn summed_cluster_gen_bias(grid: &StyleGrid, cluster: &ResolvedCluster) -> Result<f64> {
    gen_bias_raw(grid, |_| true, Reduce::Summed(&cluster.indices))
}

/// Full generation bias over the descriptors of one axis, raw units.
pub fn axis_filtered_fgb(grid: &StyleGrid, axis: Axis) -> Result<f64> {
    gen_bias_raw(
        grid,
        |d| grid.axis_of(d) == Some(axis),
        Reduce::PerStyle(&all_styles(grid)),
    )
    .map_err(|e| match e {
        Error::Argument(_) => Error::Argument(format!("axis {axis} has no descriptors in the grid")),
        other => other,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterBias {
    pub pgb_x1000: f64,
    pub scgb_x1000: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenBiasReport {
    pub fgb_x1000: f64,
    pub per_cluster: BTreeMap<String, ClusterBias>,
    pub axis_filter: Option<Axis>,
}

/// FGB plus PGB/SCGB for each cluster, scaled for reporting. With an
/// axis filter, every value is restricted to that axis's descriptors.
pub fn gen_bias_report(grid: &StyleGrid, clusters: &[ResolvedCluster], axis: Option<Axis>) -> Result<GenBiasReport> {
    let keep = |d: &str| axis.is_none() || grid.axis_of(d) == axis;
    let fgb = gen_bias_raw(grid, keep, Reduce::PerStyle(&all_styles(grid)))?;
    let mut per_cluster = BTreeMap::new();
    for c in clusters {
        let pgb = gen_bias_raw(grid, keep, Reduce::PerStyle(&c.indices))?;
        let scgb = gen_bias_raw(grid, keep, Reduce::Summed(&c.indices))?;
        per_cluster.insert(
            c.name.clone(),
            ClusterBias {
                pgb_x1000: pgb * REPORT_SCALE,
                scgb_x1000: scgb * REPORT_SCALE,
            },
        );
    }
    Ok(GenBiasReport {
        fgb_x1000: fgb * REPORT_SCALE,
        per_cluster,
        axis_filter: axis,
    })
}

/// Axis-filtered FGB (scaled) for every axis in the grid.
pub fn fgb_by_axis(grid: &StyleGrid) -> Result<Vec<(Axis, f64)>> {
    grid.axes()
        .into_iter()
        .map(|a| Ok((a, axis_filtered_fgb(grid, a)? * REPORT_SCALE)))
        .collect()
}
