//! Style-based generation bias over classified responses.

mod cluster;
mod grid;
mod metrics;

pub use cluster::{cluster_series, cluster_styles, pearson, Distance, Linkage, Merge, StyleDendrogram};
pub use grid::{
    ingest_style_vectors, read_manifest, validate_style_vector, ResponseRecord, StyleGrid, StyleRecord, SUM_TOLERANCE,
};
pub use metrics::{
    axis_filtered_fgb, fgb_by_axis, full_gen_bias, gen_bias_report, mean_style_profiles, partial_gen_bias,
    resolve_clusters, summed_cluster_gen_bias, ClusterBias, ClusterSpec, GenBiasReport, ResolvedCluster, StyleProfiles,
    REPORT_SCALE,
};
