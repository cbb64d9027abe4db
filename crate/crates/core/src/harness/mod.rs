//! Deterministic mock scorers and record-file schema checks, for running
//! every pipeline without real models.

mod mock;
mod schema;

pub use mock::{
    mock_offense, mock_perplexity, mock_responses, mock_style_manifest, mock_style_vector, mock_style_vector_for,
    skew_weight, MockProfile, StyleSkew,
};
pub use schema::{validate_schema, SchemaContext, SchemaKind, SchemaReport, SchemaViolation};
