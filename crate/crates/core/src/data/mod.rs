//! Turning platform tables into estimation samples.
//!
//! The flow is `ingest_users` + `read_events` + `read_centroids`, then
//! [`filter_one_way`] to reduce the raw action log to one-way interactions,
//! then [`build_samples`] to produce one estimation sample per recipient
//! gender.

mod geo;
mod ingest;
mod interactions;
mod samples;
mod types;

pub use geo::{haversine_km, zip_distance, CentroidTable, EARTH_RADIUS_KM};
pub use ingest::{
    ingest_users, read_centroids, read_events, read_feature_specs, write_centroids, write_events,
    write_feature_specs, write_users, DropReason, IngestReport, UserTable,
};
pub use interactions::filter_one_way;
pub use samples::{build_samples, pair_covariates, pair_metadata, BuildReport, GenderSamples};
pub(crate) use samples::assemble;
pub use types::{
    ActionEvent, ActionType, EstimationSample, FeatureColumn, FeatureKind, FeatureMetadata,
    FeatureRole, FeatureSpec, Gender, Interaction, UserRecord,
};
