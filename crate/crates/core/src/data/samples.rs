use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::geo::{zip_distance, CentroidTable};
use super::ingest::UserTable;
use super::types::{
    EstimationSample, FeatureKind, FeatureMetadata, FeatureRole, Gender, Interaction, UserRecord,
};
use crate::error::{Error, Result};

/// Heterogeneity variables tracked for every pair sample.
const Z_NAMES: [&str; 8] = [
    "recipient_age",
    "recipient_income",
    "recipient_education",
    "sender_age",
    "sender_income",
    "sender_education",
    "sender_sport_freq",
    "distance",
];

fn enters(role: FeatureRole, side: FeatureRole) -> bool {
    role == FeatureRole::Shared || role == side
}

/// Column layout of a (recipient, sender) pair sample.
pub fn pair_metadata(users: &UserTable) -> FeatureMetadata {
    let mut meta = FeatureMetadata::default();
    for (side, prefix) in [(FeatureRole::Recipient, "recipient"), (FeatureRole::Sender, "sender")] {
        meta.push(format!("{prefix}_age"), FeatureKind::Ordered, side);
        meta.push(format!("{prefix}_income"), FeatureKind::Ordered, side);
        meta.push(format!("{prefix}_education"), FeatureKind::Ordered, side);
        if side == FeatureRole::Sender {
            meta.push("sender_sport_freq", FeatureKind::Ordered, side);
        }
        for f in users.ordered.iter().filter(|f| enters(f.role, side)) {
            meta.push(format!("{prefix}_{}", f.name), FeatureKind::Ordered, side);
        }
        for f in users.unordered.iter().filter(|f| enters(f.role, side)) {
            meta.push(format!("{prefix}_{}", f.name), FeatureKind::Unordered, side);
        }
    }
    meta.push("distance", FeatureKind::Ordered, FeatureRole::Shared);
    meta
}

/// Covariate row for one pair, in [`pair_metadata`] order.
pub fn pair_covariates(
    users: &UserTable,
    recipient: &UserRecord,
    sender: &UserRecord,
    distance_km: f64,
) -> Vec<f64> {
    let mut row = Vec::new();
    for (side, u) in [(FeatureRole::Recipient, recipient), (FeatureRole::Sender, sender)] {
        row.push(u.age as f64);
        row.push(u.income_level as f64);
        row.push(u.education_level as f64);
        if side == FeatureRole::Sender {
            row.push(u.sport_frequency as f64);
        }
        for (f, v) in users.ordered.iter().zip(&u.ordered_features) {
            if enters(f.role, side) {
                row.push(*v);
            }
        }
        for (f, v) in users.unordered.iter().zip(&u.unordered_features) {
            if enters(f.role, side) {
                row.push(*v as f64);
            }
        }
    }
    row.push(distance_km);
    row
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BuildReport {
    pub interactions: usize,
    /// Observations without a resolvable postal-code centroid.
    pub dropped_missing_centroid: usize,
    pub female: usize,
    pub male: usize,
}

#[derive(Debug, Clone)]
pub struct GenderSamples {
    /// Interactions with a female recipient.
    pub female: EstimationSample,
    /// Interactions with a male recipient.
    pub male: EstimationSample,
    pub report: BuildReport,
}

impl GenderSamples {
    pub fn for_gender(&self, g: Gender) -> &EstimationSample {
        match g {
            Gender::Female => &self.female,
            Gender::Male => &self.male,
        }
    }
}

/// Assemble a sample from already-resolved rows.
pub(crate) fn assemble(
    meta: &FeatureMetadata,
    rows: Vec<(f64, u8, Vec<f64>)>,
) -> Result<EstimationSample> {
    let p = meta.len();
    let n = rows.len();
    let mut flat = Vec::with_capacity(n * p);
    let mut y = Vec::with_capacity(n);
    let mut d = Vec::with_capacity(n);
    for (yi, di, xi) in rows {
        debug_assert_eq!(xi.len(), p);
        y.push(yi);
        d.push(di);
        flat.extend(xi);
    }
    let x = Array2::from_shape_vec((n, p), flat).map_err(|e| Error::Data(e.to_string()))?;
    let z = Z_NAMES.iter().filter_map(|name| meta.index_of(name)).collect();
    EstimationSample::new(y, d, x, meta.clone(), z)
}

/// One observation per interaction: outcome = message sent, treatment =
/// recipient sport frequency, covariates = recipient and sender features
/// plus their distance. Split by recipient gender.
pub fn build_samples(
    users: &UserTable,
    interactions: &[Interaction],
    centroids: &CentroidTable,
) -> Result<GenderSamples> {
    let meta = pair_metadata(users);
    let mut report = BuildReport {
        interactions: interactions.len(),
        ..Default::default()
    };
    let mut female = Vec::new();
    let mut male = Vec::new();
    for it in interactions {
        let lookup = |id: &str| {
            users
                .get(id)
                .ok_or_else(|| Error::Data(format!("interaction references unknown user {id}")))
        };
        let sender = lookup(&it.sender_id)?;
        let recipient = lookup(&it.recipient_id)?;
        if sender.gender == recipient.gender {
            return Err(Error::Data(format!(
                "same-gender pair {} -> {}",
                it.sender_id, it.recipient_id
            )));
        }
        let Some(dist) = zip_distance(&recipient.zip, &sender.zip, centroids) else {
            report.dropped_missing_centroid += 1;
            continue;
        };
        let row = (
            if it.message_sent { 1.0 } else { 0.0 },
            recipient.sport_frequency,
            pair_covariates(users, recipient, sender, dist),
        );
        match recipient.gender {
            Gender::Female => female.push(row),
            Gender::Male => male.push(row),
        }
    }
    report.female = female.len();
    report.male = male.len();
    Ok(GenderSamples {
        female: assemble(&meta, female)?,
        male: assemble(&meta, male)?,
        report,
    })
}
