//! Render a generated sample as platform logs in the ingest CSV schemas.
//!
//! Observation `i` becomes recipient `r{i}` (covariates and arm from the
//! sample) visited once by a fresh sender `s{i}` of the opposite gender; a
//! message follows the visit iff `y_i = 1`. Senders live within roughly
//! 45 km of their recipient, recipients are spread over a Germany-sized box.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{DgpConfig, AGE_COL, EDUCATION_COL, INCOME_COL};
use crate::data::{
    ActionEvent, ActionType, CentroidTable, EstimationSample, FeatureKind, FeatureRole, FeatureSpec, UserRecord,
    UserTable,
};
use crate::error::{invalid_arg, Result};

const EMIT_STREAM: u64 = 1 << 40;
const T0: u64 = 1_500_000_000;
/// Sample size up to which senders use the full ±0.4°/±0.6° offset box.
/// Beyond it the box shrinks so the number of opposite-sex users within the
/// placebo radius of a recipient stays roughly constant.
const SPREAD_N: f64 = 250.0;

#[derive(Debug, Clone)]
pub struct SyntheticLogs {
    pub users: UserTable,
    pub features: Vec<FeatureSpec>,
    pub events: Vec<ActionEvent>,
    pub centroids: CentroidTable,
}

fn category_label(code: u32) -> String {
    format!("k{code:03}")
}

pub fn emit_logs(sample: &EstimationSample, config: &DgpConfig) -> Result<SyntheticLogs> {
    if sample.n_features() != config.n_features() {
        return Err(invalid_arg!(
            "sample has {} columns, config describes {}",
            sample.n_features(),
            config.n_features()
        ));
    }
    if config.n_categories > 1000 {
        return Err(invalid_arg!("at most 1000 categories can be emitted"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(EMIT_STREAM);

    let extra_ordered: Vec<FeatureSpec> = (3..config.p_ordered)
        .map(|j| FeatureSpec {
            name: sample.meta.columns[j].name.clone(),
            kind: FeatureKind::Ordered,
            role: FeatureRole::Recipient,
        })
        .collect();
    let unordered: Vec<FeatureSpec> = (0..config.p_unordered)
        .map(|k| FeatureSpec {
            name: sample.meta.columns[config.p_ordered + k].name.clone(),
            kind: FeatureKind::Unordered,
            role: FeatureRole::Recipient,
        })
        .collect();
    let labels: Vec<Vec<String>> = (0..config.p_unordered)
        .map(|_| (0..config.n_categories as u32).map(category_label).collect())
        .collect();

    let spread = (SPREAD_N / sample.len().max(1) as f64).sqrt().min(1.0);
    let recipient_gender = config.recipient_gender;
    let mut users = Vec::with_capacity(2 * sample.len());
    let mut events = Vec::with_capacity(2 * sample.len());
    let mut centroids = CentroidTable::new();
    for (i, row) in sample.x.rows().into_iter().enumerate() {
        let rid = format!("r{i:06}");
        let sid = format!("s{i:06}");
        let lat = rng.random_range(47.5..54.5);
        let lon = rng.random_range(6.0..15.0);
        let slat = lat + spread * rng.random_range(-0.4..0.4);
        let slon = lon + spread * rng.random_range(-0.6..0.6);
        centroids.insert(format!("R{i:06}"), lat, lon)?;
        centroids.insert(format!("S{i:06}"), slat, slon)?;

        users.push(UserRecord {
            user_id: rid.clone(),
            gender: recipient_gender,
            age: row[AGE_COL] as u32,
            sport_frequency: sample.d[i],
            income_level: row[INCOME_COL] as u8,
            education_level: row[EDUCATION_COL] as u8,
            zip: format!("R{i:06}"),
            ordered_features: (3..config.p_ordered).map(|j| row[j]).collect(),
            unordered_features: (config.p_ordered..config.n_features()).map(|j| row[j] as u32).collect(),
        });
        users.push(UserRecord {
            user_id: sid.clone(),
            gender: recipient_gender.opposite(),
            age: rng.random_range(18..=65),
            sport_frequency: rng.random_range(0..=3),
            income_level: rng.random_range(1..=6),
            education_level: rng.random_range(1..=5),
            zip: format!("S{i:06}"),
            ordered_features: (3..config.p_ordered).map(|_| StandardNormal.sample(&mut rng)).collect(),
            unordered_features: (0..config.p_unordered)
                .map(|_| rng.random_range(0..config.n_categories as u32))
                .collect(),
        });

        let t = T0 + 60 * i as u64;
        events.push(ActionEvent::new(&sid, &rid, t, ActionType::Visit));
        if sample.y[i] == 1.0 {
            events.push(ActionEvent::new(&sid, &rid, t + 30, ActionType::Message));
        }
    }
    let mut features = extra_ordered.clone();
    features.extend(unordered.iter().cloned());
    let users = UserTable::new(extra_ordered, unordered, labels, users)?;
    Ok(SyntheticLogs {
        users,
        features,
        events,
        centroids,
    })
}
