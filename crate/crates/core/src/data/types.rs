use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::arm::N_ARMS;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Female,
    Male,
}

impl Gender {
    pub fn opposite(self) -> Gender {
        match self {
            Gender::Female => Gender::Male,
            Gender::Male => Gender::Female,
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            Gender::Female => "f",
            Gender::Male => "m",
        }
    }
}

impl FromStr for Gender {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "f" | "female" | "0" => Ok(Gender::Female),
            "m" | "male" | "1" => Ok(Gender::Male),
            other => Err(Error::Data(format!("unknown gender code {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserRecord {
    pub user_id: String,
    pub gender: Gender,
    pub age: u32,
    /// Arm code 0..=3 (never, rarely, monthly, weekly).
    pub sport_frequency: u8,
    /// Ordinal 1..=6.
    pub income_level: u8,
    /// Ordinal 1..=5.
    pub education_level: u8,
    pub zip: String,
    pub ordered_features: Vec<f64>,
    pub unordered_features: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionType {
    Visit,
    Message,
    Smile,
    SmileBack,
    Like,
    Note,
    ProfileRelease,
    Applet,
    Block,
}

impl ActionType {
    /// Visits are the only action the counterpart cannot see.
    pub fn is_visible(self) -> bool {
        self != ActionType::Visit
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ActionType::Visit => "visit",
            ActionType::Message => "message",
            ActionType::Smile => "smile",
            ActionType::SmileBack => "smile_back",
            ActionType::Like => "like",
            ActionType::Note => "note",
            ActionType::ProfileRelease => "profile_release",
            ActionType::Applet => "applet",
            ActionType::Block => "block",
        }
    }
}

impl FromStr for ActionType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "visit" => ActionType::Visit,
            "message" => ActionType::Message,
            "smile" => ActionType::Smile,
            "smile_back" => ActionType::SmileBack,
            "like" => ActionType::Like,
            "note" => ActionType::Note,
            "profile_release" => ActionType::ProfileRelease,
            "applet" => ActionType::Applet,
            "block" => ActionType::Block,
            other => return Err(Error::Data(format!("unknown action type {other:?}"))),
        })
    }
}

impl fmt::Display for ActionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionEvent {
    pub sender_id: String,
    pub recipient_id: String,
    /// Seconds since epoch.
    pub timestamp: u64,
    pub action: ActionType,
}

impl ActionEvent {
    pub fn new(sender: &str, recipient: &str, timestamp: u64, action: ActionType) -> Self {
        ActionEvent {
            sender_id: sender.to_string(),
            recipient_id: recipient.to_string(),
            timestamp,
            action,
        }
    }
}

/// A one-way interaction: the sender visited, the recipient stayed visibly
/// passive up to the point the record covers.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Interaction {
    pub sender_id: String,
    pub recipient_id: String,
    pub message_sent: bool,
    pub first_visit_time: u64,
}

impl Interaction {
    /// Minimal event stream that reproduces this interaction.
    pub fn to_events(&self) -> Vec<ActionEvent> {
        let mut out = vec![ActionEvent::new(
            &self.sender_id,
            &self.recipient_id,
            self.first_visit_time,
            ActionType::Visit,
        )];
        if self.message_sent {
            out.push(ActionEvent::new(
                &self.sender_id,
                &self.recipient_id,
                self.first_visit_time,
                ActionType::Message,
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Ordered,
    Unordered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureRole {
    Recipient,
    Sender,
    #[default]
    Shared,
}

/// One entry of the `features.json` sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    #[serde(default)]
    pub role: FeatureRole,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureColumn {
    pub name: String,
    pub kind: FeatureKind,
    pub role: FeatureRole,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureMetadata {
    pub columns: Vec<FeatureColumn>,
}

impl FeatureMetadata {
    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn push(&mut self, name: impl Into<String>, kind: FeatureKind, role: FeatureRole) {
        self.columns.push(FeatureColumn {
            name: name.into(),
            kind,
            role,
        });
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn is_unordered(&self, j: usize) -> bool {
        self.columns[j].kind == FeatureKind::Unordered
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|c| c.name.as_str())
    }
}

/// Outcome, treatment and covariates for one estimation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationSample {
    pub y: Vec<f64>,
    pub d: Vec<u8>,
    pub x: Array2<f64>,
    pub meta: FeatureMetadata,
    /// Columns of `x` pre-specified as heterogeneity variables.
    pub z_indices: Vec<usize>,
}

impl EstimationSample {
    pub fn new(
        y: Vec<f64>,
        d: Vec<u8>,
        x: Array2<f64>,
        meta: FeatureMetadata,
        z_indices: Vec<usize>,
    ) -> Result<Self> {
        let n = y.len();
        if d.len() != n || x.nrows() != n {
            return Err(Error::Data(format!(
                "sample length mismatch: y={}, d={}, x rows={}",
                n,
                d.len(),
                x.nrows()
            )));
        }
        if x.ncols() != meta.len() {
            return Err(Error::Data(format!(
                "{} covariate columns but {} metadata entries",
                x.ncols(),
                meta.len()
            )));
        }
        if let Some(&bad) = z_indices.iter().find(|&&j| j >= x.ncols()) {
            return Err(Error::Data(format!("heterogeneity column {bad} does not exist")));
        }
        if let Some(&bad) = d.iter().find(|&&a| a as usize >= N_ARMS) {
            return Err(Error::Data(format!("treatment code {bad} out of range")));
        }
        Ok(EstimationSample {
            y,
            d,
            x,
            meta,
            z_indices,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    pub fn column(&self, j: usize) -> ArrayView1<'_, f64> {
        self.x.column(j)
    }

    pub fn arm_counts(&self) -> [usize; N_ARMS] {
        let mut c = [0; N_ARMS];
        for &a in &self.d {
            c[a as usize] += 1;
        }
        c
    }

    pub fn arm_shares(&self) -> [f64; N_ARMS] {
        let c = self.arm_counts();
        let n = self.len().max(1) as f64;
        std::array::from_fn(|a| c[a] as f64 / n)
    }

    /// Row subset, preserving order.
    pub fn select(&self, rows: &[usize]) -> EstimationSample {
        EstimationSample {
            y: rows.iter().map(|&i| self.y[i]).collect(),
            d: rows.iter().map(|&i| self.d[i]).collect(),
            x: self.x.select(ndarray::Axis(0), rows),
            meta: self.meta.clone(),
            z_indices: self.z_indices.clone(),
        }
    }

    /// Heterogeneity variables as (name, column index).
    pub fn heterogeneity_columns(&self) -> Vec<(String, usize)> {
        self.z_indices
            .iter()
            .map(|&j| (self.meta.columns[j].name.clone(), j))
            .collect()
    }
}
