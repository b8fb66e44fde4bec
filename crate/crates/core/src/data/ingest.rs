use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::geo::CentroidTable;
use super::types::{ActionEvent, ActionType, FeatureKind, FeatureRole, FeatureSpec, Gender, UserRecord};
use crate::error::{invalid_arg, Error, Result};

const MANDATORY: [&str; 7] = ["user_id", "gender", "age", "sport_freq", "income", "education", "zip"];

/// Separator that marks a multi-valued answer in a single-choice field.
const MULTI_VALUE_SEP: char = '|';

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    /// A mandatory or feature field is empty.
    Missing,
    /// More than one value in a mutually exclusive field.
    Conflict,
    /// Daily sport frequency, outside the four analysed arms.
    DailyFrequency,
    /// Value unparseable or out of its plausible range.
    Implausible,
    /// Repeated user id; the first occurrence is kept.
    Duplicate,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows_read: usize,
    pub rows_kept: usize,
    pub dropped: BTreeMap<DropReason, usize>,
    pub excluded_columns: Vec<String>,
}

impl IngestReport {
    pub fn total_dropped(&self) -> usize {
        self.dropped.values().sum()
    }
}

/// Ingested user table with its feature layout.
#[derive(Debug, Clone, Default)]
pub struct UserTable {
    pub ordered: Vec<FeatureSpec>,
    pub unordered: Vec<FeatureSpec>,
    /// Per unordered column, code -> original label.
    pub unordered_labels: Vec<Vec<String>>,
    pub users: Vec<UserRecord>,
    index: HashMap<String, usize>,
}

impl UserTable {
    pub fn new(
        ordered: Vec<FeatureSpec>,
        unordered: Vec<FeatureSpec>,
        unordered_labels: Vec<Vec<String>>,
        users: Vec<UserRecord>,
    ) -> Result<Self> {
        let mut index = HashMap::with_capacity(users.len());
        for (i, u) in users.iter().enumerate() {
            if u.ordered_features.len() != ordered.len() || u.unordered_features.len() != unordered.len() {
                return Err(Error::Data(format!(
                    "user {} has feature lengths ({}, {}), expected ({}, {})",
                    u.user_id,
                    u.ordered_features.len(),
                    u.unordered_features.len(),
                    ordered.len(),
                    unordered.len()
                )));
            }
            if index.insert(u.user_id.clone(), i).is_some() {
                return Err(Error::Data(format!("duplicate user id {}", u.user_id)));
            }
        }
        Ok(UserTable {
            ordered,
            unordered,
            unordered_labels,
            users,
            index,
        })
    }

    pub fn get(&self, id: &str) -> Option<&UserRecord> {
        self.index.get(id).map(|&i| &self.users[i])
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }
}

pub fn read_feature_specs(path: &Path) -> Result<Vec<FeatureSpec>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_reader(file)?)
}

pub fn write_feature_specs(path: &Path, specs: &[FeatureSpec]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, specs)?;
    writeln!(w).map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn writer(path: &Path, comment: Option<&str>) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut buf = BufWriter::new(file);
    if let Some(c) = comment {
        for line in c.lines() {
            writeln!(buf, "# {line}").map_err(|e| Error::io(path, e))?;
        }
    }
    Ok(csv::Writer::from_writer(buf))
}

fn parse_arm(s: &str) -> std::result::Result<u8, DropReason> {
    match s.to_ascii_lowercase().as_str() {
        "0" | "never" => Ok(0),
        "1" | "rarely" => Ok(1),
        "2" | "monthly" => Ok(2),
        "3" | "weekly" => Ok(3),
        "4" | "daily" => Err(DropReason::DailyFrequency),
        _ => Err(DropReason::Implausible),
    }
}

fn parse_in_range(s: &str, lo: u32, hi: u32) -> std::result::Result<u32, DropReason> {
    let v: u32 = s.parse().map_err(|_| DropReason::Implausible)?;
    if (lo..=hi).contains(&v) {
        Ok(v)
    } else {
        Err(DropReason::Implausible)
    }
}

struct Layout {
    mandatory: [usize; 7],
    ordered: Vec<(usize, FeatureSpec)>,
    unordered: Vec<(usize, FeatureSpec)>,
}

fn parse_row(
    rec: &csv::StringRecord,
    layout: &Layout,
) -> std::result::Result<(UserRecord, Vec<String>), DropReason> {
    let fields: Vec<&str> = layout
        .mandatory
        .iter()
        .copied()
        .chain(layout.ordered.iter().map(|(c, _)| *c))
        .chain(layout.unordered.iter().map(|(c, _)| *c))
        .map(|c| rec.get(c).unwrap_or(""))
        .collect();
    if fields.iter().any(|f| f.contains(MULTI_VALUE_SEP)) {
        return Err(DropReason::Conflict);
    }
    if fields.iter().any(|f| f.is_empty()) {
        return Err(DropReason::Missing);
    }
    let [id, gender, age, sport, income, education, zip] = layout.mandatory.map(|c| rec.get(c).unwrap_or(""));
    let gender: Gender = gender.parse().map_err(|_| DropReason::Implausible)?;
    let sport_frequency = parse_arm(sport)?;
    let age = parse_in_range(age, 18, 120)?;
    let income_level = parse_in_range(income, 1, 6)? as u8;
    let education_level = parse_in_range(education, 1, 5)? as u8;
    let ordered_features = layout
        .ordered
        .iter()
        .map(|(c, _)| {
            rec[*c]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or(DropReason::Implausible)
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let labels = layout.unordered.iter().map(|(c, _)| rec[*c].to_string()).collect();
    Ok((
        UserRecord {
            user_id: id.to_string(),
            gender,
            age,
            sport_frequency,
            income_level,
            education_level,
            zip: zip.to_string(),
            ordered_features,
            unordered_features: Vec::new(),
        },
        labels,
    ))
}

/// Read `users.csv`, drop unusable rows and remove excluded columns.
///
/// Feature columns are typed by `features`; columns it does not declare are
/// kept as ordered features when every value is numeric and rejected
/// otherwise.
pub fn ingest_users(
    path: &Path,
    features: &[FeatureSpec],
    exclusions: &[String],
) -> Result<(UserTable, IngestReport)> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);

    for ex in exclusions {
        if MANDATORY.contains(&ex.as_str()) {
            return Err(invalid_arg!("mandatory column {ex:?} cannot be excluded"));
        }
    }
    let mut mandatory = [0usize; 7];
    for (slot, name) in mandatory.iter_mut().zip(MANDATORY) {
        *slot = col(name).ok_or_else(|| Error::Schema(format!("column {name:?} missing")))?;
    }
    let excluded: HashSet<&str> = exclusions.iter().map(String::as_str).collect();
    let declared: HashMap<&str, &FeatureSpec> = features.iter().map(|f| (f.name.as_str(), f)).collect();
    for f in features {
        if !excluded.contains(f.name.as_str()) && col(&f.name).is_none() {
            return Err(Error::Schema(format!("declared feature column {:?} missing", f.name)));
        }
    }

    let records: Vec<csv::StringRecord> = rdr.records().collect::<std::result::Result<_, _>>()?;

    let mut report = IngestReport {
        rows_read: records.len(),
        ..Default::default()
    };
    let mut layout = Layout {
        mandatory,
        ordered: Vec::new(),
        unordered: Vec::new(),
    };
    for (c, name) in headers.iter().enumerate() {
        if MANDATORY.contains(&name) {
            continue;
        }
        if excluded.contains(name) {
            report.excluded_columns.push(name.to_string());
            continue;
        }
        let spec = match declared.get(name) {
            Some(spec) => (*spec).clone(),
            None => {
                let numeric = records
                    .iter()
                    .filter_map(|r| r.get(c))
                    .filter(|v| !v.is_empty() && !v.contains(MULTI_VALUE_SEP))
                    .all(|v| v.parse::<f64>().is_ok());
                if !numeric {
                    return Err(Error::Schema(format!(
                        "undeclared column {name:?} is not numeric"
                    )));
                }
                FeatureSpec {
                    name: name.to_string(),
                    kind: FeatureKind::Ordered,
                    role: FeatureRole::Shared,
                }
            }
        };
        match spec.kind {
            FeatureKind::Ordered => layout.ordered.push((c, spec)),
            FeatureKind::Unordered => layout.unordered.push((c, spec)),
        }
    }

    let mut seen = HashSet::new();
    let mut kept: Vec<(UserRecord, Vec<String>)> = Vec::new();
    for rec in &records {
        match parse_row(rec, &layout) {
            Ok(row) => {
                if seen.insert(row.0.user_id.clone()) {
                    kept.push(row);
                } else {
                    *report.dropped.entry(DropReason::Duplicate).or_default() += 1;
                }
            }
            Err(reason) => *report.dropped.entry(reason).or_default() += 1,
        }
    }
    if kept.is_empty() {
        return Err(Error::Data(format!(
            "{}: no usable user rows ({} read)",
            path.display(),
            report.rows_read
        )));
    }

    // Category codes follow the sorted label order so they do not depend on
    // row order.
    let dictionaries: Vec<BTreeMap<String, u32>> = (0..layout.unordered.len())
        .map(|j| {
            let labels: BTreeSet<&str> = kept.iter().map(|(_, l)| l[j].as_str()).collect();
            labels
                .into_iter()
                .enumerate()
                .map(|(code, l)| (l.to_string(), code as u32))
                .collect()
        })
        .collect();
    let users: Vec<UserRecord> = kept
        .into_iter()
        .map(|(mut u, labels)| {
            u.unordered_features = labels
                .iter()
                .zip(&dictionaries)
                .map(|(l, dict)| dict[l])
                .collect();
            u
        })
        .collect();
    report.rows_kept = users.len();
    let unordered_labels = dictionaries
        .iter()
        .map(|d| d.keys().cloned().collect())
        .collect();
    let table = UserTable::new(
        layout.ordered.into_iter().map(|(_, s)| s).collect(),
        layout.unordered.into_iter().map(|(_, s)| s).collect(),
        unordered_labels,
        users,
    )?;
    Ok((table, report))
}

pub fn write_users(path: &Path, table: &UserTable, comment: Option<&str>) -> Result<()> {
    let mut w = writer(path, comment)?;
    let mut header: Vec<String> = MANDATORY.iter().map(|s| s.to_string()).collect();
    header.extend(table.ordered.iter().map(|f| f.name.clone()));
    header.extend(table.unordered.iter().map(|f| f.name.clone()));
    w.write_record(&header)?;
    for u in &table.users {
        let mut row = vec![
            u.user_id.clone(),
            u.gender.code().to_string(),
            u.age.to_string(),
            u.sport_frequency.to_string(),
            u.income_level.to_string(),
            u.education_level.to_string(),
            u.zip.clone(),
        ];
        row.extend(u.ordered_features.iter().map(|v| v.to_string()));
        row.extend(u.unordered_features.iter().enumerate().map(|(j, &c)| {
            table
                .unordered_labels
                .get(j)
                .and_then(|l| l.get(c as usize))
                .cloned()
                .unwrap_or_else(|| c.to_string())
        }));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[derive(Deserialize)]
struct EventRow {
    sender_id: String,
    recipient_id: String,
    timestamp: i64,
    action: String,
}

/// Read `events.csv` in file order.
pub fn read_events(path: &Path) -> Result<Vec<ActionEvent>> {
    let mut rdr = reader(path)?;
    let mut out = Vec::new();
    for (line, row) in rdr.deserialize::<EventRow>().enumerate() {
        let row = row?;
        let action: ActionType = row.action.parse()?;
        if row.timestamp < 0 {
            return Err(Error::Data(format!("event {line}: negative timestamp")));
        }
        if row.sender_id == row.recipient_id {
            return Err(Error::Data(format!(
                "event {line}: sender and recipient are both {}",
                row.sender_id
            )));
        }
        out.push(ActionEvent {
            sender_id: row.sender_id,
            recipient_id: row.recipient_id,
            timestamp: row.timestamp as u64,
            action,
        });
    }
    Ok(out)
}

pub fn write_events(path: &Path, events: &[ActionEvent], comment: Option<&str>) -> Result<()> {
    let mut w = writer(path, comment)?;
    w.write_record(["sender_id", "recipient_id", "timestamp", "action"])?;
    for e in events {
        w.write_record([
            e.sender_id.as_str(),
            e.recipient_id.as_str(),
            &e.timestamp.to_string(),
            e.action.as_str(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[derive(Deserialize)]
struct CentroidRow {
    zip: String,
    lat: f64,
    lon: f64,
}

pub fn read_centroids(path: &Path) -> Result<CentroidTable> {
    let mut rdr = reader(path)?;
    let mut table = CentroidTable::new();
    for row in rdr.deserialize::<CentroidRow>() {
        let row = row?;
        table.insert(row.zip, row.lat, row.lon)?;
    }
    Ok(table)
}

pub fn write_centroids(path: &Path, table: &CentroidTable, comment: Option<&str>) -> Result<()> {
    let mut w = writer(path, comment)?;
    w.write_record(["zip", "lat", "lon"])?;
    for (zip, (lat, lon)) in table.sorted() {
        w.write_record([zip, &lat.to_string(), &lon.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
