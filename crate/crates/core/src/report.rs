//! Text tables and CSV/JSON output.
//!
//! Text renderings report effects in percentage points with standard errors
//! in parentheses and significance stars. Every CSV starts with a
//! `# config: {json}` comment line; every JSON file has a top-level
//! `config` field, so an output can serve as the config of its own re-run.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::arm::{Arm, Contrast, N_ARMS};
use crate::error::{invalid_arg, Error, Result};
use crate::estimate::{EffectTable, Estimate, GateTable, IateResult};
use crate::hetero::{ClusterSummary, WaldResult};
use crate::stats;

pub const CONFIG_PREFIX: &str = "# config: ";

/// Effect relative to the baseline potential outcome, in percent.
pub fn relative_effect(effect: f64, baseline: f64) -> Result<f64> {
    if baseline == 0.0 || !baseline.is_finite() {
        return Err(Error::Numerical(format!("relative effect needs a nonzero baseline, got {baseline}")));
    }
    Ok(100.0 * effect / baseline)
}

/// `"1.32*** (0.30)"`: estimate with stars, SE in parentheses.
pub fn cell(e: &Estimate) -> String {
    format!("{:.2}{} ({:.2})", e.estimate, stats::stars(e.p_value), e.se)
}

pub const EFFECT_NOTE: &str = "Effects in % points; potential outcomes on the diagonal; standard errors in \
                               parentheses; *** p<0.01, ** p<0.05, * p<0.1.";

/// [`effect_table_body`] followed by the notation note.
pub fn render_effect_table(table: &EffectTable, title: &str) -> Result<String> {
    Ok(format!("{}\n{EFFECT_NOTE}", effect_table_body(table, title)?))
}

/// Potential outcomes on the diagonal, contrasts (row arm vs column arm)
/// below it, all ×100; relative effects against the first arm underneath.
pub fn effect_table_body(table: &EffectTable, title: &str) -> Result<String> {
    let pp = table.scaled(100.0);
    let width = pp
        .contrasts
        .iter()
        .map(|c| cell(&c.estimate).len())
        .chain(pp.potential.iter().map(|e| cell(e).len()))
        .max()
        .unwrap_or(8)
        .max(8)
        + 2;
    let mut out = String::new();
    writeln!(out, "{title}").unwrap();
    write!(out, "{:<10}", "").unwrap();
    for a in Arm::ALL {
        write!(out, "{:<width$}", a.label()).unwrap();
    }
    writeln!(out).unwrap();
    for m in 0..N_ARMS {
        write!(out, "{:<10}", Arm::ALL[m].label()).unwrap();
        for l in 0..=m {
            let e = if l == m { pp.potential[m] } else { pp.effect(m, l)? };
            write!(out, "{:<width$}", cell(&e)).unwrap();
        }
        writeln!(out).unwrap();
    }
    write!(out, "{:<10}", "Rel. (%)").unwrap();
    write!(out, "{:<width$}", "").unwrap();
    for m in 1..N_ARMS {
        let rel = relative_effect(pp.effect(m, 0)?.estimate, pp.potential[0].estimate)
            .map(|r| format!("{r:.2}"))
            .unwrap_or_else(|_| "n/a".into());
        write!(out, "{rel:<width$}").unwrap();
    }
    writeln!(out).unwrap();
    write!(out, "N = {}, without support = {}", table.n_used, table.n_unsupported).unwrap();
    Ok(out)
}

/// Two effect tables next to each other, one note underneath.
pub fn effect_tables_side_by_side(left: (&EffectTable, &str), right: (&EffectTable, &str)) -> Result<String> {
    let both = side_by_side(&effect_table_body(left.0, left.1)?, &effect_table_body(right.0, right.1)?, 4);
    Ok(format!("{both}\n{EFFECT_NOTE}"))
}

/// Two text blocks next to each other.
pub fn side_by_side(left: &str, right: &str, gap: usize) -> String {
    let l: Vec<&str> = left.lines().collect();
    let r: Vec<&str> = right.lines().collect();
    let w = l.iter().map(|s| s.chars().count()).max().unwrap_or(0) + gap;
    let mut out = String::new();
    for i in 0..l.len().max(r.len()) {
        let a = l.get(i).copied().unwrap_or("");
        let b = r.get(i).copied().unwrap_or("");
        let pad = w - a.chars().count();
        writeln!(out, "{a}{:pad$}{b}", "").unwrap();
    }
    out.lines().map(str::trim_end).collect::<Vec<_>>().join("\n")
}

/// Per-group GATE − ATE with p-values in percent.
pub fn render_gate_deviations(gates: &GateTable, wald: Option<&WaldResult>) -> String {
    let mut out = String::new();
    writeln!(out, "GATE - ATE: {} ({})", gates.variable, gates.contrast).unwrap();
    let lw = gates.rows.iter().map(|r| r.label.len()).max().unwrap_or(5).max(5) + 2;
    writeln!(out, "{:<lw$}{:>8}{:>10}{:>8}{:>10}", "Group", "N", "GATE", "Δ", "p").unwrap();
    for r in &gates.rows {
        writeln!(
            out,
            "{:<lw$}{:>8}{:>10.2}{:>8.2}{:>10.2}",
            r.label,
            r.size,
            100.0 * r.gate.estimate,
            100.0 * r.deviation.estimate,
            100.0 * r.deviation.p_value
        )
        .unwrap();
    }
    writeln!(out, "ATE = {}", cell(&gates.ate.scaled(100.0))).unwrap();
    if let Some(w) = wald {
        writeln!(
            out,
            "Wald test of equal GATEs: chi2({}) = {:.2}, p = {:.4}",
            w.df, w.statistic, w.p_value
        )
        .unwrap();
    }
    if gates.merged_groups > 0 {
        writeln!(out, "{} small group(s) merged into neighbours", gates.merged_groups).unwrap();
    }
    write!(out, "GATE and Δ in % points, p-values in %.").unwrap();
    out
}

/// Clusters as columns, sorted by mean effect, plus the whole sample.
pub fn render_clusters(summary: &ClusterSummary, contrast: Contrast) -> String {
    let cols: Vec<_> = summary.clusters.iter().chain(std::iter::once(&summary.total)).collect();
    let lw = summary.descriptors.iter().map(|d| d.len()).max().unwrap_or(0).max(16) + 2;
    let mut out = String::new();
    writeln!(out, "IATE clusters ({contrast})").unwrap();
    write!(out, "{:<lw$}", "Cluster").unwrap();
    for c in &cols {
        let name = if c.cluster == 0 { "All".to_string() } else { c.cluster.to_string() };
        write!(out, "{name:>10}").unwrap();
    }
    writeln!(out).unwrap();
    let mut row = |name: &str, f: &dyn Fn(&crate::hetero::ClusterStats) -> String| {
        write!(out, "{name:<lw$}").unwrap();
        for c in &cols {
            write!(out, "{:>10}", f(c)).unwrap();
        }
        writeln!(out).unwrap();
    };
    row("Mean effect (pp)", &|c| format!("{:.2}", 100.0 * c.mean_effect));
    row("Share (%)", &|c| format!("{:.1}", 100.0 * c.share));
    row("N", &|c| c.size.to_string());
    for (j, d) in summary.descriptors.iter().enumerate() {
        row(d, &|c| format!("{:.2}", c.descriptor_means[j]));
    }
    out.trim_end().to_string()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

/// CSV with a leading config comment line.
pub fn write_csv(path: &Path, config_json: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut buf = create(path)?;
    writeln!(buf, "{CONFIG_PREFIX}{config_json}").map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(buf);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn write_text(path: &Path, config_json: &str, body: &str) -> Result<()> {
    let mut buf = create(path)?;
    writeln!(buf, "{CONFIG_PREFIX}{config_json}\n\n{body}").map_err(|e| Error::io(path, e))?;
    buf.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[derive(Serialize)]
struct Envelope<'a, C: Serialize, T: Serialize> {
    config: &'a C,
    result: &'a T,
}

pub fn write_json<C: Serialize, T: Serialize>(path: &Path, config: &C, result: &T) -> Result<()> {
    let mut buf = create(path)?;
    serde_json::to_writer_pretty(&mut buf, &Envelope { config, result })?;
    writeln!(buf).map_err(|e| Error::io(path, e))?;
    buf.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// The `result` field of a file written by [`write_json`].
pub fn read_json_result<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut v: serde_json::Value = serde_json::from_reader(BufReader::new(file))?;
    let result = v
        .get_mut("result")
        .map(serde_json::Value::take)
        .ok_or_else(|| Error::Schema(format!("{}: no result field", path.display())))?;
    Ok(serde_json::from_value(result)?)
}

/// Config JSON embedded in an output file, or the whole file when it is a
/// plain JSON config.
pub fn read_config(path: &Path) -> Result<serde_json::Value> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut first = String::new();
    BufReader::new(file).read_line(&mut first).map_err(|e| Error::io(path, e))?;
    if let Some(json) = first.strip_prefix(CONFIG_PREFIX) {
        return Ok(serde_json::from_str(json.trim_end())?);
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut v: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| invalid_arg!("{} is neither a JSON config nor an output file: {e}", path.display()))?;
    if v.get("result").is_some() {
        if let Some(c) = v.get_mut("config") {
            return Ok(c.take());
        }
    }
    Ok(v)
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn est_fields(e: &Estimate) -> [String; 5] {
    [num(e.estimate), num(e.se), num(e.p_value), num(e.ess), e.unreliable.to_string()]
}

pub const EFFECT_HEADER: [&str; 8] = ["kind", "treated", "control", "estimate", "se", "p_value", "ess", "unreliable"];

/// Potential outcomes then contrasts, in probability units.
pub fn effect_rows(table: &EffectTable) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for (d, e) in table.potential.iter().enumerate() {
        let mut r = vec!["potential".into(), Arm::ALL[d].name().into(), String::new()];
        r.extend(est_fields(e));
        rows.push(r);
    }
    for c in &table.contrasts {
        let mut r = vec![
            "contrast".into(),
            Arm::ALL[c.contrast.treated].name().into(),
            Arm::ALL[c.contrast.control].name().into(),
        ];
        r.extend(est_fields(&c.estimate));
        rows.push(r);
    }
    rows
}

pub const GATE_HEADER: [&str; 16] = [
    "variable",
    "contrast",
    "group",
    "lo",
    "hi",
    "size",
    "mass",
    "gate",
    "gate_se",
    "gate_p",
    "deviation",
    "deviation_se",
    "deviation_p",
    "deviation_ci_lo",
    "deviation_ci_hi",
    "ci_level",
];

/// GATEs with the deviation-from-ATE series and its confidence band.
pub fn gate_rows(table: &GateTable) -> Vec<Vec<String>> {
    table
        .rows
        .iter()
        .map(|r| {
            vec![
                table.variable.clone(),
                table.contrast.label(),
                r.label.clone(),
                num(r.lo),
                num(r.hi),
                r.size.to_string(),
                num(r.mass),
                num(r.gate.estimate),
                num(r.gate.se),
                num(r.gate.p_value),
                num(r.deviation.estimate),
                num(r.deviation.se),
                num(r.deviation.p_value),
                num(r.ci_lo),
                num(r.ci_hi),
                num(table.ci_level),
            ]
        })
        .collect()
}

/// One row per prediction point: support flag, then effect and SE per
/// contrast.
pub fn iate_csv(iates: &IateResult) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header = vec!["row".to_string(), "supported".to_string()];
    for c in &iates.contrasts {
        let tag = format!("{}_{}", Arm::ALL[c.treated].name(), Arm::ALL[c.control].name());
        header.push(format!("effect_{tag}"));
        header.push(format!("se_{tag}"));
    }
    let rows = (0..iates.n_rows())
        .map(|i| {
            let mut r = vec![i.to_string(), iates.supported[i].to_string()];
            for k in 0..iates.contrasts.len() {
                r.push(num(iates.effect[i][k]));
                r.push(num(iates.se[i][k]));
            }
            r
        })
        .collect();
    (header, rows)
}

pub fn density_rows(points: &[(f64, f64)]) -> Vec<Vec<String>> {
    points.iter().map(|&(x, f)| vec![num(x), num(f)]).collect()
}

pub fn cluster_csv(summary: &ClusterSummary) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header: Vec<String> = ["cluster", "size", "share", "mean_effect"].map(String::from).to_vec();
    header.extend(summary.descriptors.iter().map(|d| format!("mean_{d}")));
    let rows = summary
        .clusters
        .iter()
        .chain(std::iter::once(&summary.total))
        .map(|c| {
            let mut r = vec![
                if c.cluster == 0 { "all".into() } else { c.cluster.to_string() },
                c.size.to_string(),
                num(c.share),
                num(c.mean_effect),
            ];
            r.extend(c.descriptor_means.iter().map(|&v| num(v)));
            r
        })
        .collect();
    (header, rows)
}
