//! The `mcf` command-line front end.
//!
//! Settings resolve in the order defaults < `--config` file < flags. The
//! resolved [`RunConfig`] is written into every output, and any output file
//! can be passed back as `--config` to reproduce it.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::arm::{Arm, Contrast};
use crate::data::{
    build_samples, filter_one_way, ingest_users, read_centroids, read_events, read_feature_specs, write_centroids,
    write_events, write_feature_specs, write_users, CentroidTable, EstimationSample, Gender, GenderSamples,
    Interaction, UserTable,
};
use crate::dgp::{self, DgpConfig, TrueAggregate};
use crate::error::{invalid_arg, Error, Result};
use crate::estimate::{EffectTable, GateTable, SupportReport};
use crate::hetero::{self, ClusterSummary, WaldResult};
use crate::pipeline::{self, PipelineConfig, PipelineResult};
use crate::placebo::{self, Enumeration, PlaceboVerdict, RadiusRule};
use crate::report;

pub const DATA_DIR_ENV: &str = "MCF_DATA_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlaceboOptions {
    pub radius: RadiusRule,
    pub enumeration: Enumeration,
    /// |t| threshold of the verdict.
    pub critical: f64,
}

impl Default for PlaceboOptions {
    fn default() -> Self {
        PlaceboOptions {
            radius: RadiusRule::default(),
            enumeration: Enumeration::default(),
            critical: 1.96,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Master seed; copied into the DGP, forest and support settings.
    pub seed: u64,
    /// Directory holding users.csv, events.csv, zip_centroids.csv and
    /// features.json.
    pub data_dir: Option<PathBuf>,
    pub exclusions: Vec<String>,
    /// Recipient gender to analyse; `None` = every non-empty sample.
    pub gender: Option<Gender>,
    pub dgp: DgpConfig,
    /// Monte Carlo draws for the true effects written by `simulate`.
    pub oracle_draws: usize,
    pub pipeline: PipelineConfig,
    /// Contrast for GATEs, IATE densities and clustering.
    pub contrast: Contrast,
    /// GATE variables; empty = every heterogeneity variable.
    pub gate_variables: Vec<String>,
    pub k: usize,
    pub n_init: usize,
    /// Cluster on all contrasts (standardized) instead of `contrast` alone.
    pub cluster_all_contrasts: bool,
    pub density_points: usize,
    pub placebo: PlaceboOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            data_dir: None,
            exclusions: Vec::new(),
            gender: None,
            dgp: DgpConfig::validation(1),
            oracle_draws: 100_000,
            pipeline: PipelineConfig::default(),
            contrast: Contrast::weekly_vs_never(),
            gate_variables: Vec::new(),
            k: 5,
            n_init: 10,
            cluster_all_contrasts: false,
            density_points: 200,
            placebo: PlaceboOptions::default(),
        }
    }
}

impl RunConfig {
    fn resolve(mut self) -> Result<RunConfig> {
        self.dgp.seed = self.seed;
        self.pipeline.forest.seed = self.seed;
        self.pipeline.support.seed = self.seed;
        self.pipeline.forest.validate()?;
        self.dgp.validate()?;
        if self.k == 0 {
            return Err(invalid_arg!("k must be at least 1"));
        }
        if self.n_init == 0 {
            return Err(invalid_arg!("n_init must be at least 1"));
        }
        if let Some(t) = self.pipeline.support_threshold {
            if !(t > 0.0 && t <= 0.2) {
                return Err(invalid_arg!("support threshold {t} outside (0, 0.2]"));
            }
        }
        Ok(self)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    fn data_dir(&self) -> PathBuf {
        self.data_dir.clone().unwrap_or_else(|| PathBuf::from("."))
    }
}

#[derive(Debug, Parser)]
#[command(name = "mcf", version, about = "Honest multi-treatment causal forest")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Preset {
    Validation,
    IncomeSlope,
    Flat,
    Placebo,
    LargePSmoke,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON config, or any output file of a previous run.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    trees: Option<usize>,
    #[arg(long, global = true, value_enum)]
    share_weights: Option<OnOff>,
    /// Minimum estimated arm probability, or "off".
    #[arg(long, global = true)]
    support_threshold: Option<String>,
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Input directory; defaults to $MCF_DATA_DIR, then ".".
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    /// Output directory (default: the data directory).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_parser = parse_gender)]
    gender: Option<Gender>,
    /// Contrast as treated:control, by arm name or code (e.g. weekly:never).
    #[arg(long, global = true, value_parser = parse_contrast)]
    contrast: Option<Contrast>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate synthetic platform logs and their true effects.
    Simulate {
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Effects table, IATEs, GATEs and IATE density.
    Estimate,
    /// GATEs, deviations from the ATE and Wald tests.
    Gate {
        /// Heterogeneity variable (repeatable).
        #[arg(long = "variable")]
        variables: Vec<String>,
    },
    /// k-means++ clusters of the IATEs.
    Cluster,
    /// Visit-stage placebo test.
    Placebo,
    /// Collect the text tables of earlier runs.
    Report,
}

fn parse_gender(s: &str) -> std::result::Result<Gender, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_arm(s: &str) -> std::result::Result<usize, String> {
    if let Ok(code) = s.parse::<usize>() {
        return Arm::from_code(code).map(Arm::code).map_err(|e| e.to_string());
    }
    Arm::ALL
        .iter()
        .find(|a| a.name() == s.to_ascii_lowercase())
        .map(|a| a.code())
        .ok_or_else(|| format!("unknown arm {s:?}"))
}

fn parse_contrast(s: &str) -> std::result::Result<Contrast, String> {
    let (m, l) = s.split_once(':').ok_or("expected treated:control")?;
    Contrast::new(parse_arm(m)?, parse_arm(l)?).map_err(|e| e.to_string())
}

fn load_config(common: &Common, command: &Command) -> Result<RunConfig> {
    let mut cfg: RunConfig = match &common.config {
        Some(path) => serde_json::from_value(report::read_config(path)?)
            .map_err(|e| invalid_arg!("config {}: {e}", path.display()))?,
        None => RunConfig::default(),
    };
    if let Command::Simulate { preset, n } = command {
        if let Some(p) = preset {
            cfg.dgp = match p {
                Preset::Validation => DgpConfig::validation(cfg.seed),
                Preset::IncomeSlope => DgpConfig::income_slope(cfg.seed),
                Preset::Flat => DgpConfig::flat(cfg.seed),
                Preset::Placebo => DgpConfig::placebo(cfg.seed),
                Preset::LargePSmoke => DgpConfig::large_p_smoke(cfg.seed),
            };
        }
        if let Some(n) = n {
            cfg.dgp.n = *n;
        }
    }
    if let Command::Gate { variables } = command {
        if !variables.is_empty() {
            cfg.gate_variables = variables.clone();
        }
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(t) = common.trees {
        cfg.pipeline.forest.n_trees = t;
    }
    if let Some(w) = common.share_weights {
        cfg.pipeline.aggregation.share_weights = w == OnOff::On;
    }
    if let Some(t) = &common.support_threshold {
        cfg.pipeline.support_threshold = match t.as_str() {
            "off" | "none" => None,
            v => Some(v.parse().map_err(|_| invalid_arg!("bad support threshold {v:?}"))?),
        };
    }
    if let Some(k) = common.k {
        cfg.k = k;
    }
    if let Some(g) = common.gender {
        cfg.gender = Some(g);
    }
    if let Some(c) = common.contrast {
        cfg.contrast = c;
    }
    if let Some(d) = &common.data_dir {
        cfg.data_dir = Some(d.clone());
    } else if cfg.data_dir.is_none() {
        cfg.data_dir = std::env::var_os(DATA_DIR_ENV).map(PathBuf::from);
    }
    cfg.resolve()
}

/// Parse `args` (including the program name), run, and return the exit
/// code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: &Cli) -> Result<()> {
    let cfg = load_config(&cli.common, &cli.command)?;
    let out = cli.common.out.clone().unwrap_or_else(|| cfg.data_dir());
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.common.threads {
        if t == 0 {
            return Err(invalid_arg!("--threads must be at least 1"));
        }
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| Error::Numerical(format!("thread pool: {e}")))?;
    log::info!("seed {}, {} threads", cfg.seed, pool.current_num_threads());
    let started = Instant::now();
    pool.install(|| match &cli.command {
        Command::Simulate { .. } => cmd_simulate(&cfg, &out),
        Command::Estimate => cmd_estimate(&cfg, &out),
        Command::Gate { .. } => cmd_gate(&cfg, &out),
        Command::Cluster => cmd_cluster(&cfg, &out),
        Command::Placebo => cmd_placebo(&cfg, &out),
        Command::Report => cmd_report(&cfg, &out),
    })?;
    log::info!("finished in {:.2?}", started.elapsed());
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSummary {
    pub n: usize,
    pub recipient_gender: Gender,
    pub arm_counts: [usize; 4],
    pub intercepts: [f64; 4],
    pub min_treatment_prob: f64,
    pub contrasts: Vec<TrueAggregate>,
}

pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let config = cfg.to_json();
    let (sample, oracle) = dgp::generate(&cfg.dgp)?;
    let logs = dgp::emit_logs(&sample, &cfg.dgp)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let comment = format!("config: {config}");
    write_users(&out.join("users.csv"), &logs.users, Some(&comment))?;
    write_events(&out.join("events.csv"), &logs.events, Some(&comment))?;
    write_centroids(&out.join("zip_centroids.csv"), &logs.centroids, Some(&comment))?;
    write_feature_specs(&out.join("features.json"), &logs.features)?;
    let contrasts = Contrast::lower_triangle()
        .into_iter()
        .map(|c| dgp::true_aggregate(&oracle, &cfg.dgp, c, cfg.oracle_draws, cfg.seed, Some(dgp::INCOME_COL)))
        .collect::<Result<Vec<_>>>()?;
    let summary = OracleSummary {
        n: sample.len(),
        recipient_gender: cfg.dgp.recipient_gender,
        arm_counts: sample.arm_counts(),
        intercepts: oracle.intercepts,
        min_treatment_prob: oracle.min_treatment_prob,
        contrasts,
    };
    report::write_json(&out.join("oracle.json"), cfg, &summary)?;
    log::info!("wrote {} users, {} events to {}", logs.users.len(), logs.events.len(), out.display());
    Ok(())
}

struct Loaded {
    users: UserTable,
    centroids: CentroidTable,
    interactions: Vec<Interaction>,
    samples: GenderSamples,
}

fn load_data(cfg: &RunConfig) -> Result<Loaded> {
    let dir = cfg.data_dir();
    let features_path = dir.join("features.json");
    let features = if features_path.exists() {
        read_feature_specs(&features_path)?
    } else {
        Vec::new()
    };
    let (users, ingest) = ingest_users(&dir.join("users.csv"), &features, &cfg.exclusions)?;
    if ingest.total_dropped() > 0 {
        log::warn!("dropped {} user rows: {:?}", ingest.total_dropped(), ingest);
    }
    let events = read_events(&dir.join("events.csv"))?;
    let centroids = read_centroids(&dir.join("zip_centroids.csv"))?;
    let interactions = filter_one_way(&events)?;
    let samples = build_samples(&users, &interactions, &centroids)?;
    log::info!(
        "{} interactions: {} female, {} male recipients, {} without centroid",
        samples.report.interactions,
        samples.report.female,
        samples.report.male,
        samples.report.dropped_missing_centroid
    );
    Ok(Loaded {
        users,
        centroids,
        interactions,
        samples,
    })
}

fn genders(cfg: &RunConfig, samples: &GenderSamples) -> Result<Vec<Gender>> {
    let chosen: Vec<Gender> = match cfg.gender {
        Some(g) => vec![g],
        None => [Gender::Female, Gender::Male]
            .into_iter()
            .filter(|&g| !samples.for_gender(g).is_empty())
            .collect(),
    };
    if chosen.iter().any(|&g| samples.for_gender(g).is_empty()) || chosen.is_empty() {
        return Err(Error::Data("no observations for the requested recipient gender".into()));
    }
    Ok(chosen)
}

fn file(out: &Path, stem: &str, g: Gender, ext: &str) -> PathBuf {
    out.join(format!("{stem}_{}.{ext}", g.code()))
}

fn title(g: Gender) -> &'static str {
    match g {
        Gender::Female => "Female recipients",
        Gender::Male => "Male recipients",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateOutput {
    pub table: GateTable,
    pub wald: Option<WaldResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateOutput {
    pub gender: Gender,
    pub n: usize,
    pub support: Option<SupportReport>,
    pub effects: EffectTable,
}

fn gate_outputs(cfg: &RunConfig, res: &PipelineResult) -> Result<Vec<GateOutput>> {
    let tables = if cfg.gate_variables.is_empty() {
        res.gates(cfg.contrast, cfg.pipeline.binning)?
    } else {
        cfg.gate_variables
            .iter()
            .map(|v| res.gate(v, cfg.contrast, cfg.pipeline.binning))
            .collect::<Result<Vec<_>>>()?
    };
    Ok(tables
        .into_iter()
        .map(|table| {
            let wald = match hetero::wald_equality(&table) {
                Ok(w) => Some(w),
                Err(e) => {
                    log::warn!("{}: no Wald test ({e})", table.variable);
                    None
                }
            };
            GateOutput { table, wald }
        })
        .collect())
}

fn write_gates(cfg: &RunConfig, out: &Path, g: Gender, gates: &[GateOutput]) -> Result<()> {
    let config = cfg.to_json();
    let rows: Vec<Vec<String>> = gates.iter().flat_map(|o| report::gate_rows(&o.table)).collect();
    report::write_csv(&file(out, "gates", g, "csv"), &config, &report::GATE_HEADER, &rows)?;
    report::write_json(&file(out, "gates", g, "json"), cfg, &gates)?;
    let text: Vec<String> = gates
        .iter()
        .map(|o| report::render_gate_deviations(&o.table, o.wald.as_ref()))
        .collect();
    report::write_text(&file(out, "gates", g, "txt"), &config, &format!("{}\n\n{}", title(g), text.join("\n\n")))
}

pub fn cmd_estimate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let data = load_data(cfg)?;
    let config = cfg.to_json();
    for g in genders(cfg, &data.samples)? {
        let res = pipeline::run(data.samples.for_gender(g), &cfg.pipeline)?;
        let output = EstimateOutput {
            gender: g,
            n: res.sample.len(),
            support: res.support.clone(),
            effects: res.ate.clone(),
        };
        report::write_csv(
            &file(out, "effects", g, "csv"),
            &config,
            &report::EFFECT_HEADER,
            &report::effect_rows(&res.ate),
        )?;
        report::write_json(&file(out, "effects", g, "json"), cfg, &output)?;
        report::write_text(&file(out, "effects", g, "txt"), &config, &report::render_effect_table(&res.ate, title(g))?)?;
        let (header, rows) = report::iate_csv(&res.effects.iates);
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        report::write_csv(&file(out, "iates", g, "csv"), &config, &header, &rows)?;
        let column = res.effects.iates.column(cfg.contrast)?;
        let supported: Vec<f64> = column
            .iter()
            .zip(&res.effects.iates.supported)
            .filter(|(_, &s)| s)
            .map(|(&v, _)| v)
            .collect();
        let density = hetero::iate_density(&supported, cfg.density_points)?;
        report::write_csv(&file(out, "density", g, "csv"), &config, &["iate", "density"], &report::density_rows(&density))?;
        write_gates(cfg, out, g, &gate_outputs(cfg, &res)?)?;
    }
    Ok(())
}

pub fn cmd_gate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let data = load_data(cfg)?;
    for g in genders(cfg, &data.samples)? {
        let res = pipeline::run(data.samples.for_gender(g), &cfg.pipeline)?;
        write_gates(cfg, out, g, &gate_outputs(cfg, &res)?)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterOutput {
    pub gender: Gender,
    pub contrast: Contrast,
    pub k: usize,
    pub inertia: f64,
    pub summary: ClusterSummary,
}

/// Clusters of the supported rows' IATEs, described by the heterogeneity
/// columns.
pub fn cluster_result(cfg: &RunConfig, res: &PipelineResult) -> Result<(ClusterSummary, f64)> {
    let iates = &res.effects.iates;
    let rows: Vec<usize> = (0..iates.n_rows()).filter(|&i| iates.supported[i]).collect();
    let pick = |v: &[f64]| rows.iter().map(|&i| v[i]).collect::<Vec<f64>>();
    let target = pick(&iates.column(cfg.contrast)?);
    let km = if cfg.cluster_all_contrasts {
        let cols = iates
            .contrasts
            .iter()
            .map(|&c| Ok(pick(&iates.column(c)?)))
            .collect::<Result<Vec<_>>>()?;
        hetero::kmeanspp_cluster_multi(&cols, cfg.k, cfg.seed, cfg.n_init, true)?
    } else {
        hetero::kmeanspp_cluster(&target, cfg.k, cfg.seed, cfg.n_init)?
    };
    let sample = &res.sample;
    let descriptors: Vec<(String, Vec<f64>)> = sample
        .heterogeneity_columns()
        .into_iter()
        .map(|(name, j)| (name, pick(&sample.column(j).to_vec())))
        .chain(std::iter::once((
            pipeline::TREATMENT_GATE.to_string(),
            pick(&sample.d.iter().map(|&a| a as f64).collect::<Vec<_>>()),
        )))
        .collect();
    Ok((hetero::cluster_profile(&km.labels, cfg.k, &target, &descriptors)?, km.inertia))
}

pub fn cmd_cluster(cfg: &RunConfig, out: &Path) -> Result<()> {
    let data = load_data(cfg)?;
    let config = cfg.to_json();
    for g in genders(cfg, &data.samples)? {
        let res = pipeline::run(data.samples.for_gender(g), &cfg.pipeline)?;
        let (summary, inertia) = cluster_result(cfg, &res)?;
        let (header, rows) = report::cluster_csv(&summary);
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        report::write_csv(&file(out, "clusters", g, "csv"), &config, &header, &rows)?;
        let text = format!("{}\n\n{}", title(g), report::render_clusters(&summary, cfg.contrast));
        report::write_text(&file(out, "clusters", g, "txt"), &config, &text)?;
        let output = ClusterOutput {
            gender: g,
            contrast: cfg.contrast,
            k: cfg.k,
            inertia,
            summary,
        };
        report::write_json(&file(out, "clusters", g, "json"), cfg, &output)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaceboOutput {
    pub gender: Gender,
    pub radius_km: f64,
    pub max_realized_km: f64,
    pub realized_pairs: usize,
    pub candidate_pairs: usize,
    pub target_counts: [usize; 4],
    pub achieved_counts: [usize; 4],
    pub warnings: Vec<String>,
    pub placebo: EffectTable,
    pub main: EffectTable,
    pub verdict: PlaceboVerdict,
}

pub fn cmd_placebo(cfg: &RunConfig, out: &Path) -> Result<()> {
    let data = load_data(cfg)?;
    let config = cfg.to_json();
    let set = placebo::impute_potential_visits(
        &data.users,
        &data.interactions,
        &data.centroids,
        cfg.placebo.radius,
        cfg.placebo.enumeration,
    )?;
    log::info!(
        "radius {:.2} km: {} realized, {} candidate pairs",
        set.radius_km,
        set.realized.len(),
        set.candidates.len()
    );
    for g in genders(cfg, &data.samples)? {
        let main_sample: &EstimationSample = data.samples.for_gender(g);
        let draw = placebo::draw_matched_sample(
            &set,
            &data.users,
            g,
            main_sample.len(),
            main_sample.arm_shares(),
            cfg.seed,
        )?;
        let ps = placebo::placebo_sample(&data.users, &data.centroids, &draw)?;
        let placebo_table = placebo::run_placebo(&ps, &cfg.pipeline)?;
        let main = pipeline::run(main_sample, &cfg.pipeline)?.ate;
        let verdict = placebo::verdict(&placebo_table, cfg.placebo.critical);
        report::write_csv(
            &file(out, "placebo", g, "csv"),
            &config,
            &report::EFFECT_HEADER,
            &report::effect_rows(&placebo_table),
        )?;
        let text = format!(
            "{}\n\n{}\n\nVerdict: {} (max |t| = {:.2})",
            title(g),
            report::effect_tables_side_by_side(
                (&main, "Main outcome: message"),
                (&placebo_table, "Placebo outcome: visit"),
            )?,
            verdict.text,
            verdict.max_abs_t
        );
        report::write_text(&file(out, "placebo", g, "txt"), &config, &text)?;
        let output = PlaceboOutput {
            gender: g,
            radius_km: set.radius_km,
            max_realized_km: set.max_realized_km,
            realized_pairs: set.realized.len(),
            candidate_pairs: set.candidates.len(),
            target_counts: draw.target_counts,
            achieved_counts: draw.achieved_counts,
            warnings: draw.warnings.clone(),
            placebo: placebo_table,
            main,
            verdict,
        };
        report::write_json(&file(out, "placebo", g, "json"), cfg, &output)?;
    }
    Ok(())
}

/// Text report assembled from the JSON outputs found in the output
/// directory.
pub fn cmd_report(cfg: &RunConfig, out: &Path) -> Result<()> {
    let mut sections = Vec::new();
    for g in [Gender::Female, Gender::Male] {
        let effects = file(out, "effects", g, "json");
        if effects.exists() {
            let o: EstimateOutput = report::read_json_result(&effects)?;
            sections.push(report::render_effect_table(&o.effects, title(g))?);
        }
        let gates = file(out, "gates", g, "json");
        if gates.exists() {
            let o: Vec<GateOutput> = report::read_json_result(&gates)?;
            for t in &o {
                sections.push(report::render_gate_deviations(&t.table, t.wald.as_ref()));
            }
        }
        let clusters = file(out, "clusters", g, "json");
        if clusters.exists() {
            let o: ClusterOutput = report::read_json_result(&clusters)?;
            sections.push(format!("{}\n{}", title(g), report::render_clusters(&o.summary, o.contrast)));
        }
        let placebo = file(out, "placebo", g, "json");
        if placebo.exists() {
            let o: PlaceboOutput = report::read_json_result(&placebo)?;
            sections.push(format!(
                "{}\nVerdict: {}",
                report::effect_tables_side_by_side(
                    (&o.main, &format!("{}: message", title(g))),
                    (&o.placebo, &format!("{}: visit (placebo)", title(g))),
                )?,
                o.verdict.text
            ));
        }
    }
    if sections.is_empty() {
        return Err(Error::Data(format!("no result files in {}", out.display())));
    }
    report::write_text(&out.join("report.txt"), &cfg.to_json(), &sections.join("\n\n"))
}
