//! Experiment configuration, orchestration and file output for the
//! `torus-rf` binary.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::analysis::{summarize, AggregateMetrics};
use crate::engine::{EngineConfig, Method};
use crate::error::{Error, Result};
use crate::montecarlo::{Experiment, ExperimentConfig};
use crate::topology::{FailureMode, TorusTopology};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "torus-rf", version, about = "Reverse-flow forwarding experiments on 2D tori")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a failure-probability sweep and write aggregate and plot data.
    Run(RunArgs),
}

/// Failure-probability ranges for log-spaced sweeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Regime {
    /// 0.0001 to 0.01
    Low,
    /// 0.001 to 0.1
    Medium,
    /// 0.01 to 1
    High,
    /// 0.0001 to 1
    Full,
}

impl Regime {
    pub fn range(self) -> (f64, f64) {
        match self {
            Regime::Low => (1e-4, 1e-2),
            Regime::Medium => (1e-3, 1e-1),
            Regime::High => (1e-2, 1.0),
            Regime::Full => (1e-4, 1.0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl OutputFormat {
    fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Figure {
    /// Loss rate and improvement over NF.
    Fig4,
    /// Mean per-replicate maximum hop count.
    Fig5,
    /// Reverse-flow packet and hop ratios.
    Fig6,
}

impl Figure {
    pub const ALL: [Figure; 3] = [Figure::Fig4, Figure::Fig5, Figure::Fig6];

    fn name(self) -> &'static str {
        match self {
            Figure::Fig4 => "fig4",
            Figure::Fig5 => "fig5",
            Figure::Fig6 => "fig6",
        }
    }
}

#[derive(Debug, Default, Args)]
pub struct RunArgs {
    /// Flat key=value file (a previous run's manifest works); flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub rows: Option<usize>,
    #[arg(long)]
    pub cols: Option<usize>,
    /// bond | site
    #[arg(long)]
    pub mode: Option<String>,
    /// Comma-separated subset of NF,LFA,RF-CF,RF-LF.
    #[arg(long)]
    pub methods: Option<String>,
    /// Explicit comma-separated sweep, e.g. 0.0,0.5,1.0.
    #[arg(long = "p")]
    pub p: Option<String>,
    #[arg(long, value_enum)]
    pub regime: Option<Regime>,
    /// Number of log-spaced points within the regime.
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long = "packets")]
    pub packets: Option<usize>,
    /// Strategy switch threshold in reverse hops (default 2 × diameter).
    #[arg(long)]
    pub sst: Option<usize>,
    /// Hop budget per packet (default 16 × diameter).
    #[arg(long)]
    pub ttl: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long = "out-dir")]
    pub out_dir: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<OutputFormat>,
    /// Also write per-hop traces, per-packet verdicts and failure sets.
    #[arg(long = "dump-traces")]
    pub dump_traces: bool,
    /// Worker threads (results do not depend on this).
    #[arg(long)]
    pub threads: Option<usize>,
}

/// Everything needed to execute one `run`.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSettings {
    pub config: ExperimentConfig,
    pub out_dir: PathBuf,
    pub format: OutputFormat,
    pub dump_traces: bool,
    pub threads: Option<usize>,
}

/// `n` log-spaced values across `[lo, hi]`, endpoints exact.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.log10(), hi.log10());
            (0..n)
                .map(|i| match i {
                    0 => lo,
                    _ if i == n - 1 => hi,
                    _ => 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64),
                })
                .collect()
        }
    }
}

fn parse_num<T: std::str::FromStr>(flag: &'static str, raw: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    raw.trim()
        .parse()
        .map_err(|e| Error::config(flag, format!("{raw:?}: {e}")))
}

fn parse_list<T: std::str::FromStr>(flag: &'static str, raw: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    raw.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse_num(flag, s))
        .collect()
}

fn parse_methods(raw: &str) -> Result<Vec<Method>> {
    let mut methods: Vec<Method> = raw
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect::<Result<_>>()?;
    methods.sort();
    methods.dedup();
    Ok(methods)
}

fn parse_choice<T: ValueEnum>(flag: &'static str, raw: &str) -> Result<T> {
    T::from_str(raw.trim(), true).map_err(|e| Error::config(flag, e))
}

/// Keys a manifest carries that are not part of the configuration.
fn is_metadata_key(key: &str) -> bool {
    key == "tool_version" || key == "timestamp" || key.starts_with("output.")
}

fn read_key_values(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::config("config", format!("{}:{}: expected key=value", path.display(), lineno + 1))
        })?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

impl RunArgs {
    /// Merges an optional config file with flag overrides and validates.
    pub fn into_settings(self) -> Result<RunSettings> {
        let file = match &self.config {
            Some(path) => read_key_values(path)?,
            None => BTreeMap::new(),
        };
        for key in file.keys() {
            let known = matches!(
                key.as_str(),
                "rows" | "cols" | "mode" | "methods" | "p_values" | "regime" | "points"
                    | "replicates" | "packets_per_replicate" | "sst" | "ttl" | "seed"
                    | "format" | "out_dir"
            );
            if !known && !is_metadata_key(key) {
                return Err(Error::config("config", format!("unknown key {key:?}")));
            }
        }
        let get = |k: &str| file.get(k).map(String::as_str);

        let rows = match self.rows {
            Some(v) => v,
            None => get("rows").map(|s| parse_num("rows", s)).transpose()?.unwrap_or(16),
        };
        let cols = match self.cols {
            Some(v) => v,
            None => get("cols").map(|s| parse_num("cols", s)).transpose()?.unwrap_or(16),
        };
        let topo = TorusTopology::new(rows, cols).map_err(|e| match e {
            Error::Dimension { name, .. } => Error::config(name, e.to_string()),
            other => other,
        })?;

        let mode: FailureMode = self
            .mode
            .as_deref()
            .or(get("mode"))
            .unwrap_or("bond")
            .parse()?;
        let methods = match self.methods.as_deref().or(get("methods")) {
            Some(raw) => parse_methods(raw)?,
            None => Method::ALL.to_vec(),
        };

        let flag_sweep = self.p.is_some() || self.regime.is_some() || self.points.is_some();
        if self.p.is_some() && (self.regime.is_some() || self.points.is_some()) {
            return Err(Error::config("p", "use either --p or --regime/--points, not both"));
        }
        let p_values = if let Some(raw) = &self.p {
            parse_list("p", raw)?
        } else if flag_sweep {
            let regime = self.regime.unwrap_or(Regime::Full);
            let (lo, hi) = regime.range();
            log_spaced(lo, hi, self.points.unwrap_or(20))
        } else if let Some(raw) = get("p_values") {
            parse_list("p", raw)?
        } else {
            let regime = get("regime")
                .map(|s| parse_choice::<Regime>("regime", s))
                .transpose()?
                .unwrap_or(Regime::Full);
            let points = get("points")
                .map(|s| parse_num("points", s))
                .transpose()?
                .unwrap_or(20);
            let (lo, hi) = regime.range();
            log_spaced(lo, hi, points)
        };
        if p_values.is_empty() {
            return Err(Error::config("p", "the sweep is empty"));
        }
        if let Some(bad) = p_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::config("p", format!("{bad} is outside [0, 1]")));
        }
        if p_values.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::config("p", "values must be ascending"));
        }

        let pick = |flag: Option<usize>, key: &'static str, default: usize| -> Result<usize> {
            match flag {
                Some(v) => Ok(v),
                None => get(key).map(|s| parse_num(key, s)).transpose().map(|v| v.unwrap_or(default)),
            }
        };
        let replicates = pick(self.replicates, "replicates", 1000)?;
        let packets = pick(self.packets, "packets_per_replicate", 100)?;
        let defaults = EngineConfig::for_topology(&topo);
        let sst = pick(self.sst, "sst", defaults.sst)?;
        let ttl = pick(self.ttl, "ttl", defaults.ttl)?;
        let seed = match self.seed {
            Some(s) => s,
            None => get("seed").map(|s| parse_num("seed", s)).transpose()?.unwrap_or(0),
        };
        let format = match self.format {
            Some(f) => f,
            None => get("format")
                .map(|s| parse_choice("format", s))
                .transpose()?
                .unwrap_or(OutputFormat::Csv),
        };
        let out_dir = self
            .out_dir
            .clone()
            .or_else(|| get("out_dir").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("results"));

        if replicates == 0 {
            return Err(Error::config("replicates", "must be at least 1"));
        }
        if packets == 0 {
            return Err(Error::config("packets", "must be at least 1"));
        }
        if self.threads == Some(0) {
            return Err(Error::config("threads", "must be at least 1"));
        }

        let config = ExperimentConfig {
            rows,
            cols,
            mode,
            methods,
            p_values,
            replicates,
            packets_per_replicate: packets,
            engine: EngineConfig::new(sst, ttl)?,
            master_seed: seed,
        };
        config.validate()?;
        Ok(RunSettings {
            config,
            out_dir,
            format,
            dump_traces: self.dump_traces,
            threads: self.threads,
        })
    }
}

/// Parses a `run` argument list (without the program name or subcommand).
pub fn parse_config<I, S>(args: I) -> Result<RunSettings>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let argv = ["torus-rf".into(), "run".into()]
        .into_iter()
        .chain(args.into_iter().map(Into::into));
    let cli = Cli::try_parse_from(argv).map_err(|e| Error::config("args", e.to_string()))?;
    match cli.command {
        Command::Run(args) => args.into_settings(),
    }
}

/// Six significant digits, trailing zeros kept: 0.2 -> "0.200000".
pub fn format_sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x.is_finite() { "0.00000".into() } else { x.to_string() };
    }
    let exp = x.abs().log10().floor() as i32;
    let decimals = (5 - exp).max(0) as usize;
    let s = format!("{x:.decimals$}");
    // rounding may carry into a new leading digit (9.999996 -> 10.00000)
    let rounded: f64 = s.parse().unwrap_or(x);
    let exp2 = rounded.abs().log10().floor() as i32;
    if exp2 != exp {
        let decimals = (5 - exp2).max(0) as usize;
        format!("{rounded:.decimals$}")
    } else {
        s
    }
}

fn sig6(x: f64) -> f64 {
    format_sig6(x).parse().unwrap_or(x)
}

pub const AGGREGATE_COLUMNS: [&str; 14] = [
    "method",
    "mode",
    "rows",
    "cols",
    "p",
    "n_replicates",
    "n_packets",
    "loss_rate",
    "improvement_pts",
    "max_hops_mean",
    "max_hops_max",
    "rf_packet_ratio",
    "rf_hops_ratio",
    "largest_cc_fraction_mean",
];

#[derive(Serialize)]
struct AggregateRecord {
    method: &'static str,
    mode: &'static str,
    rows: usize,
    cols: usize,
    p: f64,
    n_replicates: usize,
    n_packets: u64,
    loss_rate: f64,
    improvement_pts: Option<f64>,
    max_hops_mean: Option<f64>,
    max_hops_max: Option<u64>,
    rf_packet_ratio: f64,
    rf_hops_ratio: f64,
    largest_cc_fraction_mean: f64,
}

fn check_row(m: &AggregateMetrics) -> Result<()> {
    let unit = |name: &str, v: f64| {
        if (0.0..=1.0).contains(&v) {
            Ok(())
        } else {
            Err(Error::Contract(format!("{name}={v} outside [0,1] for {} p={}", m.method, m.p)))
        }
    };
    unit("loss_rate", m.loss_rate)?;
    unit("rf_packet_ratio", m.rf_packet_ratio)?;
    unit("rf_hops_ratio", m.rf_hops_ratio)?;
    unit("largest_cc_fraction_mean", m.largest_cc_fraction_mean)?;
    if matches!(m.method, Method::Nf | Method::Lfa) && (m.rf_packet_ratio != 0.0 || m.rf_hops_ratio != 0.0) {
        return Err(Error::Contract(format!("{} reports reverse-flow usage", m.method)));
    }
    if m.method == Method::Nf && m.improvement_pts.is_some_and(|x| x != 0.0) {
        return Err(Error::Contract("NF improvement over itself is nonzero".into()));
    }
    Ok(())
}

fn sorted_rows(rows: &[AggregateMetrics]) -> Vec<&AggregateMetrics> {
    let mut sorted: Vec<_> = rows.iter().collect();
    sorted.sort_by(|a, b| a.method.cmp(&b.method).then(a.p.total_cmp(&b.p)));
    sorted
}

fn opt(x: Option<f64>) -> String {
    x.map(format_sig6).unwrap_or_default()
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new())
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner()
        .map_err(|e| Error::Csv(csv::Error::from(e.into_error())))
}

/// Aggregate table, one row per (method, p), re-validated before rendering.
pub fn emit_aggregate(
    rows: &[AggregateMetrics],
    topo: &TorusTopology,
    format: OutputFormat,
) -> Result<Vec<u8>> {
    let sorted = sorted_rows(rows);
    for m in &sorted {
        check_row(m)?;
    }
    match format {
        OutputFormat::Csv => {
            let mut w = csv_writer();
            w.write_record(AGGREGATE_COLUMNS)?;
            for m in sorted {
                w.write_record([
                    m.method.as_str().to_string(),
                    m.mode.as_str().to_string(),
                    topo.rows().to_string(),
                    topo.cols().to_string(),
                    format_sig6(m.p),
                    m.n_replicates.to_string(),
                    m.n_packets_total.to_string(),
                    format_sig6(m.loss_rate),
                    opt(m.improvement_pts),
                    opt(m.max_hops_mean),
                    m.max_hops_max.map(|x| x.to_string()).unwrap_or_default(),
                    format_sig6(m.rf_packet_ratio),
                    format_sig6(m.rf_hops_ratio),
                    format_sig6(m.largest_cc_fraction_mean),
                ])?;
            }
            finish_csv(w)
        }
        OutputFormat::Json => {
            let records: Vec<AggregateRecord> = sorted
                .into_iter()
                .map(|m| AggregateRecord {
                    method: m.method.as_str(),
                    mode: m.mode.as_str(),
                    rows: topo.rows(),
                    cols: topo.cols(),
                    p: sig6(m.p),
                    n_replicates: m.n_replicates,
                    n_packets: m.n_packets_total,
                    loss_rate: sig6(m.loss_rate),
                    improvement_pts: m.improvement_pts.map(sig6),
                    max_hops_mean: m.max_hops_mean.map(sig6),
                    max_hops_max: m.max_hops_max,
                    rf_packet_ratio: sig6(m.rf_packet_ratio),
                    rf_hops_ratio: sig6(m.rf_hops_ratio),
                    largest_cc_fraction_mean: sig6(m.largest_cc_fraction_mean),
                })
                .collect();
            let mut bytes = serde_json::to_vec_pretty(&records)?;
            bytes.push(b'\n');
            Ok(bytes)
        }
    }
}

/// Long-format series for one figure: x = p, one series per method.
pub fn emit_plot_data(rows: &[AggregateMetrics], figure: Figure, format: OutputFormat) -> Result<Vec<u8>> {
    let columns: &[&str] = match figure {
        Figure::Fig4 => &["p", "method", "loss_rate", "improvement_pts"],
        Figure::Fig5 => &["p", "method", "max_hops_mean"],
        Figure::Fig6 => &["p", "method", "rf_packet_ratio", "rf_hops_ratio"],
    };
    let values = |m: &AggregateMetrics| -> Vec<Option<f64>> {
        match figure {
            Figure::Fig4 => vec![Some(m.loss_rate), m.improvement_pts],
            Figure::Fig5 => vec![m.max_hops_mean],
            Figure::Fig6 => vec![Some(m.rf_packet_ratio), Some(m.rf_hops_ratio)],
        }
    };
    let sorted = sorted_rows(rows);
    match format {
        OutputFormat::Csv => {
            let mut w = csv_writer();
            w.write_record(columns)?;
            for m in sorted {
                let mut record = vec![format_sig6(m.p), m.method.as_str().to_string()];
                record.extend(values(m).into_iter().map(opt));
                w.write_record(record)?;
            }
            finish_csv(w)
        }
        OutputFormat::Json => {
            let records: Vec<serde_json::Map<String, serde_json::Value>> = sorted
                .into_iter()
                .map(|m| {
                    let mut rec = serde_json::Map::new();
                    rec.insert("p".into(), serde_json::json!(sig6(m.p)));
                    rec.insert("method".into(), serde_json::json!(m.method.as_str()));
                    for (col, v) in columns[2..].iter().zip(values(m)) {
                        rec.insert((*col).into(), serde_json::json!(v.map(sig6)));
                    }
                    rec
                })
                .collect();
            let mut bytes = serde_json::to_vec_pretty(&records)?;
            bytes.push(b'\n');
            Ok(bytes)
        }
    }
}

/// Flat key=value echo of a configuration; readable back via `--config`.
pub fn config_echo(settings: &RunSettings) -> String {
    let c = &settings.config;
    let methods: Vec<&str> = c.methods.iter().map(|m| m.as_str()).collect();
    let p: Vec<String> = c.p_values.iter().map(|p| p.to_string()).collect();
    let format = match settings.format {
        OutputFormat::Csv => "csv",
        OutputFormat::Json => "json",
    };
    let mut s = String::new();
    let _ = writeln!(s, "rows={}", c.rows);
    let _ = writeln!(s, "cols={}", c.cols);
    let _ = writeln!(s, "mode={}", c.mode);
    let _ = writeln!(s, "methods={}", methods.join(","));
    let _ = writeln!(s, "p_values={}", p.join(","));
    let _ = writeln!(s, "replicates={}", c.replicates);
    let _ = writeln!(s, "packets_per_replicate={}", c.packets_per_replicate);
    let _ = writeln!(s, "sst={}", c.engine.sst);
    let _ = writeln!(s, "ttl={}", c.engine.ttl);
    let _ = writeln!(s, "seed={}", c.master_seed);
    let _ = writeln!(s, "format={format}");
    s
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Paths written by a run.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RunOutputs {
    pub manifest: PathBuf,
    pub aggregate: PathBuf,
    pub figures: Vec<PathBuf>,
    pub traces: Option<TraceFiles>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceFiles {
    pub hops: PathBuf,
    pub packets: PathBuf,
    pub failures: PathBuf,
}

fn dump_traces(experiment: &Experiment, dir: &Path) -> Result<TraceFiles> {
    let cfg = experiment.config();
    let topo = *experiment.tables().topology();
    let mut hops = csv_writer();
    let mut packets = csv_writer();
    let mut failures = csv_writer();
    hops.write_record(["packet_id", "method", "hop", "from", "to", "dir", "kind", "phi_from", "phi_to"])?;
    packets.write_record(["packet_id", "method", "src", "dst", "verdict", "total_hops", "reverse_hops"])?;
    failures.write_record(["p_index", "replicate", "element", "a", "b"])?;
    for p_index in 0..cfg.p_values.len() {
        for rep in 0..cfg.replicates {
            let detail = experiment.replicate_detail(p_index, rep)?;
            for v in detail.scenario.failed_nodes() {
                failures.write_record([p_index.to_string(), rep.to_string(), "node".into(), v.to_string(), String::new()])?;
            }
            for link in detail.scenario.failed_links() {
                let (a, b, _) = topo.link_endpoints(link);
                failures.write_record([p_index.to_string(), rep.to_string(), "link".into(), a.to_string(), b.to_string()])?;
            }
            for (k, run) in detail.packets.iter().enumerate() {
                let id = format!("{p_index}-{rep}-{k}");
                let phi = experiment.tables().potential(run.dst);
                for (method, outcome) in &run.outcomes {
                    packets.write_record([
                        id.clone(),
                        method.as_str().into(),
                        run.src.to_string(),
                        run.dst.to_string(),
                        outcome.verdict.as_str().into(),
                        outcome.total_hops.to_string(),
                        outcome.reverse_hops.to_string(),
                    ])?;
                    for (i, h) in outcome.trace.iter().enumerate() {
                        hops.write_record([
                            id.clone(),
                            method.as_str().into(),
                            i.to_string(),
                            h.from.to_string(),
                            h.to.to_string(),
                            h.dir.as_str().into(),
                            h.kind.as_str().into(),
                            phi.phi(h.from).to_string(),
                            phi.phi(h.to).to_string(),
                        ])?;
                    }
                }
            }
        }
    }
    let files = TraceFiles {
        hops: dir.join("traces.csv"),
        packets: dir.join("packets.csv"),
        failures: dir.join("failures.csv"),
    };
    write_atomic(&files.hops, &finish_csv(hops)?)?;
    write_atomic(&files.packets, &finish_csv(packets)?)?;
    write_atomic(&files.failures, &finish_csv(failures)?)?;
    Ok(files)
}

/// Runs the sweep and writes manifest, aggregate table, figure data and,
/// when requested, trace dumps into `settings.out_dir`.
pub fn run_experiment(settings: &RunSettings) -> Result<RunOutputs> {
    let dir = &settings.out_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let experiment = Experiment::new(settings.config.clone())?;
    let results = match settings.threads {
        Some(n) => experiment.run_sweep_with_threads(n)?,
        None => experiment.run_sweep()?,
    };
    let rows = summarize(&settings.config, &results)?;
    let topo = settings.config.topology()?;
    let ext = settings.format.extension();

    let aggregate = dir.join(format!("aggregate.{ext}"));
    write_atomic(&aggregate, &emit_aggregate(&rows, &topo, settings.format)?)?;
    let mut figures = Vec::new();
    for fig in Figure::ALL {
        let path = dir.join(format!("{}.{ext}", fig.name()));
        write_atomic(&path, &emit_plot_data(&rows, fig, settings.format)?)?;
        figures.push(path);
    }
    let traces = if settings.dump_traces {
        Some(dump_traces(&experiment, dir)?)
    } else {
        None
    };

    let manifest = dir.join("manifest.txt");
    let timestamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut text = format!("tool_version={TOOL_VERSION}\ntimestamp={timestamp}\n");
    text.push_str(&config_echo(settings));
    let _ = writeln!(text, "output.aggregate={}", aggregate.display());
    for f in &figures {
        let stem = f.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let _ = writeln!(text, "output.{stem}={}", f.display());
    }
    if let Some(t) = &traces {
        let _ = writeln!(text, "output.traces={}", t.hops.display());
        let _ = writeln!(text, "output.packets={}", t.packets.display());
        let _ = writeln!(text, "output.failures={}", t.failures.display());
    }
    write_atomic(&manifest, text.as_bytes())?;

    Ok(RunOutputs {
        manifest,
        aggregate,
        figures,
        traces,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig6_rendering() {
        assert_eq!(format_sig6(0.2), "0.200000");
        assert_eq!(format_sig6(0.0), "0.00000");
        assert_eq!(format_sig6(17.5), "17.5000");
        assert_eq!(format_sig6(1.0), "1.00000");
        assert_eq!(format_sig6(0.0001), "0.000100000");
        assert_eq!(format_sig6(9.9999996), "10.0000");
        assert_eq!(format_sig6(-3.25), "-3.25000");
        assert_eq!(format_sig6(123456.7), "123457");
    }

    #[test]
    fn log_spacing() {
        let v = log_spaced(1e-3, 1e-1, 20);
        assert_eq!(v.len(), 20);
        assert_eq!((v[0], v[19]), (1e-3, 1e-1));
        assert!(v.windows(2).all(|w| w[0] < w[1]));
        let ratios: Vec<f64> = v.windows(2).map(|w| w[1] / w[0]).collect();
        for r in &ratios {
            assert!((r - ratios[0]).abs() < 1e-9);
        }
        assert_eq!(log_spaced(0.01, 1.0, 3), vec![0.01, 0.1, 1.0]);
        assert_eq!(log_spaced(0.01, 1.0, 1), vec![0.01]);
    }

    #[test]
    fn regime_flags_expand() {
        let s = parse_config([
            "--rows", "16", "--cols", "16", "--mode", "bond", "--regime", "medium", "--points", "20",
            "--replicates", "1000", "--seed", "42",
        ])
        .unwrap();
        let c = &s.config;
        assert_eq!(c.p_values.len(), 20);
        assert_eq!((c.p_values[0], c.p_values[19]), (0.001, 0.1));
        assert_eq!((c.replicates, c.master_seed, c.mode), (1000, 42, FailureMode::Bond));
        assert_eq!(c.methods, Method::ALL.to_vec());
        assert_eq!((c.engine.sst, c.engine.ttl, c.packets_per_replicate), (32, 256, 100));
        assert_eq!(s.format, OutputFormat::Csv);
    }

    #[test]
    fn explicit_sweep_and_methods() {
        let s = parse_config(["--p", "0.0,0.5,1.0", "--methods", "rf-lf,NF", "--mode", "site"]).unwrap();
        assert_eq!(s.config.p_values, vec![0.0, 0.5, 1.0]);
        assert_eq!(s.config.methods, vec![Method::Nf, Method::RfLf]);
        assert_eq!(s.config.mode, FailureMode::Site);
    }

    fn flag_of(err: Error) -> &'static str {
        match err {
            Error::Config { flag, .. } => flag,
            other => panic!("expected config error, got {other}"),
        }
    }

    #[test]
    fn invalid_flags_name_the_flag() {
        assert_eq!(flag_of(parse_config(["--rows", "2"]).unwrap_err()), "rows");
        assert_eq!(flag_of(parse_config(["--cols", "1"]).unwrap_err()), "cols");
        assert_eq!(flag_of(parse_config(["--p", "0.5,0.1"]).unwrap_err()), "p");
        assert_eq!(flag_of(parse_config(["--p", "1.5"]).unwrap_err()), "p");
        assert_eq!(flag_of(parse_config(["--p", "abc"]).unwrap_err()), "p");
        assert_eq!(flag_of(parse_config(["--methods", "NF,OSPF"]).unwrap_err()), "methods");
        assert_eq!(flag_of(parse_config(["--mode", "edge"]).unwrap_err()), "mode");
        assert_eq!(flag_of(parse_config(["--replicates", "0"]).unwrap_err()), "replicates");
        assert_eq!(flag_of(parse_config(["--sst", "0"]).unwrap_err()), "sst");
        assert_eq!(flag_of(parse_config(["--sst", "10", "--ttl", "5"]).unwrap_err()), "ttl");
        assert_eq!(flag_of(parse_config(["--p", "0.1", "--regime", "low"]).unwrap_err()), "p");
        assert_eq!(flag_of(parse_config(["--bogus"]).unwrap_err()), "args");
    }

    #[test]
    fn manifest_echo_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let original = parse_config([
            "--rows", "5", "--cols", "7", "--mode", "site", "--regime", "high", "--points", "7",
            "--replicates", "3", "--packets", "9", "--sst", "6", "--ttl", "40", "--seed", "99",
            "--methods", "LFA,RF-CF", "--format", "json",
        ])
        .unwrap();
        let path = dir.path().join("manifest.txt");
        let text = format!("tool_version=x\ntimestamp=1\n{}output.aggregate=a.json\n", config_echo(&original));
        fs::write(&path, text).unwrap();
        let mut back = parse_config(["--config", path.to_str().unwrap()]).unwrap();
        back.out_dir = original.out_dir.clone();
        assert_eq!(back, original);

        fs::write(&path, "rows=5\nflavour=mint\n").unwrap();
        assert_eq!(flag_of(parse_config(["--config", path.to_str().unwrap()]).unwrap_err()), "config");
        let overridden = parse_config(["--config", dir.path().join("missing").to_str().unwrap()]);
        assert!(matches!(overridden, Err(Error::Io { .. })));
    }

    fn metric(method: Method, p: f64, loss: f64) -> AggregateMetrics {
        AggregateMetrics {
            method,
            mode: FailureMode::Bond,
            p,
            n_replicates: 2,
            n_packets_total: 200,
            loss_rate: loss,
            loss_rate_stderr: 0.0,
            improvement_pts: Some(if method == Method::Nf { 0.0 } else { 1.5 }),
            max_hops_mean: Some(8.25),
            max_hops_max: Some(11),
            rf_packet_ratio: 0.0,
            rf_hops_ratio: 0.0,
            largest_cc_fraction_mean: 1.0,
            unreachable_fraction: 0.0,
        }
    }

    #[test]
    fn aggregate_csv_layout() {
        let topo = TorusTopology::new(4, 4).unwrap();
        let rows = vec![
            metric(Method::Lfa, 0.1, 0.5),
            metric(Method::Lfa, 0.001, 0.2),
            metric(Method::Lfa, 0.01, 0.3),
        ];
        let out = String::from_utf8(emit_aggregate(&rows, &topo, OutputFormat::Csv).unwrap()).unwrap();
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines[0], AGGREGATE_COLUMNS.join(","));
        assert_eq!(lines.len(), 4);
        assert!(!out.contains('\r'));
        assert_eq!(
            lines[1],
            "LFA,bond,4,4,0.00100000,2,200,0.200000,1.50000,8.25000,11,0.00000,0.00000,1.00000"
        );
        assert!(lines[2].contains(",0.0100000,"));
        assert!(lines[3].contains(",0.100000,"));

        let json = emit_aggregate(&rows, &topo, OutputFormat::Json).unwrap();
        let parsed: Vec<serde_json::Value> = serde_json::from_slice(&json).unwrap();
        assert_eq!(parsed.len(), 3);
        let keys: Vec<&String> = parsed[0].as_object().unwrap().keys().collect();
        assert_eq!(keys.len(), AGGREGATE_COLUMNS.len());
        assert_eq!(parsed[0]["loss_rate"], serde_json::json!(0.2));
        assert_eq!(parsed[0]["method"], "LFA");
    }

    #[test]
    fn aggregate_rejects_invalid_rows() {
        let topo = TorusTopology::new(4, 4).unwrap();
        let mut bad = metric(Method::Nf, 0.1, 0.5);
        bad.rf_packet_ratio = 0.2;
        assert!(emit_aggregate(&[bad], &topo, OutputFormat::Csv).is_err());
        let mut bad = metric(Method::RfLf, 0.1, 1.5);
        bad.improvement_pts = None;
        assert!(emit_aggregate(&[bad], &topo, OutputFormat::Csv).is_err());
    }

    #[test]
    fn plot_schemas() {
        let rows = vec![metric(Method::Nf, 0.01, 0.1), metric(Method::RfLf, 0.01, 0.05)];
        let header = |fig| {
            let out = String::from_utf8(emit_plot_data(&rows, fig, OutputFormat::Csv).unwrap()).unwrap();
            out.lines().next().unwrap().to_string()
        };
        assert_eq!(header(Figure::Fig4), "p,method,loss_rate,improvement_pts");
        assert_eq!(header(Figure::Fig5), "p,method,max_hops_mean");
        assert_eq!(header(Figure::Fig6), "p,method,rf_packet_ratio,rf_hops_ratio");
        let json = emit_plot_data(&rows, Figure::Fig5, OutputFormat::Json).unwrap();
        let parsed: Vec<serde_json::Value> = serde_json::from_slice(&json).unwrap();
        assert_eq!(parsed[1]["method"], "RF-LF");
        assert_eq!(parsed[1]["max_hops_mean"], serde_json::json!(8.25));
    }
}
