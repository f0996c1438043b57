//! Command-line front end: `eval`, `rank`, `grad`, `sim` and `cluster`.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::cluster::{
    self, load_annotations, recommend, AnnotationFormat, ClusterScheme, Distance, Method,
    SearchSpace,
};
use crate::error::{Error, Result};
use crate::geometry::Box;
use crate::gradcheck;
use crate::losses::{self, LossKind};
use crate::metrics::{self, MetricKind, DEFAULT_LAMBDA};
use crate::simulator::{self, SimulationConfig};

/// Bundled simulator configuration used when `sim` gets no `--config`.
pub const DEFAULT_SIM_CONFIG: &str = include_str!("../configs/sim_default.json");

#[derive(Debug, Parser)]
#[command(
    name = "cdiou",
    version,
    about = "Box overlap metrics, regression losses and anchor clustering"
)]
pub struct Cli {
    /// Random seed for every seeded step.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file (eval, rank, grad, cluster) or directory (sim). Defaults to
    /// stdout, or the current directory for sim.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Suppress progress notes on stderr.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate metrics and losses for every box pair in a CSV file.
    Eval(EvalArgs),
    /// Rank proposals that share one ground-truth box.
    Rank(RankArgs),
    /// Check analytic loss gradients against finite differences.
    Grad(GradArgs),
    /// Run the box-regression simulator.
    Sim(SimArgs),
    /// Cluster ground-truth box sizes and recommend anchor schemes.
    Cluster(ClusterArgs),
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// CSV of `rp_x1,rp_y1,rp_x2,rp_y2,gt_x1,gt_y1,gt_x2,gt_y2` rows.
    #[arg(long)]
    pub pairs: PathBuf,
    /// Comma-separated metrics: iou, giou, cdiou.
    #[arg(long, value_delimiter = ',', default_value = "iou,giou,cdiou")]
    pub metrics: Vec<String>,
    /// Comma-separated loss names.
    #[arg(long, value_delimiter = ',')]
    pub losses: Vec<String>,
    /// Weight of the corner-distance term in the CDIoU metric.
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    pub lambda: f64,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    /// Pair CSV whose rows all share the same ground-truth box.
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long, default_value = "cdiou")]
    pub kind: String,
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    pub lambda: f64,
}

#[derive(Debug, Args)]
pub struct GradArgs {
    /// `all` or a comma-separated list of loss names.
    #[arg(long, value_delimiter = ',', default_value = "all")]
    pub kinds: Vec<String>,
    /// Pairs per loss kind.
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = gradcheck::DEFAULT_STEP)]
    pub step: f64,
    #[arg(long, default_value_t = gradcheck::DEFAULT_TOLERANCE)]
    pub tolerance: f64,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    /// JSON configuration; missing fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[arg(long)]
    pub annotations: PathBuf,
    /// coco_json or csv.
    #[arg(long, default_value = "csv")]
    pub format: String,
    /// auto, kmeans, agglomerative, dbscan or meanshift.
    #[arg(long, default_value = "auto")]
    pub method: String,
    /// Inclusive cluster-count range `a..b`.
    #[arg(long, default_value = "2..8")]
    pub k_range: String,
    /// k-means distance: euclidean or one_minus_iou.
    #[arg(long, default_value = "euclidean")]
    pub distance: String,
    /// Divide COCO box sizes by their image size.
    #[arg(long)]
    pub normalize: bool,
    /// DBSCAN radius; estimated when omitted.
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long, default_value_t = 4)]
    pub min_pts: usize,
    /// Mean-shift bandwidth; estimated when omitted.
    #[arg(long)]
    pub bandwidth: Option<f64>,
    /// Subsample larger inputs to this many points.
    #[arg(long, default_value_t = 2000)]
    pub sample_cap: usize,
}

/// Parses arguments, runs the command and returns the process exit code:
/// 0 on success, 1 on a domain or I/O error, 2 on a usage error.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                2
            } else {
                1
            }
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Eval(a) => emit(cli, &cmd_eval(a)?),
        Command::Rank(a) => emit(cli, &cmd_rank(a)?),
        Command::Grad(a) => emit(cli, &cmd_grad(cli, a)?),
        Command::Sim(a) => cmd_sim(cli, a),
        Command::Cluster(a) => emit(cli, &cmd_cluster(cli, a)?),
    }
}

fn emit(cli: &Cli, text: &str) -> Result<()> {
    match &cli.out {
        Some(path) => std::fs::write(path, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn note(cli: &Cli, msg: impl AsRef<str>) {
    if !cli.quiet {
        eprintln!("{}", msg.as_ref());
    }
}

/// Six decimals, without a negative sign on zero.
pub fn fmt6(v: f64) -> String {
    let s = format!("{v:.6}");
    if s == "-0.000000" {
        "0.000000".to_string()
    } else {
        s
    }
}

/// One data row of a pair file. `canonicalized` is set when either box had
/// its corners swapped into order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairRow {
    pub line: usize,
    pub rp: Box,
    pub gt: Box,
    pub canonicalized: bool,
}

/// Reads a pair file: eight numeric columns per row, optional header.
pub fn read_pairs(path: &Path) -> Result<Vec<PairRow>> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        context: format!("row {line}"),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 1;
        let rec = rec.map_err(|e| parse_err(line, e.to_string()))?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        let v = match parsed {
            Ok(v) => v,
            Err(_) if i == 0 => continue,
            Err(e) => return Err(parse_err(line, e.to_string())),
        };
        if v.len() != 8 {
            return Err(parse_err(
                line,
                format!("expected 8 columns, got {}", v.len()),
            ));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(parse_err(line, "non-finite coordinate".to_string()));
        }
        let (rp, s1) = Box::canonical(v[0], v[1], v[2], v[3]);
        let (gt, s2) = Box::canonical(v[4], v[5], v[6], v[7]);
        rows.push(PairRow {
            line,
            rp,
            gt,
            canonicalized: s1 || s2,
        });
    }
    Ok(rows)
}

fn parse_list<T: std::str::FromStr<Err = Error>>(names: &[String]) -> Result<Vec<T>> {
    names
        .iter()
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect()
}

fn with_lambda(kind: MetricKind, lambda: f64) -> Result<MetricKind> {
    match kind {
        MetricKind::CDIoU { .. } => MetricKind::cdiou_with(lambda),
        k => Ok(k),
    }
}

pub fn cmd_eval(a: &EvalArgs) -> Result<String> {
    let metrics: Vec<MetricKind> = parse_list::<MetricKind>(&a.metrics)?
        .into_iter()
        .map(|m| with_lambda(m, a.lambda))
        .collect::<Result<_>>()?;
    let loss_kinds: Vec<LossKind> = parse_list(&a.losses)?;
    let rows = read_pairs(&a.pairs)?;

    let mut out = String::from("row");
    for m in &metrics {
        let _ = write!(out, ",{}", m.name());
    }
    for l in &loss_kinds {
        let _ = write!(out, ",loss_{}", l.name());
    }
    out.push_str(",canonicalized\n");
    for (idx, row) in rows.iter().enumerate() {
        let ctx = |e: Error| Error::domain(format!("row {}: {e}", row.line));
        let _ = write!(out, "{idx}");
        for m in &metrics {
            let v = m.evaluate(&row.rp, &row.gt).map_err(ctx)?;
            let _ = write!(out, ",{}", fmt6(v));
        }
        for &l in &loss_kinds {
            let v = losses::loss(&row.rp, &row.gt, l).map_err(ctx)?;
            let _ = write!(out, ",{}", fmt6(v.value));
        }
        let _ = writeln!(out, ",{}", u8::from(row.canonicalized));
    }
    Ok(out)
}

pub fn cmd_rank(a: &RankArgs) -> Result<String> {
    let kind = with_lambda(a.kind.parse()?, a.lambda)?;
    let rows = read_pairs(&a.pairs)?;
    let gt = match rows.first() {
        Some(r) => r.gt,
        None => return Err(Error::domain("no proposals to rank")),
    };
    if let Some(r) = rows.iter().find(|r| r.gt != gt) {
        return Err(Error::domain(format!(
            "row {}: ground truth differs from the first row",
            r.line
        )));
    }
    let rps: Vec<Box> = rows.iter().map(|r| r.rp).collect();
    let order = metrics::rank_proposals(&rps, &gt, kind)?;
    let mut out = format!("rank,row,{}\n", kind.name());
    for (rank, &i) in order.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{}",
            rank + 1,
            i,
            fmt6(kind.evaluate(&rps[i], &gt)?)
        );
    }
    Ok(out)
}

pub fn cmd_grad(cli: &Cli, a: &GradArgs) -> Result<String> {
    let kinds: Vec<LossKind> = if a.kinds.iter().any(|k| k.trim() == "all") {
        LossKind::all()
    } else {
        parse_list(&a.kinds)?
    };
    if kinds.is_empty() {
        return Err(Error::domain("no loss kinds selected"));
    }
    let seed = cli.seed.unwrap_or(42);
    let reports = gradcheck::sweep(&kinds, a.n, seed, a.step, a.tolerance)?;
    for r in &reports {
        note(
            cli,
            format!(
                "{:<16} max rel error {:.3e}  {}",
                r.kind,
                r.max_rel_error,
                if r.passed { "ok" } else { "FAILED" }
            ),
        );
    }
    let mut s = serde_json::to_string_pretty(&reports)?;
    s.push('\n');
    Ok(s)
}

pub fn load_sim_config(path: Option<&Path>) -> Result<SimulationConfig> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p)?,
        None => DEFAULT_SIM_CONFIG.to_string(),
    };
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path
            .map(Path::to_path_buf)
            .unwrap_or_else(|| "<bundled>".into()),
        context: format!("line {}, column {}", e.line(), e.column()),
        message: e.to_string(),
    })
}

pub fn cmd_sim(cli: &Cli, a: &SimArgs) -> Result<()> {
    let mut config = load_sim_config(a.config.as_deref())?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let report = simulator::run(&config)?;
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("curves.csv"), report.curves_csv())?;
    let mut summary = serde_json::to_string_pretty(&report.summary())?;
    summary.push('\n');
    std::fs::write(dir.join("summary.json"), summary)?;
    for c in &report.curves {
        note(
            cli,
            format!(
                "{:<10} lr {:<6} final corner error {:.4}  threshold at {}",
                c.loss,
                c.initial_lr,
                c.final_corner_error(),
                c.iterations_to_threshold
                    .map_or("never".to_string(), |i| i.to_string())
            ),
        );
    }
    Ok(())
}

/// Parses `a..b` (inclusive).
pub fn parse_k_range(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::UnknownName {
        what: "k range",
        name: s.to_string(),
    };
    let (a, b) = s.split_once("..").ok_or_else(bad)?;
    let a: usize = a.trim().parse().map_err(|_| bad())?;
    let b: usize = b
        .trim_start_matches('=')
        .trim()
        .parse()
        .map_err(|_| bad())?;
    if a < 1 || b < a {
        return Err(bad());
    }
    Ok((a, b))
}

/// Report for a single density-method run.
#[derive(Serialize)]
struct SingleReport<'a> {
    n_points: usize,
    candidates: Vec<&'a ClusterScheme>,
    failures: Vec<String>,
    recommendations: Vec<&'a ClusterScheme>,
}

pub fn cmd_cluster(cli: &Cli, a: &ClusterArgs) -> Result<String> {
    let format: AnnotationFormat = a.format.parse()?;
    let distance: Distance = a.distance.parse()?;
    let (k_min, k_max) = parse_k_range(&a.k_range)?;
    let set = load_annotations(&a.annotations, format, a.normalize)?;
    note(
        cli,
        format!(
            "{} boxes read, {} dropped",
            set.source.box_count, set.source.dropped
        ),
    );
    let seed = cli.seed.unwrap_or(42);
    let json = match a.method.as_str() {
        "auto" | "kmeans" | "agglomerative" => {
            let methods = if a.method == "auto" {
                SearchSpace::default().methods
            } else {
                vec![a.method.clone()]
            };
            let space = SearchSpace {
                k_min,
                k_max,
                seed,
                distance,
                methods,
                sample_cap: a.sample_cap,
                dbscan_min_pts: a.min_pts,
                ..SearchSpace::default()
            };
            let report = recommend(&set, &space)?;
            for r in &report.recommendations {
                note(
                    cli,
                    format!(
                        "#{} {} k={} silhouette {:.4}",
                        r.rank,
                        r.scheme.method.name(),
                        r.scheme.k,
                        r.scheme.silhouette.unwrap_or(f64::NAN)
                    ),
                );
            }
            serde_json::to_string_pretty(&report)?
        }
        "dbscan" | "meanshift" => {
            let method = if a.method == "dbscan" {
                let eps = match a.eps {
                    Some(e) => e,
                    None => cluster::estimate_eps(&set.points, a.min_pts)?,
                };
                Method::Dbscan {
                    eps,
                    min_pts: a.min_pts,
                }
            } else {
                let bandwidth = match a.bandwidth {
                    Some(b) => b,
                    None => cluster::estimate_bandwidth(&set.points, 0.3)?,
                };
                Method::MeanShift { bandwidth }
            };
            let scheme = cluster::cluster(&set, method)?;
            let valid = scheme.is_valid();
            note(cli, format!("{} found k={}", method.name(), scheme.k));
            serde_json::to_string_pretty(&SingleReport {
                n_points: set.len(),
                candidates: vec![&scheme],
                failures: if valid {
                    Vec::new()
                } else {
                    vec![format!(
                        "{}: degenerate scheme with {} cluster(s)",
                        method.name(),
                        scheme.k
                    )]
                },
                recommendations: if valid { vec![&scheme] } else { Vec::new() },
            })?
        }
        other => {
            return Err(Error::UnknownName {
                what: "clustering method",
                name: other.to_string(),
            })
        }
    };
    Ok(json + "\n")
}
