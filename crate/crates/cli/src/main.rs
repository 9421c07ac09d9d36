//! `scopefe` command-line tool.

mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use scopefe::pipeline::{self, ClusterMode, PipelineFailure, PipelineReport, SweepParam};
use scopefe::tabular::{self, Dataset};

use config::{DataConfig, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "scopefe", version, about = "Search-space controlled automated feature engineering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Full pipeline: writes engineered.csv, report.json and manifest.json.
    Run(Common),
    /// Similarity matrix over the training partition.
    Assoc(Common),
    /// Feature clusters over the training partition.
    Cluster(Common),
    /// Operator probing scores.
    Probe(Common),
    /// One run per value of a hyperparameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_sweep_param)]
        param: SweepParam,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
        values: Vec<f64>,
    },
    /// The 8-cell clustering/probing/reliability grid.
    Ablate(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// TOML configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input CSV.
    #[arg(long)]
    data: PathBuf,
    /// Output directory (stdout for the stage tools when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Target column, when not given by the config.
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to machine parallelism.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, value_enum)]
    clustering: Option<ModeArg>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Off,
    Hard,
    Soft,
}

fn parse_sweep_param(s: &str) -> Result<SweepParam, String> {
    s.parse().map_err(|e: scopefe::Error| e.to_string())
}

/// Failure classes mapped to exit codes.
enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Runtime(e.into())
    }
}

#[derive(Debug, Serialize)]
struct InputRecord {
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct RunManifest<'a> {
    tool_version: &'static str,
    seed: u64,
    config: &'a RunConfig,
    input: InputRecord,
    outputs: Vec<String>,
}

struct Prepared {
    cfg: RunConfig,
    ds: Dataset,
    input: InputRecord,
}

fn prepare(c: &Common) -> Result<Prepared, Failure> {
    let mut cfg = match (&c.config, &c.target) {
        (Some(path), _) => RunConfig::load(path).map_err(Failure::Usage)?,
        (None, Some(target)) => RunConfig {
            data: DataConfig { target: target.clone(), task: None, categorical_threshold: 20, kinds: Default::default() },
            pipeline: Default::default(),
        },
        (None, None) => return Err(Failure::Usage(anyhow::anyhow!("either --config or --target is required"))),
    };
    if let (Some(_), Some(target)) = (&c.config, &c.target) {
        cfg.data.target = target.clone();
    }
    if let Some(seed) = c.seed {
        cfg.pipeline.seed = seed;
    }
    if let Some(mode) = c.clustering {
        cfg.pipeline.clustering.mode = match mode {
            ModeArg::Off => ClusterMode::Off,
            ModeArg::Hard => ClusterMode::Hard,
            ModeArg::Soft => ClusterMode::Soft,
        };
    }
    cfg.pipeline.validate().map_err(|e| Failure::Usage(e.into()))?;
    if let Some(n) = c.workers {
        if n == 0 {
            return Err(Failure::Usage(anyhow::anyhow!("--workers must be positive")));
        }
        // fails only if a pool already exists, which the CLI never creates
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let bytes = fs::read(&c.data).with_context(|| format!("reading {}", c.data.display()))?;
    let input = InputRecord { path: c.data.display().to_string(), sha256: hex::encode(Sha256::digest(&bytes)) };
    let ds = tabular::read_csv(bytes.as_slice(), &cfg.load_options()).with_context(|| format!("loading {}", c.data.display()))?;
    log::info!("loaded {} rows, {} features from {}", ds.n_rows(), ds.n_features(), input.path);
    Ok(Prepared { cfg, ds, input })
}

fn out_dir(c: &Common) -> Result<&Path, Failure> {
    let dir = c.out.as_deref().ok_or_else(|| Failure::Usage(anyhow::anyhow!("--out is required")))?;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn to_json<T: Serialize>(v: &T) -> anyhow::Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

/// Writes to `<out>/<name>` or stdout.
fn emit(c: &Common, name: &str, text: &str) -> Result<(), Failure> {
    match &c.out {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            write(&dir.join(name), text)?;
        }
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn stage_failure(dir: Option<&Path>, f: PipelineFailure) -> Failure {
    if let Some(dir) = dir {
        if let Err(e) = to_json(&*f.report).and_then(|j| write(&dir.join("report.json"), &j)) {
            log::error!("could not write the incomplete report: {e:#}");
        }
    }
    Failure::Runtime(anyhow::Error::new(f))
}

fn cmd_run(c: &Common) -> Result<(), Failure> {
    let dir = out_dir(c)?.to_path_buf();
    let p = prepare(c)?;
    let out = pipeline::run(&p.ds, &p.cfg.pipeline).map_err(|f| stage_failure(Some(&dir), f))?;
    write(&dir.join("engineered.csv"), &out.engineered.to_csv(&p.ds))?;
    write(&dir.join("report.json"), &to_json(&out.report)?)?;
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION"),
        seed: p.cfg.pipeline.seed,
        config: &p.cfg,
        input: p.input,
        outputs: ["engineered.csv", "report.json", "manifest.json"].map(String::from).to_vec(),
    };
    write(&dir.join("manifest.json"), &to_json(&manifest)?)?;
    log::info!("selected {} features", out.report.selected.len());
    Ok(())
}

fn cmd_assoc(c: &Common) -> Result<(), Failure> {
    let p = prepare(c)?;
    let (train, _) = pipeline::partition(&p.ds, &p.cfg.pipeline)?;
    let s = pipeline::similarity_stage(&p.ds, &train)?;
    let names: Vec<String> = p.ds.features().iter().map(|f| f.name.clone()).collect();
    emit(c, "similarity.csv", &s.to_csv(&names))
}

fn cmd_cluster(c: &Common) -> Result<(), Failure> {
    let p = prepare(c)?;
    if p.cfg.pipeline.clustering.mode == ClusterMode::Off {
        return Err(Failure::Usage(anyhow::anyhow!("clustering mode is off")));
    }
    let (train, _) = pipeline::partition(&p.ds, &p.cfg.pipeline)?;
    let s = pipeline::similarity_stage(&p.ds, &train)?;
    let assign = pipeline::cluster_stage(&s, &p.cfg.pipeline)?.expect("mode is not off");
    emit(c, "clusters.json", &to_json(&pipeline::summarize_clusters(&assign, &p.ds))?)
}

fn cmd_probe(c: &Common) -> Result<(), Failure> {
    let p = prepare(c)?;
    let (train, valid) = pipeline::partition(&p.ds, &p.cfg.pipeline)?;
    let outcome = pipeline::probe_stage(&p.ds, &train, &valid, &p.cfg.pipeline)?;
    emit(c, "probe.json", &to_json(&outcome)?)
}

fn rows_to_csv<T: Serialize>(rows: &[T]) -> anyhow::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn write_reports(dir: &Path, prefix: &str, reports: &[(String, &PipelineReport)]) -> anyhow::Result<()> {
    for (label, report) in reports {
        write(&dir.join(format!("{prefix}_{label}.json")), &to_json(report)?)?;
    }
    Ok(())
}

fn cmd_sweep(c: &Common, param: SweepParam, values: &[f64]) -> Result<(), Failure> {
    let dir = out_dir(c)?.to_path_buf();
    let p = prepare(c)?;
    let rows = pipeline::sweep(&p.ds, &p.cfg.pipeline, param, values).map_err(|f| stage_failure(Some(&dir), f))?;
    let table: Vec<_> = rows.iter().map(|(r, _)| r.clone()).collect();
    write(&dir.join("sweep.csv"), &rows_to_csv(&table)?)?;
    let labeled: Vec<(String, &PipelineReport)> = rows.iter().map(|(r, rep)| (r.value.to_string(), rep)).collect();
    write_reports(&dir, "report", &labeled)?;
    Ok(())
}

#[derive(Serialize)]
struct AblationCsvRow {
    cell: String,
    clustering: bool,
    probing: bool,
    reliability: bool,
    run_seconds: f64,
    eval_seconds: f64,
    metric: f64,
    generated: usize,
    selected: usize,
}

impl From<&pipeline::AblationRow> for AblationCsvRow {
    fn from(r: &pipeline::AblationRow) -> Self {
        AblationCsvRow {
            cell: r.label(),
            clustering: r.clustering,
            probing: r.probing,
            reliability: r.reliability,
            run_seconds: r.run_seconds,
            eval_seconds: r.eval_seconds,
            metric: r.metric,
            generated: r.generated,
            selected: r.selected,
        }
    }
}

fn cmd_ablate(c: &Common) -> Result<(), Failure> {
    let dir = out_dir(c)?.to_path_buf();
    let p = prepare(c)?;
    let rows = pipeline::ablate(&p.ds, &p.cfg.pipeline).map_err(|f| stage_failure(Some(&dir), f))?;
    let table: Vec<AblationCsvRow> = rows.iter().map(|(r, _)| AblationCsvRow::from(r)).collect();
    write(&dir.join("ablation.csv"), &rows_to_csv(&table)?)?;
    let labeled: Vec<(String, &PipelineReport)> = rows.iter().map(|(r, rep)| (r.label().replace('+', ""), rep)).collect();
    write_reports(&dir, "report", &labeled)?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("SCOPEFE_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Run(c) => cmd_run(c),
        Command::Assoc(c) => cmd_assoc(c),
        Command::Cluster(c) => cmd_cluster(c),
        Command::Probe(c) => cmd_probe(c),
        Command::Sweep { common, param, values } => cmd_sweep(common, *param, values),
        Command::Ablate(c) => cmd_ablate(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}\n\nRun `scopefe --help` for usage.");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
