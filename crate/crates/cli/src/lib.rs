//! Command-line driver: data generation, federated and pooled training,
//! checkpoint evaluation and the sampling coverage demo.

pub mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fedpoint::data::{generate_site, read_site, write_site, SiteData, Split};
use fedpoint::demo::{coverage_rates, coverage_trials, write_coverage_csv};
use fedpoint::federated::{evaluate, run_centralized, run_federation, write_metrics_csv, FederationError, MetricsRow};
use fedpoint::model::{checkpoint, Model, ParamGroup};

pub use config::{ConfigError, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "fedpoint", version, about = "Federated point-transformer slide classification on synthetic sites")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate synthetic sites into `data_dir`.
    GenData(Common),
    /// Train across sites with federated averaging.
    TrainFederated(Common),
    /// Train on the pooled training splits of every site.
    TrainCentralized(Common),
    /// Score a checkpoint on every site.
    Eval(Common),
    /// Compare cluster coverage of cosine and positional sampling.
    FcsDemo(Common),
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// Flat `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// `fps` or `fcs`, optionally followed by `+dda` and `+aux`.
    #[arg(long)]
    pub variant: Option<String>,
    /// Override a config key, `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

fn classify(e: fedpoint::Error) -> CliError {
    use fedpoint::Error as E;
    let msg = e.to_string();
    match e {
        E::Data(_) | E::Format { .. } | E::Io { .. } | E::Federation(FederationError::Data(_)) => CliError::Data(msg),
        E::Federation(FederationError::Config(_)) => CliError::Usage(msg),
        _ => CliError::Runtime(msg),
    }
}

fn fed_err(e: FederationError) -> CliError {
    classify(e.into())
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn create_out(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))
}

/// Defaults, then the file, then `--set`, then the dedicated flags.
pub fn resolve(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &common.config {
        let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        cfg.apply_text(&text)?;
    }
    for o in &common.overrides {
        let (k, v) = o.split_once('=').ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got `{o}`")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(v) = &common.variant {
        cfg.set("variant", v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn site_dir(cfg: &RunConfig, site: u32) -> PathBuf {
    cfg.data_dir.join(format!("site{site}"))
}

fn load_sites(cfg: &RunConfig, ids: &[u32]) -> Result<Vec<SiteData>, CliError> {
    ids.iter()
        .map(|&id| {
            let site = read_site(&site_dir(cfg, id).join("manifest.tsv"), id, cfg.seed).map_err(classify)?;
            if site.slides[0].dim() != cfg.feature_dim {
                return Err(CliError::Data(format!("site {id}: slides have {} features, config says {}", site.slides[0].dim(), cfg.feature_dim)));
            }
            Ok(site)
        })
        .collect()
}

fn gen_data(cfg: &RunConfig, out: &Path) -> Result<String, CliError> {
    let mut report = String::new();
    for id in cfg.all_sites() {
        let spec = cfg.site_spec(id);
        let site = generate_site(&spec).map_err(|e| classify(e.into()))?;
        let path = write_site(&site, &spec, &site_dir(cfg, id)).map_err(classify)?;
        let (neg, pos) = site.label_counts(Split::Train);
        writeln!(report, "site {id}: {} slides, train {neg}/{pos} neg/pos, {}", site.slides.len(), path.display()).unwrap();
    }
    create_out(out)?;
    write_file(&out.join("config.txt"), cfg.to_text())?;
    Ok(report)
}

fn train(cfg: &RunConfig, out: &Path, centralized: bool) -> Result<String, CliError> {
    let model = Model::new(cfg.model_config()).map_err(|e| CliError::Usage(e.to_string()))?;
    let sites = load_sites(cfg, &cfg.training_sites())?;
    let unseen = load_sites(cfg, &cfg.unseen_sites)?;
    let train_cfg = cfg.train_config();
    let mut progress = |rows: &[MetricsRow]| {
        let mean = |split: &str| rows.iter().find(|r| r.site.is_none() && r.split == split).map_or(f64::NAN, |r| r.auc);
        eprintln!("round {:>3}  val auc {:.4}  test auc {:.4}", rows[0].round, mean("val"), mean("test"));
    };
    let outcome = if centralized {
        run_centralized(&model, &train_cfg, &sites, &unseen, &mut progress)
    } else {
        run_federation(&model, &train_cfg, &sites, &unseen, &mut progress)
    }
    .map_err(fed_err)?;

    let mut csv = Vec::new();
    write_metrics_csv(&outcome.metrics, &mut csv).map_err(|e| CliError::Runtime(e.to_string()))?;
    let ck = outcome.checkpoint();
    create_out(out)?;
    write_file(&out.join("metrics.csv"), csv)?;
    write_file(&out.join("checkpoint.ptck"), checkpoint::encode(&ck))?;
    write_file(&out.join("checkpoint.manifest"), checkpoint::manifest(&ck))?;
    let summary = outcome.summary.to_text();
    write_file(&out.join("summary.txt"), &summary)?;
    write_file(&out.join("config.txt"), cfg.to_text())?;
    Ok(summary)
}

fn eval(cfg: &RunConfig, out: &Path) -> Result<String, CliError> {
    let model = Model::new(cfg.model_config()).map_err(|e| CliError::Usage(e.to_string()))?;
    let path = cfg.checkpoint.clone().ok_or_else(|| CliError::Usage("eval needs `checkpoint`".into()))?;
    let stored = checkpoint::load(&path).map_err(classify)?;
    let mut backbone = model.init_backbone(0);
    backbone
        .load(&stored.subset(ParamGroup::Backbone))
        .map_err(|e| CliError::Data(format!("{}: does not fit the configured model: {e}", path.display())))?;
    let sites = load_sites(cfg, &cfg.all_sites())?;

    let mut table = String::from("site,split,auc,loss,slides\n");
    let mut scores = String::from("site,split,slide,label,score\n");
    for site in &sites {
        let unseen = cfg.unseen_sites.contains(&site.site_id);
        let (split, slides): (&str, Vec<_>) = if unseen {
            ("unseen", site.slides.iter().collect())
        } else {
            ("test", site.split(Split::Test).collect())
        };
        let e = evaluate(&model, &backbone, slides.iter().copied(), cfg.seed).map_err(fed_err)?;
        writeln!(table, "{},{split},{},{},{}", site.site_id, num(e.auc), num(e.loss), slides.len()).unwrap();
        for (s, p) in slides.iter().zip(&e.scores) {
            writeln!(scores, "{},{split},{},{},{p}", site.site_id, s.id(), s.label().index()).unwrap();
        }
    }
    create_out(out)?;
    write_file(&out.join("eval.csv"), &table)?;
    write_file(&out.join("scores.csv"), scores)?;
    write_file(&out.join("config.txt"), cfg.to_text())?;
    Ok(table)
}

fn num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        v.to_string()
    }
}

fn fcs_demo(cfg: &RunConfig, out: &Path) -> Result<String, CliError> {
    let trials = coverage_trials(&cfg.coverage_config()).map_err(classify)?;
    let mut csv = Vec::new();
    write_coverage_csv(&trials, &mut csv).map_err(|e| CliError::Runtime(e.to_string()))?;
    create_out(out)?;
    write_file(&out.join("coverage.csv"), csv)?;
    write_file(&out.join("config.txt"), cfg.to_text())?;
    let (fcs, fps) = coverage_rates(&trials);
    Ok(format!("trials = {}\nfcs_coverage = {fcs}\nfps_coverage = {fps}\n", trials.len()))
}

fn install_thread_cap() -> Result<(), CliError> {
    let Ok(v) = std::env::var("FEDPOINT_THREADS") else { return Ok(()) };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| CliError::Usage(format!("FEDPOINT_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Runtime(e.to_string()))
}

pub fn run(cli: Cli) -> Result<String, CliError> {
    install_thread_cap()?;
    let (common, f): (&Common, fn(&RunConfig, &Path) -> Result<String, CliError>) = match &cli.command {
        Command::GenData(c) => (c, gen_data),
        Command::TrainFederated(c) => (c, |cfg, out| train(cfg, out, false)),
        Command::TrainCentralized(c) => (c, |cfg, out| train(cfg, out, true)),
        Command::Eval(c) => (c, eval),
        Command::FcsDemo(c) => (c, fcs_demo),
    };
    let cfg = resolve(common)?;
    f(&cfg, &common.out)
}

/// Parses arguments, runs, prints and maps the result to an exit code.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(report) => {
            print!("{report}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
