//! The `dcl` command line: `synth`, `train`, `eval`, `ablate`, `heatmap`.
//!
//! Every command that writes an output directory also writes `run.json`
//! holding the full resolved configuration and seed.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::data::{apply_protocol, load_dataset, save_dataset, synth_dataset, MultiViewDataset, Protocol, SynthConfig};
use crate::error::{DclError, Result};
use crate::losses::DenominatorGate;
use crate::metrics::{MetricsReport, CSV_HEADER};
use crate::model::{check_compatible, Checkpoint, ModelParams};
use crate::numerics::{map_indices, Exec, Matrix};
use crate::train::{channel_similarity, evaluate, similarity_summary, train_with, TrainConfig, TrainOptions};

#[derive(Debug, Parser)]
#[command(
    name = "dcl",
    version,
    about = "Incomplete multi-view multi-label classification with dual-level contrastive learning"
)]
pub struct Cli {
    /// More log output (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic multi-view multi-label dataset.
    Synth(SynthArgs),
    /// Train a model and evaluate it on the held-out split.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Train all 8 on/off combinations of the three auxiliary losses.
    Ablate(AblateArgs),
    /// Write channel-similarity matrices of saved epoch snapshots.
    Heatmap(HeatmapArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub n: u64,
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
    pub views: u64,
    #[arg(long, default_value_t = 6, value_parser = clap::value_parser!(u64).range(1..))]
    pub labels: u64,
    /// Width of every view.
    #[arg(long, default_value_t = 32, value_parser = clap::value_parser!(u64).range(1..))]
    pub dim: u64,
    /// Per-view widths, overriding --views and --dim (e.g. 32,16,8).
    #[arg(long, value_delimiter = ',')]
    pub dims: Option<Vec<usize>>,
    /// Standard deviation of additive feature noise.
    #[arg(long, default_value_t = 1.0)]
    pub noise: f64,
    /// Scale of the view-specific nuisance factor.
    #[arg(long, default_value_t = 4.0)]
    pub nuisance: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum GateArg {
    View,
    Label,
}

/// Training hyper-parameters. Unset flags fall back to `--config`, then to
/// the built-in defaults.
#[derive(Clone, Debug, Default, Args)]
pub struct TrainFlags {
    /// JSON file with any subset of the training fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// [default: 100]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Adam learning rate [default: 0.001]
    #[arg(long)]
    pub lr: Option<f64>,
    /// [default: 0.9]
    #[arg(long)]
    pub beta1: Option<f64>,
    /// [default: 0.999]
    #[arg(long)]
    pub beta2: Option<f64>,
    /// [default: 1e-8]
    #[arg(long)]
    pub eps: Option<f64>,
    /// Weight of the instance-level contrastive loss [default: 0.01]
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Weight of the label-level contrastive loss [default: 0.01]
    #[arg(long)]
    pub beta: Option<f64>,
    /// Weight of the reconstruction loss [default: 0.1]
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Instance-level temperature [default: 0.5]
    #[arg(long)]
    pub tau_s: Option<f64>,
    /// Label-level temperature [default: 0.5]
    #[arg(long)]
    pub tau_l: Option<f64>,
    /// Availability gate in the label-level denominator [default: view]
    #[arg(long, value_enum)]
    pub label_denominator: Option<GateArg>,
    /// Fraction of each view row zeroed as a contiguous span [default: 0.3]
    #[arg(long)]
    pub mask_ratio: Option<f64>,
    /// [default: 64]
    #[arg(long)]
    pub embed_dim: Option<usize>,
    /// [default: 128]
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    /// 0 = full batch [default: 0]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Seed for every random draw of the run [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Draw input masks once instead of every epoch.
    #[arg(long)]
    pub fixed_mask: bool,
}

impl TrainFlags {
    pub fn resolve(&self) -> Result<TrainConfig> {
        let mut c = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| DclError::io(path, e))?;
                serde_json::from_str::<TrainConfig>(&text).map_err(|e| DclError::Parse {
                    what: "training config",
                    path: path.clone(),
                    message: e.to_string(),
                })?
            }
            None => TrainConfig::default(),
        };
        macro_rules! set {
            ($($flag:ident => $($field:ident).+),* $(,)?) => {
                $(if let Some(x) = self.$flag { c.$($field).+ = x; })*
            };
        }
        set!(
            epochs => epochs, lr => lr, beta1 => beta1, beta2 => beta2, eps => eps,
            alpha => loss.alpha, beta => loss.beta, gamma => loss.gamma,
            tau_s => loss.tau_s, tau_l => loss.tau_l, mask_ratio => mask_ratio,
            embed_dim => embed_dim, hidden_dim => hidden_dim, batch_size => batch_size, seed => seed,
        );
        if let Some(g) = self.label_denominator {
            c.loss.label_denominator = match g {
                GateArg::View => DenominatorGate::View,
                GateArg::Label => DenominatorGate::Label,
            };
        }
        if self.fixed_mask {
            c.fixed_mask = true;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Clone, Copy, Debug, Default, Args)]
pub struct ProtocolFlags {
    /// Fraction of (sample, view) entries to remove.
    #[arg(long, default_value_t = 0.0)]
    pub view_missing: f64,
    /// Fraction of training label entries to hide.
    #[arg(long, default_value_t = 0.0)]
    pub label_missing: f64,
    /// Share of samples used for training; the rest is the test split.
    #[arg(long)]
    pub train_frac: Option<f64>,
}

impl ProtocolFlags {
    pub fn protocol(&self) -> Protocol {
        Protocol {
            view_missing: self.view_missing,
            label_missing: self.label_missing,
            train_frac: self.train_frac,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset manifest (JSON).
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub train: TrainFlags,
    #[command(flatten)]
    pub protocol: ProtocolFlags,
    /// Evaluate on the test split after every epoch and log the metrics.
    #[arg(long)]
    pub eval_every_epoch: bool,
    /// Epochs whose parameters are saved under `snapshots/` (0 = init).
    #[arg(long, value_delimiter = ',')]
    pub snapshot_epochs: Vec<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    /// With --train-frac, the same protocol as training selects the test split.
    #[command(flatten)]
    pub protocol: ProtocolFlags,
    /// Protocol seed [default: the checkpoint's seed]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory for metrics.txt / metrics.csv.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// alpha/beta/gamma give the weight of each loss when it is switched on.
    #[command(flatten)]
    pub train: TrainFlags,
    #[command(flatten)]
    pub protocol: ProtocolFlags,
    /// Run the 8 configurations concurrently.
    #[arg(long)]
    pub parallel: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct HeatmapArgs {
    /// Output directory of a `train --snapshot-epochs` run.
    #[arg(long, conflicts_with = "checkpoint", required_unless_present = "checkpoint")]
    pub run: Option<PathBuf>,
    /// A single checkpoint; its trained epoch count is the only epoch available.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    pub epochs: Vec<usize>,
    #[command(flatten)]
    pub protocol: ProtocolFlags,
    /// Protocol seed [default: the checkpoint's seed]
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Contents of `run.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub manifest: PathBuf,
    pub out: PathBuf,
    pub seed: u64,
    pub config: Option<TrainConfig>,
    pub protocol: Option<Protocol>,
    /// Split the reported metrics were computed on: "test" or "train".
    pub eval_split: Option<String>,
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| DclError::io(dir, e))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| DclError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    write_file(path, &(text + "\n"))
}

fn write_metrics(dir: &Path, report: &MetricsReport) -> Result<()> {
    write_file(&dir.join("metrics.txt"), &report.to_key_values())?;
    write_file(
        &dir.join("metrics.csv"),
        &format!("{CSV_HEADER}\n{}\n", report.csv_row()),
    )
}

pub fn cmd_synth(args: &SynthArgs) -> Result<PathBuf> {
    let dims = match &args.dims {
        Some(d) => d.clone(),
        None => vec![args.dim as usize; args.views as usize],
    };
    let cfg = SynthConfig {
        n: args.n as usize,
        labels: args.labels as usize,
        dims,
        noise: args.noise,
        nuisance: args.nuisance,
        seed: args.seed,
    };
    let ds = synth_dataset(&cfg)?;
    let path = save_dataset(&ds, &args.out)?;
    write_json(&args.out.join("synth.json"), &cfg)?;
    log::info!("wrote {} samples to {}", cfg.n, path.display());
    Ok(path)
}

/// Loads a manifest and applies the missing-data protocol.
pub fn prepare(
    manifest: &Path,
    protocol: &Protocol,
    seed: u64,
) -> Result<(MultiViewDataset, Option<MultiViewDataset>)> {
    let ds = load_dataset(manifest)?;
    apply_protocol(&ds, protocol, seed)
}

/// Everything `cmd_train` produced.
#[derive(Clone, Debug)]
pub struct TrainResult {
    pub params: ModelParams,
    pub report: MetricsReport,
    pub checkpoint: PathBuf,
}

pub fn cmd_train(args: &TrainArgs) -> Result<TrainResult> {
    let config = args.train.resolve()?;
    let protocol = args.protocol.protocol();
    let (train_set, test_set) = prepare(&args.manifest, &protocol, config.seed)?;
    create_dir(&args.out)?;
    let eval_split = if test_set.is_some() { "test" } else { "train" };
    let run = RunManifest {
        command: "train".into(),
        manifest: args.manifest.clone(),
        out: args.out.clone(),
        seed: config.seed,
        config: Some(config.clone()),
        protocol: Some(protocol),
        eval_split: Some(eval_split.into()),
    };
    write_json(&args.out.join("run.json"), &run)?;

    let eval_set = test_set.as_ref().unwrap_or(&train_set);
    let opts = TrainOptions {
        eval: args.eval_every_epoch.then_some(eval_set),
        snapshot_epochs: args.snapshot_epochs.clone(),
    };
    let outcome = train_with(&train_set, &config, &opts)?;
    // kept free of output paths so identical runs give identical checkpoints
    let run_json = serde_json::json!({ "config": &config, "protocol": &protocol });

    let checkpoint = args.out.join("checkpoint.json");
    Checkpoint::new(&outcome.params, config.seed, config.epochs, Some(run_json.clone())).save(&checkpoint)?;
    if !outcome.snapshots.is_empty() {
        let dir = args.out.join("snapshots");
        create_dir(&dir)?;
        for (epoch, p) in &outcome.snapshots {
            Checkpoint::new(p, config.seed, *epoch, Some(run_json.clone()))
                .save(&dir.join(format!("epoch_{epoch}.json")))?;
        }
    }
    write_file(&args.out.join("train_log.csv"), &outcome.log.to_csv())?;
    write_file(&args.out.join("timing.csv"), &outcome.log.timing_csv())?;

    let report = evaluate(&outcome.params, eval_set)?.with_run(config.seed, config.epochs);
    write_metrics(&args.out, &report)?;
    log::info!("{eval_split} AP {:.4}, AUC {:.4}", report.ap, report.auc);
    Ok(TrainResult {
        params: outcome.params,
        report,
        checkpoint,
    })
}

pub fn cmd_eval(args: &EvalArgs) -> Result<MetricsReport> {
    let ck = Checkpoint::load(&args.checkpoint)?;
    let params = ck.params()?;
    let seed = args.seed.unwrap_or(ck.seed);
    let (train_set, test_set) = prepare(&args.manifest, &args.protocol.protocol(), seed)?;
    let ds = test_set.unwrap_or(train_set);
    check_compatible(&params, &ds)?;
    let report = evaluate(&params, &ds)?.with_run(seed, ck.epochs_trained);
    if let Some(out) = &args.out {
        create_dir(out)?;
        write_metrics(out, &report)?;
    }
    Ok(report)
}

/// The 8 loss switches `(L_s, L_l, L_r)`, backbone first.
pub const ABLATIONS: [(bool, bool, bool); 8] = [
    (false, false, false),
    (true, false, false),
    (false, true, false),
    (false, false, true),
    (true, true, false),
    (true, false, true),
    (false, true, true),
    (true, true, true),
];

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub switches: (bool, bool, bool),
    pub config: TrainConfig,
    pub report: MetricsReport,
}

pub fn ablation_name(s: (bool, bool, bool)) -> String {
    let parts: Vec<&str> = [(s.0, "L_s"), (s.1, "L_l"), (s.2, "L_r")]
        .iter()
        .filter(|(on, _)| *on)
        .map(|(_, n)| *n)
        .collect();
    if parts.is_empty() {
        "backbone".into()
    } else {
        format!("backbone+{}", parts.join("+"))
    }
}

/// Trains and evaluates each loss combination with a shared seed.
pub fn run_ablation(
    train_set: &MultiViewDataset,
    eval_set: &MultiViewDataset,
    base: &TrainConfig,
    exec: Exec,
) -> Result<Vec<AblationRow>> {
    let rows = map_indices(exec, ABLATIONS.len(), |k| -> Result<AblationRow> {
        let s = ABLATIONS[k];
        let mut config = base.clone();
        config.loss.alpha = if s.0 { base.loss.alpha } else { 0.0 };
        config.loss.beta = if s.1 { base.loss.beta } else { 0.0 };
        config.loss.gamma = if s.2 { base.loss.gamma } else { 0.0 };
        let (params, _) = crate::train::train(train_set, &config)?;
        let report = evaluate(&params, eval_set)?.with_run(config.seed, config.epochs);
        log::info!("{}: AP {:.4}", ablation_name(s), report.ap);
        Ok(AblationRow {
            switches: s,
            config,
            report,
        })
    });
    rows.into_iter().collect()
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut s = String::from("configuration,L_s,L_l,L_r,alpha,beta,gamma,ap,auc,one_minus_hl,one_minus_rl,oe,cov\n");
    for r in rows {
        let b = |x: bool| u8::from(x);
        let m = &r.report;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            ablation_name(r.switches),
            b(r.switches.0),
            b(r.switches.1),
            b(r.switches.2),
            r.config.loss.alpha,
            r.config.loss.beta,
            r.config.loss.gamma,
            m.ap,
            m.auc,
            m.one_minus_hl,
            m.one_minus_rl,
            m.oe,
            m.cov
        );
    }
    s
}

pub fn cmd_ablate(args: &AblateArgs) -> Result<Vec<AblationRow>> {
    let base = args.train.resolve()?;
    let protocol = args.protocol.protocol();
    let (train_set, test_set) = prepare(&args.manifest, &protocol, base.seed)?;
    create_dir(&args.out)?;
    write_json(
        &args.out.join("run.json"),
        &RunManifest {
            command: "ablate".into(),
            manifest: args.manifest.clone(),
            out: args.out.clone(),
            seed: base.seed,
            config: Some(base.clone()),
            protocol: Some(protocol),
            eval_split: Some(if test_set.is_some() { "test" } else { "train" }.into()),
        },
    )?;
    let eval_set = test_set.as_ref().unwrap_or(&train_set);
    let exec = if args.parallel {
        Exec::Parallel
    } else {
        Exec::Sequential
    };
    let rows = run_ablation(&train_set, eval_set, &base, exec)?;
    write_file(&args.out.join("ablation.csv"), &ablation_csv(&rows))?;
    Ok(rows)
}

fn similarity_csv(sim: &Matrix) -> String {
    let v = sim.rows() / 2;
    let names: Vec<String> = (1..=v)
        .map(|m| format!("S{m}"))
        .chain((1..=v).map(|m| format!("P{m}")))
        .collect();
    let mut s = names.join(",") + "\n";
    for i in 0..sim.rows() {
        let row: Vec<String> = sim.row(i).iter().map(|x| x.to_string()).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

/// Writes `similarity_epoch_{e}.csv` per requested epoch plus `summary.csv`.
pub fn cmd_heatmap(args: &HeatmapArgs) -> Result<Vec<(usize, Matrix)>> {
    let mut checkpoints = Vec::new();
    for &epoch in &args.epochs {
        let ck = match (&args.run, &args.checkpoint) {
            (Some(run), _) => {
                let path = run.join("snapshots").join(format!("epoch_{epoch}.json"));
                if !path.exists() {
                    return Err(DclError::Config(format!(
                        "no snapshot for epoch {epoch} in {} (train with --snapshot-epochs)",
                        run.display()
                    )));
                }
                Checkpoint::load(&path)?
            }
            (None, Some(path)) => {
                let ck = Checkpoint::load(path)?;
                if ck.epochs_trained != epoch {
                    return Err(DclError::Config(format!(
                        "no snapshot for epoch {epoch}: {} holds epoch {}",
                        path.display(),
                        ck.epochs_trained
                    )));
                }
                ck
            }
            (None, None) => return Err(DclError::Config("heatmap needs --run or --checkpoint".into())),
        };
        checkpoints.push((epoch, ck));
    }
    let seed = args.seed.unwrap_or_else(|| checkpoints.first().map_or(0, |c| c.1.seed));
    let (train_set, _) = prepare(&args.manifest, &args.protocol.protocol(), seed)?;
    create_dir(&args.out)?;
    let mut summary = String::from("epoch,shared_within,shared_private_cross\n");
    let mut out = Vec::new();
    for (epoch, ck) in checkpoints {
        let sim = channel_similarity(&ck.params()?, &train_set)?;
        write_file(
            &args.out.join(format!("similarity_epoch_{epoch}.csv")),
            &similarity_csv(&sim),
        )?;
        let (within, cross) = similarity_summary(&sim);
        let _ = writeln!(summary, "{epoch},{within},{cross}");
        out.push((epoch, sim));
    }
    write_file(&args.out.join("summary.csv"), &summary)?;
    Ok(out)
}

/// Runs a parsed command line, printing results to stdout.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => {
            let path = cmd_synth(&a)?;
            println!("{}", path.display());
        }
        Command::Train(a) => {
            let r = cmd_train(&a)?;
            print!("{}", r.report.to_key_values());
        }
        Command::Eval(a) => print!("{}", cmd_eval(&a)?.to_key_values()),
        Command::Ablate(a) => print!("{}", ablation_csv(&cmd_ablate(&a)?)),
        Command::Heatmap(a) => {
            for (epoch, _) in cmd_heatmap(&a)? {
                println!("{}", a.out.join(format!("similarity_epoch_{epoch}.csv")).display());
            }
        }
    }
    Ok(())
}

pub fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}
