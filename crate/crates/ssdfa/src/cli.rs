//! Command-line front end.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use ssdfa_core::costmodel::builtin_shape;
use ssdfa_core::feedback::nonzeros_per_row;
use ssdfa_core::gradcheck::run_suite;
use ssdfa_core::network::{train_observed, Precision};
use ssdfa_core::{analytic_cost, builtin_shapes, Algorithm, CostReport, EpochMetrics, NetShape, Network, Scalar};

use crate::csvout::{write_costs, write_metrics, write_sweep};
use crate::error::{Error, Result};
use crate::formats::{save_checkpoint, save_feedback, CheckpointMeta};
use crate::settings::Settings;
use crate::sweep::{run_sweep, RunEvent, SweepSpec};

#[derive(Debug, Parser)]
#[command(name = "ssdfa", version, about = "Backpropagation, direct feedback alignment and sparse variants for fully connected networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one network and write metrics, checkpoint and feedback files.
    Train(TrainArgs),
    /// Train every (rank, sparsity) cell of a grid several times.
    Sweep(SweepArgs),
    /// Print per-layer backward-pass costs as CSV.
    Cost(CostArgs),
    /// Check analytic derivatives against finite differences.
    Gradcheck(GradcheckArgs),
}

/// Flags shared by `train` and `sweep`; each mirrors a config-file key.
#[derive(Debug, Default, Args)]
pub struct RunFlags {
    /// bp, dfa, sdfa or ssdfa
    #[arg(long)]
    pub algo: Option<String>,
    /// Layer widths, input first, e.g. 784,400,10
    #[arg(long)]
    pub arch: Option<String>,
    /// Feedback rank (sdfa)
    #[arg(long)]
    pub rank: Option<usize>,
    /// Feedback sparsity in [0, 1) (sdfa)
    #[arg(long)]
    pub sparsity: Option<f64>,
    /// Initial learning rate
    #[arg(long)]
    pub lr: Option<f64>,
    /// Per-epoch learning-rate multiplier
    #[arg(long)]
    pub decay: Option<f64>,
    /// Training epochs
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Minibatch size
    #[arg(long)]
    pub batch: Option<usize>,
    /// Seed for weights, feedback and shuffling
    #[arg(long)]
    pub seed: Option<u64>,
    /// Enable biases
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub bias: Option<bool>,
    /// single or double
    #[arg(long)]
    pub precision: Option<String>,
    /// Hidden activation: tanh, relu or linear
    #[arg(long)]
    pub activation: Option<String>,
    /// Bound of the feedback weights, overriding the default
    #[arg(long)]
    pub feedback_scale: Option<f64>,
    /// Log the angle of every hidden layer, not only the first
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub all_angles: Option<bool>,
    /// Count backward-pass reads, writes, MACs and data movement
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub count_costs: Option<bool>,
    /// mnist, cifar10, cifar100 or synthetic
    #[arg(long)]
    pub dataset: Option<String>,
    /// Data directory; defaults to $SSDFA_DATA_DIR, then ./data
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Use only the first N training samples
    #[arg(long)]
    pub limit: Option<usize>,
    /// Use only the first N test samples
    #[arg(long)]
    pub test_limit: Option<usize>,
}

impl RunFlags {
    fn pairs(&self) -> Vec<(&'static str, String)> {
        let mut v = Vec::new();
        let mut put = |k: &'static str, val: Option<String>| {
            if let Some(val) = val {
                v.push((k, val));
            }
        };
        put("algo", self.algo.clone());
        put("arch", self.arch.clone());
        put("rank", self.rank.map(|x| x.to_string()));
        put("sparsity", self.sparsity.map(|x| x.to_string()));
        put("lr", self.lr.map(|x| x.to_string()));
        put("decay", self.decay.map(|x| x.to_string()));
        put("epochs", self.epochs.map(|x| x.to_string()));
        put("batch", self.batch.map(|x| x.to_string()));
        put("seed", self.seed.map(|x| x.to_string()));
        put("bias", self.bias.map(|x| x.to_string()));
        put("precision", self.precision.clone());
        put("activation", self.activation.clone());
        put("feedback_scale", self.feedback_scale.map(|x| x.to_string()));
        put("all_angles", self.all_angles.map(|x| x.to_string()));
        put("count_costs", self.count_costs.map(|x| x.to_string()));
        put("dataset", self.dataset.clone());
        put("data_dir", self.data_dir.as_ref().map(|p| p.display().to_string()));
        put("out", self.out.as_ref().map(|p| p.display().to_string()));
        put("limit", self.limit.map(|x| x.to_string()));
        put("test_limit", self.test_limit.map(|x| x.to_string()));
        v
    }

    /// Defaults, then `file`, then these flags.
    pub fn resolve(&self, file: Option<&Path>, extra: &[(&'static str, String)]) -> Result<Settings> {
        let mut s = Settings::default();
        if let Some(f) = file {
            s.apply_file(f)?;
        }
        for (k, v) in self.pairs().iter().chain(extra) {
            s.set(k, v).map_err(|m| Error::Usage(format!("--{}: {m}", k.replace('_', "-"))))?;
        }
        Ok(s)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// key = value file; flags override it
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub run: RunFlags,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// key = value sweep description; flags override it
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Ranks to sweep, e.g. 1,2,5,10
    #[arg(long)]
    pub ranks: Option<String>,
    /// Sparsities to sweep, e.g. 0,0.5,0.9
    #[arg(long)]
    pub sparsities: Option<String>,
    /// Runs per cell
    #[arg(long)]
    pub repetitions: Option<usize>,
    /// Runs executed concurrently
    #[arg(long)]
    pub jobs: Option<usize>,
    #[command(flatten)]
    pub run: RunFlags,
}

#[derive(Debug, Args)]
pub struct CostArgs {
    /// mnist_fc, cifar_fc, cifar10_fc, cifar100_fc, alexnet_fc, vgg16_fc,
    /// alexnet_fc_full, vgg16_fc_full, all, or custom (with --arch)
    #[arg(long, default_value = "mnist_fc")]
    pub shape: String,
    /// Layer widths for --shape custom
    #[arg(long)]
    pub arch: Option<String>,
    /// Comma-separated algorithms; sdfa needs --sparsity
    #[arg(long)]
    pub algo: Option<String>,
    /// Feedback sparsity for sdfa
    #[arg(long)]
    pub sparsity: Option<f64>,
    /// Write the CSV here instead of standard output
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

pub fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Train(a) => train_cmd(&a).map(|_| ExitCode::SUCCESS),
        Command::Sweep(a) => sweep_cmd(&a).map(|_| ExitCode::SUCCESS),
        Command::Cost(a) => cost_cmd(&a).map(|_| ExitCode::SUCCESS),
        Command::Gradcheck(a) => gradcheck_cmd(&a),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn unix_time() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn print_epoch(m: &EpochMetrics) {
    let test = m.test_accuracy.map_or(String::new(), |a| format!(" test {:.2}%", 100.0 * a));
    let angle = m.angles.first().map_or(String::new(), |a| format!(" angle {:.1}", a.angle_degrees));
    eprintln!(
        "epoch {:>3} lr {:.5} loss {:.4} train {:.2}%{test}{angle}",
        m.epoch,
        m.lr,
        m.train_loss,
        100.0 * m.train_accuracy
    );
}

pub fn train_cmd(args: &TrainArgs) -> Result<()> {
    let s = args.run.resolve(args.config.as_deref(), &[])?;
    let (train_set, test_set) = s.load_data()?;
    eprintln!(
        "{} on {} ({} train, {} test), arch {:?}",
        s.algorithm,
        s.dataset,
        train_set.len(),
        test_set.len(),
        s.arch()
    );
    match s.precision {
        Precision::Single => train_typed::<f32>(&s, &train_set, &test_set),
        Precision::Double => train_typed::<f64>(&s, &train_set, &test_set),
    }
}

fn train_typed<T: Scalar>(s: &Settings, train_set: &ssdfa_core::Dataset, test_set: &ssdfa_core::Dataset) -> Result<()> {
    let cfg = s.train_config();
    let out = s.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    create_dir(&out)?;
    let mut net = Network::<T>::for_training(&s.arch(), &cfg)?;
    let start = Instant::now();
    let report = train_observed(&mut net, train_set, Some(test_set), &cfg, print_epoch)?;
    eprintln!("trained in {:.1}s", start.elapsed().as_secs_f64());

    let metrics = out.join("metrics.csv");
    write_metrics(create(&metrics)?, &report)?;
    let meta = CheckpointMeta { seed: cfg.seed, algorithm: cfg.algorithm, precision: cfg.precision };
    save_checkpoint(&net, &meta, &out.join("checkpoint.txt"))?;
    for (l, layer) in net.layers().iter().enumerate() {
        if let Some(fb) = layer.feedback() {
            save_feedback(fb, &out.join(format!("feedback_l{l}.txt")))?;
        }
    }
    if let Some(costs) = &report.costs {
        write_costs(create(&out.join("costs.csv"))?, &[("", costs.clone())])?;
    }
    if let Some(acc) = report.final_test_accuracy() {
        println!("final test accuracy {:.4}", acc);
    }
    println!("wrote {}", out.display());
    Ok(())
}

pub fn sweep_cmd(args: &SweepArgs) -> Result<()> {
    let mut extra = Vec::new();
    if let Some(r) = &args.ranks {
        extra.push(("ranks", r.clone()));
    }
    if let Some(sp) = &args.sparsities {
        extra.push(("sparsities", sp.clone()));
    }
    if let Some(r) = args.repetitions {
        extra.push(("repetitions", r.to_string()));
    }
    if let Some(j) = args.jobs {
        extra.push(("jobs", j.to_string()));
    }
    let mut s = Settings { algorithm: Algorithm::Sdfa, ..Settings::default() };
    if let Some(f) = &args.spec {
        s.apply_file(f)?;
    }
    let mut flags = args.run.pairs();
    flags.extend(extra);
    for (k, v) in &flags {
        s.set(k, v).map_err(|m| Error::Usage(format!("--{}: {m}", k.replace('_', "-"))))?;
    }

    let (train_set, test_set) = s.load_data()?;
    let spec = SweepSpec {
        arch: s.arch(),
        ranks: s.ranks.clone(),
        sparsities: s.sparsities.clone(),
        repetitions: s.repetitions,
        base: s.train_config(),
        jobs: s.jobs,
    };
    let out = s.out.clone().unwrap_or_else(|| PathBuf::from("sweep_out"));
    create_dir(&out)?;
    let log_path = out.join("sweep.log");
    let log = std::sync::Mutex::new(create(&log_path)?);
    let note = |line: String| {
        eprintln!("{line}");
        let mut f = log.lock().expect("log lock");
        let _ = writeln!(f, "{} {line}", unix_time());
        let _ = f.flush();
    };
    note(format!(
        "sweep {} on {}: ranks {:?} sparsities {:?} x{} seed {}",
        spec.base.algorithm, s.dataset, spec.ranks, spec.sparsities, spec.repetitions, spec.master_seed()
    ));
    for &r in &spec.ranks {
        for &sp in &spec.sparsities {
            if let Some(v) = spec.check_cell(r, sp) {
                note(format!("skip rank {r} sparsity {sp}: {v}"));
            }
        }
    }
    let on_run = |e: RunEvent<'_>| {
        let acc = e.result.accuracy.map_or("diverged".to_string(), |a| format!("{:.4}", a));
        note(format!(
            "rank {} sparsity {} rep {} seed {} accuracy {acc} ({:.1}s)",
            e.rank,
            e.sparsity,
            e.result.rep,
            e.result.seed,
            e.elapsed.as_secs_f64()
        ));
    };
    let result = run_sweep(&spec, &train_set, &test_set, &on_run)?;
    let csv_path = out.join("sweep.csv");
    write_sweep(create(&csv_path)?, &result)?;
    note(format!("wrote {}", csv_path.display()));
    println!("wrote {}", csv_path.display());
    Ok(())
}

fn parse_dims(arch: &str) -> Result<Vec<usize>> {
    arch.split(',')
        .map(|t| t.trim().parse().map_err(|_| Error::Usage(format!("invalid layer width '{t}' in --arch"))))
        .collect()
}

pub fn cost_reports(args: &CostArgs) -> Result<Vec<(String, CostReport)>> {
    let shapes: Vec<(String, NetShape)> = match args.shape.as_str() {
        "all" => builtin_shapes().into_iter().map(|(n, s)| (n.to_string(), s)).collect(),
        "custom" => {
            let arch = args.arch.as_deref().ok_or_else(|| Error::Usage("--shape custom needs --arch".into()))?;
            vec![(String::new(), NetShape::new(parse_dims(arch)?)?)]
        }
        name => {
            let s = builtin_shape(name).ok_or_else(|| Error::Usage(format!("unknown shape '{name}'")))?;
            vec![(String::new(), s)]
        }
    };
    let algos: Vec<Algorithm> = match &args.algo {
        Some(list) => list.split(',').map(|a| a.parse()).collect::<std::result::Result<_, _>>()?,
        None if args.sparsity.is_some() => Algorithm::ALL.to_vec(),
        None => vec![Algorithm::Bp, Algorithm::Dfa, Algorithm::Ssdfa],
    };
    let mut out = Vec::new();
    for (name, shape) in shapes {
        for &a in &algos {
            let shape = if a == Algorithm::Sdfa {
                let s = args.sparsity.ok_or_else(|| Error::Usage("sdfa costs need --sparsity".into()))?;
                let k = nonzeros_per_row(shape.outputs(), s).max(1);
                shape.clone().with_nonzeros_per_row(k)?
            } else {
                shape.clone()
            };
            out.push((name.clone(), analytic_cost(&shape, a)?));
        }
    }
    Ok(out)
}

pub fn cost_cmd(args: &CostArgs) -> Result<()> {
    let reports = cost_reports(args)?;
    let named: Vec<(&str, CostReport)> = reports.iter().map(|(n, r)| (n.as_str(), r.clone())).collect();
    match &args.out {
        Some(p) => write_costs(create(p)?, &named),
        None => write_costs(std::io::stdout().lock(), &named),
    }
}

pub fn gradcheck_cmd(args: &GradcheckArgs) -> Result<ExitCode> {
    let checks = run_suite(args.seed)?;
    let mut ok = true;
    for c in &checks {
        println!("{c}");
        ok &= c.passed();
    }
    println!("{}", if ok { "all checks passed" } else { "gradient check FAILED" });
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
