//! The `sfid` command line: `train`, `eval`, `predict` and `ablate`.
//!
//! Settings resolve as defaults < `--config` file < flags. Exit codes: 0 ok,
//! 2 usage or configuration, 3 data, 4 numeric failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::checkpoint::Checkpoint;
use crate::config::{parse_kv, TrainConfig};
use crate::corpus::{load_split, load_token_lines, Dataset};
use crate::error::{CorpusError, Error, Result};
use crate::metrics::EvalReport;
use crate::sfid::Ablation;
use crate::trainer::{evaluate, predict_labels, train_dataset, EpochMetrics, SplitSizes, TrainOutcome};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const CONFIG_FILE: &str = "config.txt";
pub const REPORT_FILE: &str = "report.txt";
pub const METRICS_FILE: &str = "metrics.json";
pub const EVAL_FILE: &str = "eval.txt";
pub const TABLE_FILE: &str = "ablation.tsv";

#[derive(Debug, Parser)]
#[command(name = "sfid", version, about = "Joint slot filling and intent detection with an SF-ID network")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write checkpoint, metrics and effective config under --out.
    Train(RunFlags),
    /// Score a checkpoint on one split directory.
    Eval(EvalArgs),
    /// Tag a `seq.in`-style file, writing `seq.out` and `label` under --out.
    Predict(PredictArgs),
    /// Train and test a sweep of ablations and/or iteration counts.
    Ablate(AblateArgs),
}

/// Flags mirroring the config-file keys.
#[derive(Debug, Clone, Default, Args)]
pub struct RunFlags {
    /// Dataset root holding train/, valid/ and optionally test/.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory; every artifact is written below it.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// `key = value` config file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = ["sf-first", "id-first"])]
    pub mode: Option<String>,
    #[arg(long, overrides_with = "no_crf")]
    pub crf: bool,
    #[arg(long, overrides_with = "crf")]
    pub no_crf: bool,
    #[arg(long)]
    pub iterations: Option<String>,
    #[arg(long, value_parser = ["none", "sf-only", "id-only", "no-interaction", "full"])]
    pub ablation: Option<String>,
    #[arg(long, value_parser = ["per-position", "global"])]
    pub correlation: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub epochs: Option<String>,
    #[arg(long)]
    pub batch_size: Option<String>,
    #[arg(long)]
    pub lr0: Option<String>,
    #[arg(long)]
    pub decay_p: Option<String>,
    #[arg(long)]
    pub beta1: Option<String>,
    #[arg(long)]
    pub beta2: Option<String>,
    #[arg(long)]
    pub epsilon: Option<String>,
    #[arg(long)]
    pub patience: Option<String>,
    #[arg(long)]
    pub clip_norm: Option<String>,
    #[arg(long)]
    pub intent_weight: Option<String>,
    #[arg(long)]
    pub slot_weight: Option<String>,
    #[arg(long)]
    pub dropout: Option<String>,
    #[arg(long)]
    pub embedding_dim: Option<String>,
    #[arg(long)]
    pub hidden_dim: Option<String>,
    #[arg(long)]
    pub attention_dim: Option<String>,
    #[arg(long)]
    pub id_proj_dim: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Split directory with `seq.in`, `seq.out` and `label`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// One whitespace-tokenized utterance per line.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Sweep {
    Ablation,
    Iterations,
    Both,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub run: RunFlags,
    #[arg(long, value_enum, default_value = "both")]
    pub sweep: Sweep,
    /// Comma-separated ablations for the ablation sweep.
    #[arg(long, default_value = "none,sf-only,id-only,no-interaction,full")]
    pub ablations: String,
    /// Comma-separated iteration counts for the iteration sweep.
    #[arg(long, default_value = "1,2,3,4,5,6")]
    pub iteration_counts: String,
    /// Seeds per configuration, starting at the configured seed.
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
}

/// Fully resolved settings of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: PathBuf,
    pub out: PathBuf,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn resolve(flags: &RunFlags) -> Result<Self> {
        let mut data = None;
        let mut out = None;
        let mut train = TrainConfig::default();
        if let Some(path) = &flags.config {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
            for (line, key, value) in parse_kv(&text)? {
                match key.as_str() {
                    "data" => data = Some(PathBuf::from(value)),
                    "out" => out = Some(PathBuf::from(value)),
                    _ => train
                        .set(&key, &value)
                        .map_err(|e| Error::Config(format!("{}:{line}: {e}", path.display())))?,
                }
            }
        }
        if flags.data.is_some() {
            data.clone_from(&flags.data);
        }
        if flags.out.is_some() {
            out.clone_from(&flags.out);
        }
        let crf = if flags.crf {
            Some("true".to_string())
        } else if flags.no_crf {
            Some("false".to_string())
        } else {
            None
        };
        let pairs = [
            ("mode", &flags.mode),
            ("crf", &crf),
            ("iterations", &flags.iterations),
            ("ablation", &flags.ablation),
            ("correlation", &flags.correlation),
            ("seed", &flags.seed),
            ("epochs", &flags.epochs),
            ("batch_size", &flags.batch_size),
            ("lr0", &flags.lr0),
            ("decay_p", &flags.decay_p),
            ("beta1", &flags.beta1),
            ("beta2", &flags.beta2),
            ("epsilon", &flags.epsilon),
            ("patience", &flags.patience),
            ("clip_norm", &flags.clip_norm),
            ("intent_weight", &flags.intent_weight),
            ("slot_weight", &flags.slot_weight),
            ("dropout", &flags.dropout),
            ("embedding_dim", &flags.embedding_dim),
            ("hidden_dim", &flags.hidden_dim),
            ("attention_dim", &flags.attention_dim),
            ("id_proj_dim", &flags.id_proj_dim),
        ];
        for (key, value) in pairs {
            if let Some(v) = value {
                train.set(key, v)?;
            }
        }
        train.validate()?;
        Ok(Self {
            data: data.ok_or_else(|| Error::Config("no dataset given (--data or `data =`)".into()))?,
            out: out.ok_or_else(|| Error::Config("no output directory given (--out or `out =`)".into()))?,
            train,
        })
    }

    /// The effective config in the same `key = value` form the loader reads.
    pub fn to_kv(&self) -> String {
        format!(
            "data = {}\nout = {}\n{}",
            self.data.display(),
            self.out.display(),
            self.train.to_kv()
        )
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::Train(flags) => cmd_train(&RunConfig::resolve(&flags)?).map(|_| ()),
        Command::Eval(args) => cmd_eval(&args.checkpoint, &args.data, &args.out).map(|_| ()),
        Command::Predict(args) => cmd_predict(&args.checkpoint, &args.input, &args.out),
        Command::Ablate(args) => cmd_ablate(&args).map(|_| ()),
    }
}

fn write(path: &Path, text: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn log_epoch(m: &EpochMetrics) {
    eprintln!(
        "epoch {:>3}  loss {:.4}  valid slot_f1 {:.4}  intent {:.4}  sentence {:.4}{}",
        m.epoch,
        m.train_loss,
        m.valid.slot.f1,
        m.valid.intent_accuracy,
        m.valid.sentence_accuracy,
        if m.improved { "  *" } else { "" }
    );
}

#[derive(Serialize)]
struct MetricsFile<'a> {
    sizes: SplitSizes,
    parameters: usize,
    best_epoch: usize,
    stopped_early: bool,
    epochs: &'a [EpochMetrics],
    test: Option<&'a EvalReport>,
}

/// Plain-text run report: split sizes, one row per epoch, and test metrics.
pub fn render_report(outcome: &TrainOutcome, test: Option<&EvalReport>) -> String {
    let ck = &outcome.checkpoint;
    let mut s = String::new();
    let _ = writeln!(s, "train_examples = {}", outcome.sizes.train);
    let _ = writeln!(s, "valid_examples = {}", outcome.sizes.valid);
    match outcome.sizes.test {
        Some(n) => _ = writeln!(s, "test_examples = {n}"),
        None => _ = writeln!(s, "test_examples = absent"),
    }
    let _ = writeln!(s, "parameters = {}", ck.model.parameter_count());
    let _ = writeln!(s, "best_epoch = {}", ck.best_epoch);
    let _ = writeln!(s, "stopped_early = {}", outcome.stopped_early);
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "{:>5} {:>7} {:>10} {:>10} {:>8} {:>8} {:>8} selected",
        "epoch", "steps", "lr", "loss", "slot_f1", "intent", "sentence"
    );
    for m in &ck.history {
        let _ = writeln!(
            s,
            "{:>5} {:>7} {:>10.6} {:>10.6} {:>8.4} {:>8.4} {:>8.4} {}",
            m.epoch,
            m.steps,
            m.learning_rate,
            m.train_loss,
            m.valid.slot.f1,
            m.valid.intent_accuracy,
            m.valid.sentence_accuracy,
            if m.epoch == ck.best_epoch { "*" } else { "" }
        );
    }
    if let Some(t) = test {
        let _ = writeln!(s, "\n[test]");
        s.push_str(&t.to_kv());
    }
    s
}

/// Trains per `config`, writing the run directory. Returns the outcome and
/// the selected model's test metrics when a test split exists.
pub fn cmd_train(config: &RunConfig) -> Result<(TrainOutcome, Option<EvalReport>)> {
    let dataset = Dataset::load(&config.data)?;
    train_into(&dataset, config)
}

fn train_into(dataset: &Dataset, config: &RunConfig) -> Result<(TrainOutcome, Option<EvalReport>)> {
    create_dir(&config.out)?;
    write(&config.out.join(CONFIG_FILE), config.to_kv())?;
    let outcome = train_dataset(dataset, &config.train, log_epoch)?;
    let ck = &outcome.checkpoint;
    let test = match &dataset.test {
        Some(examples) => Some(evaluate(&ck.model, &ck.vocabularies, examples)?.report),
        None => None,
    };
    ck.save(config.out.join(CHECKPOINT_FILE))?;
    write(&config.out.join(REPORT_FILE), render_report(&outcome, test.as_ref()))?;
    let metrics = MetricsFile {
        sizes: outcome.sizes,
        parameters: ck.model.parameter_count(),
        best_epoch: ck.best_epoch,
        stopped_early: outcome.stopped_early,
        epochs: &ck.history,
        test: test.as_ref(),
    };
    let json = serde_json::to_string_pretty(&metrics).map_err(|e| Error::Checkpoint(e.to_string()))?;
    write(&config.out.join(METRICS_FILE), json + "\n")?;
    if let Some(t) = &test {
        eprintln!("test: slot_f1 {:.4}  intent {:.4}  sentence {:.4}", t.slot.f1, t.intent_accuracy, t.sentence_accuracy);
    }
    Ok((outcome, test))
}

/// Scores `checkpoint` on the split directory `split`, printing the report and writing it under `out`.
pub fn cmd_eval(checkpoint: &Path, split: &Path, out: &Path) -> Result<EvalReport> {
    let ck = Checkpoint::load(checkpoint)?;
    let examples = load_split(split)?;
    let report = evaluate(&ck.model, &ck.vocabularies, &examples)?.report;
    create_dir(out)?;
    let text = report.to_kv();
    write(&out.join(EVAL_FILE), &text)?;
    print!("{text}");
    Ok(report)
}

/// Tags every line of `input`, writing `seq.out` and `label` under `out`.
pub fn cmd_predict(checkpoint: &Path, input: &Path, out: &Path) -> Result<()> {
    let ck = Checkpoint::load(checkpoint)?;
    let utterances = load_token_lines(input)?;
    let (intents, tags) = predict_labels(&ck.model, &ck.vocabularies, &utterances)?;
    create_dir(out)?;
    let lines = |rows: Vec<String>| rows.into_iter().map(|r| r + "\n").collect::<String>();
    write(&out.join("seq.out"), lines(tags.into_iter().map(|t| t.join(" ")).collect()))?;
    write(&out.join("label"), lines(intents))?;
    Ok(())
}

/// One row of the ablation table: means over seeds of test metrics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub name: String,
    pub ablation: Ablation,
    pub iterations: usize,
    pub seeds: Vec<u64>,
    pub slot_f1: f64,
    pub intent_accuracy: f64,
    pub sentence_accuracy: f64,
}

fn parse_list<T: std::str::FromStr>(what: &str, text: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(|s| s.trim().parse().map_err(|_| Error::Config(format!("bad {what} entry {s:?}"))))
        .collect()
}

/// `(ablation, iterations)` pairs of the sweep, without duplicates, in run order.
pub fn sweep_plan(args: &AblateArgs, base: &TrainConfig) -> Result<Vec<(Ablation, usize)>> {
    let mut plan: Vec<(Ablation, usize)> = Vec::new();
    if matches!(args.sweep, Sweep::Ablation | Sweep::Both) {
        for a in args.ablations.split(',') {
            let a: Ablation = a.trim().parse()?;
            plan.push((a, base.iterations));
        }
    }
    if matches!(args.sweep, Sweep::Iterations | Sweep::Both) {
        for k in parse_list::<usize>("iteration count", &args.iteration_counts)? {
            if k == 0 {
                return Err(Error::Config("iteration counts must be at least 1".into()));
            }
            plan.push((Ablation::Full, k));
        }
    }
    let mut seen = Vec::new();
    plan.retain(|p| {
        let fresh = !seen.contains(p);
        seen.push(*p);
        fresh
    });
    Ok(plan)
}

pub fn cmd_ablate(args: &AblateArgs) -> Result<Vec<SweepRow>> {
    let base = RunConfig::resolve(&args.run)?;
    if args.seeds == 0 {
        return Err(Error::Config("--seeds must be at least 1".into()));
    }
    let plan = sweep_plan(args, &base.train)?;
    let dataset = Dataset::load(&base.data)?;
    if dataset.test.is_none() {
        return Err(CorpusError::MissingSplit(base.data.join("test")).into());
    }
    create_dir(&base.out)?;
    let mut rows = Vec::new();
    for (ablation, iterations) in plan {
        let name = format!("{ablation}-it{iterations}");
        let seeds: Vec<u64> = (0..args.seeds).map(|k| base.train.seed + k).collect();
        let mut sums = [0.0; 3];
        for &seed in &seeds {
            let run = RunConfig {
                data: base.data.clone(),
                out: base.out.join(&name).join(format!("seed-{seed}")),
                train: TrainConfig {
                    ablation,
                    iterations,
                    seed,
                    ..base.train
                },
            };
            eprintln!("== {name} seed {seed}");
            let (_, test) = train_into(&dataset, &run)?;
            let t = test.expect("test split checked above");
            sums[0] += t.slot.f1;
            sums[1] += t.intent_accuracy;
            sums[2] += t.sentence_accuracy;
        }
        let n = seeds.len() as f64;
        rows.push(SweepRow {
            name,
            ablation,
            iterations,
            seeds,
            slot_f1: sums[0] / n,
            intent_accuracy: sums[1] / n,
            sentence_accuracy: sums[2] / n,
        });
    }
    let table = render_table(&rows);
    write(&base.out.join(TABLE_FILE), &table)?;
    print!("{table}");
    Ok(rows)
}

/// Tab-separated comparative table of seed-mean test metrics.
pub fn render_table(rows: &[SweepRow]) -> String {
    let mut s = String::from("run\tablation\titerations\tseeds\tslot_f1\tintent_accuracy\tsentence_accuracy\n");
    for r in rows {
        let seeds: Vec<String> = r.seeds.iter().map(u64::to_string).collect();
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}",
            r.name,
            r.ablation,
            r.iterations,
            seeds.join(","),
            r.slot_f1,
            r.intent_accuracy,
            r.sentence_accuracy
        );
    }
    s
}
