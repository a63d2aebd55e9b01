use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use durembed::alignment::{parse_alignment_with, write_alignment, ParseOptions};
use durembed::embedder::{self, ModelConfig, TrainConfig};
use durembed::eval::{self, NamedScoreSet, DEFAULT_MAX_NONTARGET_PER_SPEAKER};
use durembed::synth::{generate_corpus, sample_speakers, SynthConfig};
use durembed::{gradcheck, metric, rng, Corpus, Error, PhonemeInventory};
use serde::Serialize;
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "durembed", version, about = "Speaker verification from phoneme durations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic alignment corpus.
    Synth(SynthArgs),
    /// Train the duration-embedding model.
    Train(TrainArgs),
    /// Build a verification trial list.
    Trials(TrialsArgs),
    /// Score trials with the metric attack or a trained model.
    Score(ScoreArgs),
    /// Compute EER with confidence intervals from score files.
    Eval(EvalArgs),
    /// Compare analytic and finite-difference gradients.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct CorpusArgs {
    /// Alignment file (`speaker utterance phoneme frames` per line).
    #[arg(long)]
    align: PathBuf,
    /// Inventory file, one label per line.
    #[arg(long)]
    inventory: PathBuf,
    /// Comma-separated labels to drop while parsing, e.g. SIL,SPN.
    #[arg(long, value_delimiter = ',')]
    exclude: Vec<String>,
}

#[derive(Args)]
struct SynthArgs {
    /// TOML corpus configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 128)]
    proj_dim: usize,
    #[arg(long, default_value_t = 128)]
    channels: usize,
    #[arg(long, default_value_t = 128)]
    embed_dim: usize,
    #[arg(long, default_value_t = 64)]
    attention_hidden: usize,
    #[arg(long, default_value_t = 3)]
    kernel_width: usize,
    /// One dilation per block.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    dilations: Vec<usize>,
    /// Model file to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrialsArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long)]
    n_enroll: usize,
    #[arg(long)]
    n_trial: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_MAX_NONTARGET_PER_SPEAKER)]
    max_nontarget: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScoreArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long)]
    trials: PathBuf,
    /// `metric`, or the path of a trained model file.
    #[arg(long)]
    model: String,
    /// Data condition recorded in the score file (defaults to the alignment file stem).
    #[arg(long)]
    condition: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Score files written by `score`.
    #[arg(required = true)]
    scores: Vec<PathBuf>,
    #[arg(long, default_value_t = 0.95)]
    confidence: f64,
    /// Report file, one JSON object per table cell.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    draws: usize,
    #[arg(long, default_value_t = 5)]
    n_classes: usize,
    #[arg(long, default_value_t = 4)]
    proj_dim: usize,
    #[arg(long, default_value_t = 4)]
    channels: usize,
    #[arg(long, default_value_t = 4)]
    embed_dim: usize,
    #[arg(long, default_value_t = 3)]
    speakers: usize,
    /// Perturb the analytic gradient before comparing (debugging aid).
    #[arg(long)]
    corrupt: bool,
}

/// Written next to every output.
#[derive(Serialize)]
struct RunManifest {
    tool: &'static str,
    version: &'static str,
    subcommand: &'static str,
    config: Value,
    seeds: BTreeMap<&'static str, u64>,
    inputs: Vec<String>,
    outputs: Vec<String>,
}

impl RunManifest {
    fn new(subcommand: &'static str, config: Value) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            subcommand,
            config,
            seeds: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    fn write(&self, path: &Path) -> Result<(), Error> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        fs::write(path, text + "\n")?;
        Ok(())
    }
}

fn display(path: &Path) -> String {
    path.display().to_string()
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn create(path: &Path) -> Result<BufWriter<File>, Error> {
    Ok(BufWriter::new(File::create(path)?))
}

fn open(path: &Path) -> Result<BufReader<File>, Error> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn load_corpus(args: &CorpusArgs) -> Result<Corpus, Error> {
    let inventory = PhonemeInventory::load(open(&args.inventory)?)?;
    let options = ParseOptions {
        exclude: args.exclude.iter().cloned().collect::<HashSet<_>>(),
    };
    parse_alignment_with(open(&args.align)?, &inventory, &options)
}

fn corpus_inputs(args: &CorpusArgs) -> Vec<String> {
    vec![display(&args.align), display(&args.inventory)]
}

fn cmd_synth(args: &SynthArgs) -> Result<(), Error> {
    let text = fs::read_to_string(&args.config)?;
    let config = SynthConfig::from_toml(&text)?;
    let base = args.config.parent().unwrap_or(Path::new("."));
    let inventory = config.load_inventory(base)?;
    let profiles = sample_speakers(&config, inventory.len(), &mut rng::stream(config.seed, "speakers"))?;
    let corpus = generate_corpus(&profiles, &config, &inventory, &mut rng::stream(config.seed, "corpus"))?;

    fs::create_dir_all(&args.out)?;
    let align = args.out.join("alignment.txt");
    let inv = args.out.join("inventory.txt");
    let prof = args.out.join("profiles.json");
    let mut sink = create(&align)?;
    write_alignment(&corpus, &mut sink)?;
    sink.flush()?;
    fs::write(&inv, inventory.to_text())?;
    let profiles_json = serde_json::to_string(&profiles).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    fs::write(&prof, profiles_json + "\n")?;

    let mut manifest = RunManifest::new("synth", serde_json::to_value(&config).unwrap_or(Value::Null));
    manifest.seeds.insert("seed", config.seed);
    manifest.inputs.push(display(&args.config));
    manifest.outputs = vec![display(&align), display(&inv), display(&prof)];
    manifest.write(&args.out.join("manifest.json"))?;
    eprintln!(
        "wrote {} utterances from {} speakers to {}",
        corpus.len(),
        corpus.n_speakers(),
        args.out.display()
    );
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> Result<(), Error> {
    let corpus = load_corpus(&args.corpus)?;
    let config = ModelConfig {
        n_classes: corpus.inventory().len(),
        proj_dim: args.proj_dim,
        encoder_channels: args.channels,
        n_blocks: args.dilations.len(),
        dilations: args.dilations.clone(),
        kernel_width: args.kernel_width,
        embed_dim: args.embed_dim,
        n_speakers: corpus.n_speakers(),
        attention_hidden: args.attention_hidden,
    };
    let hyper = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch_size,
        learning_rate: args.lr,
        seed: args.seed,
        ..TrainConfig::default()
    };
    if corpus.n_speakers() < 2 {
        return Err(Error::InsufficientSpeakers(corpus.n_speakers()));
    }
    let (params, log) = embedder::train_with_callback(&corpus, &config, &hyper, |epoch, loss| {
        eprintln!("epoch {:>3}  loss {loss:.4}", epoch + 1);
    })?;

    let mut sink = create(&args.out)?;
    embedder::save_model(&params, &mut sink)?;
    sink.flush()?;
    let log_path = sidecar(&args.out, ".log");
    fs::write(&log_path, log.to_text())?;

    let mut manifest = RunManifest::new(
        "train",
        json!({ "model": config, "training": hyper, "exclude": args.corpus.exclude }),
    );
    manifest.seeds.insert("seed", args.seed);
    manifest.inputs = corpus_inputs(&args.corpus);
    manifest.outputs = vec![display(&args.out), display(&log_path)];
    manifest.write(&sidecar(&args.out, ".manifest.json"))
}

fn cmd_trials(args: &TrialsArgs) -> Result<(), Error> {
    let corpus = load_corpus(&args.corpus)?;
    let list = eval::build_trials(
        &corpus,
        args.n_enroll,
        args.n_trial,
        &mut rng::stream(args.seed, "trials"),
        args.seed,
        args.max_nontarget,
    )?;
    let mut sink = create(&args.out)?;
    eval::write_trials(&list, &mut sink)?;
    sink.flush()?;
    if list.skipped_speakers > 0 {
        eprintln!(
            "skipped {} speakers with fewer than {} utterances",
            list.skipped_speakers,
            args.n_enroll + args.n_trial
        );
    }
    eprintln!("{} target, {} nontarget trials", list.n_targets(), list.n_nontargets());

    let mut manifest = RunManifest::new(
        "trials",
        json!({
            "n_enroll": args.n_enroll,
            "n_trial": args.n_trial,
            "max_nontarget": args.max_nontarget,
            "exclude": args.corpus.exclude,
        }),
    );
    manifest.seeds.insert("seed", args.seed);
    manifest.inputs = corpus_inputs(&args.corpus);
    manifest.outputs = vec![display(&args.out)];
    manifest.write(&sidecar(&args.out, ".manifest.json"))
}

fn cmd_score(args: &ScoreArgs) -> Result<(), Error> {
    let corpus = load_corpus(&args.corpus)?;
    let trials = eval::parse_trials(open(&args.trials)?)?;
    let scores = if args.model == metric::MODEL_NAME {
        metric::score_trials_metric(&corpus, &trials)?
    } else {
        let params = embedder::load_model(&mut open(Path::new(&args.model))?)?;
        if params.config.n_classes != corpus.inventory().len() {
            return Err(Error::DimensionMismatch {
                left: params.config.n_classes,
                right: corpus.inventory().len(),
            });
        }
        embedder::score_trials_embedding(&params, &corpus, &trials)?
    };
    let condition = args.condition.clone().unwrap_or_else(|| {
        args.corpus
            .align
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "data".into())
    });
    if condition.is_empty() || condition.contains(char::is_whitespace) {
        return Err(Error::InvalidConfig("condition must be a single token".into()));
    }
    let mut sink = create(&args.out)?;
    writeln!(sink, "# condition={condition}")?;
    eval::write_scores(&scores, &mut sink)?;
    sink.flush()?;

    let mut manifest = RunManifest::new(
        "score",
        json!({ "model": args.model, "condition": condition, "exclude": args.corpus.exclude }),
    );
    manifest.inputs = corpus_inputs(&args.corpus);
    manifest.inputs.push(display(&args.trials));
    if args.model != metric::MODEL_NAME {
        manifest.inputs.push(args.model.clone());
    }
    manifest.outputs = vec![display(&args.out)];
    manifest.write(&sidecar(&args.out, ".manifest.json"))
}

fn score_condition(text: &str) -> Option<String> {
    text.lines()
        .filter_map(|l| l.trim_start().strip_prefix('#'))
        .flat_map(str::split_whitespace)
        .find_map(|tok| tok.strip_prefix("condition=").map(str::to_string))
}

fn cmd_eval(args: &EvalArgs) -> Result<(), Error> {
    if !(args.confidence > 0.0 && args.confidence < 1.0) {
        return Err(Error::InvalidConfig("confidence must be in (0, 1)".into()));
    }
    let mut sets = Vec::with_capacity(args.scores.len());
    for path in &args.scores {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
        let scores = eval::parse_scores(text.as_bytes())?;
        let condition = score_condition(&text).unwrap_or_else(|| {
            path.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default()
        });
        sets.push(NamedScoreSet { condition, scores });
    }
    let reports = eval::evaluate(&sets, args.confidence)?;
    let mut sink = create(&args.out)?;
    eval::write_report(&reports, &mut sink)?;
    sink.flush()?;
    print!("{}", eval::render_table(&reports));

    let mut manifest = RunManifest::new("eval", json!({ "confidence": args.confidence }));
    manifest.inputs = args.scores.iter().map(|p| display(p)).collect();
    manifest.outputs = vec![display(&args.out)];
    manifest.write(&sidecar(&args.out, ".manifest.json"))
}

fn cmd_gradcheck(args: &GradcheckArgs) -> Result<bool, Error> {
    let config = ModelConfig {
        proj_dim: args.proj_dim,
        encoder_channels: args.channels,
        embed_dim: args.embed_dim,
        attention_hidden: args.channels,
        ..ModelConfig::new(args.n_classes, args.speakers)
    };
    let report = gradcheck::run(&config, args.seed, args.draws, args.corrupt)?;
    println!(
        "draws={} params={} max_rel_error={:.3e} tolerance={:.0e} {}",
        report.draws,
        report.n_params,
        report.max_rel_error,
        report.tolerance,
        if report.passed() { "PASS" } else { "FAIL" }
    );
    Ok(report.passed())
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synth(a) => cmd_synth(a).map(|_| true),
        Command::Train(a) => cmd_train(a).map(|_| true),
        Command::Trials(a) => cmd_trials(a).map(|_| true),
        Command::Score(a) => cmd_score(a).map(|_| true),
        Command::Eval(a) => cmd_eval(a).map(|_| true),
        Command::Gradcheck(a) => cmd_gradcheck(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
