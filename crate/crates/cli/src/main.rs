//! `adapipe` command-line interface.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 checksum error.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adapipe::conllu::{parse_conllu, TreebankSentence};
use adapipe::encoder::{pretrain, BaseEncoder, EncoderConfig, PretrainConfig};
use adapipe::ner::{read_ner_corpus, NerSentence};
use adapipe::pipeline::package::{read_manifest, ENCODER_FILE, VOCAB_FILE};
use adapipe::pipeline::{
    resolve_package_dir, save_package, train_bundles, ComponentKind, Input, LanguageData, Pipeline, PipelineError,
    TrainMode, TrainOptions,
};
use adapipe::scorer::evaluate;
use adapipe::subword::{train_vocab, SubwordVocab};
use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "adapipe", version, about = "Multilingual pipeline over one shared encoder")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train components for one or more languages into a package.
    Train(TrainArgs),
    /// Score a package against a gold treebank.
    Eval(EvalArgs),
    /// Annotate raw or pretokenized text.
    Annotate(AnnotateArgs),
    /// Package utilities.
    Package {
        #[command(subcommand)]
        command: PackageCommand,
    },
    /// Build a vocabulary and pretrain a base encoder on raw text.
    Pretrain(PretrainArgs),
    /// Write a synthetic treebank, NER file and raw text for a toy language.
    Toy(ToyArgs),
}

#[derive(Subcommand)]
enum PackageCommand {
    /// Print the manifest, sizes and checksums.
    Inspect { dir: String },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Adapters,
    Multilingual,
    NoAdapters,
}

impl From<ModeArg> for TrainMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Adapters => TrainMode::Adapters,
            ModeArg::Multilingual => TrainMode::Multilingual,
            ModeArg::NoAdapters => TrainMode::NoAdapters,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ComponentArg {
    Splitter,
    Mwt,
    Tagparse,
    Lemma,
    Ner,
    All,
}

#[derive(clap::Args)]
struct TrainArgs {
    #[arg(long, value_enum, default_value = "adapters")]
    mode: ModeArg,
    #[arg(long, value_enum, num_args = 1.., default_values = ["all"])]
    component: Vec<ComponentArg>,
    /// CoNLL-U training file, one per `--lang`.
    #[arg(long, num_args = 1.., required = true)]
    treebank: Vec<PathBuf>,
    #[arg(long, num_args = 1.., required = true)]
    lang: Vec<String>,
    /// `token<TAB>tag` NER file per `--lang`; `-` for none.
    #[arg(long, num_args = 1..)]
    ner: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Directory with `encoder.bin` and `vocab.txt` (from `pretrain`).
    /// Defaults to the encoder of an existing package in `--out`, else a
    /// freshly initialized one.
    #[arg(long)]
    base: Option<PathBuf>,
    /// Vocabulary size when no base encoder is given.
    #[arg(long, default_value_t = 12000)]
    vocab_size: usize,
    /// Overrides the epoch count of every component.
    #[arg(long)]
    epochs: Option<usize>,
    /// Writes the training log as JSON lines.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(clap::Args)]
struct EvalArgs {
    #[arg(long)]
    package: String,
    #[arg(long)]
    lang: String,
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    ner: Option<PathBuf>,
    /// Tag and parse the gold words instead of running from raw text.
    #[arg(long)]
    gold_words: bool,
    #[arg(long)]
    json: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Conllu,
}

#[derive(clap::Args)]
struct AnnotateArgs {
    #[arg(long)]
    package: String,
    #[arg(long)]
    lang: String,
    /// One sentence per line, tokens separated by whitespace.
    #[arg(long)]
    pretokenized: bool,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Reads standard input when absent.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Prints per-component throughput to standard error.
    #[arg(long)]
    timing: bool,
}

#[derive(clap::Args)]
struct PretrainArgs {
    /// Raw text files, one training line per line.
    #[arg(long, num_args = 1.., required = true)]
    corpus: Vec<PathBuf>,
    #[arg(long, default_value_t = 12000)]
    vocab_size: usize,
    #[arg(long, default_value_t = 300)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct ToyArgs {
    #[arg(long)]
    lang: String,
    #[arg(long, default_value_t = 50)]
    sentences: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    PipelineError::Usage(msg.into()).into()
}

fn data(msg: impl Into<String>) -> anyhow::Error {
    PipelineError::Data(msg.into()).into()
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| {
        PipelineError::Io {
            path: path.to_path_buf(),
            source,
        }
        .into()
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| {
        PipelineError::Io {
            path: path.to_path_buf(),
            source,
        }
        .into()
    })
}

fn read_treebank(path: &Path) -> Result<Vec<TreebankSentence>> {
    parse_conllu(&read_text(path)?).map_err(|e| data(format!("{}: {}", path.display(), e)))
}

fn read_ner(path: &Path) -> Result<Vec<NerSentence>> {
    read_ner_corpus(&read_text(path)?).map_err(|e| data(format!("{}: {}", path.display(), e)))
}

fn read_base(dir: &Path) -> Result<(BaseEncoder, SubwordVocab)> {
    let path = dir.join(ENCODER_FILE);
    let bytes = fs::read(&path).map_err(|source| PipelineError::Io {
        path: path.clone(),
        source,
    })?;
    let base = BaseEncoder::from_bytes(&bytes).map_err(|e| PipelineError::Format {
        path,
        message: e.to_string(),
    })?;
    let vocab = SubwordVocab::from_file_string(&read_text(&dir.join(VOCAB_FILE))?).map_err(PipelineError::from)?;
    Ok((base, vocab))
}

fn components(args: &[ComponentArg]) -> Vec<ComponentKind> {
    if args.contains(&ComponentArg::All) {
        return ComponentKind::ALL.to_vec();
    }
    let mut out: Vec<ComponentKind> = args
        .iter()
        .map(|c| match c {
            ComponentArg::Splitter => ComponentKind::Splitter,
            ComponentArg::Mwt => ComponentKind::Mwt,
            ComponentArg::Tagparse => ComponentKind::Tagparse,
            ComponentArg::Lemma => ComponentKind::Lemma,
            ComponentArg::Ner | ComponentArg::All => ComponentKind::Ner,
        })
        .collect();
    out.sort();
    out.dedup();
    out
}

fn train(args: TrainArgs) -> Result<()> {
    if args.treebank.len() != args.lang.len() {
        return Err(usage("give one --treebank per --lang"));
    }
    if !args.ner.is_empty() && args.ner.len() != args.lang.len() {
        return Err(usage("give one --ner per --lang (use - for none)"));
    }
    let mut data = Vec::new();
    for (i, (lang, tb)) in args.lang.iter().zip(&args.treebank).enumerate() {
        let ner = match args.ner.get(i).map(String::as_str) {
            None | Some("-") => None,
            Some(p) => Some(read_ner(Path::new(p))?),
        };
        data.push(LanguageData {
            language: lang.clone(),
            treebank: read_treebank(tb)?,
            ner,
        });
    }
    let (base, vocab) = match &args.base {
        Some(dir) => read_base(dir)?,
        None if args.out.join(ENCODER_FILE).is_file() => read_base(&args.out)?,
        None => {
            let text: String = data
                .iter()
                .flat_map(|d| &d.treebank)
                .map(|s| s.text() + "\n")
                .collect();
            let vocab = train_vocab(&text, args.vocab_size, args.seed).map_err(PipelineError::from)?;
            let base = BaseEncoder::new(EncoderConfig::with_vocab(vocab.len()), args.seed);
            (base, vocab)
        }
    };
    let mut options = TrainOptions::with_mode(args.mode.into());
    options.components = components(&args.component);
    options.seed = args.seed;
    if let Some(e) = args.epochs {
        options.splitter.epochs = e;
        options.tagparse.epochs = e;
        options.ner.epochs = e;
        options.mwt.train.epochs = e;
        options.lemma.train.epochs = e;
    }
    let checksum = base.checksum();
    let (bundles, log) = train_bundles(&base, &vocab, &data, &options)?;
    if base.checksum() != checksum {
        return Err(PipelineError::Checksum(args.out.join(ENCODER_FILE)).into());
    }
    let manifest = save_package(&args.out, &base, &vocab, &bundles)?;
    if let Some(path) = &args.log {
        write_text(path, &log.to_json_lines())?;
    }
    for e in &log.entries {
        eprintln!(
            "{:<8} {:<9} {:>5} examples {:>8.1}s  final loss {:.4}",
            e.language,
            e.component,
            e.examples,
            e.seconds,
            e.epoch_losses.last().copied().unwrap_or(f64::NAN)
        );
    }
    for l in &manifest.languages {
        println!("{}: {} ({} bytes)", l.code, l.bundle, l.bytes);
    }
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let dir = resolve_package_dir(&args.package);
    let (mut p, _) = Pipeline::load(&dir, Some(std::slice::from_ref(&args.lang)))?;
    let gold = read_treebank(&args.gold)?;
    let ner = args.ner.as_deref().map(read_ner).transpose()?;
    let report = if args.gold_words {
        let sys = p.tagparse_gold_words(&args.lang, &gold)?;
        let mut r = evaluate(&gold, &sys).map_err(PipelineError::from)?;
        if let Some(ner) = &ner {
            r.ner = p.evaluate(&args.lang, &gold, Some(ner))?.ner;
        }
        r
    } else {
        p.evaluate(&args.lang, &gold, ner.as_deref())?
    };
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report.to_json())?);
    } else {
        print!("{}", report);
    }
    Ok(())
}

fn annotate(args: AnnotateArgs) -> Result<()> {
    let dir = resolve_package_dir(&args.package);
    let (mut p, _) = Pipeline::load(&dir, Some(std::slice::from_ref(&args.lang)))?;
    let text = match &args.input {
        Some(path) => read_text(path)?,
        None => {
            let mut s = String::new();
            std::io::stdin().read_to_string(&mut s).context("reading standard input")?;
            s
        }
    };
    let sentences: Vec<Vec<String>>;
    let input = if args.pretokenized {
        sentences = text
            .lines()
            .map(|l| l.split_whitespace().map(str::to_string).collect::<Vec<_>>())
            .filter(|s| !s.is_empty())
            .collect();
        Input::Pretokenized(&sentences)
    } else {
        Input::Raw(&text)
    };
    let (doc, timing) = p.annotate_with_timing(&args.lang, input)?;
    for n in &doc.notices {
        eprintln!("note: {}", n);
    }
    let out = match args.format {
        Format::Json => serde_json::to_string_pretty(&doc)? + "\n",
        Format::Conllu => doc.to_conllu().map_err(|e| data(e.to_string()))?,
    };
    std::io::stdout().write_all(out.as_bytes())?;
    if args.timing {
        eprint!("{}", timing);
    }
    Ok(())
}

fn inspect(dir: &str) -> Result<()> {
    let dir = resolve_package_dir(dir);
    let m = read_manifest(&dir)?;
    println!("package     {}", dir.display());
    println!("format      {}", m.format_version);
    println!(
        "encoder     {} {} bytes sha256 {}",
        m.encoder_file, m.encoder_bytes, m.encoder_checksum
    );
    let c = &m.encoder_config;
    println!(
        "            dim {} layers {} heads {} ffn {} max_len {} vocab {}",
        c.dim, c.layers, c.heads, c.ffn_dim, c.max_len, c.vocab_size
    );
    println!("vocab       {} sha256 {}", m.vocab_file, m.vocab_checksum);
    println!();
    println!(
        "{:<6} {:<13} {:>10} {:>8}  {:<64}  components",
        "lang", "mode", "bytes", "% enc", "sha256"
    );
    for l in &m.languages {
        let comps: Vec<&str> = l.components.iter().map(|c| c.name()).collect();
        println!(
            "{:<6} {:<13} {:>10} {:>7.2}%  {:<64}  {}",
            l.code,
            l.mode.name(),
            l.bytes,
            100.0 * l.bytes as f64 / m.encoder_bytes as f64,
            l.checksum,
            comps.join(",")
        );
    }
    let total: u64 = m.encoder_bytes + m.languages.iter().map(|l| l.bytes).sum::<u64>();
    println!();
    println!("total       {} bytes for {} languages", total, m.languages.len());
    Ok(())
}

fn pretrain_cmd(args: PretrainArgs) -> Result<()> {
    let mut text = String::new();
    for p in &args.corpus {
        text.push_str(&read_text(p)?);
        text.push('\n');
    }
    let vocab = train_vocab(&text, args.vocab_size, args.seed).map_err(PipelineError::from)?;
    let mut base = BaseEncoder::new(EncoderConfig::with_vocab(vocab.len()), args.seed);
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let config = PretrainConfig {
        steps: args.steps,
        seed: args.seed,
        ..PretrainConfig::default()
    };
    let losses = pretrain(&mut base, &vocab, &lines, &config).map_err(PipelineError::from)?;
    fs::create_dir_all(&args.out).map_err(|source| PipelineError::Io {
        path: args.out.clone(),
        source,
    })?;
    let bytes = base.to_bytes();
    fs::write(args.out.join(ENCODER_FILE), &bytes).map_err(|source| PipelineError::Io {
        path: args.out.join(ENCODER_FILE),
        source,
    })?;
    write_text(&args.out.join(VOCAB_FILE), &vocab.to_file_string())?;
    if let (Some(first), Some(last)) = (losses.first(), losses.last()) {
        eprintln!("pretraining loss {:.4} -> {:.4} over {} steps", first, last, losses.len());
    }
    println!("{}: {} pieces, {} parameters", args.out.display(), vocab.len(), base.num_params());
    Ok(())
}

fn toy(args: ToyArgs) -> Result<()> {
    let lang = adapipe_toydata::language(&args.lang).ok_or_else(|| {
        usage(format!(
            "unknown toy language `{}` (one of {})",
            args.lang,
            adapipe_toydata::LANGUAGE_CODES.join(", ")
        ))
    })?;
    let corpus = adapipe_toydata::generate(&lang, args.sentences, args.seed);
    fs::create_dir_all(&args.out).map_err(|source| PipelineError::Io {
        path: args.out.clone(),
        source,
    })?;
    let stem = &args.lang;
    write_text(&args.out.join(format!("{stem}.conllu")), &corpus.conllu)?;
    write_text(&args.out.join(format!("{stem}.ner.tsv")), &corpus.ner_bio)?;
    write_text(&args.out.join(format!("{stem}.txt")), &(corpus.raw + "\n"))?;
    println!("wrote {stem}.conllu, {stem}.ner.tsv, {stem}.txt to {}", args.out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Annotate(a) => annotate(a),
        Command::Package {
            command: PackageCommand::Inspect { dir },
        } => inspect(&dir),
        Command::Pretrain(a) => pretrain_cmd(a),
        Command::Toy(a) => toy(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e);
            let code = e.downcast_ref::<PipelineError>().map_or(2, PipelineError::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
