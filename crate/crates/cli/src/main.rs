mod manifest;

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use draftforge_core::checker::{CheckerConfig, CHECKER_URL_ENV};
use draftforge_core::config::{BackendSpec, Config, ConfigError};
use draftforge_core::eval::{focus_experiment, synthetic_corpus, FocusReport, FOCUS_K};
use draftforge_core::generate::{BuiltinReviser, CopyReviser, HttpReviser, PipeReviser, Reviser};
use draftforge_core::lm::NGramLanguageModel;
use draftforge_core::revision::machine_only_revise;
use draftforge_core::synthesis::{
    attach_marks, format_paper, paper_rng, parse_pair_line, parse_paper_line, synth_noise, MarkBranch,
};
use draftforge_server::{serve, CompletionSettings, Engine, PATH};
use serde_json::json;
use thiserror::Error;

use manifest::Manifest;

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0:#}")]
    Env(#[from] anyhow::Error),
}

type Result<T> = std::result::Result<T, CliError>;

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Env(e.into())
    }
}

#[derive(Parser)]
#[command(name = "draftforge", version, about = "Revision and completion assistant for scientific drafts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// `key = value` config file; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Trained language model file.
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    /// builtin, copy, external:<http-url> or external:pipe:<command>
    #[arg(long, global = true)]
    backend: Option<String>,
    #[arg(long, global = true)]
    checker_url: Option<String>,
    /// Text used to train the language model when no --model is given.
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Any config key, e.g. --set beam_size=5. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the editing protocol server.
    Serve {
        #[arg(long)]
        port: Option<u16>,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[command(flatten)]
        common: Common,
    },
    /// Train an n-gram language model from --corpus.
    Train {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Build revision training data from draft/revision pairs or clean sentences.
    Synth {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, value_enum, default_value_t = SynthMode::Marks)]
        mode: SynthMode,
        #[command(flatten)]
        common: Common,
    },
    /// Format JSON-lines papers into the completion training layout.
    Corpus {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run the span-focus experiment and write JSON and text reports.
    Eval {
        /// One sentence per line.
        #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
        input: Option<PathBuf>,
        /// Generate this many template sentences instead of reading --input.
        #[arg(long)]
        synthetic: Option<usize>,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = FOCUS_K)]
        k: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Revise every sentence of a document without interaction.
    Revise {
        #[arg(long)]
        input: PathBuf,
        /// Defaults to standard output.
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthMode {
    /// `draft<TAB>revision` lines → marked draft paired with the revision.
    Marks,
    /// Clean sentences → noised draft paired with the clean sentence.
    Noise,
}

fn config_error(e: ConfigError) -> CliError {
    match e {
        ConfigError::Io(m) => CliError::Env(anyhow::anyhow!(m)),
        other => CliError::Usage(other.to_string()),
    }
}

struct Resolved {
    config: Config,
    overrides: Vec<String>,
}

/// Defaults, then the config file, then the environment, then flags.
fn resolve(common: &Common) -> Result<Resolved> {
    let mut config = match &common.config {
        Some(p) => Config::from_file(p).map_err(config_error)?,
        None => Config::default(),
    };
    if let Ok(url) = std::env::var(CHECKER_URL_ENV) {
        config.checker_url = Some(url).filter(|u| !u.is_empty());
    }
    let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
    let flags = [
        ("model", path(&common.model)),
        ("backend", common.backend.clone()),
        ("checker_url", common.checker_url.clone()),
        ("corpus", path(&common.corpus)),
        ("seed", common.seed.map(|s| s.to_string())),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            config.set(k, &v).map_err(config_error)?;
        }
    }
    for kv in &common.set {
        let (k, v) =
            kv.split_once('=').ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        config.set(k.trim(), v.trim()).map_err(config_error)?;
    }
    config.beam().validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let overrides = changed_keys(&config);
    Ok(Resolved { config, overrides })
}

fn changed_keys(config: &Config) -> Vec<String> {
    let now = serde_json::to_value(config).expect("config serializes");
    let base = serde_json::to_value(Config::default()).expect("config serializes");
    let mut keys: Vec<String> = now
        .as_object()
        .unwrap()
        .iter()
        .filter(|(k, v)| base.get(k.as_str()) != Some(v))
        .map(|(k, _)| k.clone())
        .collect();
    keys.sort();
    keys
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("cannot read {}", path.display())).map_err(CliError::Env)
}

fn read_text(path: &Path) -> Result<(String, Vec<u8>)> {
    let bytes = read(path)?;
    let text = String::from_utf8(bytes.clone()).with_context(|| format!("{} is not UTF-8", path.display()))?;
    Ok((text, bytes))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

/// Loads `--model`, or trains on `--corpus`, or on `fallback` lines, or on
/// generated template sentences as a last resort.
fn language_model(
    config: &Config,
    fallback: Option<&[String]>,
    manifest: &mut Manifest,
) -> Result<Arc<NGramLanguageModel>> {
    if let Some(path) = &config.model {
        let bytes = read(path)?;
        manifest.input(path, &bytes);
        let lm =
            NGramLanguageModel::from_bytes(&bytes).with_context(|| format!("cannot load model {}", path.display()))?;
        return Ok(Arc::new(lm));
    }
    let lines: Vec<String> = match (&config.corpus, fallback) {
        (Some(path), _) => {
            let (text, bytes) = read_text(path)?;
            manifest.input(path, &bytes);
            text.lines().map(String::from).collect()
        }
        (None, Some(lines)) => lines.to_vec(),
        (None, None) => {
            eprintln!("note: no --model or --corpus given; using a model trained on generated template sentences");
            synthetic_corpus(2000, config.seed)
        }
    };
    let lm = NGramLanguageModel::train(&lines, config.lm_order, config.lm_discount)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(Arc::new(lm))
}

fn reviser(config: &Config, lm: &Arc<NGramLanguageModel>) -> Arc<dyn Reviser> {
    let timeout = Duration::from_secs_f64(config.backend_timeout_secs);
    match &config.backend {
        BackendSpec::Builtin => Arc::new(BuiltinReviser::new(lm.clone()).with_beam(config.beam())),
        BackendSpec::Copy => Arc::new(CopyReviser),
        BackendSpec::Http(url) => Arc::new(HttpReviser::new(url, config.beam_size, timeout)),
        BackendSpec::Pipe(argv) => Arc::new(PipeReviser::new(&argv[0], argv[1..].to_vec(), config.beam_size, timeout)),
    }
}

fn cmd_serve(host: &str, port: Option<u16>, common: &Common) -> Result<()> {
    let Resolved { mut config, .. } = resolve(common)?;
    if let Some(p) = port {
        config.port = p;
    }
    let mut scratch = Manifest::new("serve", &config, &[]);
    let lm = language_model(&config, None, &mut scratch)?;
    let mut engine = Engine::new(lm.clone(), reviser(&config, &lm));
    engine.revision = config.revision();
    engine.completion = CompletionSettings {
        k: config.completions,
        max_tokens: config.completion_max_tokens,
        nucleus_p: config.nucleus_p,
    };
    engine.checker = CheckerConfig { url: config.checker_url.clone(), ..CheckerConfig::default() };
    engine.seed = config.seed;
    let addr: SocketAddr =
        format!("{host}:{}", config.port).parse().map_err(|e| CliError::Usage(format!("bad listen address: {e}")))?;

    tracing_subscriber::fmt().with_writer(std::io::stderr).init();
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("cannot listen on {addr}"))?;
        eprintln!("listening on ws://{}{PATH}", listener.local_addr()?);
        serve(listener, Arc::new(engine), async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
        Ok::<_, anyhow::Error>(())
    })?;
    Ok(())
}

fn cmd_train(out: &Path, common: &Common) -> Result<()> {
    let Resolved { config, overrides } = resolve(common)?;
    if config.corpus.is_none() {
        return Err(CliError::Usage("train needs --corpus".into()));
    }
    let mut manifest = Manifest::new("train", &config, &overrides);
    let lm = language_model(&config, None, &mut manifest)?;
    lm.save(out).with_context(|| format!("cannot write {}", out.display()))?;
    manifest.stats = json!({ "vocab": lm.vocab().len(), "ngrams": lm.support_size(), "order": lm.order(), "discount": lm.discount() });
    manifest.write_beside(out)?;
    eprintln!("trained order-{} model, {} word types -> {}", lm.order(), lm.vocab().len(), out.display());
    Ok(())
}

#[derive(Debug, Default, serde::Serialize)]
struct SynthCounts {
    marked: usize,
    unmarked: usize,
    too_many_edits: usize,
    nothing_rewritten: usize,
    noised: usize,
    skipped: usize,
}

fn cmd_synth(input: &Path, output: &Path, mode: SynthMode, common: &Common) -> Result<()> {
    let Resolved { config, overrides } = resolve(common)?;
    let (text, bytes) = read_text(input)?;
    let mut manifest = Manifest::new("synth", &config, &overrides);
    manifest.input(input, &bytes);
    let mut counts = SynthCounts::default();
    let mut out = String::new();
    let mut problems = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match mode {
            SynthMode::Marks => match parse_pair_line(line, idx + 1) {
                Ok(pair) => {
                    let marked = attach_marks(&pair);
                    match marked.branch {
                        MarkBranch::Marked { .. } => counts.marked += 1,
                        MarkBranch::TooManyEdits => {
                            counts.unmarked += 1;
                            counts.too_many_edits += 1;
                        }
                        MarkBranch::NothingRewritten => {
                            counts.unmarked += 1;
                            counts.nothing_rewritten += 1;
                        }
                    }
                    out.push_str(&format!("{}\t{}\n", marked.text, pair.y.raw));
                }
                Err(e) => {
                    counts.skipped += 1;
                    problems.push(e.to_string());
                }
            },
            SynthMode::Noise => {
                let clean = line.trim();
                let noisy = synth_noise(clean, config.seed.wrapping_add(idx as u64));
                counts.noised += 1;
                out.push_str(&format!("{noisy}\t{clean}\n"));
            }
        }
    }
    write(output, &out)?;
    manifest.stats = serde_json::to_value(&counts).expect("counts serialize");
    manifest.write_beside(output)?;
    if let SynthMode::Noise = mode {
        eprintln!("noised {} sentence(s)", counts.noised);
    } else {
        eprintln!(
            "marked {}, unmarked {} ({} over the edit ratio, {} unchanged), skipped {}",
            counts.marked, counts.unmarked, counts.too_many_edits, counts.nothing_rewritten, counts.skipped
        );
    }
    if !problems.is_empty() {
        eprintln!("warning: {} malformed line(s) skipped; first: {}", problems.len(), problems[0]);
    }
    Ok(())
}

fn cmd_corpus(input: &Path, output: &Path, common: &Common) -> Result<()> {
    let Resolved { config, overrides } = resolve(common)?;
    let (text, bytes) = read_text(input)?;
    let mut manifest = Manifest::new("corpus", &config, &overrides);
    manifest.input(input, &bytes);
    let mut docs = Vec::new();
    let (mut titled, mut skipped) = (0, 0);
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match parse_paper_line(line, idx + 1) {
            Ok(paper) => {
                let (doc, kept) = format_paper(&paper, &mut paper_rng(config.seed, docs.len()));
                titled += kept as usize;
                docs.push(doc);
            }
            Err(e) => {
                skipped += 1;
                eprintln!("warning: {e}");
            }
        }
    }
    write(output, &docs.join("\n"))?;
    manifest.stats =
        json!({ "papers": docs.len(), "titled": titled, "untitled": docs.len() - titled, "skipped": skipped });
    manifest.write_beside(output)?;
    eprintln!("{} paper(s), {} with title, {} skipped", docs.len(), titled, skipped);
    Ok(())
}

fn cmd_eval(input: Option<&Path>, synthetic: Option<usize>, out_dir: &Path, k: usize, common: &Common) -> Result<()> {
    let Resolved { config, overrides } = resolve(common)?;
    let mut manifest = Manifest::new("eval", &config, &overrides);
    let sentences: Vec<String> = match (input, synthetic) {
        (Some(path), _) => {
            let (text, bytes) = read_text(path)?;
            manifest.input(path, &bytes);
            text.lines().filter(|l| !l.trim().is_empty()).map(String::from).collect()
        }
        (None, Some(n)) => synthetic_corpus(n, config.seed.wrapping_add(1)),
        (None, None) => return Err(CliError::Usage("eval needs --input or --synthetic".into())),
    };
    if sentences.is_empty() {
        return Err(CliError::Usage("evaluation corpus has no sentences".into()));
    }
    let lm = match (&config.model, &config.corpus, synthetic) {
        (None, None, Some(_)) => language_model(&config, Some(&synthetic_corpus(2000, config.seed)), &mut manifest)?,
        _ => language_model(&config, Some(&sentences), &mut manifest)?,
    };
    let reviser = reviser(&config, &lm);
    let result = focus_experiment(&sentences, reviser.as_ref(), config.seed, k).context("focus experiment failed")?;
    let report = FocusReport::from_result(&result);
    fs::create_dir_all(out_dir).with_context(|| format!("cannot create {}", out_dir.display()))?;
    let json_path = out_dir.join("report.json");
    write(&json_path, &(serde_json::to_string_pretty(&report).expect("report serializes") + "\n"))?;
    let summary = report.summary();
    write(&out_dir.join("report.txt"), &summary)?;
    manifest.outputs.push(out_dir.join("report.txt"));
    manifest.stats = json!({ "sentences": sentences.len(), "k": k, "p_value": report.p_value });
    manifest.write_beside(&json_path)?;
    print!("{summary}");
    Ok(())
}

fn cmd_revise(input: &Path, output: Option<&Path>, common: &Common) -> Result<()> {
    let Resolved { config, overrides } = resolve(common)?;
    let (text, bytes) = read_text(input)?;
    let mut manifest = Manifest::new("revise", &config, &overrides);
    manifest.input(input, &bytes);
    let lm = language_model(&config, None, &mut manifest)?;
    let reviser = reviser(&config, &lm);
    let (revised, edits) =
        machine_only_revise(&text, reviser.as_ref(), &lm, &config.revision()).context("revision failed")?;
    for e in &edits {
        eprintln!("- {}\n+ {}", e.before, e.after);
    }
    let sentences = draftforge_core::text::sentence_ranges(&text).len();
    eprintln!("{} of {} sentence(s) revised", edits.len(), sentences);
    match output {
        Some(path) => {
            write(path, &revised)?;
            manifest.stats = json!({ "sentences": sentences, "edited": edits.len(), "edits": edits });
            manifest.write_beside(path)?;
        }
        None => print!("{revised}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Serve { port, host, common } => cmd_serve(host, *port, common),
        Command::Train { out, common } => cmd_train(out, common),
        Command::Synth { input, output, mode, common } => cmd_synth(input, output, *mode, common),
        Command::Corpus { input, output, common } => cmd_corpus(input, output, common),
        Command::Eval { input, synthetic, out_dir, k, common } => {
            cmd_eval(input.as_deref(), *synthetic, out_dir, *k, common)
        }
        Command::Revise { input, output, common } => cmd_revise(input, output.as_deref(), common),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ CliError::Usage(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e @ CliError::Env(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
