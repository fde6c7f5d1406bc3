//! Command-line entry point: run sessions, compare paradigms, produce lag-k
//! transcripts, and serve a model over the mock wire protocol.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use ssbd::decoder::{DecodeConfig, MaskMode, PromptTemplate};
use ssbd::metrics::{emit_report_file, SessionReport};
use ssbd::model::{LanguageModel, ModelFile, RemoteModel};
use ssbd::stream::{lag_k_updates, load_transcript, run_session, write_trace, Paradigm, SessionTrace, StreamUpdate};
use ssbd::Error;

#[derive(Parser)]
#[command(name = "ssbd", version, about = "Self-speculative biased decoding engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run all sessions under one paradigm and write trace/report files.
    Run(RunArgs),
    /// Run both paradigms on identical inputs and report step speedup.
    Compare(CompareArgs),
    /// Convert a sentence-per-line corpus into a lag-k transcript.
    Lagk(LagkArgs),
    /// Serve a model file over the /v1 wire protocol.
    ServeMock(ServeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ParadigmArg {
    Ar,
    Ssbd,
}

impl From<ParadigmArg> for Paradigm {
    fn from(p: ParadigmArg) -> Paradigm {
        match p {
            ParadigmArg::Ar => Paradigm::Ar,
            ParadigmArg::Ssbd => Paradigm::Ssbd,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MaskModeArg {
    None,
    TrimDraft,
    DisplayOnly,
}

fn parse_beta(s: &str) -> Result<f64, String> {
    let beta: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=1.0).contains(&beta) {
        Ok(beta)
    } else {
        Err(format!("beta {beta} out of range [0, 1]"))
    }
}

#[derive(Args)]
struct DecodeArgs {
    /// Model source: a JSON model file or an http(s) backend URL.
    #[arg(long)]
    model: String,

    /// Transcript JSONL with one update per line.
    #[arg(long, conflicts_with_all = ["corpus", "lag_k"])]
    transcript: Option<PathBuf>,

    /// Sentence-per-line corpus; requires --lag-k.
    #[arg(long, requires = "lag_k")]
    corpus: Option<PathBuf>,

    /// Reveal the source in increments of k words.
    #[arg(long, requires = "corpus")]
    lag_k: Option<usize>,

    /// Bias weight pulling verification toward the draft token.
    #[arg(long, default_value = "0.2", value_parser = parse_beta)]
    beta: f64,

    /// Mask the last k tokens of intermediate outputs.
    #[arg(long, default_value_t = 0)]
    mask_k: usize,

    #[arg(long, value_enum, default_value = "none")]
    mask_mode: MaskModeArg,

    /// Shorthand for --mask-mode display-only.
    #[arg(long)]
    display_only: bool,

    #[arg(long)]
    max_new_tokens: Option<usize>,

    /// Reserved for randomized fixture generation; recorded, not used by
    /// deterministic models.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Zero out wall_nanos in outputs so reruns are byte-identical.
    #[arg(long)]
    no_timing: bool,

    /// Run sessions concurrently; output order stays deterministic.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    decode: DecodeArgs,

    #[arg(long, value_enum, default_value = "ssbd")]
    paradigm: ParadigmArg,

    /// Trace JSONL output path.
    #[arg(long)]
    trace: Option<PathBuf>,

    /// Report CSV output path.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    decode: DecodeArgs,

    /// Comma-separated beta values to sweep; defaults to --beta alone.
    #[arg(long, value_delimiter = ',', value_parser = parse_beta)]
    beta_grid: Option<Vec<f64>>,

    /// Report CSV output path.
    #[arg(long)]
    report: PathBuf,
}

#[derive(Args)]
struct LagkArgs {
    #[arg(long)]
    corpus: PathBuf,

    #[arg(long)]
    k: usize,

    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    model: PathBuf,

    #[arg(long, default_value_t = 0)]
    port: u16,

    /// Row truncation for vocabularies larger than the full-distribution cap.
    #[arg(long, default_value_t = ssbd::server::DEFAULT_TOP_K)]
    top_k: usize,
}

fn load_model(source: &str) -> Result<(Box<dyn LanguageModel>, PromptTemplate), Error> {
    if source.starts_with("http://") || source.starts_with("https://") {
        let model = RemoteModel::connect(source)?;
        Ok((Box::new(model), PromptTemplate::default()))
    } else {
        let file = ModelFile::load(Path::new(source))?;
        let template = file.template();
        Ok((file.into_model(), template))
    }
}

fn corpus_sessions(path: &Path, k: usize) -> Result<Vec<Vec<StreamUpdate>>, Error> {
    let text = std::fs::read_to_string(path)?;
    let mut sessions = Vec::new();
    let mut n = 0usize;
    for line in text.lines() {
        let words: Vec<&str> = line.split_whitespace().collect();
        if words.is_empty() {
            continue;
        }
        n += 1;
        sessions.push(lag_k_updates(&format!("s{n:04}"), &words, k)?);
    }
    if sessions.is_empty() {
        return Err(Error::Config(format!("corpus {} has no sentences", path.display())));
    }
    Ok(sessions)
}

fn load_sessions(args: &DecodeArgs) -> Result<Vec<Vec<StreamUpdate>>, Error> {
    match (&args.transcript, &args.corpus, args.lag_k) {
        (Some(path), None, None) => load_transcript(path),
        (None, Some(path), Some(k)) => corpus_sessions(path, k),
        _ => Err(Error::Config(
            "exactly one input source required: --transcript, or --corpus with --lag-k".into(),
        )),
    }
}

fn decode_config(args: &DecodeArgs) -> DecodeConfig {
    let mask_mode = if args.display_only {
        MaskMode::DisplayOnly
    } else {
        match args.mask_mode {
            MaskModeArg::None => MaskMode::None,
            MaskModeArg::TrimDraft => MaskMode::TrimDraft,
            MaskModeArg::DisplayOnly => MaskMode::DisplayOnly,
        }
    };
    DecodeConfig {
        beta: args.beta,
        max_new_tokens: args.max_new_tokens,
        mask_k: args.mask_k,
        mask_mode,
    }
}

fn run_all(
    lm: &dyn LanguageModel,
    sessions: &[Vec<StreamUpdate>],
    template: &PromptTemplate,
    config: &DecodeConfig,
    paradigm: Paradigm,
    jobs: usize,
) -> Result<Vec<SessionTrace>, Error> {
    if jobs <= 1 {
        return sessions
            .iter()
            .map(|s| run_session(lm, s, template, config, paradigm))
            .collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| {
        sessions
            .par_iter()
            .map(|s| run_session(lm, s, template, config, paradigm))
            .collect()
    })
}

fn mask_mode_label(config: &DecodeConfig) -> String {
    config.mask_mode.to_string()
}

fn cmd_run(args: RunArgs) -> Result<(), Error> {
    let (model, template) = load_model(&args.decode.model)?;
    let sessions = load_sessions(&args.decode)?;
    let config = decode_config(&args.decode);
    config.validate()?;
    let paradigm: Paradigm = args.paradigm.into();
    let traces = run_all(model.as_ref(), &sessions, &template, &config, paradigm, args.decode.jobs)?;

    if let Some(path) = &args.trace {
        let mut buf = Vec::new();
        write_trace(&mut buf, &traces, args.decode.no_timing)?;
        std::fs::write(path, buf)?;
    }
    if let Some(path) = &args.report {
        let mut reports: Vec<SessionReport> = traces
            .iter()
            .map(|t| SessionReport::from_trace(t, config.beta, config.mask_k, &mask_mode_label(&config)))
            .collect();
        if args.decode.no_timing {
            for r in &mut reports {
                r.wall_nanos = 0;
            }
        }
        let steps = |t: &SessionTrace| t.records.iter().map(|r| r.decode_steps).sum::<u64>();
        for (report, trace) in reports.iter_mut().zip(&traces) {
            match paradigm {
                Paradigm::Ar => report.ar_decode_steps = Some(steps(trace)),
                Paradigm::Ssbd => report.ssbd_decode_steps = Some(steps(trace)),
            }
        }
        emit_report_file(path, &reports)?;
    }
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> Result<(), Error> {
    let (model, template) = load_model(&args.decode.model)?;
    let sessions = load_sessions(&args.decode)?;
    let base_config = decode_config(&args.decode);
    base_config.validate()?;
    let grid = args.beta_grid.unwrap_or_else(|| vec![args.decode.beta]);

    // The autoregressive baseline does not depend on beta; run it once.
    let ar_config = DecodeConfig {
        beta: 0.0,
        ..base_config.clone()
    };
    let ar_traces = run_all(
        model.as_ref(),
        &sessions,
        &template,
        &ar_config,
        Paradigm::Ar,
        args.decode.jobs,
    )?;

    let mut reports = Vec::new();
    for &beta in &grid {
        let config = DecodeConfig {
            beta,
            ..base_config.clone()
        };
        let traces = run_all(
            model.as_ref(),
            &sessions,
            &template,
            &config,
            Paradigm::Ssbd,
            args.decode.jobs,
        )?;
        for (ssbd_trace, ar_trace) in traces.iter().zip(&ar_traces) {
            let eff = ssbd::metrics::efficiency_stats(ar_trace, ssbd_trace)?;
            let mut report =
                SessionReport::from_trace(ssbd_trace, beta, config.mask_k, &mask_mode_label(&config));
            report.ar_decode_steps = Some(eff.ar_decode_steps);
            report.ssbd_decode_steps = Some(eff.ssbd_decode_steps);
            if args.decode.no_timing {
                report.wall_nanos = 0;
            }
            reports.push(report);
        }
    }
    emit_report_file(&args.report, &reports)?;
    Ok(())
}

fn cmd_lagk(args: LagkArgs) -> Result<(), Error> {
    let sessions = corpus_sessions(&args.corpus, args.k)?;
    let mut out = String::new();
    for session in sessions {
        for update in session {
            out.push_str(
                &serde_json::to_string(&update)
                    .map_err(|e| Error::Validation(format!("transcript serialization: {e}")))?,
            );
            out.push('\n');
        }
    }
    std::fs::write(&args.out, out)?;
    Ok(())
}

fn cmd_serve_mock(args: ServeArgs) -> Result<(), Error> {
    let file = ModelFile::load(&args.model)?;
    let addr = SocketAddr::from(([127, 0, 0, 1], args.port));
    ssbd::server::serve_mock_blocking(file.into_model(), addr, args.top_k)
}

fn main() -> ExitCode {
    env_logger::init_from_env(env_logger::Env::new().filter_or("SSBD_LOG", "warn"));
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Lagk(args) => cmd_lagk(args),
        Command::ServeMock(args) => cmd_serve_mock(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ssbd: {e}");
            ExitCode::FAILURE
        }
    }
}
