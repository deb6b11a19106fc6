use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand};
use specgate::metrics::{CachedEmbedder, HttpEmbedder, MetricsError};
use specgate::pipeline::{ingest_dataset, HttpChatClient, Pipeline, PipelineError, PipelineRecord, PromptTemplates, Status};
use specgate::reward::{score, Category};
use specgate::source::SourceFile;
use specgate::verifier::Gateway;
use specgate_cli::config::{resolve, GlobalFlags, Settings};
use specgate_cli::eval::{evaluate, load_rollouts, write_outputs, EvalItem, EvalOptions};
use specgate_cli::service::{self, AppState};

const EXIT_FAIL: u8 = 1;
const EXIT_ERROR: u8 = 2;

#[derive(Parser)]
#[command(name = "specgate", version, about = "Verifier-grounded rewards and metrics for Dafny specifications")]
struct Cli {
    #[command(flatten)]
    global: GlobalFlags,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score one candidate; exit 0 when verified, 1 when not, 2 on errors.
    Score {
        /// Input program without specifications.
        code: PathBuf,
        /// Program annotated with the ground-truth specification.
        ground_truth: PathBuf,
        candidate: PathBuf,
    },
    /// Score rollouts for a JSON-lines dataset and write metrics.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        /// Directory of `<input_id>/<index>.dfy` rollout files.
        #[arg(long)]
        rollouts: PathBuf,
        /// Comma-separated k values for pass@k.
        #[arg(long, value_delimiter = ',', default_value = "1")]
        k: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Reference rollouts, same layout, for the novel-spec rate.
        #[arg(long)]
        novelty_pool: Option<PathBuf>,
        /// Embedding endpoint for the diversity score.
        #[arg(long)]
        embed_url: Option<String>,
    },
    /// Translation and annotation runs against a chat endpoint.
    Pipeline {
        #[command(subcommand)]
        action: PipelineAction,
        #[command(flatten)]
        opts: PipelineOpts,
    },
    /// Run the HTTP reward service.
    Serve {
        #[arg(long)]
        bind: Option<String>,
        #[arg(long)]
        body_limit: Option<usize>,
        #[arg(long)]
        auth_token: Option<String>,
    },
}

#[derive(clap::Args)]
struct PipelineOpts {
    /// JSON-lines output, one record per input.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    templates: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = specgate::pipeline::DEFAULT_MAX_ITER)]
    max_iter: usize,
    #[arg(long, global = true)]
    chat_endpoint: Option<String>,
    #[arg(long, global = true)]
    model: Option<String>,
}

#[derive(Subcommand)]
enum PipelineAction {
    /// Translate Python files to verified Dafny.
    Translate { inputs: Vec<PathBuf> },
    /// Add specifications to verified Dafny files, main unit first.
    Annotate { inputs: Vec<PathBuf> },
}

fn fail(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(EXIT_ERROR)
}

fn read(path: &Path) -> Result<String, String> {
    fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let settings = match resolve(&cli.global, |k| std::env::var(k).ok()) {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    let gateway = match Gateway::new(&settings.verifier) {
        Ok(g) => g,
        Err(e) => return fail(e),
    };
    match cli.command {
        Command::Score { code, ground_truth, candidate } => run_score(&settings, &gateway, &code, &ground_truth, &candidate),
        Command::Eval { dataset, rollouts, k, out, novelty_pool, embed_url } => {
            let embed_url = embed_url.or(settings.embedding.url.clone());
            run_eval(&settings, &gateway, &dataset, &rollouts, k, &out, novelty_pool.as_deref(), embed_url)
        }
        Command::Pipeline { action, opts } => run_pipeline(settings, &gateway, action, opts),
        Command::Serve { bind, body_limit, auth_token } => {
            let mut cfg = settings.service.clone();
            cfg.bind = bind.unwrap_or(cfg.bind);
            cfg.body_limit = body_limit.unwrap_or(cfg.body_limit);
            cfg.auth_token = auth_token.or(cfg.auth_token);
            let addr = match cfg.validate() {
                Ok(a) => a,
                Err(e) => return fail(e),
            };
            let state = AppState::new(Arc::new(gateway), settings.weights, cfg.auth_token);
            let rt = match tokio::runtime::Runtime::new() {
                Ok(rt) => rt,
                Err(e) => return fail(e),
            };
            let served = rt.block_on(async {
                let listener = tokio::net::TcpListener::bind(addr).await?;
                eprintln!("listening on {}", listener.local_addr()?);
                service::serve(listener, state, cfg.body_limit).await
            });
            match served {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => fail(e),
            }
        }
    }
}

fn run_score(settings: &Settings, gateway: &Gateway, code: &Path, gt: &Path, candidate: &Path) -> ExitCode {
    let texts = (|| Ok::<_, String>((read(code)?, read(gt)?, read(candidate)?)))();
    let (code, gt, candidate) = match texts {
        Ok(t) => t,
        Err(e) => return fail(e),
    };
    let b = score(&SourceFile::parse(&code), &gt, &candidate, &settings.weights, gateway);
    println!("{}", serde_json::to_string_pretty(&b).expect("breakdown serializes"));
    if let Some(e) = &b.error {
        return fail(format!("verifier failure: {e}"));
    }
    if b.category >= Category::Verified {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAIL)
    }
}

#[allow(clippy::too_many_arguments)]
fn run_eval(
    settings: &Settings,
    gateway: &Gateway,
    dataset: &Path,
    rollouts: &Path,
    k: Vec<usize>,
    out: &Path,
    novelty_pool: Option<&Path>,
    embed_url: Option<String>,
) -> ExitCode {
    let report = match ingest_dataset(dataset) {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    for e in &report.errors {
        eprintln!("warning: {}: {e}", dataset.display());
    }
    let mut items = Vec::new();
    let mut pool = BTreeMap::new();
    for rec in &report.records {
        let found = match load_rollouts(rollouts, &rec.id) {
            Ok(r) => r,
            Err(e) => {
                eprintln!("warning: record {}: rollouts unreadable: {e}", rec.id);
                Vec::new()
            }
        };
        if let Some(dir) = novelty_pool {
            pool.insert(rec.id.clone(), load_rollouts(dir, &rec.id).unwrap_or_default());
        }
        items.push(EvalItem {
            input_id: rec.id.clone(),
            code: rec.code.clone(),
            ground_truth: rec.code_with_specs.clone(),
            rollouts: found,
        });
    }
    let embedder = embed_url.map(|url| CachedEmbedder::new(HttpEmbedder::new(url, Duration::from_secs(60))));
    let opts = EvalOptions {
        k_values: k,
        novelty_pool: novelty_pool.map(|_| &pool),
        embedder: embedder.as_ref().map(|e| e as &dyn specgate::metrics::EmbeddingProvider),
    };
    match evaluate(&items, &settings.weights, gateway, &opts) {
        Ok(output) => {
            if let Err(e) = write_outputs(out, &output) {
                return fail(e);
            }
            for w in &output.report.warnings {
                eprintln!("warning: {w}");
            }
            println!("{}", serde_json::to_string_pretty(&output.report).expect("report serializes"));
            ExitCode::SUCCESS
        }
        Err(MetricsError::EmptyInput) => {
            eprintln!("error: EmptyInput: dataset has no usable records");
            ExitCode::from(EXIT_FAIL)
        }
        Err(e) => fail(e),
    }
}

fn run_pipeline(mut settings: Settings, gateway: &Gateway, action: PipelineAction, opts: PipelineOpts) -> ExitCode {
    if let Some(e) = opts.chat_endpoint {
        settings.chat.endpoint = e;
    }
    if let Some(m) = opts.model {
        settings.chat.model_name = m;
    }
    let templates = match opts.templates.or(settings.templates.clone()) {
        Some(p) => match PromptTemplates::load(&p) {
            Ok(t) => t,
            Err(e) => return fail(e),
        },
        None => PromptTemplates::default(),
    };
    let client = match HttpChatClient::new(settings.chat.clone()) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    let pipeline = Pipeline::new(&client, gateway)
        .with_templates(templates)
        .with_max_iter(opts.max_iter);
    let mut sink: Box<dyn Write> = match &opts.out {
        Some(p) => match fs::File::create(p) {
            Ok(f) => Box::new(std::io::BufWriter::new(f)),
            Err(e) => return fail(format!("{}: {e}", p.display())),
        },
        None => Box::new(std::io::stdout()),
    };
    let (inputs, translate) = match action {
        PipelineAction::Translate { inputs } => (inputs, true),
        PipelineAction::Annotate { inputs } => (inputs, false),
    };
    let mut all_verified = true;
    for path in inputs {
        let id = path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned());
        let text = match read(&path) {
            Ok(t) => t,
            Err(e) => return fail(e),
        };
        let result = if translate {
            pipeline.translate_and_repair(&id, &text)
        } else {
            pipeline.staged_spec_insertion(&id, &SourceFile::parse_with_id(&id, &text), None)
        };
        let record: PipelineRecord = match result {
            Ok(r) => r,
            Err(PipelineError::ClientUnavailable { source, partial }) => {
                let _ = writeln!(sink, "{}", serde_json::to_string(&partial).expect("record serializes"));
                let _ = sink.flush();
                return fail(source);
            }
        };
        all_verified &= record.status == Status::Verified;
        eprintln!("{id}: {:?} after {} calls", record.status, record.iterations.len());
        if let Err(e) = writeln!(sink, "{}", serde_json::to_string(&record).expect("record serializes")) {
            return fail(e);
        }
    }
    if let Err(e) = sink.flush() {
        return fail(e);
    }
    if all_verified {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAIL)
    }
}
