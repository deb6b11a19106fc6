//! Settings resolution: command-line flag, then environment variable, then
//! config file, then built-in default.

use std::net::SocketAddr;
use std::path::PathBuf;

use clap::Args;
use serde::Deserialize;
use specgate::pipeline::ChatConfig;
use specgate::reward::RewardWeights;
use specgate::verifier::VerifierConfig;

pub const ENV_CONFIG: &str = "SPECGATE_CONFIG";
pub const ENV_VERIFIER_CMD: &str = "SPECGATE_VERIFIER_CMD";
pub const ENV_TIMEOUT: &str = "SPECGATE_TIMEOUT";
pub const ENV_CACHE_DIR: &str = "SPECGATE_CACHE_DIR";
pub const ENV_WEIGHTS: &str = "SPECGATE_WEIGHTS";
pub const ENV_MAX_PARALLEL: &str = "SPECGATE_MAX_PARALLEL";
pub const ENV_EMBED_URL: &str = "SPECGATE_EMBED_URL";
pub const ENV_CHAT_ENDPOINT: &str = "SPECGATE_CHAT_ENDPOINT";
pub const ENV_AUTH_TOKEN: &str = "SPECGATE_AUTH_TOKEN";

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalFlags {
    /// Verifier command line; `{file}` marks the program path (appended when absent).
    #[arg(long, global = true)]
    pub verifier_cmd: Option<String>,
    /// Per-file verification timeout in seconds.
    #[arg(long, global = true)]
    pub timeout: Option<f64>,
    /// Persist verification outcomes under this directory.
    #[arg(long, global = true)]
    pub cache_dir: Option<PathBuf>,
    /// Reward weights as `syntax,verify,subset`.
    #[arg(long, global = true)]
    pub weights: Option<String>,
    /// Maximum concurrent verifier processes.
    #[arg(long, global = true)]
    pub max_parallel: Option<usize>,
    /// TOML config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub bind: String,
    /// Bytes.
    pub body_limit: usize,
    pub auth_token: Option<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            bind: "127.0.0.1:8080".into(),
            body_limit: 4 * 1024 * 1024,
            auth_token: None,
        }
    }
}

impl ServiceConfig {
    pub fn validate(&self) -> Result<SocketAddr, String> {
        if self.body_limit == 0 {
            return Err("service.body_limit must be positive".into());
        }
        self.bind
            .parse()
            .map_err(|e| format!("service.bind `{}`: {e}", self.bind))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default)]
pub struct EmbeddingConfig {
    pub url: Option<String>,
}

/// Everything the binary can be configured with.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default)]
pub struct Settings {
    pub verifier: VerifierConfig,
    pub weights: RewardWeights,
    pub service: ServiceConfig,
    pub chat: ChatConfig,
    pub embedding: EmbeddingConfig,
    /// Prompt template file replacing the bundled defaults.
    pub templates: Option<PathBuf>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Command {
    Line(String),
    Argv(Vec<String>),
}

/// File layout; `verifier.command` may be a string or an argv list.
#[derive(Default, Deserialize)]
#[serde(default)]
struct FileSettings {
    verifier: Option<toml::Table>,
    weights: Option<RewardWeights>,
    service: Option<ServiceConfig>,
    chat: Option<ChatConfig>,
    embedding: Option<EmbeddingConfig>,
    templates: Option<PathBuf>,
}

fn parse_file(text: &str) -> Result<Settings, String> {
    let file: FileSettings = toml::from_str(text).map_err(|e| e.to_string())?;
    let mut verifier = VerifierConfig::default();
    if let Some(mut table) = file.verifier {
        let command = table.remove("command");
        verifier = table.try_into().map_err(|e: toml::de::Error| e.to_string())?;
        if let Some(c) = command {
            verifier = match c.try_into().map_err(|e: toml::de::Error| e.to_string())? {
                Command::Line(line) => verifier.with_command_line(&line),
                Command::Argv(argv) => VerifierConfig { command: argv, ..verifier },
            };
        }
    }
    Ok(Settings {
        verifier,
        weights: file.weights.unwrap_or_default(),
        service: file.service.unwrap_or_default(),
        chat: file.chat.unwrap_or_default(),
        embedding: file.embedding.unwrap_or_default(),
        templates: file.templates,
    })
}

fn parse_num<T: std::str::FromStr>(name: &str, value: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value.trim().parse().map_err(|e| format!("{name}=`{value}`: {e}"))
}

/// Resolves settings from `flags`, the environment seen through `env`, and
/// the config file named by `--config` or `SPECGATE_CONFIG`.
pub fn resolve(flags: &GlobalFlags, env: impl Fn(&str) -> Option<String>) -> Result<Settings, String> {
    let path = flags.config.clone().or_else(|| env(ENV_CONFIG).map(PathBuf::from));
    let mut s = match path {
        Some(p) => {
            let text = std::fs::read_to_string(&p).map_err(|e| format!("config {}: {e}", p.display()))?;
            parse_file(&text).map_err(|e| format!("config {}: {e}", p.display()))?
        }
        None => Settings::default(),
    };

    if let Some(v) = env(ENV_VERIFIER_CMD) {
        s.verifier = s.verifier.with_command_line(&v);
    }
    if let Some(v) = env(ENV_TIMEOUT) {
        s.verifier.timeout = parse_num(ENV_TIMEOUT, &v)?;
    }
    if let Some(v) = env(ENV_CACHE_DIR) {
        s.verifier.cache_dir = Some(PathBuf::from(v));
    }
    if let Some(v) = env(ENV_WEIGHTS) {
        s.weights = v.parse().map_err(|e| format!("{ENV_WEIGHTS}: {e}"))?;
    }
    if let Some(v) = env(ENV_MAX_PARALLEL) {
        s.verifier.max_parallel = parse_num(ENV_MAX_PARALLEL, &v)?;
    }
    if let Some(v) = env(ENV_EMBED_URL) {
        s.embedding.url = Some(v);
    }
    if let Some(v) = env(ENV_CHAT_ENDPOINT) {
        s.chat.endpoint = v;
    }
    if let Some(v) = env(ENV_AUTH_TOKEN) {
        s.service.auth_token = Some(v);
    }

    if let Some(v) = &flags.verifier_cmd {
        s.verifier = s.verifier.with_command_line(v);
    }
    if let Some(v) = flags.timeout {
        s.verifier.timeout = v;
    }
    if let Some(v) = &flags.cache_dir {
        s.verifier.cache_dir = Some(v.clone());
    }
    if let Some(v) = &flags.weights {
        s.weights = v.parse().map_err(|e| format!("--weights: {e}"))?;
    }
    if let Some(v) = flags.max_parallel {
        s.verifier.max_parallel = v;
    }
    s.verifier.validate().map_err(|e| e.to_string())?;
    Ok(s)
}
