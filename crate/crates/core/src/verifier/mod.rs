//! Runs the external verifier, classifies its output, and caches outcomes by
//! content hash under a global parallelism bound.

mod cache;
mod classify;
mod process;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex, OnceLock};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{cache_key, is_cacheable, CacheStats, OutcomeCache, SCHEMA, SCHEMA_VERSION};
pub use classify::{RawRun, Rule, RuleError, RuleTable};
pub use process::{Backend, DafnyProcess, FnBackend, FILE_PLACEHOLDER};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    SyntaxError,
    TypeError,
    VerificationFailed,
    Verified,
    Timeout,
    ToolError,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
    Info,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub line: u32,
    pub column: u32,
    pub severity: Severity,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationOutcome {
    pub verdict: Verdict,
    pub diagnostics: Vec<Diagnostic>,
    /// Seconds.
    pub wall_time: f64,
    pub from_cache: bool,
}

impl VerificationOutcome {
    pub fn errors(&self) -> impl Iterator<Item = &Diagnostic> {
        self.diagnostics.iter().filter(|d| d.severity == Severity::Error)
    }

    /// Diagnostics rendered one per line, as the verifier printed them.
    pub fn render_diagnostics(&self) -> String {
        self.diagnostics
            .iter()
            .map(|d| {
                let sev = match d.severity {
                    Severity::Error => "Error",
                    Severity::Warning => "Warning",
                    Severity::Info => "Info",
                };
                format!("({},{}): {sev}: {}", d.line, d.column, d.message)
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifierConfig {
    pub command: Vec<String>,
    /// Seconds per file.
    pub timeout: f64,
    pub max_parallel: usize,
    pub cache: bool,
    pub cache_dir: Option<PathBuf>,
    pub extra_args: Vec<String>,
    /// TOML rule table replacing the built-in classification rules.
    pub rules_file: Option<PathBuf>,
}

impl Default for VerifierConfig {
    fn default() -> Self {
        VerifierConfig {
            command: vec!["dafny".into(), "verify".into(), FILE_PLACEHOLDER.into()],
            timeout: 60.0,
            max_parallel: thread::available_parallelism().map_or(1, |n| n.get()),
            cache: true,
            cache_dir: None,
            extra_args: Vec::new(),
            rules_file: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("timeout must be positive, got {0}")]
    Timeout(f64),
    #[error("max_parallel must be at least 1")]
    Parallelism,
    #[error("verifier command is empty")]
    EmptyCommand,
    #[error("cache directory {path}: {source}")]
    CacheDir {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("rule file {path}: {source}")]
    RulesIo {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Rules(#[from] RuleError),
}

impl VerifierConfig {
    /// Parses a whitespace-separated command template such as
    /// `dafny verify {file}`.
    pub fn with_command_line(mut self, line: &str) -> Self {
        self.command = line.split_whitespace().map(str::to_string).collect();
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.timeout > 0.0 && self.timeout.is_finite()) {
            return Err(ConfigError::Timeout(self.timeout));
        }
        if self.max_parallel == 0 {
            return Err(ConfigError::Parallelism);
        }
        if self.command.is_empty() {
            return Err(ConfigError::EmptyCommand);
        }
        Ok(())
    }

    pub fn load_rules(&self) -> Result<RuleTable, ConfigError> {
        match &self.rules_file {
            None => Ok(RuleTable::default()),
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| ConfigError::RulesIo {
                    path: path.clone(),
                    source,
                })?;
                Ok(RuleTable::from_toml(&text)?)
            }
        }
    }
}

#[derive(Debug)]
struct Semaphore {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    fn new(n: usize) -> Self {
        Semaphore {
            free: Mutex::new(n),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

/// Shared entry point for every verifier call. Cheap to share behind an
/// `Arc`; the semaphore bounds subprocesses across all callers.
pub struct Gateway {
    backend: Box<dyn Backend>,
    cache: Option<OutcomeCache>,
    permits: Semaphore,
    max_parallel: usize,
    timeout: Duration,
    extra_args: Vec<String>,
    version: OnceLock<Result<String, String>>,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("max_parallel", &self.max_parallel)
            .field("timeout", &self.timeout)
            .field("extra_args", &self.extra_args)
            .finish_non_exhaustive()
    }
}

impl Gateway {
    /// A gateway around the configured external verifier.
    pub fn new(cfg: &VerifierConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let backend = DafnyProcess::new(cfg.command.clone(), cfg.load_rules()?);
        Self::with_backend(Box::new(backend), cfg)
    }

    pub fn with_backend(backend: Box<dyn Backend>, cfg: &VerifierConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let cache = match (&cfg.cache, &cfg.cache_dir) {
            (false, _) => None,
            (true, None) => Some(OutcomeCache::in_memory()),
            (true, Some(dir)) => Some(OutcomeCache::on_disk(dir).map_err(|source| ConfigError::CacheDir {
                path: dir.clone(),
                source,
            })?),
        };
        Ok(Gateway {
            backend,
            cache,
            permits: Semaphore::new(cfg.max_parallel),
            max_parallel: cfg.max_parallel,
            timeout: Duration::from_secs_f64(cfg.timeout),
            extra_args: cfg.extra_args.clone(),
            version: OnceLock::new(),
        })
    }

    /// Probed once and remembered.
    pub fn version(&self) -> Result<String, String> {
        self.version.get_or_init(|| self.backend.version()).clone()
    }

    pub fn cache_stats(&self) -> CacheStats {
        self.cache.as_ref().map(OutcomeCache::stats).unwrap_or_default()
    }

    pub fn verify(&self, text: &str) -> VerificationOutcome {
        let version = match self.version() {
            Ok(v) => v,
            Err(message) => {
                return VerificationOutcome {
                    verdict: Verdict::ToolError,
                    diagnostics: vec![Diagnostic {
                        line: 0,
                        column: 0,
                        severity: Severity::Error,
                        message,
                    }],
                    wall_time: 0.0,
                    from_cache: false,
                }
            }
        };
        let key = cache_key(text, &version, &self.extra_args);
        if let Some(hit) = self.cache.as_ref().and_then(|c| c.get(&key)) {
            return hit;
        }
        let outcome = {
            let _permit = self.permits.acquire();
            self.backend.run(text, &self.extra_args, self.timeout)
        };
        if let Some(cache) = &self.cache {
            cache.put(&key, &version, &outcome);
        }
        outcome
    }

    /// Positionally aligned with `texts`. Distinct texts run concurrently;
    /// repeats of a text run after its first occurrence so they can be
    /// served from the cache.
    pub fn verify_batch(&self, texts: &[String]) -> Vec<VerificationOutcome> {
        let mut first_of: HashMap<&str, usize> = HashMap::new();
        let (mut firsts, mut repeats) = (Vec::new(), Vec::new());
        for (i, t) in texts.iter().enumerate() {
            if first_of.insert(t.as_str(), i).is_none() {
                firsts.push(i);
            } else {
                repeats.push(i);
            }
        }
        let mut out: Vec<Option<VerificationOutcome>> = vec![None; texts.len()];
        for wave in [firsts, repeats] {
            for (i, o) in self.run_parallel(texts, &wave) {
                out[i] = Some(o);
            }
        }
        out.into_iter().map(|o| o.expect("every index verified")).collect()
    }

    fn run_parallel(&self, texts: &[String], indices: &[usize]) -> Vec<(usize, VerificationOutcome)> {
        let next = AtomicUsize::new(0);
        let results = Mutex::new(Vec::with_capacity(indices.len()));
        let workers = self.max_parallel.min(indices.len());
        thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let n = next.fetch_add(1, Ordering::Relaxed);
                    let Some(&i) = indices.get(n) else { break };
                    let o = self.verify(&texts[i]);
                    results.lock().unwrap().push((i, o));
                });
            }
        });
        results.into_inner().unwrap()
    }
}
