//! Backends that actually produce verification outcomes.

use std::io::Read;
use std::process::{Command, Stdio};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use wait_timeout::ChildExt;

use super::classify::{RawRun, RuleTable};
use super::{Diagnostic, Severity, VerificationOutcome, Verdict};

pub const FILE_PLACEHOLDER: &str = "{file}";

/// Something that can check one program.
pub trait Backend: Send + Sync {
    /// Identifies the tool release; part of every cache key.
    fn version(&self) -> Result<String, String>;

    fn run(&self, text: &str, extra_args: &[String], timeout: Duration) -> VerificationOutcome;
}

/// Runs an external verifier on a temporary `.dfy` file.
#[derive(Debug, Clone)]
pub struct DafnyProcess {
    /// Program and arguments; `{file}` is replaced by the temp file path
    /// (appended when absent).
    pub command: Vec<String>,
    pub rules: RuleTable,
    /// Extra time allowed for output pipes to drain after a kill.
    pub grace: Duration,
}

impl DafnyProcess {
    pub fn new(command: Vec<String>, rules: RuleTable) -> Self {
        DafnyProcess {
            command,
            rules,
            grace: Duration::from_secs(2),
        }
    }

    fn args_for(&self, file: &str, extra_args: &[String]) -> Vec<String> {
        let mut args: Vec<String> = self.command[1..]
            .iter()
            .map(|a| a.replace(FILE_PLACEHOLDER, file))
            .collect();
        if !self.command.iter().any(|a| a.contains(FILE_PLACEHOLDER)) {
            args.push(file.to_string());
        }
        args.extend(extra_args.iter().cloned());
        args
    }
}

fn tool_error(message: String, started: Instant) -> VerificationOutcome {
    VerificationOutcome {
        verdict: Verdict::ToolError,
        diagnostics: vec![Diagnostic {
            line: 0,
            column: 0,
            severity: Severity::Error,
            message,
        }],
        wall_time: started.elapsed().as_secs_f64(),
        from_cache: false,
    }
}

struct Finished {
    run: RawRun,
    timed_out: bool,
}

fn spawn_reader<R: Read + Send + 'static>(mut pipe: R) -> mpsc::Receiver<Vec<u8>> {
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = pipe.read_to_end(&mut buf);
        let _ = tx.send(buf);
    });
    rx
}

#[cfg(unix)]
fn kill_tree(child: &mut std::process::Child) {
    // The child leads its own process group, so solver subprocesses die too.
    unsafe {
        libc::kill(-(child.id() as i32), libc::SIGKILL);
    }
    let _ = child.kill();
}

#[cfg(not(unix))]
fn kill_tree(child: &mut std::process::Child) {
    let _ = child.kill();
}

fn run_command(program: &str, args: &[String], timeout: Duration, grace: Duration) -> std::io::Result<Finished> {
    let mut cmd = Command::new(program);
    cmd.args(args)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    #[cfg(unix)]
    {
        use std::os::unix::process::CommandExt;
        cmd.process_group(0);
    }
    let mut child = cmd.spawn()?;
    let out = spawn_reader(child.stdout.take().expect("piped stdout"));
    let err = spawn_reader(child.stderr.take().expect("piped stderr"));

    let (exit_code, timed_out) = match child.wait_timeout(timeout)? {
        Some(status) => (status.code(), false),
        None => {
            kill_tree(&mut child);
            let _ = child.wait();
            (None, true)
        }
    };
    let collect = |rx: mpsc::Receiver<Vec<u8>>| {
        String::from_utf8_lossy(&rx.recv_timeout(grace).unwrap_or_default()).into_owned()
    };
    Ok(Finished {
        run: RawRun {
            exit_code,
            stdout: collect(out),
            stderr: collect(err),
        },
        timed_out,
    })
}

impl Backend for DafnyProcess {
    fn version(&self) -> Result<String, String> {
        let program = self.command.first().ok_or("empty verifier command")?;
        let done = run_command(program, &["--version".to_string()], Duration::from_secs(60), self.grace)
            .map_err(|e| format!("could not start `{program}`: {e}"))?;
        if done.timed_out || done.run.exit_code != Some(0) {
            return Err(format!("`{program} --version` failed: {}", done.run.stderr.trim()));
        }
        done.run
            .stdout
            .lines()
            .map(str::trim)
            .find(|l| !l.is_empty())
            .map(str::to_string)
            .ok_or_else(|| format!("`{program} --version` printed nothing"))
    }

    fn run(&self, text: &str, extra_args: &[String], timeout: Duration) -> VerificationOutcome {
        let started = Instant::now();
        let Some(program) = self.command.first() else {
            return tool_error("empty verifier command".into(), started);
        };
        let dir = match tempfile::tempdir() {
            Ok(d) => d,
            Err(e) => return tool_error(format!("temp dir: {e}"), started),
        };
        let path = dir.path().join("program.dfy");
        if let Err(e) = std::fs::write(&path, text) {
            return tool_error(format!("writing {}: {e}", path.display()), started);
        }
        let args = self.args_for(&path.to_string_lossy(), extra_args);
        let done = match run_command(program, &args, timeout, self.grace) {
            Ok(d) => d,
            Err(e) => return tool_error(format!("could not start `{program}`: {e}"), started),
        };
        let wall_time = started.elapsed().as_secs_f64();
        if done.timed_out {
            return VerificationOutcome {
                verdict: Verdict::Timeout,
                diagnostics: self.rules.diagnostics(&done.run.stdout),
                wall_time,
                from_cache: false,
            };
        }
        let (verdict, diagnostics) = self.rules.classify(&done.run);
        tracing::debug!(?verdict, wall_time, "verifier finished");
        VerificationOutcome {
            verdict,
            diagnostics,
            wall_time,
            from_cache: false,
        }
    }
}

type CheckFn = dyn Fn(&str) -> VerificationOutcome + Send + Sync;

/// In-process backend driven by a closure; used for stubs and tests.
pub struct FnBackend {
    version: String,
    check: Box<CheckFn>,
}

impl FnBackend {
    pub fn new(version: impl Into<String>, check: impl Fn(&str) -> VerificationOutcome + Send + Sync + 'static) -> Self {
        FnBackend {
            version: version.into(),
            check: Box::new(check),
        }
    }
}

impl Backend for FnBackend {
    fn version(&self) -> Result<String, String> {
        Ok(self.version.clone())
    }

    fn run(&self, text: &str, _extra_args: &[String], _timeout: Duration) -> VerificationOutcome {
        (self.check)(text)
    }
}
