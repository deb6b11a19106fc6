//! Ordered pattern rules mapping verifier output to a verdict.
//!
//! The table can be replaced from TOML so that message-format drift between
//! verifier releases does not require a rebuild:
//!
//! ```toml
//! diagnostic = '^(?P<file>[^(\n]*)\((?P<line>\d+),(?P<col>\d+)\): (?P<sev>Error|Warning|Info|Related location)[^:\n]*: (?P<msg>.*)$'
//!
//! [[rule]]
//! pattern = '\d+ parse errors? detected'
//! verdict = "syntax_error"
//! ```

use regex::{Regex, RegexBuilder};
use serde::Deserialize;
use thiserror::Error;

use super::{Diagnostic, Severity, Verdict};

const DIAGNOSTIC: &str = r"^(?P<file>[^(\n]*)\((?P<line>\d+),(?P<col>\d+)\): (?P<sev>Error|Warning|Info|Related location)[^:\n]*: (?P<msg>.*?)\r?$";

const DEFAULT_RULES: &[(&str, Verdict)] = &[
    (r"\d+ parse errors? detected", Verdict::SyntaxError),
    (r"\d+ resolution/type errors? detected", Verdict::TypeError),
    (r"finished with \d+ verified, [1-9]\d* errors?", Verdict::VerificationFailed),
    (r"\d+ time outs?|out of resource", Verdict::Timeout),
    (r"finished with \d+ verified, 0 errors", Verdict::Verified),
];

#[derive(Debug, Error)]
pub enum RuleError {
    #[error("rule table is not valid TOML: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid pattern `{pattern}`: {source}")]
    Pattern {
        pattern: String,
        source: regex::Error,
    },
}

#[derive(Debug, Clone)]
pub struct Rule {
    pub pattern: Regex,
    pub verdict: Verdict,
}

#[derive(Debug, Clone)]
pub struct RuleTable {
    pub diagnostic: Regex,
    pub rules: Vec<Rule>,
}

#[derive(Deserialize)]
struct RawTable {
    diagnostic: Option<String>,
    #[serde(default, rename = "rule")]
    rules: Vec<RawRule>,
}

#[derive(Deserialize)]
struct RawRule {
    pattern: String,
    verdict: Verdict,
}

fn compile(pattern: &str) -> Result<Regex, RuleError> {
    RegexBuilder::new(pattern)
        .multi_line(true)
        .build()
        .map_err(|source| RuleError::Pattern {
            pattern: pattern.to_string(),
            source,
        })
}

impl Default for RuleTable {
    fn default() -> Self {
        RuleTable {
            diagnostic: compile(DIAGNOSTIC).expect("builtin diagnostic pattern"),
            rules: DEFAULT_RULES
                .iter()
                .map(|(p, v)| Rule {
                    pattern: compile(p).expect("builtin rule pattern"),
                    verdict: *v,
                })
                .collect(),
        }
    }
}

/// What a finished verifier process left behind.
#[derive(Debug, Clone, Default)]
pub struct RawRun {
    pub exit_code: Option<i32>,
    pub stdout: String,
    pub stderr: String,
}

impl RuleTable {
    /// A table with no `[[rule]]` entries keeps the default rules.
    pub fn from_toml(text: &str) -> Result<Self, RuleError> {
        let raw: RawTable = toml::from_str(text)?;
        let mut table = RuleTable::default();
        if let Some(d) = raw.diagnostic {
            table.diagnostic = compile(&d)?;
        }
        if !raw.rules.is_empty() {
            table.rules = raw
                .rules
                .into_iter()
                .map(|r| {
                    Ok(Rule {
                        pattern: compile(&r.pattern)?,
                        verdict: r.verdict,
                    })
                })
                .collect::<Result<_, RuleError>>()?;
        }
        Ok(table)
    }

    pub fn diagnostics(&self, output: &str) -> Vec<Diagnostic> {
        self.diagnostic
            .captures_iter(output)
            .map(|c| Diagnostic {
                line: c["line"].parse().unwrap_or(0),
                column: c["col"].parse().unwrap_or(0),
                severity: match &c["sev"] {
                    "Error" => Severity::Error,
                    "Warning" => Severity::Warning,
                    _ => Severity::Info,
                },
                message: c["msg"].to_string(),
            })
            .collect()
    }

    /// First matching rule wins. `Verified` additionally requires a zero exit
    /// status and no error diagnostics; otherwise it is downgraded.
    pub fn classify(&self, run: &RawRun) -> (Verdict, Vec<Diagnostic>) {
        let output = format!("{}\n{}", run.stdout, run.stderr);
        let diagnostics = self.diagnostics(&output);
        let has_errors = diagnostics.iter().any(|d| d.severity == Severity::Error);
        let clean_exit = run.exit_code == Some(0);

        let matched = self
            .rules
            .iter()
            .find(|r| r.pattern.is_match(&output))
            .map(|r| r.verdict);
        let verdict = match matched {
            Some(Verdict::Verified) if clean_exit && !has_errors => Verdict::Verified,
            Some(Verdict::Verified) => Verdict::VerificationFailed,
            Some(v) => v,
            None if clean_exit && !has_errors => Verdict::Verified,
            None if has_errors => Verdict::VerificationFailed,
            None => Verdict::ToolError,
        };
        (verdict, diagnostics)
    }
}
