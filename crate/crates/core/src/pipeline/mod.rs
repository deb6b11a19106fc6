//! Translate-verify-repair loops and staged specification insertion, driven
//! by a chat-completion client and the verifier gateway.

pub mod chat;
pub mod dataset;
pub mod templates;

use std::collections::HashSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::source::lexer::{tokenize, TokenKind};
use crate::source::{strip_specs, SourceFile, UnitKind};
use crate::verifier::{Gateway, VerificationOutcome, Verdict};

pub use chat::{ChatClient, ChatConfig, ChatError, FixedClient, HttpChatClient, ScriptedClient};
pub use dataset::{ingest_dataset, ingest_str, DatasetRecord, IngestIoError, IngestReport, LineError};
pub use templates::{Prompt, PromptTemplates, Template, TemplateError};

pub const DEFAULT_MAX_ITER: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Verified,
    FailedMaxIter,
    FailedUnsupported,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IterationKind {
    Translate,
    InsertSpec,
    Repair,
}

/// One client call and the verdict on the code it returned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Iteration {
    /// `translate`, `main:<unit>` or `sub:<unit>`.
    pub stage: String,
    pub kind: IterationKind,
    pub prompt_digest: String,
    pub response_digest: String,
    pub outcome: VerificationOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exchange {
    pub system: String,
    pub user: String,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineRecord {
    pub source_id: String,
    pub python_text: Option<String>,
    /// Latest translation for translate runs; last accepted program for
    /// staged insertion.
    pub dafny_text: String,
    pub iterations: Vec<Iteration>,
    /// Full prompts and responses, aligned with `iterations`.
    pub transcript: Vec<Exchange>,
    pub completed_stages: Vec<String>,
    pub status: Status,
    pub failure: Option<String>,
}

impl PipelineRecord {
    fn new(source_id: &str, python: Option<&str>, dafny: &str) -> Self {
        PipelineRecord {
            source_id: source_id.to_string(),
            python_text: python.map(str::to_string),
            dafny_text: dafny.to_string(),
            iterations: Vec::new(),
            transcript: Vec::new(),
            completed_stages: Vec::new(),
            status: Status::FailedMaxIter,
            failure: None,
        }
    }

    /// Debugging rounds across all stages.
    pub fn repair_rounds(&self) -> usize {
        self.iterations.iter().filter(|i| i.kind == IterationKind::Repair).count()
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{source}")]
    ClientUnavailable {
        source: ChatError,
        partial: Box<PipelineRecord>,
    },
}

/// Pre-prompt hook applied to Python source before translation.
pub trait Enricher: Send + Sync {
    fn enrich(&self, python: &str) -> String;
}

pub struct NoEnrichment;

impl Enricher for NoEnrichment {
    fn enrich(&self, python: &str) -> String {
        python.to_string()
    }
}

pub fn digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn prompt_digest(p: &Prompt) -> String {
    digest(&format!("{}\0{}", p.system, p.user))
}

/// Code from the first ```dafny fence, else the first fence of any kind,
/// else the whole reply.
pub fn extract_code(response: &str) -> String {
    let fence = |tag: &str| {
        let open = response.find(tag)?;
        let body_start = response[open..].find('\n').map_or(response.len(), |n| open + n + 1);
        let body = &response[body_start..];
        let end = body.find("```").unwrap_or(body.len());
        Some(body[..end].trim_end().to_string() + "\n")
    };
    fence("```dafny")
        .or_else(|| fence("```"))
        .unwrap_or_else(|| response.trim().to_string() + "\n")
}

/// The SFT-style annotation prompt: the program with every specification
/// clause removed.
pub fn sft_prompt(templates: &PromptTemplates, code_with_specs: &str) -> Prompt {
    let stripped = strip_specs(&SourceFile::parse(code_with_specs));
    templates
        .sft
        .render(&[("dafny_program_with_missing_annotations", stripped.trim_end())])
}

/// The unit nothing else calls (last such in declaration order) is the main
/// unit; the remaining methods and functions follow in declaration order.
pub fn split_main(file: &SourceFile) -> Option<(String, Vec<String>)> {
    let units: Vec<_> = file
        .units
        .iter()
        .filter(|u| matches!(u.kind, UnitKind::Method | UnitKind::Function))
        .collect();
    let called: HashSet<&str> = units
        .iter()
        .filter_map(|u| u.body_span.clone())
        .flat_map(|span| {
            let body = &file.text[span];
            tokenize(body)
                .0
                .into_iter()
                .filter(|t| t.kind == TokenKind::Ident)
                .map(move |t| &body[t.span])
        })
        .collect();
    let main = units
        .iter()
        .rev()
        .find(|u| !called.contains(u.name.as_str()))
        .or(units.last())?;
    let subs = units
        .iter()
        .filter(|u| u.qualified_name != main.qualified_name)
        .map(|u| u.qualified_name.clone())
        .collect();
    Some((main.qualified_name.clone(), subs))
}

pub struct Pipeline<'a> {
    client: &'a dyn ChatClient,
    gateway: &'a Gateway,
    templates: PromptTemplates,
    enricher: Box<dyn Enricher>,
    max_iter: usize,
}

enum Round {
    Accepted,
    Exhausted,
}

impl<'a> Pipeline<'a> {
    pub fn new(client: &'a dyn ChatClient, gateway: &'a Gateway) -> Self {
        Pipeline {
            client,
            gateway,
            templates: PromptTemplates::default(),
            enricher: Box::new(NoEnrichment),
            max_iter: DEFAULT_MAX_ITER,
        }
    }

    pub fn with_templates(mut self, templates: PromptTemplates) -> Self {
        self.templates = templates;
        self
    }

    pub fn with_enricher(mut self, enricher: Box<dyn Enricher>) -> Self {
        self.enricher = enricher;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    fn call(
        &self,
        rec: &mut PipelineRecord,
        stage: &str,
        kind: IterationKind,
        prompt: Prompt,
    ) -> Result<(String, VerificationOutcome), ChatError> {
        let response = self.client.complete(&prompt)?;
        let code = extract_code(&response);
        let outcome = self.gateway.verify(&code);
        tracing::debug!(
            source = %rec.source_id, stage, ?kind,
            system = %prompt.system, user = %prompt.user, %response,
            "chat exchange"
        );
        tracing::info!(source = %rec.source_id, stage, ?kind, verdict = ?outcome.verdict, "iteration");
        rec.iterations.push(Iteration {
            stage: stage.to_string(),
            kind,
            prompt_digest: prompt_digest(&prompt),
            response_digest: digest(&response),
            outcome: outcome.clone(),
        });
        rec.transcript.push(Exchange {
            system: prompt.system,
            user: prompt.user,
            response,
        });
        Ok((code, outcome))
    }

    /// One prompt followed by up to `max_iter` debugging rounds. `complaint`
    /// returns why verified code is still unacceptable, if it is.
    fn round(
        &self,
        rec: &mut PipelineRecord,
        stage: &str,
        kind: IterationKind,
        first: Prompt,
        complaint: &dyn Fn(&str) -> Option<String>,
    ) -> Result<(Round, String), ChatError> {
        let python = rec.python_text.clone().unwrap_or_default();
        let mut prompt = first;
        let mut kind = kind;
        let mut repairs = 0;
        loop {
            let (code, outcome) = self.call(rec, stage, kind, prompt)?;
            let problem = if outcome.verdict == Verdict::Verified {
                match complaint(&code) {
                    None => return Ok((Round::Accepted, code)),
                    Some(p) => p,
                }
            } else {
                outcome.render_diagnostics()
            };
            if repairs == self.max_iter {
                return Ok((Round::Exhausted, code));
            }
            repairs += 1;
            kind = IterationKind::Repair;
            prompt = self.templates.debug.render(&[
                ("python_code", python.as_str()),
                ("main_spec", code.trim_end()),
                ("dafny_analysis_result", problem.as_str()),
            ]);
        }
    }

    pub fn translate_and_repair(&self, source_id: &str, python: &str) -> Result<PipelineRecord, PipelineError> {
        let mut rec = PipelineRecord::new(source_id, Some(python), "");
        let enriched = self.enricher.enrich(python);
        let prompt = self.templates.translate.render(&[("python_code", enriched.as_str())]);
        let result = self.round(&mut rec, "translate", IterationKind::Translate, prompt, &|_| None);
        if let Some(last) = rec.transcript.last() {
            rec.dafny_text = extract_code(&last.response);
        }
        match result {
            Ok((Round::Accepted, _)) => {
                rec.status = Status::Verified;
                rec.completed_stages.push("translate".into());
            }
            Ok((Round::Exhausted, _)) => {
                rec.status = Status::FailedMaxIter;
                rec.failure = Some(format!("not verified after {} repair rounds", self.max_iter));
            }
            Err(source) => return Err(unavailable(source, rec)),
        }
        Ok(rec)
    }

    /// Adds contracts to the main unit, then to each other unit, verifying
    /// with a fresh repair budget per stage. Stops at the first stage that
    /// exhausts its budget and keeps the last accepted program.
    pub fn staged_spec_insertion(
        &self,
        source_id: &str,
        dafny: &SourceFile,
        python: Option<&str>,
    ) -> Result<PipelineRecord, PipelineError> {
        let mut rec = PipelineRecord::new(source_id, python, &dafny.text);
        let Some((main, subs)) = split_main(dafny) else {
            rec.status = Status::FailedUnsupported;
            rec.failure = Some("no method or function to annotate".into());
            return Ok(rec);
        };
        let baseline = self.gateway.verify(&dafny.text);
        if baseline.verdict != Verdict::Verified {
            rec.status = Status::FailedUnsupported;
            rec.failure = Some(format!("input does not verify: {:?}", baseline.verdict));
            return Ok(rec);
        }
        let stages = std::iter::once(format!("main:{main}")).chain(subs.iter().map(|s| format!("sub:{s}")));
        for stage in stages {
            let unit = stage.split_once(':').map(|(_, u)| u.to_string()).unwrap();
            let prompt = self.templates.insert_spec.render(&[
                ("dafny_program", rec.dafny_text.trim_end()),
                ("target_unit", unit.as_str()),
                ("python_code", python.unwrap_or_default()),
            ]);
            let complaint = |code: &str| {
                SourceFile::parse(code)
                    .unit(&unit)
                    .is_none()
                    .then(|| format!("`{unit}` is missing from the program"))
            };
            match self.round(&mut rec, &stage, IterationKind::InsertSpec, prompt, &complaint) {
                Ok((Round::Accepted, code)) => {
                    rec.dafny_text = code;
                    rec.completed_stages.push(stage);
                }
                Ok((Round::Exhausted, _)) => {
                    rec.status = Status::FailedMaxIter;
                    rec.failure = Some(format!("stage {stage} not verified after {} repair rounds", self.max_iter));
                    return Ok(rec);
                }
                Err(source) => return Err(unavailable(source, rec)),
            }
        }
        rec.status = Status::Verified;
        Ok(rec)
    }

    /// Runs [`Self::translate_and_repair`] over independent sources with at
    /// most `max_parallel` in flight; results are positional.
    pub fn translate_batch(
        &self,
        sources: &[(String, String)],
        max_parallel: usize,
    ) -> Vec<Result<PipelineRecord, PipelineError>> {
        let next = AtomicUsize::new(0);
        let slots: Mutex<Vec<Option<Result<PipelineRecord, PipelineError>>>> =
            Mutex::new((0..sources.len()).map(|_| None).collect());
        thread::scope(|s| {
            for _ in 0..max_parallel.max(1).min(sources.len()) {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some((id, py)) = sources.get(i) else { break };
                    let r = self.translate_and_repair(id, py);
                    slots.lock().unwrap()[i] = Some(r);
                });
            }
        });
        slots.into_inner().unwrap().into_iter().map(|r| r.expect("every source ran")).collect()
    }
}

fn unavailable(source: ChatError, mut rec: PipelineRecord) -> PipelineError {
    rec.failure = Some(source.to_string());
    PipelineError::ClientUnavailable {
        source,
        partial: Box::new(rec),
    }
}
