//! Formal-to-informal translation of theorem records.
//!
//! Each theorem is rendered into a prompt carrying its formal statement, its
//! docstring and the definitions it links to; the generator answers with an
//! informal name and statement. The pair is then combined with the formal
//! statement into the bilingual document that gets embedded.

use std::collections::HashMap;
use std::io::{self, BufRead, Write};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::corpus::TheoremRecord;
use crate::embedding::DocFormat;
use crate::hash::sha256_hex;
use crate::provider::{GenerationRequest, ProviderError, TextGenerator};

/// Bumped whenever the prompt wording changes, so cached translations made
/// with older wording are not mistaken for current ones.
pub const PROMPT_TEMPLATE_VERSION: &str = "informalize-v1";

pub const INFORMALIZE_DIRECTIVE_MARKER: &str =
    "Answer with exactly two lines and nothing else:";

const PREAMBLE: &str = "You are an expert in Lean 4 and its mathematical library mathlib4. \
Translate the formal theorem below into natural language for a mathematician who does not \
read Lean. Use the documentation and the related definitions to expand notation and \
library-specific names (for example, write \"dependent if-then-else\" rather than \"dite\"). \
Keep the informal statement mathematically equivalent to the formal one, and write \
mathematical expressions in LaTeX.";

const FORMAT_REMINDER: &str = "\n\nYour previous answer did not follow the required format. \
Reply with exactly two lines, the first starting with `INFORMAL NAME:` and the second with \
`INFORMAL STATEMENT:`.";

/// Builds the informalization prompt: preamble, formal statement, docstring
/// (when present), one block per linked definition, and the output directive.
pub fn build_informalization_prompt(record: &TheoremRecord) -> String {
    let mut p = String::with_capacity(1024 + record.formal_statement.len());
    p.push_str(PREAMBLE);
    p.push_str("\n\nTheorem name: ");
    p.push_str(&record.name);
    p.push_str("\n\nFormal statement:\n```\n");
    p.push_str(&record.formal_statement);
    p.push_str("\n```\n");
    if let Some(doc) = &record.docstring {
        p.push_str("\nDocumentation:\n```\n");
        p.push_str(doc);
        p.push_str("\n```\n");
    }
    if !record.dependencies.is_empty() {
        p.push_str("\nDefinitions referenced in the statement:\n");
        for dep in &record.dependencies {
            p.push_str("\nDefinition `");
            p.push_str(&dep.name);
            p.push_str("`:\n```\n");
            p.push_str(&dep.statement);
            p.push_str("\n```\n");
            if let Some(doc) = &dep.docstring {
                p.push_str("Definition documentation:\n```\n");
                p.push_str(doc);
                p.push_str("\n```\n");
            }
        }
    }
    p.push('\n');
    p.push_str(INFORMALIZE_DIRECTIVE_MARKER);
    p.push_str("\nINFORMAL NAME: <a short descriptive name for the theorem>\n");
    p.push_str("INFORMAL STATEMENT: <the theorem stated in natural language>\n");
    p
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InformalPair {
    pub theorem_id: String,
    pub informal_name: String,
    pub informal_statement: String,
}

impl InformalPair {
    /// Normalizes the name to a single line with colons replaced by hyphens,
    /// so the `name:statement` document format stays unambiguous.
    pub fn new(theorem_id: impl Into<String>, name: &str, statement: &str) -> Self {
        InformalPair {
            theorem_id: theorem_id.into(),
            informal_name: sanitize_name(name),
            informal_statement: statement.trim().to_string(),
        }
    }
}

pub(crate) fn sanitize_name(name: &str) -> String {
    name.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .replace(':', "-")
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FormatError {
    #[error("response has no `{0}` line")]
    MissingLabel(&'static str),
    #[error("`{0}` is empty")]
    EmptyField(&'static str),
}

/// Splits a response into labeled fields. Labels match case-insensitively at
/// the start of a line; a field's value runs until the next label.
pub(crate) fn labeled_fields<'a>(
    text: &str,
    labels: &[&'a str],
) -> HashMap<&'a str, String> {
    let mut fields: HashMap<&str, String> = HashMap::new();
    let mut current: Option<&str> = None;
    for line in text.lines() {
        let trimmed = line.trim_start().trim_start_matches("**");
        let hit = labels.iter().find(|l| {
            trimmed.get(..l.len()).is_some_and(|p| p.eq_ignore_ascii_case(l))
                && trimmed[l.len()..].trim_start_matches("**").starts_with(':')
        });
        if let Some(label) = hit {
            let rest = trimmed[label.len()..].trim_start_matches("**");
            let value = rest[1..].trim_start_matches("**");
            current = Some(label);
            fields.insert(label, value.trim().to_string());
        } else if let Some(label) = current {
            let v = fields.get_mut(label).expect("current label present");
            v.push('\n');
            v.push_str(line);
        }
    }
    for v in fields.values_mut() {
        *v = v.trim().to_string();
    }
    fields
}

/// Extracts `(informal name, informal statement)` from a generator response.
pub fn parse_generation(text: &str) -> Result<(String, String), FormatError> {
    const NAME: &str = "INFORMAL NAME";
    const STATEMENT: &str = "INFORMAL STATEMENT";
    let mut fields = labeled_fields(text, &[NAME, STATEMENT]);
    let name = fields.remove(NAME).ok_or(FormatError::MissingLabel(NAME))?;
    let statement = fields
        .remove(STATEMENT)
        .ok_or(FormatError::MissingLabel(STATEMENT))?;
    if name.is_empty() {
        return Err(FormatError::EmptyField(NAME));
    }
    if statement.is_empty() {
        return Err(FormatError::EmptyField(STATEMENT));
    }
    Ok((name, statement))
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum InformalizeError {
    #[error("{theorem_id}: {source}")]
    Provider {
        theorem_id: String,
        source: ProviderError,
    },
    #[error("{theorem_id}: unusable response after retry: {source}")]
    Format {
        theorem_id: String,
        source: FormatError,
    },
}

/// Asks `provider` for an informal translation of `record`. A malformed
/// answer is retried once with a format reminder; a second failure is an
/// error.
pub fn informalize(
    record: &TheoremRecord,
    provider: &dyn TextGenerator,
) -> Result<InformalPair, InformalizeError> {
    informalize_prompt(record, &build_informalization_prompt(record), provider)
}

fn informalize_prompt(
    record: &TheoremRecord,
    prompt: &str,
    provider: &dyn TextGenerator,
) -> Result<InformalPair, InformalizeError> {
    let provider_err = |source| InformalizeError::Provider {
        theorem_id: record.id.clone(),
        source,
    };
    let first = provider
        .generate(&GenerationRequest::new(prompt))
        .map_err(provider_err)?;
    let parsed = match parse_generation(&first) {
        Ok(p) => p,
        Err(_) => {
            let retry = GenerationRequest::new(format!("{prompt}{FORMAT_REMINDER}"));
            let second = provider.generate(&retry).map_err(provider_err)?;
            parse_generation(&second).map_err(|source| InformalizeError::Format {
                theorem_id: record.id.clone(),
                source,
            })?
        }
    };
    Ok(InformalPair::new(record.id.clone(), &parsed.0, &parsed.1))
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("informal pair is for `{pair}` but the record is `{record}`")]
pub struct IdMismatch {
    pub record: String,
    pub pair: String,
}

/// The bilingual document: formal statement, newline, `name:statement`.
pub fn format_corpus_entry(
    record: &TheoremRecord,
    pair: &InformalPair,
) -> Result<String, IdMismatch> {
    if record.id != pair.theorem_id {
        return Err(IdMismatch {
            record: record.id.clone(),
            pair: pair.theorem_id.clone(),
        });
    }
    Ok(format!(
        "{}\n{}:{}",
        record.formal_statement, pair.informal_name, pair.informal_statement
    ))
}

/// The informal-only document, `name: statement`.
pub fn format_informal_entry(pair: &InformalPair) -> String {
    format!("{}: {}", pair.informal_name, pair.informal_statement)
}

/// The document text embedded for `record` under `format`.
pub fn document_text(
    record: &TheoremRecord,
    pair: &InformalPair,
    format: DocFormat,
) -> Result<String, IdMismatch> {
    match format {
        DocFormat::Bilingual => format_corpus_entry(record, pair),
        DocFormat::Formal => Ok(record.formal_statement.clone()),
        DocFormat::Informal if record.id != pair.theorem_id => Err(IdMismatch {
            record: record.id.clone(),
            pair: pair.theorem_id.clone(),
        }),
        DocFormat::Informal => Ok(format_informal_entry(pair)),
    }
}

/// Inverse of [`format_corpus_entry`] for single-line formal statements:
/// splits at the first newline, then at the first colon.
pub fn split_corpus_entry(doc: &str) -> Option<(&str, &str, &str)> {
    let (formal, informal) = doc.split_once('\n')?;
    let (name, statement) = informal.split_once(':')?;
    Some((formal, name, statement))
}

/// One line of the informalization cache.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CachedPair {
    pub theorem_id: String,
    pub informal_name: String,
    pub informal_statement: String,
    pub provider_id: String,
    pub prompt_hash: String,
}

impl CachedPair {
    pub fn pair(&self) -> InformalPair {
        InformalPair {
            theorem_id: self.theorem_id.clone(),
            informal_name: self.informal_name.clone(),
            informal_statement: self.informal_statement.clone(),
        }
    }
}

pub fn prompt_hash(prompt: &str) -> String {
    sha256_hex(format!("{PROMPT_TEMPLATE_VERSION}\n{prompt}").as_bytes())
}

pub fn read_pairs<R: BufRead>(input: R) -> io::Result<Vec<CachedPair>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry = serde_json::from_str(&line).map_err(|e| {
            io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1))
        })?;
        out.push(entry);
    }
    Ok(out)
}

pub fn write_pairs<W: Write>(pairs: &[CachedPair], mut out: W) -> io::Result<()> {
    for p in pairs {
        serde_json::to_writer(&mut out, p)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Spaces provider calls at least `interval` apart across all workers.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Duration,
    next: Mutex<Option<Instant>>,
}

impl RateLimiter {
    pub fn new(interval: Duration) -> Self {
        RateLimiter {
            interval,
            next: Mutex::new(None),
        }
    }

    pub fn acquire(&self) {
        if self.interval.is_zero() {
            return;
        }
        let wait = {
            let mut next = self.next.lock();
            let now = Instant::now();
            let slot = next.map_or(now, |n| n.max(now));
            *next = Some(slot + self.interval);
            slot - now
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

#[derive(Debug, Clone)]
pub struct InformalizeOptions {
    pub concurrency: usize,
    pub min_call_interval: Duration,
}

impl Default for InformalizeOptions {
    fn default() -> Self {
        InformalizeOptions {
            concurrency: 4,
            min_call_interval: Duration::ZERO,
        }
    }
}

#[derive(Debug)]
pub struct InformalizeRun {
    /// One slot per input record; `None` where work stopped after a failure.
    pub entries: Vec<Option<CachedPair>>,
    pub reused: usize,
    pub generated: usize,
    pub error: Option<InformalizeError>,
}

impl InformalizeRun {
    pub fn completed(&self) -> impl Iterator<Item = &CachedPair> {
        self.entries.iter().flatten()
    }
}

/// Informalizes `records` with bounded concurrency, reusing `cache` entries
/// whose prompt hash and provider match. Stops issuing new calls after the
/// first failure; completed entries are kept so a rerun resumes.
pub fn informalize_all(
    records: &[TheoremRecord],
    provider: &dyn TextGenerator,
    cache: &[CachedPair],
    opts: &InformalizeOptions,
) -> InformalizeRun {
    let cached: HashMap<(&str, &str), &CachedPair> = cache
        .iter()
        .map(|c| ((c.theorem_id.as_str(), c.prompt_hash.as_str()), c))
        .collect();
    let prompts: Vec<String> = records.iter().map(build_informalization_prompt).collect();
    let hashes: Vec<String> = prompts.iter().map(|p| prompt_hash(p)).collect();

    let mut entries: Vec<Option<CachedPair>> = vec![None; records.len()];
    let mut todo = Vec::new();
    let mut reused = 0;
    for (i, r) in records.iter().enumerate() {
        match cached.get(&(r.id.as_str(), hashes[i].as_str())) {
            Some(c) if c.provider_id == provider.id() => {
                entries[i] = Some((*c).clone());
                reused += 1;
            }
            _ => todo.push(i),
        }
    }

    let limiter = RateLimiter::new(opts.min_call_interval);
    let next = AtomicUsize::new(0);
    let failed = AtomicBool::new(false);
    let results: Mutex<Vec<(usize, CachedPair)>> = Mutex::new(Vec::new());
    let first_error: Mutex<Option<(usize, InformalizeError)>> = Mutex::new(None);
    let workers = opts.concurrency.max(1).min(todo.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                if failed.load(Ordering::SeqCst) {
                    break;
                }
                let n = next.fetch_add(1, Ordering::SeqCst);
                let Some(&i) = todo.get(n) else { break };
                limiter.acquire();
                match informalize_prompt(&records[i], &prompts[i], provider) {
                    Ok(pair) => results.lock().push((
                        i,
                        CachedPair {
                            theorem_id: pair.theorem_id,
                            informal_name: pair.informal_name,
                            informal_statement: pair.informal_statement,
                            provider_id: provider.id().to_string(),
                            prompt_hash: hashes[i].clone(),
                        },
                    )),
                    Err(e) => {
                        failed.store(true, Ordering::SeqCst);
                        let mut slot = first_error.lock();
                        if slot.as_ref().is_none_or(|(j, _)| i < *j) {
                            *slot = Some((i, e));
                        }
                    }
                }
            });
        }
    });
    let results = results.into_inner();
    let generated = results.len();
    for (i, entry) in results {
        entries[i] = Some(entry);
    }
    InformalizeRun {
        entries,
        reused,
        generated,
        error: first_error.into_inner().map(|(_, e)| e),
    }
}
