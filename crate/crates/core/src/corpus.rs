//! Theorem-library ingestion.
//!
//! The interchange format is one JSON object per line:
//!
//! ```text
//! {"id":"Exists.choose_spec","name":"Exists.choose_spec","kind":"theorem",
//!  "statement":"theorem Exists.choose_spec {p : α → Prop} (P : ∃ a, p a) : p ([Exists.choose](Exists.choose) P)",
//!  "docstring":"...","source_path":"Mathlib/Logic/Basic.lean"}
//! ```
//!
//! Statements carry hyperlinks as `[display](target)` anchors. A record may
//! also list `dependencies` that an upstream scraper already resolved (for
//! targets outside the exported corpus); links to records inside the corpus
//! are resolved here, one level deep.

use std::collections::{HashMap, HashSet};
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TheoremKind {
    Theorem,
    Definition,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DefRecord {
    pub name: String,
    pub statement: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub docstring: Option<String>,
}

/// A hyperlink inside a statement: `start..end` is a character range of the
/// plain text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Link {
    pub start: usize,
    pub end: usize,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LinkedStatement {
    pub plain_text: String,
    pub links: Vec<Link>,
}

impl LinkedStatement {
    /// Re-renders the anchor markup this statement was extracted from.
    pub fn to_markup(&self) -> String {
        let mut out = String::with_capacity(self.plain_text.len() + 8 * self.links.len());
        let mut links = self.links.iter().peekable();
        let mut open: Option<&Link> = None;
        for (i, ch) in self.plain_text.chars().enumerate() {
            if let Some(link) = open {
                if link.end == i {
                    out.push_str("](");
                    out.push_str(&link.target);
                    out.push(')');
                    open = None;
                }
            }
            if open.is_none() {
                if let Some(link) = links.next_if(|l| l.start == i) {
                    out.push('[');
                    open = Some(link);
                }
            }
            out.push(ch);
        }
        if let Some(link) = open {
            out.push_str("](");
            out.push_str(&link.target);
            out.push(')');
        }
        out
    }
}

/// Anchor syntax that opened with `[display](` but never closed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnbalancedAnchor {
    /// Character offset of the opening `[` in the markup.
    pub offset: usize,
}

/// Strips `[display](target)` anchors, recording each as a link over its
/// display text. Brackets that do not form an anchor (Lean instance binders
/// such as `[Decidable P]`) are kept as plain text.
pub fn extract_links(markup: &str) -> (LinkedStatement, Vec<UnbalancedAnchor>) {
    let chars: Vec<char> = markup.chars().collect();
    let mut plain = String::with_capacity(markup.len());
    let mut plain_len = 0usize;
    let mut links = Vec::new();
    let mut issues = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if chars[i] == '[' {
            match scan_anchor(&chars, i) {
                AnchorScan::Anchor {
                    display,
                    target,
                    next,
                } => {
                    let start = plain_len;
                    for &c in display {
                        plain.push(c);
                    }
                    plain_len += display.len();
                    links.push(Link {
                        start,
                        end: plain_len,
                        target: target.iter().collect(),
                    });
                    i = next;
                    continue;
                }
                AnchorScan::Unbalanced => issues.push(UnbalancedAnchor { offset: i }),
                AnchorScan::NotAnchor => {}
            }
        }
        plain.push(chars[i]);
        plain_len += 1;
        i += 1;
    }
    (
        LinkedStatement {
            plain_text: plain,
            links,
        },
        issues,
    )
}

enum AnchorScan<'a> {
    Anchor {
        display: &'a [char],
        target: &'a [char],
        next: usize,
    },
    Unbalanced,
    NotAnchor,
}

fn scan_anchor(chars: &[char], open: usize) -> AnchorScan<'_> {
    let mut j = open + 1;
    while j < chars.len() && !matches!(chars[j], ']' | '[' | '\n') {
        j += 1;
    }
    if j >= chars.len() || chars[j] != ']' || j == open + 1 {
        return AnchorScan::NotAnchor;
    }
    let close = j;
    if chars.get(close + 1) != Some(&'(') {
        return AnchorScan::NotAnchor;
    }
    let target_start = close + 2;
    let mut k = target_start;
    while k < chars.len() && chars[k] != ')' {
        if chars[k].is_whitespace() || matches!(chars[k], '(' | '[' | ']') {
            return AnchorScan::Unbalanced;
        }
        k += 1;
    }
    if k >= chars.len() || k == target_start {
        return AnchorScan::Unbalanced;
    }
    AnchorScan::Anchor {
        display: &chars[open + 1..close],
        target: &chars[target_start..k],
        next: k + 1,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TheoremRecord {
    pub id: String,
    pub name: String,
    pub kind: TheoremKind,
    /// Statement with anchor markup stripped.
    pub formal_statement: String,
    /// Hyperlinks found in the statement, over `formal_statement` characters.
    pub links: Vec<Link>,
    pub docstring: Option<String>,
    pub dependencies: Vec<DefRecord>,
    pub source_path: String,
}

impl TheoremRecord {
    pub fn validate(&self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("field `id` is empty".into());
        }
        if self.name.trim().is_empty() {
            return Err("field `name` is empty".into());
        }
        if self.formal_statement.trim().is_empty() {
            return Err("field `statement` is empty".into());
        }
        let mut seen = HashSet::new();
        for dep in &self.dependencies {
            if dep.name.trim().is_empty() {
                return Err("dependency with empty `name`".into());
            }
            if !seen.insert(dep.name.as_str()) {
                return Err(format!("duplicate dependency `{}`", dep.name));
            }
        }
        Ok(())
    }

    pub fn link_targets(&self) -> Vec<String> {
        self.links.iter().map(|l| l.target.clone()).collect()
    }

    pub fn to_line(&self) -> String {
        let markup = LinkedStatement {
            plain_text: self.formal_statement.clone(),
            links: self.links.clone(),
        }
        .to_markup();
        let wire = WireRecord {
            id: Some(self.id.clone()),
            name: Some(self.name.clone()),
            kind: Some(self.kind),
            statement: Some(markup),
            docstring: self.docstring.clone(),
            source_path: Some(self.source_path.clone()),
            dependencies: self.dependencies.clone(),
        };
        serde_json::to_string(&wire).expect("record serialization cannot fail")
    }
}

#[derive(Serialize, Deserialize)]
struct WireRecord {
    id: Option<String>,
    name: Option<String>,
    kind: Option<TheoremKind>,
    statement: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    docstring: Option<String>,
    source_path: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    dependencies: Vec<DefRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticKind {
    Schema,
    UnbalancedAnchor,
    DuplicateId,
    UnresolvedLink,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    /// 1-based input line, when the diagnostic comes from parsing.
    pub line: Option<usize>,
    pub record_id: Option<String>,
    pub message: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if let Some(line) = self.line {
            write!(f, "line {line}: ")?;
        }
        if let Some(id) = &self.record_id {
            write!(f, "{id}: ")?;
        }
        f.write_str(&self.message)
    }
}

#[derive(Debug, Default)]
pub struct ParsedCorpus {
    pub records: Vec<TheoremRecord>,
    pub diagnostics: Vec<Diagnostic>,
}

impl ParsedCorpus {
    pub fn schema_errors(&self) -> usize {
        self.diagnostics
            .iter()
            .filter(|d| d.kind == DiagnosticKind::Schema)
            .count()
    }
}

/// Parses the line-delimited interchange format. Every non-blank line yields
/// either a record or a schema diagnostic.
pub fn parse_corpus<R: BufRead>(input: R) -> io::Result<ParsedCorpus> {
    let mut out = ParsedCorpus::default();
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let line_no = idx + 1;
        match parse_line(&line) {
            Ok((record, issues)) => {
                for issue in issues {
                    out.diagnostics.push(Diagnostic {
                        kind: DiagnosticKind::UnbalancedAnchor,
                        line: Some(line_no),
                        record_id: Some(record.id.clone()),
                        message: format!(
                            "unbalanced anchor at character {}; kept as plain text",
                            issue.offset
                        ),
                    });
                }
                out.records.push(record);
            }
            Err(message) => out.diagnostics.push(Diagnostic {
                kind: DiagnosticKind::Schema,
                line: Some(line_no),
                record_id: None,
                message,
            }),
        }
    }
    Ok(out)
}

fn parse_line(line: &str) -> Result<(TheoremRecord, Vec<UnbalancedAnchor>), String> {
    let wire: WireRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    fn required<T>(v: Option<T>, field: &str) -> Result<T, String> {
        v.ok_or_else(|| format!("missing field `{field}`"))
    }
    let statement = required(wire.statement, "statement")?;
    let (linked, issues) = extract_links(&statement);
    let record = TheoremRecord {
        id: required(wire.id, "id")?,
        name: required(wire.name, "name")?,
        kind: required(wire.kind, "kind")?,
        formal_statement: linked.plain_text,
        links: linked.links,
        docstring: wire.docstring,
        dependencies: wire.dependencies,
        source_path: required(wire.source_path, "source_path")?,
    };
    record.validate()?;
    Ok((record, issues))
}

pub fn write_corpus<W: Write>(records: &[TheoremRecord], mut out: W) -> io::Result<()> {
    for r in records {
        out.write_all(r.to_line().as_bytes())?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Attaches, for each record, the corpus records named by its link targets
/// as [`DefRecord`]s. One level deep; self-links are ignored.
pub fn resolve_dependencies(
    mut records: Vec<TheoremRecord>,
    link_targets: &[Vec<String>],
) -> (Vec<TheoremRecord>, Vec<Diagnostic>) {
    let by_id: HashMap<String, DefRecord> = records
        .iter()
        .map(|r| {
            (
                r.id.clone(),
                DefRecord {
                    name: r.id.clone(),
                    statement: r.formal_statement.clone(),
                    docstring: r.docstring.clone(),
                },
            )
        })
        .collect();
    let mut diagnostics = Vec::new();
    for (record, targets) in records.iter_mut().zip(link_targets) {
        for target in targets {
            if *target == record.id || record.dependencies.iter().any(|d| d.name == *target) {
                continue;
            }
            match by_id.get(target) {
                Some(def) => record.dependencies.push(def.clone()),
                None => diagnostics.push(Diagnostic {
                    kind: DiagnosticKind::UnresolvedLink,
                    line: None,
                    record_id: Some(record.id.clone()),
                    message: format!("link target `{target}` is not in the corpus"),
                }),
            }
        }
    }
    (records, diagnostics)
}

/// A deduplicated, dependency-resolved set of records.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    records: Vec<TheoremRecord>,
    by_id: HashMap<String, usize>,
}

impl Corpus {
    /// Deduplicates by id (last occurrence wins) and resolves hyperlinks.
    pub fn build(records: Vec<TheoremRecord>) -> (Corpus, Vec<Diagnostic>) {
        let mut diagnostics = Vec::new();
        let mut last: HashMap<&str, usize> = HashMap::new();
        for (i, r) in records.iter().enumerate() {
            last.insert(r.id.as_str(), i);
        }
        let keep: Vec<bool> = records
            .iter()
            .enumerate()
            .map(|(i, r)| last[r.id.as_str()] == i)
            .collect();
        let mut deduped = Vec::with_capacity(last.len());
        for (r, keep) in records.into_iter().zip(keep) {
            if keep {
                deduped.push(r);
            } else {
                diagnostics.push(Diagnostic {
                    kind: DiagnosticKind::DuplicateId,
                    line: None,
                    record_id: Some(r.id.clone()),
                    message: "duplicate id; a later record replaces this one".into(),
                });
            }
        }
        let targets: Vec<Vec<String>> = deduped.iter().map(|r| r.link_targets()).collect();
        let (resolved, unresolved) = resolve_dependencies(deduped, &targets);
        diagnostics.extend(unresolved);
        (Corpus::from_resolved(resolved), diagnostics)
    }

    /// Wraps records that are already deduplicated and resolved, such as the
    /// output of a previous ingest run.
    pub fn from_resolved(records: Vec<TheoremRecord>) -> Corpus {
        let by_id = records
            .iter()
            .enumerate()
            .map(|(i, r)| (r.id.clone(), i))
            .collect();
        Corpus { records, by_id }
    }

    pub fn load<R: BufRead>(input: R) -> io::Result<(Corpus, Vec<Diagnostic>)> {
        let parsed = parse_corpus(input)?;
        let (corpus, mut diags) = Corpus::build(parsed.records);
        let mut all = parsed.diagnostics;
        all.append(&mut diags);
        Ok((corpus, all))
    }

    pub fn get(&self, id: &str) -> Option<&TheoremRecord> {
        self.by_id.get(id).map(|&i| &self.records[i])
    }

    pub fn records(&self) -> &[TheoremRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records that enter the search index: theorems only.
    pub fn searchable(&self) -> impl Iterator<Item = &TheoremRecord> {
        self.records
            .iter()
            .filter(|r| r.kind == TheoremKind::Theorem)
    }
}
