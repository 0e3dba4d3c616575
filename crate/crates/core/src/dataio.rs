//! Reading, validating and writing the task JSON formats.
//!
//! Records look like
//! `{"ID": …, "Text": …, "Aspect_VA": [{"Aspect": …, "VA": "7.25#6.75"}]}`
//! with `Triplet` / `Quadruplet` lists for the extraction subtasks. Input can
//! be a single JSON array or one record per line; output keeps the shape
//! that was read.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::Read;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::model::{
    normalize_va, round_hundredths, AnnotatedRecord, Annotation, AspectEntry, Category, Domain,
    Language, ModelError, NormalizedVA, Review, SentimentTuple, SplitKind, Subtask, Term, VAPair,
};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("JSON syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("malformed VA string {0:?}: expected V#A")]
    VaFormat(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{} hard validation error(s); first: {}", .0.iter().filter(|i| i.is_error()).count(), .0.iter().find(|i| i.is_error()).map(|i| i.to_string()).unwrap_or_default())]
    Invalid(Vec<Issue>),
    #[error("missing predictions for {} row(s): {}", .0.len(), preview_keys(.0))]
    Incomplete(Vec<(String, String)>),
    #[error("prediction rows reference unknown keys: {}", preview_keys(.0))]
    UnknownRows(Vec<(String, String)>),
    #[error("entry {id}: payload shape does not match {subtask}")]
    PayloadShape { id: String, subtask: Subtask },
    #[error("serialization failed: {0}")]
    Serialize(String),
}

fn preview_keys(keys: &[(String, String)]) -> String {
    let mut out: Vec<String> = keys
        .iter()
        .take(5)
        .map(|(id, a)| format!("({id}, {a})"))
        .collect();
    if keys.len() > 5 {
        out.push(format!("… {} more", keys.len() - 5));
    }
    out.join(", ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

/// One validation finding, pinned to a line or record position.
#[derive(Debug, Clone, PartialEq)]
pub struct Issue {
    pub locator: String,
    pub severity: Severity,
    pub message: String,
}

impl Issue {
    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{tag} [{}]: {}", self.locator, self.message)
    }
}

/// Outer shape of a data file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Container {
    #[default]
    JsonArray,
    JsonLines,
}

/// Where a split comes from; the JSON records themselves carry no
/// language or domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitMeta {
    pub language: Language,
    pub domain: Domain,
    pub split: SplitKind,
}

impl Default for SplitMeta {
    fn default() -> Self {
        SplitMeta {
            language: Language::Eng,
            domain: Domain::Restaurant,
            split: SplitKind::Train,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub meta: SplitMeta,
    pub subtask: Subtask,
    pub container: Container,
    pub records: Vec<AnnotatedRecord>,
}

impl DatasetSplit {
    pub fn new(meta: SplitMeta, subtask: Subtask, records: Vec<AnnotatedRecord>) -> Self {
        DatasetSplit {
            meta,
            subtask,
            container: Container::JsonArray,
            records,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// True when any aspect or opinion is the NULL marker.
    pub fn has_null_labels(&self) -> bool {
        self.records.iter().any(|r| match &r.annotation {
            Annotation::Aspects(a) => a.iter().any(|e| e.aspect.is_null()),
            Annotation::Tuples(t) => t.iter().any(|t| t.aspect.is_null() || t.opinion.is_null()),
        })
    }
}

/// Result of reading a file: the records that validated plus every finding.
#[derive(Debug, Clone)]
pub struct LoadReport {
    pub split: DatasetSplit,
    pub issues: Vec<Issue>,
    pub total_records: usize,
}

impl LoadReport {
    pub fn has_errors(&self) -> bool {
        self.issues.iter().any(Issue::is_error)
    }

    pub fn errors(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.is_error())
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| !i.is_error())
    }

    /// The split, or all issues if any hard error was found.
    pub fn into_split(self) -> Result<DatasetSplit, DataError> {
        if self.has_errors() {
            Err(DataError::Invalid(self.issues))
        } else {
            Ok(self.split)
        }
    }
}

pub fn parse_va_string(s: &str) -> Result<VAPair, DataError> {
    let (v, a) = s
        .split_once('#')
        .filter(|(_, a)| !a.contains('#'))
        .ok_or_else(|| DataError::VaFormat(s.to_string()))?;
    let num = |part: &str| -> Result<f64, DataError> {
        let well_formed = !part.is_empty()
            && part.chars().all(|c| c.is_ascii_digit() || c == '.')
            && part.chars().filter(|&c| c == '.').count() <= 1;
        if !well_formed {
            return Err(DataError::VaFormat(s.to_string()));
        }
        part.parse::<f64>()
            .map_err(|_| DataError::VaFormat(s.to_string()))
    };
    Ok(VAPair::new(num(v)?, num(a)?)?)
}

pub fn format_va_string(va: VAPair) -> String {
    format!(
        "{}#{}",
        format_hundredths(round_hundredths(va.valence())),
        format_hundredths(round_hundredths(va.arousal()))
    )
}

/// Renders an integer count of hundredths as a two-decimal string.
pub(crate) fn format_hundredths(h: i64) -> String {
    let sign = if h < 0 { "-" } else { "" };
    let h = h.unsigned_abs();
    format!("{sign}{}.{:02}", h / 100, h % 100)
}

mod va_wire {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(va: &VAPair, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_va_string(*va))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<VAPair, D::Error> {
        let raw = String::deserialize(d)?;
        parse_va_string(&raw).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct WireAspectVa {
    #[serde(rename = "Aspect")]
    aspect: Term,
    #[serde(rename = "VA", with = "va_wire")]
    va: VAPair,
}

#[derive(Debug, Serialize, Deserialize)]
struct WireTuple {
    #[serde(rename = "Aspect")]
    aspect: Term,
    #[serde(rename = "Category", default, skip_serializing_if = "Option::is_none")]
    category: Option<Category>,
    #[serde(rename = "Opinion")]
    opinion: Term,
    #[serde(rename = "VA", with = "va_wire")]
    va: VAPair,
}

#[derive(Debug, Serialize, Deserialize)]
struct WireRecord {
    #[serde(rename = "ID")]
    id: String,
    #[serde(rename = "Text", default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
    #[serde(rename = "Aspect_VA", default, skip_serializing_if = "Option::is_none")]
    aspect_va: Option<Vec<WireAspectVa>>,
    #[serde(rename = "Triplet", default, skip_serializing_if = "Option::is_none")]
    triplet: Option<Vec<WireTuple>>,
    #[serde(
        rename = "Quadruplet",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    quadruplet: Option<Vec<WireTuple>>,
}

impl From<&SentimentTuple> for WireTuple {
    fn from(t: &SentimentTuple) -> Self {
        WireTuple {
            aspect: t.aspect.clone(),
            category: t.category.clone(),
            opinion: t.opinion.clone(),
            va: t.va,
        }
    }
}

impl From<WireTuple> for SentimentTuple {
    fn from(t: WireTuple) -> Self {
        SentimentTuple {
            aspect: t.aspect,
            opinion: t.opinion,
            category: t.category,
            va: t.va,
        }
    }
}

/// A prediction or gold entry in submission shape.
#[derive(Debug, Clone, PartialEq)]
pub struct SubmissionEntry {
    pub id: String,
    /// Kept when re-emitting gold files; omitted in predictions.
    pub text: Option<String>,
    pub payload: Annotation,
}

impl SubmissionEntry {
    pub fn from_record(record: &AnnotatedRecord, include_text: bool) -> Self {
        SubmissionEntry {
            id: record.review.id.clone(),
            text: include_text.then(|| record.review.text.clone()),
            payload: record.annotation.clone(),
        }
    }

    fn to_wire(&self, subtask: Subtask) -> Result<WireRecord, DataError> {
        let mut wire = WireRecord {
            id: self.id.clone(),
            text: self.text.clone(),
            aspect_va: None,
            triplet: None,
            quadruplet: None,
        };
        let shape_err = || DataError::PayloadShape {
            id: self.id.clone(),
            subtask,
        };
        match (&self.payload, subtask) {
            (Annotation::Aspects(entries), Subtask::Asr) => {
                wire.aspect_va = Some(
                    entries
                        .iter()
                        .map(|e| WireAspectVa {
                            aspect: e.aspect.clone(),
                            va: e.va,
                        })
                        .collect(),
                );
            }
            (Annotation::Tuples(tuples), Subtask::Aste) => {
                if tuples.iter().any(|t| t.category.is_some()) {
                    return Err(shape_err());
                }
                wire.triplet = Some(tuples.iter().map(WireTuple::from).collect());
            }
            (Annotation::Tuples(tuples), Subtask::Asqp) => {
                if tuples.iter().any(|t| t.category.is_none()) {
                    return Err(shape_err());
                }
                wire.quadruplet = Some(tuples.iter().map(WireTuple::from).collect());
            }
            _ => return Err(shape_err()),
        }
        Ok(wire)
    }
}

/// Parsed submission-shaped file (IDs plus payloads, `Text` optional).
#[derive(Debug, Clone)]
pub struct SubmissionDoc {
    pub subtask: Subtask,
    pub container: Container,
    pub entries: Vec<SubmissionEntry>,
    pub issues: Vec<Issue>,
}

impl SubmissionDoc {
    pub fn has_errors(&self) -> bool {
        self.issues.iter().any(Issue::is_error)
    }
}

struct RawItem {
    locator: String,
    value: Result<Value, String>,
}

fn read_text(mut source: impl Read) -> Result<String, DataError> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    Ok(text)
}

fn split_container(text: &str) -> Result<(Container, Vec<RawItem>), DataError> {
    let trimmed = text.trim_start_matches('\u{feff}');
    if trimmed.trim_start().starts_with('[') {
        let values: Vec<Value> = serde_json::from_str(trimmed).map_err(|e| DataError::Syntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        let items = values
            .into_iter()
            .enumerate()
            .map(|(i, v)| RawItem {
                locator: format!("record {}", i + 1),
                value: Ok(v),
            })
            .collect();
        return Ok((Container::JsonArray, items));
    }
    let items = trimmed
        .lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(i, line)| RawItem {
            locator: format!("line {}", i + 1),
            value: serde_json::from_str::<Value>(line).map_err(|e| e.to_string()),
        })
        .collect();
    Ok((Container::JsonLines, items))
}

fn decode_wire(item: RawItem) -> Result<(String, WireRecord), Issue> {
    let err = |locator: &str, message: String| Issue {
        locator: locator.to_string(),
        severity: Severity::Error,
        message,
    };
    let value = item
        .value
        .map_err(|m| err(&item.locator, format!("JSON syntax: {m}")))?;
    let id_hint = value
        .get("ID")
        .and_then(Value::as_str)
        .map(|id| format!("{} (ID {id})", item.locator))
        .unwrap_or(item.locator);
    let wire: WireRecord =
        serde_json::from_value(value).map_err(|e| err(&id_hint, e.to_string()))?;
    Ok((id_hint, wire))
}

fn wire_payload(
    wire: WireRecord,
    subtask: Subtask,
) -> Result<(String, Option<String>, Annotation), String> {
    let WireRecord {
        id,
        text,
        aspect_va,
        triplet,
        quadruplet,
    } = wire;
    let present: Vec<&str> = [
        aspect_va.as_ref().map(|_| "Aspect_VA"),
        triplet.as_ref().map(|_| "Triplet"),
        quadruplet.as_ref().map(|_| "Quadruplet"),
    ]
    .into_iter()
    .flatten()
    .collect();
    if present.len() > 1 {
        return Err(format!(
            "record carries several label fields: {}",
            present.join(", ")
        ));
    }
    let annotation = match subtask {
        Subtask::Asr => Annotation::Aspects(
            aspect_va
                .ok_or("missing field `Aspect_VA`")?
                .into_iter()
                .map(|w| AspectEntry {
                    aspect: w.aspect,
                    va: w.va,
                })
                .collect(),
        ),
        Subtask::Aste => {
            let tuples = triplet.ok_or("missing field `Triplet`")?;
            if tuples.iter().any(|t| t.category.is_some()) {
                return Err("field `Category` is not part of ASTE triplets".into());
            }
            Annotation::Tuples(tuples.into_iter().map(Into::into).collect())
        }
        Subtask::Asqp => {
            let tuples = quadruplet.ok_or("missing field `Quadruplet`")?;
            if let Some(i) = tuples.iter().position(|t| t.category.is_none()) {
                return Err(format!("quadruplet {i}: missing field `Category`"));
            }
            Annotation::Tuples(tuples.into_iter().map(Into::into).collect())
        }
    };
    if id.is_empty() {
        return Err("field `ID` is empty".into());
    }
    Ok((id, text, annotation))
}

fn substring_warnings(locator: &str, text: &str, annotation: &Annotation, out: &mut Vec<Issue>) {
    let mut check = |role: &str, term: &Term| {
        if let Term::Text(s) = term {
            if !text.contains(s.as_str()) {
                out.push(Issue {
                    locator: locator.to_string(),
                    severity: Severity::Warning,
                    message: format!("{role} {s:?} does not occur in Text"),
                });
            }
        }
    };
    match annotation {
        Annotation::Aspects(entries) => entries.iter().for_each(|e| check("aspect", &e.aspect)),
        Annotation::Tuples(tuples) => tuples.iter().for_each(|t| {
            check("aspect", &t.aspect);
            check("opinion", &t.opinion);
        }),
    }
}

/// Reads and validates a gold/labelled split.
///
/// Whole-document syntax errors abort; per-record problems are collected in
/// the report and the offending records are left out of the split.
pub fn load_split(
    source: impl Read,
    subtask: Subtask,
    meta: SplitMeta,
) -> Result<LoadReport, DataError> {
    let text = read_text(source)?;
    let (container, items) = split_container(&text)?;
    let total_records = items.len();
    let mut issues = Vec::new();
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for item in items {
        let (locator, wire) = match decode_wire(item) {
            Ok(ok) => ok,
            Err(issue) => {
                issues.push(issue);
                continue;
            }
        };
        let hard = |message: String| Issue {
            locator: locator.clone(),
            severity: Severity::Error,
            message,
        };
        let (id, text, annotation) = match wire_payload(wire, subtask) {
            Ok(p) => p,
            Err(m) => {
                issues.push(hard(m));
                continue;
            }
        };
        let Some(text) = text else {
            issues.push(hard("missing field `Text`".into()));
            continue;
        };
        let record = AnnotatedRecord {
            review: Review {
                id,
                text,
                language: meta.language,
                domain: meta.domain,
            },
            subtask,
            annotation,
        };
        if let Err(m) = record.validate() {
            issues.push(hard(m));
            continue;
        }
        if !seen.insert(record.review.id.clone()) {
            issues.push(hard(format!("duplicate ID {:?}", record.review.id)));
            continue;
        }
        substring_warnings(
            &locator,
            &record.review.text,
            &record.annotation,
            &mut issues,
        );
        records.push(record);
    }
    Ok(LoadReport {
        split: DatasetSplit {
            meta,
            subtask,
            container,
            records,
        },
        issues,
        total_records,
    })
}

/// Reads a submission-shaped file (predictions or gold); `Text` is optional.
pub fn load_submission(source: impl Read, subtask: Subtask) -> Result<SubmissionDoc, DataError> {
    let text = read_text(source)?;
    let (container, items) = split_container(&text)?;
    let mut issues = Vec::new();
    let mut entries: Vec<SubmissionEntry> = Vec::new();
    let mut seen = HashSet::new();
    for item in items {
        let (locator, wire) = match decode_wire(item) {
            Ok(ok) => ok,
            Err(issue) => {
                issues.push(issue);
                continue;
            }
        };
        match wire_payload(wire, subtask) {
            Ok((id, text, payload)) => {
                if !seen.insert(id.clone()) {
                    issues.push(Issue {
                        locator,
                        severity: Severity::Error,
                        message: format!("duplicate ID {id:?}"),
                    });
                    continue;
                }
                entries.push(SubmissionEntry { id, text, payload });
            }
            Err(message) => issues.push(Issue {
                locator,
                severity: Severity::Error,
                message,
            }),
        }
    }
    Ok(SubmissionDoc {
        subtask,
        container,
        entries,
        issues,
    })
}

/// An unlabeled ASR query: review text plus the aspects to score.
#[derive(Debug, Clone, PartialEq)]
pub struct AsrQuery {
    pub id: String,
    pub text: String,
    pub aspects: Vec<Term>,
}

#[derive(Deserialize)]
struct WireQuery {
    #[serde(rename = "ID")]
    id: String,
    #[serde(rename = "Text")]
    text: String,
    #[serde(rename = "Aspect", default)]
    aspect: Option<Vec<Term>>,
    #[serde(rename = "Aspect_VA", default)]
    aspect_va: Option<Vec<WireAspectVa>>,
}

/// Reads ASR inputs for inference. Accepts both the unlabeled form
/// (`"Aspect": [...]`) and labelled files, whose VA values are ignored.
pub fn load_asr_queries(source: impl Read) -> Result<(Container, Vec<AsrQuery>), DataError> {
    let text = read_text(source)?;
    let (container, items) = split_container(&text)?;
    let mut issues = Vec::new();
    let mut out = Vec::new();
    for item in items {
        let locator = item.locator.clone();
        let parsed = item
            .value
            .and_then(|v| serde_json::from_value::<WireQuery>(v).map_err(|e| e.to_string()))
            .and_then(|q| {
                let aspects = match (q.aspect, q.aspect_va) {
                    (Some(a), _) => a,
                    (None, Some(va)) => va.into_iter().map(|w| w.aspect).collect(),
                    (None, None) => return Err("missing field `Aspect`".to_string()),
                };
                if aspects.is_empty() {
                    return Err("no aspects to score".to_string());
                }
                Ok(AsrQuery {
                    id: q.id,
                    text: q.text,
                    aspects,
                })
            });
        match parsed {
            Ok(q) => out.push(q),
            Err(message) => issues.push(Issue {
                locator,
                severity: Severity::Error,
                message,
            }),
        }
    }
    if issues.is_empty() {
        Ok((container, out))
    } else {
        Err(DataError::Invalid(issues))
    }
}

/// A review to run extraction on. Extra fields (labels) are ignored.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct TextInput {
    #[serde(rename = "ID")]
    pub id: String,
    #[serde(rename = "Text")]
    pub text: String,
}

pub fn load_texts(source: impl Read) -> Result<(Container, Vec<TextInput>), DataError> {
    let text = read_text(source)?;
    let (container, items) = split_container(&text)?;
    let mut issues = Vec::new();
    let mut out: Vec<TextInput> = Vec::new();
    let mut seen = HashSet::new();
    for item in items {
        let locator = item.locator.clone();
        match item
            .value
            .and_then(|v| serde_json::from_value::<TextInput>(v).map_err(|e| e.to_string()))
        {
            Ok(t) if !seen.insert(t.id.clone()) => issues.push(Issue {
                locator,
                severity: Severity::Error,
                message: format!("duplicate ID {:?}", t.id),
            }),
            Ok(t) => out.push(t),
            Err(message) => issues.push(Issue {
                locator,
                severity: Severity::Error,
                message,
            }),
        }
    }
    if issues.is_empty() {
        Ok((container, out))
    } else {
        Err(DataError::Invalid(issues))
    }
}

/// Flattened (review, aspect) row used for aspect-conditioned regression.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionExample {
    pub review_id: String,
    /// How many earlier entries of the same review share this aspect string.
    pub occurrence: usize,
    pub review_text: String,
    pub aspect: Term,
    /// Absent for unlabeled inference inputs.
    pub target: Option<NormalizedVA>,
}

fn occurrences<'a>(aspects: impl Iterator<Item = &'a Term>) -> Vec<usize> {
    let mut counts: HashMap<&Term, usize> = HashMap::new();
    aspects
        .map(|a| {
            let c = counts.entry(a).or_default();
            *c += 1;
            *c - 1
        })
        .collect()
}

/// One row per (review, aspect), in review order then aspect order.
pub fn flatten_asr(split: &DatasetSplit) -> Vec<RegressionExample> {
    let mut rows = Vec::new();
    for record in &split.records {
        let entries = record.aspect_entries();
        let occ = occurrences(entries.iter().map(|e| &e.aspect));
        for (entry, occurrence) in entries.iter().zip(occ) {
            rows.push(RegressionExample {
                review_id: record.review.id.clone(),
                occurrence,
                review_text: record.review.text.clone(),
                aspect: entry.aspect.clone(),
                target: Some(normalize_va(entry.va)),
            });
        }
    }
    rows
}

pub fn flatten_queries(queries: &[AsrQuery]) -> Vec<RegressionExample> {
    let mut rows = Vec::new();
    for q in queries {
        let occ = occurrences(q.aspects.iter());
        for (aspect, occurrence) in q.aspects.iter().zip(occ) {
            rows.push(RegressionExample {
                review_id: q.id.clone(),
                occurrence,
                review_text: q.text.clone(),
                aspect: aspect.clone(),
                target: None,
            });
        }
    }
    rows
}

/// A per-(review, aspect) prediction waiting to be grouped.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub review_id: String,
    pub aspect: Term,
    pub occurrence: usize,
    pub va: VAPair,
}

/// Regroups flattened predictions into per-review ASR entries, following the
/// order of `flattened`.
pub fn group_predictions(
    flattened: &[RegressionExample],
    rows: &[PredictionRow],
) -> Result<Vec<SubmissionEntry>, DataError> {
    let mut by_key: HashMap<(&str, &Term, usize), VAPair> = HashMap::with_capacity(rows.len());
    for row in rows {
        by_key.insert(
            (row.review_id.as_str(), &row.aspect, row.occurrence),
            row.va,
        );
    }
    let expected: HashSet<(&str, &Term, usize)> = flattened
        .iter()
        .map(|e| (e.review_id.as_str(), &e.aspect, e.occurrence))
        .collect();
    let unknown: Vec<(String, String)> = rows
        .iter()
        .filter(|r| !expected.contains(&(r.review_id.as_str(), &r.aspect, r.occurrence)))
        .map(|r| (r.review_id.clone(), r.aspect.to_string()))
        .collect();
    if !unknown.is_empty() {
        return Err(DataError::UnknownRows(unknown));
    }

    let mut entries: Vec<SubmissionEntry> = Vec::new();
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut missing = Vec::new();
    for ex in flattened {
        let Some(&va) = by_key.get(&(ex.review_id.as_str(), &ex.aspect, ex.occurrence)) else {
            missing.push((ex.review_id.clone(), ex.aspect.to_string()));
            continue;
        };
        let slot = *index.entry(ex.review_id.as_str()).or_insert_with(|| {
            entries.push(SubmissionEntry {
                id: ex.review_id.clone(),
                text: None,
                payload: Annotation::Aspects(Vec::new()),
            });
            entries.len() - 1
        });
        if let Annotation::Aspects(list) = &mut entries[slot].payload {
            list.push(AspectEntry {
                aspect: ex.aspect.clone(),
                va,
            });
        }
    }
    if !missing.is_empty() {
        return Err(DataError::Incomplete(missing));
    }
    Ok(entries)
}

/// Serializes entries in the task format, one compact record per element.
pub fn write_submission(
    entries: &[SubmissionEntry],
    subtask: Subtask,
    container: Container,
) -> Result<Vec<u8>, DataError> {
    let wires = entries
        .iter()
        .map(|e| e.to_wire(subtask))
        .collect::<Result<Vec<_>, _>>()?;
    let ser =
        |w: &WireRecord| serde_json::to_string(w).map_err(|e| DataError::Serialize(e.to_string()));
    let mut out = String::new();
    match container {
        Container::JsonArray => {
            out.push('[');
            for (i, w) in wires.iter().enumerate() {
                if i > 0 {
                    out.push_str(",\n");
                } else {
                    out.push('\n');
                }
                out.push_str(&ser(w)?);
            }
            if !wires.is_empty() {
                out.push('\n');
            }
            out.push_str("]\n");
        }
        Container::JsonLines => {
            for w in &wires {
                out.push_str(&ser(w)?);
                out.push('\n');
            }
        }
    }
    Ok(out.into_bytes())
}

/// Re-emits a split (with `Text`) in its original container shape.
pub fn write_split(split: &DatasetSplit) -> Result<Vec<u8>, DataError> {
    let entries: Vec<SubmissionEntry> = split
        .records
        .iter()
        .map(|r| SubmissionEntry::from_record(r, true))
        .collect();
    write_submission(&entries, split.subtask, split.container)
}
