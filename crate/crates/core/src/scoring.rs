//! Scores a whole submission against gold: checks that both cover the same
//! reviews, pairs ASR aspects, then runs the metric for the subtask.

use std::collections::{BTreeSet, HashMap};

use serde::Serialize;
use thiserror::Error;

use crate::dataio::{load_submission, DataError, SubmissionDoc};
use crate::metrics::{
    continuous_f1, score_asr, AsrScore, CfScore, MatchMode, MetricError, ReviewTuples,
};
use crate::model::{Annotation, Subtask, Term, VAPair};

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("{side}: {source}")]
    Read {
        side: &'static str,
        #[source]
        source: DataError,
    },
    #[error("{side} is invalid:\n{issues}")]
    Invalid { side: &'static str, issues: String },
    #[error("ID mismatch between predictions and gold\n  only in predictions: {only_pred:?}\n  only in gold: {only_gold:?}")]
    IdMismatch {
        only_pred: Vec<String>,
        only_gold: Vec<String>,
    },
    #[error("predictions lack {} gold aspect(s): {}", .0.len(), .0.join(", "))]
    MissingAspects(Vec<String>),
    #[error("predictions contain aspects absent from gold: {}", .0.join(", "))]
    ExtraAspects(Vec<String>),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Scores {
    Asr(AsrScore),
    Extraction(CfScore),
}

impl std::fmt::Display for Scores {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Scores::Asr(s) => s.fmt(f),
            Scores::Extraction(s) => s.fmt(f),
        }
    }
}

/// Reads one side, turning any hard validation error into `Invalid`.
pub fn read_side(
    source: impl std::io::Read,
    subtask: Subtask,
    side: &'static str,
) -> Result<SubmissionDoc, ScoringError> {
    let doc =
        load_submission(source, subtask).map_err(|source| ScoringError::Read { side, source })?;
    if doc.has_errors() {
        let issues: Vec<String> = doc.issues.iter().map(|i| i.to_string()).collect();
        return Err(ScoringError::Invalid {
            side,
            issues: issues.join("\n"),
        });
    }
    Ok(doc)
}

fn check_ids(preds: &SubmissionDoc, golds: &SubmissionDoc) -> Result<(), ScoringError> {
    let p: BTreeSet<&str> = preds.entries.iter().map(|e| e.id.as_str()).collect();
    let g: BTreeSet<&str> = golds.entries.iter().map(|e| e.id.as_str()).collect();
    let only_pred: Vec<String> = p.difference(&g).map(|s| s.to_string()).collect();
    let only_gold: Vec<String> = g.difference(&p).map(|s| s.to_string()).collect();
    if only_pred.is_empty() && only_gold.is_empty() {
        Ok(())
    } else {
        Err(ScoringError::IdMismatch {
            only_pred,
            only_gold,
        })
    }
}

fn aspect_keys(doc: &SubmissionDoc) -> Vec<((&str, &Term, usize), VAPair)> {
    let mut out = Vec::new();
    for e in &doc.entries {
        let mut seen: HashMap<&Term, usize> = HashMap::new();
        if let Annotation::Aspects(list) = &e.payload {
            for a in list {
                let occ = seen.entry(&a.aspect).or_default();
                out.push(((e.id.as_str(), &a.aspect, *occ), a.va));
                *occ += 1;
            }
        }
    }
    out
}

/// Pairs ASR predictions with gold VA by (ID, aspect, occurrence), in gold
/// order.
pub fn align_asr(
    preds: &SubmissionDoc,
    golds: &SubmissionDoc,
) -> Result<(Vec<VAPair>, Vec<VAPair>), ScoringError> {
    let mut by_key: HashMap<_, VAPair> = aspect_keys(preds).into_iter().collect();
    let (mut p, mut g, mut missing) = (Vec::new(), Vec::new(), Vec::new());
    for (key, va) in aspect_keys(golds) {
        match by_key.remove(&key) {
            Some(pv) => {
                p.push(pv);
                g.push(va);
            }
            None => missing.push(format!("({}, {})", key.0, key.1)),
        }
    }
    if !missing.is_empty() {
        return Err(ScoringError::MissingAspects(missing));
    }
    if !by_key.is_empty() {
        let mut extra: Vec<String> = by_key
            .keys()
            .map(|(id, a, _)| format!("({id}, {a})"))
            .collect();
        extra.sort();
        return Err(ScoringError::ExtraAspects(extra));
    }
    Ok((p, g))
}

fn review_tuples(doc: &SubmissionDoc) -> Vec<ReviewTuples> {
    doc.entries
        .iter()
        .map(|e| {
            let tuples = match &e.payload {
                Annotation::Tuples(t) => t.clone(),
                Annotation::Aspects(_) => Vec::new(),
            };
            (e.id.clone(), tuples)
        })
        .collect()
}

/// Both documents must be read for the same subtask and cover the same IDs.
/// A review with nothing predicted is an entry with an empty list.
pub fn score_documents(
    preds: &SubmissionDoc,
    golds: &SubmissionDoc,
) -> Result<Scores, ScoringError> {
    check_ids(preds, golds)?;
    Ok(match golds.subtask {
        Subtask::Asr => {
            let (p, g) = align_asr(preds, golds)?;
            Scores::Asr(score_asr(&p, &g)?)
        }
        Subtask::Aste | Subtask::Asqp => {
            let mode = if golds.subtask == Subtask::Asqp {
                MatchMode::Quadruplet
            } else {
                MatchMode::Triplet
            };
            Scores::Extraction(continuous_f1(
                &review_tuples(preds),
                &review_tuples(golds),
                mode,
            )?)
        }
    })
}

pub fn score_readers(
    subtask: Subtask,
    preds: impl std::io::Read,
    golds: impl std::io::Read,
) -> Result<Scores, ScoringError> {
    let golds = read_side(golds, subtask, "gold")?;
    let preds = read_side(preds, subtask, "predictions")?;
    score_documents(&preds, &golds)
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOLD: &str = r#"{"ID": "r", "Text": "soup and soup", "Aspect_VA": [{"Aspect": "soup", "VA": "7.00#7.00"}, {"Aspect": "soup", "VA": "3.00#5.00"}]}
{"ID": "s", "Text": "bread", "Aspect_VA": [{"Aspect": "bread", "VA": "5.00#2.00"}]}"#;

    #[test]
    fn asr_pairs_repeated_aspects_by_position() {
        let preds = GOLD.replace("7.00#7.00", "6.00#7.00");
        let Scores::Asr(s) =
            score_readers(Subtask::Asr, preds.as_bytes(), GOLD.as_bytes()).unwrap()
        else {
            panic!("ASR scores expected");
        };
        assert!((s.rmse_va - (1.0f64 / 6.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn missing_and_extra_aspects() {
        let fewer = r#"{"ID": "r", "Aspect_VA": [{"Aspect": "soup", "VA": "7.00#7.00"}]}
{"ID": "s", "Aspect_VA": [{"Aspect": "bread", "VA": "5.00#2.00"}, {"Aspect": "jam", "VA": "5.00#2.00"}]}"#;
        let err = score_readers(Subtask::Asr, fewer.as_bytes(), GOLD.as_bytes()).unwrap_err();
        assert!(
            matches!(err, ScoringError::MissingAspects(ref m) if m.len() == 1),
            "{err}"
        );
    }

    #[test]
    fn ids_must_agree() {
        let preds = r#"{"ID": "r", "Triplet": []}"#;
        let gold = r#"{"ID": "q", "Text": "x", "Triplet": []}"#;
        let err = score_readers(Subtask::Aste, preds.as_bytes(), gold.as_bytes()).unwrap_err();
        match err {
            ScoringError::IdMismatch {
                only_pred,
                only_gold,
            } => {
                assert_eq!(
                    (only_pred, only_gold),
                    (vec!["r".to_string()], vec!["q".to_string()])
                );
            }
            other => panic!("{other}"),
        }
    }
}
