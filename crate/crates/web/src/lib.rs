//! Browser bindings. Each export takes plain strings and numbers and returns
//! a JSON document; errors come back as a string message.

use serde_json::json;
use wasm_bindgen::prelude::*;

use dimabsa::eda::{psi_from_counts, BinSpec, Bins, PsiLevel, DEFAULT_EPSILON};
use dimabsa::regressor::{LrSchedule, ScheduleConfig};
use dimabsa::scoring::score_readers;
use dimabsa::Subtask;

fn parse_numbers(text: &str) -> Result<Vec<f64>, String> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| format!("not a number: {t:?}")))
        .collect()
}

/// Learning-rate multiplier at every optimizer step, given one validation
/// RMSE per epoch.
pub fn schedule_trace_json(
    steps_per_epoch: usize,
    metrics: &str,
    warmup_ratio: f64,
    plateau_factor: f64,
    plateau_patience: usize,
) -> Result<String, String> {
    let metrics = parse_numbers(metrics)?;
    if metrics.is_empty() || steps_per_epoch == 0 {
        return Err("need at least one epoch metric and one step per epoch".into());
    }
    if !(0.0..=1.0).contains(&warmup_ratio)
        || !(plateau_factor > 0.0 && plateau_factor <= 1.0)
        || plateau_patience == 0
    {
        return Err(
            "warmup ratio in [0, 1], factor in (0, 1] and a positive patience are required".into(),
        );
    }
    let cfg = ScheduleConfig {
        warmup_ratio,
        plateau_factor,
        plateau_patience,
    };
    let total = steps_per_epoch * metrics.len();
    let mut sched = LrSchedule::new(cfg, total);
    let mut multipliers = Vec::with_capacity(total);
    let mut reductions = Vec::new();
    for (epoch, m) in metrics.iter().enumerate() {
        for s in 0..steps_per_epoch {
            multipliers.push(sched.multiplier(epoch * steps_per_epoch + s));
        }
        if sched.end_epoch(*m, (epoch + 1) * steps_per_epoch) {
            reductions.push(epoch + 1);
        }
    }
    Ok(json!({
        "total_steps": total,
        "warmup_steps": sched.warmup_steps(),
        "multipliers": multipliers,
        "reduced_after_epochs": reductions,
    })
    .to_string())
}

/// Scores pasted predictions against pasted gold (JSON array or JSON Lines).
pub fn score_submission_json(
    subtask: &str,
    predictions: &str,
    gold: &str,
) -> Result<String, String> {
    let subtask: Subtask = subtask.parse().map_err(|e| format!("{e}"))?;
    let scores = score_readers(subtask, predictions.as_bytes(), gold.as_bytes())
        .map_err(|e| e.to_string())?;
    Ok(json!({ "table": scores.to_string(), "scores": scores }).to_string())
}

/// PSI of a comparison sample against decile bins fitted on the reference.
pub fn psi_compare_json(
    reference: &str,
    comparison: &str,
    n_bins: usize,
) -> Result<String, String> {
    let reference = parse_numbers(reference)?;
    let comparison = parse_numbers(comparison)?;
    if comparison.is_empty() {
        return Err("comparison sample is empty".into());
    }
    let bins = BinSpec::quantile(&reference, n_bins, DEFAULT_EPSILON).map_err(|e| e.to_string())?;
    let (rc, cc) = (
        bins.counts_numeric(&reference),
        bins.counts_numeric(&comparison),
    );
    let value = psi_from_counts(&rc, &cc, bins.epsilon).map_err(|e| e.to_string())?;
    let edges = match &bins.bins {
        Bins::Quantile { edges } => edges.clone(),
        Bins::Categorical { .. } => Vec::new(),
    };
    Ok(json!({
        "psi": value,
        "level": PsiLevel::from_value(value).as_str(),
        "edges": edges,
        "reference_counts": rc,
        "comparison_counts": cc,
    })
    .to_string())
}

#[wasm_bindgen]
pub fn schedule_trace(
    steps_per_epoch: usize,
    metrics: &str,
    warmup_ratio: f64,
    plateau_factor: f64,
    plateau_patience: usize,
) -> Result<String, JsError> {
    schedule_trace_json(
        steps_per_epoch,
        metrics,
        warmup_ratio,
        plateau_factor,
        plateau_patience,
    )
    .map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn score_submission(subtask: &str, predictions: &str, gold: &str) -> Result<String, JsError> {
    score_submission_json(subtask, predictions, gold).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn psi_compare(reference: &str, comparison: &str, n_bins: usize) -> Result<String, JsError> {
    psi_compare_json(reference, comparison, n_bins).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    fn parse(s: String) -> Value {
        serde_json::from_str(&s).unwrap()
    }

    #[test]
    fn trace_halves_after_two_stalls() {
        let v = parse(schedule_trace_json(2, "1.0, 0.9 0.95 0.95 0.8", 0.1, 0.5, 2).unwrap());
        assert_eq!(v["warmup_steps"], 1);
        let m: Vec<f64> = v["multipliers"]
            .as_array()
            .unwrap()
            .iter()
            .map(|x| x.as_f64().unwrap())
            .collect();
        assert_eq!(m, vec![0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.5, 0.5]);
        assert_eq!(v["reduced_after_epochs"], json!([4]));
        assert!(schedule_trace_json(2, "1.0 x", 0.1, 0.5, 2).is_err());
    }

    #[test]
    fn scores_pasted_triplets() {
        let gold = r#"[{"ID": "a", "Text": "great tea", "Triplet": [{"Aspect": "tea", "Opinion": "great", "VA": "7.00#7.00"}]}]"#;
        let pred =
            r#"{"ID": "a", "Triplet": [{"Aspect": "tea", "Opinion": "great", "VA": "7.33#7.33"}]}"#;
        let v = parse(score_submission_json("ASTE", pred, gold).unwrap());
        assert!((v["scores"]["c_f1"].as_f64().unwrap() - 0.95875).abs() < 1e-12);
        assert!(v["table"].as_str().unwrap().starts_with("cP\tcR\tcF1"));
        assert!(score_submission_json("nope", pred, gold).is_err());
    }

    #[test]
    fn psi_of_identical_samples_is_zero() {
        let sample = "1 2 3 4 5 6 7 8 9 10 11 12";
        let v = parse(psi_compare_json(sample, sample, 4).unwrap());
        assert!(v["psi"].as_f64().unwrap().abs() < 1e-12);
        assert_eq!(v["level"], "none");
        let shifted = parse(psi_compare_json(sample, "11 12 12 12 13 14", 4).unwrap());
        assert_eq!(shifted["level"], "significant");
    }
}
