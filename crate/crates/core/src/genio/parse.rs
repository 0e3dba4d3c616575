use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::dataio::format_hundredths;
use crate::model::{
    round_hundredths, Category, SentimentTuple, Subtask, Term, VAPair, VA_MAX, VA_MIN,
};

/// One generated item that passed the schema check. VA values are kept as
/// generated until `clamp_tuples`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedTuple {
    pub aspect: Term,
    pub opinion: Term,
    pub category: Option<Category>,
    pub valence: f64,
    pub arousal: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum RepairEvent {
    /// Text around the extracted array was discarded (byte counts).
    StrippedProse {
        leading: usize,
        trailing: usize,
    },
    CoercedNumber {
        item: usize,
        key: String,
        raw: String,
    },
    IgnoredKey {
        item: usize,
        key: String,
    },
    DroppedItem {
        item: usize,
        reason: String,
    },
    Clamped {
        item: usize,
        key: String,
        from: f64,
        to: f64,
    },
    NoArray,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRecord {
    pub raw: String,
    pub items: Vec<GeneratedTuple>,
    pub repairs: Vec<RepairEvent>,
    /// Items (or a whole output) that could not be recovered.
    pub rejected: usize,
}

/// A line of a generations file: record ID and raw model output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationLine {
    #[serde(rename = "ID")]
    pub id: String,
    #[serde(rename = "Output")]
    pub raw: String,
}

/// Byte range and value of the first well-formed JSON array in `raw`.
fn first_array(raw: &str) -> Option<(usize, usize, Vec<Value>)> {
    for (start, _) in raw.match_indices('[') {
        let mut stream = serde_json::Deserializer::from_str(&raw[start..]).into_iter::<Value>();
        if let Some(Ok(Value::Array(items))) = stream.next() {
            return Some((start, start + stream.byte_offset(), items));
        }
    }
    None
}

fn read_term(obj: &Map<String, Value>, key: &str) -> Result<Term, String> {
    match obj.get(key) {
        None => Err(format!("missing key {key}")),
        Some(Value::String(s)) => Term::new(s).map_err(|e| format!("{key}: {e}")),
        Some(other) => Err(format!("{key} is not a string: {other}")),
    }
}

fn read_score(
    obj: &Map<String, Value>,
    key: &str,
    item: usize,
    repairs: &mut Vec<RepairEvent>,
) -> Result<f64, String> {
    let x = match obj.get(key) {
        None => return Err(format!("missing key {key}")),
        Some(Value::Number(n)) => n
            .as_f64()
            .ok_or_else(|| format!("{key} is not representable"))?,
        Some(Value::String(s)) => {
            let x: f64 = s
                .trim()
                .parse()
                .map_err(|_| format!("{key} is not numeric: {s:?}"))?;
            repairs.push(RepairEvent::CoercedNumber {
                item,
                key: key.to_string(),
                raw: s.clone(),
            });
            x
        }
        Some(other) => return Err(format!("{key} is not numeric: {other}")),
    };
    if x.is_finite() {
        Ok(x)
    } else {
        Err(format!("{key} is not finite"))
    }
}

fn read_item(
    value: &Value,
    item: usize,
    subtask: Subtask,
    repairs: &mut Vec<RepairEvent>,
) -> Result<GeneratedTuple, String> {
    let obj = value.as_object().ok_or("item is not an object")?;
    let with_category = subtask == Subtask::Asqp;
    let mut known = vec!["Aspect", "Opinion", "Valence", "Arousal"];
    if with_category {
        known.push("Category");
    }
    let aspect = read_term(obj, "Aspect")?;
    let opinion = read_term(obj, "Opinion")?;
    let category = if with_category {
        match obj.get("Category") {
            None => return Err("missing key Category".into()),
            Some(Value::String(s)) => Some(Category::new(s).map_err(|e| e.to_string())?),
            Some(other) => return Err(format!("Category is not a string: {other}")),
        }
    } else {
        None
    };
    let mut local = Vec::new();
    let valence = read_score(obj, "Valence", item, &mut local)?;
    let arousal = read_score(obj, "Arousal", item, &mut local)?;
    repairs.extend(local);
    for key in obj.keys().filter(|k| !known.contains(&k.as_str())) {
        repairs.push(RepairEvent::IgnoredKey {
            item,
            key: key.clone(),
        });
    }
    Ok(GeneratedTuple {
        aspect,
        opinion,
        category,
        valence,
        arousal,
    })
}

/// Reads the first JSON array in a model output. Keys must match exactly;
/// numeric strings are accepted; anything else drops the item. Never fails:
/// an output without an array yields no items and one rejection.
pub fn parse_generation(raw: &str, subtask: Subtask) -> GenerationRecord {
    let mut rec = GenerationRecord {
        raw: raw.to_string(),
        items: Vec::new(),
        repairs: Vec::new(),
        rejected: 0,
    };
    let Some((start, end, values)) = first_array(raw) else {
        rec.repairs.push(RepairEvent::NoArray);
        rec.rejected = 1;
        log::debug!("no JSON array in generation");
        return rec;
    };
    let leading = raw[..start].trim().len();
    let trailing = raw[end..].trim().len();
    if leading > 0 || trailing > 0 {
        rec.repairs
            .push(RepairEvent::StrippedProse { leading, trailing });
    }
    for (i, value) in values.iter().enumerate() {
        match read_item(value, i, subtask, &mut rec.repairs) {
            Ok(t) => rec.items.push(t),
            Err(reason) => {
                log::debug!("dropping generated item {i}: {reason}");
                rec.repairs
                    .push(RepairEvent::DroppedItem { item: i, reason });
                rec.rejected += 1;
            }
        }
    }
    rec
}

/// Clips VA into [1, 9]. Idempotent and order-preserving.
pub fn clamp_tuples(mut rec: GenerationRecord) -> GenerationRecord {
    let mut kept = Vec::with_capacity(rec.items.len());
    for (i, mut t) in rec.items.into_iter().enumerate() {
        if !(t.valence.is_finite() && t.arousal.is_finite()) {
            rec.repairs.push(RepairEvent::DroppedItem {
                item: i,
                reason: "non-numeric VA".into(),
            });
            rec.rejected += 1;
            continue;
        }
        for (key, x) in [("Valence", &mut t.valence), ("Arousal", &mut t.arousal)] {
            let c = x.clamp(VA_MIN, VA_MAX);
            if c != *x {
                rec.repairs.push(RepairEvent::Clamped {
                    item: i,
                    key: key.into(),
                    from: *x,
                    to: c,
                });
                *x = c;
            }
        }
        kept.push(t);
    }
    rec.items = kept;
    rec
}

fn hundredths(x: f64) -> f64 {
    round_hundredths(x) as f64 / 100.0
}

/// Submission tuples with VA rounded to the two decimals that will be
/// written. Expects a clamped record.
pub fn to_submission_tuples(rec: &GenerationRecord, subtask: Subtask) -> Vec<SentimentTuple> {
    rec.items
        .iter()
        .filter_map(|t| {
            let va = VAPair::clipped(hundredths(t.valence), hundredths(t.arousal)).ok()?;
            Some(SentimentTuple {
                aspect: t.aspect.clone(),
                opinion: t.opinion.clone(),
                category: if subtask == Subtask::Asqp {
                    t.category.clone()
                } else {
                    None
                },
                va,
            })
        })
        .collect()
}

fn json_str(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

/// Gold tuples as the generation target: a JSON list with separate numeric
/// Valence and Arousal keys written with two decimals.
pub fn serialize_tuples(tuples: &[SentimentTuple], subtask: Subtask) -> String {
    let items: Vec<String> = tuples
        .iter()
        .map(|t| {
            let mut fields = vec![format!("\"Aspect\": {}", json_str(t.aspect.as_wire()))];
            if let (Subtask::Asqp, Some(c)) = (subtask, &t.category) {
                fields.push(format!("\"Category\": {}", json_str(c.as_str())));
            }
            fields.push(format!("\"Opinion\": {}", json_str(t.opinion.as_wire())));
            fields.push(format!(
                "\"Valence\": {}",
                format_hundredths(round_hundredths(t.va.valence()))
            ));
            fields.push(format!(
                "\"Arousal\": {}",
                format_hundredths(round_hundredths(t.va.arousal()))
            ));
            format!("{{{}}}", fields.join(", "))
        })
        .collect();
    format!("[{}]", items.join(", "))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_triplet() {
        let rec = parse_generation(
            r#"[{"Aspect":"food","Opinion":"awesome","Valence":7.67,"Arousal":7.67}]"#,
            Subtask::Aste,
        );
        assert_eq!(rec.items.len(), 1);
        assert_eq!(rec.rejected, 0);
        assert!(rec.repairs.is_empty());
        assert_eq!(rec.items[0].valence, 7.67);
    }

    #[test]
    fn prose_is_stripped() {
        let body = r#"[{"Aspect":"food","Opinion":"awesome","Valence":7.67,"Arousal":"7.5"}]"#;
        let rec = parse_generation(
            &format!("Sure! Here is the answer: {body}\nHope this helps."),
            Subtask::Aste,
        );
        let strict: Vec<Value> = serde_json::from_str(body).unwrap();
        assert_eq!(rec.items.len(), strict.len());
        assert_eq!(rec.items[0].arousal, 7.5);
        assert!(matches!(
            rec.repairs[0],
            RepairEvent::StrippedProse {
                leading: 25,
                trailing: 16
            }
        ));
        assert!(rec
            .repairs
            .iter()
            .any(|r| matches!(r, RepairEvent::CoercedNumber { .. })));
    }

    #[test]
    fn empty_and_missing() {
        let rec = parse_generation("[]", Subtask::Asqp);
        assert_eq!((rec.items.len(), rec.rejected), (0, 0));
        let rec = parse_generation("I cannot answer that.", Subtask::Asqp);
        assert_eq!((rec.items.len(), rec.rejected), (0, 1));
        assert_eq!(rec.repairs, vec![RepairEvent::NoArray]);
    }

    #[test]
    fn bad_items_are_dropped() {
        let raw = r#"[{"Aspect":"a","Opinion":"b","Valence":5,"Arousal":5,"Category":"FOOD#QUALITY"},
            {"aspect":"a","Opinion":"b","Valence":5,"Arousal":5,"Category":"FOOD#QUALITY"},
            {"Aspect":"a","Opinion":"b","Valence":"high","Arousal":5,"Category":"FOOD#QUALITY"},
            {"Aspect":"a","Opinion":"b","Valence":"NaN","Arousal":5,"Category":"FOOD#QUALITY"},
            {"Aspect":"a","Opinion":"b","Valence":5,"Arousal":5,"Category":"food"},
            {"Aspect":"a","Opinion":"b","Valence":5,"Arousal":5},
            7]"#;
        let rec = parse_generation(raw, Subtask::Asqp);
        assert_eq!((rec.items.len(), rec.rejected), (1, 6));
    }

    #[test]
    fn clamp_examples() {
        let rec = parse_generation(
            r#"[{"Aspect":"a","Opinion":"b","Valence":9.5,"Arousal":0},{"Aspect":"c","Opinion":"d","Valence":7.67,"Arousal":7.67}]"#,
            Subtask::Aste,
        );
        let once = clamp_tuples(rec);
        assert_eq!((once.items[0].valence, once.items[0].arousal), (9.0, 1.0));
        assert_eq!((once.items[1].valence, once.items[1].arousal), (7.67, 7.67));
        let twice = clamp_tuples(once.clone());
        assert_eq!(twice, once);
        let sub = to_submission_tuples(&once, Subtask::Aste);
        assert_eq!(crate::dataio::format_va_string(sub[0].va), "9.00#1.00");
        assert_eq!(crate::dataio::format_va_string(sub[1].va), "7.67#7.67");
    }

    #[test]
    fn serialize_then_parse() {
        let gold = vec![SentimentTuple {
            aspect: Term::Null,
            opinion: Term::new("great \"value\"").unwrap(),
            category: Some(Category::new("FOOD#PRICES").unwrap()),
            va: VAPair::new(7.8, 1.0).unwrap(),
        }];
        let text = serialize_tuples(&gold, Subtask::Asqp);
        assert_eq!(
            text,
            r#"[{"Aspect": "NULL", "Category": "FOOD#PRICES", "Opinion": "great \"value\"", "Valence": 7.80, "Arousal": 1.00}]"#
        );
        let rec = clamp_tuples(parse_generation(&text, Subtask::Asqp));
        assert_eq!(to_submission_tuples(&rec, Subtask::Asqp), gold);
    }
}
