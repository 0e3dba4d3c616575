use proptest::prelude::*;
use regex::Regex;

use dimabsa::dataio::{
    flatten_asr, format_va_string, group_predictions, load_split, parse_va_string, write_split,
    Container, DatasetSplit, PredictionRow, SplitMeta,
};
use dimabsa::genio::{clamp_tuples, parse_generation, serialize_tuples, to_submission_tuples};
use dimabsa::metrics::{continuous_f1, MatchMode, ReviewTuples};
use dimabsa::model::{denormalize_clip, round_hundredths};
use dimabsa::regressor::{total_loss, LossConfig, LrSchedule, ScheduleConfig};
use dimabsa::{
    AnnotatedRecord, Annotation, AspectEntry, Category, NormalizedVA, Review, SentimentTuple,
    Subtask, Term, VAPair,
};

const WORDS: [&str; 10] = [
    "soup",
    "Waiter",
    "patio",
    "咖啡",
    "crème brûlée",
    "wine",
    "NULL",
    "\"house\"",
    "bar",
    "ok",
];
const CATS: [&str; 4] = [
    "FOOD#QUALITY",
    "SERVICE#GENERAL",
    "AMBIENCE#GENERAL",
    "DRINKS#PRICES",
];

fn hundredths() -> impl Strategy<Value = f64> {
    (100i64..=900).prop_map(|h| h as f64 / 100.0)
}

fn va_pair() -> impl Strategy<Value = VAPair> {
    (hundredths(), hundredths()).prop_map(|(v, a)| VAPair::new(v, a).unwrap())
}

fn term() -> impl Strategy<Value = Term> {
    prop::sample::select(WORDS.to_vec()).prop_map(|w| Term::new(w).unwrap())
}

fn tuple(with_category: bool) -> impl Strategy<Value = SentimentTuple> {
    (
        term(),
        term(),
        prop::sample::select(CATS.to_vec()),
        va_pair(),
    )
        .prop_map(move |(aspect, opinion, c, va)| SentimentTuple {
            aspect,
            opinion,
            category: with_category.then(|| Category::new(c).unwrap()),
            va,
        })
}

fn annotation(subtask: Subtask) -> BoxedStrategy<Annotation> {
    match subtask {
        Subtask::Asr => prop::collection::vec((term(), va_pair()), 1..4)
            .prop_map(|v| {
                Annotation::Aspects(
                    v.into_iter()
                        .map(|(aspect, va)| AspectEntry { aspect, va })
                        .collect(),
                )
            })
            .boxed(),
        Subtask::Aste => prop::collection::vec(tuple(false), 0..4)
            .prop_map(Annotation::Tuples)
            .boxed(),
        Subtask::Asqp => prop::collection::vec(tuple(true), 0..4)
            .prop_map(Annotation::Tuples)
            .boxed(),
    }
}

fn split(subtask: Subtask) -> impl Strategy<Value = DatasetSplit> {
    (
        prop::collection::vec(
            (
                prop::collection::vec(prop::sample::select(WORDS.to_vec()), 1..6),
                annotation(subtask),
            ),
            0..6,
        ),
        any::<bool>(),
    )
        .prop_map(move |(items, lines)| {
            let meta = SplitMeta::default();
            let records = items
                .into_iter()
                .enumerate()
                .map(|(i, (words, annotation))| AnnotatedRecord {
                    review: Review {
                        id: format!("rev_{i}"),
                        text: words.join(" "),
                        language: meta.language,
                        domain: meta.domain,
                    },
                    subtask,
                    annotation,
                })
                .collect();
            let mut s = DatasetSplit::new(meta, subtask, records);
            if lines {
                s.container = Container::JsonLines;
            }
            s
        })
}

fn any_subtask() -> impl Strategy<Value = Subtask> {
    prop::sample::select(vec![Subtask::Asr, Subtask::Aste, Subtask::Asqp])
}

proptest! {
    #[test]
    fn written_splits_load_back_unchanged(s in any_subtask().prop_flat_map(split)) {
        let bytes = write_split(&s).unwrap();
        let back = load_split(bytes.as_slice(), s.subtask, s.meta).unwrap().into_split().unwrap();
        prop_assert_eq!(back, s);
    }

    #[test]
    fn flatten_then_group_restores_asr_payload(s in split(Subtask::Asr)) {
        let rows = flatten_asr(&s);
        let preds: Vec<PredictionRow> = rows
            .iter()
            .map(|r| PredictionRow {
                review_id: r.review_id.clone(),
                aspect: r.aspect.clone(),
                occurrence: r.occurrence,
                va: denormalize_clip(r.target.unwrap()),
            })
            .collect();
        let entries = group_predictions(&rows, &preds).unwrap();
        prop_assert_eq!(entries.len(), s.records.len());
        for (e, r) in entries.iter().zip(&s.records) {
            prop_assert_eq!(&e.id, &r.review.id);
            prop_assert_eq!(&e.payload, &r.annotation);
        }
    }

    #[test]
    fn va_strings_match_wire_pattern(v in 1.0f64..=9.0, a in 1.0f64..=9.0) {
        let re = Regex::new(r"^[1-9]\.\d{2}#[1-9]\.\d{2}$").unwrap();
        let s = format_va_string(VAPair::new(v, a).unwrap());
        prop_assert!(re.is_match(&s), "{}", s);
        let back = parse_va_string(&s).unwrap();
        prop_assert_eq!(round_hundredths(back.valence()), round_hundredths(v));
        prop_assert_eq!(round_hundredths(back.arousal()), round_hundredths(a));
    }

    #[test]
    fn cf1_ignores_tuple_order_and_stays_bounded(
        reviews in prop::collection::vec((prop::collection::vec(tuple(true), 0..4), prop::collection::vec(tuple(true), 0..4)), 1..8),
        seed in any::<u64>(),
    ) {
        let preds: Vec<ReviewTuples> = reviews.iter().enumerate().map(|(i, (p, _))| (format!("r{i}"), p.clone())).collect();
        let golds: Vec<ReviewTuples> = reviews.iter().enumerate().map(|(i, (_, g))| (format!("r{i}"), g.clone())).collect();
        let base = continuous_f1(&preds, &golds, MatchMode::Quadruplet).unwrap();

        let mut shuffled = preds.clone();
        let mut k = seed;
        for (_, tuples) in shuffled.iter_mut() {
            if tuples.len() > 1 {
                k = k.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let by = (k >> 33) as usize % tuples.len();
                tuples.rotate_left(by);
                tuples.reverse();
            }
        }
        let again = continuous_f1(&shuffled, &golds, MatchMode::Quadruplet).unwrap();
        prop_assert!((base.c_f1 - again.c_f1).abs() < 1e-12);
        prop_assert!((base.weight_sum - again.weight_sum).abs() < 1e-12);

        for x in [base.c_precision, base.c_recall, base.c_f1] {
            prop_assert!((0.0..=1.0).contains(&x));
        }
        prop_assert!(base.c_f1 <= 2.0 * base.c_precision.min(base.c_recall) + 1e-12);
    }

    #[test]
    fn total_loss_is_nonnegative(
        pairs in prop::collection::vec(((0.0f64..1.0, 0.0f64..1.0), (0.0f64..1.0, 0.0f64..1.0), prop::collection::vec(-1.0f64..1.0, 4)), 2..10),
        triplets in prop::collection::vec((0usize..100, 0usize..100, 0usize..100), 0..6),
    ) {
        let n = pairs.len();
        let preds: Vec<NormalizedVA> = pairs.iter().map(|(p, _, _)| NormalizedVA::new(p.0, p.1)).collect();
        let targets: Vec<NormalizedVA> = pairs.iter().map(|(_, t, _)| NormalizedVA::new(t.0, t.1)).collect();
        let z: Vec<Vec<f64>> = pairs.iter().map(|(_, _, z)| z.clone()).collect();
        let trip: Vec<(usize, usize, usize)> = triplets.iter().map(|&(a, p, q)| (a % n, p % n, q % n)).collect();
        let cfg = LossConfig::default();
        if let Ok(l) = total_loss(&preds, &targets, &z, &trip, &cfg) {
            prop_assert!(l.total >= 0.0, "{:?}", l);
            prop_assert!(l.ccc <= 1.0 + cfg.lambda_v + cfg.lambda_a);
        }
    }

    #[test]
    fn multiplier_never_rises_after_warmup(
        metrics in prop::collection::vec(0.1f64..3.0, 1..20),
        steps_per_epoch in 1usize..7,
    ) {
        let total = metrics.len() * steps_per_epoch;
        let mut s = LrSchedule::new(ScheduleConfig::default(), total);
        let mut last = f64::INFINITY;
        for (e, m) in metrics.iter().enumerate() {
            for k in 0..steps_per_epoch {
                let step = e * steps_per_epoch + k;
                let x = s.multiplier(step);
                if step >= s.warmup_steps() {
                    prop_assert!(x <= last);
                    last = x;
                }
            }
            s.end_epoch(*m, (e + 1) * steps_per_epoch);
        }
    }

    #[test]
    fn clamp_is_idempotent_and_keeps_order(
        items in prop::collection::vec((prop::sample::select(WORDS.to_vec()), -30.0f64..40.0, -30.0f64..40.0), 0..6),
    ) {
        let body: Vec<String> = items
            .iter()
            .map(|(w, v, a)| format!(r#"{{"Aspect": {}, "Opinion": "fine", "Valence": {v}, "Arousal": {a}}}"#, serde_json::to_string(w).unwrap()))
            .collect();
        let rec = parse_generation(&format!("[{}]", body.join(", ")), Subtask::Aste);
        let once = clamp_tuples(rec);
        let twice = clamp_tuples(once.clone());
        prop_assert_eq!(&once, &twice);
        let aspects: Vec<&str> = once.items.iter().map(|t| t.aspect.as_wire()).collect();
        let expected: Vec<&str> = items.iter().map(|(w, _, _)| *w).collect();
        prop_assert_eq!(aspects, expected);
        for t in to_submission_tuples(&once, Subtask::Aste) {
            prop_assert!((1.0..=9.0).contains(&t.va.valence()) && (1.0..=9.0).contains(&t.va.arousal()));
        }
    }

    #[test]
    fn parser_inverts_serializer(tuples in prop::collection::vec(tuple(true), 0..5), quad in any::<bool>()) {
        let subtask = if quad { Subtask::Asqp } else { Subtask::Aste };
        let tuples: Vec<SentimentTuple> = tuples
            .into_iter()
            .map(|t| SentimentTuple { category: if quad { t.category } else { None }, ..t })
            .collect();
        let rec = clamp_tuples(parse_generation(&serialize_tuples(&tuples, subtask), subtask));
        prop_assert!(rec.repairs.is_empty());
        prop_assert_eq!(to_submission_tuples(&rec, subtask), tuples);
    }
}
