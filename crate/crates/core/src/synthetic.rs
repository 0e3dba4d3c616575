//! Synthetic DimASR data whose VA labels are a deterministic function of
//! planted cue words. Used for smoke-testing the training loop.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataio::{DatasetSplit, SplitMeta};
use crate::model::{
    AnnotatedRecord, Annotation, AspectEntry, Domain, Language, Review, SplitKind, Subtask, Term,
    VAPair,
};

/// Opinion words and the valence they imply.
pub const VALENCE_CUES: &[(&str, f64)] = &[
    ("awful", 1.5),
    ("poor", 3.0),
    ("okay", 5.0),
    ("good", 7.0),
    ("superb", 8.5),
];

/// Intensity words and the arousal they imply.
pub const AROUSAL_CUES: &[(&str, f64)] = &[
    ("mildly", 2.0),
    ("somewhat", 3.5),
    ("quite", 5.0),
    ("really", 6.5),
    ("insanely", 8.0),
];

const ASPECTS: &[&str] = &[
    "food", "service", "staff", "price", "menu", "coffee", "room", "view",
];
const FILLER: &[&str] = &[
    "we", "went", "there", "on", "friday", "honestly", "after", "work", "with", "friends", "and",
    "i", "think", "overall", "visit", "today",
];

/// Generates `n` single-aspect reviews. The cue words fully determine VA;
/// aspect and filler words are noise.
pub fn generate(n: usize, seed: u64) -> Vec<AnnotatedRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let (vw, v) = *VALENCE_CUES.choose(&mut rng).unwrap();
            let (aw, a) = *AROUSAL_CUES.choose(&mut rng).unwrap();
            let aspect = *ASPECTS.choose(&mut rng).unwrap();
            let mut words: Vec<&str> = (0..rng.gen_range(1..4))
                .map(|_| *FILLER.choose(&mut rng).unwrap())
                .collect();
            words.extend(["the", aspect, "was", aw, vw]);
            words.extend((0..rng.gen_range(0..3)).map(|_| *FILLER.choose(&mut rng).unwrap()));
            AnnotatedRecord {
                review: Review {
                    id: format!("synth_{i:04}"),
                    text: words.join(" "),
                    language: Language::Eng,
                    domain: Domain::Restaurant,
                },
                subtask: Subtask::Asr,
                annotation: Annotation::Aspects(vec![AspectEntry {
                    aspect: Term::Text(aspect.to_string()),
                    va: VAPair::new(v, a).expect("cue values lie in range"),
                }]),
            }
        })
        .collect()
}

/// `n` examples split into train and dev with the given dev fraction.
pub fn train_dev(n: usize, dev_fraction: f64, seed: u64) -> (DatasetSplit, DatasetSplit) {
    let mut records = generate(n, seed);
    let n_dev = ((n as f64) * dev_fraction).round() as usize;
    let dev = records.split_off(n - n_dev.min(n));
    let meta = |split| SplitMeta {
        language: Language::Eng,
        domain: Domain::Restaurant,
        split,
    };
    (
        DatasetSplit::new(meta(SplitKind::Train), Subtask::Asr, records),
        DatasetSplit::new(meta(SplitKind::Dev), Subtask::Asr, dev),
    )
}
