//! Domain types shared across the toolkit.
//!
//! Everything here is an immutable value object. Validation happens at
//! construction so that downstream code can rely on the invariants.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub const VA_MIN: f64 = 1.0;
pub const VA_MAX: f64 = 9.0;
const VA_SPAN: f64 = VA_MAX - VA_MIN;

/// Wire spelling of an implicit (NULL) aspect or opinion.
pub const NULL_LITERAL: &str = "NULL";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("{field} = {value} is outside [1.00, 9.00]")]
    Range { field: &'static str, value: f64 },
    #[error("{field} is not a finite number")]
    NotFinite { field: &'static str },
    #[error("empty string is not a valid term; use NULL for implicit targets")]
    EmptyTerm,
    #[error("invalid category {0:?}: expected ENTITY#ATTRIBUTE")]
    Category(String),
    #[error("unknown {kind} {value:?}")]
    UnknownVariant { kind: &'static str, value: String },
}

/// Valence–arousal pair on the [1, 9] scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VAPair {
    valence: f64,
    arousal: f64,
}

impl VAPair {
    pub fn new(valence: f64, arousal: f64) -> Result<Self, ModelError> {
        check_component("valence", valence)?;
        check_component("arousal", arousal)?;
        Ok(VAPair { valence, arousal })
    }

    /// Clips both components into range. Non-finite input is rejected.
    pub fn clipped(valence: f64, arousal: f64) -> Result<Self, ModelError> {
        if !valence.is_finite() {
            return Err(ModelError::NotFinite { field: "valence" });
        }
        if !arousal.is_finite() {
            return Err(ModelError::NotFinite { field: "arousal" });
        }
        Ok(VAPair {
            valence: valence.clamp(VA_MIN, VA_MAX),
            arousal: arousal.clamp(VA_MIN, VA_MAX),
        })
    }

    pub fn valence(&self) -> f64 {
        self.valence
    }

    pub fn arousal(&self) -> f64 {
        self.arousal
    }
}

fn check_component(field: &'static str, value: f64) -> Result<(), ModelError> {
    if !value.is_finite() {
        return Err(ModelError::NotFinite { field });
    }
    if !(VA_MIN..=VA_MAX).contains(&value) {
        return Err(ModelError::Range { field, value });
    }
    Ok(())
}

/// VA mapped linearly onto [0, 1]. Model outputs use the same shape but may
/// leave the unit square, so the fields are not range-checked.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NormalizedVA {
    pub v: f64,
    pub a: f64,
}

impl NormalizedVA {
    pub fn new(v: f64, a: f64) -> Self {
        NormalizedVA { v, a }
    }
}

pub fn normalize_va(va: VAPair) -> NormalizedVA {
    NormalizedVA {
        v: (va.valence - VA_MIN) / VA_SPAN,
        a: (va.arousal - VA_MIN) / VA_SPAN,
    }
}

/// Checked variant of [`normalize_va`] for raw pairs.
pub fn normalize_raw(valence: f64, arousal: f64) -> Result<NormalizedVA, ModelError> {
    VAPair::new(valence, arousal).map(normalize_va)
}

/// Rescales a model output to [1, 9] and clips. NaN maps to the midpoint.
pub fn denormalize_clip(nv: NormalizedVA) -> VAPair {
    let back = |x: f64| {
        let y = VA_SPAN * x + VA_MIN;
        if y.is_nan() {
            (VA_MIN + VA_MAX) / 2.0
        } else {
            y.clamp(VA_MIN, VA_MAX)
        }
    };
    VAPair {
        valence: back(nv.v),
        arousal: back(nv.a),
    }
}

/// Rounds a finite value to hundredths, ties away from zero, using the exact
/// binary value (no `x * 100.0` shortcut, which mis-rounds near ties).
pub fn round_hundredths(x: f64) -> i64 {
    debug_assert!(x.is_finite());
    // 60 fractional digits are enough for an exact expansion of any f64 in
    // the VA range (at most 52 significant binary fraction digits).
    let exact = format!("{:.60}", x.abs());
    let (int_part, frac) = exact.split_once('.').expect("fixed-point format");
    let int_part: i64 = int_part.parse().expect("integer digits");
    let digits = frac.as_bytes();
    let hundredths = int_part * 100 + ((digits[0] - b'0') as i64) * 10 + (digits[1] - b'0') as i64;
    let rounded = if digits[2] >= b'5' {
        hundredths + 1
    } else {
        hundredths
    };
    if x.is_sign_negative() {
        -rounded
    } else {
        rounded
    }
}

/// Aspect or opinion surface text, or the explicit implicit-target marker.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Text(String),
    Null,
}

impl Term {
    pub fn new(s: &str) -> Result<Self, ModelError> {
        match s {
            "" => Err(ModelError::EmptyTerm),
            NULL_LITERAL => Ok(Term::Null),
            other => Ok(Term::Text(other.to_string())),
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Term::Null)
    }

    pub fn as_wire(&self) -> &str {
        match self {
            Term::Text(s) => s,
            Term::Null => NULL_LITERAL,
        }
    }

    /// Text used when rendering model inputs; NULL becomes `null_surface`.
    pub fn surface<'a>(&'a self, null_surface: &'a str) -> &'a str {
        match self {
            Term::Text(s) => s,
            Term::Null => null_surface,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_wire())
    }
}

impl Serialize for Term {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_wire())
    }
}

impl<'de> Deserialize<'de> for Term {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        Term::new(&raw).map_err(serde::de::Error::custom)
    }
}

/// Aspect category of the form `ENTITY#ATTRIBUTE`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Category(String);

impl Category {
    pub fn new(s: &str) -> Result<Self, ModelError> {
        let valid_part = |p: &str| {
            !p.is_empty()
                && p.chars()
                    .all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '_')
        };
        match s.split_once('#') {
            Some((entity, attribute)) if valid_part(entity) && valid_part(attribute) => {
                Ok(Category(s.to_string()))
            }
            _ => Err(ModelError::Category(s.to_string())),
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn entity(&self) -> &str {
        self.0.split_once('#').map(|(e, _)| e).unwrap_or_default()
    }

    pub fn attribute(&self) -> &str {
        self.0.split_once('#').map(|(_, a)| a).unwrap_or_default()
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Serialize for Category {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Category {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        Category::new(&raw).map_err(serde::de::Error::custom)
    }
}

macro_rules! wire_enum {
    ($(#[$meta:meta])* $name:ident, $kind:literal, { $($variant:ident => $wire:literal $(| $alias:literal)*),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(&self) -> &'static str {
                match self {
                    $($name::$variant => $wire),+
                }
            }
        }

        impl FromStr for $name {
            type Err = ModelError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                $(
                    if s.eq_ignore_ascii_case($wire) $(|| s.eq_ignore_ascii_case($alias))* {
                        return Ok($name::$variant);
                    }
                )+
                Err(ModelError::UnknownVariant { kind: $kind, value: s.to_string() })
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(self.as_str())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let raw = String::deserialize(d)?;
                raw.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

wire_enum!(
    Language, "language", {
        Eng => "ENG" | "en",
        Zho => "ZHO" | "zh",
        Jpn => "JPN" | "ja",
        Rus => "RUS" | "ru",
        Tat => "TAT" | "tt",
        Ukr => "UKR" | "uk",
    }
);

wire_enum!(
    Domain, "domain", {
        Restaurant => "Restaurant" | "rest",
        Laptop => "Laptop" | "lap",
        Hotel => "Hotel",
        Finance => "Finance" | "fin",
    }
);

wire_enum!(
    /// DimASR, DimASTE or DimASQP.
    Subtask, "subtask", {
        Asr => "ASR" | "DimASR",
        Aste => "ASTE" | "DimASTE",
        Asqp => "ASQP" | "DimASQP",
    }
);

wire_enum!(
    SplitKind, "split", {
        Train => "train",
        Dev => "dev" | "validation",
        Test => "test",
    }
);

#[derive(Debug, Clone, PartialEq)]
pub struct Review {
    pub id: String,
    pub text: String,
    pub language: Language,
    pub domain: Domain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AspectEntry {
    pub aspect: Term,
    pub va: VAPair,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SentimentTuple {
    pub aspect: Term,
    pub opinion: Term,
    pub category: Option<Category>,
    pub va: VAPair,
}

/// Subtask-shaped labels of one review.
#[derive(Debug, Clone, PartialEq)]
pub enum Annotation {
    Aspects(Vec<AspectEntry>),
    Tuples(Vec<SentimentTuple>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedRecord {
    pub review: Review,
    pub subtask: Subtask,
    pub annotation: Annotation,
}

impl AnnotatedRecord {
    /// Checks the subtask/annotation pairing and the category rule.
    pub fn validate(&self) -> Result<(), String> {
        if self.review.id.is_empty() {
            return Err("ID must be nonempty".into());
        }
        if self.review.domain == Domain::Finance && self.subtask != Subtask::Asr {
            return Err("Finance domain is only defined for ASR".into());
        }
        match (&self.annotation, self.subtask) {
            (Annotation::Aspects(entries), Subtask::Asr) => {
                if entries.is_empty() {
                    return Err("Aspect_VA must contain at least one entry".into());
                }
            }
            (Annotation::Tuples(tuples), kind @ (Subtask::Aste | Subtask::Asqp)) => {
                for (i, t) in tuples.iter().enumerate() {
                    match (kind, &t.category) {
                        (Subtask::Asqp, None) => {
                            return Err(format!("tuple {i}: Category is required for ASQP"))
                        }
                        (Subtask::Aste, Some(_)) => {
                            return Err(format!("tuple {i}: Category is not allowed for ASTE"))
                        }
                        _ => {}
                    }
                }
            }
            _ => return Err(format!("annotation shape does not match {}", self.subtask)),
        }
        Ok(())
    }

    pub fn aspect_entries(&self) -> &[AspectEntry] {
        match &self.annotation {
            Annotation::Aspects(a) => a,
            Annotation::Tuples(_) => &[],
        }
    }

    pub fn tuples(&self) -> &[SentimentTuple] {
        match &self.annotation {
            Annotation::Tuples(t) => t,
            Annotation::Aspects(_) => &[],
        }
    }

    /// Number of labeled units: aspects for ASR, tuples otherwise.
    pub fn density(&self) -> usize {
        match &self.annotation {
            Annotation::Aspects(a) => a.len(),
            Annotation::Tuples(t) => t.len(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn va(v: f64, a: f64) -> VAPair {
        VAPair::new(v, a).unwrap()
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_va(va(1.0, 9.0)), NormalizedVA::new(0.0, 1.0));
        assert_eq!(normalize_va(va(5.0, 5.0)), NormalizedVA::new(0.5, 0.5));
        let n = normalize_va(va(7.25, 6.75));
        assert_abs_diff_eq!(n.v, 0.78125, epsilon = 1e-15);
        assert_abs_diff_eq!(n.a, 0.71875, epsilon = 1e-15);
    }

    #[test]
    fn normalize_rejects_out_of_range() {
        assert!(matches!(
            normalize_raw(9.5, 5.0),
            Err(ModelError::Range {
                field: "valence",
                ..
            })
        ));
        assert!(normalize_raw(5.0, 0.99).is_err());
        assert!(VAPair::new(f64::NAN, 5.0).is_err());
    }

    #[test]
    fn denormalize_examples() {
        assert_eq!(denormalize_clip(NormalizedVA::new(0.5, 0.5)), va(5.0, 5.0));
        assert_eq!(denormalize_clip(NormalizedVA::new(1.2, -0.1)), va(9.0, 1.0));
        let back = denormalize_clip(NormalizedVA::new(0.78125, 0.71875));
        assert_abs_diff_eq!(back.valence(), 7.25, epsilon = 1e-12);
        assert_abs_diff_eq!(back.arousal(), 6.75, epsilon = 1e-12);
    }

    #[test]
    fn rounding_ties_go_away_from_zero() {
        // 7.125 and 7.375 are exact binary ties.
        assert_eq!(round_hundredths(7.125), 713);
        assert_eq!(round_hundredths(7.375), 738);
        assert_eq!(round_hundredths(7.666999), 767);
        // 7.675 and 2.675 are stored slightly below the tie, 7.665 above it.
        assert_eq!(round_hundredths(7.675), 767);
        assert_eq!(round_hundredths(2.675), 267);
        assert_eq!(round_hundredths(7.665), 767);
        assert_eq!(round_hundredths(-2.125), -213);
    }

    #[test]
    fn term_null_handling() {
        assert_eq!(Term::new("NULL").unwrap(), Term::Null);
        assert_eq!(Term::new("null").unwrap(), Term::Text("null".into()));
        assert_eq!(Term::new(""), Err(ModelError::EmptyTerm));
        assert_eq!(Term::Null.surface("overall"), "overall");
    }

    #[test]
    fn category_grammar() {
        for ok in [
            "FOOD#QUALITY",
            "DRINKS#QUALITY",
            "FOOD#STYLE_OPTIONS",
            "LAPTOP#OPERATION_PERFORMANCE",
        ] {
            assert!(Category::new(ok).is_ok(), "{ok}");
        }
        for bad in [
            "FOOD",
            "food#quality",
            "#QUALITY",
            "FOOD#",
            "FOOD#QUALITY#X",
            "FOOD QUALITY",
        ] {
            assert!(Category::new(bad).is_err(), "{bad}");
        }
        let c = Category::new("FOOD#PRICES").unwrap();
        assert_eq!((c.entity(), c.attribute()), ("FOOD", "PRICES"));
    }

    #[test]
    fn enums_parse_case_insensitively() {
        assert_eq!("asqp".parse::<Subtask>().unwrap(), Subtask::Asqp);
        assert_eq!("DimASR".parse::<Subtask>().unwrap(), Subtask::Asr);
        assert_eq!("zho".parse::<Language>().unwrap(), Language::Zho);
        assert!("XYZ".parse::<Language>().is_err());
    }

    #[test]
    fn finance_only_for_asr() {
        let rec = AnnotatedRecord {
            review: Review {
                id: "f1".into(),
                text: "x".into(),
                language: Language::Eng,
                domain: Domain::Finance,
            },
            subtask: Subtask::Aste,
            annotation: Annotation::Tuples(vec![]),
        };
        assert!(rec.validate().is_err());
    }

    proptest! {
        #[test]
        fn va_round_trip(v in 1.0f64..=9.0, a in 1.0f64..=9.0) {
            let back = denormalize_clip(normalize_va(va(v, a)));
            prop_assert!((back.valence() - v).abs() <= 1e-12);
            prop_assert!((back.arousal() - a).abs() <= 1e-12);
        }

        #[test]
        fn normalized_round_trip(v in 0.0f64..=1.0, a in 0.0f64..=1.0) {
            let n = normalize_va(denormalize_clip(NormalizedVA::new(v, a)));
            prop_assert!((n.v - v).abs() <= 1e-12);
            prop_assert!((n.a - a).abs() <= 1e-12);
        }
    }
}
