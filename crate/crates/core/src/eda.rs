//! Split statistics, NULL analysis and PSI drift between splits.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::DatasetSplit;
use crate::model::{SplitKind, Subtask};

/// Smoothing added to every bin proportion before renormalizing.
pub const DEFAULT_EPSILON: f64 = 1e-6;
pub const DEFAULT_QUANTILE_BINS: usize = 10;

#[derive(Debug, Error, PartialEq)]
pub enum EdaError {
    #[error("{0} sample is empty")]
    EmptySample(&'static str),
    #[error("reference split {0} is missing")]
    MissingReference(SplitKind),
    #[error("NULL analysis needs an ASTE or ASQP split")]
    UnsupportedSubtask,
    #[error("invalid bin spec: {0}")]
    InvalidBins(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Bins {
    /// Upper-inclusive cut points; `n` edges give `n + 1` bins.
    Quantile { edges: Vec<f64> },
    /// Reference categories plus one trailing bin for anything unseen.
    Categorical { categories: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinSpec {
    pub bins: Bins,
    pub epsilon: f64,
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl BinSpec {
    /// Equal-frequency bins fitted on the reference sample (linear
    /// interpolation between order statistics, duplicate edges merged).
    pub fn quantile(reference: &[f64], n_bins: usize, epsilon: f64) -> Result<Self, EdaError> {
        if reference.is_empty() {
            return Err(EdaError::EmptySample("reference"));
        }
        if n_bins < 2 {
            return Err(EdaError::InvalidBins("need at least two bins".into()));
        }
        let mut sorted = reference.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut edges: Vec<f64> = (1..n_bins)
            .map(|k| quantile_sorted(&sorted, k as f64 / n_bins as f64))
            .collect();
        edges.dedup();
        Self::checked(Bins::Quantile { edges }, epsilon)
    }

    pub fn categorical<'a>(
        reference: impl IntoIterator<Item = &'a str>,
        epsilon: f64,
    ) -> Result<Self, EdaError> {
        let categories: Vec<String> = reference
            .into_iter()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .map(String::from)
            .collect();
        if categories.is_empty() {
            return Err(EdaError::EmptySample("reference"));
        }
        Self::checked(Bins::Categorical { categories }, epsilon)
    }

    fn checked(bins: Bins, epsilon: f64) -> Result<Self, EdaError> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(EdaError::InvalidBins("epsilon must be positive".into()));
        }
        Ok(BinSpec { bins, epsilon })
    }

    pub fn len(&self) -> usize {
        match &self.bins {
            Bins::Quantile { edges } => edges.len() + 1,
            Bins::Categorical { categories } => categories.len() + 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn numeric_bin(&self, x: f64) -> usize {
        match &self.bins {
            Bins::Quantile { edges } => edges.partition_point(|&e| e < x),
            Bins::Categorical { .. } => panic!("numeric value on categorical bins"),
        }
    }

    fn category_bin(&self, c: &str) -> usize {
        match &self.bins {
            Bins::Categorical { categories } => categories
                .binary_search_by(|probe| probe.as_str().cmp(c))
                .unwrap_or(categories.len()),
            Bins::Quantile { .. } => panic!("category on quantile bins"),
        }
    }

    pub fn counts_numeric(&self, sample: &[f64]) -> Vec<usize> {
        let mut counts = vec![0; self.len()];
        for &x in sample {
            counts[self.numeric_bin(x)] += 1;
        }
        counts
    }

    pub fn counts_categorical<'a>(&self, sample: impl IntoIterator<Item = &'a str>) -> Vec<usize> {
        let mut counts = vec![0; self.len()];
        for c in sample {
            counts[self.category_bin(c)] += 1;
        }
        counts
    }
}

/// `Σ (p − q) ln(p / q)` over already-normalized proportions, each smoothed
/// by `epsilon` and renormalized.
pub fn psi_from_proportions(p: &[f64], q: &[f64], epsilon: f64) -> Result<f64, EdaError> {
    if p.len() != q.len() || p.is_empty() {
        return Err(EdaError::InvalidBins(
            "proportion vectors differ in length".into(),
        ));
    }
    let k = p.len() as f64;
    let smooth = |x: f64| (x + epsilon) / (1.0 + k * epsilon);
    Ok(p.iter()
        .zip(q)
        .map(|(&a, &b)| {
            let (a, b) = (smooth(a), smooth(b));
            (a - b) * (a / b).ln()
        })
        .sum())
}

pub fn psi_from_counts(
    reference: &[usize],
    comparison: &[usize],
    epsilon: f64,
) -> Result<f64, EdaError> {
    let total = |c: &[usize]| c.iter().sum::<usize>();
    let (nr, nc) = (total(reference), total(comparison));
    if nr == 0 {
        return Err(EdaError::EmptySample("reference"));
    }
    if nc == 0 {
        return Err(EdaError::EmptySample("comparison"));
    }
    if reference.iter().filter(|&&c| c > 0).count() == 1 {
        log::warn!("degenerate binning: all reference mass falls in one bin");
    }
    let p: Vec<f64> = reference.iter().map(|&c| c as f64 / nr as f64).collect();
    let q: Vec<f64> = comparison.iter().map(|&c| c as f64 / nc as f64).collect();
    psi_from_proportions(&p, &q, epsilon)
}

pub fn psi(reference: &[f64], comparison: &[f64], bins: &BinSpec) -> Result<f64, EdaError> {
    psi_from_counts(
        &bins.counts_numeric(reference),
        &bins.counts_numeric(comparison),
        bins.epsilon,
    )
}

pub fn psi_categorical(
    reference: &[&str],
    comparison: &[&str],
    bins: &BinSpec,
) -> Result<f64, EdaError> {
    psi_from_counts(
        &bins.counts_categorical(reference.iter().copied()),
        &bins.counts_categorical(comparison.iter().copied()),
        bins.epsilon,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsiLevel {
    None,
    Moderate,
    Significant,
}

impl PsiLevel {
    /// Below 0.1 no shift, 0.1 through 0.2 moderate, above 0.2 significant.
    pub fn from_value(value: f64) -> Self {
        if value < 0.1 {
            PsiLevel::None
        } else if value <= 0.2 {
            PsiLevel::Moderate
        } else {
            PsiLevel::Significant
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            PsiLevel::None => "none",
            PsiLevel::Moderate => "moderate",
            PsiLevel::Significant => "significant",
        }
    }
}

impl fmt::Display for PsiLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    ReviewLength,
    TuplesPerReview,
    Category,
}

impl Feature {
    pub const ALL: [Feature; 3] = [
        Feature::ReviewLength,
        Feature::TuplesPerReview,
        Feature::Category,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Feature::ReviewLength => "review_length",
            Feature::TuplesPerReview => "tuples_per_review",
            Feature::Category => "category",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsiReport {
    pub feature: Feature,
    pub reference: SplitKind,
    pub comparison: SplitKind,
    pub value: f64,
    pub level: PsiLevel,
}

impl PsiReport {
    pub fn new(feature: Feature, reference: SplitKind, comparison: SplitKind, value: f64) -> Self {
        PsiReport {
            feature,
            reference,
            comparison,
            value,
            level: PsiLevel::from_value(value),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitStats {
    pub split: SplitKind,
    pub subtask: Subtask,
    pub reviews: usize,
    /// Codepoints per review.
    pub review_lengths: Vec<usize>,
    /// Tuples per review, or aspects per review for ASR.
    pub density: Vec<usize>,
    pub mean_length: f64,
    pub mean_density: f64,
    pub total_items: usize,
    pub category_counts: BTreeMap<String, usize>,
}

fn mean(xs: &[usize]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<usize>() as f64 / xs.len() as f64
    }
}

pub fn split_stats(split: &DatasetSplit) -> SplitStats {
    let review_lengths: Vec<usize> = split
        .records
        .iter()
        .map(|r| r.review.text.chars().count())
        .collect();
    let density: Vec<usize> = split.records.iter().map(|r| r.density()).collect();
    let mut category_counts = BTreeMap::new();
    for t in split.records.iter().flat_map(|r| r.tuples()) {
        if let Some(c) = &t.category {
            *category_counts.entry(c.as_str().to_string()).or_insert(0) += 1;
        }
    }
    SplitStats {
        split: split.meta.split,
        subtask: split.subtask,
        reviews: split.records.len(),
        mean_length: mean(&review_lengths),
        mean_density: mean(&density),
        total_items: density.iter().sum(),
        review_lengths,
        density,
        category_counts,
    }
}

/// Shares of NULL tuples by which side is missing; sums to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NullComposition {
    pub aspect_only: f64,
    pub opinion_only: f64,
    pub both: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NullReport {
    pub total_tuples: usize,
    pub null_tuples: usize,
    pub rate: f64,
    /// `None` when no tuple has a NULL.
    pub composition: Option<NullComposition>,
}

pub fn null_analysis(split: &DatasetSplit) -> Result<NullReport, EdaError> {
    if split.subtask == Subtask::Asr {
        return Err(EdaError::UnsupportedSubtask);
    }
    let (mut total, mut aspect_only, mut opinion_only, mut both) = (0usize, 0usize, 0usize, 0usize);
    for t in split.records.iter().flat_map(|r| r.tuples()) {
        total += 1;
        match (t.aspect.is_null(), t.opinion.is_null()) {
            (true, true) => both += 1,
            (true, false) => aspect_only += 1,
            (false, true) => opinion_only += 1,
            (false, false) => {}
        }
    }
    let nulls = aspect_only + opinion_only + both;
    let frac = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
    Ok(NullReport {
        total_tuples: total,
        null_tuples: nulls,
        rate: frac(nulls, total),
        composition: (nulls > 0).then(|| NullComposition {
            aspect_only: frac(aspect_only, nulls),
            opinion_only: frac(opinion_only, nulls),
            both: frac(both, nulls),
        }),
    })
}

fn categories_of(split: &DatasetSplit) -> Vec<&str> {
    split
        .records
        .iter()
        .flat_map(|r| r.tuples())
        .filter_map(|t| t.category.as_ref().map(|c| c.as_str()))
        .collect()
}

fn as_f64(xs: &[usize]) -> Vec<f64> {
    xs.iter().map(|&x| x as f64).collect()
}

/// PSI of every non-Train split against Train, one report per (split,
/// feature). Continuous features use decile bins fitted on Train. The
/// category feature is skipped when Train has no categories.
pub fn psi_matrix(
    splits: &BTreeMap<SplitKind, DatasetSplit>,
    features: &[Feature],
) -> Result<Vec<PsiReport>, EdaError> {
    let reference = splits
        .get(&SplitKind::Train)
        .ok_or(EdaError::MissingReference(SplitKind::Train))?;
    let ref_stats = split_stats(reference);
    let ref_cats = categories_of(reference);
    let mut reports = Vec::new();
    for (&kind, split) in splits.iter().filter(|(k, _)| **k != SplitKind::Train) {
        let stats = split_stats(split);
        for &feature in features {
            let value = match feature {
                Feature::ReviewLength | Feature::TuplesPerReview => {
                    let pick = |s: &SplitStats| match feature {
                        Feature::ReviewLength => as_f64(&s.review_lengths),
                        _ => as_f64(&s.density),
                    };
                    let (r, c) = (pick(&ref_stats), pick(&stats));
                    let bins = BinSpec::quantile(&r, DEFAULT_QUANTILE_BINS, DEFAULT_EPSILON)?;
                    psi(&r, &c, &bins)?
                }
                Feature::Category => {
                    if ref_cats.is_empty() {
                        log::warn!("skipping category PSI: reference split has no categories");
                        continue;
                    }
                    let bins = BinSpec::categorical(ref_cats.iter().copied(), DEFAULT_EPSILON)?;
                    psi_categorical(&ref_cats, &categories_of(split), &bins)?
                }
            };
            reports.push(PsiReport::new(feature, SplitKind::Train, kind, value));
        }
    }
    Ok(reports)
}

/// Tab-separated table with a header row.
pub fn psi_table_tsv(reports: &[PsiReport]) -> String {
    let mut out = String::from("feature\treference\tcomparison\tvalue\tlevel\n");
    for r in reports {
        out.push_str(&format!(
            "{}\t{}\t{}\t{:.6}\t{}\n",
            r.feature.as_str(),
            r.reference,
            r.comparison,
            r.value,
            r.level
        ));
    }
    out
}

/// Heatmap with one row per comparison split and one column per feature.
pub fn psi_heatmap_svg(reports: &[PsiReport], title: &str) -> String {
    let rows: Vec<SplitKind> = reports
        .iter()
        .map(|r| r.comparison)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let cols: Vec<Feature> = reports
        .iter()
        .map(|r| r.feature)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let (cell_w, cell_h, left, top) = (130.0, 44.0, 70.0, 56.0);
    let width = left + cell_w * cols.len() as f64 + 10.0;
    let height = top + cell_h * rows.len() as f64 + 10.0;
    let escape = |s: &str| {
        s.replace('&', "&amp;")
            .replace('<', "&lt;")
            .replace('>', "&gt;")
    };
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    );
    svg.push_str(&format!(
        "<text x=\"{left}\" y=\"18\" font-size=\"14\">{}</text>\n",
        escape(title)
    ));
    for (j, f) in cols.iter().enumerate() {
        let x = left + cell_w * (j as f64 + 0.5);
        svg.push_str(&format!(
            "<text x=\"{x}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            top - 8.0,
            f.as_str()
        ));
    }
    for (i, split) in rows.iter().enumerate() {
        let y = top + cell_h * i as f64;
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{split}</text>\n",
            left - 8.0,
            y + cell_h / 2.0 + 4.0
        ));
        for (j, f) in cols.iter().enumerate() {
            let x = left + cell_w * j as f64;
            let Some(r) = reports
                .iter()
                .find(|r| r.comparison == *split && r.feature == *f)
            else {
                continue;
            };
            // white → red, saturating at 0.3
            let t = (r.value / 0.3).clamp(0.0, 1.0);
            let gb = (255.0 * (1.0 - 0.8 * t)).round() as u8;
            svg.push_str(&format!(
                "<rect x=\"{x}\" y=\"{y}\" width=\"{cell_w}\" height=\"{cell_h}\" fill=\"rgb(255,{gb},{gb})\" stroke=\"#888\"/>\n"
            ));
            svg.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{:.3} ({})</text>\n",
                x + cell_w / 2.0,
                y + cell_h / 2.0 + 4.0,
                r.value,
                r.level
            ));
        }
    }
    svg.push_str("</svg>\n");
    svg
}
