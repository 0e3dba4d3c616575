use std::collections::{BTreeMap, HashMap};
use std::fmt;

use super::MetricError;
use crate::model::{Category, SentimentTuple, Term, VAPair};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchMode {
    /// Key is (aspect, opinion).
    Triplet,
    /// Key is (aspect, category, opinion).
    Quadruplet,
}

/// One-to-one alignment of predicted and gold tuples within a review.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchResult {
    /// `(pred index, gold index, VA weight)`.
    pub matches: Vec<(usize, usize, f64)>,
    pub unmatched_pred: usize,
    pub unmatched_gold: usize,
}

impl MatchResult {
    pub fn weight_sum(&self) -> f64 {
        self.matches.iter().map(|m| m.2).sum()
    }
}

/// Default VA agreement: `1 - (|dv| + |da|) / 16`, clipped to [0, 1].
pub fn va_similarity(pred: &VAPair, gold: &VAPair) -> f64 {
    let dist = (pred.valence() - gold.valence()).abs() + (pred.arousal() - gold.arousal()).abs();
    (1.0 - dist / 16.0).clamp(0.0, 1.0)
}

type Key<'a> = (&'a Term, Option<&'a Category>, &'a Term);

fn keys<'a>(
    tuples: &'a [SentimentTuple],
    mode: MatchMode,
    side: &'static str,
) -> Result<Vec<Key<'a>>, MetricError> {
    tuples
        .iter()
        .enumerate()
        .map(|(index, t)| match (mode, &t.category) {
            (MatchMode::Quadruplet, None) => Err(MetricError::ModeMismatch {
                side,
                index,
                message: "quadruplet mode needs a category",
            }),
            (MatchMode::Triplet, Some(_)) => Err(MetricError::ModeMismatch {
                side,
                index,
                message: "triplet mode does not take a category",
            }),
            _ => Ok((&t.aspect, t.category.as_ref(), &t.opinion)),
        })
        .collect()
}

pub fn match_tuples(
    preds: &[SentimentTuple],
    golds: &[SentimentTuple],
    mode: MatchMode,
) -> Result<MatchResult, MetricError> {
    match_tuples_with(preds, golds, mode, &va_similarity)
}

/// Exact-key matching; within a group of equal keys, picks the assignment of
/// maximum total weight.
pub fn match_tuples_with(
    preds: &[SentimentTuple],
    golds: &[SentimentTuple],
    mode: MatchMode,
    weight: &dyn Fn(&VAPair, &VAPair) -> f64,
) -> Result<MatchResult, MetricError> {
    let pred_keys = keys(preds, mode, "prediction")?;
    let gold_keys = keys(golds, mode, "gold")?;

    let mut groups: BTreeMap<Key, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (i, k) in pred_keys.into_iter().enumerate() {
        groups.entry(k).or_default().0.push(i);
    }
    for (j, k) in gold_keys.into_iter().enumerate() {
        groups.entry(k).or_default().1.push(j);
    }

    let mut matches = Vec::new();
    for (p_idx, g_idx) in groups.values() {
        if p_idx.is_empty() || g_idx.is_empty() {
            continue;
        }
        let w: Vec<Vec<f64>> = p_idx
            .iter()
            .map(|&i| {
                g_idx
                    .iter()
                    .map(|&j| weight(&preds[i].va, &golds[j].va).clamp(0.0, 1.0))
                    .collect()
            })
            .collect();
        for (r, c) in max_weight_assignment(&w) {
            matches.push((p_idx[r], g_idx[c], w[r][c]));
        }
    }
    matches.sort_by_key(|m| (m.0, m.1));
    Ok(MatchResult {
        unmatched_pred: preds.len() - matches.len(),
        unmatched_gold: golds.len() - matches.len(),
        matches,
    })
}

/// Maximum-weight assignment covering min(rows, cols) pairs (Hungarian
/// method on negated weights).
fn max_weight_assignment(w: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let rows = w.len();
    let cols = w.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    if rows > cols {
        let t: Vec<Vec<f64>> = (0..cols)
            .map(|c| (0..rows).map(|r| w[r][c]).collect())
            .collect();
        return max_weight_assignment(&t)
            .into_iter()
            .map(|(c, r)| (r, c))
            .collect();
    }
    let (n, m) = (rows, cols);
    let cost = |i: usize, j: usize| -w[i - 1][j - 1];
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=m)
        .filter(|&j| owner[j] != 0)
        .map(|j| (owner[j] - 1, j - 1))
        .collect()
}

/// Tuples of one review keyed by ID.
pub type ReviewTuples = (String, Vec<SentimentTuple>);

/// Corpus-level continuous precision / recall / F1.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize)]
pub struct CfScore {
    pub c_precision: f64,
    pub c_recall: f64,
    pub c_f1: f64,
    pub weight_sum: f64,
    pub matched: usize,
    pub n_pred: usize,
    pub n_gold: usize,
}

impl CfScore {
    pub fn from_totals(weight_sum: f64, matched: usize, n_pred: usize, n_gold: usize) -> Self {
        let ratio = |den: usize| {
            if den == 0 {
                0.0
            } else {
                weight_sum / den as f64
            }
        };
        let c_precision = ratio(n_pred);
        let c_recall = ratio(n_gold);
        let c_f1 = if c_precision + c_recall == 0.0 {
            0.0
        } else {
            2.0 * c_precision * c_recall / (c_precision + c_recall)
        };
        CfScore {
            c_precision,
            c_recall,
            c_f1,
            weight_sum,
            matched,
            n_pred,
            n_gold,
        }
    }
}

impl fmt::Display for CfScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "cP\tcR\tcF1")?;
        writeln!(
            f,
            "{:.4}\t{:.4}\t{:.4}",
            self.c_precision, self.c_recall, self.c_f1
        )?;
        write!(
            f,
            "# matched={} predicted={} gold={} weight_sum={:.6}",
            self.matched, self.n_pred, self.n_gold, self.weight_sum
        )
    }
}

pub fn continuous_f1(
    preds: &[ReviewTuples],
    golds: &[ReviewTuples],
    mode: MatchMode,
) -> Result<CfScore, MetricError> {
    continuous_f1_with(preds, golds, mode, &va_similarity)
}

/// Continuous F1 with an injected per-match weight. Predictions for IDs
/// absent from gold count as unmatched predictions.
pub fn continuous_f1_with(
    preds: &[ReviewTuples],
    golds: &[ReviewTuples],
    mode: MatchMode,
    weight: &dyn Fn(&VAPair, &VAPair) -> f64,
) -> Result<CfScore, MetricError> {
    let mut pred_map: HashMap<&str, Vec<&SentimentTuple>> = HashMap::new();
    for (id, tuples) in preds {
        pred_map
            .entry(id.as_str())
            .or_default()
            .extend(tuples.iter());
    }
    let mut gold_map: HashMap<&str, Vec<&SentimentTuple>> = HashMap::new();
    for (id, tuples) in golds {
        gold_map
            .entry(id.as_str())
            .or_default()
            .extend(tuples.iter());
    }

    let n_pred = preds.iter().map(|(_, t)| t.len()).sum();
    let n_gold = golds.iter().map(|(_, t)| t.len()).sum();
    let mut weight_sum = 0.0;
    let mut matched = 0;
    for (id, gold) in &gold_map {
        let Some(pred) = pred_map.get(id) else {
            continue;
        };
        let pred: Vec<SentimentTuple> = pred.iter().map(|t| (*t).clone()).collect();
        let gold: Vec<SentimentTuple> = gold.iter().map(|t| (*t).clone()).collect();
        let m = match_tuples_with(&pred, &gold, mode, weight)?;
        weight_sum += m.weight_sum();
        matched += m.matches.len();
    }
    Ok(CfScore::from_totals(weight_sum, matched, n_pred, n_gold))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn triplet(a: &str, o: &str, v: f64, ar: f64) -> SentimentTuple {
        SentimentTuple {
            aspect: Term::new(a).unwrap(),
            opinion: Term::new(o).unwrap(),
            category: None,
            va: VAPair::new(v, ar).unwrap(),
        }
    }

    #[test]
    fn similarity_examples() {
        let g = VAPair::new(7.33, 7.33).unwrap();
        assert_eq!(va_similarity(&g, &g), 1.0);
        let lo = VAPair::new(1.0, 1.0).unwrap();
        let hi = VAPair::new(9.0, 9.0).unwrap();
        assert_eq!(va_similarity(&lo, &hi), 0.0);
        let p = VAPair::new(7.0, 7.0).unwrap();
        assert_abs_diff_eq!(va_similarity(&p, &g), 0.95875, epsilon = 1e-12);
    }

    #[test]
    fn identical_distinct_keys_match_fully() {
        let golds = vec![
            triplet("food", "awesome", 7.67, 7.67),
            triplet("service", "fantastic", 7.33, 7.33),
        ];
        let m = match_tuples(&golds, &golds, MatchMode::Triplet).unwrap();
        assert_eq!(m.matches, vec![(0, 0, 1.0), (1, 1, 1.0)]);
        assert_eq!((m.unmatched_pred, m.unmatched_gold), (0, 0));
    }

    #[test]
    fn case_differences_do_not_match() {
        let golds = vec![triplet("Food", "great", 7.0, 7.0)];
        let preds = vec![triplet("food", "great", 7.0, 7.0)];
        let m = match_tuples(&preds, &golds, MatchMode::Triplet).unwrap();
        assert!(m.matches.is_empty());
        assert_eq!((m.unmatched_pred, m.unmatched_gold), (1, 1));
    }

    #[test]
    fn duplicate_keys_consumed_once() {
        let golds = vec![triplet("food", "good", 6.0, 6.0)];
        let preds = vec![
            triplet("food", "good", 3.0, 3.0),
            triplet("food", "good", 6.5, 6.0),
        ];
        let m = match_tuples(&preds, &golds, MatchMode::Triplet).unwrap();
        assert_eq!(m.matches.len(), 1);
        assert_eq!(m.matches[0].0, 1, "the closer duplicate wins");
        assert_eq!(m.unmatched_pred, 1);
    }

    #[test]
    fn mode_mismatch_is_an_error() {
        let golds = vec![triplet("food", "good", 6.0, 6.0)];
        assert!(matches!(
            match_tuples(&golds, &golds, MatchMode::Quadruplet),
            Err(MetricError::ModeMismatch { .. })
        ));
    }

    #[test]
    fn hungarian_beats_greedy() {
        // Greedy on row 0 would take (0,0)=0.9 and leave (1,1)=0.1.
        let w = vec![vec![0.9, 0.8], vec![0.85, 0.1]];
        let mut a = max_weight_assignment(&w);
        a.sort();
        assert_eq!(a, vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn cf1_examples() {
        let gold = vec![(
            "r1".to_string(),
            vec![
                triplet("food", "awesome", 7.33, 7.33),
                triplet("staff", "rude", 3.0, 6.0),
            ],
        )];
        let perfect = continuous_f1(&gold, &gold, MatchMode::Triplet).unwrap();
        assert_eq!(
            (perfect.c_precision, perfect.c_recall, perfect.c_f1),
            (1.0, 1.0, 1.0)
        );

        let none = continuous_f1(&[], &gold, MatchMode::Triplet).unwrap();
        assert_eq!(
            (none.c_precision, none.c_recall, none.c_f1),
            (0.0, 0.0, 0.0)
        );

        let pred = vec![(
            "r1".to_string(),
            vec![
                triplet("food", "awesome", 7.0, 7.0),
                triplet("view", "nice", 7.0, 7.0),
            ],
        )];
        let s = continuous_f1(&pred, &gold, MatchMode::Triplet).unwrap();
        assert_abs_diff_eq!(s.c_precision, 0.95875 / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.c_recall, 0.95875 / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.c_f1, 0.479375, epsilon = 1e-12);
    }

    #[test]
    fn predictions_for_unknown_ids_count_against_precision() {
        let gold = vec![("r1".to_string(), vec![triplet("food", "good", 6.0, 6.0)])];
        let mut pred = gold.clone();
        pred.push(("ghost".to_string(), vec![triplet("x", "y", 5.0, 5.0)]));
        let s = continuous_f1(&pred, &gold, MatchMode::Triplet).unwrap();
        assert_abs_diff_eq!(s.c_precision, 0.5);
        assert_abs_diff_eq!(s.c_recall, 1.0);
    }
}
