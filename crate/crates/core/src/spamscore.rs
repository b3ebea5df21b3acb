//! Empirical-CDF suspiciousness per feature and the combined spam score.
//!
//! Each feature value is turned into a tail probability `f` under its
//! orientation: for an H feature `f = 1 - P(X <= x)`, for an L feature
//! `f = P(X <= x)`. Low `f` is suspicious. The spam score of a subject is
//! `S = 1 - sqrt(mean f^2)`, in `[0, 1]`, higher meaning more suspicious.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{
    business_features, business_review_features, FeatureConfig, FeatureError,
    BUSINESS_FEATURE_NAMES, REVIEW_FEATURE_NAMES,
};
use crate::ingest::Corpus;
use crate::io_util::fmt_f64;

pub const DEFAULT_S_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum SpamScoreError {
    #[error("cannot fit a CDF for `{0}` on an empty sample")]
    EmptySample(String),
    #[error("non-finite value in sample for `{0}`")]
    NonFinite(String),
    #[error("no f-values to combine")]
    NothingToCombine,
    #[error("f-value {0} outside [0, 1]")]
    FOutOfRange(f64),
    #[error("scoring population of {0} subject(s); need at least 2")]
    PopulationTooSmall(usize),
    #[error("no orientation for feature `{0}`")]
    MissingOrientation(String),
    #[error("orientation table line {line}: {message}")]
    OrientationSyntax { line: usize, message: String },
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("malformed score csv: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    /// High values are suspicious.
    H,
    /// Low values are suspicious.
    L,
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "H" | "h" => Ok(Direction::H),
            "L" | "l" => Ok(Direction::L),
            other => Err(format!("direction must be H or L, got `{other}`")),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::H => "H",
            Direction::L => "L",
        })
    }
}

/// Feature name to direction, covering both review and business features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Orientations(BTreeMap<String, Direction>);

impl Default for Orientations {
    fn default() -> Self {
        use Direction::{H, L};
        let table = [
            ("RD", H),
            ("EXT", H),
            ("ETF", H),
            ("ISR", H),
            ("PCW", H),
            ("PP1", L),
            ("EXC", H),
            ("MNR", H),
            ("PR", H),
            ("NR", H),
            ("avgRD", H),
            ("ERD", L),
            ("ETG", L),
            ("RL", L),
        ];
        Orientations(table.iter().map(|(n, d)| (n.to_string(), *d)).collect())
    }
}

impl Orientations {
    pub fn get(&self, feature: &str) -> Option<Direction> {
        self.0.get(feature).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Direction)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Reads `feature=H|L` lines over the defaults. Blank lines and `#`
    /// comments are ignored; unknown feature names and repeated entries are
    /// rejected.
    pub fn parse(text: &str) -> Result<Self, SpamScoreError> {
        let mut table = Orientations::default();
        let mut seen = BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let syntax = |message: String| SpamScoreError::OrientationSyntax {
                line: i + 1,
                message,
            };
            let (name, dir) = line
                .split_once('=')
                .ok_or_else(|| syntax(format!("expected feature=H|L, got `{line}`")))?;
            let name = name.trim();
            if !table.0.contains_key(name) {
                return Err(syntax(format!("unknown feature `{name}`")));
            }
            if !seen.insert(name.to_string()) {
                return Err(syntax(format!("feature `{name}` listed twice")));
            }
            table.0.insert(name.to_string(), dir.parse().map_err(syntax)?);
        }
        Ok(table)
    }

    pub fn to_text(&self) -> String {
        self.0.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    pub feature: String,
    sorted: Vec<f64>,
}

pub fn fit_cdf(values: &[f64], feature: &str) -> Result<EmpiricalCdf, SpamScoreError> {
    if values.is_empty() {
        return Err(SpamScoreError::EmptySample(feature.to_string()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(SpamScoreError::NonFinite(feature.to_string()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(EmpiricalCdf {
        feature: feature.to_string(),
        sorted,
    })
}

impl EmpiricalCdf {
    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// `P(X <= x)`.
    pub fn prob_le(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= x) as f64 / self.sorted.len() as f64
    }

    pub fn is_constant(&self) -> bool {
        self.sorted.first() == self.sorted.last()
    }
}

pub fn f_value(cdf: &EmpiricalCdf, x: f64, direction: Direction) -> f64 {
    let p = cdf.prob_le(x);
    match direction {
        Direction::H => 1.0 - p,
        Direction::L => p,
    }
}

pub fn combine(f_values: &[f64]) -> Result<f64, SpamScoreError> {
    if f_values.is_empty() {
        return Err(SpamScoreError::NothingToCombine);
    }
    if let Some(&bad) = f_values.iter().find(|f| !(0.0..=1.0).contains(*f)) {
        return Err(SpamScoreError::FOutOfRange(bad));
    }
    let mean_sq = f_values.iter().map(|f| f * f).sum::<f64>() / f_values.len() as f64;
    Ok(1.0 - mean_sq.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SubjectKind {
    Review,
    Business,
}

impl fmt::Display for SubjectKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SubjectKind::Review => "review",
            SubjectKind::Business => "business",
        })
    }
}

impl FromStr for SubjectKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "review" => Ok(SubjectKind::Review),
            "business" => Ok(SubjectKind::Business),
            other => Err(format!("unknown subject kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpamScore {
    pub subject_id: String,
    pub kind: SubjectKind,
    /// f-values of the features that entered the score.
    pub f_values: BTreeMap<String, f64>,
    /// Features constant across the population, left out of the score.
    pub excluded: BTreeSet<String>,
    pub score: f64,
    pub flagged: bool,
    /// Every feature was constant: the score is 0 and never flagged.
    pub degenerate: bool,
}

/// Scores every row of a population against CDFs fitted on that same
/// population. `names[j]` labels column `j`.
pub fn score_population<const N: usize>(
    kind: SubjectKind,
    ids: &[String],
    rows: &[[f64; N]],
    names: &[&str; N],
    orientations: &Orientations,
    s_threshold: f64,
) -> Result<Vec<SpamScore>, SpamScoreError> {
    if rows.len() < 2 {
        return Err(SpamScoreError::PopulationTooSmall(rows.len()));
    }
    let mut columns = Vec::with_capacity(N);
    for (j, name) in names.iter().enumerate() {
        let direction = orientations
            .get(name)
            .ok_or_else(|| SpamScoreError::MissingOrientation(name.to_string()))?;
        let values: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        columns.push((fit_cdf(&values, name)?, direction));
    }
    let excluded: BTreeSet<String> = columns
        .iter()
        .filter(|(cdf, _)| cdf.is_constant())
        .map(|(cdf, _)| cdf.feature.clone())
        .collect();
    if !excluded.is_empty() {
        log::debug!("{kind} population of {}: constant features {excluded:?} excluded", rows.len());
    }
    ids.par_iter()
        .zip(rows)
        .map(|(id, row)| {
            let f_values: BTreeMap<String, f64> = columns
                .iter()
                .zip(row)
                .filter(|((cdf, _), _)| !cdf.is_constant())
                .map(|((cdf, dir), &x)| (cdf.feature.clone(), f_value(cdf, x, *dir)))
                .collect();
            let degenerate = f_values.is_empty();
            let score = if degenerate {
                0.0
            } else {
                combine(&f_values.values().copied().collect::<Vec<_>>())?
            };
            Ok(SpamScore {
                subject_id: id.clone(),
                kind,
                f_values,
                excluded: excluded.clone(),
                score,
                flagged: !degenerate && score > s_threshold,
                degenerate,
            })
        })
        .collect()
}

/// Scores of every review of one business, CDFs fitted over that business's
/// reviews, in review-id order.
pub fn score_reviews(
    business_id: &str,
    corpus: &Corpus,
    features: &FeatureConfig,
    orientations: &Orientations,
    s_threshold: f64,
) -> Result<Vec<SpamScore>, SpamScoreError> {
    let scored = business_review_features(business_id, corpus, features)?;
    let ids: Vec<String> = scored.iter().map(|(r, _)| r.review_id.clone()).collect();
    let rows: Vec<[f64; 7]> = scored.iter().map(|(_, v)| v.0).collect();
    score_population(
        SubjectKind::Review,
        &ids,
        &rows,
        &REVIEW_FEATURE_NAMES,
        orientations,
        s_threshold,
    )
}

/// Business scores with CDFs fitted across `business_ids`, in id order.
pub fn score_businesses(
    business_ids: &BTreeSet<String>,
    corpus: &Corpus,
    features: &FeatureConfig,
    orientations: &Orientations,
    s_threshold: f64,
) -> Result<Vec<SpamScore>, SpamScoreError> {
    let ids: Vec<String> = business_ids.iter().cloned().collect();
    let rows: Vec<[f64; 7]> = ids
        .par_iter()
        .map(|id| business_features(id, corpus, features).map(|v| v.0))
        .collect::<Result<_, _>>()?;
    score_population(
        SubjectKind::Business,
        &ids,
        &rows,
        &BUSINESS_FEATURE_NAMES,
        orientations,
        s_threshold,
    )
}

fn all_feature_names() -> impl Iterator<Item = &'static str> {
    REVIEW_FEATURE_NAMES.iter().chain(BUSINESS_FEATURE_NAMES.iter()).copied()
}

/// One row per score. Both feature families share the file; cells of the
/// other family, and of excluded features, are empty.
pub fn write_scores_csv<W: Write>(out: W, scores: &[SpamScore]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["subject_id".to_string(), "kind".to_string()];
    header.extend(all_feature_names().map(|n| format!("f_{n}")));
    header.extend(["S", "flagged", "degenerate"].map(String::from));
    w.write_record(&header)?;
    for s in scores {
        let mut row = vec![s.subject_id.clone(), s.kind.to_string()];
        row.extend(all_feature_names().map(|n| s.f_values.get(n).map_or(String::new(), |f| fmt_f64(*f))));
        row.push(fmt_f64(s.score));
        row.push(u8::from(s.flagged).to_string());
        row.push(u8::from(s.degenerate).to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_scores_csv<R: Read>(input: R) -> Result<Vec<SpamScore>, SpamScoreError> {
    let csv_err = |e: &dyn fmt::Display| SpamScoreError::Csv(e.to_string());
    let names: Vec<&str> = all_feature_names().collect();
    let mut rdr = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for record in rdr.records() {
        let rec = record.map_err(|e| csv_err(&e))?;
        if rec.len() != names.len() + 5 {
            return Err(SpamScoreError::Csv(format!("row has {} fields", rec.len())));
        }
        let kind: SubjectKind = rec[1].parse().map_err(|e: String| csv_err(&e))?;
        let family: &[&str] = match kind {
            SubjectKind::Review => &REVIEW_FEATURE_NAMES,
            SubjectKind::Business => &BUSINESS_FEATURE_NAMES,
        };
        let mut f_values = BTreeMap::new();
        let mut excluded = BTreeSet::new();
        for (j, name) in names.iter().enumerate() {
            let cell = &rec[2 + j];
            if cell.is_empty() {
                if family.contains(name) {
                    excluded.insert(name.to_string());
                }
            } else {
                let f: f64 = cell.parse().map_err(|e| csv_err(&e))?;
                f_values.insert(name.to_string(), f);
            }
        }
        let tail = 2 + names.len();
        let flag = |cell: &str| match cell {
            "0" => Ok(false),
            "1" => Ok(true),
            other => Err(SpamScoreError::Csv(format!("bad flag `{other}`"))),
        };
        out.push(SpamScore {
            subject_id: rec[0].to_string(),
            kind,
            f_values,
            excluded,
            score: rec[tail].parse().map_err(|e| csv_err(&e))?,
            flagged: flag(&rec[tail + 1])?,
            degenerate: flag(&rec[tail + 2])?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_le(values: &[f64], x: f64) -> f64 {
        values.iter().filter(|&&v| v <= x).count() as f64 / values.len() as f64
    }

    #[test]
    fn cdf_examples() {
        let cdf = fit_cdf(&[1.0, 2.0, 2.0, 5.0], "x").unwrap();
        assert_eq!(cdf.prob_le(2.0), 0.75);
        assert_eq!(cdf.prob_le(5.0), 1.0);
        assert_eq!(cdf.prob_le(0.5), 0.0);
        assert_eq!(f_value(&cdf, 2.0, Direction::H), 0.25);
        assert_eq!(f_value(&cdf, 5.0, Direction::H), 0.0);
        assert_eq!(f_value(&cdf, 1.0, Direction::L), 0.25);
        assert_eq!(fit_cdf(&[], "x").unwrap_err(), SpamScoreError::EmptySample("x".into()));
        assert!(fit_cdf(&[f64::NAN], "x").is_err());
    }

    #[test]
    fn combine_examples() {
        assert_eq!(combine(&[0.0; 7]).unwrap(), 1.0);
        assert_eq!(combine(&[1.0; 7]).unwrap(), 0.0);
        let s = combine(&[0.6, 0.8]).unwrap();
        assert!((s - (1.0 - 0.5f64.sqrt())).abs() < 1e-12);
        assert_eq!(combine(&[]).unwrap_err(), SpamScoreError::NothingToCombine);
        assert!(combine(&[1.5]).is_err());
    }

    #[test]
    fn orientation_table() {
        let o = Orientations::default();
        assert_eq!(o.get("PP1"), Some(Direction::L));
        assert_eq!(o.get("RD"), Some(Direction::H));
        assert_eq!(o.iter().count(), 14);
        let o = Orientations::parse("# override\nPP1 = H\n\nRL=H # short reviews\n").unwrap();
        assert_eq!(o.get("PP1"), Some(Direction::H));
        assert_eq!(o.get("RL"), Some(Direction::H));
        assert_eq!(o.get("ERD"), Some(Direction::L));
        assert_eq!(Orientations::parse(&o.to_text()).unwrap(), o);
        assert!(matches!(
            Orientations::parse("XYZ=H"),
            Err(SpamScoreError::OrientationSyntax { line: 1, .. })
        ));
        assert!(Orientations::parse("RD=H\nRD=L").is_err());
        assert!(Orientations::parse("RD=M").is_err());
        assert!(Orientations::parse("RD").is_err());
    }

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("s{i}")).collect()
    }

    #[test]
    fn all_extreme_subject_scores_one() {
        // every column: H features max at row 0, PP1 (L) min at row 0
        let rows = [
            [3.0, 1.0, 1.0, 1.0, 0.9, 0.0, 5.0],
            [0.5, 0.0, 0.0, 0.0, 0.1, 0.3, 0.0],
            [1.0, 0.0, 0.2, 0.0, 0.0, 0.2, 1.0],
        ];
        let s = score_population(
            SubjectKind::Review,
            &ids(3),
            &rows,
            &REVIEW_FEATURE_NAMES,
            &Orientations::default(),
            0.5,
        )
        .unwrap();
        // PP1 at its minimum gives f = 1/3 under L, the rest 0
        let expected = 1.0 - ((1.0f64 / 9.0) / 7.0).sqrt();
        assert!((s[0].score - expected).abs() < 1e-12);
        assert!(s[0].flagged);
        assert!(s[0].score > s[1].score);
    }

    #[test]
    fn constant_features_are_excluded() {
        let rows = [[1.0, 2.0], [1.0, 3.0], [1.0, 4.0]];
        let mut o = Orientations::default();
        o.0.insert("a".into(), Direction::H);
        o.0.insert("b".into(), Direction::H);
        let s = score_population(SubjectKind::Business, &ids(3), &rows, &["a", "b"], &o, 0.5).unwrap();
        assert!(s.iter().all(|x| x.excluded.contains("a") && x.f_values.len() == 1));
        // b = 4 is the max: f = 0, S = 1
        assert_eq!(s[2].score, 1.0);
        assert!(!s[0].degenerate);
    }

    #[test]
    fn identical_population_is_degenerate() {
        let rows = [[0.5; 7]; 4];
        let s = score_population(
            SubjectKind::Business,
            &ids(4),
            &rows,
            &BUSINESS_FEATURE_NAMES,
            &Orientations::default(),
            0.5,
        )
        .unwrap();
        for x in &s {
            assert!(x.degenerate);
            assert!(!x.flagged);
            assert_eq!(x.score, 0.0);
            assert_eq!(x.excluded.len(), 7);
        }
    }

    #[test]
    fn single_subject_population_is_an_error() {
        let err = score_population(
            SubjectKind::Business,
            &ids(1),
            &[[1.0; 7]],
            &BUSINESS_FEATURE_NAMES,
            &Orientations::default(),
            0.5,
        )
        .unwrap_err();
        assert_eq!(err, SpamScoreError::PopulationTooSmall(1));
    }

    #[test]
    fn duplicate_rows_score_identically() {
        let rows = [[1.0, 0.0, 0.3], [1.0, 0.0, 0.3], [0.2, 1.0, 0.9], [0.4, 0.5, 0.1]];
        let mut o = Orientations::default();
        for n in ["a", "b", "c"] {
            o.0.insert(n.into(), Direction::H);
        }
        let s = score_population(SubjectKind::Review, &ids(4), &rows, &["a", "b", "c"], &o, 0.5).unwrap();
        assert_eq!(s[0].score, s[1].score);
        assert_eq!(s[0].f_values, s[1].f_values);
    }

    #[test]
    fn csv_round_trip() {
        let rows = [[3.0, 1.0, 1.0, 1.0, 0.9, 0.0, 5.0], [0.5, 1.0, 0.0, 0.0, 0.1, 0.3, 0.0]];
        let mut scores = score_population(
            SubjectKind::Review,
            &ids(2),
            &rows,
            &REVIEW_FEATURE_NAMES,
            &Orientations::default(),
            0.5,
        )
        .unwrap();
        scores.extend(
            score_population(
                SubjectKind::Business,
                &["b1".to_string(), "b2".to_string()],
                &[[1.0; 7], [2.0; 7]],
                &BUSINESS_FEATURE_NAMES,
                &Orientations::default(),
                0.5,
            )
            .unwrap(),
        );
        let mut buf = Vec::new();
        write_scores_csv(&mut buf, &scores).unwrap();
        let back = read_scores_csv(buf.as_slice()).unwrap();
        assert_eq!(back, scores);
    }

    proptest! {
        #[test]
        fn cdf_matches_counting(
            values in proptest::collection::vec(-5i32..5, 1..50),
            probe in -6i32..6,
        ) {
            let v: Vec<f64> = values.iter().map(|&x| f64::from(x)).collect();
            let cdf = fit_cdf(&v, "x").unwrap();
            let x = f64::from(probe);
            prop_assert_eq!(cdf.prob_le(x), brute_le(&v, x));
            prop_assert_eq!(f_value(&cdf, x, Direction::H), 1.0 - brute_le(&v, x));
        }

        #[test]
        fn f_value_monotone(values in proptest::collection::vec(-100.0f64..100.0, 1..40), a in -120.0f64..120.0, b in -120.0f64..120.0) {
            let cdf = fit_cdf(&values, "x").unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(f_value(&cdf, lo, Direction::H) >= f_value(&cdf, hi, Direction::H));
            prop_assert!(f_value(&cdf, lo, Direction::L) <= f_value(&cdf, hi, Direction::L));
            let p = cdf.prob_le(a);
            prop_assert!((0.0..=1.0).contains(&p));
            prop_assert_eq!(cdf.prob_le(values.iter().cloned().fold(f64::MIN, f64::max)), 1.0);
        }

        #[test]
        fn combine_bounded_and_monotone(
            f in proptest::collection::vec(0.0f64..=1.0, 1..10),
            idx in any::<proptest::sample::Index>(),
            delta in 0.0f64..1.0,
        ) {
            let s = combine(&f).unwrap();
            prop_assert!((0.0..=1.0).contains(&s));
            let i = idx.index(f.len());
            let mut lower = f.clone();
            lower[i] = (lower[i] - delta).max(0.0);
            prop_assert!(combine(&lower).unwrap() >= s);
            let mut rev = f.clone();
            rev.reverse();
            prop_assert!((combine(&rev).unwrap() - s).abs() < 1e-12);
        }
    }
}
