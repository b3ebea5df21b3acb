//! Trusted scores, deceptive ratings and the quarantine threshold sweep.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::ops::RangeInclusive;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::Corpus;
use crate::io_util::fmt_f64;

pub const DEFAULT_TOLERANCE: f64 = 0.5;
pub const DEFAULT_THETA_RANGE: RangeInclusive<u32> = 3..=10;

#[derive(Debug, Error, PartialEq)]
pub enum QuarantineError {
    #[error("business `{0}` has no reviews")]
    NoReviews(String),
    #[error("no trusted score for spiky business `{0}`")]
    MissingTrust(String),
    #[error("a fake rating of {fake_star} cannot lift an average of {a} by half a star")]
    Unreachable { a: f64, fake_star: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("malformed trust csv: {0}")]
    Csv(String),
}

/// How the trusted mean is normalised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TrustMode {
    /// Mean over the non-deceptive reviews only.
    #[default]
    SubsetMean,
    /// Sum over the non-deceptive reviews divided by all reviews.
    FullCount,
}

impl FromStr for TrustMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "subset" => Ok(TrustMode::SubsetMean),
            "full-count" => Ok(TrustMode::FullCount),
            other => Err(format!("trust mode must be `subset` or `full-count`, got `{other}`")),
        }
    }
}

impl fmt::Display for TrustMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrustMode::SubsetMean => "subset",
            TrustMode::FullCount => "full-count",
        })
    }
}

/// Whether a user is quarantined at `count >= theta` or `count > theta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Strictness {
    #[default]
    AtLeast,
    Exceeds,
}

impl Strictness {
    pub fn quarantines(self, count: usize, theta: u32) -> bool {
        let theta = theta as usize;
        match self {
            Strictness::AtLeast => count >= theta,
            Strictness::Exceeds => count > theta,
        }
    }
}

impl FromStr for Strictness {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "at-least" => Ok(Strictness::AtLeast),
            "exceeds" => Ok(Strictness::Exceeds),
            other => Err(format!("strictness must be `at-least` or `exceeds`, got `{other}`")),
        }
    }
}

impl fmt::Display for Strictness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strictness::AtLeast => "at-least",
            Strictness::Exceeds => "exceeds",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustScore {
    pub business_id: String,
    pub t_b: f64,
    /// Reviews that entered the mean.
    pub basis_count: usize,
    /// No review passed the spam-score filter; `t_b` is the plain mean.
    pub fallback: bool,
}

/// Trusted rating of a business: the mean stars of its reviews whose spam
/// score is at most `s_threshold`. Reviews without a score are kept.
pub fn trusted_score(
    business_id: &str,
    review_scores: &HashMap<String, f64>,
    corpus: &Corpus,
    s_threshold: f64,
    mode: TrustMode,
) -> Result<TrustScore, QuarantineError> {
    let mut total = 0usize;
    let mut total_sum = 0.0;
    let mut kept = 0usize;
    let mut kept_sum = 0.0;
    for r in corpus.reviews_of_business(business_id) {
        let stars = f64::from(r.stars);
        total += 1;
        total_sum += stars;
        if review_scores.get(&r.review_id).is_none_or(|&s| s <= s_threshold) {
            kept += 1;
            kept_sum += stars;
        }
    }
    if total == 0 {
        return Err(QuarantineError::NoReviews(business_id.to_string()));
    }
    let (t_b, basis_count, fallback) = if kept == 0 {
        (total_sum / total as f64, total, true)
    } else {
        let denominator = match mode {
            TrustMode::SubsetMean => kept,
            TrustMode::FullCount => total,
        };
        (kept_sum / denominator as f64, kept, false)
    };
    Ok(TrustScore {
        business_id: business_id.to_string(),
        t_b,
        basis_count,
        fallback,
    })
}

pub fn is_deceptive_rating(stars: u8, t_b: f64, tolerance: f64) -> bool {
    let s = f64::from(stars);
    s > t_b + tolerance || s < t_b - tolerance
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuarantineReport {
    pub threshold: u32,
    pub quarantined: BTreeSet<String>,
    /// Deceptive ratings on spiky businesses, for every popular user.
    pub per_user_deceptive_counts: BTreeMap<String, usize>,
    /// Quarantined share of the popular set, in percent.
    pub percentage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub user_id: String,
    pub business_id: String,
    pub review_id: String,
    pub stars: u8,
    pub t_b: f64,
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuarantineOutcome {
    /// One report per threshold, ascending.
    pub reports: Vec<QuarantineReport>,
    /// Every deceptive rating counted, by user then review id.
    pub evidence: Vec<Evidence>,
}

impl QuarantineOutcome {
    pub fn at(&self, theta: u32) -> Option<&QuarantineReport> {
        self.reports.iter().find(|r| r.threshold == theta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    pub tolerance: f64,
    pub strictness: Strictness,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            tolerance: DEFAULT_TOLERANCE,
            strictness: Strictness::AtLeast,
        }
    }
}

pub fn quarantine_sweep(
    popular: &BTreeSet<String>,
    spiky: &BTreeSet<String>,
    trust: &BTreeMap<String, TrustScore>,
    corpus: &Corpus,
    thetas: RangeInclusive<u32>,
    options: SweepOptions,
) -> Result<QuarantineOutcome, QuarantineError> {
    if let Some(missing) = spiky.iter().find(|b| !trust.contains_key(*b)) {
        return Err(QuarantineError::MissingTrust(missing.clone()));
    }
    let per_user: Vec<(String, Vec<Evidence>)> = popular
        .par_iter()
        .map(|user| {
            let mut found: Vec<Evidence> = corpus
                .reviews_by_user(user)
                .filter(|r| spiky.contains(&r.business_id))
                .filter_map(|r| {
                    let t_b = trust[&r.business_id].t_b;
                    is_deceptive_rating(r.stars, t_b, options.tolerance).then(|| Evidence {
                        user_id: user.clone(),
                        business_id: r.business_id.clone(),
                        review_id: r.review_id.clone(),
                        stars: r.stars,
                        t_b,
                        deviation: f64::from(r.stars) - t_b,
                    })
                })
                .collect();
            found.sort_by(|a, b| a.review_id.cmp(&b.review_id));
            (user.clone(), found)
        })
        .collect();
    let counts: BTreeMap<String, usize> = per_user.iter().map(|(u, e)| (u.clone(), e.len())).collect();
    let reports = thetas
        .map(|theta| {
            let quarantined: BTreeSet<String> = counts
                .iter()
                .filter(|(_, &c)| options.strictness.quarantines(c, theta))
                .map(|(u, _)| u.clone())
                .collect();
            let percentage = if popular.is_empty() {
                0.0
            } else {
                100.0 * quarantined.len() as f64 / popular.len() as f64
            };
            QuarantineReport {
                threshold: theta,
                quarantined,
                per_user_deceptive_counts: counts.clone(),
                percentage,
            }
        })
        .collect();
    Ok(QuarantineOutcome {
        reports,
        evidence: per_user.into_iter().flat_map(|(_, e)| e).collect(),
    })
}

fn raises_half_star(n: u64, a: f64, fake_star: f64, m: u64) -> bool {
    let (n, m) = (n as f64, m as f64);
    (n * a + m * fake_star) / (n + m) >= a + 0.5
}

/// Smallest number of `fake_star` ratings that lifts an average of `a` over
/// `n` ratings by at least half a star.
pub fn min_fraud_reviews(n: u64, a: f64, fake_star: f64) -> Result<u64, QuarantineError> {
    if n == 0 {
        return Err(QuarantineError::InvalidArgument("n must be at least 1".into()));
    }
    if !(1.0..=5.0).contains(&a) {
        return Err(QuarantineError::InvalidArgument(format!("average {a} outside [1, 5]")));
    }
    if !fake_star.is_finite() || fake_star <= a + 0.5 {
        return Err(QuarantineError::Unreachable { a, fake_star });
    }
    let mut m = (0.5 * n as f64 / (fake_star - a - 0.5)).ceil().max(1.0) as u64;
    // settle rounding in the closed form against the mean itself
    while m > 1 && raises_half_star(n, a, fake_star, m - 1) {
        m -= 1;
    }
    while !raises_half_star(n, a, fake_star, m) {
        m += 1;
    }
    Ok(m)
}

pub fn write_trust_csv<W: Write>(out: W, trust: &BTreeMap<String, TrustScore>) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["business_id", "t_b", "basis_count", "fallback"])?;
    for t in trust.values() {
        w.write_record([
            t.business_id.clone(),
            fmt_f64(t.t_b),
            t.basis_count.to_string(),
            u8::from(t.fallback).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trust_csv<R: Read>(input: R) -> Result<BTreeMap<String, TrustScore>, QuarantineError> {
    let err = |e: &dyn fmt::Display| QuarantineError::Csv(e.to_string());
    let mut rdr = csv::Reader::from_reader(input);
    let mut out = BTreeMap::new();
    for record in rdr.records() {
        let rec = record.map_err(|e| err(&e))?;
        if rec.len() != 4 {
            return Err(QuarantineError::Csv(format!("row has {} fields", rec.len())));
        }
        let t = TrustScore {
            business_id: rec[0].to_string(),
            t_b: rec[1].parse().map_err(|e| err(&e))?,
            basis_count: rec[2].parse().map_err(|e| err(&e))?,
            fallback: &rec[3] == "1",
        };
        out.insert(t.business_id.clone(), t);
    }
    Ok(out)
}

pub fn write_quarantine_csv<W: Write>(out: W, outcome: &QuarantineOutcome) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["threshold", "quarantined_count", "percentage", "user_ids"])?;
    for r in &outcome.reports {
        w.write_record([
            r.threshold.to_string(),
            r.quarantined.len().to_string(),
            format!("{:.2}", r.percentage),
            r.quarantined.iter().cloned().collect::<Vec<_>>().join(";"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_evidence_csv<W: Write>(out: W, outcome: &QuarantineOutcome) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["user_id", "business_id", "review_id", "stars", "t_b", "deviation"])?;
    for e in &outcome.evidence {
        w.write_record([
            e.user_id.clone(),
            e.business_id.clone(),
            e.review_id.clone(),
            e.stars.to_string(),
            fmt_f64(e.t_b),
            fmt_f64(e.deviation),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{BusinessRecord, ReviewRecord, UserRecord};
    use chrono::NaiveDate;
    use proptest::prelude::*;

    fn user(id: &str) -> UserRecord {
        UserRecord {
            user_id: id.into(),
            yelping_since: 2010,
            average_stars: 3.0,
            elite_years: vec![],
            fan_count: 0,
            friend_count: 0,
            review_count: 1,
            vote_counts: Default::default(),
            compliment_counts: Default::default(),
        }
    }

    fn business(id: &str) -> BusinessRecord {
        BusinessRecord {
            business_id: id.into(),
            name: id.into(),
            stars: 3.0,
            review_count: 1,
        }
    }

    /// Reviews given as (review, user, business, stars).
    fn corpus(rows: &[(&str, &str, &str, u8)]) -> Corpus {
        let mut users: Vec<&str> = rows.iter().map(|r| r.1).collect();
        users.sort_unstable();
        users.dedup();
        let mut businesses: Vec<&str> = rows.iter().map(|r| r.2).collect();
        businesses.sort_unstable();
        businesses.dedup();
        let date = NaiveDate::from_ymd_opt(2015, 1, 1).unwrap();
        Corpus::new(
            users.into_iter().map(user).collect(),
            rows.iter()
                .map(|(r, u, b, s)| ReviewRecord {
                    review_id: r.to_string(),
                    user_id: u.to_string(),
                    business_id: b.to_string(),
                    stars: *s,
                    date,
                    text: String::new(),
                })
                .collect(),
            businesses.into_iter().map(business).collect(),
        )
        .unwrap()
    }

    fn scores(pairs: &[(&str, f64)]) -> HashMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn plain_mean_when_nothing_flagged() {
        let c = corpus(&[("r1", "u", "b", 4), ("r2", "u", "b", 5), ("r3", "u", "b", 4)]);
        let t = trusted_score("b", &scores(&[("r1", 0.1), ("r2", 0.2), ("r3", 0.3)]), &c, 0.5, TrustMode::SubsetMean).unwrap();
        assert!((t.t_b - 13.0 / 3.0).abs() < 1e-12);
        assert_eq!(t.basis_count, 3);
        assert!(!t.fallback);
    }

    #[test]
    fn flagged_reviews_leave_the_mean() {
        let c = corpus(&[("r1", "u", "b", 5), ("r2", "u", "b", 5), ("r3", "u", "b", 1)]);
        let s = scores(&[("r1", 0.1), ("r2", 0.2), ("r3", 0.9)]);
        let t = trusted_score("b", &s, &c, 0.5, TrustMode::SubsetMean).unwrap();
        assert_eq!((t.t_b, t.basis_count), (5.0, 2));
        let full = trusted_score("b", &s, &c, 0.5, TrustMode::FullCount).unwrap();
        assert!((full.t_b - 10.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn everything_flagged_falls_back() {
        let c = corpus(&[("r1", "u", "b", 5), ("r2", "u", "b", 2)]);
        let t = trusted_score("b", &scores(&[("r1", 0.9), ("r2", 0.8)]), &c, 0.5, TrustMode::SubsetMean).unwrap();
        assert!(t.fallback);
        assert_eq!((t.t_b, t.basis_count), (3.5, 2));
        assert!(matches!(
            trusted_score("zz", &HashMap::new(), &c, 0.5, TrustMode::SubsetMean),
            Err(QuarantineError::NoReviews(_))
        ));
    }

    #[test]
    fn tolerance_band() {
        assert!(!is_deceptive_rating(4, 3.6, 0.5));
        assert!(is_deceptive_rating(4, 3.4, 0.5));
        assert!(!is_deceptive_rating(5, 4.5, 0.5));
        assert!(!is_deceptive_rating(4, 4.5, 0.5));
        assert!(is_deceptive_rating(1, 3.0, 0.5));
    }

    #[test]
    fn fraud_effort() {
        assert_eq!(min_fraud_reviews(70, 1.0, 5.0).unwrap(), 10);
        assert_eq!(min_fraud_reviews(7, 1.0, 5.0).unwrap(), 1);
        assert!(matches!(min_fraud_reviews(10, 4.6, 5.0), Err(QuarantineError::Unreachable { .. })));
        assert!(min_fraud_reviews(10, 4.5, 5.0).is_err());
        assert!(min_fraud_reviews(0, 1.0, 5.0).is_err());
    }

    fn sweep_fixture() -> (Corpus, BTreeSet<String>, BTreeSet<String>, BTreeMap<String, TrustScore>) {
        let mut rows = Vec::new();
        let names: Vec<String> = (0..40).map(|i| format!("r{i:02}")).collect();
        let mut k = 0;
        let mut push = |u: &'static str, b: &'static str, s: u8, rows: &mut Vec<(String, &'static str, &'static str, u8)>| {
            rows.push((names[k].clone(), u, b, s));
            k += 1;
        };
        // spammer: 5 stars on three spiky businesses, once on a quiet one
        for b in ["b1", "b2", "b3", "b4"] {
            push("spam", b, 5, &mut rows);
        }
        // honest: in line with trust everywhere but one
        for (b, s) in [("b1", 3), ("b2", 3), ("b3", 1)] {
            push("honest", b, s, &mut rows);
        }
        for b in ["b1", "b2", "b3", "b4"] {
            for _ in 0..3 {
                push("other", b, 3, &mut rows);
            }
        }
        let refs: Vec<(&str, &str, &str, u8)> = rows.iter().map(|(r, u, b, s)| (r.as_str(), *u, *b, *s)).collect();
        let c = corpus(&refs);
        let popular: BTreeSet<String> = ["spam", "honest"].map(String::from).into();
        let spiky: BTreeSet<String> = ["b1", "b2", "b3"].map(String::from).into();
        let trust = ["b1", "b2", "b3", "b4"]
            .iter()
            .map(|b| {
                (b.to_string(), TrustScore { business_id: b.to_string(), t_b: 3.0, basis_count: 3, fallback: false })
            })
            .collect();
        (c, popular, spiky, trust)
    }

    #[test]
    fn sweep_counts_only_spiky_businesses() {
        let (c, popular, spiky, trust) = sweep_fixture();
        let out = quarantine_sweep(&popular, &spiky, &trust, &c, 1..=4, SweepOptions::default()).unwrap();
        let at = |t| out.at(t).unwrap();
        assert_eq!(at(1).per_user_deceptive_counts["spam"], 3);
        assert_eq!(at(1).per_user_deceptive_counts["honest"], 1);
        assert_eq!(at(1).quarantined.len(), 2);
        assert_eq!(at(3).quarantined, ["spam".to_string()].into());
        assert_eq!(at(3).percentage, 50.0);
        assert!(at(4).quarantined.is_empty());
        assert_eq!(out.evidence.len(), 4);
        assert_eq!(out.evidence[0].user_id, "honest");
        assert_eq!(out.evidence[0].deviation, -2.0);

        let exceeds = SweepOptions { strictness: Strictness::Exceeds, ..Default::default() };
        let out = quarantine_sweep(&popular, &spiky, &trust, &c, 3..=3, exceeds).unwrap();
        assert!(out.reports[0].quarantined.is_empty());
    }

    #[test]
    fn missing_trust_is_an_error() {
        let (c, popular, spiky, mut trust) = sweep_fixture();
        trust.remove("b2");
        assert_eq!(
            quarantine_sweep(&popular, &spiky, &trust, &c, 3..=10, SweepOptions::default()).unwrap_err(),
            QuarantineError::MissingTrust("b2".into())
        );
    }

    #[test]
    fn csv_outputs() {
        let (c, popular, spiky, trust) = sweep_fixture();
        let out = quarantine_sweep(&popular, &spiky, &trust, &c, 1..=2, SweepOptions::default()).unwrap();
        let mut buf = Vec::new();
        write_quarantine_csv(&mut buf, &out).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "threshold,quarantined_count,percentage,user_ids\n1,2,100.00,honest;spam\n2,1,50.00,spam\n"
        );
        let mut buf = Vec::new();
        write_trust_csv(&mut buf, &trust).unwrap();
        assert_eq!(read_trust_csv(buf.as_slice()).unwrap(), trust);
    }

    proptest! {
        #[test]
        fn band_containment(stars in 1u8..=5, t in 1.0f64..=5.0) {
            if (f64::from(stars) - t).abs() <= 0.5 {
                prop_assert!(!is_deceptive_rating(stars, t, 0.5));
            }
        }

        #[test]
        fn fraud_effort_matches_search(n in 1u64..=200, half_steps in 0u32..=6) {
            let a = 1.0 + 0.5 * f64::from(half_steps);
            let m = min_fraud_reviews(n, a, 5.0).unwrap();
            let mut brute = 1;
            while !raises_half_star(n, a, 5.0, brute) {
                brute += 1;
            }
            prop_assert_eq!(m, brute);
        }

        #[test]
        fn unfiltered_trust_is_plain_mean(stars in proptest::collection::vec(1u8..=5, 1..30)) {
            let names: Vec<String> = (0..stars.len()).map(|i| format!("r{i:03}")).collect();
            let rows: Vec<(&str, &str, &str, u8)> =
                names.iter().zip(&stars).map(|(r, s)| (r.as_str(), "u", "b", *s)).collect();
            let c = corpus(&rows);
            let s: HashMap<String, f64> = names.iter().map(|r| (r.clone(), 0.7)).collect();
            let t = trusted_score("b", &s, &c, 1.0, TrustMode::SubsetMean).unwrap();
            let mean = stars.iter().map(|&x| f64::from(x)).sum::<f64>() / stars.len() as f64;
            prop_assert!((t.t_b - mean).abs() < 1e-12);
            prop_assert!((1.0..=5.0).contains(&t.t_b));
        }
    }
}
