//! User, review and business feature vectors.
//!
//! Each family is a fixed-order array of reals; the `*_FEATURE_NAMES`
//! constants give the column order used everywhere else (CSV headers,
//! orientation tables, cluster reports).

pub mod text;

use std::collections::BTreeMap;
use std::io::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Corpus, ReviewRecord, UserRecord};
use text::TextStats;

pub const USER_FEATURE_NAMES: [&str; 8] = [
    "yelping_since",
    "average_star",
    "elite_count",
    "fans",
    "friends_count",
    "review_count",
    "total_votes",
    "total_compliments",
];

pub const REVIEW_FEATURE_NAMES: [&str; 7] = ["RD", "EXT", "ETF", "ISR", "PCW", "PP1", "EXC"];

pub const BUSINESS_FEATURE_NAMES: [&str; 7] = ["MNR", "PR", "NR", "avgRD", "ERD", "ETG", "RL"];

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("unknown business `{0}`")]
    UnknownBusiness(String),
    #[error("business `{0}` has no reviews")]
    NoReviews(String),
    #[error("normalization needs at least 2 vectors, got {0}")]
    TooFewVectors(usize),
    #[error("vectors have inconsistent dimensions ({expected} vs {found})")]
    Dimension { expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserFeatureVector(pub [f64; 8]);

impl UserFeatureVector {
    pub fn yelping_since(&self) -> f64 {
        self.0[0]
    }
    pub fn average_star(&self) -> f64 {
        self.0[1]
    }
    pub fn fans(&self) -> f64 {
        self.0[3]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReviewFeatureVector(pub [f64; 7]);

impl ReviewFeatureVector {
    pub fn rd(&self) -> f64 {
        self.0[0]
    }
    pub fn ext(&self) -> f64 {
        self.0[1]
    }
    pub fn etf(&self) -> f64 {
        self.0[2]
    }
    pub fn isr(&self) -> f64 {
        self.0[3]
    }
    pub fn pcw(&self) -> f64 {
        self.0[4]
    }
    pub fn pp1(&self) -> f64 {
        self.0[5]
    }
    pub fn exc(&self) -> f64 {
        self.0[6]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BusinessFeatureVector(pub [f64; 7]);

impl BusinessFeatureVector {
    pub fn mnr(&self) -> f64 {
        self.0[0]
    }
    pub fn pr(&self) -> f64 {
        self.0[1]
    }
    pub fn nr(&self) -> f64 {
        self.0[2]
    }
    pub fn avg_rd(&self) -> f64 {
        self.0[3]
    }
    pub fn erd(&self) -> f64 {
        self.0[4]
    }
    pub fn etg(&self) -> f64 {
        self.0[5]
    }
    pub fn rl(&self) -> f64 {
        self.0[6]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Reviews this many days or more after a business's first review get ETF = 0.
    pub etf_window_days: u32,
    /// Inclusive upper bounds (days) of the temporal-gap buckets; one extra
    /// bucket catches everything above the last bound.
    pub gap_bucket_bounds: Vec<i64>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            etf_window_days: 180,
            gap_bucket_bounds: vec![0, 1, 3, 7, 30],
        }
    }
}

pub fn user_features(user: &UserRecord) -> UserFeatureVector {
    UserFeatureVector([
        f64::from(user.yelping_since),
        user.average_stars,
        user.elite_count() as f64,
        user.fan_count as f64,
        user.friend_count as f64,
        user.review_count as f64,
        user.total_votes() as f64,
        user.total_compliments() as f64,
    ])
}

/// Per-business quantities every review feature of that business needs.
#[derive(Debug, Clone, Copy)]
struct BusinessContext {
    mean_stars: f64,
    first_date: NaiveDate,
}

impl BusinessContext {
    fn of(business_id: &str, corpus: &Corpus) -> Result<Self, FeatureError> {
        if corpus.business(business_id).is_none() {
            return Err(FeatureError::UnknownBusiness(business_id.to_string()));
        }
        let mut n = 0usize;
        let mut sum = 0.0;
        let mut first: Option<NaiveDate> = None;
        for r in corpus.reviews_of_business(business_id) {
            n += 1;
            sum += f64::from(r.stars);
            first = Some(first.map_or(r.date, |d| d.min(r.date)));
        }
        match first {
            None => Err(FeatureError::NoReviews(business_id.to_string())),
            Some(first_date) => Ok(Self {
                mean_stars: sum / n as f64,
                first_date,
            }),
        }
    }
}

fn rating_deviation(stars: u8, mean_stars: f64) -> f64 {
    (f64::from(stars) - mean_stars).abs()
}

fn review_vector(
    review: &ReviewRecord,
    ctx: &BusinessContext,
    corpus: &Corpus,
    config: &FeatureConfig,
) -> ReviewFeatureVector {
    let stats = TextStats::of(&review.text);
    let days_after_first = (review.date - ctx.first_date).num_days() as f64;
    let etf = (1.0 - days_after_first / f64::from(config.etf_window_days)).max(0.0);
    let only_review = corpus.user_review_count(&review.user_id) == 1;
    ReviewFeatureVector([
        rating_deviation(review.stars, ctx.mean_stars),
        if review.is_positive() { 1.0 } else { 0.0 },
        etf,
        if only_review { 1.0 } else { 0.0 },
        stats.capital_ratio(),
        stats.first_person_ratio(),
        stats.exclamations as f64,
    ])
}

pub fn review_features(
    review: &ReviewRecord,
    corpus: &Corpus,
    config: &FeatureConfig,
) -> Result<ReviewFeatureVector, FeatureError> {
    let ctx = BusinessContext::of(&review.business_id, corpus)?;
    Ok(review_vector(review, &ctx, corpus, config))
}

/// Feature vectors of every review of one business, in review-id order.
pub fn business_review_features<'c>(
    business_id: &str,
    corpus: &'c Corpus,
    config: &FeatureConfig,
) -> Result<Vec<(&'c ReviewRecord, ReviewFeatureVector)>, FeatureError> {
    let ctx = BusinessContext::of(business_id, corpus)?;
    Ok(corpus
        .reviews_of_business(business_id)
        .map(|r| (r, review_vector(r, &ctx, corpus, config)))
        .collect())
}

/// Shannon entropy in bits of a histogram; empty bins are skipped.
pub fn entropy_bits(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let total = total as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum()
}

pub fn gap_bucket(gap_days: i64, bounds: &[i64]) -> usize {
    bounds
        .iter()
        .position(|&upper| gap_days <= upper)
        .unwrap_or(bounds.len())
}

pub fn business_features(
    business_id: &str,
    corpus: &Corpus,
    config: &FeatureConfig,
) -> Result<BusinessFeatureVector, FeatureError> {
    let ctx = BusinessContext::of(business_id, corpus)?;
    let reviews: Vec<&ReviewRecord> = corpus.reviews_of_business(business_id).collect();
    let n = reviews.len() as f64;

    let mut per_day: BTreeMap<NaiveDate, usize> = BTreeMap::new();
    let mut star_hist = [0usize; 5];
    let mut rd_sum = 0.0;
    let mut words = 0usize;
    for r in &reviews {
        *per_day.entry(r.date).or_default() += 1;
        star_hist[usize::from(r.stars - 1)] += 1;
        rd_sum += rating_deviation(r.stars, ctx.mean_stars);
        words += TextStats::of(&r.text).words;
    }
    let mnr = per_day.values().copied().max().unwrap_or(0) as f64;
    let positive = star_hist[3] + star_hist[4];
    let negative = star_hist[0] + star_hist[1];

    let mut dates: Vec<NaiveDate> = reviews.iter().map(|r| r.date).collect();
    dates.sort_unstable();
    let mut gap_hist = vec![0usize; config.gap_bucket_bounds.len() + 1];
    for pair in dates.windows(2) {
        let gap = (pair[1] - pair[0]).num_days();
        gap_hist[gap_bucket(gap, &config.gap_bucket_bounds)] += 1;
    }

    Ok(BusinessFeatureVector([
        mnr,
        positive as f64 / n,
        negative as f64 / n,
        rd_sum / n,
        entropy_bits(&star_hist),
        entropy_bits(&gap_hist),
        words as f64 / n,
    ]))
}

/// Per-dimension mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormalizationParams {
    pub fn normalize(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| if *s > 0.0 { (x - m) / s } else { 0.0 })
            .collect()
    }

    pub fn denormalize(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(z, (m, s))| m + z * s)
            .collect()
    }
}

pub fn zscore_normalize<V: AsRef<[f64]>>(
    vectors: &[V],
) -> Result<(Vec<Vec<f64>>, NormalizationParams), FeatureError> {
    if vectors.len() < 2 {
        return Err(FeatureError::TooFewVectors(vectors.len()));
    }
    let dim = vectors[0].as_ref().len();
    for v in vectors {
        if v.as_ref().len() != dim {
            return Err(FeatureError::Dimension {
                expected: dim,
                found: v.as_ref().len(),
            });
        }
    }
    let n = vectors.len() as f64;
    let mut mean = vec![0.0; dim];
    for v in vectors {
        for (m, x) in mean.iter_mut().zip(v.as_ref()) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for v in vectors {
        for ((acc, x), m) in var.iter_mut().zip(v.as_ref()).zip(&mean) {
            *acc += (x - m) * (x - m);
        }
    }
    let std: Vec<f64> = var.iter().map(|s| (s / n).sqrt()).collect();
    let params = NormalizationParams { mean, std };
    let normalized = vectors.iter().map(|v| params.normalize(v.as_ref())).collect();
    Ok((normalized, params))
}

fn write_feature_csv<W: Write, const N: usize>(
    out: W,
    id_column: &str,
    names: &[&str; N],
    rows: &[(String, [f64; N])],
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![id_column.to_string()];
    header.extend(names.iter().map(|s| s.to_string()));
    w.write_record(&header)?;
    for (id, values) in rows {
        let mut record = vec![id.clone()];
        record.extend(values.iter().map(|v| crate::io_util::fmt_f64(*v)));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_user_feature_csv<W: Write>(
    out: W,
    rows: &[(String, UserFeatureVector)],
) -> csv::Result<()> {
    let rows: Vec<_> = rows.iter().map(|(id, v)| (id.clone(), v.0)).collect();
    write_feature_csv(out, "user_id", &USER_FEATURE_NAMES, &rows)
}

pub fn write_review_feature_csv<W: Write>(
    out: W,
    rows: &[(String, ReviewFeatureVector)],
) -> csv::Result<()> {
    let rows: Vec<_> = rows.iter().map(|(id, v)| (id.clone(), v.0)).collect();
    write_feature_csv(out, "review_id", &REVIEW_FEATURE_NAMES, &rows)
}

pub fn write_business_feature_csv<W: Write>(
    out: W,
    rows: &[(String, BusinessFeatureVector)],
) -> csv::Result<()> {
    let rows: Vec<_> = rows.iter().map(|(id, v)| (id.clone(), v.0)).collect();
    write_feature_csv(out, "business_id", &BUSINESS_FEATURE_NAMES, &rows)
}
