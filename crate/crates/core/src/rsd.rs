//! Review spike detection.
//!
//! For each business the reviews inside the analysis window are tallied per
//! day and polarity (positive = 4-5 stars, negative = 1-2 stars). Quartiles
//! of the counts over *active* days give Tukey outlier fences, and a day whose
//! count is strictly above the upper fence is a spike.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Corpus, DateWindow};
use crate::io_util::fmt_f64;

pub const DEFAULT_MIN_ACTIVE_DAYS: usize = 5;

#[derive(Debug, Error, PartialEq)]
pub enum RsdError {
    #[error("quartiles of an empty sample")]
    EmptySample,
    #[error("unknown business `{0}`")]
    UnknownBusiness(String),
    #[error("{polarity} series of `{business_id}` has {active_days} active days, need {required}")]
    NotEnoughData {
        business_id: String,
        polarity: Polarity,
        active_days: usize,
        required: usize,
    },
    #[error("malformed RSD csv: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Polarity {
    Positive,
    Negative,
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Polarity::Positive => "positive",
            Polarity::Negative => "negative",
        })
    }
}

impl FromStr for Polarity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "positive" => Ok(Polarity::Positive),
            "negative" => Ok(Polarity::Negative),
            other => Err(format!("unknown polarity `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DailyCountSeries {
    pub business_id: String,
    pub window: DateWindow,
    pub positive: BTreeMap<NaiveDate, u32>,
    pub negative: BTreeMap<NaiveDate, u32>,
    /// 3-star reviews in the window; they belong to neither polarity.
    pub neutral: u32,
}

impl DailyCountSeries {
    pub fn counts(&self, polarity: Polarity) -> &BTreeMap<NaiveDate, u32> {
        match polarity {
            Polarity::Positive => &self.positive,
            Polarity::Negative => &self.negative,
        }
    }

    pub fn total(&self) -> u32 {
        self.positive.values().sum::<u32>() + self.negative.values().sum::<u32>() + self.neutral
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FencePair {
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
    pub iqr: f64,
    pub uof: f64,
    pub lof: f64,
    pub active_days: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spike {
    pub business_id: String,
    pub date: NaiveDate,
    pub polarity: Polarity,
    pub count: u32,
    /// The upper fence the count exceeded.
    pub fence: f64,
}

pub fn build_series(
    business_id: &str,
    corpus: &Corpus,
    window: DateWindow,
) -> Result<DailyCountSeries, RsdError> {
    if corpus.business(business_id).is_none() {
        return Err(RsdError::UnknownBusiness(business_id.to_string()));
    }
    let mut series = DailyCountSeries {
        business_id: business_id.to_string(),
        window,
        positive: BTreeMap::new(),
        negative: BTreeMap::new(),
        neutral: 0,
    };
    for r in corpus.reviews_of_business(business_id) {
        if !window.contains(r.date) {
            continue;
        }
        if r.is_positive() {
            *series.positive.entry(r.date).or_default() += 1;
        } else if r.is_negative() {
            *series.negative.entry(r.date).or_default() += 1;
        } else {
            series.neutral += 1;
        }
    }
    Ok(series)
}

fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Tukey hinges: the median, and the medians of the lower and upper halves
/// (each half includes the median when the sample size is odd).
pub fn quartiles(values: &[f64]) -> Result<(f64, f64, f64), RsdError> {
    if values.is_empty() {
        return Err(RsdError::EmptySample);
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let half = n.div_ceil(2);
    Ok((median_sorted(&v[..half]), median_sorted(&v), median_sorted(&v[n - half..])))
}

pub fn fences_from_values(values: &[f64]) -> Result<FencePair, RsdError> {
    let (q1, q2, q3) = quartiles(values)?;
    let iqr = q3 - q1;
    Ok(FencePair {
        q1,
        q2,
        q3,
        iqr,
        uof: q3 + 1.5 * iqr,
        lof: q1 - 1.5 * iqr,
        active_days: values.len(),
    })
}

pub fn fences(
    series: &DailyCountSeries,
    polarity: Polarity,
    min_active_days: usize,
) -> Result<FencePair, RsdError> {
    let counts = series.counts(polarity);
    if counts.is_empty() || counts.len() < min_active_days {
        return Err(RsdError::NotEnoughData {
            business_id: series.business_id.clone(),
            polarity,
            active_days: counts.len(),
            required: min_active_days,
        });
    }
    let values: Vec<f64> = counts.values().map(|&c| f64::from(c)).collect();
    fences_from_values(&values)
}

/// Days whose count is strictly above that polarity's upper fence, by date
/// (positive before negative on the same day). A missing fence means the
/// polarity was not evaluated.
pub fn detect_spikes(
    series: &DailyCountSeries,
    positive: Option<&FencePair>,
    negative: Option<&FencePair>,
) -> Vec<Spike> {
    let mut spikes = Vec::new();
    for (polarity, fence) in [(Polarity::Positive, positive), (Polarity::Negative, negative)] {
        let Some(fence) = fence else { continue };
        for (&date, &count) in series.counts(polarity) {
            if f64::from(count) > fence.uof {
                spikes.push(Spike {
                    business_id: series.business_id.clone(),
                    date,
                    polarity,
                    count,
                    fence: fence.uof,
                });
            }
        }
    }
    spikes.sort_by_key(|s| (s.date, s.polarity));
    spikes
}

#[derive(Debug, Clone, PartialEq)]
pub struct BusinessRsd {
    pub series: DailyCountSeries,
    pub positive_fence: Option<FencePair>,
    pub negative_fence: Option<FencePair>,
    pub spikes: Vec<Spike>,
}

impl BusinessRsd {
    pub fn business_id(&self) -> &str {
        &self.series.business_id
    }

    pub fn is_spiky(&self) -> bool {
        !self.spikes.is_empty()
    }
}

pub fn analyze_business(
    business_id: &str,
    corpus: &Corpus,
    window: DateWindow,
    min_active_days: usize,
) -> Result<BusinessRsd, RsdError> {
    let series = build_series(business_id, corpus, window)?;
    let positive_fence = fences(&series, Polarity::Positive, min_active_days).ok();
    let negative_fence = fences(&series, Polarity::Negative, min_active_days).ok();
    let spikes = detect_spikes(&series, positive_fence.as_ref(), negative_fence.as_ref());
    Ok(BusinessRsd {
        series,
        positive_fence,
        negative_fence,
        spikes,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpikyReport {
    /// One entry per analysed business, ascending id.
    pub businesses: Vec<BusinessRsd>,
    pub spiky: BTreeSet<String>,
    /// Businesses with too few active days in both polarities.
    pub skipped: usize,
    pub skipped_positive: usize,
    pub skipped_negative: usize,
}

impl SpikyReport {
    /// Spiky businesses over analysed businesses; 0 for an empty input.
    pub fn spiky_fraction(&self) -> f64 {
        if self.businesses.is_empty() {
            0.0
        } else {
            self.spiky.len() as f64 / self.businesses.len() as f64
        }
    }

    pub fn spikes(&self) -> impl Iterator<Item = &Spike> {
        self.businesses.iter().flat_map(|b| b.spikes.iter())
    }
}

pub fn spiky_businesses<'a, I>(
    business_ids: I,
    corpus: &Corpus,
    window: DateWindow,
    min_active_days: usize,
) -> Result<SpikyReport, RsdError>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut ids: Vec<&str> = business_ids.into_iter().collect();
    ids.sort_unstable();
    ids.dedup();
    let businesses: Vec<BusinessRsd> = ids
        .par_iter()
        .map(|id| analyze_business(id, corpus, window, min_active_days))
        .collect::<Result<_, _>>()?;
    let spiky = businesses
        .iter()
        .filter(|b| b.is_spiky())
        .map(|b| b.business_id().to_string())
        .collect();
    let skipped_positive = businesses.iter().filter(|b| b.positive_fence.is_none()).count();
    let skipped_negative = businesses.iter().filter(|b| b.negative_fence.is_none()).count();
    let skipped = businesses
        .iter()
        .filter(|b| b.positive_fence.is_none() && b.negative_fence.is_none())
        .count();
    Ok(SpikyReport {
        businesses,
        spiky,
        skipped,
        skipped_positive,
        skipped_negative,
    })
}

pub fn write_spike_csv<W: Write>(out: W, report: &SpikyReport) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["business_id", "date", "polarity", "count", "uof"])?;
    for s in report.spikes() {
        w.write_record([
            s.business_id.clone(),
            s.date.to_string(),
            s.polarity.to_string(),
            s.count.to_string(),
            fmt_f64(s.fence),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_daily_counts_csv<W: Write>(out: W, report: &SpikyReport) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["business_id", "window_start", "window_end", "date", "polarity", "count"])?;
    for b in &report.businesses {
        let s = &b.series;
        for polarity in [Polarity::Positive, Polarity::Negative] {
            for (date, count) in s.counts(polarity) {
                w.write_record([
                    s.business_id.clone(),
                    s.window.start.to_string(),
                    s.window.end.to_string(),
                    date.to_string(),
                    polarity.to_string(),
                    count.to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

const FENCE_HEADER: [&str; 12] = [
    "business_id",
    "window_start",
    "window_end",
    "neutral",
    "polarity",
    "active_days",
    "q1",
    "q2",
    "q3",
    "iqr",
    "uof",
    "lof",
];

/// Fence table; polarities without enough data are written with empty
/// quartile cells so every analysed business appears.
pub fn write_fences_csv<W: Write>(out: W, report: &SpikyReport) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(FENCE_HEADER)?;
    for b in &report.businesses {
        let s = &b.series;
        for (polarity, fence) in [
            (Polarity::Positive, b.positive_fence),
            (Polarity::Negative, b.negative_fence),
        ] {
            let mut row = vec![
                s.business_id.clone(),
                s.window.start.to_string(),
                s.window.end.to_string(),
                s.neutral.to_string(),
                polarity.to_string(),
                s.counts(polarity).len().to_string(),
            ];
            match fence {
                Some(f) => row.extend([f.q1, f.q2, f.q3, f.iqr, f.uof, f.lof].map(fmt_f64)),
                None => row.extend(std::iter::repeat_n(String::new(), 6)),
            }
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: impl fmt::Display) -> RsdError {
    RsdError::Csv(e.to_string())
}

fn parse<T: FromStr>(field: &str) -> Result<T, RsdError>
where
    T::Err: fmt::Display,
{
    field.parse::<T>().map_err(|e| RsdError::Csv(format!("`{field}`: {e}")))
}

/// Rebuilds the per-business analysis from the fence and daily-count tables.
/// Spikes are re-derived from the fences.
pub fn read_rsd_csv<R1: Read, R2: Read>(fences: R1, daily: R2) -> Result<SpikyReport, RsdError> {
    let mut by_id: BTreeMap<String, BusinessRsd> = BTreeMap::new();
    let mut rdr = csv::Reader::from_reader(fences);
    for record in rdr.records() {
        let rec = record.map_err(csv_err)?;
        if rec.len() != FENCE_HEADER.len() {
            return Err(RsdError::Csv(format!("fence row has {} fields", rec.len())));
        }
        let id = rec[0].to_string();
        let window = DateWindow::new(parse(&rec[1])?, parse(&rec[2])?).map_err(RsdError::Csv)?;
        let entry = by_id.entry(id.clone()).or_insert_with(|| BusinessRsd {
            series: DailyCountSeries {
                business_id: id,
                window,
                positive: BTreeMap::new(),
                negative: BTreeMap::new(),
                neutral: 0,
            },
            positive_fence: None,
            negative_fence: None,
            spikes: Vec::new(),
        });
        entry.series.neutral = parse(&rec[3])?;
        let polarity: Polarity = parse(&rec[4])?;
        let fence = if rec[6].is_empty() {
            None
        } else {
            Some(FencePair {
                active_days: parse(&rec[5])?,
                q1: parse(&rec[6])?,
                q2: parse(&rec[7])?,
                q3: parse(&rec[8])?,
                iqr: parse(&rec[9])?,
                uof: parse(&rec[10])?,
                lof: parse(&rec[11])?,
            })
        };
        match polarity {
            Polarity::Positive => entry.positive_fence = fence,
            Polarity::Negative => entry.negative_fence = fence,
        }
    }
    let mut rdr = csv::Reader::from_reader(daily);
    for record in rdr.records() {
        let rec = record.map_err(csv_err)?;
        if rec.len() != 6 {
            return Err(RsdError::Csv(format!("daily row has {} fields", rec.len())));
        }
        let entry = by_id
            .get_mut(&rec[0])
            .ok_or_else(|| RsdError::Csv(format!("daily counts for unknown business `{}`", &rec[0])))?;
        let date: NaiveDate = parse(&rec[3])?;
        let polarity: Polarity = parse(&rec[4])?;
        let count: u32 = parse(&rec[5])?;
        match polarity {
            Polarity::Positive => entry.series.positive.insert(date, count),
            Polarity::Negative => entry.series.negative.insert(date, count),
        };
    }
    let businesses: Vec<BusinessRsd> = by_id
        .into_values()
        .map(|mut b| {
            b.spikes = detect_spikes(&b.series, b.positive_fence.as_ref(), b.negative_fence.as_ref());
            b
        })
        .collect();
    let spiky = businesses
        .iter()
        .filter(|b| b.is_spiky())
        .map(|b| b.business_id().to_string())
        .collect();
    Ok(SpikyReport {
        skipped: businesses
            .iter()
            .filter(|b| b.positive_fence.is_none() && b.negative_fence.is_none())
            .count(),
        skipped_positive: businesses.iter().filter(|b| b.positive_fence.is_none()).count(),
        skipped_negative: businesses.iter().filter(|b| b.negative_fence.is_none()).count(),
        businesses,
        spiky,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{BusinessRecord, ReviewRecord, UserRecord};
    use proptest::prelude::*;

    fn day(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn series(pos: &[(&str, u32)], neg: &[(&str, u32)]) -> DailyCountSeries {
        DailyCountSeries {
            business_id: "b".into(),
            window: DateWindow::default(),
            positive: pos.iter().map(|(d, c)| (day(d), *c)).collect(),
            negative: neg.iter().map(|(d, c)| (day(d), *c)).collect(),
            neutral: 0,
        }
    }

    fn corpus(rows: &[(u8, &str)]) -> Corpus {
        let reviews = rows
            .iter()
            .enumerate()
            .map(|(i, (s, d))| ReviewRecord {
                review_id: format!("r{i:04}"),
                user_id: "u".into(),
                business_id: "b".into(),
                stars: *s,
                date: day(d),
                text: String::new(),
            })
            .collect();
        Corpus::new(
            vec![UserRecord {
                user_id: "u".into(),
                yelping_since: 2010,
                average_stars: 3.0,
                elite_years: vec![],
                fan_count: 0,
                friend_count: 0,
                review_count: 1,
                vote_counts: Default::default(),
                compliment_counts: Default::default(),
            }],
            reviews,
            vec![BusinessRecord {
                business_id: "b".into(),
                name: "b".into(),
                stars: 3.0,
                review_count: 1,
            }],
        )
        .unwrap()
    }

    #[test]
    fn daily_tallies() {
        let c = corpus(&[(5, "2015-06-01"), (5, "2015-06-01"), (4, "2015-06-01"), (1, "2015-06-02"), (3, "2015-06-03")]);
        let s = build_series("b", &c, DateWindow::default()).unwrap();
        assert_eq!(s.positive[&day("2015-06-01")], 3);
        assert_eq!(s.negative[&day("2015-06-02")], 1);
        assert_eq!(s.neutral, 1);
        assert_eq!(s.total(), 5);
    }

    #[test]
    fn neutral_only_series_is_empty() {
        let c = corpus(&[(3, "2015-06-01")]);
        let s = build_series("b", &c, DateWindow::default()).unwrap();
        assert!(s.positive.is_empty() && s.negative.is_empty());
    }

    #[test]
    fn window_bounds_respected() {
        let c = corpus(&[(5, "2014-12-31"), (5, "2015-01-01"), (5, "2015-12-31"), (5, "2016-01-01")]);
        let window = DateWindow::new(day("2015-01-01"), day("2015-12-31")).unwrap();
        let s = build_series("b", &c, window).unwrap();
        assert_eq!(s.positive.len(), 2);
    }

    #[test]
    fn unknown_business() {
        let c = corpus(&[(5, "2015-01-01")]);
        assert!(matches!(build_series("x", &c, DateWindow::default()), Err(RsdError::UnknownBusiness(_))));
    }

    #[test]
    fn hinge_examples() {
        let v: Vec<f64> = (1..=8).map(f64::from).collect();
        assert_eq!(quartiles(&v).unwrap(), (2.5, 4.5, 6.5));
        assert_eq!(quartiles(&[5.0]).unwrap(), (5.0, 5.0, 5.0));
        assert_eq!(quartiles(&[4.0; 9]).unwrap(), (4.0, 4.0, 4.0));
        assert_eq!(quartiles(&[]).unwrap_err(), RsdError::EmptySample);
        // odd n: halves include the median
        assert_eq!(quartiles(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap(), (2.0, 3.0, 4.0));
    }

    #[test]
    fn fence_arithmetic() {
        let f = fences_from_values(&[1.0, 2.0, 3.0, 5.0, 9.0, 10.0, 11.0]).unwrap();
        assert_eq!((f.q1, f.q2, f.q3), (2.5, 5.0, 9.5));
        let f = fences_from_values(&[2.0, 2.0, 6.0, 10.0, 10.0]).unwrap();
        assert_eq!((f.q1, f.q3, f.iqr, f.uof, f.lof), (2.0, 10.0, 8.0, 22.0, -10.0));
    }

    #[test]
    fn worked_fence_of_ten() {
        let fence = FencePair { q1: 4.0, q2: 6.0, q3: 7.0, iqr: 2.0, uof: 10.0, lof: 1.0, active_days: 9 };
        let s = series(&[("2015-01-01", 11), ("2015-01-02", 10)], &[]);
        let spikes = detect_spikes(&s, Some(&fence), None);
        assert_eq!(spikes.len(), 1);
        assert_eq!(spikes[0].date, day("2015-01-01"));
        assert_eq!(spikes[0].count, 11);
        assert_eq!(spikes[0].fence, 10.0);
    }

    #[test]
    fn constant_series_flags_anything_above() {
        let days: Vec<(String, u32)> = (1..=6).map(|d| (format!("2015-01-{d:02}"), 2)).collect();
        let refs: Vec<(&str, u32)> = days.iter().map(|(d, c)| (d.as_str(), *c)).collect();
        let mut s = series(&refs, &[]);
        let f = fences(&s, Polarity::Positive, 5).unwrap();
        assert_eq!((f.iqr, f.uof), (0.0, 2.0));
        assert!(detect_spikes(&s, Some(&f), None).is_empty());
        s.positive.insert(day("2015-02-01"), 3);
        assert_eq!(detect_spikes(&s, Some(&f), None).len(), 1);
    }

    #[test]
    fn planted_campaign_day() {
        let organic = [1, 1, 2, 2, 2, 3, 3, 3, 4];
        let mut rows: Vec<(String, u32)> =
            organic.iter().enumerate().map(|(i, &c)| (format!("2015-03-{:02}", i + 1), c)).collect();
        rows.push(("2015-04-01".into(), 20));
        let refs: Vec<(&str, u32)> = rows.iter().map(|(d, c)| (d.as_str(), *c)).collect();
        let s = series(&refs, &[]);
        let f = fences(&s, Polarity::Positive, 5).unwrap();
        assert_eq!((f.q1, f.q3, f.uof), (2.0, 3.0, 4.5));
        let spikes = detect_spikes(&s, Some(&f), None);
        assert_eq!(spikes.iter().map(|s| s.date).collect::<Vec<_>>(), vec![day("2015-04-01")]);

        let f = FencePair { q1: 1.0, q2: 2.0, q3: 3.0, iqr: 2.0, uof: 6.0, lof: -2.0, active_days: 10 };
        let spikes = detect_spikes(&s, Some(&f), None);
        assert_eq!(spikes.len(), 1);
        assert_eq!(spikes[0].count, 20);
    }

    #[test]
    fn multi_year_positive_burst_lands_in_burst_years() {
        // sparse organic positives 2008-2016 plus heavy 2013-2015 days
        let mut rows: Vec<(String, u32)> = Vec::new();
        for y in 2008..=2016 {
            for m in [2, 5, 8, 11] {
                rows.push((format!("{y}-{m:02}-10"), 1 + (m % 2)));
            }
        }
        for y in 2013..=2015 {
            for m in [3, 6, 9] {
                rows.push((format!("{y}-{m:02}-15"), 9));
            }
        }
        let refs: Vec<(&str, u32)> = rows.iter().map(|(d, c)| (d.as_str(), *c)).collect();
        let s = series(&refs, &[]);
        let f = fences(&s, Polarity::Positive, 5).unwrap();
        let spikes = detect_spikes(&s, Some(&f), None);
        assert!(!spikes.is_empty());
        assert!(spikes.iter().all(|s| (2013..=2015).contains(&chrono::Datelike::year(&s.date))));
    }

    #[test]
    fn negative_spikes_use_their_own_fence() {
        let pos: Vec<(String, u32)> = (1..=6).map(|d| (format!("2015-01-{d:02}"), 5)).collect();
        let neg: Vec<(String, u32)> = (1..=6).map(|d| (format!("2015-02-{d:02}"), 1)).collect();
        let p: Vec<(&str, u32)> = pos.iter().map(|(d, c)| (d.as_str(), *c)).collect();
        let mut n: Vec<(&str, u32)> = neg.iter().map(|(d, c)| (d.as_str(), *c)).collect();
        n.push(("2015-03-01", 4));
        let s = series(&p, &n);
        let fp = fences(&s, Polarity::Positive, 5).unwrap();
        let fneg = fences(&s, Polarity::Negative, 5).unwrap();
        let spikes = detect_spikes(&s, Some(&fp), Some(&fneg));
        assert_eq!(spikes.len(), 1);
        assert_eq!(spikes[0].polarity, Polarity::Negative);
        assert_eq!(spikes[0].fence, 1.0);
    }

    #[test]
    fn too_few_active_days() {
        let s = series(&[("2015-01-01", 30)], &[]);
        let err = fences(&s, Polarity::Positive, 5).unwrap_err();
        assert!(matches!(err, RsdError::NotEnoughData { active_days: 1, required: 5, .. }));
        assert!(fences(&s, Polarity::Negative, 0).is_err());
    }

    #[test]
    fn no_spikes_anywhere() {
        let c = corpus(&[(5, "2015-01-01"), (4, "2015-01-02")]);
        let r = spiky_businesses(["b"], &c, DateWindow::default(), 5).unwrap();
        assert!(r.spiky.is_empty());
        assert_eq!(r.spiky_fraction(), 0.0);
        assert_eq!(r.skipped, 1);
        let empty = spiky_businesses(std::iter::empty(), &c, DateWindow::default(), 5).unwrap();
        assert_eq!(empty.spiky_fraction(), 0.0);
    }

    #[test]
    fn csv_round_trip() {
        let mut rows = Vec::new();
        for d in 1..=9 {
            rows.push((5u8, format!("2015-01-{d:02}")));
            rows.push((1u8, format!("2015-02-{d:02}")));
        }
        for _ in 0..7 {
            rows.push((5, "2015-01-05".to_string()));
        }
        rows.push((3, "2015-03-01".to_string()));
        let refs: Vec<(u8, &str)> = rows.iter().map(|(s, d)| (*s, d.as_str())).collect();
        let c = corpus(&refs);
        let report = spiky_businesses(["b"], &c, DateWindow::default(), 5).unwrap();
        assert_eq!(report.spiky.len(), 1);
        let mut fences_buf = Vec::new();
        let mut daily_buf = Vec::new();
        write_fences_csv(&mut fences_buf, &report).unwrap();
        write_daily_counts_csv(&mut daily_buf, &report).unwrap();
        let back = read_rsd_csv(fences_buf.as_slice(), daily_buf.as_slice()).unwrap();
        assert_eq!(back, report);

        let mut spikes = Vec::new();
        write_spike_csv(&mut spikes, &report).unwrap();
        assert_eq!(
            String::from_utf8(spikes).unwrap(),
            "business_id,date,polarity,count,uof\nb,2015-01-05,positive,8,1\n"
        );
    }

    proptest! {
        #[test]
        fn fence_ordering(values in proptest::collection::vec(0u32..50, 1..40)) {
            let v: Vec<f64> = values.iter().map(|&x| f64::from(x)).collect();
            let f = fences_from_values(&v).unwrap();
            prop_assert!(f.lof <= f.q1 && f.q1 <= f.q2 && f.q2 <= f.q3 && f.q3 <= f.uof);
            prop_assert!(f.iqr >= 0.0);
        }

        #[test]
        fn series_accounts_for_every_review(rows in proptest::collection::vec((1u8..=5, 0i64..60), 1..80)) {
            let start = day("2015-01-01");
            let owned: Vec<(u8, String)> = rows
                .iter()
                .map(|(s, d)| (*s, (start + chrono::Duration::days(*d)).to_string()))
                .collect();
            let refs: Vec<(u8, &str)> = owned.iter().map(|(s, d)| (*s, d.as_str())).collect();
            let c = corpus(&refs);
            let s = build_series("b", &c, DateWindow::default()).unwrap();
            prop_assert_eq!(s.total() as usize, rows.len());
            let positives = rows.iter().filter(|(s, _)| *s >= 4).count();
            prop_assert_eq!(s.positive.values().sum::<u32>() as usize, positives);
            prop_assert!(s.positive.values().chain(s.negative.values()).all(|&c| c >= 1));
        }

        #[test]
        fn raising_a_quiet_day_keeps_other_spikes(
            counts in proptest::collection::vec(1u32..4, 8..20),
            bump_day in 0usize..8,
            bump in 1u32..30,
        ) {
            let mut rows: Vec<(String, u32)> =
                counts.iter().enumerate().map(|(i, &c)| (format!("2015-01-{:02}", i + 1), c)).collect();
            rows.push(("2015-02-01".into(), 40));
            let refs: Vec<(&str, u32)> = rows.iter().map(|(d, c)| (d.as_str(), *c)).collect();
            let s = series(&refs, &[]);
            let f = fences(&s, Polarity::Positive, 5).unwrap();
            let before = detect_spikes(&s, Some(&f), None);
            let target = day(&rows[bump_day].0);
            if before.iter().any(|sp| sp.date == target) {
                return Ok(());
            }
            let mut bumped = s.clone();
            *bumped.positive.get_mut(&target).unwrap() += bump;
            // hold the fence fixed: only the bumped day may change status
            let after = detect_spikes(&bumped, Some(&f), None);
            for sp in &before {
                prop_assert!(after.iter().any(|a| a.date == sp.date));
            }
            for a in &after {
                prop_assert!(a.date == target || before.iter().any(|sp| sp.date == a.date));
            }
        }
    }
}
