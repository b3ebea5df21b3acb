//! Record parsing, validation and cross-linking.
//!
//! The three input files are newline-delimited JSON objects whose field names
//! follow the public Yelp academic dataset. Only the fields the feature
//! extractors need are read; everything else on a line is ignored. Several
//! dataset releases spell the same quantity differently (`votes` object vs
//! top-level `useful`/`funny`/`cool`, `friends` as a list vs a count), and the
//! parser accepts each of those spellings.

mod corpus;
mod parse;
pub mod snapshot;

use std::fmt;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use corpus::{Corpus, CorpusError};
pub use parse::{parse_business, parse_review, parse_user};
pub use snapshot::{load_snapshot, snapshot, SnapshotError, SNAPSHOT_VERSION};

use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserRecord {
    pub user_id: String,
    pub yelping_since: i32,
    pub average_stars: f64,
    pub elite_years: Vec<i32>,
    pub fan_count: u64,
    pub friend_count: u64,
    pub review_count: u64,
    pub vote_counts: BTreeMap<String, u64>,
    pub compliment_counts: BTreeMap<String, u64>,
}

impl UserRecord {
    pub fn elite_count(&self) -> usize {
        self.elite_years.len()
    }

    pub fn total_votes(&self) -> u64 {
        self.vote_counts.values().sum()
    }

    pub fn total_compliments(&self) -> u64 {
        self.compliment_counts.values().sum()
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.user_id.is_empty() {
            return Err("empty user_id".into());
        }
        if !self.average_stars.is_finite() {
            return Err("average_stars is not finite".into());
        }
        if self.review_count > 0 && !(1.0..=5.0).contains(&self.average_stars) {
            return Err(format!(
                "average_stars {} outside [1, 5] for a user with reviews",
                self.average_stars
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewRecord {
    pub review_id: String,
    pub user_id: String,
    pub business_id: String,
    pub stars: u8,
    pub date: NaiveDate,
    pub text: String,
}

impl ReviewRecord {
    pub fn is_positive(&self) -> bool {
        self.stars >= 4
    }

    pub fn is_negative(&self) -> bool {
        self.stars <= 2
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.review_id.is_empty() {
            return Err("empty review_id".into());
        }
        if self.user_id.is_empty() || self.business_id.is_empty() {
            return Err("empty user_id or business_id".into());
        }
        if !(1..=5).contains(&self.stars) {
            return Err(format!("stars {} outside 1..=5", self.stars));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusinessRecord {
    pub business_id: String,
    pub name: String,
    pub stars: f64,
    pub review_count: u64,
}

impl BusinessRecord {
    pub fn validate(&self) -> Result<(), String> {
        if self.business_id.is_empty() {
            return Err("empty business_id".into());
        }
        if !self.stars.is_finite() {
            return Err("stars is not finite".into());
        }
        Ok(())
    }
}

/// What to do with a review whose user or business is not in the corpus.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkRepairPolicy {
    #[default]
    Drop,
    /// Synthesize a minimal user/business record from the reviews that reference it.
    Stub,
}

impl std::str::FromStr for LinkRepairPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "drop" => Ok(Self::Drop),
            "stub" => Ok(Self::Stub),
            other => Err(format!("unknown link repair policy `{other}` (expected drop|stub)")),
        }
    }
}

impl fmt::Display for LinkRepairPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Drop => "drop",
            Self::Stub => "stub",
        })
    }
}

/// Inclusive calendar-day window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateWindow {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateWindow {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self, String> {
        if start > end {
            return Err(format!("window start {start} is after end {end}"));
        }
        Ok(Self { start, end })
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }
}

impl Default for DateWindow {
    fn default() -> Self {
        Self {
            start: NaiveDate::from_ymd_opt(2004, 1, 1).unwrap(),
            end: NaiveDate::from_ymd_opt(2016, 12, 31).unwrap(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RecordKind {
    User,
    Review,
    Business,
}

impl fmt::Display for RecordKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::User => "user",
            Self::Review => "review",
            Self::Business => "business",
        })
    }
}

#[derive(Debug, Clone)]
pub struct IngestOptions {
    pub policy: LinkRepairPolicy,
    pub window: DateWindow,
    /// Fraction of malformed lines per file above which parsing aborts.
    pub max_error_rate: f64,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            policy: LinkRepairPolicy::Drop,
            window: DateWindow::default(),
            max_error_rate: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineError {
    pub kind: RecordKind,
    /// 1-based line number in the source file.
    pub line: usize,
    pub message: String,
}

impl fmt::Display for LineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} line {}: {}", self.kind, self.line, self.message)
    }
}

/// Counts of what happened to every input line.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub user_lines: usize,
    pub review_lines: usize,
    pub business_lines: usize,
    pub errors: Vec<LineError>,
    pub out_of_window_reviews: usize,
    pub dropped_dangling_reviews: usize,
    pub stubbed_users: usize,
    pub stubbed_businesses: usize,
}

impl IngestReport {
    pub fn rejected(&self, kind: RecordKind) -> usize {
        self.errors.iter().filter(|e| e.kind == kind).count()
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{kind} file {path} contains no records")]
    EmptyInput { kind: RecordKind, path: PathBuf },
    #[error(
        "{kind} file: {errors} of {lines} lines malformed ({rate:.4} > limit {limit}); first: {first}"
    )]
    TooManyErrors {
        kind: RecordKind,
        errors: usize,
        lines: usize,
        rate: f64,
        limit: f64,
        first: String,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// Parses and cross-links the three record files.
pub fn parse_corpus(
    user_path: &Path,
    review_path: &Path,
    business_path: &Path,
    options: &IngestOptions,
) -> Result<(Corpus, IngestReport), IngestError> {
    let read = |path: &Path| {
        std::fs::read_to_string(path).map_err(|source| IngestError::Io {
            path: path.to_path_buf(),
            source,
        })
    };
    let users_text = read(user_path)?;
    let reviews_text = read(review_path)?;
    let businesses_text = read(business_path)?;

    let ((users, reviews), businesses) = rayon::join(
        || {
            rayon::join(
                || parse_lines(&users_text, RecordKind::User, parse_user),
                || parse_lines(&reviews_text, RecordKind::Review, parse_review),
            )
        },
        || parse_lines(&businesses_text, RecordKind::Business, parse_business),
    );

    let mut report = IngestReport::default();
    let users = check_file(users, user_path, options, &mut report)?;
    let reviews = check_file(reviews, review_path, options, &mut report)?;
    let businesses = check_file(businesses, business_path, options, &mut report)?;
    report.errors.sort_by_key(|e| (e.kind, e.line));

    let corpus = link(users, reviews, businesses, options, &mut report)?;
    Ok((corpus, report))
}

/// Like [`parse_corpus`] but over in-memory file contents.
pub fn parse_corpus_str(
    users: &str,
    reviews: &str,
    businesses: &str,
    options: &IngestOptions,
) -> Result<(Corpus, IngestReport), IngestError> {
    let mut report = IngestReport::default();
    let mem = Path::new("<memory>");
    let users = check_file(
        parse_lines(users, RecordKind::User, parse_user),
        mem,
        options,
        &mut report,
    )?;
    let reviews = check_file(
        parse_lines(reviews, RecordKind::Review, parse_review),
        mem,
        options,
        &mut report,
    )?;
    let businesses = check_file(
        parse_lines(businesses, RecordKind::Business, parse_business),
        mem,
        options,
        &mut report,
    )?;
    report.errors.sort_by_key(|e| (e.kind, e.line));
    let corpus = link(users, reviews, businesses, options, &mut report)?;
    Ok((corpus, report))
}

struct ParsedFile<T> {
    kind: RecordKind,
    lines: usize,
    records: Vec<T>,
    errors: Vec<LineError>,
}

trait Keyed {
    fn key(&self) -> &str;
}

impl Keyed for UserRecord {
    fn key(&self) -> &str {
        &self.user_id
    }
}

impl Keyed for ReviewRecord {
    fn key(&self) -> &str {
        &self.review_id
    }
}

impl Keyed for BusinessRecord {
    fn key(&self) -> &str {
        &self.business_id
    }
}

fn parse_lines<T: Keyed>(
    text: &str,
    kind: RecordKind,
    parse: fn(&serde_json::Value) -> Result<T, String>,
) -> ParsedFile<T> {
    let mut out = ParsedFile {
        kind,
        lines: 0,
        records: Vec::new(),
        errors: Vec::new(),
    };
    let mut seen = std::collections::HashSet::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.lines += 1;
        let result = serde_json::from_str::<serde_json::Value>(line)
            .map_err(|e| format!("invalid JSON: {e}"))
            .and_then(|v| parse(&v));
        match result {
            Ok(record) => {
                if seen.insert(record.key().to_string()) {
                    out.records.push(record);
                } else {
                    out.errors.push(LineError {
                        kind,
                        line: idx + 1,
                        message: format!("duplicate id `{}`", record.key()),
                    });
                }
            }
            Err(message) => out.errors.push(LineError {
                kind,
                line: idx + 1,
                message,
            }),
        }
    }
    out
}

fn check_file<T>(
    parsed: ParsedFile<T>,
    path: &Path,
    options: &IngestOptions,
    report: &mut IngestReport,
) -> Result<Vec<T>, IngestError> {
    match parsed.kind {
        RecordKind::User => report.user_lines = parsed.lines,
        RecordKind::Review => report.review_lines = parsed.lines,
        RecordKind::Business => report.business_lines = parsed.lines,
    }
    if parsed.lines == 0 {
        return Err(IngestError::EmptyInput {
            kind: parsed.kind,
            path: path.to_path_buf(),
        });
    }
    let rate = parsed.errors.len() as f64 / parsed.lines as f64;
    if rate > options.max_error_rate {
        return Err(IngestError::TooManyErrors {
            kind: parsed.kind,
            errors: parsed.errors.len(),
            lines: parsed.lines,
            rate,
            limit: options.max_error_rate,
            first: parsed.errors[0].to_string(),
        });
    }
    report.errors.extend(parsed.errors);
    Ok(parsed.records)
}

fn link(
    users: Vec<UserRecord>,
    reviews: Vec<ReviewRecord>,
    businesses: Vec<BusinessRecord>,
    options: &IngestOptions,
    report: &mut IngestReport,
) -> Result<Corpus, IngestError> {
    let mut users: BTreeMap<String, UserRecord> =
        users.into_iter().map(|u| (u.user_id.clone(), u)).collect();
    let mut businesses: BTreeMap<String, BusinessRecord> = businesses
        .into_iter()
        .map(|b| (b.business_id.clone(), b))
        .collect();

    let mut kept = Vec::with_capacity(reviews.len());
    let mut missing_users: BTreeMap<String, Vec<u8>> = BTreeMap::new();
    let mut missing_businesses: BTreeMap<String, Vec<u8>> = BTreeMap::new();
    for review in reviews {
        if !options.window.contains(review.date) {
            report.out_of_window_reviews += 1;
            continue;
        }
        let has_user = users.contains_key(&review.user_id);
        let has_business = businesses.contains_key(&review.business_id);
        if has_user && has_business {
            kept.push(review);
            continue;
        }
        match options.policy {
            LinkRepairPolicy::Drop => report.dropped_dangling_reviews += 1,
            LinkRepairPolicy::Stub => {
                if !has_user {
                    missing_users
                        .entry(review.user_id.clone())
                        .or_default()
                        .push(review.stars);
                }
                if !has_business {
                    missing_businesses
                        .entry(review.business_id.clone())
                        .or_default()
                        .push(review.stars);
                }
                kept.push(review);
            }
        }
    }

    if options.policy == LinkRepairPolicy::Stub {
        let first_year: BTreeMap<&str, i32> = kept.iter().fold(BTreeMap::new(), |mut acc, r| {
            let year = chrono::Datelike::year(&r.date);
            acc.entry(r.user_id.as_str())
                .and_modify(|y: &mut i32| *y = (*y).min(year))
                .or_insert(year);
            acc
        });
        for (user_id, stars) in &missing_users {
            let stub = UserRecord {
                user_id: user_id.clone(),
                yelping_since: first_year[user_id.as_str()],
                average_stars: mean_stars(stars),
                elite_years: Vec::new(),
                fan_count: 0,
                friend_count: 0,
                review_count: stars.len() as u64,
                vote_counts: BTreeMap::new(),
                compliment_counts: BTreeMap::new(),
            };
            users.insert(user_id.clone(), stub);
        }
        for (business_id, stars) in &missing_businesses {
            let stub = BusinessRecord {
                business_id: business_id.clone(),
                name: String::new(),
                stars: mean_stars(stars),
                review_count: stars.len() as u64,
            };
            businesses.insert(business_id.clone(), stub);
        }
        report.stubbed_users = missing_users.len();
        report.stubbed_businesses = missing_businesses.len();
    }

    Ok(Corpus::new(
        users.into_values().collect(),
        kept,
        businesses.into_values().collect(),
    )?)
}

fn mean_stars(stars: &[u8]) -> f64 {
    stars.iter().map(|&s| f64::from(s)).sum::<f64>() / stars.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn user_line(id: &str) -> String {
        format!(
            r#"{{"user_id":"{id}","yelping_since":"2010-03","average_stars":3.5,"elite":[2012,2013],"fans":4,"friends":["a","b"],"review_count":2,"votes":{{"funny":1,"useful":2,"cool":3}},"compliments":{{"hot":5}}}}"#
        )
    }

    fn review_line(id: &str, user: &str, business: &str, stars: i64, date: &str) -> String {
        format!(
            r#"{{"review_id":"{id}","user_id":"{user}","business_id":"{business}","stars":{stars},"date":"{date}","text":"Good food!"}}"#
        )
    }

    fn business_line(id: &str) -> String {
        format!(r#"{{"business_id":"{id}","name":"Place {id}","stars":4.0,"review_count":1}}"#)
    }

    fn join(lines: &[String]) -> String {
        lines.join("\n") + "\n"
    }

    #[test]
    fn three_linked_records_per_file() {
        let users = join(&[user_line("u1"), user_line("u2"), user_line("u3")]);
        let businesses = join(&[business_line("b1"), business_line("b2"), business_line("b3")]);
        let reviews = join(&[
            review_line("r1", "u1", "b1", 5, "2012-01-01"),
            review_line("r2", "u2", "b2", 4, "2013-01-01"),
            review_line("r3", "u3", "b3", 1, "2014-01-01"),
        ]);
        let (corpus, report) =
            parse_corpus_str(&users, &reviews, &businesses, &IngestOptions::default()).unwrap();
        assert_eq!(corpus.user_count(), 3);
        assert_eq!(corpus.review_count(), 3);
        assert_eq!(corpus.business_count(), 3);
        assert!(report.errors.is_empty());
        assert_eq!(report.dropped_dangling_reviews, 0);
        let u1 = corpus.user("u1").unwrap();
        assert_eq!(u1.elite_count(), 2);
        assert_eq!(u1.friend_count, 2);
        assert_eq!(u1.total_votes(), 6);
        assert_eq!(u1.yelping_since, 2010);
    }

    #[test]
    fn dangling_review_dropped_by_default() {
        let users = join(&[user_line("u1")]);
        let businesses = join(&[business_line("b1")]);
        let reviews = join(&[
            review_line("r1", "u1", "b1", 5, "2012-01-01"),
            review_line("r2", "u1", "nowhere", 4, "2013-01-01"),
        ]);
        let options = IngestOptions {
            max_error_rate: 1.0,
            ..Default::default()
        };
        let (corpus, report) = parse_corpus_str(&users, &reviews, &businesses, &options).unwrap();
        assert_eq!(corpus.review_count(), 1);
        assert!(corpus.review("r2").is_none());
        assert_eq!(report.dropped_dangling_reviews, 1);
    }

    #[test]
    fn dangling_review_stubbed_on_request() {
        let users = join(&[user_line("u1")]);
        let businesses = join(&[business_line("b1")]);
        let reviews = join(&[
            review_line("r1", "u1", "b1", 5, "2012-01-01"),
            review_line("r2", "ghost", "nowhere", 2, "2013-01-01"),
        ]);
        let options = IngestOptions {
            policy: LinkRepairPolicy::Stub,
            ..Default::default()
        };
        let (corpus, report) = parse_corpus_str(&users, &reviews, &businesses, &options).unwrap();
        assert_eq!(corpus.review_count(), 2);
        assert_eq!(report.stubbed_users, 1);
        assert_eq!(report.stubbed_businesses, 1);
        let ghost = corpus.user("ghost").unwrap();
        assert_eq!(ghost.review_count, 1);
        assert_eq!(ghost.average_stars, 2.0);
        assert_eq!(ghost.yelping_since, 2013);
    }

    #[test]
    fn out_of_range_stars_rejected_per_line() {
        let users = join(&[user_line("u1")]);
        let businesses = join(&[business_line("b1")]);
        let reviews = join(&[
            review_line("r1", "u1", "b1", 5, "2012-01-01"),
            review_line("r2", "u1", "b1", 7, "2012-01-02"),
        ]);
        let options = IngestOptions {
            max_error_rate: 1.0,
            ..Default::default()
        };
        let (corpus, report) = parse_corpus_str(&users, &reviews, &businesses, &options).unwrap();
        assert_eq!(corpus.review_count(), 1);
        assert_eq!(report.errors.len(), 1);
        assert_eq!(report.errors[0].kind, RecordKind::Review);
        assert_eq!(report.errors[0].line, 2);
        assert!(report.errors[0].message.contains("stars"));
    }

    #[test]
    fn error_rate_above_limit_aborts() {
        let users = join(&[user_line("u1")]);
        let businesses = join(&[business_line("b1")]);
        let reviews = join(&[
            review_line("r1", "u1", "b1", 5, "2012-01-01"),
            "{not json".to_string(),
        ]);
        let err =
            parse_corpus_str(&users, &reviews, &businesses, &IngestOptions::default()).unwrap_err();
        assert!(matches!(
            err,
            IngestError::TooManyErrors {
                kind: RecordKind::Review,
                errors: 1,
                lines: 2,
                ..
            }
        ));
    }

    #[test]
    fn reviews_outside_window_are_excluded() {
        let users = join(&[user_line("u1")]);
        let businesses = join(&[business_line("b1")]);
        let reviews = join(&[
            review_line("r1", "u1", "b1", 5, "2003-12-31"),
            review_line("r2", "u1", "b1", 5, "2004-01-01"),
            review_line("r3", "u1", "b1", 5, "2017-01-01 10:00:00"),
        ]);
        let (corpus, report) =
            parse_corpus_str(&users, &reviews, &businesses, &IngestOptions::default()).unwrap();
        assert_eq!(corpus.review_count(), 1);
        assert_eq!(report.out_of_window_reviews, 2);
        assert!(report.errors.is_empty());
    }

    #[test]
    fn duplicate_ids_are_line_errors() {
        let users = join(&[user_line("u1"), user_line("u1")]);
        let businesses = join(&[business_line("b1")]);
        let reviews = join(&[review_line("r1", "u1", "b1", 5, "2012-01-01")]);
        let options = IngestOptions {
            max_error_rate: 1.0,
            ..Default::default()
        };
        let (corpus, report) = parse_corpus_str(&users, &reviews, &businesses, &options).unwrap();
        assert_eq!(corpus.user_count(), 1);
        assert_eq!(report.user_lines, 2);
        assert_eq!(corpus.user_count() + report.rejected(RecordKind::User), 2);
    }

    #[test]
    fn empty_review_file_is_an_error() {
        let users = join(&[user_line("u1")]);
        let businesses = join(&[business_line("b1")]);
        let err = parse_corpus_str(&users, "\n", &businesses, &IngestOptions::default()).unwrap_err();
        assert!(matches!(
            err,
            IngestError::EmptyInput {
                kind: RecordKind::Review,
                ..
            }
        ));
    }

    #[test]
    fn missing_file_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nope.json");
        let err = parse_corpus(&missing, &missing, &missing, &IngestOptions::default()).unwrap_err();
        assert!(matches!(err, IngestError::Io { .. }));
    }
}
