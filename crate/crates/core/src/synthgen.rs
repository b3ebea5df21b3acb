//! Deterministic synthetic corpora with planted ground truth.
//!
//! A scenario has ordinary users, a small group of popular users (some of
//! them spammers) whose profiles sit far from everybody else, and businesses
//! of which some are attacked by a short burst of 5-star reviews.
//!
//! Organic reviews of a business fall on distinct days, so its organic daily
//! counts are all 1 and its fences sit at 1; campaign days carry many reviews
//! and clear the fence by a wide margin. Spammers rate at least three
//! attacked businesses on campaign days. Honest popular users rate at most
//! two attacked businesses, which keeps them under a threshold of three.

use std::collections::{BTreeMap, BTreeSet};
use std::io;
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate};
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::features::user_features;
use crate::ingest::{BusinessRecord, Corpus, CorpusError, DateWindow, ReviewRecord, UserRecord};
use crate::io_util::write_atomic;
use crate::rsd::{fences_from_values, DEFAULT_MIN_ACTIVE_DAYS};

pub const USER_FILE: &str = "users.jsonl";
pub const REVIEW_FILE: &str = "reviews.jsonl";
pub const BUSINESS_FILE: &str = "businesses.jsonl";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";

/// Floor on the organic positive days of an attacked business.
const MIN_ORGANIC_POSITIVE_DAYS: usize = 8;
/// Background population below which the popular cluster's separation is
/// left to sampling luck.
const MIN_ORDINARY_USERS: usize = 30;
/// Attacked businesses each honest popular user may rate.
const HONEST_ATTACKED_CAP: usize = 2;
/// Attacked businesses each spammer rates at minimum.
const SPAMMER_MIN_TARGETS: usize = 3;
/// Minimum per-dimension separation of the popular and ordinary centroids,
/// in pooled standard deviations.
const MIN_SEPARATION_SD: f64 = 5.0;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("infeasible scenario: {0}")]
    Infeasible(String),
    #[error("generator invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("ground truth: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSpec {
    pub reviews_per_day: u32,
    pub duration_days: u32,
    pub star_value: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub seed: u64,
    pub n_ordinary_users: usize,
    pub n_popular_users: usize,
    pub n_spammer_popular_users: usize,
    pub n_businesses: usize,
    pub n_attacked_businesses: usize,
    /// Inclusive range of organic reviews per business.
    pub organic_reviews: (usize, usize),
    pub campaign: CampaignSpec,
    pub window: DateWindow,
    /// Businesses each popular user reviews.
    pub reviews_per_popular_user: usize,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            seed: 20_160_101,
            n_ordinary_users: 990,
            n_popular_users: 10,
            n_spammer_popular_users: 5,
            n_businesses: 100,
            n_attacked_businesses: 40,
            organic_reviews: (30, 50),
            campaign: CampaignSpec {
                reviews_per_day: 12,
                duration_days: 2,
                star_value: 5,
            },
            window: DateWindow {
                start: NaiveDate::from_ymd_opt(2010, 1, 1).unwrap(),
                end: NaiveDate::from_ymd_opt(2016, 12, 31).unwrap(),
            },
            reviews_per_popular_user: 30,
        }
    }
}

impl ScenarioSpec {
    /// Organic positive days an attacked business needs so that its campaign
    /// days stay out of the middle of the upper half of the daily counts,
    /// which keeps the upper hinge, and so the fence, at one review a day.
    fn organic_positive_days(&self) -> usize {
        MIN_ORGANIC_POSITIVE_DAYS.max(3 * self.campaign.duration_days as usize + 2)
    }

    fn days_per_business(&self) -> i64 {
        let extra = i64::from(self.campaign.duration_days) + 120;
        (3 * (self.organic_reviews.1 + self.reviews_per_popular_user.min(self.n_popular_users * 2)) as i64
            + extra)
            .max(365)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let fail = |m: String| Err(SynthError::Infeasible(m));
        if self.n_spammer_popular_users > self.n_popular_users {
            return fail(format!(
                "{} spammers but only {} popular users",
                self.n_spammer_popular_users, self.n_popular_users
            ));
        }
        if self.n_attacked_businesses > self.n_businesses {
            return fail(format!(
                "{} attacked of {} businesses",
                self.n_attacked_businesses, self.n_businesses
            ));
        }
        if self.campaign.duration_days < 1 {
            return fail("campaign shorter than one day".into());
        }
        if self.campaign.reviews_per_day < 3 {
            return fail("campaign needs at least 3 reviews per day to clear the organic fence".into());
        }
        if !(4..=5).contains(&self.campaign.star_value) {
            return fail(format!("campaign star value {} is not positive", self.campaign.star_value));
        }
        let (lo, hi) = self.organic_reviews;
        if lo < 2 * self.organic_positive_days() || lo > hi {
            return fail(format!(
                "organic review range {lo}..={hi} must start at {} or more",
                2 * self.organic_positive_days()
            ));
        }
        if self.n_ordinary_users < MIN_ORDINARY_USERS {
            return fail(format!(
                "{} ordinary users; at least {MIN_ORDINARY_USERS} are needed",
                self.n_ordinary_users
            ));
        }
        if self.n_spammer_popular_users > 0 && self.n_attacked_businesses < SPAMMER_MIN_TARGETS {
            return fail(format!("spammers need at least {SPAMMER_MIN_TARGETS} attacked businesses"));
        }
        if self.n_attacked_businesses > 0 {
            let honest = self.n_popular_users - self.n_spammer_popular_users;
            if self.n_spammer_popular_users == 0
                && honest * HONEST_ATTACKED_CAP.min(self.n_attacked_businesses) < self.n_attacked_businesses
            {
                return fail("not enough popular users to review every attacked business".into());
            }
            if self.reviews_per_popular_user < SPAMMER_MIN_TARGETS {
                return fail("popular users must review at least 3 businesses".into());
            }
        }
        let span = (self.window.end - self.window.start).num_days();
        if span < self.days_per_business() {
            return fail(format!(
                "window of {span} days is shorter than the {} days each business needs",
                self.days_per_business()
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub popular_user_ids: BTreeSet<String>,
    pub spammer_user_ids: BTreeSet<String>,
    pub attacked_business_ids: BTreeSet<String>,
    pub planted_spam_review_ids: BTreeSet<String>,
    pub campaign_days: BTreeMap<String, Vec<NaiveDate>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub users: Vec<UserRecord>,
    pub reviews: Vec<ReviewRecord>,
    pub businesses: Vec<BusinessRecord>,
    pub truth: GroundTruth,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthPaths {
    pub users: PathBuf,
    pub reviews: PathBuf,
    pub businesses: PathBuf,
    pub ground_truth: PathBuf,
}

impl SynthPaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            users: dir.join(USER_FILE),
            reviews: dir.join(REVIEW_FILE),
            businesses: dir.join(BUSINESS_FILE),
            ground_truth: dir.join(GROUND_TRUTH_FILE),
        }
    }
}

impl SyntheticCorpus {
    pub fn corpus(&self) -> Result<Corpus, CorpusError> {
        Corpus::new(self.users.clone(), self.reviews.clone(), self.businesses.clone())
    }

    pub fn users_jsonl(&self) -> String {
        self.users.iter().map(|u| user_json(u) + "\n").collect()
    }

    pub fn reviews_jsonl(&self) -> String {
        self.reviews.iter().map(|r| review_json(r) + "\n").collect()
    }

    pub fn businesses_jsonl(&self) -> String {
        self.businesses.iter().map(|b| business_json(b) + "\n").collect()
    }

    pub fn write_to(&self, dir: &Path) -> Result<SynthPaths, SynthError> {
        let paths = SynthPaths::in_dir(dir);
        write_atomic(&paths.users, self.users_jsonl().as_bytes())?;
        write_atomic(&paths.reviews, self.reviews_jsonl().as_bytes())?;
        write_atomic(&paths.businesses, self.businesses_jsonl().as_bytes())?;
        let mut truth = serde_json::to_vec_pretty(&self.truth)?;
        truth.push(b'\n');
        write_atomic(&paths.ground_truth, &truth)?;
        Ok(paths)
    }
}

pub fn read_ground_truth(path: &Path) -> Result<GroundTruth, SynthError> {
    Ok(serde_json::from_slice(&std::fs::read(path)?)?)
}

fn user_json(u: &UserRecord) -> String {
    let mut obj = json!({
        "user_id": u.user_id,
        "yelping_since": format!("{}-01-01", u.yelping_since),
        "average_stars": u.average_stars,
        "elite": u.elite_years,
        "fans": u.fan_count,
        "friend_count": u.friend_count,
        "review_count": u.review_count,
    });
    let map = obj.as_object_mut().expect("object literal");
    for (k, v) in &u.vote_counts {
        map.insert(k.clone(), json!(v));
    }
    for (k, v) in &u.compliment_counts {
        map.insert(format!("compliment_{k}"), json!(v));
    }
    obj.to_string()
}

fn review_json(r: &ReviewRecord) -> String {
    json!({
        "review_id": r.review_id,
        "user_id": r.user_id,
        "business_id": r.business_id,
        "stars": r.stars,
        "date": r.date.to_string(),
        "text": r.text,
    })
    .to_string()
}

fn business_json(b: &BusinessRecord) -> String {
    json!({
        "business_id": b.business_id,
        "name": b.name,
        "stars": b.stars,
        "review_count": b.review_count,
    })
    .to_string()
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

const USER_STREAM: u64 = 0;
const PLAN_STREAM: u64 = 1;
const BUSINESS_STREAM_BASE: u64 = 2;

fn counts<R: Rng>(rng: &mut R, labels: &[&str], lo: u64, hi: u64) -> BTreeMap<String, u64> {
    labels
        .iter()
        .map(|l| (l.to_string(), rng.gen_range(lo..=hi)))
        .collect()
}

fn ordinary_user<R: Rng>(rng: &mut R, id: String) -> UserRecord {
    let since = rng.gen_range(2012..=2015);
    UserRecord {
        user_id: id,
        yelping_since: since,
        average_stars: (rng.gen_range(2.6..=3.4f64) * 100.0).round() / 100.0,
        elite_years: if rng.gen_bool(0.5) { vec![rng.gen_range(since..=2016)] } else { vec![] },
        fan_count: rng.gen_range(0..=10),
        friend_count: rng.gen_range(0..=300),
        review_count: rng.gen_range(1..=80),
        vote_counts: counts(rng, &["cool", "funny", "useful"], 0, 50),
        compliment_counts: counts(rng, &["cool", "hot", "writer"], 0, 20),
    }
}

fn popular_user<R: Rng>(rng: &mut R, id: String) -> UserRecord {
    UserRecord {
        user_id: id,
        yelping_since: 2004,
        average_stars: (rng.gen_range(4.45..=4.55f64) * 100.0).round() / 100.0,
        elite_years: (2006..=2014).collect(),
        fan_count: rng.gen_range(550..=600),
        friend_count: rng.gen_range(28_000..=30_000),
        review_count: rng.gen_range(1_900..=2_100),
        vote_counts: counts(rng, &["cool", "funny", "useful"], 20_000, 22_000),
        compliment_counts: counts(rng, &["cool", "hot", "writer"], 2_500, 2_700),
    }
}

fn mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    (mean, ss)
}

fn check_separation(ordinary: &[&UserRecord], popular: &[&UserRecord]) -> Result<(), SynthError> {
    if ordinary.len() < 2 || popular.is_empty() {
        return Ok(());
    }
    let o: Vec<[f64; 8]> = ordinary.iter().map(|u| user_features(u).0).collect();
    let p: Vec<[f64; 8]> = popular.iter().map(|u| user_features(u).0).collect();
    for d in 0..8 {
        let (mo, sso) = mean_var(&o.iter().map(|v| v[d]).collect::<Vec<_>>());
        let (mp, ssp) = mean_var(&p.iter().map(|v| v[d]).collect::<Vec<_>>());
        let dof = (o.len() + p.len()).saturating_sub(2).max(1) as f64;
        let pooled = ((sso + ssp) / dof).sqrt();
        let gap = (mp - mo).abs();
        if gap <= 0.0 || gap < MIN_SEPARATION_SD * pooled {
            return Err(SynthError::Invariant(format!(
                "user feature {d}: centroid gap {gap} is under {MIN_SEPARATION_SD} pooled sd ({pooled})"
            )));
        }
    }
    Ok(())
}

const ORGANIC_WORDS: &[&str] = &[
    "the", "food", "was", "and", "service", "place", "really", "good", "nice", "staff",
    "friendly", "menu", "ordered", "came", "back", "table", "price", "a", "to", "it",
    "with", "for", "great", "okay", "slow", "fresh", "tasty", "would", "recommend", "dinner",
    "lunch", "wait", "busy", "parking", "coffee", "salad", "bit", "small", "portions", "again",
];
const FIRST_PERSON: &[&str] = &["I", "we", "my", "our", "me", "us"];
const SPAM_WORDS: &[&str] = &[
    "BEST", "PLACE", "EVER", "AMAZING", "LOVE", "IT", "MUST", "TRY", "WOW", "PERFECT", "FIVE",
    "STARS",
];

fn organic_text<R: Rng>(rng: &mut R, lo: usize, hi: usize) -> String {
    let n = rng.gen_range(lo..=hi);
    let mut words: Vec<&str> = (0..n)
        .map(|_| {
            if rng.gen_bool(0.12) {
                FIRST_PERSON.choose(rng).copied().unwrap()
            } else {
                ORGANIC_WORDS.choose(rng).copied().unwrap()
            }
        })
        .collect();
    if rng.gen_bool(0.05) {
        let at = rng.gen_range(0..words.len());
        words[at] = "OK";
    }
    let mut text = words.join(" ");
    text.push(if rng.gen_bool(0.2) { '!' } else { '.' });
    text
}

fn spam_text<R: Rng>(rng: &mut R) -> String {
    let n = rng.gen_range(3..=6);
    let words: Vec<&str> = (0..n).map(|_| SPAM_WORDS.choose(rng).copied().unwrap()).collect();
    format!("{}!!!", words.join(" "))
}

/// Weight of the mode, of each neighbour and of each farther star.
type StarSpread = (f64, f64, f64);
const ORGANIC_SPREAD: StarSpread = (0.6, 0.15, 0.05);
/// Attacked businesses keep a narrow organic rating profile.
const ATTACKED_SPREAD: StarSpread = (0.9, 0.05, 0.0);

fn organic_star<R: Rng>(rng: &mut R, mode: u8, (at, near, far): StarSpread) -> u8 {
    let weights: Vec<f64> = (1..=5u8)
        .map(|s| match s.abs_diff(mode) {
            0 => at,
            1 => near,
            _ => far,
        })
        .collect();
    let total: f64 = weights.iter().sum();
    let mut x = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if x < *w {
            return i as u8 + 1;
        }
        x -= w;
    }
    5
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PopularRole {
    Honest,
    Spam,
}

struct Plan {
    attacked: BTreeSet<usize>,
    modes: Vec<u8>,
    /// Per business: (popular user position, role).
    popular_reviews: Vec<Vec<(usize, PopularRole)>>,
}

fn plan(spec: &ScenarioSpec, popular: &[usize], spammers: usize) -> Plan {
    let mut rng = stream(spec.seed, PLAN_STREAM);
    let n_b = spec.n_businesses;
    let mut attacked_list: Vec<usize> = index::sample(&mut rng, n_b, spec.n_attacked_businesses).into_vec();
    attacked_list.sort_unstable();
    let attacked: BTreeSet<usize> = attacked_list.iter().copied().collect();
    let unattacked: Vec<usize> = (0..n_b).filter(|b| !attacked.contains(b)).collect();
    let modes = (0..n_b)
        .map(|b| if attacked.contains(&b) { spec.campaign.star_value - 1 } else { rng.gen_range(2..=4) })
        .collect();

    let mut popular_reviews = vec![Vec::new(); n_b];
    let a = attacked_list.len();
    let per_spammer = if spammers == 0 { 0 } else { SPAMMER_MIN_TARGETS.max(a.div_ceil(spammers)).min(a) };
    for (rank, &user) in popular.iter().enumerate() {
        let (targets, role): (Vec<usize>, PopularRole) = if rank < spammers {
            let t = (0..per_spammer).map(|j| attacked_list[(rank * per_spammer + j) % a]).collect();
            (t, PopularRole::Spam)
        } else if a > 0 {
            let h = rank - spammers;
            let mut t: Vec<usize> = (0..HONEST_ATTACKED_CAP.min(a))
                .map(|j| attacked_list[(h * HONEST_ATTACKED_CAP + j) % a])
                .collect();
            t.dedup();
            (t, PopularRole::Honest)
        } else {
            (Vec::new(), PopularRole::Honest)
        };
        for &b in &targets {
            popular_reviews[b].push((user, role));
        }
        let rest = spec.reviews_per_popular_user.saturating_sub(targets.len()).min(unattacked.len());
        for i in index::sample(&mut rng, unattacked.len(), rest) {
            popular_reviews[unattacked[i]].push((user, PopularRole::Honest));
        }
    }
    Plan {
        attacked,
        modes,
        popular_reviews,
    }
}

struct DraftReview {
    user: usize,
    stars: u8,
    date: NaiveDate,
    text: String,
    planted: bool,
}

struct BusinessDraft {
    reviews: Vec<DraftReview>,
    campaign_days: Vec<NaiveDate>,
}

fn generate_business(
    spec: &ScenarioSpec,
    b: usize,
    plan: &Plan,
    ordinary: &[usize],
) -> Result<BusinessDraft, SynthError> {
    let mut rng = stream(spec.seed, BUSINESS_STREAM_BASE + b as u64);
    let attacked = plan.attacked.contains(&b);
    let mode = plan.modes[b];
    let span = spec.days_per_business();
    let latest_open = (spec.window.end - spec.window.start).num_days() - span;
    let open = spec.window.start + Duration::days(rng.gen_range(0..=latest_open));

    let n_organic = rng.gen_range(spec.organic_reviews.0..=spec.organic_reviews.1);
    let spread = if attacked { ATTACKED_SPREAD } else { ORGANIC_SPREAD };
    let mut stars: Vec<u8> = (0..n_organic).map(|_| organic_star(&mut rng, mode, spread)).collect();
    if attacked {
        // top up with 4-star ratings so the fence has enough positive days
        let needed = spec.organic_positive_days();
        let mut short = needed.saturating_sub(stars.iter().filter(|&&s| s >= 4).count());
        for s in stars.iter_mut().filter(|s| **s < 4) {
            if short == 0 {
                break;
            }
            *s = 4;
            short -= 1;
        }
    }

    let campaign_days: Vec<NaiveDate> = if attacked {
        let start = open + Duration::days(rng.gen_range(1..=60));
        (0..i64::from(spec.campaign.duration_days)).map(|d| start + Duration::days(d)).collect()
    } else {
        Vec::new()
    };

    let populars = &plan.popular_reviews[b];
    let single_day = n_organic + populars.iter().filter(|(_, r)| *r == PopularRole::Honest).count();
    let pool: Vec<NaiveDate> = (0..span)
        .map(|d| open + Duration::days(d))
        .filter(|d| !campaign_days.contains(d))
        .collect();
    if pool.len() < single_day {
        return Err(SynthError::Infeasible(format!("business {b}: {single_day} reviews for {} days", pool.len())));
    }
    let mut days: Vec<NaiveDate> = index::sample(&mut rng, pool.len(), single_day).into_iter().map(|i| pool[i]).collect();
    days.shuffle(&mut rng);
    let mut days = days.into_iter();

    let mut reviews = Vec::new();
    for &s in &stars {
        reviews.push(DraftReview {
            user: ordinary[rng.gen_range(0..ordinary.len())],
            stars: s,
            date: days.next().expect("one day per single-day review"),
            text: organic_text(&mut rng, 25, 60),
            planted: false,
        });
    }
    let mut spam_slot = 0;
    for &(user, role) in populars {
        match role {
            PopularRole::Honest => reviews.push(DraftReview {
                user,
                stars: mode,
                date: days.next().expect("one day per single-day review"),
                text: organic_text(&mut rng, 80, 150),
                planted: false,
            }),
            PopularRole::Spam => {
                reviews.push(DraftReview {
                    user,
                    stars: spec.campaign.star_value,
                    date: campaign_days[spam_slot % campaign_days.len()],
                    text: spam_text(&mut rng),
                    planted: true,
                });
                spam_slot += 1;
            }
        }
    }
    for &day in &campaign_days {
        for _ in 0..spec.campaign.reviews_per_day {
            reviews.push(DraftReview {
                user: ordinary[rng.gen_range(0..ordinary.len())],
                stars: spec.campaign.star_value,
                date: day,
                text: spam_text(&mut rng),
                planted: true,
            });
        }
    }
    check_fences(b, &reviews, &campaign_days)?;
    Ok(BusinessDraft {
        reviews,
        campaign_days,
    })
}

/// The detector must see exactly the campaign days as spikes: every campaign
/// day above the positive fence, nothing else above either fence.
fn check_fences(b: usize, reviews: &[DraftReview], campaign_days: &[NaiveDate]) -> Result<(), SynthError> {
    let mut positive: BTreeMap<NaiveDate, u32> = BTreeMap::new();
    let mut negative: BTreeMap<NaiveDate, u32> = BTreeMap::new();
    for r in reviews {
        if r.stars >= 4 {
            *positive.entry(r.date).or_default() += 1;
        } else if r.stars <= 2 {
            *negative.entry(r.date).or_default() += 1;
        }
    }
    let organic: Vec<f64> = positive
        .iter()
        .filter(|(d, _)| !campaign_days.contains(d))
        .map(|(_, &c)| f64::from(c))
        .collect();
    for (series, is_positive) in [(&positive, true), (&negative, false)] {
        if series.len() < DEFAULT_MIN_ACTIVE_DAYS {
            if is_positive && !campaign_days.is_empty() {
                return Err(SynthError::Invariant(format!("business {b}: too few positive days")));
            }
            continue;
        }
        let values: Vec<f64> = series.values().map(|&c| f64::from(c)).collect();
        let fence = fences_from_values(&values).expect("nonempty");
        for (day, &count) in series {
            let planted = is_positive && campaign_days.contains(day);
            if planted != (f64::from(count) > fence.uof) {
                return Err(SynthError::Invariant(format!(
                    "business {b}: day {day} count {count} vs fence {}",
                    fence.uof
                )));
            }
        }
    }
    if !campaign_days.is_empty() {
        let organic_fence = fences_from_values(&organic).expect("organic positives");
        for day in campaign_days {
            if f64::from(positive[day]) <= organic_fence.uof {
                return Err(SynthError::Invariant(format!("business {b}: campaign day {day} under organic fence")));
            }
        }
    }
    Ok(())
}

pub fn generate(spec: &ScenarioSpec) -> Result<SyntheticCorpus, SynthError> {
    spec.validate()?;
    let n_users = spec.n_ordinary_users + spec.n_popular_users;
    let mut rng = stream(spec.seed, USER_STREAM);
    let popular: Vec<usize> = index::sample(&mut rng, n_users, spec.n_popular_users).into_vec();
    let popular_set: BTreeSet<usize> = popular.iter().copied().collect();
    let spammers: BTreeSet<usize> = popular[..spec.n_spammer_popular_users].iter().copied().collect();
    let user_id = |i: usize| format!("u{i:05}");
    let users: Vec<UserRecord> = (0..n_users)
        .map(|i| {
            if popular_set.contains(&i) {
                popular_user(&mut rng, user_id(i))
            } else {
                ordinary_user(&mut rng, user_id(i))
            }
        })
        .collect();
    let ordinary: Vec<usize> = (0..n_users).filter(|i| !popular_set.contains(i)).collect();
    check_separation(
        &ordinary.iter().map(|&i| &users[i]).collect::<Vec<_>>(),
        &popular.iter().map(|&i| &users[i]).collect::<Vec<_>>(),
    )?;

    let plan = plan(spec, &popular, spec.n_spammer_popular_users);
    let drafts: Vec<BusinessDraft> = (0..spec.n_businesses)
        .map(|b| generate_business(spec, b, &plan, &ordinary))
        .collect::<Result<_, _>>()?;

    let business_id = |b: usize| format!("b{b:04}");
    let mut truth = GroundTruth {
        popular_user_ids: popular.iter().map(|&i| user_id(i)).collect(),
        spammer_user_ids: spammers.iter().map(|&i| user_id(i)).collect(),
        attacked_business_ids: plan.attacked.iter().map(|&b| business_id(b)).collect(),
        ..GroundTruth::default()
    };
    let mut reviews = Vec::new();
    let mut businesses = Vec::new();
    for (b, draft) in drafts.into_iter().enumerate() {
        let bid = business_id(b);
        let n = draft.reviews.len();
        let mean = draft.reviews.iter().map(|r| f64::from(r.stars)).sum::<f64>() / n as f64;
        businesses.push(BusinessRecord {
            business_id: bid.clone(),
            name: format!("Business {b}"),
            stars: (mean * 2.0).round() / 2.0,
            review_count: n as u64,
        });
        if !draft.campaign_days.is_empty() {
            truth.campaign_days.insert(bid.clone(), draft.campaign_days);
        }
        for r in draft.reviews {
            let review_id = format!("r{:06}", reviews.len());
            if r.planted {
                truth.planted_spam_review_ids.insert(review_id.clone());
            }
            reviews.push(ReviewRecord {
                review_id,
                user_id: user_id(r.user),
                business_id: bid.clone(),
                stars: r.stars,
                date: r.date,
                text: r.text,
            });
        }
    }
    Ok(SyntheticCorpus {
        users,
        reviews,
        businesses,
        truth,
    })
}
