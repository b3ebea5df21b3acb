use std::collections::{BTreeMap, HashMap};

use chrono::Datelike;
use thiserror::Error;

use super::{BusinessRecord, ReviewRecord, UserRecord};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CorpusError {
    #[error("duplicate {kind} id `{id}`")]
    DuplicateId { kind: &'static str, id: String },
    #[error("review `{review}` references unknown {kind} `{id}`")]
    Dangling {
        review: String,
        kind: &'static str,
        id: String,
    },
    #[error("invalid {kind} `{id}`: {message}")]
    Invalid {
        kind: &'static str,
        id: String,
        message: String,
    },
}

/// Immutable, fully linked set of users, reviews and businesses.
///
/// Records are stored in ascending key order; the per-user and per-business
/// indexes hold positions into the review list, also ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    users: BTreeMap<String, UserRecord>,
    businesses: BTreeMap<String, BusinessRecord>,
    reviews: Vec<ReviewRecord>,
    review_pos: HashMap<String, usize>,
    by_user: HashMap<String, Vec<usize>>,
    by_business: HashMap<String, Vec<usize>>,
}

impl Corpus {
    pub fn new(
        users: Vec<UserRecord>,
        mut reviews: Vec<ReviewRecord>,
        businesses: Vec<BusinessRecord>,
    ) -> Result<Self, CorpusError> {
        let mut user_map = BTreeMap::new();
        for user in users {
            user.validate().map_err(|message| CorpusError::Invalid {
                kind: "user",
                id: user.user_id.clone(),
                message,
            })?;
            let id = user.user_id.clone();
            if user_map.insert(id.clone(), user).is_some() {
                return Err(CorpusError::DuplicateId { kind: "user", id });
            }
        }
        let mut business_map = BTreeMap::new();
        for business in businesses {
            business.validate().map_err(|message| CorpusError::Invalid {
                kind: "business",
                id: business.business_id.clone(),
                message,
            })?;
            let id = business.business_id.clone();
            if business_map.insert(id.clone(), business).is_some() {
                return Err(CorpusError::DuplicateId {
                    kind: "business",
                    id,
                });
            }
        }

        reviews.sort_by(|a, b| a.review_id.cmp(&b.review_id));
        let mut review_pos = HashMap::with_capacity(reviews.len());
        let mut by_user: HashMap<String, Vec<usize>> = HashMap::new();
        let mut by_business: HashMap<String, Vec<usize>> = HashMap::new();
        for (pos, review) in reviews.iter().enumerate() {
            review.validate().map_err(|message| CorpusError::Invalid {
                kind: "review",
                id: review.review_id.clone(),
                message,
            })?;
            if review_pos.insert(review.review_id.clone(), pos).is_some() {
                return Err(CorpusError::DuplicateId {
                    kind: "review",
                    id: review.review_id.clone(),
                });
            }
            if !user_map.contains_key(&review.user_id) {
                return Err(CorpusError::Dangling {
                    review: review.review_id.clone(),
                    kind: "user",
                    id: review.user_id.clone(),
                });
            }
            if !business_map.contains_key(&review.business_id) {
                return Err(CorpusError::Dangling {
                    review: review.review_id.clone(),
                    kind: "business",
                    id: review.business_id.clone(),
                });
            }
            by_user.entry(review.user_id.clone()).or_default().push(pos);
            by_business
                .entry(review.business_id.clone())
                .or_default()
                .push(pos);
        }

        Ok(Self {
            users: user_map,
            businesses: business_map,
            reviews,
            review_pos,
            by_user,
            by_business,
        })
    }

    pub fn empty() -> Self {
        Self::new(Vec::new(), Vec::new(), Vec::new()).expect("empty corpus is valid")
    }

    pub fn user_count(&self) -> usize {
        self.users.len()
    }

    pub fn review_count(&self) -> usize {
        self.reviews.len()
    }

    pub fn business_count(&self) -> usize {
        self.businesses.len()
    }

    /// Users in ascending `user_id` order.
    pub fn users(&self) -> impl ExactSizeIterator<Item = &UserRecord> + '_ {
        self.users.values()
    }

    /// Businesses in ascending `business_id` order.
    pub fn businesses(&self) -> impl ExactSizeIterator<Item = &BusinessRecord> + '_ {
        self.businesses.values()
    }

    /// Reviews in ascending `review_id` order.
    pub fn reviews(&self) -> &[ReviewRecord] {
        &self.reviews
    }

    pub fn user(&self, id: &str) -> Option<&UserRecord> {
        self.users.get(id)
    }

    pub fn business(&self, id: &str) -> Option<&BusinessRecord> {
        self.businesses.get(id)
    }

    pub fn review(&self, id: &str) -> Option<&ReviewRecord> {
        self.review_pos.get(id).map(|&pos| &self.reviews[pos])
    }

    pub fn reviews_by_user(&self, user_id: &str) -> impl Iterator<Item = &ReviewRecord> + '_ {
        self.by_user
            .get(user_id)
            .map(Vec::as_slice)
            .unwrap_or(&[])
            .iter()
            .map(|&pos| &self.reviews[pos])
    }

    pub fn reviews_of_business(
        &self,
        business_id: &str,
    ) -> impl Iterator<Item = &ReviewRecord> + '_ {
        self.by_business
            .get(business_id)
            .map(Vec::as_slice)
            .unwrap_or(&[])
            .iter()
            .map(|&pos| &self.reviews[pos])
    }

    pub fn user_review_count(&self, user_id: &str) -> usize {
        self.by_user.get(user_id).map_or(0, Vec::len)
    }

    pub fn business_review_count(&self, business_id: &str) -> usize {
        self.by_business.get(business_id).map_or(0, Vec::len)
    }

    pub fn max_review_year(&self) -> Option<i32> {
        self.reviews.iter().map(|r| r.date.year()).max()
    }
}
