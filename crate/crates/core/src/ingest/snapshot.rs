//! Versioned binary corpus snapshot.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic  "RQSNAP"           6 bytes
//! format version            u32
//! payload length            u64
//! payload                   users, businesses, reviews in key order
//! sha256(payload)           32 bytes
//! ```
//!
//! Strings are a `u32` byte length followed by UTF-8 bytes; dates are stored
//! as days since the common era.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{BusinessRecord, Corpus, ReviewRecord, UserRecord};

const MAGIC: &[u8; 6] = b"RQSNAP";
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("snapshot I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a corpus snapshot (bad magic)")]
    BadMagic,
    #[error("snapshot format version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("snapshot truncated")]
    Truncated,
    #[error("snapshot checksum mismatch")]
    Checksum,
    #[error("corrupt snapshot: {0}")]
    Corrupt(String),
}

pub fn snapshot(corpus: &Corpus, path: &Path) -> Result<(), SnapshotError> {
    crate::io_util::write_atomic(path, &encode(corpus))?;
    Ok(())
}

pub fn load_snapshot(path: &Path) -> Result<Corpus, SnapshotError> {
    decode(&std::fs::read(path)?)
}

pub fn encode(corpus: &Corpus) -> Vec<u8> {
    let mut payload = Writer::default();
    payload.u64(corpus.user_count() as u64);
    for user in corpus.users() {
        payload.str(&user.user_id);
        payload.i32(user.yelping_since);
        payload.f64(user.average_stars);
        payload.u32(user.elite_years.len() as u32);
        for &year in &user.elite_years {
            payload.i32(year);
        }
        payload.u64(user.fan_count);
        payload.u64(user.friend_count);
        payload.u64(user.review_count);
        payload.map(&user.vote_counts);
        payload.map(&user.compliment_counts);
    }
    payload.u64(corpus.business_count() as u64);
    for business in corpus.businesses() {
        payload.str(&business.business_id);
        payload.str(&business.name);
        payload.f64(business.stars);
        payload.u64(business.review_count);
    }
    payload.u64(corpus.review_count() as u64);
    for review in corpus.reviews() {
        payload.str(&review.review_id);
        payload.str(&review.user_id);
        payload.str(&review.business_id);
        payload.buf.push(review.stars);
        payload.i32(review.date.num_days_from_ce());
        payload.str(&review.text);
    }

    let payload = payload.buf;
    let mut out = Vec::with_capacity(payload.len() + 50);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&payload);
    out.extend_from_slice(&Sha256::digest(&payload));
    out
}

pub fn decode(bytes: &[u8]) -> Result<Corpus, SnapshotError> {
    let mut header = Reader { buf: bytes, pos: 0 };
    if header.take(MAGIC.len()).map_err(|_| SnapshotError::BadMagic)? != MAGIC {
        return Err(SnapshotError::BadMagic);
    }
    let version = header.u32()?;
    if version != SNAPSHOT_VERSION {
        return Err(SnapshotError::Version {
            found: version,
            expected: SNAPSHOT_VERSION,
        });
    }
    let len = usize::try_from(header.u64()?).map_err(|_| SnapshotError::Truncated)?;
    let payload = header.take(len)?;
    let digest = header.take(32)?;
    if header.pos != bytes.len() {
        return Err(SnapshotError::Corrupt("trailing bytes".into()));
    }
    if Sha256::digest(payload).as_slice() != digest {
        return Err(SnapshotError::Checksum);
    }

    let mut r = Reader {
        buf: payload,
        pos: 0,
    };
    let n_users = r.len()?;
    let mut users = Vec::with_capacity(n_users);
    for _ in 0..n_users {
        let user_id = r.str()?;
        let yelping_since = r.i32()?;
        let average_stars = r.f64()?;
        let n_elite = r.u32()? as usize;
        let mut elite_years = Vec::with_capacity(n_elite.min(64));
        for _ in 0..n_elite {
            elite_years.push(r.i32()?);
        }
        users.push(UserRecord {
            user_id,
            yelping_since,
            average_stars,
            elite_years,
            fan_count: r.u64()?,
            friend_count: r.u64()?,
            review_count: r.u64()?,
            vote_counts: r.map()?,
            compliment_counts: r.map()?,
        });
    }
    let n_businesses = r.len()?;
    let mut businesses = Vec::with_capacity(n_businesses);
    for _ in 0..n_businesses {
        businesses.push(BusinessRecord {
            business_id: r.str()?,
            name: r.str()?,
            stars: r.f64()?,
            review_count: r.u64()?,
        });
    }
    let n_reviews = r.len()?;
    let mut reviews = Vec::with_capacity(n_reviews);
    for _ in 0..n_reviews {
        let review_id = r.str()?;
        let user_id = r.str()?;
        let business_id = r.str()?;
        let stars = r.take(1)?[0];
        let days = r.i32()?;
        let date = NaiveDate::from_num_days_from_ce_opt(days)
            .ok_or_else(|| SnapshotError::Corrupt(format!("bad day number {days}")))?;
        reviews.push(ReviewRecord {
            review_id,
            user_id,
            business_id,
            stars,
            date,
            text: r.str()?,
        });
    }
    if r.pos != payload.len() {
        return Err(SnapshotError::Corrupt("payload has trailing bytes".into()));
    }
    Corpus::new(users, reviews, businesses).map_err(|e| SnapshotError::Corrupt(e.to_string()))
}

#[derive(Default)]
struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn i32(&mut self, v: i32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_bits().to_le_bytes());
    }

    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
    }

    fn map(&mut self, m: &BTreeMap<String, u64>) {
        self.u32(m.len() as u32);
        for (k, v) in m {
            self.str(k);
            self.u64(*v);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], SnapshotError> {
        let end = self.pos.checked_add(n).ok_or(SnapshotError::Truncated)?;
        let slice = self.buf.get(self.pos..end).ok_or(SnapshotError::Truncated)?;
        self.pos = end;
        Ok(slice)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], SnapshotError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u32(&mut self) -> Result<u32, SnapshotError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64, SnapshotError> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn i32(&mut self) -> Result<i32, SnapshotError> {
        Ok(i32::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64, SnapshotError> {
        Ok(f64::from_bits(self.u64()?))
    }

    /// A record count, bounded by the bytes left so a corrupt count cannot
    /// trigger a huge allocation.
    fn len(&mut self) -> Result<usize, SnapshotError> {
        let n = self.u64()?;
        if n > (self.buf.len() - self.pos) as u64 {
            return Err(SnapshotError::Truncated);
        }
        Ok(n as usize)
    }

    fn str(&mut self) -> Result<String, SnapshotError> {
        let n = self.u32()? as usize;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec()).map_err(|e| SnapshotError::Corrupt(e.to_string()))
    }

    fn map(&mut self) -> Result<BTreeMap<String, u64>, SnapshotError> {
        let n = self.u32()? as usize;
        let mut m = BTreeMap::new();
        for _ in 0..n {
            let k = self.str()?;
            m.insert(k, self.u64()?);
        }
        Ok(m)
    }
}
