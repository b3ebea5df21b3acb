use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde_json::{Map, Value};

use super::{BusinessRecord, ReviewRecord, UserRecord};

type Object = Map<String, Value>;

fn object(v: &Value) -> Result<&Object, String> {
    v.as_object().ok_or_else(|| "line is not a JSON object".to_string())
}

fn string(obj: &Object, key: &str) -> Result<String, String> {
    match obj.get(key) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(other) => Err(format!("field `{key}` is not a string: {other}")),
        None => Err(format!("missing field `{key}`")),
    }
}

fn number(obj: &Object, key: &str) -> Result<f64, String> {
    match obj.get(key) {
        Some(Value::Number(n)) => n
            .as_f64()
            .ok_or_else(|| format!("field `{key}` is not representable")),
        Some(other) => Err(format!("field `{key}` is not a number: {other}")),
        None => Err(format!("missing field `{key}`")),
    }
}

fn as_count(v: &Value, key: &str) -> Result<u64, String> {
    if let Some(n) = v.as_u64() {
        return Ok(n);
    }
    match v.as_f64() {
        Some(f) if f >= 0.0 && f.fract() == 0.0 && f <= u64::MAX as f64 => Ok(f as u64),
        Some(f) => Err(format!("field `{key}` must be a nonnegative integer, got {f}")),
        None => Err(format!("field `{key}` is not a count: {v}")),
    }
}

fn count(obj: &Object, keys: &[&str]) -> Result<u64, String> {
    for key in keys {
        if let Some(v) = obj.get(*key) {
            return as_count(v, key);
        }
    }
    Err(format!("missing field `{}`", keys[0]))
}

fn year_of(v: &Value, key: &str) -> Result<i32, String> {
    let year = match v {
        Value::Number(n) => n
            .as_i64()
            .ok_or_else(|| format!("field `{key}` is not an integer year"))?,
        Value::String(s) => {
            let head: String = s.trim().chars().take(4).collect();
            head.parse::<i64>()
                .map_err(|_| format!("field `{key}` has no leading year: `{s}`"))?
        }
        other => return Err(format!("field `{key}` is not a year: {other}")),
    };
    if !(1900..=2100).contains(&year) {
        return Err(format!("field `{key}` year {year} out of range"));
    }
    Ok(year as i32)
}

fn elite_years(obj: &Object) -> Result<Vec<i32>, String> {
    let value = match obj.get("elite").or_else(|| obj.get("elite_years")) {
        None | Some(Value::Null) => return Ok(Vec::new()),
        Some(v) => v,
    };
    let mut years = match value {
        Value::Array(items) => items
            .iter()
            .map(|item| year_of(item, "elite"))
            .collect::<Result<Vec<_>, _>>()?,
        Value::String(s) => {
            let s = s.trim();
            if s.is_empty() || s.eq_ignore_ascii_case("none") {
                Vec::new()
            } else {
                s.split(',')
                    .map(|tok| year_of(&Value::String(tok.trim().to_string()), "elite"))
                    .collect::<Result<Vec<_>, _>>()?
            }
        }
        other => return Err(format!("field `elite` has unsupported form: {other}")),
    };
    years.sort_unstable();
    years.dedup();
    Ok(years)
}

fn friend_count(obj: &Object) -> Result<u64, String> {
    if let Some(v) = obj.get("friend_count") {
        return as_count(v, "friend_count");
    }
    match obj.get("friends") {
        None | Some(Value::Null) => Ok(0),
        Some(Value::Array(items)) => Ok(items.len() as u64),
        Some(Value::String(s)) => {
            let s = s.trim();
            if s.is_empty() || s.eq_ignore_ascii_case("none") {
                Ok(0)
            } else {
                Ok(s.split(',').filter(|t| !t.trim().is_empty()).count() as u64)
            }
        }
        Some(v) => as_count(v, "friends"),
    }
}

fn count_map(v: &Value, key: &str) -> Result<BTreeMap<String, u64>, String> {
    let obj = v
        .as_object()
        .ok_or_else(|| format!("field `{key}` is not an object"))?;
    obj.iter()
        .map(|(label, n)| Ok((label.clone(), as_count(n, key)?)))
        .collect()
}

fn votes(obj: &Object) -> Result<BTreeMap<String, u64>, String> {
    if let Some(v) = obj.get("votes") {
        return count_map(v, "votes");
    }
    let mut out = BTreeMap::new();
    for label in ["funny", "useful", "cool"] {
        if let Some(v) = obj.get(label) {
            out.insert(label.to_string(), as_count(v, label)?);
        }
    }
    Ok(out)
}

fn compliments(obj: &Object) -> Result<BTreeMap<String, u64>, String> {
    if let Some(v) = obj.get("compliments") {
        return count_map(v, "compliments");
    }
    let mut out = BTreeMap::new();
    for (key, v) in obj {
        if let Some(label) = key.strip_prefix("compliment_") {
            out.insert(label.to_string(), as_count(v, key)?);
        }
    }
    Ok(out)
}

pub fn parse_user(v: &Value) -> Result<UserRecord, String> {
    let obj = object(v)?;
    let user = UserRecord {
        user_id: string(obj, "user_id")?,
        yelping_since: year_of(
            obj.get("yelping_since")
                .ok_or("missing field `yelping_since`")?,
            "yelping_since",
        )?,
        average_stars: number(obj, "average_stars")?,
        elite_years: elite_years(obj)?,
        fan_count: count(obj, &["fans", "fan_count"])?,
        friend_count: friend_count(obj)?,
        review_count: count(obj, &["review_count"])?,
        vote_counts: votes(obj)?,
        compliment_counts: compliments(obj)?,
    };
    user.validate()?;
    Ok(user)
}

fn stars(obj: &Object) -> Result<u8, String> {
    let raw = number(obj, "stars")?;
    if raw.fract() != 0.0 || !(1.0..=5.0).contains(&raw) {
        return Err(format!("stars {raw} outside 1..=5"));
    }
    Ok(raw as u8)
}

fn date(obj: &Object) -> Result<NaiveDate, String> {
    let raw = string(obj, "date")?;
    let day: String = raw.trim().chars().take(10).collect();
    NaiveDate::parse_from_str(&day, "%Y-%m-%d").map_err(|e| format!("bad date `{raw}`: {e}"))
}

pub fn parse_review(v: &Value) -> Result<ReviewRecord, String> {
    let obj = object(v)?;
    let review = ReviewRecord {
        review_id: string(obj, "review_id")?,
        user_id: string(obj, "user_id")?,
        business_id: string(obj, "business_id")?,
        stars: stars(obj)?,
        date: date(obj)?,
        text: string(obj, "text")?,
    };
    review.validate()?;
    Ok(review)
}

pub fn parse_business(v: &Value) -> Result<BusinessRecord, String> {
    let obj = object(v)?;
    let business = BusinessRecord {
        business_id: string(obj, "business_id")?,
        name: string(obj, "name")?,
        stars: number(obj, "stars")?,
        review_count: count(obj, &["review_count"])?,
    };
    business.validate()?;
    Ok(business)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn flat_vote_and_compliment_fields() {
        let v = json!({
            "user_id": "x", "yelping_since": "2007-01-19 17:27:16", "average_stars": 4.2,
            "elite": "2008,2009, 2010", "fans": 3, "friends": "a, b, c, d",
            "review_count": 10, "useful": 7, "funny": 1, "cool": 2,
            "compliment_hot": 4, "compliment_cool": 6, "name": "ignored"
        });
        let user = parse_user(&v).unwrap();
        assert_eq!(user.yelping_since, 2007);
        assert_eq!(user.elite_years, vec![2008, 2009, 2010]);
        assert_eq!(user.friend_count, 4);
        assert_eq!(user.total_votes(), 10);
        assert_eq!(user.total_compliments(), 10);
    }

    #[test]
    fn none_strings_mean_empty() {
        let v = json!({
            "user_id": "x", "yelping_since": 2016, "average_stars": 0.0,
            "elite": "None", "fans": 0, "friends": "None", "review_count": 0
        });
        let user = parse_user(&v).unwrap();
        assert!(user.elite_years.is_empty());
        assert_eq!(user.friend_count, 0);
    }

    #[test]
    fn average_stars_checked_when_user_has_reviews() {
        let v = json!({
            "user_id": "x", "yelping_since": 2016, "average_stars": 0.0,
            "fans": 0, "friends": [], "review_count": 3
        });
        assert!(parse_user(&v).is_err());
    }

    #[test]
    fn negative_counts_rejected() {
        let v = json!({
            "user_id": "x", "yelping_since": 2016, "average_stars": 3.0,
            "fans": -1, "friends": [], "review_count": 3
        });
        assert!(parse_user(&v).unwrap_err().contains("fans"));
    }

    #[test]
    fn review_stars_accepts_integral_float_and_datetime() {
        let v = json!({
            "review_id": "r", "user_id": "u", "business_id": "b",
            "stars": 4.0, "date": "2015-06-01 23:59:59", "text": "ok"
        });
        let review = parse_review(&v).unwrap();
        assert_eq!(review.stars, 4);
        assert_eq!(review.date, NaiveDate::from_ymd_opt(2015, 6, 1).unwrap());
    }

    #[test]
    fn review_rejects_fractional_and_out_of_range_stars() {
        for stars in [json!(3.5), json!(0), json!(7)] {
            let v = json!({
                "review_id": "r", "user_id": "u", "business_id": "b",
                "stars": stars, "date": "2015-06-01", "text": "ok"
            });
            assert!(parse_review(&v).is_err());
        }
    }

    #[test]
    fn business_requires_id() {
        let v = json!({"business_id": "", "name": "n", "stars": 3.0, "review_count": 1});
        assert!(parse_business(&v).is_err());
    }
}
