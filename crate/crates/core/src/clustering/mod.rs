//! Popular-user clustering and business extraction.

mod bic;
mod kmeans;

use std::collections::BTreeSet;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{NormalizationParams, USER_FEATURE_NAMES};
use crate::ingest::Corpus;
use crate::io_util::fmt_f64;

pub use bic::{bic, bic_penalty, parameter_count, BicScore};
pub use kmeans::{kmeans, squared_distance};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ClusteringError {
    #[error("k must be at least 1")]
    ZeroK,
    #[error("no vectors to cluster")]
    EmptyInput,
    #[error("k = {k} exceeds the number of vectors ({n})")]
    TooManyClusters { k: usize, n: usize },
    #[error("vectors have inconsistent dimensions ({expected} vs {found})")]
    Dimension { expected: usize, found: usize },
    #[error("vectors contain non-finite values")]
    NonFinite,
    #[error("clustering has {assignments} assignments for {vectors} vectors")]
    Mismatch { assignments: usize, vectors: usize },
    #[error("invalid k range {k_min}..={k_max}")]
    BadRange { k_min: usize, k_max: usize },
    #[error("restarts must be at least 1")]
    NoRestarts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    /// Cluster index per input vector, in input order.
    pub assignments: Vec<usize>,
    pub cluster_sizes: Vec<usize>,
    /// Total squared Euclidean distance to assigned centroids.
    pub distortion: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Distortion after every assignment step, ending with the final value.
    pub distortion_trace: Vec<f64>,
}

impl Clustering {
    pub fn members(&self, cluster: usize) -> impl Iterator<Item = usize> + '_ {
        self.assignments
            .iter()
            .enumerate()
            .filter(move |(_, &c)| c == cluster)
            .map(|(i, _)| i)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub k_min: usize,
    pub k_max: usize,
    pub restarts: usize,
    pub seed: u64,
    pub max_iters: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            k_min: 2,
            k_max: 10,
            restarts: 5,
            seed: 7,
            max_iters: 100,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    /// Index into `per_k` / `scores` of the highest-BIC clustering.
    pub best: usize,
    pub scores: Vec<BicScore>,
    pub per_k: Vec<Clustering>,
}

impl SweepResult {
    pub fn best_clustering(&self) -> &Clustering {
        &self.per_k[self.best]
    }

    pub fn best_score(&self) -> &BicScore {
        &self.scores[self.best]
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of restart `restart` at cluster count `k`.
pub fn restart_seed(seed: u64, k: usize, restart: usize) -> u64 {
    splitmix64(splitmix64(seed) ^ ((k as u64) << 32 | restart as u64))
}

/// Best (lowest distortion) of `restarts` seeded k-means runs; ties keep the
/// earliest restart.
pub fn kmeans_restarts(
    vectors: &[Vec<f64>],
    k: usize,
    restarts: usize,
    seed: u64,
    max_iters: usize,
) -> Result<Clustering, ClusteringError> {
    if restarts == 0 {
        return Err(ClusteringError::NoRestarts);
    }
    let mut best: Option<Clustering> = None;
    for r in 0..restarts {
        let c = kmeans(vectors, k, restart_seed(seed, k, r), max_iters)?;
        if best.as_ref().is_none_or(|b| c.distortion < b.distortion) {
            best = Some(c);
        }
    }
    Ok(best.expect("restarts >= 1"))
}

pub fn sweep_k(vectors: &[Vec<f64>], config: &SweepConfig) -> Result<SweepResult, ClusteringError> {
    let SweepConfig {
        k_min,
        k_max,
        restarts,
        seed,
        max_iters,
    } = *config;
    if k_min == 0 || k_min > k_max {
        return Err(ClusteringError::BadRange { k_min, k_max });
    }
    if k_max > vectors.len() {
        return Err(ClusteringError::TooManyClusters {
            k: k_max,
            n: vectors.len(),
        });
    }
    let runs: Vec<(Clustering, BicScore)> = (k_min..=k_max)
        .into_par_iter()
        .map(|k| {
            let c = kmeans_restarts(vectors, k, restarts, seed, max_iters)?;
            let s = bic(&c, vectors)?;
            Ok((c, s))
        })
        .collect::<Result<_, ClusteringError>>()?;
    let (per_k, scores): (Vec<_>, Vec<_>) = runs.into_iter().unzip();
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if s.bic > scores[best].bic {
            best = i;
        }
    }
    Ok(SweepResult {
        best,
        scores,
        per_k,
    })
}

/// Popularity score of raw (de-normalized) user-feature centroids: the mean
/// of the coordinates after replacing `yelping_since` with tenure in years.
pub fn popularity_score(raw_centroid: &[f64], reference_year: i32) -> f64 {
    let tenure = f64::from(reference_year) - raw_centroid[0];
    let rest: f64 = raw_centroid[1..].iter().sum();
    (tenure + rest) / raw_centroid.len() as f64
}

/// Index of the most popular centroid. Clusters flagged empty in `sizes` are
/// skipped unless every cluster is empty.
pub fn most_popular_centroid(raw_centroids: &[Vec<f64>], sizes: &[usize], reference_year: i32) -> usize {
    let fans = USER_FEATURE_NAMES
        .iter()
        .position(|n| *n == "fans")
        .expect("fans feature");
    let any_nonempty = sizes.iter().any(|&s| s > 0);
    let mut best: Option<(usize, f64)> = None;
    for (j, c) in raw_centroids.iter().enumerate() {
        if any_nonempty && sizes.get(j).copied().unwrap_or(0) == 0 {
            continue;
        }
        let score = popularity_score(c, reference_year);
        let better = match best {
            None => true,
            Some((b, bs)) => {
                score > bs || (score == bs && c[fans] > raw_centroids[b][fans])
            }
        };
        if better {
            best = Some((j, score));
        }
    }
    best.map_or(0, |(j, _)| j)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopularCluster {
    pub index: usize,
    /// Indices into the clustered vectors.
    pub members: Vec<usize>,
}

pub fn select_popular_cluster(
    clustering: &Clustering,
    params: &NormalizationParams,
    reference_year: i32,
) -> PopularCluster {
    let raw: Vec<Vec<f64>> = clustering
        .centroids
        .iter()
        .map(|c| params.denormalize(c))
        .collect();
    let index = most_popular_centroid(&raw, &clustering.cluster_sizes, reference_year);
    PopularCluster {
        index,
        members: clustering.members(index).collect(),
    }
}

pub const DEFAULT_MIN_REVIEWS: usize = 10;

/// Businesses reviewed by at least one popular user and having at least
/// `min_reviews` reviews in the corpus, in ascending id order.
pub fn extract_businesses<'a, I>(popular: I, corpus: &Corpus, min_reviews: usize) -> BTreeSet<String>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut out = BTreeSet::new();
    for user in popular {
        for review in corpus.reviews_by_user(user) {
            if !out.contains(&review.business_id)
                && corpus.business_review_count(&review.business_id) >= min_reviews
            {
                out.insert(review.business_id.clone());
            }
        }
    }
    out
}

pub fn write_bic_csv<W: Write>(out: W, sweep: &SweepResult) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["k", "log_likelihood", "penalty", "bic", "chosen"])?;
    for (i, s) in sweep.scores.iter().enumerate() {
        w.write_record([
            s.k.to_string(),
            fmt_f64(s.log_likelihood),
            fmt_f64(s.penalty),
            fmt_f64(s.bic),
            u8::from(i == sweep.best).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One column per cluster, one row per de-normalized centroid feature, then
/// the member count.
pub fn write_cluster_report<W: Write>(
    out: W,
    clustering: &Clustering,
    params: &NormalizationParams,
) -> csv::Result<()> {
    let raw: Vec<Vec<f64>> = clustering
        .centroids
        .iter()
        .map(|c| params.denormalize(c))
        .collect();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["Features".to_string()];
    header.extend((0..clustering.k).map(|j| format!("Cluster_{j}")));
    w.write_record(&header)?;
    for (d, name) in USER_FEATURE_NAMES.iter().enumerate() {
        let mut row = vec![name.to_string()];
        row.extend(raw.iter().map(|c| format!("{:.2}", c[d])));
        w.write_record(&row)?;
    }
    let mut row = vec!["total_users".to_string()];
    row.extend(clustering.cluster_sizes.iter().map(|s| s.to_string()));
    w.write_record(&row)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Centroids as published for k = 4, rows in feature order.
    fn table_k4() -> (Vec<Vec<f64>>, Vec<usize>) {
        let cols = vec![
            vec![2008.25, 3.88, 38.73, 390.22, 20946.6, 1437.97, 43021.45, 21382.02],
            vec![2008.58, 3.84, 38.34, 262.35, 19874.26, 1119.04, 28782.12, 12293.42],
            vec![2008.89, 3.85, 37.74, 548.76, 30833.41, 1994.20, 75479.22, 19308.48],
            vec![2012.38, 3.75, 2.86, 1.18, 159.88, 25.35, 83.55, 9.03],
        ];
        (cols, vec![60, 95, 46, 686355])
    }

    fn table_k3() -> (Vec<Vec<f64>>, Vec<usize>) {
        let cols = vec![
            vec![2008.25, 3.88, 38.73, 390.22, 20946.6, 1437.97, 43021.45, 21382.02],
            vec![2008.39, 3.74, 2.87, 1.22, 162.61, 25.50, 87.25, 10.73],
            vec![2008.89, 3.85, 37.74, 548.76, 30833.41, 1994.20, 75479.22, 19308.48],
        ];
        (cols, vec![60, 686450, 46])
    }

    #[test]
    fn published_centroids_pick_the_46_member_cluster() {
        for year in [2016, 2017] {
            let (c, sizes) = table_k4();
            let j = most_popular_centroid(&c, &sizes, year);
            assert_eq!(j, 2);
            assert_eq!(sizes[j], 46);
            let (c, sizes) = table_k3();
            let j = most_popular_centroid(&c, &sizes, year);
            assert_eq!(j, 2);
            assert_eq!(sizes[j], 46);
        }
    }

    #[test]
    fn normalized_fixture_gives_same_choice() {
        let (raw, sizes) = table_k4();
        let params = NormalizationParams {
            mean: vec![2012.0, 3.7, 3.0, 2.0, 170.0, 26.0, 90.0, 10.0],
            std: vec![1.5, 0.8, 4.0, 10.0, 300.0, 60.0, 500.0, 100.0],
        };
        let clustering = Clustering {
            k: 4,
            centroids: raw.iter().map(|c| params.normalize(c)).collect(),
            assignments: vec![],
            cluster_sizes: sizes,
            distortion: 0.0,
            iterations: 0,
            converged: true,
            distortion_trace: vec![],
        };
        assert_eq!(select_popular_cluster(&clustering, &params, 2016).index, 2);
    }

    #[test]
    fn single_cluster_is_selected() {
        let data: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64; 8]).collect();
        let (z, params) = crate::features::zscore_normalize(&data).unwrap();
        let c = kmeans(&z, 1, 0, 10).unwrap();
        let p = select_popular_cluster(&c, &params, 2016);
        assert_eq!(p.index, 0);
        assert_eq!(p.members, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn tie_prefers_more_fans_then_lower_index() {
        // equal coordinate sums, different fan counts
        let a = vec![2010.0, 0.0, 0.0, 1.0, 9.0, 0.0, 0.0, 0.0];
        let b = vec![2010.0, 0.0, 0.0, 5.0, 5.0, 0.0, 0.0, 0.0];
        assert_eq!(most_popular_centroid(&[a.clone(), b.clone()], &[1, 1], 2016), 1);
        assert_eq!(most_popular_centroid(&[b.clone(), b], &[1, 1], 2016), 0);
    }

    #[test]
    fn empty_clusters_are_not_selected() {
        let big = vec![2004.0, 5.0, 10.0, 999.0, 999.0, 999.0, 999.0, 999.0];
        let small = vec![2015.0, 3.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0];
        assert_eq!(most_popular_centroid(&[big, small], &[0, 10], 2016), 1);
    }

    #[test]
    fn sweep_single_k_matches_direct_run() {
        let data: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![(i % 5) as f64 * 3.0 + (i as f64 * 0.37).sin(), (i / 5) as f64])
            .collect();
        let cfg = SweepConfig {
            k_min: 3,
            k_max: 3,
            restarts: 1,
            seed: 99,
            max_iters: 100,
        };
        let sweep = sweep_k(&data, &cfg).unwrap();
        let direct = kmeans(&data, 3, restart_seed(99, 3, 0), 100).unwrap();
        assert_eq!(sweep.best_clustering(), &direct);
        assert_eq!(sweep.best_score(), &bic(&direct, &data).unwrap());
        assert_eq!(sweep.scores.len(), 1);
    }

    #[test]
    fn sweep_rejects_bad_ranges() {
        let data = vec![vec![0.0], vec![1.0], vec![2.0]];
        let mut cfg = SweepConfig {
            k_min: 3,
            k_max: 2,
            ..SweepConfig::default()
        };
        assert!(matches!(sweep_k(&data, &cfg), Err(ClusteringError::BadRange { .. })));
        cfg.k_min = 1;
        cfg.k_max = 4;
        assert!(matches!(sweep_k(&data, &cfg), Err(ClusteringError::TooManyClusters { .. })));
    }

    #[test]
    fn bic_table_csv() {
        let data: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64, (i % 3) as f64]).collect();
        let sweep = sweep_k(
            &data,
            &SweepConfig {
                k_min: 1,
                k_max: 3,
                restarts: 2,
                seed: 1,
                max_iters: 50,
            },
        )
        .unwrap();
        let mut buf = Vec::new();
        write_bic_csv(&mut buf, &sweep).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "k,log_likelihood,penalty,bic,chosen");
        assert_eq!(lines.len(), 4);
        assert_eq!(lines.iter().filter(|l| l.ends_with(",1")).count(), 1);
    }

    #[test]
    fn cluster_report_layout() {
        let data: Vec<Vec<f64>> = (0..10).map(|i| vec![2000.0 + i as f64; 8]).collect();
        let (z, params) = crate::features::zscore_normalize(&data).unwrap();
        let c = kmeans(&z, 4, 3, 100).unwrap();
        let mut buf = Vec::new();
        write_cluster_report(&mut buf, &c, &params).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "Features,Cluster_0,Cluster_1,Cluster_2,Cluster_3");
        assert_eq!(lines.len(), 10);
        assert!(lines[1].starts_with("yelping_since,"));
        assert!(lines[9].starts_with("total_users,"));
    }
}
