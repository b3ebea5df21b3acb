//! Bayesian information criterion for a spherical-Gaussian k-means fit.

use serde::{Deserialize, Serialize};

use super::kmeans::squared_distance;
use super::{Clustering, ClusteringError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BicScore {
    pub k: usize,
    pub log_likelihood: f64,
    pub penalty: f64,
    pub bic: f64,
    /// Pooled variance: squared distances to assigned centroids over (R - k).
    pub variance: f64,
    pub n_params: usize,
    /// Set when R <= k or the pooled variance is zero; `bic` is then -inf.
    pub degenerate: bool,
}

/// Free parameters of the model: k - 1 mixing weights, k centroids of
/// dimension `dim`, one shared variance.
pub fn parameter_count(k: usize, dim: usize) -> usize {
    (k - 1) + k * dim + 1
}

pub fn bic_penalty(k: usize, dim: usize, n: usize) -> f64 {
    parameter_count(k, dim) as f64 / 2.0 * (n as f64).ln()
}

pub fn bic(clustering: &Clustering, vectors: &[Vec<f64>]) -> Result<BicScore, ClusteringError> {
    super::kmeans::validate(vectors, 1)?;
    if clustering.assignments.len() != vectors.len() {
        return Err(ClusteringError::Mismatch {
            assignments: clustering.assignments.len(),
            vectors: vectors.len(),
        });
    }
    let k = clustering.k;
    let r = vectors.len();
    let dim = vectors[0].len();
    let penalty = bic_penalty(k, dim, r);
    let n_params = parameter_count(k, dim);

    let mut sizes = vec![0usize; k];
    let mut sse = 0.0;
    for (v, &c) in vectors.iter().zip(&clustering.assignments) {
        sizes[c] += 1;
        sse += squared_distance(v, &clustering.centroids[c]);
    }

    let variance = if r > k { sse / (r - k) as f64 } else { 0.0 };
    if r <= k || variance <= 0.0 {
        return Ok(BicScore {
            k,
            log_likelihood: f64::NEG_INFINITY,
            penalty,
            bic: f64::NEG_INFINITY,
            variance,
            n_params,
            degenerate: true,
        });
    }

    let two_pi_ln = (2.0 * std::f64::consts::PI).ln();
    let var_ln = variance.ln();
    let r_f = r as f64;
    let d_f = dim as f64;
    let log_likelihood: f64 = sizes
        .iter()
        .filter(|&&n| n > 0)
        .map(|&n| {
            let ri = n as f64;
            -ri / 2.0 * two_pi_ln - ri * d_f / 2.0 * var_ln - (ri - 1.0) / 2.0
                + ri * (ri / r_f).ln()
        })
        .sum();
    Ok(BicScore {
        k,
        log_likelihood,
        penalty,
        bic: log_likelihood - penalty,
        variance,
        n_params,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::kmeans::kmeans;

    #[test]
    fn identical_points_are_degenerate() {
        let data = vec![vec![2.0, 2.0]; 4];
        let c = kmeans(&data, 1, 0, 10).unwrap();
        let s = bic(&c, &data).unwrap();
        assert!(s.degenerate);
        assert_eq!(s.variance, 0.0);
        assert_eq!(s.bic, f64::NEG_INFINITY);
    }

    #[test]
    fn as_many_clusters_as_points_is_degenerate() {
        let data = vec![vec![0.0], vec![1.0]];
        let c = kmeans(&data, 2, 0, 10).unwrap();
        assert!(bic(&c, &data).unwrap().degenerate);
    }

    #[test]
    fn unit_square_single_cluster() {
        // Frozen from a term-by-term evaluation: R=4, d=2, SSE=2, variance=2/3,
        // l = -2 ln(2 pi) - 4 ln(2/3) - 3/2 + 4 ln(1), p = 3, penalty = 1.5 ln 4.
        let data = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]];
        let c = kmeans(&data, 1, 0, 10).unwrap();
        let s = bic(&c, &data).unwrap();
        assert!((s.variance - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.log_likelihood - -3.553893700386033).abs() < 1e-9);
        assert!((s.penalty - 2.0794415416798357).abs() < 1e-9);
        assert!((s.bic - -5.633335242065868).abs() < 1e-9);
        assert_eq!(s.n_params, 3);
    }

    #[test]
    fn decomposition_holds_for_every_k() {
        let data: Vec<Vec<f64>> = (0..30)
            .map(|i| vec![(i % 7) as f64 + 0.1 * i as f64, (i * i % 11) as f64])
            .collect();
        for k in 1..=6 {
            let c = kmeans(&data, k, 42, 100).unwrap();
            let s = bic(&c, &data).unwrap();
            assert_eq!(s.bic, s.log_likelihood - s.penalty);
            let expected = parameter_count(k, 2) as f64 / 2.0 * 30f64.ln();
            assert!((s.bic - s.log_likelihood + expected).abs() < 1e-12);
        }
    }

    #[test]
    fn penalty_strictly_increasing_in_k() {
        for n in 2..200 {
            for dim in [1, 2, 8] {
                for k in 1..30 {
                    assert!(bic_penalty(k + 1, dim, n) > bic_penalty(k, dim, n));
                }
            }
        }
    }
}
