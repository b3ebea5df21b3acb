//! Lloyd's k-means with k-means++ seeding.
//!
//! Points are processed in a canonical order (lexicographic by coordinates)
//! so the result depends only on the multiset of input vectors and the seed,
//! never on the order the caller supplied them in.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{ClusteringError, Clustering};

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

pub(super) fn validate(vectors: &[Vec<f64>], k: usize) -> Result<usize, ClusteringError> {
    if k == 0 {
        return Err(ClusteringError::ZeroK);
    }
    let first = vectors.first().ok_or(ClusteringError::EmptyInput)?;
    let dim = first.len();
    for v in vectors {
        if v.len() != dim {
            return Err(ClusteringError::Dimension {
                expected: dim,
                found: v.len(),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(ClusteringError::NonFinite);
        }
    }
    if k > vectors.len() {
        return Err(ClusteringError::TooManyClusters {
            k,
            n: vectors.len(),
        });
    }
    Ok(dim)
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in centroids.iter().enumerate() {
        let d = squared_distance(point, c);
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    best
}

fn assign_all(points: &[&[f64]], centroids: &[Vec<f64>]) -> Vec<usize> {
    points.par_iter().map(|p| nearest(p, centroids)).collect()
}

fn total_distortion(points: &[&[f64]], centroids: &[Vec<f64>], assign: &[usize]) -> f64 {
    points
        .iter()
        .zip(assign)
        .map(|(p, &c)| squared_distance(p, &centroids[c]))
        .sum()
}

/// Means of the assigned points; clusters without points keep `previous`.
fn means(
    points: &[&[f64]],
    assign: &[usize],
    previous: &[Vec<f64>],
) -> (Vec<Vec<f64>>, Vec<usize>) {
    let k = previous.len();
    let dim = previous[0].len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut sizes = vec![0usize; k];
    for (p, &c) in points.iter().zip(assign) {
        sizes[c] += 1;
        for (s, x) in sums[c].iter_mut().zip(p.iter()) {
            *s += x;
        }
    }
    let centroids = sums
        .into_iter()
        .zip(&sizes)
        .zip(previous)
        .map(|((sum, &n), prev)| {
            if n == 0 {
                prev.clone()
            } else {
                sum.into_iter().map(|s| s / n as f64).collect()
            }
        })
        .collect();
    (centroids, sizes)
}

/// Moves each empty cluster's centroid onto the point farthest from its
/// assigned centroid. Returns whether anything moved.
fn repair_empty(
    points: &[&[f64]],
    assign: &[usize],
    centroids: &mut [Vec<f64>],
    sizes: &[usize],
) -> bool {
    let mut taken = vec![false; points.len()];
    let mut repaired = false;
    let reference: Vec<Vec<f64>> = centroids.to_vec();
    for j in 0..centroids.len() {
        if sizes[j] > 0 {
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for (i, (p, &c)) in points.iter().zip(assign).enumerate() {
            if taken[i] {
                continue;
            }
            let d = squared_distance(p, &reference[c]);
            if d > 0.0 && best.is_none_or(|(_, bd)| d > bd) {
                best = Some((i, d));
            }
        }
        if let Some((i, _)) = best {
            taken[i] = true;
            centroids[j] = points[i].to_vec();
            repaired = true;
        }
    }
    repaired
}

fn kmeans_plus_plus(points: &[&[f64]], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![false; n];
    let first = rng.gen_range(0..n);
    chosen[first] = true;
    let mut centroids = vec![points[first].to_vec()];
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| squared_distance(p, points[first]))
        .collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                if d <= 0.0 {
                    continue;
                }
                acc += d;
                pick = Some(i);
                if acc > target {
                    break;
                }
            }
            pick.expect("positive total weight")
        } else {
            // every remaining point coincides with a chosen one
            chosen.iter().position(|c| !c).expect("k <= n")
        };
        chosen[pick] = true;
        let c = points[pick].to_vec();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(squared_distance(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

pub fn kmeans(
    vectors: &[Vec<f64>],
    k: usize,
    seed: u64,
    max_iters: usize,
) -> Result<Clustering, ClusteringError> {
    validate(vectors, k)?;
    let mut order: Vec<usize> = (0..vectors.len()).collect();
    order.sort_by(|&a, &b| lexicographic(&vectors[a], &vectors[b]).then(a.cmp(&b)));
    let points: Vec<&[f64]> = order.iter().map(|&i| vectors[i].as_slice()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_plus_plus(&points, k, &mut rng);
    let mut assign = assign_all(&points, &centroids);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iters {
        trace.push(total_distortion(&points, &centroids, &assign));
        iterations += 1;
        let (mut updated, sizes) = means(&points, &assign, &centroids);
        let repaired = repair_empty(&points, &assign, &mut updated, &sizes);
        centroids = updated;
        let next = assign_all(&points, &centroids);
        if next == assign && !repaired {
            converged = true;
            break;
        }
        assign = next;
    }
    let (centroids, cluster_sizes) = means(&points, &assign, &centroids);
    let distortion = total_distortion(&points, &centroids, &assign);
    trace.push(distortion);

    let mut assignments = vec![0; vectors.len()];
    for (canonical, &original) in order.iter().enumerate() {
        assignments[original] = assign[canonical];
    }
    Ok(Clustering {
        k,
        centroids,
        assignments,
        cluster_sizes,
        distortion,
        iterations,
        converged,
        distortion_trace: trace,
    })
}
