//! Lloyd's k-means with k-means++ seeding, used to cluster rest-pose
//! joints into spatial hyperedges.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::hypergraph::incidence::IncidenceMatrix;
use crate::hypergraph::skeleton::SkeletonDefinition;

pub const MAX_ITERATIONS: usize = 100;
pub const SHIFT_TOLERANCE: f64 = 1e-9;
/// Independent k-means++ restarts; the lowest-inertia run wins.
pub const RESTARTS: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansResult {
    pub assignment: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn plus_plus_init(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.gen_range(0..points.len())].clone()];
    while centroids.len() < k {
        let weights: Vec<f64> = points.iter().map(|p| nearest(p, &centroids).1).collect();
        let next = match WeightedIndex::new(&weights) {
            Ok(dist) => dist.sample(rng),
            // every point already coincides with a centroid
            Err(_) => rng.gen_range(0..points.len()),
        };
        centroids.push(points[next].clone());
    }
    centroids
}

fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>) -> KMeansResult {
    let k = centroids.len();
    let dim = points[0].len();
    let mut assignment = vec![0; points.len()];
    for _ in 0..MAX_ITERATIONS {
        for (a, p) in assignment.iter_mut().zip(points) {
            *a = nearest(p, &centroids).0;
        }
        // re-seed empty clusters at the point farthest from its centroid
        for c in 0..k {
            if !assignment.contains(&c) {
                let far = (0..points.len())
                    .filter(|&i| assignment.iter().filter(|&&a| a == assignment[i]).count() > 1)
                    .max_by(|&i, &j| {
                        let di = sq_dist(&points[i], &centroids[assignment[i]]);
                        let dj = sq_dist(&points[j], &centroids[assignment[j]]);
                        di.partial_cmp(&dj).unwrap().then(j.cmp(&i))
                    });
                if let Some(i) = far {
                    assignment[i] = c;
                    centroids[c] = points[i].clone();
                }
            }
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignment) {
            counts[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(p) {
                *s += x;
            }
        }
        let mut shift: f64 = 0.0;
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            let new: Vec<f64> = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            shift = shift.max(sq_dist(&new, &centroids[c]).sqrt());
            centroids[c] = new;
        }
        if shift < SHIFT_TOLERANCE {
            break;
        }
    }
    let inertia = points
        .iter()
        .zip(&assignment)
        .map(|(p, &a)| sq_dist(p, &centroids[a]))
        .sum();
    KMeansResult {
        assignment,
        centroids,
        inertia,
    }
}

/// Clusters `points` into `k` groups. Deterministic for a given seed.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Result<KMeansResult> {
    if points.is_empty() {
        return Err(Error::input("k-means over no points"));
    }
    if k < 1 || k > points.len() {
        return Err(Error::input(format!("{k} clusters for {} points", points.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeansResult> = None;
    for _ in 0..RESTARTS {
        let run = lloyd(points, plus_plus_init(points, k, &mut rng));
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Groups of point indices per cluster, non-empty groups only, ordered
/// by smallest member.
pub fn cluster_groups(assignment: &[usize]) -> Vec<Vec<usize>> {
    let k = assignment.iter().max().map_or(0, |m| m + 1);
    let mut groups = vec![Vec::new(); k];
    for (i, &a) in assignment.iter().enumerate() {
        groups[a].push(i);
    }
    groups.retain(|g| !g.is_empty());
    groups.sort_by_key(|g| g[0]);
    groups
}

/// Partition of the joints into `clusters` hyperedges by k-means on the
/// rest pose.
pub fn spatial_kmeans(sk: &SkeletonDefinition, clusters: usize, seed: u64) -> Result<IncidenceMatrix> {
    let v = sk.num_joints();
    if clusters < 1 || clusters > v {
        return Err(Error::input(format!("{clusters} clusters for {v} joints")));
    }
    let points: Vec<Vec<f64>> = sk.rest_pose().iter().map(|p| p.to_vec()).collect();
    let result = kmeans(&points, clusters, seed)?;
    IncidenceMatrix::from_columns(v, &cluster_groups(&result.assignment))
}
