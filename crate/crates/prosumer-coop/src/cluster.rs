//! Restarted K-means over load profiles with evenness-based selection.
//!
//! Many independent Lloyd runs are scored by their total (non-squared)
//! Euclidean distance `D`; among all runs whose `D` lands within a relaxed
//! band above the minimum, the selection prefers the most even cluster-size
//! distribution. Identical master seeds reproduce identical assignments
//! regardless of worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

/// One R-vector of kWh values per prosumer, in scenario order.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileMatrix {
    rows: Vec<Vec<f64>>,
    dim: usize,
}

impl ProfileMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, ClusterError> {
        let dim = rows.first().map_or(0, |r| r.len());
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(ClusterError::RaggedRows {
                    row: i,
                    expected: dim,
                    actual: row.len(),
                });
            }
            if let Some(t) = row.iter().position(|x| !x.is_finite()) {
                return Err(ClusterError::NonFinite { row: i, col: t });
            }
        }
        Ok(ProfileMatrix { rows, dim })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClusterError {
    #[error("profile row {row} has {actual} values, expected {expected}")]
    RaggedRows {
        row: usize,
        expected: usize,
        actual: usize,
    },
    #[error("non-finite profile value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("k={k} must be between 1 and the number of profiles ({n})")]
    BadK { k: usize, n: usize },
    #[error("at least one run is required")]
    NoRuns,
}

/// A clustering of the profiles: centroids, per-prosumer assignment,
/// cluster sizes and the total non-squared Euclidean distance.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    /// `assignment[i]` is the cluster index in `[0, k)` of profile `i`.
    pub assignment: Vec<usize>,
    pub sizes: Vec<usize>,
    /// Sum over profiles of the Euclidean distance to the assigned centroid.
    pub total_distance: f64,
}

impl ClusterAssignment {
    pub fn members_of(&self, cluster: usize) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|&(_, &a)| a == cluster)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn min_size(&self) -> usize {
        self.sizes.iter().copied().min().unwrap_or(0)
    }

    pub fn max_size(&self) -> usize {
        self.sizes.iter().copied().max().unwrap_or(0)
    }
}

/// One Lloyd run plus its convergence trace.
#[derive(Debug, Clone)]
pub struct KmeansRun {
    pub assignment: ClusterAssignment,
    pub seed: u64,
    pub iterations: usize,
    /// Squared-distance objective after each assignment step; non-increasing.
    pub objective_trace: Vec<f64>,
}

const MAX_ITERATIONS: usize = 300;

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Standard Lloyd iteration from a random (Forgy) initialization:
/// alternate nearest-centroid assignment and centroid means until the
/// assignment is stable or 300 iterations pass. An emptied cluster is
/// re-seeded to the point farthest from its assigned centroid, which keeps
/// the objective non-increasing. Deterministic given `seed`.
pub fn lloyd_kmeans(
    profiles: &ProfileMatrix,
    k: usize,
    seed: u64,
) -> Result<KmeansRun, ClusterError> {
    let n = profiles.n_rows();
    if k == 0 || k > n {
        return Err(ClusterError::BadK { k, n });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = rand::seq::index::sample(&mut rng, n, k);
    let mut centroids: Vec<Vec<f64>> = init.iter().map(|i| profiles.row(i).to_vec()).collect();

    let mut assignment = vec![0usize; n];
    let mut previous: Option<Vec<usize>> = None;
    let mut trace = Vec::new();
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        iterations += 1;

        assign_nearest(profiles, &centroids, &mut assignment);
        fix_empty_clusters(profiles, &mut centroids, &mut assignment, k);
        trace.push(objective(profiles, &centroids, &assignment));

        if previous.as_deref() == Some(assignment.as_slice()) {
            break;
        }
        previous = Some(assignment.clone());
        update_centroids(profiles, &assignment, &mut centroids, k);
    }

    // Report means of the final stable assignment as centroids.
    update_centroids(profiles, &assignment, &mut centroids, k);

    let mut sizes = vec![0usize; k];
    for &a in &assignment {
        sizes[a] += 1;
    }
    let total_distance = (0..n)
        .map(|i| squared_distance(profiles.row(i), &centroids[assignment[i]]).sqrt())
        .sum();

    Ok(KmeansRun {
        assignment: ClusterAssignment {
            k,
            centroids,
            assignment,
            sizes,
            total_distance,
        },
        seed,
        iterations,
        objective_trace: trace,
    })
}

fn assign_nearest(profiles: &ProfileMatrix, centroids: &[Vec<f64>], assignment: &mut [usize]) {
    for (i, slot) in assignment.iter_mut().enumerate() {
        let row = profiles.row(i);
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (j, c) in centroids.iter().enumerate() {
            let d = squared_distance(row, c);
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        *slot = best;
    }
}

fn fix_empty_clusters(
    profiles: &ProfileMatrix,
    centroids: &mut [Vec<f64>],
    assignment: &mut [usize],
    k: usize,
) {
    loop {
        let mut sizes = vec![0usize; k];
        for &a in assignment.iter() {
            sizes[a] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        // Farthest point from its own centroid becomes the new seed; its
        // distance drops to zero, so the objective cannot increase.
        let farthest = (0..profiles.n_rows())
            .max_by(|&a, &b| {
                let da = squared_distance(profiles.row(a), &centroids[assignment[a]]);
                let db = squared_distance(profiles.row(b), &centroids[assignment[b]]);
                da.total_cmp(&db)
            })
            .expect("profiles are nonempty");
        centroids[empty] = profiles.row(farthest).to_vec();
        assignment[farthest] = empty;
    }
}

fn update_centroids(
    profiles: &ProfileMatrix,
    assignment: &[usize],
    centroids: &mut [Vec<f64>],
    k: usize,
) {
    let dim = profiles.dim();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (i, &a) in assignment.iter().enumerate() {
        counts[a] += 1;
        for (s, x) in sums[a].iter_mut().zip(profiles.row(i)) {
            *s += x;
        }
    }
    for (j, sum) in sums.into_iter().enumerate() {
        if counts[j] > 0 {
            centroids[j] = sum.into_iter().map(|s| s / counts[j] as f64).collect();
        }
    }
}

fn objective(profiles: &ProfileMatrix, centroids: &[Vec<f64>], assignment: &[usize]) -> f64 {
    (0..profiles.n_rows())
        .map(|i| squared_distance(profiles.row(i), &centroids[assignment[i]]))
        .sum()
}

/// Distance and size summary of one run, kept for reporting.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub run_index: usize,
    pub seed: u64,
    pub total_distance: f64,
    pub min_size: usize,
    pub max_size: usize,
    pub in_band: bool,
}

/// Outcome of [`select_clustering`].
#[derive(Debug, Clone)]
pub struct SelectedClustering {
    pub chosen: ClusterAssignment,
    pub chosen_run: usize,
    /// Lowest total distance across all runs.
    pub min_distance: f64,
    /// Number of runs with distance within the relaxed band.
    pub band_count: usize,
    pub runs: Vec<RunSummary>,
}

/// Runs `runs` independent K-means restarts (seeds derived from
/// `master_seed`) and picks, among all runs whose total distance is within
/// `1 + eurelax` of the minimum: (a) the largest minimum cluster size, then
/// (b) the smallest maximum cluster size, then (c) the lowest run index.
pub fn select_clustering(
    profiles: &ProfileMatrix,
    k: usize,
    runs: usize,
    eurelax: f64,
    master_seed: u64,
) -> Result<SelectedClustering, ClusterError> {
    if runs == 0 {
        return Err(ClusterError::NoRuns);
    }
    if k == 0 || k > profiles.n_rows() {
        return Err(ClusterError::BadK {
            k,
            n: profiles.n_rows(),
        });
    }

    let mut seed_rng = ChaCha8Rng::seed_from_u64(master_seed);
    let seeds: Vec<u64> = (0..runs).map(|_| rand::Rng::random(&mut seed_rng)).collect();

    let mut all_runs: Vec<KmeansRun> = seeds
        .par_iter()
        .map(|&s| lloyd_kmeans(profiles, k, s))
        .collect::<Result<_, _>>()?;

    let min_distance = all_runs
        .iter()
        .map(|r| r.assignment.total_distance)
        .fold(f64::INFINITY, f64::min);
    let band_limit = min_distance * (1.0 + eurelax);

    let mut chosen = 0usize;
    let mut band_count = 0usize;
    for (idx, run) in all_runs.iter().enumerate() {
        if run.assignment.total_distance > band_limit {
            continue;
        }
        band_count += 1;
        if band_count == 1 {
            chosen = idx;
            continue;
        }
        let best = &all_runs[chosen].assignment;
        let cand = &run.assignment;
        if cand.min_size() > best.min_size()
            || (cand.min_size() == best.min_size() && cand.max_size() < best.max_size())
        {
            chosen = idx;
        }
    }

    let summaries = all_runs
        .iter()
        .enumerate()
        .map(|(idx, run)| RunSummary {
            run_index: idx,
            seed: run.seed,
            total_distance: run.assignment.total_distance,
            min_size: run.assignment.min_size(),
            max_size: run.assignment.max_size(),
            in_band: run.assignment.total_distance <= band_limit,
        })
        .collect();

    let chosen_assignment = all_runs.swap_remove(chosen).assignment;
    Ok(SelectedClustering {
        chosen: chosen_assignment,
        chosen_run: chosen,
        min_distance,
        band_count,
        runs: summaries,
    })
}
