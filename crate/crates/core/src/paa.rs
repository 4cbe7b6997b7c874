//! Prototype-based aggregation: probe-driven prototype extraction, Pearson
//! similarity, spectral clustering of local models, and per-cluster
//! federated averaging.
//!
//! Models are compared through the prototypes they produce on one shared
//! probe batch: similar models embed the probe similarly, and Pearson
//! correlation (unlike cosine) also reflects the strength of that linear
//! relationship, not just its direction.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha20Rng;

use crate::domain::{
    ClientId, ClusterAssignment, ParameterVector, Prototype, RoundIndex, SimilarityMatrix,
};
use crate::error::Error;
use crate::linalg;
use crate::rng;
use crate::trainer::{self, ModelArchitecture};

/// Fixed probe batch: ψ same-class feature vectors drawn from the
/// aggregation client's local data and reused every round.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSet {
    inputs: Vec<Vec<f64>>,
    pub label: usize,
}

impl ProbeSet {
    pub fn new(inputs: Vec<Vec<f64>>, label: usize) -> Result<Self, Error> {
        let first = inputs.first().ok_or(Error::EmptyInput { context: "probe set" })?;
        let dim = first.len();
        if inputs.iter().any(|row| row.len() != dim) {
            return Err(Error::ShapeMismatch {
                context: "probe rows",
                expected: dim,
                actual: inputs.iter().map(Vec::len).find(|&l| l != dim).unwrap_or(dim),
            });
        }
        Ok(ProbeSet { inputs, label })
    }

    pub fn psi(&self) -> usize {
        self.inputs.len()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }
}

/// Spectral clustering settings. `k` is the cluster count; the remaining
/// knobs control the k-means stage and the eigensolver stopping rule.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralConfig {
    pub k: usize,
    pub kmeans_restarts: usize,
    pub kmeans_max_iters: usize,
    pub eigen_tolerance: f64,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        SpectralConfig {
            k: 2,
            kmeans_restarts: 10,
            kmeans_max_iters: 100,
            eigen_tolerance: 1e-10,
        }
    }
}

impl SpectralConfig {
    pub fn validate(&self, m: usize) -> Result<(), Error> {
        if self.k < 2 || self.k > m {
            return Err(Error::Config(alloc::format!(
                "cluster count k={} must satisfy 2 <= k <= {m}",
                self.k
            )));
        }
        if self.kmeans_restarts == 0 || self.kmeans_max_iters == 0 {
            return Err(Error::Config(String::from(
                "kmeans_restarts and kmeans_max_iters must be positive",
            )));
        }
        if !(self.eigen_tolerance > 0.0) {
            return Err(Error::Config(String::from("eigen_tolerance must be positive")));
        }
        Ok(())
    }
}

const JACOBI_MAX_SWEEPS: usize = 100;

/// Elementwise mean of the probe embeddings under one local model (the
/// model's sampled prototype).
pub fn extract_prototype(
    model: &ParameterVector,
    arch: &ModelArchitecture,
    probe: &ProbeSet,
    source_client: ClientId,
    round: RoundIndex,
) -> Result<Prototype, Error> {
    let embeddings = trainer::embed(model, arch, probe.inputs())?;
    let rows: Vec<&[f64]> = embeddings.iter().map(Vec::as_slice).collect();
    let mean = linalg::mean_of_rows(&rows).expect("probe set is non-empty");
    Prototype::new(mean, source_client, round, probe.label)
}

/// Pearson correlation with population statistics (divide by D), clamped to
/// [-1, 1]. The denominator is computed as `sqrt(var_a * var_b)` so that
/// self-correlation is exactly 1.0. Constant vectors yield
/// [`Error::DegenerateSimilarity`]; callers substitute 0.0.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64, Error> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch {
            context: "pearson operands",
            expected: a.len(),
            actual: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::ShapeMismatch {
            context: "pearson dimension",
            expected: 2,
            actual: a.len(),
        });
    }
    let d = a.len() as f64;
    let mean_a: f64 = a.iter().sum::<f64>() / d;
    let mean_b: f64 = b.iter().sum::<f64>() / d;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for (x, y) in a.iter().zip(b) {
        let da = x - mean_a;
        let db = y - mean_b;
        cov += da * db;
        var_a += da * da;
        var_b += db * db;
    }
    cov /= d;
    var_a /= d;
    var_b /= d;
    let denom = libm::sqrt(var_a * var_b);
    if var_a == 0.0 || var_b == 0.0 || denom == 0.0 {
        return Err(Error::DegenerateSimilarity { i: 0, j: 0 });
    }
    Ok((cov / denom).clamp(-1.0, 1.0))
}

/// A prototype pair whose correlation was undefined (constant vector) and
/// was therefore recorded as 0.0 — no evidence of similarity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DegeneratePair {
    pub i: usize,
    pub j: usize,
}

/// Pearson matrix over the round's prototypes: each pair computed once and
/// mirrored, diagonal set to exactly 1.0. Degenerate pairs are replaced by
/// 0.0 and reported alongside the matrix.
pub fn similarity_matrix(
    prototypes: &[Prototype],
) -> Result<(SimilarityMatrix, Vec<DegeneratePair>), Error> {
    let m = prototypes.len();
    if m < 2 {
        return Err(Error::ShapeMismatch {
            context: "similarity matrix prototypes",
            expected: 2,
            actual: m,
        });
    }
    let mut entries = vec![0.0; m * m];
    let mut degenerate = Vec::new();
    for i in 0..m {
        entries[i * m + i] = 1.0;
        for j in i + 1..m {
            let value = match pearson(prototypes[i].values(), prototypes[j].values()) {
                Ok(v) => v,
                Err(Error::DegenerateSimilarity { .. }) => {
                    degenerate.push(DegeneratePair { i, j });
                    0.0
                }
                Err(other) => return Err(other),
            };
            entries[i * m + j] = value;
            entries[j * m + i] = value;
        }
    }
    Ok((SimilarityMatrix::new(m, entries)?, degenerate))
}

/// Clusters the round's models from their similarity matrix.
///
/// Pipeline: map correlations to non-negative affinities `(s+1)/2`, build
/// the normalized symmetric Laplacian, take the eigenvectors of the k
/// smallest eigenvalues (cyclic Jacobi), l2-normalize the rows of that
/// embedding, then run seeded k-means++ keeping the best of
/// `kmeans_restarts` restarts by within-cluster sum of squares.
pub fn spectral_cluster(
    similarity: &SimilarityMatrix,
    cfg: &SpectralConfig,
    seed: u64,
    participants: &[ClientId],
) -> Result<ClusterAssignment, Error> {
    let m = similarity.size();
    if participants.len() != m {
        return Err(Error::ShapeMismatch {
            context: "spectral participants",
            expected: m,
            actual: participants.len(),
        });
    }
    cfg.validate(m)?;

    // Affinity: affine map of Pearson onto [0, 1]; self-affinity 1.
    let mut affinity = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            affinity[i * m + j] = if i == j {
                1.0
            } else {
                (similarity.get(i, j) + 1.0) / 2.0
            };
        }
    }

    // Normalized symmetric Laplacian L = I - D^{-1/2} A D^{-1/2}.
    // Degrees are >= 1 because self-affinity is 1.
    let inv_sqrt_degree: Vec<f64> = (0..m)
        .map(|i| {
            let d: f64 = (0..m).map(|j| affinity[i * m + j]).sum();
            1.0 / libm::sqrt(d)
        })
        .collect();
    let mut laplacian = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            let identity = if i == j { 1.0 } else { 0.0 };
            laplacian[i * m + j] =
                identity - inv_sqrt_degree[i] * affinity[i * m + j] * inv_sqrt_degree[j];
        }
    }

    let eigen = linalg::jacobi_eigen_sym(&laplacian, m, cfg.eigen_tolerance, JACOBI_MAX_SWEEPS);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eigen.values[a].total_cmp(&eigen.values[b]).then(a.cmp(&b)));

    // Spectral embedding: rows are clients, columns the k bottom eigenvectors.
    let mut points: Vec<Vec<f64>> = Vec::with_capacity(m);
    for i in 0..m {
        let mut row: Vec<f64> = order[..cfg.k]
            .iter()
            .map(|&col| eigen.vector_component(i, col))
            .collect();
        let norm = libm::sqrt(row.iter().map(|v| v * v).sum());
        if norm > 0.0 {
            for v in &mut row {
                *v /= norm;
            }
        }
        points.push(row);
    }

    let labels = kmeans_best_of(&points, cfg, seed);
    ClusterAssignment::new(labels, cfg.k, participants)
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn kmeans_best_of(points: &[Vec<f64>], cfg: &SpectralConfig, seed: u64) -> Vec<usize> {
    let mut best: Option<(f64, Vec<usize>)> = None;
    for restart in 0..cfg.kmeans_restarts {
        let mut stream = rng::stream(seed, "kmeans-restart", &[restart as u64]);
        let (wcss, labels) = lloyd(points, cfg.k, cfg.kmeans_max_iters, &mut stream);
        let better = match &best {
            None => true,
            Some((best_wcss, _)) => wcss < *best_wcss,
        };
        if better {
            best = Some((wcss, labels));
        }
    }
    best.expect("at least one restart").1
}

/// k-means++ seeding: first center uniform, each next center sampled with
/// probability proportional to squared distance from the chosen set.
fn kmeans_pp_init(points: &[Vec<f64>], k: usize, rng: &mut ChaCha20Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen: Vec<usize> = vec![rng.gen_range(0..n)];
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| squared_distance(p, &points[chosen[0]]))
        .collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (ix, &w) in d2.iter().enumerate() {
                if target < w {
                    pick = ix;
                    break;
                }
                target -= w;
            }
            pick
        } else {
            // All remaining points coincide with a center; take the lowest
            // index not used yet so seeding stays deterministic.
            (0..n).find(|ix| !chosen.contains(ix)).unwrap_or(0)
        };
        chosen.push(next);
        for (ix, p) in points.iter().enumerate() {
            let dist = squared_distance(p, &points[next]);
            if dist < d2[ix] {
                d2[ix] = dist;
            }
        }
    }
    chosen.into_iter().map(|ix| points[ix].clone()).collect()
}

fn lloyd(
    points: &[Vec<f64>],
    k: usize,
    max_iters: usize,
    rng: &mut ChaCha20Rng,
) -> (f64, Vec<usize>) {
    let n = points.len();
    let dim = points[0].len();
    let mut centers = kmeans_pp_init(points, k, rng);
    let mut labels = vec![0usize; n];

    for _ in 0..max_iters {
        let mut changed = false;
        for (ix, p) in points.iter().enumerate() {
            let mut best = 0usize;
            let mut best_d = squared_distance(p, &centers[0]);
            for (c, center) in centers.iter().enumerate().skip(1) {
                let d = squared_distance(p, center);
                if d < best_d {
                    best = c;
                    best_d = d;
                }
            }
            if labels[ix] != best {
                labels[ix] = best;
                changed = true;
            }
        }

        repair_empty_clusters(points, &centers, &mut labels, k);

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (ix, p) in points.iter().enumerate() {
            counts[labels[ix]] += 1;
            for (s, v) in sums[labels[ix]].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for s in &mut sums[c] {
                    *s /= counts[c] as f64;
                }
                centers[c] = core::mem::take(&mut sums[c]);
            }
        }

        if !changed {
            break;
        }
    }

    let wcss: f64 = points
        .iter()
        .zip(&labels)
        .map(|(p, &l)| squared_distance(p, &centers[l]))
        .sum();
    (wcss, labels)
}

/// Gives every empty cluster the point currently farthest from its own
/// center, never draining a singleton donor.
fn repair_empty_clusters(points: &[Vec<f64>], centers: &[Vec<f64>], labels: &mut [usize], k: usize) {
    loop {
        let mut counts = vec![0usize; k];
        for &l in labels.iter() {
            counts[l] += 1;
        }
        let empty = match (0..k).find(|&c| counts[c] == 0) {
            Some(c) => c,
            None => return,
        };
        let donor_point = points
            .iter()
            .enumerate()
            .filter(|(ix, _)| counts[labels[*ix]] > 1)
            .map(|(ix, p)| (ix, squared_distance(p, &centers[labels[ix]])))
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(b.0.cmp(&a.0)))
            .map(|(ix, _)| ix)
            .expect("k <= n leaves a donatable point");
        labels[donor_point] = empty;
    }
}

/// Per-cluster unweighted federated average; a singleton cluster keeps its
/// model bit-exactly. Output order follows cluster indices.
pub fn aggregate_clusters(
    models: &[ParameterVector],
    assignment: &ClusterAssignment,
    participants: &[ClientId],
) -> Result<Vec<ParameterVector>, Error> {
    aggregate_clusters_impl(models, assignment, participants, None)
}

/// Weighted variant (weights typically per-client data sizes), offered as a
/// configuration alternative to the default uniform average.
pub fn aggregate_clusters_weighted(
    models: &[ParameterVector],
    assignment: &ClusterAssignment,
    participants: &[ClientId],
    weights: &[f64],
) -> Result<Vec<ParameterVector>, Error> {
    if weights.len() != models.len() {
        return Err(Error::ShapeMismatch {
            context: "aggregation weights",
            expected: models.len(),
            actual: weights.len(),
        });
    }
    aggregate_clusters_impl(models, assignment, participants, Some(weights))
}

fn aggregate_clusters_impl(
    models: &[ParameterVector],
    assignment: &ClusterAssignment,
    participants: &[ClientId],
    weights: Option<&[f64]>,
) -> Result<Vec<ParameterVector>, Error> {
    if models.len() != assignment.labels().len() {
        return Err(Error::ShapeMismatch {
            context: "models vs cluster labels",
            expected: assignment.labels().len(),
            actual: models.len(),
        });
    }
    let position_of = |client: ClientId| -> Result<usize, Error> {
        participants
            .iter()
            .position(|&c| c == client)
            .ok_or(Error::UnknownClient { client: client.0 })
    };

    let mut aggregates = Vec::with_capacity(assignment.k());
    for cluster in 0..assignment.k() {
        let members = assignment.members(cluster);
        if members.is_empty() {
            return Err(Error::EmptyInput {
                context: "cluster aggregation",
            });
        }
        if members.len() == 1 {
            aggregates.push(models[position_of(members[0])?].clone());
            continue;
        }
        let first = position_of(members[0])?;
        let len = models[first].len();
        let mut sum = vec![0.0; len];
        let mut weight_total = 0.0;
        for &member in members {
            let pos = position_of(member)?;
            let model = &models[pos];
            if model.len() != len {
                return Err(Error::ShapeMismatch {
                    context: "cluster member parameters",
                    expected: len,
                    actual: model.len(),
                });
            }
            let w = weights.map(|ws| ws[pos]).unwrap_or(1.0);
            weight_total += w;
            for (s, v) in sum.iter_mut().zip(model.values()) {
                *s += w * v;
            }
        }
        if weight_total <= 0.0 {
            return Err(Error::Config(String::from(
                "aggregation weights must have positive total",
            )));
        }
        for s in &mut sum {
            *s /= weight_total;
        }
        aggregates.push(ParameterVector::new(sum, models[first].layout_arc())?);
    }
    Ok(aggregates)
}
