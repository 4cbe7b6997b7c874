//! Dataset generation and label-skewed partitioning across clients.
//!
//! Label skew follows the standard Dirichlet protocol: for every class, the
//! share of that class's samples each client receives is drawn from a
//! symmetric Dirichlet whose concentration is the `skew` parameter. Small
//! concentrations produce extreme skew, large ones approach IID.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::Error;
use crate::rng;

/// Fraction of each client's samples held out for personalized evaluation,
/// fixed at partitioning time.
pub const HELD_OUT_FRACTION: f64 = 0.2;

/// Feature matrix (N×Z, row-major) with integer labels in `[0, classes)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<usize>,
    feature_dim: usize,
    classes: usize,
}

impl Dataset {
    pub fn new(
        features: Vec<f64>,
        labels: Vec<usize>,
        feature_dim: usize,
        classes: usize,
    ) -> Result<Self, Error> {
        if labels.is_empty() {
            return Err(Error::EmptyInput { context: "dataset" });
        }
        if feature_dim == 0 {
            return Err(Error::Config("feature_dim must be positive".into()));
        }
        if features.len() != labels.len() * feature_dim {
            return Err(Error::ShapeMismatch {
                context: "dataset features",
                expected: labels.len() * feature_dim,
                actual: features.len(),
            });
        }
        for (index, &label) in labels.iter().enumerate() {
            if label >= classes {
                return Err(Error::LabelOutOfRange {
                    index,
                    label,
                    classes,
                });
            }
        }
        Ok(Dataset {
            features,
            labels,
            feature_dim,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.feature_dim..(i + 1) * self.feature_dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    /// Same features with every label rotated by `shift` modulo the class
    /// count, so the class-conditional feature distributions change while
    /// the feature marginal stays identical.
    pub fn with_rotated_labels(&self, shift: usize) -> Dataset {
        let labels = self
            .labels
            .iter()
            .map(|&l| (l + shift) % self.classes)
            .collect();
        Dataset {
            features: self.features.clone(),
            labels,
            feature_dim: self.feature_dim,
            classes: self.classes,
        }
    }
}

/// A client's window onto a dataset: the parent plus its index list.
#[derive(Debug, Clone, Copy)]
pub struct DatasetView<'a> {
    pub dataset: &'a Dataset,
    pub indices: &'a [usize],
}

impl<'a> DatasetView<'a> {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn row(&self, i: usize) -> (&'a [f64], usize) {
        let ix = self.indices[i];
        (self.dataset.row(ix), self.dataset.label(ix))
    }
}

/// Per-client train/held-out index lists into a parent dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    train: Vec<Vec<usize>>,
    held_out: Vec<Vec<usize>>,
    pub skew: f64,
}

impl Partition {
    pub fn clients(&self) -> usize {
        self.train.len()
    }

    pub fn train(&self, client: usize) -> &[usize] {
        &self.train[client]
    }

    pub fn held_out(&self, client: usize) -> &[usize] {
        &self.held_out[client]
    }

    /// Total samples assigned to `client` (train + held-out).
    pub fn client_len(&self, client: usize) -> usize {
        self.train[client].len() + self.held_out[client].len()
    }
}

/// Gaussian mixture with one unit-covariance component per class, component
/// means drawn deterministically from `seed` on a sphere of radius
/// `class_separation`. Samples are laid out class-major, `per_class` each.
pub fn generate_synthetic(
    seed: u64,
    classes: usize,
    dim: usize,
    per_class: usize,
    class_separation: f64,
) -> Result<Dataset, Error> {
    if classes < 2 {
        return Err(Error::Config(format!(
            "classes must be at least 2, got {classes}"
        )));
    }
    if per_class < 1 {
        return Err(Error::Config("per_class must be positive".into()));
    }
    if dim < 1 {
        return Err(Error::Config("dim must be positive".into()));
    }
    if !(class_separation >= 0.0) {
        return Err(Error::Config(format!(
            "class_separation must be non-negative, got {class_separation}"
        )));
    }

    let mut rng = rng::stream(seed, "synthetic-data", &[]);
    let mut means = Vec::with_capacity(classes);
    for _ in 0..classes {
        let raw: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = libm::sqrt(raw.iter().map(|v| v * v).sum());
        let mean: Vec<f64> = if norm > 0.0 {
            raw.iter().map(|v| v / norm * class_separation).collect()
        } else {
            let mut unit = vec![0.0; dim];
            unit[0] = class_separation;
            unit
        };
        means.push(mean);
    }

    let n = classes * per_class;
    let mut features = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for (class, mean) in means.iter().enumerate() {
        for _ in 0..per_class {
            for &m in mean {
                let noise: f64 = rng.sample(StandardNormal);
                features.push(m + noise);
            }
            labels.push(class);
        }
    }
    Dataset::new(features, labels, dim, classes)
}

/// Proportions over `clients` drawn from a symmetric Dirichlet with the
/// given concentration (normalized Gamma draws).
fn dirichlet_proportions<R: Rng>(rng: &mut R, clients: usize, concentration: f64) -> Vec<f64> {
    let gamma = Gamma::new(concentration, 1.0).expect("concentration validated positive");
    let draws: Vec<f64> = (0..clients).map(|_| gamma.sample(rng)).collect();
    let sum: f64 = draws.iter().sum();
    if sum > 0.0 && sum.is_finite() {
        draws.iter().map(|d| d / sum).collect()
    } else {
        // All draws underflowed to zero; fall back to a uniform split.
        vec![1.0 / clients as f64; clients]
    }
}

/// Splits a dataset across clients with Dirichlet label skew.
///
/// For each class, proportions are sampled and the class's (shuffled)
/// indices are carved into contiguous slices by cumulative rounding, so the
/// slice counts always sum to the class size. A repair pass then moves
/// samples from the currently largest client until every client holds at
/// least `min_samples_per_client`. Deterministic under `seed`.
pub fn partition_dirichlet(
    dataset: &Dataset,
    clients: usize,
    skew: f64,
    seed: u64,
    min_samples_per_client: usize,
) -> Result<Partition, Error> {
    if clients < 2 {
        return Err(Error::Config(format!(
            "partition needs at least 2 clients, got {clients}"
        )));
    }
    if !(skew > 0.0) {
        return Err(Error::Config(format!("skew must be positive, got {skew}")));
    }
    if min_samples_per_client < 2 {
        return Err(Error::Config(
            "min_samples_per_client must be at least 2 to leave room for a held-out split".into(),
        ));
    }
    if clients * min_samples_per_client > dataset.len() {
        return Err(Error::Config(format!(
            "infeasible partition: {clients} clients x {min_samples_per_client} min samples > {} total",
            dataset.len()
        )));
    }

    let mut rng = rng::stream(seed, "dirichlet-partition", &[]);
    let mut assigned: Vec<Vec<usize>> = vec![Vec::new(); clients];

    for class in 0..dataset.classes() {
        let mut class_indices: Vec<usize> = (0..dataset.len())
            .filter(|&i| dataset.label(i) == class)
            .collect();
        if class_indices.is_empty() {
            continue;
        }
        class_indices.shuffle(&mut rng);
        let proportions = dirichlet_proportions(&mut rng, clients, skew);

        let n_class = class_indices.len();
        let mut cumulative = 0.0;
        let mut start = 0usize;
        for (client, p) in proportions.iter().enumerate() {
            cumulative += p;
            let end = if client + 1 == clients {
                n_class
            } else {
                (libm::floor(cumulative * n_class as f64 + 0.5) as usize).min(n_class)
            };
            let end = end.max(start);
            assigned[client].extend_from_slice(&class_indices[start..end]);
            start = end;
        }
    }

    // Repair: top up starved clients from whoever currently holds the most.
    loop {
        let starved = (0..clients)
            .min_by_key(|&c| (assigned[c].len(), c))
            .expect("clients is non-zero");
        if assigned[starved].len() >= min_samples_per_client {
            break;
        }
        let donor = (0..clients)
            .max_by_key(|&c| (assigned[c].len(), core::cmp::Reverse(c)))
            .expect("clients is non-zero");
        let moved = assigned[donor].pop().expect("donor holds the maximum");
        assigned[starved].push(moved);
    }

    // Fixed 80/20 split per client, decided now so it never shifts.
    let mut train = Vec::with_capacity(clients);
    let mut held_out = Vec::with_capacity(clients);
    for list in &mut assigned {
        list.shuffle(&mut rng);
        let n = list.len();
        let h = ((libm::floor(HELD_OUT_FRACTION * n as f64 + 0.5) as usize).max(1)).min(n - 1);
        held_out.push(list.split_off(n - h));
        train.push(core::mem::take(list));
    }

    Ok(Partition {
        train,
        held_out,
        skew,
    })
}
