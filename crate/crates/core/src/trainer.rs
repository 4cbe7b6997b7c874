//! Local supervised training: a small feed-forward network split into a
//! representation stack and a decision head, trained by mini-batch SGD on
//! cross-entropy. The representation output feeds prototype extraction.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::data::DatasetView;
use crate::domain::{ClientId, LayerLayout, LayerRole, LayerSpan, ParameterVector, RoundIndex};
use crate::error::Error;
use crate::rng;

/// Rectifier MLP: `input -> hidden_dims (ReLU each) -> classes (linear)`.
/// The output of the last hidden layer is the representation; the final
/// linear layer is the decision head. Identical across all clients.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelArchitecture {
    input_dim: usize,
    hidden_dims: Vec<usize>,
    classes: usize,
    layout: Arc<LayerLayout>,
}

impl ModelArchitecture {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, classes: usize) -> Result<Self, Error> {
        if input_dim == 0 || classes < 2 || hidden_dims.is_empty() {
            return Err(Error::Config(String::from(
                "architecture needs input_dim > 0, at least one hidden layer, and classes >= 2",
            )));
        }
        if hidden_dims.iter().any(|&d| d == 0) {
            return Err(Error::Config(String::from("hidden layer widths must be positive")));
        }
        let mut spans = Vec::new();
        let mut offset = 0;
        let dims: Vec<usize> = core::iter::once(input_dim)
            .chain(hidden_dims.iter().copied())
            .chain(core::iter::once(classes))
            .collect();
        for layer in 0..dims.len() - 1 {
            let role = if layer + 2 == dims.len() {
                LayerRole::DecisionHead
            } else {
                LayerRole::Representation
            };
            let w_len = dims[layer + 1] * dims[layer];
            spans.push(LayerSpan {
                name: format!("w{layer}"),
                offset,
                len: w_len,
                role,
            });
            offset += w_len;
            spans.push(LayerSpan {
                name: format!("b{layer}"),
                offset,
                len: dims[layer + 1],
                role,
            });
            offset += dims[layer + 1];
        }
        Ok(ModelArchitecture {
            input_dim,
            hidden_dims,
            classes,
            layout: Arc::new(LayerLayout::new(spans).expect("offsets built contiguously")),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    /// Output dimension of the representation stack (last hidden width).
    pub fn repr_dim(&self) -> usize {
        *self.hidden_dims.last().expect("validated non-empty")
    }

    pub fn layout(&self) -> Arc<LayerLayout> {
        Arc::clone(&self.layout)
    }

    pub fn param_count(&self) -> usize {
        self.layout.total_len()
    }

    fn dims(&self) -> Vec<usize> {
        core::iter::once(self.input_dim)
            .chain(self.hidden_dims.iter().copied())
            .chain(core::iter::once(self.classes))
            .collect()
    }

    fn layer_count(&self) -> usize {
        self.hidden_dims.len() + 1
    }

    fn weight_offset(&self, layer: usize) -> usize {
        self.layout.spans()[2 * layer].offset
    }

    fn bias_offset(&self, layer: usize) -> usize {
        self.layout.spans()[2 * layer + 1].offset
    }
}

/// Local SGD settings. Defaults: batch 64, learning rate 0.001, 5 epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub local_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            learning_rate: 0.001,
            local_epochs: 5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if self.batch_size == 0 {
            return Err(Error::Config(String::from("batch_size must be positive")));
        }
        if !(self.learning_rate >= 0.0) {
            return Err(Error::Config(String::from("learning_rate must be non-negative")));
        }
        Ok(())
    }
}

/// Client-specific initialization: uniform in `[-1/sqrt(fan_in), +1/sqrt(fan_in)]`
/// per layer, drawn from a stream derived from `(seed, client)`.
pub fn init_params(arch: &ModelArchitecture, seed: u64, client: ClientId) -> ParameterVector {
    let mut rng = rng::stream(seed, "init", &[u64::from(client.0)]);
    let dims = arch.dims();
    let mut values = Vec::with_capacity(arch.param_count());
    for layer in 0..arch.layer_count() {
        let fan_in = dims[layer];
        let bound = 1.0 / libm::sqrt(fan_in as f64);
        let count = dims[layer + 1] * dims[layer] + dims[layer + 1];
        for _ in 0..count {
            values.push(rng.gen_range(-bound..bound));
        }
    }
    ParameterVector::new(values, arch.layout()).expect("finite by construction")
}

fn check_compat(
    params: &ParameterVector,
    arch: &ModelArchitecture,
    view: Option<&DatasetView<'_>>,
) -> Result<(), Error> {
    if params.len() != arch.param_count() {
        return Err(Error::ShapeMismatch {
            context: "parameters vs architecture",
            expected: arch.param_count(),
            actual: params.len(),
        });
    }
    if let Some(view) = view {
        if view.dataset.feature_dim() != arch.input_dim {
            return Err(Error::ShapeMismatch {
                context: "dataset features vs architecture input",
                expected: arch.input_dim,
                actual: view.dataset.feature_dim(),
            });
        }
        if view.dataset.classes() > arch.classes {
            return Err(Error::ShapeMismatch {
                context: "dataset classes vs decision head",
                expected: arch.classes,
                actual: view.dataset.classes(),
            });
        }
    }
    Ok(())
}

/// Dense layer: `out = W x + b` with `W` row-major (out×in).
fn affine(w: &[f64], params_w: usize, params_b: usize, x: &[f64], out_dim: usize) -> Vec<f64> {
    let in_dim = x.len();
    let mut out = Vec::with_capacity(out_dim);
    for o in 0..out_dim {
        let row = &w[params_w + o * in_dim..params_w + (o + 1) * in_dim];
        let mut acc = w[params_b + o];
        for (wi, xi) in row.iter().zip(x) {
            acc += wi * xi;
        }
        out.push(acc);
    }
    out
}

/// Forward pass recording post-activation of every layer (input included).
/// The last entry holds the logits (no rectifier on the head).
fn forward_cache(w: &[f64], arch: &ModelArchitecture, x: &[f64]) -> Vec<Vec<f64>> {
    let dims = arch.dims();
    let mut activations = Vec::with_capacity(arch.layer_count() + 1);
    activations.push(x.to_vec());
    for layer in 0..arch.layer_count() {
        let z = affine(
            w,
            arch.weight_offset(layer),
            arch.bias_offset(layer),
            activations.last().expect("seeded with input"),
            dims[layer + 1],
        );
        let a = if layer + 1 == arch.layer_count() {
            z
        } else {
            z.into_iter().map(|v| if v > 0.0 { v } else { 0.0 }).collect()
        };
        activations.push(a);
    }
    activations
}

/// Softmax cross-entropy of one sample; returns (loss, dloss/dlogits).
fn softmax_cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| if v > m { v } else { m });
    let exps: Vec<f64> = logits.iter().map(|&v| libm::exp(v - max)).collect();
    let z: f64 = exps.iter().sum();
    let loss = libm::log(z) + max - logits[label];
    let mut grad: Vec<f64> = exps.iter().map(|&e| e / z).collect();
    grad[label] -= 1.0;
    (loss, grad)
}

/// Mean loss and gradient over the given positions of the view.
fn loss_and_grad(
    w: &[f64],
    arch: &ModelArchitecture,
    view: DatasetView<'_>,
    positions: &[usize],
) -> (f64, Vec<f64>) {
    let dims = arch.dims();
    let scale = 1.0 / positions.len() as f64;
    let mut grad = vec![0.0; w.len()];
    let mut total_loss = 0.0;

    for &pos in positions {
        let (x, label) = view.row(pos);
        let activations = forward_cache(w, arch, x);
        let (loss, dlogits) = softmax_cross_entropy(activations.last().expect("logits"), label);
        total_loss += loss * scale;

        let mut dz: Vec<f64> = dlogits.iter().map(|d| d * scale).collect();
        for layer in (0..arch.layer_count()).rev() {
            let input = &activations[layer];
            let w_off = arch.weight_offset(layer);
            let b_off = arch.bias_offset(layer);
            let in_dim = dims[layer];
            for (o, &d) in dz.iter().enumerate() {
                grad[b_off + o] += d;
                let row = &mut grad[w_off + o * in_dim..w_off + (o + 1) * in_dim];
                for (g, xi) in row.iter_mut().zip(input) {
                    *g += d * xi;
                }
            }
            if layer > 0 {
                let mut dprev = vec![0.0; in_dim];
                for (o, &d) in dz.iter().enumerate() {
                    let row = &w[w_off + o * in_dim..w_off + (o + 1) * in_dim];
                    for (dp, wi) in dprev.iter_mut().zip(row) {
                        *dp += d * wi;
                    }
                }
                // Rectifier gate: a > 0 exactly when the pre-activation was.
                for (dp, &a) in dprev.iter_mut().zip(input) {
                    if a <= 0.0 {
                        *dp = 0.0;
                    }
                }
                dz = dprev;
            }
        }
    }
    (total_loss, grad)
}

/// Runs `local_epochs` of mini-batch SGD on cross-entropy and returns the
/// updated parameters; the input is untouched. Batch order is derived
/// deterministically from `(cfg.seed, client, round)`.
pub fn train_local(
    params: &ParameterVector,
    arch: &ModelArchitecture,
    view: DatasetView<'_>,
    cfg: &TrainConfig,
    client: ClientId,
    round: RoundIndex,
) -> Result<ParameterVector, Error> {
    check_compat(params, arch, Some(&view))?;
    cfg.validate()?;
    if view.is_empty() {
        return Err(Error::EmptyInput {
            context: "local training data",
        });
    }

    let mut order_rng = rng::stream(
        cfg.seed,
        "train-order",
        &[u64::from(client.0), u64::from(round.0)],
    );
    let mut w = params.values().to_vec();
    let mut order: Vec<usize> = (0..view.len()).collect();

    for _ in 0..cfg.local_epochs {
        use rand::seq::SliceRandom;
        order.shuffle(&mut order_rng);
        for batch in order.chunks(cfg.batch_size) {
            let (loss, grad) = loss_and_grad(&w, arch, view, batch);
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    round: round.0,
                    client: client.0,
                });
            }
            for (wi, gi) in w.iter_mut().zip(&grad) {
                let step = cfg.learning_rate * gi;
                // Skipping exact-zero steps keeps bit patterns intact when
                // the learning rate is 0.
                if step != 0.0 {
                    *wi -= step;
                }
            }
        }
    }
    ParameterVector::new(w, params.layout_arc())
}

/// Forward pass through the representation stack only (stops before the
/// decision head); returns the D-dimensional embedding.
pub fn embed_one(
    params: &ParameterVector,
    arch: &ModelArchitecture,
    x: &[f64],
) -> Result<Vec<f64>, Error> {
    check_compat(params, arch, None)?;
    if x.len() != arch.input_dim {
        return Err(Error::ShapeMismatch {
            context: "embed input",
            expected: arch.input_dim,
            actual: x.len(),
        });
    }
    let dims = arch.dims();
    let w = params.values();
    let mut a = x.to_vec();
    for layer in 0..arch.layer_count() - 1 {
        a = affine(
            w,
            arch.weight_offset(layer),
            arch.bias_offset(layer),
            &a,
            dims[layer + 1],
        )
        .into_iter()
        .map(|v| if v > 0.0 { v } else { 0.0 })
        .collect();
    }
    Ok(a)
}

/// Embeds a batch of feature vectors row by row.
pub fn embed(
    params: &ParameterVector,
    arch: &ModelArchitecture,
    inputs: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>, Error> {
    inputs.iter().map(|x| embed_one(params, arch, x)).collect()
}

/// Logits of one sample (full forward pass).
pub fn logits(
    params: &ParameterVector,
    arch: &ModelArchitecture,
    x: &[f64],
) -> Result<Vec<f64>, Error> {
    check_compat(params, arch, None)?;
    if x.len() != arch.input_dim {
        return Err(Error::ShapeMismatch {
            context: "logits input",
            expected: arch.input_dim,
            actual: x.len(),
        });
    }
    Ok(forward_cache(params.values(), arch, x)
        .pop()
        .expect("forward produces logits"))
}

/// Fraction of argmax-correct predictions; logit ties break toward the
/// lowest class index.
pub fn evaluate(
    params: &ParameterVector,
    arch: &ModelArchitecture,
    view: DatasetView<'_>,
) -> Result<f64, Error> {
    check_compat(params, arch, Some(&view))?;
    if view.is_empty() {
        return Err(Error::EmptyInput {
            context: "evaluation data",
        });
    }
    let w = params.values();
    let mut correct = 0usize;
    for pos in 0..view.len() {
        let (x, label) = view.row(pos);
        let logits = forward_cache(w, arch, x).pop().expect("logits");
        let mut best = 0usize;
        for (i, &v) in logits.iter().enumerate() {
            if v > logits[best] {
                best = i;
            }
        }
        if best == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / view.len() as f64)
}

/// Mean cross-entropy loss over the whole view.
pub fn mean_loss(
    params: &ParameterVector,
    arch: &ModelArchitecture,
    view: DatasetView<'_>,
) -> Result<f64, Error> {
    check_compat(params, arch, Some(&view))?;
    if view.is_empty() {
        return Err(Error::EmptyInput {
            context: "loss data",
        });
    }
    Ok(mean_loss_raw(params.values(), arch, view))
}

fn mean_loss_raw(w: &[f64], arch: &ModelArchitecture, view: DatasetView<'_>) -> f64 {
    let mut total = 0.0;
    for pos in 0..view.len() {
        let (x, label) = view.row(pos);
        let logits = forward_cache(w, arch, x);
        let (loss, _) = softmax_cross_entropy(logits.last().expect("logits"), label);
        total += loss;
    }
    total / view.len() as f64
}

/// Analytic gradient of the mean loss over the whole view.
pub fn analytic_gradient(
    params: &ParameterVector,
    arch: &ModelArchitecture,
    view: DatasetView<'_>,
) -> Result<Vec<f64>, Error> {
    check_compat(params, arch, Some(&view))?;
    if view.is_empty() {
        return Err(Error::EmptyInput {
            context: "gradient data",
        });
    }
    let positions: Vec<usize> = (0..view.len()).collect();
    Ok(loss_and_grad(params.values(), arch, view, &positions).1)
}

/// Central-difference partial derivative of the mean loss at one coordinate.
pub fn numeric_partial(
    params: &ParameterVector,
    arch: &ModelArchitecture,
    view: DatasetView<'_>,
    coord: usize,
    step: f64,
) -> Result<f64, Error> {
    check_compat(params, arch, Some(&view))?;
    let mut w = params.values().to_vec();
    let original = w[coord];
    w[coord] = original + step;
    let plus = mean_loss_raw(&w, arch, view);
    w[coord] = original - step;
    let minus = mean_loss_raw(&w, arch, view);
    Ok((plus - minus) / (2.0 * step))
}

/// Finite-difference step used by [`gradient_check`].
pub const GRADIENT_CHECK_STEP: f64 = 1e-5;
/// Number of randomly probed coordinates in [`gradient_check`].
pub const GRADIENT_CHECK_COORDS: usize = 50;
/// Denominator floor guarding the relative error against near-zero gradients.
pub const GRADIENT_CHECK_FLOOR: f64 = 1e-4;

/// Guarded relative error between an analytic and a numeric derivative.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = libm::fabs(analytic)
        .max(libm::fabs(numeric))
        .max(GRADIENT_CHECK_FLOOR);
    libm::fabs(analytic - numeric) / denom
}

/// Compares backpropagation against central finite differences on 50
/// randomly chosen coordinates and returns the maximum relative error.
pub fn gradient_check(
    params: &ParameterVector,
    arch: &ModelArchitecture,
    view: DatasetView<'_>,
    seed: u64,
) -> Result<f64, Error> {
    let grad = analytic_gradient(params, arch, view)?;
    let mut rng = rng::stream(seed, "gradcheck", &[]);
    let coords: Vec<usize> = if grad.len() <= GRADIENT_CHECK_COORDS {
        (0..grad.len()).collect()
    } else {
        rand::seq::index::sample(&mut rng, grad.len(), GRADIENT_CHECK_COORDS).into_vec()
    };
    let mut worst = 0.0f64;
    for coord in coords {
        let numeric = numeric_partial(params, arch, view, coord, GRADIENT_CHECK_STEP)?;
        worst = worst.max(relative_error(grad[coord], numeric));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, Dataset, DatasetView};

    fn small_arch() -> ModelArchitecture {
        ModelArchitecture::new(4, vec![8, 6], 3).unwrap()
    }

    fn full_view(d: &Dataset) -> (Vec<usize>, ModelArchitecture) {
        let idx: Vec<usize> = (0..d.len()).collect();
        (idx, small_arch())
    }

    #[test]
    fn layout_marks_head_and_repr() {
        let arch = small_arch();
        let spans = arch.layout();
        let spans = spans.spans();
        assert_eq!(spans.len(), 6);
        assert!(spans[..4]
            .iter()
            .all(|s| s.role == LayerRole::Representation));
        assert!(spans[4..].iter().all(|s| s.role == LayerRole::DecisionHead));
        assert_eq!(arch.param_count(), 4 * 8 + 8 + 8 * 6 + 6 + 6 * 3 + 3);
        assert_eq!(arch.repr_dim(), 6);
    }

    #[test]
    fn zero_learning_rate_is_identity_bit_exact() {
        let d = generate_synthetic(0, 3, 4, 30, 3.0).unwrap();
        let (idx, arch) = full_view(&d);
        let view = DatasetView {
            dataset: &d,
            indices: &idx,
        };
        let p0 = init_params(&arch, 1, ClientId(0));
        let cfg = TrainConfig {
            learning_rate: 0.0,
            batch_size: 8,
            local_epochs: 3,
            seed: 5,
        };
        let p1 = train_local(&p0, &arch, view, &cfg, ClientId(0), RoundIndex(0)).unwrap();
        for (a, b) in p0.values().iter().zip(p1.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn training_is_deterministic() {
        let d = generate_synthetic(2, 3, 4, 40, 3.0).unwrap();
        let (idx, arch) = full_view(&d);
        let view = DatasetView {
            dataset: &d,
            indices: &idx,
        };
        let p0 = init_params(&arch, 1, ClientId(3));
        let cfg = TrainConfig {
            batch_size: 8,
            learning_rate: 0.05,
            local_epochs: 2,
            seed: 9,
        };
        let a = train_local(&p0, &arch, view, &cfg, ClientId(3), RoundIndex(1)).unwrap();
        let b = train_local(&p0, &arch, view, &cfg, ClientId(3), RoundIndex(1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn separable_data_reaches_high_training_accuracy() {
        // Frozen oracle: well-separated 2-class mixture, 50 epochs of the
        // reference loop fits the training set.
        let d = generate_synthetic(4, 2, 8, 50, 6.0).unwrap();
        let idx: Vec<usize> = (0..d.len()).collect();
        let arch = ModelArchitecture::new(8, vec![16, 8], 2).unwrap();
        let view = DatasetView {
            dataset: &d,
            indices: &idx,
        };
        let p0 = init_params(&arch, 0, ClientId(0));
        let cfg = TrainConfig {
            batch_size: 16,
            learning_rate: 0.1,
            local_epochs: 50,
            seed: 0,
        };
        let trained = train_local(&p0, &arch, view, &cfg, ClientId(0), RoundIndex(0)).unwrap();
        let acc = evaluate(&trained, &arch, view).unwrap();
        assert!(acc >= 0.95, "training accuracy {acc} below 0.95");
    }

    #[test]
    fn empty_training_data_is_an_error() {
        let d = generate_synthetic(0, 2, 4, 10, 3.0).unwrap();
        let arch = ModelArchitecture::new(4, vec![8], 2).unwrap();
        let p0 = init_params(&arch, 0, ClientId(0));
        let view = DatasetView {
            dataset: &d,
            indices: &[],
        };
        assert!(matches!(
            train_local(
                &p0,
                &arch,
                view,
                &TrainConfig::default(),
                ClientId(0),
                RoundIndex(0)
            ),
            Err(Error::EmptyInput { .. })
        ));
        assert!(matches!(
            evaluate(&p0, &arch, view),
            Err(Error::EmptyInput { .. })
        ));
    }

    #[test]
    fn embed_shapes_and_zero_weights() {
        let d = generate_synthetic(0, 3, 4, 5, 3.0).unwrap();
        let arch = small_arch();
        let p0 = init_params(&arch, 0, ClientId(0));
        let e = embed_one(&p0, &arch, d.row(0)).unwrap();
        assert_eq!(e.len(), arch.repr_dim());

        // Duplicated input row produces a duplicated output row.
        let batch = vec![d.row(1).to_vec(), d.row(1).to_vec()];
        let out = embed(&p0, &arch, &batch).unwrap();
        assert_eq!(out[0], out[1]);

        // All-zero weights embed everything to zero.
        let zeros =
            ParameterVector::new(vec![0.0; arch.param_count()], arch.layout()).unwrap();
        let z = embed_one(&zeros, &arch, d.row(2)).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));

        // Dimension mismatch is a shape error.
        assert!(matches!(
            embed_one(&p0, &arch, &[1.0, 2.0]),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn constant_logits_on_balanced_data_score_half() {
        let d = generate_synthetic(0, 2, 4, 50, 3.0).unwrap();
        let arch = ModelArchitecture::new(4, vec![8], 2).unwrap();
        let zeros =
            ParameterVector::new(vec![0.0; arch.param_count()], arch.layout()).unwrap();
        let idx: Vec<usize> = (0..d.len()).collect();
        let view = DatasetView {
            dataset: &d,
            indices: &idx,
        };
        // All logits equal: ties break to class 0, which holds half the data.
        assert_eq!(evaluate(&zeros, &arch, view).unwrap(), 0.5);
    }

    #[test]
    fn gradient_check_passes_for_correct_backprop() {
        let d = generate_synthetic(5, 3, 4, 8, 2.0).unwrap();
        let idx: Vec<usize> = (0..8).collect();
        let arch = small_arch();
        let view = DatasetView {
            dataset: &d,
            indices: &idx,
        };
        let p = init_params(&arch, 2, ClientId(1));
        let err = gradient_check(&p, &arch, view, 0).unwrap();
        assert!(err < 1e-4, "gradient check error {err}");
    }

    #[test]
    fn corrupted_gradient_is_detected() {
        let d = generate_synthetic(5, 3, 4, 8, 2.0).unwrap();
        let idx: Vec<usize> = (0..8).collect();
        let arch = small_arch();
        let view = DatasetView {
            dataset: &d,
            indices: &idx,
        };
        let p = init_params(&arch, 2, ClientId(1));
        let grad = analytic_gradient(&p, &arch, view).unwrap();
        let coord = grad
            .iter()
            .enumerate()
            .max_by(|a, b| libm::fabs(*a.1).partial_cmp(&libm::fabs(*b.1)).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        let numeric = numeric_partial(&p, &arch, view, coord, GRADIENT_CHECK_STEP).unwrap();
        let corrupted = -grad[coord];
        assert!(relative_error(corrupted, numeric) > 1e-1);
    }

    #[test]
    fn constant_loss_has_vanishing_gradient() {
        // Zero inputs, zero weights, balanced labels: the mean gradient is
        // exactly zero and finite differences agree within 1e-8.
        let d = Dataset::new(vec![0.0; 8], vec![0, 1], 4, 2).unwrap();
        let arch = ModelArchitecture::new(4, vec![3], 2).unwrap();
        let p = ParameterVector::new(vec![0.0; arch.param_count()], arch.layout()).unwrap();
        let idx = [0usize, 1];
        let view = DatasetView {
            dataset: &d,
            indices: &idx,
        };
        let grad = analytic_gradient(&p, &arch, view).unwrap();
        assert!(grad.iter().all(|g| libm::fabs(*g) < 1e-12));
        for coord in 0..arch.param_count() {
            let numeric = numeric_partial(&p, &arch, view, coord, GRADIENT_CHECK_STEP).unwrap();
            assert!(libm::fabs(numeric) < 1e-8);
        }
    }

    #[test]
    fn loss_decreases_on_most_runs() {
        // Statistical: after local_epochs the training loss is at most the
        // starting loss on at least 90% of (seed, client) pairs.
        let mut improved = 0;
        let mut total = 0;
        for seed in 0..3u64 {
            let d = generate_synthetic(seed, 3, 6, 60, 3.0).unwrap();
            let idx: Vec<usize> = (0..d.len()).collect();
            let arch = ModelArchitecture::new(6, vec![12, 8], 3).unwrap();
            let view = DatasetView {
                dataset: &d,
                indices: &idx,
            };
            for client in 0..4u32 {
                let p0 = init_params(&arch, seed, ClientId(client));
                let cfg = TrainConfig {
                    batch_size: 16,
                    learning_rate: 0.01,
                    local_epochs: 5,
                    seed,
                };
                let before = mean_loss(&p0, &arch, view).unwrap();
                let p1 =
                    train_local(&p0, &arch, view, &cfg, ClientId(client), RoundIndex(0)).unwrap();
                let after = mean_loss(&p1, &arch, view).unwrap();
                total += 1;
                if after <= before {
                    improved += 1;
                }
            }
        }
        assert!(
            improved as f64 / total as f64 >= 0.9,
            "loss improved on only {improved}/{total} runs"
        );
    }
}
