//! Model architectures and the training/evaluation loops that operate on
//! whole parameter vectors.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::LabeledSet;
use crate::nn::adam::AdamState;
use crate::nn::layers;
use crate::nn::loss;
use crate::rng::seed_rng;
use crate::{Error, Result, Scalar, Tensor};

/// Evaluation batch size; a chunking detail with no effect on results.
const EVAL_BATCH: usize = 256;

/// Named tensor shapes of a model's parameters, in flattening order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightLayout(Vec<(String, Vec<usize>)>);

impl WeightLayout {
    pub fn new(entries: Vec<(String, Vec<usize>)>) -> Self {
        Self(entries)
    }

    pub fn entries(&self) -> &[(String, Vec<usize>)] {
        &self.0
    }

    pub fn total_params(&self) -> usize {
        self.0.iter().map(|(_, s)| s.iter().product::<usize>()).sum()
    }

    /// Flat range `(offset, len)` of a named entry.
    pub fn range_of(&self, name: &str) -> Option<(usize, usize)> {
        let mut offset = 0;
        for (n, shape) in &self.0 {
            let len = shape.iter().product();
            if n == name {
                return Some((offset, len));
            }
            offset += len;
        }
        None
    }
}

/// Flat parameter vector plus its layout. Keeping one buffer per model lets
/// the optimizer, serialization, and weight-space analysis treat a model as a
/// single vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights<T> {
    layout: WeightLayout,
    values: Vec<T>,
}

impl<T: Scalar> ModelWeights<T> {
    pub fn zeros(layout: WeightLayout) -> Self {
        let n = layout.total_params();
        Self {
            layout,
            values: vec![T::zero(); n],
        }
    }

    pub fn from_values(layout: WeightLayout, values: Vec<T>) -> Result<Self> {
        if layout.total_params() != values.len() {
            return Err(Error::ShapeMismatch {
                context: "model weights",
                expected: vec![layout.total_params()],
                got: vec![values.len()],
            });
        }
        Ok(Self { layout, values })
    }

    pub fn layout(&self) -> &WeightLayout {
        &self.layout
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Slice of one named parameter tensor.
    pub fn view(&self, name: &str) -> Result<&[T]> {
        let (offset, len) = self.layout.range_of(name).ok_or(Error::InvalidInput {
            context: "weight view",
            detail: format!("no layout entry named {name}"),
        })?;
        Ok(&self.values[offset..offset + len])
    }

    /// Splits the flat vector into named per-layer tensors.
    pub fn to_tensors(&self) -> Vec<(String, Tensor<T>)> {
        let mut out = Vec::with_capacity(self.layout.0.len());
        let mut offset = 0;
        for (name, shape) in &self.layout.0 {
            let len: usize = shape.iter().product();
            let t = Tensor::new(shape.clone(), self.values[offset..offset + len].to_vec())
                .expect("layout shapes are consistent");
            out.push((name.clone(), t));
            offset += len;
        }
        out
    }

    /// Rebuilds the flat vector from named tensors; inverse of
    /// [`Self::to_tensors`].
    pub fn from_tensors(tensors: &[(String, Tensor<T>)]) -> Result<Self> {
        let layout = WeightLayout::new(
            tensors
                .iter()
                .map(|(n, t)| (n.clone(), t.shape().to_vec()))
                .collect(),
        );
        let mut values = Vec::with_capacity(layout.total_params());
        for (_, t) in tensors {
            values.extend_from_slice(t.data());
        }
        Self::from_values(layout, values)
    }

    fn check_layout(&self, expected: &WeightLayout, context: &'static str) -> Result<()> {
        if self.layout != *expected {
            return Err(Error::ShapeMismatch {
                context,
                expected: vec![expected.total_params()],
                got: vec![self.layout.total_params()],
            });
        }
        Ok(())
    }
}

/// Glorot-uniform bound for a parameter tensor: rank-4 shapes are conv
/// kernels `[cout,k,k,cin]`, rank-2 are dense `[din,dout]`, rank-1 biases
/// start at zero.
fn glorot_limit(shape: &[usize]) -> f64 {
    let (fan_in, fan_out) = match shape.len() {
        4 => (
            shape[1] * shape[2] * shape[3],
            shape[0] * shape[1] * shape[2],
        ),
        2 => (shape[0], shape[1]),
        _ => return 0.0,
    };
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Uniform Glorot initialization, biases zero. Draws are made in f64 in
/// layout order, so f32 and f64 instantiations see the same numbers.
fn init_glorot<T: Scalar>(layout: WeightLayout, seed: u64) -> ModelWeights<T> {
    let mut rng = seed_rng(seed);
    let mut values = Vec::with_capacity(layout.total_params());
    for (_, shape) in layout.entries() {
        let len: usize = shape.iter().product();
        let limit = glorot_limit(shape);
        if limit == 0.0 {
            values.extend(std::iter::repeat(T::zero()).take(len));
        } else {
            for _ in 0..len {
                let u: f64 = rng.gen();
                values.push(T::from64((2.0 * u - 1.0) * limit));
            }
        }
    }
    ModelWeights::from_values(layout, values).expect("layout matches generated values")
}

/// Result of a validation pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub mean_loss: f64,
    pub samples: usize,
}

/// Options for a supervised training session.
#[derive(Debug, Clone, Copy)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Seed of the epoch-shuffle stream for this session.
    pub shuffle_seed: u64,
}

/// Convolutional classifier that circulates between nodes:
/// conv(f1,kxk) -> relu -> maxpool2 -> conv(f2,kxk) -> relu -> maxpool2 ->
/// dense -> softmax. The digit configuration ([`Self::digits`]) has exactly
/// 33580 parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoundationModelSpec {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub classes: usize,
    pub conv1: usize,
    pub conv2: usize,
    pub kernel: usize,
}

/// Derived spatial dimensions of the foundation network.
struct FoundationDims {
    c1h: usize,
    c1w: usize,
    p1h: usize,
    p1w: usize,
    c2h: usize,
    c2w: usize,
    flat: usize,
}

impl FoundationModelSpec {
    /// 28x28 grayscale digits: 20 then 50 filters of 5x5, ten classes.
    pub fn digits() -> Self {
        Self {
            height: 28,
            width: 28,
            channels: 1,
            classes: 10,
            conv1: 20,
            conv2: 50,
            kernel: 5,
        }
    }

    /// Checks that both pooling stages see even, positive maps.
    pub fn validate(&self) -> Result<()> {
        let err = |detail: String| Error::InvalidConfig(detail);
        if self.channels == 0 || self.classes < 2 || self.conv1 == 0 || self.conv2 == 0 {
            return Err(err("foundation spec has a zero-sized dimension".into()));
        }
        if self.kernel == 0 || self.kernel >= self.height.min(self.width) {
            return Err(err(format!(
                "kernel {} does not fit {}x{} input",
                self.kernel, self.height, self.width
            )));
        }
        let c1h = self.height - self.kernel + 1;
        let c1w = self.width - self.kernel + 1;
        if c1h % 2 != 0 || c1w % 2 != 0 {
            return Err(err(format!("first pooling stage needs even maps, got {c1h}x{c1w}")));
        }
        let (p1h, p1w) = (c1h / 2, c1w / 2);
        if p1h < self.kernel || p1w < self.kernel {
            return Err(err("second convolution does not fit the pooled map".into()));
        }
        let c2h = p1h - self.kernel + 1;
        let c2w = p1w - self.kernel + 1;
        if c2h % 2 != 0 || c2w % 2 != 0 || c2h == 0 || c2w == 0 {
            return Err(err(format!("second pooling stage needs even maps, got {c2h}x{c2w}")));
        }
        Ok(())
    }

    fn dims(&self) -> FoundationDims {
        let c1h = self.height - self.kernel + 1;
        let c1w = self.width - self.kernel + 1;
        let (p1h, p1w) = (c1h / 2, c1w / 2);
        let c2h = p1h - self.kernel + 1;
        let c2w = p1w - self.kernel + 1;
        let (p2h, p2w) = (c2h / 2, c2w / 2);
        FoundationDims {
            c1h,
            c1w,
            p1h,
            p1w,
            c2h,
            c2w,
            flat: p2h * p2w * self.conv2,
        }
    }

    pub fn layout(&self) -> WeightLayout {
        let d = self.dims();
        WeightLayout::new(vec![
            (
                "conv1.w".into(),
                vec![self.conv1, self.kernel, self.kernel, self.channels],
            ),
            ("conv1.b".into(), vec![self.conv1]),
            (
                "conv2.w".into(),
                vec![self.conv2, self.kernel, self.kernel, self.conv1],
            ),
            ("conv2.b".into(), vec![self.conv2]),
            ("dense.w".into(), vec![d.flat, self.classes]),
            ("dense.b".into(), vec![self.classes]),
        ])
    }

    pub fn param_count(&self) -> usize {
        self.layout().total_params()
    }

    /// Glorot-uniform weights, zero biases, deterministic in `seed`.
    pub fn init_weights<T: Scalar>(&self, seed: u64) -> ModelWeights<T> {
        init_glorot(self.layout(), seed)
    }

    /// Class probabilities `[n, classes]` plus the cache for one backward
    /// pass.
    pub fn forward<T: Scalar>(
        &self,
        weights: &ModelWeights<T>,
        images: &Tensor<T>,
    ) -> Result<(Tensor<T>, FoundationCache<T>)> {
        weights.check_layout(&self.layout(), "foundation forward weights")?;
        let shape = images.shape();
        if shape.len() != 4
            || shape[1] != self.height
            || shape[2] != self.width
            || shape[3] != self.channels
        {
            return Err(Error::ShapeMismatch {
                context: "foundation forward input",
                expected: vec![0, self.height, self.width, self.channels],
                got: shape.to_vec(),
            });
        }
        let n = shape[0];
        if n == 0 {
            return Err(Error::EmptyInput("foundation forward batch"));
        }
        let d = self.dims();
        let w = weights.values();
        let (k1, rest) = w.split_at(self.conv1 * self.kernel * self.kernel * self.channels);
        let (b1, rest) = rest.split_at(self.conv1);
        let (k2, rest) = rest.split_at(self.conv2 * self.kernel * self.kernel * self.conv1);
        let (b2, rest) = rest.split_at(self.conv2);
        let (wd, bd) = rest.split_at(d.flat * self.classes);

        let z1 = layers::conv2d_forward(
            images.data(),
            n,
            self.height,
            self.width,
            self.channels,
            k1,
            b1,
            self.conv1,
            self.kernel,
        );
        let a1 = layers::relu_forward(&z1);
        let (p1, idx1) = layers::maxpool2_forward(&a1, n, d.c1h, d.c1w, self.conv1);
        let z2 = layers::conv2d_forward(&p1, n, d.p1h, d.p1w, self.conv1, k2, b2, self.conv2, self.kernel);
        let a2 = layers::relu_forward(&z2);
        let (p2, idx2) = layers::maxpool2_forward(&a2, n, d.c2h, d.c2w, self.conv2);
        let logits = layers::dense_forward(&p2, n, d.flat, wd, bd, self.classes);
        let probs = layers::softmax_rows(&logits, n, self.classes);
        let cache = FoundationCache {
            n,
            input: images.data().to_vec(),
            a1,
            idx1,
            p1,
            a2,
            idx2,
            p2,
        };
        Ok((Tensor::new(vec![n, self.classes], probs)?, cache))
    }

    /// Gradient of the loss w.r.t. all parameters, flattened congruently to
    /// the weight layout. `dlogits` is the gradient w.r.t. the pre-softmax
    /// logits, `[n, classes]`.
    pub fn backward<T: Scalar>(
        &self,
        weights: &ModelWeights<T>,
        cache: &FoundationCache<T>,
        dlogits: &Tensor<T>,
    ) -> Result<Vec<T>> {
        weights.check_layout(&self.layout(), "foundation backward weights")?;
        let d = self.dims();
        if dlogits.shape() != [cache.n, self.classes] {
            return Err(Error::ShapeMismatch {
                context: "foundation backward gradient",
                expected: vec![cache.n, self.classes],
                got: dlogits.shape().to_vec(),
            });
        }
        if cache.input.len() != cache.n * self.height * self.width * self.channels {
            return Err(Error::ShapeMismatch {
                context: "foundation backward cache",
                expected: vec![cache.n * self.height * self.width * self.channels],
                got: vec![cache.input.len()],
            });
        }
        let n = cache.n;
        let w = weights.values();
        let (_k1, rest) = w.split_at(self.conv1 * self.kernel * self.kernel * self.channels);
        let (_b1, rest) = rest.split_at(self.conv1);
        let (k2, rest) = rest.split_at(self.conv2 * self.kernel * self.kernel * self.conv1);
        let (_b2, rest) = rest.split_at(self.conv2);
        let (wd, _bd) = rest.split_at(d.flat * self.classes);

        let (dwd, dbd, dflat) =
            layers::dense_backward(&cache.p2, n, d.flat, wd, self.classes, dlogits.data());
        let da2 = layers::maxpool2_backward(&dflat, &cache.idx2, cache.a2.len());
        let dz2 = layers::relu_backward(&cache.a2, &da2);
        let (dk2, db2, dp1) = layers::conv2d_backward(
            &cache.p1,
            n,
            d.p1h,
            d.p1w,
            self.conv1,
            k2,
            self.conv2,
            self.kernel,
            &dz2,
            true,
        );
        let da1 = layers::maxpool2_backward(&dp1, &cache.idx1, cache.a1.len());
        let dz1 = layers::relu_backward(&cache.a1, &da1);
        let (dk1, db1, _) = layers::conv2d_backward(
            &cache.input,
            n,
            self.height,
            self.width,
            self.channels,
            &[],
            self.conv1,
            self.kernel,
            &dz1,
            false,
        );
        let mut grad = Vec::with_capacity(weights.len());
        grad.extend_from_slice(&dk1);
        grad.extend_from_slice(&db1);
        grad.extend_from_slice(&dk2);
        grad.extend_from_slice(&db2);
        grad.extend_from_slice(&dwd);
        grad.extend_from_slice(&dbd);
        Ok(grad)
    }

    /// One shuffled epoch of minibatch Adam on `data`, in place. Returns the
    /// number of optimizer steps (the final short batch is trained too).
    pub fn train_epoch<T: Scalar>(
        &self,
        weights: &mut ModelWeights<T>,
        adam: &mut AdamState<T>,
        data: &LabeledSet<T>,
        batch_size: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<usize> {
        if batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be positive".into()));
        }
        if data.len() == 0 {
            return Err(Error::EmptyInput("training set"));
        }
        let mut order: Vec<usize> = (0..data.len()).collect();
        use rand::seq::SliceRandom;
        order.shuffle(rng);
        let mut steps = 0;
        for chunk in order.chunks(batch_size) {
            let (images, labels) = data.gather(chunk)?;
            let (probs, cache) = self.forward(weights, &images)?;
            let (_, dlogits) =
                loss::cross_entropy(probs.data(), chunk.len(), self.classes, &labels)?;
            let dlogits = Tensor::new(vec![chunk.len(), self.classes], dlogits)?;
            let grad = self.backward(weights, &cache, &dlogits)?;
            adam.step(weights.values_mut(), &grad)?;
            steps += 1;
        }
        Ok(steps)
    }

    /// Fresh-optimizer training session: `opts.epochs` shuffled epochs of
    /// minibatch Adam. Returns the updated weights and the total optimizer
    /// step count, `epochs * ceil(len / batch_size)`.
    pub fn train_epochs<T: Scalar>(
        &self,
        weights: ModelWeights<T>,
        data: &LabeledSet<T>,
        opts: &TrainOptions,
    ) -> Result<(ModelWeights<T>, usize)> {
        let mut weights = weights;
        let mut adam = AdamState::new(weights.len(), opts.learning_rate);
        let mut rng = seed_rng(opts.shuffle_seed);
        let mut steps = 0;
        for _ in 0..opts.epochs {
            steps += self.train_epoch(&mut weights, &mut adam, data, opts.batch_size, &mut rng)?;
        }
        Ok((weights, steps))
    }

    /// Accuracy and mean cross-entropy over a labeled set. Prediction ties
    /// resolve to the lowest class index, so all-equal probabilities predict
    /// class zero.
    pub fn evaluate<T: Scalar>(
        &self,
        weights: &ModelWeights<T>,
        data: &LabeledSet<T>,
    ) -> Result<Evaluation> {
        if data.len() == 0 {
            return Err(Error::EmptyInput("evaluation set"));
        }
        let mut correct = 0usize;
        let mut loss_sum = 0.0f64;
        let mut start = 0;
        while start < data.len() {
            let end = (start + EVAL_BATCH).min(data.len());
            let indices: Vec<usize> = (start..end).collect();
            let (images, labels) = data.gather(&indices)?;
            let (probs, _) = self.forward(weights, &images)?;
            let p = probs.data();
            for (row, &label) in labels.iter().enumerate() {
                let r = &p[row * self.classes..(row + 1) * self.classes];
                let mut best = 0usize;
                for (j, &v) in r.iter().enumerate().skip(1) {
                    if v > r[best] {
                        best = j;
                    }
                }
                if best == label as usize {
                    correct += 1;
                }
                loss_sum -= r[label as usize].into64().max(loss::PROB_FLOOR).ln();
            }
            start = end;
        }
        Ok(Evaluation {
            accuracy: correct as f64 / data.len() as f64,
            mean_loss: loss_sum / data.len() as f64,
            samples: data.len(),
        })
    }
}

/// Forward-pass cache of the foundation network. Activations are stored
/// post-relu; the relu mask is recovered from their sign.
#[derive(Debug, Clone)]
pub struct FoundationCache<T> {
    n: usize,
    input: Vec<T>,
    a1: Vec<T>,
    idx1: Vec<u32>,
    p1: Vec<T>,
    a2: Vec<T>,
    idx2: Vec<u32>,
    p2: Vec<T>,
}

/// Value head of the node selector: input -> 500 relu -> 200 relu -> one
/// linear output per node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DqnModelSpec {
    pub input_dim: usize,
    pub hidden1: usize,
    pub hidden2: usize,
    pub actions: usize,
}

impl DqnModelSpec {
    /// Selector over `nodes` peers observing the stacked per-node weight
    /// projections (input `nodes^2`, hidden 500/200).
    pub fn for_nodes(nodes: usize) -> Self {
        Self {
            input_dim: nodes * nodes,
            hidden1: 500,
            hidden2: 200,
            actions: nodes,
        }
    }

    pub fn layout(&self) -> WeightLayout {
        WeightLayout::new(vec![
            ("fc1.w".into(), vec![self.input_dim, self.hidden1]),
            ("fc1.b".into(), vec![self.hidden1]),
            ("fc2.w".into(), vec![self.hidden1, self.hidden2]),
            ("fc2.b".into(), vec![self.hidden2]),
            ("out.w".into(), vec![self.hidden2, self.actions]),
            ("out.b".into(), vec![self.actions]),
        ])
    }

    pub fn param_count(&self) -> usize {
        self.layout().total_params()
    }

    pub fn init_weights<T: Scalar>(&self, seed: u64) -> ModelWeights<T> {
        init_glorot(self.layout(), seed)
    }

    /// Q-values `[n, actions]` plus the backward cache.
    pub fn forward<T: Scalar>(
        &self,
        weights: &ModelWeights<T>,
        input: &Tensor<T>,
    ) -> Result<(Tensor<T>, DqnCache<T>)> {
        weights.check_layout(&self.layout(), "dqn forward weights")?;
        let shape = input.shape();
        if shape.len() != 2 || shape[1] != self.input_dim {
            return Err(Error::ShapeMismatch {
                context: "dqn forward input",
                expected: vec![0, self.input_dim],
                got: shape.to_vec(),
            });
        }
        let n = shape[0];
        if n == 0 {
            return Err(Error::EmptyInput("dqn forward batch"));
        }
        let w = weights.values();
        let (w1, rest) = w.split_at(self.input_dim * self.hidden1);
        let (b1, rest) = rest.split_at(self.hidden1);
        let (w2, rest) = rest.split_at(self.hidden1 * self.hidden2);
        let (b2, rest) = rest.split_at(self.hidden2);
        let (w3, b3) = rest.split_at(self.hidden2 * self.actions);
        let z1 = layers::dense_forward(input.data(), n, self.input_dim, w1, b1, self.hidden1);
        let a1 = layers::relu_forward(&z1);
        let z2 = layers::dense_forward(&a1, n, self.hidden1, w2, b2, self.hidden2);
        let a2 = layers::relu_forward(&z2);
        let q = layers::dense_forward(&a2, n, self.hidden2, w3, b3, self.actions);
        let cache = DqnCache {
            n,
            input: input.data().to_vec(),
            a1,
            a2,
        };
        Ok((Tensor::new(vec![n, self.actions], q)?, cache))
    }

    /// Flat parameter gradient for `dq = dLoss/dQ`, congruent to the layout.
    pub fn backward<T: Scalar>(
        &self,
        weights: &ModelWeights<T>,
        cache: &DqnCache<T>,
        dq: &Tensor<T>,
    ) -> Result<Vec<T>> {
        weights.check_layout(&self.layout(), "dqn backward weights")?;
        if dq.shape() != [cache.n, self.actions] {
            return Err(Error::ShapeMismatch {
                context: "dqn backward gradient",
                expected: vec![cache.n, self.actions],
                got: dq.shape().to_vec(),
            });
        }
        let n = cache.n;
        let w = weights.values();
        let (w1, rest) = w.split_at(self.input_dim * self.hidden1);
        let (_b1, rest) = rest.split_at(self.hidden1);
        let (w2, rest) = rest.split_at(self.hidden1 * self.hidden2);
        let (_b2, rest) = rest.split_at(self.hidden2);
        let (w3, _b3) = rest.split_at(self.hidden2 * self.actions);
        let (dw3, db3, da2) =
            layers::dense_backward(&cache.a2, n, self.hidden2, w3, self.actions, dq.data());
        let dz2 = layers::relu_backward(&cache.a2, &da2);
        let (dw2, db2, da1) =
            layers::dense_backward(&cache.a1, n, self.hidden1, w2, self.hidden2, &dz2);
        let dz1 = layers::relu_backward(&cache.a1, &da1);
        let (dw1, db1, _) =
            layers::dense_backward(&cache.input, n, self.input_dim, w1, self.hidden1, &dz1);
        let mut grad = Vec::with_capacity(weights.len());
        grad.extend_from_slice(&dw1);
        grad.extend_from_slice(&db1);
        grad.extend_from_slice(&dw2);
        grad.extend_from_slice(&db2);
        grad.extend_from_slice(&dw3);
        grad.extend_from_slice(&db3);
        Ok(grad)
    }
}

/// Forward-pass cache of the DQN head (post-relu activations).
#[derive(Debug, Clone)]
pub struct DqnCache<T> {
    n: usize,
    input: Vec<T>,
    a1: Vec<T>,
    a2: Vec<T>,
}
