use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::layers::{self, Dims, GroupNormCache};
use super::{NnError, Tensor};

/// Architecture of the three-stage convolutional classifier.
///
/// Each stage is `conv(k×k, same) → group norm → ReLU → 2×2 max pool`; the
/// stages are followed by a ReLU hidden dense layer and a softmax output.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelConfig {
    pub conv_channels: [usize; 3],
    pub kernel_size: usize,
    pub groupnorm_groups: usize,
    pub hidden_units: usize,
    pub num_classes: usize,
    /// `[height, width, channels]`
    pub input_shape: [usize; 3],
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            conv_channels: [32, 64, 128],
            kernel_size: 3,
            groupnorm_groups: 8,
            hidden_units: 128,
            num_classes: 10,
            input_shape: [32, 32, 3],
        }
    }
}

/// Which kind of layer a parameter tensor belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerKind {
    Conv,
    GroupNorm,
    Dense,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub kind: LayerKind,
    pub fan_in: usize,
}

impl ModelConfig {
    pub fn with_classes(mut self, num_classes: usize) -> Self {
        self.num_classes = num_classes;
        self
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.num_classes < 2 {
            return Err(NnError::Config(format!(
                "num_classes must be at least 2, got {}",
                self.num_classes
            )));
        }
        if self.conv_channels.contains(&0) {
            return Err(NnError::Config("conv channel counts must be >= 1".into()));
        }
        if self.groupnorm_groups == 0 {
            return Err(NnError::Config("groupnorm_groups must be >= 1".into()));
        }
        if let Some(c) = self
            .conv_channels
            .iter()
            .find(|&&c| c % self.groupnorm_groups != 0)
        {
            return Err(NnError::Config(format!(
                "{} groups do not divide {c} channels",
                self.groupnorm_groups
            )));
        }
        if self.kernel_size == 0 || self.kernel_size % 2 == 0 {
            return Err(NnError::Config(format!(
                "kernel_size must be odd for same padding, got {}",
                self.kernel_size
            )));
        }
        if self.hidden_units == 0 {
            return Err(NnError::Config("hidden_units must be >= 1".into()));
        }
        let [h, w, c] = self.input_shape;
        if h < 8 || w < 8 || h % 8 != 0 || w % 8 != 0 || c == 0 {
            return Err(NnError::Config(format!(
                "input shape {:?} must have height and width divisible by 8",
                self.input_shape
            )));
        }
        Ok(())
    }

    pub(crate) fn stage_dims(&self, stage: usize) -> Dims {
        let [h, w, c] = self.input_shape;
        let scale = 1 << stage;
        Dims {
            height: h / scale,
            width: w / scale,
            channels: if stage == 0 { c } else { self.conv_channels[stage - 1] },
        }
    }

    pub(crate) fn flat_len(&self) -> usize {
        let [h, w, _] = self.input_shape;
        (h / 8) * (w / 8) * self.conv_channels[2]
    }

    /// Parameter tensors in forward order.
    pub fn param_specs(&self) -> Vec<ParamSpec> {
        let mut specs = Vec::with_capacity(16);
        let k = self.kernel_size;
        for stage in 0..3 {
            let cin = self.stage_dims(stage).channels;
            let cout = self.conv_channels[stage];
            let n = stage + 1;
            specs.push(ParamSpec {
                name: format!("conv{n}.weight"),
                shape: vec![k, k, cin, cout],
                kind: LayerKind::Conv,
                fan_in: k * k * cin,
            });
            specs.push(ParamSpec {
                name: format!("conv{n}.bias"),
                shape: vec![cout],
                kind: LayerKind::Conv,
                fan_in: 0,
            });
            specs.push(ParamSpec {
                name: format!("norm{n}.gamma"),
                shape: vec![cout],
                kind: LayerKind::GroupNorm,
                fan_in: 0,
            });
            specs.push(ParamSpec {
                name: format!("norm{n}.beta"),
                shape: vec![cout],
                kind: LayerKind::GroupNorm,
                fan_in: 0,
            });
        }
        let flat = self.flat_len();
        specs.push(ParamSpec {
            name: "hidden.weight".into(),
            shape: vec![flat, self.hidden_units],
            kind: LayerKind::Dense,
            fan_in: flat,
        });
        specs.push(ParamSpec {
            name: "hidden.bias".into(),
            shape: vec![self.hidden_units],
            kind: LayerKind::Dense,
            fan_in: 0,
        });
        specs.push(ParamSpec {
            name: "output.weight".into(),
            shape: vec![self.hidden_units, self.num_classes],
            kind: LayerKind::Dense,
            fan_in: self.hidden_units,
        });
        specs.push(ParamSpec {
            name: "output.bias".into(),
            shape: vec![self.num_classes],
            kind: LayerKind::Dense,
            fan_in: 0,
        });
        specs
    }
}

const OUTPUT_WEIGHT: usize = 14;
const OUTPUT_BIAS: usize = 15;
const HIDDEN_WEIGHT: usize = 12;
const HIDDEN_BIAS: usize = 13;

/// A list of tensors shaped like a model's parameters. Used both for the
/// parameters themselves and for gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn new(tensors: Vec<Tensor>) -> Self {
        Self { tensors }
    }

    pub fn zeros_like(other: &ParamSet) -> Self {
        Self {
            tensors: other
                .tensors
                .iter()
                .map(|t| Tensor::zeros(t.shape().to_vec()))
                .collect(),
        }
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.tensors.iter().flat_map(|t| t.data().iter().copied())
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.tensors.iter_mut().flat_map(|t| t.data_mut().iter_mut())
    }

    /// Map a flat coordinate to `(tensor, offset)`.
    pub fn locate(&self, mut index: usize) -> Option<(usize, usize)> {
        for (t, tensor) in self.tensors.iter().enumerate() {
            if index < tensor.len() {
                return Some((t, index));
            }
            index -= tensor.len();
        }
        None
    }

    pub fn get(&self, index: usize) -> Option<f64> {
        self.locate(index).map(|(t, i)| self.tensors[t].data()[i])
    }

    pub fn set(&mut self, index: usize, value: f64) -> bool {
        match self.locate(index) {
            Some((t, i)) => {
                self.tensors[t].data_mut()[i] = value;
                true
            }
            None => false,
        }
    }

    pub fn same_shape(&self, other: &ParamSet) -> bool {
        self.tensors.len() == other.tensors.len()
            && self
                .tensors
                .iter()
                .zip(&other.tensors)
                .all(|(a, b)| a.same_shape(b))
    }

    /// Global L2 norm over every coordinate.
    pub fn l2_norm(&self) -> f64 {
        self.values().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }

    pub fn scale(&mut self, factor: f64) {
        for v in self.values_mut() {
            *v *= factor;
        }
    }

    /// `self += factor * other`. Shapes must already agree.
    pub fn add_scaled(&mut self, other: &ParamSet, factor: f64) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += factor * y;
            }
        }
    }

    pub fn add_assign(&mut self, other: &ParamSet) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += y;
            }
        }
    }

    pub fn fill(&mut self, value: f64) {
        for v in self.values_mut() {
            *v = value;
        }
    }
}

/// Learnable parameters together with the architecture they belong to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    config: ModelConfig,
    params: ParamSet,
}

#[derive(Debug, Clone, Default)]
struct StageCache {
    input: Vec<f64>,
    patches: Vec<f64>,
    norm: GroupNormCache,
    activation: Vec<f64>,
    argmax: Vec<u32>,
}

/// Activations of one example kept for its backward pass.
#[derive(Debug, Clone, Default)]
pub struct ExampleCache {
    stages: [StageCache; 3],
    flat: Vec<f64>,
    hidden: Vec<f64>,
    probs: Vec<f64>,
    log_norm: f64,
    logits: Vec<f64>,
}

impl ExampleCache {
    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    fn loss(&self, label: usize) -> f64 {
        self.log_norm - self.logits[label]
    }
}

/// Per-example caches produced by [`ModelParams::forward`].
#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    examples: Vec<ExampleCache>,
}

impl ForwardCache {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

impl ModelParams {
    /// He-uniform weights (`U(-b, b)`, `b = sqrt(6 / fan_in)`), zero biases,
    /// unit group-norm scales.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self, NnError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors = config
            .param_specs()
            .into_iter()
            .map(|spec| {
                if spec.name.ends_with(".gamma") {
                    Tensor::filled(spec.shape, 1.0)
                } else if spec.fan_in > 0 {
                    let bound = (6.0 / spec.fan_in as f64).sqrt();
                    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
                    let len = spec.shape.iter().product();
                    let data = (0..len).map(|_| dist.sample(&mut rng)).collect();
                    Tensor::new(spec.shape, data).expect("spec shape")
                } else {
                    Tensor::zeros(spec.shape)
                }
            })
            .collect();
        Ok(Self {
            config: config.clone(),
            params: ParamSet::new(tensors),
        })
    }

    pub fn from_parts(config: ModelConfig, params: ParamSet) -> Result<Self, NnError> {
        config.validate()?;
        let specs = config.param_specs();
        if specs.len() != params.tensors().len()
            || specs
                .iter()
                .zip(params.tensors())
                .any(|(s, t)| s.shape != t.shape())
        {
            return Err(NnError::Shape(
                "parameter tensors do not match the model configuration".into(),
            ));
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.num_values()
    }

    /// Zero the output layer's weights and bias.
    pub fn zero_output_layer(&mut self) {
        let t = self.params.tensors_mut();
        t[OUTPUT_WEIGHT].data_mut().fill(0.0);
        t[OUTPUT_BIAS].data_mut().fill(0.0);
    }

    fn image_len(&self) -> usize {
        self.config.input_shape.iter().product()
    }

    fn check_batch(&self, batch: &Tensor) -> Result<usize, NnError> {
        let [h, w, c] = self.config.input_shape;
        let shape = batch.shape();
        if shape.len() != 4 || shape[1..] != [h, w, c] {
            return Err(NnError::Shape(format!(
                "expected batch of shape (B, {h}, {w}, {c}), got {shape:?}"
            )));
        }
        if batch.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(NnError::Input("batch values must lie in [0, 1]".into()));
        }
        Ok(shape[0])
    }

    fn check_labels(&self, labels: &[usize], batch_len: usize) -> Result<(), NnError> {
        if labels.len() != batch_len {
            return Err(NnError::Shape(format!(
                "{} labels for a batch of {batch_len}",
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= self.config.num_classes) {
            return Err(NnError::Input(format!(
                "label {bad} out of range for {} classes",
                self.config.num_classes
            )));
        }
        Ok(())
    }

    /// Forward one image, optionally mirrored, filling `cache`.
    pub(crate) fn forward_example(&self, image: &[f64], flip: bool, cache: &mut ExampleCache) {
        let cfg = &self.config;
        let t = self.params.tensors();
        let dims0 = cfg.stage_dims(0);
        if flip {
            layers::flip_horizontal(image, dims0, &mut cache.stages[0].input);
        } else {
            cache.stages[0].input.clear();
            cache.stages[0].input.extend_from_slice(image);
        }
        let mut conv_out = Vec::new();
        let mut norm_out = Vec::new();
        for stage in 0..3 {
            let dims = cfg.stage_dims(stage);
            let cout = cfg.conv_channels[stage];
            let out_dims = Dims {
                channels: cout,
                ..dims
            };
            conv_out.resize(out_dims.len(), 0.0);
            norm_out.resize(out_dims.len(), 0.0);
            let (head, tail) = cache.stages.split_at_mut(stage + 1);
            let sc = &mut head[stage];
            layers::im2col(&sc.input, dims, cfg.kernel_size, &mut sc.patches);
            layers::conv2d_forward(
                &sc.patches,
                dims,
                t[4 * stage].data(),
                t[4 * stage + 1].data(),
                cfg.kernel_size,
                cout,
                &mut conv_out,
            );
            layers::group_norm_forward(
                &conv_out,
                out_dims,
                cfg.groupnorm_groups,
                t[4 * stage + 2].data(),
                t[4 * stage + 3].data(),
                &mut sc.norm,
                &mut norm_out,
            );
            layers::relu_in_place(&mut norm_out);
            sc.activation.clear();
            sc.activation.extend_from_slice(&norm_out);
            let pooled = if stage < 2 {
                &mut tail[0].input
            } else {
                &mut cache.flat
            };
            pooled.resize(out_dims.len() / 4, 0.0);
            layers::max_pool2_forward(&sc.activation, out_dims, pooled, &mut sc.argmax);
        }
        cache.hidden.resize(cfg.hidden_units, 0.0);
        layers::dense_forward(
            &cache.flat,
            t[HIDDEN_WEIGHT].data(),
            t[HIDDEN_BIAS].data(),
            &mut cache.hidden,
        );
        layers::relu_in_place(&mut cache.hidden);
        cache.logits.resize(cfg.num_classes, 0.0);
        layers::dense_forward(
            &cache.hidden,
            t[OUTPUT_WEIGHT].data(),
            t[OUTPUT_BIAS].data(),
            &mut cache.logits,
        );
        cache.probs.resize(cfg.num_classes, 0.0);
        cache.log_norm = layers::softmax(&cache.logits, &mut cache.probs);
    }

    /// Accumulate the cross-entropy gradient of one cached example into
    /// `grad` and return its loss.
    pub(crate) fn backward_example(
        &self,
        cache: &ExampleCache,
        label: usize,
        grad: &mut ParamSet,
    ) -> f64 {
        let cfg = &self.config;
        let t = self.params.tensors();
        let g = grad.tensors_mut();
        let mut d_logits = cache.probs.clone();
        d_logits[label] -= 1.0;

        let mut d_hidden = vec![0.0; cfg.hidden_units];
        {
            let (gw, gb) = split_pair(g, OUTPUT_WEIGHT);
            layers::dense_backward(
                &cache.hidden,
                t[OUTPUT_WEIGHT].data(),
                &d_logits,
                gw,
                gb,
                Some(&mut d_hidden),
            );
        }
        layers::relu_backward_in_place(&cache.hidden, &mut d_hidden);
        let mut d_x = vec![0.0; cache.flat.len()];
        {
            let (gw, gb) = split_pair(g, HIDDEN_WEIGHT);
            layers::dense_backward(
                &cache.flat,
                t[HIDDEN_WEIGHT].data(),
                &d_hidden,
                gw,
                gb,
                Some(&mut d_x),
            );
        }

        let mut d_act = Vec::new();
        let mut d_conv = Vec::new();
        let mut scratch = Vec::new();
        for stage in (0..3).rev() {
            let sc = &cache.stages[stage];
            let dims = cfg.stage_dims(stage);
            let cout = cfg.conv_channels[stage];
            let out_dims = Dims {
                channels: cout,
                ..dims
            };
            d_act.resize(out_dims.len(), 0.0);
            layers::max_pool2_backward(&sc.argmax, &d_x, &mut d_act);
            layers::relu_backward_in_place(&sc.activation, &mut d_act);
            d_conv.resize(out_dims.len(), 0.0);
            {
                let (gg, gb) = split_pair(g, 4 * stage + 2);
                layers::group_norm_backward(
                    out_dims,
                    cfg.groupnorm_groups,
                    t[4 * stage + 2].data(),
                    &sc.norm,
                    &d_act,
                    gg,
                    gb,
                    &mut d_conv,
                );
            }
            let (gw, gb) = split_pair(g, 4 * stage);
            if stage > 0 {
                d_x.resize(dims.len(), 0.0);
                layers::conv2d_backward(
                    &sc.patches,
                    dims,
                    t[4 * stage].data(),
                    cfg.kernel_size,
                    cout,
                    &d_conv,
                    gw,
                    gb,
                    Some((&mut d_x, &mut scratch)),
                );
            } else {
                layers::conv2d_backward(
                    &sc.patches,
                    dims,
                    t[0].data(),
                    cfg.kernel_size,
                    cout,
                    &d_conv,
                    gw,
                    gb,
                    None,
                );
            }
        }
        cache.loss(label)
    }

    /// Run the network on a `(B, H, W, C)` batch. With `train_mode` each
    /// image is mirrored with probability 1/2 using `rng`; otherwise `rng`
    /// is left untouched.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        batch: &Tensor,
        train_mode: bool,
        rng: &mut R,
    ) -> Result<(Tensor, ForwardCache), NnError> {
        let n = self.check_batch(batch)?;
        let k = self.config.num_classes;
        let mut probs = Vec::with_capacity(n * k);
        let mut examples = Vec::with_capacity(n);
        for i in 0..n {
            let flip = train_mode && rng.random_bool(0.5);
            let mut cache = ExampleCache::default();
            self.forward_example(batch.item(i), flip, &mut cache);
            probs.extend_from_slice(&cache.probs);
            examples.push(cache);
        }
        Ok((Tensor::new(vec![n, k], probs)?, ForwardCache { examples }))
    }

    /// Per-example losses and gradients from a previous forward pass.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        labels: &[usize],
    ) -> Result<(Vec<f64>, Vec<ParamSet>), NnError> {
        self.check_labels(labels, cache.len())?;
        let mut losses = Vec::with_capacity(labels.len());
        let mut grads = Vec::with_capacity(labels.len());
        for (ex, &label) in cache.examples.iter().zip(labels) {
            let mut grad = ParamSet::zeros_like(&self.params);
            losses.push(self.backward_example(ex, label, &mut grad));
            grads.push(grad);
        }
        Ok((losses, grads))
    }

    /// Evaluation-mode class probabilities, shape `(B, num_classes)`.
    pub fn predict(&self, batch: &Tensor) -> Result<Tensor, NnError> {
        let n = self.check_batch(batch)?;
        let k = self.config.num_classes;
        let mut probs = Vec::with_capacity(n * k);
        let mut cache = ExampleCache::default();
        for i in 0..n {
            self.forward_example(batch.item(i), false, &mut cache);
            probs.extend_from_slice(&cache.probs);
        }
        Tensor::new(vec![n, k], probs)
    }

    /// Softmax cross-entropy of every example and its gradient, without
    /// augmentation.
    pub fn loss_and_per_example_gradients(
        &self,
        batch: &Tensor,
        labels: &[usize],
    ) -> Result<(Vec<f64>, Vec<ParamSet>), NnError> {
        let n = self.check_batch(batch)?;
        self.check_labels(labels, n)?;
        let mut losses = Vec::with_capacity(n);
        let mut grads = Vec::with_capacity(n);
        let mut cache = ExampleCache::default();
        for (i, &label) in labels.iter().enumerate() {
            self.forward_example(batch.item(i), false, &mut cache);
            let mut grad = ParamSet::zeros_like(&self.params);
            losses.push(self.backward_example(&cache, label, &mut grad));
            grads.push(grad);
        }
        Ok((losses, grads))
    }

    /// Mean loss and the gradient of the mean loss, accumulated into a
    /// single buffer.
    pub fn loss_and_gradient(
        &self,
        batch: &Tensor,
        labels: &[usize],
    ) -> Result<(f64, ParamSet), NnError> {
        let n = self.check_batch(batch)?;
        self.check_labels(labels, n)?;
        if n == 0 {
            return Err(NnError::Input("empty batch".into()));
        }
        let mut grad = ParamSet::zeros_like(&self.params);
        let mut total = 0.0;
        let mut cache = ExampleCache::default();
        for (i, &label) in labels.iter().enumerate() {
            self.forward_example(batch.item(i), false, &mut cache);
            total += self.backward_example(&cache, label, &mut grad);
        }
        grad.scale(1.0 / n as f64);
        Ok((total / n as f64, grad))
    }

    /// Cross-entropy loss of a single un-augmented image.
    pub fn example_loss(&self, image: &[f64], label: usize) -> Result<f64, NnError> {
        if image.len() != self.image_len() {
            return Err(NnError::Shape(format!(
                "image has {} values, expected {}",
                image.len(),
                self.image_len()
            )));
        }
        if label >= self.config.num_classes {
            return Err(NnError::Input(format!("label {label} out of range")));
        }
        let mut cache = ExampleCache::default();
        self.forward_example(image, false, &mut cache);
        Ok(cache.loss(label))
    }
}

fn split_pair(tensors: &mut [Tensor], first: usize) -> (&mut [f64], &mut [f64]) {
    let (a, b) = tensors[first..].split_at_mut(1);
    (a[0].data_mut(), b[0].data_mut())
}
