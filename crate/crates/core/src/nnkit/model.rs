use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Hidden-layer nonlinearity. The output layer is always linear.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
}

impl Activation {
    pub(crate) fn tag(self) -> u8 {
        match self {
            Activation::Relu => 0,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Relu),
            _ => None,
        }
    }
}

/// Fully connected layer computing `x · weights + bias`, weights stored
/// `fan_in × fan_out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn fan_in(&self) -> usize {
        self.weights.rows()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.cols()
    }

    fn param_count(&self) -> usize {
        self.weights.as_slice().len() + self.bias.len()
    }
}

/// Feed-forward classifier: ReLU hidden layers and a linear output layer
/// producing `num_classes` logits.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    layers: Vec<Dense>,
    activation: Activation,
    input_dim: usize,
    num_classes: usize,
    seed: u64,
}

/// Intermediate activations kept from a forward pass for back-propagation.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    /// `activations[0]` is the input batch, `activations[i]` the output of
    /// hidden layer `i` after the nonlinearity.
    activations: Vec<Matrix>,
    pub logits: Matrix,
}

impl ForwardCache {
    /// Penultimate-layer activations.
    pub fn embeddings(&self) -> &Matrix {
        self.activations.last().expect("input is always cached")
    }
}

/// Initializes a model with Glorot-uniform weights (`U[-s, s]`,
/// `s = sqrt(6 / (fan_in + fan_out))`) and zero biases.
pub fn init_model(
    input_dim: usize,
    hidden_dims: &[usize],
    num_classes: usize,
    seed: u64,
) -> Result<Model> {
    if input_dim == 0 {
        return Err(Error::invalid("input_dim", "must be at least 1"));
    }
    if num_classes == 0 {
        return Err(Error::invalid("num_classes", "must be at least 1"));
    }
    if hidden_dims.contains(&0) {
        return Err(Error::invalid("hidden_dims", "every hidden width must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dims = Vec::with_capacity(hidden_dims.len() + 2);
    dims.push(input_dim);
    dims.extend_from_slice(hidden_dims);
    dims.push(num_classes);
    let layers = dims
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let data = (0..fan_in * fan_out).map(|_| rng.gen_range(-s..=s)).collect();
            Dense {
                weights: Matrix::from_vec(fan_in, fan_out, data).expect("sized above"),
                bias: vec![0.0; fan_out],
            }
        })
        .collect();
    Ok(Model {
        layers,
        activation: Activation::Relu,
        input_dim,
        num_classes,
        seed,
    })
}

impl Model {
    /// Assembles a model from explicit layers, checking that shapes chain.
    pub fn from_layers(layers: Vec<Dense>, activation: Activation, seed: u64) -> Result<Model> {
        let first = layers.first().ok_or(Error::EmptySet("layer list"))?;
        let input_dim = first.fan_in();
        let mut prev = input_dim;
        for (i, layer) in layers.iter().enumerate() {
            if layer.fan_in() != prev || layer.bias.len() != layer.fan_out() {
                return Err(Error::shape(
                    format!("layer {i}: {prev} inputs, bias of width fan_out"),
                    format!(
                        "{}x{} weights, bias of width {}",
                        layer.fan_in(),
                        layer.fan_out(),
                        layer.bias.len()
                    ),
                ));
            }
            if layer.fan_out() == 0 {
                return Err(Error::invalid("layers", format!("layer {i} has zero outputs")));
            }
            prev = layer.fan_out();
        }
        Ok(Model {
            num_classes: prev,
            layers,
            activation,
            input_dim,
            seed,
        })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn hidden_dims(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1]
            .iter()
            .map(Dense::fan_out)
            .collect()
    }

    /// Width of the penultimate representation.
    pub fn embedding_dim(&self) -> usize {
        self.layers.last().map_or(self.input_dim, Dense::fan_in)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    /// All parameters in canonical order: per layer, weights row-major then
    /// bias. This order defines parameter indices for masks.
    pub fn params(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.as_slice().iter().chain(&l.bias).copied())
    }

    pub fn params_vec(&self) -> Vec<f64> {
        self.params().collect()
    }

    /// Overwrites every parameter from a flat vector in canonical order.
    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::shape(self.param_count(), flat.len()));
        }
        let mut it = flat.iter().copied();
        for layer in &mut self.layers {
            for (dst, src) in layer.weights.as_mut_slice().iter_mut().chain(&mut layer.bias).zip(&mut it) {
                *dst = src;
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(f64::is_finite)
    }

    fn check_input(&self, batch: &Matrix) -> Result<()> {
        if batch.cols() != self.input_dim {
            return Err(Error::shape(
                format!("{} input features", self.input_dim),
                format!("{} columns", batch.cols()),
            ));
        }
        Ok(())
    }

    /// Forward pass keeping every intermediate activation.
    pub fn forward_cached(&self, batch: &Matrix) -> Result<ForwardCache> {
        self.check_input(batch)?;
        let mut activations = vec![batch.clone()];
        let last = self.layers.len() - 1;
        for layer in &self.layers[..last] {
            let mut z = activations.last().unwrap().matmul(&layer.weights)?;
            z.add_row_vector(&layer.bias);
            match self.activation {
                Activation::Relu => z.map_inplace(|x| x.max(0.0)),
            }
            activations.push(z);
        }
        let out = &self.layers[last];
        let mut logits = activations.last().unwrap().matmul(&out.weights)?;
        logits.add_row_vector(&out.bias);
        Ok(ForwardCache {
            activations,
            logits,
        })
    }

    /// Returns `(logits, embeddings)`; embeddings are the penultimate-layer
    /// activations (the input itself for a single-layer model).
    pub fn forward(&self, batch: &Matrix) -> Result<(Matrix, Matrix)> {
        let mut cache = self.forward_cached(batch)?;
        let embeddings = cache.activations.pop().unwrap();
        Ok((cache.logits, embeddings))
    }

    pub fn logits(&self, batch: &Matrix) -> Result<Matrix> {
        Ok(self.forward_cached(batch)?.logits)
    }

    pub fn predict(&self, batch: &Matrix) -> Result<Vec<usize>> {
        Ok(self.logits(batch)?.argmax_rows())
    }

    /// Back-propagates `grad_logits` (∂L/∂logits) and, optionally, an extra
    /// gradient arriving directly at the embeddings.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        grad_logits: &Matrix,
        grad_embeddings: Option<&Matrix>,
    ) -> Result<GradBundle> {
        if grad_logits.shape() != cache.logits.shape() {
            return Err(Error::shape(
                format!("{:?}", cache.logits.shape()),
                format!("{:?}", grad_logits.shape()),
            ));
        }
        if let Some(g) = grad_embeddings {
            if g.shape() != cache.embeddings().shape() {
                return Err(Error::shape(
                    format!("{:?}", cache.embeddings().shape()),
                    format!("{:?}", g.shape()),
                ));
            }
        }
        let n = self.layers.len();
        let mut grads: Vec<Dense> = Vec::with_capacity(n);
        let mut delta = grad_logits.clone();
        for i in (0..n).rev() {
            let input = &cache.activations[i];
            let layer = &self.layers[i];
            let gw = input.t_matmul(&delta)?;
            let gb = delta.column_sums();
            grads.push(Dense {
                weights: gw,
                bias: gb,
            });
            if i == 0 {
                break;
            }
            let mut upstream = delta.matmul_t(&layer.weights)?;
            if i == n - 1 {
                if let Some(g) = grad_embeddings {
                    for (u, e) in upstream.as_mut_slice().iter_mut().zip(g.as_slice()) {
                        *u += e;
                    }
                }
            }
            // ReLU derivative taken as 0 at the kink
            for (u, &a) in upstream.as_mut_slice().iter_mut().zip(input.as_slice()) {
                if a <= 0.0 {
                    *u = 0.0;
                }
            }
            delta = upstream;
        }
        grads.reverse();
        Ok(GradBundle {
            layers: grads,
            loss: 0.0,
        })
    }
}

/// Gradients shape-congruent to a [`Model`], plus the loss they belong to.
#[derive(Clone, Debug, PartialEq)]
pub struct GradBundle {
    pub layers: Vec<Dense>,
    pub loss: f64,
}

impl GradBundle {
    pub fn zeros_like(model: &Model) -> Self {
        Self {
            layers: model
                .layers
                .iter()
                .map(|l| Dense {
                    weights: Matrix::zeros(l.fan_in(), l.fan_out()),
                    bias: vec![0.0; l.fan_out()],
                })
                .collect(),
            loss: 0.0,
        }
    }

    pub fn with_loss(mut self, loss: f64) -> Self {
        self.loss = loss;
        self
    }

    pub fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.as_slice().iter().chain(&l.bias).copied())
            .collect()
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.as_mut_slice().iter_mut().chain(l.bias.iter_mut()))
    }

    /// `self += scale · other`.
    pub fn add_scaled(&mut self, other: &GradBundle, scale: f64) {
        for (a, b) in self.values_mut().zip(other.flat()) {
            *a += scale * b;
        }
        self.loss += scale * other.loss;
    }

    pub fn is_congruent(&self, model: &Model) -> bool {
        self.layers.len() == model.layers.len()
            && self.layers.iter().zip(&model.layers).all(|(g, l)| {
                g.weights.shape() == l.weights.shape() && g.bias.len() == l.bias.len()
            })
    }

    /// Zeroes every entry the mask leaves out.
    pub fn apply_mask(&mut self, mask: &ParamMask) {
        for (g, &keep) in self.values_mut().zip(&mask.bits) {
            if !keep {
                *g = 0.0;
            }
        }
    }
}

/// Binary selector over parameters, indexed in canonical parameter order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamMask {
    bits: Vec<bool>,
    selected_count: usize,
}

impl ParamMask {
    pub fn from_bits(bits: Vec<bool>) -> Self {
        let selected_count = bits.iter().filter(|&&b| b).count();
        Self {
            bits,
            selected_count,
        }
    }

    pub fn all(model: &Model) -> Self {
        Self::from_bits(vec![true; model.param_count()])
    }

    pub fn none(model: &Model) -> Self {
        Self::from_bits(vec![false; model.param_count()])
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn selected_count(&self) -> usize {
        self.selected_count
    }

    pub fn is_selected(&self, index: usize) -> bool {
        self.bits[index]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Descend,
    Ascend,
}

/// Plain SGD update `θ ← θ ∓ lr·g`, restricted to masked parameters when a
/// mask is given.
pub fn sgd_step(
    model: &Model,
    grads: &GradBundle,
    lr: f64,
    mask: Option<&ParamMask>,
    direction: Direction,
) -> Result<Model> {
    let mut out = model.clone();
    sgd_step_in_place(&mut out, grads, lr, mask, direction)?;
    Ok(out)
}

pub fn sgd_step_in_place(
    model: &mut Model,
    grads: &GradBundle,
    lr: f64,
    mask: Option<&ParamMask>,
    direction: Direction,
) -> Result<()> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::invalid("lr", format!("must be positive and finite, got {lr}")));
    }
    if !grads.is_congruent(model) {
        return Err(Error::shape("gradients congruent with model", "mismatched layer shapes"));
    }
    if let Some(m) = mask {
        if m.len() != model.param_count() {
            return Err(Error::shape(model.param_count(), m.len()));
        }
    }
    let mut index = 0;
    for (layer, g) in model.layers.iter_mut().zip(&grads.layers) {
        let params = layer.weights.as_mut_slice().iter_mut().chain(layer.bias.iter_mut());
        let values = g.weights.as_slice().iter().chain(&g.bias);
        for (p, &gv) in params.zip(values) {
            if mask.is_none_or(|m| m.bits[index]) {
                match direction {
                    Direction::Descend => *p -= lr * gv,
                    Direction::Ascend => *p += lr * gv,
                }
            }
            index += 1;
        }
    }
    Ok(())
}
