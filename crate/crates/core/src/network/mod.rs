//! Sequential layer stack with explicit per-layer backward passes.

pub mod gradcheck;
mod layers;
mod loss;
mod spec;

use std::fmt;

use crate::error::{shape_err, Error, Result};
use crate::tensor::{
    self, conv::conv2d_backward_impl, maxpool_backward, maxpool_forward, relu, relu_backward,
    softmax, ArgmaxMap, Element, Padding, Tensor,
};
use crate::Rng;

pub use layers::{
    batchnorm_backward, batchnorm_forward_eval, batchnorm_forward_train, dense_backward,
    dense_forward, dropout_backward, dropout_forward, BatchNormCache, DropoutMask,
};
pub use loss::{cross_entropy, LossValue};
pub use spec::{format_shape, infer_shapes, LayerSpec, PlantNetConfig, WidthScale};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Train => "train",
            Mode::Eval => "eval",
        })
    }
}

/// A trainable tensor and its gradient slot.
#[derive(Clone, Debug)]
pub struct Param<T> {
    pub id: String,
    pub value: Tensor<T>,
    pub grad: Option<Tensor<T>>,
}

/// Non-trainable layer state (batch-norm running statistics).
#[derive(Clone, Debug)]
pub struct Buffer<T> {
    pub id: String,
    pub value: Tensor<T>,
}

#[derive(Clone, Debug)]
enum Layer {
    Conv2d {
        kernel: usize,
        bias: usize,
        stride: usize,
        padding: Padding,
    },
    Relu,
    BatchNorm {
        gamma: usize,
        beta: usize,
        running_mean: usize,
        running_var: usize,
        eps: f64,
        momentum: f64,
    },
    MaxPool {
        pool: usize,
        stride: usize,
        padding: Padding,
    },
    Dropout {
        rate: f64,
    },
    Flatten,
    Dense {
        weight: usize,
        bias: usize,
    },
    Softmax,
}

#[derive(Clone, Debug)]
enum Cache<T> {
    Input(Tensor<T>),
    BatchNorm(BatchNormCache<T>),
    Pool(ArgmaxMap),
    Dropout(Option<DropoutMask<T>>),
    Shape(Vec<usize>),
    None,
}

/// A sequential network: layer specs, parameters, batch-norm statistics and
/// the dropout random stream.
#[derive(Clone, Debug)]
pub struct Network<T: Element> {
    input_shape: Vec<usize>,
    specs: Vec<LayerSpec>,
    shapes: Vec<Vec<usize>>,
    layers: Vec<Layer>,
    params: Vec<Param<T>>,
    buffers: Vec<Buffer<T>>,
    mode: Mode,
    rng: Rng,
    cache: Option<Vec<Cache<T>>>,
}

/// Build the plant-disease CNN with He-uniform weights drawn from `seed`.
pub fn build_plantnet<T: Element>(config: &PlantNetConfig, seed: u64) -> Result<Network<T>> {
    Network::from_specs(&config.input_shape(), config.specs()?, seed)
}

impl<T: Element> Network<T> {
    /// Build a network and initialize its parameters.
    ///
    /// Conv and dense weights are uniform in `±sqrt(6 / fan_in)`, biases zero,
    /// batch-norm γ = 1, β = 0 with running statistics 0/1.
    pub fn from_specs(input_shape: &[usize], specs: Vec<LayerSpec>, seed: u64) -> Result<Self> {
        let mut init_rng = Rng::derive(seed, &[0x1417]);
        let mut net = Self::allocate(input_shape, specs, seed)?;
        for (layer, spec_in) in net.layers.iter().zip(
            std::iter::once(net.input_shape.clone()).chain(net.shapes.iter().cloned()),
        ) {
            let (w, fan_in) = match *layer {
                Layer::Conv2d { kernel, .. } => {
                    let s = net.params[kernel].value.shape();
                    (kernel, s[0] * s[1] * s[2])
                }
                Layer::Dense { weight, .. } => (weight, spec_in[0]),
                _ => continue,
            };
            let limit = (6.0 / fan_in as f64).sqrt();
            for v in net.params[w].value.data_mut() {
                *v = T::of(init_rng.uniform(-limit, limit));
            }
        }
        Ok(net)
    }

    /// Structure with zero weights, unit γ and unit running variance.
    pub(crate) fn allocate(input_shape: &[usize], specs: Vec<LayerSpec>, seed: u64) -> Result<Self> {
        let shapes = infer_shapes(input_shape, &specs)?;
        let mut params = Vec::new();
        let mut buffers = Vec::new();
        let mut layers = Vec::with_capacity(specs.len());
        let mut prev = input_shape.to_vec();
        for (i, spec) in specs.iter().enumerate() {
            let tag = format!("{i:02}_{}", spec.kind());
            let mut param = |name: &str, shape: Vec<usize>, fill: f64| -> Result<usize> {
                params.push(Param {
                    id: format!("{tag}.{name}"),
                    value: Tensor::full(shape, T::of(fill))?,
                    grad: None,
                });
                Ok(params.len() - 1)
            };
            let layer = match *spec {
                LayerSpec::Conv2d {
                    filters,
                    kernel,
                    stride,
                    padding,
                } => Layer::Conv2d {
                    kernel: param("kernel", vec![kernel, kernel, prev[2], filters], 0.0)?,
                    bias: param("bias", vec![filters], 0.0)?,
                    stride,
                    padding,
                },
                LayerSpec::Relu => Layer::Relu,
                LayerSpec::BatchNorm { eps, momentum } => {
                    let c = *prev.last().expect("non-empty shape");
                    let gamma = param("gamma", vec![c], 1.0)?;
                    let beta = param("beta", vec![c], 0.0)?;
                    buffers.push(Buffer {
                        id: format!("{tag}.running_mean"),
                        value: Tensor::zeros(vec![c])?,
                    });
                    buffers.push(Buffer {
                        id: format!("{tag}.running_var"),
                        value: Tensor::full(vec![c], T::one())?,
                    });
                    Layer::BatchNorm {
                        gamma,
                        beta,
                        running_mean: buffers.len() - 2,
                        running_var: buffers.len() - 1,
                        eps,
                        momentum,
                    }
                }
                LayerSpec::MaxPool {
                    pool,
                    stride,
                    padding,
                } => Layer::MaxPool {
                    pool,
                    stride,
                    padding,
                },
                LayerSpec::Dropout { rate } => {
                    if !(0.0..1.0).contains(&rate) {
                        return Err(Error::InvalidArgument(format!(
                            "dropout rate {rate} outside [0, 1)"
                        )));
                    }
                    Layer::Dropout { rate }
                }
                LayerSpec::Flatten => Layer::Flatten,
                LayerSpec::Dense { units } => Layer::Dense {
                    weight: param("weight", vec![prev[0], units], 0.0)?,
                    bias: param("bias", vec![units], 0.0)?,
                },
                LayerSpec::Softmax => {
                    if i + 1 != specs.len() {
                        return Err(Error::InvalidArgument(
                            "softmax must be the final layer".into(),
                        ));
                    }
                    Layer::Softmax
                }
            };
            layers.push(layer);
            prev = shapes[i].clone();
        }
        Ok(Self {
            input_shape: input_shape.to_vec(),
            specs,
            shapes,
            layers,
            params,
            buffers,
            mode: Mode::Eval,
            rng: Rng::derive(seed, &[0xD20F]),
            cache: None,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    /// Per-sample output shape of every layer.
    pub fn output_shapes(&self) -> &[Vec<usize>] {
        &self.shapes
    }

    pub fn classes(&self) -> usize {
        self.shapes.last().map_or(0, |s| s[0])
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn param(&self, id: &str) -> Option<&Param<T>> {
        self.params.iter().find(|p| p.id == id)
    }

    pub fn buffers(&self) -> &[Buffer<T>] {
        &self.buffers
    }

    pub fn buffers_mut(&mut self) -> &mut [Buffer<T>] {
        &mut self.buffers
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn dropout_rng(&self) -> &Rng {
        &self.rng
    }

    pub fn set_dropout_rng(&mut self, rng: Rng) {
        self.rng = rng;
    }

    pub fn clear_grads(&mut self) {
        for p in &mut self.params {
            p.grad = None;
        }
    }

    fn check_input(&self, batch: &Tensor<T>) -> Result<()> {
        if batch.rank() != self.input_shape.len() + 1 || batch.shape()[1..] != self.input_shape[..]
        {
            return Err(shape_err(
                "forward",
                format!(
                    "batch {:?} does not match network input (N, {})",
                    batch.shape(),
                    self.input_shape
                        .iter()
                        .map(|d| d.to_string())
                        .collect::<Vec<_>>()
                        .join(", ")
                ),
            ));
        }
        Ok(())
    }

    /// Run the stack and return class probabilities `[N, classes]`.
    ///
    /// Train mode caches activations for [`Network::backward`], applies
    /// dropout and uses (and updates) batch statistics. Eval mode is a pure
    /// function of the input.
    pub fn forward(&mut self, batch: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        self.mode = mode;
        self.cache = None;
        match mode {
            Mode::Eval => self.predict(batch),
            Mode::Train => self.forward_train(batch),
        }
    }

    /// Eval-mode forward pass. Borrows the network immutably.
    pub fn predict(&self, batch: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(batch)?;
        let n = batch.shape()[0];
        let mut x = batch.clone();
        for layer in &self.layers {
            x = match *layer {
                Layer::Conv2d {
                    kernel,
                    bias,
                    stride,
                    padding,
                } => tensor::conv2d_forward(
                    &x,
                    &self.params[kernel].value,
                    &self.params[bias].value,
                    stride,
                    padding,
                )?,
                Layer::Relu => relu(&x),
                Layer::BatchNorm {
                    gamma,
                    beta,
                    running_mean,
                    running_var,
                    eps,
                    ..
                } => batchnorm_forward_eval(
                    &x,
                    &self.params[gamma].value,
                    &self.params[beta].value,
                    &self.buffers[running_mean].value,
                    &self.buffers[running_var].value,
                    eps,
                )?,
                Layer::MaxPool {
                    pool,
                    stride,
                    padding,
                } => maxpool_forward(&x, pool, stride, padding)?.0,
                Layer::Dropout { .. } => x,
                Layer::Flatten => {
                    let flat = x.len() / n;
                    x.reshape(vec![n, flat])?
                }
                Layer::Dense { weight, bias } => {
                    dense_forward(&x, &self.params[weight].value, &self.params[bias].value)?
                }
                Layer::Softmax => softmax(&x),
            };
        }
        Ok(x)
    }

    fn forward_train(&mut self, batch: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(batch)?;
        let n = batch.shape()[0];
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut x = batch.clone();
        for layer in &self.layers {
            let (y, cache) = match *layer {
                Layer::Conv2d {
                    kernel,
                    bias,
                    stride,
                    padding,
                } => {
                    let y = tensor::conv2d_forward(
                        &x,
                        &self.params[kernel].value,
                        &self.params[bias].value,
                        stride,
                        padding,
                    )?;
                    (y, Cache::Input(x))
                }
                Layer::Relu => (relu(&x), Cache::Input(x)),
                Layer::BatchNorm {
                    gamma,
                    beta,
                    running_mean,
                    running_var,
                    eps,
                    momentum,
                } => {
                    let (mean_buf, var_buf) = pair_mut(&mut self.buffers, running_mean, running_var);
                    let (y, c) = batchnorm_forward_train(
                        &x,
                        &self.params[gamma].value,
                        &self.params[beta].value,
                        &mut mean_buf.value,
                        &mut var_buf.value,
                        eps,
                        momentum,
                    )?;
                    (y, Cache::BatchNorm(c))
                }
                Layer::MaxPool {
                    pool,
                    stride,
                    padding,
                } => {
                    let (y, map) = maxpool_forward(&x, pool, stride, padding)?;
                    (y, Cache::Pool(map))
                }
                Layer::Dropout { rate } => {
                    let (y, mask) = dropout_forward(&x, rate, &mut self.rng, Mode::Train)?;
                    (y, Cache::Dropout(mask))
                }
                Layer::Flatten => {
                    let shape = x.shape().to_vec();
                    let flat = x.len() / n;
                    (x.reshape(vec![n, flat])?, Cache::Shape(shape))
                }
                Layer::Dense { weight, bias } => {
                    let y =
                        dense_forward(&x, &self.params[weight].value, &self.params[bias].value)?;
                    (y, Cache::Input(x))
                }
                Layer::Softmax => (softmax(&x), Cache::None),
            };
            caches.push(cache);
            x = y;
        }
        self.cache = Some(caches);
        Ok(x)
    }

    /// ReLU sign bits and max-pool argmax indices from the last train-mode
    /// forward. Equal patterns mean the loss is locally smooth between two inputs.
    pub(crate) fn activation_pattern(&self) -> Option<Vec<usize>> {
        let caches = self.cache.as_ref()?;
        let mut pattern = Vec::new();
        for (layer, cache) in self.layers.iter().zip(caches) {
            match (layer, cache) {
                (Layer::Relu, Cache::Input(x)) => {
                    pattern.extend(x.data().iter().map(|&v| (v > T::zero()) as usize));
                }
                (_, Cache::Pool(map)) => pattern.extend_from_slice(map.indices()),
                _ => {}
            }
        }
        Some(pattern)
    }

    /// Backpropagate the loss's logits gradient and fill every gradient slot.
    ///
    /// The final softmax is fused with the cross-entropy, so the incoming
    /// gradient is taken with respect to the pre-softmax logits.
    pub fn backward(&mut self, loss: &LossValue<T>) -> Result<()> {
        let caches = self.cache.take().ok_or_else(|| {
            Error::State("backward requires a preceding train-mode forward".into())
        })?;
        let Some(Layer::Softmax) = self.layers.last() else {
            return Err(Error::State("backward expects a softmax output layer".into()));
        };
        let mut grad = loss.logits_grad.clone();
        let n = grad.shape()[0];
        let expected = [n, self.classes()];
        if grad.shape() != expected {
            return Err(shape_err(
                "backward",
                format!("logits gradient {:?}, expected {expected:?}", grad.shape()),
            ));
        }
        let last = self.layers.len() - 1;
        for (i, cache) in caches.into_iter().enumerate().take(last).rev() {
            let need_input_grad = i > 0;
            grad = match (&self.layers[i], cache) {
                (
                    &Layer::Conv2d {
                        kernel,
                        bias,
                        stride,
                        padding,
                    },
                    Cache::Input(x),
                ) => {
                    let (gi, gk, gb) = conv2d_backward_impl(
                        &x,
                        &self.params[kernel].value,
                        &grad,
                        stride,
                        padding,
                        need_input_grad,
                    )?;
                    self.params[kernel].grad = Some(gk);
                    self.params[bias].grad = Some(gb);
                    match gi {
                        Some(g) => g,
                        None => x,
                    }
                }
                (Layer::Relu, Cache::Input(x)) => relu_backward(&x, &grad)?,
                (&Layer::BatchNorm { gamma, beta, .. }, Cache::BatchNorm(c)) => {
                    let (gi, gg, gb) = batchnorm_backward(&c, &self.params[gamma].value, &grad)?;
                    self.params[gamma].grad = Some(gg);
                    self.params[beta].grad = Some(gb);
                    gi
                }
                (Layer::MaxPool { .. }, Cache::Pool(map)) => maxpool_backward(&map, &grad)?,
                (Layer::Dropout { .. }, Cache::Dropout(mask)) => {
                    dropout_backward(mask.as_ref(), &grad)?
                }
                (Layer::Flatten, Cache::Shape(shape)) => grad.reshape(shape)?,
                (&Layer::Dense { weight, bias }, Cache::Input(x)) => {
                    let (gi, gw, gb) = dense_backward(&x, &self.params[weight].value, &grad)?;
                    self.params[weight].grad = Some(gw);
                    self.params[bias].grad = Some(gb);
                    gi
                }
                (layer, _) => return Err(layers::missing_cache(&format!("{layer:?}"))),
            };
        }
        Ok(())
    }
}

fn pair_mut<B>(items: &mut [B], a: usize, b: usize) -> (&mut B, &mut B) {
    assert!(a < b, "buffer indices are allocated in order");
    let (lo, hi) = items.split_at_mut(b);
    (&mut lo[a], &mut hi[0])
}
