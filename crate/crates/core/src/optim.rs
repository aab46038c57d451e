//! RMSprop, Adam and AMSgrad as per-parameter state machines.
//!
//! All three place ε inside the square root of the denominator. AMSgrad
//! steps with the raw first moment μ (no bias correction), while Adam uses
//! bias-corrected μ̂ and λ̂ with `1 − βᵗ` denominators.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, shape_err, Error, Result};
use crate::network::Network;
use crate::tensor::{Element, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Algorithm {
    RmsProp,
    Adam,
    AmsGrad,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::RmsProp, Algorithm::Adam, Algorithm::AmsGrad];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::RmsProp => "rmsprop",
            Algorithm::Adam => "adam",
            Algorithm::AmsGrad => "amsgrad",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| {
                invalid(format!(
                    "unknown optimizer {s:?}; expected one of rmsprop, adam, amsgrad"
                ))
            })
    }
}

/// Hyperparameters. `beta` is the RMSprop decay; `beta1`/`beta2` drive Adam and AMSgrad.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptConfig {
    pub algorithm: Algorithm,
    pub lr: f64,
    pub beta: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl OptConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            lr: 0.001,
            beta: 0.95,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn with_lr(mut self, lr: f64) -> Self {
        self.lr = lr;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(invalid(format!("learning rate {} must be positive", self.lr)));
        }
        for (name, b) in [("beta", self.beta), ("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(invalid(format!("{name} = {b} outside [0, 1)")));
            }
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(invalid(format!("eps {} must be positive", self.eps)));
        }
        Ok(())
    }
}

/// Accumulators of one parameter, all zero-initialized.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamState<T> {
    /// Second-moment EMA λ.
    pub lambda: Tensor<T>,
    /// First-moment EMA μ (Adam, AMSgrad).
    pub mu: Option<Tensor<T>>,
    /// Running elementwise maximum of λ (AMSgrad).
    pub lambda_max: Option<Tensor<T>>,
}

impl<T: Element> ParamState<T> {
    pub fn zeros(shape: &[usize], algorithm: Algorithm) -> Result<Self> {
        let z = || Tensor::zeros(shape.to_vec());
        Ok(Self {
            lambda: z()?,
            mu: match algorithm {
                Algorithm::RmsProp => None,
                _ => Some(z()?),
            },
            lambda_max: match algorithm {
                Algorithm::AmsGrad => Some(z()?),
                _ => None,
            },
        })
    }

    fn matches(&self, algorithm: Algorithm) -> bool {
        match algorithm {
            Algorithm::RmsProp => self.mu.is_none() && self.lambda_max.is_none(),
            Algorithm::Adam => self.mu.is_some() && self.lambda_max.is_none(),
            Algorithm::AmsGrad => self.mu.is_some() && self.lambda_max.is_some(),
        }
    }
}

/// Optimizer state: step counter `t` (0 before the first step) and the
/// accumulators keyed by parameter id.
#[derive(Clone, Debug, PartialEq)]
pub struct OptState<T> {
    pub t: u64,
    pub slots: BTreeMap<String, ParamState<T>>,
}

impl<T> Default for OptState<T> {
    fn default() -> Self {
        Self {
            t: 0,
            slots: BTreeMap::new(),
        }
    }
}

fn check_operands<T: Element>(
    op: &'static str,
    w: &Tensor<T>,
    g: &Tensor<T>,
    state: &ParamState<T>,
) -> Result<()> {
    let others = [Some(g), Some(&state.lambda), state.mu.as_ref(), state.lambda_max.as_ref()];
    for t in others.into_iter().flatten() {
        if t.shape() != w.shape() {
            return Err(shape_err(
                op,
                format!("parameter {:?} vs operand {:?}", w.shape(), t.shape()),
            ));
        }
    }
    if let Some(i) = g.data().iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!(
            "{op}: gradient element {i} is {}",
            g.data()[i]
        )));
    }
    Ok(())
}

/// λ ← βλ + (1−β)g²;  ω ← ω − α·g / √(λ + ε)
pub fn rmsprop_step<T: Element>(
    w: &mut Tensor<T>,
    g: &Tensor<T>,
    state: &mut ParamState<T>,
    cfg: &OptConfig,
) -> Result<()> {
    check_operands("rmsprop_step", w, g, state)?;
    let (beta, one_minus) = (T::of(cfg.beta), T::of(1.0 - cfg.beta));
    let (lr, eps) = (T::of(cfg.lr), T::of(cfg.eps));
    for ((w, &g), l) in w
        .data_mut()
        .iter_mut()
        .zip(g.data())
        .zip(state.lambda.data_mut())
    {
        *l = beta * *l + one_minus * g * g;
        *w -= lr * g / (*l + eps).sqrt();
    }
    Ok(())
}

/// μ ← β₁μ + (1−β₁)g;  λ ← β₂λ + (1−β₂)g²;
/// ω ← ω − α·μ̂ / √(λ̂ + ε) with μ̂ = μ/(1−β₁ᵗ), λ̂ = λ/(1−β₂ᵗ).
///
/// `t` is the 1-based index of this step.
pub fn adam_step<T: Element>(
    w: &mut Tensor<T>,
    g: &Tensor<T>,
    state: &mut ParamState<T>,
    t: u64,
    cfg: &OptConfig,
) -> Result<()> {
    check_operands("adam_step", w, g, state)?;
    if t == 0 {
        return Err(invalid("adam_step needs a 1-based step index"));
    }
    let mu = state
        .mu
        .as_mut()
        .ok_or_else(|| Error::State("adam state has no first-moment accumulator".into()))?;
    let (b1, b1c) = (T::of(cfg.beta1), T::of(1.0 - cfg.beta1));
    let (b2, b2c) = (T::of(cfg.beta2), T::of(1.0 - cfg.beta2));
    let correct1 = T::of(1.0 - cfg.beta1.powf(t as f64));
    let correct2 = T::of(1.0 - cfg.beta2.powf(t as f64));
    let (lr, eps) = (T::of(cfg.lr), T::of(cfg.eps));
    for (((w, &g), m), l) in w
        .data_mut()
        .iter_mut()
        .zip(g.data())
        .zip(mu.data_mut())
        .zip(state.lambda.data_mut())
    {
        *m = b1 * *m + b1c * g;
        *l = b2 * *l + b2c * g * g;
        let m_hat = *m / correct1;
        let l_hat = *l / correct2;
        *w -= lr * m_hat / (l_hat + eps).sqrt();
    }
    Ok(())
}

/// μ ← β₁μ + (1−β₁)g;  λ ← β₂λ + (1−β₂)g²;  λ̂ ← max(λ̂, λ);
/// ω ← ω − α·μ / √(λ̂ + ε)
pub fn amsgrad_step<T: Element>(
    w: &mut Tensor<T>,
    g: &Tensor<T>,
    state: &mut ParamState<T>,
    cfg: &OptConfig,
) -> Result<()> {
    check_operands("amsgrad_step", w, g, state)?;
    let (Some(mu), Some(l_max)) = (state.mu.as_mut(), state.lambda_max.as_mut()) else {
        return Err(Error::State(
            "amsgrad state needs first-moment and max accumulators".into(),
        ));
    };
    let (b1, b1c) = (T::of(cfg.beta1), T::of(1.0 - cfg.beta1));
    let (b2, b2c) = (T::of(cfg.beta2), T::of(1.0 - cfg.beta2));
    let (lr, eps) = (T::of(cfg.lr), T::of(cfg.eps));
    for ((((w, &g), m), l), lm) in w
        .data_mut()
        .iter_mut()
        .zip(g.data())
        .zip(mu.data_mut())
        .zip(state.lambda.data_mut())
        .zip(l_max.data_mut())
    {
        *m = b1 * *m + b1c * g;
        *l = b2 * *l + b2c * g * g;
        if *l > *lm {
            *lm = *l;
        }
        *w -= lr * *m / (*lm + eps).sqrt();
    }
    Ok(())
}

/// Dispatch on `cfg.algorithm`; `t` is the 1-based step index.
pub fn step<T: Element>(
    w: &mut Tensor<T>,
    g: &Tensor<T>,
    state: &mut ParamState<T>,
    t: u64,
    cfg: &OptConfig,
) -> Result<()> {
    match cfg.algorithm {
        Algorithm::RmsProp => rmsprop_step(w, g, state, cfg),
        Algorithm::Adam => adam_step(w, g, state, t, cfg),
        Algorithm::AmsGrad => amsgrad_step(w, g, state, cfg),
    }
}

/// Update every parameter of `net` from its gradient slot and advance `t` once.
///
/// All gradients are validated before anything is modified. Gradient slots
/// are cleared afterwards, so a second call without a new backward pass fails.
pub fn apply<T: Element>(net: &mut Network<T>, state: &mut OptState<T>, cfg: &OptConfig) -> Result<()> {
    cfg.validate()?;
    for p in net.params() {
        let g = p
            .grad
            .as_ref()
            .ok_or_else(|| Error::State(format!("parameter {} has no gradient", p.id)))?;
        if g.shape() != p.value.shape() {
            return Err(shape_err(
                "apply",
                format!("{}: gradient {:?} vs value {:?}", p.id, g.shape(), p.value.shape()),
            ));
        }
        if !g.is_finite() {
            return Err(Error::NonFinite(format!("gradient of {}", p.id)));
        }
        if let Some(slot) = state.slots.get(&p.id) {
            if !slot.matches(cfg.algorithm) || slot.lambda.shape() != p.value.shape() {
                return Err(Error::State(format!(
                    "optimizer state for {} does not fit {} / {:?}",
                    p.id,
                    cfg.algorithm,
                    p.value.shape()
                )));
            }
        }
    }
    state.t += 1;
    let t = state.t;
    for p in net.params_mut() {
        let g = p.grad.take().expect("validated above");
        let slot = match state.slots.entry(p.id.clone()) {
            std::collections::btree_map::Entry::Occupied(e) => e.into_mut(),
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(ParamState::zeros(p.value.shape(), cfg.algorithm)?)
            }
        };
        step(&mut p.value, &g, slot, t, cfg)?;
    }
    Ok(())
}

/// Configuration plus state, stepping a network after each backward pass.
#[derive(Clone, Debug)]
pub struct Optimizer<T> {
    pub config: OptConfig,
    pub state: OptState<T>,
}

impl<T: Element> Optimizer<T> {
    pub fn new(config: OptConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            state: OptState::default(),
        })
    }

    pub fn step(&mut self, net: &mut Network<T>) -> Result<()> {
        apply(net, &mut self.state, &self.config)
    }
}
