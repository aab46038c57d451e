//! Declarative layer descriptions and the plant-disease CNN family.

use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::tensor::{window_extent, Padding};

/// One layer of a sequential model.
#[derive(Clone, Debug, PartialEq)]
pub enum LayerSpec {
    Conv2d {
        filters: usize,
        kernel: usize,
        stride: usize,
        padding: Padding,
    },
    Relu,
    BatchNorm {
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
        units: usize,
    },
    Softmax,
}

impl LayerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::Relu => "activation_relu",
            LayerSpec::BatchNorm { .. } => "batchnorm",
            LayerSpec::MaxPool { .. } => "maxpool",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Softmax => "activation_softmax",
        }
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let spatial = |what: &str| -> Result<(usize, usize, usize)> {
            match input {
                &[h, w, c] => Ok((h, w, c)),
                _ => Err(invalid(format!("{what} needs an H×W×C input, got {input:?}"))),
            }
        };
        match *self {
            LayerSpec::Conv2d {
                filters,
                kernel,
                stride,
                padding,
            } => {
                let (h, w, _) = spatial("conv2d")?;
                if filters == 0 {
                    return Err(invalid("conv2d needs at least one filter"));
                }
                let (oh, _) = window_extent(h, kernel, stride, padding)?;
                let (ow, _) = window_extent(w, kernel, stride, padding)?;
                Ok(vec![oh, ow, filters])
            }
            LayerSpec::MaxPool {
                pool,
                stride,
                padding,
            } => {
                let (h, w, c) = spatial("maxpool")?;
                let (oh, _) = window_extent(h, pool, stride, padding)?;
                let (ow, _) = window_extent(w, pool, stride, padding)?;
                Ok(vec![oh, ow, c])
            }
            LayerSpec::Relu | LayerSpec::BatchNorm { .. } | LayerSpec::Dropout { .. } => {
                Ok(input.to_vec())
            }
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Dense { units } => match input {
                [_] if units > 0 => Ok(vec![units]),
                [_] => Err(invalid("dense layer needs at least one unit")),
                _ => Err(invalid(format!("dense needs a flat input, got {input:?}"))),
            },
            LayerSpec::Softmax => match input {
                [_] => Ok(input.to_vec()),
                _ => Err(invalid(format!("softmax needs a flat input, got {input:?}"))),
            },
        }
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.kind())?;
        match self {
            LayerSpec::Conv2d {
                filters,
                kernel,
                stride,
                padding,
            } => write!(
                f,
                " filters={filters} kernel={kernel} stride={stride} padding={padding}"
            ),
            LayerSpec::BatchNorm { eps, momentum } => write!(f, " eps={eps} momentum={momentum}"),
            LayerSpec::MaxPool {
                pool,
                stride,
                padding,
            } => write!(f, " pool={pool} stride={stride} padding={padding}"),
            LayerSpec::Dropout { rate } => write!(f, " rate={rate}"),
            LayerSpec::Dense { units } => write!(f, " units={units}"),
            LayerSpec::Relu | LayerSpec::Flatten | LayerSpec::Softmax => Ok(()),
        }
    }
}

impl FromStr for LayerSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split_whitespace();
        let kind = parts.next().ok_or_else(|| Error::Format("empty layer line".into()))?;
        let mut fields = std::collections::BTreeMap::new();
        for p in parts {
            let (k, v) = p
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("bad layer field {p:?}")))?;
            fields.insert(k, v);
        }
        let get = |key: &str| -> Result<&str> {
            fields
                .get(key)
                .copied()
                .ok_or_else(|| Error::Format(format!("{kind} layer missing {key}")))
        };
        let num = |key: &str| -> Result<usize> {
            get(key)?
                .parse()
                .map_err(|_| Error::Format(format!("{kind}.{key} is not an integer")))
        };
        let real = |key: &str| -> Result<f64> {
            get(key)?
                .parse()
                .map_err(|_| Error::Format(format!("{kind}.{key} is not a number")))
        };
        Ok(match kind {
            "conv2d" => LayerSpec::Conv2d {
                filters: num("filters")?,
                kernel: num("kernel")?,
                stride: num("stride")?,
                padding: get("padding")?.parse()?,
            },
            "activation_relu" => LayerSpec::Relu,
            "batchnorm" => LayerSpec::BatchNorm {
                eps: real("eps")?,
                momentum: real("momentum")?,
            },
            "maxpool" => LayerSpec::MaxPool {
                pool: num("pool")?,
                stride: num("stride")?,
                padding: get("padding")?.parse()?,
            },
            "dropout" => LayerSpec::Dropout { rate: real("rate")? },
            "flatten" => LayerSpec::Flatten,
            "dense" => LayerSpec::Dense { units: num("units")? },
            "activation_softmax" => LayerSpec::Softmax,
            other => return Err(Error::Format(format!("unknown layer kind {other:?}"))),
        })
    }
}

/// Per-sample output shape of every layer.
pub fn infer_shapes(input: &[usize], specs: &[LayerSpec]) -> Result<Vec<Vec<usize>>> {
    let mut shape = input.to_vec();
    let mut out = Vec::with_capacity(specs.len());
    for (i, spec) in specs.iter().enumerate() {
        shape = spec
            .output_shape(&shape)
            .map_err(|e| invalid(format!("layer {i} ({}): {e}", spec.kind())))?;
        out.push(shape.clone());
    }
    Ok(out)
}

/// Keras-style shape string with an unknown batch: `(None, 85, 85, 32)`.
pub fn format_shape(shape: &[usize]) -> String {
    let mut s = String::from("(None");
    for d in shape {
        s.push_str(&format!(", {d}"));
    }
    s.push(')');
    s
}

/// Positive rational multiplier applied to every filter and unit count.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WidthScale {
    num: u32,
    den: u32,
}

impl WidthScale {
    pub const ONE: WidthScale = WidthScale { num: 1, den: 1 };

    pub fn new(num: u32, den: u32) -> Result<Self> {
        if num == 0 || den == 0 {
            return Err(invalid(format!("width scale {num}/{den} must be positive")));
        }
        Ok(Self { num, den })
    }

    /// `floor(base · num / den)`; zero is rejected.
    pub fn apply(self, base: usize) -> Result<usize> {
        let scaled = base * self.num as usize / self.den as usize;
        if scaled == 0 {
            return Err(invalid(format!(
                "width scale {self} reduces a {base}-wide layer to zero units"
            )));
        }
        Ok(scaled)
    }
}

impl Default for WidthScale {
    fn default() -> Self {
        Self::ONE
    }
}

impl fmt::Display for WidthScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl FromStr for WidthScale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || invalid(format!("width scale {s:?} is not of the form N or N/D"));
        match s.split_once('/') {
            Some((n, d)) => Self::new(
                n.trim().parse().map_err(|_| bad())?,
                d.trim().parse().map_err(|_| bad())?,
            ),
            None => Self::new(s.trim().parse().map_err(|_| bad())?, 1),
        }
    }
}

/// Hyperparameters of the plant-disease CNN family.
#[derive(Clone, Debug, PartialEq)]
pub struct PlantNetConfig {
    pub input_hw: usize,
    pub channels: usize,
    pub classes: usize,
    pub width_scale: WidthScale,
    /// Dropout after each convolution block.
    pub dropout_conv: f64,
    /// Dropout after the hidden dense block.
    pub dropout_dense: f64,
    pub bn_eps: f64,
    pub bn_momentum: f64,
}

impl Default for PlantNetConfig {
    fn default() -> Self {
        Self {
            input_hw: 256,
            channels: 3,
            classes: 15,
            width_scale: WidthScale::ONE,
            dropout_conv: 0.25,
            dropout_dense: 0.5,
            bn_eps: 1e-3,
            bn_momentum: 0.99,
        }
    }
}

impl PlantNetConfig {
    /// The 28 layers: three conv blocks (32, 64×2, 128×2 filters, each conv
    /// followed by ReLU and batch norm) separated by 3×3 max pools with strides
    /// 3/2/2 and padding valid/valid/same, then dense 1024 and a softmax head.
    pub fn specs(&self) -> Result<Vec<LayerSpec>> {
        if self.classes < 2 {
            return Err(invalid("a classifier needs at least two classes"));
        }
        if self.channels == 0 {
            return Err(invalid("input needs at least one channel"));
        }
        let w = |base: usize| self.width_scale.apply(base);
        let bn = LayerSpec::BatchNorm {
            eps: self.bn_eps,
            momentum: self.bn_momentum,
        };
        let conv = |filters| LayerSpec::Conv2d {
            filters,
            kernel: 3,
            stride: 1,
            padding: Padding::Same,
        };
        let pool = |stride, padding| LayerSpec::MaxPool {
            pool: 3,
            stride,
            padding,
        };
        let drop_conv = LayerSpec::Dropout {
            rate: self.dropout_conv,
        };
        let (c32, c64, c128, d1024) = (w(32)?, w(64)?, w(128)?, w(1024)?);
        Ok(vec![
            conv(c32),
            LayerSpec::Relu,
            bn.clone(),
            pool(3, Padding::Valid),
            drop_conv.clone(),
            conv(c64),
            LayerSpec::Relu,
            bn.clone(),
            conv(c64),
            LayerSpec::Relu,
            bn.clone(),
            pool(2, Padding::Valid),
            drop_conv.clone(),
            conv(c128),
            LayerSpec::Relu,
            bn.clone(),
            conv(c128),
            LayerSpec::Relu,
            bn.clone(),
            pool(2, Padding::Same),
            drop_conv,
            LayerSpec::Flatten,
            LayerSpec::Dense { units: d1024 },
            LayerSpec::Relu,
            bn,
            LayerSpec::Dropout {
                rate: self.dropout_dense,
            },
            LayerSpec::Dense {
                units: self.classes,
            },
            LayerSpec::Softmax,
        ])
    }

    pub fn input_shape(&self) -> [usize; 3] {
        [self.input_hw, self.input_hw, self.channels]
    }

    /// Per-layer output shapes, computed without allocating parameters.
    pub fn output_shapes(&self) -> Result<Vec<Vec<usize>>> {
        infer_shapes(&self.input_shape(), &self.specs()?)
    }
}
