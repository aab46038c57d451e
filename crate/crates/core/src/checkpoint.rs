//! Model checkpoint file.
//!
//! A plain-text `key=value` header terminated by an `end_header` line, then
//! raw little-endian tensor data. Layout:
//!
//! ```text
//! format=plantnet-model/1
//! precision=f32
//! input_shape=32,32,3
//! layer.00=conv2d filters=4 kernel=3 stride=1 padding=same
//! ...
//! dropout_rng=<seed>,<stream>,<word position>
//! meta.<key>=<value>
//! optimizer=adam            (optional block)
//! optimizer.lr=0.001
//! ...
//! optimizer.t=120
//! tensor=param:00_conv2d.kernel 3,3,3,4 0 108
//! tensor=buffer:02_batchnorm.running_mean 4 108 4
//! tensor=opt.mu:00_conv2d.kernel 3,3,3,4 112 108
//! end_header
//! <data>
//! ```
//!
//! Offsets and lengths count elements. Encoding is a pure function of the
//! network, optimizer and metadata, so decode → encode reproduces the bytes.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::network::{LayerSpec, Network};
use crate::optim::{Algorithm, OptConfig, OptState, Optimizer, ParamState};
use crate::tensor::{Element, Precision, Tensor};
use crate::Rng;

const FORMAT: &str = "plantnet-model/1";
const END: &str = "end_header";

pub struct Checkpoint<T: Element> {
    pub network: Network<T>,
    pub optimizer: Option<Optimizer<T>>,
    pub meta: BTreeMap<String, String>,
}

fn fmt_shape(shape: &[usize]) -> String {
    shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(",")
}

fn parse_shape(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|d| {
            d.parse()
                .map_err(|_| Error::Format(format!("bad shape {s:?}")))
        })
        .collect()
}

fn check_meta(key: &str, value: &str) -> Result<()> {
    if key.is_empty() || key.contains(['=', '\n', '\r']) || value.contains(['\n', '\r']) {
        return Err(Error::InvalidArgument(format!(
            "metadata entry {key:?} cannot be stored in a line-oriented header"
        )));
    }
    Ok(())
}

pub fn encode<T: Element>(
    network: &Network<T>,
    optimizer: Option<&Optimizer<T>>,
    meta: &BTreeMap<String, String>,
) -> Result<Vec<u8>> {
    let mut header = String::new();
    let mut line = |k: &str, v: &str| {
        header.push_str(k);
        header.push('=');
        header.push_str(v);
        header.push('\n');
    };
    line("format", FORMAT);
    line("precision", T::PRECISION.as_str());
    line("input_shape", &fmt_shape(network.input_shape()));
    for (i, spec) in network.specs().iter().enumerate() {
        line(&format!("layer.{i:02}"), &spec.to_string());
    }
    let (seed, stream, pos) = network.dropout_rng().position();
    line("dropout_rng", &format!("{seed},{stream},{pos}"));
    for (k, v) in meta {
        check_meta(k, v)?;
        line(&format!("meta.{k}"), v);
    }

    let mut tensors: Vec<(String, &Tensor<T>)> = Vec::new();
    for p in network.params() {
        tensors.push((format!("param:{}", p.id), &p.value));
    }
    for b in network.buffers() {
        tensors.push((format!("buffer:{}", b.id), &b.value));
    }
    if let Some(opt) = optimizer {
        let c = &opt.config;
        line("optimizer", c.algorithm.as_str());
        line("optimizer.lr", &c.lr.to_string());
        line("optimizer.beta", &c.beta.to_string());
        line("optimizer.beta1", &c.beta1.to_string());
        line("optimizer.beta2", &c.beta2.to_string());
        line("optimizer.eps", &c.eps.to_string());
        line("optimizer.t", &opt.state.t.to_string());
        for (id, slot) in &opt.state.slots {
            tensors.push((format!("opt.lambda:{id}"), &slot.lambda));
            if let Some(mu) = &slot.mu {
                tensors.push((format!("opt.mu:{id}"), mu));
            }
            if let Some(lm) = &slot.lambda_max {
                tensors.push((format!("opt.lambda_max:{id}"), lm));
            }
        }
    }
    let mut offset = 0;
    for (name, t) in &tensors {
        line(
            "tensor",
            &format!("{name} {} {offset} {}", fmt_shape(t.shape()), t.len()),
        );
        offset += t.len();
    }
    header.push_str(END);
    header.push('\n');

    let mut bytes = header.into_bytes();
    bytes.reserve(offset * T::BYTES);
    for (_, t) in &tensors {
        for &v in t.data() {
            v.write_le(&mut bytes);
        }
    }
    Ok(bytes)
}

pub fn save<T: Element>(
    path: impl AsRef<Path>,
    network: &Network<T>,
    optimizer: Option<&Optimizer<T>>,
    meta: &BTreeMap<String, String>,
) -> Result<()> {
    std::fs::write(path, encode(network, optimizer, meta)?)?;
    Ok(())
}

struct Header<'a> {
    entries: Vec<(&'a str, &'a str)>,
    data_start: usize,
}

fn split_header(bytes: &[u8]) -> Result<Header<'_>> {
    let mut entries = Vec::new();
    let mut pos = 0;
    loop {
        let rest = &bytes[pos..];
        let nl = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Format("checkpoint header is not terminated".into()))?;
        let text = std::str::from_utf8(&rest[..nl])
            .map_err(|_| Error::Format("checkpoint header is not UTF-8".into()))?;
        pos += nl + 1;
        if text == END {
            break;
        }
        let (k, v) = text
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("header line without '=': {text:?}")))?;
        entries.push((k, v));
    }
    match entries.first() {
        Some(&("format", FORMAT)) => {}
        _ => return Err(Error::Format(format!("not a {FORMAT} file"))),
    }
    Ok(Header {
        entries,
        data_start: pos,
    })
}

/// Storage precision recorded in a checkpoint header.
pub fn peek_precision(bytes: &[u8]) -> Result<Precision> {
    let header = split_header(bytes)?;
    header
        .entries
        .iter()
        .find(|(k, _)| *k == "precision")
        .ok_or_else(|| Error::Format("checkpoint has no precision".into()))?
        .1
        .parse()
}

/// Metadata block of a checkpoint, without decoding tensors.
pub fn peek_meta(bytes: &[u8]) -> Result<BTreeMap<String, String>> {
    let header = split_header(bytes)?;
    Ok(header
        .entries
        .iter()
        .filter_map(|(k, v)| k.strip_prefix("meta.").map(|k| (k.to_string(), v.to_string())))
        .collect())
}

pub fn decode<T: Element>(bytes: &[u8]) -> Result<Checkpoint<T>> {
    let header = split_header(bytes)?;
    let mut fields: BTreeMap<&str, &str> = BTreeMap::new();
    let mut layers = Vec::new();
    let mut meta = BTreeMap::new();
    let mut tensors = Vec::new();
    for &(k, v) in &header.entries {
        if let Some(key) = k.strip_prefix("meta.") {
            meta.insert(key.to_string(), v.to_string());
        } else if k.starts_with("layer.") {
            layers.push(v.parse::<LayerSpec>()?);
        } else if k == "tensor" {
            tensors.push(v);
        } else {
            fields.insert(k, v);
        }
    }
    let field = |k: &str| -> Result<&str> {
        fields
            .get(k)
            .copied()
            .ok_or_else(|| Error::Format(format!("checkpoint header missing {k}")))
    };
    let precision: Precision = field("precision")?.parse()?;
    if precision != T::PRECISION {
        return Err(Error::Format(format!(
            "checkpoint stores {precision} values, loader expects {}",
            T::PRECISION
        )));
    }
    let input_shape = parse_shape(field("input_shape")?)?;
    let mut network = Network::<T>::allocate(&input_shape, layers, 0)?;
    let rng_parts: Vec<&str> = field("dropout_rng")?.split(',').collect();
    let [seed, stream, pos] = rng_parts[..] else {
        return Err(Error::Format("dropout_rng needs seed,stream,position".into()));
    };
    let bad_rng = || Error::Format("dropout_rng is not numeric".into());
    network.set_dropout_rng(Rng::restore(
        seed.parse().map_err(|_| bad_rng())?,
        stream.parse().map_err(|_| bad_rng())?,
        pos.parse().map_err(|_| bad_rng())?,
    ));

    let data = &bytes[header.data_start..];
    let mut loaded: BTreeMap<String, Tensor<T>> = BTreeMap::new();
    let mut expected_end = 0;
    for entry in tensors {
        let parts: Vec<&str> = entry.split(' ').collect();
        let [name, shape, offset, len] = parts[..] else {
            return Err(Error::Format(format!("bad tensor entry {entry:?}")));
        };
        let shape = parse_shape(shape)?;
        let bad = || Error::Format(format!("bad tensor entry {entry:?}"));
        let offset: usize = offset.parse().map_err(|_| bad())?;
        let len: usize = len.parse().map_err(|_| bad())?;
        if offset != expected_end {
            return Err(bad());
        }
        expected_end = offset + len;
        let raw = data
            .get(offset * T::BYTES..(offset + len) * T::BYTES)
            .ok_or_else(|| Error::Format(format!("tensor {name} runs past end of file")))?;
        let values = raw.chunks_exact(T::BYTES).map(T::read_le).collect();
        loaded.insert(name.to_string(), Tensor::new(shape, values)?);
    }
    if data.len() != expected_end * T::BYTES {
        return Err(Error::Format("trailing bytes after tensor data".into()));
    }
    for p in network.params_mut() {
        p.value = take(&mut loaded, format!("param:{}", p.id), p.value.shape())?;
    }
    for b in network.buffers_mut() {
        b.value = take(&mut loaded, format!("buffer:{}", b.id), b.value.shape())?;
    }

    let optimizer = match fields.get("optimizer") {
        None => None,
        Some(alg) => {
            let algorithm: Algorithm = alg.parse()?;
            let num = |k: &str| -> Result<f64> {
                field(k)?
                    .parse()
                    .map_err(|_| Error::Format(format!("{k} is not a number")))
            };
            let config = OptConfig {
                algorithm,
                lr: num("optimizer.lr")?,
                beta: num("optimizer.beta")?,
                beta1: num("optimizer.beta1")?,
                beta2: num("optimizer.beta2")?,
                eps: num("optimizer.eps")?,
            };
            let t = field("optimizer.t")?
                .parse()
                .map_err(|_| Error::Format("optimizer.t is not an integer".into()))?;
            let mut state = OptState { t, ..Default::default() };
            let ids: Vec<String> = loaded
                .keys()
                .filter_map(|k| k.strip_prefix("opt.lambda:").map(str::to_string))
                .collect();
            for id in ids {
                let shape = loaded[&format!("opt.lambda:{id}")].shape().to_vec();
                let lambda = take(&mut loaded, format!("opt.lambda:{id}"), &shape)?;
                let mu = match algorithm {
                    Algorithm::RmsProp => None,
                    _ => Some(take(&mut loaded, format!("opt.mu:{id}"), &shape)?),
                };
                let lambda_max = match algorithm {
                    Algorithm::AmsGrad => Some(take(&mut loaded, format!("opt.lambda_max:{id}"), &shape)?),
                    _ => None,
                };
                state.slots.insert(
                    id,
                    ParamState {
                        lambda,
                        mu,
                        lambda_max,
                    },
                );
            }
            Some(Optimizer { config, state })
        }
    };
    if let Some(name) = loaded.keys().next() {
        return Err(Error::Format(format!("unexpected tensor {name}")));
    }
    Ok(Checkpoint {
        network,
        optimizer,
        meta,
    })
}

fn take<T: Element>(
    loaded: &mut BTreeMap<String, Tensor<T>>,
    name: String,
    shape: &[usize],
) -> Result<Tensor<T>> {
    let t = loaded
        .remove(&name)
        .ok_or_else(|| Error::Format(format!("checkpoint lacks tensor {name}")))?;
    if t.shape() != shape {
        return Err(Error::Format(format!(
            "tensor {name} has shape {:?}, network expects {shape:?}",
            t.shape()
        )));
    }
    Ok(t)
}

pub fn load<T: Element>(path: impl AsRef<Path>) -> Result<Checkpoint<T>> {
    decode(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_plantnet, cross_entropy, Mode, PlantNetConfig, WidthScale};

    fn small() -> PlantNetConfig {
        PlantNetConfig {
            input_hw: 16,
            classes: 3,
            width_scale: WidthScale::new(1, 8).unwrap(),
            ..Default::default()
        }
    }

    fn batch() -> (Tensor<f32>, Tensor<f32>) {
        let mut rng = Rng::new(4);
        let x = Tensor::new(
            vec![4, 16, 16, 3],
            (0..4 * 16 * 16 * 3).map(|_| rng.unit() as f32).collect(),
        )
        .unwrap();
        let y = Tensor::from_f64(
            vec![4, 3],
            &[1., 0., 0., 0., 1., 0., 0., 0., 1., 1., 0., 0.],
        )
        .unwrap();
        (x, y)
    }

    #[test]
    fn roundtrip_is_byte_exact_with_optimizer_state() {
        let mut net = build_plantnet::<f32>(&small(), 3).unwrap();
        let mut opt = Optimizer::new(OptConfig::new(Algorithm::AmsGrad)).unwrap();
        let (x, y) = batch();
        for _ in 0..2 {
            let p = net.forward(&x, Mode::Train).unwrap();
            net.backward(&cross_entropy(&p, &y).unwrap()).unwrap();
            opt.step(&mut net).unwrap();
        }
        let mut meta = BTreeMap::new();
        meta.insert("labels".to_string(), "a|b|c".to_string());
        let bytes = encode(&net, Some(&opt), &meta).unwrap();
        let back = decode::<f32>(&bytes).unwrap();
        assert_eq!(back.meta, meta);
        assert_eq!(back.optimizer.as_ref().unwrap().state, opt.state);
        assert_eq!(encode(&back.network, back.optimizer.as_ref(), &back.meta).unwrap(), bytes);
        let a = net.predict(&x).unwrap();
        let b = back.network.predict(&x).unwrap();
        assert_eq!(a.data(), b.data());
        assert_eq!(peek_precision(&bytes).unwrap(), Precision::Single);
    }

    #[test]
    fn resumed_training_matches_uninterrupted() {
        let (x, y) = batch();
        let train = |net: &mut Network<f32>, opt: &mut Optimizer<f32>| {
            let p = net.forward(&x, Mode::Train).unwrap();
            net.backward(&cross_entropy(&p, &y).unwrap()).unwrap();
            opt.step(net).unwrap();
        };
        let mut cfg = small();
        cfg.dropout_conv = 0.25;
        let mut net = build_plantnet::<f32>(&cfg, 8).unwrap();
        let mut opt = Optimizer::new(OptConfig::new(Algorithm::Adam)).unwrap();
        train(&mut net, &mut opt);
        let bytes = encode(&net, Some(&opt), &BTreeMap::new()).unwrap();
        train(&mut net, &mut opt);
        let mut resumed = decode::<f32>(&bytes).unwrap();
        let mut ropt = resumed.optimizer.take().unwrap();
        train(&mut resumed.network, &mut ropt);
        assert_eq!(
            encode(&resumed.network, Some(&ropt), &BTreeMap::new()).unwrap(),
            encode(&net, Some(&opt), &BTreeMap::new()).unwrap()
        );
    }

    #[test]
    fn precision_mismatch_is_rejected() {
        let net = build_plantnet::<f64>(&small(), 1).unwrap();
        let bytes = encode(&net, None, &BTreeMap::new()).unwrap();
        assert!(decode::<f32>(&bytes).is_err());
        assert!(decode::<f64>(&bytes).unwrap().optimizer.is_none());
    }

    #[test]
    fn truncated_file_is_rejected() {
        let net = build_plantnet::<f32>(&small(), 1).unwrap();
        let bytes = encode(&net, None, &BTreeMap::new()).unwrap();
        assert!(decode::<f32>(&bytes[..bytes.len() - 4]).is_err());
        assert!(decode::<f32>(b"format=other\nend_header\n").is_err());
    }

    #[test]
    fn newline_in_metadata_is_rejected() {
        let net = build_plantnet::<f32>(&small(), 1).unwrap();
        let mut meta = BTreeMap::new();
        meta.insert("k".into(), "a\nb".into());
        assert!(encode(&net, None, &meta).is_err());
    }
}
