use std::path::{Path, PathBuf};

use super::Dataset;
use crate::error::{invalid, Result};
use crate::imgproc::{resize, Image};
use crate::rng::Rng;
use crate::tensor::{Element, Tensor};

/// Decode `path` as RGB, resize to `hw × hw` when needed and quantize to 8 bits.
pub fn load_sample(path: impl AsRef<Path>, hw: usize) -> Result<Vec<u8>> {
    let img = Image::load(path)?;
    Ok(resize(&img, hw, hw)?.to_bytes())
}

enum Source {
    Memory(Vec<Vec<u8>>),
    Disk(Vec<PathBuf>),
}

/// Square RGB samples plus their class indices, held in memory or read on demand.
pub struct SampleStore {
    hw: usize,
    classes: usize,
    labels: Vec<usize>,
    source: Source,
}

impl SampleStore {
    /// Samples given as `hw·hw·3` bytes each, row-major RGB.
    pub fn from_pixels(hw: usize, classes: usize, labels: Vec<usize>, pixels: Vec<Vec<u8>>) -> Result<Self> {
        if labels.len() != pixels.len() {
            return Err(invalid("one label per sample required"));
        }
        if let Some(p) = pixels.iter().find(|p| p.len() != hw * hw * 3) {
            return Err(invalid(format!("sample has {} bytes, expected {}", p.len(), hw * hw * 3)));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= classes) {
            return Err(invalid(format!("label {l} outside 0..{classes}")));
        }
        Ok(Self {
            hw,
            classes,
            labels,
            source: Source::Memory(pixels),
        })
    }

    /// Decode every record of `ds` up front.
    pub fn in_memory(ds: &Dataset, hw: usize) -> Result<Self> {
        let pixels = ds
            .records()
            .iter()
            .map(|r| load_sample(&r.path, hw))
            .collect::<Result<_>>()?;
        Self::from_pixels(hw, ds.labels().len(), ds.records().iter().map(|r| r.class).collect(), pixels)
    }

    /// Decode records lazily each time a batch is built.
    pub fn on_disk(ds: &Dataset, hw: usize) -> Self {
        Self {
            hw,
            classes: ds.labels().len(),
            labels: ds.records().iter().map(|r| r.class).collect(),
            source: Source::Disk(ds.records().iter().map(|r| r.path.clone()).collect()),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn hw(&self) -> usize {
        self.hw
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Images `[N, hw, hw, 3]` scaled by 1/255 and one-hot targets `[N, classes]`.
    pub fn batch<T: Element>(&self, members: &[usize]) -> Result<Batch<T>> {
        if members.is_empty() {
            return Err(invalid("empty batch"));
        }
        let per = self.hw * self.hw * 3;
        let mut x = Vec::with_capacity(members.len() * per);
        let mut y = vec![T::zero(); members.len() * self.classes];
        let mut labels = Vec::with_capacity(members.len());
        for (row, &m) in members.iter().enumerate() {
            if m >= self.len() {
                return Err(invalid(format!("sample {m} outside store of {}", self.len())));
            }
            match &self.source {
                Source::Memory(p) => x.extend(p[m].iter().map(|&v| T::of(v as f64 / 255.0))),
                Source::Disk(paths) => {
                    let bytes = load_sample(&paths[m], self.hw)?;
                    x.extend(bytes.iter().map(|&v| T::of(v as f64 / 255.0)));
                }
            }
            y[row * self.classes + self.labels[m]] = T::one();
            labels.push(self.labels[m]);
        }
        Ok(Batch {
            x: Tensor::new(vec![members.len(), self.hw, self.hw, 3], x)?,
            y: Tensor::new(vec![members.len(), self.classes], y)?,
            labels,
            members: members.to_vec(),
        })
    }
}

pub struct Batch<T: Element> {
    pub x: Tensor<T>,
    pub y: Tensor<T>,
    pub labels: Vec<usize>,
    pub members: Vec<usize>,
}

/// Members in a fresh order for `(seed, epoch)`, cut into chunks of
/// `batch_size`; the final chunk may be short.
pub fn batch_plan(members: &[usize], batch_size: usize, epoch: u64, seed: u64) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(invalid("batch size must be at least 1"));
    }
    let order = Rng::derive(seed, &[0xBA7C, epoch]).permutation(members.len());
    let shuffled: Vec<usize> = order.into_iter().map(|i| members[i]).collect();
    Ok(shuffled.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

pub struct Batches<'a, T: Element> {
    store: &'a SampleStore,
    plan: std::vec::IntoIter<Vec<usize>>,
    _elem: std::marker::PhantomData<T>,
}

impl<T: Element> Batches<'_, T> {
    pub fn remaining(&self) -> usize {
        self.plan.len()
    }
}

impl<T: Element> Iterator for Batches<'_, T> {
    type Item = Result<Batch<T>>;

    fn next(&mut self) -> Option<Self::Item> {
        self.plan.next().map(|m| self.store.batch(&m))
    }
}

/// Shuffled training batches for one epoch.
pub fn batches<'a, T: Element>(
    store: &'a SampleStore,
    members: &[usize],
    batch_size: usize,
    epoch: u64,
    seed: u64,
) -> Result<Batches<'a, T>> {
    Ok(Batches {
        store,
        plan: batch_plan(members, batch_size, epoch, seed)?.into_iter(),
        _elem: std::marker::PhantomData,
    })
}

/// Batches in member order, for evaluation.
pub fn sequential_batches<'a, T: Element>(
    store: &'a SampleStore,
    members: &[usize],
    batch_size: usize,
) -> Result<Batches<'a, T>> {
    if batch_size == 0 {
        return Err(invalid("batch size must be at least 1"));
    }
    let plan: Vec<Vec<usize>> = members.chunks(batch_size).map(<[usize]>::to_vec).collect();
    Ok(Batches {
        store,
        plan: plan.into_iter(),
        _elem: std::marker::PhantomData,
    })
}
