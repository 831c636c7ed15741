//! Labelled datasets: a synthetic Gaussian mixture with engineered strong and
//! weak classes, the IDX binary format, CSV export, and seeded batching.

use crate::error::{Error, Result};
use crate::rng::{self, tag};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
const ENVELOPE_SIGMAS: f64 = 4.0;
const SQUEEZE_LO: f64 = 0.05;
const SQUEEZE_HI: f64 = 0.95;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    inputs: Tensor<T>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(inputs: Tensor<T>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        let (rows, _) = inputs.dims2("dataset")?;
        if rows != labels.len() {
            return Err(Error::config(format!("{rows} inputs but {} labels", labels.len())));
        }
        if num_classes == 0 {
            return Err(Error::config("dataset needs at least one class"));
        }
        if let Some((i, y)) = labels.iter().enumerate().find(|(_, y)| **y >= num_classes) {
            return Err(Error::config(format!("label {y} at row {i} exceeds {num_classes} classes")));
        }
        if let Some(v) = inputs.data().iter().find(|v| !(**v >= T::zero() && **v <= T::one())) {
            return Err(Error::config(format!("input value {v} outside [0, 1]")));
        }
        Ok(Self { inputs, labels, num_classes })
    }

    pub fn inputs(&self) -> &Tensor<T> {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.cols()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        Ok(Self {
            inputs: self.inputs.select_rows(indices)?,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        })
    }

    /// First `n` samples, or all of them when `n` exceeds the length.
    pub fn head(&self, n: usize) -> Result<Self> {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }

    /// Writes `label,x0,…,x{D−1}` rows.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        let header: Vec<String> = (0..self.input_dim()).map(|j| format!("x{j}")).collect();
        writeln!(out, "label,{}", header.join(","))?;
        for (i, y) in self.labels.iter().enumerate() {
            let row: Vec<String> = self.inputs.row(i).iter().map(|v| v.to_string()).collect();
            writeln!(out, "{y},{}", row.join(","))?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Where the class centers sit, in units of the per-class standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Layout {
    /// Four classes: a strong pair `strong_separation` apart on axis 0 and a
    /// weak pair `weak_separation` apart on axis 1, offset by `weak_lift`
    /// along axis 2 so the pairs do not overlap each other.
    StrongWeak { strong_separation: f64, weak_separation: f64, weak_lift: f64 },
    /// Explicit centers, one row per class.
    Centers { centers: Vec<Vec<f64>> },
}

impl Default for Layout {
    fn default() -> Self {
        Layout::StrongWeak { strong_separation: 6.0, weak_separation: 1.5, weak_lift: 3.25 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub num_classes: usize,
    pub dim: usize,
    pub samples_per_class: usize,
    pub std: f64,
    pub layout: Layout,
    /// Raw-coordinate interval every `center ± 4σ` must fit inside. When
    /// absent the squeeze is fitted to the centers.
    pub bounds: Option<[f64; 2]>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_classes: 4,
            dim: 8,
            samples_per_class: 500,
            std: 1.0,
            layout: Layout::default(),
            bounds: None,
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// Class centers in raw (unsqueezed) coordinates.
    pub fn centers(&self) -> Result<Vec<Vec<f64>>> {
        match &self.layout {
            Layout::StrongWeak { strong_separation, weak_separation, weak_lift } => {
                if self.num_classes != 4 || self.dim < 3 {
                    return Err(Error::config("strong_weak layout needs num_classes = 4 and dim >= 3"));
                }
                let s = self.std;
                let mut c = vec![vec![0.0; self.dim]; 4];
                c[0][0] = -0.5 * strong_separation * s;
                c[1][0] = 0.5 * strong_separation * s;
                c[2][1] = -0.5 * weak_separation * s;
                c[3][1] = 0.5 * weak_separation * s;
                c[2][2] = weak_lift * s;
                c[3][2] = weak_lift * s;
                Ok(c)
            }
            Layout::Centers { centers } => {
                if centers.len() != self.num_classes || centers.iter().any(|r| r.len() != self.dim) {
                    return Err(Error::config(format!(
                        "centers must be {} rows of length {}",
                        self.num_classes, self.dim
                    )));
                }
                Ok(centers.clone())
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if self.num_classes < 1 || self.dim < 1 || self.samples_per_class < 1 {
            return Err(Error::config("num_classes, dim and samples_per_class must be positive"));
        }
        if !(self.std > 0.0 && self.std.is_finite()) {
            return Err(Error::config(format!("std must be positive, got {}", self.std)));
        }
        Ok(())
    }

    /// Per-axis midpoints and the single scale mapping the `±4σ` envelope
    /// into `[0.05, 0.95]`.
    pub fn squeeze(&self) -> Result<(Vec<f64>, f64)> {
        self.validate()?;
        let centers = self.centers()?;
        let pad = ENVELOPE_SIGMAS * self.std;
        if centers.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::config("class centers must be finite"));
        }
        let lo: Vec<f64> = (0..self.dim).map(|j| centers.iter().map(|c| c[j]).fold(f64::INFINITY, f64::min) - pad).collect();
        let hi: Vec<f64> = (0..self.dim).map(|j| centers.iter().map(|c| c[j]).fold(f64::NEG_INFINITY, f64::max) + pad).collect();
        if let Some([b_lo, b_hi]) = self.bounds {
            if !(b_lo < b_hi) {
                return Err(Error::config(format!("bounds [{b_lo}, {b_hi}] are empty")));
            }
            if let Some(j) = (0..self.dim).find(|&j| lo[j] < b_lo || hi[j] > b_hi) {
                return Err(Error::config(format!(
                    "axis {j}: envelope [{}, {}] of the class centers does not fit bounds [{b_lo}, {b_hi}]",
                    lo[j], hi[j]
                )));
            }
            let mid = vec![0.5 * (b_lo + b_hi); self.dim];
            return Ok((mid, (SQUEEZE_HI - SQUEEZE_LO) / (b_hi - b_lo)));
        }
        let range = lo.iter().zip(&hi).map(|(l, h)| h - l).fold(0.0, f64::max);
        let mid = lo.iter().zip(&hi).map(|(l, h)| 0.5 * (l + h)).collect();
        Ok((mid, (SQUEEZE_HI - SQUEEZE_LO) / range))
    }
}

/// Samples `samples_per_class` points per class from an isotropic Gaussian
/// truncated at `±4σ`, then squeezes affinely into `[0.05, 0.95]`.
pub fn synth_gaussian_mixture<T: Scalar>(cfg: &SynthConfig) -> Result<Dataset<T>> {
    let (mid, scale) = cfg.squeeze()?;
    let centers = cfg.centers()?;
    let n = cfg.num_classes * cfg.samples_per_class;
    let mut data = Vec::with_capacity(n * cfg.dim);
    let mut labels = Vec::with_capacity(n);
    for (c, center) in centers.iter().enumerate() {
        let mut rng = rng::stream(&[cfg.seed, tag::SYNTH, c as u64]);
        for _ in 0..cfg.samples_per_class {
            for j in 0..cfg.dim {
                let z = loop {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    if z.abs() <= ENVELOPE_SIGMAS {
                        break z;
                    }
                };
                let raw = center[j] + cfg.std * z;
                data.push(T::lit(0.5 + scale * (raw - mid[j])));
            }
            labels.push(c);
        }
    }
    Dataset::new(Tensor::matrix(n, cfg.dim, data)?, labels, cfg.num_classes)
}

/// Shuffles `0..n` with a seeded stream and cuts it into batches; the last
/// batch may be short.
pub fn batches(n: usize, batch_size: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::config("batch_size must be at least 1"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(&[seed, tag::SHUFFLE]));
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

struct IdxReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> IdxReader<'a> {
    fn u32(&mut self) -> Result<u32> {
        let end = self.pos + 4;
        let chunk = self.bytes.get(self.pos..end).ok_or_else(|| Error::Format {
            offset: self.pos,
            message: format!("{} file truncated while reading header", self.what),
        })?;
        self.pos = end;
        Ok(u32::from_be_bytes(chunk.try_into().expect("four bytes")))
    }

    fn header(&mut self, magic: u32) -> Result<Vec<usize>> {
        let found = self.u32()?;
        if found != magic {
            return Err(Error::Format {
                offset: 0,
                message: format!("{} file has magic {found:#010x}, expected {magic:#010x}", self.what),
            });
        }
        let ndims = (magic & 0xFF) as usize;
        (0..ndims).map(|_| self.u32().map(|d| d as usize)).collect()
    }

    fn body(&self, len: usize) -> Result<&'a [u8]> {
        let available = self.bytes.len() - self.pos;
        if available < len {
            return Err(Error::Format {
                offset: self.bytes.len(),
                message: format!("{} file truncated: {len} data bytes expected, {available} present", self.what),
            });
        }
        Ok(&self.bytes[self.pos..self.pos + len])
    }
}

/// Reads an IDX image/label pair. Pixels are scaled by `1/255`; the class
/// count is one more than the largest label.
pub fn load_idx<T: Scalar>(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset<T>> {
    let image_bytes = std::fs::read(images_path)?;
    let label_bytes = std::fs::read(labels_path)?;
    parse_idx(&image_bytes, &label_bytes)
}

pub fn parse_idx<T: Scalar>(image_bytes: &[u8], label_bytes: &[u8]) -> Result<Dataset<T>> {
    let mut images = IdxReader { bytes: image_bytes, pos: 0, what: "images" };
    let dims = images.header(IDX_IMAGES_MAGIC)?;
    let count = dims[0];
    let width = dims[1] * dims[2];
    if width == 0 {
        return Err(Error::Format { offset: 8, message: "images have zero pixels".into() });
    }
    let pixels = images.body(count * width)?;

    let mut labels = IdxReader { bytes: label_bytes, pos: 0, what: "labels" };
    let label_count = labels.header(IDX_LABELS_MAGIC)?[0];
    if label_count != count {
        return Err(Error::Format {
            offset: 4,
            message: format!("labels file holds {label_count} entries but images file holds {count}"),
        });
    }
    let raw_labels = labels.body(count)?;
    if count == 0 {
        return Err(Error::Format { offset: 4, message: "IDX files contain no samples".into() });
    }

    let scale = T::lit(255.0);
    let data = pixels.iter().map(|&b| T::from_u8(b).expect("byte fits") / scale).collect();
    let labels: Vec<usize> = raw_labels.iter().map(|&b| b as usize).collect();
    let num_classes = labels.iter().max().map_or(1, |m| m + 1);
    Dataset::new(Tensor::matrix(count, width, data)?, labels, num_classes)
}

/// Writes a dataset as IDX, quantizing inputs to the nearest byte. Images are
/// stored as `N × 1 × D`.
pub fn write_idx<T: Scalar>(dataset: &Dataset<T>, images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<()> {
    if dataset.num_classes() > 256 {
        return Err(Error::config("IDX labels hold at most 256 classes"));
    }
    let n = dataset.len() as u32;
    let mut img = Vec::with_capacity(16 + dataset.inputs().len());
    for word in [IDX_IMAGES_MAGIC, n, 1, dataset.input_dim() as u32] {
        img.extend_from_slice(&word.to_be_bytes());
    }
    img.extend(dataset.inputs().data().iter().map(|v| (v.to_f64_lossy() * 255.0).round() as u8));
    let mut lab = Vec::with_capacity(8 + dataset.len());
    for word in [IDX_LABELS_MAGIC, n] {
        lab.extend_from_slice(&word.to_be_bytes());
    }
    lab.extend(dataset.labels().iter().map(|&y| y as u8));
    std::fs::write(images_path, img)?;
    std::fs::write(labels_path, lab)?;
    Ok(())
}
