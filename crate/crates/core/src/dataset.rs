//! Finite datasets `{y_1, …, y_Y}` and their on-disk container.

use std::path::Path;

use crate::error::{arg_err, Error, Result};
use crate::format::{self, ByteReader, DATASET_MAGIC, FORMAT_VERSION};
use crate::rng::RngStream;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    name: String,
    samples: Vec<Tensor>,
}

impl Dataset {
    /// Fails on an empty sample list or non-uniform shapes.
    pub fn new(name: impl Into<String>, samples: Vec<Tensor>) -> Result<Self> {
        let Some(first) = samples.first() else {
            return arg_err("dataset must contain at least one sample");
        };
        if let Some((i, s)) = samples.iter().enumerate().find(|(_, s)| s.shape() != first.shape()) {
            return Err(Error::Shape(format!("sample {i} has shape {:?}, expected {:?}", s.shape(), first.shape())));
        }
        Ok(Self { name: name.into(), samples })
    }

    /// The 1-D dataset `{−1, +1}`.
    pub fn two_point() -> Self {
        Self::symmetric_pair(1.0)
    }

    /// The 1-D dataset `{−a, +a}`; its second moment is exactly `a²`.
    pub fn symmetric_pair(a: f64) -> Self {
        let samples = vec![Tensor::from_parts(vec![1], vec![-a]), Tensor::from_parts(vec![1], vec![a])];
        Self { name: format!("pair:{a}"), samples }
    }

    /// `count` i.i.d. draws from `N(0, sigma_data² I)` of dimension `dim`.
    pub fn gaussian(rng: &mut RngStream, sigma_data: f64, count: usize, dim: usize) -> Result<Self> {
        if count == 0 || dim == 0 {
            return arg_err("gaussian dataset needs count >= 1 and dim >= 1");
        }
        let samples = (0..count).map(|_| crate::rng::gaussian(rng, &[dim], sigma_data)).collect::<Result<Vec<_>>>()?;
        Self::new(format!("gaussian:{sigma_data}"), samples)
    }

    /// `k × k` grid of 2-D points spanning `[−1, 1]²`.
    pub fn grid2d(k: usize) -> Result<Self> {
        if k < 2 {
            return arg_err("grid2d needs at least 2 points per side");
        }
        let coord = |i: usize| -1.0 + 2.0 * i as f64 / (k - 1) as f64;
        let samples = (0..k)
            .flat_map(|r| (0..k).map(move |c| (r, c)))
            .map(|(r, c)| Tensor::from_parts(vec![2], vec![coord(c), coord(r)]))
            .collect();
        Self::new("grid2d", samples)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn samples(&self) -> &[Tensor] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_shape(&self) -> &[usize] {
        self.samples[0].shape()
    }

    pub fn dim(&self) -> usize {
        self.samples[0].len()
    }

    /// Element-wise mean over samples.
    pub fn mean(&self) -> Tensor {
        let mut acc = vec![0.0; self.dim()];
        for s in &self.samples {
            for (a, v) in acc.iter_mut().zip(s.data()) {
                *a += v;
            }
        }
        let n = self.len() as f64;
        Tensor::from_parts(self.sample_shape().to_vec(), acc.into_iter().map(|a| a / n).collect())
    }

    /// Standard deviation of all scalar elements pooled together. Reported
    /// to the user for comparison with the configured `sigma_data`.
    pub fn empirical_std(&self) -> f64 {
        let values = self.samples.iter().flat_map(|s| s.data().iter().copied());
        let n = (self.len() * self.dim()) as f64;
        let mean = values.clone().sum::<f64>() / n;
        (values.map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
    }

    /// Euclidean distance from `x` to the closest sample.
    pub fn nearest_distance(&self, x: &Tensor) -> f64 {
        self.samples.iter().map(|s| s.sub(x).norm_sq()).fold(f64::INFINITY, f64::min).sqrt()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let count =
            u32::try_from(self.samples.len()).map_err(|_| Error::Argument("too many samples for u32 count".into()))?;
        let mut out = Vec::new();
        out.extend_from_slice(DATASET_MAGIC);
        format::write_u32(&mut out, FORMAT_VERSION);
        format::write_u32(&mut out, count);
        for s in &self.samples {
            format::encode_tensor(&mut out, s)?;
        }
        Ok(out)
    }

    pub fn from_bytes(name: impl Into<String>, bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.expect_magic(DATASET_MAGIC)?;
        r.expect_version(FORMAT_VERSION)?;
        let count_at = r.offset();
        let count = r.u32("sample count")? as usize;
        if count == 0 {
            return r.fail_at(count_at, "dataset has zero samples");
        }
        let mut samples: Vec<Tensor> = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            let at = r.offset();
            let t = format::decode_tensor(&mut r)?;
            if let Some(first) = samples.first() {
                if first.shape() != t.shape() {
                    return r.fail_at(at, format!("sample shape {:?} differs from {:?}", t.shape(), first.shape()));
                }
            }
            samples.push(t);
        }
        if !r.is_at_end() {
            return r.fail("trailing bytes after dataset");
        }
        Ok(Self { name: name.into(), samples })
    }

    /// Loads a dataset file; the dataset name is the file stem.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        Self::from_bytes(name, &std::fs::read(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }
}

pub fn dataset_load(path: impl AsRef<Path>) -> Result<Dataset> {
    Dataset::load(path)
}

pub fn dataset_save(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    dataset.save(path)
}
