//! Training-objective math for the latent diffusion backbone: linear noise
//! schedule, forward noising, noise-prediction loss, and the identity loss
//! (masked pixel error plus embedding cosine distance).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::masks::Mask;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    /// Builds a schedule from per-step variances, accumulating
    /// `ᾱ_t = Π_{s≤t} (1 − β_s)`.
    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::InvalidInput("schedule needs at least one step".into()));
        }
        if let Some(b) = betas.iter().find(|&&b| !(b > 0.0 && b < 1.0)) {
            return Err(Error::InvalidInput(format!("beta {b} outside (0, 1)")));
        }
        let alpha_bar = betas
            .iter()
            .scan(1.0, |acc, b| {
                *acc *= 1.0 - b;
                Some(*acc)
            })
            .collect();
        Ok(NoiseSchedule { betas, alpha_bar })
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alpha_bar(&self) -> &[f64] {
        &self.alpha_bar
    }

    /// `ᾱ_t` for a 1-based step `t`.
    pub fn alpha_bar_at(&self, t: usize) -> Result<f64> {
        if t == 0 || t > self.steps() {
            return Err(Error::InvalidInput(format!("step {t} outside 1..={}", self.steps())));
        }
        Ok(self.alpha_bar[t - 1])
    }
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        make_linear_schedule(1000, 1e-4, 0.02).expect("valid default schedule")
    }
}

/// Linearly interpolated betas from `beta_start` to `beta_end` over `steps`.
pub fn make_linear_schedule(steps: usize, beta_start: f64, beta_end: f64) -> Result<NoiseSchedule> {
    if steps == 0 {
        return Err(Error::InvalidInput("schedule needs at least one step".into()));
    }
    if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
        return Err(Error::InvalidInput(format!(
            "need 0 < beta_start <= beta_end < 1, got {beta_start} and {beta_end}"
        )));
    }
    let betas = (0..steps)
        .map(|i| {
            if steps == 1 {
                beta_start
            } else {
                beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64
            }
        })
        .collect();
    NoiseSchedule::from_betas(betas)
}

/// Dense n-dimensional array of finite reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentTensor {
    shape: Vec<usize>,
    values: Vec<f64>,
}

const TENSOR_MAGIC: &[u8; 4] = b"HSPT";

impl LatentTensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let count: usize = shape.iter().product();
        if count != values.len() {
            return Err(Error::DimensionMismatch(format!(
                "shape {shape:?} holds {count} elements, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("tensor contains non-finite values".into()));
        }
        Ok(LatentTensor { shape, values })
    }

    pub fn from_fn(shape: Vec<usize>, f: impl FnMut(usize) -> f64) -> Result<Self> {
        let count = shape.iter().product();
        Self::new(shape, (0..count).map(f).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn ensure_same_shape(&self, other: &LatentTensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::DimensionMismatch(format!(
                "tensor shapes {:?} and {:?} differ",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    fn zip_map(&self, other: &LatentTensor, f: impl Fn(f64, f64) -> f64) -> Result<LatentTensor> {
        self.ensure_same_shape(other)?;
        LatentTensor::new(
            self.shape.clone(),
            self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        )
    }

    /// Little-endian binary form: a 16-byte header (`HSPT`, rank as u32,
    /// element count as u64), `rank` u32 dimensions, then f64 values.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 4 * self.shape.len() + 8 * self.values.len());
        out.extend_from_slice(TENSOR_MAGIC);
        out.extend_from_slice(&(self.shape.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.values.len() as u64).to_le_bytes());
        for &d in &self.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::InvalidInput(format!("tensor file: {m}"));
        if bytes.len() < 16 || &bytes[..4] != TENSOR_MAGIC {
            return Err(bad("missing HSPT header"));
        }
        let rank = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
        let count = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let dims_end = 16 + 4 * rank;
        if count.checked_mul(8).and_then(|n| n.checked_add(dims_end)) != Some(bytes.len()) {
            return Err(bad("length does not match header"));
        }
        let shape: Vec<usize> = bytes[16..dims_end]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")) as usize)
            .collect();
        let values = bytes[dims_end..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        LatentTensor::new(shape, values)
    }

    /// Reads the binary form, or JSON `{shape, values}` for `.json` paths.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if path.extension().is_some_and(|e| e == "json") {
            let t: LatentTensor = io::read_json(path)?;
            return LatentTensor::new(t.shape, t.values);
        }
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// `√ᾱ_t·z₀ + √(1 − ᾱ_t)·ε` for a 1-based step `t`.
pub fn forward_diffuse(z0: &LatentTensor, eps: &LatentTensor, t: usize, sched: &NoiseSchedule) -> Result<LatentTensor> {
    let ab = sched.alpha_bar_at(t)?;
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    z0.zip_map(eps, |z, e| a * z + b * e)
}

/// Inverts [`forward_diffuse`] given a noise estimate:
/// `ẑ₀ = (z_t − √(1 − ᾱ_t)·ε̂) / √ᾱ_t`.
pub fn predict_z0(z_t: &LatentTensor, eps_hat: &LatentTensor, t: usize, sched: &NoiseSchedule) -> Result<LatentTensor> {
    let ab = sched.alpha_bar_at(t)?;
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    z_t.zip_map(eps_hat, |z, e| (z - b * e) / a)
}

/// Mean squared error between predicted and true noise.
pub fn ldm_loss(eps_pred: &LatentTensor, eps: &LatentTensor) -> Result<f64> {
    eps_pred.ensure_same_shape(eps)?;
    let n = eps.values.len();
    if n == 0 {
        return Ok(0.0);
    }
    let sum: f64 = eps_pred
        .values
        .iter()
        .zip(&eps.values)
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    Ok(sum / n as f64)
}

/// Image → unit-norm identity feature. Implementations must be
/// deterministic and safe to call concurrently.
pub trait EmbeddingFn: Sync {
    fn embed(&self, image: &LatentTensor) -> Result<Vec<f64>>;
}

/// `(H, W, C)` of an image tensor shaped `[H, W]` or `[H, W, C]`.
fn image_dims(t: &LatentTensor) -> Result<(usize, usize, usize)> {
    match *t.shape() {
        [h, w] => Ok((h, w, 1)),
        [h, w, c] => Ok((h, w, c)),
        ref s => Err(Error::DimensionMismatch(format!(
            "expected an [H, W] or [H, W, C] image, got {s:?}"
        ))),
    }
}

/// Deterministic stand-in for a face recognizer: optional mask, area
/// downsampling to a `size × size` grayscale grid, L2 normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct DownsampledGrayEmbedding {
    pub mask: Option<Mask>,
    pub size: usize,
}

impl Default for DownsampledGrayEmbedding {
    fn default() -> Self {
        DownsampledGrayEmbedding { mask: None, size: 16 }
    }
}

impl EmbeddingFn for DownsampledGrayEmbedding {
    fn embed(&self, image: &LatentTensor) -> Result<Vec<f64>> {
        let (h, w, c) = image_dims(image)?;
        if let Some(m) = &self.mask {
            if m.width() != w || m.height() != h {
                return Err(Error::DimensionMismatch("embedding mask does not match image".into()));
            }
        }
        let n = self.size.max(1);
        let mut sums = vec![0.0; n * n];
        let mut counts = vec![0usize; n * n];
        for y in 0..h {
            for x in 0..w {
                let cell = (y * n / h) * n + x * n / w;
                counts[cell] += 1;
                if self.mask.as_ref().is_some_and(|m| !m.get(x, y)) {
                    continue;
                }
                let base = (y * w + x) * c;
                sums[cell] += image.values[base..base + c].iter().sum::<f64>() / c as f64;
            }
        }
        let mut v: Vec<f64> = sums
            .iter()
            .zip(&counts)
            .map(|(s, &k)| if k > 0 { s / k as f64 } else { 0.0 })
            .collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        } else {
            v[0] = 1.0;
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdLossTerms {
    /// Squared error averaged over masked elements (0 for an empty mask).
    pub pixel: f64,
    /// `1 − cos(embed(I_d), embed(Î_d))`.
    pub cosine: f64,
}

impl IdLossTerms {
    pub fn total(&self) -> f64 {
        self.pixel + self.cosine
    }
}

fn unit_norm_check(v: &[f64]) -> Result<f64> {
    let n2: f64 = v.iter().map(|x| x * x).sum();
    if (n2.sqrt() - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidInput(format!("embedding norm {} is not 1", n2.sqrt())));
    }
    Ok(n2)
}

pub fn id_loss_terms(
    i_d: &LatentTensor,
    i_hat: &LatentTensor,
    m_head: &Mask,
    embed: &dyn EmbeddingFn,
) -> Result<IdLossTerms> {
    i_d.ensure_same_shape(i_hat)?;
    let (h, w, c) = image_dims(i_d)?;
    if m_head.width() != w || m_head.height() != h {
        return Err(Error::DimensionMismatch(format!(
            "head mask is {}x{}, image is {w}x{h}",
            m_head.width(),
            m_head.height()
        )));
    }
    let mut sum = 0.0;
    let mut selected = 0usize;
    for (p, &on) in m_head.bits().iter().enumerate() {
        if on {
            selected += 1;
            for k in p * c..(p + 1) * c {
                sum += (i_d.values[k] - i_hat.values[k]).powi(2);
            }
        }
    }
    let pixel = if selected == 0 {
        0.0
    } else {
        sum / (selected * c) as f64
    };

    let a = embed.embed(i_d)?;
    let b = embed.embed(i_hat)?;
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch("embedding lengths differ".into()));
    }
    let na = unit_norm_check(&a)?;
    let nb = unit_norm_check(&b)?;
    let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
    let cos = (dot / (na * nb).sqrt()).clamp(-1.0, 1.0);
    Ok(IdLossTerms {
        pixel,
        cosine: 1.0 - cos,
    })
}

/// Masked pixel error plus embedding cosine distance.
pub fn id_loss(i_d: &LatentTensor, i_hat: &LatentTensor, m_head: &Mask, embed: &dyn EmbeddingFn) -> Result<f64> {
    Ok(id_loss_terms(i_d, i_hat, m_head, embed)?.total())
}

pub fn total_loss(ldm: f64, id: f64) -> f64 {
    ldm + id
}
