//! Seeded generators for synthetic experiment inputs.
//!
//! Every generator is a pure function of its arguments and seed. Randomness
//! comes from ChaCha8 streams so results do not depend on the platform.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::decomposition::{RankProfile, TuckerDecomposition};
use crate::error::{Error, Result};
use crate::link::{LinkFunction, Logistic};
use crate::propensity::{Parameter, PropensityModel};
use crate::tensor::{DenseTensor, MaskTensor, Matrix, Shape};

/// Parameters of a noisy random Tucker tensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub shape: Shape,
    pub ranks: RankProfile,
    /// Standard deviation of the core entries.
    pub core_std: f64,
    /// Relative noise level; see [`add_relative_noise`].
    pub noise: f64,
    pub seed: u64,
}

impl GeneratorConfig {
    /// Cubical `size^order` tensor with uniform rank `rank`.
    pub fn cubical(
        size: usize,
        order: usize,
        rank: usize,
        core_std: f64,
        noise: f64,
        seed: u64,
    ) -> Result<Self> {
        Ok(Self {
            shape: Shape::cubical(size, order)?,
            ranks: RankProfile::uniform(rank, order)?,
            core_std,
            noise,
            seed,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.core_std > 0.0 && self.core_std.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "core std must be positive, got {}",
                self.core_std
            )));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "noise level must be nonnegative, got {}",
                self.noise
            )));
        }
        self.ranks.validate_for(&self.shape)
    }
}

/// Derives an independent seed for a named sub-stream of `seed`
/// (splitmix64 finalizer).
pub fn stream_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const NOISE_STREAM: u64 = 1;

/// Orthonormal `rows x cols` matrix from the thin QR of a Gaussian matrix,
/// with the largest-magnitude entry of each column made positive.
pub fn random_orthonormal(rows: usize, cols: usize, rng: &mut impl Rng) -> Result<Matrix> {
    if cols == 0 || cols > rows {
        return Err(Error::RankOutOfRange {
            rank: cols,
            max: rows,
        });
    }
    let g = Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal));
    let mut q = g.qr().compute_thin_Q();
    for k in 0..cols {
        let col = q.col_as_slice(k);
        let mut big = 0.0f64;
        for &x in col {
            if x.abs() > big.abs() {
                big = x;
            }
        }
        if big < 0.0 {
            for x in q.col_as_slice_mut(k) {
                *x = -*x;
            }
        }
    }
    Ok(q)
}

/// Tucker tensor with i.i.d. `N(0, core_std^2)` core and random orthonormal
/// factors. The noise field of `cfg` is ignored here.
pub fn random_tucker(cfg: &GeneratorConfig) -> Result<(DenseTensor, TuckerDecomposition)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let core_shape = Shape::new(cfg.ranks.ranks().to_vec())?;
    let core = DenseTensor::from_fn(core_shape, |_| {
        cfg.core_std * rng.sample::<f64, _>(StandardNormal)
    });
    let mut factors = Vec::with_capacity(cfg.shape.order());
    for (&i, &r) in cfg.shape.dims().iter().zip(cfg.ranks.ranks()) {
        factors.push(random_orthonormal(i, r, &mut rng)?);
    }
    let d = TuckerDecomposition::new(core, factors)?;
    Ok((d.reconstruct(), d))
}

/// `t + (noise ||t||_F / sqrt(I_[N])) eps` with `eps` i.i.d. standard normal.
pub fn add_relative_noise(t: &DenseTensor, noise: f64, seed: u64) -> Result<DenseTensor> {
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "noise level must be nonnegative, got {noise}"
        )));
    }
    if noise == 0.0 {
        return Ok(t.clone());
    }
    let scale = noise * t.frobenius_norm() / (t.len() as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = t
        .data()
        .iter()
        .map(|&x| x + scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    DenseTensor::new(t.shape().clone(), data)
}

/// Random Tucker tensor plus relative noise, the recipe shared by data and
/// parameter tensors.
pub fn noisy_tucker(cfg: &GeneratorConfig) -> Result<DenseTensor> {
    let (clean, _) = random_tucker(cfg)?;
    add_relative_noise(&clean, cfg.noise, stream_seed(cfg.seed, NOISE_STREAM))
}

/// Missing-completely-at-random propensities: the constant `ratio`.
pub fn model_a_propensity(shape: &Shape, ratio: f64) -> Result<DenseTensor> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "observation ratio must lie in (0, 1], got {ratio}"
        )));
    }
    Ok(DenseTensor::filled(shape.clone(), ratio))
}

/// Missing-not-at-random propensities `s(A)` with `A` a noisy random Tucker
/// tensor drawn from `cfg`. Returns the model and `A`.
pub fn model_b_propensity(
    cfg: &GeneratorConfig,
    link: Arc<dyn LinkFunction>,
) -> Result<(PropensityModel, DenseTensor)> {
    let a = noisy_tucker(cfg)?;
    Ok((PropensityModel::new(link, Parameter::Dense(a.clone())), a))
}

/// The special case `A = c B`: larger entries are more likely observed.
pub fn proportional_propensity(
    b: &DenseTensor,
    c: f64,
    link: Arc<dyn LinkFunction>,
) -> Result<(PropensityModel, DenseTensor)> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "proportionality constant must be positive, got {c}"
        )));
    }
    let a = b.scale(c);
    Ok((PropensityModel::new(link, Parameter::Dense(a.clone())), a))
}

/// Independent Bernoulli(`p`) draw per entry.
pub fn sample_mask(p: &DenseTensor, seed: u64) -> Result<MaskTensor> {
    if let Some(&bad) = p.data().iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(Error::InvalidParameter(format!(
            "propensity {bad} outside [0, 1]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bits = p.data().iter().map(|&q| rng.random::<f64>() < q).collect();
    MaskTensor::new(p.shape().clone(), bits)
}

/// Synthetic `height x width x frames` video in `[0, 255]` and its
/// propensity model `s((B - 128) / 64)`.
///
/// The frames are a few smooth separable patterns whose intensities drift
/// over time plus a Gaussian bump moving across the scene, min-max scaled
/// and rounded to integer gray levels.
pub fn video_like_instance(shape: &Shape, seed: u64) -> Result<(DenseTensor, PropensityModel)> {
    if shape.order() != 3 {
        return Err(Error::InvalidShape(format!(
            "video instances are order 3 (height x width x frames), got order {}",
            shape.order()
        )));
    }
    let (h, w, f) = (shape.dims()[0], shape.dims()[1], shape.dims()[2]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let components = 3;
    let mut params = Vec::with_capacity(components);
    for k in 0..components {
        let freq = (k + 1) as f64;
        params.push((
            freq * rng.random_range(0.5..1.0),
            rng.random_range(0.0..2.0 * PI),
            freq * rng.random_range(0.5..1.0),
            rng.random_range(0.0..2.0 * PI),
            rng.random_range(0.5..2.0),
            rng.random_range(0.5..1.0) / freq,
        ));
    }
    let (y0, x0) = (rng.random_range(0.2..0.4), rng.random_range(0.1..0.3));
    let (vy, vx) = (rng.random_range(0.1..0.3), rng.random_range(0.3..0.6));
    let width = 0.08;
    let unit = |i: usize, n: usize| {
        if n > 1 {
            i as f64 / (n - 1) as f64
        } else {
            0.0
        }
    };

    let raw = DenseTensor::from_fn(shape.clone(), |idx| {
        let (y, x, t) = (unit(idx[0], h), unit(idx[1], w), unit(idx[2], f));
        let mut v = 0.0;
        for &(fy, py, fx, px, ft, amp) in &params {
            v += amp
                * (2.0 * PI * fy * y + py).cos()
                * (2.0 * PI * fx * x + px).cos()
                * (1.0 + 0.3 * (2.0 * PI * ft * t).cos());
        }
        let (cy, cx) = (y0 + vy * t, x0 + vx * t);
        let r2 = (y - cy).powi(2) + (x - cx).powi(2);
        v + 1.5 * (-r2 / (2.0 * width * width)).exp()
    });
    let (lo, hi) = raw
        .data()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| {
            (a.min(x), b.max(x))
        });
    let span = if hi > lo { hi - lo } else { 1.0 };
    let b = raw.map(|x| (255.0 * (x - lo) / span).round());
    let model = video_propensity(&b);
    Ok((b, model))
}

/// `P = s((B - 128) / 64)` for gray levels `B` in `[0, 255]`.
pub fn video_propensity(b: &DenseTensor) -> PropensityModel {
    PropensityModel::logistic(b.map(|x| (x - 128.0) / 64.0))
}

/// Convenience: the logistic link as a shared trait object.
pub fn logistic() -> Arc<dyn LinkFunction> {
    Arc::new(Logistic)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_tucker_is_deterministic_and_orthonormal() {
        let cfg = GeneratorConfig::cubical(6, 3, 2, 10.0, 0.0, 42).unwrap();
        let (a, da) = random_tucker(&cfg).unwrap();
        let (b, _) = random_tucker(&cfg).unwrap();
        assert_eq!(a, b);
        assert!(da.orthonormality_defect() <= 1e-10);
    }

    #[test]
    fn rank_larger_than_size_is_rejected() {
        let cfg = GeneratorConfig::cubical(3, 3, 4, 1.0, 0.0, 0).unwrap();
        assert!(random_tucker(&cfg).is_err());
    }

    #[test]
    fn zero_noise_is_identity() {
        let t = DenseTensor::from_fn(Shape::new(vec![3, 3]).unwrap(), |i| {
            i[0] as f64 - i[1] as f64
        });
        assert_eq!(add_relative_noise(&t, 0.0, 5).unwrap(), t);
    }

    #[test]
    fn noise_level_concentrates() {
        let cfg = GeneratorConfig::cubical(22, 3, 3, 1.0, 0.0, 1).unwrap();
        let (t, _) = random_tucker(&cfg).unwrap();
        let noisy = add_relative_noise(&t, 0.1, 9).unwrap();
        let rel = noisy.sub(&t).unwrap().frobenius_norm() / t.frobenius_norm();
        assert!((rel - 0.1).abs() < 0.01, "{rel}");
    }

    #[test]
    fn model_a_is_constant() {
        let shape = Shape::cubical(4, 3).unwrap();
        let p = model_a_propensity(&shape, 0.4).unwrap();
        assert!(p.data().iter().all(|&x| x == 0.4));
        assert!(model_a_propensity(&shape, 1.5).is_err());
        assert!(model_a_propensity(&shape, 1.0).is_ok());
        assert_eq!(
            model_a_propensity(&shape, 0.5).unwrap().data()[0],
            Logistic.value(0.0)
        );
    }

    #[test]
    fn extreme_masks() {
        let shape = Shape::cubical(5, 2).unwrap();
        let ones = sample_mask(&DenseTensor::filled(shape.clone(), 1.0), 3).unwrap();
        assert!(ones.is_all(true));
        let zeros = sample_mask(&DenseTensor::filled(shape.clone(), 0.0), 3).unwrap();
        assert!(zeros.is_all(false));
        assert!(sample_mask(&DenseTensor::filled(shape, 1.5), 3).is_err());
    }

    #[test]
    fn proportional_case_is_monotone() {
        let b = DenseTensor::from_fn(Shape::new(vec![4, 4]).unwrap(), |i| {
            (i[0] + 4 * i[1]) as f64 - 7.5
        });
        let (m, _) = proportional_propensity(&b, 0.3, logistic()).unwrap();
        let p = m.evaluate();
        for k in 1..b.len() {
            assert!(p.data()[k] > p.data()[k - 1]);
        }
    }

    #[test]
    fn video_instance_ranges() {
        let shape = Shape::new(vec![12, 16, 10]).unwrap();
        let (b, model) = video_like_instance(&shape, 4).unwrap();
        assert!(b
            .data()
            .iter()
            .all(|&x| (0.0..=255.0).contains(&x) && x.fract() == 0.0));
        let p = model.evaluate();
        assert!(p.data().iter().all(|&q| (0.119..=0.881).contains(&q)));
        assert!(video_like_instance(&Shape::cubical(4, 4).unwrap(), 0).is_err());
        let point = DenseTensor::new(Shape::new(vec![2]).unwrap(), vec![128.0, 0.0]).unwrap();
        let q = video_propensity(&point).evaluate();
        assert_eq!(q.data()[0], 0.5);
        assert!((q.data()[1] - 0.119_202_922_022_117_6).abs() < 1e-15);
    }

    #[test]
    fn stream_seeds_differ() {
        assert_ne!(stream_seed(0, 0), stream_seed(0, 1));
        assert_ne!(stream_seed(0, 1), stream_seed(1, 1));
    }
}
