//! Seeded degradation and a synthetic test scene.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridShape, Image};
use crate::linops::{blur_apply, BlurKernel};

/// Blur (optional) followed by i.i.d. Gaussian noise. The noise stream is
/// ChaCha8 seeded with `seed`, sampled through `rand_distr::Normal`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegradeSpec {
    /// Standard deviation on the `[0, 1]` intensity scale.
    pub noise_std: f64,
    pub blur: Option<BlurKernel>,
    pub seed: u64,
}

impl DegradeSpec {
    pub fn noise(noise_std: f64, seed: u64) -> Self {
        Self {
            noise_std,
            blur: None,
            seed,
        }
    }
}

pub fn degrade(clean: &Image, spec: &DegradeSpec) -> Result<Image> {
    if !(spec.noise_std >= 0.0 && spec.noise_std.is_finite()) {
        return Err(Error::invalid(
            "noise",
            format!("must be nonnegative and finite, got {}", spec.noise_std),
        ));
    }
    let mut out = match &spec.blur {
        Some(kernel) => blur_apply(clean, kernel)?,
        None => clean.clone(),
    };
    if spec.noise_std > 0.0 {
        let normal =
            Normal::new(0.0, spec.noise_std).map_err(|e| Error::invalid("noise", e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        for v in out.values_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    Ok(out)
}

/// Piecewise-smooth scene in `[0, 1]`: a shaded background, a disk, a
/// rectangle, a triangle and a band of thin stripes.
pub fn phantom(shape: GridShape) -> Image {
    let (m, n) = (shape.rows() as f64, shape.cols() as f64);
    Image::from_fn(shape, |i, j| {
        let y = (i as f64 + 0.5) / m;
        let x = (j as f64 + 0.5) / n;
        let mut v = 0.15 + 0.25 * x;
        if (x - 0.32).powi(2) + (y - 0.35).powi(2) < 0.18f64.powi(2) {
            v = 0.85;
        }
        if (0.55..0.88).contains(&x) && (0.18..0.45).contains(&y) {
            v = 0.35;
        }
        if y > 0.58 && y < 0.9 && (x - 0.3).abs() < (y - 0.58) * 0.8 {
            v = 0.65;
        }
        if (0.6..0.9).contains(&x) && (0.6..0.88).contains(&y) {
            let stripe = ((x - 0.6) * n / 3.0).floor() as i64 % 2 == 0;
            v = if stripe { 0.95 } else { 0.05 };
        }
        v
    })
}
