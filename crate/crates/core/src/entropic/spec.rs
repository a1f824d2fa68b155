use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    /// Indicator of the hypercube of half-edge `R` (the infinite-sharpness limit).
    HypercubeSharp,
    /// Product of sigmoid walls at `±R` with sharpness `k`.
    SigmoidSoft,
    /// Heat kernel `exp(-γ/2 ||Δ||²)`.
    Gaussian,
}

/// Parameters of the smoothing kernel and of the displacement sampler.
///
/// `sharpness` is `None` for the infinite-sharpness hypercube. For the two
/// soft families `radius` is also the sampling scale: draws are uniform on
/// `[-2R, 2R]` per active coordinate, so the kernel's tails are visited and
/// the kernel weight is carried by the loss.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothingSpec {
    pub family: KernelFamily,
    pub radius: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sharpness: Option<f64>,
    #[serde(default)]
    pub gamma: f64,
    pub samples: usize,
}

impl SmoothingSpec {
    pub fn hypercube(radius: f64, samples: usize) -> Self {
        Self { family: KernelFamily::HypercubeSharp, radius, sharpness: None, gamma: 0.0, samples }
    }

    pub fn sigmoid(radius: f64, sharpness: f64, samples: usize) -> Self {
        Self { family: KernelFamily::SigmoidSoft, radius, sharpness: Some(sharpness), gamma: 0.0, samples }
    }

    pub fn gaussian(gamma: f64, radius: f64, samples: usize) -> Self {
        Self { family: KernelFamily::Gaussian, radius, sharpness: None, gamma, samples }
    }

    /// `k`, infinite for the hypercube.
    pub fn k(&self) -> f64 {
        self.sharpness.unwrap_or(f64::INFINITY)
    }

    /// Half-width of the uniform sampling box per active coordinate.
    pub fn sampling_half_width(&self) -> f64 {
        match self.family {
            KernelFamily::HypercubeSharp => self.radius,
            KernelFamily::SigmoidSoft | KernelFamily::Gaussian => 2.0 * self.radius,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::Domain(format!("radius must be positive and finite, got {}", self.radius)));
        }
        match (self.family, self.sharpness) {
            (KernelFamily::HypercubeSharp, Some(k)) if k.is_finite() => {
                Err(Error::Domain(format!("hypercube kernel has infinite sharpness, got k = {k}")))
            }
            (KernelFamily::SigmoidSoft, None) => Err(Error::Domain("sigmoid kernel needs a sharpness k".into())),
            (KernelFamily::SigmoidSoft, Some(k)) if !(k > 0.0 && k.is_finite()) => {
                Err(Error::Domain(format!("sigmoid sharpness must be positive and finite, got {k}")))
            }
            (KernelFamily::Gaussian, _) if !(self.gamma >= 0.0 && self.gamma.is_finite()) => {
                Err(Error::Domain(format!("gamma must be nonnegative, got {}", self.gamma)))
            }
            _ => Ok(()),
        }
    }
}
