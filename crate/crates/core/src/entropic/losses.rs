//! Smoothed losses built from the cross-entropy at the centre `W` and at `y`
//! displaced points `W + ΔWᵃ` evaluated on the same mini-batch.
//!
//! Every loss has a `*_with_draws` form taking explicit displacements, which
//! is what the gradient checks use: for a fixed draw the displacement
//! penalties are constants, so the gradient is the exact chain rule through
//! the combination of the per-point losses.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::entropic::distance::{distance_restricted, kernel_restricted};
use crate::entropic::mask::WeightMask;
use crate::entropic::sampling::{sample_displacements, Displacement};
use crate::entropic::spec::{KernelFamily, SmoothingSpec};
use crate::error::{Error, Result};
use crate::nn::{FlatGradient, Network, Tensor};
use crate::scalar::Scalar;

/// Cross-entropy and gradient at the centre (index 0) and at each displaced point.
pub fn evaluate_points<T: Scalar>(
    net: &Network<T>,
    batch: &Tensor<T>,
    labels: &[usize],
    draws: &[Displacement<T>],
) -> Result<Vec<(T, FlatGradient<T>)>> {
    let mut out = Vec::with_capacity(draws.len() + 1);
    out.push(net.backward(batch, labels)?);
    if draws.is_empty() {
        return Ok(out);
    }
    let mut scratch = net.clone();
    for d in draws {
        scratch.load_displaced(net, &d.delta)?;
        out.push(scratch.backward(batch, labels)?);
    }
    Ok(out)
}

/// `-log( mean_a exp(-E_a) )` and the softmin weights `exp(-E_a) / Σ exp(-E_b)`,
/// which are its derivatives with respect to each `E_a`.
///
/// Shifted by `min E` so nothing overflows; a single energy is returned
/// unchanged with weight exactly one. Infinite energies get weight zero.
pub fn exp_average<T: Scalar>(energies: &[T]) -> (T, Vec<T>) {
    assert!(!energies.is_empty(), "need at least one energy");
    let min = energies.iter().copied().fold(T::infinity(), T::min);
    let shifted: Vec<T> = energies.iter().map(|&e| (-(e - min)).exp()).collect();
    let sum: T = shifted.iter().copied().sum();
    let n = T::from_usize_lossy(energies.len());
    let value = min - (sum / n).ln();
    let weights = shifted.into_iter().map(|s| s / sum).collect();
    (value, weights)
}

fn combine<T: Scalar>(points: &[(T, FlatGradient<T>)], weights: &[T]) -> FlatGradient<T> {
    let mut g = points[0].1.clone();
    g.scale(weights[0]);
    for ((_, gi), &w) in points.iter().zip(weights).skip(1) {
        g.add_scaled(gi, w);
    }
    g
}

fn require_family(spec: &SmoothingSpec, allowed: &[KernelFamily], loss: &str) -> Result<()> {
    spec.validate()?;
    if allowed.contains(&spec.family) {
        Ok(())
    } else {
        Err(Error::Domain(format!("{loss} loss is not defined for the {:?} kernel", spec.family)))
    }
}

fn check_draws<T: Scalar>(net: &Network<T>, mask: &WeightMask, draws: &[Displacement<T>]) -> Result<()> {
    if mask.len() != net.weight_count() {
        return Err(Error::Length { expected: net.weight_count(), found: mask.len() });
    }
    if let Some(d) = draws.iter().find(|d| d.len() != net.weight_count()) {
        return Err(Error::Length { expected: net.weight_count(), found: d.len() });
    }
    Ok(())
}

/// Partial local exponential average: `-log[(e^{-L₀} + Σₐ e^{-Lₐ}) / (1+y)]`.
pub fn plea_loss_with_draws<T: Scalar>(
    net: &Network<T>,
    batch: &Tensor<T>,
    labels: &[usize],
    mask: &WeightMask,
    draws: &[Displacement<T>],
) -> Result<(T, FlatGradient<T>)> {
    check_draws(net, mask, draws)?;
    let points = evaluate_points(net, batch, labels, draws)?;
    if points.len() == 1 {
        return Ok(points.into_iter().next().expect("centre"));
    }
    let losses: Vec<T> = points.iter().map(|p| p.0).collect();
    let (value, weights) = exp_average(&losses);
    Ok((value, combine(&points, &weights)))
}

/// Partial local average: `(L₀ + Σₐ Lₐ) / (1+y)`. The gradient is the mean of
/// the per-point gradients, never their sum.
pub fn pla_loss_with_draws<T: Scalar>(
    net: &Network<T>,
    batch: &Tensor<T>,
    labels: &[usize],
    mask: &WeightMask,
    draws: &[Displacement<T>],
) -> Result<(T, FlatGradient<T>)> {
    check_draws(net, mask, draws)?;
    let points = evaluate_points(net, batch, labels, draws)?;
    if points.len() == 1 {
        return Ok(points.into_iter().next().expect("centre"));
    }
    let w = T::one() / T::from_usize_lossy(points.len());
    let value = points.iter().map(|p| p.0).sum::<T>() * w;
    Ok((value, combine(&points, &vec![w; points.len()])))
}

/// Finite-sharpness smoothed loss
/// `-log[(e^{-L₀} + Σₐ e^{-Lₐ - d^[U](ΔWᵃ)}) / (1+y)]`.
pub fn m_loss_with_draws<T: Scalar>(
    net: &Network<T>,
    batch: &Tensor<T>,
    labels: &[usize],
    mask: &WeightMask,
    spec: &SmoothingSpec,
    draws: &[Displacement<T>],
) -> Result<(T, FlatGradient<T>)> {
    require_family(spec, &[KernelFamily::SigmoidSoft, KernelFamily::Gaussian], "M")?;
    check_draws(net, mask, draws)?;
    let points = evaluate_points(net, batch, labels, draws)?;
    if points.len() == 1 {
        return Ok(points.into_iter().next().expect("centre"));
    }
    let mut energies = vec![points[0].0];
    for (p, d) in points.iter().skip(1).zip(draws) {
        energies.push(p.0 + distance_restricted(spec, mask, &d.delta));
    }
    let (value, weights) = exp_average(&energies);
    Ok((value, combine(&points, &weights)))
}

/// Kernel-weighted local average `(L₀ + Σₐ Lₐ K^[U](ΔWᵃ)) / (1+y)`.
pub fn averaged_loss_soft_with_draws<T: Scalar>(
    net: &Network<T>,
    batch: &Tensor<T>,
    labels: &[usize],
    mask: &WeightMask,
    spec: &SmoothingSpec,
    draws: &[Displacement<T>],
) -> Result<(T, FlatGradient<T>)> {
    spec.validate()?;
    check_draws(net, mask, draws)?;
    let points = evaluate_points(net, batch, labels, draws)?;
    if points.len() == 1 {
        return Ok(points.into_iter().next().expect("centre"));
    }
    let inv = T::one() / T::from_usize_lossy(points.len());
    let mut weights = vec![inv];
    for d in draws {
        weights.push(kernel_restricted(spec, mask, &d.delta) * inv);
    }
    let value = points.iter().zip(&weights).map(|(p, &w)| p.0 * w).sum::<T>();
    Ok((value, combine(&points, &weights)))
}

pub fn plea_loss<T: Scalar, R: Rng + ?Sized>(
    net: &Network<T>,
    batch: &Tensor<T>,
    labels: &[usize],
    mask: &WeightMask,
    spec: &SmoothingSpec,
    rng: &mut R,
) -> Result<(T, FlatGradient<T>)> {
    require_family(spec, &[KernelFamily::HypercubeSharp], "PLEA")?;
    let draws = sample_displacements(mask, spec, rng);
    plea_loss_with_draws(net, batch, labels, mask, &draws)
}

pub fn pla_loss<T: Scalar, R: Rng + ?Sized>(
    net: &Network<T>,
    batch: &Tensor<T>,
    labels: &[usize],
    mask: &WeightMask,
    spec: &SmoothingSpec,
    rng: &mut R,
) -> Result<(T, FlatGradient<T>)> {
    require_family(spec, &[KernelFamily::HypercubeSharp], "PLA")?;
    let draws = sample_displacements(mask, spec, rng);
    pla_loss_with_draws(net, batch, labels, mask, &draws)
}

pub fn m_loss<T: Scalar, R: Rng + ?Sized>(
    net: &Network<T>,
    batch: &Tensor<T>,
    labels: &[usize],
    mask: &WeightMask,
    spec: &SmoothingSpec,
    rng: &mut R,
) -> Result<(T, FlatGradient<T>)> {
    require_family(spec, &[KernelFamily::SigmoidSoft, KernelFamily::Gaussian], "M")?;
    let draws = sample_displacements(mask, spec, rng);
    m_loss_with_draws(net, batch, labels, mask, spec, &draws)
}

pub fn averaged_loss_soft<T: Scalar, R: Rng + ?Sized>(
    net: &Network<T>,
    batch: &Tensor<T>,
    labels: &[usize],
    mask: &WeightMask,
    spec: &SmoothingSpec,
    rng: &mut R,
) -> Result<(T, FlatGradient<T>)> {
    spec.validate()?;
    let draws = sample_displacements(mask, spec, rng);
    averaged_loss_soft_with_draws(net, batch, labels, mask, spec, &draws)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    #[serde(alias = "CE")]
    Ce,
    #[serde(alias = "PLA")]
    Pla,
    #[serde(alias = "PLEA")]
    Plea,
    #[serde(alias = "M")]
    M,
    /// Kernel-weighted local average.
    #[serde(alias = "AVG")]
    Avg,
}

/// A training objective: cross-entropy or one of the smoothed losses with its
/// kernel and mask. Displacements are drawn afresh on every evaluation.
#[derive(Clone, Debug)]
pub struct Objective {
    pub kind: LossKind,
    pub smoothing: Option<(SmoothingSpec, WeightMask)>,
}

impl Objective {
    pub fn cross_entropy() -> Self {
        Self { kind: LossKind::Ce, smoothing: None }
    }

    pub fn smoothed(kind: LossKind, spec: SmoothingSpec, mask: WeightMask) -> Result<Self> {
        let obj = Self { kind, smoothing: Some((spec, mask)) };
        obj.validate()?;
        Ok(obj)
    }

    pub fn validate(&self) -> Result<()> {
        match (self.kind, &self.smoothing) {
            (LossKind::Ce, None) => Ok(()),
            (LossKind::Ce, Some(_)) => Err(Error::Domain("cross-entropy takes no smoothing spec".into())),
            (_, None) => Err(Error::Domain(format!("{:?} loss needs a smoothing spec and mask", self.kind))),
            (LossKind::Pla | LossKind::Plea, Some((s, _))) => {
                require_family(s, &[KernelFamily::HypercubeSharp], "PLA/PLEA")
            }
            (LossKind::M, Some((s, _))) => require_family(s, &[KernelFamily::SigmoidSoft, KernelFamily::Gaussian], "M"),
            (LossKind::Avg, Some((s, _))) => s.validate(),
        }
    }

    pub fn evaluate<T: Scalar, R: Rng + ?Sized>(
        &self,
        net: &Network<T>,
        batch: &Tensor<T>,
        labels: &[usize],
        rng: &mut R,
    ) -> Result<(T, FlatGradient<T>)> {
        let Some((spec, mask)) = &self.smoothing else {
            return net.backward(batch, labels);
        };
        match self.kind {
            LossKind::Ce => net.backward(batch, labels),
            LossKind::Pla => pla_loss(net, batch, labels, mask, spec, rng),
            LossKind::Plea => plea_loss(net, batch, labels, mask, spec, rng),
            LossKind::M => m_loss(net, batch, labels, mask, spec, rng),
            LossKind::Avg => averaged_loss_soft(net, batch, labels, mask, spec, rng),
        }
    }
}
