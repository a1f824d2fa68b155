//! Distance functions and kernels over displacement vectors.
//!
//! The soft distance is a sum of per-coordinate terms
//! `-log[(1 - σ(2k(Δ-R))) σ(2k(Δ+R))] = softplus(2k(Δ-R)) + softplus(-2k(Δ+R))`,
//! evaluated with a stable softplus so it stays finite for any finite input.
//! The unrestricted functions sum over every coordinate they are given; the
//! `*_restricted` variants sum over the mask's active coordinates only, so
//! inactive coordinates cannot influence the value.

use crate::entropic::mask::WeightMask;
use crate::entropic::spec::{KernelFamily, SmoothingSpec};
use crate::scalar::Scalar;

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus<T: Scalar>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

#[inline]
fn soft_term<T: Scalar>(d: T, r: T, two_k: T) -> T {
    softplus(two_k * (d - r)) + softplus(-(two_k * (d + r)))
}

/// Per-coordinate hypercube term: `0` inside, `ln 2` on the boundary, `∞` outside.
#[inline]
fn sharp_term<T: Scalar>(d: T, r: T) -> T {
    let a = d.abs();
    if a < r {
        T::zero()
    } else if a == r {
        T::from_f64_lossy(std::f64::consts::LN_2)
    } else {
        T::infinity()
    }
}

fn sum_over<T: Scalar>(coords: impl Iterator<Item = T>, spec: &SmoothingSpec) -> T {
    let r = T::from_f64_lossy(spec.radius);
    match spec.family {
        KernelFamily::SigmoidSoft => {
            let two_k = T::from_f64_lossy(2.0 * spec.k());
            coords.map(|d| soft_term(d, r, two_k)).sum()
        }
        KernelFamily::HypercubeSharp => coords.map(|d| sharp_term(d, r)).sum(),
        KernelFamily::Gaussian => {
            let half_gamma = T::from_f64_lossy(spec.gamma / 2.0);
            half_gamma * coords.map(|d| d * d).sum::<T>()
        }
    }
}

/// Soft sigmoid-wall distance `d_{R,k}` summed over every coordinate of `delta`.
///
/// Only meaningful for [`KernelFamily::SigmoidSoft`]; other families are
/// evaluated as if they were soft with the spec's `k`.
pub fn distance_soft<T: Scalar>(spec: &SmoothingSpec, delta: &[T]) -> T {
    let r = T::from_f64_lossy(spec.radius);
    let two_k = T::from_f64_lossy(2.0 * spec.k());
    delta.iter().map(|&d| soft_term(d, r, two_k)).sum()
}

/// Gaussian distance `γ/2 ||Δ||²`, the convention of the heat-kernel local entropy.
pub fn gaussian_distance<T: Scalar>(spec: &SmoothingSpec, delta: &[T]) -> T {
    T::from_f64_lossy(spec.gamma / 2.0) * delta.iter().map(|&d| d * d).sum::<T>()
}

/// Distance of the spec's family over all coordinates; `-ln` of [`kernel`].
pub fn distance<T: Scalar>(spec: &SmoothingSpec, delta: &[T]) -> T {
    sum_over(delta.iter().copied(), spec)
}

/// Distance of the projection of `delta_full` onto the mask's subspace.
pub fn distance_restricted<T: Scalar>(spec: &SmoothingSpec, mask: &WeightMask, delta_full: &[T]) -> T {
    debug_assert_eq!(mask.len(), delta_full.len());
    sum_over(mask.active_indices().map(|i| delta_full[i]), spec)
}

fn sharp_kernel<T: Scalar>(coords: impl Iterator<Item = T>, r: T) -> T {
    let half = T::from_f64_lossy(0.5);
    let mut k = T::one();
    for d in coords {
        let a = d.abs();
        if a > r {
            return T::zero();
        }
        if a == r {
            k *= half;
        }
    }
    k
}

/// Kernel `K = e^{-d}`. The hypercube kernel is the indicator of `|Δᵢ| < R`
/// with value ½ per coordinate sitting exactly on the boundary.
pub fn kernel<T: Scalar>(spec: &SmoothingSpec, delta: &[T]) -> T {
    match spec.family {
        KernelFamily::HypercubeSharp => sharp_kernel(delta.iter().copied(), T::from_f64_lossy(spec.radius)),
        _ => (-distance(spec, delta)).exp(),
    }
}

pub fn kernel_restricted<T: Scalar>(spec: &SmoothingSpec, mask: &WeightMask, delta_full: &[T]) -> T {
    match spec.family {
        KernelFamily::HypercubeSharp => {
            sharp_kernel(mask.active_indices().map(|i| delta_full[i]), T::from_f64_lossy(spec.radius))
        }
        _ => (-distance_restricted(spec, mask, delta_full)).exp(),
    }
}

/// One-dimensional section `(Δ, d_{R,k}(Δ), K_{R,k}(Δ))` on a uniform grid over
/// `[lo, hi]`.
pub fn soft_profile(radius: f64, k: f64, lo: f64, hi: f64, points: usize) -> Vec<(f64, f64, f64)> {
    let spec = SmoothingSpec::sigmoid(radius, k, 0);
    (0..points)
        .map(|i| {
            let x = if points > 1 { lo + (hi - lo) * i as f64 / (points - 1) as f64 } else { lo };
            let d = distance_soft(&spec, &[x]);
            (x, d, (-d).exp())
        })
        .collect()
}
