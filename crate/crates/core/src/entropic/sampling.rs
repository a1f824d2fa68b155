use rand::Rng;

use crate::entropic::mask::WeightMask;
use crate::entropic::spec::SmoothingSpec;
use crate::scalar::Scalar;

/// A displacement `ΔW` of the flat weight vector; zero outside its mask.
#[derive(Clone, Debug, PartialEq)]
pub struct Displacement<T> {
    pub delta: Vec<T>,
}

impl<T: Scalar> Displacement<T> {
    pub fn zeros(n: usize) -> Self {
        Self { delta: vec![T::zero(); n] }
    }

    pub fn len(&self) -> usize {
        self.delta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delta.is_empty()
    }
}

/// Draws `spec.samples` independent displacements, uniform on
/// `[-h, h]` per active coordinate with `h = spec.sampling_half_width()`.
pub fn sample_displacements<T: Scalar, R: Rng + ?Sized>(
    mask: &WeightMask,
    spec: &SmoothingSpec,
    rng: &mut R,
) -> Vec<Displacement<T>> {
    let h = spec.sampling_half_width();
    (0..spec.samples)
        .map(|_| {
            let mut d = Displacement::zeros(mask.len());
            for i in mask.active_indices() {
                d.delta[i] = T::from_f64_lossy(rng.random_range(-h..=h));
            }
            d
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn draws_live_on_the_mask_and_inside_the_cube() {
        let mask = WeightMask::from_bools((0..50).map(|i| (20..35).contains(&i)).collect());
        let spec = SmoothingSpec::hypercube(0.01, 4);
        let draws: Vec<Displacement<f32>> = sample_displacements(&mask, &spec, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(draws.len(), 4);
        for d in &draws {
            for (i, &v) in d.delta.iter().enumerate() {
                if mask.is_active(i) {
                    assert!(v.abs() <= 0.01f32);
                } else {
                    assert_eq!(v, 0.0);
                }
            }
        }
        assert_ne!(draws[0], draws[1]);
    }

    #[test]
    fn soft_families_sample_twice_the_radius() {
        let mask = WeightMask::all(2000);
        let spec = SmoothingSpec::sigmoid(0.5, 8.0, 1);
        let d: Vec<Displacement<f64>> = sample_displacements(&mask, &spec, &mut ChaCha8Rng::seed_from_u64(2));
        let max = d[0].delta.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max <= 1.0 && max > 0.9);
    }

    #[test]
    fn coordinate_means_are_centred() {
        // Uniform on [-R, R] has std R/sqrt(3); the mean of n draws has std R/sqrt(3n).
        let (n, r) = (100_000usize, 1.0f64);
        let mask = WeightMask::all(3);
        let spec = SmoothingSpec::hypercube(r, n);
        let draws: Vec<Displacement<f64>> = sample_displacements(&mask, &spec, &mut ChaCha8Rng::seed_from_u64(77));
        let bound = 3.0 * r / (3.0 * n as f64).sqrt();
        for c in 0..3 {
            let mean = draws.iter().map(|d| d.delta[c]).sum::<f64>() / n as f64;
            assert!(mean.abs() < bound, "coord {c} mean {mean}");
        }
    }

    #[test]
    fn zero_samples_gives_no_draws() {
        let d: Vec<Displacement<f32>> =
            sample_displacements(&WeightMask::all(4), &SmoothingSpec::hypercube(1.0, 0), &mut ChaCha8Rng::seed_from_u64(0));
        assert!(d.is_empty());
    }
}
