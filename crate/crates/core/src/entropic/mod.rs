//! Partial local entropy: kernels, weight masks, displacement sampling, and
//! the smoothed losses with their exact gradients.

pub mod distance;
pub mod losses;
pub mod mask;
pub mod sampling;
pub mod spec;

pub use distance::{
    distance, distance_restricted, distance_soft, gaussian_distance, kernel, kernel_restricted, soft_profile,
};
pub use losses::{
    averaged_loss_soft, averaged_loss_soft_with_draws, evaluate_points, exp_average, m_loss, m_loss_with_draws,
    pla_loss, pla_loss_with_draws, plea_loss, plea_loss_with_draws, LossKind, Objective,
};
pub use mask::WeightMask;
pub use sampling::{sample_displacements, Displacement};
pub use spec::{KernelFamily, SmoothingSpec};
