use crate::error::{Error, Result};
use crate::nn::Network;

/// Indicator over the `N` synaptic-weight coordinates selecting the smoothed
/// subspace.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WeightMask {
    active: Vec<bool>,
    active_count: usize,
}

impl WeightMask {
    pub fn from_bools(active: Vec<bool>) -> Self {
        let active_count = active.iter().filter(|&&a| a).count();
        Self { active, active_count }
    }

    /// Isotropic mask, every weight active.
    pub fn all(n: usize) -> Self {
        Self { active: vec![true; n], active_count: n }
    }

    pub fn none(n: usize) -> Self {
        Self { active: vec![false; n], active_count: 0 }
    }

    /// Mask covering the weights of the layers at `positions`.
    pub fn from_layers<T>(net: &Network<T>, positions: &[usize]) -> Result<Self>
    where
        T: crate::Scalar,
    {
        let mut active = vec![false; net.weight_count()];
        for &pos in positions {
            let layer = net
                .layers()
                .get(pos)
                .ok_or_else(|| Error::Domain(format!("no layer at position {pos}")))?;
            let range = net.weight_range(pos).ok_or_else(|| {
                Error::Domain(format!("layer {pos} ({}, {:?}) has no synaptic weights", layer.name, layer.kind))
            })?;
            active[range].iter_mut().for_each(|a| *a = true);
        }
        Ok(Self::from_bools(active))
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    pub fn active_count(&self) -> usize {
        self.active_count
    }

    pub fn is_active(&self, i: usize) -> bool {
        self.active[i]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.active
    }

    pub fn active_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.active.iter().enumerate().filter_map(|(i, &a)| a.then_some(i))
    }
}
