//! Shared inputs for the benchmarks.

use polfuse::{Plane, Tensor, Var};

/// Deterministic pseudo-random tensor in `[0, 1)`.
pub fn ramp_tensor(shape: &[usize], salt: u32) -> Tensor {
    Tensor::from_fn(shape, |i| ((i as u32).wrapping_mul(2_654_435_761).wrapping_add(salt) >> 8) as f32 / (1u32 << 24) as f32)
}

pub fn ramp_var(shape: &[usize], salt: u32) -> Var<f32> {
    Var::constant(ramp_tensor(shape, salt))
}

pub fn ramp_plane(h: usize, w: usize, salt: u32) -> Plane {
    Plane::from_tensor(&ramp_tensor(&[1, 1, h, w], salt), 0).expect("single-channel tensor")
}
