//! Test-only oracles shared by the integration suites.
#![allow(dead_code)]

pub mod blocks;
pub mod gradcheck;
pub mod op_cases;
pub mod oracles;

use polfuse::Tensor;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

pub fn rng(seed: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

/// Uniform values in `[-1, 1]`.
pub fn uniform(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut r = rng(seed);
    Tensor::from_fn(shape, |_| r.random_range(-1.0..=1.0))
}

/// Uniform values in `[-1, 1]` at least `gap` away from zero, for ops with a kink at 0.
pub fn uniform_off_kink(shape: &[usize], seed: u64, gap: f64) -> Tensor<f64> {
    let mut r = rng(seed);
    Tensor::from_fn(shape, |_| loop {
        let v: f64 = r.random_range(-1.0..=1.0);
        if v.abs() > gap {
            break v;
        }
    })
}

pub fn uniform_in(shape: &[usize], seed: u64, lo: f64, hi: f64) -> Tensor<f64> {
    let mut r = rng(seed);
    Tensor::from_fn(shape, |_| r.random_range(lo..=hi))
}

/// Shuffled evenly spaced values in `[-1, 1]`; pairwise gaps exceed the
/// finite-difference step so argmax-type ops never switch under perturbation.
pub fn distinct(shape: &[usize], seed: u64) -> Tensor<f64> {
    use rand::seq::SliceRandom;
    let n: usize = shape.iter().product();
    let mut v: Vec<f64> = (0..n).map(|i| -1.0 + 2.0 * i as f64 / n.max(2) as f64).collect();
    v.shuffle(&mut rng(seed));
    Tensor::new(shape, v).unwrap()
}

pub fn tensor_of(img: &oracles::Img) -> Tensor<f64> {
    Tensor::new([1, 1, img.h, img.w], img.px.clone()).unwrap()
}

pub fn img_of(t: &Tensor<f64>) -> oracles::Img {
    let s = t.shape();
    oracles::Img {
        h: s[2],
        w: s[3],
        px: t.data()[..s[2] * s[3]].to_vec(),
    }
}

pub fn img_of_plane(p: &polfuse::Plane) -> oracles::Img {
    oracles::Img {
        h: p.height(),
        w: p.width(),
        px: p.to_f64(),
    }
}

/// Independent uniform noise in `[0,1]`.
pub fn noise_plane(h: usize, w: usize, seed: u64) -> polfuse::Plane {
    use rand::Rng;
    let mut r = rng(seed);
    polfuse::Plane::from_fn(h, w, |_, _| r.random_range(0.0..=1.0))
}
