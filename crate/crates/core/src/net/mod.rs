//! Luminance-aware multi-scale fusion network.
//!
//! Data flow: reflection pad, texture fusion on `[S0; DOLP]`, a three-level
//! encoder whose stages are reweighted by brightness maps computed from
//! DOLP, a double-conv plus windowed-attention bottleneck, a decoder with
//! hybrid upsampling and skip connections, brightness enhancement, and a
//! 1×1 sigmoid head. The padding is cropped from the output.

pub mod blocks;
mod config;
mod params;

pub use config::{Ablation, NetworkConfig};
pub use params::{BnUpdate, Buffer, ForwardCtx, ModelParams};

use crate::error::{Error, Result};
use crate::tensor::{BatchNormMode, PadMode, Padding};
use crate::{Plane, Real, Var};
use blocks::*;

/// Smallest accepted input extent.
pub const MIN_EXTENT: usize = 8;

/// Internal extent for an input extent: the next multiple of 8, at least 16
/// so the bottleneck keeps two samples per axis for its reflection-padded convs.
pub fn padded_extent(n: usize) -> usize {
    n.div_ceil(8).max(2) * 8
}

/// Fuses `s0` and `dolp` (`[B,1,H,W]`, values in `[0,1]`) into a `[B,1,H,W]` image in `(0,1)`.
pub fn forward<T: Real>(ctx: &ForwardCtx<'_, T>, s0: &Var<T>, dolp: &Var<T>) -> Result<Var<T>> {
    let [_, c, h, w] = s0.value().dims4("forward")?;
    if dolp.shape() != s0.shape() || c != 1 {
        return Err(Error::invalid(format!(
            "s0 {:?} and dolp {:?} must be equal single-channel shapes",
            s0.shape(),
            dolp.shape()
        )));
    }
    if h < MIN_EXTENT || w < MIN_EXTENT {
        return Err(Error::invalid(format!("input {h}×{w} is below the {MIN_EXTENT}-pixel minimum")));
    }
    let cfg = ctx.config();
    let pad = (0, padded_extent(h) - h, 0, padded_extent(w) - w);
    let s0p = s0.pad2d(pad, PadMode::Reflection)?;
    let dolpp = dolp.pad2d(pad, PadMode::Reflection)?;

    let mut x = texture_fusion(ctx, &Var::concat(&[s0p, dolpp.clone()], 1)?)?;
    let omegas = if cfg.use_brightness_branch {
        Some(brightness_weights(ctx, &dolpp)?)
    } else {
        None
    };
    let mut skips = Vec::with_capacity(3);
    for level in 0..3 {
        x = double_conv(ctx, &format!("encoder.{level}"), &x)?;
        if let Some(om) = &omegas {
            x = inject_brightness(&x, &om[level])?;
        }
        skips.push(x.clone());
        x = x.maxpool2d()?;
    }
    x = double_conv(ctx, "bottleneck.conv", &x)?;
    x = swin_block(ctx, "bottleneck.swin", &x)?;
    for (i, skip) in skips.iter().rev().enumerate() {
        let up = hybrid_upsample(ctx, &format!("decoder.{i}.up"), &x)?;
        x = double_conv(ctx, &format!("decoder.{i}.conv"), &Var::concat(&[up, skip.clone()], 1)?)?;
    }
    if cfg.use_bright_enhance {
        x = bright_enhance(ctx, &x, &dolpp)?;
    }
    let y = conv(ctx, "head", &x, Padding::NONE)?.sigmoid();
    Ok(y.narrow(2, 0, h)?.narrow(3, 0, w)?)
}

/// Eval-mode fusion of one `[0,1]` image pair of any extent of at least 8.
pub fn fuse_planes(params: &ModelParams, s0: &Plane, dolp: &Plane) -> Result<Plane> {
    if s0.dims() != dolp.dims() {
        return Err(Error::invalid(format!("S0 is {:?} but DOLP is {:?}", s0.dims(), dolp.dims())));
    }
    let ctx = params.bind::<f32>(BatchNormMode::Eval, false);
    let y = forward(&ctx, &Var::constant(s0.to_tensor()), &Var::constant(dolp.to_tensor()))?;
    Plane::from_tensor(y.value(), 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::BatchNormMode;
    use crate::Tensor;

    fn input(h: usize, w: usize, seed: u64) -> (Var<f32>, Var<f32>) {
        let f = |k: f32| {
            Var::constant(Tensor::from_fn(&[1, 1, h, w], |i| {
                ((i as f32 * 0.618 + seed as f32 * 0.1 + k).fract() * 0.9 + 0.05).min(1.0)
            }))
        };
        (f(0.0), f(0.37))
    }

    #[test]
    fn padded_extents() {
        assert_eq!(padded_extent(8), 16);
        assert_eq!(padded_extent(16), 16);
        assert_eq!(padded_extent(37), 40);
        assert_eq!(padded_extent(100), 104);
        assert_eq!(padded_extent(128), 128);
    }

    #[test]
    fn shape_and_range() {
        let p = ModelParams::init(&NetworkConfig::small(), 3).unwrap();
        for (h, w) in [(8, 8), (37, 20), (16, 24)] {
            let ctx = p.bind::<f32>(BatchNormMode::Eval, false);
            let (s0, dolp) = input(h, w, 1);
            let y = forward(&ctx, &s0, &dolp).unwrap();
            assert_eq!(y.shape(), &[1, 1, h, w]);
            assert!(y.value().data().iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = ModelParams::init(&NetworkConfig::small(), 3).unwrap();
        let ctx = p.bind::<f32>(BatchNormMode::Eval, false);
        let (s0, _) = input(16, 16, 1);
        let (_, d2) = input(16, 12, 1);
        assert!(forward(&ctx, &s0, &d2).is_err());
        let (a, b) = input(4, 16, 1);
        assert!(forward(&ctx, &a, &b).is_err());
    }

    #[test]
    fn train_mode_records_every_batchnorm() {
        let p = ModelParams::init(&NetworkConfig::small(), 3).unwrap();
        let ctx = p.bind::<f32>(BatchNormMode::Train, true);
        let (s0, dolp) = input(16, 16, 2);
        forward(&ctx, &s0, &dolp).unwrap();
        let updates = ctx.take_bn_updates();
        assert_eq!(updates.len() * 2, p.buffers().len());
    }
}
