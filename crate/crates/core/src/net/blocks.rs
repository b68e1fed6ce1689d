//! Network building blocks, generic over the element type so the same code
//! serves training (`f32`) and gradient verification (`f64`).

use super::params::ForwardCtx;
use crate::error::{Error, Result};
use crate::tensor::{batchnorm2d, layer_norm, PadMode, Padding};
use crate::{Real, Var};

/// Reference-map normalization epsilon.
pub const ENHANCE_EPS: f64 = 1e-6;

pub fn conv<T: Real>(ctx: &ForwardCtx<'_, T>, prefix: &str, x: &Var<T>, padding: Padding) -> Result<Var<T>> {
    let w = ctx.var(&format!("{prefix}.weight"))?;
    let b = ctx.try_var(&format!("{prefix}.bias"));
    Ok(x.conv2d(w, b, 1, padding)?)
}

pub fn conv3<T: Real>(ctx: &ForwardCtx<'_, T>, prefix: &str, x: &Var<T>) -> Result<Var<T>> {
    conv(ctx, prefix, x, Padding::reflect(1))
}

pub fn batchnorm<T: Real>(ctx: &ForwardCtx<'_, T>, prefix: &str, x: &Var<T>) -> Result<Var<T>> {
    let out = batchnorm2d(
        x,
        ctx.var(&format!("{prefix}.gamma"))?,
        ctx.var(&format!("{prefix}.beta"))?,
        ctx.buffer(&format!("{prefix}.running_mean"))?,
        ctx.buffer(&format!("{prefix}.running_var"))?,
        ctx.mode(),
    )?;
    if let Some((mean, var)) = out.batch_stats {
        ctx.record(prefix, mean, var);
    }
    Ok(out.output)
}

/// `ReLU(BN(Conv3x3(x)))`
pub fn conv_bn_relu<T: Real>(ctx: &ForwardCtx<'_, T>, prefix: &str, x: &Var<T>) -> Result<Var<T>> {
    let y = conv3(ctx, &format!("{prefix}.conv"), x)?;
    Ok(batchnorm(ctx, &format!("{prefix}.bn"), &y)?.relu())
}

pub fn double_conv<T: Real>(ctx: &ForwardCtx<'_, T>, prefix: &str, x: &Var<T>) -> Result<Var<T>> {
    let y = conv_bn_relu(ctx, &format!("{prefix}.0"), x)?;
    conv_bn_relu(ctx, &format!("{prefix}.1"), &y)
}

/// Affine map over the last axis; weight is `[in, out]`.
pub fn linear<T: Real>(ctx: &ForwardCtx<'_, T>, prefix: &str, x: &Var<T>) -> Result<Var<T>> {
    let w = ctx.var(&format!("{prefix}.weight"))?;
    let (din, dout) = (w.shape()[0], w.shape()[1]);
    let lead: Vec<usize> = x.shape()[..x.shape().len() - 1].to_vec();
    let rows: usize = lead.iter().product();
    let mut y = x.reshape(&[rows, din])?.matmul(w)?;
    if let Some(b) = ctx.try_var(&format!("{prefix}.bias")) {
        y = y.add(&b.reshape(&[1, dout])?)?;
    }
    let mut shape = lead;
    shape.push(dout);
    Ok(y.reshape(&shape)?)
}

/// Channel gate then spatial gate: `x ⊙ Mc ⊙ Ms`.
pub fn cbam<T: Real>(ctx: &ForwardCtx<'_, T>, x: &Var<T>) -> Result<Var<T>> {
    let [b, c, _, _] = x.value().dims4("cbam")?;
    let mlp = |v: Var<T>| -> Result<Var<T>> {
        let h = linear(ctx, "cbam.channel.fc1", &v.reshape(&[b, c])?)?.relu();
        linear(ctx, "cbam.channel.fc2", &h)
    };
    let avg = mlp(x.global_avg_pool()?)?;
    let max = mlp(x.global_max_pool()?)?;
    let mc = avg.add(&max)?.sigmoid().reshape(&[b, c, 1, 1])?;
    let x1 = x.mul(&mc)?;
    let pooled = Var::concat(&[x1.mean_axes(&[1])?, x1.max_axis(1)?], 1)?;
    let ms = conv(ctx, "cbam.spatial", &pooled, Padding::reflect(3))?.sigmoid();
    Ok(x1.mul(&ms)?)
}

/// Stem conv to `X0`, two conv-BN-ReLU layers, attention on their sum and a
/// residual: `ReLU(X0 + CBAM(X1 + X2))`.
pub fn texture_fusion<T: Real>(ctx: &ForwardCtx<'_, T>, x: &Var<T>) -> Result<Var<T>> {
    let cfg = ctx.config();
    if x.shape().get(1) != Some(&2) {
        return Err(Error::invalid(format!("texture block expects 2 channels, got {:?}", x.shape())));
    }
    let x0 = conv3(ctx, "stem.conv", x)?;
    if !cfg.use_texture_block {
        return if cfg.use_cbam { cbam(ctx, &x0) } else { Ok(x0) };
    }
    let x1 = conv_bn_relu(ctx, "texture.x1", &x0)?;
    let x2 = conv_bn_relu(ctx, "texture.x2", &x1)?;
    let sum = x1.add(&x2)?;
    let x3 = if cfg.use_cbam { cbam(ctx, &sum)? } else { sum };
    Ok(x0.add(&x3)?.relu())
}

/// Three single-channel sigmoid maps at full, half and quarter resolution.
pub fn brightness_weights<T: Real>(ctx: &ForwardCtx<'_, T>, dolp: &Var<T>) -> Result<[Var<T>; 3]> {
    let [_, _, h, w] = dolp.value().dims4("brightness_weights")?;
    if h % 4 != 0 || w % 4 != 0 {
        return Err(Error::invalid(format!("brightness branch needs extents divisible by 4, got {h}×{w}")));
    }
    let f1 = conv_bn_relu(ctx, "brightness.f1", dolp)?;
    let f2 = conv_bn_relu(ctx, "brightness.f2", &f1.avgpool2d()?)?;
    let f3 = conv_bn_relu(ctx, "brightness.f3", &f2.avgpool2d()?)?;
    let omega = |i: usize, f: &Var<T>| -> Result<Var<T>> {
        Ok(conv(ctx, &format!("brightness.omega{i}"), f, Padding::NONE)?.sigmoid())
    };
    Ok([omega(1, &f1)?, omega(2, &f2)?, omega(3, &f3)?])
}

/// Resizes `omega` to the feature extents and multiplies it into every channel.
pub fn inject_brightness<T: Real>(feat: &Var<T>, omega: &Var<T>) -> Result<Var<T>> {
    let [b, _, h, w] = feat.value().dims4("inject_brightness")?;
    let [bo, co, ho, wo] = omega.value().dims4("inject_brightness")?;
    if b != bo || co != 1 {
        return Err(Error::invalid(format!(
            "weight map {:?} does not match features {:?}",
            omega.shape(),
            feat.shape()
        )));
    }
    let omega = if (ho, wo) == (h, w) {
        omega.clone()
    } else {
        omega.bilinear_resize(h, w)?
    };
    Ok(feat.mul(&omega)?)
}

/// `[B,C,H,W]` to `[B·nH·nW, ws², C]` token groups.
pub fn window_partition<T: Real>(x: &Var<T>, ws: usize) -> Result<Var<T>> {
    let [b, c, h, w] = x.value().dims4("window_partition")?;
    if h % ws != 0 || w % ws != 0 {
        return Err(Error::invalid(format!("window {ws} does not divide {h}×{w}")));
    }
    let (nh, nw) = (h / ws, w / ws);
    Ok(x.permute(&[0, 2, 3, 1])?
        .reshape(&[b, nh, ws, nw, ws, c])?
        .permute(&[0, 1, 3, 2, 4, 5])?
        .reshape(&[b * nh * nw, ws * ws, c])?)
}

/// Inverse of [`window_partition`].
pub fn window_reverse<T: Real>(t: &Var<T>, b: usize, h: usize, w: usize, ws: usize) -> Result<Var<T>> {
    let c = t.shape()[2];
    let (nh, nw) = (h / ws, w / ws);
    Ok(t.reshape(&[b, nh, nw, ws, ws, c])?
        .permute(&[0, 1, 3, 2, 4, 5])?
        .reshape(&[b, h, w, c])?
        .permute(&[0, 3, 1, 2])?)
}

/// Pre-norm multi-head self-attention with residual over `[N, T, C]` tokens.
/// No positional terms, so it is equivariant to token order within a group.
pub fn attention<T: Real>(ctx: &ForwardCtx<'_, T>, prefix: &str, tokens: &Var<T>, heads: usize) -> Result<Var<T>> {
    let &[n, t, c] = tokens.shape() else {
        return Err(Error::invalid(format!("attention expects [N,T,C], got {:?}", tokens.shape())));
    };
    let d = c / heads;
    let normed = layer_norm(
        tokens,
        ctx.var(&format!("{prefix}.norm1.gamma"))?,
        ctx.var(&format!("{prefix}.norm1.beta"))?,
    )?;
    let qkv = linear(ctx, &format!("{prefix}.qkv"), &normed)?
        .reshape(&[n, t, 3, heads, d])?
        .permute(&[2, 0, 3, 1, 4])?;
    let part = |i: usize| -> Result<Var<T>> { Ok(qkv.narrow(0, i, 1)?.reshape(&[n * heads, t, d])?) };
    let (q, k, v) = (part(0)?, part(1)?, part(2)?);
    let scores = q.matmul(&k.permute(&[0, 2, 1])?)?.scale(1.0 / (d as f64).sqrt());
    let mixed = scores
        .softmax(2)?
        .matmul(&v)?
        .reshape(&[n, heads, t, d])?
        .permute(&[0, 2, 1, 3])?
        .reshape(&[n, t, c])?;
    Ok(tokens.add(&linear(ctx, &format!("{prefix}.proj"), &mixed)?)?)
}

/// Token-wise `x + FC2(ReLU(FC1(LN(x))))`.
pub fn mlp<T: Real>(ctx: &ForwardCtx<'_, T>, prefix: &str, tokens: &Var<T>) -> Result<Var<T>> {
    let normed = layer_norm(
        tokens,
        ctx.var(&format!("{prefix}.norm2.gamma"))?,
        ctx.var(&format!("{prefix}.norm2.beta"))?,
    )?;
    let h = linear(ctx, &format!("{prefix}.mlp.fc1"), &normed)?.relu();
    Ok(tokens.add(&linear(ctx, &format!("{prefix}.mlp.fc2"), &h)?)?)
}

/// Windowed attention block without shifting. Extents that the window does
/// not divide are reflection-padded for the attention and cropped after.
pub fn swin_block<T: Real>(ctx: &ForwardCtx<'_, T>, prefix: &str, x: &Var<T>) -> Result<Var<T>> {
    let [b, _, h, w] = x.value().dims4("swin_block")?;
    let cfg = ctx.config();
    let ws = cfg.window.min(h).min(w);
    let (hp, wp) = (h.div_ceil(ws) * ws, w.div_ceil(ws) * ws);
    let padded = x.pad2d((0, hp - h, 0, wp - w), PadMode::Reflection)?;
    let tokens = window_partition(&padded, ws)?;
    let tokens = attention(ctx, prefix, &tokens, cfg.heads)?;
    let tokens = mlp(ctx, prefix, &tokens)?;
    let y = window_reverse(&tokens, b, hp, wp, ws)?;
    Ok(y.narrow(2, 0, h)?.narrow(3, 0, w)?)
}

/// Mean of a stride-2 transposed convolution and a 2× bilinear upsample.
pub fn hybrid_upsample<T: Real>(ctx: &ForwardCtx<'_, T>, prefix: &str, x: &Var<T>) -> Result<Var<T>> {
    let [_, _, h, w] = x.value().dims4("hybrid_upsample")?;
    let learned = x.conv_transpose2d(
        ctx.var(&format!("{prefix}.weight"))?,
        ctx.try_var(&format!("{prefix}.bias")),
        2,
    )?;
    let smooth = x.bilinear_resize(2 * h, 2 * w)?;
    Ok(learned.add(&smooth)?.scale(0.5))
}

/// Per-image min-max normalization `(b - min) / (max - min + ε)`.
pub fn normalize_reference<T: Real>(b_ref: &Var<T>) -> Result<Var<T>> {
    let [b, _, _, _] = b_ref.value().dims4("normalize_reference")?;
    let flat = b_ref.reshape(&[b, b_ref.value().numel() / b])?;
    let lo = flat.min_axis(1)?.reshape(&[b, 1, 1, 1])?;
    let hi = flat.max_axis(1)?.reshape(&[b, 1, 1, 1])?;
    Ok(b_ref.sub(&lo)?.div(&hi.sub(&lo)?.add_scalar(ENHANCE_EPS))?)
}

/// `x ⊙ (1 + M)` with `M = σ(Conv(W(W([x; B_nor]))))`, `W` = conv then ReLU.
pub fn bright_enhance<T: Real>(ctx: &ForwardCtx<'_, T>, x: &Var<T>, b_ref: &Var<T>) -> Result<Var<T>> {
    let [b, _, h, w] = x.value().dims4("bright_enhance")?;
    let [br, cr, _, _] = b_ref.value().dims4("bright_enhance")?;
    if br != b || cr != 1 {
        return Err(Error::invalid(format!(
            "reference map {:?} does not match features {:?}",
            b_ref.shape(),
            x.shape()
        )));
    }
    let b_ref = if b_ref.shape()[2..] == [h, w] {
        b_ref.clone()
    } else {
        b_ref.bilinear_resize(h, w)?
    };
    let b_nor = normalize_reference(&b_ref)?;
    let y = Var::concat(&[x.clone(), b_nor], 1)?;
    let y = conv3(ctx, "enhance.conv1", &y)?.relu();
    let y = conv3(ctx, "enhance.conv2", &y)?.relu();
    let m = conv3(ctx, "enhance.conv3", &y)?.sigmoid();
    Ok(x.mul(&m.add_scalar(1.0))?)
}
