//! Spatial operators on `[B, C, H, W]` tensors.

use super::linalg::{gemm_nn, gemm_nt, gemm_tn};
use super::{Real, Tensor, TensorError, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PadMode {
    Zeros,
    /// Mirror about the edge sample, excluding it (`[2,1 | 0,1,2 | 1,0]`).
    Reflection,
    /// Repeat the edge sample.
    Replicate,
}

/// Symmetric padding applied by [`Var::conv2d`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Padding {
    pub mode: PadMode,
    pub amount: usize,
}

impl Padding {
    pub const NONE: Padding = Padding {
        mode: PadMode::Zeros,
        amount: 0,
    };

    pub fn zeros(amount: usize) -> Self {
        Padding {
            mode: PadMode::Zeros,
            amount,
        }
    }

    pub fn reflect(amount: usize) -> Self {
        Padding {
            mode: PadMode::Reflection,
            amount,
        }
    }
}

/// Source index for padded coordinate `i` (relative to the unpadded origin).
/// Reflection folds repeatedly, so any amount is valid when `n >= 2`.
fn source_index(i: isize, n: usize, mode: PadMode) -> Option<usize> {
    let n_i = n as isize;
    if (0..n_i).contains(&i) {
        return Some(i as usize);
    }
    match mode {
        PadMode::Zeros => None,
        PadMode::Replicate => Some(i.clamp(0, n_i - 1) as usize),
        PadMode::Reflection => {
            if n == 1 {
                return Some(0);
            }
            let period = 2 * (n_i - 1);
            let m = i.rem_euclid(period);
            Some(if m < n_i { m } else { period - m } as usize)
        }
    }
}

fn index_map(before: usize, after: usize, n: usize, mode: PadMode) -> Vec<Option<usize>> {
    (0..before + n + after)
        .map(|o| source_index(o as isize - before as isize, n, mode))
        .collect()
}

fn im2col<T: Real>(
    x: &[T],
    (c, h, w): (usize, usize, usize),
    (kh, kw): (usize, usize),
    stride: usize,
    (ho, wo): (usize, usize),
) -> Vec<T> {
    let n = ho * wo;
    let mut cols = vec![T::zero(); c * kh * kw * n];
    for ci in 0..c {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..kh {
            for kx in 0..kw {
                let row = ((ci * kh + ky) * kw + kx) * n;
                for oy in 0..ho {
                    let src = &plane[(oy * stride + ky) * w..];
                    let dst = &mut cols[row + oy * wo..row + (oy + 1) * wo];
                    if stride == 1 {
                        dst.copy_from_slice(&src[kx..kx + wo]);
                    } else {
                        for (ox, d) in dst.iter_mut().enumerate() {
                            *d = src[ox * stride + kx];
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im_add(
    cols: &[f64],
    dx: &mut [f64],
    (c, h, w): (usize, usize, usize),
    (kh, kw): (usize, usize),
    stride: usize,
    (ho, wo): (usize, usize),
) {
    let n = ho * wo;
    for ci in 0..c {
        for ky in 0..kh {
            for kx in 0..kw {
                let row = ((ci * kh + ky) * kw + kx) * n;
                for oy in 0..ho {
                    let base = ci * h * w + (oy * stride + ky) * w + kx;
                    for ox in 0..wo {
                        dx[base + ox * stride] += cols[row + oy * wo + ox];
                    }
                }
            }
        }
    }
}

fn pool_dims(op: &'static str, h: usize, w: usize) -> Result<(usize, usize), TensorError> {
    if h < 2 || w < 2 {
        return Err(TensorError::arg(op, format!("extent {h}x{w} too small for a 2x2 window")));
    }
    Ok((h / 2, w / 2))
}

impl<T: Real> Var<T> {
    /// Pads the two spatial axes of a `[B,C,H,W]` tensor.
    pub fn pad2d(
        &self,
        (top, bottom, left, right): (usize, usize, usize, usize),
        mode: PadMode,
    ) -> Result<Var<T>, TensorError> {
        let [b, c, h, w] = self.value().dims4("pad2d")?;
        if top + bottom + left + right == 0 {
            return Ok(self.clone());
        }
        let (ho, wo) = (h + top + bottom, w + left + right);
        let ys = index_map(top, bottom, h, mode);
        let xs = index_map(left, right, w, mode);
        let x = self.value().data();
        let mut out = vec![T::zero(); b * c * ho * wo];
        for p in 0..b * c {
            let src = &x[p * h * w..(p + 1) * h * w];
            let dst = &mut out[p * ho * wo..(p + 1) * ho * wo];
            for (oy, sy) in ys.iter().enumerate() {
                let Some(sy) = sy else { continue };
                for (ox, sx) in xs.iter().enumerate() {
                    if let Some(sx) = sx {
                        dst[oy * wo + ox] = src[sy * w + sx];
                    }
                }
            }
        }
        let value = Tensor::from_parts(vec![b, c, ho, wo], out);
        Ok(Var::from_op(value, &[self], move |g, _, _, _| {
            let gd = g.data();
            let mut gx = vec![T::zero(); b * c * h * w];
            for p in 0..b * c {
                let src = &gd[p * ho * wo..(p + 1) * ho * wo];
                let dst = &mut gx[p * h * w..(p + 1) * h * w];
                for (oy, sy) in ys.iter().enumerate() {
                    let Some(sy) = sy else { continue };
                    for (ox, sx) in xs.iter().enumerate() {
                        if let Some(sx) = sx {
                            dst[sy * w + sx] = dst[sy * w + sx] + src[oy * wo + ox];
                        }
                    }
                }
            }
            vec![Some(Tensor::from_parts(vec![b, c, h, w], gx))]
        }))
    }

    /// 2-D cross-correlation. `weight` is `[Cout, Cin, kh, kw]`, `bias` is `[Cout]`.
    pub fn conv2d(
        &self,
        weight: &Var<T>,
        bias: Option<&Var<T>>,
        stride: usize,
        padding: Padding,
    ) -> Result<Var<T>, TensorError> {
        let [_, cin, h, w] = self.value().dims4("conv2d")?;
        let [cout, wcin, _, _] = weight.value().dims4("conv2d weight")?;
        if wcin != cin {
            return Err(TensorError::shape("conv2d weight", format!("[Cout, {cin}, kh, kw]"), weight.shape()));
        }
        if let Some(b) = bias {
            if b.shape() != [cout] {
                return Err(TensorError::shape("conv2d bias", format!("[{cout}]"), b.shape()));
            }
        }
        if stride == 0 {
            return Err(TensorError::arg("conv2d", "stride must be positive"));
        }
        let p = padding.amount;
        if padding.mode == PadMode::Reflection && (p >= h || p >= w) {
            return Err(TensorError::arg(
                "conv2d",
                format!("reflection padding {p} requires extents above it, got {h}x{w}"),
            ));
        }
        let padded = self.pad2d((p, p, p, p), padding.mode)?;
        padded.conv2d_valid(weight, bias, stride)
    }

    fn conv2d_valid(&self, weight: &Var<T>, bias: Option<&Var<T>>, stride: usize) -> Result<Var<T>, TensorError> {
        let [b, cin, h, w] = self.value().dims4("conv2d")?;
        let [cout, _, kh, kw] = weight.value().dims4("conv2d weight")?;
        if kh > h || kw > w {
            return Err(TensorError::arg("conv2d", format!("kernel {kh}x{kw} exceeds padded input {h}x{w}")));
        }
        if (h - kh) % stride != 0 || (w - kw) % stride != 0 {
            return Err(TensorError::arg(
                "conv2d",
                format!("output extent not exact for input {h}x{w}, kernel {kh}x{kw}, stride {stride}"),
            ));
        }
        let (ho, wo) = ((h - kh) / stride + 1, (w - kw) / stride + 1);
        let (k, n) = (cin * kh * kw, ho * wo);
        let x = self.value().data();
        let wd = weight.value().data();
        let bd = bias.map(|b| b.value().data().to_vec());
        let mut out = Vec::with_capacity(b * cout * n);
        for bi in 0..b {
            let cols = im2col(&x[bi * cin * h * w..(bi + 1) * cin * h * w], (cin, h, w), (kh, kw), stride, (ho, wo));
            let mut y = gemm_nn(cout, k, n, wd, &cols);
            if let Some(bd) = &bd {
                for (co, chunk) in y.chunks_mut(n).enumerate() {
                    chunk.iter_mut().for_each(|v| *v = *v + bd[co]);
                }
            }
            out.extend(y);
        }
        let value = Tensor::from_parts(vec![b, cout, ho, wo], out);
        let mut inputs = vec![self, weight];
        inputs.extend(bias);
        Ok(Var::from_op(value, &inputs, move |g, inputs, _, needs| {
            let (x, wd) = (inputs[0].data(), inputs[1].data());
            let gd = g.data();
            let mut gx = needs[0].then(|| vec![0.0f64; b * cin * h * w]);
            let mut gw = needs[1].then(|| vec![0.0f64; cout * k]);
            let mut gb = needs.get(2).copied().unwrap_or(false).then(|| vec![0.0f64; cout]);
            for bi in 0..b {
                let gs = &gd[bi * cout * n..(bi + 1) * cout * n];
                if let Some(gx) = gx.as_mut() {
                    let dcols: Vec<f64> = gemm_tn(k, cout, n, wd, gs).into_iter().map(|v: T| v.as_f64()).collect();
                    col2im_add(
                        &dcols,
                        &mut gx[bi * cin * h * w..(bi + 1) * cin * h * w],
                        (cin, h, w),
                        (kh, kw),
                        stride,
                        (ho, wo),
                    );
                }
                if let Some(gw) = gw.as_mut() {
                    let cols = im2col(&x[bi * cin * h * w..(bi + 1) * cin * h * w], (cin, h, w), (kh, kw), stride, (ho, wo));
                    for (acc, v) in gw.iter_mut().zip(gemm_nt(cout, n, k, gs, &cols)) {
                        *acc += v.as_f64();
                    }
                }
                if let Some(gb) = gb.as_mut() {
                    for (co, chunk) in gs.chunks(n).enumerate() {
                        gb[co] += chunk.iter().map(|v| v.as_f64()).sum::<f64>();
                    }
                }
            }
            let narrow = |v: Vec<f64>, shape: &[usize]| {
                Tensor::from_parts(shape.to_vec(), v.into_iter().map(T::from_f64).collect())
            };
            let mut grads = vec![
                gx.map(|v| narrow(v, inputs[0].shape())),
                gw.map(|v| narrow(v, inputs[1].shape())),
            ];
            if inputs.len() == 3 {
                grads.push(gb.map(|v| narrow(v, inputs[2].shape())));
            }
            grads
        }))
    }

    /// Transposed convolution with `kernel == stride` and no padding, so each
    /// input sample expands into its own `stride × stride` output block.
    /// `weight` is `[Cin, Cout, k, k]`.
    pub fn conv_transpose2d(&self, weight: &Var<T>, bias: Option<&Var<T>>, stride: usize) -> Result<Var<T>, TensorError> {
        let [b, cin, h, w] = self.value().dims4("conv_transpose2d")?;
        let [wcin, cout, kh, kw] = weight.value().dims4("conv_transpose2d weight")?;
        if wcin != cin {
            return Err(TensorError::shape("conv_transpose2d weight", format!("[{cin}, Cout, k, k]"), weight.shape()));
        }
        if stride == 0 || kh != stride || kw != stride {
            return Err(TensorError::arg(
                "conv_transpose2d",
                format!("kernel {kh}x{kw} must equal stride {stride} for exact upsampling"),
            ));
        }
        if let Some(bv) = bias {
            if bv.shape() != [cout] {
                return Err(TensorError::shape("conv_transpose2d bias", format!("[{cout}]"), bv.shape()));
            }
        }
        let s = stride;
        let (ho, wo, n, rows) = (h * s, w * s, h * w, cout * s * s);
        let x = self.value().data();
        let wd = weight.value().data();
        let bd = bias.map(|b| b.value().data().to_vec());
        let mut out = vec![T::zero(); b * cout * ho * wo];
        for bi in 0..b {
            let cols = gemm_tn(rows, cin, n, wd, &x[bi * cin * n..(bi + 1) * cin * n]);
            let dst = &mut out[bi * cout * ho * wo..(bi + 1) * cout * ho * wo];
            for co in 0..cout {
                let bias_v = bd.as_ref().map_or(T::zero(), |bd| bd[co]);
                for ky in 0..s {
                    for kx in 0..s {
                        let row = ((co * s + ky) * s + kx) * n;
                        for y in 0..h {
                            for xx in 0..w {
                                dst[co * ho * wo + (y * s + ky) * wo + xx * s + kx] = cols[row + y * w + xx] + bias_v;
                            }
                        }
                    }
                }
            }
        }
        let value = Tensor::from_parts(vec![b, cout, ho, wo], out);
        let mut inputs = vec![self, weight];
        inputs.extend(bias);
        Ok(Var::from_op(value, &inputs, move |g, inputs, _, needs| {
            let (x, wd) = (inputs[0].data(), inputs[1].data());
            let gd = g.data();
            let mut gx = needs[0].then(|| Vec::with_capacity(b * cin * n));
            let mut gw = needs[1].then(|| vec![0.0f64; cin * rows]);
            let mut gb = needs.get(2).copied().unwrap_or(false).then(|| vec![0.0f64; cout]);
            for bi in 0..b {
                let src = &gd[bi * cout * ho * wo..(bi + 1) * cout * ho * wo];
                let mut gcols = vec![T::zero(); rows * n];
                for co in 0..cout {
                    for ky in 0..s {
                        for kx in 0..s {
                            let row = ((co * s + ky) * s + kx) * n;
                            for y in 0..h {
                                for xx in 0..w {
                                    gcols[row + y * w + xx] = src[co * ho * wo + (y * s + ky) * wo + xx * s + kx];
                                }
                            }
                        }
                    }
                    if let Some(gb) = gb.as_mut() {
                        gb[co] += src[co * ho * wo..(co + 1) * ho * wo].iter().map(|v| v.as_f64()).sum::<f64>();
                    }
                }
                if let Some(gx) = gx.as_mut() {
                    gx.extend(gemm_nn(cin, rows, n, wd, &gcols));
                }
                if let Some(gw) = gw.as_mut() {
                    let xs = &x[bi * cin * n..(bi + 1) * cin * n];
                    for (acc, v) in gw.iter_mut().zip(gemm_nt(cin, n, rows, xs, &gcols)) {
                        *acc += v.as_f64();
                    }
                }
            }
            let narrow = |v: Vec<f64>, shape: &[usize]| {
                Tensor::from_parts(shape.to_vec(), v.into_iter().map(T::from_f64).collect())
            };
            let mut grads = vec![
                gx.map(|v| Tensor::from_parts(inputs[0].shape().to_vec(), v)),
                gw.map(|v| narrow(v, inputs[1].shape())),
            ];
            if inputs.len() == 3 {
                grads.push(gb.map(|v| narrow(v, inputs[2].shape())));
            }
            grads
        }))
    }

    /// Bilinear resampling with half-pixel centers (corners not aligned).
    pub fn bilinear_resize(&self, out_h: usize, out_w: usize) -> Result<Var<T>, TensorError> {
        let [b, c, h, w] = self.value().dims4("bilinear_resize")?;
        if out_h == 0 || out_w == 0 {
            return Err(TensorError::arg("bilinear_resize", "target extents must be positive"));
        }
        if (out_h, out_w) == (h, w) {
            return Ok(self.clone());
        }
        let ys = resize_taps(h, out_h);
        let xs = resize_taps(w, out_w);
        let x = self.value().data();
        let mut out = Vec::with_capacity(b * c * out_h * out_w);
        for p in 0..b * c {
            let plane = &x[p * h * w..(p + 1) * h * w];
            for &(y0, y1, wy) in &ys {
                for &(x0, x1, wx) in &xs {
                    let corners = [plane[y0 * w + x0], plane[y0 * w + x1], plane[y1 * w + x0], plane[y1 * w + x1]];
                    let [a, bb, cc, d] = corners.map(|v| v.as_f64());
                    let top = a + (bb - a) * wx;
                    let bot = cc + (d - cc) * wx;
                    let v = top + (bot - top) * wy;
                    let lo = a.min(bb).min(cc).min(d);
                    let hi = a.max(bb).max(cc).max(d);
                    out.push(T::from_f64(v.clamp(lo, hi)));
                }
            }
        }
        let value = Tensor::from_parts(vec![b, c, out_h, out_w], out);
        Ok(Var::from_op(value, &[self], move |g, _, _, _| {
            let gd = g.data();
            let mut gx = vec![0.0f64; b * c * h * w];
            for p in 0..b * c {
                let dst = &mut gx[p * h * w..(p + 1) * h * w];
                let src = &gd[p * out_h * out_w..(p + 1) * out_h * out_w];
                for (oy, &(y0, y1, wy)) in ys.iter().enumerate() {
                    for (ox, &(x0, x1, wx)) in xs.iter().enumerate() {
                        let gv = src[oy * out_w + ox].as_f64();
                        dst[y0 * w + x0] += gv * (1.0 - wy) * (1.0 - wx);
                        dst[y0 * w + x1] += gv * (1.0 - wy) * wx;
                        dst[y1 * w + x0] += gv * wy * (1.0 - wx);
                        dst[y1 * w + x1] += gv * wy * wx;
                    }
                }
            }
            vec![Some(Tensor::from_parts(vec![b, c, h, w], gx.into_iter().map(T::from_f64).collect()))]
        }))
    }

    pub fn maxpool2d(&self) -> Result<Var<T>, TensorError> {
        let [b, c, h, w] = self.value().dims4("maxpool2d")?;
        let (ho, wo) = pool_dims("maxpool2d", h, w)?;
        let x = self.value().data();
        let mut out = Vec::with_capacity(b * c * ho * wo);
        let mut arg = Vec::with_capacity(b * c * ho * wo);
        for p in 0..b * c {
            for oy in 0..ho {
                for ox in 0..wo {
                    let base = p * h * w + 2 * oy * w + 2 * ox;
                    let mut best = base;
                    for idx in [base + 1, base + w, base + w + 1] {
                        if x[idx] > x[best] {
                            best = idx;
                        }
                    }
                    out.push(x[best]);
                    arg.push(best);
                }
            }
        }
        let value = Tensor::from_parts(vec![b, c, ho, wo], out);
        Ok(Var::from_op(value, &[self], move |g, inputs, _, _| {
            let mut gx = vec![T::zero(); inputs[0].numel()];
            for (&i, &gv) in arg.iter().zip(g.data()) {
                gx[i] = gx[i] + gv;
            }
            vec![Some(Tensor::from_parts(inputs[0].shape().to_vec(), gx))]
        }))
    }

    pub fn avgpool2d(&self) -> Result<Var<T>, TensorError> {
        let [b, c, h, w] = self.value().dims4("avgpool2d")?;
        let (ho, wo) = pool_dims("avgpool2d", h, w)?;
        let x = self.value().data();
        let mut out = Vec::with_capacity(b * c * ho * wo);
        for p in 0..b * c {
            for oy in 0..ho {
                for ox in 0..wo {
                    let base = p * h * w + 2 * oy * w + 2 * ox;
                    let s = x[base].as_f64() + x[base + 1].as_f64() + x[base + w].as_f64() + x[base + w + 1].as_f64();
                    out.push(T::from_f64(0.25 * s));
                }
            }
        }
        let value = Tensor::from_parts(vec![b, c, ho, wo], out);
        Ok(Var::from_op(value, &[self], move |g, inputs, _, _| {
            let gd = g.data();
            let mut gx = vec![T::zero(); inputs[0].numel()];
            let quarter = T::from_f64(0.25);
            for p in 0..b * c {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let gv = gd[(p * ho + oy) * wo + ox] * quarter;
                        let base = p * h * w + 2 * oy * w + 2 * ox;
                        for idx in [base, base + 1, base + w, base + w + 1] {
                            gx[idx] = gv;
                        }
                    }
                }
            }
            vec![Some(Tensor::from_parts(inputs[0].shape().to_vec(), gx))]
        }))
    }

    /// `[B,C,H,W] -> [B,C,1,1]`
    pub fn global_avg_pool(&self) -> Result<Var<T>, TensorError> {
        self.value().dims4("global_avg_pool")?;
        self.mean_axes(&[2, 3])
    }

    /// `[B,C,H,W] -> [B,C,1,1]`
    pub fn global_max_pool(&self) -> Result<Var<T>, TensorError> {
        self.value().dims4("global_max_pool")?;
        self.max_axis(3)?.max_axis(2)
    }

    /// Horizontal Sobel response per channel, reflection padded.
    pub fn sobel_x(&self) -> Result<Var<T>, TensorError> {
        self.fixed_kernel_3x3(SOBEL_X)
    }

    /// Vertical Sobel response per channel, reflection padded.
    pub fn sobel_y(&self) -> Result<Var<T>, TensorError> {
        self.fixed_kernel_3x3(SOBEL_Y)
    }

    fn fixed_kernel_3x3(&self, k: [f64; 9]) -> Result<Var<T>, TensorError> {
        let [b, c, h, w] = self.value().dims4("sobel")?;
        let kernel = Var::constant(Tensor::from_parts(vec![1, 1, 3, 3], k.iter().map(|&v| T::from_f64(v)).collect()));
        self.reshape(&[b * c, 1, h, w])?
            .conv2d(&kernel, None, 1, Padding::reflect(1))?
            .reshape(&[b, c, h, w])
    }
}

pub const SOBEL_X: [f64; 9] = [-1.0, 0.0, 1.0, -2.0, 0.0, 2.0, -1.0, 0.0, 1.0];
pub const SOBEL_Y: [f64; 9] = [-1.0, -2.0, -1.0, 0.0, 0.0, 0.0, 1.0, 2.0, 1.0];

/// Per output coordinate: (lower tap, upper tap, weight of upper tap).
fn resize_taps(n_in: usize, n_out: usize) -> Vec<(usize, usize, f64)> {
    let scale = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(n_in - 1);
            let i1 = (i0 + 1).min(n_in - 1);
            let frac = if i1 == i0 { 0.0 } else { src - i0 as f64 };
            (i0, i1, frac)
        })
        .collect()
}
