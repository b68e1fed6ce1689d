//! Composite training objective: structural similarity, pixel L1, local
//! contrast, Sobel texture and parameter-norm regularization.

use crate::error::{Error, Result};
use crate::tensor::Padding;
use crate::{Real, Tensor, Var};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
/// `(0.01 · L)²` with `L = 1`.
pub const SSIM_C1: f64 = 1e-4;
/// `(0.03 · L)²` with `L = 1`.
pub const SSIM_C2: f64 = 9e-4;
pub const CONTRAST_EPS: f64 = 1e-8;

/// Normalized 1-D Gaussian taps.
pub fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let center = (size as f64 - 1.0) / 2.0;
    let taps: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - center).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / total).collect()
}

/// Window extent used for an `h×w` image: 11, or the smaller extent if the image is smaller.
pub fn ssim_window_for(h: usize, w: usize) -> usize {
    SSIM_WINDOW.min(h).min(w)
}

fn blur<T: Real>(x: &Var<T>, taps: &[f64]) -> Result<Var<T>> {
    let k = taps.len();
    let row = Var::constant(Tensor::new([1, 1, 1, k], taps.iter().map(|&t| T::from_f64(t)).collect())?);
    let col = Var::constant(Tensor::new([1, 1, k, 1], taps.iter().map(|&t| T::from_f64(t)).collect())?);
    Ok(x.conv2d(&row, None, 1, Padding::NONE)?.conv2d(&col, None, 1, Padding::NONE)?)
}

fn same_shape<T: Real>(op: &str, a: &Var<T>, b: &Var<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::invalid(format!("{op}: shapes {:?} and {:?} differ", a.shape(), b.shape())));
    }
    Ok(())
}

/// Per-window SSIM over valid Gaussian windows, shape `[B·C, 1, H', W']`.
pub fn ssim_windows<T: Real>(x: &Var<T>, y: &Var<T>) -> Result<Var<T>> {
    same_shape("ssim", x, y)?;
    let [b, c, h, w] = x.value().dims4("ssim")?;
    let taps = gaussian_window(ssim_window_for(h, w), SSIM_SIGMA);
    let x = x.reshape(&[b * c, 1, h, w])?;
    let y = y.reshape(&[b * c, 1, h, w])?;
    let mu_x = blur(&x, &taps)?;
    let mu_y = blur(&y, &taps)?;
    let mu_xx = mu_x.square();
    let mu_yy = mu_y.square();
    let mu_xy = mu_x.mul(&mu_y)?;
    let s_xx = blur(&x.square(), &taps)?.sub(&mu_xx)?;
    let s_yy = blur(&y.square(), &taps)?.sub(&mu_yy)?;
    let s_xy = blur(&x.mul(&y)?, &taps)?.sub(&mu_xy)?;
    let num = mu_xy.scale(2.0).add_scalar(SSIM_C1).mul(&s_xy.scale(2.0).add_scalar(SSIM_C2))?;
    let den = mu_xx.add(&mu_yy)?.add_scalar(SSIM_C1).mul(&s_xx.add(&s_yy)?.add_scalar(SSIM_C2))?;
    Ok(num.div(&den)?)
}

/// Mean SSIM over all windows and images.
pub fn ssim_map<T: Real>(x: &Var<T>, y: &Var<T>) -> Result<Var<T>> {
    Ok(ssim_windows(x, y)?.mean())
}

/// `½ Σ_k (1 − SSIM(pred, target_k))`
pub fn ssim_loss<T: Real>(pred: &Var<T>, s0: &Var<T>, dolp: &Var<T>) -> Result<Var<T>> {
    let a = ssim_map(pred, s0)?;
    let b = ssim_map(pred, dolp)?;
    Ok(a.add(&b)?.neg().add_scalar(2.0).scale(0.5))
}

/// `½ Σ_k mean|pred − target_k|`
pub fn l1_loss<T: Real>(pred: &Var<T>, s0: &Var<T>, dolp: &Var<T>) -> Result<Var<T>> {
    same_shape("l1", pred, s0)?;
    same_shape("l1", pred, dolp)?;
    let a = pred.sub(s0)?.abs().mean();
    let b = pred.sub(dolp)?.abs().mean();
    Ok(a.add(&b)?.scale(0.5))
}

/// Mean over images and channels of `max(0, 1 − sqrt(var + ε))`, variance over space.
pub fn contrast_loss<T: Real>(pred: &Var<T>) -> Result<Var<T>> {
    pred.value().dims4("contrast")?;
    let std = pred.var_axes(&[2, 3])?.add_scalar(CONTRAST_EPS).sqrt();
    Ok(std.neg().add_scalar(1.0).relu().mean())
}

/// `½ Σ_k ½(mean|∇x pred − ∇x t_k| + mean|∇y pred − ∇y t_k|)` with Sobel gradients.
pub fn texture_loss<T: Real>(pred: &Var<T>, s0: &Var<T>, dolp: &Var<T>) -> Result<Var<T>> {
    same_shape("texture", pred, s0)?;
    same_shape("texture", pred, dolp)?;
    let (px, py) = (pred.sobel_x()?, pred.sobel_y()?);
    let mut terms = Vec::with_capacity(2);
    for t in [s0, dolp] {
        let dx = px.sub(&t.sobel_x()?)?.abs().mean();
        let dy = py.sub(&t.sobel_y()?)?.abs().mean();
        terms.push(dx.add(&dy)?.scale(0.5));
    }
    Ok(terms[0].add(&terms[1])?.scale(0.5))
}

/// Euclidean norm of a whole tensor; the subgradient at zero is taken as zero.
pub fn l2_norm<T: Real>(x: &Var<T>) -> Var<T> {
    let norm = x.value().data().iter().map(|v| v.as_f64().powi(2)).sum::<f64>().sqrt();
    let value = Tensor::scalar(T::from_f64(norm));
    Var::from_op(value, &[x], move |g, inputs, _, _| {
        let k = if norm > 0.0 { g.item().as_f64() / norm } else { 0.0 };
        vec![Some(inputs[0].map(|v| T::from_f64(v.as_f64() * k)))]
    })
}

/// `Σ_t ‖θ_t‖₂` over parameter tensors.
pub fn reg_loss<T: Real>(params: &[Var<T>]) -> Result<Var<T>> {
    let mut total = Var::constant(Tensor::scalar(T::zero()));
    for p in params {
        total = total.add(&l2_norm(p))?;
    }
    Ok(total)
}

/// `λ1..λ5` of the composite objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub ssim: f64,
    pub l1: f64,
    pub contrast: f64,
    pub texture: f64,
    pub reg: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            ssim: 1.0,
            l1: 1.0,
            contrast: 0.5,
            texture: 0.5,
            reg: 1e-4,
        }
    }
}

impl LossWeights {
    pub fn as_array(&self) -> [f64; 5] {
        [self.ssim, self.l1, self.contrast, self.texture, self.reg]
    }

    pub fn validate(&self) -> Result<()> {
        match self.as_array().iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            Some(w) => Err(Error::invalid(format!("loss weights must be finite and non-negative, got {w}"))),
            None => Ok(()),
        }
    }
}

/// Component values of one evaluation of the objective.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub ssim: f64,
    pub l1: f64,
    pub con: f64,
    pub tex: f64,
    pub reg: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn components(&self) -> [f64; 5] {
        [self.ssim, self.l1, self.con, self.tex, self.reg]
    }

    pub fn weighted(components: [f64; 5], w: &LossWeights) -> Self {
        let [ssim, l1, con, tex, reg] = components;
        let total = w.as_array().iter().zip(components).map(|(w, c)| w * c).sum();
        LossBreakdown {
            ssim,
            l1,
            con,
            tex,
            reg,
            total,
        }
    }
}

/// Weighted sum of the five terms and its breakdown.
pub fn total_loss<T: Real>(
    pred: &Var<T>,
    s0: &Var<T>,
    dolp: &Var<T>,
    params: &[Var<T>],
    w: &LossWeights,
) -> Result<(Var<T>, LossBreakdown)> {
    w.validate()?;
    let terms = [
        ssim_loss(pred, s0, dolp)?,
        l1_loss(pred, s0, dolp)?,
        contrast_loss(pred)?,
        texture_loss(pred, s0, dolp)?,
        reg_loss(params)?,
    ];
    let mut total: Option<Var<T>> = None;
    for (term, &lambda) in terms.iter().zip(&w.as_array()) {
        let weighted = term.scale(lambda);
        total = Some(match total {
            None => weighted,
            Some(acc) => acc.add(&weighted)?,
        });
    }
    let total = total.expect("five terms");
    let components = terms.each_ref().map(|t| t.value().item().as_f64());
    let mut breakdown = LossBreakdown::weighted(components, w);
    breakdown.total = total.value().item().as_f64();
    if !breakdown.total.is_finite() {
        return Err(Error::Tensor(crate::TensorError::NonFinite("total_loss")));
    }
    Ok((total, breakdown))
}
