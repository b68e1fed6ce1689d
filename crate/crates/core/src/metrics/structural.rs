use super::field::Field;
use crate::error::{Error, Result};
use crate::loss::{gaussian_window, ssim_window_for, SSIM_C1, SSIM_C2, SSIM_SIGMA};

/// Exponents of the five MS-SSIM scales, finest first.
pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];

struct Terms {
    ssim: f64,
    cs: f64,
}

fn terms(x: &Field, y: &Field) -> Terms {
    let taps = gaussian_window(ssim_window_for(x.h, x.w), SSIM_SIGMA);
    let mx = x.filter_valid(&taps);
    let my = y.filter_valid(&taps);
    let sxx = x.map(|a| a * a).filter_valid(&taps);
    let syy = y.map(|a| a * a).filter_valid(&taps);
    let sxy = x.zip(y, |a, b| a * b).filter_valid(&taps);
    let n = mx.v.len() as f64;
    let (mut ssim, mut cs) = (0.0, 0.0);
    for i in 0..mx.v.len() {
        let (a, b) = (mx.v[i], my.v[i]);
        let vx = sxx.v[i] - a * a;
        let vy = syy.v[i] - b * b;
        let cov = sxy.v[i] - a * b;
        let c = (2.0 * cov + SSIM_C2) / (vx + vy + SSIM_C2);
        cs += c;
        ssim += (2.0 * a * b + SSIM_C1) / (a * a + b * b + SSIM_C1) * c;
    }
    Terms {
        ssim: ssim / n,
        cs: cs / n,
    }
}

pub(crate) fn ssim(x: &Field, y: &Field) -> f64 {
    terms(x, y).ssim
}

/// Number of dyadic scales whose extent still holds a full 11-pixel window.
pub fn ms_ssim_scales(h: usize, w: usize) -> usize {
    let n = h.min(w);
    (1..MS_SSIM_WEIGHTS.len()).take_while(|&s| n >> s >= 11).count() + 1
}

pub(crate) fn ms_ssim(x: &Field, y: &Field) -> f64 {
    let scales = ms_ssim_scales(x.h, x.w);
    let total: f64 = MS_SSIM_WEIGHTS[..scales].iter().sum();
    let (mut x, mut y) = (x.clone(), y.clone());
    let mut value = 1.0;
    for (s, w) in MS_SSIM_WEIGHTS[..scales].iter().enumerate() {
        let t = terms(&x, &y);
        let base = if s + 1 == scales { t.ssim } else { t.cs };
        value *= base.max(0.0).powf(w / total);
        if s + 1 < scales {
            x = x.avg_pool2();
            y = y.avg_pool2();
        }
    }
    value
}

pub(crate) fn require_extent(metric: &'static str, f: &Field, min: usize) -> Result<()> {
    if f.h < min || f.w < min {
        return Err(Error::Metric {
            metric,
            msg: format!("needs at least {min}×{min} pixels, got {}×{}", f.h, f.w),
        });
    }
    Ok(())
}
