use super::field::Field;
use crate::error::{Error, Result};
use crate::loss::gaussian_window;

/// Window extents of the four scales, finest first.
pub const VIF_WINDOWS: [usize; 4] = [11, 9, 7, 5];
/// Additive channel noise variance on the `[0,255]` scale.
pub const VIF_NOISE_VAR: f64 = 2.0;
const TINY: f64 = 1e-10;

/// Pixel-domain VIF of `dist` against `reference`, both on the `[0,255]` scale.
pub(crate) fn vifp(reference: &Field, dist: &Field) -> Result<f64> {
    let (mut r, mut d) = (reference.clone(), dist.clone());
    let (mut num, mut den) = (0.0, 0.0);
    for (scale, &n) in VIF_WINDOWS.iter().enumerate() {
        let taps = gaussian_window(n, n as f64 / 5.0);
        if scale > 0 {
            if r.h < n || r.w < n {
                break;
            }
            r = r.filter_valid(&taps).decimate2();
            d = d.filter_valid(&taps).decimate2();
        }
        if r.h < n || r.w < n {
            break;
        }
        let mu1 = r.filter_valid(&taps);
        let mu2 = d.filter_valid(&taps);
        let s11 = r.map(|v| v * v).filter_valid(&taps);
        let s22 = d.map(|v| v * v).filter_valid(&taps);
        let s12 = r.zip(&d, |a, b| a * b).filter_valid(&taps);
        for i in 0..mu1.v.len() {
            let (m1, m2) = (mu1.v[i], mu2.v[i]);
            let mut sig1 = (s11.v[i] - m1 * m1).max(0.0);
            let sig2 = (s22.v[i] - m2 * m2).max(0.0);
            let sig12 = s12.v[i] - m1 * m2;
            let mut g = sig12 / (sig1 + TINY);
            let mut sv = sig2 - g * sig12;
            if sig1 < TINY {
                g = 0.0;
                sv = sig2;
                sig1 = 0.0;
            }
            if sig2 < TINY {
                g = 0.0;
                sv = 0.0;
            }
            if g < 0.0 {
                sv = sig2;
                g = 0.0;
            }
            let sv = sv.max(TINY);
            num += (1.0 + g * g * sig1 / (sv + VIF_NOISE_VAR)).log10();
            den += (1.0 + sig1 / VIF_NOISE_VAR).log10();
        }
    }
    if den <= 0.0 {
        return Err(Error::Metric {
            metric: "vif",
            msg: "reference image carries no local variance".into(),
        });
    }
    Ok(num / den)
}
