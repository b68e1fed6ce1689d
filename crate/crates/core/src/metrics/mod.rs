//! Fusion-quality metrics scoring a fused image against two sources.
//!
//! SSIM, MS-SSIM and VIF read the planes as floats (`[0,1]` for the
//! structural metrics, `[0,255]` for VIF). SD, Q_MI and Q^AB/F work on the
//! 8-bit quantized planes.

mod edges;
mod field;
mod info;
mod structural;
mod vif;

use std::fmt::Write as _;
use std::path::Path;

use field::Field;

use crate::error::{Error, Result};
use crate::Plane;

pub use structural::{ms_ssim_scales, MS_SSIM_WEIGHTS};
pub use vif::{VIF_NOISE_VAR, VIF_WINDOWS};

pub const CSV_HEADER: &str = "pair,ssim,vif,sd,ms_ssim,q_mi,q_abf";

fn check_shapes(fused: &Plane, a: &Plane, b: &Plane) -> Result<()> {
    if fused.dims() != a.dims() || fused.dims() != b.dims() {
        return Err(Error::invalid(format!(
            "shape mismatch: fused {:?}, sources {:?} and {:?}",
            fused.dims(),
            a.dims(),
            b.dims()
        )));
    }
    Ok(())
}

fn unit(p: &Plane) -> Field {
    Field::from_plane(p, 1.0)
}

/// SSIM of a single pair, averaged over valid 11×11 Gaussian windows.
pub fn ssim_pair(x: &Plane, y: &Plane) -> Result<f64> {
    if x.dims() != y.dims() {
        return Err(Error::invalid(format!("shape mismatch: {:?} vs {:?}", x.dims(), y.dims())));
    }
    Ok(structural::ssim(&unit(x), &unit(y)))
}

/// Mean of `SSIM(fused, a)` and `SSIM(fused, b)`.
pub fn metric_ssim(fused: &Plane, a: &Plane, b: &Plane) -> Result<f64> {
    check_shapes(fused, a, b)?;
    let f = unit(fused);
    Ok((structural::ssim(&f, &unit(a)) + structural::ssim(&f, &unit(b))) / 2.0)
}

/// Five-scale MS-SSIM with 2×2 average pooling, averaged over both sources.
/// Images under 176 pixels per side use fewer scales with renormalized exponents.
pub fn metric_ms_ssim(fused: &Plane, a: &Plane, b: &Plane) -> Result<f64> {
    check_shapes(fused, a, b)?;
    let f = unit(fused);
    Ok((structural::ms_ssim(&f, &unit(a)) + structural::ms_ssim(&f, &unit(b))) / 2.0)
}

/// Pixel-domain VIF with each source as reference, averaged.
pub fn metric_vif(fused: &Plane, a: &Plane, b: &Plane) -> Result<f64> {
    check_shapes(fused, a, b)?;
    let f = Field::from_plane(fused, 255.0);
    structural::require_extent("vif", &f, VIF_WINDOWS[0])?;
    let va = vif::vifp(&Field::from_plane(a, 255.0), &f)?;
    let vb = vif::vifp(&Field::from_plane(b, 255.0), &f)?;
    Ok((va + vb) / 2.0)
}

/// Population standard deviation of the quantized image on `[0,255]`.
pub fn metric_sd(fused: &Plane) -> f64 {
    info::std_dev(&Field::quantized(fused))
}

/// Xydeas–Petrovic edge-preservation index in `[0,1]`.
pub fn metric_qabf(fused: &Plane, a: &Plane, b: &Plane) -> Result<f64> {
    check_shapes(fused, a, b)?;
    edges::qabf(&Field::quantized(fused), &Field::quantized(a), &Field::quantized(b))
}

/// `(MI(F,A) + MI(F,B)) / (H(A) + H(B))` from 256-bin histograms, in bits.
pub fn metric_qmi(fused: &Plane, a: &Plane, b: &Plane) -> Result<f64> {
    check_shapes(fused, a, b)?;
    info::qmi(&Field::quantized(fused), &Field::quantized(a), &Field::quantized(b))
}

/// Entropy in bits of the quantized plane.
pub fn entropy(p: &Plane) -> f64 {
    info::entropy_of(&Field::quantized(p))
}

/// Mutual information in bits between two quantized planes.
pub fn mutual_information(x: &Plane, y: &Plane) -> Result<f64> {
    if x.dims() != y.dims() {
        return Err(Error::invalid(format!("shape mismatch: {:?} vs {:?}", x.dims(), y.dims())));
    }
    Ok(info::mutual_information(&Field::quantized(x), &Field::quantized(y)))
}

/// The six metric values of one fused image.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairMetrics {
    pub ssim: f64,
    pub vif: f64,
    pub sd: f64,
    pub ms_ssim: f64,
    pub q_mi: f64,
    pub q_abf: f64,
}

impl PairMetrics {
    /// Values in CSV column order.
    pub fn values(&self) -> [f64; 6] {
        [self.ssim, self.vif, self.sd, self.ms_ssim, self.q_mi, self.q_abf]
    }

    fn from_values(v: [f64; 6]) -> Self {
        PairMetrics {
            ssim: v[0],
            vif: v[1],
            sd: v[2],
            ms_ssim: v[3],
            q_mi: v[4],
            q_abf: v[5],
        }
    }

    pub fn csv_row(&self, pair: &str) -> String {
        let mut row = pair.to_string();
        for v in self.values() {
            write!(row, ",{v:.3}").expect("writing to a String");
        }
        row
    }
}

pub fn evaluate_pair(fused: &Plane, a: &Plane, b: &Plane) -> Result<PairMetrics> {
    check_shapes(fused, a, b)?;
    let m = PairMetrics {
        ssim: metric_ssim(fused, a, b)?,
        vif: metric_vif(fused, a, b)?,
        sd: metric_sd(fused),
        ms_ssim: metric_ms_ssim(fused, a, b)?,
        q_mi: metric_qmi(fused, a, b)?,
        q_abf: metric_qabf(fused, a, b)?,
    };
    if let Some(i) = m.values().iter().position(|v| !v.is_finite()) {
        return Err(Error::Metric {
            metric: ["ssim", "vif", "sd", "ms_ssim", "q_mi", "q_abf"][i],
            msg: "non-finite value".into(),
        });
    }
    Ok(m)
}

/// Named per-pair metrics in insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricReport {
    pub rows: Vec<(String, PairMetrics)>,
}

impl MetricReport {
    pub fn push(&mut self, pair: impl Into<String>, m: PairMetrics) {
        self.rows.push((pair.into(), m));
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Column-wise arithmetic mean, `None` for an empty report.
    pub fn mean(&self) -> Option<PairMetrics> {
        if self.rows.is_empty() {
            return None;
        }
        let mut acc = [0.0; 6];
        for (_, m) in &self.rows {
            for (a, v) in acc.iter_mut().zip(m.values()) {
                *a += v;
            }
        }
        Some(PairMetrics::from_values(acc.map(|a| a / self.rows.len() as f64)))
    }

    pub fn to_csv(&self) -> Result<String> {
        let mean = self.mean().ok_or_else(|| Error::invalid("no pairs to report"))?;
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for (name, m) in &self.rows {
            out.push_str(&m.csv_row(name));
            out.push('\n');
        }
        out.push_str(&mean.csv_row("mean"));
        out.push('\n');
        Ok(out)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let text = self.to_csv()?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}
