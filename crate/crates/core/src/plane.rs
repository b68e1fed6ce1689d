//! Single-channel image planes.

use image::GrayImage;

use crate::error::{Error, Result};
use crate::Tensor;

/// Row-major `H×W` array of samples.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Plane {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid(format!("plane extents must be positive, got {height}×{width}")));
        }
        if data.len() != height * width {
            return Err(Error::invalid(format!(
                "plane {height}×{width} needs {} samples, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(Plane { height, width, data })
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Self {
        Plane {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Plane { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn get(&self, y: usize, x: usize) -> f32 {
        self.data[y * self.width + x]
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Plane {
        Plane {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// `[1,1,H,W]` tensor view (copied).
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new([1, 1, self.height, self.width], self.data.clone()).expect("plane extents are positive")
    }

    /// Takes image `b`, channel 0 of a `[B,C,H,W]` tensor.
    pub fn from_tensor(t: &Tensor, b: usize) -> Result<Plane> {
        let &[nb, nc, h, w] = t.shape() else {
            return Err(Error::invalid(format!("expected [B,C,H,W], got {:?}", t.shape())));
        };
        if b >= nb {
            return Err(Error::invalid(format!("batch index {b} out of range for {nb}")));
        }
        let start = b * nc * h * w;
        Plane::new(h, w, t.data()[start..start + h * w].to_vec())
    }

    /// Stacks planes of equal extents into `[B,1,H,W]`.
    pub fn stack(planes: &[&Plane]) -> Result<Tensor> {
        let first = planes.first().ok_or_else(|| Error::invalid("cannot stack zero planes"))?;
        let (h, w) = first.dims();
        let mut data = Vec::with_capacity(planes.len() * h * w);
        for p in planes {
            if p.dims() != (h, w) {
                return Err(Error::invalid(format!(
                    "plane extents differ: {h}×{w} vs {}×{}",
                    p.height, p.width
                )));
            }
            data.extend_from_slice(&p.data);
        }
        Ok(Tensor::new([planes.len(), 1, h, w], data)?)
    }

    /// 8-bit quantization of a `[0,1]` plane.
    pub fn quantize(&self) -> GrayImage {
        to_display(self, 0.0, 1.0).expect("0 < 1")
    }

    /// Inverse of [`Plane::quantize`].
    pub fn from_gray8(img: &GrayImage) -> Plane {
        Plane {
            height: img.height() as usize,
            width: img.width() as usize,
            data: img.as_raw().iter().map(|&v| v as f32 / 255.0).collect(),
        }
    }
}

/// Affine map of `[lo, hi]` onto `0..=255`, clamped, rounded half to even.
pub fn to_display(plane: &Plane, lo: f64, hi: f64) -> Result<GrayImage> {
    if !(lo < hi) {
        return Err(Error::invalid(format!("display range needs lo < hi, got [{lo}, {hi}]")));
    }
    let scale = 255.0 / (hi - lo);
    let bytes = plane
        .data
        .iter()
        .map(|&v| ((v as f64 - lo) * scale).clamp(0.0, 255.0).round_ties_even() as u8)
        .collect();
    Ok(GrayImage::from_raw(plane.width as u32, plane.height as u32, bytes).expect("buffer matches extents"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_endpoints_and_midpoint() {
        let p = Plane::new(1, 4, vec![-1.0, 3.0, 1.0, 9.0]).unwrap();
        let img = to_display(&p, -1.0, 3.0).unwrap();
        assert_eq!(img.as_raw(), &[0, 255, 128, 255]);
        assert!(to_display(&p, 1.0, 1.0).is_err());
    }

    #[test]
    fn ties_round_to_even() {
        // 0.5/255 and 1.5/255 steps sit exactly between codes
        let p = Plane::new(1, 2, vec![0.5, 1.5]).unwrap();
        assert_eq!(to_display(&p, 0.0, 255.0).unwrap().as_raw(), &[0, 2]);
    }

    #[test]
    fn quantize_round_trip_is_stable() {
        let p = Plane::from_fn(3, 5, |y, x| (y * 5 + x) as f32 / 14.0);
        let q = Plane::from_gray8(&p.quantize());
        assert_eq!(q.quantize(), p.quantize());
    }

    #[test]
    fn tensor_round_trip() {
        let p = Plane::from_fn(2, 3, |y, x| (y + x) as f32);
        assert_eq!(Plane::from_tensor(&p.to_tensor(), 0).unwrap(), p);
        let s = Plane::stack(&[&p, &p]).unwrap();
        assert_eq!(s.shape(), &[2, 1, 2, 3]);
        assert!(Plane::stack(&[&p, &Plane::filled(3, 2, 0.0)]).is_err());
    }
}
