//! Dense f64 image buffer with the filtering primitives the metrics share.

use crate::Plane;

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Field {
    pub h: usize,
    pub w: usize,
    pub v: Vec<f64>,
}

impl Field {
    pub fn from_plane(p: &Plane, scale: f64) -> Field {
        Field {
            h: p.height(),
            w: p.width(),
            v: p.data().iter().map(|&x| x as f64 * scale).collect(),
        }
    }

    /// 8-bit quantized copy on the `[0,255]` scale.
    pub fn quantized(p: &Plane) -> Field {
        let q = p.quantize();
        Field {
            h: p.height(),
            w: p.width(),
            v: q.as_raw().iter().map(|&b| b as f64).collect(),
        }
    }

    pub fn at(&self, y: usize, x: usize) -> f64 {
        self.v[y * self.w + x]
    }

    pub fn zip(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        Field {
            h: self.h,
            w: self.w,
            v: self.v.iter().zip(&other.v).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            h: self.h,
            w: self.w,
            v: self.v.iter().map(|&a| f(a)).collect(),
        }
    }

    /// Separable correlation keeping only fully covered positions.
    /// Callers guarantee `taps.len() <= min(h, w)`.
    pub fn filter_valid(&self, taps: &[f64]) -> Field {
        let k = taps.len();
        let (oh, ow) = (self.h + 1 - k, self.w + 1 - k);
        let mut rows = vec![0.0; self.h * ow];
        for y in 0..self.h {
            let src = &self.v[y * self.w..(y + 1) * self.w];
            for x in 0..ow {
                rows[y * ow + x] = taps.iter().zip(&src[x..x + k]).map(|(t, s)| t * s).sum();
            }
        }
        let mut out = vec![0.0; oh * ow];
        for y in 0..oh {
            for (i, t) in taps.iter().enumerate() {
                let src = &rows[(y + i) * ow..(y + i + 1) * ow];
                for (o, s) in out[y * ow..(y + 1) * ow].iter_mut().zip(src) {
                    *o += t * s;
                }
            }
        }
        Field { h: oh, w: ow, v: out }
    }

    /// 2×2 mean pooling; an odd last row or column is dropped.
    pub fn avg_pool2(&self) -> Field {
        let (h, w) = (self.h / 2, self.w / 2);
        let mut v = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                let s = self.at(2 * y, 2 * x) + self.at(2 * y, 2 * x + 1) + self.at(2 * y + 1, 2 * x) + self.at(2 * y + 1, 2 * x + 1);
                v.push(s / 4.0);
            }
        }
        Field { h, w, v }
    }

    /// Keeps every second sample starting at the first.
    pub fn decimate2(&self) -> Field {
        let (h, w) = (self.h.div_ceil(2), self.w.div_ceil(2));
        let mut v = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                v.push(self.at(2 * y, 2 * x));
            }
        }
        Field { h, w, v }
    }

    pub fn mean(&self) -> f64 {
        self.v.iter().sum::<f64>() / self.v.len() as f64
    }

    /// 3×3 Sobel responses `(d/dx, d/dy)` with mirrored borders.
    pub fn sobel(&self) -> (Field, Field) {
        let reflect = |i: isize, n: usize| -> usize {
            let n = n as isize;
            let i = if i < 0 { -i } else if i >= n { 2 * (n - 1) - i } else { i };
            i.clamp(0, n - 1) as usize
        };
        let mut gx = Vec::with_capacity(self.v.len());
        let mut gy = Vec::with_capacity(self.v.len());
        for y in 0..self.h {
            for x in 0..self.w {
                let p = |dy: isize, dx: isize| {
                    self.at(reflect(y as isize + dy, self.h), reflect(x as isize + dx, self.w))
                };
                gx.push(p(-1, 1) + 2.0 * p(0, 1) + p(1, 1) - p(-1, -1) - 2.0 * p(0, -1) - p(1, -1));
                gy.push(p(1, -1) + 2.0 * p(1, 0) + p(1, 1) - p(-1, -1) - 2.0 * p(-1, 0) - p(-1, 1));
            }
        }
        let f = |v| Field { h: self.h, w: self.w, v };
        (f(gx), f(gy))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(h: usize, w: usize, f: impl Fn(usize, usize) -> f64) -> Field {
        let v = (0..h * w).map(|i| f(i / w, i % w)).collect();
        Field { h, w, v }
    }

    #[test]
    fn valid_box_filter() {
        let a = field(4, 5, |y, x| (y * 5 + x) as f64);
        let b = a.filter_valid(&[0.5, 0.5]);
        assert_eq!((b.h, b.w), (3, 4));
        // mean of 0,1,5,6
        assert_eq!(b.v[0], 3.0);
    }

    #[test]
    fn pooling_and_decimation_extents() {
        let a = field(5, 7, |y, x| (y + x) as f64);
        assert_eq!((a.avg_pool2().h, a.avg_pool2().w), (2, 3));
        let d = a.decimate2();
        assert_eq!((d.h, d.w), (3, 4));
        assert_eq!(d.at(2, 3), 10.0);
    }

    #[test]
    fn sobel_of_ramp() {
        let a = field(6, 6, |_, x| 2.0 * x as f64);
        let (gx, gy) = a.sobel();
        assert_eq!(gx.at(3, 3), 16.0);
        assert_eq!(gx.at(3, 0), 0.0);
        assert!(gy.v.iter().all(|&v| v == 0.0));
    }
}
