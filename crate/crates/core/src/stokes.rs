//! Linear Stokes products from four-angle captures.
//!
//! `S0` follows the two-orthogonal-polarizer definition `i0 + i90`. The
//! four-angle average `(i0 + i45 + i90 + i135) / 2` is an equally common
//! estimator and can be formed from the [`PolarizationStack`] directly.

use std::f32::consts::FRAC_PI_2 as HALF_PI_F32;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::plane::Plane;
use crate::Var;

/// Intensity below which the normalized Stokes components are defined as 0.
pub const S0_EPS: f64 = 1e-6;
/// Pre-clamp DOLP overshoot that triggers a warning.
pub const DOLP_EXCESS_WARN: f64 = 0.1;

const ANGLES: [u16; 4] = [0, 45, 90, 135];

/// Assignment of polarizer angles to the offsets of a 2×2 super-pixel,
/// row-major: `[[top-left, top-right], [bottom-left, bottom-right]]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MosaicPattern([[u16; 2]; 2]);

impl Default for MosaicPattern {
    fn default() -> Self {
        MosaicPattern([[90, 45], [135, 0]])
    }
}

impl MosaicPattern {
    pub fn new(cells: [[u16; 2]; 2]) -> Result<Self> {
        let mut seen = cells.concat();
        seen.sort_unstable();
        if seen != ANGLES {
            return Err(Error::invalid(format!(
                "mosaic pattern must be a permutation of 0,45,90,135, got {cells:?}"
            )));
        }
        Ok(MosaicPattern(cells))
    }

    pub fn cells(&self) -> [[u16; 2]; 2] {
        self.0
    }

    /// `(dy, dx)` of `angle` inside the super-pixel.
    pub fn offset(&self, angle: u16) -> Option<(usize, usize)> {
        (0..4).map(|i| (i / 2, i % 2)).find(|&(dy, dx)| self.0[dy][dx] == angle)
    }
}

impl FromStr for MosaicPattern {
    type Err = Error;

    /// Parses four comma-separated angles in row-major order, e.g. `90,45,135,0`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<u16> = s
            .split(',')
            .map(|p| p.trim().parse::<u16>())
            .collect::<Result<_, _>>()
            .map_err(|e| Error::invalid(format!("mosaic pattern {s:?}: {e}")))?;
        let [a, b, c, d] = parts[..] else {
            return Err(Error::invalid(format!("mosaic pattern {s:?} needs four angles")));
        };
        MosaicPattern::new([[a, b], [c, d]])
    }
}

impl fmt::Display for MosaicPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [[a, b], [c, d]] = self.0;
        write!(f, "{a},{b},{c},{d}")
    }
}

/// Raw division-of-focal-plane frame.
#[derive(Clone, Debug, PartialEq)]
pub struct DofpMosaic {
    data: Plane,
    pattern: MosaicPattern,
}

impl DofpMosaic {
    pub fn new(data: Plane, pattern: MosaicPattern) -> Result<Self> {
        let (h, w) = data.dims();
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::invalid(format!("mosaic extents must be even, got {h}×{w}")));
        }
        check_unit_range("mosaic", &data)?;
        Ok(DofpMosaic { data, pattern })
    }

    pub fn data(&self) -> &Plane {
        &self.data
    }

    pub fn pattern(&self) -> MosaicPattern {
        self.pattern
    }
}

/// Registered intensity planes behind polarizers at 0°, 45°, 90° and 135°.
#[derive(Clone, Debug, PartialEq)]
pub struct PolarizationStack {
    pub i0: Plane,
    pub i45: Plane,
    pub i90: Plane,
    pub i135: Plane,
}

impl PolarizationStack {
    pub fn new(i0: Plane, i45: Plane, i90: Plane, i135: Plane) -> Result<Self> {
        let dims = i0.dims();
        for (name, p) in [("i0", &i0), ("i45", &i45), ("i90", &i90), ("i135", &i135)] {
            if p.dims() != dims {
                return Err(Error::invalid(format!(
                    "{name} is {}×{}, expected {}×{}",
                    p.height(),
                    p.width(),
                    dims.0,
                    dims.1
                )));
            }
            check_unit_range(name, p)?;
        }
        Ok(PolarizationStack { i0, i45, i90, i135 })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.i0.dims()
    }

    pub fn plane(&self, angle: u16) -> Option<&Plane> {
        match angle {
            0 => Some(&self.i0),
            45 => Some(&self.i45),
            90 => Some(&self.i90),
            135 => Some(&self.i135),
            _ => None,
        }
    }

    /// Multiplies every plane by `alpha` without range validation.
    pub fn scaled(&self, alpha: f32) -> PolarizationStack {
        let s = |p: &Plane| p.map(|v| v * alpha);
        PolarizationStack {
            i0: s(&self.i0),
            i45: s(&self.i45),
            i90: s(&self.i90),
            i135: s(&self.i135),
        }
    }
}

fn check_unit_range(name: &str, p: &Plane) -> Result<()> {
    match p.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        Some(v) => Err(Error::invalid(format!("{name}: sample {v} outside [0, 1]"))),
        None => Ok(()),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StokesProducts {
    pub s0: Plane,
    pub s1: Plane,
    pub s2: Plane,
    pub q: Plane,
    pub u: Plane,
    pub dolp: Plane,
    /// Radians in `(-π/2, π/2]`.
    pub aop: Plane,
    /// Circular component; never measured by linear capture.
    pub s3: Option<Plane>,
    /// Largest amount by which `sqrt(q² + u²)` exceeded 1 before clamping.
    pub dolp_excess: f64,
}

/// Splits the mosaic into its four angle sub-images and upsamples each back
/// to full resolution with bilinear interpolation.
pub fn demosaic_dofp(mosaic: &DofpMosaic) -> Result<PolarizationStack> {
    let (h, w) = mosaic.data.dims();
    let (hs, ws) = (h / 2, w / 2);
    let mut planes = Vec::with_capacity(4);
    for angle in ANGLES {
        let (dy, dx) = mosaic.pattern.offset(angle).expect("pattern validated");
        let sub = Plane::from_fn(hs, ws, |y, x| mosaic.data.get(2 * y + dy, 2 * x + dx));
        let up = Var::constant(sub.to_tensor()).bilinear_resize(h, w)?;
        let plane = Plane::from_tensor(up.value(), 0)?.map(|v| v.clamp(0.0, 1.0));
        planes.push(plane);
    }
    let [i0, i45, i90, i135] = <[Plane; 4]>::try_from(planes).expect("four angles");
    PolarizationStack::new(i0, i45, i90, i135)
}

/// Samples each angle plane at its mosaic positions.
pub fn synthesize_mosaic(stack: &PolarizationStack, pattern: MosaicPattern) -> Result<DofpMosaic> {
    let (h, w) = stack.dims();
    let data = Plane::from_fn(h, w, |y, x| {
        let angle = pattern.cells()[y % 2][x % 2];
        stack.plane(angle).expect("pattern angles are valid").get(y, x)
    });
    DofpMosaic::new(data, pattern)
}

pub fn stokes_from_angles(stack: &PolarizationStack) -> StokesProducts {
    let (h, w) = stack.dims();
    let n = h * w;
    let mut out: [Vec<f32>; 7] = Default::default();
    for v in out.iter_mut() {
        v.reserve_exact(n);
    }
    let mut excess = 0.0f64;
    let (a, b, c, d) = (stack.i0.data(), stack.i45.data(), stack.i90.data(), stack.i135.data());
    for k in 0..n {
        let (i0, i45, i90, i135) = (a[k] as f64, b[k] as f64, c[k] as f64, d[k] as f64);
        let s0 = i0 + i90;
        let s1 = i0 - i90;
        let s2 = i45 - i135;
        let (q, u) = if s0 <= S0_EPS {
            (0.0, 0.0)
        } else {
            ((s1 / s0).clamp(-1.0, 1.0), (s2 / s0).clamp(-1.0, 1.0))
        };
        let raw = q.hypot(u);
        excess = excess.max(raw - 1.0);
        let mut aop = (0.5 * u.atan2(q)) as f32;
        if aop <= -HALF_PI_F32 {
            aop += std::f32::consts::PI;
        }
        out[0].push(s0 as f32);
        out[1].push(s1 as f32);
        out[2].push(s2 as f32);
        out[3].push(q as f32);
        out[4].push(u as f32);
        out[5].push(raw.min(1.0) as f32);
        out[6].push(aop.min(HALF_PI_F32));
    }
    if excess > DOLP_EXCESS_WARN {
        log::warn!("DOLP exceeded 1 by up to {excess:.4} before clamping");
    }
    let [s0, s1, s2, q, u, dolp, aop] = out.map(|v| Plane::new(h, w, v).expect("extents preserved"));
    StokesProducts {
        s0,
        s1,
        s2,
        q,
        u,
        dolp,
        aop,
        s3: None,
        dolp_excess: excess.max(0.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f32::consts::FRAC_PI_4;

    fn consts(i0: f32, i45: f32, i90: f32, i135: f32) -> PolarizationStack {
        let p = |v| Plane::filled(2, 2, v);
        PolarizationStack::new(p(i0), p(i45), p(i90), p(i135)).unwrap()
    }

    #[test]
    fn analytic_cases() {
        let s = stokes_from_angles(&consts(1.0, 0.5, 0.0, 0.5));
        assert_eq!((s.s0.get(0, 0), s.q.get(0, 0), s.u.get(0, 0)), (1.0, 1.0, 0.0));
        assert_eq!((s.dolp.get(0, 0), s.aop.get(0, 0)), (1.0, 0.0));

        let s = stokes_from_angles(&consts(0.5, 0.5, 0.5, 0.5));
        assert_eq!((s.s0.get(1, 1), s.q.get(1, 1), s.u.get(1, 1), s.dolp.get(1, 1)), (1.0, 0.0, 0.0, 0.0));

        let s = stokes_from_angles(&consts(0.5, 1.0, 0.5, 0.0));
        assert_eq!((s.q.get(0, 1), s.u.get(0, 1), s.dolp.get(0, 1)), (0.0, 1.0, 1.0));
        assert!((s.aop.get(0, 1) - FRAC_PI_4).abs() < 1e-6);
        assert!(s.s3.is_none());
    }

    #[test]
    fn dark_pixels_are_guarded() {
        let s = stokes_from_angles(&consts(0.0, 0.0, 0.0, 0.0));
        assert_eq!((s.q.get(0, 0), s.u.get(0, 0), s.dolp.get(0, 0), s.aop.get(0, 0)), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn aop_upper_edge_is_included() {
        // q = -1, u = 0 sits on the branch cut
        let s = stokes_from_angles(&consts(0.0, 0.5, 1.0, 0.5));
        assert_eq!(s.aop.get(0, 0), HALF_PI_F32);
    }

    #[test]
    fn overshoot_is_clamped_and_reported() {
        let s = stokes_from_angles(&consts(1.0, 1.0, 0.0, 0.0));
        assert_eq!(s.dolp.get(0, 0), 1.0);
        assert!((s.dolp_excess - (2f64.sqrt() - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn pattern_parsing() {
        let p: MosaicPattern = "90, 45,135,0".parse().unwrap();
        assert_eq!(p, MosaicPattern::default());
        assert_eq!(p.to_string(), "90,45,135,0");
        assert_eq!(p.offset(0), Some((1, 1)));
        assert!("90,45,45,0".parse::<MosaicPattern>().is_err());
        assert!("90,45,135".parse::<MosaicPattern>().is_err());
    }

    #[test]
    fn single_superpixel_demosaic() {
        let m = DofpMosaic::new(Plane::new(2, 2, vec![0.1, 0.2, 0.3, 0.4]).unwrap(), MosaicPattern::default()).unwrap();
        let s = demosaic_dofp(&m).unwrap();
        for (p, v) in [(&s.i90, 0.1), (&s.i45, 0.2), (&s.i135, 0.3), (&s.i0, 0.4)] {
            assert!(p.data().iter().all(|&x| x == v));
        }
    }

    #[test]
    fn constant_cells_round_trip() {
        let stack = consts(0.9, 0.25, 0.125, 0.75);
        let big = |p: &Plane| Plane::filled(6, 8, p.get(0, 0));
        let stack = PolarizationStack::new(big(&stack.i0), big(&stack.i45), big(&stack.i90), big(&stack.i135)).unwrap();
        let m = synthesize_mosaic(&stack, MosaicPattern::default()).unwrap();
        assert_eq!(demosaic_dofp(&m).unwrap(), stack);
    }

    #[test]
    fn validation() {
        assert!(DofpMosaic::new(Plane::filled(3, 2, 0.0), MosaicPattern::default()).is_err());
        assert!(DofpMosaic::new(Plane::filled(2, 2, 1.5), MosaicPattern::default()).is_err());
        let p = Plane::filled(2, 2, 0.5);
        assert!(PolarizationStack::new(p.clone(), p.clone(), p.clone(), Plane::filled(2, 3, 0.5)).is_err());
    }
}
