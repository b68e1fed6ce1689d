//! Seeded synthetic imagery: natural-looking grayscale scenes and
//! four-angle polarization captures derived from them.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::Result;
use crate::stokes::{synthesize_mosaic, DofpMosaic, MosaicPattern, PolarizationStack};
use crate::Plane;

struct Wave {
    fy: f64,
    fx: f64,
    phase: f64,
    amp: f64,
}

enum Shape {
    Ellipse { cy: f64, cx: f64, ry: f64, rx: f64 },
    Rect { y0: f64, x0: f64, y1: f64, x1: f64 },
}

impl Shape {
    fn contains(&self, y: f64, x: f64) -> bool {
        match *self {
            Shape::Ellipse { cy, cx, ry, rx } => ((y - cy) / ry).powi(2) + ((x - cx) / rx).powi(2) <= 1.0,
            Shape::Rect { y0, x0, y1, x1 } => (y0..y1).contains(&y) && (x0..x1).contains(&x),
        }
    }
}

/// Smooth 1/f-weighted waves, a handful of flat objects with hard edges and
/// a little grain, stretched to `[lo, hi]`.
fn scene_field(h: usize, w: usize, rng: &mut Xoshiro256PlusPlus) -> Vec<f64> {
    let waves: Vec<Wave> = (0..10)
        .map(|i| {
            let f = 0.5 + i as f64 * rng.random_range(0.6..1.4);
            let theta = rng.random_range(0.0..PI);
            Wave {
                fy: f * theta.sin() / h as f64,
                fx: f * theta.cos() / w as f64,
                phase: rng.random_range(0.0..TAU),
                amp: 1.0 / f,
            }
        })
        .collect();
    let shapes: Vec<(Shape, f64)> = (0..rng.random_range(3..7))
        .map(|_| {
            let (cy, cx) = (rng.random_range(0.0..1.0) * h as f64, rng.random_range(0.0..1.0) * w as f64);
            let (ry, rx) = (rng.random_range(0.08..0.3) * h as f64, rng.random_range(0.08..0.3) * w as f64);
            let shape = if rng.random_bool(0.5) {
                Shape::Ellipse { cy, cx, ry, rx }
            } else {
                Shape::Rect {
                    y0: cy - ry,
                    x0: cx - rx,
                    y1: cy + ry,
                    x1: cx + rx,
                }
            };
            (shape, rng.random_range(-0.6..0.6))
        })
        .collect();
    let mut v = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let (yf, xf) = (y as f64, x as f64);
            let mut s: f64 = waves
                .iter()
                .map(|wv| wv.amp * (TAU * (wv.fy * yf + wv.fx * xf) + wv.phase).sin())
                .sum();
            for (shape, offset) in &shapes {
                if shape.contains(yf, xf) {
                    s += offset;
                }
            }
            s += rng.random_range(-0.03..0.03);
            v.push(s);
        }
    }
    v
}

fn stretch(v: &[f64], lo: f64, hi: f64) -> Vec<f32> {
    let (min, max) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let span = (max - min).max(1e-12);
    v.iter().map(|&x| (lo + (x - min) / span * (hi - lo)) as f32).collect()
}

/// Natural-looking grayscale image in `[0.02, 0.98]`.
pub fn natural_image(h: usize, w: usize, seed: u64) -> Plane {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let v = scene_field(h, w, &mut rng);
    Plane::new(h, w, stretch(&v, 0.02, 0.98)).expect("extents match")
}

/// Four-angle capture of a scene whose intensity, degree and angle of
/// polarization share object boundaries. DOLP rises with intensity plus some
/// independent detail. S0 stays within `[0.1, 1]`, so every angle plane is in `[0,1]`.
pub fn polarization_scene(h: usize, w: usize, seed: u64) -> PolarizationStack {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let base = scene_field(h, w, &mut rng);
    let detail = scene_field(h, w, &mut rng);
    let angle = scene_field(h, w, &mut rng);
    let s0 = stretch(&base, 0.1, 1.0);
    let mixed: Vec<f64> = base.iter().zip(&detail).map(|(b, d)| b + 0.3 * d).collect();
    let dolp = stretch(&mixed, 0.0, 0.9);
    let aop = stretch(&angle, -1.5, 1.5);
    let plane = |theta: f64| {
        let data = (0..h * w)
            .map(|k| {
                let (s, p, phi) = (s0[k] as f64, dolp[k] as f64, aop[k] as f64);
                (0.5 * s * (1.0 + p * (2.0 * theta - 2.0 * phi).cos())).clamp(0.0, 1.0) as f32
            })
            .collect();
        Plane::new(h, w, data).expect("extents match")
    };
    let d = PI / 4.0;
    PolarizationStack::new(plane(0.0), plane(d), plane(2.0 * d), plane(3.0 * d)).expect("valid planes")
}

/// Mosaic sampled from [`polarization_scene`]; extents must be even.
pub fn polarization_mosaic(h: usize, w: usize, seed: u64, pattern: MosaicPattern) -> Result<DofpMosaic> {
    synthesize_mosaic(&polarization_scene(h, w, seed), pattern)
}
