use std::f64::consts::FRAC_PI_2;

use super::field::Field;
use crate::error::{Error, Result};

const GAMMA_G: f64 = 0.9994;
const KAPPA_G: f64 = -15.0;
const SIGMA_G: f64 = 0.5;
const GAMMA_A: f64 = 0.9879;
const KAPPA_A: f64 = -22.0;
const SIGMA_A: f64 = 0.8;

struct Edges {
    strength: Vec<f64>,
    angle: Vec<f64>,
}

fn edges(f: &Field) -> Edges {
    let (gx, gy) = f.sobel();
    let strength = gx.v.iter().zip(&gy.v).map(|(x, y)| x.hypot(*y)).collect();
    let angle = gx
        .v
        .iter()
        .zip(&gy.v)
        .map(|(&x, &y)| if x == 0.0 { FRAC_PI_2 } else { (y / x).atan() })
        .collect();
    Edges { strength, angle }
}

/// Per-pixel preservation of the source edge `s` in the fused edge `f`.
fn preservation(s: &Edges, f: &Edges, i: usize) -> f64 {
    let (gs, gf) = (s.strength[i], f.strength[i]);
    let g = if gs == 0.0 && gf == 0.0 {
        0.0
    } else if gs > gf {
        gf / gs
    } else {
        gs / gf
    };
    let a = ((s.angle[i] - f.angle[i]).abs() - FRAC_PI_2).abs() / FRAC_PI_2;
    let qg = GAMMA_G / (1.0 + (KAPPA_G * (g - SIGMA_G)).exp());
    let qa = GAMMA_A / (1.0 + (KAPPA_A * (a - SIGMA_A)).exp());
    qg * qa
}

pub(crate) fn qabf(fused: &Field, a: &Field, b: &Field) -> Result<f64> {
    let (ef, ea, eb) = (edges(fused), edges(a), edges(b));
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..fused.v.len() {
        let (wa, wb) = (ea.strength[i], eb.strength[i]);
        num += preservation(&ea, &ef, i) * wa + preservation(&eb, &ef, i) * wb;
        den += wa + wb;
    }
    if den == 0.0 {
        return Err(Error::Metric {
            metric: "q_abf",
            msg: "neither source contains an edge".into(),
        });
    }
    Ok(num / den)
}
