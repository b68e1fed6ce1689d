//! Central finite-difference oracle evaluated in f64.

use polfuse::{Real, Tensor, Var};
use rand::Rng;

pub const STEP: f64 = 1e-3;
/// Steps tried in turn where the function is not smooth on `[x - STEP, x + STEP]`.
pub const FINE_STEPS: [f64; 4] = [1e-4, 1e-5, 1e-6, 1e-7];
/// Disagreement between the `h` and `h/2` central differences that marks a
/// coordinate as straddling a ReLU or max/min switch.
const SMOOTHNESS_TOL: f64 = 1e-5;

/// Function under test, instantiable at any precision.
pub trait ScalarFn {
    fn eval<T: Real>(&self, inputs: &[Var<T>]) -> Var<T>;
}

#[derive(Debug, Clone)]
pub struct Report {
    /// Analytic (f64 path) vs finite differences.
    pub max_rel: f64,
    /// Analytic (f32 path) vs finite differences.
    pub max_rel_f32: f64,
    pub worst: (usize, usize),
    pub checked: usize,
    /// Coordinates verified with one of [`FINE_STEPS`] because a kink lies within `±STEP`.
    pub kinked: usize,
}

/// `|a - n| / max(|a|, |n|, floor)`; the floor keeps coordinates whose true
/// gradient is near zero from turning the O(h^2) truncation error into an
/// unbounded ratio.
pub fn rel_err(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

fn projection(shape: &[usize]) -> Tensor<f64> {
    // fixed pseudo-random projection so every output element matters
    Tensor::from_fn(shape, |i| ((i as f64 * 0.754_877_666 + 0.1).fract() - 0.5) * 2.0 + 0.3)
}

/// Scalar objective `sum(f(x) * R)`.
fn objective<T: Real, F: ScalarFn>(f: &F, inputs: &[Var<T>]) -> Var<T> {
    let y = f.eval(inputs);
    if y.value().numel() == 1 {
        return y;
    }
    let r = Var::constant(projection(y.shape()).cast::<T>());
    y.mul(&r).expect("projection shape").sum()
}

fn analytic<T: Real, F: ScalarFn>(f: &F, inputs: &[Tensor<f64>]) -> Vec<Tensor<f64>> {
    let vars: Vec<Var<T>> = inputs.iter().map(|t| Var::param(t.cast())).collect();
    let loss = objective(f, &vars);
    let grads = loss.backward().expect("scalar objective");
    vars.iter().map(|v| grads.get_or_zeros(v).cast()).collect()
}

fn loss_at<F: ScalarFn>(f: &F, inputs: &[Tensor<f64>]) -> f64 {
    let vars: Vec<Var<f64>> = inputs.iter().map(|t| Var::constant(t.clone())).collect();
    objective(f, &vars).value().item()
}

/// Checks every coordinate of every input, or `sample` random coordinates.
pub fn check<F: ScalarFn>(f: &F, inputs: &[Tensor<f64>], sample: Option<(usize, u64)>) -> Report {
    let exact = analytic::<f64, F>(f, inputs);
    let single = analytic::<f32, F>(f, inputs);
    let coords: Vec<(usize, usize)> = match sample {
        None => inputs
            .iter()
            .enumerate()
            .flat_map(|(i, t)| (0..t.numel()).map(move |j| (i, j)))
            .collect(),
        Some((n, seed)) => {
            let mut r = super::rng(seed);
            (0..n)
                .map(|_| {
                    let i = r.random_range(0..inputs.len());
                    (i, r.random_range(0..inputs[i].numel()))
                })
                .collect()
        }
    };
    let central = |i: usize, j: usize, h: f64| {
        let mut probe = inputs.to_vec();
        let x0 = probe[i].data()[j];
        probe[i].data_mut()[j] = x0 + h;
        let up = loss_at(f, &probe);
        probe[i].data_mut()[j] = x0 - h;
        let down = loss_at(f, &probe);
        (up - down) / (2.0 * h)
    };
    let coarse: Vec<(f64, f64)> = coords
        .iter()
        .map(|&(i, j)| (central(i, j, STEP), central(i, j, STEP / 2.0)))
        .collect();
    let floor = 1e-3 * coarse.iter().fold(1.0f64, |m, v| m.max(v.0.abs()));
    let mut kinked = 0;
    let numeric: Vec<f64> = coords
        .iter()
        .zip(&coarse)
        .map(|(&(i, j), &(d, d_half))| {
            if rel_err(d, d_half, floor) <= SMOOTHNESS_TOL {
                return d;
            }
            kinked += 1;
            // first step whose halving no longer changes the estimate
            let mut last = d;
            for h in FINE_STEPS {
                let (a, b) = (central(i, j, h), central(i, j, h / 2.0));
                last = b;
                if rel_err(a, b, floor) <= SMOOTHNESS_TOL {
                    return a;
                }
            }
            last
        })
        .collect();
    let mut report = Report {
        max_rel: 0.0,
        max_rel_f32: 0.0,
        worst: (0, 0),
        checked: coords.len(),
        kinked,
    };
    for (&(i, j), &n) in coords.iter().zip(&numeric) {
        let e = rel_err(exact[i].data()[j], n, floor);
        if e > report.max_rel {
            report.max_rel = e;
            report.worst = (i, j);
        }
        report.max_rel_f32 = report.max_rel_f32.max(rel_err(single[i].data()[j], n, floor));
    }
    report
}

/// Analytic (f64) derivative and central differences at several steps for one coordinate.
pub fn probe<F: ScalarFn>(f: &F, inputs: &[Tensor<f64>], i: usize, j: usize, steps: &[f64]) -> (f64, Vec<f64>) {
    let a = analytic::<f64, F>(f, inputs)[i].data()[j];
    let n = steps
        .iter()
        .map(|&h| {
            let mut p = inputs.to_vec();
            let x0 = p[i].data()[j];
            p[i].data_mut()[j] = x0 + h;
            let up = loss_at(f, &p);
            p[i].data_mut()[j] = x0 - h;
            let down = loss_at(f, &p);
            (up - down) / (2.0 * h)
        })
        .collect();
    (a, n)
}
