use super::field::Field;
use crate::error::{Error, Result};

const BINS: usize = 256;

fn entropy(counts: &[u64], total: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum()
}

fn histogram(f: &Field) -> Vec<u64> {
    let mut h = vec![0u64; BINS];
    for &v in &f.v {
        h[v as usize] += 1;
    }
    h
}

/// Entropy in bits of an 8-bit quantized field.
pub(crate) fn entropy_of(f: &Field) -> f64 {
    entropy(&histogram(f), f.v.len() as f64)
}

/// Mutual information in bits of two 8-bit quantized fields.
pub(crate) fn mutual_information(x: &Field, y: &Field) -> f64 {
    let mut joint = vec![0u64; BINS * BINS];
    for (&a, &b) in x.v.iter().zip(&y.v) {
        joint[a as usize * BINS + b as usize] += 1;
    }
    let n = x.v.len() as f64;
    entropy_of(x) + entropy_of(y) - entropy(&joint, n)
}

pub(crate) fn qmi(fused: &Field, a: &Field, b: &Field) -> Result<f64> {
    let denom = entropy_of(a) + entropy_of(b);
    if denom == 0.0 {
        return Err(Error::Metric {
            metric: "q_mi",
            msg: "both sources are constant (zero entropy)".into(),
        });
    }
    Ok((mutual_information(fused, a) + mutual_information(fused, b)) / denom)
}

/// Population standard deviation.
pub(crate) fn std_dev(f: &Field) -> f64 {
    let m = f.mean();
    (f.v.iter().map(|v| (v - m).powi(2)).sum::<f64>() / f.v.len() as f64).sqrt()
}
