//! Dense matrix products with f64 accumulation.

use super::{Real, Tensor, TensorError, Var};

fn widen<T: Real>(x: &[T]) -> Vec<f64> {
    x.iter().map(|v| v.as_f64()).collect()
}

fn transpose_f64(x: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = x[r * cols + c];
        }
    }
    out
}

/// `a[m×k] · b[k×n]` on widened operands.
fn gemm_f64(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let acc = &mut out[i * n..(i + 1) * n];
        let arow = &a[i * k..(i + 1) * k];
        for (p, &aip) in arow.iter().enumerate() {
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in acc.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    out
}

fn narrow_out<T: Real>(v: Vec<f64>) -> Vec<T> {
    v.into_iter().map(T::from_f64).collect()
}

/// `a[m×k] · b[k×n]`
pub(crate) fn gemm_nn<T: Real>(m: usize, k: usize, n: usize, a: &[T], b: &[T]) -> Vec<T> {
    narrow_out(gemm_f64(m, k, n, &widen(a), &widen(b)))
}

/// `a[m×k] · b[n×k]ᵀ`
pub(crate) fn gemm_nt<T: Real>(m: usize, k: usize, n: usize, a: &[T], b: &[T]) -> Vec<T> {
    let bt = transpose_f64(&widen(b), n, k);
    narrow_out(gemm_f64(m, k, n, &widen(a), &bt))
}

/// `a[k×m]ᵀ · b[k×n]`
pub(crate) fn gemm_tn<T: Real>(m: usize, k: usize, n: usize, a: &[T], b: &[T]) -> Vec<T> {
    let at = transpose_f64(&widen(a), k, m);
    narrow_out(gemm_f64(m, k, n, &at, &widen(b)))
}

impl<T: Real> Var<T> {
    /// Matrix product of `[M,K]·[K,N]` or batched `[B,M,K]·[B,K,N]`.
    pub fn matmul(&self, rhs: &Var<T>) -> Result<Var<T>, TensorError> {
        let (a, b) = (self.value(), rhs.value());
        let (batch, m, k, n, out_shape) = match (a.shape(), b.shape()) {
            ([m, k], [k2, n]) if k == k2 => (1, *m, *k, *n, vec![*m, *n]),
            ([ba, m, k], [bb, k2, n]) if ba == bb && k == k2 => {
                (*ba, *m, *k, *n, vec![*ba, *m, *n])
            }
            _ => {
                return Err(TensorError::shape(
                    "matmul",
                    format!("operand compatible with {:?}", a.shape()),
                    b.shape(),
                ))
            }
        };
        let mut data = Vec::with_capacity(batch * m * n);
        for bi in 0..batch {
            data.extend(gemm_nn(
                m,
                k,
                n,
                &a.data()[bi * m * k..(bi + 1) * m * k],
                &b.data()[bi * k * n..(bi + 1) * k * n],
            ));
        }
        let value = Tensor::from_parts(out_shape, data);
        Ok(Var::from_op(value, &[self, rhs], move |g, inputs, _, needs| {
            let (a, b) = (inputs[0], inputs[1]);
            let mut ga = needs[0].then(|| Vec::with_capacity(batch * m * k));
            let mut gb = needs[1].then(|| Vec::with_capacity(batch * k * n));
            for bi in 0..batch {
                let gs = &g.data()[bi * m * n..(bi + 1) * m * n];
                if let Some(ga) = ga.as_mut() {
                    ga.extend(gemm_nt(m, n, k, gs, &b.data()[bi * k * n..(bi + 1) * k * n]));
                }
                if let Some(gb) = gb.as_mut() {
                    gb.extend(gemm_tn(k, m, n, &a.data()[bi * m * k..(bi + 1) * m * k], gs));
                }
            }
            vec![
                ga.map(|d| Tensor::from_parts(a.shape().to_vec(), d)),
                gb.map(|d| Tensor::from_parts(b.shape().to_vec(), d)),
            ]
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernels_agree() {
        let a: Vec<f64> = (0..6).map(|v| v as f64 - 2.0).collect(); // 2x3
        let b: Vec<f64> = (0..12).map(|v| (v as f64) * 0.5).collect(); // 3x4
        let nn = gemm_nn(2, 3, 4, &a, &b);
        let bt = transpose_f64(&b, 3, 4);
        assert_eq!(gemm_nt(2, 3, 4, &a, &bt), nn);
        let at = transpose_f64(&a, 2, 3);
        assert_eq!(gemm_tn(2, 3, 4, &at, &b), nn);
        // row 0 of a = [-2,-1,0]; column 0 of b = [0,2,4]
        assert_eq!(nn[0], -2.0);
    }

    #[test]
    fn batched_matmul_shape() {
        let a = Var::constant(Tensor::<f32>::ones(&[2, 3, 4]));
        let b = Var::constant(Tensor::<f32>::ones(&[2, 4, 5]));
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.shape(), &[2, 3, 5]);
        assert!(c.value().data().iter().all(|&v| v == 4.0));
        assert!(a.matmul(&a).is_err());
    }
}
