//! Elementwise, broadcasting, shape and reduction operators.

use super::{Real, Tensor, TensorError, Var};

/// Calls `f(out_index, a_offset, b_offset)` for every element of `out`,
/// where operand offsets follow the given (possibly zero) strides.
fn broadcast_walk(out: &[usize], sa: &[usize], sb: &[usize], mut f: impl FnMut(usize, usize, usize)) {
    let rank = out.len();
    let inner = out[rank - 1];
    let (ia, ib) = (sa[rank - 1], sb[rank - 1]);
    let outer: usize = out[..rank - 1].iter().product();
    let mut idx = vec![0usize; rank - 1];
    let (mut oa, mut ob, mut o) = (0usize, 0usize, 0usize);
    for _ in 0..outer {
        for j in 0..inner {
            f(o, oa + j * ia, ob + j * ib);
            o += 1;
        }
        for d in (0..rank - 1).rev() {
            idx[d] += 1;
            oa += sa[d];
            ob += sb[d];
            if idx[d] < out[d] {
                break;
            }
            oa -= sa[d] * out[d];
            ob -= sb[d] * out[d];
            idx[d] = 0;
        }
    }
}

fn contiguous_strides(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for d in (0..shape.len().saturating_sub(1)).rev() {
        strides[d] = strides[d + 1] * shape[d + 1];
    }
    strides
}

/// Strides of `shape` when read as if it had extents `out` (size-1 axes repeat).
fn broadcast_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    contiguous_strides(shape)
        .into_iter()
        .zip(shape.iter().zip(out))
        .map(|(s, (&d, &o))| if d == 1 && o != 1 { 0 } else { s })
        .collect()
}

fn broadcast_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<Vec<usize>, TensorError> {
    if a.len() != b.len() {
        return Err(TensorError::shape(op, format!("rank {}", a.len()), b));
    }
    a.iter()
        .zip(b)
        .map(|(&x, &y)| match (x, y) {
            _ if x == y => Ok(x),
            (1, y) => Ok(y),
            (x, 1) => Ok(x),
            _ => Err(TensorError::shape(op, format!("broadcastable with {a:?}"), b)),
        })
        .collect()
}

/// Sums `t` down to `shape` (inverse of broadcasting), accumulating in f64.
pub(crate) fn reduce_to<T: Real>(t: &Tensor<T>, shape: &[usize]) -> Tensor<T> {
    if t.shape() == shape {
        return t.clone();
    }
    let n: usize = shape.iter().product();
    let mut acc = vec![0.0f64; n];
    let st = broadcast_strides(shape, t.shape());
    let zero = vec![0; shape.len()];
    let data = t.data();
    broadcast_walk(t.shape(), &st, &zero, |o, i, _| acc[i] += data[o].as_f64());
    Tensor::from_parts(shape.to_vec(), acc.into_iter().map(T::from_f64).collect())
}

/// Repeats `t` along its size-1 axes to reach `shape`.
pub(crate) fn expand_to<T: Real>(t: &Tensor<T>, shape: &[usize]) -> Tensor<T> {
    if t.shape() == shape {
        return t.clone();
    }
    let n: usize = shape.iter().product();
    let mut out = vec![T::zero(); n];
    let st = broadcast_strides(t.shape(), shape);
    let zero = vec![0; shape.len()];
    let data = t.data();
    broadcast_walk(shape, &st, &zero, |o, i, _| out[o] = data[i]);
    Tensor::from_parts(shape.to_vec(), out)
}

fn binary<T: Real>(
    op: &'static str,
    a: &Var<T>,
    b: &Var<T>,
    f: impl Fn(T, T) -> T,
    da: impl Fn(T, T, T) -> T + 'static,
    db: impl Fn(T, T, T) -> T + 'static,
) -> Result<Var<T>, TensorError> {
    let (av, bv) = (a.value(), b.value());
    let out_shape = broadcast_shape(op, av.shape(), bv.shape())?;
    let sa = broadcast_strides(av.shape(), &out_shape);
    let sb = broadcast_strides(bv.shape(), &out_shape);
    let n: usize = out_shape.iter().product();
    let mut out = vec![T::zero(); n];
    if av.shape() == bv.shape() {
        for ((o, &x), &y) in out.iter_mut().zip(av.data()).zip(bv.data()) {
            *o = f(x, y);
        }
    } else {
        let (ad, bd) = (av.data(), bv.data());
        broadcast_walk(&out_shape, &sa, &sb, |o, i, j| out[o] = f(ad[i], bd[j]));
    }
    let value = Tensor::from_parts(out_shape.clone(), out);
    Ok(Var::from_op(value, &[a, b], move |g, inputs, y, needs| {
        let (ad, bd, yd, gd) = (inputs[0].data(), inputs[1].data(), y.data(), g.data());
        let mut ga = needs[0].then(|| vec![T::zero(); n]);
        let mut gb = needs[1].then(|| vec![T::zero(); n]);
        broadcast_walk(&out_shape, &sa, &sb, |o, i, j| {
            if let Some(ga) = ga.as_mut() {
                ga[o] = gd[o] * da(ad[i], bd[j], yd[o]);
            }
            if let Some(gb) = gb.as_mut() {
                gb[o] = gd[o] * db(ad[i], bd[j], yd[o]);
            }
        });
        let full = |v: Vec<T>| Tensor::from_parts(out_shape.clone(), v);
        vec![
            ga.map(|v| reduce_to(&full(v), inputs[0].shape())),
            gb.map(|v| reduce_to(&full(v), inputs[1].shape())),
        ]
    }))
}

impl<T: Real> Var<T> {
    fn unary(&self, f: impl Fn(T) -> T, df: impl Fn(T, T) -> T + 'static) -> Var<T> {
        let value = self.value().map(f);
        Var::from_op(value, &[self], move |g, inputs, y, _| {
            let data = inputs[0]
                .data()
                .iter()
                .zip(y.data())
                .zip(g.data())
                .map(|((&x, &y), &g)| g * df(x, y))
                .collect();
            vec![Some(Tensor::from_parts(g.shape().to_vec(), data))]
        })
    }

    pub fn relu(&self) -> Var<T> {
        self.unary(
            |x| if x > T::zero() { x } else { T::zero() },
            |x, _| if x > T::zero() { T::one() } else { T::zero() },
        )
    }

    /// Logistic function, kept strictly inside (0, 1) after rounding.
    pub fn sigmoid(&self) -> Var<T> {
        let hi = T::one() - T::epsilon() / T::from_f64(2.0);
        let lo = T::min_positive_value();
        self.unary(
            move |x| {
                let y = if x >= T::zero() {
                    T::one() / (T::one() + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (T::one() + e)
                };
                y.max(lo).min(hi)
            },
            |_, y| y * (T::one() - y),
        )
    }

    pub fn sqrt(&self) -> Var<T> {
        self.unary(|x| x.sqrt(), |_, y| T::from_f64(0.5) / y)
    }

    pub fn abs(&self) -> Var<T> {
        self.unary(
            |x| x.abs(),
            |x, _| {
                if x > T::zero() {
                    T::one()
                } else if x < T::zero() {
                    -T::one()
                } else {
                    T::zero()
                }
            },
        )
    }

    pub fn square(&self) -> Var<T> {
        self.unary(|x| x * x, |x, _| x + x)
    }

    pub fn neg(&self) -> Var<T> {
        self.unary(|x| -x, |_, _| -T::one())
    }

    pub fn scale(&self, k: f64) -> Var<T> {
        let k = T::from_f64(k);
        self.unary(move |x| x * k, move |_, _| k)
    }

    pub fn add_scalar(&self, c: f64) -> Var<T> {
        let c = T::from_f64(c);
        self.unary(move |x| x + c, |_, _| T::one())
    }

    pub fn add(&self, rhs: &Var<T>) -> Result<Var<T>, TensorError> {
        binary("add", self, rhs, |a, b| a + b, |_, _, _| T::one(), |_, _, _| T::one())
    }

    pub fn sub(&self, rhs: &Var<T>) -> Result<Var<T>, TensorError> {
        binary("sub", self, rhs, |a, b| a - b, |_, _, _| T::one(), |_, _, _| -T::one())
    }

    pub fn mul(&self, rhs: &Var<T>) -> Result<Var<T>, TensorError> {
        binary("mul", self, rhs, |a, b| a * b, |_, b, _| b, |a, _, _| a)
    }

    pub fn div(&self, rhs: &Var<T>) -> Result<Var<T>, TensorError> {
        binary("div", self, rhs, |a, b| a / b, |_, b, _| T::one() / b, |_, b, y| -y / b)
    }

    /// Sum of all elements as a one-element tensor.
    pub fn sum(&self) -> Var<T> {
        let total = T::from_f64(self.value().sum_f64());
        Var::from_op(Tensor::scalar(total), &[self], |g, inputs, _, _| {
            vec![Some(Tensor::full(inputs[0].shape(), g.item()))]
        })
    }

    pub fn mean(&self) -> Var<T> {
        let n = self.value().numel() as f64;
        self.sum().scale(1.0 / n)
    }

    /// Sum over `axes`, keeping them as size-1 extents.
    pub fn sum_axes(&self, axes: &[usize]) -> Result<Var<T>, TensorError> {
        let shape = self.shape();
        if axes.iter().any(|&a| a >= shape.len()) {
            return Err(TensorError::arg("sum_axes", format!("axes {axes:?} out of range for {shape:?}")));
        }
        let out_shape: Vec<usize> = shape
            .iter()
            .enumerate()
            .map(|(d, &e)| if axes.contains(&d) { 1 } else { e })
            .collect();
        let value = reduce_to(self.value(), &out_shape);
        Ok(Var::from_op(value, &[self], |g, inputs, _, _| {
            vec![Some(expand_to(g, inputs[0].shape()))]
        }))
    }

    pub fn mean_axes(&self, axes: &[usize]) -> Result<Var<T>, TensorError> {
        let count: usize = axes.iter().map(|&a| self.shape().get(a).copied().unwrap_or(1)).product();
        Ok(self.sum_axes(axes)?.scale(1.0 / count as f64))
    }

    /// Population variance over `axes` (keepdim).
    pub fn var_axes(&self, axes: &[usize]) -> Result<Var<T>, TensorError> {
        let centered = self.sub(&self.mean_axes(axes)?)?;
        centered.square().mean_axes(axes)
    }

    /// Maximum along one axis (keepdim). Ties route the gradient to the first maximum.
    pub fn max_axis(&self, axis: usize) -> Result<Var<T>, TensorError> {
        let shape = self.shape().to_vec();
        if axis >= shape.len() {
            return Err(TensorError::arg("max_axis", format!("axis {axis} out of range for {shape:?}")));
        }
        let outer: usize = shape[..axis].iter().product();
        let len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let data = self.value().data();
        let mut out = Vec::with_capacity(outer * inner);
        let mut arg = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            for i in 0..inner {
                let base = o * len * inner + i;
                let mut best = base;
                for k in 1..len {
                    let idx = base + k * inner;
                    if data[idx] > data[best] {
                        best = idx;
                    }
                }
                out.push(data[best]);
                arg.push(best);
            }
        }
        let mut out_shape = shape.clone();
        out_shape[axis] = 1;
        let value = Tensor::from_parts(out_shape, out);
        Ok(Var::from_op(value, &[self], move |g, inputs, _, _| {
            let mut gx = vec![T::zero(); inputs[0].numel()];
            for (&idx, &gv) in arg.iter().zip(g.data()) {
                gx[idx] = gx[idx] + gv;
            }
            vec![Some(Tensor::from_parts(shape.clone(), gx))]
        }))
    }

    pub fn min_axis(&self, axis: usize) -> Result<Var<T>, TensorError> {
        Ok(self.neg().max_axis(axis)?.neg())
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Var<T>, TensorError> {
        let value = self.value().reshaped(shape)?;
        Ok(Var::from_op(value, &[self], |g, inputs, _, _| {
            vec![Some(Tensor::from_parts(inputs[0].shape().to_vec(), g.data().to_vec()))]
        }))
    }

    /// Reorders axes so that output axis `d` is input axis `axes[d]`.
    pub fn permute(&self, axes: &[usize]) -> Result<Var<T>, TensorError> {
        let shape = self.shape().to_vec();
        let rank = shape.len();
        let mut seen = vec![false; rank];
        if axes.len() != rank || axes.iter().any(|&a| a >= rank || std::mem::replace(&mut seen[a], true)) {
            return Err(TensorError::arg("permute", format!("{axes:?} is not a permutation of rank {rank}")));
        }
        let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
        let in_strides = contiguous_strides(&shape);
        let read: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
        let zero = vec![0; rank];
        let data = self.value().data();
        let mut out = vec![T::zero(); data.len()];
        broadcast_walk(&out_shape, &read, &zero, |o, i, _| out[o] = data[i]);
        let value = Tensor::from_parts(out_shape.clone(), out);
        Ok(Var::from_op(value, &[self], move |g, _, _, _| {
            let gd = g.data();
            let mut gx = vec![T::zero(); gd.len()];
            broadcast_walk(&out_shape, &read, &zero, |o, i, _| gx[i] = gd[o]);
            vec![Some(Tensor::from_parts(shape.clone(), gx))]
        }))
    }

    /// Joins tensors along `axis`; all other extents must agree.
    pub fn concat(parts: &[Var<T>], axis: usize) -> Result<Var<T>, TensorError> {
        let first = parts
            .first()
            .ok_or_else(|| TensorError::arg("concat", "no inputs"))?
            .shape()
            .to_vec();
        if axis >= first.len() {
            return Err(TensorError::arg("concat", format!("axis {axis} out of range for {first:?}")));
        }
        for p in parts {
            let s = p.shape();
            if s.len() != first.len() || s.iter().enumerate().any(|(d, &e)| d != axis && e != first[d]) {
                return Err(TensorError::shape("concat", format!("extents matching {first:?} off axis {axis}"), s));
            }
        }
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let lens: Vec<usize> = parts.iter().map(|p| p.shape()[axis]).collect();
        let total: usize = lens.iter().sum();
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (p, &len) in parts.iter().zip(&lens) {
                let block = len * inner;
                out.extend_from_slice(&p.value().data()[o * block..(o + 1) * block]);
            }
        }
        let mut out_shape = first.clone();
        out_shape[axis] = total;
        let value = Tensor::from_parts(out_shape, out);
        let refs: Vec<&Var<T>> = parts.iter().collect();
        Ok(Var::from_op(value, &refs, move |g, inputs, _, needs| {
            let gd = g.data();
            let mut grads: Vec<Vec<T>> = lens.iter().map(|&l| Vec::with_capacity(outer * l * inner)).collect();
            let mut pos = 0;
            for _ in 0..outer {
                for (gp, &len) in grads.iter_mut().zip(&lens) {
                    let block = len * inner;
                    gp.extend_from_slice(&gd[pos..pos + block]);
                    pos += block;
                }
            }
            grads
                .into_iter()
                .zip(inputs)
                .zip(needs)
                .map(|((gp, inp), &need)| need.then(|| Tensor::from_parts(inp.shape().to_vec(), gp)))
                .collect()
        }))
    }

    /// Slice `[start, start+len)` along `axis`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Result<Var<T>, TensorError> {
        let shape = self.shape().to_vec();
        if axis >= shape.len() || len == 0 || start + len > shape[axis] {
            return Err(TensorError::arg(
                "narrow",
                format!("range {start}..{} on axis {axis} of {shape:?}", start + len),
            ));
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let full = shape[axis];
        let data = self.value().data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * full + start) * inner;
            out.extend_from_slice(&data[base..base + len * inner]);
        }
        let mut out_shape = shape.clone();
        out_shape[axis] = len;
        let value = Tensor::from_parts(out_shape, out);
        Ok(Var::from_op(value, &[self], move |g, _, _, _| {
            let mut gx = vec![T::zero(); shape.iter().product()];
            for (o, chunk) in g.data().chunks(len * inner).enumerate() {
                let base = (o * full + start) * inner;
                gx[base..base + len * inner].copy_from_slice(chunk);
            }
            vec![Some(Tensor::from_parts(shape.clone(), gx))]
        }))
    }

    /// Softmax along `axis`, evaluated in f64.
    pub fn softmax(&self, axis: usize) -> Result<Var<T>, TensorError> {
        let shape = self.shape().to_vec();
        if axis >= shape.len() {
            return Err(TensorError::arg("softmax", format!("axis {axis} out of range for {shape:?}")));
        }
        let outer: usize = shape[..axis].iter().product();
        let len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let data = self.value().data();
        let mut out = vec![T::zero(); data.len()];
        let mut row = vec![0.0f64; len];
        for o in 0..outer {
            for i in 0..inner {
                let at = |k: usize| o * len * inner + k * inner + i;
                let max = (0..len).map(|k| data[at(k)].as_f64()).fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for (k, r) in row.iter_mut().enumerate() {
                    *r = (data[at(k)].as_f64() - max).exp();
                    sum += *r;
                }
                for (k, r) in row.iter().enumerate() {
                    out[at(k)] = T::from_f64(r / sum);
                }
            }
        }
        let value = Tensor::from_parts(shape.clone(), out);
        Ok(Var::from_op(value, &[self], move |g, _, y, _| {
            let (gd, yd) = (g.data(), y.data());
            let mut gx = vec![T::zero(); gd.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let at = |k: usize| o * len * inner + k * inner + i;
                    let dot: f64 = (0..len).map(|k| gd[at(k)].as_f64() * yd[at(k)].as_f64()).sum();
                    for k in 0..len {
                        let j = at(k);
                        gx[j] = T::from_f64(yd[j].as_f64() * (gd[j].as_f64() - dot));
                    }
                }
            }
            vec![Some(Tensor::from_parts(shape.clone(), gx))]
        }))
    }
}
