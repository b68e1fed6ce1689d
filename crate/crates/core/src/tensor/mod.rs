//! Minimal N-d numeric engine with reverse-mode differentiation.
//!
//! Storage is generic over [`Real`] so the production path runs in `f32`
//! while verification code can instantiate the exact same operators in
//! `f64`. Reductions and matrix products always accumulate in `f64`.

mod autodiff;
mod conv;
mod linalg;
mod nn;
mod ops;
mod optim;

use std::fmt::{Debug, Display};

use num_traits::Float;
use thiserror::Error;

pub use autodiff::{Gradients, Tape, Var};
pub use conv::{PadMode, Padding, SOBEL_X, SOBEL_Y};
pub use nn::{batchnorm2d, layer_norm, momentum_update, BatchNormMode, BatchNormOutput, BN_EPS, BN_MOMENTUM};
pub use optim::{adam_update, Adam, Parameter};

/// Floating-point element type of a [`Tensor`].
pub trait Real: Float + Default + Debug + Display + Send + Sync + 'static {
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    #[inline(always)]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline(always)]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline(always)]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline(always)]
    fn as_f64(self) -> f64 {
        self
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: shape mismatch, expected {expected}, got {got:?}")]
    ShapeMismatch {
        op: &'static str,
        expected: String,
        got: Vec<usize>,
    },
    #[error("{op}: {msg}")]
    InvalidArgument { op: &'static str, msg: String },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("{0}: produced a non-finite value")]
    NonFinite(&'static str),
}

impl TensorError {
    pub(crate) fn shape(op: &'static str, expected: impl Into<String>, got: &[usize]) -> Self {
        TensorError::ShapeMismatch {
            op,
            expected: expected.into(),
            got: got.to_vec(),
        }
    }

    pub(crate) fn arg(op: &'static str, msg: impl Into<String>) -> Self {
        TensorError::InvalidArgument {
            op,
            msg: msg.into(),
        }
    }
}

/// Dense row-major array.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<T>) -> Result<Self, TensorError> {
        let shape = shape.into();
        if shape.iter().any(|&d| d == 0) {
            return Err(TensorError::arg("tensor", format!("zero extent in {shape:?}")));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(TensorError::arg(
                "tensor",
                format!("shape {shape:?} holds {n} values, data has {}", data.len()),
            ));
        }
        Ok(Tensor { shape, data })
    }

    /// Internal constructor for callers that already guarantee the invariant.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<T>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor { shape, data }
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        let n = shape.iter().product();
        Tensor::from_parts(shape.to_vec(), vec![value; n])
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, T::one())
    }

    pub fn scalar(value: T) -> Self {
        Tensor::from_parts(vec![1], vec![value])
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> T) -> Self {
        let n = shape.iter().product();
        Tensor::from_parts(shape.to_vec(), (0..n).map(&mut f).collect())
    }

    pub fn from_f32(shape: &[usize], data: &[f32]) -> Result<Self, TensorError> {
        Tensor::new(shape, data.iter().map(|&v| T::from_f64(v as f64)).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> T {
        self.data[0]
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor::from_parts(
            self.shape.clone(),
            self.data.iter().map(|&v| U::from_f64(v.as_f64())).collect(),
        )
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.as_f64()).collect()
    }

    pub fn reshaped(&self, shape: &[usize]) -> Result<Self, TensorError> {
        if shape.iter().product::<usize>() != self.numel() {
            return Err(TensorError::shape(
                "reshape",
                format!("{} elements", self.numel()),
                shape,
            ));
        }
        Ok(Tensor::from_parts(shape.to_vec(), self.data.clone()))
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor::from_parts(self.shape.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum_f64(&self) -> f64 {
        self.data.iter().map(|v| v.as_f64()).sum()
    }

    pub fn max_abs_diff(&self, other: &Tensor<T>) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a.as_f64() - b.as_f64()).abs())
            .fold(0.0, f64::max)
    }

    pub fn min_max(&self) -> (T, T) {
        self.data.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
    }

    /// Element of a rank-4 tensor.
    pub fn at4(&self, b: usize, c: usize, y: usize, x: usize) -> T {
        let s = &self.shape;
        self.data[((b * s[1] + c) * s[2] + y) * s[3] + x]
    }

    pub(crate) fn add_assign(&mut self, other: &Tensor<T>) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
    }

    pub(crate) fn dims4(&self, op: &'static str) -> Result<[usize; 4], TensorError> {
        match self.shape[..] {
            [b, c, h, w] => Ok([b, c, h, w]),
            _ => Err(TensorError::shape(op, "rank 4 [B,C,H,W]", &self.shape)),
        }
    }
}
