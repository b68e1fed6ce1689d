//! Per-operator gradient cases: each builds seeded inputs, runs the
//! finite-difference oracle and returns its report.

use super::gradcheck::{check, Report, ScalarFn};
use super::{distinct, uniform, uniform_in, uniform_off_kink};
use polfuse::loss;
use polfuse::tensor::{batchnorm2d, layer_norm, BatchNormMode, PadMode, Padding};
use polfuse::{Real, Tensor, Var};

/// Per-operator bound on the relative error of the f64 analytic gradient.
pub const TOL: f64 = 1e-4;
/// Bound for the f32 analytic gradient, which carries storage rounding.
pub const TOL_F32: f64 = 1e-2;

macro_rules! cases {
    ($($name:ident, $inputs:expr, |$v:ident| $body:expr;)*) => {
        $(
            pub fn $name() -> Report {
                struct F;
                impl ScalarFn for F {
                    fn eval<T: Real>(&self, $v: &[Var<T>]) -> Var<T> {
                        $body
                    }
                }
                let inputs: Vec<Tensor<f64>> = $inputs;
                check(&F, &inputs, None)
            }
        )*

        pub const ALL: &[(&str, fn() -> Report)] = &[$((stringify!($name), $name)),*];
    };
}

cases! {
relu, vec![uniform_off_kink(&[2, 3, 4], 1, 0.01)], |x| x[0].relu();
sigmoid, vec![uniform_in(&[2, 3, 4], 2, -4.0, 4.0)], |x| x[0].sigmoid();
sqrt, vec![uniform_in(&[12], 3, 0.2, 2.0)], |x| x[0].sqrt();
abs, vec![uniform_off_kink(&[12], 4, 0.01)], |x| x[0].abs();
square, vec![uniform(&[12], 5)], |x| x[0].square();
neg_scale_shift, vec![uniform(&[12], 6)], |x| x[0].neg().scale(2.5).add_scalar(0.3).square();

add_broadcast, vec![uniform(&[2, 3, 4, 4], 7), uniform(&[1, 3, 1, 1], 8)], |x| {
    x[0].add(&x[1]).unwrap().square()
};
sub_broadcast, vec![uniform(&[2, 3, 4], 9), uniform(&[2, 1, 4], 10)], |x| {
    x[0].sub(&x[1]).unwrap().square()
};
mul_broadcast, vec![uniform(&[2, 3, 4], 11), uniform(&[1, 3, 1], 12)], |x| {
    x[0].mul(&x[1]).unwrap()
};
div_broadcast, vec![uniform(&[2, 3, 4], 13), uniform_in(&[2, 1, 4], 14, 0.5, 2.0)], |x| {
    x[0].div(&x[1]).unwrap()
};

sum_all, vec![uniform(&[3, 5], 15)], |x| x[0].square().sum();
mean_all, vec![uniform(&[3, 5], 16)], |x| x[0].square().mean();
sum_axes, vec![uniform(&[2, 3, 4], 17)], |x| x[0].sum_axes(&[0, 2]).unwrap().square();
mean_axes, vec![uniform(&[2, 3, 4], 18)], |x| x[0].mean_axes(&[1]).unwrap().square();
var_axes, vec![uniform(&[2, 3, 5], 19)], |x| x[0].var_axes(&[2]).unwrap();
max_axis, vec![distinct(&[3, 6], 20)], |x| x[0].max_axis(1).unwrap();
min_axis, vec![distinct(&[2, 4, 3], 21)], |x| x[0].min_axis(0).unwrap();

reshape, vec![uniform(&[2, 6], 22)], |x| x[0].reshape(&[3, 4]).unwrap().square();
permute, vec![uniform(&[2, 3, 4], 23)], |x| x[0].permute(&[2, 0, 1]).unwrap().square();
concat, vec![uniform(&[2, 1, 3], 24), uniform(&[2, 2, 3], 25)], |x| {
    Var::concat(&[x[0].clone(), x[1].clone()], 1).unwrap().square()
};
narrow, vec![uniform(&[2, 5, 3], 26)], |x| x[0].narrow(1, 1, 3).unwrap().square();
softmax, vec![uniform(&[3, 5], 27)], |x| x[0].softmax(1).unwrap();

matmul, vec![uniform(&[3, 4], 28), uniform(&[4, 2], 29)], |x| x[0].matmul(&x[1]).unwrap();
matmul_batched, vec![uniform(&[2, 3, 4], 30), uniform(&[2, 4, 5], 31)], |x| {
    x[0].matmul(&x[1]).unwrap()
};

conv2d_zero_pad_bias, vec![uniform(&[2, 3, 6, 6], 32), uniform(&[4, 3, 3, 3], 33), uniform(&[4], 34)], |x| {
    x[0].conv2d(&x[1], Some(&x[2]), 1, Padding::zeros(1)).unwrap()
};
conv2d_reflect, vec![uniform(&[1, 2, 5, 7], 35), uniform(&[3, 2, 3, 3], 36)], |x| {
    x[0].conv2d(&x[1], None, 1, Padding::reflect(1)).unwrap()
};
conv2d_stride2, vec![uniform(&[1, 2, 8, 8], 37), uniform(&[2, 2, 2, 2], 38)], |x| {
    x[0].conv2d(&x[1], None, 2, Padding::NONE).unwrap()
};
conv2d_1x1, vec![uniform(&[2, 4, 3, 3], 39), uniform(&[2, 4, 1, 1], 40), uniform(&[2], 41)], |x| {
    x[0].conv2d(&x[1], Some(&x[2]), 1, Padding::NONE).unwrap()
};
conv_transpose2d, vec![uniform(&[2, 3, 3, 4], 42), uniform(&[3, 2, 2, 2], 43), uniform(&[2], 44)], |x| {
    x[0].conv_transpose2d(&x[1], Some(&x[2]), 2).unwrap()
};

pad_zeros, vec![uniform(&[1, 2, 4, 4], 45)], |x| x[0].pad2d((1, 2, 0, 3), PadMode::Zeros).unwrap();
pad_reflect, vec![uniform(&[1, 2, 4, 5], 46)], |x| x[0].pad2d((2, 3, 3, 1), PadMode::Reflection).unwrap();
pad_reflect_folding, vec![uniform(&[1, 1, 3, 3], 47)], |x| {
    x[0].pad2d((0, 6, 0, 5), PadMode::Reflection).unwrap()
};
pad_replicate, vec![uniform(&[2, 1, 3, 4], 48)], |x| x[0].pad2d((2, 1, 1, 2), PadMode::Replicate).unwrap();

bilinear_up, vec![uniform(&[1, 2, 3, 4], 49)], |x| x[0].bilinear_resize(6, 8).unwrap();
bilinear_down, vec![uniform(&[1, 2, 8, 6], 50)], |x| x[0].bilinear_resize(3, 4).unwrap();
maxpool, vec![distinct(&[2, 2, 4, 6], 51)], |x| x[0].maxpool2d().unwrap();
avgpool, vec![uniform(&[2, 2, 4, 6], 52)], |x| x[0].avgpool2d().unwrap();
global_avg_pool, vec![uniform(&[2, 3, 4, 4], 53)], |x| x[0].global_avg_pool().unwrap().square();
global_max_pool, vec![distinct(&[2, 3, 4, 4], 54)], |x| x[0].global_max_pool().unwrap();
sobel_x, vec![uniform(&[2, 2, 5, 6], 55)], |x| x[0].sobel_x().unwrap();
sobel_y, vec![uniform(&[1, 3, 6, 5], 56)], |x| x[0].sobel_y().unwrap();

batchnorm_train, vec![uniform(&[2, 3, 4, 4], 57), uniform_in(&[3], 58, 0.5, 1.5), uniform(&[3], 59)], |x| {
    batchnorm2d(&x[0], &x[1], &x[2], &[0.0; 3], &[1.0; 3], BatchNormMode::Train).unwrap().output
};
batchnorm_eval, vec![uniform(&[2, 3, 4, 4], 60), uniform_in(&[3], 61, 0.5, 1.5), uniform(&[3], 62)], |x| {
    batchnorm2d(&x[0], &x[1], &x[2], &[0.1, -0.2, 0.3], &[0.5, 1.2, 2.0], BatchNormMode::Eval)
        .unwrap()
        .output
};
layer_norm_rows, vec![uniform(&[2, 3, 6], 63), uniform_in(&[6], 64, 0.5, 1.5), uniform(&[6], 65)], |x| {
    layer_norm(&x[0], &x[1], &x[2]).unwrap()
};
l2_norm, vec![uniform(&[3, 4], 67)], |x| loss::l2_norm(&x[0]);
ssim_term, vec![uniform_in(&[1, 1, 12, 12], 68, 0.0, 1.0), uniform_in(&[1, 1, 12, 12], 69, 0.0, 1.0), uniform_in(&[1, 1, 12, 12], 70, 0.0, 1.0)], |x| {
    loss::ssim_loss(&x[0], &x[1], &x[2]).unwrap()
};
l1_term, vec![uniform_in(&[1, 1, 6, 6], 71, 0.0, 1.0), uniform_in(&[1, 1, 6, 6], 72, 0.0, 1.0), uniform_in(&[1, 1, 6, 6], 73, 0.0, 1.0)], |x| {
    loss::l1_loss(&x[0], &x[1], &x[2]).unwrap()
};
contrast_term, vec![uniform_in(&[2, 1, 6, 6], 74, 0.0, 1.0)], |x| loss::contrast_loss(&x[0]).unwrap();
texture_term, vec![uniform_in(&[1, 1, 6, 6], 75, 0.0, 1.0), uniform_in(&[1, 1, 6, 6], 76, 0.0, 1.0), uniform_in(&[1, 1, 6, 6], 77, 0.0, 1.0)], |x| {
    loss::texture_loss(&x[0], &x[1], &x[2]).unwrap()
};
reg_term, vec![uniform(&[3, 4], 78), uniform(&[5], 79)], |x| loss::reg_loss(x).unwrap();
}
