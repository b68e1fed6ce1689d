//! Gradient harness for network blocks: the parameters under test become
//! oracle inputs, everything else is held constant.

use super::gradcheck::{check, Report, ScalarFn};
use super::uniform_in;
use polfuse::net::{self, blocks, ModelParams, NetworkConfig};
use polfuse::tensor::BatchNormMode;
use polfuse::{Real, Tensor, Var};

/// Evaluates a block with the parameters matching `prefixes` taken from the
/// harness inputs (after the data inputs) and the rest held constant.
pub struct Block<F> {
    pub params: ModelParams,
    pub prefixes: Vec<&'static str>,
    pub data_inputs: usize,
    pub mode: BatchNormMode,
    pub body: F,
}

pub trait BlockBody {
    fn run<T: Real>(&self, ctx: &net::ForwardCtx<'_, T>, data: &[Var<T>]) -> Var<T>;
}

impl<F> Block<F> {
    pub fn selected(&self) -> Vec<usize> {
        self.params
            .params()
            .iter()
            .enumerate()
            .filter(|(_, p)| self.prefixes.iter().any(|pre| p.name.starts_with(pre)))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn inputs(&self, data: Vec<Tensor<f64>>) -> Vec<Tensor<f64>> {
        let mut all = data;
        all.extend(self.selected().into_iter().map(|i| self.params.params()[i].tensor.cast::<f64>()));
        all
    }
}

impl<F: BlockBody> ScalarFn for Block<F> {
    fn eval<T: Real>(&self, inputs: &[Var<T>]) -> Var<T> {
        let selected = self.selected();
        let mut taken = inputs[self.data_inputs..].iter();
        let vars = self
            .params
            .params()
            .iter()
            .enumerate()
            .map(|(i, p)| match selected.contains(&i) {
                true => taken.next().unwrap().clone(),
                false => Var::constant(p.tensor.cast()),
            })
            .collect();
        let ctx = self.params.bind_vars(vars, self.mode).unwrap();
        self.body.run(&ctx, &inputs[..self.data_inputs])
    }
}

macro_rules! body {
    ($name:ident, |$ctx:ident, $d:ident| $e:expr) => {
        pub struct $name;
        impl BlockBody for $name {
            fn run<T: Real>(&self, $ctx: &net::ForwardCtx<'_, T>, $d: &[Var<T>]) -> Var<T> {
                $e
            }
        }
    };
}

body!(TextureBody, |ctx, d| blocks::texture_fusion(ctx, &d[0]).unwrap());
body!(CbamBody, |ctx, d| blocks::cbam(ctx, &d[0]).unwrap());
body!(SwinBody, |ctx, d| blocks::swin_block(ctx, "bottleneck.swin", &d[0]).unwrap());
body!(EnhanceBody, |ctx, d| blocks::bright_enhance(ctx, &d[0], &d[1]).unwrap());
body!(BrightnessBody, |ctx, d| {
    let [a, b, c] = blocks::brightness_weights(ctx, &d[0]).unwrap();
    Var::concat(&[a.reshape(&[a.value().numel()]).unwrap(), b.reshape(&[b.value().numel()]).unwrap(), c.reshape(&[c.value().numel()]).unwrap()], 0).unwrap()
});
body!(NetBody, |ctx, d| net::forward(ctx, &d[0], &d[1]).unwrap());

/// Full small network on 1×2×16×16 (S0, DOLP), 50 sampled coordinates.
pub fn full_network(mode: BatchNormMode) -> Report {
    let b = Block {
        params: ModelParams::init(&NetworkConfig::small(), 16).unwrap(),
        prefixes: vec![""],
        data_inputs: 2,
        mode,
        body: NetBody,
    };
    let inputs = b.inputs(vec![uniform_in(&[1, 1, 16, 16], 7, 0.0, 1.0), uniform_in(&[1, 1, 16, 16], 8, 0.0, 1.0)]);
    check(&b, &inputs, Some((50, 6)))
}
