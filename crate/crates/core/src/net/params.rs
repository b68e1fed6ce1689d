//! Parameter layout, initialization and binding into a forward graph.

use std::cell::RefCell;
use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use super::config::NetworkConfig;
use crate::error::{Error, Result};
use crate::tensor::{momentum_update, BatchNormMode, Gradients, Parameter};
use crate::{Real, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum Init {
    /// Uniform in `±sqrt(6 / fan_in)`.
    Kaiming { fan_in: usize },
    Zeros,
    Ones,
}

#[derive(Clone, Debug)]
pub(crate) struct Decl {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

/// Collects declarations in forward order.
#[derive(Default)]
struct Layout {
    params: Vec<Decl>,
    buffers: Vec<(String, usize)>,
}

impl Layout {
    fn push(&mut self, name: String, shape: Vec<usize>, init: Init) {
        self.params.push(Decl { name, shape, init });
    }

    fn conv(&mut self, prefix: &str, cin: usize, cout: usize, k: usize, bias: bool) {
        self.push(format!("{prefix}.weight"), vec![cout, cin, k, k], Init::Kaiming { fan_in: cin * k * k });
        if bias {
            self.push(format!("{prefix}.bias"), vec![cout], Init::Zeros);
        }
    }

    fn conv_transpose(&mut self, prefix: &str, cin: usize, cout: usize, k: usize) {
        // each output pixel receives exactly one tap per input channel
        self.push(format!("{prefix}.weight"), vec![cin, cout, k, k], Init::Kaiming { fan_in: cin });
        self.push(format!("{prefix}.bias"), vec![cout], Init::Zeros);
    }

    fn linear(&mut self, prefix: &str, din: usize, dout: usize, bias: bool) {
        self.push(format!("{prefix}.weight"), vec![din, dout], Init::Kaiming { fan_in: din });
        if bias {
            self.push(format!("{prefix}.bias"), vec![dout], Init::Zeros);
        }
    }

    fn norm(&mut self, prefix: &str, c: usize) {
        self.push(format!("{prefix}.gamma"), vec![c], Init::Ones);
        self.push(format!("{prefix}.beta"), vec![c], Init::Zeros);
    }

    fn batchnorm(&mut self, prefix: &str, c: usize) {
        self.norm(prefix, c);
        self.buffers.push((format!("{prefix}.running_mean"), c));
        self.buffers.push((format!("{prefix}.running_var"), c));
    }

    fn conv_bn(&mut self, prefix: &str, cin: usize, cout: usize) {
        self.conv(&format!("{prefix}.conv"), cin, cout, 3, false);
        self.batchnorm(&format!("{prefix}.bn"), cout);
    }

    fn double_conv(&mut self, prefix: &str, cin: usize, cout: usize) {
        self.conv_bn(&format!("{prefix}.0"), cin, cout);
        self.conv_bn(&format!("{prefix}.1"), cout, cout);
    }
}

fn layout(cfg: &NetworkConfig) -> Layout {
    let c = cfg.base_channels;
    let mut l = Layout::default();
    l.conv("stem.conv", 2, c, 3, true);
    if cfg.use_texture_block {
        l.conv_bn("texture.x1", c, c);
        l.conv_bn("texture.x2", c, c);
    }
    if cfg.use_cbam {
        let hidden = c / cfg.cbam_reduction;
        l.linear("cbam.channel.fc1", c, hidden, false);
        l.linear("cbam.channel.fc2", hidden, c, false);
        l.conv("cbam.spatial", 2, 1, 7, false);
    }
    if cfg.use_brightness_branch {
        l.conv_bn("brightness.f1", 1, c);
        l.conv_bn("brightness.f2", c, 2 * c);
        l.conv_bn("brightness.f3", 2 * c, 4 * c);
        for (i, ch) in [c, 2 * c, 4 * c].into_iter().enumerate() {
            l.conv(&format!("brightness.omega{}", i + 1), ch, 1, 1, true);
        }
    }
    let widths = [c, 2 * c, 4 * c];
    let mut cin = c;
    for (i, &w) in widths.iter().enumerate() {
        l.double_conv(&format!("encoder.{i}"), cin, w);
        cin = w;
    }
    let cb = 4 * c;
    l.double_conv("bottleneck.conv", cb, cb);
    l.norm("bottleneck.swin.norm1", cb);
    l.linear("bottleneck.swin.qkv", cb, 3 * cb, true);
    l.linear("bottleneck.swin.proj", cb, cb, true);
    l.norm("bottleneck.swin.norm2", cb);
    l.linear("bottleneck.swin.mlp.fc1", cb, 4 * cb, true);
    l.linear("bottleneck.swin.mlp.fc2", 4 * cb, cb, true);
    // deepest stage first; input width, skip width, output width
    for (i, (up, skip, out)) in [(4 * c, 4 * c, 2 * c), (2 * c, 2 * c, c), (c, c, c)].into_iter().enumerate() {
        l.conv_transpose(&format!("decoder.{i}.up"), up, up, 2);
        l.double_conv(&format!("decoder.{i}.conv"), up + skip, out);
    }
    if cfg.use_bright_enhance {
        l.conv("enhance.conv1", c + 1, c, 3, true);
        l.conv("enhance.conv2", c, c, 3, true);
        l.conv("enhance.conv3", c, c, 3, true);
    }
    l.conv("head", c, 1, 1, true);
    l
}

/// Non-trainable state carried with the weights (batch-norm running statistics).
#[derive(Clone, Debug, PartialEq)]
pub struct Buffer {
    pub name: String,
    pub data: Vec<f32>,
}

/// Ordered, named learnable tensors of one network instance.
#[derive(Clone, Debug)]
pub struct ModelParams {
    config: NetworkConfig,
    params: Vec<Parameter>,
    buffers: Vec<Buffer>,
    index: HashMap<String, usize>,
    buffer_index: HashMap<String, usize>,
}

impl ModelParams {
    /// Seeded Kaiming-uniform initialization.
    pub fn init(config: &NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let l = layout(config);
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        let params = l
            .params
            .iter()
            .map(|d| {
                let t = match d.init {
                    Init::Zeros => Tensor::zeros(&d.shape),
                    Init::Ones => Tensor::ones(&d.shape),
                    Init::Kaiming { fan_in } => {
                        let bound = (6.0 / fan_in as f64).sqrt();
                        Tensor::from_fn(&d.shape, |_| rng.random_range(-bound..bound) as f32)
                    }
                };
                Parameter::new(d.name.clone(), t)
            })
            .collect();
        let buffers = l
            .buffers
            .iter()
            .map(|(name, c)| Buffer {
                name: name.clone(),
                data: vec![if name.ends_with("running_var") { 1.0 } else { 0.0 }; *c],
            })
            .collect();
        Ok(Self::assemble(config.clone(), params, buffers))
    }

    fn assemble(config: NetworkConfig, params: Vec<Parameter>, buffers: Vec<Buffer>) -> Self {
        let index = params.iter().enumerate().map(|(i, p)| (p.name.clone(), i)).collect();
        let buffer_index = buffers.iter().enumerate().map(|(i, b)| (b.name.clone(), i)).collect();
        ModelParams {
            config,
            params,
            buffers,
            index,
            buffer_index,
        }
    }

    /// Expected `(name, shape)` of every parameter, then every buffer, for `config`.
    pub fn expected_layout(config: &NetworkConfig) -> (Vec<(String, Vec<usize>)>, Vec<(String, usize)>) {
        let l = layout(config);
        (l.params.into_iter().map(|d| (d.name, d.shape)).collect(), l.buffers)
    }

    /// Rebuilds from stored tensors, checking names and shapes against `config`.
    pub fn from_parts(config: &NetworkConfig, params: Vec<(String, Tensor)>, buffers: Vec<Buffer>) -> Result<Self> {
        config.validate()?;
        let (want_p, want_b) = Self::expected_layout(config);
        let mut have: HashMap<String, Tensor> = params.into_iter().collect();
        let mut out = Vec::with_capacity(want_p.len());
        for (name, shape) in want_p {
            let t = have.remove(&name).ok_or_else(|| Error::Checkpoint(format!("missing parameter {name}")))?;
            if t.shape() != shape.as_slice() {
                return Err(Error::Checkpoint(format!("{name}: shape {:?}, expected {shape:?}", t.shape())));
            }
            out.push(Parameter::new(name, t));
        }
        if let Some(extra) = have.keys().min() {
            return Err(Error::Checkpoint(format!("unexpected parameter {extra}")));
        }
        let mut have_b: HashMap<String, Vec<f32>> = buffers.into_iter().map(|b| (b.name, b.data)).collect();
        let mut out_b = Vec::with_capacity(want_b.len());
        for (name, len) in want_b {
            let data = have_b.remove(&name).ok_or_else(|| Error::Checkpoint(format!("missing buffer {name}")))?;
            if data.len() != len {
                return Err(Error::Checkpoint(format!("{name}: {} values, expected {len}", data.len())));
            }
            out_b.push(Buffer { name, data });
        }
        if let Some(extra) = have_b.keys().min() {
            return Err(Error::Checkpoint(format!("unexpected buffer {extra}")));
        }
        Ok(Self::assemble(config.clone(), out, out_b))
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn params(&self) -> &[Parameter] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Parameter] {
        &mut self.params
    }

    pub fn buffers(&self) -> &[Buffer] {
        &self.buffers
    }

    pub fn names(&self) -> Vec<&str> {
        self.params.iter().map(|p| p.name.as_str()).collect()
    }

    pub fn get(&self, name: &str) -> Option<&Parameter> {
        self.index.get(name).map(|&i| &self.params[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Parameter> {
        self.index.get(name).map(|&i| &mut self.params[i])
    }

    pub fn buffer(&self, name: &str) -> Option<&[f32]> {
        self.buffer_index.get(name).map(|&i| self.buffers[i].data.as_slice())
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.tensor.numel()).sum()
    }

    /// Binds every parameter as a graph leaf. Leaves require gradients iff `trainable`.
    pub fn bind<T: Real>(&self, mode: BatchNormMode, trainable: bool) -> ForwardCtx<'_, T> {
        let vars = self
            .params
            .iter()
            .map(|p| Var::leaf(p.tensor.cast(), trainable))
            .collect();
        ForwardCtx::new(self, vars, mode)
    }

    /// Binds caller-provided leaves, one per parameter in declaration order.
    pub fn bind_vars<T: Real>(&self, vars: Vec<Var<T>>, mode: BatchNormMode) -> Result<ForwardCtx<'_, T>> {
        if vars.len() != self.params.len() {
            return Err(Error::invalid(format!("{} vars for {} parameters", vars.len(), self.params.len())));
        }
        for (v, p) in vars.iter().zip(&self.params) {
            if v.shape() != p.tensor.shape() {
                return Err(Error::invalid(format!("{}: bound shape {:?}", p.name, v.shape())));
            }
        }
        Ok(ForwardCtx::new(self, vars, mode))
    }

    /// Copies gradients of the bound leaves into the parameters.
    pub fn store_grads(&mut self, ctx_vars: &[Var<f32>], grads: &Gradients<f32>) {
        for (p, v) in self.params.iter_mut().zip(ctx_vars) {
            p.grad = Some(grads.get_or_zeros(v));
        }
    }

    /// Applies the running-statistic updates recorded during a train-mode pass.
    pub fn apply_bn_updates(&mut self, updates: Vec<BnUpdate>) {
        for u in updates {
            for (suffix, batch) in [("running_mean", &u.mean), ("running_var", &u.var)] {
                let i = self.buffer_index[&format!("{}.{suffix}", u.prefix)];
                momentum_update(&mut self.buffers[i].data, batch);
            }
        }
    }

    pub fn set_buffer(&mut self, name: &str, data: Vec<f32>) -> Result<()> {
        let i = *self
            .buffer_index
            .get(name)
            .ok_or_else(|| Error::invalid(format!("unknown buffer {name}")))?;
        if self.buffers[i].data.len() != data.len() {
            return Err(Error::invalid(format!("{name}: wrong length {}", data.len())));
        }
        self.buffers[i].data = data;
        Ok(())
    }
}

/// Batch statistics observed by one batch-norm layer.
#[derive(Clone, Debug)]
pub struct BnUpdate {
    pub prefix: String,
    pub mean: Vec<f64>,
    /// Unbiased.
    pub var: Vec<f64>,
}

/// Parameters bound as graph leaves for one forward pass.
pub struct ForwardCtx<'a, T: Real> {
    params: &'a ModelParams,
    vars: Vec<Var<T>>,
    mode: BatchNormMode,
    updates: RefCell<Vec<BnUpdate>>,
}

impl<'a, T: Real> ForwardCtx<'a, T> {
    fn new(params: &'a ModelParams, vars: Vec<Var<T>>, mode: BatchNormMode) -> Self {
        ForwardCtx {
            params,
            vars,
            mode,
            updates: RefCell::new(Vec::new()),
        }
    }

    pub fn mode(&self) -> BatchNormMode {
        self.mode
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.params.config
    }

    pub fn vars(&self) -> &[Var<T>] {
        &self.vars
    }

    pub fn var(&self, name: &str) -> Result<&Var<T>> {
        self.params
            .index
            .get(name)
            .map(|&i| &self.vars[i])
            .ok_or_else(|| Error::invalid(format!("network has no parameter {name}")))
    }

    pub fn try_var(&self, name: &str) -> Option<&Var<T>> {
        self.params.index.get(name).map(|&i| &self.vars[i])
    }

    pub(crate) fn buffer(&self, name: &str) -> Result<&'a [f32]> {
        self.params
            .buffer(name)
            .ok_or_else(|| Error::invalid(format!("network has no buffer {name}")))
    }

    pub(crate) fn record(&self, prefix: &str, mean: Vec<f64>, var: Vec<f64>) {
        self.updates.borrow_mut().push(BnUpdate {
            prefix: prefix.to_string(),
            mean,
            var,
        });
    }

    /// Running-statistic updates collected so far, in layer order.
    pub fn take_bn_updates(&self) -> Vec<BnUpdate> {
        std::mem::take(&mut self.updates.borrow_mut())
    }
}
