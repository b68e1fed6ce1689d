//! Seeded training loop: random crops, Adam over the composite loss,
//! per-epoch CSV log and best-epoch checkpoint.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::checkpoint;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::loss::{total_loss, LossBreakdown};
use crate::net::{forward, ModelParams};
use crate::tensor::{Adam, BatchNormMode, PadMode};
use crate::{Plane, Var};

pub const LOG_FILE: &str = "train_log.csv";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const LOG_HEADER: &str = "epoch,ssim,l1,con,tex,reg,total,val_total";

/// Network inputs of one scene: `S0 / 2` and DOLP.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainPair {
    pub name: String,
    pub s0: Plane,
    pub dolp: Plane,
}

impl TrainPair {
    pub fn new(name: impl Into<String>, s0: Plane, dolp: Plane) -> Result<Self> {
        let name = name.into();
        if s0.dims() != dolp.dims() {
            return Err(Error::invalid(format!("{name}: S0 {:?} and DOLP {:?} differ", s0.dims(), dolp.dims())));
        }
        Ok(TrainPair { name, s0, dolp })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean of the per-step breakdowns.
    pub train: LossBreakdown,
    pub val_total: Option<f64>,
}

impl EpochRecord {
    pub fn csv_row(&self) -> String {
        let b = &self.train;
        let mut row = format!("{}", self.epoch);
        for v in [b.ssim, b.l1, b.con, b.tex, b.reg, b.total] {
            write!(row, ",{v:.8}").expect("writing to a String");
        }
        match self.val_total {
            Some(v) => write!(row, ",{v:.8}").expect("writing to a String"),
            None => row.push_str(",NA"),
        }
        row
    }
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub history: Vec<EpochRecord>,
    /// Breakdown of every optimizer step in order.
    pub steps: Vec<LossBreakdown>,
    pub best_epoch: Option<usize>,
    pub log_path: PathBuf,
    pub checkpoint_path: PathBuf,
}

/// Reflection-pads to at least `size` per axis, then cuts a `size×size`
/// window at `(y, x)`.
fn crop(p: &Plane, size: usize, y: usize, x: usize) -> Result<Plane> {
    let (h, w) = p.dims();
    let padded = Var::constant(p.to_tensor()).pad2d((0, size.saturating_sub(h), 0, size.saturating_sub(w)), PadMode::Reflection)?;
    let t = padded.narrow(2, y, size)?.narrow(3, x, size)?;
    Plane::from_tensor(t.value(), 0)
}

fn batch_tensor(planes: &[Plane]) -> Result<Var<f32>> {
    let refs: Vec<&Plane> = planes.iter().collect();
    Ok(Var::constant(Plane::stack(&refs)?))
}

struct Trainer<'a> {
    cfg: &'a RunConfig,
    params: ModelParams,
    adam: Adam,
    rng: Xoshiro256PlusPlus,
}

impl Trainer<'_> {
    fn sample_crops(&mut self, pairs: &[&TrainPair]) -> Result<(Var<f32>, Var<f32>)> {
        let size = self.cfg.crop_size;
        let (mut s0, mut dolp) = (Vec::with_capacity(pairs.len()), Vec::with_capacity(pairs.len()));
        for p in pairs {
            let (h, w) = p.s0.dims();
            let y = self.rng.random_range(0..=h.max(size) - size);
            let x = self.rng.random_range(0..=w.max(size) - size);
            s0.push(crop(&p.s0, size, y, x)?);
            dolp.push(crop(&p.dolp, size, y, x)?);
        }
        Ok((batch_tensor(&s0)?, batch_tensor(&dolp)?))
    }

    fn step(&mut self, s0: &Var<f32>, dolp: &Var<f32>, at: &str) -> Result<LossBreakdown> {
        let ctx = self.params.bind::<f32>(BatchNormMode::Train, true);
        let pred = forward(&ctx, s0, dolp)?;
        let (loss, breakdown) = total_loss(&pred, s0, dolp, ctx.vars(), &self.cfg.loss).map_err(|e| match e {
            Error::Tensor(_) => Error::Training(format!("{at}: non-finite loss ({e})")),
            other => other,
        })?;
        let grads = loss.backward()?;
        let vars = ctx.vars().to_vec();
        let updates = ctx.take_bn_updates();
        drop(ctx);
        self.params.store_grads(&vars, &grads);
        if let Some(p) = self.params.params().iter().find(|p| !p.grad.as_ref().is_some_and(|g| g.all_finite())) {
            return Err(Error::Training(format!("{at}: non-finite gradient for {}", p.name)));
        }
        self.adam.step(self.params.params_mut())?;
        self.params.apply_bn_updates(updates);
        Ok(breakdown)
    }

    fn validate(&self, val: &[TrainPair]) -> Result<Option<f64>> {
        if val.is_empty() {
            return Ok(None);
        }
        let ctx = self.params.bind::<f32>(BatchNormMode::Eval, false);
        let mut sum = 0.0;
        for p in val {
            let s0 = Var::constant(p.s0.to_tensor());
            let dolp = Var::constant(p.dolp.to_tensor());
            let pred = forward(&ctx, &s0, &dolp)?;
            let (_, b) = total_loss(&pred, &s0, &dolp, ctx.vars(), &self.cfg.loss)
                .map_err(|e| Error::Training(format!("validation on {}: {e}", p.name)))?;
            sum += b.total;
        }
        Ok(Some(sum / val.len() as f64))
    }
}

fn mean_breakdown(steps: &[LossBreakdown]) -> LossBreakdown {
    let n = steps.len() as f64;
    let mut m = LossBreakdown::default();
    for s in steps {
        m.ssim += s.ssim / n;
        m.l1 += s.l1 / n;
        m.con += s.con / n;
        m.tex += s.tex / n;
        m.reg += s.reg / n;
        m.total += s.total / n;
    }
    m
}

/// Trains from a fresh seeded initialization and writes `train_log.csv` and
/// `best.ckpt` into `out_dir`. The checkpoint holds the weights of the epoch
/// with the lowest validation total (training total without a validation
/// set). With zero epochs it holds the initial weights and the log has only
/// its header.
pub fn train(cfg: &RunConfig, train: &[TrainPair], val: &[TrainPair], out_dir: &Path) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let log_path = out_dir.join(LOG_FILE);
    let checkpoint_path = out_dir.join(BEST_CHECKPOINT);
    let mut log = String::from(LOG_HEADER);
    log.push('\n');
    fs::write(&log_path, &log).map_err(|e| Error::io(&log_path, e))?;

    let mut t = Trainer {
        cfg,
        params: ModelParams::init(&cfg.network, cfg.seed)?,
        adam: Adam::new(cfg.lr),
        rng: Xoshiro256PlusPlus::seed_from_u64(cfg.seed ^ 0x5eed_c409),
    };
    checkpoint::save(&checkpoint_path, &t.params)?;

    let mut history = Vec::with_capacity(cfg.epochs);
    let mut steps = Vec::new();
    let mut best: Option<(f64, usize)> = None;
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut t.rng);
        let mut epoch_steps = Vec::new();
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let pairs: Vec<&TrainPair> = chunk.iter().map(|&i| &train[i]).collect();
            let (s0, dolp) = t.sample_crops(&pairs)?;
            let breakdown = t.step(&s0, &dolp, &format!("epoch {epoch}, batch {b}"))?;
            log::debug!("epoch {epoch} batch {b}: total {:.6}", breakdown.total);
            epoch_steps.push(breakdown);
        }
        let record = EpochRecord {
            epoch,
            train: mean_breakdown(&epoch_steps),
            val_total: t.validate(val)?,
        };
        steps.extend(epoch_steps);
        log.push_str(&record.csv_row());
        log.push('\n');
        fs::write(&log_path, &log).map_err(|e| Error::io(&log_path, e))?;
        let score = record.val_total.unwrap_or(record.train.total);
        if best.is_none_or(|(s, _)| score < s) {
            best = Some((score, epoch));
            checkpoint::save(&checkpoint_path, &t.params)?;
        }
        log::info!("epoch {epoch}: train {:.6}, val {:?}", record.train.total, record.val_total);
        history.push(record);
    }
    Ok(TrainOutcome {
        params: t.params,
        history,
        steps,
        best_epoch: best.map(|b| b.1),
        log_path,
        checkpoint_path,
    })
}
