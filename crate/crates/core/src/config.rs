//! Run configuration in a flat `key = value` text format.
//!
//! Blank lines and `#` comments are ignored. Unknown and repeated keys are
//! errors. Network keys carry a `net.` prefix, loss weights a `loss.` prefix.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::loss::LossWeights;
use crate::net::{NetworkConfig, MIN_EXTENT};
use crate::stokes::MosaicPattern;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub crop_size: usize,
    /// Share of scenes held out for validation.
    pub val_fraction: f64,
    /// Share of scenes held out for testing.
    pub test_fraction: f64,
    pub loss: LossWeights,
    pub network: NetworkConfig,
    pub mosaic_pattern: MosaicPattern,
    pub dataset: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            batch_size: 4,
            epochs: 335,
            lr: 1e-4,
            crop_size: 128,
            val_fraction: 1.0 / 9.0,
            test_fraction: 0.0,
            loss: LossWeights::default(),
            network: NetworkConfig::default(),
            mosaic_pattern: MosaicPattern::default(),
            dataset: None,
            out: None,
        }
    }
}

fn parse<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config {
        line,
        msg: format!("invalid value {value:?} for {key}"),
    })
}

fn set_network(net: &mut NetworkConfig, line: usize, key: &str, value: &str) -> Result<bool> {
    match key {
        "net.base_channels" => net.base_channels = parse(line, key, value)?,
        "net.levels" => net.levels = parse(line, key, value)?,
        "net.window" => net.window = parse(line, key, value)?,
        "net.heads" => net.heads = parse(line, key, value)?,
        "net.cbam_reduction" => net.cbam_reduction = parse(line, key, value)?,
        "net.use_cbam" => net.use_cbam = parse(line, key, value)?,
        "net.use_texture_block" => net.use_texture_block = parse(line, key, value)?,
        "net.use_brightness_branch" => net.use_brightness_branch = parse(line, key, value)?,
        "net.use_bright_enhance" => net.use_bright_enhance = parse(line, key, value)?,
        _ => return Ok(false),
    }
    Ok(true)
}

/// Splits text into `(line number, key, value)` entries, rejecting repeats.
fn entries(text: &str) -> Result<Vec<(usize, &str, &str)>> {
    let mut out: Vec<(usize, &str, &str)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| Error::Config {
            line,
            msg: format!("expected `key = value`, got {content:?}"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        if let Some(prev) = out.iter().find(|e| e.1 == key) {
            return Err(Error::Config {
                line,
                msg: format!("{key} already set on line {}", prev.0),
            });
        }
        out.push((line, key, value));
    }
    Ok(out)
}

pub fn network_to_text(net: &NetworkConfig) -> String {
    let mut s = String::new();
    let rows: [(&str, String); 9] = [
        ("base_channels", net.base_channels.to_string()),
        ("levels", net.levels.to_string()),
        ("window", net.window.to_string()),
        ("heads", net.heads.to_string()),
        ("cbam_reduction", net.cbam_reduction.to_string()),
        ("use_cbam", net.use_cbam.to_string()),
        ("use_texture_block", net.use_texture_block.to_string()),
        ("use_brightness_branch", net.use_brightness_branch.to_string()),
        ("use_bright_enhance", net.use_bright_enhance.to_string()),
    ];
    for (k, v) in rows {
        writeln!(s, "net.{k} = {v}").expect("writing to a String");
    }
    s
}

/// Parses `net.*` lines only; any other key is an error.
pub fn network_from_text(text: &str) -> Result<NetworkConfig> {
    let mut net = NetworkConfig::default();
    for (line, key, value) in entries(text)? {
        if !set_network(&mut net, line, key, value)? {
            return Err(Error::Config {
                line,
                msg: format!("unknown network key {key:?}"),
            });
        }
    }
    net.validate()?;
    Ok(net)
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = RunConfig::default();
        for (line, key, value) in entries(text)? {
            if set_network(&mut c.network, line, key, value)? {
                continue;
            }
            match key {
                "seed" => c.seed = parse(line, key, value)?,
                "batch_size" => c.batch_size = parse(line, key, value)?,
                "epochs" => c.epochs = parse(line, key, value)?,
                "lr" => c.lr = parse(line, key, value)?,
                "crop_size" => c.crop_size = parse(line, key, value)?,
                "val_fraction" => c.val_fraction = parse(line, key, value)?,
                "test_fraction" => c.test_fraction = parse(line, key, value)?,
                "loss.ssim" => c.loss.ssim = parse(line, key, value)?,
                "loss.l1" => c.loss.l1 = parse(line, key, value)?,
                "loss.contrast" => c.loss.contrast = parse(line, key, value)?,
                "loss.texture" => c.loss.texture = parse(line, key, value)?,
                "loss.reg" => c.loss.reg = parse(line, key, value)?,
                "mosaic_pattern" => {
                    c.mosaic_pattern = value.parse().map_err(|e: Error| Error::Config { line, msg: e.to_string() })?
                }
                "dataset" => c.dataset = Some(PathBuf::from(value)),
                "out" => c.out = Some(PathBuf::from(value)),
                _ => {
                    return Err(Error::Config {
                        line,
                        msg: format!("unknown key {key:?}"),
                    })
                }
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be positive"));
        }
        if self.crop_size < MIN_EXTENT {
            return Err(Error::invalid(format!("crop_size must be at least {MIN_EXTENT}")));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::invalid(format!("lr must be positive, got {}", self.lr)));
        }
        for (name, f) in [("val_fraction", self.val_fraction), ("test_fraction", self.test_fraction)] {
            if !(0.0..1.0).contains(&f) {
                return Err(Error::invalid(format!("{name} must lie in [0, 1), got {f}")));
            }
        }
        if self.val_fraction + self.test_fraction >= 1.0 {
            return Err(Error::invalid("val_fraction + test_fraction must leave training scenes"));
        }
        self.loss.validate()?;
        self.network.validate()
    }

    /// Canonical text form; `parse(to_text(c)) == c`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").expect("writing to a String");
        kv("seed", self.seed.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("epochs", self.epochs.to_string());
        kv("lr", self.lr.to_string());
        kv("crop_size", self.crop_size.to_string());
        kv("val_fraction", self.val_fraction.to_string());
        kv("test_fraction", self.test_fraction.to_string());
        kv("loss.ssim", self.loss.ssim.to_string());
        kv("loss.l1", self.loss.l1.to_string());
        kv("loss.contrast", self.loss.contrast.to_string());
        kv("loss.texture", self.loss.texture.to_string());
        kv("loss.reg", self.loss.reg.to_string());
        kv("mosaic_pattern", self.mosaic_pattern.to_string());
        if let Some(p) = &self.dataset {
            kv("dataset", p.display().to_string());
        }
        if let Some(p) = &self.out {
            kv("out", p.display().to_string());
        }
        s.push_str(&network_to_text(&self.network));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let c = RunConfig::parse("# run\nepochs = 3\n\nlr = 0.001  # faster\nnet.base_channels = 8\nnet.cbam_reduction = 4\n").unwrap();
        assert_eq!(c.epochs, 3);
        assert_eq!(c.lr, 1e-3);
        assert_eq!(c.network, NetworkConfig::small());
        assert_eq!(c.batch_size, 4);
    }

    #[test]
    fn text_round_trip() {
        let mut c = RunConfig {
            seed: 77,
            dataset: Some("data/msp".into()),
            ..RunConfig::default()
        };
        c.loss.reg = 3.5e-7;
        c.network.use_cbam = false;
        assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);
        assert_eq!(network_from_text(&network_to_text(&c.network)).unwrap(), c.network);
    }

    #[test]
    fn rejects_bad_input() {
        let line_of = |text: &str| match RunConfig::parse(text) {
            Err(Error::Config { line, .. }) => line,
            other => panic!("{other:?}"),
        };
        assert_eq!(line_of("epochs = 2\nepoch = 3\n"), 2);
        assert_eq!(line_of("seed = -1\n"), 1);
        assert_eq!(line_of("seed = 1\nseed = 2\n"), 2);
        assert_eq!(line_of("just words\n"), 1);
        assert_eq!(line_of("mosaic_pattern = 0,0,45,90\n"), 1);
        assert!(matches!(RunConfig::parse("batch_size = 0"), Err(Error::Invalid(_))));
        assert!(matches!(RunConfig::parse("net.heads = 5"), Err(Error::Invalid(_))));
        assert!(network_from_text("seed = 1").is_err());
    }
}
