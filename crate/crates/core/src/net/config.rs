use crate::error::{Error, Result};

/// Structural hyper-parameters of the fusion network.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkConfig {
    pub base_channels: usize,
    /// Encoder depth. Only 3 is supported.
    pub levels: usize,
    pub window: usize,
    pub heads: usize,
    pub cbam_reduction: usize,
    pub use_cbam: bool,
    pub use_texture_block: bool,
    pub use_brightness_branch: bool,
    pub use_bright_enhance: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            base_channels: 64,
            levels: 3,
            window: 8,
            heads: 4,
            cbam_reduction: 16,
            use_cbam: true,
            use_texture_block: true,
            use_brightness_branch: true,
            use_bright_enhance: true,
        }
    }
}

/// One row of the module ablation grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Ablation {
    pub cbam: bool,
    pub texture: bool,
    /// Brightness branch and bright enhancement together.
    pub bright: bool,
}

impl Ablation {
    /// All eight on/off combinations, full model first.
    pub fn grid() -> [Ablation; 8] {
        let row = |cbam, texture, bright| Ablation { cbam, texture, bright };
        [
            row(true, true, true),
            row(true, false, true),
            row(false, true, true),
            row(true, true, false),
            row(true, false, false),
            row(false, true, false),
            row(false, false, true),
            row(false, false, false),
        ]
    }

    pub fn label(&self) -> String {
        if self.cbam && self.texture && self.bright {
            return "total".into();
        }
        let mut s = String::from("base");
        for (on, tag) in [(self.cbam, "+CBAM"), (self.texture, "+TEXT"), (self.bright, "+BRIGHT")] {
            if on {
                s.push_str(tag);
            }
        }
        s
    }
}

impl NetworkConfig {
    /// Small configuration used for desk-scale checks.
    pub fn small() -> Self {
        NetworkConfig {
            base_channels: 8,
            cbam_reduction: 4,
            ..NetworkConfig::default()
        }
    }

    pub fn with_ablation(mut self, a: Ablation) -> Self {
        self.use_cbam = a.cbam;
        self.use_texture_block = a.texture;
        self.use_brightness_branch = a.bright;
        self.use_bright_enhance = a.bright;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.base_channels;
        if c == 0 {
            return Err(Error::invalid("base_channels must be positive"));
        }
        if self.levels != 3 {
            return Err(Error::invalid(format!("levels must be 3, got {}", self.levels)));
        }
        if self.window == 0 {
            return Err(Error::invalid("window must be positive"));
        }
        if self.heads == 0 || (4 * c) % self.heads != 0 {
            return Err(Error::invalid(format!(
                "heads ({}) must divide the bottleneck width {}",
                self.heads,
                4 * c
            )));
        }
        if self.use_cbam && (self.cbam_reduction == 0 || c % self.cbam_reduction != 0) {
            return Err(Error::invalid(format!(
                "cbam_reduction ({}) must divide base_channels ({c})",
                self.cbam_reduction
            )));
        }
        Ok(())
    }
}
