use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Cnn,
    SepCnn,
}

impl Arch {
    pub fn name(self) -> &'static str {
        match self {
            Arch::Cnn => "cnn",
            Arch::SepCnn => "sepcnn",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Arch::Cnn => "1D-CNN",
            Arch::SepCnn => "1D-SepCNN",
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "cnn" | "1dcnn" => Ok(Arch::Cnn),
            "sepcnn" | "1dsepcnn" => Ok(Arch::SepCnn),
            other => Err(Error::Argument(format!("unknown architecture {other:?}"))),
        }
    }
}

pub const MAX_BLOCKS: usize = 5;

/// Hyperparameters that expand into a concrete layer graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelConfig {
    pub arch: Arch,
    pub num_blocks: usize,
    pub base_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub input_len: usize,
    pub input_ch: usize,
    pub n_classes: usize,
    pub dense_hidden: usize,
}

impl ModelConfig {
    pub fn new(arch: Arch, num_blocks: usize) -> Self {
        ModelConfig {
            arch,
            num_blocks,
            base_channels: 4,
            kernel: 3,
            stride: 1,
            input_len: 4410,
            input_ch: 4,
            n_classes: 4,
            dense_hidden: 4,
        }
    }

    pub fn with_input_len(mut self, input_len: usize) -> Self {
        self.input_len = input_len;
        self
    }

    /// Output channels of block `i` (1-indexed): doubled every two blocks.
    pub fn block_channels(&self, i: usize) -> usize {
        self.base_channels << ((i - 1) / 2)
    }

    /// Temporal length entering global average pooling, or `None` when the
    /// convolutions run out of samples.
    pub fn final_len(&self) -> Option<usize> {
        let mut len = self.input_len;
        for i in 1..=self.num_blocks {
            len = len.checked_sub(self.kernel - 1).filter(|&l| l > 0)?;
            if i < self.num_blocks {
                len /= 2;
                if len == 0 {
                    return None;
                }
            }
        }
        Some(len)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=MAX_BLOCKS).contains(&self.num_blocks) {
            return Err(Error::Config(format!("num_blocks {} outside 1..={MAX_BLOCKS}", self.num_blocks)));
        }
        if self.kernel != 3 || self.stride != 1 {
            return Err(Error::Config("only kernel 3 / stride 1 convolutions are supported".into()));
        }
        if self.base_channels == 0 || self.input_ch == 0 || self.n_classes == 0 || self.dense_hidden == 0 {
            return Err(Error::Config("channel counts must be positive".into()));
        }
        if self.final_len().is_none() {
            return Err(Error::Config(format!(
                "input length {} collapses to nothing after {} blocks",
                self.input_len, self.num_blocks
            )));
        }
        Ok(())
    }
}
