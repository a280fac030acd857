use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bits in one RAMB18 primitive (18 Kbit with parity).
pub const BRAM18_BITS: u64 = 18_432;

/// Target FPGA budget. `bram_blocks` counts 36 Kbit blocks; each holds two
/// RAMB18 halves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub name: String,
    pub luts: u64,
    pub bram_kbits: u64,
    pub bram_blocks: u64,
    pub dsps: u64,
    pub clock_hz: f64,
}

impl DeviceProfile {
    pub fn xc7s15() -> Self {
        DeviceProfile::spartan7("xc7s15", 8_000, 10, 20)
    }

    pub fn xc7s25() -> Self {
        DeviceProfile::spartan7("xc7s25", 14_600, 45, 80)
    }

    pub fn xc7s50() -> Self {
        DeviceProfile::spartan7("xc7s50", 32_600, 75, 120)
    }

    fn spartan7(name: &str, luts: u64, blocks: u64, dsps: u64) -> Self {
        DeviceProfile { name: name.into(), luts, bram_kbits: blocks * 36, bram_blocks: blocks, dsps, clock_hz: 100e6 }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "xc7s15" => Ok(Self::xc7s15()),
            "xc7s25" => Ok(Self::xc7s25()),
            "xc7s50" => Ok(Self::xc7s50()),
            other => Err(Error::Config(format!("unknown device {other:?} (known: xc7s15, xc7s25, xc7s50)"))),
        }
    }

    pub fn bram18_capacity(&self) -> u64 {
        2 * self.bram_blocks
    }

    pub fn validate(&self) -> Result<()> {
        let positive = self.luts > 0 && self.bram_kbits > 0 && self.bram_blocks > 0 && self.dsps > 0;
        if !positive || !(self.clock_hz.is_finite() && self.clock_hz > 0.0) {
            return Err(Error::Config(format!("device {} must have positive resources and clock", self.name)));
        }
        Ok(())
    }
}

impl Default for DeviceProfile {
    fn default() -> Self {
        Self::xc7s25()
    }
}
