use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::accel::DeviceProfile;
use crate::dataio::SplitMethod;
use crate::error::{Error, Result};
use crate::nn::{Arch, MAX_BLOCKS};
use crate::quant::BITWIDTHS;
use crate::trainer::{BATCH_SIZES, LR_MAX, LR_MIN};

/// Per-gene mutation probability.
pub const MUTATION_RATE: f64 = 0.2;
/// Standard deviation of the learning-rate mutation, in decades.
pub const LR_SIGMA_DECADES: f64 = 0.3;

/// One point of the search space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub arch: Arch,
    pub bits: u32,
    pub bs: usize,
    pub lr: f64,
    pub num_blocks: usize,
}

impl fmt::Display for TrialConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{} b={} bs={} lr={:.3e}", self.arch.name(), self.num_blocks, self.bits, self.bs, self.lr)
    }
}

/// Bitwidth x batch size x log-uniform learning rate x depth, for one
/// architecture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub arch: Arch,
}

impl SearchSpace {
    pub fn new(arch: Arch) -> Self {
        SearchSpace { arch }
    }

    pub fn contains(&self, c: &TrialConfig) -> bool {
        c.arch == self.arch
            && BITWIDTHS.contains(&c.bits)
            && BATCH_SIZES.contains(&c.bs)
            && (LR_MIN..=LR_MAX).contains(&c.lr)
            && (1..=MAX_BLOCKS).contains(&c.num_blocks)
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> TrialConfig {
        TrialConfig {
            arch: self.arch,
            bits: BITWIDTHS[rng.random_range(0..BITWIDTHS.len())],
            bs: BATCH_SIZES[rng.random_range(0..BATCH_SIZES.len())],
            lr: 10f64.powf(rng.random_range(LR_MIN.log10()..=LR_MAX.log10())),
            num_blocks: rng.random_range(1..=MAX_BLOCKS),
        }
    }

    /// Uniform crossover followed by per-gene mutation.
    pub fn offspring<R: Rng>(&self, a: &TrialConfig, b: &TrialConfig, rng: &mut R) -> TrialConfig {
        let mut c = TrialConfig { arch: self.arch, ..*a };
        if rng.random_bool(0.5) {
            c.bits = b.bits;
        }
        if rng.random_bool(0.5) {
            c.bs = b.bs;
        }
        if rng.random_bool(0.5) {
            c.lr = b.lr;
        }
        if rng.random_bool(0.5) {
            c.num_blocks = b.num_blocks;
        }
        let fresh = self.sample(rng);
        if rng.random_bool(MUTATION_RATE) {
            c.bits = fresh.bits;
        }
        if rng.random_bool(MUTATION_RATE) {
            c.bs = fresh.bs;
        }
        if rng.random_bool(MUTATION_RATE) {
            let step = Normal::new(0.0, LR_SIGMA_DECADES).map_or(0.0, |n| n.sample(rng));
            c.lr = 10f64.powf((c.lr.log10() + step).clamp(LR_MIN.log10(), LR_MAX.log10()));
        }
        if rng.random_bool(MUTATION_RATE) {
            c.num_blocks = fresh.num_blocks;
        }
        c
    }
}

/// Minimum early validation accuracy by split method (rows PS, LOSO, AOS)
/// and bitwidth (columns 4, 6, 8).
pub const ACCURACY_THRESHOLDS: [[f64; 3]; 3] = [[0.70, 0.75, 0.80], [0.50, 0.55, 0.60], [0.65, 0.70, 0.75]];
pub const LATENCY_MAX_MS: f64 = 100.0;
pub const POWER_MAX_MW: f64 = 500.0;
pub const ENERGY_MAX_MJ: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    pub method: SplitMethod,
    pub accuracy_min: [[f64; 3]; 3],
    pub latency_max_ms: f64,
    pub power_max_mw: f64,
    pub energy_max_mj: f64,
    pub device: DeviceProfile,
}

fn method_row(m: SplitMethod) -> usize {
    match m {
        SplitMethod::Ps => 0,
        SplitMethod::Loso => 1,
        SplitMethod::Aos => 2,
    }
}

impl ConstraintSet {
    pub fn new(method: SplitMethod) -> Self {
        ConstraintSet {
            method,
            accuracy_min: ACCURACY_THRESHOLDS,
            latency_max_ms: LATENCY_MAX_MS,
            power_max_mw: POWER_MAX_MW,
            energy_max_mj: ENERGY_MAX_MJ,
            device: DeviceProfile::xc7s25(),
        }
    }

    pub fn accuracy_threshold(&self, bits: u32) -> Result<f64> {
        let col = BITWIDTHS
            .iter()
            .position(|&b| b == bits)
            .ok_or_else(|| Error::Config(format!("bitwidth {bits} not in {{4, 6, 8}}")))?;
        Ok(self.accuracy_min[method_row(self.method)][col])
    }

    /// Sets every accuracy threshold to `v`.
    pub fn with_accuracy(mut self, v: f64) -> Self {
        self.accuracy_min = [[v; 3]; 3];
        self
    }

    pub fn validate(&self) -> Result<()> {
        let all = self.accuracy_min.iter().flatten().chain([&self.latency_max_ms, &self.power_max_mw, &self.energy_max_mj]);
        for v in all {
            if !(v.is_finite() && *v > 0.0) {
                return Err(Error::Config(format!("constraint threshold {v} must be positive")));
            }
        }
        self.device.validate()
    }
}
