use serde::{Deserialize, Serialize};

use crate::accel::{compile_with, energy_mj, estimate_power, estimate_resources, latency_ms, simulate, ResourceReport};
use crate::dataio::SplitData;
use crate::error::{Error, Result};
use crate::nn::{build_model, ModelConfig, Seq};
use crate::quant::quantize_model;
use crate::rng;
use crate::search::space::{ConstraintSet, TrialConfig};
use crate::search::study::StudySettings;
use crate::trainer::{evaluate, train, train_with, Control, TrainSpec};

/// Objectives given to trials that did not complete.
pub const PRUNED_OBJECTIVES: (f64, f64) = (-1.0, 1e9);

/// Furthest pipeline step a trial got through, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Trained,
    Simulated,
    Synthesized,
    Profiled,
    Complete,
}

/// The check that follows each stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gate {
    Accuracy,
    Latency,
    Resource,
    Hardware,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::Accuracy, Gate::Latency, Gate::Resource, Gate::Hardware];

    /// The stage whose metrics this gate reads.
    pub fn after(self) -> Stage {
        match self {
            Gate::Accuracy => Stage::Trained,
            Gate::Latency => Stage::Simulated,
            Gate::Resource => Stage::Synthesized,
            Gate::Hardware => Stage::Profiled,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Verdict {
    Keep,
    Prune(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pruned {
    pub gate: Gate,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub epochs: Option<usize>,
    /// Best validation accuracy at the gate epoch.
    pub gate_accuracy: Option<f64>,
    /// Best validation accuracy over the whole run.
    pub val_accuracy: Option<f64>,
    pub fp32_accuracy: Option<f64>,
    /// Integer-only accuracy on the validation and test sets.
    pub quant_val_accuracy: Option<f64>,
    pub quant_accuracy: Option<f64>,
    pub cycles: Option<u64>,
    pub latency_ms: Option<f64>,
    pub resources: Option<ResourceReport>,
    pub power_mw: Option<f64>,
    pub energy_mj: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub index: usize,
    pub generation: usize,
    pub config: TrialConfig,
    pub stage_reached: Stage,
    pub pruned: Option<Pruned>,
    pub metrics: TrialMetrics,
}

impl TrialResult {
    pub fn is_complete(&self) -> bool {
        self.pruned.is_none() && self.stage_reached == Stage::Complete
    }

    /// (quantized validation accuracy, energy) for complete trials.
    pub fn objectives(&self) -> (f64, f64) {
        match (self.is_complete(), self.metrics.quant_val_accuracy, self.metrics.energy_mj) {
            (true, Some(a), Some(e)) => (a, e),
            _ => PRUNED_OBJECTIVES,
        }
    }
}

/// Applies the check after `gate` to the metrics gathered so far. Missing
/// metrics count as a failure.
pub fn staged_prune(m: &TrialMetrics, bits: u32, gate: Gate, c: &ConstraintSet) -> Result<Verdict> {
    let v = match gate {
        Gate::Accuracy => {
            let min = c.accuracy_threshold(bits)?;
            match m.gate_accuracy {
                None => Verdict::Prune("no validation accuracy".into()),
                Some(a) if a < min => {
                    Verdict::Prune(format!("validation accuracy {a:.4} below {min} ({}, {bits}-bit)", c.method))
                }
                Some(_) => Verdict::Keep,
            }
        }
        Gate::Latency => match m.latency_ms {
            None => Verdict::Prune("no latency".into()),
            Some(t) if t > c.latency_max_ms => Verdict::Prune(format!("latency {t:.3} ms above {} ms", c.latency_max_ms)),
            Some(_) => Verdict::Keep,
        },
        Gate::Resource => match &m.resources {
            None => Verdict::Prune("no resource estimate".into()),
            Some(r) if !r.feasible => Verdict::Prune(format!(
                "exceeds {}: LUT {:.2}%, BRAM {:.2}%, DSP {:.2}%",
                c.device.name, r.lut_pct, r.bram_pct, r.dsp_pct
            )),
            Some(_) => Verdict::Keep,
        },
        Gate::Hardware => match (m.power_mw, m.energy_mj) {
            (Some(p), Some(e)) => {
                if p > c.power_max_mw {
                    Verdict::Prune(format!("power {p:.1} mW above {} mW", c.power_max_mw))
                } else if e > c.energy_max_mj {
                    Verdict::Prune(format!("energy {e:.3} mJ above {} mJ", c.energy_max_mj))
                } else {
                    Verdict::Keep
                }
            }
            _ => Verdict::Prune("hardware profiling returned no power estimate".into()),
        },
    };
    Ok(v)
}

/// Everything a trial needs besides its configuration.
#[derive(Clone, Copy)]
pub struct TrialContext<'a> {
    pub constraints: &'a ConstraintSet,
    pub data: &'a SplitData,
    pub settings: &'a StudySettings,
}

pub fn trial_seed(root: u64, index: usize) -> u64 {
    rng::derive_seed(root, &[rng::hash_str("trial"), index as u64])
}

/// Runs one trial through the staged pipeline. With `force`, failing gates
/// are recorded but every stage still runs.
pub fn evaluate_trial(cfg: TrialConfig, index: usize, generation: usize, ctx: TrialContext, force: bool) -> Result<TrialResult> {
    let TrialContext { constraints, data, settings } = ctx;
    let seed = trial_seed(settings.seed, index);
    let mut out = TrialResult { index, generation, config: cfg, stage_reached: Stage::Trained, pruned: None, metrics: TrialMetrics::default() };
    let threshold = constraints.accuracy_threshold(cfg.bits)?;
    let check = |out: &mut TrialResult, gate: Gate| -> Result<bool> {
        out.stage_reached = gate.after();
        if let Verdict::Prune(reason) = staged_prune(&out.metrics, cfg.bits, gate, constraints)? {
            log::debug!("trial {index} ({cfg}) pruned at {gate:?}: {reason}");
            out.pruned.get_or_insert(Pruned { gate, reason });
            return Ok(force);
        }
        Ok(true)
    };

    // training with the early accuracy gate
    let model_cfg = ModelConfig::new(cfg.arch, cfg.num_blocks).with_input_len(data.train[0].len());
    let spec = TrainSpec {
        epochs_max: settings.epochs_max,
        patience: settings.patience,
        bs: cfg.bs,
        lr: cfg.lr,
        seed,
        qat_bits: Some(cfg.bits),
    };
    let gate_epoch = settings.gate_epoch();
    let mut gate_accuracy = None;
    let trained = train_with(build_model(&model_cfg, seed)?, data, &spec, |rec, best| {
        if rec.epoch == gate_epoch {
            gate_accuracy = Some(best);
            if !force && best < threshold {
                return Control::Stop;
            }
        }
        Control::Continue
    });
    let trained = match trained {
        Ok(r) => r,
        Err(Error::TrainingDiverged { epoch }) => {
            out.pruned = Some(Pruned { gate: Gate::Accuracy, reason: format!("training diverged at epoch {epoch}") });
            return Ok(out);
        }
        Err(e) => return Err(e),
    };
    out.metrics.epochs = Some(trained.stopped_epoch);
    out.metrics.val_accuracy = Some(trained.best_val_accuracy);
    // early stopping before the gate epoch: gate on the final best
    out.metrics.gate_accuracy = Some(gate_accuracy.unwrap_or(trained.best_val_accuracy));
    if settings.fp32_baseline {
        let float_spec = TrainSpec { qat_bits: None, ..spec };
        let float = train(build_model(&model_cfg, seed)?, data, &float_spec)?;
        out.metrics.fp32_accuracy = Some(evaluate(&float.graph, &data.test)?.accuracy);
    }
    if !check(&mut out, Gate::Accuracy)? {
        return Ok(out);
    }

    // quantize, compile and simulate one inference
    let calibration: Vec<Seq> = data.train.iter().take(8).map(Seq::from_sample).collect();
    let qm = quantize_model(&trained.graph, cfg.bits, &calibration, trained.qat.as_ref())?;
    out.metrics.quant_val_accuracy = Some(evaluate(&qm, &data.val)?.accuracy);
    out.metrics.quant_accuracy = Some(evaluate(&qm, &data.test)?.accuracy);
    let design = compile_with(&qm, &constraints.device, settings.ping_pong, settings.cycle)?;
    let sim = simulate(&design, &qm.quantize_input(&Seq::from_sample(&data.test[0])))?;
    let latency = latency_ms(sim.cycles, &constraints.device);
    out.metrics.cycles = Some(sim.cycles);
    out.metrics.latency_ms = Some(latency);
    if !check(&mut out, Gate::Latency)? {
        return Ok(out);
    }

    let report = estimate_resources(&design);
    out.metrics.resources = Some(report.clone());
    if !check(&mut out, Gate::Resource)? {
        return Ok(out);
    }

    if let Ok(p) = estimate_power(&report, &settings.power) {
        out.metrics.power_mw = Some(p);
        out.metrics.energy_mj = Some(energy_mj(latency, p));
    }
    if !check(&mut out, Gate::Hardware)? {
        return Ok(out);
    }
    if out.pruned.is_none() {
        out.stage_reached = Stage::Complete;
    }
    Ok(out)
}
