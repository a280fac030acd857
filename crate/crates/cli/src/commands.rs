use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vibeswipe::accel::reference::fixed;
use vibeswipe::accel::{
    calibrate_power, compile_with, emit_netlist, energy_mj, estimate_power, estimate_resources, latency_ms,
    reference_power_model, simulate, CycleParams, DeviceProfile, PowerModel, PowerSample, ResourceReport,
};
use vibeswipe::dataio::{load_wav_sessions, make_split, preprocess, synth_dataset, write_dataset, SplitData, SplitPlan, WaveformRecord};
use vibeswipe::error::ErrorKind;
use vibeswipe::nn::{build_model, ModelConfig, ModelGraph, Seq};
use vibeswipe::quant::{int_forward, quantize_model, QatState, QuantizedModel};
use vibeswipe::report::{
    confusion_csv, confusion_svg, generalization_csv, pareto_csv, pareto_svg, reference_constants_csv, selected_csv,
    GeneralizationCell, SelectedRow,
};
use vibeswipe::search::{run_study, write_study_log, ConstraintSet, SearchSpace, StudySettings};
use vibeswipe::trainer::{evaluate, train, write_log, Confusion, StopReason};
use vibeswipe::{Error, Result};

use crate::config::RunConfig;
use crate::manifest::Manifest;

/// A command failure, tagged with the step that produced it.
#[derive(Debug)]
pub struct Failure {
    pub kind: ErrorKind,
    pub message: String,
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Internal => 1,
            ErrorKind::Config => 2,
            ErrorKind::Data => 3,
            ErrorKind::Infeasible => 4,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, Failure>;

pub trait AtStage<T> {
    fn at(self, stage: &str) -> CliResult<T>;
}

impl<T> AtStage<T> for Result<T> {
    fn at(self, stage: &str) -> CliResult<T> {
        self.map_err(|e| Failure { kind: e.kind(), message: format!("{stage}: {e}") })
    }
}

/// Shared state of one invocation.
pub struct Ctx {
    pub cfg: RunConfig,
    pub out: PathBuf,
    outputs: Vec<String>,
}

impl Ctx {
    pub fn new(cfg: RunConfig, out: PathBuf) -> CliResult<Self> {
        cfg.validate().at("config")?;
        fs::create_dir_all(&out).map_err(Error::from).at("output directory")?;
        Ok(Ctx { cfg, out, outputs: Vec::new() })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, contents)?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text)
    }

    pub fn finish(self, command: &str) -> CliResult<()> {
        Manifest::new(command, &self.cfg, self.outputs).write(&self.out, &self.cfg).at("manifest")
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Ingest { path: path.into(), reason: e.to_string() })?;
    Ok(serde_json::from_str(&text)?)
}

/// Raw recordings: read from `data.dir` or generated.
pub fn load_records(cfg: &RunConfig) -> Result<Vec<WaveformRecord>> {
    match &cfg.data.dir {
        Some(dir) => {
            let records = load_wav_sessions(dir)?;
            if records.is_empty() {
                return Err(Error::Ingest { path: dir.clone(), reason: "no recordings found".into() });
            }
            Ok(records)
        }
        None => synth_dataset(&cfg.synth_spec()),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrepSummary {
    pub dataset: String,
    pub records: usize,
    pub raw_samples_per_record: usize,
    pub sample_len: usize,
    pub channels: usize,
    pub phases_per_record: usize,
    pub input_values: usize,
    /// Spectrogram input size of the reference 2D baseline over ours.
    pub input_reduction_vs_spectrogram: f64,
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

pub fn prepare(cfg: &RunConfig) -> Result<(SplitPlan, SplitData, PrepSummary)> {
    let records = load_records(cfg)?;
    let keys: Vec<_> = records.iter().map(|r| r.key().clone()).collect();
    let plan = make_split(&keys, cfg.data.method, &cfg.data.target, cfg.data.val_fraction, cfg.derived_seed("split"))?;
    let samples = preprocess(&records, &cfg.preprocess)?;
    let data = plan.apply(samples);
    if data.train.is_empty() || data.val.is_empty() || data.test.is_empty() {
        return Err(Error::Study(format!(
            "split leaves {} train, {} validation, {} test samples",
            data.train.len(),
            data.val.len(),
            data.test.len()
        )));
    }
    let sample_len = data.train[0].len();
    let channels = data.train[0].channels();
    let (fh, fw) = fixed::BASELINE_INPUT;
    let summary = PrepSummary {
        dataset: cfg.dataset_name(),
        records: records.len(),
        raw_samples_per_record: records[0].total_samples(),
        sample_len,
        channels,
        phases_per_record: cfg.preprocess.downsample_factor,
        input_values: sample_len * channels,
        input_reduction_vs_spectrogram: (fh * fw) as f64 / (sample_len * channels) as f64,
        train: data.train.len(),
        val: data.val.len(),
        test: data.test.len(),
    };
    Ok((plan, data, summary))
}

pub fn synth_data(ctx: &mut Ctx) -> CliResult<()> {
    let records = synth_dataset(&ctx.cfg.synth_spec()).at("synth-data")?;
    let dir = ctx.path("data");
    write_dataset(&dir, &records).at("synth-data")?;
    ctx.outputs.push("data/".into());
    log::info!("wrote {} recordings to {}", records.len(), dir.display());
    Ok(())
}

pub fn preprocess_cmd(ctx: &mut Ctx) -> CliResult<(SplitData, PrepSummary)> {
    let (plan, data, summary) = prepare(&ctx.cfg).at("preprocess")?;
    let plan_json = plan.to_json().at("preprocess")?;
    ctx.write("split.json", plan_json + "\n").at("preprocess")?;
    ctx.write_json("preprocess.json", &summary).at("preprocess")?;
    Ok((data, summary))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSummary {
    pub qat_bits: Option<u32>,
    pub best_epoch: usize,
    pub stopped_epoch: usize,
    pub stop_reason: StopReason,
    pub best_val_accuracy: f64,
    /// Test accuracy of the float graph, when one was trained.
    pub fp32_test_accuracy: Option<f64>,
}

pub fn train_cmd(ctx: &mut Ctx, data: &SplitData) -> CliResult<TrainSummary> {
    let cfg = &ctx.cfg.clone();
    let model_cfg = ModelConfig::new(cfg.model.arch, cfg.model.num_blocks).with_input_len(data.train[0].len());
    let seed = cfg.derived_seed("train");
    let spec = cfg.train_spec(seed);
    let trained = train(build_model(&model_cfg, seed).at("train")?, data, &spec).at("train")?;
    let mut fp32_test_accuracy = None;
    if spec.qat_bits.is_none() {
        fp32_test_accuracy = Some(evaluate(&trained.graph, &data.test).at("train")?.accuracy);
    } else if cfg.train.fp32_baseline {
        let float_spec = vibeswipe::trainer::TrainSpec { qat_bits: None, ..spec };
        let float = train(build_model(&model_cfg, seed).at("train")?, data, &float_spec).at("fp32 baseline")?;
        fp32_test_accuracy = Some(evaluate(&float.graph, &data.test).at("fp32 baseline")?.accuracy);
        ctx.write("model_fp32.json", float.graph.to_json().at("fp32 baseline")? + "\n").at("fp32 baseline")?;
    }
    let summary = TrainSummary {
        qat_bits: spec.qat_bits,
        best_epoch: trained.best_epoch,
        stopped_epoch: trained.stopped_epoch,
        stop_reason: trained.stop_reason,
        best_val_accuracy: trained.best_val_accuracy,
        fp32_test_accuracy,
    };
    ctx.write("model.json", trained.graph.to_json().at("train")? + "\n").at("train")?;
    if let Some(state) = &trained.qat {
        ctx.write_json("qat.json", state).at("train")?;
    }
    write_log(&trained.curves, &ctx.path("train_log.jsonl")).at("train")?;
    ctx.outputs.push("train_log.jsonl".into());
    ctx.write_json("training.json", &summary).at("train")?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuantSummary {
    pub bits: u32,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
}

pub fn quantize_cmd(ctx: &mut Ctx, data: &SplitData, model: &Path) -> CliResult<(QuantizedModel, QuantSummary)> {
    let Some(bits) = ctx.cfg.qat_bits() else {
        return Err(Error::Config("quantization needs train.bits in {4, 6, 8}".into())).at("quantize");
    };
    let graph = read_text(model).and_then(|t| ModelGraph::from_json(&t)).at("quantize")?;
    let qat_path = model.with_file_name("qat.json");
    let observers: Option<QatState> = if qat_path.exists() { Some(read_json(&qat_path).at("quantize")?) } else { None };
    let calibration: Vec<Seq> = data.train.iter().take(8).map(Seq::from_sample).collect();
    let qm = quantize_model(&graph, bits, &calibration, observers.as_ref()).at("quantize")?;
    let summary = QuantSummary {
        bits,
        val_accuracy: evaluate(&qm, &data.val).at("quantize")?.accuracy,
        test_accuracy: evaluate(&qm, &data.test).at("quantize")?.accuracy,
    };
    ctx.write("quantized.json", qm.to_json().at("quantize")? + "\n").at("quantize")?;
    ctx.write_json("quantization.json", &summary).at("quantize")?;
    Ok((qm, summary))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Ingest { path: path.into(), reason: e.to_string() })
}

pub fn load_quantized(path: &Path) -> CliResult<QuantizedModel> {
    read_text(path).and_then(|t| QuantizedModel::from_json(&t)).at("load quantized model")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InferSummary {
    pub samples: usize,
    pub accuracy: f64,
    pub confusion: Confusion,
}

pub fn infer_cmd(ctx: &mut Ctx, data: &SplitData, qm: &QuantizedModel) -> CliResult<InferSummary> {
    let mut preds = String::from("index,subject,session,label,recording,phase,truth,predicted\n");
    let mut confusion = Confusion::new(qm.n_classes());
    for (i, s) in data.test.iter().enumerate() {
        let p = vibeswipe::quant::int_predict(qm, &qm.quantize_input(&Seq::from_sample(s))).at("infer")?;
        confusion.add(s.label, p).at("infer")?;
        let k = &s.key;
        let _ = writeln!(preds, "{i},{},{},{},{},{},{},{p}", k.subject, k.session, k.label, k.recording, s.phase, s.label);
    }
    let summary = InferSummary { samples: data.test.len(), accuracy: confusion.accuracy(), confusion };
    ctx.write("predictions.csv", preds).at("infer")?;
    ctx.write("confusion.csv", confusion_csv(&summary.confusion)).at("infer")?;
    let title = format!("{} {}", ctx.cfg.data.method.name().to_uppercase(), ctx.cfg.data.target);
    ctx.write("confusion.svg", confusion_svg(&summary.confusion, &title)).at("infer")?;
    ctx.write_json("inference.json", &summary).at("infer")?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleCheck {
    pub index: usize,
    pub simulated: Vec<i32>,
    pub interpreter: Vec<i32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimSummary {
    pub device: String,
    pub ping_pong: bool,
    pub cycles: u64,
    pub latency_ms: f64,
    pub resources: ResourceReport,
    pub power_model: PowerModel,
    pub power_mw: f64,
    pub energy_mj: f64,
    pub checks: Vec<SampleCheck>,
    pub matches_interpreter: bool,
}

fn power_model(cfg: &RunConfig) -> Result<PowerModel> {
    let Some(path) = &cfg.accel.power_csv else {
        return Ok(reference_power_model());
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Ingest { path: path.clone(), reason: e.to_string() })?;
    let rows = reader
        .deserialize::<PowerSample>()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| Error::Parse { line: i + 2, reason: e.to_string() }))
        .collect::<Result<Vec<_>>>()?;
    let cal = calibrate_power(&rows)?;
    log::info!("power model calibrated on {} rows, max relative residual {:.3}", rows.len(), cal.max_rel_residual);
    Ok(cal.model)
}

pub fn simulate_cmd(ctx: &mut Ctx, data: &SplitData, qm: &QuantizedModel) -> CliResult<SimSummary> {
    let cfg = &ctx.cfg.clone();
    let device = DeviceProfile::by_name(&cfg.accel.device).at("simulate")?;
    let design = compile_with(qm, &device, cfg.accel.ping_pong, CycleParams::default()).at("compile")?;
    let netlist = emit_netlist(&design);
    let mut checks = Vec::new();
    let mut cycles = 0;
    for (i, s) in data.test.iter().take(cfg.accel.sim_samples.max(1)).enumerate() {
        let x = qm.quantize_input(&Seq::from_sample(s));
        let sim = simulate(&design, &x).at("simulate")?;
        cycles = sim.cycles;
        let interpreter = int_forward(qm, &x).at("simulate")?;
        checks.push(SampleCheck { index: i, simulated: sim.logits, interpreter });
    }
    let resources = estimate_resources(&design);
    let model = power_model(cfg).at("power model")?;
    let power = estimate_power(&resources, &model).at("power model")?;
    let latency = latency_ms(cycles, &device);
    let matches = checks.iter().all(|c| c.simulated == c.interpreter);
    let summary = SimSummary {
        device: device.name.clone(),
        ping_pong: cfg.accel.ping_pong,
        cycles,
        latency_ms: latency,
        resources,
        power_model: model,
        power_mw: power,
        energy_mj: energy_mj(latency, power),
        checks,
        matches_interpreter: matches,
    };
    ctx.write("netlist.txt", netlist).at("simulate")?;
    ctx.write_json("simulation.json", &summary).at("simulate")?;
    let r = &summary.resources;
    let csv = format!(
        "device,cycles,latency_ms,luts,luts_pct,bram18,brams_pct,dsps,dsps_pct,feasible,power_mw,energy_mj\n{},{},{:.3},{},{:.2},{},{:.2},{},{:.2},{},{:.1},{:.4}\n",
        summary.device, cycles, latency, r.luts, r.lut_pct, r.bram18, r.bram_pct, r.dsps, r.dsp_pct, r.feasible, power, summary.energy_mj
    );
    ctx.write("hardware.csv", csv).at("simulate")?;
    if !matches {
        return Err(Failure { kind: ErrorKind::Internal, message: "simulate: accelerator output differs from the integer interpreter".into() });
    }
    if !summary.resources.feasible {
        log::warn!("design exceeds {}: {:?}", device.name, summary.resources);
    }
    Ok(summary)
}

/// What `report` reads from each run directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub arch: vibeswipe::nn::Arch,
    pub method: vibeswipe::dataio::SplitMethod,
    pub target: String,
    pub dataset: String,
    pub test_accuracy: Option<f64>,
    pub row: Option<SelectedRow>,
    pub confusion: Option<Confusion>,
}

pub fn search_cmd(ctx: &mut Ctx, data: &SplitData) -> CliResult<RunSummary> {
    let cfg = &ctx.cfg.clone();
    let mut constraints = ConstraintSet::new(cfg.data.method);
    constraints.device = DeviceProfile::by_name(&cfg.accel.device).at("search")?;
    let settings = StudySettings {
        n_trials: cfg.search.n_trials,
        population: cfg.search.population,
        seed: cfg.seed,
        jobs: cfg.search.jobs,
        epochs_max: cfg.search.epochs_max,
        patience: cfg.search.patience,
        ping_pong: cfg.accel.ping_pong,
        fp32_baseline: cfg.search.fp32_baseline,
        cycle: CycleParams::default(),
        power: power_model(cfg).at("power model")?,
    };
    let study = run_study(SearchSpace::new(cfg.model.arch), constraints, data, settings).at("search")?;
    write_study_log(&study.trials, &ctx.path("study.jsonl")).at("search")?;
    ctx.outputs.push("study.jsonl".into());
    let front = study.front();
    ctx.write("pareto.csv", pareto_csv(&front)).at("search")?;
    let title = format!("{} {} {}", cfg.model.arch.display_name(), cfg.data.method.name().to_uppercase(), cfg.data.target);
    ctx.write("pareto.svg", pareto_svg(&study.trials, &front, &title)).at("search")?;
    let best = front.best();
    let row = best.and_then(|t| SelectedRow::from_trial(cfg.data.method, t));
    ctx.write("selected.csv", selected_csv(row.as_slice())).at("search")?;
    if let Some(w) = &front.warning {
        log::warn!("{w}");
    }
    let summary = RunSummary {
        arch: cfg.model.arch,
        method: cfg.data.method,
        target: cfg.data.target.clone(),
        dataset: cfg.dataset_name(),
        test_accuracy: best.and_then(|t| t.metrics.quant_accuracy),
        row,
        confusion: None,
    };
    ctx.write_json("summary.json", &summary).at("search")?;
    Ok(summary)
}

/// preprocess, QAT training, quantization, inference, compilation and
/// simulation, then a report over this run.
pub fn pipeline_cmd(ctx: &mut Ctx) -> CliResult<RunSummary> {
    if ctx.cfg.qat_bits().is_none() {
        return Err(Error::Config("the pipeline needs train.bits in {4, 6, 8}".into())).at("config");
    }
    let (data, _) = preprocess_cmd(ctx)?;
    let trained = train_cmd(ctx, &data)?;
    let (qm, quant) = quantize_cmd(ctx, &data, &ctx.path("model.json"))?;
    let inferred = infer_cmd(ctx, &data, &qm)?;
    let sim = simulate_cmd(ctx, &data, &qm)?;
    let cfg = &ctx.cfg.clone();
    let row = SelectedRow {
        method: cfg.data.method,
        arch: cfg.model.arch,
        num_blocks: cfg.model.num_blocks,
        bits: quant.bits,
        bs: cfg.train.bs,
        lr: cfg.train.lr,
        fp32_accuracy: trained.fp32_test_accuracy,
        quant_accuracy: inferred.accuracy,
        lut_pct: sim.resources.lut_pct,
        bram_pct: sim.resources.bram_pct,
        dsp_pct: sim.resources.dsp_pct,
        latency_ms: sim.latency_ms,
        power_mw: sim.power_mw,
        energy_mj: sim.energy_mj,
    };
    let summary = RunSummary {
        arch: cfg.model.arch,
        method: cfg.data.method,
        target: cfg.data.target.clone(),
        dataset: cfg.dataset_name(),
        test_accuracy: Some(inferred.accuracy),
        row: Some(row),
        confusion: Some(inferred.confusion),
    };
    ctx.write_json("summary.json", &summary).at("pipeline")?;
    let out = ctx.out.clone();
    report_into(ctx, &[out], "report")?;
    Ok(summary)
}

pub fn report_cmd(ctx: &mut Ctx, runs: &[PathBuf]) -> CliResult<()> {
    report_into(ctx, runs, "")
}

fn report_into(ctx: &mut Ctx, runs: &[PathBuf], sub: &str) -> CliResult<()> {
    let missing: Vec<String> = runs.iter().map(|r| r.join("summary.json")).filter(|p| !p.is_file()).map(|p| p.display().to_string()).collect();
    if runs.is_empty() || !missing.is_empty() {
        let message = if runs.is_empty() { "no run directories given".to_string() } else { format!("missing artifacts: {}", missing.join(", ")) };
        return Err(Failure { kind: ErrorKind::Data, message: format!("report: {message}") });
    }
    let summaries: Vec<RunSummary> = runs.iter().map(|r| read_json(&r.join("summary.json"))).collect::<Result<_>>().at("report")?;
    let name = |f: &str| if sub.is_empty() { f.to_string() } else { format!("{sub}/{f}") };

    let rows: Vec<SelectedRow> = summaries.iter().filter_map(|s| s.row.clone()).collect();
    ctx.write(&name("selected.csv"), selected_csv(&rows)).at("report")?;
    let cells: Vec<GeneralizationCell> = summaries
        .iter()
        .filter_map(|s| {
            Some(GeneralizationCell { arch: s.arch, method: s.method, target: s.target.clone(), dataset: s.dataset.clone(), accuracy: s.test_accuracy? })
        })
        .collect();
    let distinct: BTreeSet<(&str, &str)> = cells.iter().map(|c| (c.target.as_str(), c.dataset.as_str())).collect();
    if distinct.len() > 1 {
        ctx.write(&name("generalization.csv"), generalization_csv(&cells)).at("report")?;
    }
    for s in &summaries {
        if let Some(c) = &s.confusion {
            let stem = format!("confusion_{}_{}_{}_{}", s.arch.name(), s.method.name(), s.target, s.dataset);
            let title = format!("{} {} {}", s.arch.display_name(), s.method.name().to_uppercase(), s.target);
            ctx.write(&name(&format!("{stem}.csv")), confusion_csv(c)).at("report")?;
            ctx.write(&name(&format!("{stem}.svg")), confusion_svg(c, &title)).at("report")?;
        }
    }
    ctx.write(&name("reference_constants.csv"), reference_constants_csv()).at("report")?;
    ctx.write(&name("reference_selected.csv"), selected_csv(&SelectedRow::reference())).at("report")?;
    Ok(())
}
