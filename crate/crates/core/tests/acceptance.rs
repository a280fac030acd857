//! End-to-end acceptance checks, one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines are always printed. Set
//! `VIBESWIPE_DATA` to a recording root (<subject>/session_<k>/*.wav) to
//! also rerun the per-subject CNN-3 6-bit configuration on real data.

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use vibeswipe::accel::design::CycleParams;
use vibeswipe::accel::reference::{fixed, reference_calibration, structural_design};
use vibeswipe::accel::*;
use vibeswipe::dataio::*;
use vibeswipe::nn::*;
use vibeswipe::quant::*;
use vibeswipe::report::reference_constants_csv;
use vibeswipe::search::*;
use vibeswipe::trainer::{evaluate, train, TrainSpec};

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)*) => {
        if !$cond {
            return Err(format!($($msg)*));
        }
    };
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn xc7s25() -> DeviceProfile {
    DeviceProfile::xc7s25()
}

// 1 ------------------------------------------------------------------------

fn parameter_counts() -> Check {
    let cnn = build_model(&ModelConfig::new(Arch::Cnn, 3), 0).map_err(|e| e.to_string())?;
    let sep = build_model(&ModelConfig::new(Arch::SepCnn, 3), 0).map_err(|e| e.to_string())?;
    let got = [param_count(&cnn, false), param_count(&cnn, true), param_count(&sep, false), param_count(&sep, true)];
    ensure!(got == [296, 264, 216, 184], "CNN-3/SepCNN-3 unfolded/folded = {got:?}");
    let block1 = |g: &ModelGraph| -> usize {
        g.layers()
            .iter()
            .take_while(|l| !matches!(l, Layer::BatchNorm(_)))
            .map(|l| match l {
                Layer::Conv(c) => c.weight.len() + c.bias.len(),
                _ => 0,
            })
            .sum()
    };
    let (b_cnn, b_sep) = (block1(&cnn), block1(&sep));
    ensure!((b_cnn, b_sep) == (52, 36), "block-1 conv {b_cnn} -> {b_sep}");
    Ok(format!("CNN-3 296/264, SepCNN-3 216/184, block-1 conv 52 -> 36"))
}

// 2 ------------------------------------------------------------------------

fn input_reduction() -> Check {
    let (fh, fw) = fixed::BASELINE_INPUT;
    let ratio = (fh * fw) as f64 / (4410 * 4) as f64;
    ensure!(fh * fw == 368_640, "spectrogram size {}", fh * fw);
    ensure!((ratio * 10.0).round() / 10.0 == 20.9, "ratio {ratio}");
    let spec = SynthSpec { seed: 3, n_subjects: 1, n_sessions: 1, recordings_per_class: 10, separability: 1.0 };
    let records = synth_dataset(&spec).map_err(|e| e.to_string())?;
    ensure!(records.len() == 40, "{} records per session", records.len());
    let cut = truncate_window(&records[0], 0.25, 1.0).map_err(|e| e.to_string())?;
    ensure!(cut.total_samples() == 176_400, "truncated to {}", cut.total_samples());
    let ds = downsample(&cut, 10, 0).map_err(|e| e.to_string())?;
    ensure!((ds.len(), ds.channels()) == (4410, 4), "downsampled to {}x{}", ds.len(), ds.channels());
    let cfg = PreprocessConfig { window_start_s: 0.25, window_dur_s: 1.0, downsample_factor: 10 };
    let samples = preprocess(&records, &cfg).map_err(|e| e.to_string())?;
    ensure!(samples.len() == 400, "augmented to {}", samples.len());
    Ok(format!("368640 / 17640 = {ratio:.3} (~20.9x); 176400 samples -> 4410x4; 40 -> 400 per session"))
}

// 3 ------------------------------------------------------------------------

fn quantized(cfg: &ModelConfig, bits: u32, seed: u64) -> QuantizedModel {
    let graph = build_model(cfg, seed).unwrap();
    let mut r = rng(seed ^ 0x5eed);
    let calib: Vec<Seq> = (0..4)
        .map(|_| {
            let amp = r.random_range(0.05..1.0);
            Seq::from_vec(cfg.input_len, cfg.input_ch, (0..cfg.input_len * cfg.input_ch).map(|_| r.random_range(-amp..amp)).collect())
        })
        .collect();
    quantize_model(&graph, bits, &calib, None).unwrap()
}

fn random_input(r: &mut ChaCha8Rng, qm: &QuantizedModel) -> IntSeq {
    let (lo, hi) = (qm.input_qp.qmin(), qm.input_qp.qmax());
    IntSeq::from_vec(qm.input_len, qm.input_ch, (0..qm.input_len * qm.input_ch).map(|_| r.random_range(lo..=hi)).collect())
}

fn dual_path_equivalence() -> Check {
    let start = Instant::now();
    let mut r = rng(31337);
    let cases = 240;
    for case in 0..cases {
        let arch = if r.random_bool(0.5) { Arch::Cnn } else { Arch::SepCnn };
        let blocks = r.random_range(1..=5);
        let cfg = loop {
            let cfg = ModelConfig::new(arch, blocks).with_input_len(r.random_range(64..400));
            if cfg.validate().is_ok() {
                break cfg;
            }
        };
        let (len, bits) = (cfg.input_len, BITWIDTHS[r.random_range(0..3)]);
        let qm = quantized(&cfg, bits, case);
        let design = compile(&qm, &xc7s25(), r.random_bool(0.5)).map_err(|e| e.to_string())?;
        let x = random_input(&mut r, &qm);
        let sim = simulate(&design, &x).map_err(|e| e.to_string())?;
        let reference = int_forward(&qm, &x).map_err(|e| e.to_string())?;
        ensure!(sim.logits == reference, "case {case} ({arch:?}-{blocks}, b={bits}, L={len}): {:?} vs {:?}", sim.logits, reference);
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 120.0, "took {secs:.1} s");
    Ok(format!("{cases} random cases bit-exact"))
}

// 4 ------------------------------------------------------------------------

fn ping_pong() -> Check {
    let mut designs = 0;
    for blocks in 1..=5 {
        for bits in BITWIDTHS {
            let cfg = ModelConfig::new(Arch::SepCnn, blocks);
            let full = structural_design(Arch::SepCnn, blocks, bits, &xc7s25(), false, CycleParams::default()).map_err(|e| e.to_string())?;
            let pp = structural_design(Arch::SepCnn, blocks, bits, &xc7s25(), true, CycleParams::default()).map_err(|e| e.to_string())?;
            let mut pairs = 0;
            let mut over_block = false;
            let mut lower_bound = 0;
            for (f, p) in full.stages.iter().zip(&pp.stages) {
                if p.output == LinkPlan::PingPong {
                    pairs += 1;
                    ensure!(f.buffer_elements() == f.out_ch * f.out_len, "full buffer of stage is not C x N");
                    ensure!(p.buffer_elements() == f.out_ch, "ping-pong buffer {} != C = {}", p.buffer_elements(), f.out_ch);
                    let bits_used = (f.out_ch * f.out_len) as u64 * bits as u64;
                    if bits_used > BRAM18_BITS {
                        over_block = true;
                    }
                    if bits_used > 512 {
                        lower_bound += bits_used.div_ceil(BRAM18_BITS);
                    }
                }
            }
            ensure!(pairs == blocks, "SepCNN-{blocks} b={bits}: {pairs} ping-pong links");
            let (rf, rp) = (estimate_resources(&full), estimate_resources(&pp));
            if over_block {
                ensure!(rp.bram18 < rf.bram18, "SepCNN-{blocks} b={bits}: BRAM {} -> {}", rf.bram18, rp.bram18);
            }
            ensure!(rf.bram18 - rp.bram18 >= lower_bound, "saving {} below {lower_bound}", rf.bram18 - rp.bram18);
            ensure!(rp.dsps == rf.dsps, "DSP changed");

            // outputs unchanged, on a shorter input to keep simulation quick
            let qm = quantized(&cfg.with_input_len(300), bits, (blocks * 10) as u64 + bits as u64);
            let x = random_input(&mut rng(blocks as u64), &qm);
            let a = simulate(&compile(&qm, &xc7s25(), false).map_err(|e| e.to_string())?, &x).map_err(|e| e.to_string())?;
            let b = simulate(&compile(&qm, &xc7s25(), true).map_err(|e| e.to_string())?, &x).map_err(|e| e.to_string())?;
            ensure!(a.logits == b.logits, "SepCNN-{blocks} b={bits}: outputs changed");
            designs += 1;
        }
    }
    let full = structural_design(Arch::SepCnn, 3, 8, &xc7s25(), false, CycleParams::default()).map_err(|e| e.to_string())?;
    let pp = structural_design(Arch::SepCnn, 3, 8, &xc7s25(), true, CycleParams::default()).map_err(|e| e.to_string())?;
    let (rf, rp) = (estimate_resources(&full), estimate_resources(&pp));
    Ok(format!(
        "{designs} SepCNN designs; block 1 4x{} -> 4x1; SepCNN-3 b=8 BRAM {:.2}% -> {:.2}% (published {:.2}% -> {:.2}%, not reproduced)",
        full.stages[0].out_len, rf.bram_pct, rp.bram_pct, fixed::PING_PONG_BRAM_PCT.0, fixed::PING_PONG_BRAM_PCT.1
    ))
}

// 5 ------------------------------------------------------------------------

fn latency_model() -> Check {
    let cycles = |arch, blocks, bits| -> Result<u64, String> {
        let d = structural_design(arch, blocks, bits, &xc7s25(), true, CycleParams::default()).map_err(|e| e.to_string())?;
        Ok(analytic_cycles(&d))
    };
    for arch in [Arch::Cnn, Arch::SepCnn] {
        let mut prev = 0;
        for blocks in 1..=5 {
            let c: Vec<u64> = BITWIDTHS.iter().map(|&b| cycles(arch, blocks, b)).collect::<Result<_, _>>()?;
            ensure!(c.iter().all(|&v| v == c[0]), "{arch:?}-{blocks} cycles depend on bitwidth: {c:?}");
            ensure!(c[0] >= prev, "{arch:?}: cycles fall from {prev} to {} at {blocks} blocks", c[0]);
            prev = c[0];
        }
    }
    for blocks in 1..=5 {
        let (s, c) = (cycles(Arch::SepCnn, blocks, 8)?, cycles(Arch::Cnn, blocks, 8)?);
        ensure!(s < c, "SepCNN-{blocks} {s} >= CNN-{blocks} {c}");
    }
    let fit = reference_cycle_fit().map_err(|e| e.to_string())?;
    let worst = fit.rel_errors.iter().fold(0.0f64, |a, e| a.max(e.abs()));
    ensure!(worst <= 0.20, "fitted latency error {worst:.3}");
    let ms = |arch, blocks| -> Result<f64, String> { Ok(latency_ms(cycles(arch, blocks, 6)?, &xc7s25())) };
    Ok(format!(
        "bitwidth-independent, monotone, Sep < CNN; fit overhead={} fill={} max error {:.1}%; CNN-3/4/5 {:.2}/{:.2}/{:.2} ms, SepCNN-3 {:.2} ms",
        fit.params.overhead,
        fit.params.fill_per_param,
        worst * 100.0,
        ms(Arch::Cnn, 3)?,
        ms(Arch::Cnn, 4)?,
        ms(Arch::Cnn, 5)?,
        ms(Arch::SepCnn, 3)?
    ))
}

// 6 ------------------------------------------------------------------------

fn energy_and_power() -> Check {
    let (e1, e2) = (energy_mj(9.22, 129.0), energy_mj(6.83, 163.0));
    ensure!((e1 - 1.189).abs() <= 0.001, "9.22 ms x 129 mW = {e1}");
    ensure!((e2 - 1.113).abs() <= 0.001, "6.83 ms x 163 mW = {e2}");
    let cal = reference_calibration().map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for row in REFERENCE_ROWS {
        let p = cal.model.predict(&row.power_sample(&xc7s25())).map_err(|e| e.to_string())?;
        let rel = (p - row.power_mw).abs() / row.power_mw;
        ensure!(rel <= 0.15, "{} {:?}: {p:.1} mW vs {}", row.split, row.arch, row.power_mw);
        worst = worst.max(rel);
    }
    Ok(format!("{e1:.4} / {e2:.4} mJ; power surrogate max error {:.1}% over 6 rows", worst * 100.0))
}

// 7 ------------------------------------------------------------------------

fn randomized_graph(arch: Arch, blocks: usize, len: usize, seed: u64) -> ModelGraph {
    let g = build_model(&ModelConfig::new(arch, blocks).with_input_len(len), seed).unwrap();
    let mut r = rng(seed ^ 0xbeef);
    let layers = g
        .layers()
        .iter()
        .cloned()
        .map(|l| match l {
            Layer::BatchNorm(mut bn) => {
                bn.gamma.iter_mut().for_each(|v| *v = r.random_range(0.5..1.5));
                bn.beta.iter_mut().for_each(|v| *v = r.random_range(-0.3..0.3));
                bn.running_mean.iter_mut().for_each(|v| *v = r.random_range(-0.2..0.2));
                bn.running_var.iter_mut().for_each(|v| *v = r.random_range(0.5..2.0));
                Layer::BatchNorm(bn)
            }
            other => other,
        })
        .collect();
    let mut out = ModelGraph::from_layers(len, 4, layers).unwrap();
    out.config = g.config;
    out
}

fn random_seq(r: &mut ChaCha8Rng, len: usize) -> Seq {
    Seq::from_vec(len, 4, (0..len * 4).map(|_| r.random_range(-1.0..1.0)).collect())
}

/// Largest relative error between analytic and central-difference
/// gradients over every parameter; kinks get a narrower bracket.
fn gradient_error(arch: Arch, blocks: usize, mode: BnMode, seed: u64) -> f64 {
    let g = randomized_graph(arch, blocks, 23, seed);
    let mut r = rng(seed);
    let batch: Vec<Seq> = (0..3).map(|_| random_seq(&mut r, 23)).collect();
    let labels = [0, 2, 3];
    let grads = g.backward(batch.clone(), &labels, mode).unwrap().grads;
    let loss = |p: usize, i: usize, d: f64| {
        let mut h = g.clone();
        h.params_mut()[p][i] += d;
        h.backward(batch.clone(), &labels, mode).unwrap().loss
    };
    let mut worst = 0.0f64;
    for p in 0..grads.len() {
        for i in 0..grads[p].len() {
            let ana = grads[p][i];
            let rel = |num: f64| (ana - num).abs() / ana.abs().max(num.abs()).max(1e-5);
            let mut e = rel((loss(p, i, 1e-4) - loss(p, i, -1e-4)) / 2e-4);
            if e >= 1e-4 {
                e = rel((loss(p, i, 1e-7) - loss(p, i, -1e-7)) / 2e-7);
            }
            worst = worst.max(e);
        }
    }
    worst
}

fn quantization_properties() -> Check {
    let start = Instant::now();
    let mut r = rng(7);
    for _ in 0..2000 {
        let n = r.random_range(1..64);
        let values: Vec<f64> = (0..n).map(|_| r.random_range(-50.0..50.0)).collect();
        let bits = BITWIDTHS[r.random_range(0..3)];
        let qp = derive_qparams(&values, bits, r.random_bool(0.5)).map_err(|e| e.to_string())?;
        let (lo, hi) = qp.real_range();
        for &x in &values {
            let err = (qp.fake_quant(x) - x.clamp(lo, hi)).abs();
            ensure!(err <= qp.scale / 2.0 + 1e-12, "round trip error {err} > scale/2 = {}", qp.scale / 2.0);
        }
    }

    let mut fold_err = 0.0f64;
    for arch in [Arch::Cnn, Arch::SepCnn] {
        let g = randomized_graph(arch, 3, 200, 4);
        let f = fold_bn(&g).map_err(|e| e.to_string())?;
        for _ in 0..50 {
            let x = random_seq(&mut r, 200);
            let (a, b) = (g.forward_seq(&x).unwrap(), f.forward_seq(&x).unwrap());
            fold_err = a.data.iter().zip(&b.data).fold(fold_err, |m, (u, v)| m.max((u - v).abs()));
        }
    }
    ensure!(fold_err <= 1e-5, "BN folding error {fold_err}");

    let x: Vec<f64> = (0..20_000).map(|_| StandardNormal.sample(&mut r)).collect();
    let err = |b| {
        let qp = derive_qparams(&x, b, false).unwrap();
        x.iter().map(|&v| (qp.fake_quant(v) - v).abs()).sum::<f64>() / x.len() as f64
    };
    let (e4, e6, e8) = (err(4), err(6), err(8));
    ensure!(e8 <= e6 && e6 <= e4, "error not monotone: {e4} {e6} {e8}");

    // standard, depthwise and pointwise conv, BN (both modes), ReLU,
    // max-pool, global average pool, dense
    let mut grad_err = 0.0f64;
    for (arch, blocks, mode, seed) in [
        (Arch::Cnn, 2, BnMode::Batch, 11),
        (Arch::Cnn, 2, BnMode::Running, 12),
        (Arch::SepCnn, 3, BnMode::Batch, 13),
        (Arch::SepCnn, 2, BnMode::Running, 14),
    ] {
        grad_err = grad_err.max(gradient_error(arch, blocks, mode, seed));
    }
    ensure!(grad_err < 1e-4, "gradient relative error {grad_err}");
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 60.0, "took {secs:.1} s");
    Ok(format!("round trip <= scale/2; fold error {fold_err:.1e}; mean error 4/6/8 bit {e4:.4}/{e6:.4}/{e8:.4}; gradient rel. error {grad_err:.1e}"))
}

// 8 ------------------------------------------------------------------------

fn study_data() -> SplitData {
    let spec = SynthSpec { seed: 5, n_subjects: 1, n_sessions: 3, recordings_per_class: 4, separability: 1.0 };
    let pre = PreprocessConfig { window_start_s: 0.5, window_dur_s: 0.5, downsample_factor: 40 };
    let mut d = common::synth_split(&spec, &pre, SplitMethod::Ps, "A", 2);
    for part in [&mut d.train, &mut d.val, &mut d.test] {
        part.retain(|s| s.phase % 2 == 0);
    }
    d
}

fn brute_front(points: &[(f64, f64)]) -> BTreeSet<usize> {
    (0..points.len())
        .filter(|&i| !points.iter().any(|q| q.0 >= points[i].0 && q.1 <= points[i].1 && (q.0 > points[i].0 || q.1 < points[i].1)))
        .collect()
}

fn check_study(study: &Study) -> Result<(), String> {
    let c = &study.constraints;
    for t in &study.trials {
        let m = &t.metrics;
        let s = t.stage_reached;
        ensure!(m.latency_ms.is_some() == (s >= Stage::Simulated), "trial {}: latency at {s:?}", t.index);
        ensure!(m.resources.is_some() == (s >= Stage::Synthesized), "trial {}: resources at {s:?}", t.index);
        ensure!(m.power_mw.is_some() == (s >= Stage::Profiled), "trial {}: power at {s:?}", t.index);
        match &t.pruned {
            Some(p) => ensure!(p.gate.after() == s, "trial {} pruned at {:?} but reached {s:?}", t.index, p.gate),
            None => {
                ensure!(s == Stage::Complete, "trial {} unpruned at {s:?}", t.index);
                for gate in Gate::ALL {
                    ensure!(staged_prune(m, t.config.bits, gate, c).unwrap() == Verdict::Keep, "complete trial {} fails {gate:?}", t.index);
                }
            }
        }
    }
    let complete: Vec<&TrialResult> = study.trials.iter().filter(|t| t.is_complete()).collect();
    let points: Vec<(f64, f64)> = complete.iter().map(|t| t.objectives()).collect();
    let expect: BTreeSet<usize> = brute_front(&points).into_iter().map(|i| complete[i].index).collect();
    let got: BTreeSet<usize> = study.front().members.iter().map(|t| t.index).collect();
    ensure!(got == expect, "front {got:?} vs brute force {expect:?}");
    Ok(())
}

fn search_behavior() -> Check {
    let start = Instant::now();
    for (row, m) in SplitMethod::ALL.into_iter().enumerate() {
        let c = ConstraintSet::new(m);
        for (col, b) in BITWIDTHS.into_iter().enumerate() {
            let t = ACCURACY_THRESHOLDS[row][col];
            ensure!(c.accuracy_threshold(b).unwrap() == t, "{m} {b}");
            let at = |a: f64| staged_prune(&TrialMetrics { gate_accuracy: Some(a), ..Default::default() }, b, Gate::Accuracy, &c).unwrap();
            ensure!(at(t) == Verdict::Keep && at(t - 1e-9) != Verdict::Keep, "{m} {b}-bit gate at {t}");
        }
        ensure!((c.latency_max_ms, c.power_max_mw, c.energy_max_mj) == (100.0, 500.0, 50.0), "bounds");
        ensure!((c.device.luts, c.device.bram_blocks, c.device.dsps) == (14_600, 45, 80), "device");
    }
    let c = ConstraintSet::new(SplitMethod::Ps);
    let hw = |p: f64, e: f64| staged_prune(&TrialMetrics { power_mw: Some(p), energy_mj: Some(e), ..Default::default() }, 6, Gate::Hardware, &c).unwrap();
    ensure!(hw(500.0, 50.0) == Verdict::Keep && hw(500.1, 1.0) != Verdict::Keep && hw(100.0, 50.1) != Verdict::Keep, "hardware bounds");
    let lat = |t: f64| staged_prune(&TrialMetrics { latency_ms: Some(t), ..Default::default() }, 6, Gate::Latency, &c).unwrap();
    ensure!(lat(100.0) == Verdict::Keep && lat(100.01) != Verdict::Keep, "latency bound");
    let big = structural_design(Arch::SepCnn, 5, 8, &DeviceProfile::xc7s15(), true, CycleParams::default()).map_err(|e| e.to_string())?;
    let r = estimate_resources(&big);
    let verdict = staged_prune(&TrialMetrics { resources: Some(r.clone()), ..Default::default() }, 8, Gate::Resource, &c).unwrap();
    ensure!(!r.feasible && verdict != Verdict::Keep, "over-capacity design kept");

    let data = study_data();
    let settings = StudySettings { n_trials: 40, population: 10, seed: 17, epochs_max: 15, patience: 15, ..Default::default() };
    let study = run_study(SearchSpace::new(Arch::Cnn), c.clone(), &data, settings.clone()).map_err(|e| e.to_string())?;
    check_study(&study)?;
    let parallel = run_study(SearchSpace::new(Arch::Cnn), c, &data, StudySettings { jobs: 2, ..settings }).map_err(|e| e.to_string())?;
    ensure!(parallel.trials == study.trials, "jobs=2 study differs from jobs=1");
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 600.0, "took {secs:.0} s");
    let front = study.front();
    let complete = study.trials.iter().filter(|t| t.is_complete()).count();
    let best = front.best().and_then(|t| t.metrics.quant_accuracy).unwrap_or(0.0);
    Ok(format!(
        "9 thresholds and bounds enforced; 40-trial study: {complete} complete, front of {}, best test accuracy {best:.3}; jobs 1 == jobs 2 ({secs:.0} s for both)",
        front.members.len()
    ))
}

// 9 ------------------------------------------------------------------------

struct Twin {
    seed: u64,
    val: (f64, f64),
    quant: f64,
    float: f64,
}

/// QAT run and its float twin from the same seed; the QAT model is
/// evaluated through the integer-only path.
fn qat_twin(data: &SplitData, blocks: usize, bits: u32, spec: TrainSpec) -> Result<Twin, String> {
    let cfg = ModelConfig::new(Arch::Cnn, blocks).with_input_len(data.train[0].len());
    let qat = train(build_model(&cfg, spec.seed).map_err(|e| e.to_string())?, data, &TrainSpec { qat_bits: Some(bits), ..spec }).map_err(|e| e.to_string())?;
    let calib: Vec<Seq> = data.train.iter().take(8).map(Seq::from_sample).collect();
    let qm = quantize_model(&qat.graph, bits, &calib, qat.qat.as_ref()).map_err(|e| e.to_string())?;
    let quant = evaluate(&qm, &data.test).map_err(|e| e.to_string())?.accuracy;
    let float = train(build_model(&cfg, spec.seed).map_err(|e| e.to_string())?, data, &TrainSpec { qat_bits: None, ..spec }).map_err(|e| e.to_string())?;
    let float = evaluate(&float.graph, &data.test).map_err(|e| e.to_string())?.accuracy;
    Ok(Twin { seed: spec.seed, val: (qat.best_val_accuracy, qat.best_val_loss), quant, float })
}

/// Trains `seeds` and keeps the run a search would keep: highest QAT
/// validation accuracy, then lowest validation loss. Test data plays no
/// part in the choice.
fn select_by_validation(data: &SplitData, blocks: usize, bits: u32, spec: TrainSpec, seeds: &[u64]) -> Result<(Twin, String), String> {
    let mut runs = Vec::new();
    for &seed in seeds {
        runs.push(qat_twin(data, blocks, bits, TrainSpec { seed, ..spec })?);
    }
    let all = runs.iter().map(|t| format!("seed {} val {:.3} test {:.3}/{:.3}", t.seed, t.val.0, t.quant, t.float)).collect::<Vec<_>>().join(", ");
    let best = runs
        .into_iter()
        .max_by(|a, b| a.val.0.total_cmp(&b.val.0).then(b.val.1.total_cmp(&a.val.1)))
        .expect("at least one seed");
    Ok((best, all))
}

fn desk_scale_learning() -> Check {
    let data = study_data();
    let spec = TrainSpec { epochs_max: 30, patience: 30, bs: 16, lr: 1e-3, seed: 0, qat_bits: None };
    let (t, all) = select_by_validation(&data, 3, 8, spec, &[1, 2, 3])?;
    ensure!(t.quant >= 0.95, "QAT 8-bit CNN-3 integer-only test accuracy {:.4} ({all})", t.quant);
    ensure!(t.float - t.quant <= 0.02, "drop {:.4} (float {:.4}, quantized {:.4})", t.float - t.quant, t.float, t.quant);
    let synthetic = format!("synthetic, selected seed {}: integer-only {:.3}, float {:.3} ({all})", t.seed, t.quant, t.float);

    let Some(root) = std::env::var_os("VIBESWIPE_DATA").map(PathBuf::from) else {
        return Ok(format!("{synthetic}; real-data rerun not run (VIBESWIPE_DATA unset)"));
    };
    let records = load_wav_sessions(&root).map_err(|e| e.to_string())?;
    let keys = common::keys(&records);
    let plan = make_split(&keys, SplitMethod::Ps, "A", 0.2, 0).map_err(|e| e.to_string())?;
    let real = plan.apply(preprocess(&records, &PreprocessConfig::default()).map_err(|e| e.to_string())?);
    let spec = TrainSpec { epochs_max: 100, patience: 10, bs: 32, lr: 5.082e-4, seed: 0, qat_bits: None };
    let (t, _) = select_by_validation(&real, 3, 6, spec, &[1, 2, 3])?;
    ensure!((t.quant - 0.996).abs() <= 0.03, "real-data PS CNN-3 6-bit accuracy {:.4}, published 0.996", t.quant);
    Ok(format!("{synthetic}; real data PS CNN-3 6-bit {:.3} (published 0.996)", t.quant))
}

// 10 -----------------------------------------------------------------------

fn declared_constants() -> Check {
    let csv = reference_constants_csv();
    for needle in [
        "board_latency_deviation_pct,1.95",
        "board_power_deviation_pct,5.6",
        "baseline_2d_cnn_params,369000000",
        "baseline_2d_cnn_ps_accuracy_by_person,0.994",
        "baseline_2d_cnn_loso_accuracy_by_person,0.671",
        "baseline_2d_cnn_aos_accuracy_by_table,0.841",
        "ping_pong_bram_pct_before,97.78",
    ] {
        ensure!(csv.contains(needle), "missing {needle}");
    }
    ensure!(REFERENCE_ROWS.len() == 6, "reference rows");
    Ok("synthesis/board figures and the 2D-CNN baseline are fixed constants in reference_constants.csv".into())
}

fn main() {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("parameter counts", parameter_counts),
        ("input reduction", input_reduction),
        ("bit-exact simulation vs integer interpreter", dual_path_equivalence),
        ("ping-pong buffering", ping_pong),
        ("latency model", latency_model),
        ("energy identity and power surrogate", energy_and_power),
        ("quantization properties", quantization_properties),
        ("search behavior", search_behavior),
        ("desk-scale learning", desk_scale_learning),
        ("declared unreproducible items", declared_constants),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{secs:.1}s]", i + 1),
            Err(reason) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {reason} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
