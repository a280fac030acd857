//! CSV and SVG renderings of search and evaluation results.
//!
//! Every function here is a pure formatter: identical inputs give identical
//! bytes, so reports from reruns with the same seed can be diffed.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::accel::reference::{fixed, REFERENCE_ROWS};
use crate::dataio::{Direction, SplitMethod};
use crate::nn::Arch;
use crate::search::{ParetoFront, TrialResult};
use crate::trainer::Confusion;

/// Column order of the selected-configuration table.
pub const SELECTED_HEADER: [&str; 15] = [
    "split_method",
    "model",
    "num_blocks",
    "b",
    "bs",
    "lr_e-4",
    "fp32_accuracy",
    "quantized_accuracy",
    "accuracy_change",
    "luts_pct",
    "brams_pct",
    "dsps_pct",
    "latency_ms",
    "power_mw",
    "energy_mj",
];

/// One row of the selected-configuration table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedRow {
    pub method: SplitMethod,
    pub arch: Arch,
    pub num_blocks: usize,
    pub bits: u32,
    pub bs: usize,
    pub lr: f64,
    pub fp32_accuracy: Option<f64>,
    pub quant_accuracy: f64,
    pub lut_pct: f64,
    pub bram_pct: f64,
    pub dsp_pct: f64,
    pub latency_ms: f64,
    pub power_mw: f64,
    pub energy_mj: f64,
}

impl SelectedRow {
    /// `None` unless the trial completed every stage.
    pub fn from_trial(method: SplitMethod, t: &TrialResult) -> Option<Self> {
        let m = &t.metrics;
        let r = m.resources.as_ref()?;
        if !t.is_complete() {
            return None;
        }
        Some(SelectedRow {
            method,
            arch: t.config.arch,
            num_blocks: t.config.num_blocks,
            bits: t.config.bits,
            bs: t.config.bs,
            lr: t.config.lr,
            fp32_accuracy: m.fp32_accuracy,
            quant_accuracy: m.quant_accuracy?,
            lut_pct: r.lut_pct,
            bram_pct: r.bram_pct,
            dsp_pct: r.dsp_pct,
            latency_ms: m.latency_ms?,
            power_mw: m.power_mw?,
            energy_mj: m.energy_mj?,
        })
    }

    /// The published rows, for side-by-side comparison.
    pub fn reference() -> Vec<SelectedRow> {
        REFERENCE_ROWS
            .iter()
            .map(|r| SelectedRow {
                method: r.split,
                arch: r.arch,
                num_blocks: r.blocks,
                bits: r.bits,
                bs: r.bs,
                lr: r.lr,
                fp32_accuracy: Some(r.fp32_accuracy),
                quant_accuracy: r.quant_accuracy,
                lut_pct: r.lut_pct,
                bram_pct: r.bram_pct,
                dsp_pct: r.dsp_pct,
                latency_ms: r.latency_ms,
                power_mw: r.power_mw,
                energy_mj: r.energy_mj,
            })
            .collect()
    }
}

/// Relative change from the float to the quantized accuracy, as a percentage
/// with an arrow: `↓0.20%` for a drop, `↑` for a gain, `-0.00%` when equal
/// at two decimals.
pub fn accuracy_change(fp32: f64, quant: f64) -> String {
    if fp32 <= 0.0 {
        return String::new();
    }
    let pct = (fp32 - quant) / fp32 * 100.0;
    let text = format!("{:.2}", pct.abs());
    if text == "0.00" {
        "-0.00%".into()
    } else if pct > 0.0 {
        format!("↓{text}%")
    } else {
        format!("↑{text}%")
    }
}

pub fn selected_csv(rows: &[SelectedRow]) -> String {
    let mut out = SELECTED_HEADER.join(",");
    out.push('\n');
    for r in rows {
        let (fp32, change) = match r.fp32_accuracy {
            Some(f) => (format!("{f:.3}"), accuracy_change(f, r.quant_accuracy)),
            None => (String::new(), String::new()),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:.3},{},{:.3},{},{:.2},{:.2},{:.2},{:.2},{:.0},{:.3}",
            method_label(r.method),
            r.arch.display_name(),
            r.num_blocks,
            r.bits,
            r.bs,
            r.lr * 1e4,
            fp32,
            r.quant_accuracy,
            change,
            r.lut_pct,
            r.bram_pct,
            r.dsp_pct,
            r.latency_ms,
            r.power_mw,
            r.energy_mj
        );
    }
    out
}

/// Test accuracy of one configuration trained and tested on one
/// (target, dataset) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizationCell {
    pub arch: Arch,
    pub method: SplitMethod,
    pub target: String,
    pub dataset: String,
    pub accuracy: f64,
}

/// Training-data label of a split: `A` (PS), `B,C` (LOSO), `B,C + 1A` (AOS).
pub fn training_label(method: SplitMethod, target: &str, subjects: &[String]) -> String {
    let others: Vec<&str> = subjects.iter().map(String::as_str).filter(|s| *s != target).collect();
    match method {
        SplitMethod::Ps => target.to_string(),
        SplitMethod::Loso => others.join(","),
        SplitMethod::Aos => format!("{} + 1{target}", others.join(",")),
    }
}

/// Grid of test accuracies: one row per (model, method, target), one column
/// per dataset, with an `avg.` row closing each (model, method) group.
/// Missing cells are left empty and excluded from averages.
pub fn generalization_csv(cells: &[GeneralizationCell]) -> String {
    let mut datasets: Vec<&str> = cells.iter().map(|c| c.dataset.as_str()).collect();
    datasets.sort_unstable();
    datasets.dedup();
    let mut subjects: Vec<String> = cells.iter().map(|c| c.target.clone()).collect();
    subjects.sort_unstable();
    subjects.dedup();

    let mut out = format!("model,split_method,training_data,testing_data,{}\n", datasets.join(","));
    for arch in [Arch::Cnn, Arch::SepCnn] {
        for method in SplitMethod::ALL {
            let group: Vec<&GeneralizationCell> = cells.iter().filter(|c| c.arch == arch && c.method == method).collect();
            if group.is_empty() {
                continue;
            }
            let lookup = |target: &str, ds: &str| group.iter().find(|c| c.target == target && c.dataset == ds).map(|c| c.accuracy);
            for target in &subjects {
                if !group.iter().any(|c| &c.target == target) {
                    continue;
                }
                let vals: Vec<String> = datasets.iter().map(|ds| lookup(target, ds).map(|a| format!("{a:.3}")).unwrap_or_default()).collect();
                let _ = writeln!(
                    out,
                    "{},{},\"{}\",{},{}",
                    arch.display_name(),
                    method_label(method),
                    training_label(method, target, &subjects),
                    target,
                    vals.join(",")
                );
            }
            let avgs: Vec<String> = datasets
                .iter()
                .map(|ds| {
                    let v: Vec<f64> = group.iter().filter(|c| c.dataset == *ds).map(|c| c.accuracy).collect();
                    if v.is_empty() { String::new() } else { format!("{:.3}", v.iter().sum::<f64>() / v.len() as f64) }
                })
                .collect();
            let _ = writeln!(out, "{},{},avg.,,{}", arch.display_name(), method_label(method), avgs.join(","));
        }
    }
    out
}

fn class_name(i: usize) -> String {
    match Direction::from_index(i) {
        Some(d) => {
            let n = d.name();
            n[..1].to_uppercase() + &n[1..]
        }
        None => format!("class{i}"),
    }
}

fn method_label(m: SplitMethod) -> String {
    m.name().to_uppercase()
}

/// Rows are true classes, columns predictions.
pub fn confusion_csv(c: &Confusion) -> String {
    let n = c.n_classes();
    let names: Vec<String> = (0..n).map(class_name).collect();
    let mut out = format!("true\\predicted,{}\n", names.join(","));
    for (t, name) in names.iter().enumerate() {
        let row: Vec<String> = c.row(t).iter().map(u64::to_string).collect();
        let _ = writeln!(out, "{name},{}", row.join(","));
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Heat map with counts; shading is normalized per true-class row.
pub fn confusion_svg(c: &Confusion, title: &str) -> String {
    const CELL: usize = 60;
    const LEFT: usize = 70;
    const TOP: usize = 50;
    let n = c.n_classes();
    let size = LEFT + n * CELL + 20;
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{size}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"12\">\n",
        h = TOP + n * CELL + 40
    );
    let _ = writeln!(out, "<text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>", size / 2, escape(title));
    for i in 0..n {
        let name = class_name(i);
        let _ = writeln!(out, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{name}</text>", LEFT + i * CELL + CELL / 2, TOP - 6);
        let _ = writeln!(out, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{name}</text>", LEFT - 6, TOP + i * CELL + CELL / 2 + 4);
    }
    for t in 0..n {
        let row_total: u64 = c.row(t).iter().sum();
        for p in 0..n {
            let count = c.get(t, p);
            let frac = if row_total == 0 { 0.0 } else { count as f64 / row_total as f64 };
            let shade = (255.0 - 200.0 * frac).round() as u8;
            let (x, y) = (LEFT + p * CELL, TOP + t * CELL);
            let _ = writeln!(
                out,
                "<rect class=\"cell\" data-true=\"{t}\" data-pred=\"{p}\" data-count=\"{count}\" x=\"{x}\" y=\"{y}\" width=\"{CELL}\" height=\"{CELL}\" fill=\"rgb({shade},{shade},255)\" stroke=\"#888\"/>"
            );
            let _ = writeln!(out, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{count}</text>", x + CELL / 2, y + CELL / 2 + 4);
        }
    }
    let _ = writeln!(out, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">predicted</text>", LEFT + n * CELL / 2, TOP + n * CELL + 25);
    out.push_str("</svg>\n");
    out
}

pub const PARETO_HEADER: &str = "trial,generation,quant_val_accuracy,quant_accuracy,energy_mj,latency_ms,power_mw,arch,num_blocks,b,bs,lr";

pub fn pareto_csv(front: &ParetoFront) -> String {
    let mut out = format!("{PARETO_HEADER}\n");
    for t in &front.members {
        let m = &t.metrics;
        let f = |v: Option<f64>, d: usize| v.map(|x| format!("{x:.d$}")).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{:.6e}",
            t.index,
            t.generation,
            f(m.quant_val_accuracy, 4),
            f(m.quant_accuracy, 4),
            f(m.energy_mj, 4),
            f(m.latency_ms, 3),
            f(m.power_mw, 1),
            t.config.arch.name(),
            t.config.num_blocks,
            t.config.bits,
            t.config.bs,
            t.config.lr
        );
    }
    out
}

/// Accuracy against energy for every trial that got as far as energy
/// estimation; front members are filled and joined by a step line.
pub fn pareto_svg(trials: &[TrialResult], front: &ParetoFront, title: &str) -> String {
    const W: f64 = 480.0;
    const H: f64 = 360.0;
    const PAD: f64 = 50.0;
    let plotted: Vec<(&TrialResult, f64, f64)> = trials
        .iter()
        .filter_map(|t| Some((t, t.metrics.energy_mj?, t.metrics.quant_val_accuracy?)))
        .collect();
    let e_max = plotted.iter().map(|p| p.1).fold(0.0f64, f64::max).max(1e-9) * 1.05;
    let x = |e: f64| PAD + e / e_max * (W - 2.0 * PAD);
    let y = |a: f64| H - PAD - a * (H - 2.0 * PAD);
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    );
    let _ = writeln!(out, "<text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>", W / 2.0, escape(title));
    let _ = writeln!(
        out,
        "<path d=\"M{PAD},{PAD} L{PAD},{b} L{r},{b}\" fill=\"none\" stroke=\"black\"/>",
        b = H - PAD,
        r = W - PAD
    );
    let _ = writeln!(out, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">energy (mJ), max {:.3}</text>", W / 2.0, H - 15.0, e_max);
    let _ = writeln!(
        out,
        "<text x=\"15\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 15 {})\">validation accuracy</text>",
        H / 2.0,
        H / 2.0
    );
    for a in [0.0, 0.5, 1.0] {
        let _ = writeln!(out, "<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{a:.1}</text>", PAD - 5.0, y(a) + 4.0);
    }
    let on_front = |t: &TrialResult| front.members.iter().any(|m| m.index == t.index);
    for (t, e, a) in &plotted {
        let class = if on_front(t) { "front" } else if t.is_complete() { "complete" } else { "pruned" };
        let fill = match class {
            "front" => "#d62728",
            "complete" => "#1f77b4",
            _ => "none",
        };
        let _ = writeln!(
            out,
            "<circle class=\"{class}\" data-trial=\"{}\" cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"{fill}\" stroke=\"#555\"/>",
            t.index,
            x(*e),
            y(*a)
        );
    }
    if front.members.len() > 1 {
        let pts: Vec<String> = front
            .members
            .iter()
            .filter_map(|t| Some(format!("{:.2},{:.2}", x(t.metrics.energy_mj?), y(t.metrics.quant_val_accuracy?))))
            .collect();
        let _ = writeln!(out, "<polyline points=\"{}\" fill=\"none\" stroke=\"#d62728\"/>", pts.join(" "));
    }
    out.push_str("</svg>\n");
    out
}

/// Published figures that cannot be recomputed at desk scale (synthesis
/// tool output, board measurements, the spectrogram baseline), as
/// `quantity,value` lines.
pub fn reference_constants_csv() -> String {
    let mut out = String::from("quantity,value\n");
    let _ = writeln!(out, "board_latency_deviation_pct,{}", fixed::HW_LATENCY_DEVIATION_PCT);
    let _ = writeln!(out, "board_power_deviation_pct,{}", fixed::HW_POWER_DEVIATION_PCT);
    let _ = writeln!(out, "ping_pong_bram_pct_before,{}", fixed::PING_PONG_BRAM_PCT.0);
    let _ = writeln!(out, "ping_pong_bram_pct_after,{}", fixed::PING_PONG_BRAM_PCT.1);
    let _ = writeln!(out, "ping_pong_lut_pct_before,{}", fixed::PING_PONG_LUT_PCT.0);
    let _ = writeln!(out, "ping_pong_lut_pct_after,{}", fixed::PING_PONG_LUT_PCT.1);
    let _ = writeln!(out, "baseline_2d_cnn_params,{}", fixed::BASELINE_2D_CNN_PARAMS);
    let _ = writeln!(out, "baseline_2d_cnn_input,{}x{}", fixed::BASELINE_INPUT.0, fixed::BASELINE_INPUT.1);
    let _ = writeln!(out, "baseline_2d_cnn_latency_ms,{}", fixed::BASELINE_LATENCY_MS);
    for (m, person, table) in fixed::BASELINE_2D_CNN_ACCURACY {
        let _ = writeln!(out, "baseline_2d_cnn_{}_accuracy_by_person,{person}", m.to_lowercase());
        let _ = writeln!(out, "baseline_2d_cnn_{}_accuracy_by_table,{table}", m.to_lowercase());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn change_formatting() {
        assert_eq!(accuracy_change(0.998, 0.996), "↓0.20%");
        assert_eq!(accuracy_change(0.952, 0.952), "-0.00%");
        assert_eq!(accuracy_change(0.9, 0.95), "↑5.56%");
        assert_eq!(accuracy_change(0.0, 0.5), "");
    }

    #[test]
    fn labels() {
        let s: Vec<String> = ["A", "B", "C"].iter().map(|x| x.to_string()).collect();
        assert_eq!(training_label(SplitMethod::Ps, "B", &s), "B");
        assert_eq!(training_label(SplitMethod::Loso, "A", &s), "B,C");
        assert_eq!(training_label(SplitMethod::Aos, "C", &s), "A,B + 1C");
    }
}
