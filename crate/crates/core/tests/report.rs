use vibeswipe::accel::ResourceReport;
use vibeswipe::dataio::SplitMethod;
use vibeswipe::nn::Arch;
use vibeswipe::report::*;
use vibeswipe::search::{pareto_front, Stage, TrialMetrics, TrialResult};
use vibeswipe::search::space::TrialConfig;
use vibeswipe::trainer::Confusion;

fn complete_trial(index: usize, acc: f64, energy: f64) -> TrialResult {
    TrialResult {
        index,
        generation: 0,
        config: TrialConfig { arch: Arch::Cnn, bits: 6, bs: 32, lr: 5.082e-4, num_blocks: 3 },
        stage_reached: Stage::Complete,
        pruned: None,
        metrics: TrialMetrics {
            epochs: Some(40),
            gate_accuracy: Some(acc),
            val_accuracy: Some(acc),
            fp32_accuracy: Some(0.998),
            quant_val_accuracy: Some(acc),
            quant_accuracy: Some(0.996),
            cycles: Some(922_000),
            latency_ms: Some(9.22),
            resources: Some(ResourceReport {
                bits: 6,
                luts: 1949,
                bram18: 45,
                dsps: 6,
                lut_pct: 13.35,
                bram_pct: 50.0,
                dsp_pct: 7.5,
                feasible: true,
            }),
            power_mw: Some(129.0),
            energy_mj: Some(energy),
        },
    }
}

#[test]
fn selected_header_follows_published_column_order() {
    let csv = selected_csv(&[]);
    assert_eq!(
        csv.trim_end(),
        "split_method,model,num_blocks,b,bs,lr_e-4,fp32_accuracy,quantized_accuracy,accuracy_change,luts_pct,brams_pct,dsps_pct,latency_ms,power_mw,energy_mj"
    );
}

#[test]
fn published_accuracy_changes_reproduce() {
    let expect = ["↓0.20%", "-0.00%", "↓0.81%", "↓3.85%", "↓0.74%", "↓2.26%"];
    for (r, e) in SelectedRow::reference().iter().zip(expect) {
        assert_eq!(accuracy_change(r.fp32_accuracy.unwrap(), r.quant_accuracy), e);
    }
    let csv = selected_csv(&SelectedRow::reference());
    let first = csv.lines().nth(1).unwrap();
    assert_eq!(first, "PS,1D-CNN,3,6,32,5.082,0.998,0.996,↓0.20%,13.35,50.00,7.50,9.22,129,1.189");
    assert_eq!(csv.lines().count(), 7);
}

#[test]
fn completed_trial_becomes_a_row() {
    let t = complete_trial(0, 0.99, 1.189);
    let row = SelectedRow::from_trial(SplitMethod::Ps, &t).unwrap();
    let csv = selected_csv(&[row]);
    assert_eq!(csv.lines().nth(1).unwrap(), "PS,1D-CNN,3,6,32,5.082,0.998,0.996,↓0.20%,13.35,50.00,7.50,9.22,129,1.189");

    let mut pruned = t.clone();
    pruned.stage_reached = Stage::Profiled;
    assert!(SelectedRow::from_trial(SplitMethod::Ps, &pruned).is_none());

    let mut no_float = t;
    no_float.metrics.fp32_accuracy = None;
    let line = selected_csv(&[SelectedRow::from_trial(SplitMethod::Ps, &no_float).unwrap()]);
    assert!(line.lines().nth(1).unwrap().starts_with("PS,1D-CNN,3,6,32,5.082,,0.996,,"));
}

#[test]
fn perfect_classifier_gives_diagonal_confusion() {
    let c = Confusion::from_pairs(4, (0..40).map(|i| (i % 4, i % 4))).unwrap();
    let svg = confusion_svg(&c, "PS");
    let mut cells = 0;
    for line in svg.lines().filter(|l| l.contains("class=\"cell\"")) {
        let attr = |name: &str| -> u64 {
            let key = format!("{name}=\"");
            let start = line.find(&key).unwrap() + key.len();
            line[start..].split('"').next().unwrap().parse().unwrap()
        };
        let (t, p, n) = (attr("data-true"), attr("data-pred"), attr("data-count"));
        assert_eq!(n, if t == p { 10 } else { 0 }, "cell ({t}, {p})");
        cells += 1;
    }
    assert_eq!(cells, 16);
    assert_eq!(
        confusion_csv(&c),
        "true\\predicted,Up,Down,Left,Right\nUp,10,0,0,0\nDown,0,10,0,0\nLeft,0,0,10,0\nRight,0,0,0,10\n"
    );
}

#[test]
fn confusion_rows_are_true_classes() {
    let c = Confusion::from_pairs(4, [(3, 2), (3, 2), (3, 3), (0, 0)]).unwrap();
    let csv = confusion_csv(&c);
    assert_eq!(csv.lines().nth(4).unwrap(), "Right,0,0,2,1");
    assert!(confusion_svg(&c, "a<b").contains("a&lt;b"));
}

/// Accuracies of the generalization table (by person, by table).
const GRID: [(Arch, SplitMethod, [(f64, f64); 3], (f64, f64)); 6] = [
    (Arch::Cnn, SplitMethod::Ps, [(0.996, 0.994), (0.952, 0.921), (0.961, 0.999)], (0.970, 0.971)),
    (Arch::Cnn, SplitMethod::Loso, [(0.738, 0.796), (0.816, 0.642), (0.882, 0.711)], (0.812, 0.716)),
    (Arch::Cnn, SplitMethod::Aos, [(0.941, 0.991), (0.872, 0.836), (0.978, 0.998)], (0.930, 0.942)),
    (Arch::SepCnn, SplitMethod::Ps, [(0.952, 0.989), (0.943, 0.905), (0.952, 0.998)], (0.949, 0.964)),
    (Arch::SepCnn, SplitMethod::Loso, [(0.675, 0.714), (0.690, 0.540), (0.695, 0.591)], (0.687, 0.615)),
    (Arch::SepCnn, SplitMethod::Aos, [(0.909, 0.973), (0.888, 0.815), (0.978, 0.995)], (0.925, 0.928)),
];

#[test]
fn generalization_grid_reproduces_published_averages() {
    let mut cells = Vec::new();
    for (arch, method, accs, _) in GRID {
        for (target, (person, table)) in ["A", "B", "C"].iter().zip(accs) {
            for (dataset, accuracy) in [("ByPerson", person), ("ByTable", table)] {
                cells.push(GeneralizationCell { arch, method, target: target.to_string(), dataset: dataset.into(), accuracy });
            }
        }
    }
    let csv = generalization_csv(&cells);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "model,split_method,training_data,testing_data,ByPerson,ByTable");
    assert_eq!(lines.len(), 1 + 6 * 4);
    assert_eq!(lines[5], "1D-CNN,LOSO,\"B,C\",A,0.738,0.796");
    assert_eq!(lines[9], "1D-CNN,AOS,\"B,C + 1A\",A,0.941,0.991");
    let avgs: Vec<&str> = lines.iter().copied().filter(|l| l.contains(",avg.,")).collect();
    for ((arch, method, _, (p, t)), line) in GRID.iter().zip(avgs) {
        assert_eq!(line, format!("{},{},avg.,,{p:.3},{t:.3}", arch.display_name(), method.name().to_uppercase()));
    }
}

#[test]
fn generalization_grid_tolerates_missing_cells() {
    let cells = vec![
        GeneralizationCell { arch: Arch::Cnn, method: SplitMethod::Ps, target: "A".into(), dataset: "synthetic".into(), accuracy: 1.0 },
        GeneralizationCell { arch: Arch::Cnn, method: SplitMethod::Ps, target: "B".into(), dataset: "synthetic".into(), accuracy: 0.5 },
    ];
    let csv = generalization_csv(&cells);
    assert_eq!(csv, "model,split_method,training_data,testing_data,synthetic\n1D-CNN,PS,\"A\",A,1.000\n1D-CNN,PS,\"B\",B,0.500\n1D-CNN,PS,avg.,,0.750\n");
}

#[test]
fn pareto_outputs_mark_the_front() {
    let trials = vec![complete_trial(0, 0.9, 2.0), complete_trial(1, 0.8, 1.0), complete_trial(2, 0.7, 3.0)];
    let front = pareto_front(&trials);
    let csv = pareto_csv(&front);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("1,0,0.8000,"));
    assert!(lines[2].starts_with("0,0,0.9000,"));
    let svg = pareto_svg(&trials, &front, "front");
    assert_eq!(svg.matches("class=\"front\"").count(), 2);
    assert_eq!(svg.matches("class=\"complete\"").count(), 1);
    assert_eq!(svg, pareto_svg(&trials, &front, "front"));
}

#[test]
fn reference_constants_are_listed() {
    let csv = reference_constants_csv();
    assert!(csv.contains("board_latency_deviation_pct,1.95\n"));
    assert!(csv.contains("board_power_deviation_pct,5.6\n"));
    assert!(csv.contains("baseline_2d_cnn_params,369000000\n"));
    assert!(csv.contains("baseline_2d_cnn_ps_accuracy_by_person,0.994\n"));
}
