#![allow(dead_code)]

use vibeswipe::dataio::{
    make_split, preprocess, synth_dataset, GestureSample, PreprocessConfig, RecordKey, SplitData, SplitMethod,
    SynthSpec, WaveformRecord,
};

pub fn keys(records: &[WaveformRecord]) -> Vec<RecordKey> {
    records.iter().map(|r| r.key().clone()).collect()
}

/// Synthesizes, preprocesses and splits in one go.
pub fn synth_split(spec: &SynthSpec, pre: &PreprocessConfig, method: SplitMethod, target: &str, seed: u64) -> SplitData {
    let records = synth_dataset(spec).unwrap();
    let plan = make_split(&keys(&records), method, target, 0.2, seed).unwrap();
    plan.apply(preprocess(&records, pre).unwrap())
}

/// Independent reference classifier: per-class mean vector over `train`,
/// then squared-Euclidean nearest centroid.
pub fn nearest_centroid_accuracy(train: &[GestureSample], test: &[GestureSample]) -> f64 {
    let dim = train[0].codes().len();
    let mut sums = vec![vec![0.0f64; dim]; 4];
    let mut counts = [0usize; 4];
    for s in train {
        counts[s.label] += 1;
        for (acc, &c) in sums[s.label].iter_mut().zip(s.codes()) {
            *acc += c as f64 / 32768.0;
        }
    }
    let centroids: Vec<Vec<f64>> =
        sums.iter().zip(counts).map(|(s, n)| s.iter().map(|v| v / n.max(1) as f64).collect()).collect();
    let correct = test
        .iter()
        .filter(|s| {
            let d: Vec<f64> = centroids
                .iter()
                .map(|c| c.iter().zip(s.codes()).map(|(m, &x)| (x as f64 / 32768.0 - m).powi(2)).sum())
                .collect();
            let best = (0..4).min_by(|&a, &b| d[a].total_cmp(&d[b])).unwrap();
            best == s.label
        })
        .count();
    correct as f64 / test.len() as f64
}
