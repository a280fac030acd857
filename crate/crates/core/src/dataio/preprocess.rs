use serde::{Deserialize, Serialize};

use crate::dataio::record::{GestureSample, WaveformRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub window_start_s: f64,
    pub window_dur_s: f64,
    pub downsample_factor: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig { window_start_s: 0.25, window_dur_s: 1.0, downsample_factor: 10 }
    }
}

impl PreprocessConfig {
    /// Length of every sample produced from a record at `sample_rate`.
    pub fn sample_len(&self, sample_rate: u32) -> usize {
        (self.window_dur_s * sample_rate as f64).round() as usize / self.downsample_factor.max(1)
    }
}

/// Cuts every channel to `dur_s` seconds starting at `start_s`.
pub fn truncate_window(rec: &WaveformRecord, start_s: f64, dur_s: f64) -> Result<WaveformRecord> {
    if !(start_s >= 0.0 && dur_s > 0.0 && start_s.is_finite() && dur_s.is_finite()) {
        return Err(Error::Bounds(format!("start {start_s} s, duration {dur_s} s")));
    }
    let sr = rec.sample_rate() as f64;
    let start = (start_s * sr).round() as usize;
    let n = (dur_s * sr).round() as usize;
    let len = rec.channel_len();
    if start + n > len {
        return Err(Error::Bounds(format!(
            "window [{start_s}, {}) s needs samples {start}..{} but the record has {len}",
            start_s + dur_s,
            start + n
        )));
    }
    Ok(rec.with_channels(rec.channels().iter().map(|c| c[start..start + n].to_vec()).collect()))
}

/// Keeps samples `phase, phase + d, phase + 2d, ...`; the output length is
/// `floor(len / d)` for every phase so all phases of a record align.
pub fn downsample(rec: &WaveformRecord, d: usize, phase: usize) -> Result<GestureSample> {
    if d == 0 {
        return Err(Error::Argument("downsampling factor must be at least 1".into()));
    }
    if phase >= d {
        return Err(Error::Argument(format!("phase {phase} must be below the factor {d}")));
    }
    let out_len = rec.channel_len() / d;
    let channels = rec.channels();
    let n_ch = channels.len();
    let mut codes = Vec::with_capacity(out_len * n_ch);
    for k in 0..out_len {
        let idx = phase + k * d;
        codes.extend(channels.iter().map(|c| c[idx]));
    }
    GestureSample::new(codes, out_len, n_ch, rec.label().index(), phase, rec.key().clone())
}

/// Emits one sample per (record, phase) for every phase of the decimation
/// grid, so a session of 40 records becomes 400 samples at `d = 10`.
pub fn augment_session(records: &[WaveformRecord], d: usize) -> Result<Vec<GestureSample>> {
    let mut out = Vec::with_capacity(records.len() * d);
    for rec in records {
        for phase in 0..d {
            out.push(downsample(rec, d, phase)?);
        }
    }
    Ok(out)
}

/// Truncation followed by phase augmentation.
pub fn preprocess(records: &[WaveformRecord], cfg: &PreprocessConfig) -> Result<Vec<GestureSample>> {
    let mut out = Vec::with_capacity(records.len() * cfg.downsample_factor);
    for rec in records {
        let cut = truncate_window(rec, cfg.window_start_s, cfg.window_dur_s)?;
        out.extend(augment_session(std::slice::from_ref(&cut), cfg.downsample_factor)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::record::{Direction, RecordKey, RAW_LEN, SAMPLE_RATE};
    use proptest::prelude::*;

    fn key() -> RecordKey {
        RecordKey { subject: "A".into(), session: 1, label: Direction::Down, recording: 1 }
    }

    fn ramp_record(len: usize) -> WaveformRecord {
        let chans = (0..4).map(|c| (0..len).map(|t| ((t + c) % 30000) as i16).collect()).collect();
        WaveformRecord::new(chans, SAMPLE_RATE, key()).unwrap()
    }

    #[test]
    fn default_window_keeps_one_second() {
        let rec = ramp_record(RAW_LEN);
        assert_eq!(rec.total_samples(), 352_800);
        let cut = truncate_window(&rec, 0.25, 1.0).unwrap();
        assert_eq!(cut.channel_len(), 44_100);
        assert_eq!(cut.total_samples(), 176_400);
        assert_eq!(cut.channels()[0][0], rec.channels()[0][11_025]);
    }

    #[test]
    fn full_window_is_identity() {
        let rec = ramp_record(RAW_LEN);
        assert_eq!(truncate_window(&rec, 0.0, 2.0).unwrap(), rec);
    }

    #[test]
    fn window_past_the_end_is_a_bounds_error() {
        let rec = ramp_record(RAW_LEN);
        assert!(matches!(truncate_window(&rec, 1.5, 1.0), Err(Error::Bounds(_))));
    }

    #[test]
    fn decimation_by_ten_gives_4410_by_4() {
        let cut = truncate_window(&ramp_record(RAW_LEN), 0.25, 1.0).unwrap();
        let s = downsample(&cut, 10, 0).unwrap();
        assert_eq!((s.len(), s.channels()), (4410, 4));
    }

    #[test]
    fn unit_factor_is_scaled_identity() {
        let rec = ramp_record(12);
        let s = downsample(&rec, 1, 0).unwrap();
        for t in 0..12 {
            for c in 0..4 {
                assert_eq!(s.value(t, c), rec.channels()[c][t] as f64 / 32768.0);
            }
        }
    }

    #[test]
    fn phase_offsets_pick_expected_indices() {
        let chans = vec![(0..10).collect::<Vec<i16>>(); 4];
        let rec = WaveformRecord::new(chans, SAMPLE_RATE, key()).unwrap();
        let s = downsample(&rec, 5, 2).unwrap();
        // indices 2 and 7, enumerated by hand
        assert_eq!(s.len(), 2);
        assert_eq!((s.code(0, 0), s.code(1, 3)), (2, 7));
    }

    #[test]
    fn phase_must_be_below_factor() {
        let rec = ramp_record(20);
        assert!(matches!(downsample(&rec, 4, 4), Err(Error::Argument(_))));
    }

    #[test]
    fn augmentation_counts() {
        let recs: Vec<_> = (0..40).map(|_| ramp_record(100)).collect();
        assert_eq!(augment_session(&recs, 10).unwrap().len(), 400);
        assert_eq!(augment_session(&recs, 1).unwrap().len(), 40);
        let three: Vec<_> = recs[..3].to_vec();
        let out = augment_session(&three, 4).unwrap();
        assert_eq!(out.len(), 12);
        for chunk in out.chunks(4) {
            let phases: Vec<usize> = chunk.iter().map(|s| s.phase).collect();
            assert_eq!(phases, vec![0, 1, 2, 3]);
        }
    }

    #[test]
    fn input_reduction_ratio() {
        let spectrogram: f64 = 4096.0 * 90.0;
        let waveform: f64 = 4410.0 * 4.0;
        assert_eq!(spectrogram, 368_640.0);
        assert_eq!(waveform, 17_640.0);
        assert!((spectrogram / waveform - 20.898).abs() < 1e-3);
    }

    proptest! {
        #[test]
        fn phases_partition_the_index_range(len in 1usize..400, d in 1usize..16) {
            // channel value = sample index, so every emitted code names its source index
            let chans = vec![(0..len as i16).collect::<Vec<i16>>(); 4];
            let rec = WaveformRecord::new(chans, SAMPLE_RATE, key()).unwrap();
            let mut seen = vec![0u32; len];
            for phase in 0..d {
                let s = downsample(&rec, d, phase).unwrap();
                prop_assert_eq!(s.len(), len / d);
                for t in 0..s.len() {
                    seen[s.code(t, 0) as usize] += 1;
                }
            }
            let covered = (len / d) * d;
            prop_assert!(seen[..covered].iter().all(|&n| n == 1));
            prop_assert!(seen[covered..].iter().all(|&n| n == 0));
            prop_assert!(len - covered < d);
        }
    }
}
