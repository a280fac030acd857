//! WAV ingestion.
//!
//! Dataset layout on disk:
//!
//! ```text
//! <root>/<subject>/session_<n>/<direction>_<recording>.wav          4-channel PCM16
//! <root>/<subject>/session_<n>/<direction>_<recording>_ch<k>.wav    mono fallback, k = 1..4
//! ```
//!
//! Session directories may also be named by the bare number (`<n>`).
//! Direction names are case-insensitive (`up`, `down`, `left`, `right`).

use std::collections::BTreeMap;
use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use crate::dataio::record::{Direction, RecordKey, WaveformRecord, NUM_CHANNELS};
use crate::error::{Error, Result};

/// Decoded PCM16 content of one WAV file.
#[derive(Debug, Clone, PartialEq)]
pub struct PcmAudio {
    pub sample_rate: u32,
    pub channels: Vec<Vec<i16>>,
}

/// Decodes an in-memory RIFF/WAVE byte stream. Only 16-bit integer PCM is
/// accepted; the sample count must be a whole number of frames.
pub fn decode_wav(bytes: &[u8], origin: &Path) -> Result<PcmAudio> {
    let reader = hound::WavReader::new(Cursor::new(bytes)).map_err(|e| match e {
        hound::Error::Unsupported | hound::Error::FormatError(_) => Error::format(origin, e.to_string()),
        other => Error::ingest(origin, other.to_string()),
    })?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::format(
            origin,
            format!("expected 16-bit integer PCM, found {}-bit {:?}", spec.bits_per_sample, spec.sample_format),
        ));
    }
    let n_ch = spec.channels as usize;
    if n_ch == 0 {
        return Err(Error::format(origin, "zero channels"));
    }
    let total = reader.len() as usize;
    if total % n_ch != 0 {
        return Err(Error::ingest(origin, format!("{total} samples is not a whole number of {n_ch}-channel frames")));
    }
    let frames = total / n_ch;
    // hound trusts the header for `len`; cap against the actual payload.
    if total > bytes.len() / 2 {
        return Err(Error::ingest(origin, "data chunk is shorter than its declared length"));
    }
    let mut channels = vec![Vec::with_capacity(frames); n_ch];
    for (i, s) in reader.into_samples::<i16>().enumerate() {
        let s = s.map_err(|e| Error::ingest(origin, e.to_string()))?;
        channels[i % n_ch].push(s);
    }
    if channels.iter().any(|c| c.len() != frames) {
        return Err(Error::ingest(origin, "truncated sample data"));
    }
    Ok(PcmAudio { sample_rate: spec.sample_rate, channels })
}

pub fn read_wav(path: &Path) -> Result<PcmAudio> {
    let bytes = fs::read(path).map_err(|e| Error::ingest(path, e.to_string()))?;
    decode_wav(&bytes, path)
}

/// Encodes interleaved PCM16 audio into WAV bytes.
pub fn encode_wav(audio: &PcmAudio) -> Result<Vec<u8>> {
    let spec = hound::WavSpec {
        channels: audio.channels.len() as u16,
        sample_rate: audio.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let frames = audio.channels.first().map_or(0, Vec::len);
    let mut buf = Cursor::new(Vec::with_capacity(44 + frames * audio.channels.len() * 2));
    {
        let mut w = hound::WavWriter::new(&mut buf, spec)
            .map_err(|e| Error::Argument(format!("wav encoder: {e}")))?;
        for t in 0..frames {
            for ch in &audio.channels {
                w.write_sample(ch[t]).map_err(|e| Error::Argument(format!("wav encoder: {e}")))?;
            }
        }
        w.finalize().map_err(|e| Error::Argument(format!("wav encoder: {e}")))?;
    }
    Ok(buf.into_inner())
}

pub fn write_wav(path: &Path, audio: &PcmAudio) -> Result<()> {
    fs::write(path, encode_wav(audio)?)?;
    Ok(())
}

fn parse_session_dir(name: &str) -> Option<u8> {
    let digits = name.strip_prefix("session_").or_else(|| name.strip_prefix("session")).unwrap_or(name);
    digits.parse().ok()
}

/// `<direction>_<recording>` or `<direction>_<recording>_ch<k>`.
fn parse_file_stem(stem: &str) -> Option<(Direction, u8, Option<usize>)> {
    let mut parts = stem.split('_');
    let dir: Direction = parts.next()?.parse().ok()?;
    let rec: u8 = parts.next()?.parse().ok()?;
    let ch = match parts.next() {
        None => None,
        Some(p) => Some(p.strip_prefix("ch")?.parse::<usize>().ok().filter(|k| (1..=NUM_CHANNELS).contains(k))?),
    };
    if parts.next().is_some() {
        return None;
    }
    Some((dir, rec, ch))
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::ingest(dir, e.to_string()))? {
        out.push(entry.map_err(|e| Error::ingest(dir, e.to_string()))?.path());
    }
    out.sort();
    Ok(out)
}

/// Loads every recording under `root` (see the module docs for the layout).
pub fn load_wav_sessions(root: &Path) -> Result<Vec<WaveformRecord>> {
    let mut records = Vec::new();
    for subject_dir in sorted_entries(root)?.into_iter().filter(|p| p.is_dir()) {
        let subject = subject_dir.file_name().unwrap_or_default().to_string_lossy().into_owned();
        for session_dir in sorted_entries(&subject_dir)?.into_iter().filter(|p| p.is_dir()) {
            let name = session_dir.file_name().unwrap_or_default().to_string_lossy().into_owned();
            let Some(session) = parse_session_dir(&name) else {
                log::warn!("skipping directory {}: not a session directory", session_dir.display());
                continue;
            };
            records.extend(load_session(&subject, session, &session_dir)?);
        }
    }
    if records.is_empty() {
        log::warn!("no recordings found under {}", root.display());
    }
    Ok(records)
}

fn load_session(subject: &str, session: u8, dir: &Path) -> Result<Vec<WaveformRecord>> {
    // (direction, recording) -> per-channel mono parts
    let mut mono: BTreeMap<(Direction, u8), Vec<Option<(PathBuf, PcmAudio)>>> = BTreeMap::new();
    let mut out = Vec::new();
    for path in sorted_entries(dir)? {
        let is_wav = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav"));
        if !is_wav {
            continue;
        }
        let stem = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        let Some((label, recording, ch)) = parse_file_stem(&stem) else {
            return Err(Error::ingest(&path, "file name does not follow <direction>_<recording>[_ch<k>].wav"));
        };
        let audio = read_wav(&path)?;
        let key = RecordKey { subject: subject.to_string(), session, label, recording };
        match ch {
            None => {
                if audio.channels.len() != NUM_CHANNELS {
                    return Err(Error::format(
                        &path,
                        format!("expected {NUM_CHANNELS} channels, found {}", audio.channels.len()),
                    ));
                }
                out.push(WaveformRecord::new(audio.channels, audio.sample_rate, key).map_err(|e| Error::ingest(&path, e.to_string()))?);
            }
            Some(k) => {
                if audio.channels.len() != 1 {
                    return Err(Error::format(&path, format!("expected mono, found {} channels", audio.channels.len())));
                }
                let slots = mono.entry((label, recording)).or_insert_with(|| vec![None; NUM_CHANNELS]);
                slots[k - 1] = Some((path, audio));
            }
        }
    }
    for ((label, recording), slots) in mono {
        let key = RecordKey { subject: subject.to_string(), session, label, recording };
        let missing: Vec<usize> = slots.iter().enumerate().filter(|(_, s)| s.is_none()).map(|(i, _)| i + 1).collect();
        if !missing.is_empty() {
            let path = dir.join(format!("{}_{}_ch{}.wav", label, recording, missing[0]));
            return Err(Error::ingest(path, format!("missing mono channel files {missing:?}")));
        }
        let parts: Vec<(PathBuf, PcmAudio)> = slots.into_iter().flatten().collect();
        let rate = parts[0].1.sample_rate;
        if let Some((p, _)) = parts.iter().find(|(_, a)| a.sample_rate != rate || a.channels[0].len() != parts[0].1.channels[0].len()) {
            return Err(Error::ingest(p, "mono channel files disagree in rate or length"));
        }
        let channels = parts.into_iter().map(|(_, mut a)| a.channels.pop().unwrap_or_default()).collect();
        out.push(WaveformRecord::new(channels, rate, key)?);
    }
    out.sort_by(|a, b| a.key().cmp(b.key()));
    Ok(out)
}

/// Writes records in the canonical 4-channel layout.
pub fn write_dataset(root: &Path, records: &[WaveformRecord]) -> Result<()> {
    for rec in records {
        let k = rec.key();
        let dir = root.join(&k.subject).join(format!("session_{}", k.session));
        fs::create_dir_all(&dir)?;
        let audio = PcmAudio { sample_rate: rec.sample_rate(), channels: rec.channels().to_vec() };
        write_wav(&dir.join(format!("{}_{}.wav", k.label, k.recording)), &audio)?;
    }
    Ok(())
}
