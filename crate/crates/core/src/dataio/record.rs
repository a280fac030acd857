use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SAMPLE_RATE: u32 = 44_100;
pub const NUM_CHANNELS: usize = 4;
/// Raw gesture length per channel: 2 s at 44.1 kHz.
pub const RAW_LEN: usize = 88_200;
pub const MAX_SESSION: u8 = 9;

/// Swipe direction; the class index follows declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::Up, Direction::Down, Direction::Left, Direction::Right];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Direction> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
            Direction::Left => "left",
            Direction::Right => "right",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "up" => Ok(Direction::Up),
            "down" => Ok(Direction::Down),
            "left" => Ok(Direction::Left),
            "right" => Ok(Direction::Right),
            other => Err(Error::Argument(format!("unknown direction {other:?}"))),
        }
    }
}

/// Identifies one gesture recording: subject (person or table), session and
/// recording number within the session.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RecordKey {
    pub subject: String,
    pub session: u8,
    pub label: Direction,
    pub recording: u8,
}

impl RecordKey {
    pub fn session_key(&self) -> SessionKey {
        SessionKey { subject: self.subject.clone(), session: self.session }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SessionKey {
    pub subject: String,
    pub session: u8,
}

/// One multichannel PCM16 recording of a single gesture.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveformRecord {
    channels: Vec<Vec<i16>>,
    sample_rate: u32,
    key: RecordKey,
}

impl WaveformRecord {
    pub fn new(channels: Vec<Vec<i16>>, sample_rate: u32, key: RecordKey) -> Result<Self> {
        if channels.len() != NUM_CHANNELS {
            return Err(Error::Argument(format!(
                "expected {NUM_CHANNELS} channels, got {}",
                channels.len()
            )));
        }
        let len = channels[0].len();
        if channels.iter().any(|c| c.len() != len) {
            return Err(Error::Argument("channels have unequal lengths".into()));
        }
        if key.session == 0 || key.session > MAX_SESSION {
            return Err(Error::Argument(format!("session {} outside 1..={MAX_SESSION}", key.session)));
        }
        if sample_rate == 0 {
            return Err(Error::Argument("sample rate must be positive".into()));
        }
        Ok(WaveformRecord { channels, sample_rate, key })
    }

    pub fn channels(&self) -> &[Vec<i16>] {
        &self.channels
    }

    pub fn channel_len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn total_samples(&self) -> usize {
        self.channel_len() * self.channels.len()
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn key(&self) -> &RecordKey {
        &self.key
    }

    pub fn label(&self) -> Direction {
        self.key.label
    }

    pub(crate) fn with_channels(&self, channels: Vec<Vec<i16>>) -> WaveformRecord {
        WaveformRecord { channels, sample_rate: self.sample_rate, key: self.key.clone() }
    }
}

/// A fixed-length window of a decimated recording: the unit of training and
/// inference. Samples are kept as the original int16 codes in time-major
/// (L, C) order; [`GestureSample::value`] gives the normalized real value.
#[derive(Debug, Clone, PartialEq)]
pub struct GestureSample {
    codes: Vec<i16>,
    len: usize,
    channels: usize,
    pub label: usize,
    pub phase: usize,
    pub key: RecordKey,
}

impl GestureSample {
    pub fn new(codes: Vec<i16>, len: usize, channels: usize, label: usize, phase: usize, key: RecordKey) -> Result<Self> {
        if codes.len() != len * channels {
            return Err(Error::Shape(format!("{} codes for a {len}x{channels} sample", codes.len())));
        }
        Ok(GestureSample { codes, len, channels, label, phase, key })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn codes(&self) -> &[i16] {
        &self.codes
    }

    pub fn code(&self, t: usize, c: usize) -> i16 {
        self.codes[t * self.channels + c]
    }

    pub fn value(&self, t: usize, c: usize) -> f64 {
        normalize(self.code(t, c))
    }

    /// Normalized values in time-major order.
    pub fn to_real(&self) -> Vec<f64> {
        self.codes.iter().map(|&c| normalize(c)).collect()
    }
}

#[inline]
pub fn normalize(code: i16) -> f64 {
    code as f64 / 32768.0
}
