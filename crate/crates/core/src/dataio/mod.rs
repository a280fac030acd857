//! Vibration recordings: ingestion, preprocessing and dataset splits.

pub mod preprocess;
pub mod record;
pub mod split;
pub mod synth;
pub mod wav;

pub use preprocess::{augment_session, downsample, preprocess, truncate_window, PreprocessConfig};
pub use record::{Direction, GestureSample, RecordKey, SessionKey, WaveformRecord, NUM_CHANNELS, RAW_LEN, SAMPLE_RATE};
pub use split::{make_split, SplitData, SplitMethod, SplitPlan};
pub use synth::{synth_dataset, synth_record, SynthSpec};
pub use wav::{decode_wav, load_wav_sessions, read_wav, write_dataset, PcmAudio};
