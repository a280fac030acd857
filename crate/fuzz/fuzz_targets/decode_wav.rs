#![no_main]

use std::path::Path;

use libfuzzer_sys::fuzz_target;
use vibeswipe::dataio::decode_wav;

fuzz_target!(|data: &[u8]| {
    if let Ok(audio) = decode_wav(data, Path::new("fuzz.wav")) {
        let frames = audio.channels[0].len();
        assert!(audio.channels.iter().all(|c| c.len() == frames));
    }
});
