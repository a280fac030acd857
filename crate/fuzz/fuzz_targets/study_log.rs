#![no_main]

use libfuzzer_sys::fuzz_target;
use vibeswipe::search::read_study_log;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = read_study_log(text);
    }
});
