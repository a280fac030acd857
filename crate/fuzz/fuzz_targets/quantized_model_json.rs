#![no_main]

use libfuzzer_sys::fuzz_target;
use vibeswipe::quant::QuantizedModel;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(value) = QuantizedModel::from_json(text) {
        let json = value.to_json().expect("serializes");
        let again = QuantizedModel::from_json(&json).expect("own output parses");
        assert_eq!(again.to_json().expect("serializes"), json);
    }
});
