#![no_main]

use libfuzzer_sys::fuzz_target;
use vibeswipe::accel::{emit_netlist, parse_netlist};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(design) = parse_netlist(text) {
        let again = parse_netlist(&emit_netlist(&design)).expect("emitted netlist parses");
        assert_eq!(emit_netlist(&again), emit_netlist(&design));
    }
});
