#![no_main]

use cyclevc::features::format::{format_manifest, parse_manifest};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(entries) = parse_manifest(text) {
        if entries.iter().all(|e| !e.utt_id.contains(['\n', '\r'])) {
            let _ = parse_manifest(&format_manifest(&entries));
        }
    }
});
