#![no_main]

use labordemand::model::Calibration;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(c) = Calibration::from_json(s) {
            let _ = c.solve();
        }
    }
});
