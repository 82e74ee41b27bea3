// SPDX-License-Identifier: Apache-2.0
#![no_main]

use ergo_core::config::model_from_json;
use ergo_core::model::validate_monotone;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(model) = model_from_json(src) {
        let w = model.domain().validation_window();
        if let Ok(grid) = w.grid(33) {
            let _ = validate_monotone(&model, &grid);
        }
    }
});
