// SPDX-License-Identifier: Apache-2.0
#![no_main]

use ergo_core::config::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = ExperimentConfig::from_json(src) {
        let _ = cfg.resolve_kind(None);
        let _ = cfg.require_model();
        let _ = cfg.require_sim();
    }
});
