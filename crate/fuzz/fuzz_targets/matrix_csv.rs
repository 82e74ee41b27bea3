// SPDX-License-Identifier: Apache-2.0
#![no_main]

use ergo_core::config::parse_matrix_csv;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = parse_matrix_csv(data) {
        for k in 0..m.times.len() {
            let _ = m.column(k);
        }
    }
});
