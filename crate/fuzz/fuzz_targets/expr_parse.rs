// SPDX-License-Identifier: Apache-2.0
#![no_main]

use ergo_core::expr::Expr;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(e) = Expr::parse(src) {
        // Evaluation must be total, NaN included.
        for x in [-1e300, -1.0, 0.0, 0.5, 1.0, 1e300, f64::NAN] {
            let _ = e.eval(x);
        }
        let _ = e.is_constant();
    }
});
