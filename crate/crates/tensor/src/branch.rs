//! Branch signatures for kink-aware finite differences.
//!
//! Piecewise ops (relu, abs, max-pool) fold each decision they take into a
//! thread-local hash while recording is on. Two evaluations with the same
//! signature took the same linear piece, so a central difference between them
//! does not straddle a kink.

use std::cell::Cell;

thread_local! {
    static RECORDING: Cell<bool> = const { Cell::new(false) };
    static SIGNATURE: Cell<u64> = const { Cell::new(0) };
}

#[inline]
fn mix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub(crate) fn is_recording() -> bool {
    RECORDING.with(Cell::get)
}

/// Folds one decision into the current signature (no-op unless recording).
#[inline]
pub fn note_branch(decision: u64) {
    if is_recording() {
        SIGNATURE.with(|s| s.set(mix(s.get() ^ decision)));
    }
}

/// Runs `f` and returns its result with the signature of all branch
/// decisions taken inside.
pub fn with_branch_recording<R>(f: impl FnOnce() -> R) -> (R, u64) {
    let prev_rec = RECORDING.with(|r| r.replace(true));
    let prev_sig = SIGNATURE.with(|s| s.replace(0));
    let out = f();
    let sig = SIGNATURE.with(|s| s.replace(prev_sig));
    RECORDING.with(|r| r.set(prev_rec));
    (out, sig)
}
