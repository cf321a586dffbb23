//! IO companion of `aw-core`: JSON and CSV file formats, the thread-pooled
//! job runner, and the pieces of the `aw` binary that integration tests
//! exercise directly.

pub mod formats;
pub mod runner;

/// Formats a value with twelve significant digits in plain decimal notation,
/// the output contract of every command.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return String::from("0.000000000000");
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (11 - magnitude).clamp(0, 30) as usize;
    format!("{x:.decimals$}")
}
