//! File emission: CSV with C-style `%.12e` numbers and pretty JSON.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use kpo_core::spectroscopy::{SignalGrid, Spectrum};
use serde::Serialize;

use crate::CliError;

/// Formats like C's `printf("%.12e", x)`: signed two-digit-minimum exponent.
pub fn fmt_e(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let s = format!("{x:.12e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent present");
    let (sign, digits) = match exp.strip_prefix('-') {
        Some(d) => ('-', d),
        None => ('+', exp),
    };
    format!("{mantissa}e{sign}{digits:0>2}")
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

/// Long-format signal table, one row per `(omega, tau)`.
pub fn signal_csv(grid: &SignalGrid) -> String {
    let mut out = String::from("omega,tau,expectation\n");
    for (w, row) in grid.omega.iter().zip(&grid.values) {
        for (t, v) in grid.tau.iter().zip(row) {
            let _ = writeln!(out, "{},{},{}", fmt_e(*w), fmt_e(*t), fmt_e(*v));
        }
    }
    out
}

/// Long-format spectrum table; bins with `|Omega| > max_frequency` are skipped.
pub fn spectrum_csv(spec: &Spectrum, max_frequency: Option<f64>) -> String {
    let keep: Vec<usize> =
        (0..spec.big_omega.len()).filter(|&k| max_frequency.map_or(true, |f| spec.big_omega[k].abs() <= f)).collect();
    let mut out = String::from("omega,Omega,power\n");
    for (w, row) in spec.omega.iter().zip(&spec.power) {
        for &k in &keep {
            let _ = writeln!(out, "{},{},{}", fmt_e(*w), fmt_e(spec.big_omega[k]), fmt_e(row[k]));
        }
    }
    out
}
