//! From-scratch EAN-13 / UPC-A decoding over image scanlines, with a
//! rendering encoder used as the test oracle.
//!
//! A symbol is 95 modules: `101` start guard, six L/G-encoded digits,
//! `01010` middle guard, six R-encoded digits, `101` end guard. The
//! leading digit is carried by the L/G parity pattern of the left half.
//! Decoding runs per scanline (run-length extraction, guard location,
//! per-digit pattern matching, mod-10 checksum) and an image-level
//! majority vote merges rows scanned in both directions.

use crate::raster::{self, Image};
use serde::Serialize;
use std::collections::HashMap;
use thiserror::Error;

/// Per-digit pattern match rejection threshold, in modules of total
/// absolute error over the digit's four runs. ±1 px run jitter at
/// 3 px/module perturbs a true digit by up to ~1.6 modules, while garbage
/// runs sit ≥ 2 modules from every table entry.
pub const DIGIT_ERROR_TOLERANCE: f64 = 1.75;

/// Accepted ratio range of a guard run to the local module estimate.
const GUARD_RUN_RANGE: (f64, f64) = (0.4, 2.1);

/// Accepted range for the symbol span measured in estimated modules
/// (nominally 95).
const SPAN_RANGE: (f64, f64) = (71.0, 124.0);

/// Rows sampled by [`decode_image`] when the caller does not override.
pub const DEFAULT_SCAN_ROWS: usize = 15;

#[derive(Debug, Error)]
pub enum BarcodeError {
    #[error("no symbol: scanline has {0} runs (need at least 3)")]
    NoSymbol(usize),
    #[error("no guard window found")]
    GuardsNotFound,
    #[error("digit {position} does not match any L/G/R pattern")]
    DigitPattern { position: usize },
    #[error("left-half parity pattern is not a valid first digit")]
    Parity,
    #[error("checksum mismatch")]
    Checksum,
    #[error("expected {expected} decimal digits, got \"{got}\"")]
    BadDigits { expected: usize, got: String },
    #[error("refusing to encode \"{0}\": check digit invalid")]
    EncodeChecksum(String),
    #[error("no row decoded to a checksum-valid payload")]
    NotFound,
}

/// Alternating bar/space run widths of one scanline.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunLengths {
    /// Color of `runs[0]`; runs alternate from there.
    pub first_is_bar: bool,
    pub runs: Vec<u32>,
    /// Sum of all runs == scanline width.
    pub total: u32,
}

impl RunLengths {
    #[inline]
    fn is_bar(&self, index: usize) -> bool {
        (index % 2 == 0) == self.first_is_bar
    }
}

/// Located symbol window inside a run sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolWindow {
    /// Index of the start guard's first bar run.
    pub start_run: usize,
    /// Index of the first middle-guard run (start_run + 27).
    pub middle_run: usize,
    /// Index of the end guard's first bar run (start_run + 56).
    pub end_run: usize,
    /// Module width estimate from the six guard runs, in pixels.
    pub module_px: f64,
    /// Pixel span of the whole 59-run window.
    pub span_px: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Symbology {
    Ean13,
    /// UPC-A read as EAN-13 with a leading zero.
    UpcAAsEan,
}

/// Decoded 13-digit payload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BarcodePayload {
    pub digits: String,
    pub symbology: Symbology,
    pub check_ok: bool,
}

// Run widths of the left-odd (L) digit patterns, space-first. The
// right-hand (R) patterns reuse the same widths bar-first; left-even (G)
// patterns are listed separately.
const L_WIDTHS: [[u8; 4]; 10] = [
    [3, 2, 1, 1], // 0001101
    [2, 2, 2, 1], // 0011001
    [2, 1, 2, 2], // 0010011
    [1, 4, 1, 1], // 0111101
    [1, 1, 3, 2], // 0100011
    [1, 2, 3, 1], // 0110001
    [1, 1, 1, 4], // 0101111
    [1, 3, 1, 2], // 0111011
    [1, 2, 1, 3], // 0110111
    [3, 1, 1, 2], // 0001011
];

const G_WIDTHS: [[u8; 4]; 10] = [
    [1, 1, 2, 3], // 0100111
    [1, 2, 2, 2], // 0110011
    [2, 2, 1, 2], // 0011011
    [1, 1, 4, 1], // 0100001
    [2, 3, 1, 1], // 0011101
    [1, 3, 2, 1], // 0111001
    [4, 1, 1, 1], // 0000101
    [2, 1, 3, 1], // 0010001
    [3, 1, 2, 1], // 0001001
    [2, 1, 1, 3], // 0010111
];

/// First-digit parity pattern over the six left digits; `false` = L,
/// `true` = G.
const PARITY: [[bool; 6]; 10] = [
    [false, false, false, false, false, false],
    [false, false, true, false, true, true],
    [false, false, true, true, false, true],
    [false, false, true, true, true, false],
    [false, true, false, false, true, true],
    [false, true, true, false, false, true],
    [false, true, true, true, false, false],
    [false, true, false, true, false, true],
    [false, true, false, true, true, false],
    [false, true, true, false, true, false],
];

fn parse_digits(text: &str, expected: usize) -> Result<Vec<u8>, BarcodeError> {
    let digits: Vec<u8> = text
        .bytes()
        .filter(|b| b.is_ascii_digit())
        .map(|b| b - b'0')
        .collect();
    if digits.len() != expected || text.len() != expected {
        return Err(BarcodeError::BadDigits {
            expected,
            got: text.to_owned(),
        });
    }
    Ok(digits)
}

/// Mod-10 check digit: weights 1,3,1,3,… left-to-right over 12 digits,
/// check = (10 − sum mod 10) mod 10.
pub fn compute_check_digit(digits12: &str) -> Result<u8, BarcodeError> {
    let digits = parse_digits(digits12, 12)?;
    let sum: u32 = digits
        .iter()
        .enumerate()
        .map(|(i, &d)| d as u32 * if i % 2 == 0 { 1 } else { 3 })
        .sum();
    Ok(((10 - sum % 10) % 10) as u8)
}

/// Whether a 13-digit string carries a valid check digit.
pub fn payload_check_ok(digits13: &str) -> bool {
    digits13.len() == 13
        && digits13.bytes().all(|b| b.is_ascii_digit())
        && compute_check_digit(&digits13[..12])
            .map_or(false, |c| digits13.as_bytes()[12] == c + b'0')
}

/// The 95-module bar pattern (true = bar) for a checksum-valid code.
pub fn ean13_modules(digits: &str) -> Result<[bool; 95], BarcodeError> {
    let values = parse_digits(digits, 13)?;
    if !payload_check_ok(digits) {
        return Err(BarcodeError::EncodeChecksum(digits.to_owned()));
    }
    let widths_to_bits = |widths: &[u8; 4], bar_first: bool| -> Vec<bool> {
        let mut bits = Vec::with_capacity(7);
        let mut bar = bar_first;
        for &w in widths {
            bits.extend(std::iter::repeat(bar).take(w as usize));
            bar = !bar;
        }
        bits
    };

    let mut modules = Vec::with_capacity(95);
    modules.extend([true, false, true]);
    let parity = PARITY[values[0] as usize];
    for (i, &d) in values[1..7].iter().enumerate() {
        let table = if parity[i] { &G_WIDTHS } else { &L_WIDTHS };
        modules.extend(widths_to_bits(&table[d as usize], false));
    }
    modules.extend([false, true, false, true, false]);
    for &d in &values[7..13] {
        modules.extend(widths_to_bits(&L_WIDTHS[d as usize], true));
    }
    modules.extend([true, false, true]);
    debug_assert_eq!(modules.len(), 95);
    Ok(modules.try_into().expect("95 modules"))
}

/// Render a checksum-valid EAN-13 as an image: bars are 0, background is
/// 255, `quiet_px` of background on each side.
pub fn encode_ean13(
    digits: &str,
    module_px: u32,
    quiet_px: u32,
    height_px: u32,
) -> Result<Image, BarcodeError> {
    assert!(module_px >= 1 && height_px >= 1);
    let modules = ean13_modules(digits)?;
    let width = 95 * module_px + 2 * quiet_px;
    let mut row = vec![255u8; width as usize];
    for (i, &bar) in modules.iter().enumerate() {
        if bar {
            let start = (quiet_px + i as u32 * module_px) as usize;
            row[start..start + module_px as usize].fill(0);
        }
    }
    let mut pixels = Vec::with_capacity((width * height_px) as usize);
    for _ in 0..height_px {
        pixels.extend_from_slice(&row);
    }
    Ok(Image::new(width, height_px, pixels).expect("valid dims"))
}

/// Binarize a scanline at `t` (≤ t is bar) and merge equal pixels into
/// runs. Leading/trailing space runs are retained.
pub fn runs_from_scanline(line: &[u8], t: u8) -> Result<RunLengths, BarcodeError> {
    if line.len() < 3 {
        return Err(BarcodeError::NoSymbol(line.len()));
    }
    let mut runs = Vec::new();
    let mut current_bar = line[0] <= t;
    let first_is_bar = current_bar;
    let mut len = 0u32;
    for &p in line {
        let bar = p <= t;
        if bar == current_bar {
            len += 1;
        } else {
            runs.push(len);
            current_bar = bar;
            len = 1;
        }
    }
    runs.push(len);
    if runs.len() < 3 {
        return Err(BarcodeError::NoSymbol(runs.len()));
    }
    Ok(RunLengths {
        first_is_bar,
        total: line.len() as u32,
        runs,
    })
}

fn guard_runs_ok(runs: &[u32], module: f64) -> bool {
    runs.iter().all(|&r| {
        let ratio = r as f64 / module;
        ratio >= GUARD_RUN_RANGE.0 && ratio <= GUARD_RUN_RANGE.1
    })
}

/// Find the 59-run symbol window: a bar-space-bar start guard whose
/// extrapolated span ends in a matching end guard with the five-run
/// middle guard between the halves. The module estimate is the average
/// of the six guard runs.
pub fn locate_guards(runs: &RunLengths) -> Result<SymbolWindow, BarcodeError> {
    let n = runs.runs.len();
    for start in 0..n {
        if !runs.is_bar(start) || start + 59 > n {
            continue;
        }
        let start_guard = &runs.runs[start..start + 3];
        let m_start = start_guard.iter().sum::<u32>() as f64 / 3.0;
        if !guard_runs_ok(start_guard, m_start) {
            continue;
        }
        // quiet zone: the symbol must not butt against earlier bars
        if start > 0 && (runs.runs[start - 1] as f64) < 2.0 * m_start {
            continue;
        }
        let end_guard = &runs.runs[start + 56..start + 59];
        if !guard_runs_ok(end_guard, m_start) {
            continue;
        }
        let module =
            (start_guard.iter().sum::<u32>() + end_guard.iter().sum::<u32>()) as f64 / 6.0;
        let middle = &runs.runs[start + 27..start + 32];
        if !guard_runs_ok(middle, module) {
            continue;
        }
        let span_px: u32 = runs.runs[start..start + 59].iter().sum();
        let span_modules = span_px as f64 / module;
        if span_modules < SPAN_RANGE.0 || span_modules > SPAN_RANGE.1 {
            continue;
        }
        return Ok(SymbolWindow {
            start_run: start,
            middle_run: start + 27,
            end_run: start + 56,
            module_px: module,
            span_px,
        });
    }
    Err(BarcodeError::GuardsNotFound)
}

/// Best (digit, is_g, total module error) match for four runs normalized
/// to seven modules. The left half considers L and G tables, the right
/// half only the shared L/R widths.
fn match_digit(quad: &[u32], left_half: bool) -> (u8, bool, f64) {
    let total: u32 = quad.iter().sum();
    let normalized: Vec<f64> = quad
        .iter()
        .map(|&r| r as f64 * 7.0 / total as f64)
        .collect();
    let mut best = (0u8, false, f64::INFINITY);
    let mut consider = |digit: u8, is_g: bool, pattern: &[u8; 4]| {
        let err: f64 = normalized
            .iter()
            .zip(pattern)
            .map(|(&n, &p)| (n - p as f64).abs())
            .sum();
        if err < best.2 {
            best = (digit, is_g, err);
        }
    };
    for d in 0..10u8 {
        consider(d, false, &L_WIDTHS[d as usize]);
        if left_half {
            consider(d, true, &G_WIDTHS[d as usize]);
        }
    }
    best
}

/// Decode the 12 pattern-encoded digits of a located window and recover
/// the first digit from the left-half parity pattern. The checksum is not
/// verified here.
pub fn decode_digits(
    runs: &RunLengths,
    window: &SymbolWindow,
) -> Result<BarcodePayload, BarcodeError> {
    let mut left = [0u8; 6];
    let mut parity = [false; 6];
    for k in 0..6 {
        let base = window.start_run + 3 + 4 * k;
        let (digit, is_g, err) = match_digit(&runs.runs[base..base + 4], true);
        if err > DIGIT_ERROR_TOLERANCE {
            return Err(BarcodeError::DigitPattern { position: k + 2 });
        }
        left[k] = digit;
        parity[k] = is_g;
    }
    let first = PARITY
        .iter()
        .position(|p| *p == parity)
        .ok_or(BarcodeError::Parity)? as u8;

    let mut right = [0u8; 6];
    for k in 0..6 {
        let base = window.middle_run + 5 + 4 * k;
        let (digit, _, err) = match_digit(&runs.runs[base..base + 4], false);
        if err > DIGIT_ERROR_TOLERANCE {
            return Err(BarcodeError::DigitPattern { position: k + 8 });
        }
        right[k] = digit;
    }

    let mut digits = String::with_capacity(13);
    digits.push((b'0' + first) as char);
    for &d in left.iter().chain(right.iter()) {
        digits.push((b'0' + d) as char);
    }
    let symbology = if first == 0 {
        Symbology::UpcAAsEan
    } else {
        Symbology::Ean13
    };
    Ok(BarcodePayload {
        digits,
        symbology,
        check_ok: false,
    })
}

/// Full decode of one scanline: per-line Otsu threshold, run extraction,
/// guard location, digit decode, checksum verification.
pub fn decode_scanline(line: &[u8]) -> Result<BarcodePayload, BarcodeError> {
    let hist = raster::histogram_of(line);
    let t = raster::otsu_threshold(&hist).map_err(|_| BarcodeError::NoSymbol(0))?;
    let runs = runs_from_scanline(line, t)?;
    let window = locate_guards(&runs)?;
    let mut payload = decode_digits(&runs, &window)?;
    if !payload_check_ok(&payload.digits) {
        return Err(BarcodeError::Checksum);
    }
    payload.check_ok = true;
    Ok(payload)
}

/// Scan `rows` evenly spaced rows plus the middle row, each in both
/// directions, and return the majority payload. With two or more
/// successful rows the winner needs at least two agreeing votes; a single
/// successful row is accepted on its checksum alone.
pub fn decode_image(img: &Image, rows: usize) -> Result<BarcodePayload, BarcodeError> {
    let rows = rows.max(1);
    let mut sample_rows: Vec<u32> = (0..rows)
        .map(|k| (((2 * k + 1) as u64 * img.height() as u64) / (2 * rows as u64)) as u32)
        .collect();
    sample_rows.push(img.height() / 2);
    sample_rows.sort_unstable();
    sample_rows.dedup();

    let mut votes: HashMap<String, usize> = HashMap::new();
    let mut successes = 0usize;
    for &row in &sample_rows {
        let line = img.row(row);
        let payload = decode_scanline(line).or_else(|_| {
            let mut reversed = line.to_vec();
            reversed.reverse();
            decode_scanline(&reversed)
        });
        if let Ok(p) = payload {
            successes += 1;
            *votes.entry(p.digits).or_insert(0) += 1;
        }
    }
    if successes == 0 {
        return Err(BarcodeError::NotFound);
    }
    let (winner, count) = votes
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .map(|(d, &c)| (d.clone(), c))
        .expect("successes > 0");
    if successes >= 2 && count < 2 {
        return Err(BarcodeError::NotFound);
    }
    if votes.values().filter(|&&c| c == count).count() > 1 {
        return Err(BarcodeError::NotFound);
    }
    let symbology = if winner.starts_with('0') {
        Symbology::UpcAAsEan
    } else {
        Symbology::Ean13
    };
    Ok(BarcodePayload {
        digits: winner,
        symbology,
        check_ok: true,
    })
}
