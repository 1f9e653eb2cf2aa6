//! QR decoding: finder-pattern location, affine grid sampling, format
//! decode, codeword extraction and segment parsing.

use super::encode::Mode;
use super::format::{decode_format, FormatInfo};
use super::gf256::rs_decode;
use super::matrix::{
    alignment_module_dark, data_coords, format_positions, QrMatrix,
};
use super::tables::{
    alignment_coord, block_structure, size_for_version, total_codewords, ALPHANUMERIC,
    MAX_VERSION, MIN_VERSION,
};
use super::QrError;
use crate::raster::{binarize, histogram, otsu_threshold, Bitmap, Image, InkPolarity};

/// The three located finder centers (pixel point coordinates) and the
/// module size estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct FinderPatterns {
    pub top_left: (f64, f64),
    pub top_right: (f64, f64),
    pub bottom_left: (f64, f64),
    pub module_px: f64,
}

/// Module estimate if five runs fit 1:1:3:1:1 within ±50% per element.
fn check_ratios(widths: [u32; 5]) -> Option<f64> {
    let total: u32 = widths.iter().sum();
    if total < 7 {
        return None;
    }
    let m = total as f64 / 7.0;
    let expected = [1.0, 1.0, 3.0, 1.0, 1.0];
    for (w, e) in widths.iter().zip(expected) {
        let lo = 0.5 * e * m;
        let hi = 1.5 * e * m;
        if (*w as f64) < lo || (*w as f64) > hi {
            return None;
        }
    }
    Some(m)
}

struct RowRun {
    ink: bool,
    start: u32,
    len: u32,
}

fn row_runs(bitmap: &Bitmap, y: u32) -> Vec<RowRun> {
    let mut runs: Vec<RowRun> = Vec::new();
    for x in 0..bitmap.width() {
        let ink = bitmap.is_ink(x, y);
        match runs.last_mut() {
            Some(last) if last.ink == ink => last.len += 1,
            _ => runs.push(RowRun { ink, start: x, len: 1 }),
        }
    }
    runs
}

fn run_length(bitmap: &Bitmap, mut x: i64, mut y: i64, dx: i64, dy: i64, want: bool, cap: u32) -> u32 {
    let mut len = 0u32;
    while x >= 0
        && y >= 0
        && (x as u32) < bitmap.width()
        && (y as u32) < bitmap.height()
        && bitmap.is_ink(x as u32, y as u32) == want
        && len <= cap
    {
        len += 1;
        x += dx;
        y += dy;
    }
    len
}

/// Check the 1:1:3:1:1 structure through (cx, cy) along one ray direction.
/// Returns the signed offset (in steps along the ray) from (cx, cy) to the
/// center of the middle run.
fn cross_check_ray(bitmap: &Bitmap, cx: u32, cy: u32, dx: i64, dy: i64) -> Option<f64> {
    if !bitmap.is_ink(cx, cy) {
        return None;
    }
    let (x, y) = (cx as i64, cy as i64);
    let no_cap = bitmap.width().max(bitmap.height());
    let core_fwd = run_length(bitmap, x, y, dx, dy, true, no_cap);
    let core_back = run_length(bitmap, x - dx, y - dy, -dx, -dy, true, no_cap);
    let core = core_fwd + core_back;
    let cap = core.saturating_mul(3).max(3);

    let step = |n: u32, sign: i64| (x + dx * sign * n as i64, y + dy * sign * n as i64);
    let (fx, fy) = step(core_fwd, 1);
    let light_fwd = run_length(bitmap, fx, fy, dx, dy, false, cap);
    if light_fwd == 0 || light_fwd > cap {
        return None;
    }
    let (fx, fy) = step(core_fwd + light_fwd, 1);
    let ink_fwd = run_length(bitmap, fx, fy, dx, dy, true, cap);
    if ink_fwd == 0 || ink_fwd > cap {
        return None;
    }
    let (bx, by) = step(core_back + 1, -1);
    let light_back = run_length(bitmap, bx, by, -dx, -dy, false, cap);
    if light_back == 0 || light_back > cap {
        return None;
    }
    let (bx, by) = step(core_back + light_back + 1, -1);
    let ink_back = run_length(bitmap, bx, by, -dx, -dy, true, cap);
    if ink_back == 0 || ink_back > cap {
        return None;
    }

    check_ratios([ink_back, light_back, core, light_fwd, ink_fwd])?;
    // core occupies offsets [-core_back, core_fwd - 1]
    Some((core_fwd as f64 - 1.0 - core_back as f64) / 2.0)
}

/// Sample the full 7×7 module footprint around a candidate center: dark
/// border ring, light inner ring, dark 3×3 core. Up to seven mismatches
/// are tolerated for rotated or noisy symbols; chance data patterns never
/// get close.
fn verify_finder_footprint(bitmap: &Bitmap, cx: f64, cy: f64, module: f64) -> bool {
    let mut matches = 0;
    for dr in -3i32..=3 {
        for dc in -3i32..=3 {
            let expected = if dr.abs() == 3 || dc.abs() == 3 {
                true
            } else {
                !(dr.abs() == 2 || dc.abs() == 2)
            };
            let x = cx + dc as f64 * module;
            let y = cy + dr as f64 * module;
            if x < 0.0 || y < 0.0 || x >= bitmap.width() as f64 || y >= bitmap.height() as f64 {
                continue;
            }
            if bitmap.is_ink(x as u32, y as u32) == expected {
                matches += 1;
            }
        }
    }
    matches >= 42
}

struct Cluster {
    sum_x: f64,
    sum_y: f64,
    sum_m: f64,
    hits: usize,
}

impl Cluster {
    fn center(&self) -> (f64, f64) {
        (self.sum_x / self.hits as f64, self.sum_y / self.hits as f64)
    }

    fn module(&self) -> f64 {
        self.sum_m / self.hits as f64
    }
}

/// Scan every row for 1:1:3:1:1 windows; confirm each hit vertically,
/// re-confirm horizontally at the refined row, and require both diagonals
/// to show the same structure (this rejects chance hits in the data
/// region). Confirmed centers are clustered and exactly three must remain.
pub fn find_finder_patterns(bitmap: &Bitmap) -> Result<FinderPatterns, QrError> {
    let mut clusters: Vec<Cluster> = Vec::new();
    for y in 0..bitmap.height() {
        let runs = row_runs(bitmap, y);
        for w in runs.windows(5) {
            if !w[0].ink {
                continue;
            }
            let widths = [w[0].len, w[1].len, w[2].len, w[3].len, w[4].len];
            let Some(m) = check_ratios(widths) else {
                continue;
            };
            let cx0 = w[2].start as f64 + w[2].len as f64 / 2.0;
            let col = (cx0.floor() as u32).min(bitmap.width() - 1);
            let Some(dy_off) = cross_check_ray(bitmap, col, y, 0, 1) else {
                continue;
            };
            let cy = y as f64 + 0.5 + dy_off;
            let row = (cy.floor().max(0.0) as u32).min(bitmap.height() - 1);
            let Some(dx_off) = cross_check_ray(bitmap, col, row, 1, 0) else {
                continue;
            };
            let cx = col as f64 + 0.5 + dx_off;
            let (px, py) = (
                (cx.floor().max(0.0) as u32).min(bitmap.width() - 1),
                (cy.floor().max(0.0) as u32).min(bitmap.height() - 1),
            );
            if cross_check_ray(bitmap, px, py, 1, 1).is_none()
                || cross_check_ray(bitmap, px, py, 1, -1).is_none()
            {
                continue;
            }
            if !verify_finder_footprint(bitmap, cx, cy, m) {
                continue;
            }
            let radius = (3.0 * m).max(3.0);
            match clusters.iter_mut().find(|c| {
                let (px, py) = c.center();
                (px - cx).powi(2) + (py - cy).powi(2) <= radius * radius
            }) {
                Some(c) => {
                    c.sum_x += cx;
                    c.sum_y += cy;
                    c.sum_m += m;
                    c.hits += 1;
                }
                None => clusters.push(Cluster {
                    sum_x: cx,
                    sum_y: cy,
                    sum_m: m,
                    hits: 1,
                }),
            }
        }
    }
    clusters.retain(|c| c.hits >= 2);
    if clusters.len() != 3 {
        return Err(QrError::Finder {
            found: clusters.len(),
        });
    }

    let pts: Vec<(f64, f64)> = clusters.iter().map(Cluster::center).collect();
    let d2 = |a: (f64, f64), b: (f64, f64)| (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2);
    let pair_dists = [d2(pts[1], pts[2]), d2(pts[0], pts[2]), d2(pts[0], pts[1])];
    // the corner opposite the longest side is the top-left
    let tl_idx = pair_dists
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap();
    let tl = pts[tl_idx];
    let others: Vec<(f64, f64)> = (0..3).filter(|&i| i != tl_idx).map(|i| pts[i]).collect();
    let (mut tr, mut bl) = (others[0], others[1]);
    // image coordinates: x right, y down; the proper (TR, BL) order makes
    // the cross product positive
    let cross =
        (tr.0 - tl.0) * (bl.1 - tl.1) - (tr.1 - tl.1) * (bl.0 - tl.0);
    if cross < 0.0 {
        std::mem::swap(&mut tr, &mut bl);
    }
    let module_px = clusters.iter().map(Cluster::module).sum::<f64>() / 3.0;
    Ok(FinderPatterns {
        top_left: tl,
        top_right: tr,
        bottom_left: bl,
        module_px,
    })
}

/// Estimate the version from the finder spacing, map module centers
/// through the affine frame of the three centers, and sample the grid.
/// For version ≥ 2 the alignment pattern is checked as a sanity gate.
pub fn sample_grid(bitmap: &Bitmap, finders: &FinderPatterns) -> Result<QrMatrix, QrError> {
    let dist = |a: (f64, f64), b: (f64, f64)| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
    let est = |d: f64| (d / finders.module_px - 10.0) / 4.0;
    let v_top = est(dist(finders.top_left, finders.top_right));
    let v_left = est(dist(finders.top_left, finders.bottom_left));
    let version_f = (v_top + v_left) / 2.0;
    let version = version_f.round() as i32;
    if version < MIN_VERSION as i32 || version > MAX_VERSION as i32 {
        return Err(QrError::UnsupportedVersion(version));
    }
    let version = version as u8;
    let size = size_for_version(version);
    let span = (size - 7) as f64;
    let tl = finders.top_left;
    let ex = (
        (finders.top_right.0 - tl.0) / span,
        (finders.top_right.1 - tl.1) / span,
    );
    let ey = (
        (finders.bottom_left.0 - tl.0) / span,
        (finders.bottom_left.1 - tl.1) / span,
    );

    let mut modules = Vec::with_capacity(size * size);
    for row in 0..size {
        for col in 0..size {
            let u = col as f64 + 0.5 - 3.5;
            let v = row as f64 + 0.5 - 3.5;
            let x = tl.0 + ex.0 * u + ey.0 * v;
            let y = tl.1 + ex.1 * u + ey.1 * v;
            let px = (x.floor().max(0.0) as u32).min(bitmap.width() - 1);
            let py = (y.floor().max(0.0) as u32).min(bitmap.height() - 1);
            modules.push(bitmap.is_ink(px, py));
        }
    }
    let matrix = QrMatrix::from_modules(version, modules);

    if let Some(center) = alignment_coord(version) {
        let mut matches = 0;
        for dr in 0..5 {
            for dc in 0..5 {
                let sampled = matrix.get(center - 2 + dr, center - 2 + dc);
                if sampled == alignment_module_dark(dr, dc) {
                    matches += 1;
                }
            }
        }
        if matches < 15 {
            return Err(QrError::GridSanity { matches });
        }
    }
    Ok(matrix)
}

/// Read both 15-bit format copies and BCH-decode them.
pub fn decode_format_info(m: &QrMatrix) -> Result<FormatInfo, QrError> {
    let (copy_a, copy_b) = format_positions(m.size());
    let mut word_a = 0u16;
    let mut word_b = 0u16;
    for i in 0..15 {
        let (r, c) = copy_a[i];
        if m.get(r, c) {
            word_a |= 1 << i;
        }
        let (r, c) = copy_b[i];
        if m.get(r, c) {
            word_b |= 1 << i;
        }
    }
    decode_format(word_a, word_b)
}

/// Zigzag-read the interleaved codeword stream from an unmasked matrix.
/// The count is structurally fixed by the version; remainder bits are
/// dropped.
pub fn extract_codewords(m: &QrMatrix) -> Vec<u8> {
    let n = total_codewords(m.version());
    let mut bytes = vec![0u8; n];
    for (i, (row, col)) in data_coords(m.version()).into_iter().enumerate() {
        if i >= n * 8 {
            break;
        }
        if m.get(row, col) {
            bytes[i / 8] |= 0x80 >> (i % 8);
        }
    }
    bytes
}

/// One error-correction block: data codewords followed by parity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockCodewords {
    pub data_len: usize,
    pub codewords: Vec<u8>,
}

/// Undo the round-robin interleaving of data and parity codewords.
pub fn split_blocks(stream: &[u8], version: u8, ec: super::EcLevel) -> Vec<BlockCodewords> {
    let structure = block_structure(version, ec);
    let lengths = structure.block_data_lengths();
    let mut datas: Vec<Vec<u8>> = lengths.iter().map(|&l| Vec::with_capacity(l)).collect();
    let mut pos = 0usize;
    let max_len = *lengths.iter().max().unwrap();
    for i in 0..max_len {
        for (b, &len) in datas.iter_mut().zip(&lengths) {
            if i < len {
                b.push(stream[pos]);
                pos += 1;
            }
        }
    }
    let mut parities: Vec<Vec<u8>> = vec![Vec::with_capacity(structure.ec_per_block); lengths.len()];
    for _ in 0..structure.ec_per_block {
        for p in parities.iter_mut() {
            p.push(stream[pos]);
            pos += 1;
        }
    }
    datas
        .into_iter()
        .zip(parities)
        .map(|(d, p)| {
            let data_len = d.len();
            let mut codewords = d;
            codewords.extend(p);
            BlockCodewords {
                data_len,
                codewords,
            }
        })
        .collect()
}

/// Decoded payload with the modes encountered along the stream.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct SegmentData {
    pub text: String,
    pub modes: Vec<Mode>,
}

struct BitReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> BitReader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() * 8 - self.pos
    }

    fn read(&mut self, n: usize) -> Result<u32, QrError> {
        if self.remaining() < n {
            return Err(QrError::TruncatedData);
        }
        let mut out = 0u32;
        for _ in 0..n {
            let byte = self.bytes[self.pos / 8];
            let bit = byte & (0x80 >> (self.pos % 8)) != 0;
            out = (out << 1) | bit as u32;
            self.pos += 1;
        }
        Ok(out)
    }
}

/// Parse the corrected data bitstream: mode indicator, count field,
/// mode-specific payload, until terminator or exhaustion.
pub fn parse_segments(data: &[u8], _version: u8) -> Result<SegmentData, QrError> {
    let mut r = BitReader {
        bytes: data,
        pos: 0,
    };
    let mut text = String::new();
    let mut modes = Vec::new();
    loop {
        if r.remaining() < 4 {
            break;
        }
        let indicator = r.read(4)?;
        let mode = match indicator {
            0b0000 => break,
            0b0001 => Mode::Numeric,
            0b0010 => Mode::Alphanumeric,
            0b0100 => Mode::Byte,
            other => return Err(QrError::UnsupportedMode(other as u8)),
        };
        let mut count = r.read(mode.count_bits())? as usize;
        match mode {
            Mode::Numeric => {
                while count >= 3 {
                    let v = r.read(10)?;
                    if v > 999 {
                        return Err(QrError::MalformedSegment("numeric triple out of range"));
                    }
                    text.push_str(&format!("{v:03}"));
                    count -= 3;
                }
                if count == 2 {
                    let v = r.read(7)?;
                    if v > 99 {
                        return Err(QrError::MalformedSegment("numeric pair out of range"));
                    }
                    text.push_str(&format!("{v:02}"));
                } else if count == 1 {
                    let v = r.read(4)?;
                    if v > 9 {
                        return Err(QrError::MalformedSegment("numeric digit out of range"));
                    }
                    text.push_str(&format!("{v}"));
                }
            }
            Mode::Alphanumeric => {
                while count >= 2 {
                    let v = r.read(11)?;
                    let (a, b) = (v / 45, v % 45);
                    if a > 44 {
                        return Err(QrError::MalformedSegment("alphanumeric pair out of range"));
                    }
                    text.push(ALPHANUMERIC[a as usize] as char);
                    text.push(ALPHANUMERIC[b as usize] as char);
                    count -= 2;
                }
                if count == 1 {
                    let v = r.read(6)?;
                    if v > 44 {
                        return Err(QrError::MalformedSegment("alphanumeric value out of range"));
                    }
                    text.push(ALPHANUMERIC[v as usize] as char);
                }
            }
            Mode::Byte => {
                let mut bytes = Vec::with_capacity(count);
                for _ in 0..count {
                    bytes.push(r.read(8)? as u8);
                }
                text.push_str(&String::from_utf8_lossy(&bytes));
            }
        }
        modes.push(mode);
    }
    Ok(SegmentData { text, modes })
}

/// Full decode result.
#[derive(Debug, Clone, PartialEq)]
pub struct QrDecoded {
    pub segments: SegmentData,
    pub version: u8,
    pub format: FormatInfo,
    /// Total Reed–Solomon byte corrections across all blocks.
    pub corrections: usize,
}

/// The whole stack: binarize, locate, sample, format-decode, unmask,
/// extract, error-correct, parse. The first failing stage's error
/// carries its stage name.
pub fn decode_qr_image(img: &Image) -> Result<QrDecoded, QrError> {
    let t = otsu_threshold(&histogram(img)).map_err(|_| QrError::Finder { found: 0 })?;
    let bitmap = binarize(img, t, InkPolarity::Dark);
    let finders = find_finder_patterns(&bitmap)?;
    let sampled = sample_grid(&bitmap, &finders)?;
    let format = decode_format_info(&sampled)?;
    let unmasked = sampled.unmask(format.mask_id);
    let stream = extract_codewords(&unmasked);
    let blocks = split_blocks(&stream, sampled.version(), format.ec_level);
    let mut data = Vec::new();
    let mut corrections = 0usize;
    for (i, block) in blocks.iter().enumerate() {
        let n_ec = block.codewords.len() - block.data_len;
        let (corrected, fixed) =
            rs_decode(&block.codewords, n_ec).map_err(|_| QrError::Uncorrectable { block: i })?;
        corrections += fixed;
        data.extend(corrected);
    }
    let segments = parse_segments(&data, sampled.version())?;
    Ok(QrDecoded {
        segments,
        version: sampled.version(),
        format,
        corrections,
    })
}

