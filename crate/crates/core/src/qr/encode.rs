//! QR construction used as the decoding oracle: segment encoding, block
//! interleaving, matrix assembly and rendering.

use super::format::{encode_format, FormatInfo};
use super::gf256::rs_encode;
use super::matrix::{data_coords, draw_function_patterns, format_positions, QrMatrix};
use super::tables::{block_structure, supported_version, ALPHANUMERIC};
use super::{EcLevel, QrError};
use crate::raster::Image;
use serde::Serialize;

/// Data encoding mode (Kanji and ECI are unsupported).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Numeric,
    Alphanumeric,
    Byte,
}

impl Mode {
    pub fn indicator(self) -> u32 {
        match self {
            Mode::Numeric => 0b0001,
            Mode::Alphanumeric => 0b0010,
            Mode::Byte => 0b0100,
        }
    }

    /// Character-count field width for versions 1..=9.
    pub fn count_bits(self) -> usize {
        match self {
            Mode::Numeric => 10,
            Mode::Alphanumeric => 9,
            Mode::Byte => 8,
        }
    }
}

/// Tightest mode that can carry the text.
pub fn choose_mode(text: &str) -> Mode {
    if !text.is_empty() && text.bytes().all(|b| b.is_ascii_digit()) {
        Mode::Numeric
    } else if !text.is_empty() && text.bytes().all(|b| ALPHANUMERIC.contains(&b)) {
        Mode::Alphanumeric
    } else {
        Mode::Byte
    }
}

#[derive(Default)]
struct BitWriter {
    bits: Vec<bool>,
}

impl BitWriter {
    fn push(&mut self, value: u32, count: usize) {
        for i in (0..count).rev() {
            self.bits.push(value & (1 << i) != 0);
        }
    }
}

fn alphanumeric_value(b: u8) -> u32 {
    ALPHANUMERIC
        .iter()
        .position(|&c| c == b)
        .expect("caller checked charset") as u32
}

fn segment_bits(text: &str, mode: Mode) -> Vec<bool> {
    let mut w = BitWriter::default();
    w.push(mode.indicator(), 4);
    match mode {
        Mode::Numeric => {
            w.push(text.len() as u32, mode.count_bits());
            let digits: Vec<u32> = text.bytes().map(|b| (b - b'0') as u32).collect();
            for chunk in digits.chunks(3) {
                match chunk {
                    [a, b, c] => w.push(a * 100 + b * 10 + c, 10),
                    [a, b] => w.push(a * 10 + b, 7),
                    [a] => w.push(*a, 4),
                    _ => unreachable!(),
                }
            }
        }
        Mode::Alphanumeric => {
            w.push(text.len() as u32, mode.count_bits());
            let values: Vec<u32> = text.bytes().map(alphanumeric_value).collect();
            for chunk in values.chunks(2) {
                match chunk {
                    [a, b] => w.push(a * 45 + b, 11),
                    [a] => w.push(*a, 6),
                    _ => unreachable!(),
                }
            }
        }
        Mode::Byte => {
            w.push(text.len() as u32, mode.count_bits());
            for b in text.bytes() {
                w.push(b as u32, 8);
            }
        }
    }
    w.bits
}

/// Assemble the interleaved data‖parity codeword stream for one segment.
pub fn build_codewords(
    text: &str,
    mode: Mode,
    version: u8,
    ec: EcLevel,
) -> Result<Vec<u8>, QrError> {
    let structure = block_structure(version, ec);
    let capacity_bits = structure.data_codewords * 8;
    let mut bits = segment_bits(text, mode);
    if bits.len() > capacity_bits {
        return Err(QrError::CapacityExceeded {
            needed_bits: bits.len(),
            available_bits: capacity_bits,
        });
    }
    let terminator = (capacity_bits - bits.len()).min(4);
    bits.extend(std::iter::repeat(false).take(terminator));
    while bits.len() % 8 != 0 {
        bits.push(false);
    }
    let mut data: Vec<u8> = bits
        .chunks(8)
        .map(|byte| byte.iter().fold(0u8, |acc, &b| (acc << 1) | b as u8))
        .collect();
    let mut pad = [0xEC, 0x11].iter().cycle();
    while data.len() < structure.data_codewords {
        data.push(*pad.next().unwrap());
    }

    let mut blocks: Vec<&[u8]> = Vec::new();
    let mut offset = 0;
    for len in structure.block_data_lengths() {
        blocks.push(&data[offset..offset + len]);
        offset += len;
    }
    let parities: Vec<Vec<u8>> = blocks
        .iter()
        .map(|b| rs_encode(b, structure.ec_per_block))
        .collect();

    let max_len = blocks.iter().map(|b| b.len()).max().unwrap_or(0);
    let mut out = Vec::with_capacity(super::tables::total_codewords(version));
    for i in 0..max_len {
        for block in &blocks {
            if i < block.len() {
                out.push(block[i]);
            }
        }
    }
    for i in 0..structure.ec_per_block {
        for parity in &parities {
            out.push(parity[i]);
        }
    }
    Ok(out)
}

/// Build the complete module grid for one payload.
pub fn encode_qr_matrix(
    text: &str,
    version: u8,
    ec: EcLevel,
    mask_id: u8,
    mode: Mode,
) -> Result<QrMatrix, QrError> {
    if !supported_version(version) {
        return Err(QrError::UnsupportedVersion(version as i32));
    }
    assert!(mask_id < 8, "mask id must be 0..8");
    let codewords = build_codewords(text, mode, version, ec)?;

    let mut m = QrMatrix::empty(version);
    draw_function_patterns(&mut m);
    for (i, (row, col)) in data_coords(version).into_iter().enumerate() {
        let bit = if i < codewords.len() * 8 {
            codewords[i / 8] & (0x80 >> (i % 8)) != 0
        } else {
            false // remainder bits
        };
        m.set(row, col, bit ^ super::format::mask_bit(mask_id, row, col));
    }

    let word = encode_format(FormatInfo { ec_level: ec, mask_id });
    let (copy_a, copy_b) = format_positions(m.size());
    for i in 0..15 {
        let bit = word & (1 << i) != 0;
        let (r, c) = copy_a[i];
        m.set(r, c, bit);
        let (r, c) = copy_b[i];
        m.set(r, c, bit);
    }
    Ok(m)
}

/// Render a matrix at `px_per_module` with a 4-module quiet zone; dark
/// modules are 0, background 255.
pub fn render_qr(m: &QrMatrix, px_per_module: u32) -> Image {
    assert!(px_per_module >= 1);
    let quiet = 4usize;
    let side = (m.size() + 2 * quiet) * px_per_module as usize;
    let mut img = Image::filled(side as u32, side as u32, 255);
    for row in 0..m.size() {
        for col in 0..m.size() {
            if m.get(row, col) {
                for dy in 0..px_per_module as usize {
                    for dx in 0..px_per_module as usize {
                        let x = ((quiet + col) * px_per_module as usize + dx) as u32;
                        let y = ((quiet + row) * px_per_module as usize + dy) as u32;
                        img.set(x, y, 0);
                    }
                }
            }
        }
    }
    img
}

/// End-to-end oracle: choose the tightest mode, build and render.
pub fn encode_qr(
    text: &str,
    version: u8,
    ec: EcLevel,
    mask_id: u8,
    px_per_module: u32,
) -> Result<Image, QrError> {
    let m = encode_qr_matrix(text, version, ec, mask_id, choose_mode(text))?;
    Ok(render_qr(&m, px_per_module))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_choice_tightens() {
        assert_eq!(choose_mode("9789352607990"), Mode::Numeric);
        assert_eq!(choose_mode("HELLO WORLD"), Mode::Alphanumeric);
        assert_eq!(choose_mode("hello"), Mode::Byte);
        assert_eq!(choose_mode(""), Mode::Byte);
    }

    #[test]
    fn codeword_count_matches_table() {
        for version in 1..=6u8 {
            for ec in [EcLevel::L, EcLevel::M, EcLevel::Q, EcLevel::H] {
                let cw = build_codewords("HI", Mode::Alphanumeric, version, ec).unwrap();
                assert_eq!(
                    cw.len(),
                    super::super::tables::total_codewords(version),
                    "v{version} {ec:?}"
                );
            }
        }
    }

    #[test]
    fn capacity_overflow_rejected() {
        let long = "A".repeat(600);
        assert!(matches!(
            build_codewords(&long, Mode::Alphanumeric, 1, EcLevel::H),
            Err(QrError::CapacityExceeded { .. })
        ));
    }

    #[test]
    fn render_dimensions_include_quiet_zone() {
        let m = encode_qr_matrix("42", 1, EcLevel::M, 3, Mode::Numeric).unwrap();
        let img = render_qr(&m, 4);
        assert_eq!(img.width(), ((21 + 8) * 4) as u32);
    }
}
