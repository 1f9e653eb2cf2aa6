//! From-scratch QR decoding (versions 1–6, single symbol, affine
//! rectification) plus the construction oracle the tests verify against.
//!
//! Decode pipeline: binarize → finder patterns → grid sampling → format
//! info → unmask → codeword extraction → Reed–Solomon per block →
//! segment parsing.

mod decode;
mod encode;
pub mod format;
pub mod gf256;
mod matrix;
pub mod tables;

pub use decode::{
    decode_format_info, decode_qr_image, extract_codewords, find_finder_patterns, parse_segments,
    sample_grid, split_blocks, BlockCodewords, FinderPatterns, QrDecoded, SegmentData,
};
pub use encode::{build_codewords, choose_mode, encode_qr, encode_qr_matrix, render_qr, Mode};
pub use format::FormatInfo;
pub use gf256::{rs_decode, rs_encode};
pub use matrix::QrMatrix;

use thiserror::Error;

/// Error-correction level, ordered by increasing redundancy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EcLevel {
    L,
    M,
    Q,
    H,
}

impl EcLevel {
    pub const ALL: [EcLevel; 4] = [EcLevel::L, EcLevel::M, EcLevel::Q, EcLevel::H];

    /// Two-bit encoding used in the format field.
    pub fn format_bits(self) -> u8 {
        match self {
            EcLevel::L => 0b01,
            EcLevel::M => 0b00,
            EcLevel::Q => 0b11,
            EcLevel::H => 0b10,
        }
    }

    pub fn from_format_bits(bits: u8) -> Self {
        match bits & 0b11 {
            0b01 => EcLevel::L,
            0b00 => EcLevel::M,
            0b11 => EcLevel::Q,
            _ => EcLevel::H,
        }
    }

    pub(crate) fn table_index(self) -> usize {
        match self {
            EcLevel::L => 0,
            EcLevel::M => 1,
            EcLevel::Q => 2,
            EcLevel::H => 3,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum QrError {
    #[error("finder: found {found} finder patterns, need exactly 3")]
    Finder { found: usize },
    #[error("sample: estimated version {0} outside supported 1..=6")]
    UnsupportedVersion(i32),
    #[error("sample: alignment pattern agrees on only {matches}/25 modules")]
    GridSanity { matches: usize },
    #[error("format: both copies beyond Hamming distance 3 (best {distance})")]
    Format { distance: u32 },
    #[error("rs: block {block} has more errors than its parity can correct")]
    Uncorrectable { block: usize },
    #[error("segments: unsupported mode indicator {0:#06b}")]
    UnsupportedMode(u8),
    #[error("segments: bitstream exhausted mid-segment")]
    TruncatedData,
    #[error("segments: {0}")]
    MalformedSegment(&'static str),
    #[error("encode: payload needs {needed_bits} bits, version/EC hold {available_bits}")]
    CapacityExceeded {
        needed_bits: usize,
        available_bits: usize,
    },
}

impl QrError {
    /// Pipeline stage the error belongs to.
    pub fn stage(&self) -> &'static str {
        match self {
            QrError::Finder { .. } => "finder",
            QrError::UnsupportedVersion(_) | QrError::GridSanity { .. } => "sample",
            QrError::Format { .. } => "format",
            QrError::Uncorrectable { .. } => "rs",
            QrError::UnsupportedMode(_)
            | QrError::TruncatedData
            | QrError::MalformedSegment(_) => "segments",
            QrError::CapacityExceeded { .. } => "encode",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::matrix::draw_function_patterns;
    use super::*;
    use crate::raster::{binarize, histogram, otsu_threshold, Image, InkPolarity};

    #[test]
    fn full_round_trip_byte_mode() {
        let img = encode_qr("HELLO", 1, EcLevel::M, 4, 4).unwrap();
        // force byte mode explicitly as well
        let m = encode_qr_matrix("HELLO", 2, EcLevel::Q, 1, Mode::Byte).unwrap();
        for image in [img, render_qr(&m, 4)] {
            let decoded = decode_qr_image(&image).unwrap();
            assert_eq!(decoded.segments.text, "HELLO");
            assert_eq!(decoded.corrections, 0);
        }
    }

    #[test]
    fn numeric_mode_carries_isbn_digits() {
        let img = encode_qr("9789352607990", 1, EcLevel::M, 0, 4).unwrap();
        let decoded = decode_qr_image(&img).unwrap();
        assert_eq!(decoded.segments.text, "9789352607990");
        assert_eq!(decoded.segments.modes, vec![Mode::Numeric]);
    }

    #[test]
    fn url_payload_round_trips() {
        let url = "https://www.flipkart.com/object-oriented-programming-c/p/itextjtdgcu6";
        let img = encode_qr(url, 5, EcLevel::M, 2, 4).unwrap();
        let decoded = decode_qr_image(&img).unwrap();
        assert_eq!(decoded.segments.text, url);
        assert_eq!(decoded.segments.modes, vec![Mode::Byte]);
    }

    #[test]
    fn blank_image_fails_at_finder_stage() {
        let img = Image::filled(80, 80, 255);
        let err = decode_qr_image(&img).unwrap_err();
        assert_eq!(err, QrError::Finder { found: 0 });
        assert_eq!(err.stage(), "finder");
    }

    #[test]
    fn finder_centers_near_ground_truth_version2() {
        let m = encode_qr_matrix("CENTER TEST", 2, EcLevel::M, 0, Mode::Alphanumeric).unwrap();
        let img = render_qr(&m, 4);
        let t = otsu_threshold(&histogram(&img)).unwrap();
        let bitmap = binarize(&img, t, InkPolarity::Dark);
        let finders = find_finder_patterns(&bitmap).unwrap();
        // quiet zone is 4 modules at 4 px: center of module (3.5, 3.5)
        let expect = |mx: f64, my: f64| ((4.0 + mx) * 4.0, (4.0 + my) * 4.0);
        let size = 25.0;
        let (ex, ey) = expect(3.5, 3.5);
        assert!((finders.top_left.0 - ex).abs() <= 1.0);
        assert!((finders.top_left.1 - ey).abs() <= 1.0);
        let (ex, ey) = expect(size - 3.5, 3.5);
        assert!((finders.top_right.0 - ex).abs() <= 1.0);
        assert!((finders.top_right.1 - ey).abs() <= 1.0);
        let (ex, ey) = expect(3.5, size - 3.5);
        assert!((finders.bottom_left.0 - ex).abs() <= 1.0);
        assert!((finders.bottom_left.1 - ey).abs() <= 1.0);
        assert!((finders.module_px - 4.0).abs() < 0.8);
    }

    #[test]
    fn two_symbols_report_six_centers() {
        let a = encode_qr("LEFT", 1, EcLevel::M, 0, 3).unwrap();
        let mut combined = Image::filled(a.width() * 2 + 12, a.height(), 255);
        for y in 0..a.height() {
            for x in 0..a.width() {
                combined.set(x, y, a.get(x, y));
                combined.set(x + a.width() + 12, y, a.get(x, y));
            }
        }
        let err = decode_qr_image(&combined).unwrap_err();
        assert_eq!(err, QrError::Finder { found: 6 });
    }

    /// Three finder squares laid out like an unsupported large version.
    fn finders_only_canvas(version: u8) -> Image {
        let size = 17 + 4 * version as usize;
        let px = 4u32;
        let quiet = 4usize;
        let side = ((size + 2 * quiet) * px as usize) as u32;
        let mut img = Image::filled(side, side, 255);
        let mut draw_finder = |r0: usize, c0: usize| {
            for dr in 0..7 {
                for dc in 0..7 {
                    let ring = dr == 0 || dr == 6 || dc == 0 || dc == 6;
                    let core = (2..=4).contains(&dr) && (2..=4).contains(&dc);
                    if ring || core {
                        for dy in 0..px {
                            for dx in 0..px {
                                let x = ((quiet + c0 + dc) as u32) * px + dx;
                                let y = ((quiet + r0 + dr) as u32) * px + dy;
                                img.set(x, y, 0);
                            }
                        }
                    }
                }
            }
        };
        draw_finder(0, 0);
        draw_finder(0, size - 7);
        draw_finder(size - 7, 0);
        img
    }

    #[test]
    fn version10_spacing_is_rejected() {
        let img = finders_only_canvas(10);
        let err = decode_qr_image(&img).unwrap_err();
        assert_eq!(err, QrError::UnsupportedVersion(10));
        assert_eq!(err.stage(), "sample");
    }

    #[test]
    fn rotated_symbol_still_decodes() {
        let src = encode_qr("ROTATION CHECK 123", 3, EcLevel::Q, 5, 5).unwrap();
        // rotate by 10° around the image center, nearest neighbor
        let theta = 10.0f64.to_radians();
        let (cx, cy) = (src.width() as f64 / 2.0, src.height() as f64 / 2.0);
        let side = (src.width() as f64 * 1.4) as u32;
        let (ox, oy) = (side as f64 / 2.0, side as f64 / 2.0);
        let mut rotated = Image::filled(side, side, 255);
        for y in 0..side {
            for x in 0..side {
                let dx = x as f64 + 0.5 - ox;
                let dy = y as f64 + 0.5 - oy;
                let sx = cx + dx * theta.cos() + dy * theta.sin();
                let sy = cy - dx * theta.sin() + dy * theta.cos();
                if sx >= 0.0 && sy >= 0.0 && (sx as u32) < src.width() && (sy as u32) < src.height()
                {
                    rotated.set(x, y, src.get(sx as u32, sy as u32));
                }
            }
        }
        let decoded = decode_qr_image(&rotated).unwrap();
        assert_eq!(decoded.segments.text, "ROTATION CHECK 123");
    }

    #[test]
    fn stain_over_8_percent_of_modules_corrected_at_level_h() {
        // contiguous damage (a stain) concentrates in few codewords per
        // block, which is what the parity budget is sized for
        let m = encode_qr_matrix("DAMAGE TOLERANCE", 3, EcLevel::H, 6, Mode::Alphanumeric).unwrap();
        let mut damaged = m.clone();
        let coords = super::matrix::data_coords(3);
        let flips = (coords.len() as f64 * 0.08) as usize;
        for &(r, c) in &coords[..flips] {
            damaged.set(r, c, !damaged.get(r, c));
        }
        let img = render_qr(&damaged, 4);
        let decoded = decode_qr_image(&img).unwrap();
        assert_eq!(decoded.segments.text, "DAMAGE TOLERANCE");
        assert!(decoded.corrections > 0);
    }

    #[test]
    fn kanji_mode_is_rejected() {
        // hand-built stream starting with mode indicator 1000
        let data = [0b1000_0000u8, 0, 0, 0];
        let err = parse_segments(&data, 1).unwrap_err();
        assert_eq!(err, QrError::UnsupportedMode(0b1000));
        assert_eq!(err.stage(), "segments");
    }

    #[test]
    fn extracted_stream_equals_encoder_stream() {
        let text = "STREAM EQUALITY 42";
        let stream = build_codewords(text, Mode::Alphanumeric, 4, EcLevel::Q).unwrap();
        let m = encode_qr_matrix(text, 4, EcLevel::Q, 3, Mode::Alphanumeric).unwrap();
        let format = decode_format_info(&m).unwrap();
        assert_eq!(format.mask_id, 3);
        let unmasked = m.unmask(format.mask_id);
        assert_eq!(extract_codewords(&unmasked), stream);
    }

    #[test]
    fn all_masks_of_one_payload_decode_identically() {
        for mask in 0..8u8 {
            let img = encode_qr("MASK SWEEP", 2, EcLevel::L, mask, 3).unwrap();
            let decoded = decode_qr_image(&img).unwrap();
            assert_eq!(decoded.segments.text, "MASK SWEEP", "mask {mask}");
            assert_eq!(decoded.format.mask_id, mask);
        }
    }

    #[test]
    fn version1_extraction_yields_26_codewords() {
        let mut m = QrMatrix::empty(1);
        draw_function_patterns(&mut m);
        assert_eq!(extract_codewords(&m).len(), 26);
    }
}
