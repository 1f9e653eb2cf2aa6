//! Format information (BCH(15,5) with generator 0x537, XOR mask 0x5412)
//! and the eight data mask predicates.

use super::{EcLevel, QrError};

const BCH_GENERATOR: u32 = 0x537;
const FORMAT_XOR_MASK: u16 = 0x5412;

/// Error-correction level and mask id carried by the format field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FormatInfo {
    pub ec_level: EcLevel,
    pub mask_id: u8,
}

/// BCH remainder of the 5 data bits over generator 0x537.
fn bch_remainder(data: u32) -> u32 {
    let mut rem = data << 10;
    for shift in (0..=4).rev() {
        if rem & (1 << (10 + shift)) != 0 {
            rem ^= BCH_GENERATOR << shift;
        }
    }
    rem
}

/// The 15-bit word as transmitted: data ‖ BCH remainder, XOR-masked.
pub fn encode_format(info: FormatInfo) -> u16 {
    debug_assert!(info.mask_id < 8);
    let data = ((info.ec_level.format_bits() as u32) << 3) | info.mask_id as u32;
    let word = (data << 10) | bch_remainder(data);
    word as u16 ^ FORMAT_XOR_MASK
}

fn hamming15(a: u16, b: u16) -> u32 {
    ((a ^ b) & 0x7FFF).count_ones()
}

/// Decode the format field from its two transmitted copies: nearest of the
/// 32 valid codewords wins, accepted up to Hamming distance 3.
pub fn decode_format(copy_a: u16, copy_b: u16) -> Result<FormatInfo, QrError> {
    let mut best: Option<(u32, u8)> = None;
    for data in 0..32u8 {
        let info = FormatInfo {
            ec_level: EcLevel::from_format_bits(data >> 3),
            mask_id: data & 0x7,
        };
        let word = encode_format(info);
        let dist = hamming15(word, copy_a).min(hamming15(word, copy_b));
        if best.map_or(true, |(d, _)| dist < d) {
            best = Some((dist, data));
        }
    }
    let (dist, data) = best.expect("32 candidates");
    if dist > 3 {
        return Err(QrError::Format { distance: dist });
    }
    Ok(FormatInfo {
        ec_level: EcLevel::from_format_bits(data >> 3),
        mask_id: data & 0x7,
    })
}

/// Mask predicate: true means the module at (row, col) is inverted.
#[inline]
pub fn mask_bit(mask_id: u8, row: usize, col: usize) -> bool {
    match mask_id {
        0 => (row + col) % 2 == 0,
        1 => row % 2 == 0,
        2 => col % 3 == 0,
        3 => (row + col) % 3 == 0,
        4 => (row / 2 + col / 3) % 2 == 0,
        5 => (row * col) % 2 + (row * col) % 3 == 0,
        6 => ((row * col) % 2 + (row * col) % 3) % 2 == 0,
        7 => ((row + col) % 2 + (row * col) % 3) % 2 == 0,
        _ => unreachable!("mask id must be 0..8"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ALL_LEVELS: [EcLevel; 4] = [EcLevel::L, EcLevel::M, EcLevel::Q, EcLevel::H];

    #[test]
    fn zero_data_word_transmits_as_xor_mask() {
        // M = 00, mask 0: BCH of zero is zero, so only the XOR mask remains.
        let word = encode_format(FormatInfo {
            ec_level: EcLevel::M,
            mask_id: 0,
        });
        assert_eq!(word, 0x5412);
    }

    #[test]
    fn known_words_by_hand_division() {
        // long division by 0x537 by hand: data 01000 → 0x77C4,
        // data 10111 → 0x083B, data 11111 → 0x2BED
        let l0 = encode_format(FormatInfo {
            ec_level: EcLevel::L,
            mask_id: 0,
        });
        assert_eq!(l0, 0x77C4);
        let h7 = encode_format(FormatInfo {
            ec_level: EcLevel::H,
            mask_id: 7,
        });
        assert_eq!(h7, 0x083B);
        let q7 = encode_format(FormatInfo {
            ec_level: EcLevel::Q,
            mask_id: 7,
        });
        assert_eq!(q7, 0x2BED);
    }

    #[test]
    fn all_valid_words_pairwise_distance_at_least_seven() {
        let mut words = Vec::new();
        for ec in ALL_LEVELS {
            for mask in 0..8 {
                words.push(encode_format(FormatInfo {
                    ec_level: ec,
                    mask_id: mask,
                }));
            }
        }
        for (i, &a) in words.iter().enumerate() {
            for &b in &words[i + 1..] {
                assert!(hamming15(a, b) >= 7, "{a:04x} vs {b:04x}");
            }
        }
    }

    #[test]
    fn decode_survives_three_flips_everywhere() {
        for ec in ALL_LEVELS {
            for mask in 0..8u8 {
                let info = FormatInfo {
                    ec_level: ec,
                    mask_id: mask,
                };
                let word = encode_format(info);
                assert_eq!(decode_format(word, word).unwrap(), info);
                // exhaustive sweep of 3-bit corruptions applied to both copies
                for f1 in 0..15 {
                    for f2 in (f1 + 1)..15 {
                        for f3 in (f2 + 1)..15 {
                            let corrupted = word ^ (1 << f1) ^ (1 << f2) ^ (1 << f3);
                            let got = decode_format(corrupted, corrupted);
                            assert_eq!(got.unwrap(), info, "flips {f1},{f2},{f3}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn four_flips_in_both_copies_rejected() {
        let info = FormatInfo {
            ec_level: EcLevel::Q,
            mask_id: 5,
        };
        let word = encode_format(info);
        let all_words: Vec<u16> = (0..32u8)
            .map(|d| {
                encode_format(FormatInfo {
                    ec_level: EcLevel::from_format_bits(d >> 3),
                    mask_id: d & 7,
                })
            })
            .collect();
        // exhaustively find a 4-flip corruption at distance ≥ 4 from every
        // valid codeword (min codeword distance is 7, so plenty exist)
        let mut found = false;
        'search: for f1 in 0..15 {
            for f2 in (f1 + 1)..15 {
                for f3 in (f2 + 1)..15 {
                    for f4 in (f3 + 1)..15 {
                        let corrupt = word ^ (1 << f1) ^ (1 << f2) ^ (1 << f3) ^ (1 << f4);
                        if all_words.iter().all(|&w| hamming15(w, corrupt) >= 4) {
                            assert!(matches!(
                                decode_format(corrupt, corrupt),
                                Err(QrError::Format { .. })
                            ));
                            found = true;
                            break 'search;
                        }
                    }
                }
            }
        }
        assert!(found, "no 4-flip pattern beyond distance 3 of all codewords");
    }

    #[test]
    fn mask_zero_is_checkerboard() {
        for r in 0..4 {
            for c in 0..4 {
                assert_eq!(mask_bit(0, r, c), (r + c) % 2 == 0);
            }
        }
    }

    #[test]
    fn all_masks_pairwise_differ_on_version1_grid() {
        for a in 0..8u8 {
            for b in (a + 1)..8 {
                let differ = (0..21).any(|r| (0..21).any(|c| mask_bit(a, r, c) != mask_bit(b, r, c)));
                assert!(differ, "masks {a} and {b} identical on 21x21");
            }
        }
    }
}
