//! Normative capacity and block-structure constants for versions 1–6,
//! held as a data fixture guarded by a checksum rather than computed.

use super::EcLevel;

pub const MIN_VERSION: u8 = 1;
pub const MAX_VERSION: u8 = 6;

/// Total codewords per version 1..=6.
const TOTAL_CODEWORDS: [usize; 6] = [26, 44, 70, 100, 134, 172];

/// Parity codewords per block, indexed `[version-1][L,M,Q,H]`.
const EC_PER_BLOCK: [[usize; 4]; 6] = [
    [7, 10, 13, 17],
    [10, 16, 22, 28],
    [15, 26, 18, 22],
    [20, 18, 26, 16],
    [26, 24, 18, 22],
    [18, 16, 24, 28],
];

/// Error-correction block count, indexed `[version-1][L,M,Q,H]`.
const NUM_BLOCKS: [[usize; 4]; 6] = [
    [1, 1, 1, 1],
    [1, 1, 1, 1],
    [1, 1, 2, 2],
    [1, 2, 2, 4],
    [1, 2, 4, 4],
    [2, 4, 4, 4],
];

/// Alignment-pattern center coordinate for versions 2..=6 (the only
/// alignment pattern not overlapping a finder sits at `(c, c)`).
const ALIGNMENT_COORD: [usize; 5] = [18, 22, 26, 30, 34];

/// FNV-1a over every table entry; pins the fixture against edits.
pub const TABLE_CHECKSUM: u64 = 0xcc12_8bf5_1fa9_4e8f;

pub fn table_checksum() -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    let mut mix = |v: u64| {
        h ^= v;
        h = h.wrapping_mul(0x100000001b3);
    };
    for v in TOTAL_CODEWORDS {
        mix(v as u64);
    }
    for row in EC_PER_BLOCK {
        for v in row {
            mix(v as u64);
        }
    }
    for row in NUM_BLOCKS {
        for v in row {
            mix(v as u64);
        }
    }
    for v in ALIGNMENT_COORD {
        mix(v as u64);
    }
    h
}

pub fn supported_version(version: u8) -> bool {
    (MIN_VERSION..=MAX_VERSION).contains(&version)
}

pub fn size_for_version(version: u8) -> usize {
    17 + 4 * version as usize
}

pub fn total_codewords(version: u8) -> usize {
    TOTAL_CODEWORDS[version as usize - 1]
}

/// Per-block layout of one version/EC combination.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockStructure {
    pub num_blocks: usize,
    pub ec_per_block: usize,
    pub data_codewords: usize,
}

impl BlockStructure {
    /// Data lengths per block: short blocks first, long (short+1) last.
    pub fn block_data_lengths(&self) -> Vec<usize> {
        let short = self.data_codewords / self.num_blocks;
        let num_long = self.data_codewords % self.num_blocks;
        let mut lengths = vec![short; self.num_blocks - num_long];
        lengths.extend(std::iter::repeat(short + 1).take(num_long));
        lengths
    }
}

pub fn block_structure(version: u8, ec: EcLevel) -> BlockStructure {
    let v = version as usize - 1;
    let e = ec.table_index();
    let num_blocks = NUM_BLOCKS[v][e];
    let ec_per_block = EC_PER_BLOCK[v][e];
    BlockStructure {
        num_blocks,
        ec_per_block,
        data_codewords: TOTAL_CODEWORDS[v] - num_blocks * ec_per_block,
    }
}

pub fn alignment_coord(version: u8) -> Option<usize> {
    if version >= 2 {
        Some(ALIGNMENT_COORD[version as usize - 2])
    } else {
        None
    }
}

/// Character set of alphanumeric mode; a symbol's value is its index.
pub const ALPHANUMERIC: &[u8; 45] = b"0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZ $%*+-./:";

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checksum_pins_fixture() {
        assert_eq!(table_checksum(), TABLE_CHECKSUM, "capacity table edited");
    }

    #[test]
    fn version_one_has_26_codewords() {
        assert_eq!(total_codewords(1), 26);
        let s = block_structure(1, EcLevel::M);
        assert_eq!(s.num_blocks, 1);
        assert_eq!(s.data_codewords, 16);
    }

    #[test]
    fn six_m_block_split() {
        let s = block_structure(6, EcLevel::M);
        assert_eq!(s.num_blocks, 4);
        assert_eq!(s.ec_per_block, 16);
        assert_eq!(s.data_codewords, 108);
        assert_eq!(s.block_data_lengths(), vec![27, 27, 27, 27]);
    }

    #[test]
    fn five_q_has_uneven_blocks() {
        let s = block_structure(5, EcLevel::Q);
        assert_eq!(s.num_blocks, 4);
        assert_eq!(s.data_codewords, 62);
        assert_eq!(s.block_data_lengths(), vec![15, 15, 16, 16]);
    }

    #[test]
    fn data_plus_parity_fills_every_symbol() {
        for v in MIN_VERSION..=MAX_VERSION {
            for ec in [EcLevel::L, EcLevel::M, EcLevel::Q, EcLevel::H] {
                let s = block_structure(v, ec);
                assert_eq!(
                    s.data_codewords + s.num_blocks * s.ec_per_block,
                    total_codewords(v),
                    "v{v} {ec:?}"
                );
                assert_eq!(
                    s.block_data_lengths().iter().sum::<usize>(),
                    s.data_codewords
                );
            }
        }
    }
}
