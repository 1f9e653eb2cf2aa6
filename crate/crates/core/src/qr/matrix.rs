//! Module grid, function-pattern layout, format-bit placement and the
//! zigzag data traversal shared by encoder and decoder.

use super::tables::{alignment_coord, size_for_version, supported_version};

/// Sampled or constructed module grid of one symbol.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QrMatrix {
    version: u8,
    size: usize,
    modules: Vec<bool>,
}

impl QrMatrix {
    /// All-light grid of the version's size.
    pub fn empty(version: u8) -> Self {
        assert!(supported_version(version));
        let size = size_for_version(version);
        Self {
            version,
            size,
            modules: vec![false; size * size],
        }
    }

    /// Wrap a sampled bit grid (row-major, length size²).
    pub fn from_modules(version: u8, modules: Vec<bool>) -> Self {
        assert!(supported_version(version));
        let size = size_for_version(version);
        assert_eq!(modules.len(), size * size);
        Self {
            version,
            size,
            modules,
        }
    }

    pub fn version(&self) -> u8 {
        self.version
    }

    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.modules[row * self.size + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, dark: bool) {
        self.modules[row * self.size + col] = dark;
    }

    /// XOR the mask predicate over data modules only; an involution.
    pub fn unmask(&self, mask_id: u8) -> QrMatrix {
        let function = function_map(self.version);
        let mut out = self.clone();
        for row in 0..self.size {
            for col in 0..self.size {
                if !function[row * self.size + col] && super::format::mask_bit(mask_id, row, col) {
                    let idx = row * self.size + col;
                    out.modules[idx] = !out.modules[idx];
                }
            }
        }
        out
    }
}

/// True where a module belongs to a function pattern (finders, separators,
/// format areas, timing, alignment, dark module) rather than data.
pub fn function_map(version: u8) -> Vec<bool> {
    let size = size_for_version(version);
    let mut map = vec![false; size * size];
    let mut mark = |row: usize, col: usize| map[row * size + col] = true;

    for r in 0..9 {
        for c in 0..9 {
            mark(r, c); // top-left finder + separator + format
        }
    }
    for r in 0..9 {
        for c in size - 8..size {
            mark(r, c); // top-right finder + separator + format
        }
    }
    for r in size - 8..size {
        for c in 0..9 {
            mark(r, c); // bottom-left finder + separator + format + dark module
        }
    }
    for i in 0..size {
        mark(6, i); // horizontal timing
        mark(i, 6); // vertical timing
    }
    if let Some(center) = alignment_coord(version) {
        for r in center - 2..=center + 2 {
            for c in center - 2..=center + 2 {
                mark(r, c);
            }
        }
    }
    map
}

/// Draw the actual function-pattern modules (encoder side): finder shapes,
/// timing alternation, alignment pattern, dark module. Format areas stay
/// light until format bits are written.
pub fn draw_function_patterns(m: &mut QrMatrix) {
    let size = m.size();
    let finder_origins = [(0usize, 0usize), (0, size - 7), (size - 7, 0)];
    for (r0, c0) in finder_origins {
        for dr in 0..7 {
            for dc in 0..7 {
                let ring = dr == 0 || dr == 6 || dc == 0 || dc == 6;
                let core = (2..=4).contains(&dr) && (2..=4).contains(&dc);
                m.set(r0 + dr, c0 + dc, ring || core);
            }
        }
    }
    for i in 8..size - 8 {
        let dark = i % 2 == 0;
        m.set(6, i, dark);
        m.set(i, 6, dark);
    }
    if let Some(center) = alignment_coord(m.version()) {
        for dr in 0..5 {
            for dc in 0..5 {
                let ring = dr == 0 || dr == 4 || dc == 0 || dc == 4;
                let core = dr == 2 && dc == 2;
                m.set(center - 2 + dr, center - 2 + dc, ring || core);
            }
        }
    }
    m.set(size - 8, 8, true); // dark module
}

/// Whether the version's ideal alignment pattern module at (dr, dc) of the
/// 5×5 block is dark.
pub fn alignment_module_dark(dr: usize, dc: usize) -> bool {
    dr == 0 || dr == 4 || dc == 0 || dc == 4 || (dr == 2 && dc == 2)
}

/// Positions of format bit `i` (0 = LSB) for both transmitted copies.
pub fn format_positions(size: usize) -> ([(usize, usize); 15], [(usize, usize); 15]) {
    let mut copy_a = [(0usize, 0usize); 15];
    let mut copy_b = [(0usize, 0usize); 15];
    for i in 0..15 {
        copy_a[i] = match i {
            0..=5 => (i, 8),
            6 => (7, 8),
            7 => (8, 8),
            8 => (8, 7),
            _ => (8, 14 - i),
        };
        copy_b[i] = if i < 8 {
            (8, size - 1 - i)
        } else {
            (size - 15 + i, 8)
        };
    }
    (copy_a, copy_b)
}

/// Data-module coordinates in placement order: two-column strips from the
/// right edge, alternating upward and downward, skipping the vertical
/// timing column and every function module.
pub fn data_coords(version: u8) -> Vec<(usize, usize)> {
    let size = size_for_version(version);
    let function = function_map(version);
    let mut coords = Vec::new();
    let mut right = size as i32 - 1;
    while right >= 1 {
        if right == 6 {
            right = 5;
        }
        for vert in 0..size {
            for j in 0..2 {
                let col = (right - j) as usize;
                let upward = (right + 1) & 2 == 0;
                let row = if upward { size - 1 - vert } else { vert };
                if !function[row * size + col] {
                    coords.push((row, col));
                }
            }
        }
        right -= 2;
    }
    coords
}
