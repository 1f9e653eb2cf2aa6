//! Grayscale raster support: PNM loading, histograms, Otsu thresholding,
//! binarization and scanline extraction.
//!
//! Every detector downstream works on [`Image`] (8-bit luminance) or
//! [`Bitmap`] (ink mask), both immutable after construction.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("pnm parse error at byte {offset}: {reason}")]
    Parse { offset: usize, reason: String },
    #[error("image dimensions {width}x{height} overflow or are empty")]
    BadDimensions { width: u64, height: u64 },
    #[error("pixel buffer length {got} does not match {width}x{height}")]
    BadPixelCount { width: u32, height: u32, got: usize },
    #[error("row {row} out of bounds for height {height}")]
    RowOutOfBounds { row: u32, height: u32 },
    #[error("histogram is empty")]
    EmptyHistogram,
    #[error("crop region ({x},{y}) {w}x{h} exceeds image {width}x{height}")]
    BadCrop {
        x: u32,
        y: u32,
        w: u32,
        h: u32,
        width: u32,
        height: u32,
    },
}

/// Owned 8-bit grayscale raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl Image {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::BadDimensions {
                width: width as u64,
                height: height as u64,
            });
        }
        let expected = width as u64 * height as u64;
        if pixels.len() as u64 != expected {
            return Err(RasterError::BadPixelCount {
                width,
                height,
                got: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Uniform image filled with one luminance value.
    pub fn filled(width: u32, height: u32, value: u8) -> Self {
        Self::new(width, height, vec![value; (width * height) as usize])
            .expect("nonzero dimensions")
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u8 {
        debug_assert!(x < self.width && y < self.height);
        self.pixels[(y * self.width + x) as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: u8) {
        debug_assert!(x < self.width && y < self.height);
        self.pixels[(y * self.width + x) as usize] = value;
    }

    pub fn row(&self, y: u32) -> &[u8] {
        let start = (y * self.width) as usize;
        &self.pixels[start..start + self.width as usize]
    }

    /// Copy of the axis-aligned subregion with top-left corner `(x, y)`.
    pub fn crop(&self, x: u32, y: u32, w: u32, h: u32) -> Result<Image, RasterError> {
        if w == 0 || h == 0 || x + w > self.width || y + h > self.height {
            return Err(RasterError::BadCrop {
                x,
                y,
                w,
                h,
                width: self.width,
                height: self.height,
            });
        }
        let mut pixels = Vec::with_capacity((w * h) as usize);
        for row in y..y + h {
            let start = (row * self.width + x) as usize;
            pixels.extend_from_slice(&self.pixels[start..start + w as usize]);
        }
        Image::new(w, h, pixels)
    }
}

/// Binary ink mask with the same dimensions as its source image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitmap {
    width: u32,
    height: u32,
    bits: Vec<u8>,
}

impl Bitmap {
    pub fn new(width: u32, height: u32, bits: Vec<u8>) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::BadDimensions {
                width: width as u64,
                height: height as u64,
            });
        }
        if bits.len() as u64 != width as u64 * height as u64 {
            return Err(RasterError::BadPixelCount {
                width,
                height,
                got: bits.len(),
            });
        }
        debug_assert!(bits.iter().all(|&b| b <= 1));
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    #[inline]
    pub fn is_ink(&self, x: u32, y: u32) -> bool {
        self.bits[(y * self.width + x) as usize] == 1
    }

    /// Render ink as black (0) on a white (255) background.
    pub fn to_image(&self) -> Image {
        let pixels = self.bits.iter().map(|&b| if b == 1 { 0 } else { 255 }).collect();
        Image::new(self.width, self.height, pixels).expect("bitmap dims valid")
    }
}

/// Luminance occurrence counts, one bin per 8-bit value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram {
    pub bins: [u64; 256],
}

impl Histogram {
    pub fn from_bins(bins: [u64; 256]) -> Self {
        Self { bins }
    }

    pub fn total(&self) -> u64 {
        self.bins.iter().sum()
    }
}

/// Which side of the threshold counts as ink when binarizing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InkPolarity {
    /// Pixels ≤ threshold are ink (dark print on light paper).
    Dark,
    /// Pixels > threshold are ink (light print on dark signage).
    Light,
}

/// Parse a PNM image (P2/P5 grayscale, P3/P6 RGB; maxval ≤ 255).
///
/// RGB inputs are collapsed to luminance with the BT.601 weights
/// 0.299/0.587/0.114, rounded half-up.
pub fn load_pnm(bytes: &[u8]) -> Result<Image, RasterError> {
    let mut cur = Cursor::new(bytes);
    let magic = cur.take_magic()?;
    let (ascii, channels) = match magic {
        b'2' => (true, 1),
        b'3' => (true, 3),
        b'5' => (false, 1),
        b'6' => (false, 3),
        other => {
            return Err(cur.err(format!(
                "unsupported magic \"P{}\" (want P2/P3/P5/P6)",
                other as char
            )))
        }
    };
    let width = cur.take_uint("width")?;
    let height = cur.take_uint("height")?;
    let maxval = cur.take_uint("maxval")?;
    if width == 0 || height == 0 {
        return Err(RasterError::BadDimensions { width, height });
    }
    if maxval == 0 || maxval > 255 {
        return Err(cur.err(format!("maxval {maxval} out of supported range 1..=255")));
    }
    let sample_count = width
        .checked_mul(height)
        .and_then(|p| p.checked_mul(channels))
        .filter(|&p| p <= usize::MAX as u64)
        .ok_or(RasterError::BadDimensions { width, height })?;

    let mut samples = Vec::with_capacity(sample_count as usize);
    if ascii {
        for _ in 0..sample_count {
            let v = cur.take_uint("sample")?;
            if v > maxval {
                return Err(cur.err(format!("sample {v} exceeds maxval {maxval}")));
            }
            samples.push(v as u8);
        }
    } else {
        cur.take_single_whitespace()?;
        let raw = cur.take_bytes(sample_count as usize)?;
        if let Some(bad) = raw.iter().position(|&b| b as u64 > maxval) {
            let offset = cur.pos - raw.len() + bad;
            return Err(RasterError::Parse {
                offset,
                reason: format!("sample {} exceeds maxval {maxval}", raw[bad]),
            });
        }
        samples.extend_from_slice(raw);
    }

    let pixels = if channels == 1 {
        samples
    } else {
        samples.chunks_exact(3).map(|rgb| luma(rgb[0], rgb[1], rgb[2])).collect()
    };
    Image::new(width as u32, height as u32, pixels)
}

/// BT.601 luma, rounded half-up. Weights sum to exactly 1000.
#[inline]
fn luma(r: u8, g: u8, b: u8) -> u8 {
    ((299 * r as u32 + 587 * g as u32 + 114 * b as u32 + 500) / 1000) as u8
}

/// Serialize as binary PGM (P5, maxval 255). `load_pnm` round-trips it.
pub fn emit_pgm(img: &Image) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.pixels());
    out
}

pub fn histogram(img: &Image) -> Histogram {
    let mut bins = [0u64; 256];
    for &p in img.pixels() {
        bins[p as usize] += 1;
    }
    Histogram { bins }
}

/// Histogram over an arbitrary luminance sequence (e.g. one scanline).
pub fn histogram_of(values: &[u8]) -> Histogram {
    let mut bins = [0u64; 256];
    for &p in values {
        bins[p as usize] += 1;
    }
    Histogram { bins }
}

/// Otsu's threshold: the value `t` maximizing between-class variance
/// ω0·ω1·(μ0−μ1)² for the split {v ≤ t} / {v > t}. Ties take the smallest
/// `t`; a single-valued histogram returns that value.
///
/// Comparison is exact (integer arithmetic), so the returned threshold is
/// fully deterministic.
pub fn otsu_threshold(h: &Histogram) -> Result<u8, RasterError> {
    let total: u64 = h.bins.iter().sum();
    if total == 0 {
        return Err(RasterError::EmptyHistogram);
    }
    let mut nonzero = h.bins.iter().enumerate().filter(|(_, &c)| c > 0);
    let first = nonzero.next().map(|(v, _)| v as u8).unwrap();
    if nonzero.next().is_none() {
        return Ok(first);
    }

    let grand_sum: u64 = h
        .bins
        .iter()
        .enumerate()
        .map(|(v, &c)| v as u64 * c)
        .sum();

    // Between-class variance is proportional to
    // (sum0·total − grand_sum·w0)² / (w0·w1); compare candidates as exact
    // cross-multiplied integers.
    let mut best: Option<(u128, u128, u8)> = None; // (numerator², w0·w1, t)
    let mut w0: u64 = 0;
    let mut sum0: u64 = 0;
    for t in 0..=255u16 {
        w0 += h.bins[t as usize];
        sum0 += t as u64 * h.bins[t as usize];
        if w0 == 0 {
            continue;
        }
        let w1 = total - w0;
        if w1 == 0 {
            break;
        }
        let n = (sum0 as i128 * total as i128 - grand_sum as i128 * w0 as i128).unsigned_abs();
        let num = n * n;
        let den = w0 as u128 * w1 as u128;
        let better = match &best {
            None => true,
            Some((bn, bd, _)) => num * bd > bn * den,
        };
        if better {
            best = Some((num, den, t as u8));
        }
    }
    Ok(best.expect("at least one valid split exists").2)
}

/// Threshold the image into an ink mask.
pub fn binarize(img: &Image, t: u8, polarity: InkPolarity) -> Bitmap {
    let bits = img
        .pixels()
        .iter()
        .map(|&p| {
            let dark = p <= t;
            let ink = match polarity {
                InkPolarity::Dark => dark,
                InkPolarity::Light => !dark,
            };
            ink as u8
        })
        .collect();
    Bitmap::new(img.width(), img.height(), bits).expect("image dims valid")
}

/// Copy of one image row.
pub fn extract_scanline(img: &Image, row: u32) -> Result<Vec<u8>, RasterError> {
    if row >= img.height() {
        return Err(RasterError::RowOutOfBounds {
            row,
            height: img.height(),
        });
    }
    Ok(img.row(row).to_vec())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn err(&self, reason: String) -> RasterError {
        RasterError::Parse {
            offset: self.pos,
            reason,
        }
    }

    fn take_magic(&mut self) -> Result<u8, RasterError> {
        if self.bytes.len() < 2 || self.bytes[0] != b'P' {
            return Err(self.err("missing PNM magic".into()));
        }
        self.pos = 2;
        Ok(self.bytes[1])
    }

    /// Skip whitespace and `#`-comments between header tokens.
    fn skip_separators(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    fn take_uint(&mut self, what: &str) -> Result<u64, RasterError> {
        self.skip_separators();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(self.err(format!("expected {what}, found no digits")));
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos]).unwrap();
        text.parse::<u64>()
            .map_err(|_| self.err(format!("{what} \"{text}\" out of range")))
    }

    /// Binary rasters start after exactly one whitespace byte past maxval.
    fn take_single_whitespace(&mut self) -> Result<(), RasterError> {
        match self.bytes.get(self.pos) {
            Some(b) if b.is_ascii_whitespace() => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.err("expected single whitespace before binary raster".into())),
        }
    }

    fn take_bytes(&mut self, n: usize) -> Result<&'a [u8], RasterError> {
        if self.bytes.len() - self.pos < n {
            return Err(RasterError::Parse {
                offset: self.bytes.len(),
                reason: format!(
                    "raster truncated: want {n} bytes, have {}",
                    self.bytes.len() - self.pos
                ),
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn load_p5_identity_payload() {
        let mut data = b"P5 2 2 255\n".to_vec();
        data.extend_from_slice(&[0, 255, 0, 255]);
        let img = load_pnm(&data).unwrap();
        assert_eq!((img.width(), img.height()), (2, 2));
        assert_eq!(img.pixels(), &[0, 255, 0, 255]);
    }

    #[test]
    fn load_p6_white_is_white() {
        let mut data = b"P6 1 1 255\n".to_vec();
        data.extend_from_slice(&[255, 255, 255]);
        let img = load_pnm(&data).unwrap();
        assert_eq!(img.pixels(), &[255]);
    }

    #[test]
    fn load_p6_pure_red_luma() {
        // round(0.299 * 255) = 76
        let mut data = b"P6 1 1 255\n".to_vec();
        data.extend_from_slice(&[255, 0, 0]);
        let img = load_pnm(&data).unwrap();
        assert_eq!(img.pixels(), &[76]);
    }

    #[test]
    fn load_p2_with_comments() {
        let data = b"P2\n# a comment\n2 1\n# another\n255\n12 200\n";
        let img = load_pnm(data).unwrap();
        assert_eq!(img.pixels(), &[12, 200]);
    }

    #[test]
    fn load_p3_ascii_rgb() {
        let data = b"P3 1 2 255\n255 0 0  0 255 0\n";
        let img = load_pnm(data).unwrap();
        // round(0.587 * 255) = 150
        assert_eq!(img.pixels(), &[76, 150]);
    }

    #[test]
    fn load_rejects_bad_magic() {
        let err = load_pnm(b"P7 1 1 255 x").unwrap_err();
        assert!(matches!(err, RasterError::Parse { offset: 2, .. }), "{err}");
    }

    #[test]
    fn load_rejects_truncation_with_offset() {
        let data = b"P5 4 4 255\nabc".to_vec();
        match load_pnm(&data).unwrap_err() {
            RasterError::Parse { offset, reason } => {
                assert_eq!(offset, data.len());
                assert!(reason.contains("truncated"));
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn load_rejects_maxval_overflow() {
        assert!(load_pnm(b"P5 1 1 65535\n\0\0").is_err());
    }

    #[test]
    fn load_rejects_sample_above_maxval() {
        let mut data = b"P5 1 1 100\n".to_vec();
        data.push(101);
        assert!(load_pnm(&data).is_err());
    }

    #[test]
    fn emit_then_load_round_trips() {
        let img = Image::new(3, 2, vec![0, 10, 255, 7, 8, 9]).unwrap();
        let reparsed = load_pnm(&emit_pgm(&img)).unwrap();
        assert_eq!(reparsed, img);
    }

    #[test]
    fn histogram_counts() {
        let img = Image::filled(2, 2, 0);
        let h = histogram(&img);
        assert_eq!(h.bins[0], 4);
        assert_eq!(h.bins[1..].iter().sum::<u64>(), 0);

        let img = Image::new(2, 2, vec![0, 255, 0, 255]).unwrap();
        let h = histogram(&img);
        assert_eq!(h.bins[0], 2);
        assert_eq!(h.bins[255], 2);
    }

    #[test]
    fn otsu_two_cluster() {
        let mut bins = [0u64; 256];
        bins[50] = 8;
        bins[200] = 8;
        assert_eq!(otsu_threshold(&Histogram { bins }).unwrap(), 50);
    }

    #[test]
    fn otsu_degenerate_single_value() {
        let mut bins = [0u64; 256];
        bins[128] = 9;
        assert_eq!(otsu_threshold(&Histogram { bins }).unwrap(), 128);
    }

    #[test]
    fn otsu_outlier_pixel() {
        let mut bins = [0u64; 256];
        bins[0] = 1;
        bins[255] = 15;
        assert_eq!(otsu_threshold(&Histogram { bins }).unwrap(), 0);
    }

    #[test]
    fn otsu_rejects_empty() {
        let bins = [0u64; 256];
        assert!(matches!(
            otsu_threshold(&Histogram { bins }),
            Err(RasterError::EmptyHistogram)
        ));
    }

    #[test]
    fn binarize_polarities() {
        let img = Image::new(2, 1, vec![0, 255]).unwrap();
        assert_eq!(binarize(&img, 128, InkPolarity::Dark).bits(), &[1, 0]);
        assert_eq!(binarize(&img, 128, InkPolarity::Light).bits(), &[0, 1]);
        assert_eq!(binarize(&img, 255, InkPolarity::Dark).bits(), &[1, 1]);
    }

    #[test]
    fn scanline_copies_row() {
        let img = Image::new(2, 2, vec![0, 255, 10, 20]).unwrap();
        assert_eq!(extract_scanline(&img, 1).unwrap(), vec![10, 20]);
        let uniform = Image::filled(4, 2, 33);
        assert_eq!(extract_scanline(&uniform, 0).unwrap(), vec![33; 4]);
        assert!(matches!(
            extract_scanline(&img, 2),
            Err(RasterError::RowOutOfBounds { row: 2, height: 2 })
        ));
    }

    /// Independent exhaustive search used to pin Otsu's output. Shares the
    /// degenerate rule: a single-valued histogram yields that value.
    pub fn otsu_brute_force(h: &Histogram) -> u8 {
        let total: u64 = h.bins.iter().sum();
        let grand: u64 = h.bins.iter().enumerate().map(|(v, &c)| v as u64 * c).sum();
        let mut best_t = None;
        let mut best: Option<(u128, u128)> = None;
        for t in 0..=255usize {
            let w0: u64 = h.bins[..=t].iter().sum();
            let w1 = total - w0;
            if w0 == 0 || w1 == 0 {
                continue;
            }
            let s0: u64 = h.bins[..=t].iter().enumerate().map(|(v, &c)| v as u64 * c).sum();
            let n = (s0 as i128 * total as i128 - grand as i128 * w0 as i128).unsigned_abs();
            let cand = (n * n, w0 as u128 * w1 as u128);
            let better = match &best {
                None => true,
                Some((bn, bd)) => cand.0 * bd > *bn * cand.1,
            };
            if better {
                best = Some(cand);
                best_t = Some(t as u8);
            }
        }
        best_t.unwrap_or_else(|| {
            h.bins.iter().position(|&c| c > 0).expect("nonempty histogram") as u8
        })
    }

    proptest! {
        #[test]
        fn histogram_total_matches_pixel_count(pixels in proptest::collection::vec(any::<u8>(), 256)) {
            let img = Image::new(16, 16, pixels).unwrap();
            prop_assert_eq!(histogram(&img).total(), 256);
        }

        #[test]
        fn otsu_matches_brute_force(pixels in proptest::collection::vec(any::<u8>(), 64)) {
            let img = Image::new(8, 8, pixels).unwrap();
            let h = histogram(&img);
            prop_assert_eq!(otsu_threshold(&h).unwrap(), otsu_brute_force(&h));
        }

        #[test]
        fn pnm_round_trip(pixels in proptest::collection::vec(any::<u8>(), 24), wide in proptest::bool::ANY) {
            let (w, h) = if wide { (8, 3) } else { (4, 6) };
            let img = Image::new(w, h, pixels).unwrap();
            prop_assert_eq!(load_pnm(&emit_pgm(&img)).unwrap(), img);
        }

        #[test]
        fn binarize_idempotent_on_binary_images(bits in proptest::collection::vec(0u8..=1, 30), t in 1u8..=254) {
            let bitmap = Bitmap::new(6, 5, bits).unwrap();
            let rendered = bitmap.to_image();
            prop_assert_eq!(binarize(&rendered, t, InkPolarity::Dark), bitmap);
        }
    }
}
