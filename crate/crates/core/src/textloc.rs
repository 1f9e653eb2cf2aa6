//! Text-region localization via connected components and line grouping,
//! EXIT-sign detection by multi-scale template matching, and the external
//! OCR command adapter.
//!
//! Character recognition itself stays behind the command boundary; this
//! module only finds where text is.

use crate::dataset::PixelBox;
use crate::raster::{self, Bitmap, Image, InkPolarity};
use serde::Serialize;
use std::io::Write as _;
use std::process::Command;
use thiserror::Error;

/// Minimum NCC score for an EXIT-sign report.
pub const EXIT_NCC_THRESHOLD: f64 = 0.70;

/// Template scale pyramid used by [`detect_exit_sign`].
pub const EXIT_SCALES: [f64; 7] = [0.5, 0.625, 0.78, 1.0, 1.25, 1.56, 2.0];

/// Character-candidate filter bounds.
const MIN_CHAR_AREA: usize = 15;
const MAX_CHAR_AREA_FRAC: f64 = 0.05;
const MIN_CHAR_HEIGHT: f64 = 8.0;
const MAX_CHAR_HEIGHT_FRAC: f64 = 0.6;
const CHAR_ASPECT_RANGE: (f64, f64) = (0.2, 8.0);

#[derive(Debug, Error)]
pub enum TextLocError {
    #[error("template ({tw}x{th}) exceeds image ({iw}x{ih}) at every scale")]
    TemplateTooLarge { tw: u32, th: u32, iw: u32, ih: u32 },
    #[error("ocr command template must contain {{input}}")]
    BadCommandTemplate,
    #[error("ocr command is empty")]
    EmptyCommand,
    #[error("ocr i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("ocr engine exited with status {status}: {stderr}")]
    EngineFailed { status: i32, stderr: String },
}

/// One 8-connected blob of ink pixels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConnectedComponent {
    pub bbox: PixelBox,
    pub area: usize,
    pub centroid: (f64, f64),
}

/// Left-to-right components judged to sit on one baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct TextLine {
    pub bbox: PixelBox,
    pub members: Vec<ConnectedComponent>,
}

/// Best template match: location box, NCC score, template scale.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchResult {
    pub location: PixelBox,
    pub score: f64,
    pub scale: f64,
}

/// Label 8-connected ink regions. Components appear in row-major order of
/// their first pixel; areas and bounding boxes are exact.
pub fn connected_components(bitmap: &Bitmap) -> Vec<ConnectedComponent> {
    let (w, h) = (bitmap.width() as usize, bitmap.height() as usize);
    let mut visited = vec![false; w * h];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if visited[start] || bitmap.bits()[start] == 0 {
            continue;
        }
        visited[start] = true;
        stack.push(start);
        let (mut min_x, mut min_y) = (w, h);
        let (mut max_x, mut max_y) = (0usize, 0usize);
        let mut area = 0usize;
        let (mut sum_x, mut sum_y) = (0f64, 0f64);
        while let Some(idx) = stack.pop() {
            let (x, y) = (idx % w, idx / w);
            area += 1;
            sum_x += x as f64 + 0.5;
            sum_y += y as f64 + 0.5;
            min_x = min_x.min(x);
            min_y = min_y.min(y);
            max_x = max_x.max(x);
            max_y = max_y.max(y);
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let nidx = ny as usize * w + nx as usize;
                    if !visited[nidx] && bitmap.bits()[nidx] == 1 {
                        visited[nidx] = true;
                        stack.push(nidx);
                    }
                }
            }
        }
        out.push(ConnectedComponent {
            bbox: PixelBox::new(
                min_x as f64,
                min_y as f64,
                (max_x + 1) as f64,
                (max_y + 1) as f64,
            ),
            area,
            centroid: (sum_x / area as f64, sum_y / area as f64),
        });
    }
    out
}

/// Keep components plausibly shaped like characters: area in
/// [15 px, 5% of image], height in [8 px, 60% of image height], aspect
/// h/w in [0.2, 8].
pub fn filter_char_candidates(
    comps: &[ConnectedComponent],
    img_w: u32,
    img_h: u32,
) -> Vec<ConnectedComponent> {
    let max_area = (img_w as f64 * img_h as f64 * MAX_CHAR_AREA_FRAC).floor() as usize;
    let max_height = img_h as f64 * MAX_CHAR_HEIGHT_FRAC;
    comps
        .iter()
        .filter(|c| {
            let (w, h) = (c.bbox.width(), c.bbox.height());
            let aspect = h / w;
            c.area >= MIN_CHAR_AREA
                && c.area <= max_area
                && h >= MIN_CHAR_HEIGHT
                && h <= max_height
                && aspect >= CHAR_ASPECT_RANGE.0
                && aspect <= CHAR_ASPECT_RANGE.1
        })
        .cloned()
        .collect()
}

fn vertical_overlap(a: &PixelBox, b: &PixelBox) -> f64 {
    (a.ymax.min(b.ymax) - a.ymin.max(b.ymin)).max(0.0)
}

fn horizontal_gap(a: &PixelBox, b: &PixelBox) -> f64 {
    (a.xmin.max(b.xmin) - a.xmax.min(b.xmax)).max(0.0)
}

/// Group character candidates into lines: two components share a line iff
/// their boxes overlap vertically by at least half the shorter height and
/// the horizontal gap is at most twice the median component width;
/// grouping is the transitive closure. Lines come out top-to-bottom,
/// members left-to-right, independent of input order.
pub fn group_into_lines(comps: &[ConnectedComponent]) -> Vec<TextLine> {
    if comps.is_empty() {
        return Vec::new();
    }
    let mut widths: Vec<f64> = comps.iter().map(|c| c.bbox.width()).collect();
    widths.sort_by(f64::total_cmp);
    let median_width = if widths.len() % 2 == 1 {
        widths[widths.len() / 2]
    } else {
        (widths[widths.len() / 2 - 1] + widths[widths.len() / 2]) / 2.0
    };
    let max_gap = 2.0 * median_width;

    let mut parent: Vec<usize> = (0..comps.len()).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let root = find(parent, parent[i]);
            parent[i] = root;
        }
        parent[i]
    }
    for i in 0..comps.len() {
        for j in i + 1..comps.len() {
            let (a, b) = (&comps[i].bbox, &comps[j].bbox);
            let shorter = a.height().min(b.height());
            if vertical_overlap(a, b) >= 0.5 * shorter && horizontal_gap(a, b) <= max_gap {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri] = rj;
                }
            }
        }
    }

    let mut groups: std::collections::HashMap<usize, Vec<usize>> = std::collections::HashMap::new();
    for i in 0..comps.len() {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(i);
    }
    let mut lines: Vec<TextLine> = groups
        .into_values()
        .map(|members| {
            let mut members: Vec<ConnectedComponent> =
                members.into_iter().map(|i| comps[i].clone()).collect();
            members.sort_by(|a, b| {
                a.centroid
                    .0
                    .total_cmp(&b.centroid.0)
                    .then(a.centroid.1.total_cmp(&b.centroid.1))
            });
            let bbox = members.iter().map(|c| c.bbox).reduce(|acc, b| {
                PixelBox::new(
                    acc.xmin.min(b.xmin),
                    acc.ymin.min(b.ymin),
                    acc.xmax.max(b.xmax),
                    acc.ymax.max(b.ymax),
                )
            });
            TextLine {
                bbox: bbox.expect("non-empty group"),
                members,
            }
        })
        .collect();
    lines.sort_by(|a, b| {
        a.bbox
            .ymin
            .total_cmp(&b.bbox.ymin)
            .then(a.bbox.xmin.total_cmp(&b.bbox.xmin))
    });
    lines
}

/// Nearest-neighbor resample to the requested dimensions.
fn resample(img: &Image, tw: u32, th: u32) -> Image {
    let mut pixels = Vec::with_capacity((tw * th) as usize);
    for y in 0..th {
        let sy = ((y as f64 + 0.5) * img.height() as f64 / th as f64) as u32;
        let sy = sy.min(img.height() - 1);
        for x in 0..tw {
            let sx = ((x as f64 + 0.5) * img.width() as f64 / tw as f64) as u32;
            let sx = sx.min(img.width() - 1);
            pixels.push(img.get(sx, sy));
        }
    }
    Image::new(tw, th, pixels).expect("nonzero target dims")
}

struct Integrals {
    w: usize,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl Integrals {
    fn build(img: &Image) -> Self {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let mut sum = vec![0f64; (w + 1) * (h + 1)];
        let mut sum_sq = vec![0f64; (w + 1) * (h + 1)];
        for y in 0..h {
            for x in 0..w {
                let v = img.get(x as u32, y as u32) as f64;
                let idx = (y + 1) * (w + 1) + (x + 1);
                sum[idx] = v + sum[idx - 1] + sum[idx - (w + 1)] - sum[idx - (w + 1) - 1];
                sum_sq[idx] =
                    v * v + sum_sq[idx - 1] + sum_sq[idx - (w + 1)] - sum_sq[idx - (w + 1) - 1];
            }
        }
        Self { w: w + 1, sum, sum_sq }
    }

    fn window(&self, x: usize, y: usize, tw: usize, th: usize) -> (f64, f64) {
        let rect = |grid: &[f64]| {
            grid[(y + th) * self.w + (x + tw)] - grid[y * self.w + (x + tw)]
                - grid[(y + th) * self.w + x]
                + grid[y * self.w + x]
        };
        (rect(&self.sum), rect(&self.sum_sq))
    }
}

/// Zero-mean normalized cross-correlation of the template against every
/// offset of the image, over a scale pyramid (nearest-neighbor template
/// resampling). Returns the global maximum; scales are tried in ascending
/// order and only strictly better scores replace the incumbent, so ties
/// resolve to the smaller scale and the top-left offset. A zero-variance
/// window or template scores 0.
pub fn ncc_match(
    img: &Image,
    template: &Image,
    scales: &[f64],
) -> Result<MatchResult, TextLocError> {
    let mut sorted: Vec<f64> = scales.to_vec();
    sorted.sort_by(f64::total_cmp);
    let integrals = Integrals::build(img);
    let mut best: Option<MatchResult> = None;
    let mut any_fit = false;
    for &scale in &sorted {
        let tw = ((template.width() as f64 * scale).round() as u32).max(1);
        let th = ((template.height() as f64 * scale).round() as u32).max(1);
        if tw > img.width() || th > img.height() {
            continue;
        }
        any_fit = true;
        let t = resample(template, tw, th);
        let n = (tw * th) as f64;
        let t_sum: f64 = t.pixels().iter().map(|&p| p as f64).sum();
        let t_mean = t_sum / n;
        let t_var: f64 = t
            .pixels()
            .iter()
            .map(|&p| (p as f64 - t_mean).powi(2))
            .sum();

        for y in 0..=(img.height() - th) {
            for x in 0..=(img.width() - tw) {
                let (w_sum, w_sum_sq) = integrals.window(x as usize, y as usize, tw as usize, th as usize);
                let w_mean = w_sum / n;
                let w_var = w_sum_sq - w_sum * w_sum / n;
                let score = if w_var <= 1e-12 || t_var <= 1e-12 {
                    0.0
                } else {
                    let mut cross = 0f64;
                    for ty in 0..th {
                        for tx in 0..tw {
                            cross +=
                                img.get(x + tx, y + ty) as f64 * t.get(tx, ty) as f64;
                        }
                    }
                    (cross - w_mean * t_sum) / (w_var * t_var).sqrt()
                };
                if best.as_ref().map_or(true, |b| score > b.score) {
                    best = Some(MatchResult {
                        location: PixelBox::new(
                            x as f64,
                            y as f64,
                            (x + tw) as f64,
                            (y + th) as f64,
                        ),
                        score,
                        scale,
                    });
                }
            }
        }
    }
    if !any_fit {
        return Err(TextLocError::TemplateTooLarge {
            tw: template.width(),
            th: template.height(),
            iw: img.width(),
            ih: img.height(),
        });
    }
    Ok(best.expect("at least one scale fit"))
}

/// The built-in EXIT word template: 64×24 binary rendering in a blocky
/// sans style (ink 0, background 255). Shipped as a fixture; its checksum
/// is pinned in tests.
pub fn exit_template() -> Image {
    let mut img = Image::filled(64, 24, 255);
    let mut rect = |x0: u32, y0: u32, x1: u32, y1: u32| {
        for y in y0..y1 {
            for x in x0..x1 {
                img.set(x, y, 0);
            }
        }
    };
    // letter slots are 12 wide starting at x = 5, 19, 33, 47; glyph rows 4..20
    // E
    rect(5, 4, 8, 20);
    rect(5, 4, 17, 7);
    rect(5, 10, 14, 13);
    rect(5, 17, 17, 20);
    // X: two 3-px diagonal strokes
    for r in 0..16u32 {
        let off = (9 * r + 7) / 15; // 0..=9 across 16 rows
        rect(19 + off, 4 + r, 22 + off, 5 + r);
        rect(28 - off, 4 + r, 31 - off, 5 + r);
    }
    // I
    rect(33, 4, 45, 7);
    rect(33, 17, 45, 20);
    rect(37, 4, 41, 20);
    // T
    rect(47, 4, 59, 7);
    rect(51, 4, 55, 20);
    img
}

/// FNV-1a over the template pixels.
pub fn exit_template_checksum() -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &p in exit_template().pixels() {
        h ^= p as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

pub const EXIT_TEMPLATE_CHECKSUM: u64 = 0xd8df_11bc_e868_0e8f;

/// Search both binarization polarities for the EXIT template across the
/// scale pyramid; a match is reported iff the best score reaches the
/// threshold. Absence (including images too small to search) is `None`.
pub fn detect_exit_sign(img: &Image) -> Option<MatchResult> {
    detect_exit_sign_with(img, EXIT_NCC_THRESHOLD, &EXIT_SCALES)
}

pub fn detect_exit_sign_with(img: &Image, threshold: f64, scales: &[f64]) -> Option<MatchResult> {
    let template = exit_template();
    let t = raster::otsu_threshold(&raster::histogram(img)).ok()?;
    let mut best: Option<MatchResult> = None;
    for polarity in [InkPolarity::Dark, InkPolarity::Light] {
        let rendered = raster::binarize(img, t, polarity).to_image();
        if let Ok(m) = ncc_match(&rendered, &template, scales) {
            if best.as_ref().map_or(true, |b| m.score > b.score) {
                best = Some(m);
            }
        }
    }
    best.filter(|m| m.score >= threshold)
}

/// Write the region to a temp PNM, substitute `{input}` into the command
/// template (whitespace-tokenized, no shell), run it, and return stdout as
/// UTF-8 lines.
pub fn run_external_ocr(region: &Image, command_template: &str) -> Result<Vec<String>, TextLocError> {
    if !command_template.contains("{input}") {
        return Err(TextLocError::BadCommandTemplate);
    }
    let mut file = tempfile::Builder::new()
        .prefix("sanip-ocr-")
        .suffix(".pnm")
        .tempfile()?;
    file.write_all(&raster::emit_pgm(region))?;
    file.flush()?;
    let path = file.path().to_string_lossy().into_owned();

    let tokens: Vec<String> = command_template
        .split_whitespace()
        .map(|tok| tok.replace("{input}", &path))
        .collect();
    let (program, args) = tokens.split_first().ok_or(TextLocError::EmptyCommand)?;
    let output = Command::new(program).args(args).output()?;
    if !output.status.success() {
        return Err(TextLocError::EngineFailed {
            status: output.status.code().unwrap_or(-1),
            stderr: String::from_utf8_lossy(&output.stderr).into_owned(),
        });
    }
    Ok(String::from_utf8_lossy(&output.stdout)
        .lines()
        .map(str::to_owned)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::os::unix::fs::PermissionsExt;

    fn bitmap_from_str(rows: &[&str]) -> Bitmap {
        let h = rows.len() as u32;
        let w = rows[0].len() as u32;
        let bits = rows
            .iter()
            .flat_map(|r| r.bytes().map(|b| (b == b'#') as u8))
            .collect();
        Bitmap::new(w, h, bits).unwrap()
    }

    #[test]
    fn components_two_blocks() {
        let bmp = bitmap_from_str(&["##..##", "##..##"]);
        let comps = connected_components(&bmp);
        assert_eq!(comps.len(), 2);
        assert!(comps.iter().all(|c| c.area == 4));
        assert_eq!(comps[0].bbox.xmin, 0.0);
        assert_eq!(comps[1].bbox.xmin, 4.0);
    }

    #[test]
    fn components_diagonal_joins_with_8_connectivity() {
        let bmp = bitmap_from_str(&["#.", ".#"]);
        let comps = connected_components(&bmp);
        assert_eq!(comps.len(), 1);
        assert_eq!(comps[0].area, 2);
    }

    #[test]
    fn components_mirror_invariance() {
        let bmp = bitmap_from_str(&["#..##", "##..#", ".#.##"]);
        let comps = connected_components(&bmp);
        let (w, h) = (bmp.width(), bmp.height());
        let mut mirrored_bits = Vec::new();
        for y in 0..h {
            for x in (0..w).rev() {
                mirrored_bits.push(bmp.is_ink(x, y) as u8);
            }
        }
        let mirrored = Bitmap::new(w, h, mirrored_bits).unwrap();
        let mcomps = connected_components(&mirrored);
        let mut areas: Vec<usize> = comps.iter().map(|c| c.area).collect();
        let mut mareas: Vec<usize> = mcomps.iter().map(|c| c.area).collect();
        areas.sort_unstable();
        mareas.sort_unstable();
        assert_eq!(areas, mareas);
    }

    fn comp(x: f64, y: f64, w: f64, h: f64) -> ConnectedComponent {
        ConnectedComponent {
            bbox: PixelBox::new(x, y, x + w, y + h),
            area: (w * h) as usize,
            centroid: (x + w / 2.0, y + h / 2.0),
        }
    }

    #[test]
    fn filter_rejects_extremes() {
        let full = comp(0.0, 0.0, 100.0, 100.0);
        let speck = comp(5.0, 5.0, 1.0, 1.0);
        let glyph = comp(10.0, 10.0, 12.0, 20.0);
        let kept = filter_char_candidates(&[full, speck, glyph.clone()], 100, 100);
        assert_eq!(kept, vec![glyph]);
    }

    #[test]
    fn group_single_baseline() {
        let comps = vec![
            comp(0.0, 10.0, 10.0, 14.0),
            comp(14.0, 10.0, 10.0, 14.0),
            comp(28.0, 10.0, 10.0, 14.0),
        ];
        let lines = group_into_lines(&comps);
        assert_eq!(lines.len(), 1);
        assert_eq!(lines[0].members.len(), 3);
        assert_eq!(lines[0].bbox.xmax, 38.0);
    }

    #[test]
    fn group_two_baselines() {
        let comps = vec![
            comp(0.0, 0.0, 10.0, 12.0),
            comp(14.0, 0.0, 10.0, 12.0),
            comp(0.0, 50.0, 10.0, 12.0),
        ];
        let lines = group_into_lines(&comps);
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0].bbox.ymin, 0.0);
        assert_eq!(lines[1].bbox.ymin, 50.0);
    }

    #[test]
    fn group_receipt_rows_in_order_and_input_order_independent() {
        let mut comps = Vec::new();
        for row in 0..5 {
            for k in 0..4 {
                comps.push(comp(5.0 + 13.0 * k as f64, 8.0 + 20.0 * row as f64, 9.0, 12.0));
            }
        }
        let lines = group_into_lines(&comps);
        assert_eq!(lines.len(), 5);
        for (i, line) in lines.iter().enumerate() {
            assert_eq!(line.members.len(), 4);
            assert_eq!(line.bbox.ymin, 8.0 + 20.0 * i as f64);
            let xs: Vec<f64> = line.members.iter().map(|m| m.centroid.0).collect();
            assert!(xs.windows(2).all(|w| w[0] < w[1]));
        }
        let mut shuffled = comps.clone();
        shuffled.reverse();
        shuffled.swap(3, 11);
        assert_eq!(group_into_lines(&shuffled), lines);
    }

    #[test]
    fn ncc_exact_patch_scores_one() {
        let mut img = Image::filled(40, 30, 200);
        for y in 10..20 {
            for x in 5..15 {
                img.set(x, y, if (x + y) % 3 == 0 { 10 } else { 90 });
            }
        }
        let template = img.crop(5, 10, 10, 10).unwrap();
        let m = ncc_match(&img, &template, &[1.0]).unwrap();
        assert!((m.score - 1.0).abs() < 1e-9, "score {}", m.score);
        assert_eq!(m.location.xmin, 5.0);
        assert_eq!(m.location.ymin, 10.0);
    }

    #[test]
    fn ncc_negative_patch_scores_minus_one() {
        let mut img = Image::filled(30, 30, 128);
        for y in 4..14 {
            for x in 4..14 {
                img.set(x, y, if x % 2 == 0 { 10 } else { 240 });
            }
        }
        let patch = img.crop(4, 4, 10, 10).unwrap();
        let negated = Image::new(
            10,
            10,
            patch.pixels().iter().map(|&p| 255 - p).collect(),
        )
        .unwrap();
        // restrict the search to the patch itself
        let region = img.crop(4, 4, 10, 10).unwrap();
        let m = ncc_match(&region, &negated, &[1.0]).unwrap();
        assert!((m.score + 1.0).abs() < 1e-9, "score {}", m.score);
    }

    #[test]
    fn ncc_uniform_image_scores_zero() {
        let img = Image::filled(40, 20, 77);
        let template = exit_template();
        let m = ncc_match(&img, &template, &[0.5]).unwrap();
        assert_eq!(m.score, 0.0);
    }

    #[test]
    fn ncc_errors_when_nothing_fits() {
        let img = Image::filled(10, 10, 0);
        let template = exit_template();
        assert!(matches!(
            ncc_match(&img, &template, &[1.0, 2.0]),
            Err(TextLocError::TemplateTooLarge { .. })
        ));
    }

    #[test]
    fn ncc_affine_luminance_invariance() {
        // even pixel values so that halving is an exact affine map
        let mut img = Image::filled(30, 20, 100);
        for y in 3..15 {
            for x in 6..18 {
                img.set(x, y, (((x * 13 + y * 7) % 60) * 2) as u8 + 60);
            }
        }
        let template = img.crop(6, 3, 12, 12).unwrap();
        let base = ncc_match(&img, &template, &[1.0]).unwrap();
        // gain 0.5, bias +40 applied to the whole image
        let transformed = Image::new(
            30,
            20,
            img.pixels().iter().map(|&p| (p / 2) + 40).collect(),
        )
        .unwrap();
        let m = ncc_match(&transformed, &template, &[1.0]).unwrap();
        assert_eq!(m.location, base.location);
        assert!((m.score - base.score).abs() < 1e-6);
    }

    #[test]
    fn exit_template_pinned() {
        let t = exit_template();
        assert_eq!((t.width(), t.height()), (64, 24));
        assert_eq!(exit_template_checksum(), EXIT_TEMPLATE_CHECKSUM);
    }

    #[test]
    fn exit_self_match() {
        let template = exit_template();
        let mut img = Image::filled(120, 60, 255);
        for y in 0..24 {
            for x in 0..64 {
                img.set(20 + x, 18 + y, template.get(x, y));
            }
        }
        let m = detect_exit_sign(&img).expect("self-match");
        assert!(m.score >= 0.99, "score {}", m.score);
        assert_eq!(m.scale, 1.0);
        assert_eq!(m.location.xmin, 20.0);
    }

    #[test]
    fn exit_blank_image_no_match() {
        assert!(detect_exit_sign(&Image::filled(100, 50, 255)).is_none());
        assert!(detect_exit_sign(&Image::filled(100, 50, 3)).is_none());
    }

    #[test]
    fn exit_inverted_polarity_still_matches() {
        let template = exit_template();
        let mut img = Image::filled(120, 60, 10);
        for y in 0..24 {
            for x in 0..64 {
                // light-on-dark signage
                img.set(30 + x, 20 + y, 255 - template.get(x, y));
            }
        }
        let m = detect_exit_sign(&img).expect("inverted match");
        assert!(m.score >= 0.99, "score {}", m.score);
    }

    fn write_stub(dir: &std::path::Path, name: &str, body: &str) -> String {
        let path = dir.join(name);
        std::fs::write(&path, body).unwrap();
        let mut perms = std::fs::metadata(&path).unwrap().permissions();
        perms.set_mode(0o755);
        std::fs::set_permissions(&path, perms).unwrap();
        path.to_string_lossy().into_owned()
    }

    #[test]
    fn ocr_stub_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let stub = write_stub(
            dir.path(),
            "ocr.sh",
            "#!/bin/sh\ntest -f \"$1\" || exit 3\necho '1 Bottle Water 1,25'\n",
        );
        let region = Image::filled(8, 8, 255);
        let lines = run_external_ocr(&region, &format!("{stub} {{input}}")).unwrap();
        assert_eq!(lines, vec!["1 Bottle Water 1,25".to_string()]);
    }

    #[test]
    fn ocr_rejects_template_without_placeholder() {
        let region = Image::filled(4, 4, 0);
        assert!(matches!(
            run_external_ocr(&region, "tesseract out"),
            Err(TextLocError::BadCommandTemplate)
        ));
    }

    #[test]
    fn ocr_propagates_engine_failure_with_stderr() {
        let dir = tempfile::tempdir().unwrap();
        let stub = write_stub(
            dir.path(),
            "fail.sh",
            "#!/bin/sh\necho 'engine exploded' >&2\nexit 2\n",
        );
        let region = Image::filled(4, 4, 0);
        match run_external_ocr(&region, &format!("{stub} {{input}}")).unwrap_err() {
            TextLocError::EngineFailed { status, stderr } => {
                assert_eq!(status, 2);
                assert!(stderr.contains("engine exploded"));
            }
            other => panic!("unexpected error {other}"),
        }
    }

    proptest! {
        #[test]
        fn component_areas_sum_to_ink_count(bits in proptest::collection::vec(0u8..=1, 96)) {
            let ink: usize = bits.iter().map(|&b| b as usize).sum();
            let bmp = Bitmap::new(12, 8, bits).unwrap();
            let comps = connected_components(&bmp);
            prop_assert_eq!(comps.iter().map(|c| c.area).sum::<usize>(), ink);
        }

        #[test]
        fn ncc_gain_invariance(gain in 1u8..=3, bias in 0u8..=60) {
            // values divisible by 6 keep division by gain ∈ {1,2,3} exact
            let mut img = Image::filled(24, 16, 90);
            for y in 2..14 {
                for x in 2..20 {
                    img.set(x, y, (((x * 11 + y * 5) % 30) * 6) as u8 + 12);
                }
            }
            let template = img.crop(2, 2, 10, 10).unwrap();
            let transformed = Image::new(24, 16, img.pixels().iter().map(|&p| p / gain + bias).collect()).unwrap();
            let base = ncc_match(&img, &template, &[1.0]).unwrap();
            let got = ncc_match(&transformed, &template, &[1.0]).unwrap();
            prop_assert_eq!(got.location, base.location);
        }
    }
}
