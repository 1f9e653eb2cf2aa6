//! LabelImg-style YOLO annotations, class lists, and the box geometry
//! shared with detection.
//!
//! YOLO txt is the canonical on-disk format; PASCAL VOC XML is accepted
//! read-only on a best-effort basis.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("duplicate class name \"{0}\"")]
    DuplicateClass(String),
    #[error("empty class name at line {0}")]
    EmptyClass(usize),
    #[error("line {line}: {reason}")]
    Line { line: usize, reason: String },
}

/// Ordered class names; a class id is its position in the list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassList {
    names: Vec<String>,
}

impl ClassList {
    pub fn new(names: Vec<String>) -> Result<Self, DatasetError> {
        for (i, name) in names.iter().enumerate() {
            if name.is_empty() || name.contains('\n') {
                return Err(DatasetError::EmptyClass(i + 1));
            }
            if names[..i].contains(name) {
                return Err(DatasetError::DuplicateClass(name.clone()));
            }
        }
        Ok(Self { names })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn id_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// Parse a classes.txt: one class name per non-empty line, order preserved.
pub fn load_class_list(text: &str) -> Result<ClassList, DatasetError> {
    let names = text
        .lines()
        .map(str::trim_end)
        .filter(|l| !l.is_empty())
        .map(str::to_owned)
        .collect();
    ClassList::new(names)
}

/// One YOLO-format box: normalized center and extent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnnotationRecord {
    pub class_id: usize,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

/// Corner-form box in pixel coordinates (VOC convention).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PixelBox {
    pub xmin: f64,
    pub ymin: f64,
    pub xmax: f64,
    pub ymax: f64,
}

impl PixelBox {
    pub fn new(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Self {
        debug_assert!(xmin <= xmax && ymin <= ymax);
        Self {
            xmin,
            ymin,
            xmax,
            ymax,
        }
    }

    pub fn width(&self) -> f64 {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> f64 {
        self.ymax - self.ymin
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }
}

/// Parse the per-image YOLO sidecar text. Each non-empty line holds
/// `class_id cx cy w h`; errors carry 1-based line numbers.
pub fn parse_yolo_annotation(
    text: &str,
    classes: &ClassList,
) -> Result<Vec<AnnotationRecord>, DatasetError> {
    let mut records = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(DatasetError::Line {
                line,
                reason: format!("expected 5 fields, found {}", fields.len()),
            });
        }
        let class_id: usize = fields[0].parse().map_err(|_| DatasetError::Line {
            line,
            reason: format!("class id \"{}\" is not an unsigned integer", fields[0]),
        })?;
        if class_id >= classes.len() {
            return Err(DatasetError::Line {
                line,
                reason: format!(
                    "class id {class_id} out of range for {} classes",
                    classes.len()
                ),
            });
        }
        let mut coords = [0f64; 4];
        for (slot, field) in coords.iter_mut().zip(&fields[1..]) {
            *slot = field.parse().map_err(|_| DatasetError::Line {
                line,
                reason: format!("\"{field}\" is not a number"),
            })?;
        }
        let [cx, cy, w, h] = coords;
        if !(0.0..=1.0).contains(&cx) || !(0.0..=1.0).contains(&cy) {
            return Err(DatasetError::Line {
                line,
                reason: format!("center ({cx}, {cy}) outside [0,1]"),
            });
        }
        if !(w > 0.0 && w <= 1.0 && h > 0.0 && h <= 1.0) {
            return Err(DatasetError::Line {
                line,
                reason: format!("extent ({w}, {h}) outside (0,1]"),
            });
        }
        records.push(AnnotationRecord {
            class_id,
            cx,
            cy,
            w,
            h,
        });
    }
    Ok(records)
}

/// Serialize records as YOLO txt with 6-decimal coordinates.
/// `parse_yolo_annotation` recovers them within 1e-6.
pub fn emit_yolo_annotation(records: &[AnnotationRecord]) -> String {
    records
        .iter()
        .map(|r| {
            format!(
                "{} {:.6} {:.6} {:.6} {:.6}",
                r.class_id, r.cx, r.cy, r.w, r.h
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Convert a normalized record to pixel corners, clamped to the image.
pub fn normalized_to_pixel(r: &AnnotationRecord, img_w: u32, img_h: u32) -> PixelBox {
    let (w, h) = (img_w as f64, img_h as f64);
    PixelBox::new(
        ((r.cx - r.w / 2.0) * w).clamp(0.0, w),
        ((r.cy - r.h / 2.0) * h).clamp(0.0, h),
        ((r.cx + r.w / 2.0) * w).clamp(0.0, w),
        ((r.cy + r.h / 2.0) * h).clamp(0.0, h),
    )
}

/// Inverse of [`normalized_to_pixel`] for boxes inside the image.
pub fn pixel_to_normalized(b: &PixelBox, class_id: usize, img_w: u32, img_h: u32) -> AnnotationRecord {
    let (w, h) = (img_w as f64, img_h as f64);
    AnnotationRecord {
        class_id,
        cx: (b.xmin + b.xmax) / 2.0 / w,
        cy: (b.ymin + b.ymax) / 2.0 / h,
        w: b.width() / w,
        h: b.height() / h,
    }
}

/// Intersection-over-union of two boxes; 0 when the union has no area.
pub fn iou(a: &PixelBox, b: &PixelBox) -> f64 {
    let ix = (a.xmax.min(b.xmax) - a.xmin.max(b.xmin)).max(0.0);
    let iy = (a.ymax.min(b.ymax) - a.ymin.max(b.ymin)).max(0.0);
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Input to [`validate_dataset`]: the names present in a dataset directory.
#[derive(Debug, Clone, Default)]
pub struct DatasetListing {
    /// Image file names, e.g. `parleg_001.pnm`.
    pub images: Vec<String>,
    /// `(file name, contents)` for each YOLO sidecar, e.g. `parleg_001.txt`.
    pub annotations: Vec<(String, String)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MalformedEntry {
    pub file: String,
    pub reason: String,
}

/// Dataset health summary; `ok` means no malformed lines and no orphan
/// annotations.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub per_class: Vec<ClassCount>,
    pub total_records: usize,
    pub annotated_images: usize,
    pub orphan_annotations: Vec<String>,
    pub images_without_annotations: Vec<String>,
    pub malformed: Vec<MalformedEntry>,
    pub ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassCount {
    pub class: String,
    pub count: usize,
}

impl ValidationReport {
    /// JSON-lines rendering: one typed JSON object per report entry,
    /// ending with a summary line.
    pub fn to_json_lines(&self) -> Vec<String> {
        #[derive(Serialize)]
        #[serde(tag = "type", rename_all = "snake_case")]
        enum Line<'a> {
            ClassCount { class: &'a str, count: usize },
            OrphanAnnotation { file: &'a str },
            ImageWithoutAnnotation { file: &'a str },
            Malformed { file: &'a str, reason: &'a str },
            Summary {
                total_records: usize,
                annotated_images: usize,
                ok: bool,
            },
        }
        let mut lines = Vec::new();
        let mut push = |l: Line| {
            lines.push(serde_json::to_string(&l).expect("report line serializes"));
        };
        for cc in &self.per_class {
            push(Line::ClassCount {
                class: &cc.class,
                count: cc.count,
            });
        }
        for f in &self.orphan_annotations {
            push(Line::OrphanAnnotation { file: f });
        }
        for f in &self.images_without_annotations {
            push(Line::ImageWithoutAnnotation { file: f });
        }
        for m in &self.malformed {
            push(Line::Malformed {
                file: &m.file,
                reason: &m.reason,
            });
        }
        push(Line::Summary {
            total_records: self.total_records,
            annotated_images: self.annotated_images,
            ok: self.ok,
        });
        lines
    }

    /// Line-oriented rendering for terminals and logs.
    pub fn to_lines(&self) -> Vec<String> {
        let mut out = Vec::new();
        for cc in &self.per_class {
            out.push(format!("class {}: {} boxes", cc.class, cc.count));
        }
        out.push(format!(
            "total {} boxes across {} annotated images",
            self.total_records, self.annotated_images
        ));
        for orphan in &self.orphan_annotations {
            out.push(format!("orphan annotation (no image): {orphan}"));
        }
        for img in &self.images_without_annotations {
            out.push(format!("image without annotation: {img}"));
        }
        for m in &self.malformed {
            out.push(format!("malformed {}: {}", m.file, m.reason));
        }
        out.push(format!("ok: {}", self.ok));
        out
    }
}

fn stem(name: &str) -> &str {
    match name.rfind('.') {
        Some(pos) if pos > 0 => &name[..pos],
        _ => name,
    }
}

/// Cross-check images against annotation sidecars and tally classes.
/// Problems become report entries; this never fails.
pub fn validate_dataset(listing: &DatasetListing, classes: &ClassList) -> ValidationReport {
    let image_stems: Vec<&str> = listing.images.iter().map(|n| stem(n)).collect();
    let ann_stems: Vec<&str> = listing.annotations.iter().map(|(n, _)| stem(n)).collect();

    let mut counts = vec![0usize; classes.len()];
    let mut total = 0usize;
    let mut malformed = Vec::new();
    for (name, text) in &listing.annotations {
        match parse_yolo_annotation(text, classes) {
            Ok(records) => {
                for r in &records {
                    counts[r.class_id] += 1;
                }
                total += records.len();
            }
            Err(e) => malformed.push(MalformedEntry {
                file: name.clone(),
                reason: e.to_string(),
            }),
        }
    }

    let orphan_annotations: Vec<String> = listing
        .annotations
        .iter()
        .filter(|(n, _)| !image_stems.contains(&stem(n)))
        .map(|(n, _)| n.clone())
        .collect();
    let images_without_annotations: Vec<String> = listing
        .images
        .iter()
        .filter(|n| !ann_stems.contains(&stem(n)))
        .cloned()
        .collect();
    let annotated_images = listing.images.len() - images_without_annotations.len();

    let ok = malformed.is_empty() && orphan_annotations.is_empty();
    ValidationReport {
        per_class: classes
            .names()
            .iter()
            .zip(&counts)
            .map(|(name, &count)| ClassCount {
                class: name.clone(),
                count,
            })
            .collect(),
        total_records: total,
        annotated_images,
        orphan_annotations,
        images_without_annotations,
        malformed,
        ok,
    }
}

/// Best-effort read of a PASCAL VOC XML annotation: every `<object>` with a
/// `<name>` and a `<bndbox>` yields a labeled box. Anything unparseable is
/// skipped.
pub fn parse_voc_xml(text: &str) -> Vec<(String, PixelBox)> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(obj) = section(rest, "object") {
        let (body, tail) = obj;
        if let (Some(name), Some(bnd)) = (tag_text(body, "name"), section(body, "bndbox")) {
            let coords: Option<[f64; 4]> = ["xmin", "ymin", "xmax", "ymax"]
                .iter()
                .map(|t| tag_text(bnd.0, t).and_then(|v| v.trim().parse().ok()))
                .collect::<Option<Vec<f64>>>()
                .and_then(|v| v.try_into().ok());
            if let Some([xmin, ymin, xmax, ymax]) = coords {
                if xmin <= xmax && ymin <= ymax {
                    out.push((name.trim().to_owned(), PixelBox::new(xmin, ymin, xmax, ymax)));
                }
            }
        }
        rest = tail;
    }
    out
}

fn section<'a>(text: &'a str, tag: &str) -> Option<(&'a str, &'a str)> {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    let start = text.find(&open)? + open.len();
    let end = start + text[start..].find(&close)?;
    Some((&text[start..end], &text[end + close.len()..]))
}

fn tag_text<'a>(text: &'a str, tag: &str) -> Option<&'a str> {
    section(text, tag).map(|(body, _)| body)
}
