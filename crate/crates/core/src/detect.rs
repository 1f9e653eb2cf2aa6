//! Deterministic YOLO head post-processing: raw output tensors in, labeled
//! non-overlapping detections out.
//!
//! Inference itself stays behind the `.snt` tensor-file boundary so the
//! decode math here is exactly reproducible without any DL runtime.

use crate::dataset::{iou, ClassList, PixelBox};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("tensor parse error at byte {offset}: {reason}")]
    Parse { offset: usize, reason: String },
    #[error("tensor expects {expected} anchors, got {got}")]
    AnchorCountMismatch { expected: usize, got: usize },
    #[error("no anchors configured for stride {0}")]
    NoAnchorsForStride(u32),
    #[error("class id {id} out of range for {count} classes")]
    ClassIdOutOfRange { id: usize, count: usize },
}

/// Raw model output for one scale: `[grid_h][grid_w][anchor][5+classes]`
/// f32 values plus the pixel stride of one grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorFile {
    dims: [u32; 4],
    stride: u32,
    values: Vec<f32>,
}

impl TensorFile {
    pub fn new(dims: [u32; 4], stride: u32, values: Vec<f32>) -> Result<Self, DetectError> {
        let product = dims.iter().try_fold(1u64, |acc, &d| acc.checked_mul(d as u64));
        match product {
            Some(p) if p == values.len() as u64 => {}
            _ => {
                return Err(DetectError::Parse {
                    offset: 0,
                    reason: format!("value count {} does not match dims {dims:?}", values.len()),
                })
            }
        }
        if dims[3] < 6 {
            return Err(DetectError::Parse {
                offset: 0,
                reason: format!("channel dim {} < 6 (tx,ty,tw,th,obj,class…)", dims[3]),
            });
        }
        if dims[0] == 0 || dims[1] == 0 || dims[2] == 0 || stride == 0 {
            return Err(DetectError::Parse {
                offset: 0,
                reason: "zero grid/anchor/stride dimension".into(),
            });
        }
        Ok(Self {
            dims,
            stride,
            values,
        })
    }

    pub fn grid_h(&self) -> u32 {
        self.dims[0]
    }

    pub fn grid_w(&self) -> u32 {
        self.dims[1]
    }

    pub fn num_anchors(&self) -> usize {
        self.dims[2] as usize
    }

    pub fn num_classes(&self) -> usize {
        self.dims[3] as usize - 5
    }

    pub fn stride(&self) -> u32 {
        self.stride
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    fn at(&self, row: u32, col: u32, anchor: usize, ch: usize) -> f64 {
        let [_, gw, na, nc] = self.dims;
        let idx = (((row * gw + col) as usize * na as usize) + anchor) * nc as usize + ch;
        self.values[idx] as f64
    }
}

const TENSOR_MAGIC: &[u8; 4] = b"SANT";

/// Parse a SANT tensor file: `"SANT" | u32×4 dims LE | u32 stride LE |
/// f32 LE payload`.
pub fn load_tensor(bytes: &[u8]) -> Result<TensorFile, DetectError> {
    if bytes.len() < 4 || &bytes[..4] != TENSOR_MAGIC {
        return Err(DetectError::Parse {
            offset: 0,
            reason: "missing SANT magic".into(),
        });
    }
    let take_u32 = |offset: usize| -> Result<u32, DetectError> {
        bytes
            .get(offset..offset + 4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
            .ok_or_else(|| DetectError::Parse {
                offset,
                reason: "header truncated".into(),
            })
    };
    let dims = [take_u32(4)?, take_u32(8)?, take_u32(12)?, take_u32(16)?];
    let stride = take_u32(20)?;
    let count = dims
        .iter()
        .try_fold(1u64, |acc, &d| acc.checked_mul(d as u64))
        .filter(|&p| p <= (usize::MAX as u64) / 4)
        .ok_or(DetectError::Parse {
            offset: 4,
            reason: format!("dims {dims:?} overflow"),
        })?;
    let payload = &bytes[24..];
    if payload.len() as u64 != count * 4 {
        return Err(DetectError::Parse {
            offset: 24 + payload.len(),
            reason: format!(
                "payload holds {} bytes, want exactly {}",
                payload.len(),
                count * 4
            ),
        });
    }
    let values = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    TensorFile::new(dims, stride, values)
}

/// Serialize a tensor in the SANT layout; `load_tensor` inverts it exactly.
pub fn write_tensor(t: &TensorFile) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + t.values.len() * 4);
    out.extend_from_slice(TENSOR_MAGIC);
    for d in t.dims {
        out.extend_from_slice(&d.to_le_bytes());
    }
    out.extend_from_slice(&t.stride.to_le_bytes());
    for v in &t.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Prior box size in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    pub pw: f64,
    pub ph: f64,
}

impl Anchor {
    pub const fn new(pw: f64, ph: f64) -> Self {
        Self { pw, ph }
    }
}

/// One grid-cell/anchor proposal: box plus per-class scores
/// `σ(objectness)·σ(class logit)`.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub bbox: PixelBox,
    pub class_scores: Vec<f64>,
}

/// Scored, labeled box.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Detection {
    pub bbox: PixelBox,
    pub class_id: usize,
    pub class_name: String,
    pub score: f64,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Decode one output grid:
/// `bx = (σ(tx)+col)·stride`, `by = (σ(ty)+row)·stride`,
/// `bw = pw·exp(tw)`, `bh = ph·exp(th)`.
pub fn decode_yolo_grid(t: &TensorFile, anchors: &[Anchor]) -> Result<Vec<Candidate>, DetectError> {
    if anchors.len() != t.num_anchors() {
        return Err(DetectError::AnchorCountMismatch {
            expected: t.num_anchors(),
            got: anchors.len(),
        });
    }
    let stride = t.stride() as f64;
    let classes = t.num_classes();
    let mut out = Vec::with_capacity((t.grid_h() * t.grid_w()) as usize * anchors.len());
    for row in 0..t.grid_h() {
        for col in 0..t.grid_w() {
            for (a, anchor) in anchors.iter().enumerate() {
                let bx = (sigmoid(t.at(row, col, a, 0)) + col as f64) * stride;
                let by = (sigmoid(t.at(row, col, a, 1)) + row as f64) * stride;
                let bw = anchor.pw * t.at(row, col, a, 2).exp();
                let bh = anchor.ph * t.at(row, col, a, 3).exp();
                let obj = sigmoid(t.at(row, col, a, 4));
                let class_scores = (0..classes)
                    .map(|c| obj * sigmoid(t.at(row, col, a, 5 + c)))
                    .collect();
                out.push(Candidate {
                    bbox: PixelBox::new(bx - bw / 2.0, by - bh / 2.0, bx + bw / 2.0, by + bh / 2.0),
                    class_scores,
                });
            }
        }
    }
    Ok(out)
}

/// Keep each candidate's best class when it clears the threshold; score
/// ties pick the lowest class id. Names are filled by
/// [`label_detections`].
pub fn filter_by_confidence(cands: &[Candidate], conf_threshold: f64) -> Vec<Detection> {
    let mut out = Vec::new();
    for cand in cands {
        let mut best: Option<(usize, f64)> = None;
        for (id, &score) in cand.class_scores.iter().enumerate() {
            if best.map_or(true, |(_, s)| score > s) {
                best = Some((id, score));
            }
        }
        if let Some((class_id, score)) = best {
            if score >= conf_threshold {
                out.push(Detection {
                    bbox: cand.bbox,
                    class_id,
                    class_name: String::new(),
                    score,
                });
            }
        }
    }
    out
}

/// Greedy per-class non-maximum suppression. Processing order is score
/// descending with ties broken by lower class id then earlier index, which
/// makes the output fully deterministic.
pub fn nms(dets: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .score
            .total_cmp(&dets[a].score)
            .then(dets[a].class_id.cmp(&dets[b].class_id))
            .then(a.cmp(&b))
    });
    let mut suppressed = vec![false; dets.len()];
    let mut kept = Vec::new();
    for (pos, &i) in order.iter().enumerate() {
        if suppressed[i] {
            continue;
        }
        kept.push(dets[i].clone());
        for &j in &order[pos + 1..] {
            if !suppressed[j]
                && dets[j].class_id == dets[i].class_id
                && iou(&dets[i].bbox, &dets[j].bbox) > iou_threshold
            {
                suppressed[j] = true;
            }
        }
    }
    kept
}

/// Resolve class names from the class list.
pub fn label_detections(
    dets: &[Detection],
    classes: &ClassList,
) -> Result<Vec<Detection>, DetectError> {
    dets.iter()
        .map(|d| {
            let name = classes
                .name(d.class_id)
                .ok_or(DetectError::ClassIdOutOfRange {
                    id: d.class_id,
                    count: classes.len(),
                })?;
            Ok(Detection {
                class_name: name.to_owned(),
                ..d.clone()
            })
        })
        .collect()
}

/// Anchor priors grouped by the grid stride they apply to.
#[derive(Debug, Clone)]
pub struct ScaleAnchors {
    pub stride: u32,
    pub anchors: Vec<Anchor>,
}

/// Head post-processing configuration. Defaults follow upstream
/// YOLOv4-tiny conventions on a 416×416 input: strides 32 and 16 with the
/// standard anchor sets, confidence 0.25, NMS IoU 0.45.
#[derive(Debug, Clone)]
pub struct DetectConfig {
    pub conf_threshold: f64,
    pub nms_iou: f64,
    pub scales: Vec<ScaleAnchors>,
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self {
            conf_threshold: 0.25,
            nms_iou: 0.45,
            scales: vec![
                ScaleAnchors {
                    stride: 32,
                    anchors: vec![
                        Anchor::new(81.0, 82.0),
                        Anchor::new(135.0, 169.0),
                        Anchor::new(344.0, 319.0),
                    ],
                },
                ScaleAnchors {
                    stride: 16,
                    anchors: vec![
                        Anchor::new(23.0, 27.0),
                        Anchor::new(37.0, 58.0),
                        Anchor::new(81.0, 82.0),
                    ],
                },
            ],
        }
    }
}

impl DetectConfig {
    pub fn anchors_for_stride(&self, stride: u32) -> Result<&[Anchor], DetectError> {
        self.scales
            .iter()
            .find(|s| s.stride == stride)
            .map(|s| s.anchors.as_slice())
            .ok_or(DetectError::NoAnchorsForStride(stride))
    }
}

/// Full head pipeline over any number of scales: decode, filter, suppress,
/// label.
pub fn detect_tensors(
    tensors: &[TensorFile],
    cfg: &DetectConfig,
    classes: &ClassList,
) -> Result<Vec<Detection>, DetectError> {
    let mut unlabeled = Vec::new();
    for t in tensors {
        let anchors = cfg.anchors_for_stride(t.stride())?;
        let cands = decode_yolo_grid(t, anchors)?;
        unlabeled.extend(filter_by_confidence(&cands, cfg.conf_threshold));
    }
    let kept = nms(&unlabeled, cfg.nms_iou);
    label_detections(&kept, classes)
}
