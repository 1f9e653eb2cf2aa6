//! Per-frame orchestration of the detectors, announcement formatting,
//! debouncing, and delivery to an offline speech sink.
//!
//! "Video" is an ordered directory of PNM frames with optional `.snt`
//! tensor sidecars; every run over the same frames and config produces a
//! byte-identical JSON-lines event stream.

use crate::barcode::{self, BarcodePayload};
use crate::dataset::ClassList;
use crate::detect::{self, DetectConfig, Detection, TensorFile};
use crate::qr::{self, SegmentData};
use crate::raster::{self, Image, InkPolarity};
use crate::textloc::{self, MatchResult};
use serde::Serialize;
use std::collections::{HashMap, VecDeque};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Child, Command};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("frame {path} unreadable: {reason}")]
    UnreadableFrame { path: String, reason: String },
    #[error("stage {stage} failed on frame {frame}: {reason}")]
    Stage {
        stage: &'static str,
        frame: u64,
        reason: String,
    },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Pipeline stages in their fixed execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Detect,
    Barcode,
    Qr,
    Exit,
    Ocr,
}

impl Stage {
    pub const ORDER: [Stage; 5] = [
        Stage::Detect,
        Stage::Barcode,
        Stage::Qr,
        Stage::Exit,
        Stage::Ocr,
    ];
}

impl std::str::FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "detect" => Ok(Stage::Detect),
            "barcode" => Ok(Stage::Barcode),
            "qr" => Ok(Stage::Qr),
            "exit" => Ok(Stage::Exit),
            "ocr" => Ok(Stage::Ocr),
            other => Err(format!("unknown stage \"{other}\"")),
        }
    }
}

/// Everything a pipeline run needs. `detect` carries the confidence/NMS
/// thresholds and anchor sets.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub detect: DetectConfig,
    pub stages: Vec<Stage>,
    /// Frames within which a repeated (kind, payload) stays silent.
    pub debounce_frames: u64,
    pub classes: Option<ClassList>,
    pub scan_rows: usize,
    pub ocr_cmd: Option<String>,
    pub tts_cmd: Option<String>,
    pub infer_cmd: Option<String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            detect: DetectConfig::default(),
            stages: vec![Stage::Barcode, Stage::Qr, Stage::Exit],
            debounce_frames: 30,
            classes: None,
            scan_rows: barcode::DEFAULT_SCAN_ROWS,
            ocr_cmd: None,
            tts_cmd: None,
            infer_cmd: None,
        }
    }
}

impl PipelineConfig {
    pub fn enabled(&self, stage: Stage) -> bool {
        self.stages.contains(&stage)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.stages.is_empty() {
            return Err(PipelineError::Config("no stages enabled".into()));
        }
        if self.debounce_frames < 1 {
            return Err(PipelineError::Config("debounce window must be ≥ 1".into()));
        }
        if self.enabled(Stage::Detect) && self.classes.is_none() {
            return Err(PipelineError::Config(
                "detect stage enabled without a class list".into(),
            ));
        }
        if self.enabled(Stage::Ocr) && self.ocr_cmd.is_none() {
            return Err(PipelineError::Config(
                "ocr stage enabled without an ocr command".into(),
            ));
        }
        Ok(())
    }
}

/// Everything the detectors produced for one frame.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameResult {
    pub frame_index: u64,
    pub frame: String,
    pub detections: Vec<Detection>,
    pub barcode: Option<BarcodePayload>,
    pub qr: Option<SegmentData>,
    pub exit_sign: Option<MatchResult>,
    pub text_lines: Vec<String>,
}

/// Kind of finding an announcement reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Object,
    Barcode,
    Qr,
    Exit,
    Text,
}

/// One detector finding, ready for announcement formatting.
#[derive(Debug, Clone, PartialEq)]
pub enum Finding {
    Object { class_name: String },
    Barcode { digits: String },
    Qr { text: String },
    ExitSign,
    Text { line: String },
}

impl Finding {
    pub fn kind(&self) -> Kind {
        match self {
            Finding::Object { .. } => Kind::Object,
            Finding::Barcode { .. } => Kind::Barcode,
            Finding::Qr { .. } => Kind::Qr,
            Finding::ExitSign => Kind::Exit,
            Finding::Text { .. } => Kind::Text,
        }
    }
}

/// Deduplicated speech event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Announcement {
    pub kind: Kind,
    pub payload: String,
    pub frame_index: u64,
}

/// Fixed speech templates per finding kind; no trailing whitespace.
pub fn format_announcement(finding: &Finding) -> String {
    match finding {
        Finding::Object { class_name } => format!("{class_name} detected"),
        Finding::Barcode { digits } => format!("Barcode: {digits}"),
        Finding::Qr { text } => format!("Code says: {text}"),
        Finding::ExitSign => "EXIT sign ahead".to_string(),
        Finding::Text { line } => format!("Text: {line}"),
    }
}

/// Findings of one frame, in stage order.
pub fn frame_findings(frame: &FrameResult) -> Vec<Finding> {
    let mut out = Vec::new();
    for d in &frame.detections {
        out.push(Finding::Object {
            class_name: d.class_name.clone(),
        });
    }
    if let Some(b) = &frame.barcode {
        out.push(Finding::Barcode {
            digits: b.digits.clone(),
        });
    }
    if let Some(q) = &frame.qr {
        out.push(Finding::Qr {
            text: q.text.clone(),
        });
    }
    if frame.exit_sign.is_some() {
        out.push(Finding::ExitSign);
    }
    for line in &frame.text_lines {
        out.push(Finding::Text { line: line.clone() });
    }
    out
}

/// Suppresses repeats: a (kind, payload) key is announced again only after
/// more than `window` frames since its last emission. Only emitted keys
/// refresh the history.
#[derive(Debug, Clone)]
pub struct Debouncer {
    window: u64,
    last_emitted: HashMap<(Kind, String), u64>,
}

impl Debouncer {
    pub fn new(window: u64) -> Self {
        assert!(window >= 1);
        Self {
            window,
            last_emitted: HashMap::new(),
        }
    }

    pub fn debounce(&mut self, frame_index: u64, findings: &[Finding]) -> Vec<Announcement> {
        let mut out = Vec::new();
        for finding in findings {
            let payload = format_announcement(finding);
            let key = (finding.kind(), payload.clone());
            let due = match self.last_emitted.get(&key) {
                None => true,
                Some(&f0) => frame_index.saturating_sub(f0) > self.window,
            };
            if due {
                self.last_emitted.insert(key, frame_index);
                out.push(Announcement {
                    kind: finding.kind(),
                    payload,
                    frame_index,
                });
            }
        }
        out
    }
}

/// Where a delivery went and whether it succeeded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DeliveryRecord {
    pub sink: SinkKind,
    pub ok: bool,
    pub detail: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SinkKind {
    Stdout,
    Command,
}

fn tts_tokens(template: &str, payload: &str) -> Vec<String> {
    template
        .split_whitespace()
        .map(|tok| tok.replace("{text}", payload))
        .collect()
}

/// Deliver one announcement: spawn the TTS command with `{text}`
/// substituted, or print to stdout when no command is configured. Failures
/// are recorded, never raised.
pub fn speak(a: &Announcement, tts_cmd: Option<&str>) -> DeliveryRecord {
    match tts_cmd {
        None => {
            println!("{}", a.payload);
            DeliveryRecord {
                sink: SinkKind::Stdout,
                ok: true,
                detail: None,
            }
        }
        Some(template) => {
            let tokens = tts_tokens(template, &a.payload);
            if tokens.is_empty() {
                return DeliveryRecord {
                    sink: SinkKind::Command,
                    ok: false,
                    detail: Some("empty tts command".into()),
                };
            }
            match Command::new(&tokens[0]).args(&tokens[1..]).output() {
                Ok(output) if output.status.success() => DeliveryRecord {
                    sink: SinkKind::Command,
                    ok: true,
                    detail: None,
                },
                Ok(output) => DeliveryRecord {
                    sink: SinkKind::Command,
                    ok: false,
                    detail: Some(String::from_utf8_lossy(&output.stderr).into_owned()),
                },
                Err(e) => DeliveryRecord {
                    sink: SinkKind::Command,
                    ok: false,
                    detail: Some(e.to_string()),
                },
            }
        }
    }
}

/// Fire-and-forget speech with at most 4 pending child processes. Spawn
/// and exit failures go to stderr; they never touch the event stream.
struct SpeechQueue {
    pending: VecDeque<Child>,
}

impl SpeechQueue {
    fn new() -> Self {
        Self {
            pending: VecDeque::new(),
        }
    }

    fn speak(&mut self, a: &Announcement, tts_cmd: Option<&str>) {
        let Some(template) = tts_cmd else {
            println!("{}", a.payload);
            return;
        };
        if self.pending.len() >= 4 {
            if let Some(mut oldest) = self.pending.pop_front() {
                let _ = oldest.wait();
            }
        }
        let tokens = tts_tokens(template, &a.payload);
        if tokens.is_empty() {
            eprintln!("tts: empty command template");
            return;
        }
        match Command::new(&tokens[0]).args(&tokens[1..]).spawn() {
            Ok(child) => self.pending.push_back(child),
            Err(e) => eprintln!("tts: spawn failed: {e}"),
        }
    }

    fn drain(&mut self) {
        while let Some(mut child) = self.pending.pop_front() {
            match child.wait() {
                Ok(status) if !status.success() => eprintln!("tts: exited with {status}"),
                Err(e) => eprintln!("tts: wait failed: {e}"),
                _ => {}
            }
        }
    }
}

/// Run every enabled stage over one frame. "Not found" outcomes leave
/// their slot empty; configuration and I/O problems abort the frame.
pub fn process_frame(
    img: &Image,
    tensors: &[TensorFile],
    frame_index: u64,
    frame_name: &str,
    cfg: &PipelineConfig,
) -> Result<FrameResult, PipelineError> {
    let mut result = FrameResult {
        frame_index,
        frame: frame_name.to_owned(),
        detections: Vec::new(),
        barcode: None,
        qr: None,
        exit_sign: None,
        text_lines: Vec::new(),
    };
    for stage in Stage::ORDER {
        if !cfg.enabled(stage) {
            continue;
        }
        match stage {
            Stage::Detect => {
                if tensors.is_empty() {
                    return Err(PipelineError::Config(format!(
                        "detect stage enabled but frame {frame_name} has no tensor source"
                    )));
                }
                let classes = cfg.classes.as_ref().ok_or_else(|| {
                    PipelineError::Config("detect stage enabled without a class list".into())
                })?;
                result.detections = detect::detect_tensors(tensors, &cfg.detect, classes)
                    .map_err(|e| PipelineError::Stage {
                        stage: "detect",
                        frame: frame_index,
                        reason: e.to_string(),
                    })?;
            }
            Stage::Barcode => {
                result.barcode = barcode::decode_image(img, cfg.scan_rows).ok();
            }
            Stage::Qr => {
                result.qr = qr::decode_qr_image(img).ok().map(|d| d.segments);
            }
            Stage::Exit => {
                result.exit_sign = textloc::detect_exit_sign(img);
            }
            Stage::Ocr => {
                let cmd = cfg.ocr_cmd.as_ref().ok_or_else(|| {
                    PipelineError::Config("ocr stage enabled without an ocr command".into())
                })?;
                result.text_lines = ocr_lines(img, cmd).map_err(|e| PipelineError::Stage {
                    stage: "ocr",
                    frame: frame_index,
                    reason: e.to_string(),
                })?;
            }
        }
    }
    Ok(result)
}

/// Locate text lines and run the external OCR engine on each line region.
fn ocr_lines(img: &Image, cmd: &str) -> Result<Vec<String>, textloc::TextLocError> {
    let t = match raster::otsu_threshold(&raster::histogram(img)) {
        Ok(t) => t,
        Err(_) => return Ok(Vec::new()),
    };
    let bitmap = raster::binarize(img, t, InkPolarity::Dark);
    let comps = textloc::connected_components(&bitmap);
    let candidates = textloc::filter_char_candidates(&comps, img.width(), img.height());
    let lines = textloc::group_into_lines(&candidates);
    let mut out = Vec::new();
    for line in lines {
        let pad = 2f64;
        let x = (line.bbox.xmin - pad).max(0.0) as u32;
        let y = (line.bbox.ymin - pad).max(0.0) as u32;
        let x1 = ((line.bbox.xmax + pad) as u32).min(img.width());
        let y1 = ((line.bbox.ymax + pad) as u32).min(img.height());
        let region = img
            .crop(x, y, x1 - x, y1 - y)
            .expect("line bbox lies inside the image");
        out.extend(textloc::run_external_ocr(&region, cmd)?);
    }
    Ok(out)
}

/// Per-kind announcement totals, in a fixed serialization order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct AnnouncementCounts {
    pub object: usize,
    pub barcode: usize,
    pub qr: usize,
    pub exit: usize,
    pub text: usize,
}

impl AnnouncementCounts {
    fn bump(&mut self, kind: Kind) {
        match kind {
            Kind::Object => self.object += 1,
            Kind::Barcode => self.barcode += 1,
            Kind::Qr => self.qr += 1,
            Kind::Exit => self.exit += 1,
            Kind::Text => self.text += 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PipelineSummary {
    pub frames: usize,
    pub announcements: AnnouncementCounts,
}

#[derive(Serialize)]
struct FrameEvent<'a> {
    event: &'static str,
    #[serde(flatten)]
    frame: &'a FrameResult,
}

#[derive(Serialize)]
struct AnnouncementEvent<'a> {
    event: &'static str,
    #[serde(flatten)]
    announcement: &'a Announcement,
}

#[derive(Serialize)]
struct SummaryEvent<'a> {
    event: &'static str,
    #[serde(flatten)]
    summary: &'a PipelineSummary,
}

/// PNM frames of the directory in lexicographic order.
pub fn discover_frames(dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let mut frames: Vec<PathBuf> = std::fs::read_dir(dir)?
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()),
                Some("pnm") | Some("pgm") | Some("ppm")
            )
        })
        .collect();
    frames.sort();
    Ok(frames)
}

fn tensor_for_frame(
    frame_path: &Path,
    frame_index: u64,
    cfg: &PipelineConfig,
) -> Result<Vec<TensorFile>, PipelineError> {
    let sidecar = frame_path.with_extension("snt");
    if sidecar.exists() {
        let bytes = std::fs::read(&sidecar)?;
        let tensor = detect::load_tensor(&bytes).map_err(|e| PipelineError::Stage {
            stage: "detect",
            frame: frame_index,
            reason: format!("{}: {e}", sidecar.display()),
        })?;
        return Ok(vec![tensor]);
    }
    if let Some(template) = &cfg.infer_cmd {
        return Ok(vec![run_inference_command(frame_path, template, frame_index)?]);
    }
    Ok(Vec::new())
}

/// Invoke an external inference command that reads `{input}` (frame PNM)
/// and writes a SANT tensor to `{output}`.
pub fn run_inference_command(
    frame_path: &Path,
    template: &str,
    frame_index: u64,
) -> Result<TensorFile, PipelineError> {
    if !template.contains("{input}") || !template.contains("{output}") {
        return Err(PipelineError::Config(
            "inference command must contain {input} and {output}".into(),
        ));
    }
    let out_file = tempfile::Builder::new()
        .prefix("sanip-infer-")
        .suffix(".snt")
        .tempfile()?;
    let out_path = out_file.path().to_string_lossy().into_owned();
    let in_path = frame_path.to_string_lossy();
    let tokens: Vec<String> = template
        .split_whitespace()
        .map(|tok| tok.replace("{input}", &in_path).replace("{output}", &out_path))
        .collect();
    let output = Command::new(&tokens[0]).args(&tokens[1..]).output()?;
    if !output.status.success() {
        return Err(PipelineError::Stage {
            stage: "detect",
            frame: frame_index,
            reason: format!(
                "inference command failed: {}",
                String::from_utf8_lossy(&output.stderr)
            ),
        });
    }
    let bytes = std::fs::read(out_file.path())?;
    detect::load_tensor(&bytes).map_err(|e| PipelineError::Stage {
        stage: "detect",
        frame: frame_index,
        reason: format!("inference output: {e}"),
    })
}

/// Process every frame of a directory in order, emitting one JSON line
/// per frame result and per announcement, then a summary line. The event
/// bytes are a pure function of frames + config.
pub fn run_pipeline<W: Write>(
    dir: &Path,
    cfg: &PipelineConfig,
    out: &mut W,
) -> Result<PipelineSummary, PipelineError> {
    cfg.validate()?;
    let frames = discover_frames(dir)?;
    let mut debouncer = Debouncer::new(cfg.debounce_frames);
    let mut speech = SpeechQueue::new();
    let mut counts = AnnouncementCounts::default();

    for (idx, path) in frames.iter().enumerate() {
        let frame_index = idx as u64;
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        let bytes = std::fs::read(path).map_err(|e| PipelineError::UnreadableFrame {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        let img = raster::load_pnm(&bytes).map_err(|e| PipelineError::UnreadableFrame {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        let tensors = if cfg.enabled(Stage::Detect) {
            tensor_for_frame(path, frame_index, cfg)?
        } else {
            Vec::new()
        };
        let frame = process_frame(&img, &tensors, frame_index, &name, cfg)?;
        writeln!(
            out,
            "{}",
            serde_json::to_string(&FrameEvent {
                event: "frame",
                frame: &frame,
            })
            .expect("frame event serializes")
        )?;
        let findings = frame_findings(&frame);
        for announcement in debouncer.debounce(frame_index, &findings) {
            counts.bump(announcement.kind);
            writeln!(
                out,
                "{}",
                serde_json::to_string(&AnnouncementEvent {
                    event: "announcement",
                    announcement: &announcement,
                })
                .expect("announcement event serializes")
            )?;
            speech.speak(&announcement, cfg.tts_cmd.as_deref());
        }
    }
    speech.drain();

    let summary = PipelineSummary {
        frames: frames.len(),
        announcements: counts,
    };
    writeln!(
        out,
        "{}",
        serde_json::to_string(&SummaryEvent {
            event: "summary",
            summary: &summary,
        })
        .expect("summary event serializes")
    )?;
    Ok(summary)
}
