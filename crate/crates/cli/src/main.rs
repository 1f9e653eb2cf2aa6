//! `sanip` — command-line front end for the assistive scanner library.
//!
//! Events and results go to stdout; diagnostics go to stderr. Exit code 0
//! means the requested thing was found/valid, 1 means not.

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use sanip_core::assistant::{self, PipelineConfig, Stage};
use sanip_core::barcode;
use sanip_core::dataset::{self, DatasetListing};
use sanip_core::detect::{self, DetectConfig};
use sanip_core::qr;
use sanip_core::raster::{self, Image};
use sanip_core::textloc;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "sanip", version, about = "Shopping-assistant decode stack")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Decode YOLO head tensors into labeled detections.
    Detect(DetectArgs),
    /// Decode an EAN-13/UPC-A barcode from an image.
    Barcode(BarcodeArgs),
    /// Decode a QR symbol from an image.
    Qr(QrArgs),
    /// Look for the EXIT sign template in an image.
    ExitSign(ExitArgs),
    /// Dataset tooling.
    #[command(subcommand)]
    Dataset(DatasetCmd),
    /// Run all enabled stages over an ordered frame directory.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct DetectArgs {
    /// SANT tensor file; repeat for multiple scales.
    #[arg(long = "tensor", required = true)]
    tensors: Vec<PathBuf>,
    #[arg(long)]
    classes: PathBuf,
    #[arg(long, default_value_t = 0.25)]
    conf: f64,
    #[arg(long = "nms-iou", default_value_t = 0.45)]
    nms_iou: f64,
}

#[derive(Args)]
struct BarcodeArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long, default_value_t = barcode::DEFAULT_SCAN_ROWS)]
    rows: usize,
}

#[derive(Args)]
struct QrArgs {
    #[arg(long)]
    image: PathBuf,
}

#[derive(Args)]
struct ExitArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long, default_value_t = textloc::EXIT_NCC_THRESHOLD)]
    threshold: f64,
}

#[derive(Subcommand)]
enum DatasetCmd {
    /// Cross-check images, annotations and class list in a directory.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    dir: PathBuf,
    #[arg(long)]
    classes: PathBuf,
    /// Emit the report as JSON instead of text lines.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct PipelineArgs {
    /// Directory of PNM frames (optionally with .snt sidecars).
    #[arg(long)]
    frames: PathBuf,
    #[arg(long)]
    classes: Option<PathBuf>,
    #[arg(long, default_value_t = 0.25)]
    conf: f64,
    #[arg(long = "nms-iou", default_value_t = 0.45)]
    nms_iou: f64,
    #[arg(long, default_value_t = 30)]
    debounce: u64,
    /// Comma-separated stage list: detect,barcode,qr,exit,ocr.
    #[arg(long, default_value = "barcode,qr,exit", value_delimiter = ',')]
    stages: Vec<Stage>,
    #[arg(long = "tts-cmd")]
    tts_cmd: Option<String>,
    #[arg(long = "ocr-cmd")]
    ocr_cmd: Option<String>,
    #[arg(long = "infer-cmd")]
    infer_cmd: Option<String>,
    #[arg(long, default_value_t = barcode::DEFAULT_SCAN_ROWS)]
    rows: usize,
}

fn load_image(path: &Path) -> Result<Image> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    raster::load_pnm(&bytes).with_context(|| format!("parsing {}", path.display()))
}

fn load_classes(path: &Path) -> Result<dataset::ClassList> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    dataset::load_class_list(&text).with_context(|| format!("parsing {}", path.display()))
}

fn cmd_detect(args: &DetectArgs) -> Result<ExitCode> {
    let classes = load_classes(&args.classes)?;
    let mut tensors = Vec::new();
    for path in &args.tensors {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        tensors.push(
            detect::load_tensor(&bytes).with_context(|| format!("parsing {}", path.display()))?,
        );
    }
    let cfg = DetectConfig {
        conf_threshold: args.conf,
        nms_iou: args.nms_iou,
        ..DetectConfig::default()
    };
    let detections = detect::detect_tensors(&tensors, &cfg, &classes)?;
    for d in &detections {
        println!("{}", serde_json::to_string(d)?);
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_barcode(args: &BarcodeArgs) -> Result<ExitCode> {
    let img = load_image(&args.image)?;
    match barcode::decode_image(&img, args.rows) {
        Ok(payload) => {
            println!("{}", payload.digits);
            Ok(ExitCode::SUCCESS)
        }
        Err(e) => {
            eprintln!("{e}");
            println!("NOT_FOUND");
            Ok(ExitCode::FAILURE)
        }
    }
}

fn cmd_qr(args: &QrArgs) -> Result<ExitCode> {
    let img = load_image(&args.image)?;
    match qr::decode_qr_image(&img) {
        Ok(decoded) => {
            println!("{}", decoded.segments.text);
            Ok(ExitCode::SUCCESS)
        }
        Err(e) => {
            eprintln!("stage {}: {e}", e.stage());
            Ok(ExitCode::FAILURE)
        }
    }
}

fn cmd_exit_sign(args: &ExitArgs) -> Result<ExitCode> {
    let img = load_image(&args.image)?;
    match textloc::detect_exit_sign_with(&img, args.threshold, &textloc::EXIT_SCALES) {
        Some(m) => {
            println!("{}", serde_json::to_string(&m)?);
            Ok(ExitCode::SUCCESS)
        }
        None => {
            println!("NO_MATCH");
            Ok(ExitCode::FAILURE)
        }
    }
}

fn cmd_dataset_validate(args: &ValidateArgs) -> Result<ExitCode> {
    let classes = load_classes(&args.classes)?;
    let mut listing = DatasetListing::default();
    for entry in
        std::fs::read_dir(&args.dir).with_context(|| format!("listing {}", args.dir.display()))?
    {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        match path.extension().and_then(|e| e.to_str()) {
            Some("txt") if name != "classes.txt" => {
                let text = std::fs::read_to_string(&path)?;
                listing.annotations.push((name.to_owned(), text));
            }
            Some("pnm") | Some("pgm") | Some("ppm") | Some("jpg") | Some("jpeg") | Some("png") => {
                listing.images.push(name.to_owned())
            }
            _ => {}
        }
    }
    listing.images.sort();
    listing.annotations.sort();
    let report = dataset::validate_dataset(&listing, &classes);
    let lines = if args.json {
        report.to_json_lines()
    } else {
        report.to_lines()
    };
    for line in lines {
        println!("{line}");
    }
    Ok(if report.ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn cmd_pipeline(args: &PipelineArgs) -> Result<ExitCode> {
    let classes = match &args.classes {
        Some(path) => Some(load_classes(path)?),
        None => None,
    };
    let cfg = PipelineConfig {
        detect: DetectConfig {
            conf_threshold: args.conf,
            nms_iou: args.nms_iou,
            ..DetectConfig::default()
        },
        stages: args.stages.clone(),
        debounce_frames: args.debounce,
        classes,
        scan_rows: args.rows,
        ocr_cmd: args.ocr_cmd.clone(),
        tts_cmd: args.tts_cmd.clone(),
        infer_cmd: args.infer_cmd.clone(),
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    assistant::run_pipeline(&args.frames, &cfg, &mut out)?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Cmd::Detect(args) => cmd_detect(args),
        Cmd::Barcode(args) => cmd_barcode(args),
        Cmd::Qr(args) => cmd_qr(args),
        Cmd::ExitSign(args) => cmd_exit_sign(args),
        Cmd::Dataset(DatasetCmd::Validate(args)) => cmd_dataset_validate(args),
        Cmd::Pipeline(args) => cmd_pipeline(args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
