//! Core library for an assistive shopping scanner: object-detection
//! post-processing, EAN-13/UPC-A and QR decoding from raw rasters, text
//! region / EXIT-sign localization, and a debounced speech-announcement
//! pipeline.
//!
//! The modules mirror the processing stages:
//!
//! - [`raster`] — PNM images, thresholding, scanlines.
//! - [`dataset`] — YOLO/VOC annotation formats, class lists, box geometry.
//! - [`detect`] — YOLO head decoding, confidence filtering, NMS.
//! - [`barcode`] — EAN-13/UPC-A scanline decoder and rendering oracle.
//! - [`qr`] — full QR decode stack (finder patterns through Reed–Solomon).
//! - [`textloc`] — connected-component text lines, EXIT template matching,
//!   external OCR adapter.
//! - [`assistant`] — per-frame orchestration, debouncing, speech sinks.

pub mod assistant;
pub mod barcode;
pub mod dataset;
pub mod detect;
pub mod qr;
pub mod raster;
pub mod textloc;
