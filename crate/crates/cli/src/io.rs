//! Image and label-map files.
//!
//! Inputs are any grayscale or colour PNG (8 or 16 bit) or PGM (P2/P5).
//! Colour is reduced to luma with Rec. 709 weights (`0.2126 R + 0.7152 G +
//! 0.0722 B`) and alpha is dropped. Intensities are then min-max normalised
//! to `[0, 1]`.
//!
//! Label maps are written as 8-bit indexed PNGs: pixel value `k − 1`,
//! palette entry `i` the gray level `round(i · 255 / (K − 1))`. The palette
//! length records K.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use image::ImageReader;
use svaseg_core::{Image, LabelField, SegmentationResult, SvaConfig};

use crate::error::{io_err, AppError, Result};
use crate::trace::write_trace;

pub const LABELS_FILE: &str = "labels.png";
pub const X_FILE: &str = "x.png";
pub const TRACE_FILE: &str = "trace.txt";

/// Largest K a label PNG can hold.
pub const MAX_LABEL_CLASSES: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedImage {
    /// Normalised intensities.
    pub image: Image,
    /// Every pixel had the same value; `image` is all zeros.
    pub constant: bool,
    /// Raw luma range before normalisation (16-bit scale).
    pub raw_min: f64,
    pub raw_max: f64,
}

pub fn load_image(path: &Path) -> Result<LoadedImage> {
    let img_err = |source| AppError::Image {
        path: path.to_path_buf(),
        source,
    };
    let luma = ImageReader::open(path)
        .map_err(io_err(path))?
        .with_guessed_format()
        .map_err(io_err(path))?
        .decode()
        .map_err(img_err)?
        .into_luma16();
    let (w, h) = (luma.width() as usize, luma.height() as usize);
    let raw: Vec<f64> = luma.into_raw().into_iter().map(f64::from).collect();
    if raw.is_empty() {
        return Err(AppError::Format {
            path: path.to_path_buf(),
            reason: "image has no pixels".into(),
        });
    }
    let (lo, hi) = raw
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    let constant = lo == hi;
    let data = if constant {
        vec![0.0; raw.len()]
    } else {
        raw.iter().map(|v| (v - lo) / (hi - lo)).collect()
    };
    Ok(LoadedImage {
        image: Image::new(w, h, data)?,
        constant,
        raw_min: lo,
        raw_max: hi,
    })
}

/// Gray level of palette entry `i` for `k` classes.
pub fn palette_level(i: usize, k: usize) -> u8 {
    ((i * 255) as f64 / (k - 1) as f64).round() as u8
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

fn encode_err(path: &Path) -> impl FnOnce(png::EncodingError) -> AppError + '_ {
    move |source| AppError::PngEncode {
        path: path.to_path_buf(),
        source,
    }
}

pub fn save_labels(path: &Path, z: &LabelField) -> Result<()> {
    let k = z.num_classes();
    if k > MAX_LABEL_CLASSES {
        return Err(AppError::Format {
            path: path.to_path_buf(),
            reason: format!("K = {k} does not fit an 8-bit palette"),
        });
    }
    let palette: Vec<u8> = (0..k).flat_map(|i| [palette_level(i, k); 3]).collect();
    let mut enc = png::Encoder::new(create(path)?, z.width() as u32, z.height() as u32);
    enc.set_color(png::ColorType::Indexed);
    enc.set_depth(png::BitDepth::Eight);
    enc.set_palette(palette);
    let data: Vec<u8> = z.labels().iter().map(|&l| (l - 1) as u8).collect();
    let mut writer = enc.write_header().map_err(encode_err(path))?;
    writer.write_image_data(&data).map_err(encode_err(path))?;
    writer.finish().map_err(encode_err(path))
}

/// Reads a label map written by [`save_labels`].
pub fn load_labels(path: &Path) -> Result<LabelField> {
    let format = |reason: &str| AppError::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    };
    let decode_err = |source| AppError::PngDecode {
        path: path.to_path_buf(),
        source,
    };
    let file = File::open(path).map_err(io_err(path))?;
    let mut reader = png::Decoder::new(BufReader::new(file))
        .read_info()
        .map_err(decode_err)?;
    let info = reader.info();
    if info.color_type != png::ColorType::Indexed || info.bit_depth != png::BitDepth::Eight {
        return Err(format("label map must be an 8-bit indexed PNG"));
    }
    let k = info.palette.as_ref().map_or(0, |p| p.len() / 3);
    let (w, h) = (info.width as usize, info.height as usize);
    let mut buf = vec![
        0;
        reader
            .output_buffer_size()
            .ok_or_else(|| format("image too large"))?
    ];
    let frame = reader.next_frame(&mut buf).map_err(decode_err)?;
    let mut labels = Vec::with_capacity(w * h);
    for row in buf[..frame.buffer_size()].chunks(frame.line_size) {
        labels.extend(row[..w].iter().map(|&v| v as u32 + 1));
    }
    LabelField::new(w, h, labels, k).map_err(|e| format(&e.to_string()))
}

/// Writes `x` as a 16-bit grayscale PNG, min-max scaled to the full range
/// (a constant image becomes all zeros). Returns the range that was mapped
/// to `[0, 65535]`.
pub fn save_gray16(path: &Path, x: &Image) -> Result<(f64, f64)> {
    let (lo, hi) = (x.min(), x.max());
    let span = hi - lo;
    let data: Vec<u8> = x
        .data()
        .iter()
        .flat_map(|&v| {
            let q = if span > 0.0 {
                ((v - lo) / span * 65535.0).round() as u16
            } else {
                0
            };
            q.to_be_bytes()
        })
        .collect();
    let mut enc = png::Encoder::new(create(path)?, x.width() as u32, x.height() as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Sixteen);
    let mut writer = enc.write_header().map_err(encode_err(path))?;
    writer.write_image_data(&data).map_err(encode_err(path))?;
    writer.finish().map_err(encode_err(path))?;
    Ok((lo, hi))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputPaths {
    pub labels: PathBuf,
    pub x: PathBuf,
    pub trace: PathBuf,
}

/// Writes the label map, the denoised field and the trace document into
/// `dir`, creating it if needed.
pub fn save_result(
    result: &SegmentationResult,
    cfg: &SvaConfig,
    dir: &Path,
) -> Result<OutputPaths> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let paths = OutputPaths {
        labels: dir.join(LABELS_FILE),
        x: dir.join(X_FILE),
        trace: dir.join(TRACE_FILE),
    };
    save_labels(&paths.labels, &result.labels)?;
    let range = save_gray16(&paths.x, &result.x)?;
    write_trace(&paths.trace, result, cfg, range)?;
    Ok(paths)
}
