//! Line-oriented trace document.
//!
//! ```text
//! svaseg-trace 1
//! <key> <value...>           one header line per key, see `render`
//! records <count>
//! <kind> <outer> <inner> <lambda> <tv> <objective> <l0_objective> <prox_sweeps> <labels_changed>
//! ...
//! x <width> <height>
//! <width values>             one line per image row, working units
//! ...
//! end
//! ```
//!
//! `kind` is `inner` or `outer`. Reals are written in shortest round-trip
//! form, so every value reads back bit for bit. The `x` block lets a reader
//! recompute `lambda_final = N / (TV(x) + 1)` without the PNG's quantisation.

use std::fmt::Write as _;
use std::path::Path;

use svaseg_core::sva::Mode;
use svaseg_core::{Image, SegmentationResult, SvaConfig, TraceKind, TraceRecord};

use crate::error::{io_err, AppError, Result};

pub const MAGIC: &str = "svaseg-trace";
pub const VERSION: u32 = 1;
pub const RECORD_FIELDS: &str =
    "kind outer inner lambda tv objective l0_objective prox_sweeps labels_changed";

fn join(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| format!("{v:?}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Renders the trace document. `x_range` is the intensity range mapped onto
/// the saved x PNG.
pub fn render(result: &SegmentationResult, cfg: &SvaConfig, x_range: (f64, f64)) -> String {
    let mut s = String::new();
    let x = &result.x;
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(s, "{k} {v}");
    };
    kv(MAGIC, VERSION.to_string());
    match result.mode {
        Mode::Unsupervised => kv("mode", "segment".into()),
        Mode::Tsa { lambda } => {
            kv("mode", "tsa".into());
            kv("tsa_lambda", format!("{lambda:?}"));
        }
    }
    kv("width", x.width().to_string());
    kv("height", x.height().to_string());
    kv("pixels", x.len().to_string());
    kv("classes", result.means.len().to_string());
    kv("max_outer", cfg.max_outer.to_string());
    kv("max_inner", cfg.max_inner.to_string());
    kv("tol", format!("{:?}", cfg.tol));
    kv("prox_tol", format!("{:?}", cfg.prox_tol));
    kv("prox_max_sweeps", cfg.prox_max_sweeps.to_string());
    kv("kmeans_max_iters", cfg.kmeans_max_iters.to_string());
    kv("intensity_scale", format!("{:?}", result.intensity_scale));
    kv("converged", result.converged.to_string());
    kv("outer_iterations", result.outer_iterations.to_string());
    kv("effective_classes", result.effective_classes.to_string());
    kv("duplicate_means", result.duplicate_means.to_string());
    kv("lambda_final", format!("{:?}", result.lambda_final));
    kv("tv_final", format!("{:?}", result.tv_final));
    kv("means", join(result.means.values()));
    kv("means_input", join(&result.means_in_input_units()));
    kv("x_range", join(&[x_range.0, x_range.1]));
    kv("fields", RECORD_FIELDS.into());
    kv("records", result.trace.len().to_string());
    for r in &result.trace {
        let kind = match r.kind {
            TraceKind::Inner => "inner",
            TraceKind::Outer => "outer",
        };
        let _ = writeln!(
            s,
            "{kind} {} {} {:?} {:?} {:?} {:?} {} {}",
            r.outer,
            r.inner,
            r.lambda,
            r.tv,
            r.objective,
            r.l0_objective,
            r.prox_sweeps,
            r.labels_changed
        );
    }
    let _ = writeln!(s, "x {} {}", x.width(), x.height());
    for row in x.data().chunks(x.width()) {
        let _ = writeln!(s, "{}", join(row));
    }
    s.push_str("end\n");
    s
}

pub fn write_trace(
    path: &Path,
    result: &SegmentationResult,
    cfg: &SvaConfig,
    x_range: (f64, f64),
) -> Result<()> {
    std::fs::write(path, render(result, cfg, x_range)).map_err(io_err(path))
}

/// A parsed trace document.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceDocument {
    pub header: Vec<(String, String)>,
    pub records: Vec<TraceRecord>,
    pub x: Image,
}

impl TraceDocument {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.header
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        self.get(key)?.parse().ok()
    }

    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let mut lines = text.lines().enumerate();
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| format!("unexpected end of document, expected {what}"))
        };
        let (_, first) = next("header")?;
        if first != format!("{MAGIC} {VERSION}") {
            return Err(format!("not a version {VERSION} trace: {first:?}"));
        }
        let mut header = Vec::new();
        let count = loop {
            let (i, line) = next("header line")?;
            let (k, v) = line
                .split_once(' ')
                .ok_or_else(|| format!("line {}: malformed", i + 1))?;
            if k == "records" {
                break v
                    .parse::<usize>()
                    .map_err(|e| format!("line {}: {e}", i + 1))?;
            }
            header.push((k.to_string(), v.to_string()));
        };
        let bad = |i: usize, e: &dyn std::fmt::Display| format!("line {}: {e}", i + 1);
        let mut records = Vec::with_capacity(count);
        for _ in 0..count {
            let (i, line) = next("record")?;
            let f: Vec<&str> = line.split(' ').collect();
            if f.len() != 9 {
                return Err(bad(i, &"expected 9 fields"));
            }
            let kind = match f[0] {
                "inner" => TraceKind::Inner,
                "outer" => TraceKind::Outer,
                other => return Err(bad(i, &format!("unknown kind {other:?}"))),
            };
            let int = |s: &str| s.parse::<usize>().map_err(|e| bad(i, &e));
            let real = |s: &str| s.parse::<f64>().map_err(|e| bad(i, &e));
            records.push(TraceRecord {
                kind,
                outer: int(f[1])?,
                inner: int(f[2])?,
                lambda: real(f[3])?,
                tv: real(f[4])?,
                objective: real(f[5])?,
                l0_objective: real(f[6])?,
                prox_sweeps: int(f[7])?,
                labels_changed: int(f[8])?,
            });
        }
        let (i, line) = next("x block")?;
        let dims: Vec<usize> = line
            .strip_prefix("x ")
            .ok_or_else(|| bad(i, &"expected x block"))?
            .split(' ')
            .map(|s| s.parse().map_err(|e| bad(i, &e)))
            .collect::<std::result::Result<_, _>>()?;
        let (w, h) = match dims[..] {
            [w, h] => (w, h),
            _ => return Err(bad(i, &"expected width and height")),
        };
        let mut data = Vec::with_capacity(w * h);
        for _ in 0..h {
            let (i, line) = next("x row")?;
            for v in line.split(' ') {
                data.push(v.parse::<f64>().map_err(|e| bad(i, &e))?);
            }
        }
        if next("end")?.1 != "end" {
            return Err("missing end marker".into());
        }
        let x = Image::new(w, h, data).map_err(|e| e.to_string())?;
        Ok(Self { header, records, x })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::parse(&text).map_err(|reason| AppError::Format {
            path: path.to_path_buf(),
            reason,
        })
    }
}
