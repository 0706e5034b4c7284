//! Label and prediction file ingestion, and PR-curve CSV export.
//!
//! One `.txt` per image, image id = file stem, one record per nonempty
//! line. Ground truth lines are `class cx cy w h`; prediction lines add a
//! trailing confidence: `class cx cy w h conf`. All coordinates are
//! normalized floats.

use std::fs;
use std::path::Path;

use super::{BoundingBox, Detection, EvalError, GroundTruth, PrCurve};

fn split_fields<'a>(
    line: &'a str,
    path: &str,
    lineno: usize,
    expected: usize,
) -> Result<Vec<&'a str>, EvalError> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != expected {
        return Err(EvalError::FieldCount {
            path: path.to_string(),
            line: lineno,
            expected,
            got: fields.len(),
        });
    }
    Ok(fields)
}

fn parse_num<T: std::str::FromStr>(
    token: &str,
    path: &str,
    lineno: usize,
) -> Result<T, EvalError> {
    token.parse().map_err(|_| EvalError::BadNumber {
        path: path.to_string(),
        line: lineno,
        token: token.to_string(),
    })
}

fn parse_box(
    fields: &[&str],
    path: &str,
    lineno: usize,
) -> Result<BoundingBox, EvalError> {
    let cx: f64 = parse_num(fields[0], path, lineno)?;
    let cy: f64 = parse_num(fields[1], path, lineno)?;
    let w: f64 = parse_num(fields[2], path, lineno)?;
    let h: f64 = parse_num(fields[3], path, lineno)?;
    let check = |what: &'static str, value: f64, lo_open: bool| -> Result<(), EvalError> {
        let ok = if lo_open {
            value > 0.0 && value <= 1.0
        } else {
            (0.0..=1.0).contains(&value)
        };
        if ok {
            Ok(())
        } else {
            Err(EvalError::OutOfRange {
                path: path.to_string(),
                line: lineno,
                what,
                value,
                range: if lo_open { "(0, 1]" } else { "[0, 1]" },
            })
        }
    };
    check("cx", cx, false)?;
    check("cy", cy, false)?;
    check("width", w, true)?;
    check("height", h, true)?;
    BoundingBox::new(cx, cy, w, h)
}

/// Parse one ground-truth line: `class cx cy w h`.
pub fn parse_ground_truth_line(
    line: &str,
    image_id: &str,
    path: &str,
    lineno: usize,
) -> Result<GroundTruth, EvalError> {
    let fields = split_fields(line, path, lineno, 5)?;
    let class_id: usize = parse_num(fields[0], path, lineno)?;
    let bbox = parse_box(&fields[1..], path, lineno)?;
    Ok(GroundTruth {
        image_id: image_id.to_string(),
        class_id,
        bbox,
    })
}

/// Parse one prediction line: `class cx cy w h conf`.
pub fn parse_detection_line(
    line: &str,
    image_id: &str,
    path: &str,
    lineno: usize,
) -> Result<Detection, EvalError> {
    let fields = split_fields(line, path, lineno, 6)?;
    let class_id: usize = parse_num(fields[0], path, lineno)?;
    let bbox = parse_box(&fields[1..5], path, lineno)?;
    let confidence: f64 = parse_num(fields[5], path, lineno)?;
    if !(0.0..=1.0).contains(&confidence) {
        return Err(EvalError::OutOfRange {
            path: path.to_string(),
            line: lineno,
            what: "confidence",
            value: confidence,
            range: "[0, 1]",
        });
    }
    Ok(Detection {
        image_id: image_id.to_string(),
        class_id,
        bbox,
        confidence: confidence as f32,
    })
}

fn txt_files(dir: &Path) -> Result<Vec<std::path::PathBuf>, EvalError> {
    let mut files: Vec<_> = fs::read_dir(dir)?
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|ext| ext == "txt"))
        .collect();
    files.sort();
    Ok(files)
}

fn load_dir<T>(
    dir: impl AsRef<Path>,
    parse: impl Fn(&str, &str, &str, usize) -> Result<T, EvalError>,
) -> Result<Vec<T>, EvalError> {
    let mut out = Vec::new();
    for path in txt_files(dir.as_ref())? {
        let image_id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let display = path.display().to_string();
        let content = fs::read_to_string(&path)?;
        for (idx, line) in content.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            out.push(parse(line, &image_id, &display, idx + 1)?);
        }
    }
    Ok(out)
}

/// Load every `*.txt` ground-truth file in a directory (sorted by name).
pub fn load_ground_truth_dir(dir: impl AsRef<Path>) -> Result<Vec<GroundTruth>, EvalError> {
    load_dir(dir, parse_ground_truth_line)
}

/// Load every `*.txt` prediction file in a directory (sorted by name).
pub fn load_detections_dir(dir: impl AsRef<Path>) -> Result<Vec<Detection>, EvalError> {
    load_dir(dir, parse_detection_line)
}

/// CSV rendering of a curve: `recall,precision` header, one point per row.
pub fn pr_curve_csv(curve: &PrCurve) -> String {
    let mut out = String::from("recall,precision\n");
    for p in &curve.points {
        out.push_str(&format!("{},{}\n", p.recall, p.precision));
    }
    out
}

pub fn write_pr_csv(curve: &PrCurve, path: impl AsRef<Path>) -> Result<(), EvalError> {
    fs::write(path, pr_curve_csv(curve))?;
    Ok(())
}
