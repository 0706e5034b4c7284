//! `slimconv eval`: score predictions against ground truth and emit the
//! report, per-class PR curves (CSV + SVG), and the pooled curve.

use std::fs;
use std::path::PathBuf;

use clap::{Args as ClapArgs, ValueEnum};

use slimconv::evalkit::{
    evaluate, load_detections_dir, load_ground_truth_dir, pr_curve_csv, ApMethod, PrCurve,
};

use super::{data_err, CliError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ApMethodArg {
    /// Integrate the full precision envelope (the default).
    AllPoints,
    /// Classic 11-point interpolation, for comparison.
    ElevenPoint,
}

impl From<ApMethodArg> for ApMethod {
    fn from(v: ApMethodArg) -> ApMethod {
        match v {
            ApMethodArg::AllPoints => ApMethod::AllPoints,
            ApMethodArg::ElevenPoint => ApMethod::ElevenPoint,
        }
    }
}

#[derive(ClapArgs)]
pub struct Args {
    /// Directory of ground-truth .txt files (class cx cy w h)
    #[arg(long, value_name = "DIR")]
    pub labels: PathBuf,
    /// Directory of prediction .txt files (class cx cy w h conf)
    #[arg(long, value_name = "DIR")]
    pub preds: PathBuf,
    /// IoU threshold for a detection to count as correct
    #[arg(long, default_value_t = 0.5)]
    pub iou: f64,
    /// Write the evaluation report JSON here
    #[arg(long = "out", value_name = "FILE")]
    pub output: Option<PathBuf>,
    /// Emit per-class and pooled PR curves (CSV + SVG) into this directory
    #[arg(long = "pr-dir", value_name = "DIR")]
    pub pr_dir: Option<PathBuf>,
    /// AP interpolation rule
    #[arg(long = "ap-method", value_enum, default_value_t = ApMethodArg::AllPoints)]
    pub ap_method: ApMethodArg,
}

fn curve_stem(curve: &PrCurve) -> String {
    match curve.class_id {
        Some(id) => format!("class_{id}"),
        None => "pooled".to_string(),
    }
}

fn write_curve(dir: &std::path::Path, curve: &PrCurve) -> Result<(), CliError> {
    let stem = curve_stem(curve);
    let csv_path = dir.join(format!("{stem}.csv"));
    let csv = pr_curve_csv(curve);
    fs::write(&csv_path, &csv).map_err(|e| data_err("cannot write curve", &csv_path, e))?;
    let title = match curve.class_id {
        Some(id) => format!("PR curve, class {id}"),
        None => "PR curve, all classes pooled".to_string(),
    };
    let svg = crate::svg::pr_curve_svg(&title, &curve.points);
    let svg_path = dir.join(format!("{stem}.svg"));
    fs::write(&svg_path, svg).map_err(|e| data_err("cannot write curve", &svg_path, e))?;
    Ok(())
}

pub fn run(args: Args) -> Result<(), CliError> {
    if !(args.iou > 0.0 && args.iou <= 1.0) {
        return Err(CliError::Usage(format!(
            "--iou {} outside (0, 1]",
            args.iou
        )));
    }
    let gts = load_ground_truth_dir(&args.labels)
        .map_err(|e| data_err("cannot load labels from", &args.labels, e))?;
    let dets = load_detections_dir(&args.preds)
        .map_err(|e| data_err("cannot load predictions from", &args.preds, e))?;

    let report = evaluate(&dets, &gts, args.iou, args.ap_method.into());

    if let Some(path) = &args.output {
        let json = serde_json::to_string_pretty(&report)
            .expect("report serialization cannot fail");
        fs::write(path, json).map_err(|e| data_err("cannot write report", path, e))?;
    }
    if let Some(dir) = &args.pr_dir {
        fs::create_dir_all(dir).map_err(|e| data_err("cannot create", dir, e))?;
        for curve in &report.curves {
            write_curve(dir, curve)?;
        }
        write_curve(dir, &report.pooled_curve)?;
    }

    println!("mAP@{:.2} = {:.6}", args.iou, report.map50);
    for c in &report.per_class {
        match c.ap {
            Some(ap) => println!(
                "class {:>3}: AP {:.6}  (gt {}, tp {}, fp {})",
                c.class_id, ap, c.num_gt, c.tp, c.fp
            ),
            None => println!(
                "class {:>3}: no ground truth ({} false positives, excluded from mean)",
                c.class_id, c.fp
            ),
        }
    }
    Ok(())
}
