use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::align::AlignMode;
use super::hausdorff::{hausdorff, HausdorffMethod};
use super::joints::{auc, mpjpe, pa_mpjpe, pck, per_joint_errors_mm, AUC_SAMPLES, PCK_THRESHOLD_MM};
use super::tape::{relative_errors, tape_measurements, Measurements};
use crate::body_model::{keypoints3d, skin, BodyParams, BodyTemplate};
use crate::error::{Error, Result};

/// Aligned joint errors below this (a nanometre) count as exact for PCK/AUC.
pub const ERROR_FLOOR_MM: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalOptions {
    pub align: AlignMode,
    pub pck_threshold_mm: f64,
    pub auc_max_mm: f64,
    pub auc_samples: usize,
    /// Compute the mesh Hausdorff distance (predicted shape in the
    /// ground-truth pose against the ground-truth mesh).
    pub hausdorff: bool,
    /// Report the squared-norm Hausdorff variant instead.
    pub hausdorff_squared: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            align: AlignMode::Similarity,
            pck_threshold_mm: PCK_THRESHOLD_MM,
            auc_max_mm: PCK_THRESHOLD_MM,
            auc_samples: AUC_SAMPLES,
            hausdorff: true,
            hausdorff_squared: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mpjpe_mm: f64,
    pub pa_mpjpe_mm: f64,
    pub pck_at_150mm: f64,
    pub auc_0_150: f64,
    /// Millimetres (square millimetres for the squared variant).
    pub hausdorff_mm: Option<f64>,
    /// Predicted measurements, metres.
    pub measurements: Measurements,
    /// Percent error per measurement.
    pub measurement_rel_errors: Measurements,
    pub measurement_mean_rel_error: f64,
}

/// Scores predicted body parameters against ground truth on the template's
/// evaluation keypoints. PCK and AUC use the aligned per-joint errors.
pub fn evaluate(
    template: &BodyTemplate,
    pred: &BodyParams,
    gt: &BodyParams,
    opts: &EvalOptions,
) -> Result<MetricsReport> {
    let p3 = keypoints3d(template, pred)?;
    let g3 = keypoints3d(template, gt)?;
    let raw = mpjpe(&p3, &g3)?;
    let (_, aligned) = super::align::procrustes_align(&p3, &g3, opts.align)?;
    let pa = pa_mpjpe(&p3, &g3, opts.align)?;
    // Alignment leaves round-off of order 1e-13 mm on exact predictions.
    let errors: Vec<f64> = per_joint_errors_mm(&aligned, &g3)?
        .into_iter()
        .map(|e| if e < ERROR_FLOOR_MM { 0.0 } else { e })
        .collect();

    let hd = if opts.hausdorff {
        let posed_pred = skin(
            template,
            &BodyParams {
                pose: gt.pose.clone(),
                shape: pred.shape.clone(),
            },
        )?;
        let posed_gt = skin(template, gt)?;
        let d = hausdorff(
            &posed_pred.vertices,
            &posed_gt.vertices,
            HausdorffMethod::Grid,
            opts.hausdorff_squared,
        )?;
        Some(if opts.hausdorff_squared { d * 1e6 } else { d * 1e3 })
    } else {
        None
    };

    let rest = |shape: &[f64]| {
        skin(
            template,
            &BodyParams {
                pose: vec![[0.0; 3]; template.joint_count() - 1],
                shape: shape.to_vec(),
            },
        )
    };
    let m_pred = tape_measurements(template, &rest(&pred.shape)?)?;
    let m_gt = tape_measurements(template, &rest(&gt.shape)?)?;
    let rel = relative_errors(&m_pred, &m_gt)?;
    Ok(MetricsReport {
        mpjpe_mm: raw,
        pa_mpjpe_mm: pa,
        pck_at_150mm: pck(&errors, opts.pck_threshold_mm)?,
        auc_0_150: auc(&errors, opts.auc_max_mm, opts.auc_samples)?,
        hausdorff_mm: hd,
        measurements: m_pred,
        measurement_rel_errors: rel.percent,
        measurement_mean_rel_error: rel.mean,
    })
}

/// Field-wise mean of several reports; Hausdorff is averaged only when every
/// report carries it.
pub fn aggregate(reports: &[MetricsReport]) -> Result<MetricsReport> {
    if reports.is_empty() {
        return Err(Error::Empty("metrics reports"));
    }
    let n = reports.len() as f64;
    let mean = |f: &dyn Fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    let mean_m = |f: &dyn Fn(&MetricsReport) -> Measurements| {
        let mut acc = [0.0; 6];
        for r in reports {
            for (a, x) in acc.iter_mut().zip(f(r).to_array()) {
                *a += x;
            }
        }
        Measurements::from_array(acc.map(|a| a / n))
    };
    let hd = if reports.iter().all(|r| r.hausdorff_mm.is_some()) {
        Some(mean(&|r| r.hausdorff_mm.unwrap_or(0.0)))
    } else {
        None
    };
    Ok(MetricsReport {
        mpjpe_mm: mean(&|r| r.mpjpe_mm),
        pa_mpjpe_mm: mean(&|r| r.pa_mpjpe_mm),
        pck_at_150mm: mean(&|r| r.pck_at_150mm),
        auc_0_150: mean(&|r| r.auc_0_150),
        hausdorff_mm: hd,
        measurements: mean_m(&|r| r.measurements),
        measurement_rel_errors: mean_m(&|r| r.measurement_rel_errors),
        measurement_mean_rel_error: mean(&|r| r.measurement_mean_rel_error),
    })
}

/// Aligned text table: one row per labelled report followed by the mean row.
pub fn format_table(rows: &[(String, MetricsReport)]) -> Result<String> {
    let header = [
        "instance", "MPJPE", "PA-MPJPE", "PCK", "AUC", "HD", "neck%", "arm%", "leg%", "chest%", "waist%", "hip%",
        "mean%",
    ];
    let fmt_row = |label: &str, r: &MetricsReport| -> Vec<String> {
        let mut cells = vec![
            label.to_string(),
            format!("{:.2}", r.mpjpe_mm),
            format!("{:.2}", r.pa_mpjpe_mm),
            format!("{:.1}", 100.0 * r.pck_at_150mm),
            format!("{:.1}", 100.0 * r.auc_0_150),
            r.hausdorff_mm.map_or("-".to_string(), |h| format!("{h:.2}")),
        ];
        cells.extend(r.measurement_rel_errors.to_array().iter().map(|x| format!("{x:.2}")));
        cells.push(format!("{:.2}", r.measurement_mean_rel_error));
        cells
    };
    let reports: Vec<MetricsReport> = rows.iter().map(|(_, r)| *r).collect();
    let mut table: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
    table.extend(rows.iter().map(|(l, r)| fmt_row(l, r)));
    table.push(fmt_row("mean", &aggregate(&reports)?));
    let widths: Vec<usize> = (0..header.len())
        .map(|c| table.iter().map(|row| row[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in table.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (cell, w))| {
                if c == 0 {
                    format!("{cell:<w$}")
                } else {
                    format!("{cell:>w$}")
                }
            })
            .collect();
        writeln!(out, "{}", line.join("  ").trim_end()).expect("string write");
        if i == 0 || i == table.len() - 2 {
            let total: usize = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
            writeln!(out, "{}", "-".repeat(total)).expect("string write");
        }
    }
    Ok(out)
}
