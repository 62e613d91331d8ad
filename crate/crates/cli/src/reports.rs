//! CSV emission for every experiment, plus the small reader the `plot`
//! command uses. Schemas are stable; header strings are pinned by tests.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use glimpse_core::interventions::{AdditionReport, OodReport, ReplacementReport, WithheldReport};
use glimpse_core::model::CurvePoint;
use glimpse_core::oracle::BaselineCurve;
use glimpse_core::probes::{BindingLayerReport, TimestepAccuracy, TargetSpec};
use glimpse_core::stats::Proportion;

use crate::AppError;

pub const CURVE_HEADER: &str = "timestep,accuracy,ci_low,ci_high";
pub const ORACLE_HEADER: &str = "timestep,oracle_acc,cache_acc";
pub const PROBE_HEADER: &str =
    "layer,target,offset,congruent,timestep,accuracy,baseline,ci_low,ci_high";
pub const REPLACE_HEADER: &str =
    "timestep,changed_acc,unchanged_acc,err_original,err_other,ci_low,ci_high";
pub const ADD_HEADER: &str = "timestep,new_acc,old_acc,ci_low,ci_high";
pub const OOD_HEADER: &str =
    "timestep,k_acc,k_ci_low,k_ci_high,control_acc,control_ci_low,control_ci_high";
pub const WITHHELD_HEADER: &str =
    "scenes,model_acc,model_ci_low,model_ci_high,oracle_acc,cache_acc,target_previsited";

fn write_file(path: &Path, text: &str) -> Result<(), AppError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)
            .map_err(|e| AppError::runtime(format!("cannot create {}: {e}", dir.display())))?;
    }
    fs::write(path, text)
        .map_err(|e| AppError::runtime(format!("cannot write {}: {e}", path.display())))
}

fn cell(p: Proportion) -> String {
    if p.trials == 0 {
        String::new()
    } else {
        format!("{}", p.rate())
    }
}

fn ci_cells(p: Proportion) -> (String, String) {
    if p.trials == 0 {
        (String::new(), String::new())
    } else {
        let (lo, hi) = p.ci95();
        (format!("{lo}"), format!("{hi}"))
    }
}

pub fn write_curve_csv(path: &Path, curve: &[CurvePoint]) -> Result<(), AppError> {
    let mut text = format!("{CURVE_HEADER}\n");
    for p in curve {
        let _ = writeln!(
            text,
            "{},{},{},{}",
            p.timestep, p.accuracy, p.ci_low, p.ci_high
        );
    }
    write_file(path, &text)
}

pub fn write_oracle_csv(path: &Path, curve: &BaselineCurve) -> Result<(), AppError> {
    let mut text = format!("{ORACLE_HEADER}\n");
    for (t, (o, c)) in curve
        .oracle_acc
        .iter()
        .zip(curve.cache_acc.iter())
        .enumerate()
    {
        let _ = writeln!(text, "{},{},{}", t + 1, o, c);
    }
    write_file(path, &text)
}

fn probe_row(
    text: &mut String,
    layer: &str,
    spec: &TargetSpec,
    row: &TimestepAccuracy,
    baseline: Option<f64>,
) {
    let congruent = match spec.congruent() {
        Some(true) => "true",
        Some(false) => "false",
        None => "",
    };
    let baseline_cell = baseline.map(|b| b.to_string()).unwrap_or_default();
    let _ = writeln!(
        text,
        "{},{},{},{},{},{},{},{},{}",
        layer,
        spec.kind_name(),
        spec.offset_name(),
        congruent,
        row.timestep,
        row.mean,
        baseline_cell,
        row.ci_low,
        row.ci_high
    );
}

/// Full per-timestep probe table. `extras` carries decodings outside the
/// binding analysis (the t+2 chance controls).
pub fn write_probe_csv(
    path: &Path,
    reports: &[BindingLayerReport],
    extras: &[(String, TargetSpec, Vec<TimestepAccuracy>)],
) -> Result<(), AppError> {
    let mut text = format!("{PROBE_HEADER}\n");
    for r in reports {
        let layer = r.layer.name();
        for (spec, rows) in [
            (TargetSpec::Label(glimpse_core::probes::Offset::T0), &r.label_t),
            (TargetSpec::Label(glimpse_core::probes::Offset::T1), &r.label_t1),
            (TargetSpec::Position(glimpse_core::probes::Offset::T0), &r.pos_t),
            (TargetSpec::Position(glimpse_core::probes::Offset::T1), &r.pos_t1),
        ] {
            for row in rows {
                probe_row(&mut text, &layer, &spec, row, None);
            }
        }
        for tuple in &r.tuples {
            for row in &tuple.rows {
                let ts = TimestepAccuracy {
                    timestep: row.timestep,
                    fold_accuracies: Vec::new(),
                    mean: row.accuracy,
                    ci_low: row.ci_low,
                    ci_high: row.ci_high,
                };
                probe_row(&mut text, &layer, &tuple.spec, &ts, Some(row.baseline));
            }
        }
    }
    for (layer, spec, rows) in extras {
        for row in rows {
            probe_row(&mut text, layer, spec, row, None);
        }
    }
    write_file(path, &text)
}

/// Window-aggregated probe summary (same columns, no timestep).
pub fn write_probe_summary_csv(
    path: &Path,
    reports: &[BindingLayerReport],
    extras: &[(String, TargetSpec, Vec<TimestepAccuracy>)],
) -> Result<(), AppError> {
    use glimpse_core::probes::summarize_window;
    let mut text =
        String::from("layer,target,offset,congruent,accuracy,baseline,excess,ci_low,ci_high\n");
    let mut push = |layer: &str,
                    spec: &TargetSpec,
                    s: glimpse_core::probes::WindowSummary,
                    baseline: Option<f64>,
                    excess: Option<f64>| {
        let congruent = match spec.congruent() {
            Some(true) => "true",
            Some(false) => "false",
            None => "",
        };
        let _ = writeln!(
            text,
            "{},{},{},{},{},{},{},{},{}",
            layer,
            spec.kind_name(),
            spec.offset_name(),
            congruent,
            s.mean,
            baseline.map(|b| b.to_string()).unwrap_or_default(),
            excess.map(|e| e.to_string()).unwrap_or_default(),
            s.ci_low,
            s.ci_high
        );
    };
    for r in reports {
        let layer = r.layer.name();
        use glimpse_core::probes::Offset::{T0, T1};
        push(&layer, &TargetSpec::Label(T0), summarize_window(&r.label_t), None, None);
        push(&layer, &TargetSpec::Label(T1), summarize_window(&r.label_t1), None, None);
        push(&layer, &TargetSpec::Position(T0), summarize_window(&r.pos_t), None, None);
        push(&layer, &TargetSpec::Position(T1), summarize_window(&r.pos_t1), None, None);
        for tuple in &r.tuples {
            push(
                &layer,
                &tuple.spec,
                tuple.accuracy,
                Some(tuple.baseline_mean),
                Some(tuple.excess.mean),
            );
        }
    }
    for (layer, spec, rows) in extras {
        push(layer, spec, summarize_window(rows), None, None);
    }
    write_file(path, &text)
}

pub fn write_replacement_csv(path: &Path, report: &ReplacementReport) -> Result<(), AppError> {
    let mut text = format!("{REPLACE_HEADER}\n");
    for r in &report.rows {
        let (lo, hi) = ci_cells(r.changed);
        let _ = writeln!(
            text,
            "{},{},{},{},{},{},{}",
            r.timestep,
            cell(r.changed),
            cell(r.unchanged),
            cell(r.err_original),
            cell(r.err_other),
            lo,
            hi
        );
    }
    write_file(path, &text)
}

pub fn write_addition_csv(path: &Path, report: &AdditionReport) -> Result<(), AppError> {
    let mut text = format!("{ADD_HEADER}\n");
    for r in &report.rows {
        let (lo, hi) = ci_cells(r.new_pos);
        let _ = writeln!(
            text,
            "{},{},{},{},{}",
            r.timestep,
            cell(r.new_pos),
            cell(r.old_pos),
            lo,
            hi
        );
    }
    write_file(path, &text)
}

pub fn write_ood_csv(path: &Path, report: &OodReport) -> Result<(), AppError> {
    let mut text = format!("{OOD_HEADER}\n");
    for r in &report.rows {
        let (klo, khi) = ci_cells(r.k_token);
        let (clo, chi) = ci_cells(r.control_token);
        let _ = writeln!(
            text,
            "{},{},{},{},{},{},{}",
            r.timestep,
            cell(r.k_token),
            klo,
            khi,
            cell(r.control_token),
            clo,
            chi
        );
    }
    write_file(path, &text)
}

pub fn write_withheld_csv(path: &Path, report: &WithheldReport) -> Result<(), AppError> {
    let (lo, hi) = report.model.ci95();
    let text = format!(
        "{WITHHELD_HEADER}\n{},{},{},{},{},{},{}\n",
        report.scenes,
        report.model.rate(),
        lo,
        hi,
        report.oracle.rate(),
        report.cache.rate(),
        report.target_previsited
    );
    write_file(path, &text)
}

/// Minimal CSV reader for `plot`: a header row plus numeric cells (empty
/// cells become NaN).
pub fn read_numeric_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), AppError> {
    let text = fs::read_to_string(path)
        .map_err(|e| AppError::usage(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| AppError::usage(format!("{} is empty", path.display())))?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<f64> = line
            .split(',')
            .map(|c| c.trim().parse::<f64>().unwrap_or(f64::NAN))
            .collect();
        if cells.len() != header.len() {
            return Err(AppError::usage(format!(
                "{} line {}: {} cells, expected {}",
                path.display(),
                lineno + 2,
                cells.len(),
                header.len()
            )));
        }
        rows.push(cells);
    }
    Ok((header, rows))
}
