//! Byte-stable text rendering of snapshots, index reports and sweeps: fixed
//! field order, six significant digits, '.' decimal separator, '\n' line
//! endings. Identical inputs always produce identical bytes.

use nalgebra::ComplexField;

use crate::cindex::IndexReport;
use crate::error::{Error, Result};
use crate::netmodel::{BusId, ReducedNetwork};
use crate::pfsolve::Snapshot;
use crate::scalar::{to_f64, Scalar};
use crate::sweep::{SensitivityReport, SweepReport};
use crate::wjac::FMatrix;

/// Render with six significant digits. Values outside a plain-decimal range
/// switch to scientific notation; non-finite values render as inf/-inf/nan.
pub fn fmt_sig(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0.00000".into();
    }
    let a = x.abs();
    if (1e-4..1e6).contains(&a) {
        let exp = a.log10().floor() as i32;
        let decimals = (5 - exp).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{x:.5e}")
    }
}

fn fmt<T: Scalar>(x: T) -> String {
    fmt_sig(to_f64(x))
}

/// Per-bus record of a solved operating point. Set-points are reported in
/// the case-file polarity (net injection, generation positive).
pub fn snapshot_text<T: Scalar>(net: &ReducedNetwork<T>, snap: &Snapshot<T>) -> String {
    let mut out = String::new();
    out.push_str(&format!("converged={}\n", snap.converged));
    out.push_str(&format!("iterations={}\n", snap.iterations));
    out.push_str(&format!("max_residual={}\n", fmt(snap.max_residual)));
    out.push_str(&format!("loading_factor={}\n", fmt(snap.loading_factor)));
    out.push_str("bus,v_mag,v_angle_deg,p_inj,q_inj\n");
    let rad_to_deg = 180.0 / std::f64::consts::PI;
    for (h, id) in net.pq_bus_ids().iter().enumerate() {
        let v = snap.v[h];
        let s_inj = -snap.s[h];
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            id,
            fmt(v.modulus()),
            fmt_sig(to_f64(v.argument()) * rad_to_deg),
            fmt(s_inj.re),
            fmt(s_inj.im),
        ));
    }
    if net.n_ci() > 0 {
        out.push_str("ci_bus,v_mag,v_angle_deg,id_inj,iq_inj\n");
        for (k, id) in net.bus_ids()[net.n_pq()..].iter().enumerate() {
            let v = snap.v_ci[k];
            let i_inj = -snap.i_ci[k];
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                id,
                fmt(v.modulus()),
                fmt_sig(to_f64(v.argument()) * rad_to_deg),
                fmt(i_inj.re),
                fmt(i_inj.im),
            ));
        }
    }
    out
}

/// Flat CSV of an index report: one row per constant-power bus.
pub fn index_csv<T: Scalar>(report: &IndexReport<T>) -> String {
    let mut out = String::from("bus,v_mag,denominator,c_index,kessel_margin\n");
    for (h, id) in report.bus.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            id,
            fmt(report.v_mag[h]),
            fmt(report.denom[h]),
            fmt(report.c[h]),
            fmt(report.kessel_margin[h]),
        ));
    }
    out
}

/// Summary lines of an index report.
pub fn index_summary_text<T: Scalar>(report: &IndexReport<T>) -> String {
    let mut out = String::new();
    out.push_str(&format!("c_min={}\n", fmt(report.c_min)));
    out.push_str(&format!(
        "c_argmin_bus={}\n",
        report
            .c_argmin_bus()
            .map(|id| id.to_string())
            .unwrap_or_else(|| "none".into())
    ));
    out.push_str(&format!(
        "condition_triggered={}\n",
        report.condition_triggered
    ));
    out.push_str(&format!("bolognani_lhs={}\n", fmt(report.bolognani.lhs)));
    out.push_str(&format!("bolognani_rhs={}\n", fmt(report.bolognani.rhs)));
    out.push_str(&format!("bolognani_ok={}\n", report.bolognani.satisfied));
    out
}

/// Per-step CSV of a sweep.
pub fn sweep_csv<T: Scalar>(report: &SweepReport<T>) -> String {
    let mut out = String::from("lambda,converged,c_min,c_argmin_bus,bolognani_ok,sigma_min\n");
    for row in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            fmt(row.lambda),
            row.converged,
            fmt(row.c_min),
            row.c_argmin_bus
                .map(|id| id.to_string())
                .unwrap_or_default(),
            row.bolognani_ok,
            fmt(row.sigma_min),
        ));
    }
    out
}

/// Summary record of a sweep.
pub fn sweep_summary_text<T: Scalar>(report: &SweepReport<T>) -> String {
    let s = &report.summary;
    let opt = |v: &Option<T>| v.map(fmt).unwrap_or_else(|| "none".into());
    format!(
        "lambda_critical={}\nlambda_c_unity={}\nlambda_bolognani={}\nmismatch_pct={}\n",
        fmt(s.lambda_critical),
        opt(&s.lambda_c_unity),
        opt(&s.lambda_bolognani),
        opt(&s.mismatch_pct),
    )
}

/// Dense CSV of the F diagnostic: header row of bus ids, then the matrix
/// row-major with the formula-faithful (absolute) diagonal.
pub fn f_matrix_csv<T: Scalar>(bus_ids: &[BusId], f: &FMatrix<T>) -> String {
    let n = f.n();
    assert_eq!(bus_ids.len(), n, "one header id per bus");
    let mut out = String::new();
    out.push_str(
        &bus_ids
            .iter()
            .map(|id| id.to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    out.push('\n');
    for h in 0..n {
        let row: Vec<String> = (0..n).map(|k| fmt(f.values[(h, k)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Per-bus CSV of a sensitivity experiment.
pub fn sensitivity_csv<T: Scalar>(report: &SensitivityReport<T>) -> String {
    let mut out = String::from("bus,c_before,c_after,delta\n");
    for (h, id) in report.bus.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            id,
            fmt(report.c_before[h]),
            fmt(report.c_after[h]),
            fmt(report.c_after[h] - report.c_before[h]),
        ));
    }
    out
}

/// Write a fully rendered report to disk. Rendering always happens before
/// this call, so a failed run never leaves a partial file behind.
pub fn write_report(path: &std::path::Path, content: &str) -> Result<()> {
    std::fs::write(path, content).map_err(|e| Error::Write {
        path: path.display().to_string(),
        source: e,
    })
}
