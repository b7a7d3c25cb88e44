use std::fmt::Write as _;
use std::io::Write;

use super::{ConvergenceReport, HRule};
use crate::error::Result;
use crate::integrators::Method;

pub const CSV_HEADER: [&str; 10] = [
    "method",
    "epsilon",
    "h",
    "n_steps",
    "err_x",
    "err_vpar",
    "err_vperp",
    "resonance_flag",
    "fp_iters",
    "fp_residual",
];

/// One row per cell. Failed cells leave the error columns empty.
pub fn write_csv<W: Write>(report: &ConvergenceReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for c in &report.cells {
        let err = |f: fn(&crate::reference::ErrorMetrics) -> f64| {
            c.errors.as_ref().map(|e| f(e).to_string()).unwrap_or_default()
        };
        w.write_record([
            c.method.label().to_string(),
            c.epsilon.to_string(),
            c.h.to_string(),
            c.n_steps.to_string(),
            err(|e| e.err_x),
            err(|e| e.err_vpar),
            err(|e| e.err_vperp),
            c.flagged().to_string(),
            c.fp_iters.to_string(),
            c.fp_residual.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<W: Write>(report: &ConvergenceReport, mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, report)?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Gnuplot script drawing the log-log error curves from the CSV written by
/// [`write_csv`].
///
/// Convergence reports plot each error column against `ε`, one curve per
/// method and step ratio; scans plot against `h/ε`.
pub fn gnuplot_script(report: &ConvergenceReport, csv_path: &str) -> String {
    let scan = report.metadata.kind == "resonance-scan";
    let mut methods: Vec<Method> = report.cells.iter().map(|c| c.method).collect();
    methods.dedup();
    let mut ratios: Vec<f64> = Vec::new();
    for c in &report.cells {
        if let HRule::Ratio(r) = c.h_rule {
            if !ratios.contains(&r) {
                ratios.push(r);
            }
        }
    }
    let path = csv_path.replace('\'', "''");

    let mut s = String::new();
    let _ = writeln!(s, "set datafile separator ','");
    let _ = writeln!(s, "set key autotitle columnhead");
    let _ = writeln!(s, "set logscale xy");
    let _ = writeln!(s, "set format y '10^{{%L}}'");
    let _ = writeln!(s, "set ylabel 'error'");
    let xlabel = if scan { "h / epsilon" } else { "epsilon" };
    let _ = writeln!(s, "set xlabel '{xlabel}'");
    let _ = writeln!(s, "set logscale x 2");
    let _ = writeln!(s, "set multiplot layout 1,3");
    for (col, name) in [(5, "err_x"), (6, "err_vpar"), (7, "err_vperp")] {
        let _ = writeln!(s, "set title '{name}'");
        let mut curves = Vec::new();
        for m in &methods {
            let label = m.label();
            if scan {
                curves.push(format!(
                    "'{path}' using (strcol(1) eq '{label}' ? $3/$2 : NaN):{col} with lines title '{label}'"
                ));
            } else {
                for r in &ratios {
                    curves.push(format!(
                        "'{path}' using (strcol(1) eq '{label}' && abs($3/$2 - {r}) < 1e-9 ? $2 : NaN):{col} with linespoints title '{label} h={r}eps'"
                    ));
                }
            }
        }
        let _ = writeln!(s, "plot {}", curves.join(", \\\n     "));
    }
    let _ = writeln!(s, "unset multiplot");
    s
}
