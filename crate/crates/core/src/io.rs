//! Text output: trajectory and diagnostics CSV, decay CSV, flat JSON objects.
//! Every float is written with 17 significant digits.

use std::fmt::Write as _;
use std::io::{self, Write};

use crate::asymptotics::{DecayCurve, StopReason};
use crate::duality::DualityReport;
use crate::mesh::NodalField;
use crate::solvers::Trajectory;

/// `d.dddddddddddddddde±x`, or `nan`/`inf`/`-inf`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string().to_lowercase()
    }
}

fn coord_header(dim: usize) -> &'static str {
    if dim == 2 {
        "x,y"
    } else {
        "x"
    }
}

fn coords(field: &NodalField, k: usize) -> String {
    let p = field.mesh().interior_coords(k);
    if field.mesh().dim() == 2 {
        format!("{},{}", fmt_f64(p[0]), fmt_f64(p[1]))
    } else {
        fmt_f64(p[0])
    }
}

/// `node_index,x[,y],value`
pub fn write_node_table<W: Write>(mut w: W, field: &NodalField) -> io::Result<()> {
    writeln!(w, "node_index,{},value", coord_header(field.mesh().dim()))?;
    for (k, v) in field.values().iter().enumerate() {
        writeln!(w, "{k},{},{}", coords(field, k), fmt_f64(*v))?;
    }
    Ok(())
}

/// `step,t,node_index,x[,y],value` over the stored checkpoints.
pub fn write_trajectory_csv<W: Write>(mut w: W, tr: &Trajectory) -> io::Result<()> {
    writeln!(w, "step,t,node_index,{},value", coord_header(tr.mesh().dim()))?;
    for (step, field) in tr.snapshots() {
        let t = fmt_f64(tr.grid().time(*step));
        for (k, v) in field.values().iter().enumerate() {
            writeln!(w, "{step},{t},{k},{},{}", coords(field, k), fmt_f64(*v))?;
        }
    }
    Ok(())
}

/// `step,t,l1,linf,l1_dist_ref`; the last column is empty without a reference.
pub fn write_diagnostics_csv<W: Write>(mut w: W, tr: &Trajectory) -> io::Result<()> {
    writeln!(w, "step,t,l1,linf,l1_dist_ref")?;
    for d in tr.diagnostics() {
        let r = d.l1_dist_ref.map(fmt_f64).unwrap_or_default();
        writeln!(w, "{},{},{},{},{}", d.step, fmt_f64(d.t), fmt_f64(d.l1), fmt_f64(d.linf), r)?;
    }
    Ok(())
}

/// `t,l1_dist,linf_dist`
pub fn write_decay_csv<W: Write>(mut w: W, curve: &DecayCurve) -> io::Result<()> {
    writeln!(w, "t,l1_dist,linf_dist")?;
    for p in &curve.points {
        writeln!(w, "{},{},{}", fmt_f64(p.t), fmt_f64(p.l1_dist), fmt_f64(p.linf_dist))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub enum JsonValue {
    Num(f64),
    Int(i64),
    Str(String),
    Bool(bool),
    Null,
}

impl From<f64> for JsonValue {
    fn from(x: f64) -> Self {
        JsonValue::Num(x)
    }
}

impl From<Option<f64>> for JsonValue {
    fn from(x: Option<f64>) -> Self {
        x.map_or(JsonValue::Null, JsonValue::Num)
    }
}

impl From<usize> for JsonValue {
    fn from(x: usize) -> Self {
        JsonValue::Int(x as i64)
    }
}

impl From<bool> for JsonValue {
    fn from(x: bool) -> Self {
        JsonValue::Bool(x)
    }
}

impl From<&str> for JsonValue {
    fn from(x: &str) -> Self {
        JsonValue::Str(x.to_string())
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c if (c as u32) < 0x20 => {
                let _ = write!(out, "\\u{:04x}", c as u32);
            }
            c => out.push(c),
        }
    }
    out
}

/// A flat JSON object with keys in insertion order. Non-finite numbers are
/// written as `null`.
pub fn flat_json(fields: &[(&str, JsonValue)]) -> String {
    let mut out = String::from("{\n");
    for (i, (k, v)) in fields.iter().enumerate() {
        let value = match v {
            JsonValue::Num(x) if x.is_finite() => fmt_f64(*x),
            JsonValue::Num(_) | JsonValue::Null => "null".to_string(),
            JsonValue::Int(n) => n.to_string(),
            JsonValue::Str(s) => format!("\"{}\"", escape(s)),
            JsonValue::Bool(b) => b.to_string(),
        };
        let sep = if i + 1 < fields.len() { "," } else { "" };
        let _ = writeln!(out, "  \"{}\": {value}{sep}", escape(k));
    }
    out.push_str("}\n");
    out
}

pub fn duality_report_json(r: &DualityReport) -> String {
    flat_json(&[
        ("lhs_init_term", r.lhs_init_term.into()),
        ("lhs_bulk_term", r.lhs_bulk_term.into()),
        ("rhs_measure_term", r.rhs_measure_term.into()),
        ("residual", r.residual.into()),
        ("relative_residual", r.relative_residual.into()),
    ])
}

pub fn stop_reason_str(s: StopReason) -> &'static str {
    match s {
        StopReason::ToleranceReached => "tolerance_reached",
        StopReason::HorizonReached => "horizon_reached",
    }
}

pub fn decay_summary_json(c: &DecayCurve) -> String {
    flat_json(&[
        ("fitted_rate", c.fitted_rate.into()),
        ("predicted_rate", c.predicted_rate.into()),
        ("stop_reason", stop_reason_str(c.stop_reason).into()),
        ("t_final", c.t_final.into()),
    ])
}
