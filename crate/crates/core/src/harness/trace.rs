//! CSV traces, one row per iteration. Vector cells are `;`-joined and every
//! number carries 17 significant digits so traces reproduce bit for bit.

use std::io::Write;

use crate::banach_space::Vector;
use crate::solver::IterateState;

pub const TRACE_HEADER: [&str; 11] = [
    "n",
    "x",
    "u",
    "z",
    "w",
    "y",
    "step_norm",
    "split_residual",
    "fix_residual",
    "phi_x1",
    "cond2_ratio",
];

fn number(v: f64) -> String {
    format!("{v:.16e}")
}

fn cell(v: &Vector) -> String {
    v.iter().map(|t| number(*t)).collect::<Vec<_>>().join(";")
}

/// The cells of one trace row.
pub fn trace_row(st: &IterateState) -> [String; 11] {
    let d = &st.diagnostics;
    [
        st.n.to_string(),
        cell(&st.x),
        cell(&st.u),
        cell(&st.z),
        cell(&st.w),
        cell(&st.y),
        number(d.step_norm),
        number(d.split_residual),
        number(d.fix_residual),
        number(d.phi_x1),
        number(d.cond2_ratio),
    ]
}

pub fn write_trace<W: Write>(out: W, states: &[IterateState]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for st in states {
        w.write_record(trace_row(st))?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a vector cell back into numbers.
pub fn parse_cell(cell: &str) -> Result<Vec<f64>, std::num::ParseFloatError> {
    cell.split(';').map(str::parse).collect()
}
