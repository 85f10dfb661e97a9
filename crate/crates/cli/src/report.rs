//! CSV emission.

use std::io::{self, Write};

use spikewatch_core::AggregateSeries;

pub const SERIES_HEADER: &str = "frame,fdr_mean,fdr_se,tdr_mean,tdr_se";

const SIGNIFICANT_DIGITS: i32 = 10;

/// Fixed-point rendering with 10 significant digits.
pub fn format_number(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (SIGNIFICANT_DIGITS - 1 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

/// `frame,fdr_mean,fdr_se,tdr_mean,tdr_se` for 1-based frame `frame`.
pub fn series_row(agg: &AggregateSeries, frame: usize) -> String {
    let i = frame - 1;
    format!(
        "{frame},{},{},{},{}",
        format_number(agg.fdr_mean[i]),
        format_number(agg.fdr_se[i]),
        format_number(agg.tdr_mean[i]),
        format_number(agg.tdr_se[i])
    )
}

pub fn write_series<W: Write>(w: &mut W, agg: &AggregateSeries) -> io::Result<()> {
    writeln!(w, "{SERIES_HEADER}")?;
    for frame in 1..=agg.frames() {
        writeln!(w, "{}", series_row(agg, frame))?;
    }
    Ok(())
}

pub fn write_summary<W: Write>(w: &mut W, agg: &AggregateSeries) -> io::Result<()> {
    writeln!(w, "{SERIES_HEADER}")?;
    writeln!(w, "{}", series_row(agg, agg.frames()))
}

/// One final-frame row per swept value, the first column named after `key`.
pub fn write_sweep_summary<W: Write>(w: &mut W, key: &str, points: &[(String, AggregateSeries)]) -> io::Result<()> {
    writeln!(w, "{key},{SERIES_HEADER}")?;
    for (value, agg) in points {
        writeln!(w, "{value},{}", series_row(agg, agg.frames()))?;
    }
    Ok(())
}
