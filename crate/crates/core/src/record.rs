//! Fixed-format CSV output for recorded series.
//!
//! Reals are written with six decimals so identical runs give identical bytes.
//! [`quantize`] rounds a series to what the files hold, which lets a summary
//! computed before writing match one recomputed from the files.

use std::io::{self, Write};

use crate::engine::TimeSeries;

pub const VOLTAGES_CSV: &str = "voltages.csv";
pub const FLOWS_CSV: &str = "flows.csv";
pub const TAPS_CSV: &str = "taps.csv";

pub fn fmt6(x: f64) -> String {
    let s = format!("{x:.6}");
    // "-0.000000" and "0.000000" must not differ between runs that only differ in sign noise.
    if s.starts_with('-') && s[1..].bytes().all(|b| b == b'0' || b == b'.') {
        s[1..].to_string()
    } else {
        s
    }
}

fn round6(x: f64) -> f64 {
    fmt6(x).parse().expect("formatted float parses")
}

/// Rounds every real in the series to six decimals.
pub fn quantize(ts: &TimeSeries) -> TimeSeries {
    let mut q = ts.clone();
    q.time_s.iter_mut().for_each(|t| *t = round6(*t));
    for b in &mut q.buses {
        b.vmag_pu.iter_mut().for_each(|v| *v = round6(*v));
    }
    for b in &mut q.branches {
        b.p_mw.iter_mut().for_each(|v| *v = round6(*v));
        b.q_mvar.iter_mut().for_each(|v| *v = round6(*v));
    }
    q
}

/// `time_s` then one column per recorded bus (|V| in pu).
pub fn write_voltages<W: Write>(ts: &TimeSeries, mut w: W) -> io::Result<()> {
    write!(w, "time_s")?;
    for b in &ts.buses {
        write!(w, ",{}", b.id)?;
    }
    writeln!(w)?;
    for (k, t) in ts.time_s.iter().enumerate() {
        write!(w, "{}", fmt6(*t))?;
        for b in &ts.buses {
            write!(w, ",{}", fmt6(b.vmag_pu[k]))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Long format: one row per step and branch.
pub fn write_flows<W: Write>(ts: &TimeSeries, mut w: W) -> io::Result<()> {
    writeln!(w, "time_s,branch,p_mw,q_mvar,direction")?;
    for (k, t) in ts.time_s.iter().enumerate() {
        let t = fmt6(*t);
        for b in &ts.branches {
            writeln!(
                w,
                "{t},{},{},{},{}",
                b.id,
                fmt6(b.p_mw[k]),
                fmt6(b.q_mvar[k]),
                b.direction[k].as_str()
            )?;
        }
    }
    Ok(())
}

/// One row per step and regulator; `event` is 1 when a command was issued.
pub fn write_taps<W: Write>(ts: &TimeSeries, mut w: W) -> io::Result<()> {
    writeln!(w, "time_s,svr,tap,event")?;
    for (k, t) in ts.time_s.iter().enumerate() {
        let t = fmt6(*t);
        for s in &ts.svrs {
            writeln!(w, "{t},{},{},{}", s.id, s.tap[k], u8::from(s.event[k]))?;
        }
    }
    Ok(())
}
