//! CSV input: two-column curves and the three recorded series.

use std::fs::File;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};

use svrqsts::engine::{BranchTrace, BusTrace, SvrSettings, SvrTrace, TimeSeries};
use svrqsts::powerflow::FlowDirection;
use svrqsts::record::{FLOWS_CSV, TAPS_CSV, VOLTAGES_CSV};

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("cannot open {}", path.display()))
}

fn num(field: &str, path: &Path, row: usize) -> Result<f64> {
    field
        .parse()
        .with_context(|| format!("{}: row {row}: `{field}` is not a number", path.display()))
}

/// `(time_s, value)` rows after a header line.
pub fn read_two_columns(path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    for (i, rec) in reader(path)?.records().enumerate() {
        let rec = rec.with_context(|| format!("{}: row {}", path.display(), i + 1))?;
        if rec.len() != 2 {
            bail!("{}: row {} has {} fields, expected 2", path.display(), i + 1, rec.len());
        }
        out.push((num(&rec[0], path, i + 1)?, num(&rec[1], path, i + 1)?));
    }
    if out.is_empty() {
        bail!("{}: no data rows", path.display());
    }
    Ok(out)
}

/// Reads a run directory back into a series. `settings` supplies what the
/// CSVs do not hold: each regulator's terminals and controller parameters.
pub fn read_series(dir: &Path, dt_s: f64, steps: usize, settings: &[SvrSettings]) -> Result<TimeSeries> {
    let vpath = dir.join(VOLTAGES_CSV);
    let mut rdr = reader(&vpath)?;
    let header = rdr.headers().with_context(|| format!("{}: header", vpath.display()))?.clone();
    if header.get(0) != Some("time_s") {
        bail!("{}: first column must be time_s", vpath.display());
    }
    let mut time_s = Vec::with_capacity(steps);
    let mut buses: Vec<BusTrace> = header
        .iter()
        .skip(1)
        .map(|id| BusTrace {
            id: id.to_string(),
            vmag_pu: Vec::with_capacity(steps),
        })
        .collect();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.with_context(|| format!("{}: row {}", vpath.display(), i + 1))?;
        time_s.push(num(&rec[0], &vpath, i + 1)?);
        for (b, f) in buses.iter_mut().zip(rec.iter().skip(1)) {
            b.vmag_pu.push(num(f, &vpath, i + 1)?);
        }
    }
    if time_s.len() != steps {
        bail!("{}: {} rows, summary expects {steps}", vpath.display(), time_s.len());
    }

    let fpath = dir.join(FLOWS_CSV);
    let mut branches: Vec<BranchTrace> = Vec::new();
    let rows = long_rows(&fpath, 5, &time_s, |rec, k, row| {
        let id = &rec[1];
        let pos = match branches.iter().position(|b| b.id == id) {
            Some(p) => p,
            None if k == 0 => {
                branches.push(BranchTrace {
                    id: id.to_string(),
                    p_mw: Vec::new(),
                    q_mvar: Vec::new(),
                    direction: Vec::new(),
                });
                branches.len() - 1
            }
            None => bail!("{}: row {row}: branch `{id}` not present at the first step", fpath.display()),
        };
        let b = &mut branches[pos];
        if b.p_mw.len() != k {
            bail!("{}: row {row}: branch `{id}` out of order", fpath.display());
        }
        b.p_mw.push(num(&rec[2], &fpath, row)?);
        b.q_mvar.push(num(&rec[3], &fpath, row)?);
        b.direction.push(match &rec[4] {
            "direct" => FlowDirection::Direct,
            "reverse" => FlowDirection::Reverse,
            other => bail!("{}: row {row}: unknown direction `{other}`", fpath.display()),
        });
        Ok(())
    })?;
    check_complete(&fpath, rows, steps, branches.len())?;

    let tpath = dir.join(TAPS_CSV);
    let mut svrs: Vec<SvrTrace> = Vec::new();
    let rows = long_rows(&tpath, 4, &time_s, |rec, k, row| {
        let id = &rec[1];
        let pos = match svrs.iter().position(|s| s.id == id) {
            Some(p) => p,
            None if k == 0 => {
                let st = settings
                    .iter()
                    .find(|s| s.id == id)
                    .ok_or_else(|| anyhow!("{}: regulator `{id}` has no settings block", tpath.display()))?;
                svrs.push(SvrTrace {
                    id: id.to_string(),
                    source_bus: st.source_bus.clone(),
                    load_bus: st.load_bus.clone(),
                    params: st.params,
                    step_pu: st.step_pu,
                    tap: Vec::new(),
                    event: Vec::new(),
                });
                svrs.len() - 1
            }
            None => bail!("{}: row {row}: regulator `{id}` not present at the first step", tpath.display()),
        };
        let s = &mut svrs[pos];
        if s.tap.len() != k {
            bail!("{}: row {row}: regulator `{id}` out of order", tpath.display());
        }
        s.tap.push(
            rec[2]
                .parse()
                .with_context(|| format!("{}: row {row}: bad tap", tpath.display()))?,
        );
        s.event.push(match &rec[3] {
            "0" => false,
            "1" => true,
            other => bail!("{}: row {row}: event must be 0 or 1, got `{other}`", tpath.display()),
        });
        Ok(())
    })?;
    check_complete(&tpath, rows, steps, svrs.len())?;
    if svrs.len() != settings.len() {
        bail!("{}: {} regulators, summary lists {}", tpath.display(), svrs.len(), settings.len());
    }

    Ok(TimeSeries {
        dt_s,
        time_s,
        buses,
        branches,
        svrs,
    })
}

/// Walks a long-format file whose rows are grouped by step; `f` gets the
/// record, its step index and its 1-based row number. Returns the row count.
fn long_rows(
    path: &Path,
    fields: usize,
    time_s: &[f64],
    mut f: impl FnMut(&csv::StringRecord, usize, usize) -> Result<()>,
) -> Result<usize> {
    let mut k = 0usize;
    let mut n = 0usize;
    for (i, rec) in reader(path)?.records().enumerate() {
        let row = i + 1;
        let rec = rec.with_context(|| format!("{}: row {row}", path.display()))?;
        if rec.len() != fields {
            bail!("{}: row {row} has {} fields, expected {fields}", path.display(), rec.len());
        }
        let t = num(&rec[0], path, row)?;
        while k < time_s.len() && t != time_s[k] {
            k += 1;
        }
        if k == time_s.len() {
            bail!("{}: row {row}: time {t} does not match voltages.csv", path.display());
        }
        f(&rec, k, row)?;
        n += 1;
    }
    Ok(n)
}

fn check_complete(path: &Path, rows: usize, steps: usize, width: usize) -> Result<()> {
    if rows != steps * width {
        bail!("{}: {rows} rows, expected {} ({steps} steps x {width})", path.display(), steps * width);
    }
    Ok(())
}
