//! Reading back the header and settings blocks of `summary.txt`.

use std::collections::BTreeMap;

use anyhow::{anyhow, bail, Context, Result};

use svrqsts::control::{ControlMode, RunawayCriteria, SvrControllerParams};
use svrqsts::engine::{SvrSettings, VoltageBand};

/// What `summarize` needs besides the series itself.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryHeader {
    pub steps: usize,
    pub dt_s: f64,
    pub band: VoltageBand,
    pub criteria: RunawayCriteria,
    pub settings: Vec<SvrSettings>,
}

fn field<'a>(map: &'a BTreeMap<&str, &str>, key: &str, ctx: &str) -> Result<&'a str> {
    map.get(key).copied().ok_or_else(|| anyhow!("{ctx}: missing `{key}`"))
}

fn real(map: &BTreeMap<&str, &str>, key: &str, ctx: &str) -> Result<f64> {
    let v = field(map, key, ctx)?;
    v.parse().with_context(|| format!("{ctx}: `{key}` = `{v}` is not a number"))
}

fn int<T: std::str::FromStr>(map: &BTreeMap<&str, &str>, key: &str, ctx: &str) -> Result<T> {
    let v = field(map, key, ctx)?;
    v.parse().map_err(|_| anyhow!("{ctx}: `{key}` = `{v}` is not an integer"))
}

pub fn parse_header(text: &str) -> Result<SummaryHeader> {
    let mut lines = text.lines();
    if lines.next() != Some("# svrqsts summary") {
        bail!("summary: missing `# svrqsts summary` title");
    }
    // Sections in file order: the top block, then one map per `[settings ..]`.
    let mut top: BTreeMap<&str, &str> = BTreeMap::new();
    let mut blocks: Vec<(&str, BTreeMap<&str, &str>)> = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| anyhow!("summary: bad section `{line}`"))?;
            match name.strip_prefix("settings ") {
                Some(id) => blocks.push((id, BTreeMap::new())),
                None => break,
            }
            continue;
        }
        let (k, v) = line.split_once(' ').ok_or_else(|| anyhow!("summary: bad line `{line}`"))?;
        match blocks.last_mut() {
            Some((_, m)) => m.insert(k, v),
            None => top.insert(k, v),
        };
    }

    let band = field(&top, "band_pu", "summary")?;
    let (lo, hi) = band.split_once(' ').ok_or_else(|| anyhow!("summary: bad band_pu `{band}`"))?;
    let band = VoltageBand {
        lo_pu: lo.parse().context("summary: band_pu")?,
        hi_pu: hi.parse().context("summary: band_pu")?,
    };
    let criteria = RunawayCriteria {
        window_s: real(&top, "runaway_window_s", "summary")?,
        ineffective_fraction: real(&top, "ineffective_fraction", "summary")?,
        ineffective_count: int(&top, "ineffective_count", "summary")?,
        ..Default::default()
    };

    let mut settings = Vec::new();
    for (id, m) in &blocks {
        let ctx = format!("summary [settings {id}]");
        let mode = match field(m, "mode", &ctx)? {
            "bidirectional" => ControlMode::Bidirectional,
            "cogeneration" => ControlMode::Cogeneration,
            other => bail!("{ctx}: unknown mode `{other}`"),
        };
        settings.push(SvrSettings {
            id: id.to_string(),
            source_bus: field(m, "source_bus", &ctx)?.to_string(),
            load_bus: field(m, "load_bus", &ctx)?.to_string(),
            params: SvrControllerParams {
                v_ref_pu: real(m, "v_ref_pu", &ctx)?,
                deadband_pu: real(m, "deadband_pu", &ctx)?,
                hysteresis_pu: real(m, "hysteresis_pu", &ctx)?,
                t1_s: real(m, "t1_s", &ctx)?,
                t2_s: real(m, "t2_s", &ctx)?,
                mode,
            },
            step_pu: real(m, "step_pu", &ctx)?,
        });
    }

    Ok(SummaryHeader {
        steps: int(&top, "steps", "summary")?,
        dt_s: real(&top, "dt_s", "summary")?,
        band,
        criteria,
        settings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const TEXT: &str = "# svrqsts summary\nsteps 11\ndt_s 0.5\nband_pu 0.93 1.05\nruntime_note x\nrunaway_window_s 10\nineffective_fraction 0.2\nineffective_count 3\n\n[settings R1]\nsource_bus a\nload_bus b\nmode bidirectional\nv_ref_pu 1.0125\ndeadband_pu 0.01\nhysteresis_pu 0.002\nt1_s 30\nt2_s 5\nstep_pu 0.00625\n\n[svr R1]\ntap_operations 4\n";

    #[test]
    fn header_round_trips_settings() {
        let h = parse_header(TEXT).unwrap();
        assert_eq!(h.steps, 11);
        assert_eq!(h.dt_s, 0.5);
        assert_eq!(h.band, VoltageBand { lo_pu: 0.93, hi_pu: 1.05 });
        assert_eq!(h.criteria.ineffective_count, 3);
        assert_eq!(h.settings.len(), 1);
        let s = &h.settings[0];
        assert_eq!((s.id.as_str(), s.source_bus.as_str(), s.load_bus.as_str()), ("R1", "a", "b"));
        assert_eq!(s.params.mode, ControlMode::Bidirectional);
        assert_eq!(s.params.v_ref_pu, 1.0125);
        assert_eq!(s.params.hysteresis_pu, 0.002);
    }

    #[test]
    fn malformed_headers_fail() {
        assert!(parse_header("").is_err());
        assert!(parse_header(&TEXT.replace("steps 11", "steps eleven")).is_err());
        assert!(parse_header(&TEXT.replace("mode bidirectional", "mode sideways")).is_err());
        assert!(parse_header(&TEXT.replace("t2_s 5\n", "")).is_err());
    }
}
