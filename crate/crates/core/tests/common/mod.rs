#![allow(dead_code)]

pub mod oracle;

use num_complex::Complex64;
use svrqsts::control::{ControlMode, SvrControllerParams};
use svrqsts::grid::{Bus, GridSource, Line, Network, SvrDevice, SwitchDevice, SwitchKind, SwitchState};

pub const KV: f64 = 34.5;
pub const Z_BASE: f64 = 34.5 * 34.5 / 10.0;

pub fn params(v_ref: f64, t1: f64, mode: ControlMode) -> SvrControllerParams {
    SvrControllerParams {
        v_ref_pu: v_ref,
        deadband_pu: 0.01,
        hysteresis_pu: 0.0,
        t1_s: t1,
        t2_s: 5.0,
        mode,
    }
}

pub fn empty_net(source_bus: &str, z1_pu: Complex64) -> Network {
    Network {
        base_mva: 10.0,
        buses: vec![bus(source_bus)],
        lines: vec![],
        switches: vec![],
        sources: vec![GridSource {
            id: "PS".into(),
            bus: source_bus.into(),
            v_setpoint_pu: 1.0,
            z1_ohm: z1_pu * Z_BASE,
            z0_ohm: None,
        }],
        loads: vec![],
        generators: vec![],
        svrs: vec![],
    }
}

pub fn bus(id: &str) -> Bus {
    Bus {
        id: id.into(),
        nominal_kv: KV,
    }
}

pub fn line(from: &str, to: &str, z_pu: Complex64) -> Line {
    let z = z_pu * Z_BASE;
    Line {
        id: format!("L{from}-{to}"),
        from: from.into(),
        to: to.into(),
        r_ohm: z.re,
        x_ohm: z.im,
        length_km: None,
    }
}

pub fn switch(id: &str, from: &str, to: &str, state: SwitchState) -> SwitchDevice {
    SwitchDevice {
        id: id.into(),
        from: from.into(),
        to: to.into(),
        state,
        kind: SwitchKind::Switch,
    }
}

pub fn svr(id: &str, source: &str, load: &str, tap: i32, p: SvrControllerParams) -> SvrDevice {
    SvrDevice {
        id: id.into(),
        source_bus: source.into(),
        load_bus: load.into(),
        tap,
        step_size_pu: 0.00625,
        controller: p,
        in_service: true,
    }
}
