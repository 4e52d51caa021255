use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::*;
use svrqsts::control::ControlMode;
use svrqsts::grid::{tap_ratio, Network, SwitchState};
use svrqsts::powerflow::BusPower;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Random radial case: the tree (parent of every bus), its branch elements and injections.
pub struct Case {
    pub net: Network,
    pub taps: Vec<i32>,
    pub parent: Vec<usize>,
    pub loads: BusPower,
    pub gens: BusPower,
}

pub enum Link {
    Line(Complex64),
    Switch,
    /// Regulator index and whether the parent is its source terminal.
    Svr(usize, bool),
}

pub fn name(i: usize) -> String {
    format!("b{i}")
}

pub fn random_case(rng: &mut ChaCha8Rng) -> (Case, Vec<Link>) {
    let n = rng.gen_range(2..=10);
    let z1 = c(rng.gen_range(0.005..0.02), rng.gen_range(0.05..0.15));
    let mut net = empty_net("b0", z1);
    let mut taps = Vec::new();
    let mut parent = vec![0];
    let mut links = vec![Link::Line(z1)];
    for i in 1..n {
        net.buses.push(bus(&name(i)));
        let p = rng.gen_range(0..i);
        parent.push(p);
        let r: f64 = rng.gen();
        if r < 0.65 {
            let z = c(rng.gen_range(0.005..0.05), rng.gen_range(0.01..0.08));
            net.lines.push(line(&name(p), &name(i), z));
            links.push(Link::Line(z));
        } else if r < 0.8 {
            net.switches
                .push(switch(&format!("S{i}"), &name(p), &name(i), SwitchState::Closed));
            links.push(Link::Switch);
        } else {
            let forward = rng.gen_bool(0.7);
            let (s, l) = if forward { (p, i) } else { (i, p) };
            let k = net.svrs.len();
            net.svrs.push(svr(&format!("R{i}"), &name(s), &name(l), 0, params(1.0, 30.0, ControlMode::Cogeneration)));
            taps.push(rng.gen_range(-16..=16));
            links.push(Link::Svr(k, forward));
        }
    }
    if rng.gen_bool(0.5) {
        let (a, b) = (rng.gen_range(1..n), rng.gen_range(0..n));
        if a != b {
            net.switches.push(switch("OPEN", &name(a), &name(b), SwitchState::Open));
        }
    }
    let mut loads = BusPower::new();
    let mut gens = BusPower::new();
    for i in 0..n {
        loads.insert(name(i), c(rng.gen_range(0.0..0.8), rng.gen_range(0.0..0.4)));
        if rng.gen_bool(0.3) {
            gens.insert(name(i), c(rng.gen_range(0.0..1.0), 0.0));
        }
    }
    (
        Case {
            net,
            taps,
            parent,
            loads,
            gens,
        },
        links,
    )
}

/// Nodal fixed point on the full admittance matrix. Switches and ideal
/// regulators tie node voltages together, `V = C x`; power conservation of
/// those elements makes the reduced equations `Cᵀ Y C x = Cᵀ I(V)`.
pub fn nodal_oracle(case: &Case, links: &[Link]) -> Vec<Complex64> {
    let n = case.parent.len();
    let root = n;
    let ratios: Vec<f64> = case.taps.iter().map(|&t| tap_ratio(t).unwrap()).collect();

    // Group coefficient of every node; groups follow the tree order, so a
    // parent's coefficient is known before its children.
    let mut group = vec![0usize; n + 1];
    let mut coef = vec![1.0; n + 1];
    let mut groups = 1;
    group[root] = 0;
    for i in 0..n {
        let p = if i == 0 { root } else { case.parent[i] };
        match links[i] {
            Link::Line(_) => {
                group[i] = groups;
                groups += 1;
            }
            Link::Switch => {
                group[i] = group[p];
                coef[i] = coef[p];
            }
            Link::Svr(k, parent_is_source) => {
                group[i] = group[p];
                coef[i] = if parent_is_source { coef[p] * ratios[k] } else { coef[p] / ratios[k] };
            }
        }
    }

    let mut y = DMatrix::<Complex64>::zeros(n + 1, n + 1);
    for i in 0..n {
        if let Link::Line(z) = links[i] {
            let p = if i == 0 { root } else { case.parent[i] };
            let yl = 1.0 / z;
            y[(i, i)] += yl;
            y[(p, p)] += yl;
            y[(i, p)] -= yl;
            y[(p, i)] -= yl;
        }
    }
    let mut cm = DMatrix::<Complex64>::zeros(n + 1, groups);
    for u in 0..=n {
        cm[(u, group[u])] = c(coef[u], 0.0);
    }
    let yr = cm.transpose() * &y * &cm;
    let f = groups - 1;
    let yff = yr.view((1, 1), (f, f)).into_owned();
    let yfs = yr.view((1, 0), (f, 1)).into_owned();
    let lu = yff.lu();

    let demand: Vec<Complex64> = (0..n)
        .map(|i| {
            let l = case.loads.get(&name(i)).copied().unwrap_or_default();
            let g = case.gens.get(&name(i)).copied().unwrap_or_default();
            (l - g) / 10.0
        })
        .collect();

    let mut x = DMatrix::<Complex64>::from_element(groups, 1, c(1.0, 0.0));
    for _ in 0..1000 {
        let v = &cm * &x;
        let mut inj = DMatrix::<Complex64>::zeros(n + 1, 1);
        for i in 0..n {
            inj[(i, 0)] = -(demand[i] / v[(i, 0)]).conj();
        }
        let rhs = (cm.transpose() * inj).rows(1, f).into_owned() - &yfs * c(1.0, 0.0);
        let xf = lu.solve(&rhs).expect("reduced admittance is invertible");
        let mut step = 0.0f64;
        for g in 0..f {
            step = step.max((xf[(g, 0)] - x[(g + 1, 0)]).norm());
            x[(g + 1, 0)] = xf[(g, 0)];
        }
        if step < 1e-13 {
            break;
        }
    }
    let v = &cm * &x;
    (0..n).map(|i| v[(i, 0)]).collect()
}
