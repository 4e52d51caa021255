//! Balanced backward/forward sweep for radial islands.
//!
//! Each energized island is a tree rooted at an internal node that holds the
//! source's ideal voltage; the Thévenin impedance is the root's first branch.
//! Lines are series impedances, closed switches are identity branches (the two
//! buses share one voltage), and regulators are ideal ratio branches with
//! `V_load = ratio * V_source` and `I_source = ratio * I_load`.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{GridError, PowerFlowError};
use crate::grid::{z_base_ohm, Network, SwitchStates};
use crate::topology::{bus_index, effective_state, validate_topology, TopologyReport};

/// Complex power per bus in MW + jMVar.
pub type BusPower = BTreeMap<String, Complex64>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Maximum bus power mismatch in pu.
    pub tol: f64,
    pub max_iter: usize,
    /// Active-power dead-zone (MW) used when classifying flow direction.
    pub flow_deadband_mw: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-6,
            max_iter: 100,
            flow_deadband_mw: 0.001,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum FlowDirection {
    Direct,
    Reverse,
}

impl FlowDirection {
    pub fn as_str(self) -> &'static str {
        match self {
            FlowDirection::Direct => "direct",
            FlowDirection::Reverse => "reverse",
        }
    }
}

/// Active/reactive flow through a branch, measured at its source-side
/// terminal and positive from `from` (or the regulator's source bus) toward
/// `to` (its load bus).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchFlow {
    pub branch: String,
    pub p_mw: f64,
    pub q_mvar: f64,
    pub direction: FlowDirection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerFlowSolution {
    bus_ids: Arc<Vec<String>>,
    branch_ids: Arc<Vec<String>>,
    /// Bus voltages in pu, indexed like `Network::buses`. Zero when de-energized.
    pub v: Vec<Complex64>,
    /// Branch complex power in MVA, indexed like `branch_ids`; zero when the branch is not energized.
    pub branch_s: Vec<Complex64>,
    /// Power delivered by each source's internal EMF, MVA.
    pub source_s: Vec<Complex64>,
    pub converged: bool,
    pub iterations: usize,
    pub mismatch: f64,
}

impl PowerFlowSolution {
    pub fn bus_ids(&self) -> &[String] {
        &self.bus_ids
    }

    pub fn branch_ids(&self) -> &[String] {
        &self.branch_ids
    }

    pub fn voltage(&self, bus: &str) -> Option<Complex64> {
        self.bus_ids.iter().position(|b| b == bus).map(|i| self.v[i])
    }

    pub fn vmag(&self, bus: &str) -> Option<f64> {
        self.voltage(bus).map(|v| v.norm())
    }

    pub fn voltage_map(&self) -> BTreeMap<String, Complex64> {
        self.bus_ids.iter().cloned().zip(self.v.iter().copied()).collect()
    }

    pub fn branch_power(&self, branch: &str) -> Option<Complex64> {
        self.branch_ids
            .iter()
            .position(|b| b == branch)
            .map(|i| self.branch_s[i])
    }

    pub fn branch_flow(&self, branch: &str, deadband_mw: f64) -> Result<BranchFlow, PowerFlowError> {
        let s = self
            .branch_power(branch)
            .ok_or_else(|| PowerFlowError::UnknownBranch(branch.to_string()))?;
        Ok(BranchFlow {
            branch: branch.to_string(),
            p_mw: s.re,
            q_mvar: s.im,
            direction: classify(s.re, deadband_mw),
        })
    }
}

/// Signed active power (MW) through `branch`, measured at its source-side terminal.
pub fn branch_active_power(sol: &PowerFlowSolution, branch: &str) -> Result<f64, PowerFlowError> {
    sol.branch_power(branch)
        .map(|s| s.re)
        .ok_or_else(|| PowerFlowError::UnknownBranch(branch.to_string()))
}

/// Reverse only when the flow is below `-deadband_mw`.
pub fn classify(p_mw: f64, deadband_mw: f64) -> FlowDirection {
    if p_mw < -deadband_mw {
        FlowDirection::Reverse
    } else {
        FlowDirection::Direct
    }
}

pub fn flow_direction_at_svr(
    sol: &PowerFlowSolution,
    svr: &str,
    deadband_mw: f64,
) -> Result<FlowDirection, PowerFlowError> {
    branch_active_power(sol, svr).map(|p| classify(p, deadband_mw))
}

#[derive(Debug, Clone, Copy)]
enum EdgeKind {
    Impedance(Complex64),
    Identity,
    /// `svr` indexes `Network::svrs`.
    Ratio { svr: usize, source_is_parent: bool },
}

#[derive(Debug, Clone, Copy)]
struct TreeEdge {
    parent: usize,
    kind: EdgeKind,
}

/// Where a network branch sits in the tree.
#[derive(Debug, Clone, Copy)]
struct BranchSlot {
    child: usize,
    /// The branch's `from`/source terminal is the tree parent.
    from_is_parent: bool,
}

/// A topology compiled into sweep order. Valid for one set of switch states;
/// taps and injections vary per solve.
#[derive(Debug, Clone)]
pub struct RadialModel {
    n_bus: usize,
    base_mva: f64,
    bus_ids: Arc<Vec<String>>,
    branch_ids: Arc<Vec<String>>,
    /// Internal source nodes are `n_bus + k`.
    v_source: Vec<Complex64>,
    source_bus: Vec<usize>,
    /// Breadth-first order; roots first.
    order: Vec<usize>,
    edge: Vec<Option<TreeEdge>>,
    branch_slot: Vec<Option<BranchSlot>>,
    energized: Vec<bool>,
    topology: TopologyReport,
}

impl RadialModel {
    pub fn compile(net: &Network, states: &SwitchStates) -> Result<Self, GridError> {
        let topology = validate_topology(net, states)?;
        let idx = bus_index(net);
        let sw = effective_state(net, states)?;
        let n_bus = net.buses.len();
        let n_nodes = n_bus + net.sources.len();

        // Adjacency over closed branches; the value is (neighbour, branch index).
        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n_nodes];
        let mut kinds: Vec<(usize, usize, Option<EdgeKind>)> = Vec::new();
        let mut branch_ids = Vec::new();
        for l in &net.lines {
            let (a, b) = (idx[l.from.as_str()], idx[l.to.as_str()]);
            let zb = z_base_ohm(net.buses[a].nominal_kv, net.base_mva)?;
            if net.buses[a].nominal_kv != net.buses[b].nominal_kv {
                return Err(GridError::invalid(format!("line {}", l.id), "terminals at different nominal voltages"));
            }
            kinds.push((a, b, Some(EdgeKind::Impedance(l.z_ohm() / zb))));
            branch_ids.push(l.id.clone());
        }
        for (s, st) in net.switches.iter().zip(&sw) {
            let (a, b) = (idx[s.from.as_str()], idx[s.to.as_str()]);
            kinds.push((a, b, st.is_closed().then_some(EdgeKind::Identity)));
            branch_ids.push(s.id.clone());
        }
        for (k, r) in net.svrs.iter().enumerate() {
            let (a, b) = (idx[r.source_bus.as_str()], idx[r.load_bus.as_str()]);
            kinds.push((
                a,
                b,
                Some(EdgeKind::Ratio {
                    svr: k,
                    source_is_parent: true,
                }),
            ));
            branch_ids.push(r.id.clone());
        }
        for (bi, (a, b, kind)) in kinds.iter().enumerate() {
            if kind.is_some() {
                adj[*a].push((*b, bi));
                adj[*b].push((*a, bi));
            }
        }

        let mut edge: Vec<Option<TreeEdge>> = vec![None; n_nodes];
        let mut branch_slot: Vec<Option<BranchSlot>> = vec![None; kinds.len()];
        let mut visited = vec![false; n_nodes];
        let mut order = Vec::with_capacity(n_nodes);
        let mut v_source = Vec::with_capacity(net.sources.len());
        let mut source_bus = Vec::with_capacity(net.sources.len());

        for (k, s) in net.sources.iter().enumerate() {
            let root = n_bus + k;
            let bus = idx[s.bus.as_str()];
            let zb = z_base_ohm(net.buses[bus].nominal_kv, net.base_mva)?;
            v_source.push(Complex64::new(s.v_setpoint_pu, 0.0));
            source_bus.push(bus);
            visited[root] = true;
            order.push(root);
            visited[bus] = true;
            edge[bus] = Some(TreeEdge {
                parent: root,
                kind: EdgeKind::Impedance(s.z1_ohm / zb),
            });
            let mut head = order.len();
            order.push(bus);
            while head < order.len() {
                let u = order[head];
                head += 1;
                for &(w, bi) in &adj[u] {
                    if visited[w] {
                        continue;
                    }
                    visited[w] = true;
                    let (a, _, kind) = kinds[bi];
                    let from_is_parent = a == u;
                    let kind = match kind.expect("closed branch") {
                        EdgeKind::Ratio { svr, .. } => EdgeKind::Ratio {
                            svr,
                            source_is_parent: from_is_parent,
                        },
                        other => other,
                    };
                    edge[w] = Some(TreeEdge { parent: u, kind });
                    branch_slot[bi] = Some(BranchSlot {
                        child: w,
                        from_is_parent,
                    });
                    order.push(w);
                }
            }
        }

        let energized = (0..n_bus).map(|b| visited[b]).collect();
        Ok(RadialModel {
            n_bus,
            base_mva: net.base_mva,
            bus_ids: Arc::new(net.buses.iter().map(|b| b.id.clone()).collect()),
            branch_ids: Arc::new(branch_ids),
            v_source,
            source_bus,
            order,
            edge,
            branch_slot,
            energized,
            topology,
        })
    }

    pub fn topology(&self) -> &TopologyReport {
        &self.topology
    }

    pub fn is_energized(&self, bus: usize) -> bool {
        self.energized[bus]
    }

    pub fn bus_ids(&self) -> &[String] {
        &self.bus_ids
    }

    /// Position of a line, switch or regulator in `PowerFlowSolution::branch_s`.
    pub fn branch_index(&self, id: &str) -> Option<usize> {
        self.branch_ids.iter().position(|b| b == id)
    }

    /// Depth of each bus from its root, `None` when de-energized.
    pub fn depth(&self) -> Vec<Option<usize>> {
        let mut d = vec![None; self.edge.len()];
        for &u in &self.order {
            d[u] = match self.edge[u] {
                None => Some(0),
                Some(e) => d[e.parent].map(|p: usize| p + 1),
            };
        }
        d.truncate(self.n_bus);
        d
    }

    /// Solves with per-regulator `ratios` and net demand `demand_mva[bus]`
    /// (load minus generation, MW + jMVar).
    pub fn solve(
        &self,
        ratios: &[f64],
        demand_mva: &[Complex64],
        opts: &SolverOptions,
    ) -> Result<PowerFlowSolution, PowerFlowError> {
        assert_eq!(demand_mva.len(), self.n_bus, "one demand entry per bus");
        let n_nodes = self.edge.len();
        let s: Vec<Complex64> = (0..n_nodes)
            .map(|i| {
                if i < self.n_bus && self.energized[i] {
                    demand_mva[i] / self.base_mva
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect();

        let zero = Complex64::new(0.0, 0.0);
        let mut v = vec![zero; n_nodes];
        let mut cur = vec![zero; n_nodes];
        let mut inj = vec![zero; n_nodes];
        self.forward(ratios, &cur, &mut v);

        let mut converged = false;
        let mut iterations = 0;
        let mut mismatch = f64::INFINITY;
        while iterations < opts.max_iter {
            iterations += 1;
            for &u in &self.order {
                inj[u] = if s[u] == zero { zero } else { (s[u] / v[u]).conj() };
            }
            self.backward(ratios, &inj, &mut cur);
            self.forward(ratios, &cur, &mut v);

            mismatch = 0.0;
            let mut finite = true;
            for &u in &self.order {
                let m = (v[u] * inj[u].conj() - s[u]).norm();
                if !m.is_finite() || v[u].norm() < 1e-6 {
                    finite = false;
                }
                mismatch = mismatch.max(m);
            }
            if !finite {
                mismatch = f64::INFINITY;
                break;
            }
            if mismatch <= opts.tol {
                converged = true;
                break;
            }
        }

        // Branch flows from the final voltages.
        for &u in &self.order {
            inj[u] = if s[u] == zero { zero } else { (s[u] / v[u]).conj() };
        }
        self.backward(ratios, &inj, &mut cur);

        let mut branch_s = vec![zero; self.branch_slot.len()];
        for (bi, slot) in self.branch_slot.iter().enumerate() {
            let Some(slot) = slot else { continue };
            let c = slot.child;
            let e = self.edge[c].expect("tree edge");
            branch_s[bi] = if slot.from_is_parent {
                let i_parent = parent_current(e.kind, ratios, cur[c]);
                v[e.parent] * i_parent.conj() * self.base_mva
            } else {
                -(v[c] * cur[c].conj()) * self.base_mva
            };
        }
        let source_s = self
            .source_bus
            .iter()
            .enumerate()
            .map(|(k, &bus)| v[self.n_bus + k] * cur[bus].conj() * self.base_mva)
            .collect();

        v.truncate(self.n_bus);
        let sol = PowerFlowSolution {
            bus_ids: Arc::clone(&self.bus_ids),
            branch_ids: Arc::clone(&self.branch_ids),
            v,
            branch_s,
            source_s,
            converged,
            iterations,
            mismatch,
        };
        if converged {
            Ok(sol)
        } else {
            Err(PowerFlowError::NonConvergence(Box::new(sol)))
        }
    }

    /// `cur[u]` becomes the current entering node `u` from its parent edge.
    fn backward(&self, ratios: &[f64], inj: &[Complex64], cur: &mut [Complex64]) {
        for &u in &self.order {
            cur[u] = inj[u];
        }
        for &u in self.order.iter().rev() {
            if let Some(e) = self.edge[u] {
                let ip = parent_current(e.kind, ratios, cur[u]);
                cur[e.parent] += ip;
            }
        }
    }

    fn forward(&self, ratios: &[f64], cur: &[Complex64], v: &mut [Complex64]) {
        for &u in &self.order {
            v[u] = match self.edge[u] {
                None => self.v_source[u - self.n_bus],
                Some(e) => {
                    let vp = v[e.parent];
                    match e.kind {
                        EdgeKind::Impedance(z) => vp - z * cur[u],
                        EdgeKind::Identity => vp,
                        EdgeKind::Ratio {
                            svr,
                            source_is_parent: true,
                        } => vp * ratios[svr],
                        EdgeKind::Ratio {
                            svr,
                            source_is_parent: false,
                        } => vp / ratios[svr],
                    }
                }
            };
        }
    }
}

fn parent_current(kind: EdgeKind, ratios: &[f64], child_current: Complex64) -> Complex64 {
    match kind {
        EdgeKind::Impedance(_) | EdgeKind::Identity => child_current,
        EdgeKind::Ratio {
            svr,
            source_is_parent: true,
        } => child_current * ratios[svr],
        EdgeKind::Ratio {
            svr,
            source_is_parent: false,
        } => child_current / ratios[svr],
    }
}

/// Demand per bus (MW + jMVar) from separate load and generation maps.
pub fn net_demand(net: &Network, loads: &BusPower, gens: &BusPower) -> Result<Vec<Complex64>, PowerFlowError> {
    let idx = bus_index(net);
    let mut d = vec![Complex64::new(0.0, 0.0); net.buses.len()];
    for (bus, s) in loads {
        let i = idx
            .get(bus.as_str())
            .ok_or_else(|| PowerFlowError::UnknownInjectionBus(bus.clone()))?;
        d[*i] += s;
    }
    for (bus, s) in gens {
        let i = idx
            .get(bus.as_str())
            .ok_or_else(|| PowerFlowError::UnknownInjectionBus(bus.clone()))?;
        d[*i] -= s;
    }
    Ok(d)
}

/// One-shot solve: validates topology, compiles the tree and sweeps.
pub fn solve_radial(
    net: &Network,
    states: &SwitchStates,
    taps: &[i32],
    loads: &BusPower,
    gens: &BusPower,
    opts: &SolverOptions,
) -> Result<PowerFlowSolution, PowerFlowError> {
    if taps.len() != net.svrs.len() {
        return Err(GridError::invalid("taps", format!("expected {} entries, got {}", net.svrs.len(), taps.len())).into());
    }
    let ratios = net
        .svrs
        .iter()
        .zip(taps)
        .map(|(r, &t)| r.ratio(t))
        .collect::<Result<Vec<_>, _>>()?;
    let model = RadialModel::compile(net, states)?;
    let demand = net_demand(net, loads, gens)?;
    model.solve(&ratios, &demand, opts)
}
