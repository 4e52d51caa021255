//! Radiality and energization checks for a given set of switch states.
//!
//! Islands are reported per feeder: a substation bus is shared by every
//! feeder leaving it, so two feeders hanging off one source are two islands,
//! while a tie that closes a path back to the same source is a loop.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::GridError;
use crate::grid::{Network, SwitchState, SwitchStates};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Island {
    /// Buses in declaration order. A source bus appears in every island it feeds.
    pub buses: Vec<String>,
    /// Id of the feeding source, if any.
    pub source: Option<String>,
    pub energized: bool,
    pub radial: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TopologyReport {
    pub islands: Vec<Island>,
    pub de_energized_buses: Vec<String>,
}

impl TopologyReport {
    pub fn energized_islands(&self) -> impl Iterator<Item = &Island> {
        self.islands.iter().filter(|i| i.energized)
    }

    pub fn is_energized(&self, bus: &str) -> bool {
        !self.de_energized_buses.iter().any(|b| b == bus)
    }
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns false when both ends were already connected.
    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi] = lo;
        true
    }
}

/// A closed element between two buses, by bus index.
pub(crate) struct ClosedEdge<'a> {
    pub id: &'a str,
    pub a: usize,
    pub b: usize,
}

pub(crate) fn bus_index(net: &Network) -> BTreeMap<&str, usize> {
    net.buses
        .iter()
        .enumerate()
        .map(|(i, b)| (b.id.as_str(), i))
        .collect()
}

/// Resolves effective switch states: entries in `states` override the
/// network's stored states.
pub(crate) fn effective_state(
    net: &Network,
    states: &SwitchStates,
) -> Result<Vec<SwitchState>, GridError> {
    for (id, _) in states.iter() {
        if net.switch(id).is_none() {
            return Err(GridError::UnknownSwitch(id.to_string()));
        }
    }
    Ok(net
        .switches
        .iter()
        .map(|s| states.get(&s.id).unwrap_or(s.state))
        .collect())
}

pub(crate) fn closed_edges<'a>(
    net: &'a Network,
    idx: &BTreeMap<&str, usize>,
    switch_state: &[SwitchState],
) -> Result<Vec<ClosedEdge<'a>>, GridError> {
    let lookup = |id: &str| idx.get(id).copied().ok_or_else(|| GridError::UnknownBus(id.to_string()));
    let mut edges = Vec::new();
    for l in &net.lines {
        edges.push(ClosedEdge {
            id: &l.id,
            a: lookup(&l.from)?,
            b: lookup(&l.to)?,
        });
    }
    for (s, st) in net.switches.iter().zip(switch_state) {
        if st.is_closed() {
            edges.push(ClosedEdge {
                id: &s.id,
                a: lookup(&s.from)?,
                b: lookup(&s.to)?,
            });
        }
    }
    for r in &net.svrs {
        edges.push(ClosedEdge {
            id: &r.id,
            a: lookup(&r.source_bus)?,
            b: lookup(&r.load_bus)?,
        });
    }
    Ok(edges)
}

pub fn validate_topology(net: &Network, states: &SwitchStates) -> Result<TopologyReport, GridError> {
    let idx = bus_index(net);
    let n = net.buses.len();
    let sw = effective_state(net, states)?;
    let edges = closed_edges(net, &idx, &sw)?;

    let mut source_at: Vec<Option<usize>> = vec![None; n];
    for (k, s) in net.sources.iter().enumerate() {
        let b = *idx.get(s.bus.as_str()).ok_or_else(|| GridError::UnknownBus(s.bus.clone()))?;
        source_at[b] = Some(k);
    }

    // Whole-graph components: loops and source counts.
    let mut whole = UnionFind::new(n);
    let mut loop_elements = Vec::new();
    for e in &edges {
        if !whole.union(e.a, e.b) {
            loop_elements.push(e);
        }
    }
    let mut sources_in: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (b, s) in source_at.iter().enumerate() {
        if let Some(k) = s {
            sources_in.entry(whole.find(b)).or_default().push(*k);
        }
    }
    for srcs in sources_in.values() {
        if srcs.len() > 1 {
            return Err(GridError::MultiSource {
                sources: srcs.iter().map(|&k| net.sources[k].id.clone()).collect(),
            });
        }
    }
    let mut looped_components = Vec::new();
    for e in &loop_elements {
        let root = whole.find(e.a);
        if sources_in.contains_key(&root) {
            return Err(GridError::Loop {
                element: e.id.to_string(),
            });
        }
        looped_components.push(root);
    }

    // Feeder islands: same graph, but source buses are not merged through.
    let mut split = UnionFind::new(n);
    for e in &edges {
        if source_at[e.a].is_none() && source_at[e.b].is_none() {
            split.union(e.a, e.b);
        }
    }
    // island root -> set of attached source buses
    let mut attached: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for e in &edges {
        match (source_at[e.a].is_some(), source_at[e.b].is_some()) {
            (true, false) => attached.entry(split.find(e.b)).or_default().push(e.a),
            (false, true) => attached.entry(split.find(e.a)).or_default().push(e.b),
            _ => {}
        }
    }

    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for b in 0..n {
        if source_at[b].is_none() {
            members.entry(split.find(b)).or_default().push(b);
        }
    }

    let mut islands: Vec<(usize, Island)> = Vec::new();
    let mut energized = vec![false; n];
    for (root, mut buses) in members {
        let src_buses = attached.remove(&root).unwrap_or_default();
        let source = src_buses.first().map(|&b| net.sources[source_at[b].unwrap()].id.clone());
        let is_energized = source.is_some();
        buses.extend(src_buses.iter().copied());
        buses.sort_unstable();
        buses.dedup();
        let radial = !looped_components.contains(&whole.find(buses[0]));
        if is_energized {
            for &b in &buses {
                energized[b] = true;
            }
        }
        islands.push((
            buses[0],
            Island {
                buses: buses.iter().map(|&b| net.buses[b].id.clone()).collect(),
                source,
                energized: is_energized,
                radial,
            },
        ));
    }
    // Source buses without any closed element form their own island.
    for b in 0..n {
        if let Some(k) = source_at[b] {
            if !energized[b] {
                energized[b] = true;
                islands.push((
                    b,
                    Island {
                        buses: vec![net.buses[b].id.clone()],
                        source: Some(net.sources[k].id.clone()),
                        energized: true,
                        radial: true,
                    },
                ));
            }
        }
    }
    islands.sort_by_key(|(first, _)| *first);

    Ok(TopologyReport {
        islands: islands.into_iter().map(|(_, i)| i).collect(),
        de_energized_buses: (0..n)
            .filter(|&b| !energized[b])
            .map(|b| net.buses[b].id.clone())
            .collect(),
    })
}
