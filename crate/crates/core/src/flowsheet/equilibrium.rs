use crate::components::{mix_into, WasteStream};
use crate::error::{Error, Result};
use crate::units::StaticUnit;

use super::system::{Sink, Source, SystemGraph, UnitKind};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumOptions {
    /// Relative tolerance on tear-stream flows and component mass flows.
    pub rtol: f64,
    pub max_iter: usize,
}

impl Default for EquilibriumOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Equilibrium {
    /// One value per stream, in registration order.
    pub streams: Vec<WasteStream>,
    /// Torn stream indices.
    pub tears: Vec<usize>,
    pub iterations: usize,
}

/// Sequential-modular solution of a flowsheet of static units. Each cycle is
/// torn at its lowest-index stream and closed by successive substitution.
pub fn converge_equilibrium(graph: &SystemGraph, opts: EquilibriumOptions) -> Result<Equilibrium> {
    let (inlets, outlets) = graph.wiring()?;
    let units = graph.units();
    let mut statics: Vec<&StaticUnit> = Vec::with_capacity(units.len());
    for (id, k) in units {
        match k {
            UnitKind::Static(s) => {
                s.validate()?;
                statics.push(s);
            }
            _ => return Err(Error::Graph(format!("unit `{id}` is not static; equilibrium mode needs static units only"))),
        }
    }
    let streams = graph.streams();
    let tears = find_tears(graph);
    let order = topological(graph, &inlets, &tears)?;

    let components = graph.components().clone();
    let nc = components.len();
    let m = streams.len();
    let mut flow = vec![0.0; m];
    let mut conc = vec![0.0; m * nc];
    for (s, e) in streams.iter().enumerate() {
        if let Source::Feed(f) = e.from {
            let feed = &graph.feeds()[f].1;
            flow[s] = feed.flow;
            conc[s * nc..(s + 1) * nc].copy_from_slice(feed.concentrations());
        }
    }
    let feed_flow: f64 = graph.feeds().iter().map(|f| f.1.flow).sum();
    let feed_mass: f64 = graph
        .feeds()
        .iter()
        .map(|f| f.1.concentrations().iter().map(|c| c.abs() * f.1.flow).sum::<f64>())
        .sum();
    let flow_floor = 1e-9 * feed_flow.max(f64::MIN_POSITIVE);
    let mass_floor = 1e-9 * feed_mass.max(f64::MIN_POSITIVE);

    let mut mixed = vec![0.0; nc];
    let mut iterations = 0;
    loop {
        iterations += 1;
        let old: Vec<(f64, Vec<f64>)> = tears
            .iter()
            .map(|&s| (flow[s], conc[s * nc..(s + 1) * nc].to_vec()))
            .collect();
        for &u in &order {
            let q = mix_into(inlets[u].iter().map(|&s| (flow[s], &conc[s * nc..(s + 1) * nc])), &mut mixed);
            statics[u].transform(&components, &mut mixed);
            for (port, &s) in outlets[u].iter().enumerate() {
                flow[s] = match statics[u] {
                    StaticUnit::Splitter(f) => q * f[port],
                    _ => q,
                };
                conc[s * nc..(s + 1) * nc].copy_from_slice(&mixed);
            }
        }
        let converged = tears.iter().zip(&old).all(|(&s, (q_old, c_old))| {
            let q_new = flow[s];
            let close = |a: f64, b: f64, floor: f64| (a - b).abs() <= opts.rtol * a.abs().max(b.abs()).max(floor);
            close(q_new, *q_old, flow_floor)
                && conc[s * nc..(s + 1) * nc]
                    .iter()
                    .zip(c_old)
                    .all(|(c, co)| close(c * q_new, co * q_old, mass_floor))
        });
        if converged {
            break;
        }
        if iterations >= opts.max_iter {
            return Err(Error::IterationLimit(opts.max_iter));
        }
    }
    let values = (0..m)
        .map(|s| WasteStream::new(components.clone(), conc[s * nc..(s + 1) * nc].to_vec(), flow[s]))
        .collect::<Result<Vec<_>>>()?;
    Ok(Equilibrium {
        streams: values,
        tears,
        iterations,
    })
}

/// Unit-to-unit stream edges as (stream, from, to).
fn unit_edges(graph: &SystemGraph) -> Vec<(usize, usize, usize)> {
    graph
        .streams()
        .iter()
        .enumerate()
        .filter_map(|(s, e)| match (e.from, e.to) {
            (Source::Unit { unit, .. }, Sink::Unit(to)) => Some((s, unit, to)),
            _ => None,
        })
        .collect()
}

fn find_tears(graph: &SystemGraph) -> Vec<usize> {
    let n = graph.units().len();
    let edges = unit_edges(graph);
    let mut tears: Vec<usize> = Vec::new();
    while let Some(cycle) = find_cycle(n, edges.iter().filter(|(s, _, _)| !tears.contains(s))) {
        tears.push(*cycle.iter().min().expect("cycles are non-empty"));
    }
    tears.sort_unstable();
    tears
}

/// Streams forming one directed cycle, if any.
fn find_cycle<'a>(n: usize, edges: impl Iterator<Item = &'a (usize, usize, usize)>) -> Option<Vec<usize>> {
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for &(s, a, b) in edges {
        adj[a].push((s, b));
    }
    // 0 unvisited, 1 on stack, 2 finished
    let mut mark = vec![0u8; n];
    let mut via: Vec<Option<(usize, usize)>> = vec![None; n];
    for root in 0..n {
        if mark[root] != 0 {
            continue;
        }
        let mut stack = vec![(root, 0usize)];
        mark[root] = 1;
        while let Some(top) = stack.last_mut() {
            let u = top.0;
            if let Some(&(s, v)) = adj[u].get(top.1) {
                top.1 += 1;
                match mark[v] {
                    0 => {
                        mark[v] = 1;
                        via[v] = Some((s, u));
                        stack.push((v, 0));
                    }
                    1 => {
                        let mut cycle = vec![s];
                        let mut w = u;
                        while w != v {
                            let (s2, p) = via[w].expect("on the DFS path");
                            cycle.push(s2);
                            w = p;
                        }
                        return Some(cycle);
                    }
                    _ => {}
                }
            } else {
                mark[u] = 2;
                stack.pop();
            }
        }
    }
    None
}

fn topological(graph: &SystemGraph, inlets: &[Vec<usize>], tears: &[usize]) -> Result<Vec<usize>> {
    let n = graph.units().len();
    let streams = graph.streams();
    let mut done = vec![false; n];
    let mut order = Vec::with_capacity(n);
    loop {
        let before = order.len();
        for u in 0..n {
            if done[u] {
                continue;
            }
            let ready = inlets[u].iter().all(|&s| {
                tears.contains(&s)
                    || match streams[s].from {
                        Source::Unit { unit, .. } => done[unit],
                        Source::Feed(_) => true,
                    }
            });
            if ready {
                done[u] = true;
                order.push(u);
            }
        }
        if order.len() == n {
            return Ok(order);
        }
        if order.len() == before {
            return Err(Error::Graph("could not order units after tearing".into()));
        }
    }
}
