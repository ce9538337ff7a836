//! Graph environment: nodes at planar locations, undirected edges, well-mixed
//! infection inside each node and walks constrained to edges.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::epi::{infected_by, transmissibility, AgentEpi, EpiParams, MacroClass, ModelKind};
use crate::geom::{BBox, Point};
use crate::{Error, Result};

/// Uniform-grid index answering nearest-node queries.
#[derive(Clone, Debug)]
struct NodeGrid {
    origin: Point,
    cell_w: f64,
    cell_h: f64,
    nx: usize,
    ny: usize,
    cells: Vec<Vec<usize>>,
}

const GRID_THRESHOLD: usize = 32;

impl NodeGrid {
    fn build(nodes: &[Point]) -> Option<NodeGrid> {
        if nodes.len() < GRID_THRESHOLD {
            return None;
        }
        let b = BBox::of_points(nodes)?;
        let side = ((nodes.len() as f64 / 2.0).sqrt().ceil() as usize).max(1);
        let w = b.width().max(1e-9);
        let h = b.height().max(1e-9);
        let mut grid = NodeGrid {
            origin: b.min,
            cell_w: w / side as f64,
            cell_h: h / side as f64,
            nx: side,
            ny: side,
            cells: vec![Vec::new(); side * side],
        };
        for (id, p) in nodes.iter().enumerate() {
            let (cx, cy) = grid.cell_of(*p);
            grid.cells[cy * grid.nx + cx].push(id);
        }
        Some(grid)
    }

    fn cell_of(&self, p: Point) -> (usize, usize) {
        let fx = ((p.x - self.origin.x) / self.cell_w).floor();
        let fy = ((p.y - self.origin.y) / self.cell_h).floor();
        let clamp = |f: f64, n: usize| {
            if f.is_nan() || f < 0.0 {
                0
            } else {
                (f as usize).min(n - 1)
            }
        };
        (clamp(fx, self.nx), clamp(fy, self.ny))
    }

    fn nearest(&self, nodes: &[Point], p: Point) -> usize {
        let (cx, cy) = self.cell_of(p);
        let cell = self.cell_w.min(self.cell_h);
        let mut best = (f64::INFINITY, usize::MAX);
        let max_ring = self.nx.max(self.ny);
        for ring in 0..=max_ring {
            let (x0, x1) = (cx as i64 - ring as i64, cx as i64 + ring as i64);
            let (y0, y1) = (cy as i64 - ring as i64, cy as i64 + ring as i64);
            for gy in y0..=y1 {
                for gx in x0..=x1 {
                    let on_ring = gx == x0 || gx == x1 || gy == y0 || gy == y1;
                    if !on_ring || gx < 0 || gy < 0 || gx >= self.nx as i64 || gy >= self.ny as i64
                    {
                        continue;
                    }
                    for &id in &self.cells[gy as usize * self.nx + gx as usize] {
                        let d = nodes[id].dist_sq(p);
                        if d < best.0 || (d == best.0 && id < best.1) {
                            best = (d, id);
                        }
                    }
                }
            }
            // every unscanned node is at least `ring * cell` away
            let bound = ring as f64 * cell;
            if best.1 != usize::MAX && best.0.sqrt() < bound {
                break;
            }
        }
        best.1
    }
}

/// Undirected graph over planar node locations; ids are dense `0..n`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "GraphRecord", into = "GraphRecord")]
pub struct SpatialGraph {
    nodes: Vec<Point>,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
    grid: Option<NodeGrid>,
}

impl PartialEq for SpatialGraph {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.edges == other.edges
    }
}

#[derive(Serialize, Deserialize)]
struct GraphRecord {
    nodes: Vec<Point>,
    edges: Vec<(usize, usize)>,
}

impl TryFrom<GraphRecord> for SpatialGraph {
    type Error = Error;
    fn try_from(r: GraphRecord) -> Result<Self> {
        SpatialGraph::new(r.nodes, r.edges)
    }
}

impl From<SpatialGraph> for GraphRecord {
    fn from(g: SpatialGraph) -> Self {
        GraphRecord {
            nodes: g.nodes,
            edges: g.edges,
        }
    }
}

impl SpatialGraph {
    /// Edges may be given in either orientation; duplicates are rejected.
    pub fn new(nodes: Vec<Point>, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::contract("graph needs at least one node"));
        }
        let n = nodes.len();
        let mut canon: Vec<(usize, usize)> = Vec::new();
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::contract(format!(
                    "edge ({u}, {v}) references a missing node"
                )));
            }
            if u == v {
                return Err(Error::contract(format!("self-loop at node {u}")));
            }
            canon.push((u.min(v), u.max(v)));
        }
        canon.sort_unstable();
        if canon.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::contract("duplicate edge"));
        }
        let mut adjacency = vec![Vec::new(); n];
        for &(u, v) in &canon {
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        for a in &mut adjacency {
            a.sort_unstable();
        }
        let grid = NodeGrid::build(&nodes);
        Ok(SpatialGraph {
            nodes,
            edges: canon,
            adjacency,
            grid,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    /// Edges as `(u, v)` with `u < v`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Neighbors of `v`, ascending.
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adjacency[u].binary_search(&v).is_ok()
    }

    /// Closest node to `p`; ties go to the lowest id.
    pub fn nearest_node(&self, p: Point) -> usize {
        match &self.grid {
            Some(g) => g.nearest(&self.nodes, p),
            None => nearest_brute(&self.nodes, p),
        }
    }
}

fn nearest_brute(nodes: &[Point], p: Point) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (id, n) in nodes.iter().enumerate() {
        let d = n.dist_sq(p);
        if d < best.0 {
            best = (d, id);
        }
    }
    best.1
}

pub fn nearest_node(graph: &SpatialGraph, p: Point) -> usize {
    graph.nearest_node(p)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphAgent {
    pub epi: AgentEpi,
    pub node: usize,
}

/// A walk decision on the graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Move {
    Stay,
    To(usize),
}

/// Resident counts per node and macro-class.
#[derive(Clone, Debug, PartialEq)]
pub struct Occupancy {
    counts: Vec<[u32; 3]>,
}

impl Occupancy {
    pub fn tally<I>(n_nodes: usize, residents: I) -> Occupancy
    where
        I: IntoIterator<Item = (usize, MacroClass)>,
    {
        let mut counts = vec![[0u32; 3]; n_nodes];
        for (node, class) in residents {
            counts[node][class.index()] += 1;
        }
        Occupancy { counts }
    }

    /// Class fractions at `node`, or zeros when it is empty.
    pub fn fractions(&self, node: usize) -> [f64; 3] {
        let c = self.counts[node];
        let total = (c[0] + c[1] + c[2]) as f64;
        if total == 0.0 {
            return [0.0; 3];
        }
        [
            c[0] as f64 / total,
            c[1] as f64 / total,
            c[2] as f64 / total,
        ]
    }
}

/// Everything a walk model may condition on for one agent at one step.
#[derive(Clone, Debug, PartialEq)]
pub struct WalkContext {
    pub class: MacroClass,
    /// Elapsed share of the infectious period (0 for non-infectious agents).
    pub clock_ratio: f64,
    pub node: usize,
    /// Class fractions at each neighbor, in ascending neighbor-id order.
    pub neighbor_occupancy: Vec<[f64; 3]>,
    /// t / T.
    pub t_frac: f64,
}

impl WalkContext {
    pub fn build(
        graph: &SpatialGraph,
        occupancy: &Occupancy,
        node: usize,
        class: MacroClass,
        clock_ratio: f64,
        t_frac: f64,
    ) -> WalkContext {
        WalkContext {
            class,
            clock_ratio,
            node,
            neighbor_occupancy: graph
                .neighbors(node)
                .iter()
                .map(|&w| occupancy.fractions(w))
                .collect(),
            t_frac,
        }
    }
}

/// A fitted stochastic walk policy.
pub trait WalkPolicy {
    /// Probabilities over `[stay, neighbors(ctx.node)...]`.
    fn distribution(&self, graph: &SpatialGraph, ctx: &WalkContext) -> Vec<f64>;

    fn next_move<R: Rng + ?Sized>(
        &self,
        graph: &SpatialGraph,
        ctx: &WalkContext,
        rng: &mut R,
    ) -> Move {
        let dist = self.distribution(graph, ctx);
        match sample_index(&dist, rng) {
            0 => Move::Stay,
            k => graph
                .neighbors(ctx.node)
                .get(k - 1)
                .map_or(Move::Stay, |&v| Move::To(v)),
        }
    }
}

/// Inverse-CDF draw from an (approximately) normalized distribution.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let total: f64 = probs.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, p) in probs.iter().enumerate() {
        if u < *p {
            return i;
        }
        u -= p;
    }
    // rounding: fall back to the last option with positive mass
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Counts of walk-model outputs that had to be coerced to "stay".
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct WalkDiagnostics {
    pub coerced: u64,
}

/// Moves one agent according to `policy`. Dead agents and agents on isolated
/// nodes stay; a proposed target that is not a neighbor is coerced to stay.
pub fn graph_walk_step<P: WalkPolicy, R: Rng + ?Sized>(
    agent: GraphAgent,
    graph: &SpatialGraph,
    policy: &P,
    ctx: &WalkContext,
    rng: &mut R,
    diag: &mut WalkDiagnostics,
) -> GraphAgent {
    if agent.epi.state.is_dead() || graph.neighbors(agent.node).is_empty() {
        return agent;
    }
    match policy.next_move(graph, ctx, rng) {
        Move::Stay => agent,
        Move::To(v) if graph.has_edge(agent.node, v) => GraphAgent { node: v, ..agent },
        Move::To(_) => {
            diag.coerced += 1;
            agent
        }
    }
}

/// Contact scaling inside a node with `residents` living agents.
pub fn node_contact_scale(dt: f64, residents: usize) -> f64 {
    let others = residents.saturating_sub(1).max(1) as f64;
    1.0 - (-dt / others).exp()
}

/// Well-mixed infection inside every node.
///
/// Each (susceptible, infectious) pair of living co-residents gets a contact
/// trial with probability `beta * node_contact_scale(dt, N_v)`. Sources are
/// the agents infectious when the phase starts. Targets are visited by
/// ascending id; for a single target the independent trials collapse into one
/// draw with the combined escape probability, except in the two-strain model
/// where the first successful source (by ascending id) decides the strain.
/// Returns the number of new infections.
pub fn node_interaction_step<R: Rng + ?Sized>(
    pop: &mut [GraphAgent],
    n_nodes: usize,
    params: &EpiParams,
    dt: f64,
    rng: &mut R,
) -> usize {
    let mut by_node: Vec<Vec<usize>> = vec![Vec::new(); n_nodes];
    for (id, a) in pop.iter().enumerate() {
        if !a.epi.state.is_dead() {
            by_node[a.node].push(id);
        }
    }
    let sequential = params.model() == ModelKind::TwoStrain;
    let mut infections = 0;
    for residents in &by_node {
        let sources: Vec<AgentEpi> = residents
            .iter()
            .map(|&i| pop[i].epi)
            .filter(|e| e.state.is_infectious())
            .collect();
        if sources.is_empty() {
            continue;
        }
        let p_scale = node_contact_scale(dt, residents.len());
        // distinct source kinds with multiplicities (state and age decide transmissibility)
        let mut kinds: Vec<(AgentEpi, i32)> = Vec::new();
        if !sequential {
            for s in &sources {
                let key = AgentEpi { clock: 0, ..*s };
                match kinds.iter_mut().find(|(k, _)| *k == key) {
                    Some((_, n)) => *n += 1,
                    None => kinds.push((key, 1)),
                }
            }
        }
        for &id in residents {
            let target = pop[id].epi;
            if target.state.is_infectious() {
                continue;
            }
            let infected = if sequential {
                sources.iter().find_map(|s| {
                    let beta = transmissibility(&target, s, params)?;
                    (rng.random::<f64>() < beta * p_scale)
                        .then(|| infected_by(&target, s, params, rng))
                })
            } else {
                let mut escape = 1.0;
                let mut any = None;
                for (k, n) in &kinds {
                    if let Some(beta) = transmissibility(&target, k, params) {
                        escape *= (1.0 - beta * p_scale).powi(*n);
                        any.get_or_insert(*k);
                    }
                }
                match any {
                    Some(src) if rng.random::<f64>() >= escape => {
                        Some(infected_by(&target, &src, params, rng))
                    }
                    _ => None,
                }
            };
            if let Some(e) = infected {
                pop[id].epi = e;
                infections += 1;
            }
        }
    }
    infections
}
