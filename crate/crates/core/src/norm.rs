//! Continuous 2-D environment made of a union of disks, the spawn-pulled random
//! walk, and distance-based infection.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::epi::{contact_infect, AgentEpi, EpiParams};
use crate::geom::{BBox, Point};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "CircleRecord", into = "CircleRecord")]
pub struct Circle {
    pub center: Point,
    pub radius: f64,
}

/// Flat on-disk form of a circle.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CircleRecord {
    center_x: f64,
    center_y: f64,
    radius: f64,
}

impl From<CircleRecord> for Circle {
    fn from(r: CircleRecord) -> Self {
        Circle::new(Point::new(r.center_x, r.center_y), r.radius)
    }
}

impl From<Circle> for CircleRecord {
    fn from(c: Circle) -> Self {
        CircleRecord {
            center_x: c.center.x,
            center_y: c.center.y,
            radius: c.radius,
        }
    }
}

impl Circle {
    pub const fn new(center: Point, radius: f64) -> Self {
        Circle { center, radius }
    }

    pub fn contains(&self, p: Point) -> bool {
        self.center.dist_sq(p) <= self.radius * self.radius
    }

    fn overlaps(&self, other: &Circle) -> bool {
        let r = self.radius + other.radius;
        self.center.dist_sq(other.center) <= r * r
    }
}

/// Union of closed disks in the plane.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Circle>", into = "Vec<Circle>")]
pub struct ContinuousEnv {
    circles: Vec<Circle>,
    bbox: BBox,
}

impl TryFrom<Vec<Circle>> for ContinuousEnv {
    type Error = Error;
    fn try_from(circles: Vec<Circle>) -> Result<Self> {
        ContinuousEnv::new(circles)
    }
}

impl From<ContinuousEnv> for Vec<Circle> {
    fn from(env: ContinuousEnv) -> Self {
        env.circles
    }
}

impl ContinuousEnv {
    pub fn new(circles: Vec<Circle>) -> Result<Self> {
        if circles.is_empty() {
            return Err(Error::InvalidParams(
                "environment needs at least one circle".into(),
            ));
        }
        for (i, c) in circles.iter().enumerate() {
            if !(c.radius > 0.0) || !c.center.x.is_finite() || !c.center.y.is_finite() {
                return Err(Error::InvalidParams(format!("circle {i} is degenerate")));
            }
            if circles[..i].contains(c) {
                return Err(Error::InvalidParams(format!(
                    "circle {i} duplicates an earlier one"
                )));
            }
        }
        let bbox = circles
            .iter()
            .map(|c| BBox {
                min: Point::new(c.center.x - c.radius, c.center.y - c.radius),
                max: Point::new(c.center.x + c.radius, c.center.y + c.radius),
            })
            .reduce(|a, b| BBox {
                min: Point::new(a.min.x.min(b.min.x), a.min.y.min(b.min.y)),
                max: Point::new(a.max.x.max(b.max.x), a.max.y.max(b.max.y)),
            })
            .expect("non-empty");
        Ok(ContinuousEnv { circles, bbox })
    }

    pub fn circles(&self) -> &[Circle] {
        &self.circles
    }

    pub fn bbox(&self) -> BBox {
        self.bbox
    }

    /// True iff `p` lies in some closed disk.
    pub fn contains(&self, p: Point) -> bool {
        self.circles.iter().any(|c| c.contains(p))
    }

    /// Whether the disks form a single overlapping cluster.
    pub fn is_connected(&self) -> bool {
        let n = self.circles.len();
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                if !seen[j] && self.circles[i].overlaps(&self.circles[j]) {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Uniform point inside the union, by rejection from the bounding box.
    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        let b = self.bbox;
        loop {
            let p = Point::new(
                rng.random_range(b.min.x..=b.max.x),
                rng.random_range(b.min.y..=b.max.y),
            );
            if self.contains(p) {
                return p;
            }
        }
    }
}

/// Ranges for random environments.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvGenParams {
    /// Inclusive range for the number of circles.
    pub n_circles: (u32, u32),
    pub radius: (f64, f64),
    /// Side of the square in which centers are drawn, meters.
    pub extent: f64,
    /// Rejected center draws allowed per circle.
    pub max_attempts: u32,
}

impl Default for EnvGenParams {
    fn default() -> Self {
        EnvGenParams {
            n_circles: (1, 40),
            radius: (2.0, 25.0),
            extent: 100.0,
            max_attempts: 100_000,
        }
    }
}

/// Draws a random connected union of circles.
///
/// Circle count and radii are uniform in their ranges, centers uniform in the
/// extent square. A center whose disk would not touch the disks placed so far
/// (or that duplicates one exactly) is redrawn, so the union is always
/// path-connected.
pub fn generate_synthetic_env<R: Rng + ?Sized>(
    rng: &mut R,
    gp: &EnvGenParams,
) -> Result<ContinuousEnv> {
    let (lo, hi) = gp.n_circles;
    if lo < 1 || lo > hi || !(gp.radius.0 > 0.0) || gp.radius.0 > gp.radius.1 || !(gp.extent > 0.0)
    {
        return Err(Error::InvalidParams(format!(
            "bad environment ranges: {gp:?}"
        )));
    }
    let n = rng.random_range(lo..=hi) as usize;
    let mut circles: Vec<Circle> = Vec::with_capacity(n);
    for i in 0..n {
        let radius = rng.random_range(gp.radius.0..=gp.radius.1);
        let mut placed = false;
        for _ in 0..gp.max_attempts {
            let center = Point::new(
                rng.random_range(0.0..=gp.extent),
                rng.random_range(0.0..=gp.extent),
            );
            let c = Circle::new(center, radius);
            let touches = circles.is_empty() || circles.iter().any(|o| o.overlaps(&c));
            if touches && !circles.contains(&c) {
                circles.push(c);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::Generation(format!(
                "circle {i} of {n} (radius {radius:.2}) found no connected placement in {} draws; \
                 extent {} may be too large for the radius range",
                gp.max_attempts, gp.extent
            )));
        }
    }
    ContinuousEnv::new(circles)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WalkParams {
    /// Random-walk step length, meters per step.
    pub speed: f64,
    /// Pull cutoff distance.
    pub delta: f64,
    /// Pull coefficient, square meters per step.
    pub kappa: f64,
    /// Floor on the distance used in the pull magnitude.
    pub d_min: f64,
    /// Interaction radius.
    pub r_int: f64,
}

impl Default for WalkParams {
    fn default() -> Self {
        WalkParams {
            speed: 1.0,
            delta: 10.0,
            kappa: 1.0,
            d_min: 0.1,
            r_int: 2.0,
        }
    }
}

impl WalkParams {
    pub fn validate(&self) -> Result<()> {
        let all_positive = [self.speed, self.delta, self.kappa, self.d_min, self.r_int]
            .iter()
            .all(|v| *v > 0.0 && v.is_finite());
        if !all_positive || self.d_min >= self.delta {
            return Err(Error::InvalidParams(format!(
                "bad walk parameters: {self:?}"
            )));
        }
        Ok(())
    }

    /// Pull toward `spawn` from `pos`: magnitude kappa / max(d, d_min) for
    /// 0 < d <= delta, zero otherwise.
    pub fn pull(&self, pos: Point, spawn: Point) -> Point {
        let to_spawn = spawn - pos;
        let d = to_spawn.norm();
        if d == 0.0 || d > self.delta {
            return Point::default();
        }
        to_spawn * (self.kappa / d.max(self.d_min) / d)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpatialAgent {
    pub epi: AgentEpi,
    pub pos: Point,
    pub spawn: Point,
}

impl SpatialAgent {
    pub fn at(epi: AgentEpi, pos: Point) -> Self {
        SpatialAgent {
            epi,
            pos,
            spawn: pos,
        }
    }
}

/// One walk step: unit-speed random direction plus the spawn pull. Proposals
/// outside the environment are rejected and the agent stays put. Dead agents
/// never move.
pub fn pull_random_walk_step<R: Rng + ?Sized>(
    agent: SpatialAgent,
    env: &ContinuousEnv,
    wp: &WalkParams,
    rng: &mut R,
) -> SpatialAgent {
    if agent.epi.state.is_dead() {
        return agent;
    }
    let angle = rng.random_range(0.0..std::f64::consts::TAU);
    let step = Point::new(angle.cos(), angle.sin()) * wp.speed;
    let proposal = agent.pos + step + wp.pull(agent.pos, agent.spawn);
    if env.contains(proposal) {
        SpatialAgent {
            pos: proposal,
            ..agent
        }
    } else {
        agent
    }
}

/// All index pairs `(i, j)`, `i < j`, at distance `<= r`, sorted.
///
/// `skip[i] == true` excludes point `i`.
pub fn pairs_within(points: &[Point], skip: &[bool], r: f64) -> Vec<(usize, usize)> {
    let cell = |p: Point| ((p.x / r).floor() as i64, (p.y / r).floor() as i64);
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, p) in points.iter().enumerate() {
        if !skip[i] {
            grid.entry(cell(*p)).or_default().push(i);
        }
    }
    let r2 = r * r;
    let mut out = Vec::new();
    for (i, p) in points.iter().enumerate() {
        if skip[i] {
            continue;
        }
        let (cx, cy) = cell(*p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(bucket) = grid.get(&(cx + dx, cy + dy)) {
                    for &j in bucket {
                        if j > i && p.dist_sq(points[j]) <= r2 {
                            out.push((i, j));
                        }
                    }
                }
            }
        }
    }
    out.sort_unstable();
    out
}

/// A successful transmission, for instrumentation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InfectionEvent {
    pub target: usize,
    pub source: usize,
}

/// Distance-based infection. Every pair within `r_int` gets an independent
/// contact trial with the raw per-contact probability. Infectiousness is read
/// from the start of the phase, so agents infected during it do not transmit
/// until the next step. Targets are visited by ascending id and, for each,
/// partners by ascending id.
pub fn norm_interaction_step<R: Rng + ?Sized>(
    pop: &mut [SpatialAgent],
    params: &EpiParams,
    wp: &WalkParams,
    rng: &mut R,
) -> Vec<InfectionEvent> {
    let points: Vec<Point> = pop.iter().map(|a| a.pos).collect();
    let skip: Vec<bool> = pop.iter().map(|a| a.epi.state.is_dead()).collect();
    let snapshot: Vec<AgentEpi> = pop.iter().map(|a| a.epi).collect();
    if !snapshot.iter().any(|a| a.state.is_infectious()) {
        return Vec::new();
    }
    let mut partners: Vec<Vec<usize>> = vec![Vec::new(); pop.len()];
    for (i, j) in pairs_within(&points, &skip, wp.r_int) {
        if snapshot[j].state.is_infectious() {
            partners[i].push(j);
        }
        if snapshot[i].state.is_infectious() {
            partners[j].push(i);
        }
    }
    let mut events = Vec::new();
    for target in 0..pop.len() {
        if snapshot[target].state.is_infectious() {
            continue;
        }
        partners[target].sort_unstable();
        for &source in &partners[target] {
            let before = pop[target].epi;
            let (after, _) = contact_infect(before, snapshot[source], params, 1.0, rng);
            if after != before {
                pop[target].epi = after;
                events.push(InfectionEvent { target, source });
                break;
            }
        }
    }
    events
}
