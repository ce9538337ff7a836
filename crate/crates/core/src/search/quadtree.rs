use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::geom::{BBox, Point};
use crate::graph::SpatialGraph;
use crate::sim::PositionLog;
use crate::{Error, Result};

/// Axis-aligned square `[min, max]`. Children split at the exact midpoint, so
/// siblings share bit-identical boundaries.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub min: Point,
    pub max: Point,
}

impl Cell {
    pub fn square(min: Point, size: f64) -> Cell {
        Cell {
            min,
            max: Point::new(min.x + size, min.y + size),
        }
    }

    /// The square with corner `bbox.min` and side `max(width, height)`.
    /// Degenerate boxes get side 1.
    pub fn enclosing(bbox: &BBox) -> Cell {
        let size = bbox.width().max(bbox.height());
        Cell::square(bbox.min, if size > 0.0 { size } else { 1.0 })
    }

    pub fn size(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn center(&self) -> Point {
        Point::new(
            0.5 * (self.min.x + self.max.x),
            0.5 * (self.min.y + self.max.y),
        )
    }

    pub fn area(&self) -> f64 {
        (self.max.x - self.min.x) * (self.max.y - self.min.y)
    }

    /// Quadrant `q` in NW, NE, SW, SE order.
    pub fn child(&self, q: usize) -> Cell {
        let c = self.center();
        let (x0, x1) = if q % 2 == 0 {
            (self.min.x, c.x)
        } else {
            (c.x, self.max.x)
        };
        let (y0, y1) = if q < 2 {
            (c.y, self.max.y)
        } else {
            (self.min.y, c.y)
        };
        Cell {
            min: Point::new(x0, y0),
            max: Point::new(x1, y1),
        }
    }

    /// Half-open membership `[min, max)`, closed on any side shared with `root`.
    pub fn contains_in(&self, p: Point, root: &Cell) -> bool {
        let within =
            |v: f64, lo: f64, hi: f64, rhi: f64| v >= lo && (v < hi || (hi == rhi && v <= hi));
        within(p.x, self.min.x, self.max.x, root.max.x)
            && within(p.y, self.min.y, self.max.y, root.max.y)
    }
}

/// Quadrant of `p` inside `cell`. Points on a split line go east / north.
fn quadrant(cell: &Cell, p: Point) -> usize {
    let c = cell.center();
    match (p.x >= c.x, p.y >= c.y) {
        (false, true) => 0,
        (true, true) => 1,
        (false, false) => 2,
        (true, false) => 3,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadtreeNode {
    pub cell: Cell,
    pub depth: u32,
    /// Empty for a leaf, otherwise NW, NE, SW, SE.
    pub children: Vec<QuadtreeNode>,
}

impl QuadtreeNode {
    pub fn leaf(cell: Cell, depth: u32) -> Self {
        QuadtreeNode {
            cell,
            depth,
            children: Vec::new(),
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    /// Leaves in depth-first NW, NE, SW, SE order.
    pub fn leaves(&self) -> Vec<&QuadtreeNode> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(n) = stack.pop() {
            if n.is_leaf() {
                out.push(n);
            } else {
                stack.extend(n.children.iter().rev());
            }
        }
        out
    }

    /// Quadrant paths of all internal nodes.
    pub fn internal_paths(&self) -> Vec<Vec<u8>> {
        fn walk(n: &QuadtreeNode, path: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
            if n.is_leaf() {
                return;
            }
            out.push(path.clone());
            for (q, c) in n.children.iter().enumerate() {
                path.push(q as u8);
                walk(c, path, out);
                path.pop();
            }
        }
        let mut out = Vec::new();
        walk(self, &mut Vec::new(), &mut out);
        out
    }

    /// The leaf containing `p` by descent.
    pub fn locate(&self, p: Point) -> &QuadtreeNode {
        let mut n = self;
        while !n.is_leaf() {
            n = &n.children[quadrant(&n.cell, p)];
        }
        n
    }

    pub fn max_depth(&self) -> u32 {
        self.leaves().iter().map(|l| l.depth).max().unwrap_or(0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadtreeParams {
    pub r_int: f64,
    pub max_depth: u32,
    /// Fraction of trees that must split a cell for the average to split it.
    pub theta_split: f64,
    pub adjacency_augment: bool,
}

impl Default for QuadtreeParams {
    fn default() -> Self {
        QuadtreeParams {
            r_int: 2.0,
            max_depth: 12,
            theta_split: 0.5,
            adjacency_augment: true,
        }
    }
}

fn all_pairwise_within(points: &[Point], members: &[usize], r: f64) -> bool {
    let r2 = r * r;
    members.iter().enumerate().all(|(k, &i)| {
        members[k + 1..]
            .iter()
            .all(|&j| points[i].dist_sq(points[j]) <= r2)
    })
}

/// Whether a cell holding `members` may stay a leaf. A lone agent is
/// trivially pairwise within range, so it always stops.
fn stops(points: &[Point], members: &[usize], r_int: f64) -> bool {
    members.len() <= 1 || all_pairwise_within(points, members, r_int)
}

fn build(
    points: &[Point],
    members: Vec<usize>,
    cell: Cell,
    depth: u32,
    r_int: f64,
    max_depth: u32,
) -> QuadtreeNode {
    if depth >= max_depth || stops(points, &members, r_int) {
        return QuadtreeNode::leaf(cell, depth);
    }
    let mut parts: [Vec<usize>; 4] = Default::default();
    for i in members {
        parts[quadrant(&cell, points[i])].push(i);
    }
    let children = parts
        .into_iter()
        .enumerate()
        .map(|(q, m)| build(points, m, cell.child(q), depth + 1, r_int, max_depth))
        .collect();
    QuadtreeNode {
        cell,
        depth,
        children,
    }
}

/// Quadtree over `positions` with the given root cell.
pub fn build_quadtree_in(
    root: Cell,
    positions: &[Point],
    r_int: f64,
    max_depth: u32,
) -> Result<QuadtreeNode> {
    if let Some(p) = positions.iter().find(|&&p| !root.contains_in(p, &root)) {
        return Err(Error::contract(format!(
            "position ({}, {}) lies outside the root cell",
            p.x, p.y
        )));
    }
    Ok(build(
        positions,
        (0..positions.len()).collect(),
        root,
        0,
        r_int,
        max_depth,
    ))
}

/// Quadtree rooted at the squared bounding box of `positions`.
pub fn build_quadtree(positions: &[Point], r_int: f64, max_depth: u32) -> QuadtreeNode {
    let root = match BBox::of_points(positions) {
        Some(b) => Cell::enclosing(&b),
        None => Cell::square(Point::default(), 1.0),
    };
    build(
        positions,
        (0..positions.len()).collect(),
        root,
        0,
        r_int,
        max_depth,
    )
}

/// Re-derives, without the tree builder, whether `leaf` satisfies a stop
/// condition (or sits at `max_depth`).
pub fn leaf_satisfies_stop(
    leaf: &QuadtreeNode,
    root: &Cell,
    positions: &[Point],
    r_int: f64,
    max_depth: u32,
) -> bool {
    if leaf.depth >= max_depth {
        return true;
    }
    let inside: Vec<usize> = (0..positions.len())
        .filter(|&i| leaf.cell.contains_in(positions[i], root))
        .collect();
    match inside.len() {
        0 | 1 => true,
        _ => inside.iter().all(|&i| {
            inside
                .iter()
                .all(|&j| positions[i].dist(positions[j]) <= r_int)
        }),
    }
}

/// Majority vote over quadrant paths: a path splits in the output iff it is
/// internal in at least `theta_split` of the trees.
pub fn average_quadtrees(trees: &[QuadtreeNode], theta_split: f64) -> Result<QuadtreeNode> {
    let first = trees
        .first()
        .ok_or_else(|| Error::contract("no trees to average"))?;
    if trees.iter().any(|t| t.cell != first.cell) {
        return Err(Error::contract("trees have different root cells"));
    }
    let mut votes: HashMap<Vec<u8>, usize> = HashMap::new();
    for t in trees {
        for p in t.internal_paths() {
            *votes.entry(p).or_insert(0) += 1;
        }
    }
    let need = theta_split * trees.len() as f64;
    fn grow(
        cell: Cell,
        depth: u32,
        path: &mut Vec<u8>,
        votes: &HashMap<Vec<u8>, usize>,
        need: f64,
    ) -> QuadtreeNode {
        let count = votes.get(path).copied().unwrap_or(0);
        if count == 0 || (count as f64) < need {
            return QuadtreeNode::leaf(cell, depth);
        }
        let children = (0..4)
            .map(|q| {
                path.push(q as u8);
                let c = grow(cell.child(q), depth + 1, path, votes, need);
                path.pop();
                c
            })
            .collect();
        QuadtreeNode {
            cell,
            depth,
            children,
        }
    }
    Ok(grow(first.cell, 0, &mut Vec::new(), &votes, need))
}

fn side_adjacent(a: &Cell, b: &Cell, tol: f64) -> bool {
    let (amax, bmax) = (a.max, b.max);
    let overlap = |lo1: f64, hi1: f64, lo2: f64, hi2: f64| hi1.min(hi2) - lo1.max(lo2);
    let touch_x = (amax.x - b.min.x).abs() <= tol || (bmax.x - a.min.x).abs() <= tol;
    let touch_y = (amax.y - b.min.y).abs() <= tol || (bmax.y - a.min.y).abs() <= tol;
    (touch_x && overlap(a.min.y, amax.y, b.min.y, bmax.y) > tol)
        || (touch_y && overlap(a.min.x, amax.x, b.min.x, bmax.x) > tol)
}

/// Leaves become nodes at their cell centers. Leaf siblings are joined; with
/// `adjacency_augment`, side-adjacent leaves are joined as well.
pub fn quadtree_to_graph(tree: &QuadtreeNode, adjacency_augment: bool) -> Result<SpatialGraph> {
    let leaves = tree.leaves();
    let index: HashMap<*const QuadtreeNode, usize> = leaves
        .iter()
        .enumerate()
        .map(|(i, l)| (*l as *const QuadtreeNode, i))
        .collect();
    let mut edges = std::collections::BTreeSet::new();
    let mut stack = vec![tree];
    while let Some(n) = stack.pop() {
        let leaf_kids: Vec<usize> = n
            .children
            .iter()
            .filter(|c| c.is_leaf())
            .map(|c| index[&(c as *const QuadtreeNode)])
            .collect();
        for (k, &u) in leaf_kids.iter().enumerate() {
            for &v in &leaf_kids[k + 1..] {
                edges.insert((u.min(v), u.max(v)));
            }
        }
        stack.extend(n.children.iter().filter(|c| !c.is_leaf()));
    }
    if adjacency_augment {
        let tol = tree.cell.size() * 1e-9;
        for i in 0..leaves.len() {
            for j in i + 1..leaves.len() {
                if side_adjacent(&leaves[i].cell, &leaves[j].cell, tol) {
                    edges.insert((i, j));
                }
            }
        }
    }
    SpatialGraph::new(leaves.iter().map(|l| l.cell.center()).collect(), edges)
}

/// Average quadtree over every frame of the log, rooted at `bbox`.
pub fn quadtree_search(
    log: &PositionLog,
    bbox: &BBox,
    qp: &QuadtreeParams,
) -> Result<SpatialGraph> {
    if log.frames.is_empty() {
        return Err(Error::contract("empty position log"));
    }
    let root = Cell::enclosing(bbox);
    let trees = log
        .frames
        .iter()
        .map(|f| build_quadtree_in(root, f, qp.r_int, qp.max_depth))
        .collect::<Result<Vec<_>>>()?;
    let avg = average_quadtrees(&trees, qp.theta_split)?;
    quadtree_to_graph(&avg, qp.adjacency_augment)
}
