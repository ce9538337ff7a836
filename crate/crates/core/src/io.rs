//! CSV and JSON files: graphs, trajectories, logs and result tables.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::epi::{MacroClass, ModelKind};
use crate::geom::Point;
use crate::graph::SpatialGraph;
use crate::sim::{EpiLog, NodeLog, PositionLog, Trajectory};
use crate::{Error, Result};

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

pub fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path)?))
}

#[derive(Serialize, Deserialize)]
struct NodeRow {
    id: usize,
    x: f64,
    y: f64,
}

#[derive(Serialize, Deserialize)]
struct EdgeRow {
    src: usize,
    dst: usize,
}

pub fn write_graph<W1: Write, W2: Write>(graph: &SpatialGraph, nodes: W1, edges: W2) -> Result<()> {
    let mut w = csv::Writer::from_writer(nodes);
    for (id, p) in graph.nodes().iter().enumerate() {
        w.serialize(NodeRow { id, x: p.x, y: p.y })?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_writer(edges);
    // header must exist even without rows
    w.write_record(["src", "dst"])?;
    for &(src, dst) in graph.edges() {
        w.write_record([src.to_string(), dst.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_graph<R1: Read, R2: Read>(nodes: R1, edges: R2) -> Result<SpatialGraph> {
    let mut pts = Vec::new();
    for (k, row) in csv::Reader::from_reader(nodes)
        .deserialize::<NodeRow>()
        .enumerate()
    {
        let row = row?;
        if row.id != k {
            return Err(Error::Parse(format!(
                "node ids must be 0..n in order, found {} at row {k}",
                row.id
            )));
        }
        pts.push(Point::new(row.x, row.y));
    }
    let edges = csv::Reader::from_reader(edges)
        .deserialize::<EdgeRow>()
        .map(|r| r.map(|e| (e.src, e.dst)).map_err(Error::from))
        .collect::<Result<Vec<_>>>()?;
    SpatialGraph::new(pts, edges)
}

pub fn save_graph(graph: &SpatialGraph, dir: &Path) -> Result<()> {
    write_graph(
        graph,
        create(&dir.join("nodes.csv"))?,
        create(&dir.join("edges.csv"))?,
    )
}

pub fn load_graph(dir: &Path) -> Result<SpatialGraph> {
    read_graph(open(&dir.join("nodes.csv"))?, open(&dir.join("edges.csv"))?)
}

pub fn write_trajectory<W: Write>(traj: &Trajectory, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t"];
    header.extend(traj.model.compartment_names());
    w.write_record(&header)?;
    for (t, row) in traj.counts.iter().enumerate() {
        let mut rec = vec![t.to_string()];
        rec.extend(row.iter().map(u32::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// The model is recognized from the header.
pub fn read_trajectory<R: Read>(input: R) -> Result<Trajectory> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    let model = [ModelKind::Sir, ModelKind::Seird2, ModelKind::TwoStrain]
        .into_iter()
        .find(|m| {
            header.first().map(String::as_str) == Some("t") && header[1..] == *m.compartment_names()
        })
        .ok_or_else(|| Error::Parse(format!("unrecognized trajectory header {header:?}")))?;
    let mut counts = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec?;
        let t: usize = rec[0]
            .parse()
            .map_err(|e| Error::Parse(format!("row {k}: {e}")))?;
        if t != k {
            return Err(Error::Parse(format!("row {k} has t = {t}")));
        }
        let row = rec
            .iter()
            .skip(1)
            .map(|v| {
                v.parse::<u32>()
                    .map_err(|e| Error::Parse(format!("row {k}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        counts.push(row);
    }
    let population = counts.first().map_or(0, |r| r.iter().sum::<u32>() as usize);
    if counts
        .iter()
        .any(|r| r.iter().sum::<u32>() as usize != population)
    {
        return Err(Error::Parse(
            "trajectory rows do not share one population size".into(),
        ));
    }
    Ok(Trajectory {
        model,
        population,
        counts,
    })
}

#[derive(Serialize, Deserialize)]
struct PositionRow {
    t: usize,
    agent_id: usize,
    x: f64,
    y: f64,
}

#[derive(Serialize, Deserialize)]
struct NodeResidencyRow {
    t: usize,
    agent_id: usize,
    node: usize,
}

#[derive(Serialize, Deserialize)]
struct StateRow {
    t: usize,
    agent_id: usize,
    class: MacroClass,
    clock_ratio: f64,
}

/// Groups `(t, agent_id, value)` rows, which must come in (t, agent) order.
fn frames_from_rows<T>(
    rows: impl Iterator<Item = Result<(usize, usize, T)>>,
) -> Result<Vec<Vec<T>>> {
    let mut frames: Vec<Vec<T>> = Vec::new();
    for row in rows {
        let (t, id, v) = row?;
        if t == frames.len() {
            frames.push(Vec::new());
        }
        if t + 1 != frames.len() {
            return Err(Error::Parse(format!("rows out of order at t = {t}")));
        }
        let frame = frames.last_mut().expect("pushed above");
        if id != frame.len() {
            return Err(Error::Parse(format!("agent ids out of order at t = {t}")));
        }
        frame.push(v);
    }
    if frames.windows(2).any(|w| w[0].len() != w[1].len()) {
        return Err(Error::Parse("frames have different agent counts".into()));
    }
    Ok(frames)
}

pub fn write_positions<W: Write>(log: &PositionLog, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (t, f) in log.frames.iter().enumerate() {
        for (agent_id, p) in f.iter().enumerate() {
            w.serialize(PositionRow {
                t,
                agent_id,
                x: p.x,
                y: p.y,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_positions<R: Read>(input: R) -> Result<PositionLog> {
    let rows = csv::Reader::from_reader(input)
        .into_deserialize::<PositionRow>()
        .map(|r| {
            r.map(|r| (r.t, r.agent_id, Point::new(r.x, r.y)))
                .map_err(Error::from)
        });
    Ok(PositionLog {
        frames: frames_from_rows(rows)?,
    })
}

pub fn write_node_log<W: Write>(log: &NodeLog, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (t, f) in log.frames.iter().enumerate() {
        for (agent_id, &node) in f.iter().enumerate() {
            w.serialize(NodeResidencyRow { t, agent_id, node })?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_node_log<R: Read>(input: R) -> Result<NodeLog> {
    let rows = csv::Reader::from_reader(input)
        .into_deserialize::<NodeResidencyRow>()
        .map(|r| r.map(|r| (r.t, r.agent_id, r.node)).map_err(Error::from));
    Ok(NodeLog {
        frames: frames_from_rows(rows)?,
    })
}

pub fn write_epi_log<W: Write>(log: &EpiLog, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (t, (cs, rs)) in log.classes.iter().zip(&log.clock_ratio).enumerate() {
        for (agent_id, (&class, &clock_ratio)) in cs.iter().zip(rs).enumerate() {
            w.serialize(StateRow {
                t,
                agent_id,
                class,
                clock_ratio,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_epi_log<R: Read>(input: R) -> Result<EpiLog> {
    let rows = csv::Reader::from_reader(input)
        .into_deserialize::<StateRow>()
        .map(|r| {
            r.map(|r| (r.t, r.agent_id, (r.class, r.clock_ratio)))
                .map_err(Error::from)
        });
    let frames = frames_from_rows(rows)?;
    let (classes, clock_ratio) = frames.into_iter().map(|f| f.into_iter().unzip()).unzip();
    Ok(EpiLog {
        classes,
        clock_ratio,
    })
}

/// One line of a results table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: String,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

pub fn write_results<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record(["method", "metric", "mean", "std", "n"])?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results<R: Read>(input: R) -> Result<Vec<ResultRow>> {
    csv::Reader::from_reader(input)
        .into_deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(open(path)?)?)
}
