use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::for_each_transition;
use crate::graph::{Move, SpatialGraph, WalkContext, WalkPolicy};
use crate::rng::substream;
use crate::sim::{EpiLog, NodeLog};
use crate::{Error, Result};

/// Features before the per-neighbor block: class one-hot, clock ratio, t/T.
const BASE_FEATURES: usize = 5;

pub fn n_features(degree: usize) -> usize {
    BASE_FEATURES + 3 * degree
}

/// Feature vector `[one-hot class | clock ratio | t/T | neighbor fractions]`,
/// neighbor slots zero-padded to `degree`.
pub fn featurize(ctx: &WalkContext, degree: usize) -> Vec<f64> {
    let mut x = vec![0.0; n_features(degree)];
    x[ctx.class.index()] = 1.0;
    x[3] = ctx.clock_ratio;
    x[4] = ctx.t_frac;
    for (slot, f) in ctx.neighbor_occupancy.iter().take(degree).enumerate() {
        x[BASE_FEATURES + 3 * slot..BASE_FEATURES + 3 * slot + 3].copy_from_slice(f);
    }
    x
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MacTrainParams {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub batch_size: usize,
    /// Per-node cap on training samples (reservoir-sampled).
    pub max_samples: usize,
}

impl Default for MacTrainParams {
    fn default() -> Self {
        MacTrainParams {
            epochs: 200,
            learning_rate: 0.05,
            l2: 1e-4,
            batch_size: 32,
            max_samples: 1500,
        }
    }
}

impl MacTrainParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0)
            || !(self.l2 >= 0.0)
            || self.batch_size == 0
            || self.max_samples == 0
        {
            return Err(Error::InvalidParams(format!(
                "bad MAC training parameters {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MacSample {
    pub x: Vec<f64>,
    /// Index into `[stay, neighbors...]`.
    pub y: usize,
}

/// Softmax regression for one node: `logits = W x + b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MacNodeRecord")]
pub struct MacNodeModel {
    degree: usize,
    /// Row-major `(degree + 1) x n_features(degree)`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MacNodeRecord {
    degree: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl TryFrom<MacNodeRecord> for MacNodeModel {
    type Error = Error;
    fn try_from(r: MacNodeRecord) -> Result<Self> {
        let k = r.degree + 1;
        if r.weights.len() != k * n_features(r.degree) || r.bias.len() != k {
            return Err(Error::Parse(format!(
                "MAC node of degree {} has wrong weight shape",
                r.degree
            )));
        }
        if r.weights.iter().chain(&r.bias).any(|w| !w.is_finite()) {
            return Err(Error::Parse("non-finite MAC weight".into()));
        }
        Ok(MacNodeModel {
            degree: r.degree,
            weights: r.weights,
            bias: r.bias,
        })
    }
}

impl MacNodeModel {
    pub fn zeros(degree: usize) -> Self {
        let k = degree + 1;
        MacNodeModel {
            degree,
            weights: vec![0.0; k * n_features(degree)],
            bias: vec![0.0; k],
        }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn n_classes(&self) -> usize {
        self.degree + 1
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        let d = n_features(self.degree);
        self.weights
            .chunks_exact(d)
            .zip(&self.bias)
            .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect()
    }

    pub fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        softmax(&self.logits(x))
    }
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Mean cross-entropy plus `l2/2 * |W|^2` (bias unpenalized), with its
/// gradient with respect to the weights and the bias.
pub fn mac_loss_and_grad(
    model: &MacNodeModel,
    samples: &[MacSample],
    l2: f64,
) -> (f64, Vec<f64>, Vec<f64>) {
    let d = n_features(model.degree);
    let mut gw: Vec<f64> = model.weights.iter().map(|w| l2 * w).collect();
    let mut gb = vec![0.0; model.n_classes()];
    let mut loss = 0.5 * l2 * model.weights.iter().map(|w| w * w).sum::<f64>();
    if samples.is_empty() {
        return (loss, gw, gb);
    }
    let inv = 1.0 / samples.len() as f64;
    for s in samples {
        let z = model.logits(&s.x);
        let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        loss += inv * (lse - z[s.y]);
        for (c, zc) in z.iter().enumerate() {
            let r = inv * ((zc - lse).exp() - if c == s.y { 1.0 } else { 0.0 });
            gb[c] += r;
            for (g, v) in gw[c * d..(c + 1) * d].iter_mut().zip(&s.x) {
                *g += r * v;
            }
        }
    }
    (loss, gw, gb)
}

/// Loss on the full sample set before and after training one node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NodeFitReport {
    pub initial_loss: f64,
    pub final_loss: f64,
}

/// Mini-batch gradient descent from zero weights.
pub fn train_mac_node<R: Rng + ?Sized>(
    degree: usize,
    samples: &[MacSample],
    tp: &MacTrainParams,
    rng: &mut R,
) -> (MacNodeModel, NodeFitReport) {
    let mut model = MacNodeModel::zeros(degree);
    let initial_loss = mac_loss_and_grad(&model, samples, tp.l2).0;
    if degree > 0 && !samples.is_empty() {
        let mut order: Vec<usize> = (0..samples.len()).collect();
        let mut batch = Vec::with_capacity(tp.batch_size);
        for _ in 0..tp.epochs {
            order.shuffle(rng);
            for chunk in order.chunks(tp.batch_size) {
                batch.clear();
                batch.extend(chunk.iter().map(|&i| samples[i].clone()));
                let (_, gw, gb) = mac_loss_and_grad(&model, &batch, tp.l2);
                for (w, g) in model.weights.iter_mut().zip(&gw) {
                    *w -= tp.learning_rate * g;
                }
                for (b, g) in model.bias.iter_mut().zip(&gb) {
                    *b -= tp.learning_rate * g;
                }
            }
        }
    }
    let final_loss = mac_loss_and_grad(&model, samples, tp.l2).0;
    (
        model,
        NodeFitReport {
            initial_loss,
            final_loss,
        },
    )
}

/// One softmax classifier per graph node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MacWalkModel {
    pub train: MacTrainParams,
    nodes: Vec<MacNodeModel>,
}

impl MacWalkModel {
    /// Zero-weight models everywhere.
    pub fn untrained(graph: &SpatialGraph, train: MacTrainParams) -> Self {
        MacWalkModel {
            train,
            nodes: (0..graph.n_nodes())
                .map(|v| MacNodeModel::zeros(graph.neighbors(v).len()))
                .collect(),
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.nodes.iter().map(|m| m.degree).collect()
    }

    pub fn node(&self, v: usize) -> &MacNodeModel {
        &self.nodes[v]
    }
}

impl WalkPolicy for MacWalkModel {
    fn distribution(&self, graph: &SpatialGraph, ctx: &WalkContext) -> Vec<f64> {
        let options = graph.neighbors(ctx.node).len() + 1;
        match self.nodes.get(ctx.node) {
            Some(m) if m.n_classes() == options => m.probabilities(&featurize(ctx, m.degree)),
            _ => vec![1.0 / options as f64; options],
        }
    }
}

/// Collects up to `max_samples` transitions per node by reservoir sampling.
pub fn collect_mac_samples<R: Rng + ?Sized>(
    nodes: &NodeLog,
    epi: &EpiLog,
    graph: &SpatialGraph,
    max_samples: usize,
    rng: &mut R,
) -> Result<Vec<Vec<MacSample>>> {
    let mut pools: Vec<Vec<MacSample>> = vec![Vec::new(); graph.n_nodes()];
    let mut seen = vec![0usize; graph.n_nodes()];
    for_each_transition(nodes, epi, graph, |ctx, y| {
        let v = ctx.node;
        let degree = graph.neighbors(v).len();
        if degree == 0 {
            return;
        }
        seen[v] += 1;
        if pools[v].len() < max_samples {
            pools[v].push(MacSample {
                x: featurize(ctx, degree),
                y,
            });
        } else {
            let j = rng.random_range(0..seen[v]);
            if j < max_samples {
                pools[v][j] = MacSample {
                    x: featurize(ctx, degree),
                    y,
                };
            }
        }
    })?;
    Ok(pools)
}

pub fn fit_mac<R: Rng + ?Sized>(
    nodes: &NodeLog,
    epi: &EpiLog,
    graph: &SpatialGraph,
    tp: &MacTrainParams,
    rng: &mut R,
) -> Result<MacWalkModel> {
    tp.validate()?;
    let pools = collect_mac_samples(nodes, epi, graph, tp.max_samples, rng)?;
    let base: u64 = rng.random();
    let models = pools
        .iter()
        .enumerate()
        .map(|(v, samples)| {
            let mut node_rng = substream(base, &[v as u64]);
            train_mac_node(graph.neighbors(v).len(), samples, tp, &mut node_rng).0
        })
        .collect();
    Ok(MacWalkModel {
        train: *tp,
        nodes: models,
    })
}

pub fn mac_predict<R: Rng + ?Sized>(
    model: &MacWalkModel,
    graph: &SpatialGraph,
    ctx: &WalkContext,
    rng: &mut R,
) -> Move {
    model.next_move(graph, ctx, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::epi::MacroClass;
    use crate::geom::Point;
    use crate::rng::seeded;

    fn star() -> SpatialGraph {
        SpatialGraph::new(
            vec![
                Point::new(0.0, 0.0),
                Point::new(1.0, 0.0),
                Point::new(0.0, 1.0),
            ],
            [(0, 1), (0, 2)],
        )
        .unwrap()
    }

    fn ctx(node: usize, degree: usize) -> WalkContext {
        WalkContext {
            class: MacroClass::Susceptible,
            clock_ratio: 0.0,
            node,
            neighbor_occupancy: vec![[0.5, 0.25, 0.25]; degree],
            t_frac: 0.3,
        }
    }

    #[test]
    fn zero_weights_are_uniform() {
        let g = star();
        let m = MacWalkModel::untrained(&g, MacTrainParams::default());
        let d = m.distribution(&g, &ctx(0, 2));
        assert!(d.iter().all(|p| (p - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn softmax_saturation_and_symmetry() {
        let p = softmax(&[0.0, 1e6, 0.0]);
        assert_eq!(p[1], 1.0);
        assert!(p[0] < 1e-300);
        assert_eq!(softmax(&[2.0; 4]), vec![0.25; 4]);
    }

    #[test]
    fn isolated_node_has_one_class() {
        let g = SpatialGraph::new(vec![Point::default(), Point::new(3.0, 0.0)], []).unwrap();
        let nodes = NodeLog {
            frames: vec![vec![0, 1]; 3],
        };
        let epi = EpiLog {
            classes: vec![vec![MacroClass::Removed; 2]; 3],
            clock_ratio: vec![vec![0.0; 2]; 3],
        };
        let m = fit_mac(&nodes, &epi, &g, &MacTrainParams::default(), &mut seeded(0)).unwrap();
        assert_eq!(m.distribution(&g, &ctx(1, 0)), vec![1.0]);
        assert_eq!(mac_predict(&m, &g, &ctx(1, 0), &mut seeded(3)), Move::Stay);
    }

    #[test]
    fn stay_only_data_learns_to_stay() {
        let g = star();
        let nodes = NodeLog {
            frames: vec![vec![0, 0, 0, 0]; 30],
        };
        let epi = EpiLog {
            classes: vec![
                vec![
                    MacroClass::Susceptible,
                    MacroClass::Infectious,
                    MacroClass::Removed,
                    MacroClass::Susceptible
                ];
                30
            ],
            clock_ratio: vec![vec![0.0, 0.4, 0.0, 0.0]; 30],
        };
        let m = fit_mac(&nodes, &epi, &g, &MacTrainParams::default(), &mut seeded(2)).unwrap();
        for c in MacroClass::ALL {
            let mut x = ctx(0, 2);
            x.class = c;
            assert!(m.distribution(&g, &x)[0] >= 0.9);
        }
    }

    #[test]
    fn training_reduces_loss() {
        let mut rng = seeded(11);
        let samples: Vec<MacSample> = (0..200)
            .map(|i| {
                let x: Vec<f64> = (0..n_features(2)).map(|_| rng.random::<f64>()).collect();
                let y = if x[3] > 0.5 { 1 } else { i % 3 };
                MacSample { x, y }
            })
            .collect();
        let (_, rep) = train_mac_node(
            2,
            &samples,
            &MacTrainParams {
                epochs: 20,
                ..Default::default()
            },
            &mut rng,
        );
        assert!(rep.final_loss <= rep.initial_loss);
        assert!((rep.initial_loss - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = seeded(5);
        let degree = 2;
        let mut model = MacNodeModel::zeros(degree);
        for w in model.weights_mut() {
            *w = rng.random_range(-1.0..1.0);
        }
        for b in model.bias_mut() {
            *b = rng.random_range(-1.0..1.0);
        }
        let samples: Vec<MacSample> = (0..7)
            .map(|_| MacSample {
                x: (0..n_features(degree))
                    .map(|_| rng.random_range(-1.0..1.0))
                    .collect(),
                y: rng.random_range(0..degree + 1),
            })
            .collect();
        let l2 = 0.01;
        let (_, gw, gb) = mac_loss_and_grad(&model, &samples, l2);
        let h = 1e-6;
        for i in 0..gw.len() {
            let mut p = model.clone();
            p.weights_mut()[i] += h;
            let mut m = model.clone();
            m.weights_mut()[i] -= h;
            let fd = (mac_loss_and_grad(&p, &samples, l2).0
                - mac_loss_and_grad(&m, &samples, l2).0)
                / (2.0 * h);
            assert!(
                (fd - gw[i]).abs() <= 1e-6 * fd.abs().max(1e-3),
                "w{i}: {fd} vs {}",
                gw[i]
            );
        }
        for i in 0..gb.len() {
            let mut p = model.clone();
            p.bias_mut()[i] += h;
            let mut m = model.clone();
            m.bias_mut()[i] -= h;
            let fd = (mac_loss_and_grad(&p, &samples, l2).0
                - mac_loss_and_grad(&m, &samples, l2).0)
                / (2.0 * h);
            assert!((fd - gb[i]).abs() <= 1e-6 * fd.abs().max(1e-3));
        }
    }

    #[test]
    fn json_round_trip_is_exact() {
        let g = star();
        let nodes = NodeLog {
            frames: vec![vec![0, 1], vec![1, 0], vec![2, 0], vec![0, 2]],
        };
        let epi = EpiLog {
            classes: vec![vec![MacroClass::Susceptible; 2]; 4],
            clock_ratio: vec![vec![0.1; 2]; 4],
        };
        let tp = MacTrainParams {
            epochs: 5,
            ..Default::default()
        };
        let m = fit_mac(&nodes, &epi, &g, &tp, &mut seeded(9)).unwrap();
        let back: MacWalkModel = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(back, m);
        let mut v: serde_json::Value = serde_json::to_value(&m).unwrap();
        v["nodes"][0]["bias"] = serde_json::json!([0.0]);
        assert!(serde_json::from_value::<MacWalkModel>(v).is_err());
    }
}
